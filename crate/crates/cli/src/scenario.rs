//! JSON scenario files.
//!
//! ```json
//! {
//!   "version": 1, "name": "two-well", "dim": 1, "period": 1, "m": 2,
//!   "hamiltonians": [{"kind": "EIKONAL", "sigma": 1, "f": "1 - cos(2*pi*x)"}, …],
//!   "coupling": [[1, -1], [-1, 1]],
//!   "u0": ["0", "0"],
//!   "run": {"command": "longtime", "grid": 512, "horizon": 50}
//! }
//! ```
//!
//! Control scenarios add `gamma`, optionally `sigma`, `policy`, `paths`,
//! `seed`, `x0` and `mode` (1-based). Coupling entries and all functions may
//! be numbers or expressions.

use std::fs;
use std::path::Path;

use hjsys_core::control::ControlProblem;
use hjsys_core::coupling::{check_monotone_coupling, CouplingField, Matrix, EIGEN_TOL};
use hjsys_core::ergodic::default_schedule;
use hjsys_core::grid::{NumericalFlux, TorusGrid};
use hjsys_core::model::{
    assumption_audit, AssumptionAudit, HamiltonianKind, HamiltonianSpec, ModelProblem, ScalarFn,
};
use serde::{Deserialize, Serialize};

use crate::expr::{parse_expression, Expr};
use crate::{CliError, Context, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Random probes per assumption in the load-time audit.
const AUDIT_PROBES: usize = 256;
const AUDIT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
}

impl Value {
    fn expr(&self, what: &str) -> Result<Expr> {
        match self {
            Value::Number(v) => Ok(Expr::Num(*v)),
            Value::Text(t) => parse_expression(t).map_err(|e| match e {
                CliError::Syntax { position, message } => {
                    CliError::Schema(format!("{what}: '{t}' at {position}: {message}"))
                }
                other => other,
            }),
        }
    }

    fn text(&self) -> String {
        match self {
            Value::Number(v) => v.to_string(),
            Value::Text(t) => t.clone(),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<&str> for Value {
    fn from(t: &str) -> Self {
        Value::Text(t.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KindName {
    Eikonal,
    ShiftedEikonal,
    Quadratic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianEntry {
    pub kind: KindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Value>,
    pub f: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum PolicyEntry {
    Zero,
    TowardPoint {
        target: Vec<f64>,
    },
    /// Greedy feedback read off the dynamic programming value.
    Feedback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    AnalyzeCoupling,
    Evolve,
    Ergodic,
    Longtime,
    Control,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandName>,
    pub grid: usize,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<f64>,
    pub schedule: Vec<f64>,
    pub tol: f64,
    pub flux: NumericalFlux,
    pub cfl_safety: f64,
    pub window: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub osc_tol: Option<f64>,
    pub mono_tol: f64,
    pub bounds_tol: f64,
    /// Anchor point for correctors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
    /// Known ergodic constant used by `longtime`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    /// Start of the ODE comparison on A.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    /// Subtract the common minimum of the costs before solving.
    pub shift_costs: bool,
    /// Dynamic programming step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_path: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            command: None,
            grid: 128,
            horizon: 20.0,
            sample_every: None,
            schedule: default_schedule(),
            tol: 1e-6,
            flux: NumericalFlux::LaxFriedrichs,
            cfl_safety: 0.9,
            window: 5.0,
            osc_tol: None,
            mono_tol: 1e-3,
            bounds_tol: 1e-2,
            x_star: None,
            c: None,
            t0: None,
            shift_costs: false,
            dt: None,
            h_path: None,
            out: None,
        }
    }
}

impl RunOptions {
    /// `horizon / 200` unless set.
    pub fn sample_interval(&self) -> f64 {
        self.sample_every.unwrap_or(self.horizon / 200.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_period")]
    pub period: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub hamiltonians: Vec<HamiltonianEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Vec<Vec<Value>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(default)]
    pub run: RunOptions,
}

fn default_version() -> u32 {
    SCHEMA_VERSION
}

fn default_dim() -> usize {
    1
}

fn default_period() -> Value {
    Value::Number(1.0)
}

pub struct ControlSetup {
    pub problem: ControlProblem,
    pub policy: PolicyEntry,
    pub paths: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    /// 0-based.
    pub mode: usize,
}

pub struct Scenario {
    /// Canonical form: defaults filled, control speeds folded into the Hamiltonians.
    pub file: ScenarioFile,
    pub problem: ModelProblem,
    pub grid: TorusGrid,
    pub control: Option<ControlSetup>,
    pub audit: AssumptionAudit,
    pub warnings: Vec<String>,
    /// Common cost minimum removed by the preprocessor; solutions grow by `drift·t`.
    pub drift: f64,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.file.name)
            .field("m", &self.problem.m)
            .finish()
    }
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn scalar_fn(value: &Value, what: &str, dim: usize) -> Result<ScalarFn> {
    let e = value.expr(what)?;
    if dim == 1 && e.uses_y() {
        return Err(schema(format!(
            "{what}: 'y' used in a one-dimensional scenario"
        )));
    }
    Ok(match e.as_constant() {
        Some(c) => ScalarFn::constant(c),
        None => ScalarFn::new(value.text(), move |x| e.eval(x)),
    })
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| schema(e.to_string()))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::build(ScenarioFile::parse(&text)?)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::build(ScenarioFile::parse(text)?)
    }

    /// Validates, fills defaults, builds the problems and runs the audit.
    pub fn build(mut file: ScenarioFile) -> Result<Self> {
        if file.version != SCHEMA_VERSION {
            return Err(schema(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                file.version
            )));
        }
        let dim = file.dim;
        if !(1..=2).contains(&dim) {
            return Err(schema(format!("dim must be 1 or 2, got {dim}")));
        }
        let period = file
            .period
            .expr("period")?
            .as_constant()
            .filter(|p| *p > 0.0 && p.is_finite())
            .ok_or_else(|| schema("period must be a positive constant"))?;
        let m = file.hamiltonians.len();
        if m == 0 {
            return Err(schema("at least one Hamiltonian is required"));
        }
        if let Some(declared) = file.m {
            if declared != m {
                return Err(CliError::AuditFatal(format!(
                    "m = {declared} but {m} Hamiltonians"
                )));
            }
        }
        file.m = Some(m);

        if let Some(sigma) = file.sigma.take() {
            if sigma.len() != m {
                return Err(schema(format!(
                    "{} control speeds for {m} modes",
                    sigma.len()
                )));
            }
            for (h, s) in file.hamiltonians.iter_mut().zip(sigma) {
                if h.kind != KindName::Eikonal {
                    return Err(schema("control speeds need EIKONAL Hamiltonians"));
                }
                h.sigma = Some(s);
            }
        }
        let mut hams = Vec::with_capacity(m);
        for (i, h) in file.hamiltonians.iter_mut().enumerate() {
            let cost = scalar_fn(&h.f, &format!("hamiltonians[{i}].f"), dim)?;
            let kind = match h.kind {
                KindName::ShiftedEikonal => {
                    if h.sigma.is_some() {
                        return Err(schema(format!(
                            "hamiltonians[{i}]: SHIFTED_EIKONAL takes no sigma"
                        )));
                    }
                    let shift = h
                        .shift
                        .clone()
                        .ok_or_else(|| schema(format!("hamiltonians[{i}]: shift missing")))?;
                    if shift.len() != dim {
                        return Err(schema(format!(
                            "hamiltonians[{i}]: shift has {} entries, dim is {dim}",
                            shift.len()
                        )));
                    }
                    HamiltonianKind::ShiftedEikonal { shift }
                }
                KindName::Eikonal | KindName::Quadratic => {
                    if h.shift.is_some() {
                        return Err(schema(format!(
                            "hamiltonians[{i}]: shift only applies to SHIFTED_EIKONAL"
                        )));
                    }
                    let s = h.sigma.get_or_insert(Value::Number(1.0));
                    let sigma = scalar_fn(s, &format!("hamiltonians[{i}].sigma"), dim)?;
                    if h.kind == KindName::Eikonal {
                        HamiltonianKind::Eikonal { sigma }
                    } else {
                        HamiltonianKind::Quadratic { sigma }
                    }
                }
            };
            hams.push(HamiltonianSpec::new(kind, cost));
        }

        let induced = match &file.gamma {
            Some(g) => {
                if g.len() != m || g.iter().any(|r| r.len() != m) {
                    return Err(schema(format!("gamma must be {m}×{m}")));
                }
                Some(Matrix::from_fn(m, m, |i, j| {
                    if i == j {
                        (0..m).filter(|&k| k != i).map(|k| g[i][k]).sum()
                    } else {
                        -g[i][j]
                    }
                }))
            }
            None => None,
        };
        if file.coupling.is_none() {
            file.coupling = match &induced {
                Some(d) => Some(
                    (0..m)
                        .map(|i| (0..m).map(|j| Value::Number(d[(i, j)])).collect())
                        .collect(),
                ),
                None if m == 1 => Some(vec![vec![Value::Number(0.0)]]),
                None => return Err(schema("coupling is required when m > 1")),
            };
        }
        let rows = file.coupling.as_ref().expect("filled above");
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(schema(format!(
                "coupling is {}×{} but there are {m} equations",
                rows.len(),
                rows.first().map_or(0, Vec::len)
            )));
        }
        let entries: Vec<Vec<ScalarFn>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| scalar_fn(v, &format!("coupling[{i}][{j}]"), dim))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let constant: Option<Matrix> = {
            let probe = [0.0, 0.0];
            let all_const = rows.iter().flatten().all(|v| {
                v.expr("coupling")
                    .map(|e| e.as_constant().is_some())
                    .unwrap_or(false)
            });
            all_const.then(|| Matrix::from_fn(m, m, |i, j| entries[i][j].eval(&probe[..dim])))
        };
        if let (Some(d), Some(c)) = (&induced, &constant) {
            if (d - c).amax() > 1e-12 {
                return Err(schema(
                    "coupling disagrees with the matrix induced by gamma",
                ));
            }
        }

        let grid = TorusGrid::new(dim, file.run.grid, period).map_err(|e| schema(e.to_string()))?;
        let coupling = match constant {
            Some(d) => CouplingField::constant(d),
            None => CouplingField::from_fn(m, &grid, |x| {
                Matrix::from_fn(m, m, |i, j| entries[i][j].eval(x))
            }),
        }
        .context(|| "coupling".into())?;

        let u0_values = file.u0.get_or_insert_with(|| vec![Value::Number(0.0); m]);
        if u0_values.len() != m {
            return Err(CliError::AuditFatal(format!(
                "{} initial data for {m} equations",
                u0_values.len()
            )));
        }
        let u0 = u0_values
            .iter()
            .enumerate()
            .map(|(i, v)| scalar_fn(v, &format!("u0[{i}]"), dim))
            .collect::<Result<Vec<_>>>()?;
        let problem = ModelProblem::new(dim, period, hams, coupling, u0)
            .map_err(|e| CliError::AuditFatal(e.to_string()))?;

        let run = &mut file.run;
        if !(run.horizon > 0.0) {
            return Err(schema("run.horizon must be positive"));
        }
        if run.schedule.is_empty()
            || run.schedule.iter().any(|l| !(*l > 0.0))
            || run.schedule.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(schema(
                "run.schedule must be positive and strictly decreasing",
            ));
        }
        if let Some(x) = &run.x_star {
            if x.len() != dim {
                return Err(schema("run.x_star has the wrong dimension"));
            }
        }
        if let Some(c) = &run.c {
            if c.len() != m {
                return Err(schema("run.c must have one entry per equation"));
            }
        }

        let control = build_control(&mut file, &problem)?;

        let audit = assumption_audit(&problem, &grid, AUDIT_PROBES, AUDIT_TOL);
        let mut warnings: Vec<String> = audit
            .verdicts()
            .iter()
            .filter(|(name, v)| !v.pass && *name != "degenerate")
            .map(|(name, v)| match v.witnesses.first() {
                Some(w) => format!("assumption {name} fails: {} ({})", w.detail, w.value),
                None => format!("assumption {name} fails"),
            })
            .collect();
        if !check_monotone_coupling(&problem.coupling, EIGEN_TOL).holds
            && !warnings.iter().any(|w| w.contains("monotone_coupling"))
        {
            warnings.push("coupling is not monotone".into());
        }

        let mut scenario = Scenario {
            file,
            problem,
            grid,
            control,
            audit,
            warnings,
            drift: 0.0,
        };
        if scenario.file.run.shift_costs {
            let (shifted, drift) = shift_costs_preprocessor(&scenario.problem, &scenario.grid)?;
            scenario.problem = shifted;
            scenario.drift = drift;
        }
        Ok(scenario)
    }

    pub fn canonical_json(&self) -> String {
        self.file.canonical_json()
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }
}

fn build_control(file: &mut ScenarioFile, problem: &ModelProblem) -> Result<Option<ControlSetup>> {
    let wants =
        file.gamma.is_some() || file.policy.is_some() || file.paths.is_some() || file.x0.is_some();
    if !wants {
        return Ok(None);
    }
    let m = problem.m;
    let dim = problem.dim;
    let gamma = file.gamma.get_or_insert_with(|| vec![vec![0.0; m]; m]);
    if gamma.len() != m || gamma.iter().any(|r| r.len() != m) {
        return Err(schema(format!("gamma must be {m}×{m}")));
    }
    if problem.coupling.is_constant() {
        let d = problem.coupling.at(0);
        let mismatch =
            (0..m).any(|i| (0..m).any(|j| i != j && (d[(i, j)] + gamma[i][j]).abs() > 1e-12));
        if mismatch {
            return Err(schema(
                "coupling disagrees with the matrix induced by gamma",
            ));
        }
    }
    let mut sigma = Vec::with_capacity(m);
    for (i, h) in problem.hamiltonians.iter().enumerate() {
        match &h.kind {
            HamiltonianKind::Eikonal { sigma: s } => sigma.push(s.clone()),
            _ => {
                return Err(schema(format!(
                    "control mode {i}: only EIKONAL dynamics are supported"
                )))
            }
        }
    }
    let costs = problem
        .hamiltonians
        .iter()
        .map(|h| h.cost.clone())
        .collect();
    let gamma = Matrix::from_fn(m, m, |i, j| gamma[i][j]);
    let control = ControlProblem::new(
        dim,
        problem.period,
        sigma,
        costs,
        gamma,
        file.run.horizon,
        problem.initial_data.clone(),
    )
    .map_err(|e| schema(e.to_string()))?;
    let policy = file.policy.get_or_insert(PolicyEntry::Zero).clone();
    if let PolicyEntry::TowardPoint { target } = &policy {
        if target.len() != dim {
            return Err(schema("policy target has the wrong dimension"));
        }
    }
    let paths = *file.paths.get_or_insert(10_000);
    let seed = *file.seed.get_or_insert(0);
    let x0 = file.x0.get_or_insert_with(|| vec![0.0; dim]).clone();
    if x0.len() != dim {
        return Err(schema("x0 has the wrong dimension"));
    }
    let mode = *file.mode.get_or_insert(1);
    if !(1..=m).contains(&mode) {
        return Err(schema(format!("mode {mode} not in 1..={m}")));
    }
    Ok(Some(ControlSetup {
        problem: control,
        policy,
        paths,
        seed,
        x0,
        mode: mode - 1,
    }))
}

/// Replaces `f_i` by `f_i − f̄` when all costs share the minimum `f̄ ≥ 0` at a
/// common grid point; returns the shifted problem and `f̄`, the drift rate.
pub fn shift_costs_preprocessor(
    problem: &ModelProblem,
    grid: &TorusGrid,
) -> Result<(ModelProblem, f64)> {
    let fail = |msg: String| CliError::Core {
        context: "cost shift".into(),
        source: hjsys_core::Error::PreconditionFailed(msg),
    };
    let dim = problem.dim;
    let cells = grid.cells();
    for (cell, d) in problem.coupling.entries() {
        for i in 0..problem.m {
            let s = d.row(i).sum();
            if s.abs() > EIGEN_TOL {
                return Err(fail(format!("row {i} of D sums to {s} (cell {cell:?})")));
            }
        }
    }
    let values: Vec<Vec<f64>> = problem
        .hamiltonians
        .iter()
        .map(|h| {
            (0..cells)
                .map(|c| h.cost.eval(&grid.point(c)[..dim]))
                .collect()
        })
        .collect();
    let mins: Vec<f64> = values
        .iter()
        .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let fbar = mins[0];
    let tol = 1e-9 * (1.0 + fbar.abs());
    if mins.iter().any(|v| (v - fbar).abs() > tol) {
        return Err(fail(format!("cost minima differ: {mins:?}")));
    }
    if fbar < -tol {
        return Err(fail(format!("common minimum {fbar} is negative")));
    }
    let common = (0..cells).any(|c| values.iter().all(|v| v[c] - fbar <= tol));
    if !common {
        return Err(fail(
            "costs attain their minimum at different points".into(),
        ));
    }
    if fbar == 0.0 {
        return Ok((problem.clone(), 0.0));
    }
    let mut out = problem.clone();
    for h in &mut out.hamiltonians {
        let f = h.cost.clone();
        h.cost = ScalarFn::new(format!("{} - {fbar}", f.label()), move |x| f.eval(x) - fbar);
    }
    Ok((out, fbar))
}

/// Command-line overrides applied to a scenario file before validation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ScenarioFile) {
        if let Some(n) = self.grid {
            file.run.grid = n;
        }
        if let Some(t) = self.horizon {
            file.run.horizon = t;
        }
        if let Some(s) = self.seed {
            file.seed = Some(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{"hamiltonians": [{"kind": "EIKONAL", "f": "1 - cos(2*pi*x)"}]}"#;

    #[test]
    fn defaults_are_filled() {
        let s = Scenario::from_json(SCALAR).unwrap();
        assert_eq!(s.problem.m, 1);
        assert_eq!(s.file.m, Some(1));
        assert_eq!(s.file.u0, Some(vec![Value::Number(0.0)]));
        assert_eq!(s.grid.n, 128);
        assert!(s.warnings.is_empty(), "{:?}", s.warnings);
        assert!(s.control.is_none());
    }

    #[test]
    fn canonical_form_is_idempotent() {
        for text in [
            SCALAR,
            r#"{"dim": 2, "period": "2*pi", "hamiltonians": [{"kind": "QUADRATIC", "sigma": "1 + 0.5*sin(y)", "f": 0},
                {"kind": "SHIFTED_EIKONAL", "shift": [1, 0], "f": 1}], "coupling": [[1, "-1"], ["-1 - 0.5*cos(x)", "1 + 0.5*cos(x)"]],
                "run": {"grid": 16, "command": "evolve"}}"#,
            r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}, {"kind": "EIKONAL", "f": 1}], "gamma": [[0, 1], [1, 0]],
                "sigma": [1, 2], "policy": {"kind": "TOWARD_POINT", "target": [0.5]}, "run": {"horizon": 1}}"#,
        ] {
            let once = Scenario::from_json(text).unwrap().canonical_json();
            let twice = Scenario::from_json(&once).unwrap().canonical_json();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn coupling_of_wrong_dimension_is_a_schema_error() {
        let text = r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}, {"kind": "EIKONAL", "f": 0}], "coupling": [[1, -1, 0], [-1, 1, 0]]}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(CliError::Schema(_))
        ));
    }

    #[test]
    fn mismatched_counts_are_fatal() {
        let text = r#"{"m": 2, "hamiltonians": [{"kind": "EIKONAL", "f": 0}]}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(CliError::AuditFatal(_))
        ));
        let text = r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}], "u0": [0, 1]}"#;
        assert!(matches!(
            Scenario::from_json(text),
            Err(CliError::AuditFatal(_))
        ));
    }

    #[test]
    fn bad_input_is_rejected() {
        for text in [
            r#"{"hamiltonians": [{"kind": "EIKONAL", "f": "abs("}]}"#,
            r#"{"hamiltonians": [{"kind": "EIKONAL", "f": "y"}]}"#,
            r#"{"version": 2, "hamiltonians": [{"kind": "EIKONAL", "f": 0}]}"#,
            r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0, "bogus": 1}]}"#,
            r#"{"hamiltonians": [{"kind": "SHIFTED_EIKONAL", "f": 0}]}"#,
            r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}, {"kind": "EIKONAL", "f": 0}]}"#,
            r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}], "run": {"schedule": [0.1, 0.2]}}"#,
        ] {
            assert!(
                matches!(Scenario::from_json(text), Err(CliError::Schema(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn audit_failures_warn() {
        // F(x, 0) = 2 ≠ 0 and no zero of the costs.
        let text = r#"{"period": "2*pi", "hamiltonians": [{"kind": "SHIFTED_EIKONAL", "shift": [2], "f": 2},
            {"kind": "SHIFTED_EIKONAL", "shift": [2], "f": 2}], "coupling": [[1, -1], [-1, 1]], "u0": ["sin(x)", "sin(x)"]}"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(
            s.warnings.iter().any(|w| w.contains("convex_coercive")),
            "{:?}",
            s.warnings
        );
    }

    #[test]
    fn gamma_induces_coupling() {
        let text = r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}, {"kind": "EIKONAL", "f": 1}],
            "gamma": [[0, 2], [1, 0]], "x0": [0.3], "mode": 2}"#;
        let s = Scenario::from_json(text).unwrap();
        let d = s.problem.coupling.at(0);
        assert_eq!(
            (d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]),
            (2.0, -2.0, -1.0, 1.0)
        );
        let c = s.control.unwrap();
        assert_eq!(c.mode, 1);
        assert_eq!(c.policy, PolicyEntry::Zero);
        let clash = r#"{"hamiltonians": [{"kind": "EIKONAL", "f": 0}, {"kind": "EIKONAL", "f": 1}],
            "gamma": [[0, 2], [1, 0]], "coupling": [[1, -1], [-1, 1]]}"#;
        assert!(matches!(
            Scenario::from_json(clash),
            Err(CliError::Schema(_))
        ));
    }

    #[test]
    fn shift_removes_common_minimum() {
        let text = r#"{"hamiltonians": [{"kind": "EIKONAL", "f": "2 - cos(2*pi*x)"}, {"kind": "EIKONAL", "f": "2 - cos(2*pi*x)"}],
            "coupling": [[1, -1], [-1, 1]], "run": {"shift_costs": true, "grid": 32}}"#;
        let s = Scenario::from_json(text).unwrap();
        assert!((s.drift - 1.0).abs() < 1e-15);
        for c in 0..32 {
            let x = s.grid.point(c)[0];
            let expected = 1.0 - (2.0 * std::f64::consts::PI * x).cos();
            for h in &s.problem.hamiltonians {
                assert!((h.cost.eval(&[x]) - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shift_preconditions() {
        let base = |f1: &str, f2: &str| {
            Scenario::from_json(&format!(
                r#"{{"hamiltonians": [{{"kind": "EIKONAL", "f": "{f1}"}}, {{"kind": "EIKONAL", "f": "{f2}"}}],
                "coupling": [[1, -1], [-1, 1]], "run": {{"grid": 32}}}}"#
            ))
            .unwrap()
        };
        let s = base("1 - cos(2*pi*x)", "1 - cos(2*pi*x)");
        let (_, drift) = shift_costs_preprocessor(&s.problem, &s.grid).unwrap();
        assert_eq!(drift, 0.0);
        let s = base("1 - cos(2*pi*x)", "1 + cos(2*pi*x)");
        assert!(shift_costs_preprocessor(&s.problem, &s.grid).is_err());
    }
}
