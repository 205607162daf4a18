//! Problem data: Hamiltonians `H_i(x, p) = F_i(x, p) − f_i(x)`, the coupling
//! field and initial data, plus the standing-assumption audit and the sets
//!
//! ```text
//! F   = { x : Σ_i f_i(x) = 0 }
//! D_i = { x : Σ_j d_ij(x) = 0 }
//! A   = F ∩ D_1 ∩ … ∩ D_m
//! ```

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{check_monotone_coupling, is_irreducible, CouplingField, EIGEN_TOL};
use crate::grid::TorusGrid;
use crate::{Error, Result};

type PointFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A real function on the torus, called with a point of length `dim`.
#[derive(Clone)]
pub struct ScalarFn {
    label: String,
    f: Arc<PointFn>,
}

impl ScalarFn {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

/// `F(x, p)` supplied by the caller.
pub type CustomHamiltonian = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum HamiltonianKind {
    /// `F = σ(x)|p|`
    Eikonal { sigma: ScalarFn },
    /// `F = |p + q|`
    ShiftedEikonal { shift: Vec<f64> },
    /// `F = ½σ(x)|p|²`
    Quadratic { sigma: ScalarFn },
    /// Tabulated closure; convexity and coercivity are audited, never assumed.
    Custom { label: String, f: CustomHamiltonian },
}

impl fmt::Debug for HamiltonianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Eikonal { sigma } => write!(f, "Eikonal({})", sigma.label()),
            Self::ShiftedEikonal { shift } => write!(f, "ShiftedEikonal({shift:?})"),
            Self::Quadratic { sigma } => write!(f, "Quadratic({})", sigma.label()),
            Self::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct HamiltonianSpec {
    pub kind: HamiltonianKind,
    /// Running cost `f_i`.
    pub cost: ScalarFn,
}

impl HamiltonianSpec {
    pub fn new(kind: HamiltonianKind, cost: ScalarFn) -> Self {
        Self { kind, cost }
    }

    pub fn eikonal(sigma: ScalarFn, cost: ScalarFn) -> Self {
        Self::new(HamiltonianKind::Eikonal { sigma }, cost)
    }

    /// The convex part `F_i(x, p)`.
    #[inline]
    pub fn convex_part(&self, x: &[f64], p: &[f64]) -> f64 {
        match &self.kind {
            HamiltonianKind::Eikonal { sigma } => sigma.eval(x) * norm(p),
            HamiltonianKind::ShiftedEikonal { shift } => p
                .iter()
                .zip(shift)
                .map(|(a, q)| (a + q) * (a + q))
                .sum::<f64>()
                .sqrt(),
            HamiltonianKind::Quadratic { sigma } => {
                0.5 * sigma.eval(x) * p.iter().map(|v| v * v).sum::<f64>()
            }
            HamiltonianKind::Custom { f, .. } => f(x, p),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], p: &[f64]) -> f64 {
        self.convex_part(x, p) - self.cost.eval(x)
    }

    /// Minimiser `p*` of `F(x, ·)` for the radial built-in kinds, which all
    /// have the form `φ(x, |p − p*|)` with `φ` nondecreasing.
    pub fn radial_center(&self) -> Option<Vec<f64>> {
        match &self.kind {
            HamiltonianKind::Eikonal { .. } | HamiltonianKind::Quadratic { .. } => Some(Vec::new()),
            HamiltonianKind::ShiftedEikonal { shift } => Some(shift.iter().map(|q| -q).collect()),
            HamiltonianKind::Custom { .. } => None,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self.kind, HamiltonianKind::Custom { .. })
    }
}

/// Problem data on `T^dim` with period `period` along every axis.
#[derive(Clone, Debug)]
pub struct ModelProblem {
    pub m: usize,
    pub dim: usize,
    pub period: f64,
    pub hamiltonians: Vec<HamiltonianSpec>,
    pub coupling: CouplingField,
    pub initial_data: Vec<ScalarFn>,
    pub labels: Vec<String>,
}

impl ModelProblem {
    pub fn new(
        dim: usize,
        period: f64,
        hamiltonians: Vec<HamiltonianSpec>,
        coupling: CouplingField,
        initial_data: Vec<ScalarFn>,
    ) -> Result<Self> {
        let m = hamiltonians.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::DimensionMismatch(format!(
                "dimension {dim} not in {{1, 2}}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::DimensionMismatch(format!(
                "period must be positive, got {period}"
            )));
        }
        if m == 0 {
            return Err(Error::DimensionMismatch(
                "at least one equation is required".into(),
            ));
        }
        if coupling.m() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} Hamiltonians but a {0}x{0} coupling",
                coupling.m()
            )));
        }
        if initial_data.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} equations but {} initial data",
                initial_data.len()
            )));
        }
        for (i, h) in hamiltonians.iter().enumerate() {
            if let HamiltonianKind::ShiftedEikonal { shift } = &h.kind {
                if shift.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "shift of equation {i} has length {}, expected {dim}",
                        shift.len()
                    )));
                }
            }
        }
        let labels = (1..=m).map(|i| format!("u{i}")).collect();
        Ok(Self {
            m,
            dim,
            period,
            hamiltonians,
            coupling,
            initial_data,
            labels,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        if labels.len() == self.m {
            self.labels = labels;
        }
        self
    }

    pub fn grid(&self, n: usize) -> Result<TorusGrid> {
        TorusGrid::new(self.dim, n, self.period)
    }

    /// `M ≥ sup_i sup_x |F_i(x, 0)| + |f_i(x)|` sampled on the grid.
    pub fn a_priori_constant(&self, grid: &TorusGrid) -> f64 {
        let zero = vec![0.0; self.dim];
        let mut m_bound: f64 = 0.0;
        for h in &self.hamiltonians {
            for c in 0..grid.cells() {
                let x = grid.point(c);
                let x = &x[..self.dim];
                m_bound = m_bound.max(h.convex_part(x, &zero).abs() + h.cost.eval(x).abs());
            }
        }
        m_bound
    }
}

/// `H_i(x, p)`.
pub fn evaluate_hamiltonian(problem: &ModelProblem, i: usize, x: &[f64], p: &[f64]) -> Result<f64> {
    let h = problem.hamiltonians.get(i).ok_or(Error::IndexOutOfRange {
        index: i,
        m: problem.m,
    })?;
    Ok(h.eval(x, p))
}

// ---------------------------------------------------------------------------
// Assumption audit

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub equation: Option<usize>,
    pub cell: Option<usize>,
    pub detail: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    pub pass: bool,
    pub witnesses: Vec<Witness>,
}

const MAX_WITNESSES: usize = 16;

impl AssumptionVerdict {
    fn from_witnesses(mut witnesses: Vec<Witness>) -> Self {
        witnesses.truncate(MAX_WITNESSES);
        Self {
            pass: witnesses.is_empty(),
            witnesses,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionAudit {
    /// Periodicity of `f_i` and `F_i(·, p)`.
    pub periodicity: AssumptionVerdict,
    /// Convexity, coercivity and `F_i ≥ F_i(x, 0) = 0`.
    pub convex_coercive: AssumptionVerdict,
    /// `f_i ≥ 0`.
    pub nonnegative_cost: AssumptionVerdict,
    /// Coupling monotonicity.
    pub monotone_coupling: AssumptionVerdict,
    pub irreducible: AssumptionVerdict,
    /// Zero row sums everywhere.
    pub degenerate: AssumptionVerdict,
}

impl AssumptionAudit {
    pub fn verdicts(&self) -> [(&'static str, &AssumptionVerdict); 6] {
        [
            ("periodicity", &self.periodicity),
            ("convex_coercive", &self.convex_coercive),
            ("nonnegative_cost", &self.nonnegative_cost),
            ("monotone_coupling", &self.monotone_coupling),
            ("irreducible", &self.irreducible),
            ("degenerate", &self.degenerate),
        ]
    }

    /// Assumptions under which the large-time convergence result applies
    /// (everything except the zero-row-sum flag, which is informational).
    pub fn standing_assumptions_hold(&self) -> bool {
        self.periodicity.pass
            && self.convex_coercive.pass
            && self.nonnegative_cost.pass
            && self.monotone_coupling.pass
            && self.irreducible.pass
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.verdicts()
            .iter()
            .filter(|(name, v)| !v.pass && *name != "degenerate")
            .map(|(name, _)| *name)
            .collect()
    }
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = random_vec(rng, dim, 1.0);
        let n = norm(&v);
        if n > 1e-3 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Samples the standing assumptions on `grid`.
///
/// Convexity uses the midpoint inequality on `n_prob` random `(x, p, p′)`
/// triples, coercivity compares growth at `|p| = 10` and `|p| = 100`, and
/// `F(x, 0) = 0`, `f ≥ 0` are checked at every cell.
pub fn assumption_audit(
    problem: &ModelProblem,
    grid: &TorusGrid,
    n_prob: usize,
    tol: f64,
) -> AssumptionAudit {
    let dim = problem.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a0d1);
    let points: Vec<Vec<f64>> = (0..grid.cells())
        .map(|c| grid.point(c)[..dim].to_vec())
        .collect();
    let zero = vec![0.0; dim];

    let mut periodic = Vec::new();
    let mut convex = Vec::new();
    let mut nonneg = Vec::new();
    for (i, h) in problem.hamiltonians.iter().enumerate() {
        for (c, x) in points.iter().enumerate() {
            let f = h.cost.eval(x);
            if f < -tol {
                nonneg.push(Witness {
                    equation: Some(i),
                    cell: Some(c),
                    detail: "f_i(x) < 0".into(),
                    value: f,
                });
            }
            let f0 = h.convex_part(x, &zero);
            if f0.abs() > tol {
                convex.push(Witness {
                    equation: Some(i),
                    cell: Some(c),
                    detail: "F_i(x, 0) != 0".into(),
                    value: f0,
                });
            }
            for axis in 0..dim {
                let mut shifted = x.clone();
                shifted[axis] += problem.period;
                let p = random_vec(&mut rng, dim, 2.0);
                let df = (h.cost.eval(&shifted) - f).abs();
                let dh = (h.convex_part(&shifted, &p) - h.convex_part(x, &p)).abs();
                let gap = df.max(dh);
                if gap > tol * (1.0 + f.abs()) {
                    periodic.push(Witness {
                        equation: Some(i),
                        cell: Some(c),
                        detail: format!("not periodic along axis {axis}"),
                        value: gap,
                    });
                }
            }
        }
        for _ in 0..n_prob {
            let x = &points[rng.random_range(0..points.len())];
            let p = random_vec(&mut rng, dim, 10.0);
            let q = random_vec(&mut rng, dim, 10.0);
            let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = h.convex_part(x, &mid);
            let rhs = 0.5 * (h.convex_part(x, &p) + h.convex_part(x, &q));
            let scale = 1.0 + rhs.abs();
            if lhs > rhs + tol * scale {
                convex.push(Witness {
                    equation: Some(i),
                    cell: None,
                    detail: "midpoint convexity fails".into(),
                    value: lhs - rhs,
                });
            }
            let fp = h.convex_part(x, &p);
            if fp < h.convex_part(x, &zero) - tol * scale {
                convex.push(Witness {
                    equation: Some(i),
                    cell: None,
                    detail: "F_i(x, p) < F_i(x, 0)".into(),
                    value: fp,
                });
            }
            let u = random_unit(&mut rng, dim);
            let at = |r: f64| h.convex_part(x, &u.iter().map(|c| c * r).collect::<Vec<_>>());
            let (f10, f100) = (at(10.0), at(100.0));
            if !(f100 > f10 && f10 > h.convex_part(x, &zero)) {
                convex.push(Witness {
                    equation: Some(i),
                    cell: None,
                    detail: "no growth between |p| = 10 and |p| = 100".into(),
                    value: f100 - f10,
                });
            }
        }
    }

    let report = check_monotone_coupling(&problem.coupling, tol.max(EIGEN_TOL));
    let monotone = report
        .violations
        .iter()
        .map(|v| Witness {
            equation: Some(v.i),
            cell: v.cell,
            detail: format!("{:?} at column {:?}", v.kind, v.j),
            value: v.value,
        })
        .collect();

    let mut irreducible = Vec::new();
    let mut degenerate = Vec::new();
    for (cell, d) in problem.coupling.entries() {
        if let Some(set) = is_irreducible(d).separating_set {
            irreducible.push(Witness {
                equation: None,
                cell,
                detail: format!("separating set {set:?}"),
                value: set.len() as f64,
            });
        }
        for i in 0..problem.m {
            let s: f64 = d.row(i).iter().sum();
            if s.abs() > tol.max(EIGEN_TOL) {
                degenerate.push(Witness {
                    equation: Some(i),
                    cell,
                    detail: "nonzero row sum".into(),
                    value: s,
                });
            }
        }
    }

    AssumptionAudit {
        periodicity: AssumptionVerdict::from_witnesses(periodic),
        convex_coercive: AssumptionVerdict::from_witnesses(convex),
        nonnegative_cost: AssumptionVerdict::from_witnesses(nonneg),
        monotone_coupling: AssumptionVerdict::from_witnesses(monotone),
        irreducible: AssumptionVerdict::from_witnesses(irreducible),
        degenerate: AssumptionVerdict::from_witnesses(degenerate),
    }
}

// ---------------------------------------------------------------------------
// Sets F, D_i, A

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMasks {
    pub eps: f64,
    pub f_mask: Vec<bool>,
    pub d_masks: Vec<Vec<bool>>,
    pub a_mask: Vec<bool>,
}

impl SetMasks {
    pub fn f_empty(&self) -> bool {
        !self.f_mask.iter().any(|&b| b)
    }

    pub fn a_empty(&self) -> bool {
        !self.a_mask.iter().any(|&b| b)
    }

    pub fn d_empty(&self) -> Vec<bool> {
        self.d_masks.iter().map(|m| !m.iter().any(|&b| b)).collect()
    }

    pub fn a_cells(&self) -> Vec<usize> {
        self.a_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn f_cells(&self) -> Vec<usize> {
        self.f_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Default set tolerance `1e-8·max_i ‖f_i‖_∞ + 1e-12`.
pub fn default_set_eps(problem: &ModelProblem, grid: &TorusGrid) -> f64 {
    let mut fmax: f64 = 0.0;
    for h in &problem.hamiltonians {
        for c in 0..grid.cells() {
            fmax = fmax.max(h.cost.eval(&grid.point(c)[..problem.dim]).abs());
        }
    }
    1e-8 * fmax + 1e-12
}

pub fn compute_sets(
    problem: &ModelProblem,
    grid: &TorusGrid,
    eps_set: Option<f64>,
) -> Result<SetMasks> {
    problem.coupling.check_grid(grid)?;
    let eps = eps_set.unwrap_or_else(|| default_set_eps(problem, grid));
    let cells = grid.cells();
    let f_mask: Vec<bool> = (0..cells)
        .map(|c| {
            let x = grid.point(c);
            let total: f64 = problem
                .hamiltonians
                .iter()
                .map(|h| h.cost.eval(&x[..problem.dim]))
                .sum();
            total <= eps
        })
        .collect();
    let d_masks: Vec<Vec<bool>> = (0..problem.m)
        .map(|i| {
            (0..cells)
                .map(|c| problem.coupling.at(c).row(i).iter().sum::<f64>() <= eps)
                .collect()
        })
        .collect();
    let a_mask = (0..cells)
        .map(|c| f_mask[c] && d_masks.iter().all(|d| d[c]))
        .collect();
    Ok(SetMasks {
        eps,
        f_mask,
        d_masks,
        a_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{matrix_from_rows, Matrix};
    use std::f64::consts::PI;

    fn well() -> ScalarFn {
        ScalarFn::new("1 - cos(2 pi x)", |x| 1.0 - (2.0 * PI * x[0]).cos())
    }

    fn two_well(d: Matrix) -> ModelProblem {
        ModelProblem::new(
            1,
            1.0,
            vec![
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), well()),
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), well()),
            ],
            CouplingField::constant(d).unwrap(),
            vec![ScalarFn::constant(0.0), ScalarFn::constant(0.0)],
        )
        .unwrap()
    }

    fn sym() -> Matrix {
        matrix_from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
    }

    #[test]
    fn hamiltonian_values() {
        let eik = HamiltonianSpec::eikonal(ScalarFn::constant(1.0), ScalarFn::constant(0.0));
        assert_eq!(eik.eval(&[0.3], &[2.0]), 2.0);
        let shifted = HamiltonianSpec::new(
            HamiltonianKind::ShiftedEikonal { shift: vec![2.0] },
            ScalarFn::constant(2.0),
        );
        assert_eq!(shifted.eval(&[0.3], &[0.0]), 0.0);
        let quad = HamiltonianSpec::new(
            HamiltonianKind::Quadratic {
                sigma: ScalarFn::constant(2.0),
            },
            ScalarFn::constant(1.0),
        );
        assert_eq!(quad.eval(&[0.3], &[1.0]), 0.0);
    }

    #[test]
    fn index_out_of_range() {
        let p = two_well(sym());
        assert!(matches!(
            evaluate_hamiltonian(&p, 2, &[0.0], &[0.0]),
            Err(Error::IndexOutOfRange { index: 2, m: 2 })
        ));
    }

    #[test]
    fn mismatched_coupling_is_rejected() {
        let r = ModelProblem::new(
            1,
            1.0,
            vec![HamiltonianSpec::eikonal(ScalarFn::constant(1.0), well())],
            CouplingField::constant(sym()).unwrap(),
            vec![ScalarFn::constant(0.0)],
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn audit_passes_for_eikonal_wells() {
        let p = two_well(sym());
        let grid = p.grid(64).unwrap();
        let audit = assumption_audit(&p, &grid, 200, 1e-9);
        assert!(audit.standing_assumptions_hold(), "{:?}", audit.failures());
        assert!(audit.degenerate.pass);
    }

    #[test]
    fn audit_flags_shifted_eikonal() {
        let shifted = |q: f64| {
            HamiltonianSpec::new(
                HamiltonianKind::ShiftedEikonal { shift: vec![q] },
                ScalarFn::constant(q),
            )
        };
        let p = ModelProblem::new(
            1,
            2.0 * PI,
            vec![shifted(2.0), shifted(2.0)],
            CouplingField::constant(sym()).unwrap(),
            vec![
                ScalarFn::new("sin x", |x| x[0].sin()),
                ScalarFn::new("sin x", |x| x[0].sin()),
            ],
        )
        .unwrap();
        let grid = p.grid(64).unwrap();
        let audit = assumption_audit(&p, &grid, 100, 1e-9);
        assert!(!audit.convex_coercive.pass);
        assert!(audit
            .convex_coercive
            .witnesses
            .iter()
            .any(|w| w.detail.contains("F_i(x, 0)") && w.value == 2.0));
        assert!(audit.nonnegative_cost.pass);
        assert!(audit.monotone_coupling.pass && audit.irreducible.pass);
    }

    #[test]
    fn audit_flags_negative_cost() {
        let p = ModelProblem::new(
            1,
            1.0,
            vec![HamiltonianSpec::eikonal(
                ScalarFn::constant(1.0),
                ScalarFn::constant(-1.0),
            )],
            CouplingField::zero(1),
            vec![ScalarFn::constant(0.0)],
        )
        .unwrap();
        let grid = p.grid(16).unwrap();
        let audit = assumption_audit(&p, &grid, 10, 1e-9);
        assert!(!audit.nonnegative_cost.pass);
        assert_eq!(audit.nonnegative_cost.witnesses.len(), 16);
        assert!(audit
            .nonnegative_cost
            .witnesses
            .iter()
            .all(|w| w.cell.is_some()));
    }

    #[test]
    fn audit_flags_nonconvex_custom() {
        let f: CustomHamiltonian = Arc::new(|_x, p| (p[0].abs()).sqrt());
        let p = ModelProblem::new(
            1,
            1.0,
            vec![HamiltonianSpec::new(
                HamiltonianKind::Custom {
                    label: "sqrt|p|".into(),
                    f,
                },
                well(),
            )],
            CouplingField::zero(1),
            vec![ScalarFn::constant(0.0)],
        )
        .unwrap();
        let grid = p.grid(16).unwrap();
        let audit = assumption_audit(&p, &grid, 200, 1e-9);
        assert!(!audit.convex_coercive.pass);
    }

    #[test]
    fn audit_flags_non_periodic_cost() {
        let p = ModelProblem::new(
            1,
            1.0,
            vec![HamiltonianSpec::eikonal(
                ScalarFn::constant(1.0),
                ScalarFn::new("x", |x| x[0]),
            )],
            CouplingField::zero(1),
            vec![ScalarFn::constant(0.0)],
        )
        .unwrap();
        let audit = assumption_audit(&p, &p.grid(16).unwrap(), 10, 1e-9);
        assert!(!audit.periodicity.pass);
    }

    #[test]
    fn sets_for_two_wells() {
        let p = two_well(sym());
        let grid = p.grid(64).unwrap();
        let sets = compute_sets(&p, &grid, None).unwrap();
        assert_eq!(sets.f_cells(), vec![0]);
        assert_eq!(sets.a_cells(), vec![0]);
        assert!(sets.d_masks.iter().all(|m| m.iter().all(|&b| b)));
    }

    #[test]
    fn constant_positive_costs_give_empty_f() {
        let p = ModelProblem::new(
            1,
            1.0,
            vec![
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), ScalarFn::constant(1.0)),
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), ScalarFn::constant(3.0)),
            ],
            CouplingField::constant(sym()).unwrap(),
            vec![ScalarFn::constant(0.0), ScalarFn::constant(0.0)],
        )
        .unwrap();
        let sets = compute_sets(&p, &p.grid(32).unwrap(), None).unwrap();
        assert!(sets.f_empty() && sets.a_empty());
        assert!(sets.d_empty().iter().all(|&e| !e));
    }

    #[test]
    fn positive_row_sums_empty_the_d_sets() {
        let d = matrix_from_rows(&[vec![2.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let p = two_well(d);
        let sets = compute_sets(&p, &p.grid(32).unwrap(), None).unwrap();
        assert_eq!(sets.d_empty(), vec![true, false]);
        assert!(sets.a_empty());
        assert!(!sets.f_empty());
    }

    #[test]
    fn masks_grow_with_eps() {
        let p = two_well(sym());
        let grid = p.grid(64).unwrap();
        let mut prev = compute_sets(&p, &grid, Some(0.0)).unwrap();
        for eps in [1e-3, 1e-2, 0.1, 0.5, 2.0] {
            let next = compute_sets(&p, &grid, Some(eps)).unwrap();
            for c in 0..grid.cells() {
                assert!(!prev.f_mask[c] || next.f_mask[c]);
                assert!(!prev.a_mask[c] || next.a_mask[c]);
            }
            for &c in &next.a_cells() {
                for h in &p.hamiltonians {
                    assert!(h.cost.eval(&grid.point(c)[..1]) <= eps);
                }
            }
            prev = next;
        }
    }
}
