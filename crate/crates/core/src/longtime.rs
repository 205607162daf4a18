//! Large-time diagnostics: convergence of `u(·,t) + ct`, the monotone
//! functionals on A and the linear ODE `u' + Du = 0` satisfied there.

use serde::{Deserialize, Serialize};

use crate::coupling::{exp_limit_projector, matrix_exponential, FieldAnalysis, Matrix};
use crate::ergodic::stationary_residual;
use crate::evolutive::TrajectoryLog;
use crate::grid::{Discretization, SchemeParams, VectorGridField};
use crate::model::SetMasks;
use crate::{Error, Result};

pub const DEFAULT_WINDOW: f64 = 5.0;
pub const DEFAULT_MONO_TOL: f64 = 1e-3;

/// `1e-3·(1 + ‖u0‖_∞)`.
pub fn default_osc_tol(u0: &VectorGridField) -> f64 {
    1e-3 * (1.0 + u0.sup_norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Converged,
    NonConvergent,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub verdict: Verdict,
    pub u_infinity: Option<VectorGridField>,
    /// Oscillation of `u + ct` over the trailing window.
    pub oscillation: f64,
    /// Same over the window before it.
    pub previous_oscillation: f64,
    pub osc_tol: f64,
    pub window: f64,
    pub stationarity_residual: Option<Vec<f64>>,
    /// `max_{i,j} sup_A |(u_∞)_i − (u_∞)_j|`; absent when A is empty.
    pub equality_on_a: Option<f64>,
    /// `2·dx·L` with `L` the Lipschitz estimate of `u_∞`.
    pub equality_tol: Option<f64>,
}

fn shifted(field: &VectorGridField, c: &[f64]) -> VectorGridField {
    let mut out = field.clone();
    let shift: Vec<f64> = c.iter().map(|ci| ci * field.t).collect();
    out.add_constants(&shift);
    out
}

/// Largest `max_t u − min_t u` over cells and components.
fn oscillation(fields: &[VectorGridField]) -> f64 {
    let Some(first) = fields.first() else {
        return 0.0;
    };
    let mut worst: f64 = 0.0;
    for i in 0..first.m {
        for c in 0..first.cells() {
            let (lo, hi) = fields
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                    let v = f.values[i][c];
                    (lo.min(v), hi.max(v))
                });
            worst = worst.max(hi - lo);
        }
    }
    worst
}

/// Trapezoidal time average of the fields.
fn time_average(fields: &[VectorGridField]) -> VectorGridField {
    let first = &fields[0];
    let mut out = VectorGridField::zeros(first.m, first.cells());
    out.t = fields.last().map_or(first.t, |f| f.t);
    if fields.len() == 1 {
        out.values = first.values.clone();
        return out;
    }
    let span = out.t - first.t;
    for w in fields.windows(2) {
        let h = 0.5 * (w[1].t - w[0].t) / span;
        for (i, row) in out.values.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v += h * (w[0].values[i][c] + w[1].values[i][c]);
            }
        }
    }
    out
}

/// Classifies the trailing behaviour of `u + ct`.
pub fn detect_convergence(
    disc: &Discretization<'_>,
    log: &TrajectoryLog,
    sets: &SetMasks,
    window: f64,
    osc_tol: f64,
    c: &[f64],
    params: &SchemeParams,
) -> Result<ConvergenceReport> {
    let needed = 2.0 * window;
    let covered = log.snapshot_span();
    if covered + 1e-9 < needed {
        return Err(Error::InsufficientHorizon { covered, needed });
    }
    let t_end = log.snapshots.back().map_or(0.0, |f| f.t);
    let in_range = |lo: f64, hi: f64| -> Vec<VectorGridField> {
        log.snapshots
            .iter()
            .filter(|f| f.t >= lo - 1e-9 && f.t <= hi + 1e-9)
            .map(|f| shifted(f, c))
            .collect()
    };
    let trailing = in_range(t_end - window, t_end);
    let previous = in_range(t_end - 2.0 * window, t_end - window);
    let osc = oscillation(&trailing);
    let prev_osc = oscillation(&previous);
    let verdict = if osc <= osc_tol {
        Verdict::Converged
    } else if osc > 10.0 * osc_tol && prev_osc > 10.0 * osc_tol {
        Verdict::NonConvergent
    } else {
        Verdict::Undecided
    };
    let mut report = ConvergenceReport {
        verdict,
        u_infinity: None,
        oscillation: osc,
        previous_oscillation: prev_osc,
        osc_tol,
        window,
        stationarity_residual: None,
        equality_on_a: None,
        equality_tol: None,
    };
    if verdict == Verdict::Converged {
        let u_inf = time_average(&trailing);
        report.stationarity_residual = Some(stationary_residual(disc, &u_inf, c, params));
        let a_cells = sets.a_cells();
        if !a_cells.is_empty() {
            report.equality_on_a = Some(equality_on(&u_inf, &a_cells));
            report.equality_tol =
                Some(2.0 * disc.grid().dx * u_inf.lipschitz_estimate(disc.grid()));
        }
        report.u_infinity = Some(u_inf);
    }
    Ok(report)
}

/// `(t, oscillation of u + cs over [t − window, t])` for every snapshot time
/// at least one window after the first.
pub fn oscillation_series(log: &TrajectoryLog, c: &[f64], window: f64) -> Vec<(f64, f64)> {
    let fields: Vec<VectorGridField> = log.snapshots.iter().map(|f| shifted(f, c)).collect();
    let Some(t_first) = fields.first().map(|f| f.t) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut lo = 0;
    for end in 0..fields.len() {
        let t = fields[end].t;
        if t + 1e-9 < t_first + window {
            continue;
        }
        while fields[lo].t < t - window - 1e-9 {
            lo += 1;
        }
        out.push((t, oscillation(&fields[lo..=end])));
    }
    out
}

/// `max_{i,j} sup_{cells} |u_i − u_j|`.
pub fn equality_on(field: &VectorGridField, cells: &[usize]) -> f64 {
    cells
        .iter()
        .map(|&c| {
            let (lo, hi) = field
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| {
                    (lo.min(u[c]), hi.max(u[c]))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `Σ_i Λ_i(x) u_i(x, t)`.
    Lambda,
    /// `max_i u_i(x, t)`.
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalTrace {
    pub kind: FunctionalKind,
    pub times: Vec<f64>,
    pub cells: Vec<usize>,
    /// `values[k][s]`: cell `cells[k]` at `times[s]`.
    pub values: Vec<Vec<f64>>,
    pub mono_tol: f64,
    /// Largest increase per unit time over all cells and sample intervals.
    pub worst_increase: f64,
    pub worst_cell: Option<usize>,
    pub monotone: bool,
}

impl FunctionalTrace {
    fn build(
        kind: FunctionalKind,
        log: &TrajectoryLog,
        cells: Vec<usize>,
        eval: impl Fn(&VectorGridField, usize) -> f64,
        mono_tol: f64,
    ) -> Self {
        let times: Vec<f64> = log.snapshots.iter().map(|f| f.t).collect();
        let values: Vec<Vec<f64>> = cells
            .iter()
            .map(|&c| log.snapshots.iter().map(|f| eval(f, c)).collect())
            .collect();
        let mut worst_increase = f64::NEG_INFINITY;
        let mut worst_cell = None;
        for (k, series) in values.iter().enumerate() {
            for (w, t) in series.windows(2).zip(times.windows(2)) {
                let rate = (w[1] - w[0]) / (t[1] - t[0]);
                if rate > worst_increase {
                    worst_increase = rate;
                    worst_cell = Some(cells[k]);
                }
            }
        }
        if worst_cell.is_none() {
            worst_increase = 0.0;
        }
        Self {
            kind,
            times,
            cells,
            values,
            mono_tol,
            worst_increase,
            worst_cell,
            monotone: worst_increase <= mono_tol,
        }
    }

    /// Final value per tracked cell.
    pub fn limits(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|s| s.last().copied().unwrap_or(f64::NAN))
            .collect()
    }
}

fn aubry_cells(sets: &SetMasks) -> Result<Vec<usize>> {
    let cells = sets.a_cells();
    if cells.is_empty() {
        Err(Error::EmptyAubrySet)
    } else {
        Ok(cells)
    }
}

/// Time series of `Σ_i Λ_i(x) u_i(x, t)` at the A-cells.
pub fn monitor_lambda_functional(
    log: &TrajectoryLog,
    sets: &SetMasks,
    analysis: &FieldAnalysis,
    mono_tol: f64,
) -> Result<FunctionalTrace> {
    let cells = aubry_cells(sets)?;
    let mut weights = Vec::with_capacity(cells.len());
    for &c in &cells {
        let l = analysis
            .lambda_at(c)
            .ok_or_else(|| Error::PreconditionFailed(format!("no Perron vector at cell {c}")))?;
        weights.push((c, l.to_vec()));
    }
    let lookup = |c: usize| {
        &weights
            .iter()
            .find(|(k, _)| *k == c)
            .expect("tracked cell")
            .1
    };
    Ok(FunctionalTrace::build(
        FunctionalKind::Lambda,
        log,
        cells.clone(),
        |f, c| lookup(c).iter().zip(&f.values).map(|(l, u)| l * u[c]).sum(),
        mono_tol,
    ))
}

/// Time series of `max_i u_i(x, t)` at the A-cells.
pub fn monitor_max_functional(
    log: &TrajectoryLog,
    sets: &SetMasks,
    mono_tol: f64,
) -> Result<FunctionalTrace> {
    let cells = aubry_cells(sets)?;
    Ok(FunctionalTrace::build(
        FunctionalKind::Max,
        log,
        cells,
        |f, c| {
            f.values
                .iter()
                .map(|u| u[c])
                .fold(f64::NEG_INFINITY, f64::max)
        },
        mono_tol,
    ))
}

/// For `m = 2`: the components `(a, b)` with `Λ_1 a + Λ_2 b = φ` and
/// `max(a, b) = φ̃`, the maximum being attained by component `argmax`.
pub fn components_from_functionals(
    lambda: [f64; 2],
    phi: f64,
    phi_max: f64,
    argmax: usize,
) -> [f64; 2] {
    if argmax == 0 {
        [phi_max, (phi - lambda[0] * phi_max) / lambda[1]]
    } else {
        [(phi - lambda[1] * phi_max) / lambda[0], phi_max]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AubryOdeReport {
    pub cell: usize,
    /// First snapshot time at or after the requested `t0`.
    pub t0: f64,
    /// `sup_{t ≥ t0} ‖u(cell, t) − exp(−(t − t0)D)·u(cell, t0)‖_∞`.
    pub deviation: f64,
    /// `A·u(cell, t0)` with `A` the limit projector of `exp(−tD)`.
    pub projected_limit: Option<Vec<f64>>,
    pub final_value: Vec<f64>,
}

/// Compares the trajectory at an A-cell with the linear flow `exp(−(t−t0)D)`.
pub fn aubry_ode_check(
    log: &TrajectoryLog,
    sets: &SetMasks,
    cell: usize,
    d: &Matrix,
    t0: f64,
) -> Result<AubryOdeReport> {
    if !sets.a_mask.get(cell).copied().unwrap_or(false) {
        return Err(Error::CellNotInAubrySet(cell));
    }
    let start =
        log.snapshots
            .iter()
            .position(|f| f.t >= t0 - 1e-9)
            .ok_or(Error::InsufficientHorizon {
                covered: log.snapshots.back().map_or(0.0, |f| f.t),
                needed: t0,
            })?;
    let base_field = &log.snapshots[start];
    let base: Vec<f64> = base_field.values.iter().map(|u| u[cell]).collect();
    let base_vec = nalgebra::DVector::from_vec(base.clone());
    let mut deviation: f64 = 0.0;
    for f in log.snapshots.iter().skip(start) {
        let predicted = matrix_exponential(d, f.t - base_field.t) * &base_vec;
        for (i, u) in f.values.iter().enumerate() {
            deviation = deviation.max((u[cell] - predicted[i]).abs());
        }
    }
    let projected_limit = exp_limit_projector(d)
        .ok()
        .map(|p| (&p.a * &base_vec).iter().copied().collect());
    let final_value = log
        .snapshots
        .back()
        .map(|f| f.values.iter().map(|u| u[cell]).collect())
        .unwrap_or_default();
    Ok(AubryOdeReport {
        cell,
        t0: base_field.t,
        deviation,
        projected_limit,
        final_value,
    })
}
