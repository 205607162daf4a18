//! Discounted systems `λv + Ĥ(x, Dv) + D(x)v = 0`, the vanishing-discount
//! limit and the bounds on the ergodic constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{
    check_monotone_coupling, is_irreducible, perron_left_null_vector, PerronMode, EIGEN_TOL,
};
use crate::grid::{estimate_thetas, Discretization, NumericalFlux, SchemeParams, VectorGridField};
use crate::model::compute_sets;
use crate::{Error, Result};

const THETA_REFRESH: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountOptions {
    /// Stop once `sup |λv + Ĥ + Dv| ≤ tol`.
    pub tol: f64,
    pub max_iters: usize,
    pub flux: NumericalFlux,
    pub cfl_safety: f64,
    /// Extrapolate along a dominant slowly decaying mode between blocks.
    pub accelerate: bool,
}

impl Default for DiscountOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 20_000_000,
            flux: NumericalFlux::LaxFriedrichs,
            cfl_safety: 0.9,
            accelerate: true,
        }
    }
}

/// Pseudo-time length of one acceleration block.
const BLOCK_TIME: f64 = 2.0;
/// Largest relative misfit `‖Δ_k − ρΔ_{k−1}‖ / ‖Δ_k‖` accepted for a jump.
const MODE_MISFIT: f64 = 0.05;

/// One-mode vector extrapolation: if consecutive block increments satisfy
/// `Δ_k ≈ ρ Δ_{k−1}`, the remaining geometric tail is `ρ/(1−ρ)·Δ_k`.
fn mode_jump(delta: &[f64], prev: &[f64]) -> Option<f64> {
    let dot: f64 = delta.iter().zip(prev).map(|(a, b)| a * b).sum();
    let pp: f64 = prev.iter().map(|b| b * b).sum();
    let dd: f64 = delta.iter().map(|a| a * a).sum();
    if pp == 0.0 || dd == 0.0 {
        return None;
    }
    let rho = dot / pp;
    if !(0.3..0.999_999).contains(&rho) {
        return None;
    }
    let misfit: f64 = delta
        .iter()
        .zip(prev)
        .map(|(a, b)| (a - rho * b).powi(2))
        .sum();
    (misfit <= MODE_MISFIT * MODE_MISFIT * dd).then(|| rho / (1.0 - rho))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSolution {
    pub lambda: f64,
    pub field: VectorGridField,
    pub iterations: usize,
    pub residual: f64,
}

fn pseudo_time_step(disc: &Discretization<'_>, thetas: &[f64], safety: f64, lambda: f64) -> f64 {
    let grid = disc.grid();
    let dmax = disc.problem().coupling.max_diagonal();
    let rate = thetas
        .iter()
        .map(|th| th * grid.dim as f64 / grid.dx + dmax + lambda)
        .fold(0.0, f64::max);
    safety / rate
}

/// True when `F_i(x, 0) = 0` and `f_i ≥ 0` at every node, so that `v^λ ≥ 0`.
fn nonnegative_case(disc: &Discretization<'_>) -> bool {
    let zero = vec![0.0; disc.grid().dim];
    (0..disc.problem().m).all(|i| {
        (0..disc.grid().cells())
            .all(|c| disc.convex_cached(i, c, &zero).abs() <= 1e-12 && disc.cost(i, c) >= 0.0)
    })
}

fn discounted_residual(
    disc: &Discretization<'_>,
    v: &VectorGridField,
    params: &SchemeParams,
    lambda: f64,
    buf: &mut [Vec<f64>],
) -> f64 {
    disc.operator_into(v, params, buf);
    v.values
        .iter()
        .zip(buf.iter())
        .flat_map(|(u, r)| u.iter().zip(r).map(|(a, b)| (b + lambda * a).abs()))
        .fold(0.0, f64::max)
}

/// Pseudo-time marching `∂v/∂τ + λv + Ĥ + Dv = 0` to a steady state.
pub fn solve_discounted(
    disc: &Discretization<'_>,
    lambda: f64,
    options: &DiscountOptions,
    init: Option<&VectorGridField>,
) -> Result<DiscountedSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::PreconditionFailed(format!(
            "discount {lambda} must be positive"
        )));
    }
    let problem = disc.problem();
    let report = check_monotone_coupling(&problem.coupling, EIGEN_TOL);
    if !report.holds {
        return Err(Error::MonotonicityViolated(format!(
            "{:?}",
            report.violations
        )));
    }
    let cells = disc.grid().cells();
    let mut v = match init {
        Some(f) if f.m == problem.m && f.cells() == cells => f.clone(),
        Some(_) => {
            return Err(Error::DimensionMismatch(
                "initial guess does not match the grid".into(),
            ))
        }
        None => VectorGridField::zeros(problem.m, cells),
    };
    let mut params = SchemeParams {
        thetas: estimate_thetas(disc, &v),
        cfl_safety: options.cfl_safety,
        dt: 0.0,
        flux: options.flux,
    };
    let mut dtau = pseudo_time_step(disc, &params.thetas, options.cfl_safety, lambda);
    let mut buf = vec![vec![0.0; cells]; problem.m];
    let mut res = f64::INFINITY;
    let mut iterations = 0;
    let mut block = (BLOCK_TIME / dtau).ceil() as usize;
    let flat = |f: &VectorGridField| f.values.concat();
    let mut block_start = flat(&v);
    let mut prev_delta: Option<Vec<f64>> = None;
    while iterations < options.max_iters {
        disc.operator_into(&v, &params, &mut buf);
        res = 0.0;
        for (u, r) in v.values.iter_mut().zip(&mut buf) {
            for (a, b) in u.iter_mut().zip(r.iter_mut()) {
                *b += lambda * *a;
                res = res.max(b.abs());
            }
        }
        if !res.is_finite() {
            return Err(Error::NonFiniteValue {
                t: iterations as f64 * dtau,
                norm: v.sup_norm(),
            });
        }
        if res <= options.tol {
            break;
        }
        for (u, r) in v.values.iter_mut().zip(&buf) {
            for (a, b) in u.iter_mut().zip(r) {
                *a -= dtau * b;
            }
        }
        iterations += 1;
        if iterations % THETA_REFRESH == 0 {
            let est = estimate_thetas(disc, &v);
            let mut raised = false;
            for (cur, new) in params.thetas.iter_mut().zip(est) {
                if new > *cur {
                    *cur = new;
                    raised = true;
                }
            }
            if raised {
                dtau = pseudo_time_step(disc, &params.thetas, options.cfl_safety, lambda);
                block = (BLOCK_TIME / dtau).ceil() as usize;
                prev_delta = None;
            }
        }
        if options.accelerate && iterations % block == 0 {
            let now = flat(&v);
            let delta: Vec<f64> = now.iter().zip(&block_start).map(|(a, b)| a - b).collect();
            let jump = prev_delta.as_ref().and_then(|p| mode_jump(&delta, p));
            if let Some(factor) = jump {
                let shift = |v: &mut VectorGridField, scale: f64| {
                    let mut k = 0;
                    for u in v.values.iter_mut() {
                        for a in u.iter_mut() {
                            *a += scale * delta[k];
                            k += 1;
                        }
                    }
                };
                let before = discounted_residual(disc, &v, &params, lambda, &mut buf);
                shift(&mut v, factor);
                // Keep the jump only if it does not make things worse.
                if !(discounted_residual(disc, &v, &params, lambda, &mut buf) <= before) {
                    shift(&mut v, -factor);
                }
                prev_delta = None;
                block_start = flat(&v);
            } else {
                prev_delta = Some(delta);
                block_start = now;
            }
        }
    }
    if res > options.tol {
        return Err(Error::NotConverged {
            iterations,
            residual: res,
        });
    }

    // The a priori box; the slack covers the iterate being only residual-close.
    let m_bound = problem.a_priori_constant(disc.grid());
    let slack = options.tol * (1.0 + 1.0 / lambda);
    let upper = m_bound / lambda + slack;
    let lower = if nonnegative_case(disc) {
        -slack
    } else {
        -m_bound / lambda - slack
    };
    for (i, u) in v.values.iter().enumerate() {
        for (c, &val) in u.iter().enumerate() {
            if val > upper || val < lower {
                return Err(Error::BoundViolated(format!(
                    "v_{i} = {val} at cell {c} outside [{lower}, {upper}] for λ = {lambda}"
                )));
            }
        }
    }
    Ok(DiscountedSolution {
        lambda,
        field: v,
        iterations,
        residual: res,
    })
}

/// `λ_k = 0.5^k · 0.5`, `k = 0, …, 12`.
pub fn default_schedule() -> Vec<f64> {
    (0..=12).map(|k| 0.5 * 0.5f64.powi(k)).collect()
}

/// Weights used to anchor correctors at `cell`: the Perron vector of `D(cell)`
/// when it exists, otherwise uniform.
pub fn anchor_weights(disc: &Discretization<'_>, cell: usize) -> Vec<f64> {
    let d = disc.problem().coupling.at(cell);
    let m = d.nrows();
    let degenerate = (0..m).all(|i| d.row(i).sum().abs() <= EIGEN_TOL);
    let mode = if degenerate {
        PerronMode::Degenerate
    } else {
        PerronMode::General
    };
    perron_left_null_vector(d, mode)
        .map(|p| p.lambda_vec)
        .unwrap_or_else(|_| vec![1.0 / m as f64; m])
}

/// The grid cell minimizing `Σ_i f_i` (first one on ties).
pub fn default_anchor(disc: &Discretization<'_>) -> usize {
    let total = |c: usize| (0..disc.problem().m).map(|i| disc.cost(i, c)).sum::<f64>();
    (0..disc.grid().cells())
        .min_by(|&a, &b| total(a).total_cmp(&total(b)))
        .unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub lambda: f64,
    /// `λ v_i^λ(x*)` per equation.
    pub scaled_anchor: Vec<f64>,
    /// `‖w^λ_k − w^λ_{k−1}‖_∞` for the anchored correctors; absent at the first λ.
    pub corrector_increment: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsCheck {
    pub lower: f64,
    pub upper: f64,
    /// `−c_1`.
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `c ≈ 0` and corrector `≈ 0` on F.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FSetCheck {
    pub c_sup: f64,
    pub corrector_sup_on_f: f64,
    pub tol_c: f64,
    pub tol_corrector: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicResult {
    pub trace: Vec<TraceEntry>,
    pub c_estimate: Vec<f64>,
    /// `−λ_K v^{λ_K}(x*)` without extrapolation.
    pub c_last: Vec<f64>,
    /// `v^{λ_K} − k·1` with `k = Σ_i Λ_i v_i^{λ_K}(x*)`.
    pub corrector: VectorGridField,
    pub anchor: usize,
    pub anchor_point: Vec<f64>,
    pub anchor_weights: Vec<f64>,
    pub bounds_check: Option<BoundsCheck>,
    pub f_check: Option<FSetCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanishingOptions {
    pub schedule: Vec<f64>,
    pub x_star: Option<usize>,
    pub discount: DiscountOptions,
    /// Start each solve from the previous one; when off, the solves run concurrently.
    pub warm_start: bool,
    pub bounds_tol: f64,
}

impl Default for VanishingOptions {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            x_star: None,
            discount: DiscountOptions::default(),
            warm_start: true,
            bounds_tol: 1e-2,
        }
    }
}

fn anchored(field: &VectorGridField, weights: &[f64], cell: usize) -> (VectorGridField, f64) {
    let k: f64 = weights
        .iter()
        .zip(&field.values)
        .map(|(w, u)| w * u[cell])
        .sum();
    let mut out = field.clone();
    out.add_constants(&vec![-k; field.m]);
    (out, k)
}

/// Value at 0 of the polynomial through `(λ_k, c_k)`.
fn extrapolate_to_zero(lambdas: &[f64], values: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, (&lk, &ck)) in lambdas.iter().zip(values).enumerate() {
        let mut w = 1.0;
        for (j, &lj) in lambdas.iter().enumerate() {
            if j != k {
                w *= -lj / (lk - lj);
            }
        }
        total += w * ck;
    }
    total
}

/// Drives `λ → 0` along the schedule; `c` is extrapolated from the last three
/// values of `−λ v^λ(x*)`.
pub fn vanishing_discount(
    disc: &Discretization<'_>,
    options: &VanishingOptions,
) -> Result<ErgodicResult> {
    let schedule = &options.schedule;
    if schedule.is_empty()
        || schedule.iter().any(|l| !(*l > 0.0))
        || schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::PreconditionFailed(
            "λ schedule must be positive and strictly decreasing".into(),
        ));
    }
    let problem = disc.problem();
    let m = problem.m;
    let cells = disc.grid().cells();
    let anchor = options.x_star.unwrap_or_else(|| default_anchor(disc));
    if anchor >= cells {
        return Err(Error::IndexOutOfRange {
            index: anchor,
            m: cells,
        });
    }
    let weights = anchor_weights(disc, anchor);

    let solutions: Vec<DiscountedSolution> = if options.warm_start {
        let mut out: Vec<DiscountedSolution> = Vec::with_capacity(schedule.len());
        for (k, &lambda) in schedule.iter().enumerate() {
            let init = out.last().map(|prev| {
                let (_, kbar) = anchored(&prev.field, &weights, anchor);
                let mut f = prev.field.clone();
                let lift = (schedule[k - 1] / lambda - 1.0) * kbar;
                f.add_constants(&vec![lift; m]);
                f
            });
            out.push(solve_discounted(
                disc,
                lambda,
                &options.discount,
                init.as_ref(),
            )?);
        }
        out
    } else {
        schedule
            .par_iter()
            .map(|&lambda| solve_discounted(disc, lambda, &options.discount, None))
            .collect::<Result<_>>()?
    };

    let mut trace = Vec::with_capacity(solutions.len());
    let mut prev_corrector: Option<VectorGridField> = None;
    for sol in &solutions {
        let (w, _) = anchored(&sol.field, &weights, anchor);
        trace.push(TraceEntry {
            lambda: sol.lambda,
            scaled_anchor: sol
                .field
                .values
                .iter()
                .map(|u| sol.lambda * u[anchor])
                .collect(),
            corrector_increment: prev_corrector.as_ref().map(|p| p.sup_distance(&w)),
            iterations: sol.iterations,
            residual: sol.residual,
        });
        prev_corrector = Some(w);
    }

    let cs: Vec<Vec<f64>> = trace
        .iter()
        .map(|e| e.scaled_anchor.iter().map(|v| -v).collect())
        .collect();
    let c_last = cs.last().cloned().unwrap_or_default();
    let tail = cs.len().min(3);
    let tail_l = &schedule[schedule.len() - tail..];
    let c_estimate: Vec<f64> = (0..m)
        .map(|i| {
            let vals: Vec<f64> = cs[cs.len() - tail..].iter().map(|c| c[i]).collect();
            extrapolate_to_zero(tail_l, &vals)
        })
        .collect();
    if c_estimate.iter().any(|c| !c.is_finite()) {
        return Err(Error::ExtrapolationUnstable(
            "non-finite extrapolated constant".into(),
        ));
    }
    let increments: Vec<f64> = cs
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    if increments.len() >= 3 {
        let n = increments.len();
        let noise = 10.0 * options.discount.tol + 1e-12;
        if increments[n - 1] > increments[n - 2].max(increments[n - 3]) + noise {
            return Err(Error::ExtrapolationUnstable(format!(
                "increments of −λv(x*) grow at the end of the schedule: {:?}",
                &increments[n - 3..]
            )));
        }
    }

    let last = solutions.last().expect("nonempty schedule");
    let (corrector, _) = anchored(&last.field, &weights, anchor);

    let bounds_check = ergodic_bounds(disc, &weights).ok().map(|(lower, upper)| {
        let value = -c_estimate[0];
        let tol = options.bounds_tol;
        BoundsCheck {
            lower,
            upper,
            value,
            tol,
            pass: lower - tol <= value && value <= upper + tol,
        }
    });

    let sets = compute_sets(problem, disc.grid(), None)?;
    let f_check = (!sets.f_empty()).then(|| {
        let dx = disc.grid().dx;
        let lip = corrector.lipschitz_estimate(disc.grid()).max(1.0);
        let c_sup = c_estimate.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
        let corrector_sup_on_f = sets
            .f_cells()
            .iter()
            .flat_map(|&c| corrector.values.iter().map(move |u| u[c].abs()))
            .fold(0.0, f64::max);
        let tol_c = dx * lip;
        let tol_corrector = 2.0 * dx * lip;
        FSetCheck {
            c_sup,
            corrector_sup_on_f,
            tol_c,
            tol_corrector,
            pass: c_sup <= tol_c && corrector_sup_on_f <= tol_corrector,
        }
    });

    Ok(ErgodicResult {
        trace,
        c_estimate,
        c_last,
        corrector,
        anchor,
        anchor_point: disc.point(anchor).to_vec(),
        anchor_weights: weights,
        bounds_check,
        f_check,
    })
}

/// Bounds `lower ≤ −c_1 ≤ upper` for a constant, irreducible, zero-row-sum
/// coupling with Perron vector `lambda`.
pub fn ergodic_bounds(disc: &Discretization<'_>, lambda: &[f64]) -> Result<(f64, f64)> {
    let problem = disc.problem();
    if !problem.coupling.is_constant() {
        return Err(Error::PreconditionFailed("coupling is not constant".into()));
    }
    let d = problem.coupling.at(0);
    if !is_irreducible(d).irreducible {
        return Err(Error::PreconditionFailed("coupling is reducible".into()));
    }
    if (0..problem.m).any(|i| d.row(i).sum().abs() > EIGEN_TOL) {
        return Err(Error::PreconditionFailed(
            "coupling has nonzero row sums".into(),
        ));
    }
    if lambda.len() != problem.m || lambda.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::PreconditionFailed(
            "Λ must be a positive m-vector".into(),
        ));
    }
    let total: f64 = lambda.iter().sum();
    let cells = disc.grid().cells();
    let lower = lambda
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l * (0..cells)
                .map(|c| disc.cost(i, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / total;
    let upper = (0..cells)
        .map(|c| {
            lambda
                .iter()
                .enumerate()
                .map(|(i, l)| l * disc.cost(i, c))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
        / total;
    Ok((lower, upper))
}

/// Per-equation `sup_x |Ĥ_i + Σ_j d_ij v_j − c_i|`.
pub fn stationary_residual(
    disc: &Discretization<'_>,
    field: &VectorGridField,
    c: &[f64],
    params: &SchemeParams,
) -> Vec<f64> {
    disc.operator(field, params)
        .iter()
        .zip(c)
        .map(|(r, ci)| r.iter().fold(0.0_f64, |a, v| a.max((v - ci).abs())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{matrix_from_rows, CouplingField};
    use crate::grid::TorusGrid;
    use crate::model::{HamiltonianSpec, ModelProblem, ScalarFn};

    fn constant_costs(a: f64, b: f64) -> ModelProblem {
        ModelProblem::new(
            1,
            1.0,
            vec![
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), ScalarFn::constant(a)),
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), ScalarFn::constant(b)),
            ],
            CouplingField::constant(matrix_from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap())
                .unwrap(),
            vec![ScalarFn::constant(0.0), ScalarFn::constant(0.0)],
        )
        .unwrap()
    }

    /// Constant ansatz: `λv + Dv = (a, b)`.
    fn discounted_oracle(a: f64, b: f64, lambda: f64) -> (f64, f64) {
        let det = (lambda + 1.0) * (lambda + 1.0) - 1.0;
        (
            ((lambda + 1.0) * a + b) / det,
            (a + (lambda + 1.0) * b) / det,
        )
    }

    #[test]
    fn accelerated_solve_matches_plain_marching() {
        use std::f64::consts::PI;
        let d = matrix_from_rows(&[
            vec![1.4, -0.9, -0.5],
            vec![-0.3, 0.5, -0.2],
            vec![-1.1, -0.7, 1.8],
        ])
        .unwrap();
        let hams = [
            (1.2, 0.8, 1.0, 0.3),
            (0.6, -0.5, 2.0, 1.7),
            (1.9, 1.1, 1.0, 4.0),
        ]
        .into_iter()
        .map(|(a, b, k, phi)| {
            HamiltonianSpec::eikonal(
                ScalarFn::constant(1.0),
                ScalarFn::new("trig", move |x| a + b * (2.0 * PI * k * x[0] + phi).cos()),
            )
        })
        .collect();
        let p = ModelProblem::new(
            1,
            1.0,
            hams,
            CouplingField::constant(d).unwrap(),
            vec![ScalarFn::constant(0.0); 3],
        )
        .unwrap();
        let disc = Discretization::new(&p, TorusGrid::new(1, 32, 1.0).unwrap()).unwrap();
        let lambda = 0.05;
        let fast = solve_discounted(
            &disc,
            lambda,
            &DiscountOptions {
                tol: 1e-9,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let plain = solve_discounted(
            &disc,
            lambda,
            &DiscountOptions {
                tol: 1e-9,
                accelerate: false,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(fast.field.sup_distance(&plain.field) < 1e-6 / lambda);
        assert!(fast.iterations <= plain.iterations);
    }

    #[test]
    fn constant_costs_discounted() {
        let p = constant_costs(1.0, 3.0);
        let g = TorusGrid::new(1, 64, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let sol = solve_discounted(&disc, 0.1, &DiscountOptions::default(), None).unwrap();
        let (v1, v2) = discounted_oracle(1.0, 3.0, 0.1);
        assert!((v1 - 19.52381).abs() < 1e-5 && (v2 - 20.47619).abs() < 1e-5);
        for c in 0..64 {
            assert!((sol.field.values[0][c] - v1).abs() < 1e-5);
            assert!((sol.field.values[1][c] - v2).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_cost_gives_zero() {
        let p = constant_costs(0.0, 0.0);
        let g = TorusGrid::new(1, 16, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let sol = solve_discounted(&disc, 0.3, &DiscountOptions::default(), None).unwrap();
        assert_eq!(sol.field.sup_norm(), 0.0);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn nonpositive_discount_rejected() {
        let p = constant_costs(1.0, 1.0);
        let disc = Discretization::new(&p, TorusGrid::new(1, 16, 1.0).unwrap()).unwrap();
        assert!(matches!(
            solve_discounted(&disc, 0.0, &DiscountOptions::default(), None),
            Err(Error::PreconditionFailed(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let p = constant_costs(1.0, 3.0);
        let disc = Discretization::new(&p, TorusGrid::new(1, 16, 1.0).unwrap()).unwrap();
        let opts = DiscountOptions {
            max_iters: 5,
            ..DiscountOptions::default()
        };
        assert!(matches!(
            solve_discounted(&disc, 0.1, &opts, None),
            Err(Error::NotConverged { iterations: 5, .. })
        ));
    }

    #[test]
    fn lagrange_extrapolation_is_exact_on_quadratics() {
        let ls = [0.4, 0.2, 0.1];
        let vals: Vec<f64> = ls.iter().map(|l| 2.0 - 3.0 * l + 5.0 * l * l).collect();
        assert!((extrapolate_to_zero(&ls, &vals) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_for_constant_costs() {
        let p = constant_costs(1.0, 3.0);
        let disc = Discretization::new(&p, TorusGrid::new(1, 16, 1.0).unwrap()).unwrap();
        assert_eq!(ergodic_bounds(&disc, &[0.5, 0.5]).unwrap(), (2.0, 2.0));
        let zero = constant_costs(0.0, 0.0);
        let disc0 = Discretization::new(&zero, TorusGrid::new(1, 16, 1.0).unwrap()).unwrap();
        assert_eq!(ergodic_bounds(&disc0, &[0.5, 0.5]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn exact_stationary_pair_has_zero_residual() {
        let p = constant_costs(1.0, 3.0);
        let disc = Discretization::new(&p, TorusGrid::new(1, 32, 1.0).unwrap()).unwrap();
        let mut v = VectorGridField::zeros(2, 32);
        v.add_constants(&[6.5, 7.5]);
        let params = SchemeParams::auto(&disc, &v, NumericalFlux::LaxFriedrichs, 0.9).unwrap();
        let r = stationary_residual(&disc, &v, &[-2.0, -2.0], &params);
        assert!(r.iter().all(|x| *x <= 1e-12));
        let wrong = stationary_residual(&disc, &v, &[-1.0, -1.0], &params);
        assert!(wrong.iter().all(|x| *x >= 1.0 - 1e-12));
    }
}
