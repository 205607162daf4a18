//! Switching control: each mode `i` moves with velocity `σ_i(x)·a`, `|a| ≤ 1`,
//! pays `f_i` per unit time and jumps to mode `j` at rate `γ_ij`. The value
//! functions solve the evolutive system with `F_i(x, p) = σ_i(x)|p|`,
//! `d_ii = Σ_{j≠i} γ_ij` and `d_ij = −γ_ij`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingField, Matrix};
use crate::evolutive::{solve_until, SnapshotPolicy, SolveOptions};
use crate::grid::{
    Discretization, NumericalFlux, SchemeParams, TorusGrid, VectorGridField, PAR_MIN_CELLS,
};
use crate::model::{HamiltonianSpec, ModelProblem, ScalarFn};
use crate::{Error, Result};

/// Points per axis used to check `σ_i > 0` at construction.
const SIGMA_PROBE: usize = 64;
/// Number of unit directions in two dimensions (plus `a = 0`).
pub const DIRECTIONS_2D: usize = 16;

#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub m: usize,
    pub dim: usize,
    pub period: f64,
    pub sigma: Vec<ScalarFn>,
    pub costs: Vec<ScalarFn>,
    /// Switching rates; the diagonal is ignored.
    pub gamma: Matrix,
    pub horizon: f64,
    pub terminal: Vec<ScalarFn>,
}

impl ControlProblem {
    pub fn new(
        dim: usize,
        period: f64,
        sigma: Vec<ScalarFn>,
        costs: Vec<ScalarFn>,
        gamma: Matrix,
        horizon: f64,
        terminal: Vec<ScalarFn>,
    ) -> Result<Self> {
        let m = sigma.len();
        if m == 0
            || costs.len() != m
            || terminal.len() != m
            || gamma.nrows() != m
            || gamma.ncols() != m
        {
            return Err(Error::DimensionMismatch(format!(
                "{} speeds, {} costs, {} terminal data, {}×{} rates",
                m,
                costs.len(),
                terminal.len(),
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        if !(1..=2).contains(&dim) || !(period > 0.0) {
            return Err(Error::DegenerateGrid(format!(
                "dimension {dim}, period {period}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::PreconditionFailed(format!(
                "horizon {horizon} must be positive"
            )));
        }
        for i in 0..m {
            for j in 0..m {
                if i != j && !(gamma[(i, j)] >= 0.0 && gamma[(i, j)].is_finite()) {
                    return Err(Error::PreconditionFailed(format!(
                        "rate γ_{i}{j} = {} is negative",
                        gamma[(i, j)]
                    )));
                }
            }
        }
        let probe = TorusGrid::new(dim, SIGMA_PROBE, period)?;
        for (i, s) in sigma.iter().enumerate() {
            if let Some(c) = (0..probe.cells()).find(|&c| !(s.eval(&probe.point(c)[..dim]) > 0.0)) {
                return Err(Error::PreconditionFailed(format!(
                    "σ_{i} is not positive at {:?}",
                    &probe.point(c)[..dim]
                )));
            }
        }
        Ok(Self {
            m,
            dim,
            period,
            sigma,
            costs,
            gamma,
            horizon,
            terminal,
        })
    }

    /// Total jump rate out of mode `i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        (0..self.m)
            .filter(|&j| j != i)
            .map(|j| self.gamma[(i, j)])
            .sum()
    }

    pub fn induced_coupling(&self) -> Matrix {
        Matrix::from_fn(self.m, self.m, |i, j| {
            if i == j {
                self.exit_rate(i)
            } else {
                -self.gamma[(i, j)]
            }
        })
    }

    /// The evolutive system solved by the value functions.
    pub fn induced_problem(&self) -> Result<ModelProblem> {
        ModelProblem::new(
            self.dim,
            self.period,
            self.sigma
                .iter()
                .zip(&self.costs)
                .map(|(s, f)| HamiltonianSpec::eikonal(s.clone(), f.clone()))
                .collect(),
            CouplingField::constant(self.induced_coupling())?,
            self.terminal.clone(),
        )
    }

    /// Same problem with modes relabelled: new mode `k` is old mode `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pick = |v: &[ScalarFn]| perm.iter().map(|&k| v[k].clone()).collect::<Vec<_>>();
        let gamma = Matrix::from_fn(self.m, self.m, |i, j| self.gamma[(perm[i], perm[j])]);
        Self::new(
            self.dim,
            self.period,
            pick(&self.sigma),
            pick(&self.costs),
            gamma,
            self.horizon,
            pick(&self.terminal),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicySpec {
    Zero,
    /// Full speed along the shortest periodic displacement to the target.
    TowardPoint {
        target: Vec<f64>,
    },
    /// One direction per mode and cell, used at the nearest node.
    Feedback {
        grid: TorusGrid,
        directions: Vec<Vec<[f64; 2]>>,
    },
}

impl PolicySpec {
    pub fn validate(&self, problem: &ControlProblem) -> Result<()> {
        match self {
            PolicySpec::Zero => Ok(()),
            PolicySpec::TowardPoint { target } if target.len() == problem.dim => Ok(()),
            PolicySpec::TowardPoint { target } => Err(Error::DimensionMismatch(format!(
                "target has {} coordinates",
                target.len()
            ))),
            PolicySpec::Feedback { grid, directions } => {
                if directions.len() != problem.m
                    || directions.iter().any(|d| d.len() != grid.cells())
                {
                    return Err(Error::DimensionMismatch(
                        "feedback table does not match modes and grid".into(),
                    ));
                }
                let too_long = directions
                    .iter()
                    .flatten()
                    .any(|a| a[0].hypot(a[1]) > 1.0 + 1e-12);
                if too_long {
                    return Err(Error::PreconditionFailed(
                        "feedback direction longer than 1".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Control at `x` in mode `i`; `reach` is the distance coverable in one substep.
    fn control(&self, problem: &ControlProblem, x: &[f64; 2], i: usize, reach: f64) -> [f64; 2] {
        match self {
            PolicySpec::Zero => [0.0; 2],
            PolicySpec::TowardPoint { target } => {
                let mut delta = [0.0; 2];
                for k in 0..problem.dim {
                    let d = (target[k] - x[k]).rem_euclid(problem.period);
                    delta[k] = if d > 0.5 * problem.period {
                        d - problem.period
                    } else {
                        d
                    };
                }
                let dist = delta[0].hypot(delta[1]);
                if dist == 0.0 {
                    [0.0; 2]
                } else if dist <= reach {
                    // Land on the target instead of overshooting it.
                    [delta[0] / reach, delta[1] / reach]
                } else {
                    [delta[0] / dist, delta[1] / dist]
                }
            }
            PolicySpec::Feedback { grid, directions } => {
                directions[i][grid.nearest_cell(&x[..problem.dim])]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√paths`.
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub paths: usize,
    pub seed: u64,
    /// Euler substep for the controlled motion.
    pub h_path: f64,
}

/// Generator for path `index`: the master seed selects the key, the index the stream.
fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    // 1 − U lies in (0, 1], so the logarithm is finite.
    let u: f64 = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

fn simulate_path(
    problem: &ControlProblem,
    policy: &PolicySpec,
    x0: &[f64],
    i0: usize,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let dim = problem.dim;
    let mut x = [0.0; 2];
    x[..dim].copy_from_slice(&x0[..dim]);
    let mut mode = i0;
    let mut t = 0.0;
    let mut cost = 0.0;
    let horizon = problem.horizon;
    while t < horizon {
        let rate = problem.exit_rate(mode);
        let t_switch = (t + exponential(rng, rate)).min(horizon);
        while t < t_switch {
            // A resting trajectory accrues cost exactly in one step.
            let step = if matches!(policy, PolicySpec::Zero) {
                t_switch - t
            } else {
                h.min(t_switch - t)
            };
            let speed = problem.sigma[mode].eval(&x[..dim]);
            cost += problem.costs[mode].eval(&x[..dim]) * step;
            let a = policy.control(problem, &x, mode, speed * step);
            for k in 0..dim {
                x[k] = (x[k] + step * speed * a[k]).rem_euclid(problem.period);
            }
            t += step;
        }
        t = t_switch;
        if t < horizon {
            let mut pick = rng.random::<f64>() * rate;
            let mut next = mode;
            for j in (0..problem.m).filter(|&j| j != mode) {
                next = j;
                pick -= problem.gamma[(mode, j)];
                if pick < 0.0 {
                    break;
                }
            }
            mode = next;
        }
    }
    cost + problem.terminal[mode].eval(&x[..dim])
}

/// Monte Carlo cost of `policy` from `(x0, i0)` over the horizon.
pub fn simulate_pdmp(
    problem: &ControlProblem,
    policy: &PolicySpec,
    x0: &[f64],
    i0: usize,
    options: &McOptions,
) -> Result<McEstimate> {
    if i0 >= problem.m {
        return Err(Error::IndexOutOfRange {
            index: i0,
            m: problem.m,
        });
    }
    if x0.len() != problem.dim {
        return Err(Error::DimensionMismatch(format!(
            "start point has {} coordinates",
            x0.len()
        )));
    }
    if options.paths == 0 || !(options.h_path > 0.0) {
        return Err(Error::PreconditionFailed(
            "need at least one path and a positive substep".into(),
        ));
    }
    policy.validate(problem)?;
    let costs: Vec<f64> = (0..options.paths)
        .into_par_iter()
        .map(|k| {
            simulate_path(
                problem,
                policy,
                x0,
                i0,
                options.h_path,
                &mut path_rng(options.seed, k),
            )
        })
        .collect();
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = if costs.len() > 1 {
        costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        paths: options.paths,
        seed: options.seed,
    })
}

/// Candidate controls: `{0, ±e}` in one dimension, 16 unit vectors and 0 in two.
pub fn direction_set(dim: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        vec![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]]
    } else {
        let mut out = vec![[0.0, 0.0]];
        out.extend((0..DIRECTIONS_2D).map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / DIRECTIONS_2D as f64;
            [a.cos(), a.sin()]
        }));
        out
    }
}

/// Periodic linear (bilinear in 2-D) interpolation of nodal values.
pub fn interpolate(grid: &TorusGrid, u: &[f64], x: &[f64]) -> f64 {
    let locate = |v: f64| {
        let s = v.rem_euclid(grid.period) / grid.dx;
        let k = s.floor();
        let w = s - k;
        let k = (k as usize) % grid.n;
        (k, (k + 1) % grid.n, w)
    };
    let (i0, i1, wx) = locate(x[0]);
    if grid.dim == 1 {
        return (1.0 - wx) * u[i0] + wx * u[i1];
    }
    let (j0, j1, wy) = locate(x[1]);
    let at = |i: usize, j: usize| u[grid.index(i, j)];
    (1.0 - wy) * ((1.0 - wx) * at(i0, j0) + wx * at(i1, j0))
        + wy * ((1.0 - wx) * at(i0, j1) + wx * at(i1, j1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpValue {
    /// Step actually used (`horizon / steps ≤` the requested one).
    pub dt: f64,
    pub steps: usize,
    /// Layers at control times `t = n·dt` (field `t` holds `n·dt`), ordered
    /// from `t = 0`; the last is the terminal data.
    pub layers: Vec<VectorGridField>,
}

impl DpValue {
    pub fn at_start(&self) -> &VectorGridField {
        &self.layers[0]
    }
}

/// Backward semi-Lagrangian recursion; keeps every `keep_every`-th layer plus
/// the first and last.
pub fn dp_value(
    problem: &ControlProblem,
    grid: &TorusGrid,
    dt: f64,
    keep_every: usize,
) -> Result<DpValue> {
    if grid.dim != problem.dim || (grid.period - problem.period).abs() > 1e-12 * problem.period {
        return Err(Error::DimensionMismatch(
            "grid does not match the control problem".into(),
        ));
    }
    let steps = (problem.horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = problem.horizon / steps as f64;
    let cells = grid.cells();
    let dim = grid.dim;
    let points: Vec<[f64; 2]> = (0..cells).map(|c| grid.point(c)).collect();
    let sample = |fs: &[ScalarFn]| -> Vec<Vec<f64>> {
        fs.iter()
            .map(|f| points.iter().map(|x| f.eval(&x[..dim])).collect())
            .collect()
    };
    let sigma = sample(&problem.sigma);
    let costs = sample(&problem.costs);
    let max_rate = (0..problem.m)
        .map(|i| problem.exit_rate(i))
        .fold(0.0, f64::max);
    if dt * max_rate > 1.0 {
        return Err(Error::StabilityViolated(format!(
            "dt·max exit rate = {} > 1",
            dt * max_rate
        )));
    }
    let max_sigma = sigma.iter().flatten().copied().fold(0.0, f64::max);
    if dt * max_sigma > grid.dx * (1.0 + 1e-12) {
        return Err(Error::StabilityViolated(format!(
            "dt·max σ = {} exceeds one cell ({})",
            dt * max_sigma,
            grid.dx
        )));
    }
    let dirs = direction_set(dim);
    let keep_every = keep_every.max(1);

    let mut next = VectorGridField::from_components(sample(&problem.terminal), problem.horizon)?;
    let mut kept = vec![next.clone()];
    for n in (0..steps).rev() {
        let values: Vec<Vec<f64>> = (0..problem.m)
            .map(|i| {
                let stay = 1.0 - dt * problem.exit_rate(i);
                (0..cells)
                    .into_par_iter()
                    .with_min_len(PAR_MIN_CELLS)
                    .map(|c| {
                        let x = &points[c];
                        let reach = dt * sigma[i][c];
                        let best = dirs
                            .iter()
                            .map(|a| {
                                let foot = [x[0] + reach * a[0], x[1] + reach * a[1]];
                                interpolate(grid, &next.values[i], &foot[..dim])
                            })
                            .fold(f64::INFINITY, f64::min);
                        let jumps: f64 = (0..problem.m)
                            .filter(|&j| j != i)
                            .map(|j| problem.gamma[(i, j)] * next.values[j][c])
                            .sum();
                        stay * (dt * costs[i][c] + best) + dt * jumps
                    })
                    .collect()
            })
            .collect();
        next = VectorGridField {
            m: problem.m,
            values,
            t: n as f64 * dt,
        };
        if n == 0 || n % keep_every == 0 {
            kept.push(next.clone());
        }
    }
    kept.reverse();
    Ok(DpValue {
        dt,
        steps,
        layers: kept,
    })
}

/// Minimizing direction of `min_a u(x + dt·σ·a)` per mode and cell.
pub fn feedback_from_layer(
    problem: &ControlProblem,
    grid: &TorusGrid,
    layer: &VectorGridField,
    dt: f64,
) -> PolicySpec {
    let dirs = direction_set(grid.dim);
    let dim = grid.dim;
    let directions = (0..problem.m)
        .map(|i| {
            (0..grid.cells())
                .map(|c| {
                    let x = grid.point(c);
                    let reach = dt * problem.sigma[i].eval(&x[..dim]);
                    *dirs
                        .iter()
                        .min_by(|a, b| {
                            let va = interpolate(
                                grid,
                                &layer.values[i],
                                &[x[0] + reach * a[0], x[1] + reach * a[1]][..dim],
                            );
                            let vb = interpolate(
                                grid,
                                &layer.values[i],
                                &[x[0] + reach * b[0], x[1] + reach * b[1]][..dim],
                            );
                            va.total_cmp(&vb)
                        })
                        .expect("nonempty direction set")
                })
                .collect()
        })
        .collect();
    PolicySpec::Feedback {
        grid: *grid,
        directions,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// `sup_x |u_dp − u_pde|` per mode, maximized over the compared times.
    pub per_mode: Vec<f64>,
    pub max: f64,
    /// PDE times at which both solutions were compared.
    pub times: Vec<f64>,
}

/// Number of equally spaced comparison times in [`cross_validate`].
const XVAL_POINTS: usize = 10;

/// Compares the dynamic programming value with the evolutive solve of the
/// induced system; control time `s` matches PDE time `T − s`.
pub fn cross_validate(
    problem: &ControlProblem,
    grid: &TorusGrid,
    dt: f64,
) -> Result<CrossValidation> {
    let horizon = problem.horizon;
    let blocks = ((horizon / dt) / XVAL_POINTS as f64 - 1e-9).ceil().max(1.0) as usize;
    let steps = blocks * XVAL_POINTS;
    let dp = dp_value(problem, grid, horizon / steps as f64, blocks)?;

    let induced = problem.induced_problem()?;
    let disc = Discretization::new(&induced, *grid)?;
    let u0 = VectorGridField::from_fns(grid, &induced.initial_data);
    let params = SchemeParams::auto(&disc, &u0, NumericalFlux::LaxFriedrichs, 0.9)?;
    let opts = SolveOptions::new(horizon, horizon / XVAL_POINTS as f64)
        .with_snapshots(SnapshotPolicy::All);
    let log = solve_until(&disc, &u0, &params, &opts, &mut [])?;

    let mut per_mode = vec![0.0_f64; problem.m];
    let mut times = Vec::new();
    for (k, pde) in log.snapshots.iter().enumerate() {
        let layer = &dp.layers[dp.layers.len() - 1 - k];
        for (i, slot) in per_mode.iter_mut().enumerate() {
            *slot = slot.max(
                layer.values[i]
                    .iter()
                    .zip(&pde.values[i])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
        times.push(pde.t);
    }
    let max = per_mode.iter().copied().fold(0.0, f64::max);
    Ok(CrossValidation {
        per_mode,
        max,
        times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::matrix_from_rows;
    use std::f64::consts::PI;

    fn markov_cost_problem() -> ControlProblem {
        ControlProblem::new(
            1,
            1.0,
            vec![ScalarFn::constant(1.0); 2],
            vec![ScalarFn::constant(0.0), ScalarFn::constant(1.0)],
            matrix_from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            1.0,
            vec![ScalarFn::constant(0.0); 2],
        )
        .unwrap()
    }

    fn markov_oracle() -> f64 {
        0.25 + (-2.0f64).exp() / 4.0
    }

    #[test]
    fn zero_policy_matches_markov_integral() {
        let p = markov_cost_problem();
        let opts = McOptions {
            paths: 20_000,
            seed: 7,
            h_path: 0.01,
        };
        let est = simulate_pdmp(&p, &PolicySpec::Zero, &[0.3], 0, &opts).unwrap();
        assert!(
            (est.mean - markov_oracle()).abs() <= 3.0 * est.std_error,
            "{est:?}"
        );
        let again = simulate_pdmp(&p, &PolicySpec::Zero, &[0.3], 0, &opts).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn constant_terminal_without_cost_is_exact() {
        let p = ControlProblem::new(
            1,
            1.0,
            vec![ScalarFn::constant(1.0); 2],
            vec![ScalarFn::constant(0.0); 2],
            matrix_from_rows(&[vec![0.0, 2.0], vec![0.5, 0.0]]).unwrap(),
            1.5,
            vec![ScalarFn::constant(4.0); 2],
        )
        .unwrap();
        let est = simulate_pdmp(
            &p,
            &PolicySpec::TowardPoint { target: vec![0.5] },
            &[0.1],
            1,
            &McOptions {
                paths: 500,
                seed: 1,
                h_path: 0.01,
            },
        )
        .unwrap();
        assert_eq!(est.mean, 4.0);
        assert_eq!(est.std_error, 0.0);
        let g = TorusGrid::new(1, 16, 1.0).unwrap();
        let dp = dp_value(&p, &g, 0.05, 1).unwrap();
        assert!(dp
            .layers
            .iter()
            .flat_map(|l| l.values.iter().flatten())
            .all(|v| (*v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn deterministic_path_without_switching() {
        let p = ControlProblem::new(
            1,
            1.0,
            vec![ScalarFn::constant(1.0)],
            vec![ScalarFn::new("x", |x| x[0])],
            matrix_from_rows(&[vec![0.0]]).unwrap(),
            0.5,
            vec![ScalarFn::constant(0.0)],
        )
        .unwrap();
        let policy = PolicySpec::TowardPoint { target: vec![0.0] };
        let opts = McOptions {
            paths: 3,
            seed: 99,
            h_path: 0.01,
        };
        let a = simulate_pdmp(&p, &policy, &[0.2], 0, &opts).unwrap();
        let b = simulate_pdmp(
            &p,
            &policy,
            &[0.2],
            0,
            &McOptions {
                seed: 5,
                ..opts.clone()
            },
        )
        .unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert!(a.std_error <= 1e-15);
    }

    #[test]
    fn dp_reproduces_markov_cost() {
        let p = markov_cost_problem();
        let g = TorusGrid::new(1, 16, 1.0).unwrap();
        let dp = dp_value(&p, &g, 1e-3, 1000).unwrap();
        let v = dp.at_start().values[0][5];
        assert!((v - markov_oracle()).abs() < 2e-2, "{v}");
    }

    #[test]
    fn stability_preconditions() {
        let p = markov_cost_problem();
        let g = TorusGrid::new(1, 16, 1.0).unwrap();
        assert!(matches!(
            dp_value(&p, &g, 0.5, 1),
            Err(Error::StabilityViolated(_))
        ));
    }

    #[test]
    fn dp_is_monotone_in_terminal_data() {
        let mk = |bump: f64| {
            ControlProblem::new(
                1,
                1.0,
                vec![ScalarFn::constant(1.0); 2],
                vec![ScalarFn::new("w", |x| 1.0 - (2.0 * PI * x[0]).cos()); 2],
                matrix_from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap(),
                0.5,
                vec![
                    ScalarFn::new("s", |x| (2.0 * PI * x[0]).sin()),
                    ScalarFn::new("b", move |x| if x[0] < 0.3 { bump } else { 0.0 }),
                ],
            )
            .unwrap()
        };
        let g = TorusGrid::new(1, 32, 1.0).unwrap();
        let lo = dp_value(&mk(0.0), &g, 1.0 / 64.0, 1000).unwrap();
        let hi = dp_value(&mk(0.5), &g, 1.0 / 64.0, 1000).unwrap();
        assert!(hi.at_start().max_difference(lo.at_start()) >= 0.0);
        assert!(lo.at_start().max_difference(hi.at_start()) <= 0.0);
    }

    #[test]
    fn permuting_modes_permutes_values() {
        let p = ControlProblem::new(
            1,
            1.0,
            vec![ScalarFn::constant(1.0), ScalarFn::constant(0.5)],
            vec![
                ScalarFn::new("w", |x| 1.0 - (2.0 * PI * x[0]).cos()),
                ScalarFn::constant(0.3),
            ],
            matrix_from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap(),
            0.5,
            vec![
                ScalarFn::new("s", |x| (2.0 * PI * x[0]).sin()),
                ScalarFn::constant(0.1),
            ],
        )
        .unwrap();
        let q = p.permuted(&[1, 0]).unwrap();
        let g = TorusGrid::new(1, 32, 1.0).unwrap();
        let a = dp_value(&p, &g, 1.0 / 64.0, 1000).unwrap();
        let b = dp_value(&q, &g, 1.0 / 64.0, 1000).unwrap();
        assert_eq!(a.at_start().values[0], b.at_start().values[1]);
        assert_eq!(a.at_start().values[1], b.at_start().values[0]);
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_between() {
        let g = TorusGrid::new(2, 8, 1.0).unwrap();
        let u: Vec<f64> = (0..64).map(|c| c as f64).collect();
        assert_eq!(
            interpolate(&g, &u, &[3.0 * g.dx, 2.0 * g.dx]),
            u[g.index(3, 2)]
        );
        let mid = interpolate(&g, &u, &[3.5 * g.dx, 2.0 * g.dx]);
        assert!((mid - 0.5 * (u[g.index(3, 2)] + u[g.index(4, 2)])).abs() < 1e-12);
        assert_eq!(direction_set(2).len(), 17);
    }

    #[test]
    fn induced_coupling_has_zero_row_sums() {
        let p = markov_cost_problem();
        let d = p.induced_coupling();
        assert_eq!(
            d,
            matrix_from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
        );
    }

    #[test]
    fn trivial_cross_validation() {
        let p = ControlProblem::new(
            1,
            1.0,
            vec![ScalarFn::constant(1.0); 2],
            vec![ScalarFn::constant(0.0); 2],
            matrix_from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            1.0,
            vec![ScalarFn::constant(2.0); 2],
        )
        .unwrap();
        let g = TorusGrid::new(1, 32, 1.0).unwrap();
        let xv = cross_validate(&p, &g, 1.0 / 32.0).unwrap();
        assert!(xv.max <= 1e-12);
        assert_eq!(xv.times.len(), XVAL_POINTS + 1);
    }
}
