//! Explicit Euler marching of the evolutive system with the monotone scheme.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::grid::{Discretization, SchemeParams, VectorGridField};
use crate::{Error, Result};

/// Relative slack allowed on the CFL bound before a step is rejected.
const CFL_SLACK: f64 = 1e-12;
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub field: VectorGridField,
    pub t: f64,
    pub step_count: u64,
}

impl EvolutionState {
    pub fn new(field: VectorGridField) -> Self {
        let t = field.t;
        Self {
            field,
            t,
            step_count: 0,
        }
    }
}

/// One step with `params.dt`.
pub fn step(
    disc: &Discretization<'_>,
    state: &EvolutionState,
    params: &SchemeParams,
) -> Result<EvolutionState> {
    step_with_dt(disc, state, params, params.dt)
}

/// One step of length `dt ≤ params.dt`-style CFL bound:
/// `u_i ← u_i − dt·(Ĥ_i(x, Du_i) + Σ_j d_ij u_j)`.
pub fn step_with_dt(
    disc: &Discretization<'_>,
    state: &EvolutionState,
    params: &SchemeParams,
    dt: f64,
) -> Result<EvolutionState> {
    let bound = params.max_stable_dt(disc.problem(), disc.grid())?;
    if !(dt > 0.0) || dt > bound * (1.0 + CFL_SLACK) {
        return Err(Error::CflViolated { dt, bound });
    }
    let op = disc.operator(&state.field, params);
    let values: Vec<Vec<f64>> = state
        .field
        .values
        .iter()
        .zip(&op)
        .map(|(u, h)| u.iter().zip(h).map(|(a, b)| a - dt * b).collect())
        .collect();
    let t = state.t + dt;
    let field = VectorGridField {
        m: state.field.m,
        values,
        t,
    };
    if !field.is_finite() {
        return Err(Error::NonFiniteValue {
            t,
            norm: field.sup_norm(),
        });
    }
    Ok(EvolutionState {
        field,
        t,
        step_count: state.step_count + 1,
    })
}

/// Per-equation `sup_x |Ĥ_i + Σ_j d_ij u_j|`, the steady-state residual.
pub fn residual(
    disc: &Discretization<'_>,
    field: &VectorGridField,
    params: &SchemeParams,
) -> Vec<f64> {
    disc.operator(field, params)
        .iter()
        .map(|r| r.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
        .collect()
}

/// Diagnostics recorded at a sample time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub sup: Vec<f64>,
    pub inf: Vec<f64>,
    pub lipschitz: Vec<f64>,
    pub residual: Vec<f64>,
}

impl Sample {
    fn measure(disc: &Discretization<'_>, field: &VectorGridField, params: &SchemeParams) -> Self {
        let sup = field
            .values
            .iter()
            .map(|u| u.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let inf = field
            .values
            .iter()
            .map(|u| u.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        Self {
            t: field.t,
            sup,
            inf,
            lipschitz: field.lipschitz_by_component(disc.grid()),
            residual: residual(disc, field, params),
        }
    }

    /// `max_i ‖u_i‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.sup
            .iter()
            .chain(&self.inf)
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Which full fields a run keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotPolicy {
    #[default]
    None,
    /// Every sample.
    All,
    /// Samples no older than the given time span behind the latest one.
    Trailing(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub horizon: f64,
    pub sample_every: f64,
    pub snapshots: SnapshotPolicy,
    /// Re-estimate θ at every sample (θ only ever grows).
    pub adapt_theta: bool,
}

impl SolveOptions {
    pub fn new(horizon: f64, sample_every: f64) -> Self {
        Self {
            horizon,
            sample_every,
            snapshots: SnapshotPolicy::None,
            adapt_theta: true,
        }
    }

    pub fn with_snapshots(mut self, policy: SnapshotPolicy) -> Self {
        self.snapshots = policy;
        self
    }

    pub fn fixed_theta(mut self) -> Self {
        self.adapt_theta = false;
        self
    }
}

/// Receives the state and diagnostics at every sample time, including `t = 0`.
pub trait Observer {
    fn observe(&mut self, state: &EvolutionState, sample: &Sample) -> Result<()>;
}

impl<F: FnMut(&EvolutionState, &Sample) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &EvolutionState, sample: &Sample) -> Result<()> {
        self(state, sample)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    pub snapshots: VecDeque<VectorGridField>,
    pub final_state: EvolutionState,
    /// Scheme parameters in force at the end of the run.
    pub params: SchemeParams,
}

impl TrajectoryLog {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn final_field(&self) -> &VectorGridField {
        &self.final_state.field
    }

    /// Sample times covered by the retained snapshots.
    pub fn snapshot_span(&self) -> f64 {
        match (self.snapshots.front(), self.snapshots.back()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Marches from `u0` to `options.horizon`, landing exactly on every multiple
/// of `sample_every` and on the horizon.
pub fn solve_until(
    disc: &Discretization<'_>,
    u0: &VectorGridField,
    params: &SchemeParams,
    options: &SolveOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryLog> {
    if !(options.horizon > 0.0) {
        return Err(Error::PreconditionFailed(format!(
            "horizon {} must be positive",
            options.horizon
        )));
    }
    if !(options.sample_every > 0.0) {
        return Err(Error::PreconditionFailed(format!(
            "sample interval {} must be positive",
            options.sample_every
        )));
    }
    if u0.m != disc.problem().m || u0.cells() != disc.grid().cells() {
        return Err(Error::DimensionMismatch(format!(
            "initial field has m = {}, {} cells; expected m = {}, {} cells",
            u0.m,
            u0.cells(),
            disc.problem().m,
            disc.grid().cells()
        )));
    }
    let mut params = params.clone();
    let guard = DIVERGENCE_FACTOR * (1.0 + u0.sup_norm());
    let t0 = u0.t;
    let t_end = t0 + options.horizon;
    let mut state = EvolutionState::new(u0.clone());
    let mut samples = Vec::new();
    let mut snapshots = VecDeque::new();

    let record = |state: &EvolutionState,
                  params: &SchemeParams,
                  samples: &mut Vec<Sample>,
                  snapshots: &mut VecDeque<VectorGridField>,
                  observers: &mut [&mut dyn Observer]|
     -> Result<()> {
        let sample = Sample::measure(disc, &state.field, params);
        for obs in observers.iter_mut() {
            obs.observe(state, &sample)?;
        }
        samples.push(sample);
        match options.snapshots {
            SnapshotPolicy::None => {}
            SnapshotPolicy::All => snapshots.push_back(state.field.clone()),
            SnapshotPolicy::Trailing(span) => {
                snapshots.push_back(state.field.clone());
                while snapshots
                    .front()
                    .is_some_and(|f: &VectorGridField| state.t - f.t > span + 1e-9)
                {
                    snapshots.pop_front();
                }
            }
        }
        Ok(())
    };

    record(&state, &params, &mut samples, &mut snapshots, observers)?;
    let n_samples = (options.horizon / options.sample_every - 1e-9)
        .ceil()
        .max(1.0) as u64;
    for k in 1..=n_samples {
        let target = (t0 + k as f64 * options.sample_every).min(t_end);
        while state.t < target {
            let remaining = target - state.t;
            // Absorb a sliver instead of taking a near-zero final step.
            let dt = if remaining <= params.dt * (1.0 + 1e-9) {
                remaining
            } else {
                params.dt
            };
            state = step_with_dt(disc, &state, &params, dt)?;
            if remaining <= params.dt * (1.0 + 1e-9) {
                state.t = target;
                state.field.t = target;
            }
            let norm = state.field.sup_norm();
            if norm > guard {
                return Err(Error::NonFiniteValue { t: state.t, norm });
            }
        }
        if options.adapt_theta {
            let est = crate::grid::estimate_thetas(disc, &state.field);
            params.raise_thetas(disc.problem(), disc.grid(), &est)?;
        }
        record(&state, &params, &mut samples, &mut snapshots, observers)?;
    }
    Ok(TrajectoryLog {
        samples,
        snapshots,
        final_state: state,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{matrix_from_rows, CouplingField};
    use crate::grid::{NumericalFlux, TorusGrid};
    use crate::model::{HamiltonianKind, HamiltonianSpec, ModelProblem, ScalarFn};
    use std::f64::consts::PI;

    fn two_eq(cost: ScalarFn, d: [[f64; 2]; 2]) -> ModelProblem {
        let rows = vec![d[0].to_vec(), d[1].to_vec()];
        ModelProblem::new(
            1,
            1.0,
            vec![
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), cost.clone()),
                HamiltonianSpec::eikonal(ScalarFn::constant(1.0), cost),
            ],
            CouplingField::constant(matrix_from_rows(&rows).unwrap()).unwrap(),
            vec![ScalarFn::constant(0.0), ScalarFn::constant(0.0)],
        )
        .unwrap()
    }

    fn params(thetas: Vec<f64>, dt: f64, flux: NumericalFlux) -> SchemeParams {
        SchemeParams {
            thetas,
            cfl_safety: 0.9,
            dt,
            flux,
        }
    }

    #[test]
    fn constants_are_stationary() {
        let p = two_eq(ScalarFn::constant(0.0), [[1.0, -1.0], [-1.0, 1.0]]);
        let g = TorusGrid::new(1, 32, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let mut u = VectorGridField::zeros(2, 32);
        u.add_constants(&[2.5, 2.5]);
        for flux in [NumericalFlux::LaxFriedrichs, NumericalFlux::Godunov] {
            let sp = SchemeParams::auto(&disc, &u, flux, 0.9).unwrap();
            let mut s = EvolutionState::new(u.clone());
            for _ in 0..50 {
                s = step(&disc, &s, &sp).unwrap();
            }
            assert_eq!(s.field.values, u.values);
            assert_eq!(s.step_count, 50);
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let p = two_eq(ScalarFn::constant(0.0), [[1.0, -1.0], [-1.0, 1.0]]);
        let g = TorusGrid::new(1, 32, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let s = EvolutionState::new(VectorGridField::zeros(2, 32));
        let sp = params(vec![1.0, 1.0], 1.0, NumericalFlux::LaxFriedrichs);
        assert!(matches!(
            step(&disc, &s, &sp),
            Err(Error::CflViolated { .. })
        ));
    }

    #[test]
    fn shifted_eikonal_one_step_transports() {
        let n = 1024;
        let period = 2.0 * PI;
        let shifted = || {
            HamiltonianSpec::new(
                HamiltonianKind::ShiftedEikonal { shift: vec![2.0] },
                ScalarFn::constant(2.0),
            )
        };
        let p = ModelProblem::new(
            1,
            period,
            vec![shifted(), shifted()],
            CouplingField::constant(matrix_from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap())
                .unwrap(),
            vec![
                ScalarFn::new("sin x", |x| x[0].sin()),
                ScalarFn::new("sin x", |x| x[0].sin()),
            ],
        )
        .unwrap();
        let g = p.grid(n).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let u0 = VectorGridField::from_fns(&g, &p.initial_data);
        for flux in [NumericalFlux::LaxFriedrichs, NumericalFlux::Godunov] {
            let sp = SchemeParams::auto(&disc, &u0, flux, 0.9).unwrap();
            let s = step(&disc, &EvolutionState::new(u0.clone()), &sp).unwrap();
            for c in 0..n {
                let exact = (g.point(c)[0] - sp.dt).sin();
                for i in 0..2 {
                    assert!((s.field.values[i][c] - exact).abs() <= 2.0 * g.dx);
                }
            }
        }
    }

    #[test]
    fn random_field_has_positive_residual() {
        let p = two_eq(
            ScalarFn::new("1-cos", |x| 1.0 - (2.0 * PI * x[0]).cos()),
            [[1.0, -1.0], [-1.0, 1.0]],
        );
        let g = TorusGrid::new(1, 64, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let u = VectorGridField::from_components(
            vec![
                (0..64).map(|c| ((c * 7919) % 13) as f64 * 0.01).collect(),
                vec![0.3; 64],
            ],
            0.0,
        )
        .unwrap();
        let sp = SchemeParams::auto(&disc, &u, NumericalFlux::LaxFriedrichs, 0.9).unwrap();
        assert!(residual(&disc, &u, &sp).iter().all(|r| *r > 0.0));
    }

    #[test]
    fn samples_land_on_cadence_and_horizon() {
        let p = two_eq(
            ScalarFn::new("1-cos", |x| 1.0 - (2.0 * PI * x[0]).cos()),
            [[1.0, -1.0], [-1.0, 1.0]],
        );
        let g = TorusGrid::new(1, 64, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let u0 = VectorGridField::zeros(2, 64);
        let sp = SchemeParams::auto(&disc, &u0, NumericalFlux::LaxFriedrichs, 0.9).unwrap();
        let mut seen = 0;
        let mut count = |_: &EvolutionState, _: &Sample| -> Result<()> {
            seen += 1;
            Ok(())
        };
        let opts = SolveOptions::new(1.05, 0.25).with_snapshots(SnapshotPolicy::Trailing(0.5));
        let log = solve_until(&disc, &u0, &sp, &opts, &mut [&mut count]).unwrap();
        assert_eq!(log.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.05]);
        assert_eq!(seen, 6);
        assert_eq!(log.final_state.t, 1.05);
        assert_eq!(log.snapshots.len(), 3);
        assert!(log.times().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn divergence_guard_fires_on_unbounded_growth() {
        let q = ScalarFn::constant(-1e8);
        let p = ModelProblem::new(
            1,
            1.0,
            vec![HamiltonianSpec::eikonal(ScalarFn::constant(1.0), q)],
            CouplingField::constant(matrix_from_rows(&[vec![0.0]]).unwrap()).unwrap(),
            vec![ScalarFn::constant(0.0)],
        )
        .unwrap();
        let g = TorusGrid::new(1, 8, 1.0).unwrap();
        let disc = Discretization::new(&p, g).unwrap();
        let u0 = VectorGridField::zeros(1, 8);
        let sp = SchemeParams::auto(&disc, &u0, NumericalFlux::LaxFriedrichs, 0.9).unwrap();
        let err = solve_until(&disc, &u0, &sp, &SolveOptions::new(1.0, 0.5), &mut []).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { .. }));
    }
}
