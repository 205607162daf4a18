use std::f64::consts::PI;

use hjsys_core::coupling::{matrix_from_rows, CouplingField};
use hjsys_core::evolutive::{solve_until, step, EvolutionState, SnapshotPolicy, SolveOptions};
use hjsys_core::grid::{Discretization, NumericalFlux, SchemeParams, VectorGridField};
use hjsys_core::model::{HamiltonianKind, HamiltonianSpec, ModelProblem, ScalarFn};
use proptest::prelude::*;

const N: usize = 64;

fn problem() -> ModelProblem {
    ModelProblem::new(
        1,
        1.0,
        vec![
            HamiltonianSpec::eikonal(
                ScalarFn::new("1+0.5sin", |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin()),
                ScalarFn::new("1-cos", |x| 1.0 - (2.0 * PI * x[0]).cos()),
            ),
            HamiltonianSpec::new(
                HamiltonianKind::Quadratic {
                    sigma: ScalarFn::constant(1.0),
                },
                ScalarFn::new("cos²", |x| (2.0 * PI * x[0]).cos().powi(2)),
            ),
        ],
        CouplingField::constant(matrix_from_rows(&[vec![2.0, -1.0], vec![-0.5, 1.0]]).unwrap())
            .unwrap(),
        vec![ScalarFn::constant(0.0); 2],
    )
    .unwrap()
}

/// Trigonometric data with at most three modes per component.
fn smooth_field() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-0.5..0.5f64, 6), 2).prop_map(|coef| {
        coef.iter()
            .map(|a| {
                (0..N)
                    .map(|c| {
                        let x = c as f64 / N as f64;
                        (1..=3)
                            .map(|k| {
                                a[2 * k - 2] * (2.0 * PI * k as f64 * x).cos()
                                    + a[2 * k - 1] * (2.0 * PI * k as f64 * x).sin()
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    })
}

fn bump() -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(0.0..0.3f64, N), 2)
}

/// θ sized for the largest gradient the data can reach, kept fixed across pairs.
fn shared_params(disc: &Discretization<'_>) -> SchemeParams {
    let steep = VectorGridField::from_components(
        (0..2)
            .map(|_| {
                (0..N)
                    .map(|c| 8.0 * (2.0 * PI * c as f64 / N as f64).sin())
                    .collect()
            })
            .collect(),
        0.0,
    )
    .unwrap();
    SchemeParams::auto(disc, &steep, NumericalFlux::LaxFriedrichs, 0.9).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ordered_data_stay_ordered(base in smooth_field(), gap in bump()) {
        let problem = problem();
        let disc = Discretization::new(&problem, problem.grid(N).unwrap()).unwrap();
        let params = shared_params(&disc);
        let u = VectorGridField::from_components(base.clone(), 0.0).unwrap();
        let shifted = base.iter().zip(&gap).map(|(b, g)| b.iter().zip(g).map(|(x, y)| x + y).collect()).collect();
        let v = VectorGridField::from_components(shifted, 0.0).unwrap();
        let opts = SolveOptions::new(1.0, 0.1).with_snapshots(SnapshotPolicy::All).fixed_theta();
        let lu = solve_until(&disc, &u, &params, &opts, &mut []).unwrap();
        let lv = solve_until(&disc, &v, &params, &opts, &mut []).unwrap();
        let mut last = u.max_difference(&v).max(v.max_difference(&u));
        for (a, b) in lu.snapshots.iter().zip(&lv.snapshots) {
            prop_assert!(a.max_difference(b) <= 1e-12);
            let spread = b.max_difference(a);
            prop_assert!(spread <= last + 1e-12);
            last = spread;
        }
    }

    #[test]
    fn step_is_monotone_in_every_value(base in smooth_field(), comp in 0usize..2, cell in 0usize..N, h in 0.0..0.5f64) {
        let problem = problem();
        let disc = Discretization::new(&problem, problem.grid(N).unwrap()).unwrap();
        let params = shared_params(&disc);
        let u = VectorGridField::from_components(base, 0.0).unwrap();
        let mut w = u.clone();
        w.values[comp][cell] += h;
        let su = step(&disc, &EvolutionState::new(u), &params).unwrap();
        let sw = step(&disc, &EvolutionState::new(w), &params).unwrap();
        prop_assert!(su.field.max_difference(&sw.field) <= 1e-12);
        // Nonexpansive in the sup norm.
        prop_assert!(sw.field.max_difference(&su.field) <= h + 1e-12);
    }
}
