//! Reference scenarios with hard assertions against known values.

use std::f64::consts::PI;

use hjsys_core::control::{
    cross_validate, dp_value, simulate_pdmp, ControlProblem, McOptions, PolicySpec,
};
use hjsys_core::coupling::matrix_from_rows;
use hjsys_core::ergodic::{solve_discounted, DiscountOptions};
use hjsys_core::grid::{Discretization, TorusGrid};
use hjsys_core::longtime::Verdict;
use hjsys_core::model::ScalarFn;
use serde_json::json;

use crate::commands::{self, ODE_TOL, RESIDUAL_TOL};
use crate::report::{Artifacts, Report};
use crate::scenario::{Overrides, Scenario, ScenarioFile};
use crate::{CliError, Context, Result};

pub const NAMES: [&str; 5] = ["ex49", "ex56", "scalar-nr", "two-well", "control-xval"];

/// Bundled scenario file for a gallery name.
pub fn scenario_json(name: &str) -> Result<&'static str> {
    Ok(match name {
        "ex49" => include_str!("../scenarios/ex49.json"),
        "ex56" => include_str!("../scenarios/ex56.json"),
        "scalar-nr" => include_str!("../scenarios/scalar_nr.json"),
        "two-well" => include_str!("../scenarios/two_well.json"),
        "control-xval" => include_str!("../scenarios/control_xval.json"),
        other => return Err(CliError::UnknownGallery(other.into())),
    })
}

pub fn scenario(name: &str, overrides: &Overrides) -> Result<Scenario> {
    let mut file = ScenarioFile::parse(scenario_json(name)?)?;
    overrides.apply(&mut file);
    Scenario::build(file)
}

/// Runs a gallery scenario and writes its report.
pub fn run_gallery(name: &str, overrides: &Overrides, art: &Artifacts) -> Result<Report> {
    let s = scenario(name, overrides)?;
    let mut report = match name {
        "ex49" => ex49(&s, art)?,
        "ex56" => ex56(&s, art)?,
        "scalar-nr" => scalar_nr(&s, art)?,
        "two-well" => two_well(&s, art)?,
        "control-xval" => control_xval(&s, art)?,
        other => return Err(CliError::UnknownGallery(other.into())),
    };
    report.command = format!("gallery {name}");
    art.report(&report)?;
    Ok(report)
}

fn ex49(s: &Scenario, art: &Artifacts) -> Result<Report> {
    let (mut report, result) = commands::ergodic(s, art)?;
    let c_err = result
        .c_estimate
        .iter()
        .map(|c| (c + 2.0).abs())
        .fold(0.0, f64::max);
    report.assert_le("c_error", c_err, 1e-3);
    let w = &result.corrector;
    let gap_err = w.values[0]
        .iter()
        .zip(&w.values[1])
        .map(|(a, b)| (a - b + 1.0).abs())
        .fold(0.0, f64::max);
    report.assert_le("corrector_gap_error", gap_err, 1e-3);

    // (λI + D) v = f with f = (1, 3), λ = 0.1.
    let disc = Discretization::new(&s.problem, s.grid).context(|| "ex49".into())?;
    let lambda = 0.1;
    let sol = solve_discounted(
        &disc,
        lambda,
        &DiscountOptions {
            tol: 1e-10,
            ..Default::default()
        },
        None,
    )
    .context(|| "ex49 discounted solve".into())?;
    let det = (lambda + 1.0) * (lambda + 1.0) - 1.0;
    let exact = [
        ((lambda + 1.0) + 3.0) / det,
        (3.0 * (lambda + 1.0) + 1.0) / det,
    ];
    let err = (0..2)
        .map(|i| {
            sol.field.values[i]
                .iter()
                .map(|v| (v - exact[i]).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    report.set("discounted", json!({ "lambda": lambda, "exact": exact, "value": [sol.field.values[0][0], sol.field.values[1][0]] }));
    report.assert_le("discounted_error", err, 1e-5);
    Ok(report)
}

fn ex56(s: &Scenario, art: &Artifacts) -> Result<Report> {
    let (mut report, out) = commands::longtime(s, art)?;
    report.assert_that(
        "non_convergent",
        out.convergence.verdict == Verdict::NonConvergent,
    );
    report.assert_ge("trailing_oscillation", out.convergence.oscillation, 0.8);
    // Both components travel as sin(x − t).
    let grid = s.grid;
    let mut err: f64 = 0.0;
    for f in out.log.snapshots.iter().filter(|f| f.t <= 1.0 + 1e-9) {
        for u in &f.values {
            for (c, v) in u.iter().enumerate() {
                err = err.max((v - (grid.point(c)[0] - f.t).sin()).abs());
            }
        }
    }
    report.assert_le("traveling_wave_error", err, 5e-2);
    Ok(report)
}

/// `min(x − sin(2πx)/2π, 1 − x + sin(2πx)/2π)`.
pub fn scalar_branch_solution(x: f64) -> f64 {
    let s = (2.0 * PI * x).sin() / (2.0 * PI);
    (x - s).min(1.0 - x + s)
}

fn scalar_nr(s: &Scenario, art: &Artifacts) -> Result<Report> {
    let (mut report, out) = commands::longtime(s, art)?;
    report.assert_that("converged", out.convergence.verdict == Verdict::Converged);
    let grid = s.grid;
    match &out.convergence.u_infinity {
        Some(u) => {
            let err = u.values[0]
                .iter()
                .enumerate()
                .map(|(c, v)| (v - scalar_branch_solution(grid.point(c)[0])).abs())
                .fold(0.0, f64::max);
            report.assert_le("branch_solution_error", err, 5e-2);
            let half =
                u.values[0][grid.nearest_cell(&[0.5])] - u.values[0][grid.nearest_cell(&[0.0])];
            report.set("u_infinity_half_minus_zero", half);
            report.assert_le("half_period_gap_error", (half - 0.5).abs(), 5e-2);
        }
        None => {
            report.assert_that("u_infinity_available", false);
        }
    }
    Ok(report)
}

/// Turns the longtime diagnostics into hard assertions.
pub fn assert_two_well(report: &mut Report, out: &commands::LongtimeOutput, mono_tol: f64) {
    report.assert_that("converged", out.convergence.verdict == Verdict::Converged);
    match &out.lambda_trace {
        Some(t) => report.assert_le("lambda_functional_increase", t.worst_increase, mono_tol),
        None => report.assert_that("lambda_functional_available", false),
    };
    match &out.max_trace {
        Some(t) => report.assert_le("max_functional_increase", t.worst_increase, mono_tol),
        None => report.assert_that("max_functional_available", false),
    };
    match (out.convergence.equality_on_a, out.convergence.equality_tol) {
        (Some(eq), Some(tol)) => report.assert_le("equality_on_a", eq, tol),
        _ => report.assert_that("equality_on_a_available", false),
    };
    match &out.convergence.stationarity_residual {
        Some(r) => report.assert_le(
            "stationarity_residual",
            r.iter().copied().fold(0.0, f64::max),
            RESIDUAL_TOL,
        ),
        None => report.assert_that("stationarity_residual_available", false),
    };
    match &out.ode {
        Some(r) => report.assert_le("aubry_ode_deviation", r.deviation, ODE_TOL),
        None => report.assert_that("aubry_ode_available", false),
    };
}

fn two_well(s: &Scenario, art: &Artifacts) -> Result<Report> {
    let (mut report, out) = commands::longtime(s, art)?;
    assert_two_well(&mut report, &out, s.file.run.mono_tol);
    Ok(report)
}

/// Zero dynamics, costs 0 and 1, unit switching rates, horizon 1.
pub fn markov_cost_problem() -> ControlProblem {
    ControlProblem::new(
        1,
        1.0,
        vec![ScalarFn::constant(1.0); 2],
        vec![ScalarFn::constant(0.0), ScalarFn::constant(1.0)],
        matrix_from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).expect("2×2"),
        1.0,
        vec![ScalarFn::constant(0.0); 2],
    )
    .expect("valid control problem")
}

/// `∫_0^1 P(mode 2 at t) dt = 1/4 + e^{−2}/4` starting in mode 1.
pub fn markov_cost() -> f64 {
    0.25 + (-2.0f64).exp() / 4.0
}

fn control_xval(s: &Scenario, art: &Artifacts) -> Result<Report> {
    let (mut report, out) = commands::control(s, art)?;
    report.assert_le("dp_pde_discrepancy", out.cross_validation.max, 0.1);

    let setup = s.control.as_ref().expect("control scenario");
    let fine = TorusGrid::new(1, 2 * s.grid.n, s.grid.period).context(|| "refined grid".into())?;
    let refined = cross_validate(
        &setup.problem,
        &fine,
        commands::default_dt(&setup.problem, &fine),
    )
    .context(|| "refined cross validation".into())?;
    let ratio = refined.max / out.cross_validation.max;
    report.set(
        "refinement",
        json!({ "n": fine.n, "discrepancy": refined.max, "ratio": ratio }),
    );
    report.assert_le("refinement_ratio", ratio, 0.65);

    let markov = markov_cost_problem();
    let exact = markov_cost();
    let mc = simulate_pdmp(
        &markov,
        &PolicySpec::Zero,
        &[0.0],
        0,
        &McOptions {
            paths: 100_000,
            seed: setup.seed,
            h_path: 1e-2,
        },
    )
    .context(|| "Markov cost Monte Carlo".into())?;
    let g = TorusGrid::new(1, 16, 1.0).context(|| "Markov grid".into())?;
    let dp = dp_value(&markov, &g, 1e-3, usize::MAX).context(|| "Markov cost DP".into())?;
    let dp_start = dp.at_start().values[0][0];
    report.set(
        "markov_cost",
        json!({ "exact": exact, "monte_carlo": mc, "dp": dp_start }),
    );
    report.assert_le(
        "markov_mc_error",
        (mc.mean - exact).abs(),
        3.0 * mc.std_error,
    );
    report.assert_le("markov_dp_error", (dp_start - exact).abs(), 2e-2);
    Ok(report)
}
