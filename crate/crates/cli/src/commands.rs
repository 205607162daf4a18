//! One function per subcommand. Each writes its artifacts and returns the
//! report together with the typed results the gallery checks against.

use hjsys_core::control::{
    cross_validate, dp_value, feedback_from_layer, interpolate, simulate_pdmp, ControlProblem,
    CrossValidation, McEstimate, McOptions, PolicySpec,
};
use hjsys_core::coupling::{
    analyze_field, check_monotone_coupling, exp_limit_projector, is_irreducible, m_decompose,
    nonzero_spectrum_check, EIGEN_TOL,
};
use hjsys_core::ergodic::{
    stationary_residual, vanishing_discount, DiscountOptions, ErgodicResult, VanishingOptions,
};
use hjsys_core::evolutive::{solve_until, SnapshotPolicy, SolveOptions, TrajectoryLog};
use hjsys_core::grid::{Discretization, SchemeParams, TorusGrid, VectorGridField};
use hjsys_core::io::{ergodic_trace_csv, field_csv, functional_csv, trajectory_csv};
use hjsys_core::longtime::{
    aubry_ode_check, default_osc_tol, detect_convergence, monitor_lambda_functional,
    monitor_max_functional, oscillation_series, AubryOdeReport, ConvergenceReport, FunctionalTrace,
};
use hjsys_core::model::compute_sets;
use serde_json::json;

use crate::report::{Artifacts, Report};
use crate::scenario::{CommandName, PolicyEntry, Scenario};
use crate::{CliError, Context, Result};

/// Tolerance used for the diagnostic ODE comparison on A.
pub const ODE_TOL: f64 = 5e-2;
/// Tolerance used for the diagnostic stationarity residual.
pub const RESIDUAL_TOL: f64 = 5e-2;

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::AnalyzeCoupling => "analyze-coupling",
            CommandName::Evolve => "evolve",
            CommandName::Ergodic => "ergodic",
            CommandName::Longtime => "longtime",
            CommandName::Control => "control",
        }
    }
}

/// Runs `command`, writes `report.json` and returns the report.
pub fn run_command(command: CommandName, scenario: &Scenario, art: &Artifacts) -> Result<Report> {
    let report = match command {
        CommandName::AnalyzeCoupling => analyze_coupling(scenario, art)?,
        CommandName::Evolve => evolve(scenario, art)?.0,
        CommandName::Ergodic => ergodic(scenario, art)?.0,
        CommandName::Longtime => longtime(scenario, art)?.0,
        CommandName::Control => control(scenario, art)?.0,
    };
    art.report(&report)?;
    Ok(report)
}

fn ctx(scenario: &Scenario, what: &str) -> impl FnOnce() -> String {
    let msg = format!("scenario '{}': {what}", scenario.name());
    move || msg
}

fn discretization(scenario: &Scenario) -> Result<Discretization<'_>> {
    Discretization::new(&scenario.problem, scenario.grid).context(ctx(scenario, "discretization"))
}

fn initial_params(
    scenario: &Scenario,
    disc: &Discretization<'_>,
    u0: &VectorGridField,
) -> Result<SchemeParams> {
    let run = &scenario.file.run;
    SchemeParams::auto(disc, u0, run.flux, run.cfl_safety)
        .context(ctx(scenario, "scheme parameters"))
}

pub fn analyze_coupling(scenario: &Scenario, art: &Artifacts) -> Result<Report> {
    let mut report = Report::new("analyze-coupling", scenario.name(), &scenario.warnings);
    let coupling = &scenario.problem.coupling;
    let monotone = check_monotone_coupling(coupling, EIGEN_TOL);
    report.set("constant", coupling.is_constant());
    report.set("monotonicity", &monotone);
    report.set("assumption_audit", &scenario.audit);
    report.check_that("monotone", monotone.holds);
    let analysis = analyze_field(coupling, Some(&scenario.grid));
    if coupling.is_constant() {
        let d = coupling.at(0);
        let witness = is_irreducible(d);
        report.check_that("irreducible", witness.irreducible);
        report.set("irreducibility", &witness);
        report.set("m_decomposition", m_decompose(d, EIGEN_TOL).ok());
        report.set("spectrum", nonzero_spectrum_check(d, EIGEN_TOL));
        report.set("perron", &analysis.cells[0].perron);
        report.set("zero_row_sums", analysis.cells[0].zero_row_sums);
        if analysis.cells[0].zero_row_sums && witness.irreducible {
            report.set("limit_projector", exp_limit_projector(d).ok());
        }
    } else {
        let count = |f: fn(&hjsys_core::coupling::CellAnalysis) -> bool| {
            analysis.cells.iter().filter(|c| f(c)).count()
        };
        let cells = analysis.cells.len();
        let irreducible = count(|c| c.irreducible);
        report.check_that("irreducible", irreducible == cells);
        report.set(
            "cells",
            json!({
                "total": cells,
                "monotone": count(|c| c.monotone),
                "irreducible": irreducible,
                "zero_row_sums": count(|c| c.zero_row_sums),
            }),
        );
        report.set("max_lambda_jump", analysis.max_lambda_jump);
        let m = scenario.problem.m;
        let mut csv = String::from("cell");
        for i in 1..=m {
            csv.push_str(&format!(",lambda{i}"));
        }
        csv.push('\n');
        for (c, cell) in analysis.cells.iter().enumerate() {
            csv.push_str(&c.to_string());
            match &cell.perron {
                Some(p) => p
                    .lambda_vec
                    .iter()
                    .for_each(|l| csv.push_str(&format!(",{l}"))),
                None => (0..m).for_each(|_| csv.push_str(",nan")),
            }
            csv.push('\n');
        }
        art.series("lambda", &csv)?;
    }
    Ok(report)
}

pub fn evolve(scenario: &Scenario, art: &Artifacts) -> Result<(Report, TrajectoryLog)> {
    let run = &scenario.file.run;
    let disc = discretization(scenario)?;
    let grid = scenario.grid;
    let u0 = VectorGridField::from_fns(&grid, &scenario.problem.initial_data);
    let params = initial_params(scenario, &disc, &u0)?;
    let opts = SolveOptions::new(run.horizon, run.sample_interval());
    let log =
        solve_until(&disc, &u0, &params, &opts, &mut []).context(ctx(scenario, "time marching"))?;

    let mut report = Report::new("evolve", scenario.name(), &scenario.warnings);
    let mut u_final = log.final_field().clone();
    u_final.add_constants(&vec![scenario.drift * u_final.t; u_final.m]);
    report.set("final_time", log.final_state.t);
    report.set("steps", log.final_state.step_count);
    report.set("dt", log.params.dt);
    report.set("thetas", &log.params.thetas);
    report.set("drift", scenario.drift);
    report.set("final_sup_norm", u_final.sup_norm());
    report.set(
        "final_residual",
        log.samples.last().map(|s| s.residual.clone()),
    );
    report.assert_that("finite", u_final.is_finite());
    art.series("trajectory", &trajectory_csv(&log))?;
    art.field("u_final", &grid, &u_final)?;
    Ok((report, log))
}

pub fn ergodic(scenario: &Scenario, art: &Artifacts) -> Result<(Report, ErgodicResult)> {
    let run = &scenario.file.run;
    let disc = discretization(scenario)?;
    let grid = scenario.grid;
    let options = VanishingOptions {
        schedule: run.schedule.clone(),
        x_star: run.x_star.as_ref().map(|x| grid.nearest_cell(x)),
        discount: DiscountOptions {
            tol: run.tol,
            flux: run.flux,
            cfl_safety: run.cfl_safety,
            ..Default::default()
        },
        warm_start: true,
        bounds_tol: run.bounds_tol,
    };
    let result =
        vanishing_discount(&disc, &options).context(ctx(scenario, "vanishing discount"))?;

    let mut report = Report::new("ergodic", scenario.name(), &scenario.warnings);
    let c: Vec<f64> = result
        .c_estimate
        .iter()
        .map(|ci| ci - scenario.drift)
        .collect();
    report.set("c_estimate", &c);
    report.set(
        "c_last",
        result
            .c_last
            .iter()
            .map(|ci| ci - scenario.drift)
            .collect::<Vec<_>>(),
    );
    report.set("drift", scenario.drift);
    report.set("anchor_point", &result.anchor_point);
    report.set("anchor_weights", &result.anchor_weights);
    report.set("schedule_length", result.trace.len());
    report.set(
        "last_corrector_increment",
        result.trace.last().and_then(|e| e.corrector_increment),
    );
    let w = &result.corrector;
    if w.m >= 2 {
        let diff: Vec<f64> = w.values[0]
            .iter()
            .zip(&w.values[1])
            .map(|(a, b)| a - b)
            .collect();
        let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        report.set(
            "corrector_difference",
            json!({ "at_anchor": diff[result.anchor], "min": lo, "max": hi }),
        );
    }
    let params = SchemeParams::auto(&disc, w, run.flux, run.cfl_safety)
        .context(ctx(scenario, "scheme parameters"))?;
    let residual = stationary_residual(&disc, w, &result.c_estimate, &params);
    report.set("stationary_residual", &residual);
    report.check_le(
        "stationary_residual",
        residual.iter().copied().fold(0.0, f64::max),
        RESIDUAL_TOL,
    );
    if let Some(b) = &result.bounds_check {
        report.set("bounds_check", b);
        // A violated a priori bound is a hard failure.
        report.assert_le("ergodic_bound_lower", b.lower - b.tol, b.value);
        report.assert_le("ergodic_bound_upper", b.value, b.upper + b.tol);
    }
    if let Some(f) = &result.f_check {
        report.set("f_check", f);
        report.assert_le("c_on_f", f.c_sup, f.tol_c);
        report.assert_le("corrector_on_f", f.corrector_sup_on_f, f.tol_corrector);
    }
    art.series("ergodic_trace", &ergodic_trace_csv(&result))?;
    art.field("corrector", &grid, w)?;
    Ok((report, result))
}

pub struct LongtimeOutput {
    pub log: TrajectoryLog,
    pub convergence: ConvergenceReport,
    /// Constant used for `u + ct`, on the (possibly shifted) problem.
    pub c: Vec<f64>,
    pub lambda_trace: Option<FunctionalTrace>,
    pub max_trace: Option<FunctionalTrace>,
    pub ode: Option<AubryOdeReport>,
    pub oscillation: Vec<(f64, f64)>,
}

/// `−mean_x (u(T) − u(T − window)) / window` per component.
fn growth_rate(log: &TrajectoryLog, window: f64) -> Vec<f64> {
    let last = log.snapshots.back().expect("snapshots recorded");
    let earlier = log
        .snapshots
        .iter()
        .rev()
        .find(|f| f.t <= last.t - window + 1e-9)
        .unwrap_or_else(|| log.snapshots.front().expect("snapshots recorded"));
    let span = last.t - earlier.t;
    last.values
        .iter()
        .zip(&earlier.values)
        .map(|(a, b)| {
            let mean = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
            if span > 0.0 {
                -mean / span
            } else {
                0.0
            }
        })
        .collect()
}

pub fn longtime_with(
    scenario: &Scenario,
    art: &Artifacts,
    u0: &VectorGridField,
) -> Result<(Report, LongtimeOutput)> {
    let run = &scenario.file.run;
    let problem = &scenario.problem;
    let disc = discretization(scenario)?;
    let grid = scenario.grid;
    let params = initial_params(scenario, &disc, u0)?;
    let opts =
        SolveOptions::new(run.horizon, run.sample_interval()).with_snapshots(SnapshotPolicy::All);
    let log =
        solve_until(&disc, u0, &params, &opts, &mut []).context(ctx(scenario, "time marching"))?;
    let sets = compute_sets(problem, &grid, None).context(ctx(scenario, "sets"))?;

    let degenerate = problem
        .coupling
        .entries()
        .iter()
        .all(|(_, d)| (0..problem.m).all(|i| d.row(i).sum().abs() <= EIGEN_TOL));
    let (c, c_source) = match &run.c {
        Some(c) => (c.iter().map(|ci| ci + scenario.drift).collect(), "given"),
        None if degenerate && !sets.f_empty() => (vec![0.0; problem.m], "zero on F"),
        None => (growth_rate(&log, run.window), "growth rate"),
    };
    let osc_tol = run.osc_tol.unwrap_or_else(|| default_osc_tol(u0));
    let convergence = detect_convergence(&disc, &log, &sets, run.window, osc_tol, &c, &log.params)
        .context(ctx(scenario, "convergence test"))?;

    let mut report = Report::new("longtime", scenario.name(), &scenario.warnings);
    report.set("verdict", convergence.verdict);
    report.set("oscillation", convergence.oscillation);
    report.set("previous_oscillation", convergence.previous_oscillation);
    report.set("osc_tol", osc_tol);
    report.set("window", run.window);
    report.set(
        "c",
        c.iter().map(|ci| ci - scenario.drift).collect::<Vec<_>>(),
    );
    report.set("c_source", c_source);
    report.set("a_cells", sets.a_cells().len());
    report.set("f_cells", sets.f_cells().len());
    if let Some(r) = &convergence.stationarity_residual {
        report.set("stationarity_residual", r);
        report.check_le(
            "stationarity_residual",
            r.iter().copied().fold(0.0, f64::max),
            RESIDUAL_TOL,
        );
    }
    if let (Some(eq), Some(tol)) = (convergence.equality_on_a, convergence.equality_tol) {
        report.set("equality_on_a", json!({ "value": eq, "tol": tol }));
        report.check_le("equality_on_a", eq, tol);
    }

    let mut lambda_trace = None;
    let mut max_trace = None;
    let mut ode = None;
    if !sets.a_empty() {
        let analysis = analyze_field(&problem.coupling, Some(&grid));
        match monitor_lambda_functional(&log, &sets, &analysis, run.mono_tol) {
            Ok(t) => {
                report.check_le("lambda_functional_increase", t.worst_increase, t.mono_tol);
                lambda_trace = Some(t);
            }
            Err(e) => report
                .warnings
                .push(format!("Λ-functional unavailable: {e}")),
        }
        let t = monitor_max_functional(&log, &sets, run.mono_tol)
            .context(ctx(scenario, "max functional"))?;
        report.check_le("max_functional_increase", t.worst_increase, t.mono_tol);
        max_trace = Some(t);
        if let (Some(l), Some(mx)) = (&lambda_trace, &max_trace) {
            art.series("functionals", &functional_csv(l, mx))?;
        }
        let t0 = run.t0.unwrap_or(0.6 * run.horizon);
        let mut worst: Option<AubryOdeReport> = None;
        for cell in sets.a_cells() {
            let r = aubry_ode_check(&log, &sets, cell, problem.coupling.at(cell), t0)
                .context(ctx(scenario, "ODE on A"))?;
            if worst.as_ref().is_none_or(|w| r.deviation > w.deviation) {
                worst = Some(r);
            }
        }
        if let Some(r) = worst {
            report.check_le("aubry_ode_deviation", r.deviation, ODE_TOL);
            report.set("aubry_ode", &r);
            ode = Some(r);
        }
    }

    let oscillation = oscillation_series(&log, &c, run.window);
    let mut csv = String::from("t,oscillation\n");
    for (t, o) in &oscillation {
        csv.push_str(&format!("{t},{o}\n"));
    }
    art.series("oscillation", &csv)?;
    art.series("trajectory", &trajectory_csv(&log))?;
    art.field("u_final", &grid, log.final_field())?;
    if let Some(u) = &convergence.u_infinity {
        art.field("u_infinity", &grid, u)?;
    }
    let out = LongtimeOutput {
        log,
        convergence,
        c,
        lambda_trace,
        max_trace,
        ode,
        oscillation,
    };
    Ok((report, out))
}

pub fn longtime(scenario: &Scenario, art: &Artifacts) -> Result<(Report, LongtimeOutput)> {
    let u0 = VectorGridField::from_fns(&scenario.grid, &scenario.problem.initial_data);
    longtime_with(scenario, art, &u0)
}

pub struct ControlOutput {
    pub mc: McEstimate,
    pub dp_at_start: f64,
    pub dp_dt: f64,
    pub cross_validation: CrossValidation,
}

/// `min(dx / max σ, 1 / max exit rate, horizon)`, the largest stable step.
pub fn default_dt(problem: &ControlProblem, grid: &TorusGrid) -> f64 {
    let dim = problem.dim;
    let max_sigma = (0..grid.cells())
        .flat_map(|c| {
            problem
                .sigma
                .iter()
                .map(move |s| s.eval(&grid.point(c)[..dim]))
        })
        .fold(0.0, f64::max);
    let max_rate = (0..problem.m)
        .map(|i| problem.exit_rate(i))
        .fold(0.0, f64::max);
    let mut dt = grid.dx / max_sigma.max(1e-300);
    if max_rate > 0.0 {
        dt = dt.min(1.0 / max_rate);
    }
    dt.min(problem.horizon)
}

pub fn control(scenario: &Scenario, art: &Artifacts) -> Result<(Report, ControlOutput)> {
    let setup = scenario
        .control
        .as_ref()
        .ok_or_else(|| CliError::Schema("the control command needs gamma/policy fields".into()))?;
    let run = &scenario.file.run;
    let problem = &setup.problem;
    let grid = scenario.grid;
    let dt = run.dt.unwrap_or_else(|| default_dt(problem, &grid));
    let dp =
        dp_value(problem, &grid, dt, usize::MAX).context(ctx(scenario, "dynamic programming"))?;
    let dp_at_start = interpolate(&grid, &dp.at_start().values[setup.mode], &setup.x0);
    let policy = match &setup.policy {
        PolicyEntry::Zero => PolicySpec::Zero,
        PolicyEntry::TowardPoint { target } => PolicySpec::TowardPoint {
            target: target.clone(),
        },
        PolicyEntry::Feedback => feedback_from_layer(problem, &grid, dp.at_start(), dp.dt),
    };
    let h_path = run.h_path.unwrap_or(dp.dt / 4.0);
    let mc = simulate_pdmp(
        problem,
        &policy,
        &setup.x0,
        setup.mode,
        &McOptions {
            paths: setup.paths,
            seed: setup.seed,
            h_path,
        },
    )
    .context(ctx(scenario, "Monte Carlo"))?;
    let cross_validation =
        cross_validate(problem, &grid, dp.dt).context(ctx(scenario, "cross validation"))?;

    let mut report = Report::new("control", scenario.name(), &scenario.warnings);
    report.set("monte_carlo", &mc);
    report.set("h_path", h_path);
    report.set(
        "dp",
        json!({ "dt": dp.dt, "steps": dp.steps, "value_at_start": dp_at_start }),
    );
    report.set("cross_validation", &cross_validation);
    if matches!(setup.policy, PolicyEntry::Feedback) {
        // One admissible policy cannot beat the value by more than the discretization error.
        let slack = 3.0 * mc.std_error + grid.dx + dp.dt;
        report.check_ge("feedback_cost_above_value", mc.mean, dp_at_start - slack);
    }
    art.series(
        "dp_start",
        &field_csv(&grid, dp.at_start()).context(ctx(scenario, "csv"))?,
    )?;
    let mut csv = String::from("mode,discrepancy\n");
    for (i, d) in cross_validation.per_mode.iter().enumerate() {
        csv.push_str(&format!("{},{d}\n", i + 1));
    }
    art.series("cross_validation", &csv)?;
    art.field("dp_start", &grid, dp.at_start())?;
    Ok((
        report,
        ControlOutput {
            mc,
            dp_at_start,
            dp_dt: dp.dt,
            cross_validation,
        },
    ))
}
