use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hjsys::commands::run_command;
use hjsys::gallery::{run_gallery, NAMES};
use hjsys::report::{Artifacts, Report};
use hjsys::scenario::{CommandName, Overrides, Scenario, ScenarioFile};
use hjsys::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "hjsys",
    version,
    about = "Weakly coupled Hamilton-Jacobi systems on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monotonicity, irreducibility, spectrum and Perron vector of the coupling.
    AnalyzeCoupling(RunArgs),
    /// March the evolutive system to the horizon.
    Evolve(RunArgs),
    /// Ergodic constant and corrector by vanishing discount.
    Ergodic(RunArgs),
    /// Long-time convergence test with functionals on the Aubry set.
    Longtime(RunArgs),
    /// Dynamic programming, Monte Carlo and PDE cross-validation.
    Control(RunArgs),
    /// Run a bundled reference scenario.
    Gallery {
        #[arg(value_parser = NAMES)]
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory; HJSYS_OUT takes precedence.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            grid: self.grid,
            horizon: self.horizon,
            seed: self.seed,
        }
    }

    fn setup(&self, fallback: Option<&str>, default: &str) -> Result<Artifacts> {
        if let Some(k) = self.threads {
            // Fails only if a pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build_global();
        }
        let dir = std::env::var_os("HJSYS_OUT")
            .map(PathBuf::from)
            .or_else(|| self.out.clone())
            .or_else(|| fallback.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(default));
        Artifacts::new(dir)
    }
}

fn run_file(command: CommandName, args: &RunArgs) -> Result<Report> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|source| CliError::Io {
        path: args.scenario.display().to_string(),
        source,
    })?;
    let mut file = ScenarioFile::parse(&text)?;
    args.common.overrides().apply(&mut file);
    if let Some(declared) = file.run.command {
        if declared != command {
            eprintln!(
                "note: scenario declares '{}', running '{}'",
                declared.as_str(),
                command.as_str()
            );
        }
    }
    let default_out = format!(
        "out/{}",
        if file.name.is_empty() {
            command.as_str()
        } else {
            &file.name
        }
    );
    let fallback = file.run.out.clone();
    let scenario = Scenario::build(file)?;
    let art = args.common.setup(fallback.as_deref(), &default_out)?;
    run_command(command, &scenario, &art)
}

fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::AnalyzeCoupling(a) => run_file(CommandName::AnalyzeCoupling, a),
        Command::Evolve(a) => run_file(CommandName::Evolve, a),
        Command::Ergodic(a) => run_file(CommandName::Ergodic, a),
        Command::Longtime(a) => run_file(CommandName::Longtime, a),
        Command::Control(a) => run_file(CommandName::Control, a),
        Command::Gallery { name, common } => {
            let art = common.setup(None, &format!("out/{name}"))?;
            run_gallery(name, &common.overrides(), &art)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for a in &report.assertions {
                println!(
                    "{} {} = {:e} ({} {:e})",
                    if a.pass { "ok  " } else { "FAIL" },
                    a.name,
                    a.value,
                    a.relation,
                    a.bound
                );
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} hard assertion(s) failed", report.failed().len());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
