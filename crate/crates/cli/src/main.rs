use clap::{Parser, Subcommand, ValueEnum};
use pointbudget::combine::Method;
use pointbudget::pipeline::{run, RunOptions};
use pointbudget::report::emit;
use pointbudget::scenario::parse_scenario;
use pointbudget::Error;
use std::path::PathBuf;
use std::process::ExitCode;

pub const WORKERS_ENV: &str = "POINTBUDGET_WORKERS";

#[derive(Parser)]
#[command(name = "pointbudget", version, about = "Pointing-error budgets for flexible spacecraft")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report files.
    Run {
        scenario: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `combination.seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo sample count (overrides `combination.samples`).
        #[arg(long)]
        samples: Option<usize>,
        /// Force the worst-case search.
        #[arg(long)]
        wc: bool,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Also write the assembled nominal model to `model.json`.
        #[arg(long)]
        dump_model: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Simplified,
    Advanced,
}

fn workers() -> Result<(), Error> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

fn execute(cli: Cli) -> Result<(), Error> {
    workers()?;
    match cli.command {
        Command::Run { scenario, out, seed, samples, wc, method, dump_model } => {
            let cfg = parse_scenario(&scenario)?;
            let opts = RunOptions {
                seed,
                samples,
                method: method.map(|m| match m {
                    MethodArg::Simplified => Method::Simplified,
                    MethodArg::Advanced => Method::Advanced,
                }),
                worst_case: wc,
                dump_model,
            };
            let report = run(&cfg, &opts)?;
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let files = emit(&report, &dir, &cfg.output.formats)?;
            for a in &report.nominal.axes {
                println!(
                    "{}-axis total {:.6} requirement {:.6} margin {:.6}",
                    pointbudget::sources::AXES.get(a.axis).copied().unwrap_or("?"), a.total, a.requirement, a.margin
                );
            }
            println!("wrote {} files to {}", files.len(), dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
