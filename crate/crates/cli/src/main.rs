use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aims_gp::{Builtin, Weighting};
use aims_gp_cli::commands::{DiagnoseOutcome, PredictOutcome};
use aims_gp_cli::{cmd_demo, cmd_diagnose, cmd_fit, cmd_predict, CliError, RunConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "aims-gp",
    version,
    about = "Fit Gaussian-process emulators with annealed importance sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample hyper-parameters and write a run directory.
    Fit(RunArgs),
    /// Predict test points from a finished run.
    Predict(PredictArgs),
    /// Standardized residuals of the last predictions.
    Diagnose {
        #[arg(long, default_value = "aims-run")]
        out: PathBuf,
    },
    /// Fit, predict and diagnose a built-in problem.
    Demo {
        #[arg(value_parser = ["branin", "model2d", "toy1d"])]
        problem: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// optimize | sample
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// branin | model2d | toy1d | file:<path>
    #[arg(long)]
    dataset: Option<String>,
    /// flat | lognormal:mu,sigma
    #[arg(long)]
    prior: Option<String>,
    /// verbatim | cubic, for model2d
    #[arg(long)]
    denominator: Option<String>,
    /// uniform | importance
    #[arg(long)]
    weighting: Option<String>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Run directory written by `fit`.
    #[arg(long, default_value = "aims-run")]
    out: PathBuf,
    /// CSV of test inputs, optionally with the output as last column.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    weighting: Option<Weighting>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("samples", self.samples.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("dataset", self.dataset.clone()),
            ("prior", self.prior.clone()),
            ("denominator", self.denominator.clone()),
            ("weighting", self.weighting.clone()),
            ("test_size", self.test_size.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Input(e.to_string()))
    }
}

fn print_predict(p: &PredictOutcome, dir: &Path) {
    println!(
        "wrote {} predictions to {}",
        p.rows.len(),
        dir.join("predictions.csv").display()
    );
    if let (Some(mix), Some(map)) = (p.mixture_rmse, p.map_rmse) {
        println!("mixture RMSE {mix:.6}");
        println!("MAP RMSE     {map:.6}");
    }
}

fn print_diagnose(d: &DiagnoseOutcome) {
    print!("{}", d.report);
}

fn not_converged(reason: impl ToString) -> CliError {
    CliError::NotConverged(reason.to_string())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = args.config()?;
            let fit = args.pool()?.install(|| cmd_fit(&cfg))?;
            let (_, map_h) = fit.result.map_candidate();
            println!(
                "{} levels, stop: {}, MAP H {map_h:.6}, run directory {}",
                fit.result.annealing_levels(),
                fit.result.stop_reason,
                fit.out.display()
            );
            if !fit.converged() {
                return Err(not_converged(fit.result.stop_reason));
            }
        }
        Command::Predict(args) => {
            let p = cmd_predict(&args.out, args.test.as_deref(), args.weighting)?;
            print_predict(&p, &args.out);
        }
        Command::Diagnose { out } => print_diagnose(&cmd_diagnose(&out)?),
        Command::Demo { problem, run } => {
            let builtin: Builtin = problem.parse()?;
            let mut cfg = run.config()?;
            if run.out.is_none() && run.config.is_none() {
                cfg.out = PathBuf::from(format!("demo-{problem}"));
            }
            let demo = run.pool()?.install(|| cmd_demo(builtin, cfg))?;
            println!(
                "{} levels, stop: {}, run directory {}",
                demo.fit.result.annealing_levels(),
                demo.fit.result.stop_reason,
                demo.fit.out.display()
            );
            print_predict(&demo.predict, &demo.fit.out);
            print_diagnose(&demo.diagnose);
            if !demo.fit.converged() {
                return Err(not_converged(demo.fit.result.stop_reason));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
