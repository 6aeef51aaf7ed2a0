use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairreg_cli::*;

#[derive(Parser)]
#[command(name = "fairreg", version, about = "Fairness-regularized linear and logistic regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validated accuracy/fairness frontier over the lambda grid.
    Frontier(Common),
    /// In-sample price of fairness over the alpha grid.
    Pof(Common),
    /// Cross-validated choice of the ridge weight at one lambda.
    CvGamma(Common),
    /// Fairness penalties and accuracy loss of a stored model.
    PenaltyEval {
        #[command(flatten)]
        common: Common,
        /// JSON model file with `mode`, `weights` and `intercepts`.
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeChoice>,
    #[arg(long, value_enum)]
    penalty: Option<PenaltyChoice>,
}

impl Common {
    fn config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            dataset: self.dataset.clone(),
            schema: self.schema.clone(),
            seed: self.seed,
            out: self.out.clone(),
            mode: self.mode,
            penalty: self.penalty,
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::Frontier(c) | Command::Pof(c) | Command::CvGamma(c) => c,
        Command::PenaltyEval { common, .. } => common,
    };
    let cfg = common.config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(CliError::Validation("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))?;

    pool.install(|| match &cli.command {
        Command::Frontier(_) => cmd_frontier(&cfg).map(drop),
        Command::Pof(_) => cmd_pof(&cfg).map(drop),
        Command::CvGamma(_) => cmd_cv_gamma(&cfg).map(drop),
        Command::PenaltyEval { model, .. } => {
            let params = load_model(model)?;
            println!("{}", cmd_penalty_eval(&cfg, &params)?);
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
