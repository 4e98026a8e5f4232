use clap::{Parser, Subcommand};
use dataprice_cli::config::RunConfig;
use dataprice_cli::stages;
use dataprice_cli::{CliError, Context};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dataprice", version, about = "Price modeling experiments for data products")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Stage {
    /// Run configuration (TOML).
    #[arg(short, long, default_value = "dataprice.toml")]
    config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Recompute even if the outputs are up to date.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate products; descriptive statistics and price histogram.
    Ingest(Stage),
    /// Refund levels and industry scores, from the endpoint or offline rules.
    Annotate(Stage),
    /// Fit every text representation on the full corpus.
    Featurize(Stage),
    /// mRMR traces per task and representation.
    Select(Stage),
    /// Fit and save one model per task, representation and family.
    Train(Stage),
    /// Cross-validated representation x model grid.
    Evaluate(Stage),
    /// Metrics against the number of mRMR-selected features.
    Curve(Stage),
    /// SHAP rankings, beeswarm data and embedding keywords.
    Explain(Stage),
    /// Collect tables and figure data.
    Report(Stage),
    /// Every stage in order.
    Run(Stage),
    /// Write synthetic products with planted topic and price structure.
    Generate {
        #[arg(long, default_value_t = 600)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Drop industry scores so `annotate` fills them in.
        #[arg(long)]
        strip_industry: bool,
        /// Output path; `.csv` writes CSV, anything else JSON lines.
        #[arg(long)]
        out: PathBuf,
    },
}

fn context(stage: &Stage) -> Result<Context, CliError> {
    let mut config = RunConfig::load(&stage.config)?;
    if let Some(out) = &stage.out_dir {
        config.out_dir = out.clone();
    }
    Ok(Context::new(config, stage.force))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (stage, f): (Stage, fn(&Context) -> Result<(), CliError>) = match command {
        Command::Generate { n, seed, strip_industry, out } => {
            if n == 0 {
                return Err(CliError::Validation("--n must be positive".into()));
            }
            stages::write_products(&stages::generate_products(n, seed, strip_industry), &out)?;
            println!("generate: wrote {n} products to {}", out.display());
            return Ok(());
        }
        Command::Ingest(s) => (s, |c| stages::ingest(c).map(drop)),
        Command::Annotate(s) => (s, |c| stages::annotate(c).map(drop)),
        Command::Featurize(s) => (s, |c| stages::featurize(c).map(drop)),
        Command::Select(s) => (s, |c| stages::select(c).map(drop)),
        Command::Train(s) => (s, |c| stages::train(c).map(drop)),
        Command::Evaluate(s) => (s, |c| stages::evaluate(c).map(drop)),
        Command::Curve(s) => (s, |c| stages::curve(c).map(drop)),
        Command::Explain(s) => (s, |c| stages::explain(c).map(drop)),
        Command::Report(s) => (s, |c| stages::report(c).map(drop)),
        Command::Run(s) => (s, stages::run_all),
    };
    f(&context(&stage)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation failures
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
