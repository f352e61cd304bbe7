use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cmad::config::ExtractorKind;
use cmad_cli::commands::{
    cmd_eval, cmd_gen, cmd_score, cmd_segment, cmd_train, collect_images, load_detector, load_policy, resolve_config,
    GenSpec, Overrides,
};
use cmad_cli::exit::{self, exit_code};
use cmad_cli::service::{serve, AppState};

/// Component-aware logical anomaly detection
#[derive(Debug, Parser)]
#[command(name = "cmad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on `<dataset>/train/good`
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// model file to write
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score images, one JSON report per line
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        /// report file; standard output when omitted
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// directory of precomputed feature files
        #[arg(long)]
        feature_dir: Option<PathBuf>,
        /// PNG files or directories
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Write a component overlay and per-component masks for one image
    Segment {
        #[arg(long)]
        model: PathBuf,
        /// overlay PNG; masks are written beside it
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        feature_dir: Option<PathBuf>,
        image: PathBuf,
    },
    /// Benchmark a model on `<dataset>/test`
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        /// output directory for the table and records
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        feature_dir: Option<PathBuf>,
    },
    /// Generate a synthetic product dataset
    Gen {
        /// TOML dataset description; built-in defaults when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Serve the HTTP API
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        feature_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Features {
    Mock,
    File,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    features: Option<Features>,
    /// directory of precomputed feature files
    #[arg(long)]
    feature_dir: Option<PathBuf>,
    /// skip CRF refinement
    #[arg(long)]
    no_crf: bool,
    /// number of KMeans components
    #[arg(long)]
    k: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            features: self.features.map(|f| match f {
                Features::Mock => ExtractorKind::Mock,
                Features::File => ExtractorKind::File,
            }),
            feature_dir: self.feature_dir.clone(),
            no_crf: self.no_crf,
            k: self.k,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { dataset, out, run } => {
            let cfg = resolve_config(run.config.as_deref(), &run.overrides())?;
            cmd_train(&dataset, &cfg, &out)?;
        }
        Command::Score { model, policy, out, feature_dir, images } => {
            let det = load_detector(&model, feature_dir.as_deref())?;
            let policy = load_policy(policy.as_deref())?;
            let samples = collect_images(&images)?;
            let mut sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
                None => Box::new(BufWriter::new(io::stdout().lock())),
            };
            cmd_score(&det, &samples, &policy, sink.as_mut())?;
        }
        Command::Segment { model, out, feature_dir, image } => {
            let det = load_detector(&model, feature_dir.as_deref())?;
            cmd_segment(&det, &image, &out)?;
        }
        Command::Eval { model, dataset, policy, out, feature_dir } => {
            let det = load_detector(&model, feature_dir.as_deref())?;
            let policy = load_policy(policy.as_deref())?;
            let report = cmd_eval(&det, &dataset, &policy, &out)?;
            print!("{}", report.table());
        }
        Command::Gen { spec, seed, out } => {
            let mut spec = match spec {
                Some(p) => GenSpec::load(&p)?,
                None => GenSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            cmd_gen(&spec, &out)?;
        }
        Command::Serve { model, policy, port, host, feature_dir } => {
            let det = load_detector(&model, feature_dir.as_deref())?;
            let policy = load_policy(policy.as_deref())?;
            let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            runtime.block_on(serve(AppState::new(det, policy), &host, port)).context("serving")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
