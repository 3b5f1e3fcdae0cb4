//! Command-line driver: synthetic data, training, sampling, evaluation,
//! diagnostics and the RMSD bound, each a subcommand writing plain-text
//! artifacts into an output directory.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "confrefine", version, about = "Flow-matching conformer refiner")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory [default: $CONFREFINE_OUT, else ./confrefine-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Leave wall-clock fields out of run records.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Generator,
    Refiner,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic train and eval datasets.
    Synth {
        /// Training molecules.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train a generator or a refiner on a dataset manifest.
    Train {
        #[arg(long, value_enum)]
        kind: ModelKind,
        #[arg(long)]
        data: PathBuf,
        /// Base-noise scale in Å.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Sample conformers from noise with a trained generator.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Conformers per reference conformer.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Refine the conformers listed in an upstream ensemble manifest.
    Refine {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        upstream: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Also write per-step trajectory dumps.
        #[arg(long)]
        trajectories: bool,
    },
    /// Score an ensemble against its references, optionally paired with a
    /// baseline ensemble for improvement/downgrade rates.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        /// Repeatable.
        #[arg(long)]
        tau: Vec<f64>,
        #[arg(long)]
        label: Option<String>,
    },
    /// Neighbor degrees, pair perturbations, speeds and RMSD traces.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        /// Trained refiner; enables speed histograms and traces.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Trained generator for the speed comparison.
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Upstream ensemble the refiner starts from.
        #[arg(long)]
        upstream: Option<PathBuf>,
        /// Repeatable.
        #[arg(long)]
        radius: Vec<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Print the Wilson–Hilferty RMSD quantile bound in Å.
    Bound {
        /// Heavy atoms.
        #[arg(long)]
        n: Option<usize>,
        /// Per-coordinate error scale in Å.
        #[arg(long)]
        sigma: Option<f64>,
        /// Standard-normal quantile.
        #[arg(long)]
        qk: Option<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Train { .. } => "train",
            Command::Generate { .. } => "generate",
            Command::Refine { .. } => "refine",
            Command::Eval { .. } => "eval",
            Command::Diagnose { .. } => "diagnose",
            Command::Bound { .. } => "bound",
        }
    }
}

/// Loads the config file, applies flag overrides and seed derivation.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if cli.deterministic {
        cfg.deterministic = true;
    }
    match &cli.command {
        Command::Synth { n } => {
            if let Some(n) = n {
                cfg.synth.train.n_molecules = *n;
            }
        }
        Command::Train { kind, sigma, .. } => {
            if let Some(s) = sigma {
                match kind {
                    ModelKind::Generator => cfg.generator.sigma = *s,
                    ModelKind::Refiner => cfg.refiner.sigma = *s,
                }
            }
        }
        Command::Generate { steps, n, sigma, .. } => {
            if let Some(s) = steps {
                cfg.sample.generator_steps = *s;
            }
            if sigma.is_some() {
                cfg.sample.generator_sigma = *sigma;
            }
            if let Some(n) = n {
                cfg.sample.samples_per_reference = *n;
            }
        }
        Command::Refine { steps, trajectories, .. } => {
            if let Some(s) = steps {
                cfg.sample.refiner_steps = *s;
            }
            if *trajectories {
                cfg.sample.trajectories = true;
            }
        }
        Command::Eval { delta, tau, .. } => {
            if let Some(d) = delta {
                cfg.eval.delta = *d;
            }
            if !tau.is_empty() {
                cfg.eval.taus = tau.clone();
            }
        }
        Command::Diagnose { radius, sigma, steps, .. } => {
            if !radius.is_empty() {
                cfg.diagnose.radii = radius.clone();
            }
            if let Some(s) = sigma {
                cfg.diagnose.sigma = *s;
            }
            if let Some(s) = steps {
                cfg.sample.refiner_steps = *s;
            }
        }
        Command::Bound { n, sigma, qk } => {
            if let Some(n) = n {
                cfg.bound.n_atoms = *n;
            }
            if let Some(s) = sigma {
                cfg.bound.sigma_star = *s;
            }
            if let Some(q) = qk {
                cfg.bound.qk = *q;
            }
        }
    }
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed invocation. Returns what the command prints to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve_config(cli)?;
    let out = cfg.out_dir(cli.out.as_deref());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command, &cfg, &out))
}

/// Parses `args` (program name first) and runs them; the exit code and
/// the text for stdout or stderr.
pub fn main_with_args<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            return (code, e.to_string());
        }
    };
    match run(&cli) {
        Ok(text) => (0, text),
        Err(e) => (e.exit_code(), e.report_line()),
    }
}
