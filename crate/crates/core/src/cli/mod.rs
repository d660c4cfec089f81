//! The `crownrefine` command line.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 I/O error.

mod commands;
mod config;
mod gradcheck;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_demo, cmd_eval, cmd_gradcheck, cmd_learn, cmd_refine, cmd_synth, collect_masks, CliError,
    DemoPaths, EvalArgs, SceneSummary,
};
pub use config::{ConfigError, RunConfig, DEFAULT_TRAIN_CROWNS, KEYS};
pub use gradcheck::{
    gradcheck, random_problem, relative_error, GradcheckError, GradcheckReport, TrialOutcome,
    CONTOUR_COUNTS, DEFAULT_TOLERANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const AFTER_HELP: &str = "\
Configuration: `--config FILE` holds `key = value` lines; `--set key=value`
overrides single keys. Unknown keys are rejected. Run `crownrefine config`
to print every key with its default.

Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
3 I/O error.";

#[derive(Parser, Debug)]
#[command(name = "crownrefine", version, about = "Refine instance seeds into crown contours", after_help = AFTER_HELP)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for `--set rng_seed=N`.
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Shorthand for `--set max_iters=N`.
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl ConfigArgs {
    /// Defaults, then the file, then `--set`, then the shorthand flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            config
                .apply_text(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        for item in &self.set {
            config
                .apply_override(item)
                .map_err(|e| CliError::Usage(format!("--set {item}: {e}")))?;
        }
        if let Some(seed) = self.rng_seed {
            config.spec.rng_seed = seed;
        }
        if let Some(n) = self.max_iters {
            config.optimizer.max_iters = n;
        }
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        /// Number of scenes.
        #[arg(short = 'n', default_value_t = 75)]
        n: usize,
        /// Output directory.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Learn a shape model from a directory of PGM masks.
    Learn {
        /// Directory of training masks (`*.pgm`).
        #[arg(long)]
        masks: PathBuf,
        /// Number of modes; overrides the `modes` key.
        #[arg(short = 'k', long)]
        k: Option<usize>,
        /// Output model file.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Refine the seeds of one scene directory, or of every scene of a corpus.
    Refine {
        /// Scene directory, or corpus directory with a manifest.
        #[arg(long)]
        scene: PathBuf,
        /// Shape model file.
        #[arg(long)]
        model: PathBuf,
        /// Output directory for detections and logs.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Match detections against reference masks.
    Eval {
        /// Reference masks: a scene directory or a corpus directory.
        #[arg(long)]
        gt: PathBuf,
        /// Detections: a directory of masks or of per-scene directories.
        #[arg(long)]
        det: PathBuf,
        /// File-name prefix of detection masks.
        #[arg(long, default_value = "det_")]
        det_prefix: String,
        /// Directory with `baseline_*.pgm` masks for a comparison table.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Write report.json, report.txt and pairs.csv here.
        #[arg(short = 'o', long = "out")]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare analytic and finite-difference energy gradients.
    Gradcheck {
        /// Shape model file.
        #[arg(long)]
        model: PathBuf,
        /// Number of random draws.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run synth, learn, refine and eval end to end.
    Demo {
        /// Output directory.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Number of scenes.
        #[arg(short = 'n', default_value_t = 75)]
        n: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the resolved configuration.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Synth { n, out, config } => cmd_synth(&config.resolve()?, n, &out),
        Command::Learn {
            masks,
            k,
            out,
            config,
        } => {
            let mut c = config.resolve()?;
            if let Some(k) = k {
                c.modes = k;
            }
            cmd_learn(&c, &masks, &out)
        }
        Command::Refine {
            scene,
            model,
            out,
            config,
        } => cmd_refine(&config.resolve()?, &scene, &model, &out),
        Command::Eval {
            gt,
            det,
            det_prefix,
            baseline,
            out,
            config,
        } => cmd_eval(
            &config.resolve()?,
            &EvalArgs {
                gt,
                det,
                det_prefix,
                baseline,
                out,
            },
        ),
        Command::Gradcheck {
            model,
            trials,
            config,
        } => cmd_gradcheck(&config.resolve()?, &model, trials, None),
        Command::Demo { out, n, config } => cmd_demo(&config.resolve()?, n, &out).map(|_| EXIT_OK),
        Command::Config { config } => {
            print!("{}", config.resolve()?.echo());
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be positive".into())),
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(CliError::Usage(format!("cannot start {j} workers: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ! {
    std::process::exit(run(std::env::args_os()))
}
