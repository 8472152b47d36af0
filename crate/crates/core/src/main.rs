use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use funcmech::cli::config::{
    DataSection, EvalSection, GridSection, MethodSection, OutputSection, RawConfig, SynthSection, SEED_ENV,
};
use funcmech::cli::{self, parse_config, RunConfig};
use funcmech::{FmError, Result, Task};

#[derive(Parser)]
#[command(name = "funcmech", version, about = "Differentially private regression by objective perturbation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit each configured method once on the full dataset.
    Train(RunArgs),
    /// Repeated k-fold cross-validation over the configured grid.
    Bench(RunArgs),
    /// Write the configured synthetic dataset to a file.
    Synth {
        #[command(flatten)]
        run: RunArgs,
        /// Destination file.
        #[arg(long)]
        to: PathBuf,
    },
    /// Run the invariant checks.
    Validate {
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    /// Comma-separated input table with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Zero-based index of the target column.
    #[arg(long)]
    target_column: Option<usize>,
    /// The input already has row norms <= 1 and targets in the task domain.
    #[arg(long)]
    normalized: bool,
    /// Feature bounds as `lo:hi,lo:hi,...`.
    #[arg(long, value_parser = parse_pairs)]
    feature_bounds: Option<BoundList>,
    /// Target bounds `lo:hi` (linear).
    #[arg(long, value_parser = parse_pair)]
    target_bounds: Option<[f64; 2]>,
    /// Target threshold (logistic).
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_d: Option<usize>,
    #[arg(long)]
    synth_noise: Option<f64>,
    /// Methods, comma-separated: fm, noprivacy, truncated.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// regularize-trim or rerun-once.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    seed: Option<u64>,
    /// Grid of epsilons, comma-separated.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Grid of sampling rates, comma-separated.
    #[arg(long, value_delimiter = ',')]
    sampling_rates: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("`{s}` is not lo:hi"))?;
    let lo = lo.trim().parse().map_err(|_| format!("bad lower bound in `{s}`"))?;
    let hi = hi.trim().parse().map_err(|_| format!("bad upper bound in `{s}`"))?;
    Ok([lo, hi])
}

#[derive(Clone)]
struct BoundList(Vec<[f64; 2]>);

fn parse_pairs(s: &str) -> std::result::Result<BoundList, String> {
    s.split(',').map(parse_pair).collect::<std::result::Result<_, _>>().map(BoundList)
}

impl RunArgs {
    fn flags(&self) -> RawConfig {
        let synth = if self.synth_n.is_some() || self.synth_d.is_some() || self.synth_noise.is_some() {
            Some(SynthSection {
                n: self.synth_n,
                d: self.synth_d,
                omega: None,
                noise: self.synth_noise,
            })
        } else {
            None
        };
        let grid = if self.epsilons.is_some() || self.sampling_rates.is_some() {
            Some(GridSection {
                epsilons: self.epsilons.clone(),
                sampling_rates: self.sampling_rates.clone(),
                attribute_subsets: None,
            })
        } else {
            None
        };
        RawConfig {
            data: DataSection {
                task: self.task,
                input: self.input.clone(),
                target_column: self.target_column,
                normalized: self.normalized.then_some(true),
                feature_bounds: self.feature_bounds.as_ref().map(|b| b.0.clone()),
                target_bounds: self.target_bounds,
                threshold: self.threshold,
            },
            synth,
            method: MethodSection {
                methods: self.methods.clone(),
                epsilon: self.epsilon,
                strategy: self.strategy.clone(),
                lambda: self.lambda,
            },
            eval: EvalSection {
                k: self.k,
                repeats: self.repeats,
                seed: self.seed,
            },
            grid,
            output: OutputSection { dir: self.out.clone() },
        }
    }

    fn resolve(&self) -> Result<RunConfig> {
        let text = match &self.config {
            Some(path) => Some(std::fs::read_to_string(path).map_err(|source| FmError::Config(format!(
                "cannot read config `{}`: {source}",
                path.display()
            )))?),
            None => None,
        };
        parse_config(text.as_deref(), &self.flags())
    }
}

fn execute(cli: Cli) -> Result<()> {
    let artifacts = match cli.command {
        Command::Train(args) => cli::train(&args.resolve()?)?,
        Command::Bench(args) => cli::bench(&args.resolve()?)?,
        Command::Synth { run, to } => cli::synth(&run.resolve()?, &to)?,
        Command::Validate { seed } => {
            cli::validate_suite(seed, &mut std::io::stdout().lock())?;
            return Ok(());
        }
    };
    for line in &artifacts.summary {
        println!("{line}");
    }
    for f in &artifacts.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
