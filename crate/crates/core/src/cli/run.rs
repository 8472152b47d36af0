use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cli::config::{DataSource, Preparation, RunConfig};
use crate::dataset::{from_prenormalized, load_table, normalize, synth_generate, NormalizedDataset};
use crate::error::{FmError, Result};
use crate::eval::{sweep, train_model, EvalReport, Method, MethodSpec, SweepGrid};
use crate::mechanism::{FmOptions, NoiseTrace};
use crate::polyobj::ModelParams;
use crate::rng::{derive_seed, label, FmRng};
use crate::solver::RepairReport;
use crate::validation::{run_all, CheckResult};

/// Files written by a command.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    /// Lines printed to stdout.
    pub summary: Vec<String>,
}

impl Artifacts {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
        }
        fs::write(&path, contents).map_err(|source| io_err(&path, source))?;
        self.files.push(path);
        Ok(())
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FmError {
    FmError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_data(config: &RunConfig) -> Result<NormalizedDataset> {
    match &config.source {
        DataSource::Synth(spec) => synth_generate(spec, derive_seed(config.seed, &[label::SYNTH])),
        DataSource::File {
            path,
            target_column,
            preparation,
        } => {
            let raw = load_table(path, *target_column)?;
            match preparation {
                Preparation::Prenormalized => from_prenormalized(&raw, config.task),
                Preparation::Bounds { features, target } => normalize(&raw, features, target),
            }
        }
    }
}

fn method_specs(config: &RunConfig) -> Result<Vec<MethodSpec>> {
    let options = FmOptions {
        strategy: config.strategy,
        lambda: config.lambda,
    };
    config
        .methods
        .iter()
        .map(|&m| MethodSpec::with_options(m, config.task, options))
        .collect()
}

fn format_omega(omega: &ModelParams) -> String {
    let parts: Vec<String> = omega.0.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    method: Method,
    task: crate::Task,
    epsilon: f64,
    seed: u64,
    noise_seed: u64,
    n: usize,
    d: usize,
    omega: &'a ModelParams,
    epsilon_spent: f64,
    repair: &'a Option<RepairReport>,
    traces: &'a [NoiseTrace],
}

/// Fit every configured method once on the full dataset.
pub fn train(config: &RunConfig) -> Result<Artifacts> {
    let data = load_data(config)?;
    let mut art = Artifacts::default();
    let mut models = Vec::new();
    let mut trace_lines = String::new();
    for (i, spec) in method_specs(config)?.iter().enumerate() {
        let noise_seed = derive_seed(config.seed, &[label::NOISE, i as u64]);
        let trained = train_model(spec, &data, config.epsilon, &mut FmRng::from_seed(noise_seed))?;
        art.summary.push(format!(
            "{} {} n={} d={} epsilon={} spent={} omega = {}",
            spec.method,
            config.task,
            data.n(),
            data.d(),
            config.epsilon,
            trained.epsilon_spent,
            format_omega(&trained.omega)
        ));
        for t in &trained.traces {
            trace_lines.push_str(&to_json_line(&serde_json::json!({ "method": spec.method, "trace": t }))?);
        }
        models.push(serde_json::to_value(TrainRecord {
            method: spec.method,
            task: config.task,
            epsilon: config.epsilon,
            seed: config.seed,
            noise_seed,
            n: data.n(),
            d: data.d(),
            omega: &trained.omega,
            epsilon_spent: trained.epsilon_spent,
            repair: &trained.repair,
            traces: &trained.traces,
        })
        .map_err(json_err)?);
    }
    let json = serde_json::to_string_pretty(&models).map_err(json_err)?;
    art.write(config.output_dir.join("model.json"), &(json + "\n"))?;
    art.write(config.output_dir.join("traces.jsonl"), &trace_lines)?;
    art.write(config.output_dir.join("summary.txt"), &(art.summary.join("\n") + "\n"))?;
    Ok(art)
}

fn json_err(e: serde_json::Error) -> FmError {
    FmError::Numeric(format!("serialization: {e}"))
}

fn to_json_line(v: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string(v).map_err(json_err)? + "\n")
}

/// Cross-validate every method over the configured grid (or the single
/// configured epsilon) and write the report files.
pub fn bench(config: &RunConfig) -> Result<Artifacts> {
    let data = load_data(config)?;
    let grid = config.grid.clone().unwrap_or_else(|| SweepGrid {
        epsilons: vec![config.epsilon],
        sampling_rates: vec![1.0],
        attribute_subsets: Vec::new(),
    });
    let report = sweep(&grid, &data, &method_specs(config)?, config.k, config.repeats, config.seed)?;
    write_report(config, &report)
}

fn write_report(config: &RunConfig, report: &EvalReport) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    for a in &report.aggregates {
        art.summary.push(format!(
            "{} eps={} rate={} set={} d={} cells={} {} median={:.6} mean={:.6} sd={:.6}",
            a.method, a.epsilon, a.sampling_rate, a.attribute_set, a.d, a.count, report.metric, a.median, a.mean, a.stddev
        ));
    }
    let mut traces = String::new();
    for c in &report.cells {
        for t in &c.traces {
            traces.push_str(&to_json_line(&serde_json::json!({
                "method": c.method,
                "epsilon": c.epsilon,
                "sampling_rate": c.sampling_rate,
                "attribute_set": c.attribute_set,
                "repeat": c.repeat,
                "fold": c.fold,
                "trace": t,
            }))?);
        }
    }
    let dir = &config.output_dir;
    art.write(dir.join("report.json"), &(report.to_json()? + "\n"))?;
    art.write(dir.join("cells.csv"), &report.to_csv())?;
    art.write(dir.join("traces.jsonl"), &traces)?;
    art.write(dir.join("summary.txt"), &(art.summary.join("\n") + "\n"))?;
    art.write(dir.join("timings.csv"), &report.timings_csv())?;
    Ok(art)
}

/// Write the configured synthetic dataset as comma-separated text.
pub fn synth(config: &RunConfig, path: &Path) -> Result<Artifacts> {
    if !matches!(config.source, DataSource::Synth(_)) {
        return Err(FmError::Config("`synth` needs a [synth] table, not `data.input`".into()));
    }
    let data = load_data(config)?;
    let mut art = Artifacts::default();
    art.write(path.to_path_buf(), &data.to_csv())?;
    art.summary
        .push(format!("wrote {} records of dimension {} to {}", data.n(), data.d(), path.display()));
    Ok(art)
}

/// Run the quick invariant checks; fails with a numeric error if any check fails.
pub fn validate_suite(seed: u64, out: &mut impl Write) -> Result<Vec<CheckResult>> {
    let results = run_all(seed, 1_000, 1_000_000);
    for r in &results {
        writeln!(out, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)
            .map_err(|source| io_err(Path::new("<stdout>"), source))?;
    }
    if let Some(bad) = results.iter().find(|r| !r.passed) {
        return Err(FmError::Numeric(format!("invariant check `{}` failed", bad.name)));
    }
    Ok(results)
}
