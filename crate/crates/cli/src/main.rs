//! `droptune`: run tuning experiments, compare strategies, rebuild reports.
//!
//! Exit codes: 0 success, 2 bad config, 3 backend or run failure,
//! 4 missing or corrupt trial log.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use droptune_core::log::{self, JsonlWriter, TrialSink};
use droptune_core::measure::{
    compare, rank_sum_p, Backend, Comparison, Landscape, NativeBackend, SyntheticBackend,
};
use droptune_core::scheduler::{tune_layers, tune_model, Layer, ModelReport};
use droptune_core::search::Strategy;
use droptune_core::{Coordinate, Error, Sample};
use serde::Serialize;

use config::{BackendConfig, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "droptune",
    version,
    about = "Kernel schedule autotuning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured strategy and write trials.jsonl, report.json,
    /// layers.csv, summary.csv and convergence.csv.
    Tune { config: PathBuf },
    /// Run several strategies on the same budgets and seed; writes compare.csv.
    Compare {
        config: PathBuf,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<String>,
    },
    /// Rebuild summary.csv and convergence.csv from a run's trials.jsonl.
    Report { dir: PathBuf },
}

struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        err: e.into(),
    }
}

fn run_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 3,
        err: e.into(),
    }
}

fn log_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 4,
        err: e.into(),
    }
}

/// Core errors raised while running: configuration problems keep exit 2.
fn core_err(e: Error) -> Failure {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidParam { .. }
        | Error::InvalidWorkload { .. }
        | Error::NoTasks
        | Error::EmptyPopulation => config_err(e),
        e => run_err(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tune { config } => tune(&config),
        Command::Compare { config, strategies } => compare_cmd(&config, &strategies),
        Command::Report { dir } => report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<(ExperimentConfig, PathBuf), Failure> {
    ExperimentConfig::load(path).map_err(config_err)
}

fn make_backend(cfg: &ExperimentConfig) -> Box<dyn Backend> {
    match &cfg.backend {
        BackendConfig::Native => Box::new(NativeBackend::new()),
        BackendConfig::Synthetic(spec) => Box::new(SyntheticBackend::new(*spec)),
    }
}

fn experiment(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    sink: &mut dyn TrialSink,
) -> Result<ModelReport, Failure> {
    if let Some(space) = &cfg.space {
        let BackendConfig::Synthetic(spec) = &cfg.backend else {
            return Err(config_err(ConfigError(
                "backend: a bare space needs the synthetic backend".into(),
            )));
        };
        let land = Landscape::new(space.clone(), spec.family, spec.seed)
            .with_invalid_fraction(spec.invalid_fraction)
            .and_then(|l| l.with_noise(spec.noise_rel))
            .map_err(core_err)?;
        let layers = [Layer {
            id: "space".into(),
            weight: 1.0,
            objective: &land,
        }];
        return tune_layers(
            &layers,
            strategy,
            cfg.budgets,
            &cfg.measure,
            &cfg.params,
            cfg.rng_seed,
            sink,
        )
        .map_err(core_err);
    }
    let backend = make_backend(cfg);
    tune_model(
        &cfg.tasks,
        strategy,
        cfg.budgets,
        backend.as_ref(),
        cfg.target(),
        &cfg.measure,
        &cfg.params,
        cfg.rng_seed,
        sink,
    )
    .map_err(core_err)
}

fn backend_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.backend {
        BackendConfig::Native => "native",
        BackendConfig::Synthetic(_) => "synthetic",
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("output_dir: cannot create {}", dir.display()))
        .map_err(config_err)
}

/// Runs one strategy, logging every trial to `dir/trials.jsonl`.
fn logged_run(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    dir: &Path,
) -> Result<(ModelReport, f64), Failure> {
    create_dir(dir)?;
    let path = dir.join("trials.jsonl");
    let file = File::create(&path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(run_err)?;
    let mut sink = JsonlWriter::new(BufWriter::new(file));
    let t = Instant::now();
    let report = experiment(cfg, strategy, &mut sink)?;
    Ok((report, t.elapsed().as_secs_f64()))
}

#[derive(Serialize)]
struct WallTimes {
    explore_s: f64,
    exploit_s: f64,
    total_s: f64,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a ExperimentConfig,
    backend: &'static str,
    target: droptune_core::Target,
    wall: WallTimes,
    model: &'a ModelReport,
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn tune(path: &Path) -> Result<(), Failure> {
    let (cfg, dir) = load(path)?;
    cfg.validate_for(cfg.strategy).map_err(config_err)?;
    let (model, total_s) = logged_run(&cfg, cfg.strategy, &dir)?;
    let out = RunReport {
        config: &cfg,
        backend: backend_name(&cfg),
        target: cfg.target(),
        wall: WallTimes {
            explore_s: model.explore_wall.as_secs_f64(),
            exploit_s: model.exploit_wall.as_secs_f64(),
            total_s,
        },
        model: &model,
    };
    write_json(&dir.join("report.json"), &out).map_err(run_err)?;
    write_csv(&dir.join("layers.csv"), &model.rows()).map_err(run_err)?;
    derive_reports(&dir)?;
    for row in model.rows() {
        let cost = row
            .best_cost_ns
            .map_or("none".to_string(), |c| format!("{c:.1} ns"));
        println!(
            "{}: best {cost} ({} {}) after {} trials",
            row.layer_id, row.best_sketch, row.best_coord, row.trials
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

/// summary.csv and convergence.csv, both from the trial log alone.
fn derive_reports(dir: &Path) -> Result<(), Failure> {
    let path = dir.join("trials.jsonl");
    let file = File::open(&path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(log_err)?;
    let records = log::read_log(BufReader::new(file))
        .with_context(|| format!("{}", path.display()))
        .map_err(log_err)?;
    write_csv(&dir.join("summary.csv"), &log::summarize(&records)).map_err(run_err)?;
    write_csv(&dir.join("convergence.csv"), &log::convergence(&records)).map_err(run_err)?;
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    derive_reports(dir)?;
    println!(
        "wrote {} and {}",
        dir.join("summary.csv").display(),
        dir.join("convergence.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    strategy: String,
    best_cost_ns: Option<f64>,
    trials: usize,
    wall_s: f64,
    /// Rank-sum p-value against the best strategy; empty on the best row.
    p_value: Option<f64>,
    /// `best`, `tie` or `worse`, at `alpha_report`.
    significance: String,
}

/// Timings of the whole model: per repeat, the weighted sum over layers of
/// each layer's best sample.
fn model_sample(m: &ModelReport) -> Sample {
    let empty = Coordinate::new(Vec::new());
    let mut total: Option<Vec<f64>> = None;
    for l in &m.layers {
        let Some(best) = l.best.as_ref().filter(|t| t.sample.is_ok()) else {
            return Sample::failed(empty, droptune_core::Status::Invalid);
        };
        let t = &best.sample.timings;
        let acc = total.get_or_insert_with(|| vec![0.0; t.len()]);
        if acc.len() != t.len() {
            return Sample::failed(empty, droptune_core::Status::Invalid);
        }
        for (a, x) in acc.iter_mut().zip(t) {
            *a += l.weight * x;
        }
    }
    match total {
        Some(t) => Sample::ok(empty, t),
        None => Sample::failed(empty, droptune_core::Status::Invalid),
    }
}

fn compare_cmd(path: &Path, names: &[String]) -> Result<(), Failure> {
    let (cfg, dir) = load(path)?;
    let mut strategies = Vec::new();
    for n in names {
        let s: Strategy = n
            .trim()
            .parse()
            .map_err(|e| config_err(anyhow!("--strategies: {e}")))?;
        if strategies.contains(&s) {
            return Err(config_err(anyhow!("--strategies: `{s}` given twice")));
        }
        cfg.validate_for(s).map_err(config_err)?;
        strategies.push(s);
    }
    let mut runs = Vec::new();
    for &s in &strategies {
        let (model, wall) = logged_run(&cfg, s, &dir.join(s.name()))?;
        runs.push((s, model_sample(&model), model.total_trials, wall));
    }
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].1.cost.total_cmp(&runs[b].1.cost).then(a.cmp(&b)))
        .expect("non-empty");
    let alpha = cfg.measure.alpha_report;
    let mut rows: Vec<CompareRow> = runs
        .iter()
        .enumerate()
        .map(|(i, (s, sample, trials, wall))| {
            let (p_value, significance) = if i == best {
                (None, "best")
            } else if !sample.is_ok() {
                (None, "worse")
            } else {
                let p = rank_sum_p(&runs[best].1.timings, &sample.timings).ok();
                let tie = compare(&runs[best].1, sample, alpha) != Comparison::FirstBetter;
                (p, if tie { "tie" } else { "worse" })
            };
            CompareRow {
                strategy: s.name().to_string(),
                best_cost_ns: sample.cost.is_finite().then_some(sample.cost),
                trials: *trials,
                wall_s: *wall,
                p_value,
                significance: significance.to_string(),
            }
        })
        .collect();
    if rows.iter().any(|r| r.significance == "tie") {
        rows[best].significance = "tie".into();
    }
    write_csv(&dir.join("compare.csv"), &rows).map_err(run_err)?;
    for r in &rows {
        let cost = r
            .best_cost_ns
            .map_or("none".to_string(), |c| format!("{c:.1} ns"));
        println!(
            "{:<10} {cost:>16} {:>6} trials  {}",
            r.strategy, r.trials, r.significance
        );
    }
    println!("wrote {}", dir.join("compare.csv").display());
    Ok(())
}
