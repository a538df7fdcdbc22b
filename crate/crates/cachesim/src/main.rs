use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cachesim::engine::{self, PolicyChoice, RunConfig, TraceSource};
use cachesim::error::{Error, Result};
use cachesim::predictors::PredictorConfig;
use cachesim::trace::{SyntheticConfig, SyntheticTrace};

#[derive(Parser)]
#[command(
    name = "cachesim",
    about = "Trace-driven cache simulator with popularity-prediction, LRU and ARC policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trace file (CSV: time,content_id).
    GenTrace(GenTraceArgs),
    /// Simulate one policy over a trace and write metrics.
    Run(RunArgs),
    /// Run every requested policy over the identical trace and tabulate.
    Compare(CompareArgs),
    /// Train the predictors online (no cache) and report prediction MSE.
    EvalPredictors(EvalArgs),
}

#[derive(Args)]
struct GenTraceArgs {
    /// JSON file with the synthetic workload parameters.
    #[arg(long)]
    config: PathBuf,
    /// Output trace path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace length in seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON file mirroring the run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Policy override: fnn, lr, avg, lru or arc.
    #[arg(long)]
    policy: Option<String>,
    /// Cache capacity override (contents).
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics CSV destination (default metrics.csv).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// JSON summary destination (default summary.json).
    #[arg(long)]
    out_summary: Option<PathBuf>,
    /// Print one line per finished epoch to standard error.
    #[arg(long)]
    progress: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Capacity override applied to every policy.
    #[arg(long)]
    capacity: Option<usize>,
    /// JSON destination for the comparison table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON destination for the per-epoch detail.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareConfig {
    trace: TraceSource,
    capacity: usize,
    #[serde(default = "all_policies")]
    policies: Vec<PolicyChoice>,
    #[serde(default)]
    predictor: PredictorConfig,
    #[serde(default = "default_refresh_size")]
    refresh_size: usize,
    #[serde(default)]
    seed: u64,
}

fn all_policies() -> Vec<PolicyChoice> {
    PolicyChoice::ALL.to_vec()
}

fn default_refresh_size() -> usize {
    2
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfig {
    trace: TraceSource,
    #[serde(default)]
    predictor: PredictorConfig,
    #[serde(default)]
    seed: u64,
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_reader(file)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn gen_trace(args: GenTraceArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(duration) = args.duration {
        cfg.duration = duration;
    }
    let io_err = |source| Error::Io {
        path: args.out.clone(),
        source,
    };
    let tmp = args.out.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err)?);
        for ev in SyntheticTrace::new(cfg)? {
            writeln!(w, "{},{}", ev.time, ev.content_id).map_err(io_err)?;
        }
        w.into_inner().map_err(|e| io_err(e.into_error()))?.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, &args.out).map_err(io_err)
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg: RunConfig = load_config(&args.config)?;
    if let Some(policy) = &args.policy {
        cfg.policy = policy.parse()?;
    }
    if let Some(capacity) = args.capacity {
        cfg.capacity = capacity;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        if let TraceSource::Synthetic(s) = &mut cfg.trace {
            s.seed = seed;
        }
    }
    let progress = args.progress;
    let metrics = engine::run_with_progress(&cfg, &mut |row| {
        if progress {
            eprintln!(
                "epoch {} requests {} hits {} hit_rate {:.4}{}",
                row.epoch,
                row.requests,
                row.hits,
                row.hit_rate(),
                row.val_mse
                    .map(|v| format!(" val_mse {v:.4}"))
                    .unwrap_or_default(),
            );
        }
    })?;

    let csv_path = args
        .out_csv
        .or_else(|| cfg.metrics_out.clone())
        .unwrap_or_else(|| PathBuf::from("metrics.csv"));
    engine::write_atomic(&csv_path, &metrics.to_csv())?;

    let summary = serde_json::to_string_pretty(&metrics.summary_json(&cfg))
        .expect("summary serializes");
    let summary_path = args
        .out_summary
        .or_else(|| cfg.summary_out.clone())
        .unwrap_or_else(|| PathBuf::from("summary.json"));
    engine::write_atomic(&summary_path, &summary)?;
    println!("{summary}");
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let mut cfg: CompareConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        if let TraceSource::Synthetic(s) = &mut cfg.trace {
            s.seed = seed;
        }
    }
    if let Some(capacity) = args.capacity {
        cfg.capacity = capacity;
    }
    let runs: Vec<RunConfig> = cfg
        .policies
        .iter()
        .map(|&policy| RunConfig {
            trace: cfg.trace.clone(),
            policy,
            capacity: cfg.capacity,
            predictor: cfg.predictor.clone(),
            refresh_size: cfg.refresh_size,
            seed: cfg.seed,
            metrics_out: None,
            summary_out: None,
        })
        .collect();
    let table = engine::compare(&runs)?;
    println!("policy,capacity,hit_rate,mean_post_warmup_mse");
    for row in &table {
        println!(
            "{},{},{},{}",
            row.policy,
            row.capacity,
            row.hit_rate,
            row.mean_post_warmup_mse.map(|v| v.to_string()).unwrap_or_default(),
        );
    }
    if let Some(out) = args.out {
        let json = serde_json::to_string_pretty(&table).expect("table serializes");
        engine::write_atomic(&out, &json)?;
    }
    Ok(())
}

fn eval_predictors(args: EvalArgs) -> Result<()> {
    let mut cfg: EvalConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        if let TraceSource::Synthetic(s) = &mut cfg.trace {
            s.seed = seed;
        }
    }
    let rows = engine::eval_predictors(&cfg.trace, &cfg.predictor, cfg.seed)?;
    println!("predictor,mean_mse");
    for row in &rows {
        println!("{},{}", row.predictor, row.mean_mse);
    }
    if let Some(out) = args.out {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
        engine::write_atomic(&out, &json)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTrace(args) => gen_trace(args),
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::EvalPredictors(args) => eval_predictors(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
