//! The simulation loop: drives a request stream through feature store,
//! predictor and policy, handles epoch rollovers and end-of-epoch training,
//! and accumulates metrics.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::FeatureDb;
use crate::policies::{ArcState, HeapPolicy, LruState};
use crate::predictors::{Predictor, PredictorConfig, PredictorKind};
use crate::trace::{epoch_of, RequestEvent, SyntheticConfig, SyntheticTrace, TraceReader};

/// Seed perturbations giving each stochastic component its own RNG stream,
/// so policy randomness never perturbs the workload.
const REFRESH_STREAM: u64 = 0xc2b2_ae3d_27d4_eb4f;
const PREDICTOR_STREAM: u64 = 0x1656_67b1_9e37_79f9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TraceSource {
    Synthetic(SyntheticConfig),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    Fnn,
    Lr,
    Avg,
    Lru,
    Arc,
}

impl PolicyChoice {
    pub const ALL: [PolicyChoice; 5] = [
        PolicyChoice::Fnn,
        PolicyChoice::Lr,
        PolicyChoice::Avg,
        PolicyChoice::Arc,
        PolicyChoice::Lru,
    ];

    pub fn predictor_kind(&self) -> Option<PredictorKind> {
        match self {
            PolicyChoice::Fnn => Some(PredictorKind::Fnn),
            PolicyChoice::Lr => Some(PredictorKind::Lr),
            PolicyChoice::Avg => Some(PredictorKind::Avg),
            PolicyChoice::Lru | PolicyChoice::Arc => None,
        }
    }
}

impl std::fmt::Display for PolicyChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            PolicyChoice::Fnn => "fnn",
            PolicyChoice::Lr => "lr",
            PolicyChoice::Avg => "avg",
            PolicyChoice::Lru => "lru",
            PolicyChoice::Arc => "arc",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for PolicyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fnn" => Ok(PolicyChoice::Fnn),
            "lr" => Ok(PolicyChoice::Lr),
            "avg" => Ok(PolicyChoice::Avg),
            "lru" => Ok(PolicyChoice::Lru),
            "arc" => Ok(PolicyChoice::Arc),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trace: TraceSource,
    pub policy: PolicyChoice,
    pub capacity: usize,
    #[serde(default)]
    pub predictor: PredictorConfig,
    /// Residents whose keys are re-evaluated on every request.
    #[serde(default = "default_refresh_size")]
    pub refresh_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Metrics CSV destination; `None` keeps metrics in memory only.
    #[serde(default)]
    pub metrics_out: Option<PathBuf>,
    /// JSON summary destination.
    #[serde(default)]
    pub summary_out: Option<PathBuf>,
}

fn default_refresh_size() -> usize {
    2
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.predictor.validate()?;
        if let TraceSource::Synthetic(s) = &self.trace {
            s.validate()?;
            if s.epoch_duration != self.predictor.epoch_duration {
                return Err(Error::Config(format!(
                    "trace epoch_duration {} != predictor epoch_duration {}",
                    s.epoch_duration, self.predictor.epoch_duration
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub requests: u64,
    pub hits: u64,
    /// Mean training loss on the newest dataset during this boundary's
    /// training phase.
    pub train_mse: Option<f64>,
    /// Holdout MSE after training.
    pub val_mse: Option<f64>,
    /// MSE on this epoch's requests before training on them.
    pub pretrain_mse: Option<f64>,
}

impl EpochRow {
    pub fn hit_rate(&self) -> f64 {
        if self.requests == 0 {
            0.0
        } else {
            self.hits as f64 / self.requests as f64
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub policy: PolicyChoice,
    pub capacity: usize,
    pub seed: u64,
    pub rows: Vec<EpochRow>,
    pub total_requests: u64,
    pub total_hits: u64,
    /// (iteration, minibatch loss) across all training phases.
    pub train_curve: Vec<(u64, f64)>,
    /// (iteration, holdout MSE) at validation checkpoints.
    pub val_curve: Vec<(u64, f64)>,
    /// Epochs treated as warmup: while the K-epoch feature window is still
    /// zero-padded, prediction error reflects missing history, not the
    /// predictor.
    pub warmup_epochs: u64,
    pub wall_time: Duration,
}

impl Metrics {
    pub fn hit_rate(&self) -> f64 {
        if self.total_requests == 0 {
            0.0
        } else {
            self.total_hits as f64 / self.total_requests as f64
        }
    }

    /// Mean prediction MSE over the post-warmup epochs.
    pub fn mean_post_warmup_mse(&self) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.epoch >= self.warmup_epochs)
            .filter_map(|r| r.pretrain_mse)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    /// One CSV row per epoch: `epoch,requests,hits,hit_rate,train_mse,val_mse`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,requests,hits,hit_rate,train_mse,val_mse\n");
        for row in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.epoch,
                row.requests,
                row.hits,
                row.hit_rate(),
                fmt(row.train_mse),
                fmt(row.val_mse),
            ));
        }
        out
    }

    pub fn summary_json(&self, cfg: &RunConfig) -> serde_json::Value {
        serde_json::json!({
            "policy": self.policy.to_string(),
            "capacity": self.capacity,
            "seed": self.seed,
            "requests": self.total_requests,
            "hits": self.total_hits,
            "hit_rate": self.hit_rate(),
            "mean_post_warmup_mse": self.mean_post_warmup_mse(),
            "epochs": self.rows.len(),
            "wall_time_seconds": self.wall_time.as_secs_f64(),
            "config": cfg,
        })
    }
}

/// Write a file through a temporary sibling plus rename, so interrupted runs
/// never leave truncated output.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io_err = |source| Error::Io { path: path.to_path_buf(), source };
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err)?;
        f.write_all(contents.as_bytes()).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

enum EventStream {
    Synthetic(SyntheticTrace),
    File(TraceReader<BufReader<File>>),
}

impl Iterator for EventStream {
    type Item = Result<RequestEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            EventStream::Synthetic(s) => s.next().map(Ok),
            EventStream::File(r) => r.next(),
        }
    }
}

fn open_stream(source: &TraceSource) -> Result<EventStream> {
    match source {
        TraceSource::Synthetic(cfg) => Ok(EventStream::Synthetic(SyntheticTrace::new(cfg.clone())?)),
        TraceSource::File(path) => {
            let f = File::open(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            Ok(EventStream::File(TraceReader::new(BufReader::new(f))))
        }
    }
}

enum PolicyState {
    Lru(LruState),
    Arc(ArcState),
    Heap {
        policy: HeapPolicy,
        predictor: Predictor,
        db: FeatureDb,
    },
}

pub fn run(cfg: &RunConfig) -> Result<Metrics> {
    run_with_progress(cfg, &mut |_| {})
}

/// `run` with a per-epoch callback, used by the CLI progress flag.
pub fn run_with_progress(
    cfg: &RunConfig,
    progress: &mut dyn FnMut(&EpochRow),
) -> Result<Metrics> {
    cfg.validate()?;
    let start = Instant::now();
    let t = cfg.predictor.epoch_duration;
    let events = open_stream(&cfg.trace)?;
    let mut refresh_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ REFRESH_STREAM);

    let mut state = match cfg.policy.predictor_kind() {
        None => match cfg.policy {
            PolicyChoice::Lru => PolicyState::Lru(LruState::new(cfg.capacity)),
            PolicyChoice::Arc => PolicyState::Arc(ArcState::new(cfg.capacity)),
            _ => unreachable!(),
        },
        Some(kind) => PolicyState::Heap {
            policy: HeapPolicy::new(cfg.capacity, cfg.refresh_size),
            predictor: Predictor::new(kind, cfg.predictor.clone(), cfg.seed ^ PREDICTOR_STREAM)?,
            db: FeatureDb::new(cfg.predictor.k, t)?,
        },
    };

    let mut metrics = Metrics {
        policy: cfg.policy,
        capacity: cfg.capacity,
        seed: cfg.seed,
        rows: Vec::new(),
        total_requests: 0,
        total_hits: 0,
        train_curve: Vec::new(),
        val_curve: Vec::new(),
        warmup_epochs: cfg.predictor.k as u64,
        wall_time: Duration::ZERO,
    };
    let mut current_epoch = 0u64;
    let mut epoch_requests = 0u64;
    let mut epoch_hits = 0u64;

    let close_epoch = |state: &mut PolicyState,
                           metrics: &mut Metrics,
                           epoch: u64,
                           requests: u64,
                           hits: u64,
                           train: bool,
                           progress: &mut dyn FnMut(&EpochRow)|
     -> Result<()> {
        let mut row = EpochRow {
            epoch,
            requests,
            hits,
            train_mse: None,
            val_mse: None,
            pretrain_mse: None,
        };
        if train {
            if let PolicyState::Heap { predictor, db, .. } = state {
                let finalized = db.rollover();
                let report = predictor.end_epoch(&finalized)?;
                row.pretrain_mse = report.pretrain_mse;
                row.train_mse = report.dataset_losses.first().copied().filter(|x| x.is_finite());
                row.val_mse = report.val_loss;
                metrics.train_curve.extend(report.train_curve);
                metrics.val_curve.extend(report.val_curve);
            }
        }
        progress(&row);
        metrics.rows.push(row);
        Ok(())
    };

    for ev in events {
        let ev = ev?;
        let epoch = epoch_of(ev.time, t)?;
        // Multiple empty epochs between events roll over one at a time to
        // keep feature histories time-aligned.
        while current_epoch < epoch {
            close_epoch(
                &mut state,
                &mut metrics,
                current_epoch,
                epoch_requests,
                epoch_hits,
                true,
                progress,
            )?;
            epoch_requests = 0;
            epoch_hits = 0;
            current_epoch += 1;
        }

        let access = match &mut state {
            PolicyState::Lru(lru) => lru.access(ev.content_id),
            PolicyState::Arc(arc) => arc.access(ev.content_id),
            PolicyState::Heap { policy, predictor, db } => {
                let features = db.record_request(ev.content_id, ev.time)?;
                let t_in = (ev.time - current_epoch as f64 * t).clamp(0.0, t);
                let key = predictor.predict(&features, t_in)?;
                predictor.collect_sample(&features, t_in, ev.content_id)?;
                policy.on_request(
                    ev.content_id,
                    key,
                    |cid| {
                        let f = db.features(cid);
                        predictor.predict(&f, t_in).unwrap_or(0.0)
                    },
                    &mut refresh_rng,
                )
            }
        };
        epoch_requests += 1;
        metrics.total_requests += 1;
        if access.is_hit() {
            epoch_hits += 1;
            metrics.total_hits += 1;
        }
    }

    // Trailing partial epoch: counted, never trained on.
    if epoch_requests > 0 || metrics.rows.is_empty() {
        close_epoch(
            &mut state,
            &mut metrics,
            current_epoch,
            epoch_requests,
            epoch_hits,
            false,
            progress,
        )?;
    }

    metrics.wall_time = start.elapsed();
    Ok(metrics)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub policy: PolicyChoice,
    pub capacity: usize,
    pub hit_rate: f64,
    pub mean_post_warmup_mse: Option<f64>,
}

/// Run several configs over the identical event stream (regenerated per run
/// from the shared seed) and tabulate hit rates and prediction MSEs.
pub fn compare(cfgs: &[RunConfig]) -> Result<Vec<ComparisonRow>> {
    let first = cfgs
        .first()
        .ok_or_else(|| Error::InvalidArgument("compare: no configs".into()))?;
    for cfg in cfgs {
        if cfg.trace != first.trace || cfg.seed != first.seed {
            return Err(Error::InvalidArgument(
                "compare: all configs must share one trace source and seed".into(),
            ));
        }
    }
    cfgs.iter()
        .map(|cfg| {
            let m = run(cfg)?;
            Ok(ComparisonRow {
                policy: cfg.policy,
                capacity: cfg.capacity,
                hit_rate: m.hit_rate(),
                mean_post_warmup_mse: m.mean_post_warmup_mse(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictorEvalRow {
    pub predictor: PredictorKind,
    /// Transformed-space MSE per post-warmup epoch (the first K epochs are
    /// excluded), on each epoch's requests before training on them.
    pub per_epoch_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Mean training loss per epoch (network predictors).
    pub train_losses: Vec<f64>,
    /// (iteration, holdout MSE) checkpoints.
    pub val_curve: Vec<(u64, f64)>,
}

/// Train FNN and LR online over the trace with no cache involved and report
/// the per-predictor prediction MSE, AVG included.
pub fn eval_predictors(
    trace: &TraceSource,
    pcfg: &PredictorConfig,
    seed: u64,
) -> Result<Vec<PredictorEvalRow>> {
    pcfg.validate()?;
    let t = pcfg.epoch_duration;
    let kinds = [PredictorKind::Fnn, PredictorKind::Lr, PredictorKind::Avg];
    let mut predictors: Vec<Predictor> = kinds
        .iter()
        .map(|&k| Predictor::new(k, pcfg.clone(), seed ^ PREDICTOR_STREAM))
        .collect::<Result<_>>()?;
    let mut db = FeatureDb::new(pcfg.k, t)?;
    let mut per_epoch: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut train_losses: Vec<Vec<f64>> = vec![Vec::new(); kinds.len()];
    let mut val_curves: Vec<Vec<(u64, f64)>> = vec![Vec::new(); kinds.len()];
    let mut current_epoch = 0u64;

    let boundary = |predictors: &mut Vec<Predictor>,
                        db: &mut FeatureDb,
                        per_epoch: &mut Vec<Vec<f64>>,
                        train_losses: &mut Vec<Vec<f64>>,
                        val_curves: &mut Vec<Vec<(u64, f64)>>|
     -> Result<()> {
        let finalized = db.rollover();
        for (i, p) in predictors.iter_mut().enumerate() {
            let report = p.end_epoch(&finalized)?;
            if let Some(mse) = report.pretrain_mse {
                per_epoch[i].push(mse);
            }
            if let Some(&l) = report.dataset_losses.first() {
                train_losses[i].push(l);
            }
            val_curves[i].extend(report.val_curve);
        }
        Ok(())
    };

    for ev in open_stream(trace)? {
        let ev = ev?;
        let epoch = epoch_of(ev.time, t)?;
        while current_epoch < epoch {
            boundary(
                &mut predictors,
                &mut db,
                &mut per_epoch,
                &mut train_losses,
                &mut val_curves,
            )?;
            current_epoch += 1;
        }
        let features = db.record_request(ev.content_id, ev.time)?;
        let t_in = (ev.time - current_epoch as f64 * t).clamp(0.0, t);
        for p in &mut predictors {
            p.collect_sample(&features, t_in, ev.content_id)?;
        }
    }
    if current_epoch < 1 {
        return Err(Error::UndefinedResult(
            "eval_predictors needs a trace spanning at least 2 epochs".into(),
        ));
    }
    // Close the final full epoch so its samples score the predictors too.
    boundary(
        &mut predictors,
        &mut db,
        &mut per_epoch,
        &mut train_losses,
        &mut val_curves,
    )?;

    Ok(kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            // The first K epochs are warmup: the feature window is still
            // zero-padded, so the scores reflect missing history.
            let scored: Vec<f64> = per_epoch[i].iter().skip(pcfg.k).copied().collect();
            let mean = if scored.is_empty() {
                f64::NAN
            } else {
                scored.iter().sum::<f64>() / scored.len() as f64
            };
            PredictorEvalRow {
                predictor: kind,
                per_epoch_mse: scored,
                mean_mse: mean,
                train_losses: train_losses[i].clone(),
                val_curve: val_curves[i].clone(),
            }
        })
        .collect())
}
