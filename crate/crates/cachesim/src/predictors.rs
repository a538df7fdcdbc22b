//! Popularity predictors: the feedforward network, its activation-free
//! linear variant, and the averaging baseline, behind one interface.
//!
//! Popularities enter the network through the transform `F(p) = -ln(p + c)`,
//! and predictions leave through its inverse. Training happens at epoch
//! boundaries with discounted replay over the last `H` epoch datasets.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::{GradientSet, Mlp};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Epochs per feature vector.
    pub k: usize,
    /// Constant in the logarithmic transform.
    pub c: f64,
    /// Leaky ReLU negative slope.
    pub alpha: f64,
    /// Learning rate.
    pub eta: f64,
    /// Replay learning-rate discount.
    pub gamma: f64,
    /// Number of past epoch datasets replayed at each training phase.
    pub h: usize,
    /// Epoch duration T in seconds.
    pub epoch_duration: f64,
    /// Requests per training iteration.
    pub batch_size: usize,
    /// Holdout share of the newest epoch dataset.
    pub validation_fraction: f64,
    pub hidden_layers: Vec<usize>,
    /// Per-epoch dataset size bound; oldest samples are dropped beyond it.
    pub dataset_cap: usize,
    /// Iteration spacing of validation-loss checkpoints.
    pub val_check_interval: u64,
    /// Iteration beyond which validation checkpoints stop being recorded.
    pub val_curve_limit: u64,
    /// Cap on the global L2 norm of each minibatch gradient; `None` disables
    /// clipping. Zero-popularity features transform to -ln(c) ≈ 34.5, and the
    /// occasional minibatch full of them carries gradients large enough to
    /// destabilize plain SGD, so clipping defaults to on.
    pub grad_clip: Option<f64>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            k: 4,
            c: 1e-15,
            alpha: 1e-2,
            eta: 1e-4,
            gamma: 0.5,
            h: 9,
            epoch_duration: 200.0,
            batch_size: 8,
            validation_fraction: 0.1,
            hidden_layers: vec![128, 128],
            dataset_cap: 200_000,
            val_check_interval: 50,
            val_curve_limit: 1000,
            grad_clip: Some(3.0),
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config("c must be > 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must be in (0, 1]".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.epoch_duration > 0.0) {
            return Err(Error::Config("epoch_duration must be > 0".into()));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip > 0.0) {
                return Err(Error::Config("grad_clip must be > 0 when set".into()));
            }
        }
        Ok(())
    }
}

/// `F(p) = -ln(p + c)`.
pub fn transform(p: f64, c: f64) -> f64 {
    -(p + c).ln()
}

/// `F^-1(y) = max(0, e^-y - c)`.
pub fn inverse_transform(y: f64, c: f64) -> f64 {
    ((-y).exp() - c).max(0.0)
}

/// Network input `[t/T, F(p_-(K-1)), ..., F(p_0)]`.
pub fn build_input(features: &[f64], t: f64, cfg: &PredictorConfig) -> Result<Vec<f64>> {
    if features.len() != cfg.k {
        return Err(Error::Shape(format!(
            "build_input: {} features, expected K = {}",
            features.len(),
            cfg.k
        )));
    }
    if !(0.0..=cfg.epoch_duration).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "build_input: t = {t} outside [0, {}]",
            cfg.epoch_duration
        )));
    }
    let mut input = Vec::with_capacity(cfg.k + 1);
    input.push(t / cfg.epoch_duration);
    input.extend(features.iter().map(|&p| transform(p, cfg.c)));
    Ok(input)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Fnn,
    Lr,
    Avg,
}

impl std::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredictorKind::Fnn => write!(f, "fnn"),
            PredictorKind::Lr => write!(f, "lr"),
            PredictorKind::Avg => write!(f, "avg"),
        }
    }
}

/// One request's snapshot, resolved into a regression target at rollover.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    /// K+1 network inputs.
    pub input: Vec<f64>,
    /// Mean of the K raw feature popularities, used by the AVG predictor.
    pub raw_mean: f64,
    /// Transformed end-of-epoch popularity.
    pub target: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EpochDataset {
    pub samples: Vec<TrainingSample>,
}

#[derive(Debug, Clone)]
struct PendingSample {
    content_id: u64,
    input: Vec<f64>,
    raw_mean: f64,
}

/// Outcome of one end-of-epoch training phase.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    /// MSE of the predictor on the just-finished epoch, before training on it.
    pub pretrain_mse: Option<f64>,
    /// Mean minibatch training loss per replayed dataset (newest first).
    pub dataset_losses: Vec<f64>,
    /// Holdout MSE after training.
    pub val_loss: Option<f64>,
    /// (iteration, minibatch loss) for every training iteration.
    pub train_curve: Vec<(u64, f64)>,
    /// (iteration, holdout MSE) at checkpoint iterations.
    pub val_curve: Vec<(u64, f64)>,
}

pub struct Predictor {
    kind: PredictorKind,
    cfg: PredictorConfig,
    net: Option<Mlp>,
    pending: Vec<PendingSample>,
    /// Front is the newest finalized epoch.
    datasets: VecDeque<EpochDataset>,
    iteration: u64,
    rng: ChaCha8Rng,
}

impl Predictor {
    pub fn new(kind: PredictorKind, cfg: PredictorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let net = match kind {
            PredictorKind::Avg => None,
            PredictorKind::Fnn | PredictorKind::Lr => {
                let mut dims = vec![cfg.k + 1];
                dims.extend(&cfg.hidden_layers);
                dims.push(1);
                Some(Mlp::init(
                    &dims,
                    kind == PredictorKind::Fnn,
                    cfg.alpha,
                    seed,
                )?)
            }
        };
        Ok(Self {
            kind,
            cfg,
            net,
            pending: Vec::new(),
            datasets: VecDeque::new(),
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_STREAM),
        })
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn network(&self) -> Option<&Mlp> {
        self.net.as_ref()
    }

    pub fn datasets(&self) -> &VecDeque<EpochDataset> {
        &self.datasets
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Estimated current-epoch popularity, clamped to [0, 1].
    pub fn predict(&self, features: &[f64], t: f64) -> Result<f64> {
        match (&self.kind, &self.net) {
            (PredictorKind::Avg, _) => {
                let mean = features.iter().sum::<f64>() / features.len().max(1) as f64;
                Ok(mean.clamp(0.0, 1.0))
            }
            (_, Some(net)) => {
                let input = build_input(features, t, &self.cfg)?;
                let y = net.evaluate(&input)?[0];
                Ok(inverse_transform(y, self.cfg.c).clamp(0.0, 1.0))
            }
            _ => unreachable!("network predictors always carry a network"),
        }
    }

    /// Store one unresolved training sample for this request.
    pub fn collect_sample(&mut self, features: &[f64], t: f64, content_id: u64) -> Result<()> {
        let input = build_input(features, t, &self.cfg)?;
        let raw_mean = features.iter().sum::<f64>() / features.len() as f64;
        self.pending.push(PendingSample {
            content_id,
            input,
            raw_mean,
        });
        if self.pending.len() > self.cfg.dataset_cap {
            self.pending.remove(0);
        }
        Ok(())
    }

    /// Transformed-space MSE of this predictor over a resolved dataset.
    pub fn eval_mse(&self, dataset: &EpochDataset) -> Result<f64> {
        if dataset.samples.is_empty() {
            return Err(Error::UndefinedResult("eval_mse over an empty dataset".into()));
        }
        let mut sum = 0.0;
        for s in &dataset.samples {
            let y = match &self.net {
                Some(net) => net.evaluate(&s.input)?[0],
                None => transform(s.raw_mean, self.cfg.c),
            };
            sum += (y - s.target) * (y - s.target);
        }
        Ok(sum / dataset.samples.len() as f64)
    }

    /// Resolve the epoch's pending samples against the finalized popularity
    /// map, then run the discounted-replay training phase.
    pub fn end_epoch(&mut self, finalized: &HashMap<u64, f64>) -> Result<TrainReport> {
        let samples: Vec<TrainingSample> = self
            .pending
            .drain(..)
            .map(|p| {
                let popularity = finalized.get(&p.content_id).copied().unwrap_or(0.0);
                TrainingSample {
                    target: transform(popularity, self.cfg.c),
                    input: p.input,
                    raw_mean: p.raw_mean,
                }
            })
            .collect();
        let dataset = EpochDataset { samples };

        let mut report = TrainReport {
            pretrain_mse: if dataset.samples.is_empty() {
                None
            } else {
                Some(self.eval_mse(&dataset)?)
            },
            ..Default::default()
        };

        self.datasets.push_front(dataset);
        self.datasets.truncate(self.cfg.h + 1);

        if self.net.is_some() {
            self.train(&mut report)?;
        }
        Ok(report)
    }

    fn holdout_stride(&self) -> Option<usize> {
        if self.cfg.validation_fraction > 0.0 {
            Some(((1.0 / self.cfg.validation_fraction).round() as usize).max(2))
        } else {
            None
        }
    }

    /// Deterministic holdout: every stride-th sample of the newest dataset.
    fn validation_indices(&self) -> Vec<usize> {
        match self.holdout_stride() {
            Some(stride) => (0..self.datasets[0].samples.len())
                .filter(|i| i % stride == 0)
                .collect(),
            None => Vec::new(),
        }
    }

    fn validation_mse(&self, val_indices: &[usize]) -> Result<Option<f64>> {
        if val_indices.is_empty() {
            return Ok(None);
        }
        let net = self.net.as_ref().unwrap();
        let samples = &self.datasets[0].samples;
        let mut sum = 0.0;
        for &i in val_indices {
            let y = net.evaluate(&samples[i].input)?[0];
            sum += (y - samples[i].target) * (y - samples[i].target);
        }
        Ok(Some(sum / val_indices.len() as f64))
    }

    fn train(&mut self, report: &mut TrainReport) -> Result<()> {
        let val_indices = self.validation_indices();
        let n_datasets = self.datasets.len();
        let mut grads = GradientSet::zeros_like(self.net.as_ref().unwrap());

        for d in 0..n_datasets {
            let lr = self.cfg.gamma.powi(d as i32) * self.cfg.eta;
            let mut indices: Vec<usize> = if d == 0 {
                let stride = self.holdout_stride();
                (0..self.datasets[0].samples.len())
                    .filter(|i| stride.is_none_or(|s| i % s != 0))
                    .collect()
            } else {
                (0..self.datasets[d].samples.len()).collect()
            };
            if indices.is_empty() {
                report.dataset_losses.push(f64::NAN);
                continue;
            }
            indices.shuffle(&mut self.rng);

            let mut loss_sum = 0.0;
            let mut batches = 0u64;
            for batch in indices.chunks(self.cfg.batch_size) {
                grads.reset();
                let mut batch_loss = 0.0;
                {
                    let net = self.net.as_ref().unwrap();
                    let samples = &self.datasets[d].samples;
                    for &i in batch {
                        let (_, cache) = net.forward(&samples[i].input)?;
                        batch_loss +=
                            net.backward_into(&cache, &[samples[i].target], &mut grads)?;
                    }
                }
                // Gradients are summed over the minibatch (one iteration
                // processes the whole batch at rate eta); the reported loss
                // stays a per-sample mean.
                if let Some(clip) = self.cfg.grad_clip {
                    grads.clip_l2_norm(clip);
                }
                batch_loss /= batch.len() as f64;
                self.net.as_mut().unwrap().sgd_step(&grads, lr)?;

                self.iteration += 1;
                loss_sum += batch_loss;
                batches += 1;
                report.train_curve.push((self.iteration, batch_loss));
                if self.iteration % self.cfg.val_check_interval == 0
                    && self.iteration <= self.cfg.val_curve_limit
                {
                    if let Some(v) = self.validation_mse(&val_indices)? {
                        report.val_curve.push((self.iteration, v));
                    }
                }
            }
            report.dataset_losses.push(loss_sum / batches as f64);
        }
        report.val_loss = self.validation_mse(&val_indices)?;
        Ok(())
    }
}

/// Seed perturbation so the shuffle stream differs from the init stream.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
