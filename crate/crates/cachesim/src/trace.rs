//! Request workload generation and trace-file ingestion.
//!
//! The synthetic generator follows a Poisson arrival process over a catalogue
//! split in two classes: class 1 keeps a fixed within-class Zipf popularity
//! assignment for the whole trace, class 2 re-permutes its Zipf weights over
//! its content ids at every epoch boundary.

use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One content request. The atom of every trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestEvent {
    /// Seconds since trace start.
    pub time: f64,
    pub content_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub catalogue_size: usize,
    pub zipf_exponent: f64,
    /// Requests per second of the Poisson arrival process.
    pub arrival_rate: f64,
    /// Total trace length in seconds.
    pub duration: f64,
    /// Epoch duration T in seconds.
    pub epoch_duration: f64,
    /// Fraction of the catalogue assigned to class 1.
    pub class_split: f64,
    /// Fraction of class-2 contents whose popularity ranks are re-permuted at
    /// each epoch boundary. 1.0 redraws the whole class (fully unpredictable
    /// epoch to epoch); smaller values leave most ranks in place so recent
    /// counts stay informative.
    pub drift_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            catalogue_size: 10_000,
            zipf_exponent: 0.8,
            arrival_rate: 1000.0,
            duration: 2000.0,
            epoch_duration: 200.0,
            class_split: 0.5,
            drift_fraction: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.catalogue_size < 2 {
            return Err(Error::InvalidArgument("catalogue_size must be >= 2".into()));
        }
        if !(self.class_split > 0.0 && self.class_split < 1.0) {
            return Err(Error::InvalidArgument("class_split must be in (0, 1)".into()));
        }
        if !(self.arrival_rate > 0.0) {
            return Err(Error::InvalidArgument("arrival_rate must be > 0".into()));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(Error::InvalidArgument("zipf_exponent must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.drift_fraction) {
            return Err(Error::InvalidArgument(
                "drift_fraction must be in [0, 1]".into(),
            ));
        }
        if !(self.epoch_duration > 0.0) {
            return Err(Error::InvalidArgument("epoch_duration must be > 0".into()));
        }
        if !(self.duration >= 0.0) {
            return Err(Error::InvalidArgument("duration must be >= 0".into()));
        }
        Ok(())
    }

    /// Number of contents in class 1 (ids `0..class1_size`).
    pub fn class1_size(&self) -> usize {
        let n1 = (self.catalogue_size as f64 * self.class_split).round() as usize;
        n1.clamp(1, self.catalogue_size - 1)
    }
}

/// Normalized Zipf weights over ranks 1..=n: `w_i = i^-s / sum_j j^-s`.
pub fn zipf_weights(n: usize, s: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("zipf_weights: n must be >= 1".into()));
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument("zipf_weights: s must be >= 0".into()));
    }
    let mut weights: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Epoch index of an absolute time: `floor(time / t)`.
pub fn epoch_of(time: f64, t: f64) -> Result<u64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("epoch_of: T must be > 0".into()));
    }
    if !(time >= 0.0) {
        return Err(Error::InvalidArgument("epoch_of: time must be >= 0".into()));
    }
    Ok((time / t).floor() as u64)
}

/// Cumulative weights for inverse-transform sampling.
fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum = Vec::with_capacity(weights.len());
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    cum
}

fn sample_rank(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c < u).min(cum.len() - 1)
}

/// Iterator over the synthetic workload. Fully deterministic from the seed.
pub struct SyntheticTrace {
    cfg: SyntheticConfig,
    rng: ChaCha8Rng,
    time: f64,
    epoch: u64,
    class1_cum: Vec<f64>,
    class2_cum: Vec<f64>,
    /// Zipf rank within class 2 -> content id; reshuffled every epoch.
    class2_perm: Vec<u64>,
}

impl SyntheticTrace {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let n1 = cfg.class1_size();
        let n2 = cfg.catalogue_size - n1;
        let class1_cum = cumulative(&zipf_weights(n1, cfg.zipf_exponent)?);
        let class2_cum = cumulative(&zipf_weights(n2, cfg.zipf_exponent)?);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut class2_perm: Vec<u64> = (n1 as u64..cfg.catalogue_size as u64).collect();
        class2_perm.shuffle(&mut rng);
        Ok(Self {
            cfg,
            rng,
            time: 0.0,
            epoch: 0,
            class1_cum,
            class2_cum,
            class2_perm,
        })
    }
}

impl Iterator for SyntheticTrace {
    type Item = RequestEvent;

    fn next(&mut self) -> Option<RequestEvent> {
        let u: f64 = self.rng.random();
        self.time += -(1.0 - u).ln() / self.cfg.arrival_rate;
        if self.time >= self.cfg.duration {
            return None;
        }
        // Re-permute class 2 once per crossed epoch boundary, including
        // boundaries of epochs with no arrivals.
        let epoch = (self.time / self.cfg.epoch_duration).floor() as u64;
        while self.epoch < epoch {
            if self.cfg.drift_fraction >= 1.0 {
                self.class2_perm.shuffle(&mut self.rng);
            } else {
                // Permute only a random subset of the rank slots, leaving the
                // rest of the class in place.
                let n2 = self.class2_perm.len();
                let m = (self.cfg.drift_fraction * n2 as f64).round() as usize;
                if m >= 2 {
                    let slots = rand::seq::index::sample(&mut self.rng, n2, m);
                    let mut ids: Vec<u64> =
                        slots.iter().map(|i| self.class2_perm[i]).collect();
                    ids.shuffle(&mut self.rng);
                    for (slot, id) in slots.iter().zip(ids) {
                        self.class2_perm[slot] = id;
                    }
                }
            }
            self.epoch += 1;
        }
        // Each class carries half the total request mass.
        let content_id = if self.rng.random_bool(0.5) {
            let u: f64 = self.rng.random();
            sample_rank(&self.class1_cum, u) as u64
        } else {
            let u: f64 = self.rng.random();
            self.class2_perm[sample_rank(&self.class2_cum, u)]
        };
        Some(RequestEvent {
            time: self.time,
            content_id,
        })
    }
}

/// Reader for the CSV trace format: one `time,content_id` pair per line.
pub struct TraceReader<R> {
    reader: R,
    line: usize,
    previous_time: f64,
    buf: String,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: 0,
            previous_time: f64::NEG_INFINITY,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<RequestEvent>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line + 1,
                        message: e.to_string(),
                    }))
                }
            }
            self.line += 1;
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if trimmed.is_empty() {
                self.buf = line;
                continue;
            }
            let parsed = self.parse_line(trimmed);
            self.buf = line;
            return Some(parsed);
        }
    }
}

impl<R: BufRead> TraceReader<R> {
    fn parse_line(&mut self, line: &str) -> Result<RequestEvent> {
        let (time_str, id_str) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: self.line,
            message: format!("expected `time,content_id`, got {line:?}"),
        })?;
        let time: f64 = time_str.trim().parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("invalid time {time_str:?}"),
        })?;
        let content_id: u64 = id_str.trim().parse().map_err(|_| Error::Parse {
            line: self.line,
            message: format!("invalid content id {id_str:?}"),
        })?;
        if !time.is_finite() || time < 0.0 {
            return Err(Error::Parse {
                line: self.line,
                message: format!("time must be a finite non-negative number, got {time}"),
            });
        }
        if time < self.previous_time {
            return Err(Error::Ordering {
                line: self.line,
                time,
                previous: self.previous_time,
            });
        }
        self.previous_time = time;
        Ok(RequestEvent { time, content_id })
    }
}
