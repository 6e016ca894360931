//! Wall-clock latency of each width on the build host.

use std::hint::black_box;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::OperatingPoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ActiveConfig, GroupModel};

/// Inferences discarded before timing each width.
pub const HOST_WARMUP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostLatency {
    pub k: usize,
    /// Median over repetitions of the per-repetition mean, ms.
    pub median_of_means_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub samples: usize,
}

impl HostLatency {
    pub fn to_point(&self, accuracy: Option<f64>) -> OperatingPoint {
        OperatingPoint {
            platform: "host".into(),
            core: "host".into(),
            freq_hz: 0,
            config_k: self.k,
            latency_ms: self.median_of_means_ms,
            power_mw: None,
            accuracy,
        }
    }
}

fn elapsed(start: Instant) -> Result<Duration> {
    Instant::now()
        .checked_duration_since(start)
        .ok_or_else(|| Error::Measurement("clock went backwards".into()))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Times single-image inference for every trained width, serially on the
/// calling thread. Each repetition runs every sample image once.
pub fn profile_host(model: &GroupModel, sample: &Dataset, repetitions: usize) -> Result<Vec<HostLatency>> {
    if repetitions < 3 {
        return Err(Error::Input(format!("need at least 3 repetitions, got {repetitions}")));
    }
    if sample.is_empty() {
        return Err(Error::Input("profiling sample is empty".into()));
    }
    if model.trained_groups == 0 {
        return Err(Error::Config("model has no trained groups".into()));
    }
    let mut out = Vec::with_capacity(model.trained_groups);
    for k in 1..=model.trained_groups {
        let cfg = ActiveConfig::new(k)?;
        for img in sample.images.iter().cycle().take(HOST_WARMUP) {
            black_box(model.forward(img, cfg)?);
        }
        let mut singles = Vec::with_capacity(repetitions * sample.len());
        let mut means = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let mut total = 0.0;
            for img in &sample.images {
                let start = Instant::now();
                black_box(model.forward(black_box(img), cfg)?);
                let t = ms(elapsed(start)?);
                total += t;
                singles.push(t);
            }
            means.push(total / sample.len() as f64);
        }
        if singles.iter().all(|&t| t == 0.0) {
            return Err(Error::Measurement("timer resolution too coarse: all samples are zero".into()));
        }
        means.sort_by(f64::total_cmp);
        singles.sort_by(f64::total_cmp);
        let median = if means.len() % 2 == 1 {
            means[means.len() / 2]
        } else {
            (means[means.len() / 2 - 1] + means[means.len() / 2]) / 2.0
        };
        let p95_idx = ((singles.len() as f64 * 0.95).ceil() as usize).clamp(1, singles.len()) - 1;
        out.push(HostLatency {
            k,
            median_of_means_ms: median,
            mean_ms: singles.iter().sum::<f64>() / singles.len() as f64,
            p95_ms: singles[p95_idx],
            samples: singles.len(),
        });
    }
    Ok(out)
}
