//! Budget-driven selection of operating points.
//!
//! A platform is described declaratively as a list of measured
//! `(core, frequency, width)` points. Nothing here touches real DVFS or
//! affinity controls; the governor only decides.

mod host;
mod profile;
mod xu3;

pub use host::{profile_host, HostLatency, HOST_WARMUP};
pub use profile::{load_profile, parse_profile, save_profile, write_profile, PROFILE_HEADER};
pub use xu3::{synthetic_xu3, XU3_A15_LEVELS_MHZ, XU3_A7_LEVELS_MHZ};

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub platform: String,
    pub core: String,
    pub freq_hz: u64,
    pub config_k: usize,
    pub latency_ms: f64,
    pub power_mw: Option<f64>,
    pub accuracy: Option<f64>,
}

impl OperatingPoint {
    /// `latency_ms * power_mw / 1000`, when power is known.
    pub fn energy_mj(&self) -> Option<f64> {
        self.power_mw.map(|p| self.latency_ms * p / 1000.0)
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Time => Some(self.latency_ms),
            Metric::Power => self.power_mw,
            Metric::Energy => self.energy_mj(),
        }
    }

    /// Short label such as `A15@1800MHz/k4`.
    pub fn label(&self) -> String {
        format!("{}@{}MHz/k{}", self.core, self.freq_hz / 1_000_000, self.config_k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Metric {
    Time,
    Power,
    Energy,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Time, Metric::Power, Metric::Energy];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Time => "time_ms",
            Metric::Power => "power_mw",
            Metric::Energy => "energy_mj",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" | "time_ms" => Ok(Metric::Time),
            "power" | "power_mw" => Ok(Metric::Power),
            "energy" | "energy_mj" => Ok(Metric::Energy),
            other => Err(Error::Config(format!("unknown budget metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub metric: Metric,
    pub limit: f64,
}

impl Budget {
    pub fn new(metric: Metric, limit: f64) -> Result<Self> {
        if !limit.is_finite() || limit <= 0.0 {
            return Err(Error::Config(format!("budget limit must be finite and > 0, got {limit}")));
        }
        Ok(Self { metric, limit })
    }
}

/// Which runtime knobs the governor may turn. A disabled knob is held at a
/// fixed setting: full width for `config`, the pinned (or first listed) core
/// for `mapping`, and the pinned (or highest) frequency of each core for `dvfs`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Knobs {
    pub config: bool,
    pub dvfs: bool,
    pub mapping: bool,
    pub pinned_core: Option<String>,
    pub pinned_freq_hz: Option<u64>,
}

impl Knobs {
    pub fn config_only() -> Self {
        Self { config: true, ..Self::default() }
    }

    pub fn config_dvfs() -> Self {
        Self { config: true, dvfs: true, ..Self::default() }
    }

    pub fn all() -> Self {
        Self { config: true, dvfs: true, mapping: true, ..Self::default() }
    }

    pub fn on_core(mut self, core: &str) -> Self {
        self.pinned_core = Some(core.to_string());
        self
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.config {
            parts.push("config");
        }
        if self.dvfs {
            parts.push("dvfs");
        }
        if self.mapping {
            parts.push("map");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }

    fn intersect(&self, available: &KnobAvailability) -> Knobs {
        Knobs {
            config: self.config && available.config,
            dvfs: self.dvfs && available.dvfs,
            mapping: self.mapping && available.mapping,
            ..self.clone()
        }
    }
}

impl FromStr for Knobs {
    type Err = Error;

    /// `config`, `config+dvfs`, `config+dvfs+map` or any `+`-joined subset.
    fn from_str(s: &str) -> Result<Self> {
        let mut k = Knobs::default();
        for part in s.split('+').map(str::trim) {
            match part {
                "config" => k.config = true,
                "dvfs" => k.dvfs = true,
                "map" | "mapping" => k.mapping = true,
                "none" | "" => {}
                other => return Err(Error::Config(format!("unknown knob {other:?}"))),
            }
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnobAvailability {
    pub config: bool,
    pub dvfs: bool,
    pub mapping: bool,
}

impl Default for KnobAvailability {
    fn default() -> Self {
        Self { config: true, dvfs: true, mapping: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatformProfile {
    pub name: String,
    pub points: Vec<OperatingPoint>,
    pub available: KnobAvailability,
}

impl PlatformProfile {
    /// Validates uniqueness of `(core, freq, k)`, positivity, and a single
    /// accuracy per width.
    pub fn new(name: impl Into<String>, points: Vec<OperatingPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("profile has no operating points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            let line = i + 2;
            check_point(p, line)?;
            if points[..i]
                .iter()
                .any(|q| q.core == p.core && q.freq_hz == p.freq_hz && q.config_k == p.config_k)
            {
                return Err(Error::DuplicatePoint {
                    line,
                    core: p.core.clone(),
                    freq_hz: p.freq_hz,
                    k: p.config_k,
                });
            }
        }
        let profile = Self {
            name: name.into(),
            points,
            available: KnobAvailability::default(),
        };
        profile.check_accuracy()?;
        Ok(profile)
    }

    fn check_accuracy(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            let Some(a) = p.accuracy else { continue };
            if let Some(b) = self.points[..i]
                .iter()
                .filter(|q| q.config_k == p.config_k)
                .find_map(|q| q.accuracy.filter(|&b| b != a))
            {
                return Err(Error::InconsistentAccuracy { k: p.config_k, first: b, second: a });
            }
        }
        Ok(())
    }

    pub fn max_k(&self) -> usize {
        self.points.iter().map(|p| p.config_k).max().unwrap_or(0)
    }

    pub fn cores(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.core.as_str()) {
                out.push(&p.core);
            }
        }
        out
    }

    /// Fills in accuracy per width, replacing values already present.
    /// `accuracy[k - 1]` is used for points at width `k`.
    pub fn fill_accuracy(&mut self, accuracy: &[f64]) -> Result<()> {
        for p in &mut self.points {
            let a = accuracy.get(p.config_k - 1).ok_or_else(|| {
                Error::Config(format!(
                    "profile point {} needs accuracy for k={}, model provides {}",
                    p.label(),
                    p.config_k,
                    accuracy.len()
                ))
            })?;
            p.accuracy = Some(*a);
        }
        Ok(())
    }

    /// Points reachable with the given knobs, in file order.
    pub fn allowed(&self, knobs: &Knobs) -> Vec<&OperatingPoint> {
        let knobs = knobs.intersect(&self.available);
        let max_k = self.max_k();
        let core = knobs
            .pinned_core
            .clone()
            .or_else(|| self.points.first().map(|p| p.core.clone()));
        let top_freq = |c: &str| self.points.iter().filter(|p| p.core == c).map(|p| p.freq_hz).max();
        self.points
            .iter()
            .filter(|p| knobs.config || p.config_k == max_k)
            .filter(|p| knobs.mapping || Some(&p.core) == core.as_ref())
            .filter(|p| {
                knobs.dvfs
                    || match knobs.pinned_freq_hz {
                        Some(f) => p.freq_hz == f,
                        None => Some(p.freq_hz) == top_freq(&p.core),
                    }
            })
            .collect()
    }
}

fn check_point(p: &OperatingPoint, line: usize) -> Result<()> {
    let positive = |field: &'static str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositive { line, field, value: v })
        }
    };
    positive("latency_ms", p.latency_ms)?;
    if let Some(pw) = p.power_mw {
        positive("power_mw", pw)?;
    }
    if p.config_k == 0 {
        return Err(Error::ProfileParse { line, reason: "config width must be >= 1".into() });
    }
    if let Some(a) = p.accuracy {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::ProfileParse {
                line,
                reason: format!("accuracy {a} outside [0, 1]"),
            });
        }
    }
    Ok(())
}

fn none_last(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Preference order among feasible points: higher accuracy, then lower
/// energy (unknown energy last), lower latency, lower frequency.
fn preference(a: &OperatingPoint, b: &OperatingPoint) -> Ordering {
    none_last(b.accuracy, a.accuracy)
        .then_with(|| none_last(a.energy_mj(), b.energy_mj()))
        .then_with(|| a.latency_ms.total_cmp(&b.latency_ms))
        .then_with(|| a.freq_hz.cmp(&b.freq_hz))
}

/// Most accurate allowed point meeting the budget. Remaining ties keep the
/// earliest point in file order.
pub fn select_point<'a>(profile: &'a PlatformProfile, budget: &Budget, knobs: &Knobs) -> Result<&'a OperatingPoint> {
    let allowed = profile.allowed(knobs);
    if allowed.is_empty() {
        return Err(Error::Config(format!("no operating point reachable with knobs {}", knobs.label())));
    }
    if let Some(p) = allowed.iter().find(|p| p.accuracy.is_none()) {
        return Err(Error::Input(format!(
            "point {} has no accuracy; supply a model or fill the column",
            p.label()
        )));
    }
    let measured: Vec<(&OperatingPoint, f64)> = allowed
        .iter()
        .filter_map(|p| p.metric(budget.metric).map(|v| (*p, v)))
        .collect();
    if measured.is_empty() {
        return Err(Error::Input(format!("no reachable point reports {}", budget.metric)));
    }
    let best = measured
        .iter()
        .filter(|(_, v)| *v <= budget.limit)
        .map(|(p, _)| *p)
        .fold(None::<&OperatingPoint>, |best, p| match best {
            Some(b) if preference(p, b) != Ordering::Less => Some(b),
            _ => Some(p),
        });
    best.ok_or_else(|| Error::Infeasible {
        metric: budget.metric.to_string(),
        limit: budget.limit,
        min_achievable: measured.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min),
    })
}

/// Points not dominated in (lower metric, higher accuracy), ascending by
/// metric. Points lacking the metric or an accuracy are ignored.
pub fn pareto_frontier<'a>(points: impl IntoIterator<Item = &'a OperatingPoint>, metric: Metric) -> Vec<&'a OperatingPoint> {
    let cands: Vec<(&OperatingPoint, f64, f64)> = points
        .into_iter()
        .filter_map(|p| Some((p, p.metric(metric)?, p.accuracy?)))
        .collect();
    let mut front: Vec<(&OperatingPoint, f64, f64)> = Vec::new();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    // Ascending metric, descending accuracy: a point survives iff its accuracy
    // beats everything cheaper, or it ties the cheapest at equal metric.
    order.sort_by(|&i, &j| cands[i].1.total_cmp(&cands[j].1).then(cands[j].2.total_cmp(&cands[i].2)).then(i.cmp(&j)));
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_at: Option<(f64, f64)> = None;
    for i in order {
        let (p, m, a) = cands[i];
        let tie = best_at == Some((m, a));
        if a > best_acc || tie {
            front.push((p, m, a));
            best_acc = best_acc.max(a);
            best_at = Some((m, a));
        }
    }
    front.into_iter().map(|(p, _, _)| p).collect()
}

/// Ratio of the largest to the smallest metric value over reachable points.
pub fn dynamic_range(profile: &PlatformProfile, metric: Metric, knobs: &Knobs) -> Result<f64> {
    let values: Vec<f64> = profile
        .allowed(knobs)
        .into_iter()
        .filter_map(|p| p.metric(metric))
        .collect();
    if values.is_empty() {
        return Err(Error::Input(format!(
            "no point reachable with knobs {} reports {metric}",
            knobs.label()
        )));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max / min)
}
