//! Top-1 accuracy and confidence of a model at each active width.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ActiveConfig, GroupModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassTally {
    pub correct: usize,
    pub total: usize,
}

impl ClassTally {
    /// `None` when the class has no samples.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub k: usize,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class: Vec<ClassTally>,
}

/// Which images contribute to the confidence total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConfidenceMode {
    /// True-class probability summed over every image.
    #[default]
    AllImages,
    /// Only images the model classifies correctly.
    CorrectOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReport {
    pub k: usize,
    pub total: f64,
    /// `total(k) / total(reference)`, the reference being the widest trained config.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEvaluation {
    pub accuracy: AccuracyReport,
    pub confidence: ConfidenceReport,
}

fn check(model: &GroupModel, k: usize, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    if data.num_classes != model.arch().num_classes {
        return Err(Error::Input(format!(
            "dataset has {} classes, model has {}",
            data.num_classes,
            model.arch().num_classes
        )));
    }
    ActiveConfig::new(k)?;
    if k > model.trained_groups {
        return Err(Error::Config(format!(
            "model not trained to this width: k={k} but only {} trained group(s)",
            model.trained_groups
        )));
    }
    Ok(())
}

struct Tallies {
    correct: usize,
    per_class: Vec<ClassTally>,
    confidence: f64,
}

/// Single pass over the data computing group features once per image and
/// classifying every prefix `1..=max_k` from them. Identical to calling
/// `forward` per width because a width-`k` forward is exactly the classifier
/// applied to the first `k` feature blocks.
fn tally_all(model: &GroupModel, max_k: usize, data: &Dataset, mode: ConfidenceMode) -> Result<Vec<Tallies>> {
    let mut out: Vec<Tallies> = (0..max_k)
        .map(|_| Tallies {
            correct: 0,
            per_class: vec![ClassTally::default(); data.num_classes],
            confidence: 0.0,
        })
        .collect();
    let f = model.feature_len();
    let mut features = Vec::with_capacity(max_k * f);
    for (img, &label) in data.images.iter().zip(&data.labels) {
        features.clear();
        for g in 0..max_k {
            features.extend_from_slice(model.group_features(g, img)?.data());
        }
        for (k, t) in out.iter_mut().enumerate() {
            let pred = model.classify(&features[..(k + 1) * f])?;
            let ok = pred.class() == label;
            t.per_class[label].total += 1;
            if ok {
                t.correct += 1;
                t.per_class[label].correct += 1;
            }
            if ok || mode == ConfidenceMode::AllImages {
                t.confidence += pred.probs.data()[label] as f64;
            }
        }
    }
    Ok(out)
}

fn accuracy_report(k: usize, t: &Tallies, total: usize) -> AccuracyReport {
    AccuracyReport {
        k,
        accuracy: t.correct as f64 / total as f64,
        correct: t.correct,
        total,
        per_class: t.per_class.clone(),
    }
}

/// Fraction of images whose highest-probability class equals the label.
pub fn evaluate_accuracy(model: &GroupModel, k: usize, data: &Dataset) -> Result<AccuracyReport> {
    check(model, k, data)?;
    let mut correct = 0;
    let mut per_class = vec![ClassTally::default(); data.num_classes];
    let cfg = ActiveConfig::new(k)?;
    for (img, &label) in data.images.iter().zip(&data.labels) {
        let pred = model.forward(img, cfg)?;
        per_class[label].total += 1;
        if pred.class() == label {
            correct += 1;
            per_class[label].correct += 1;
        }
    }
    Ok(AccuracyReport {
        k,
        accuracy: correct as f64 / data.len() as f64,
        correct,
        total: data.len(),
        per_class,
    })
}

/// Total true-class probability at width `k`, and its ratio to the total at
/// the widest trained width.
pub fn evaluate_confidence(
    model: &GroupModel,
    k: usize,
    data: &Dataset,
    mode: ConfidenceMode,
) -> Result<ConfidenceReport> {
    check(model, k, data)?;
    let top = model.trained_groups;
    let t = tally_all(model, top, data, mode)?;
    Ok(ConfidenceReport {
        k,
        total: t[k - 1].confidence,
        normalized: ratio(t[k - 1].confidence, t[top - 1].confidence),
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

/// Accuracy and confidence of every trained width `1..=trained_groups`.
pub fn evaluate_configs(model: &GroupModel, data: &Dataset, mode: ConfidenceMode) -> Result<Vec<ConfigEvaluation>> {
    let top = model.trained_groups;
    check(model, top.max(1), data)?;
    let tallies = tally_all(model, top, data, mode)?;
    let reference = tallies[top - 1].confidence;
    Ok(tallies
        .iter()
        .enumerate()
        .map(|(i, t)| ConfigEvaluation {
            accuracy: accuracy_report(i + 1, t, data.len()),
            confidence: ConfidenceReport {
                k: i + 1,
                total: t.confidence,
                normalized: ratio(t.confidence, reference),
            },
        })
        .collect())
}
