//! Group-wise incremental training.
//!
//! Increment `i` trains group `i` across every layer while groups `1..i` are
//! frozen and groups `i+1..` stay zero. The classifier is shared: its column
//! block for group `i` is freshly initialized, and the whole classifier is
//! updated at a learning rate reduced by `fc_lr_decay` per increment so later
//! groups perturb the narrower configurations less.

mod eval;
mod plan;

pub use eval::{
    evaluate_accuracy, evaluate_confidence, evaluate_configs, AccuracyReport, ClassTally, ConfidenceMode,
    ConfidenceReport, ConfigEvaluation,
};
pub use plan::{LrSchedule, TrainPlan};

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::{DataSplits, Dataset};
use crate::error::{Error, Result};
use crate::model::{self, build_model, GroupModel, GroupNetArch, NUM_CONVS};
use crate::ops::{self, GradBuffer};
use crate::tensor::Tensor;

/// An intermediate model saved at the end of an epoch.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub attempt: usize,
    /// 1-based.
    pub epoch: usize,
    pub val_accuracy: f64,
    pub train_loss: f64,
    pub model: GroupModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub attempt: usize,
    pub epoch: usize,
    pub val_accuracy: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub epochs: Vec<EpochRecord>,
    /// `(attempt, epoch)` of the seed carried into the next increment.
    pub chosen: Option<(usize, usize)>,
    pub chosen_accuracy: f64,
    /// Validation accuracy of the previous configuration, when the
    /// improvement criterion applies.
    pub baseline_accuracy: Option<f64>,
    pub achieved_improvement: Option<f64>,
    pub repeats_used: usize,
    pub conv_lr: f32,
    pub fc_lr: f32,
    pub warning: Option<String>,
}

/// How to pick the seed among an increment's intermediate models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedCriterion {
    /// Highest validation accuracy; ties go to the earliest epoch.
    MaxAccuracy,
    /// Earliest model reaching `baseline + delta` (fractions, not points).
    Improvement { baseline: f64, delta: f64 },
}

/// Index of the selected checkpoint, or `None` when the improvement target
/// is not met and the increment should be repeated.
pub fn select_seed(accuracies: &[f64], criterion: SeedCriterion) -> Option<usize> {
    match criterion {
        SeedCriterion::MaxAccuracy => {
            let mut best: Option<usize> = None;
            for (i, &a) in accuracies.iter().enumerate() {
                if best.is_none_or(|b| a > accuracies[b]) {
                    best = Some(i);
                }
            }
            best
        }
        SeedCriterion::Improvement { baseline, delta } => {
            let target = baseline + delta;
            accuracies.iter().position(|&a| a >= target - 1e-12)
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for a (seed, purpose...) tuple.
fn derived_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let s = tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)));
    ChaCha8Rng::seed_from_u64(s)
}

const TAG_INIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, dst: &mut [f32]) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    dst.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
}

/// Random init of group `g` (0-based): conv weights and its classifier block
/// drawn uniformly in `+-sqrt(6 / (fan_in + fan_out))`, conv biases zero.
fn init_group(model: &mut GroupModel, g: usize, seed: u64, step: usize, attempt: usize) {
    let arch = model.arch().clone();
    for l in 0..NUM_CONVS {
        let spec = arch.conv_spec(l);
        let kk = spec.kernel * spec.kernel;
        let mut rng = derived_rng(seed, &[TAG_INIT, step as u64, attempt as u64, l as u64]);
        let p = &mut model.groups[g].convs[l];
        xavier(&mut rng, spec.in_channels * kk, spec.out_channels * kk, p.weight.data_mut());
        p.bias.fill(0.0);
    }
    let mut rng = derived_rng(seed, &[TAG_INIT, step as u64, attempt as u64, NUM_CONVS as u64]);
    let (f, classes) = (model.feature_len(), arch.num_classes);
    model.fc_block_mut(g, |cols| xavier(&mut rng, f, classes, cols));
}

struct Buffers {
    conv: Vec<(GradBuffer, GradBuffer)>,
    fc_w: GradBuffer,
    fc_b: GradBuffer,
}

impl Buffers {
    fn new(model: &GroupModel, g: usize) -> Self {
        Self {
            conv: model.groups[g]
                .convs
                .iter()
                .map(|c| (GradBuffer::for_param(&c.weight), GradBuffer::for_param(&c.bias)))
                .collect(),
            fc_w: GradBuffer::for_param(&model.fc_weight),
            fc_b: GradBuffer::for_param(&model.fc_bias),
        }
    }

    fn zero(&mut self) {
        for (w, b) in &mut self.conv {
            w.zero_grad();
            b.zero_grad();
        }
        self.fc_w.zero_grad();
        self.fc_b.zero_grad();
    }

    fn scale(&mut self, s: f32) {
        let all = self
            .conv
            .iter_mut()
            .flat_map(|(w, b)| [&mut w.grad, &mut b.grad])
            .chain([&mut self.fc_w.grad, &mut self.fc_b.grad]);
        for t in all {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn add_into(dst: &mut Tensor, src: &Tensor) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += s;
    }
}

/// Concatenated features of the frozen groups `0..g` for every image.
fn frozen_features(model: &GroupModel, g: usize, data: &Dataset) -> Result<Vec<Vec<f32>>> {
    data.images
        .iter()
        .map(|img| {
            let mut f = Vec::with_capacity(g * model.feature_len());
            for j in 0..g {
                f.extend_from_slice(model.group_features(j, img)?.data());
            }
            Ok(f)
        })
        .collect()
}

/// Validation accuracy at width `g + 1` given cached frozen features.
fn cached_accuracy(model: &GroupModel, g: usize, data: &Dataset, frozen: &[Vec<f32>]) -> Result<f64> {
    let mut correct = 0usize;
    for ((img, &label), prefix) in data.images.iter().zip(&data.labels).zip(frozen) {
        let mut features = prefix.clone();
        features.extend_from_slice(model.group_features(g, img)?.data());
        if model.classify(&features)?.class() == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Loss and gradients of one labelled image for the trainable group `g`
/// (0-based) and the classifier, given the frozen groups' features.
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub loss: f32,
    /// One entry per conv layer of group `g`.
    pub convs: Vec<ops::ConvGrads>,
    /// Same shape as the classifier weight; columns beyond the active width are zero.
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
}

fn grads_with_prefix(
    m: &GroupModel,
    g: usize,
    prefix: &[f32],
    image: &Tensor,
    label: usize,
    pool5_dims: &[usize],
) -> Result<SampleGrads> {
    let arch = m.arch();
    let f = m.feature_len();
    let active = (g + 1) * f;
    let width = m.fc_weight.dims()[1];
    let trace = model::group_forward_traced(arch, &m.groups[g], image)?;
    let own = trace.features.as_ref().expect("traced features");
    let mut features = Vec::with_capacity(active);
    features.extend_from_slice(prefix);
    features.extend_from_slice(own.data());
    let pred = m.classify(&features)?;
    let (loss, dlogits) = ops::cross_entropy_loss(&pred.probs, label)?;

    let mut fc_weight = Tensor::zeros(m.fc_weight.dims());
    let mut dfeat = vec![0.0f32; f];
    let gw = fc_weight.data_mut();
    for (o, &d) in dlogits.data().iter().enumerate() {
        for (dst, &x) in gw[o * width..o * width + active].iter_mut().zip(&features) {
            *dst += d * x;
        }
        let wrow = &m.fc_weight.data()[o * width + g * f..o * width + active];
        for (dst, &w) in dfeat.iter_mut().zip(wrow) {
            *dst += w * d;
        }
    }
    let convs = model::group_backward(arch, &m.groups[g], &trace, &dfeat, pool5_dims)?;
    Ok(SampleGrads { loss, convs, fc_weight, fc_bias: dlogits })
}

/// Gradients of the cross-entropy loss at width `k` for group `k` (1-based)
/// and the classifier, as used by one training sample of increment `k`.
pub fn sample_gradients(model: &GroupModel, k: usize, image: &Tensor, label: usize) -> Result<SampleGrads> {
    if k == 0 || k > model.num_groups() {
        return Err(Error::Config(format!("width {k} outside 1..={}", model.num_groups())));
    }
    if label >= model.arch().num_classes {
        return Err(Error::Input(format!("label {label} out of range")));
    }
    let pool5_dims = model.arch().validate()?.pool5;
    let mut prefix = Vec::with_capacity((k - 1) * model.feature_len());
    for j in 0..k - 1 {
        prefix.extend_from_slice(model.group_features(j, image)?.data());
    }
    grads_with_prefix(model, k - 1, &prefix, image, label, &pool5_dims)
}

/// One training attempt of increment `step` (1-based). Returns one candidate per epoch.
fn train_attempt(
    entry: &GroupModel,
    step: usize,
    data: &DataSplits,
    plan: &TrainPlan,
    attempt: usize,
    observer: &mut dyn FnMut(&Candidate),
) -> Result<Vec<Candidate>> {
    let g = step - 1;
    let mut m = entry.clone();
    init_group(&mut m, g, plan.rng_seed, step, attempt);
    m.trained_groups = step;

    let arch = m.arch().clone();
    let pool5_dims = arch.validate()?.pool5;

    let train_frozen = frozen_features(entry, g, &data.train)?;
    let val_frozen = frozen_features(entry, g, &data.validation)?;
    let mut bufs = Buffers::new(&m, g);
    let fc_scale = plan.fc_lr_scale(step);
    let n = data.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut candidates = Vec::with_capacity(plan.epochs_per_step);

    for epoch in 0..plan.epochs_per_step {
        let mut rng = derived_rng(plan.rng_seed, &[TAG_SHUFFLE, step as u64, attempt as u64, epoch as u64]);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let lr = plan.lr_schedule.rate(plan.base_lr, epoch);
        let fc_lr = lr * fc_scale;
        let mut loss_sum = 0.0f64;

        for batch in order.chunks(plan.batch_size) {
            bufs.zero();
            for &idx in batch {
                let img = &data.train.images[idx];
                let label = data.train.labels[idx];
                let sg = grads_with_prefix(&m, g, &train_frozen[idx], img, label, &pool5_dims)?;
                loss_sum += sg.loss as f64;
                add_into(&mut bufs.fc_w.grad, &sg.fc_weight);
                add_into(&mut bufs.fc_b.grad, &sg.fc_bias);
                for ((bw, bb), cg) in bufs.conv.iter_mut().zip(&sg.convs) {
                    add_into(&mut bw.grad, &cg.weights);
                    add_into(&mut bb.grad, &cg.bias);
                }
            }
            bufs.scale(1.0 / batch.len() as f32);
            for ((bw, bb), p) in bufs.conv.iter_mut().zip(m.groups[g].convs.iter_mut()) {
                ops::sgd_step(&mut p.weight, bw, lr, plan.momentum, false)?;
                ops::sgd_step(&mut p.bias, bb, lr, plan.momentum, false)?;
            }
            ops::sgd_step(&mut m.fc_weight, &mut bufs.fc_w, fc_lr, plan.momentum, false)?;
            ops::sgd_step(&mut m.fc_bias, &mut bufs.fc_b, fc_lr, plan.momentum, false)?;
        }

        if !m.fc_weight.is_finite() {
            return Err(Error::State(format!(
                "training diverged at increment {step}, epoch {}; lower base_lr",
                epoch + 1
            )));
        }
        let val_accuracy = cached_accuracy(&m, g, &data.validation, &val_frozen)?;
        let candidate = Candidate {
            attempt,
            epoch: epoch + 1,
            val_accuracy,
            train_loss: loss_sum / n as f64,
            model: m.clone(),
        };
        log::info!(
            "step {step} attempt {attempt} epoch {}: loss {:.4}, val acc {:.4}",
            candidate.epoch,
            candidate.train_loss,
            val_accuracy
        );
        observer(&candidate);
        candidates.push(candidate);
    }
    Ok(candidates)
}

fn check_increment(model: &GroupModel, step: usize, data: &DataSplits, plan: &TrainPlan) -> Result<()> {
    plan.validate()?;
    if step == 0 || step > model.num_groups() {
        return Err(Error::Config(format!(
            "increment {step} outside 1..={}",
            model.num_groups()
        )));
    }
    if model.trained_groups != step - 1 {
        return Err(Error::State(format!(
            "increment {step} needs {} trained group(s), model has {}",
            step - 1,
            model.trained_groups
        )));
    }
    if data.train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    if data.validation.is_empty() {
        return Err(Error::Input("validation split is empty".into()));
    }
    if data.num_classes() != model.arch().num_classes {
        return Err(Error::Input(format!(
            "data has {} classes, model has {}",
            data.num_classes(),
            model.arch().num_classes
        )));
    }
    Ok(())
}

fn fresh_report(step: usize, plan: &TrainPlan) -> StepReport {
    StepReport {
        step,
        epochs: Vec::new(),
        chosen: None,
        chosen_accuracy: 0.0,
        baseline_accuracy: None,
        achieved_improvement: None,
        repeats_used: 0,
        conv_lr: plan.base_lr,
        fc_lr: plan.base_lr * plan.fc_lr_scale(step),
        warning: None,
    }
}

fn record(report: &mut StepReport, candidates: &[Candidate]) {
    report.epochs.extend(candidates.iter().map(|c| EpochRecord {
        attempt: c.attempt,
        epoch: c.epoch,
        val_accuracy: c.val_accuracy,
        train_loss: c.train_loss,
    }));
}

/// Trains increment `step` once, returning every epoch's checkpoint and a
/// report whose choice uses the highest-validation-accuracy criterion.
pub fn train_increment(
    model: &GroupModel,
    step: usize,
    data: &DataSplits,
    plan: &TrainPlan,
) -> Result<(Vec<Candidate>, StepReport)> {
    check_increment(model, step, data, plan)?;
    let candidates = train_attempt(model, step, data, plan, 0, &mut |_| {})?;
    let mut report = fresh_report(step, plan);
    record(&mut report, &candidates);
    let acc: Vec<f64> = candidates.iter().map(|c| c.val_accuracy).collect();
    if let Some(i) = select_seed(&acc, SeedCriterion::MaxAccuracy) {
        report.chosen = Some((0, candidates[i].epoch));
        report.chosen_accuracy = acc[i];
    }
    Ok((candidates, report))
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: GroupModel,
    pub reports: Vec<StepReport>,
}

/// Runs every increment in order, selecting a seed after each one.
///
/// Increments before `plan.improvement_from_step` keep their best epoch.
/// Later increments need `target_improvement` points over the previous
/// configuration; a miss repeats the increment from the same seed with a
/// fresh initialization, and after `max_repeats` attempts the best model seen
/// is kept with a warning.
pub fn run_full_training(arch: &GroupNetArch, data: &DataSplits, plan: &TrainPlan) -> Result<TrainingRun> {
    run_full_training_with(arch, data, plan, |_, _| {})
}

/// As [`run_full_training`], calling `observer(step, candidate)` for every
/// intermediate model as it is produced.
pub fn run_full_training_with(
    arch: &GroupNetArch,
    data: &DataSplits,
    plan: &TrainPlan,
    mut observer: impl FnMut(usize, &Candidate),
) -> Result<TrainingRun> {
    plan.validate()?;
    let mut model = build_model(arch.clone())?;
    model.channel_mean = Some(data.channel_mean);
    let mut reports = Vec::with_capacity(arch.num_groups);
    let mut prev_accuracy: Option<f64> = None;

    for step in 1..=arch.num_groups {
        check_increment(&model, step, data, plan)?;
        let mut report = fresh_report(step, plan);
        let improvement = step >= plan.improvement_from_step && prev_accuracy.is_some();
        let attempts = if improvement { plan.max_repeats } else { 1 };
        let mut best: Option<Candidate> = None;
        let mut chosen: Option<Candidate> = None;

        for attempt in 0..attempts {
            let candidates = train_attempt(&model, step, data, plan, attempt, &mut |c| observer(step, c))?;
            record(&mut report, &candidates);
            report.repeats_used = attempt;
            let acc: Vec<f64> = candidates.iter().map(|c| c.val_accuracy).collect();

            let local_best = select_seed(&acc, SeedCriterion::MaxAccuracy).expect("at least one epoch");
            if best.as_ref().is_none_or(|b| acc[local_best] > b.val_accuracy) {
                best = Some(candidates[local_best].clone());
            }
            let criterion = match (improvement, prev_accuracy) {
                (true, Some(baseline)) => SeedCriterion::Improvement {
                    baseline,
                    delta: plan.target_improvement / 100.0,
                },
                _ => SeedCriterion::MaxAccuracy,
            };
            if let Some(i) = select_seed(&acc, criterion) {
                chosen = Some(candidates[i].clone());
                break;
            }
            log::info!("step {step}: attempt {attempt} missed the improvement target");
        }

        let seed = match chosen {
            Some(c) => c,
            None => {
                let b = best.expect("at least one attempt");
                let msg = format!(
                    "increment {step}: target improvement of {} points not met after {} attempt(s); keeping best (val acc {:.4})",
                    plan.target_improvement, attempts, b.val_accuracy
                );
                log::warn!("{msg}");
                report.warning = Some(msg);
                b
            }
        };
        if improvement {
            report.baseline_accuracy = prev_accuracy;
        }
        report.achieved_improvement = prev_accuracy.map(|p| seed.val_accuracy - p);
        report.chosen = Some((seed.attempt, seed.epoch));
        report.chosen_accuracy = seed.val_accuracy;
        prev_accuracy = Some(seed.val_accuracy);
        model = seed.model;
        reports.push(report);
    }
    Ok(TrainingRun { model, reports })
}

/// Writes `step,epoch,val_accuracy,chosen,repeats` rows, one per epoch of
/// every attempt. `repeats` is the attempt index of the row.
pub fn write_step_reports_csv(reports: &[StepReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["step", "epoch", "val_accuracy", "chosen", "repeats"]).map_err(io)?;
    for r in reports {
        for e in &r.epochs {
            let chosen = r.chosen == Some((e.attempt, e.epoch));
            w.write_record([
                r.step.to_string(),
                e.epoch.to_string(),
                format!("{:.6}", e.val_accuracy),
                (chosen as u8).to_string(),
                e.attempt.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
