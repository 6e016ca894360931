use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use groupnet::data::*;
use groupnet::governor::*;
use groupnet::model::{load_checkpoint, save_checkpoint};
use groupnet::train::*;
use groupnet::{ActiveConfig, Error, GroupModel, GroupNetArch};
use serde_json::json;

use crate::manifest::{beside, RunManifest};
use crate::{ConfidenceArg, EvalArgs, GovernArgs, PrepareArgs, ProfileArgs, SplitArg, TrainArgs, Usage};

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Usage(format!("input not found: {}", path.display())).into())
    }
}

/// Loads a checkpoint and a dataset archive, re-centring the images on the
/// model's training mean when the two differ.
pub fn load_pair(model: &Path, data: &Path, m: &mut RunManifest) -> Result<(GroupModel, DataSplits)> {
    require(model)?;
    require(data)?;
    let model_v = load_checkpoint(model).with_context(|| format!("loading model {}", model.display()))?;
    let mut splits = load_archive(data).with_context(|| format!("loading dataset {}", data.display()))?;
    m.input(model)?;
    m.input(data)?;
    if splits.num_classes() != model_v.arch().num_classes {
        return Err(Error::Input(format!(
            "dataset has {} classes, model has {}",
            splits.num_classes(),
            model_v.arch().num_classes
        ))
        .into());
    }
    if let Some(mean) = model_v.channel_mean {
        let from = splits.channel_mean;
        for ds in [&mut splits.train, &mut splits.validation, &mut splits.test] {
            ds.shift_mean(from, mean);
        }
        splits.channel_mean = mean;
    }
    Ok((model_v, splits))
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Validation => Split::Validation,
        SplitArg::Test => Split::Test,
    }
}

pub fn percent(k: usize, groups: usize) -> String {
    let p = ActiveConfig::new(k).map(|c| c.percent(groups)).unwrap_or(0.0);
    format!("{p}")
}

pub fn prepare_data(a: &PrepareArgs, manifest: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("prepare-data", a)?;
    let splits = match (&a.cifar_dir, a.synthetic) {
        (Some(dir), _) => {
            require(dir)?;
            let (train, test) = load_cifar_dir(dir)?;
            for name in TRAIN_BATCHES.iter().chain([&TEST_BATCH]) {
                m.input(&dir.join(name))?;
            }
            log::info!("parsed {} training and {} test records", train.len(), test.len());
            cifar_splits(&train, &test, a.val.unwrap_or(5000), a.limit)?
        }
        (None, Some(n)) => {
            let spec = SyntheticSpec::new(a.classes, a.seed);
            m.seeds.push(a.seed);
            let val = a.val.unwrap_or((n / 5).max(1));
            let test = a.test.unwrap_or((n / 5).max(1));
            prepare_splits(
                &generate_synthetic(&spec, n, 0)?,
                &generate_synthetic(&spec, val, 1)?,
                &generate_synthetic(&spec, test, 2)?,
                a.classes,
            )?
        }
        (None, None) => return Err(Usage("one of --cifar-dir or --synthetic is required".into()).into()),
    };
    log::info!(
        "splits: {} train, {} validation, {} test",
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    save_archive(&splits, &a.out)?;
    m.output(&a.out)?;
    m.write(manifest.unwrap_or(&beside(&a.out)))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    require(path)?;
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{what} {}: {e}", path.display())).into())
}

pub fn train(a: &TrainArgs, manifest: Option<&Path>) -> Result<()> {
    require(&a.data)?;
    let data = load_archive(&a.data)?;
    let mut plan: TrainPlan = match &a.plan {
        Some(p) => read_json(p, "plan")?,
        None => TrainPlan::default(),
    };
    if let Some(v) = a.epochs {
        plan.epochs_per_step = v;
    }
    if let Some(v) = a.seed {
        plan.rng_seed = v;
    }
    if let Some(v) = a.lr {
        plan.base_lr = v;
    }
    if let Some(v) = a.batch_size {
        plan.batch_size = v;
    }
    if let Some(v) = a.fc_lr_decay {
        plan.fc_lr_decay = v;
    }
    let arch: GroupNetArch = match &a.arch {
        Some(p) => read_json(p, "architecture")?,
        None => GroupNetArch {
            num_classes: data.num_classes(),
            ..GroupNetArch::default()
        },
    };
    plan.validate()?;
    arch.validate()?;

    let mut m = RunManifest::new("train", json!({ "args": a, "plan": plan, "arch": arch }))?;
    m.seeds.push(plan.rng_seed);
    m.input(&a.data)?;
    for p in a.plan.iter().chain(&a.arch) {
        m.input(p)?;
    }

    let ckdir = a.out_dir.join("checkpoints");
    fs::create_dir_all(if a.save_epochs { &ckdir } else { &a.out_dir })?;
    let mut epoch_files: Vec<PathBuf> = Vec::new();
    let mut save_err: Option<Error> = None;
    let run = run_full_training_with(&arch, &data, &plan, |step, c| {
        if !a.save_epochs || save_err.is_some() {
            return;
        }
        let path = ckdir.join(format!("step{step}-attempt{}-epoch{:03}.gdnn", c.attempt, c.epoch));
        match save_checkpoint(&c.model, &path) {
            Ok(()) => epoch_files.push(path),
            Err(e) => save_err = Some(e),
        }
    })?;
    if let Some(e) = save_err {
        return Err(e.into());
    }
    for r in &run.reports {
        if let Some(w) = &r.warning {
            log::warn!("{w}");
        }
        log::info!(
            "step {}: chose attempt {:?} with validation accuracy {:.4}",
            r.step,
            r.chosen,
            r.chosen_accuracy
        );
    }

    let model_path = a.out_dir.join("model.gdnn");
    save_checkpoint(&run.model, &model_path)?;
    let steps_path = a.out_dir.join("steps.csv");
    write_step_reports_csv(&run.reports, fs::File::create(&steps_path)?)?;
    let plan_path = a.out_dir.join("plan.json");
    fs::write(&plan_path, serde_json::to_string_pretty(&json!({ "plan": plan, "arch": arch }))? + "\n")?;
    for p in [&model_path, &steps_path, &plan_path].into_iter().chain(&epoch_files) {
        m.output(p)?;
    }
    m.write(manifest.unwrap_or(&a.out_dir.join("train.manifest.json")))
}

/// Widths named by `--config`: a percentage or `all` (every trained width).
fn widths(config: &str, model: &GroupModel) -> Result<Vec<usize>> {
    if config == "all" {
        if model.trained_groups == 0 {
            return Err(Error::Config("model has no trained groups".into()).into());
        }
        return Ok((1..=model.trained_groups).collect());
    }
    let pct: u32 = config
        .trim_end_matches('%')
        .parse()
        .map_err(|_| Usage(format!("--config must be 25, 50, 75, 100 or all, got {config:?}")))?;
    Ok(vec![ActiveConfig::from_percent(pct, model.num_groups())?.k()])
}

pub fn eval_rows(
    model: &GroupModel,
    ds: &Dataset,
    ks: &[usize],
    mode: ConfidenceMode,
) -> Result<Vec<(AccuracyReport, ConfidenceReport)>> {
    if ks.len() > 1 {
        let all = evaluate_configs(model, ds, mode)?;
        return Ok(all
            .into_iter()
            .filter(|e| ks.contains(&e.accuracy.k))
            .map(|e| (e.accuracy, e.confidence))
            .collect());
    }
    ks.iter()
        .map(|&k| Ok((evaluate_accuracy(model, k, ds)?, evaluate_confidence(model, k, ds, mode)?)))
        .collect()
}

pub fn eval(a: &EvalArgs, manifest: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("eval", a)?;
    let (model, data) = load_pair(&a.model, &a.data, &mut m)?;
    let ks = widths(&a.config, &model)?;
    let mode = match a.confidence {
        ConfidenceArg::All => ConfidenceMode::AllImages,
        ConfidenceArg::Correct => ConfidenceMode::CorrectOnly,
    };
    let rows = eval_rows(&model, data.split(split_of(a.split)), &ks, mode)?;

    let classes = model.arch().num_classes;
    let mut out = String::from("config_pct,k,accuracy,correct,total,confidence_total,confidence_normalized");
    for c in 0..classes {
        write!(out, ",class_{c}")?;
    }
    out.push('\n');
    for (acc, conf) in &rows {
        write!(
            out,
            "{},{},{:.6},{},{},{:.6},{:.6}",
            percent(acc.k, model.num_groups()),
            acc.k,
            acc.accuracy,
            acc.correct,
            acc.total,
            conf.total,
            conf.normalized
        )?;
        for t in &acc.per_class {
            match t.accuracy() {
                Some(v) => write!(out, ",{v:.6}")?,
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    match &a.out {
        Some(path) => {
            fs::write(path, &out)?;
            m.output(path)?;
            m.write(manifest.unwrap_or(&beside(path)))
        }
        None => {
            print!("{out}");
            m.write(manifest.unwrap_or(Path::new("eval.manifest.json")))
        }
    }
}

pub fn profile(a: &ProfileArgs, manifest: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("profile", a)?;
    let (model, data) = load_pair(&a.model, &a.data, &mut m)?;
    let pool = if data.test.is_empty() { &data.validation } else { &data.test };
    let sample = pool.head(a.samples.max(1));
    let stats = profile_host(&model, &sample, a.reps)?;
    let accuracy = if data.validation.is_empty() {
        None
    } else {
        Some(
            evaluate_configs(&model, &data.validation, ConfidenceMode::AllImages)?
                .into_iter()
                .map(|e| e.accuracy.accuracy)
                .collect::<Vec<_>>(),
        )
    };
    let points = stats
        .iter()
        .map(|s| s.to_point(accuracy.as_ref().map(|v| v[s.k - 1])))
        .collect();
    let prof = PlatformProfile::new("host", points)?;
    save_profile(&prof, &a.out)?;
    println!("k,median_of_means_ms,mean_ms,p95_ms,samples");
    for s in &stats {
        println!(
            "{},{:.4},{:.4},{:.4},{}",
            s.k, s.median_of_means_ms, s.mean_ms, s.p95_ms, s.samples
        );
    }
    m.output(&a.out)?;
    m.write(manifest.unwrap_or(&beside(&a.out)))
}

/// Loads a profile, filling accuracies from a model when one is given.
pub fn load_profile_with(
    profile: &Path,
    model: Option<&Path>,
    data: Option<&Path>,
    m: &mut RunManifest,
) -> Result<PlatformProfile> {
    require(profile)?;
    let mut prof = load_profile(profile)?;
    m.input(profile)?;
    if let (Some(model), Some(data)) = (model, data) {
        let (model, data) = load_pair(model, data, m)?;
        let acc: Vec<f64> = evaluate_configs(&model, &data.validation, ConfidenceMode::AllImages)?
            .into_iter()
            .map(|e| e.accuracy.accuracy)
            .collect();
        prof.fill_accuracy(&acc)?;
    }
    Ok(prof)
}

pub fn govern(a: &GovernArgs, manifest: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("govern", a)?;
    let prof = load_profile_with(&a.profile, a.model.as_deref(), a.data.as_deref(), &mut m)?;
    let metric: Metric = a.budget_metric.parse().map_err(|e: Error| Usage(e.to_string()))?;
    let mut knobs: Knobs = a.knobs.parse().map_err(|e: Error| Usage(e.to_string()))?;
    knobs.pinned_core = a.core.clone();
    let budget = Budget::new(metric, a.budget).map_err(|e| Usage(e.to_string()))?;
    let result = select_point(&prof, &budget, &knobs);
    let manifest_path = manifest.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("govern.manifest.json"));
    m.write(&manifest_path)?;
    let p = result?;
    println!("selected: {}", p.label());
    println!("platform: {}", p.platform);
    println!("core: {}", p.core);
    println!("freq_hz: {}", p.freq_hz);
    println!("config_pct: {}", percent(p.config_k, prof.max_k()));
    println!("latency_ms: {}", p.latency_ms);
    println!("power_mw: {}", p.power_mw.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into()));
    println!("energy_mj: {}", p.energy_mj().map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()));
    println!("accuracy: {}", p.accuracy.map(|v| v.to_string()).unwrap_or_default());
    for m in Metric::ALL {
        match dynamic_range(&prof, m, &knobs) {
            Ok(r) => println!("range_{m}: {r:.4}x"),
            Err(_) => println!("range_{m}: n/a"),
        }
    }
    Ok(())
}
