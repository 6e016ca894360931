//! Plot-ready CSVs: accuracy and confidence per width, latency per core,
//! the operating-point scatter, and a comparison summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use groupnet::governor::*;
use groupnet::train::{evaluate_configs, ConfidenceMode};

use crate::commands::{load_pair, percent, require};
use crate::manifest::RunManifest;
use crate::ReportArgs;

/// Published comparison rows: method, RRCR %, time range, energy range, model size.
const PUBLISHED: [(&str, &str, &str, &str, &str); 5] = [
    ("Xu et al.", "20", "0.25", "0.25", "773.9*29"),
    ("Tann et al.", "75", "1.29", "1.49", "773.9"),
    ("Proposed w/o D&T", "75", "3.53", "3.53", "318.4"),
    ("Proposed with DVFS", "75", "30.8", "6.76", "318.4"),
    ("Proposed with D&T", "75", "53.7", "15.73", "318.4"),
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn knob_sets(core: Option<&String>) -> [(&'static str, Knobs); 3] {
    let pin = |mut k: Knobs| {
        k.pinned_core = core.cloned();
        k
    };
    [
        ("Proposed w/o D&T", pin(Knobs::config_only())),
        ("Proposed with DVFS", pin(Knobs::config_dvfs())),
        ("Proposed with D&T", pin(Knobs::all())),
    ]
}

pub fn report(a: &ReportArgs, manifest: Option<&Path>) -> Result<()> {
    let mut m = RunManifest::new("report", a)?;
    require(&a.profile)?;
    let (model, data) = load_pair(&a.model, &a.data, &mut m)?;
    let mut prof = load_profile(&a.profile)?;
    m.input(&a.profile)?;
    fs::create_dir_all(&a.out_dir)?;
    let g = model.num_groups();

    let evals = evaluate_configs(&model, &data.validation, ConfidenceMode::AllImages)?;
    let mut fig2 = String::from("config_pct,k,accuracy\n");
    let mut fig3 = String::from("config_pct,k,confidence_total,confidence_normalized\n");
    for e in &evals {
        let (k, pct) = (e.accuracy.k, percent(e.accuracy.k, g));
        writeln!(fig2, "{pct},{k},{:.6}", e.accuracy.accuracy)?;
        writeln!(fig3, "{pct},{k},{:.6},{:.6}", e.confidence.total, e.confidence.normalized)?;
    }
    let accuracy: Vec<f64> = evals.iter().map(|e| e.accuracy.accuracy).collect();
    prof.fill_accuracy(&accuracy)?;

    let mut fig4 = String::from("platform,core,freq_hz,config_pct,latency_ms\n");
    let mut by_core: Vec<&OperatingPoint> = prof.points.iter().collect();
    by_core.sort_by(|x, y| (&x.core, x.freq_hz, x.config_k).cmp(&(&y.core, y.freq_hz, y.config_k)));
    for p in by_core {
        writeln!(
            fig4,
            "{},{},{},{},{}",
            p.platform,
            p.core,
            p.freq_hz,
            percent(p.config_k, prof.max_k()),
            p.latency_ms
        )?;
    }

    let sets = knob_sets(a.core.as_ref());
    let reach: Vec<Vec<&OperatingPoint>> = sets.iter().map(|(_, k)| prof.allowed(k)).collect();
    let fronts: Vec<Vec<&OperatingPoint>> = Metric::ALL.iter().map(|&mt| pareto_frontier(&prof.points, mt)).collect();
    let mut fig5 = String::from(
        "platform,core,freq_hz,config_pct,latency_ms,power_mw,energy_mj,accuracy,label,knobs,pareto_time,pareto_power,pareto_energy\n",
    );
    for p in &prof.points {
        let knobs: Vec<String> = sets
            .iter()
            .zip(&reach)
            .filter(|(_, r)| r.iter().any(|q| std::ptr::eq(*q, p)))
            .map(|((_, k), _)| k.label())
            .collect();
        let flags: Vec<&str> = fronts
            .iter()
            .map(|f| if f.iter().any(|q| std::ptr::eq(*q, p)) { "1" } else { "0" })
            .collect();
        writeln!(
            fig5,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.platform,
            p.core,
            p.freq_hz,
            percent(p.config_k, prof.max_k()),
            p.latency_ms,
            opt(p.power_mw),
            opt(p.energy_mj()),
            opt(p.accuracy),
            p.label(),
            knobs.join(";"),
            flags.join(",")
        )?;
    }

    let param_kb = model.model_size_bytes(g)? as f64 / 1e3;
    let file_kb = fs::metadata(&a.model)?.len() as f64 / 1e3;
    let rrcr = (g - 1) as f64 / g as f64 * 100.0;
    let mut summary = String::from("method,source,rrcr_pct,time_range,energy_range,model_size_kb,checkpoint_kb\n");
    for (name, knobs) in &sets {
        let range = |mt| dynamic_range(&prof, mt, knobs).ok().map(|r| format!("{r:.4}")).unwrap_or_default();
        writeln!(
            summary,
            "{name},this build,{rrcr:.1},{},{},{param_kb:.1},{file_kb:.1}",
            range(Metric::Time),
            range(Metric::Energy)
        )?;
    }
    for (name, rrcr, time, energy, size) in PUBLISHED {
        writeln!(summary, "{name},published,{rrcr},{time},{energy},{size},")?;
    }

    for (name, body) in [
        ("fig2.csv", fig2),
        ("fig3.csv", fig3),
        ("fig4.csv", fig4),
        ("fig5.csv", fig5),
        ("summary.csv", summary),
    ] {
        let path = a.out_dir.join(name);
        fs::write(&path, body)?;
        m.output(&path)?;
    }
    m.write(manifest.unwrap_or(&a.out_dir.join("report.manifest.json")))
}
