//! Random profiles and an exhaustive reference selector.

use groupnet::governor::*;
use groupnet::Error;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::rng;

pub fn random_profile(r: &mut ChaCha8Rng) -> PlatformProfile {
    let cores = ["big", "little", "gpu"];
    let ncores = r.random_range(1..=3);
    let acc: Vec<f64> = {
        let mut a: Vec<f64> = (0..4).map(|_| (r.random_range(30..90) as f64) / 100.0).collect();
        a.sort_by(f64::total_cmp);
        a
    };
    let mut points = Vec::new();
    for core in &cores[..ncores] {
        let nfreq = r.random_range(1..=4);
        for f in 0..nfreq {
            let mhz = 200 + 300 * f as u64;
            for k in 1..=4 {
                if r.random_bool(0.2) {
                    continue;
                }
                points.push(OperatingPoint {
                    platform: "rand".into(),
                    core: core.to_string(),
                    freq_hz: mhz * 1_000_000,
                    config_k: k,
                    // Coarse values so exact ties occur.
                    latency_ms: r.random_range(1..40) as f64,
                    power_mw: r.random_bool(0.8).then(|| r.random_range(1..10) as f64 * 100.0),
                    accuracy: Some(acc[k - 1]),
                });
            }
        }
    }
    if points.is_empty() {
        points.push(OperatingPoint {
            platform: "rand".into(),
            core: "big".into(),
            freq_hz: 1,
            config_k: 4,
            latency_ms: 1.0,
            power_mw: None,
            accuracy: Some(0.5),
        });
    }
    PlatformProfile::new("rand", points).unwrap()
}

pub fn random_knobs(r: &mut ChaCha8Rng) -> Knobs {
    Knobs {
        config: r.random_bool(0.5),
        dvfs: r.random_bool(0.5),
        mapping: r.random_bool(0.5),
        pinned_core: r.random_bool(0.3).then(|| ["big", "little", "gpu"][r.random_range(0..3)].to_string()),
        pinned_freq_hz: None,
    }
}

/// Reachable points, written out from the knob definitions.
pub fn oracle_allowed<'a>(p: &'a PlatformProfile, knobs: &Knobs) -> Vec<&'a OperatingPoint> {
    let max_k = p.points.iter().map(|q| q.config_k).max().unwrap();
    let home = knobs.pinned_core.clone().unwrap_or_else(|| p.points[0].core.clone());
    let mut out = Vec::new();
    for q in &p.points {
        if !knobs.config && q.config_k != max_k {
            continue;
        }
        if !knobs.mapping && q.core != home {
            continue;
        }
        if !knobs.dvfs {
            let top = p.points.iter().filter(|o| o.core == q.core).map(|o| o.freq_hz).max().unwrap();
            if q.freq_hz != top {
                continue;
            }
        }
        out.push(q);
    }
    out
}

/// Exhaustive selection: filter by budget, then narrow by each tie-break in turn.
pub fn oracle_select<'a>(p: &'a PlatformProfile, b: &Budget, knobs: &Knobs) -> Option<&'a OperatingPoint> {
    let mut c: Vec<&OperatingPoint> = oracle_allowed(p, knobs)
        .into_iter()
        .filter(|q| q.metric(b.metric).is_some_and(|v| v <= b.limit))
        .collect();
    let keep = |c: &mut Vec<&OperatingPoint>, key: &dyn Fn(&OperatingPoint) -> f64| {
        let best = c.iter().map(|q| key(q)).fold(f64::INFINITY, f64::min);
        c.retain(|q| key(q) == best);
    };
    keep(&mut c, &|q| -q.accuracy.unwrap());
    keep(&mut c, &|q| q.energy_mj().unwrap_or(f64::INFINITY));
    keep(&mut c, &|q| q.latency_ms);
    keep(&mut c, &|q| q.freq_hz as f64);
    c.first().copied()
}

/// Runs `cases` random (profile, budget, knobs) triples through the
/// selector and the reference; returns the number of feasible cases.
pub fn selector_corpus(seed: u64, cases: usize) -> Result<usize, String> {
    let mut r = rng(seed);
    let mut feasible = 0;
    for case in 0..cases {
        let profile = random_profile(&mut r);
        let knobs = random_knobs(&mut r);
        let metric = Metric::ALL[r.random_range(0..3)];
        let limit = match metric {
            Metric::Time => r.random_range(1.0..45.0),
            Metric::Power => r.random_range(50.0..1000.0),
            Metric::Energy => r.random_range(0.5..40.0),
        };
        let budget = Budget::new(metric, limit).unwrap();
        let want = oracle_select(&profile, &budget, &knobs);
        let allowed = oracle_allowed(&profile, &knobs);
        let ok = match select_point(&profile, &budget, &knobs) {
            Ok(got) => {
                feasible += 1;
                Some(got) == want && got.metric(metric).unwrap() <= limit
            }
            Err(Error::Infeasible { min_achievable, .. }) => {
                let min = allowed.iter().filter_map(|q| q.metric(metric)).fold(f64::INFINITY, f64::min);
                want.is_none() && min_achievable == min
            }
            Err(Error::Input(_)) | Err(Error::Config(_)) => allowed.iter().all(|q| q.metric(metric).is_none()),
            Err(_) => false,
        };
        if !ok {
            return Err(format!("case {case} disagrees with enumeration"));
        }
    }
    Ok(feasible)
}
