//! Synthetic big.LITTLE profile.
//!
//! Latency is extrapolated from the two measured full-width points per core
//! with `t(k, f) = (k / 4) * (a + b / f)`. Power and accuracy columns are
//! illustrative placeholders, not measurements.

use super::{OperatingPoint, PlatformProfile};

pub const XU3_A15_LEVELS_MHZ: std::ops::RangeInclusive<u64> = 200..=1800;
pub const XU3_A7_LEVELS_MHZ: std::ops::RangeInclusive<u64> = 200..=1300;

const PLATFORM: &str = "odroid_xu3_synthetic";
const ACCURACY: [f64; 4] = [0.55, 0.64, 0.68, 0.712];

struct CoreModel {
    name: &'static str,
    levels: std::ops::RangeInclusive<u64>,
    /// Full-width latency at the lowest and highest level, ms.
    t_low: f64,
    t_high: f64,
    /// Power model `static + dynamic * f_ghz^2`, mW.
    static_mw: f64,
    dynamic_mw: f64,
}

impl CoreModel {
    fn coefficients(&self) -> (f64, f64) {
        let f_low = *self.levels.start() as f64 / 1000.0;
        let f_high = *self.levels.end() as f64 / 1000.0;
        let b = (self.t_low - self.t_high) / (1.0 / f_low - 1.0 / f_high);
        (self.t_low - b / f_low, b)
    }
}

const CORES: [CoreModel; 2] = [
    CoreModel {
        name: "A15",
        levels: XU3_A15_LEVELS_MHZ,
        t_low: 1020.0,
        t_high: 117.0,
        static_mw: 120.0,
        dynamic_mw: 650.0,
    },
    CoreModel {
        name: "A7",
        levels: XU3_A7_LEVELS_MHZ,
        t_low: 1780.0,
        t_high: 280.0,
        static_mw: 30.0,
        dynamic_mw: 140.0,
    },
];

fn round_to(v: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    (v * s).round() / s
}

/// A15 with 17 and A7 with 12 frequency levels in 100 MHz steps, four widths
/// each: 116 points.
pub fn synthetic_xu3() -> PlatformProfile {
    let mut points = Vec::new();
    for core in &CORES {
        let (a, b) = core.coefficients();
        for mhz in core.levels.clone().step_by(100) {
            let f = mhz as f64 / 1000.0;
            for k in 1..=4usize {
                points.push(OperatingPoint {
                    platform: PLATFORM.into(),
                    core: core.name.into(),
                    freq_hz: mhz * 1_000_000,
                    config_k: k,
                    latency_ms: round_to(k as f64 / 4.0 * (a + b / f), 4),
                    power_mw: Some(round_to(core.static_mw + core.dynamic_mw * f * f, 2)),
                    accuracy: Some(ACCURACY[k - 1]),
                });
            }
        }
    }
    PlatformProfile::new(PLATFORM, points).expect("generated profile is valid")
}
