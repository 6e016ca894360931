//! Deterministic synthetic image classes.
//!
//! Each class owns a prototype: a coloured Gaussian blob at a fixed position
//! with a fixed width. A sample renders its class blob with jittered position,
//! amplitude and colour on a random background, adds one distractor blob of
//! random colour and position, and finishes with per-pixel Gaussian noise.
//! Samples are emitted as CIFAR-10 style byte records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cifar::{Cifar10Record, CIFAR10_CLASSES, IMAGE_BYTES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub seed: u64,
    /// Std-dev of the blob centre jitter, in pixels.
    pub position_jitter: f64,
    /// Std-dev of the per-channel colour jitter.
    pub color_jitter: f64,
    /// Std-dev of the additive pixel noise (pixel scale 0..1).
    pub pixel_noise: f64,
    /// Peak amplitude range of the distractor blob.
    pub distractor_max: f64,
}

impl SyntheticSpec {
    pub fn new(classes: usize, seed: u64) -> Self {
        Self {
            classes,
            seed,
            position_jitter: 3.0,
            color_jitter: 0.15,
            pixel_noise: 0.12,
            distractor_max: 0.7,
        }
    }
}

struct Prototype {
    cx: f64,
    cy: f64,
    width: f64,
    color: [f64; 3],
}

fn prototypes(spec: &SyntheticSpec) -> Vec<Prototype> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.classes)
        .map(|_| Prototype {
            cx: rng.random_range(8.0..24.0),
            cy: rng.random_range(8.0..24.0),
            width: rng.random_range(2.5..5.5),
            color: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
        })
        .collect()
}

fn render(
    rng: &mut ChaCha8Rng,
    proto: &Prototype,
    spec: &SyntheticSpec,
    normal: &Normal<f64>,
) -> Vec<u8> {
    let cx = proto.cx + spec.position_jitter * normal.sample(rng);
    let cy = proto.cy + spec.position_jitter * normal.sample(rng);
    let amp = rng.random_range(0.5..1.0);
    let color: Vec<f64> = proto
        .color
        .iter()
        .map(|&c| (c + spec.color_jitter * normal.sample(rng)).clamp(0.0, 1.0))
        .collect();
    let background: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.5)).collect();
    let (dx, dy) = (rng.random_range(0.0..32.0), rng.random_range(0.0..32.0));
    let dwidth: f64 = rng.random_range(2.0..6.0);
    let damp = rng.random_range(0.0..spec.distractor_max.max(f64::MIN_POSITIVE));
    let dcolor: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();

    let mut pixels = vec![0u8; IMAGE_BYTES];
    for c in 0..3 {
        for y in 0..32 {
            for x in 0..32 {
                let (fx, fy) = (x as f64, y as f64);
                let blob = (-((fx - cx).powi(2) + (fy - cy).powi(2)) / (2.0 * proto.width * proto.width)).exp();
                let distract = (-((fx - dx).powi(2) + (fy - dy).powi(2)) / (2.0 * dwidth * dwidth)).exp();
                let v = background[c]
                    + amp * color[c] * blob
                    + damp * dcolor[c] * distract
                    + spec.pixel_noise * normal.sample(rng);
                pixels[c * 1024 + y * 32 + x] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
    }
    pixels
}

/// Generates `count` samples with labels cycling through the classes, using
/// sample stream `stream` (distinct streams give independent samples from the
/// same class prototypes).
pub fn generate_synthetic(spec: &SyntheticSpec, count: usize, stream: u64) -> Result<Vec<Cifar10Record>> {
    if spec.classes < 2 || spec.classes > CIFAR10_CLASSES {
        return Err(Error::Input(format!(
            "synthetic class count must be in 2..={CIFAR10_CLASSES}, got {}",
            spec.classes
        )));
    }
    let protos = prototypes(spec);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream + 1);
    let mut labels: Vec<usize> = (0..count).map(|i| i % spec.classes).collect();
    // Shuffle so splits taken by position stay balanced but not periodic.
    for i in (1..labels.len()).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    Ok(labels
        .into_iter()
        .map(|label| Cifar10Record {
            label: label as u8,
            pixels: render(&mut rng, &protos[label], spec, &normal),
        })
        .collect())
}
