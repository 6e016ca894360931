#![allow(dead_code)]

pub mod gov;
pub mod kernels;
pub mod oracle;

use groupnet::data::{prepare_splits, Cifar10Record, DataSplits};
use groupnet::{build_model, GroupModel, GroupNetArch, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize], scale: f32) -> Tensor {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Every parameter uniform in `+-scale`, all groups marked trained.
pub fn random_model(arch: GroupNetArch, seed: u64, scale: f32) -> GroupModel {
    let mut r = rng(seed);
    let mut m = build_model(arch).unwrap();
    for g in &mut m.groups {
        for t in g.tensors_mut() {
            let fresh = random_tensor(&mut r, t.dims(), scale);
            *t = fresh;
        }
    }
    let fc = random_tensor(&mut r, m.fc_weight.dims(), scale);
    m.fc_weight = fc;
    m.fc_bias = random_tensor(&mut r, m.fc_bias.dims(), scale);
    m.trained_groups = m.num_groups();
    m
}

pub fn random_image(rng: &mut ChaCha8Rng, arch: &GroupNetArch) -> Tensor {
    random_tensor(rng, &arch.input_dims, 0.5)
}

pub fn group_digest(m: &GroupModel, g: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    for t in m.groups[g].tensors() {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    for v in m.fc_block(g) {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

pub fn conv_digest(m: &GroupModel, g: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    for t in m.groups[g].tensors() {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

/// Two colour classes (red vs blue dominant) with mild noise: separable by
/// the mean of a single channel.
pub fn two_colour_records(n: usize, seed: u64) -> Vec<Cifar10Record> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let mut pixels = vec![0u8; 3072];
            for (c, plane) in pixels.chunks_mut(1024).enumerate() {
                let base: f32 = match (label, c) {
                    (0, 0) | (1, 2) => 180.0,
                    _ => 60.0,
                };
                for p in plane {
                    *p = (base + r.random_range(-40.0f32..40.0)).clamp(0.0, 255.0) as u8;
                }
            }
            Cifar10Record { label, pixels }
        })
        .collect()
}

pub fn two_colour_splits(train: usize, val: usize) -> DataSplits {
    prepare_splits(
        &two_colour_records(train, 1),
        &two_colour_records(val, 2),
        &two_colour_records(val, 3),
        2,
    )
    .unwrap()
}

/// Small architecture for fast training tests.
pub fn tiny_arch(groups: usize, classes: usize) -> GroupNetArch {
    let mut a = GroupNetArch::default().with_groups(groups, 2);
    a.num_classes = classes;
    a
}
