//! Kernel checks shared by the test suites: forward passes against loop
//! oracles, backward passes against central differences. Numeric derivatives
//! come from double-precision reference layers so f32 rounding does not swamp
//! the difference quotient.

use super::oracle::{self, T64};
use super::{random_model, random_tensor, rng};
use groupnet::ops::*;
use groupnet::train::sample_gradients;
use groupnet::{GroupModel, GroupNetArch, Tensor};

const EPS: f64 = 1e-3;
/// A whole group has thousands of ReLU and max-pool switch points per
/// parameter; a 1e-3 step crosses enough of them to make the difference
/// quotient meaningless for conv1, so the composite check uses a smaller step.
const GROUP_EPS: f64 = 1e-5;
const REL_TOL: f64 = 1e-2;
const PASS_FRACTION: f64 = 0.95;

/// Fraction of coordinates whose analytic and numeric derivatives agree to
/// `REL_TOL` relative error. Values that are both tiny are compared absolutely.
fn agreement(pairs: &[(f64, f64)]) -> f64 {
    let ok = pairs
        .iter()
        .filter(|(a, n)| {
            let scale = a.abs().max(n.abs());
            scale < 1e-6 || (a - n).abs() / scale < REL_TOL
        })
        .count();
    ok as f64 / pairs.len() as f64
}

pub type Check = Result<(), String>;

fn check(what: &str, pairs: Vec<(f64, f64)>) -> Check {
    let frac = agreement(&pairs);
    if frac >= PASS_FRACTION {
        Ok(())
    } else {
        Err(format!("{what}: only {:.1}% of coordinates agree", frac * 100.0))
    }
}

/// Projection loss `sum(r * y)` so that dL/dy = r.
fn project(y: &T64, r: &Tensor) -> f64 {
    y.data.iter().zip(r.data()).map(|(&a, &b)| a * b as f64).sum()
}

/// Central differences of `loss` at up to `limit` evenly spaced coordinates
/// of `x`, paired with the analytic gradient.
fn compare(analytic: &Tensor, x: &Tensor, limit: usize, loss: impl FnMut(&T64) -> f64) -> Vec<(f64, f64)> {
    compare_at(EPS, analytic, x, limit, loss)
}

fn compare_at(
    eps: f64,
    analytic: &Tensor,
    x: &Tensor,
    limit: usize,
    mut loss: impl FnMut(&T64) -> f64,
) -> Vec<(f64, f64)> {
    let base = T64::from(x);
    let step = (x.len() / limit).max(1);
    (0..x.len())
        .step_by(step)
        .map(|i| {
            let mut p = base.clone();
            p.data[i] += eps;
            let lp = loss(&p);
            p.data[i] -= 2.0 * eps;
            let lm = loss(&p);
            (analytic.data()[i] as f64, (lp - lm) / (2.0 * eps))
        })
        .collect()
}

pub fn conv_gradients() -> Check {
    let specs = [
        (ConvSpec::new(3, 4, 3, 1, 0), 9),
        (ConvSpec::new(2, 3, 5, 1, 2), 8),
        (ConvSpec::new(3, 3, 3, 1, 1), 7),
        (ConvSpec::new(2, 2, 3, 2, 1), 9),
        (ConvSpec::new(4, 2, 1, 1, 0), 5),
    ];
    for (case, (spec, size)) in specs.into_iter().enumerate() {
        let mut r = rng(case as u64);
        let x = random_tensor(&mut r, &[spec.in_channels, size, size], 1.0);
        let w = random_tensor(&mut r, &spec.weight_dims(), 0.5);
        let b = random_tensor(&mut r, &[spec.out_channels], 0.5);
        let mut ctx = ConvCtx::default();
        let y = conv2d_forward_cached(&x, &w, &b, &spec, &mut ctx).unwrap();
        let proj = random_tensor(&mut r, y.dims(), 1.0);
        let g = conv2d_backward(&ctx, &w, &proj, &spec, true).unwrap();
        let (x64, w64, b64) = (T64::from(&x), T64::from(&w), T64::from(&b));

        let gx = g.input.as_ref().unwrap();
        check("conv input", compare(gx, &x, 60, |x| project(&oracle::conv(x, &w64, &b64, &spec), &proj)))?;
        check("conv weights", compare(&g.weights, &w, 60, |w| project(&oracle::conv(&x64, w, &b64, &spec), &proj)))?;
        check("conv bias", compare(&g.bias, &b, 60, |b| project(&oracle::conv(&x64, &w64, b, &spec), &proj)))?;
    }
    Ok(())
}

pub fn lrn_gradients() -> Check {
    let specs = [
        LrnSpec::default(),
        LrnSpec { alpha: 0.5, ..LrnSpec::default() },
        LrnSpec { local_size: 3, alpha: 1.0, beta: 0.5, k: 2.0 },
        LrnSpec { local_size: 5, alpha: 2.0, beta: 0.75, k: 1.0 },
        LrnSpec { local_size: 1, alpha: 0.3, beta: 1.0, k: 1.0 },
    ];
    for (case, spec) in specs.into_iter().enumerate() {
        let mut r = rng(10 + case as u64);
        let x = random_tensor(&mut r, &[7, 4, 4], 1.5);
        let mut ctx = LrnCtx::default();
        let y = lrn_forward_cached(&x, &spec, &mut ctx).unwrap();
        let proj = random_tensor(&mut r, y.dims(), 1.0);
        let g = lrn_backward(&ctx, &proj, &spec).unwrap();
        check("lrn", compare(&g, &x, 112, |x| project(&oracle::lrn(x, &spec), &proj)))?;
    }
    Ok(())
}

pub fn pool_gradients() -> Check {
    let cases = [
        (PoolSpec::new(4, 1), 9),
        (PoolSpec::new(3, 2), 9),
        (PoolSpec::new(2, 2), 8),
        (PoolSpec::new(3, 1), 6),
        (PoolSpec::new(3, 2), 13),
    ];
    for (case, (spec, size)) in cases.into_iter().enumerate() {
        let mut r = rng(20 + case as u64);
        let x = random_tensor(&mut r, &[2, size, size], 1.0);
        let mut ctx = PoolCtx::default();
        let y = maxpool_forward_cached(&x, &spec, &mut ctx).unwrap();
        let proj = random_tensor(&mut r, y.dims(), 1.0);
        let g = maxpool_backward(&ctx, &proj).unwrap();
        check("maxpool", compare(&g, &x, 200, |x| project(&oracle::maxpool(x, &spec), &proj)))?;
    }
    Ok(())
}

pub fn relu_and_fc_gradients() -> Check {
    for case in 0..5u64 {
        let mut r = rng(30 + case);
        let x = random_tensor(&mut r, &[3, 5, 5], 1.0);
        let y = relu_forward(&x);
        let proj = random_tensor(&mut r, y.dims(), 1.0);
        let g = relu_backward(&y, &proj).unwrap();
        check("relu", compare(&g, &x, 75, |x| project(&oracle::relu(x), &proj)))?;

        let (inputs, outputs) = (6 + case as usize, 3 + case as usize);
        let x = random_tensor(&mut r, &[inputs], 1.0);
        let w = random_tensor(&mut r, &[outputs, inputs], 1.0);
        let b = random_tensor(&mut r, &[outputs], 1.0);
        let proj = random_tensor(&mut r, &[outputs], 1.0);
        let g = fc_backward(Some(&x), &w, &proj).unwrap();
        let (x64, w64, b64) = (T64::from(&x), T64::from(&w), T64::from(&b));
        let fcp = |x: &T64, w: &T64, b: &T64| {
            let y = oracle::fc(&x.data, w, b);
            project(&T64 { dims: vec![y.len()], data: y }, &proj)
        };
        check("fc input", compare(&g.input, &x, 50, |x| fcp(x, &w64, &b64)))?;
        check("fc weights", compare(&g.weights, &w, 50, |w| fcp(&x64, w, &b64)))?;
        check("fc bias", compare(&g.bias, &b, 50, |b| fcp(&x64, &w64, b)))?;
    }
    Ok(())
}

pub fn softmax_cross_entropy_gradient() -> Check {
    for case in 0..5u64 {
        let mut r = rng(40 + case);
        let classes = 3 + case as usize;
        let z = random_tensor(&mut r, &[classes], 3.0);
        let label = case as usize % classes;
        let (_, g) = cross_entropy_loss(&softmax(&z).unwrap(), label).unwrap();
        check(
            "softmax+ce",
            compare(&g, &z, classes, |z| -oracle::softmax(&z.data)[label].ln()),
        )?;
    }
    Ok(())
}

/// End-to-end gradient of one training sample: conv stack of the trainable
/// group and the classifier, through every layer type.
pub fn whole_group_gradients() -> Check {
    let mut arch = GroupNetArch::default().with_groups(2, 2);
    arch.lrn.alpha = 0.5;
    for case in 0..5u64 {
        let model = random_model(arch.clone(), 50 + case, 0.3);
        let mut r = rng(60 + case);
        let image = random_tensor(&mut r, &arch.input_dims, 1.0);
        let img64 = T64::from(&image);
        let label = case as usize % arch.num_classes;
        let k = 1 + (case as usize % 2);
        let g = k - 1;
        let grads = sample_gradients(&model, k, &image, label).unwrap();
        let loss = |m: &GroupModel| -oracle::forward(m, k, &img64)[label].ln();
        let with = |edit: &dyn Fn(&mut GroupModel, Tensor), t: &T64| {
            let mut m = model.clone();
            let data = t.data.iter().map(|&v| v as f32).collect();
            edit(&mut m, Tensor::from_vec(&t.dims, data).unwrap());
            m
        };
        // Perturbed parameters are rounded back to f32, about 1e-3 relative
        // error in the quotient at GROUP_EPS.
        for l in 0..5 {
            let w = &model.groups[g].convs[l].weight;
            let pairs = compare_at(GROUP_EPS, &grads.convs[l].weights, w, 24, |t| {
                loss(&with(&|m, t| m.groups[g].convs[l].weight = t, t))
            });
            check(&format!("group conv{} weight", l + 1), pairs)?;
            let b = &model.groups[g].convs[l].bias;
            let pairs = compare_at(GROUP_EPS, &grads.convs[l].bias, b, 24, |t| {
                loss(&with(&|m, t| m.groups[g].convs[l].bias = t, t))
            });
            check(&format!("group conv{} bias", l + 1), pairs)?;
        }
        let pairs = compare_at(GROUP_EPS, &grads.fc_weight, &model.fc_weight, 60, |t| loss(&with(&|m, t| m.fc_weight = t, t)));
        check("group fc weight", pairs)?;
        let pairs = compare_at(GROUP_EPS, &grads.fc_bias, &model.fc_bias, 10, |t| loss(&with(&|m, t| m.fc_bias = t, t)));
        check("group fc bias", pairs)?;
    }
    Ok(())
}

/// Single-precision loop oracles accumulating in the engine's documented
/// order, so results must match bit for bit.
mod exact {
    use groupnet::ops::{ConvSpec, PoolSpec};
    use groupnet::Tensor;

    pub fn conv(x: &Tensor, w: &Tensor, b: &Tensor, s: &ConvSpec) -> Vec<f32> {
        let (cin, h, wd) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let oh = (h + 2 * s.pad - s.kernel) / s.stride + 1;
        let ow = (wd + 2 * s.pad - s.kernel) / s.stride + 1;
        let mut out = Vec::new();
        for co in 0..s.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for ky in 0..s.kernel {
                            for kx in 0..s.kernel {
                                let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                                let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let wi = ((co * cin + ci) * s.kernel + ky) * s.kernel + kx;
                                let xi = (ci * h + iy as usize) * wd + ix as usize;
                                acc += w.data()[wi] * x.data()[xi];
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    pub fn fc(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f32> {
        let n = x.len();
        (0..w.dims()[0])
            .map(|o| {
                let mut acc = b.data()[o];
                for i in 0..n {
                    acc += w.data()[o * n + i] * x.data()[i];
                }
                acc
            })
            .collect()
    }

    pub fn maxpool(x: &Tensor, s: &PoolSpec) -> Vec<f32> {
        let (c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let (oh, ow) = ((h - s.kernel) / s.stride + 1, (w - s.kernel) / s.stride + 1);
        let mut out = Vec::new();
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    for ky in 0..s.kernel {
                        for kx in 0..s.kernel {
                            m = m.max(x.data()[(ch * h + oy * s.stride + ky) * w + ox * s.stride + kx]);
                        }
                    }
                    out.push(m);
                }
            }
        }
        out
    }
}

fn bits_equal(what: &str, got: &Tensor, want: &[f32]) -> Check {
    if got.len() == want.len() && got.data().iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits()) {
        Ok(())
    } else {
        Err(format!("{what}: forward differs from loop oracle"))
    }
}

fn close(what: &str, got: &Tensor, want: &[f64], rel: f64) -> Check {
    for (a, b) in got.data().iter().zip(want) {
        let err = (*a as f64 - b).abs() / b.abs().max(1e-30);
        if err > rel {
            return Err(format!("{what}: {a} vs {b} (rel err {err:.2e})"));
        }
    }
    Ok(())
}

/// Forward passes of every layer against loop oracles, five random
/// instances each.
pub fn forward_oracles() -> Check {
    let conv_specs = [
        (ConvSpec::new(3, 16, 3, 1, 0), 32),
        (ConvSpec::new(16, 16, 5, 1, 2), 27),
        (ConvSpec::new(16, 16, 3, 1, 1), 13),
        (ConvSpec::new(2, 3, 3, 2, 1), 10),
        (ConvSpec::new(4, 2, 5, 1, 0), 9),
    ];
    for (case, (spec, size)) in conv_specs.into_iter().enumerate() {
        let mut r = rng(100 + case as u64);
        let x = random_tensor(&mut r, &[spec.in_channels, size, size], 1.0);
        let w = random_tensor(&mut r, &spec.weight_dims(), 0.5);
        let b = random_tensor(&mut r, &[spec.out_channels], 0.5);
        bits_equal("conv", &conv2d_forward(&x, &w, &b, &spec).unwrap(), &exact::conv(&x, &w, &b, &spec))?;
    }
    let pools = [(PoolSpec::new(4, 1), 30), (PoolSpec::new(3, 2), 27), (PoolSpec::new(3, 2), 13), (PoolSpec::new(2, 2), 8), (PoolSpec::new(3, 1), 5)];
    for (case, (spec, size)) in pools.into_iter().enumerate() {
        let x = random_tensor(&mut rng(110 + case as u64), &[3, size, size], 1.0);
        bits_equal("maxpool", &maxpool_forward(&x, &spec).unwrap().0, &exact::maxpool(&x, &spec))?;
    }
    for case in 0..5u64 {
        let mut r = rng(120 + case);
        let n = 10 + 50 * case as usize;
        let x = random_tensor(&mut r, &[n], 1.0);
        let w = random_tensor(&mut r, &[10, n], 0.5);
        let b = random_tensor(&mut r, &[10], 0.5);
        bits_equal("fc", &fc_forward(&x, &w, &b).unwrap(), &exact::fc(&x, &w, &b))?;

        let t = random_tensor(&mut r, &[4, 6, 6], 1.0);
        let want: Vec<f32> = t.data().iter().map(|v| v.max(0.0)).collect();
        bits_equal("relu", &relu_forward(&t), &want)?;

        let spec = LrnSpec { alpha: 1e-4 * 10f32.powi(case as i32), ..LrnSpec::default() };
        let t = random_tensor(&mut r, &[16, 5, 5], 3.0);
        close("lrn", &lrn_forward(&t, &spec).unwrap(), &oracle::lrn(&T64::from(&t), &spec).data, 1e-6)?;

        let z = random_tensor(&mut r, &[10], 8.0);
        close("softmax", &softmax(&z).unwrap(), &oracle::softmax(&T64::from(&z).data), 1e-6)?;
    }
    Ok(())
}

/// Every backward check in turn.
pub fn backward_checks() -> Check {
    conv_gradients()?;
    lrn_gradients()?;
    pool_gradients()?;
    relu_and_fc_gradients()?;
    softmax_cross_entropy_gradient()?;
    whole_group_gradients()
}
