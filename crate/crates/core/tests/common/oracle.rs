//! Naive double-precision reference layers.

use groupnet::ops::{ConvSpec, LrnSpec, PoolSpec};
use groupnet::{GroupModel, Tensor};

#[derive(Debug, Clone)]
pub struct T64 {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl T64 {
    pub fn from(t: &Tensor) -> Self {
        Self {
            dims: t.dims().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), data: vec![0.0; dims.iter().product()] }
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.dims[1] + y) * self.dims[2] + x]
    }
}

pub fn conv(x: &T64, w: &T64, b: &T64, s: &ConvSpec) -> T64 {
    let (cin, h, wd) = (x.dims[0], x.dims[1] as isize, x.dims[2] as isize);
    let oh = (x.dims[1] + 2 * s.pad - s.kernel) / s.stride + 1;
    let ow = (x.dims[2] + 2 * s.pad - s.kernel) / s.stride + 1;
    let mut out = T64::zeros(&[s.out_channels, oh, ow]);
    for co in 0..s.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.data[co];
                for ci in 0..cin {
                    for ky in 0..s.kernel {
                        for kx in 0..s.kernel {
                            let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if iy < 0 || ix < 0 || iy >= h || ix >= wd {
                                continue;
                            }
                            let wv = w.data[((co * cin + ci) * s.kernel + ky) * s.kernel + kx];
                            acc += wv * x.at(ci, iy as usize, ix as usize);
                        }
                    }
                }
                out.data[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

pub fn relu(x: &T64) -> T64 {
    T64 { dims: x.dims.clone(), data: x.data.iter().map(|&v| v.max(0.0)).collect() }
}

/// `y = x / (k + alpha/n * sum_window x^2)^beta` across channels.
pub fn lrn(x: &T64, s: &LrnSpec) -> T64 {
    let (c, h, w) = (x.dims[0], x.dims[1], x.dims[2]);
    let half = s.local_size / 2;
    let mut out = x.clone();
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let lo = ch.saturating_sub(half);
                let hi = (ch + half).min(c - 1);
                let sum: f64 = (lo..=hi).map(|j| x.at(j, y, xx).powi(2)).sum();
                let scale = s.k as f64 + s.alpha as f64 / s.local_size as f64 * sum;
                out.data[(ch * h + y) * w + xx] = x.at(ch, y, xx) / scale.powf(s.beta as f64);
            }
        }
    }
    out
}

pub fn maxpool(x: &T64, s: &PoolSpec) -> T64 {
    let (c, h, w) = (x.dims[0], x.dims[1], x.dims[2]);
    let oh = (h - s.kernel) / s.stride + 1;
    let ow = (w - s.kernel) / s.stride + 1;
    let mut out = T64::zeros(&[c, oh, ow]);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for ky in 0..s.kernel {
                    for kx in 0..s.kernel {
                        m = m.max(x.at(ch, oy * s.stride + ky, ox * s.stride + kx));
                    }
                }
                out.data[(ch * oh + oy) * ow + ox] = m;
            }
        }
    }
    out
}

pub fn fc(x: &[f64], w: &T64, b: &T64) -> Vec<f64> {
    let (outs, ins) = (w.dims[0], w.dims[1]);
    (0..outs)
        .map(|o| b.data[o] + (0..x.len().min(ins)).map(|i| w.data[o * ins + i] * x[i]).sum::<f64>())
        .collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Pool5 features of group `g`.
pub fn group_features(model: &GroupModel, g: usize, image: &T64) -> Vec<f64> {
    let arch = model.arch();
    let p = &model.groups[g].convs;
    let c = |l: usize, x: &T64| relu(&conv(x, &T64::from(&p[l].weight), &T64::from(&p[l].bias), &arch.conv_spec(l)));
    let x = c(0, image);
    let x = maxpool(&lrn(&x, &arch.lrn), &arch.pools[0]);
    let x = c(1, &x);
    let x = maxpool(&lrn(&x, &arch.lrn), &arch.pools[1]);
    let x = c(4, &c(3, &c(2, &x)));
    maxpool(&x, &arch.pools[2]).data
}

/// Class probabilities using the first `k` groups.
pub fn forward(model: &GroupModel, k: usize, image: &T64) -> Vec<f64> {
    let features: Vec<f64> = (0..k).flat_map(|g| group_features(model, g, image)).collect();
    softmax(&fc(&features, &T64::from(&model.fc_weight), &T64::from(&model.fc_bias)))
}
