use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{ConvSpec, LrnSpec, PoolSpec};

/// Kernel geometry of one conv layer; channel counts come from the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub const fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self { kernel, stride, pad }
    }
}

pub const NUM_CONVS: usize = 5;
pub const NUM_POOLS: usize = 3;

/// Grouped AlexNet-style network for 32x32 images.
///
/// Per group: `Conv1 ReLU Norm1 Pool1 Conv2 ReLU Norm2 Pool2 Conv3 ReLU Conv4
/// ReLU Conv5 ReLU Pool5`. Group outputs are flattened, concatenated in group
/// order and fed to a single fully connected classifier. Every group sees
/// the full input image; there are no other cross-group connections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNetArch {
    pub num_groups: usize,
    pub channels_per_group: usize,
    pub input_dims: [usize; 3],
    pub num_classes: usize,
    pub convs: [ConvGeometry; NUM_CONVS],
    pub lrn: LrnSpec,
    pub pools: [PoolSpec; NUM_POOLS],
}

impl Default for GroupNetArch {
    fn default() -> Self {
        Self {
            num_groups: 4,
            channels_per_group: 16,
            input_dims: [3, 32, 32],
            num_classes: 10,
            convs: [
                ConvGeometry::new(3, 1, 0),
                ConvGeometry::new(5, 1, 2),
                ConvGeometry::new(3, 1, 1),
                ConvGeometry::new(3, 1, 1),
                ConvGeometry::new(3, 1, 1),
            ],
            lrn: LrnSpec::default(),
            pools: [PoolSpec::new(4, 1), PoolSpec::new(3, 2), PoolSpec::new(3, 2)],
        }
    }
}

/// Per-group activation shapes `[C, H, W]` after every stage of a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeTrace {
    pub conv1: [usize; 3],
    pub pool1: [usize; 3],
    pub conv2: [usize; 3],
    pub pool2: [usize; 3],
    pub conv3: [usize; 3],
    pub conv4: [usize; 3],
    pub conv5: [usize; 3],
    pub pool5: [usize; 3],
}

impl GroupNetArch {
    pub fn with_groups(mut self, num_groups: usize, channels_per_group: usize) -> Self {
        self.num_groups = num_groups;
        self.channels_per_group = channels_per_group;
        self
    }

    pub fn conv_spec(&self, layer: usize) -> ConvSpec {
        let g = self.convs[layer];
        let cin = if layer == 0 { self.input_dims[0] } else { self.channels_per_group };
        ConvSpec::new(cin, self.channels_per_group, g.kernel, g.stride, g.pad)
    }

    pub fn validate(&self) -> Result<ShapeTrace> {
        if self.num_groups == 0 || self.channels_per_group == 0 || self.num_classes == 0 {
            return Err(Error::Config(format!(
                "groups ({}), channels per group ({}) and classes ({}) must be positive",
                self.num_groups, self.channels_per_group, self.num_classes
            )));
        }
        if self.input_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("invalid input dims {:?}", self.input_dims)));
        }
        self.lrn.validate(false)?;
        let c = self.channels_per_group;
        let conv = |layer: usize, h: usize, w: usize| -> Result<[usize; 3]> {
            let spec = self.conv_spec(layer);
            spec.validate()?;
            let oh = spec.out_size(h).map_err(|e| Error::Config(format!("conv{}: {e}", layer + 1)))?;
            let ow = spec.out_size(w).map_err(|e| Error::Config(format!("conv{}: {e}", layer + 1)))?;
            Ok([c, oh, ow])
        };
        let pool = |idx: usize, s: [usize; 3]| -> Result<[usize; 3]> {
            let spec = self.pools[idx];
            spec.validate()?;
            let name = ["pool1", "pool2", "pool5"][idx];
            let oh = spec.out_size(s[1]).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            let ow = spec.out_size(s[2]).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            Ok([c, oh, ow])
        };
        let [_, h, w] = self.input_dims;
        let conv1 = conv(0, h, w)?;
        let pool1 = pool(0, conv1)?;
        let conv2 = conv(1, pool1[1], pool1[2])?;
        let pool2 = pool(1, conv2)?;
        let conv3 = conv(2, pool2[1], pool2[2])?;
        let conv4 = conv(3, conv3[1], conv3[2])?;
        let conv5 = conv(4, conv4[1], conv4[2])?;
        let pool5 = pool(2, conv5)?;
        Ok(ShapeTrace {
            conv1,
            pool1,
            conv2,
            pool2,
            conv3,
            conv4,
            conv5,
            pool5,
        })
    }

    /// Flattened feature length one group contributes to the classifier.
    pub fn group_feature_len(&self) -> usize {
        let s = self.validate().expect("validated architecture");
        s.pool5.iter().product()
    }

    pub fn fc_inputs(&self) -> usize {
        self.num_groups * self.group_feature_len()
    }

    /// Weights and biases of one group's conv stack.
    pub fn group_param_count(&self) -> usize {
        (0..NUM_CONVS).map(|l| self.conv_spec(l).param_count()).sum()
    }

    /// Parameters used by the `k`-group configuration: `k` conv stacks, the
    /// classifier columns fed by those groups, and the classifier bias.
    pub fn param_count(&self, k: usize) -> Result<usize> {
        self.check_k(k, true)?;
        Ok(k * self.group_param_count() + self.num_classes * k * self.group_feature_len() + self.num_classes)
    }

    /// Parameter storage in bytes at 32 bits per parameter.
    pub fn model_size_bytes(&self, k: usize) -> Result<usize> {
        Ok(4 * self.param_count(k)?)
    }

    /// Multiply-accumulate count of one forward pass at `k` groups.
    pub fn flops(&self, k: usize) -> Result<u64> {
        self.check_k(k, false)?;
        let s = self.validate()?;
        let outs = [s.conv1, s.conv2, s.conv3, s.conv4, s.conv5];
        let per_group: u64 = (0..NUM_CONVS)
            .map(|l| {
                let spec = self.conv_spec(l);
                let out: usize = outs[l].iter().product();
                (out * spec.in_channels * spec.kernel * spec.kernel) as u64
            })
            .sum();
        let fc = (self.num_classes * self.group_feature_len()) as u64;
        Ok(k as u64 * (per_group + fc))
    }

    pub(crate) fn check_k(&self, k: usize, allow_zero: bool) -> Result<()> {
        if k > self.num_groups || (k == 0 && !allow_zero) {
            return Err(Error::Config(format!(
                "config k={k} outside 1..={} groups",
                self.num_groups
            )));
        }
        Ok(())
    }
}

/// Number of leading groups evaluated at inference (k=1..4 are the 25..100% models).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActiveConfig(usize);

impl ActiveConfig {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("active config needs at least one group".into()));
        }
        Ok(Self(k))
    }

    /// Maps a width percentage (`100 * k / groups`) back to `k`.
    pub fn from_percent(pct: u32, num_groups: usize) -> Result<Self> {
        let scaled = pct as usize * num_groups;
        if pct == 0 || pct > 100 || scaled % 100 != 0 {
            return Err(Error::Config(format!(
                "{pct}% is not a whole number of {num_groups} groups"
            )));
        }
        Self::new(scaled / 100)
    }

    pub fn k(self) -> usize {
        self.0
    }

    pub fn percent(self, num_groups: usize) -> f64 {
        100.0 * self.0 as f64 / num_groups as f64
    }
}
