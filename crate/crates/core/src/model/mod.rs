//! The grouped network: parameters, inference at any active width, and the
//! per-group traced forward/backward used by the trainer.

mod arch;
mod checkpoint;

pub use arch::{ActiveConfig, ConvGeometry, GroupNetArch, ShapeTrace, NUM_CONVS, NUM_POOLS};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::ops::{self, ConvCtx, ConvGrads, LrnCtx, PoolCtx};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// One group's private conv stack.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupParams {
    pub convs: Vec<ConvParams>,
}

impl GroupParams {
    fn zeros(arch: &GroupNetArch) -> Self {
        let convs = (0..NUM_CONVS)
            .map(|l| {
                let spec = arch.conv_spec(l);
                ConvParams {
                    weight: Tensor::zeros(&spec.weight_dims()),
                    bias: Tensor::zeros(&[spec.out_channels]),
                }
            })
            .collect();
        Self { convs }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.convs.iter().flat_map(|c| [&c.weight, &c.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.convs.iter_mut().flat_map(|c| [&mut c.weight, &mut c.bias])
    }

    pub fn is_all_zero(&self) -> bool {
        self.tensors().all(Tensor::is_all_zero)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupModel {
    arch: GroupNetArch,
    feature_len: usize,
    pub groups: Vec<GroupParams>,
    /// `[num_classes, num_groups * feature_len]`; column block `g` reads group `g`.
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    pub trained_groups: usize,
    /// Per-channel mean subtracted from `pixel / 255` when the data was prepared.
    pub channel_mean: Option<[f32; 3]>,
}

/// Output of one inference.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub logits: Tensor,
    pub probs: Tensor,
}

impl Prediction {
    pub fn class(&self) -> usize {
        self.probs.argmax()
    }
}

/// Builds an untrained model: every parameter zero, no trained groups.
pub fn build_model(arch: GroupNetArch) -> Result<GroupModel> {
    arch.validate()?;
    let feature_len = arch.group_feature_len();
    let fc_in = arch.num_groups * feature_len;
    Ok(GroupModel {
        groups: (0..arch.num_groups).map(|_| GroupParams::zeros(&arch)).collect(),
        fc_weight: Tensor::zeros(&[arch.num_classes, fc_in]),
        fc_bias: Tensor::zeros(&[arch.num_classes]),
        trained_groups: 0,
        channel_mean: None,
        feature_len,
        arch,
    })
}

impl GroupModel {
    pub fn arch(&self) -> &GroupNetArch {
        &self.arch
    }

    pub fn num_groups(&self) -> usize {
        self.arch.num_groups
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn param_count(&self, k: usize) -> Result<usize> {
        self.arch.param_count(k)
    }

    pub fn model_size_bytes(&self, k: usize) -> Result<usize> {
        self.arch.model_size_bytes(k)
    }

    /// Copy of the classifier columns that read group `g`, row-major `[classes, feature_len]`.
    pub fn fc_block(&self, g: usize) -> Vec<f32> {
        let (f, width) = (self.feature_len, self.fc_weight.dims()[1]);
        (0..self.arch.num_classes)
            .flat_map(|o| self.fc_weight.data()[o * width + g * f..o * width + (g + 1) * f].to_vec())
            .collect()
    }

    pub(crate) fn fc_block_mut(&mut self, g: usize, mut visit: impl FnMut(&mut [f32])) {
        let (f, width) = (self.feature_len, self.fc_weight.dims()[1]);
        for o in 0..self.arch.num_classes {
            visit(&mut self.fc_weight.data_mut()[o * width + g * f..o * width + (g + 1) * f]);
        }
    }

    /// Whether group `g`'s conv stack and classifier block are entirely zero.
    pub fn group_is_zero(&self, g: usize) -> bool {
        self.groups[g].is_all_zero() && self.fc_block(g).iter().all(|&x| x == 0.0)
    }

    /// A copy in which groups `k..` (conv stacks and classifier blocks) hold zeros.
    pub fn with_groups_zeroed_from(&self, k: usize) -> GroupModel {
        let mut m = self.clone();
        for g in k..m.num_groups() {
            m.groups[g].tensors_mut().for_each(|t| t.fill(0.0));
            m.fc_block_mut(g, |cols| cols.fill(0.0));
        }
        m.trained_groups = m.trained_groups.min(k);
        m
    }

    /// Physically removes groups `k..`, giving a smaller standalone model.
    pub fn pruned(&self, k: usize) -> Result<GroupModel> {
        self.arch.check_k(k, false)?;
        let mut arch = self.arch.clone();
        arch.num_groups = k;
        let f = self.feature_len;
        let width = self.fc_weight.dims()[1];
        let classes = self.arch.num_classes;
        let mut fc = Vec::with_capacity(classes * k * f);
        for o in 0..classes {
            fc.extend_from_slice(&self.fc_weight.data()[o * width..o * width + k * f]);
        }
        Ok(GroupModel {
            groups: self.groups[..k].to_vec(),
            fc_weight: Tensor::from_vec(&[classes, k * f], fc)?,
            fc_bias: self.fc_bias.clone(),
            trained_groups: self.trained_groups.min(k),
            channel_mean: self.channel_mean,
            feature_len: f,
            arch,
        })
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        image.expect_dims("input", "image", &self.arch.input_dims)
    }

    /// Flattened Pool5 output of group `g`.
    pub fn group_features(&self, g: usize, image: &Tensor) -> Result<Tensor> {
        self.check_image(image)?;
        let arch = &self.arch;
        let p = &self.groups[g].convs;
        let conv = |l: usize, x: &Tensor| -> Result<Tensor> {
            let mut y = ops::conv2d_forward(x, &p[l].weight, &p[l].bias, &arch.conv_spec(l))?;
            ops::relu_forward_inplace(&mut y);
            Ok(y)
        };
        let x = conv(0, image)?;
        let x = ops::lrn_forward(&x, &arch.lrn)?;
        let (x, _) = ops::maxpool_forward(&x, &arch.pools[0])?;
        let x = conv(1, &x)?;
        let x = ops::lrn_forward(&x, &arch.lrn)?;
        let (x, _) = ops::maxpool_forward(&x, &arch.pools[1])?;
        let x = conv(2, &x)?;
        let x = conv(3, &x)?;
        let x = conv(4, &x)?;
        let (x, _) = ops::maxpool_forward(&x, &arch.pools[2])?;
        let n = x.len();
        x.reshape(&[n])
    }

    /// Classifier over already-concatenated features of the leading groups.
    pub fn classify(&self, features: &[f32]) -> Result<Prediction> {
        let width = self.fc_weight.dims()[1];
        if features.len() > width || features.len() % self.feature_len != 0 {
            return Err(Error::dim(
                "fc",
                format!("{} features do not form whole groups of {}", features.len(), self.feature_len),
            ));
        }
        let logits = ops::linear_prefix(features, self.fc_weight.data(), width, self.fc_bias.data());
        let logits = Tensor::from_vec(&[self.arch.num_classes], logits)?;
        let probs = ops::softmax(&logits)?;
        Ok(Prediction { logits, probs })
    }

    /// Inference using only the first `cfg.k()` groups.
    pub fn forward(&self, image: &Tensor, cfg: ActiveConfig) -> Result<Prediction> {
        let k = cfg.k();
        self.arch.check_k(k, false)?;
        if k > self.trained_groups {
            return Err(Error::Config(format!(
                "model not trained to this width: k={k} but only {} trained group(s)",
                self.trained_groups
            )));
        }
        self.forward_groups(image, k)
    }

    /// Evaluates all `num_groups` groups regardless of how many are trained.
    /// Untrained groups are zero and contribute nothing.
    pub fn forward_all_groups(&self, image: &Tensor) -> Result<Prediction> {
        self.forward_groups(image, self.num_groups())
    }

    fn forward_groups(&self, image: &Tensor, k: usize) -> Result<Prediction> {
        let mut features = Vec::with_capacity(k * self.feature_len);
        for g in 0..k {
            features.extend_from_slice(self.group_features(g, image)?.data());
        }
        self.classify(&features)
    }
}

pub fn forward(model: &GroupModel, image: &Tensor, cfg: ActiveConfig) -> Result<Prediction> {
    model.forward(image, cfg)
}

/// Activations of one group's forward pass, retained for backpropagation.
#[derive(Debug, Default)]
pub(crate) struct GroupTrace {
    conv: [ConvCtx; NUM_CONVS],
    relu_out: [Option<Tensor>; NUM_CONVS],
    lrn: [LrnCtx; 2],
    pool: [PoolCtx; NUM_POOLS],
    pub features: Option<Tensor>,
}

pub(crate) fn group_forward_traced(arch: &GroupNetArch, params: &GroupParams, image: &Tensor) -> Result<GroupTrace> {
    let mut t = GroupTrace::default();
    let p = &params.convs;
    let conv = |l: usize, x: &Tensor, t: &mut GroupTrace| -> Result<Tensor> {
        let mut y = ops::conv2d_forward_cached(x, &p[l].weight, &p[l].bias, &arch.conv_spec(l), &mut t.conv[l])?;
        ops::relu_forward_inplace(&mut y);
        t.relu_out[l] = Some(y.clone());
        Ok(y)
    };
    let x = conv(0, image, &mut t)?;
    let x = ops::lrn_forward_cached(&x, &arch.lrn, &mut t.lrn[0])?;
    let x = ops::maxpool_forward_cached(&x, &arch.pools[0], &mut t.pool[0])?;
    let x = conv(1, &x, &mut t)?;
    let x = ops::lrn_forward_cached(&x, &arch.lrn, &mut t.lrn[1])?;
    let x = ops::maxpool_forward_cached(&x, &arch.pools[1], &mut t.pool[1])?;
    let x = conv(2, &x, &mut t)?;
    let x = conv(3, &x, &mut t)?;
    let x = conv(4, &x, &mut t)?;
    let x = ops::maxpool_forward_cached(&x, &arch.pools[2], &mut t.pool[2])?;
    let n = x.len();
    t.features = Some(x.reshape(&[n])?);
    Ok(t)
}

/// Parameter gradients of one group's conv stack given the gradient of its
/// flattened features.
pub(crate) fn group_backward(
    arch: &GroupNetArch,
    params: &GroupParams,
    trace: &GroupTrace,
    grad_features: &[f32],
    pool5_dims: &[usize],
) -> Result<Vec<ConvGrads>> {
    let p = &params.convs;
    let mut grads: Vec<Option<ConvGrads>> = (0..NUM_CONVS).map(|_| None).collect();
    let relu_out = |l: usize| {
        trace.relu_out[l]
            .as_ref()
            .ok_or_else(|| Error::State(format!("conv{} activation missing from trace", l + 1)))
    };
    let mut conv_back = |l: usize, g: &Tensor| -> Result<Option<Tensor>> {
        let g = ops::relu_backward(relu_out(l)?, g)?;
        let cg = ops::conv2d_backward(&trace.conv[l], &p[l].weight, &g, &arch.conv_spec(l), l > 0)?;
        let gin = cg.input.clone();
        grads[l] = Some(cg);
        Ok(gin)
    };
    let g = Tensor::from_vec(pool5_dims, grad_features.to_vec())?;
    let g = ops::maxpool_backward(&trace.pool[2], &g)?;
    let g = conv_back(4, &g)?.expect("input grad");
    let g = conv_back(3, &g)?.expect("input grad");
    let g = conv_back(2, &g)?.expect("input grad");
    let g = ops::maxpool_backward(&trace.pool[1], &g)?;
    let g = ops::lrn_backward(&trace.lrn[1], &g, &arch.lrn)?;
    let g = conv_back(1, &g)?.expect("input grad");
    let g = ops::maxpool_backward(&trace.pool[0], &g)?;
    let g = ops::lrn_backward(&trace.lrn[0], &g, &arch.lrn)?;
    conv_back(0, &g)?;
    Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
}
