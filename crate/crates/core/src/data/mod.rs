//! Datasets, CIFAR-10 ingestion, the synthetic blob generator and the
//! dataset archive container.

mod archive;
mod cifar;
mod synthetic;

pub use archive::{load_archive, read_archive, save_archive, write_archive, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use cifar::{
    load_cifar_dir, parse_cifar_batch, read_cifar_file, write_cifar_batch, Cifar10Record, CIFAR10_CLASSES,
    IMAGE_BYTES, RECORD_BYTES, TEST_BATCH, TRAIN_BATCHES,
};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_DIMS: [usize; 3] = [3, 32, 32];

/// Preprocessed images with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Input(format!("label {bad} outside {num_classes} classes")));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// The first `n` samples (or all of them if there are fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Re-centres images prepared with channel mean `from` onto mean `to`.
    pub fn shift_mean(&mut self, from: [f32; 3], to: [f32; 3]) {
        if from == to {
            return;
        }
        for img in &mut self.images {
            let plane = img.len() / 3;
            for (c, chunk) in img.data_mut().chunks_mut(plane).enumerate() {
                let delta = from[c] - to[c];
                chunk.iter_mut().for_each(|v| *v += delta);
            }
        }
    }
}

/// Train, validation and test sets sharing one preprocessing mean.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub channel_mean: [f32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl DataSplits {
    pub fn split(&self, which: Split) -> &Dataset {
        match which {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes
    }
}

/// Per-channel mean of `pixel / 255` over a set of records, accumulated in f64.
pub fn channel_mean(records: &[Cifar10Record]) -> [f32; 3] {
    let mut sums = [0f64; 3];
    for r in records {
        for (c, plane) in r.pixels.chunks(1024).enumerate() {
            sums[c] += plane.iter().map(|&p| p as f64 / 255.0).sum::<f64>();
        }
    }
    let n = (records.len() * 1024).max(1) as f64;
    sums.map(|s| (s / n) as f32)
}

/// `pixel / 255 - mean[channel]` as a `[3, 32, 32]` tensor.
pub fn preprocess(record: &Cifar10Record, mean: [f32; 3]) -> Tensor {
    let data = record
        .pixels
        .iter()
        .enumerate()
        .map(|(i, &p)| p as f32 / 255.0 - mean[i / 1024])
        .collect();
    Tensor::from_vec(&IMAGE_DIMS, data).expect("record has 3072 pixels")
}

fn to_dataset(records: &[Cifar10Record], mean: [f32; 3], num_classes: usize) -> Result<Dataset> {
    Dataset::new(
        records.iter().map(|r| preprocess(r, mean)).collect(),
        records.iter().map(|r| r.label as usize).collect(),
        num_classes,
    )
}

/// Builds the three splits. The mean is taken over the training split only.
pub fn prepare_splits(
    train: &[Cifar10Record],
    validation: &[Cifar10Record],
    test: &[Cifar10Record],
    num_classes: usize,
) -> Result<DataSplits> {
    if train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let mean = channel_mean(train);
    Ok(DataSplits {
        train: to_dataset(train, mean, num_classes)?,
        validation: to_dataset(validation, mean, num_classes)?,
        test: to_dataset(test, mean, num_classes)?,
        channel_mean: mean,
    })
}

/// CIFAR-10 splits: the last `val_count` training records become the
/// validation set. `limit` caps the number of training records kept.
pub fn cifar_splits(
    train: &[Cifar10Record],
    test: &[Cifar10Record],
    val_count: usize,
    limit: Option<usize>,
) -> Result<DataSplits> {
    if val_count >= train.len() {
        return Err(Error::Input(format!(
            "validation size {val_count} leaves no training records out of {}",
            train.len()
        )));
    }
    let (tr, val) = train.split_at(train.len() - val_count);
    let tr = &tr[..limit.unwrap_or(tr.len()).min(tr.len())];
    prepare_splits(tr, val, test, CIFAR10_CLASSES)
}
