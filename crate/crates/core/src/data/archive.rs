//! Dataset archive container.
//!
//! ```text
//! "GDDS" | u32 version | u32 num_classes
//! record "mean"   [3]               preprocessing channel mean
//! record "images" [N, 3, H, W]      preprocessed pixels
//! index  "labels"     N values
//! index  "train"      indices into images
//! index  "validation" indices into images
//! index  "test"       indices into images
//! ```
//!
//! Records use the checkpoint record layout; an index is
//! `u32 name_len | name | u32 count | u32 values...`. Little-endian throughout.

use std::fs;
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{DataSplits, Dataset, IMAGE_DIMS};

pub const ARCHIVE_MAGIC: [u8; 4] = *b"GDDS";
pub const ARCHIVE_VERSION: u32 = 1;

const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

pub fn write_archive(splits: &DataSplits) -> Vec<u8> {
    let sets = [&splits.train, &splits.validation, &splits.test];
    let total: usize = sets.iter().map(|s| s.len()).sum();
    let plane: usize = IMAGE_DIMS.iter().product();

    let mut w = ByteWriter::default();
    w.bytes(&ARCHIVE_MAGIC);
    w.u32(ARCHIVE_VERSION);
    w.len_u32(splits.num_classes());
    w.tensor_record("mean", &Tensor::from_vec(&[3], splits.channel_mean.to_vec()).unwrap());

    let mut pixels = Vec::with_capacity(total * plane);
    let mut labels = Vec::with_capacity(total);
    for s in sets {
        for (img, &l) in s.images.iter().zip(&s.labels) {
            pixels.extend_from_slice(img.data());
            labels.push(l as u32);
        }
    }
    // A zero-length dimension is not representable; an empty archive stores
    // a [0]-less record by writing rank 4 with N = 0 directly.
    if total == 0 {
        w.len_u32("images".len());
        w.bytes(b"images");
        w.u32(4);
        w.u32(0);
        IMAGE_DIMS.iter().for_each(|&d| w.len_u32(d));
    } else {
        let dims = [total, IMAGE_DIMS[0], IMAGE_DIMS[1], IMAGE_DIMS[2]];
        w.tensor_record("images", &Tensor::from_vec(&dims, pixels).unwrap());
    }
    w.index_record("labels", &labels);
    let mut start = 0u32;
    for (name, s) in SPLIT_NAMES.iter().zip(sets) {
        let idx: Vec<u32> = (start..start + s.len() as u32).collect();
        w.index_record(name, &idx);
        start += s.len() as u32;
    }
    w.buf
}

pub fn read_archive(bytes: &[u8]) -> Result<DataSplits> {
    let mut r = ByteReader::new(bytes);
    r.magic(&ARCHIVE_MAGIC)?;
    let version = r.u32()?;
    if version != ARCHIVE_VERSION {
        return Err(Error::Version {
            expected: ARCHIVE_VERSION,
            found: version,
        });
    }
    let num_classes = r.u32()? as usize;
    let mean = r.tensor_record("mean")?;
    if mean.dims() != [3] {
        return Err(Error::RecordDims {
            name: "mean".into(),
            expected: vec![3],
            found: mean.dims().to_vec(),
        });
    }

    let images_at = r.offset();
    let (count, pixels) = read_images(&mut r)?;
    let labels = r.index_record("labels")?;
    if labels.len() != count {
        return Err(Error::Malformed {
            offset: images_at,
            reason: format!("{count} images but {} labels", labels.len()),
        });
    }
    let plane: usize = IMAGE_DIMS.iter().product();
    let mut sets = Vec::with_capacity(3);
    for name in SPLIT_NAMES {
        let at = r.offset();
        let idx = r.index_record(name)?;
        let mut images = Vec::with_capacity(idx.len());
        let mut ls = Vec::with_capacity(idx.len());
        for &i in &idx {
            let i = i as usize;
            if i >= count {
                return Err(Error::Malformed {
                    offset: at,
                    reason: format!("{name} index {i} out of range for {count} images"),
                });
            }
            images.push(Tensor::from_vec(&IMAGE_DIMS, pixels[i * plane..(i + 1) * plane].to_vec())?);
            ls.push(labels[i] as usize);
        }
        sets.push(Dataset::new(images, ls, num_classes).map_err(|e| Error::Malformed {
            offset: at,
            reason: e.to_string(),
        })?);
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed {
            offset: r.offset(),
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }
    let test = sets.pop().unwrap();
    let validation = sets.pop().unwrap();
    let train = sets.pop().unwrap();
    let m = mean.data();
    Ok(DataSplits {
        train,
        validation,
        test,
        channel_mean: [m[0], m[1], m[2]],
    })
}

fn read_images(r: &mut ByteReader<'_>) -> Result<(usize, Vec<f32>)> {
    let at = r.offset();
    let name = r.name()?;
    if name != "images" {
        return Err(Error::Malformed {
            offset: at,
            reason: format!("expected record \"images\", found {name:?}"),
        });
    }
    let rank = r.u32()? as usize;
    if rank != 4 {
        return Err(Error::Malformed {
            offset: at,
            reason: format!("images record has rank {rank}, expected 4"),
        });
    }
    let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
    if dims[1..] != IMAGE_DIMS {
        return Err(Error::RecordDims {
            name: "images".into(),
            expected: vec![dims[0], 3, 32, 32],
            found: dims.to_vec(),
        });
    }
    let len = dims.iter().product::<usize>();
    let raw = r.take(len * 4)?;
    let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dims[0], data))
}

pub fn save_archive(splits: &DataSplits, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_archive(splits))?;
    Ok(())
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<DataSplits> {
    read_archive(&fs::read(path)?)
}
