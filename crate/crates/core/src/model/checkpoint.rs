//! Binary checkpoint container.
//!
//! ```text
//! "GDNN" | u32 version | u32 groups | u32 channels_per_group | u32 classes | u32 trained_groups
//! for layer in conv1..conv5, for group g:
//!     record "conv{l}.g{g}.weight", record "conv{l}.g{g}.bias"
//! record "fc.weight" [classes, groups * feature_len], record "fc.bias" [classes]
//! u32 chunk_count, then per chunk: 4-byte tag | u32 byte length | payload
//! ```
//!
//! A record is `u32 name_len | UTF-8 name | u32 rank | u32 dims... | f32 payload`.
//! All integers and floats are little-endian. Extension chunks:
//! `ARCH` (input dims and layer geometry) and `MEAN` (preprocessing channel
//! mean). Unknown chunk tags are skipped.

use std::fs;
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::ops::{LrnSpec, PoolSpec};
use crate::tensor::Tensor;

use super::{build_model, ConvGeometry, GroupModel, GroupNetArch, NUM_CONVS, NUM_POOLS};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GDNN";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_ARCH: [u8; 4] = *b"ARCH";
const TAG_MEAN: [u8; 4] = *b"MEAN";

fn conv_name(layer: usize, group: usize, what: &str) -> String {
    format!("conv{}.g{group}.{what}", layer + 1)
}

pub fn write_checkpoint(model: &GroupModel) -> Vec<u8> {
    let arch = model.arch();
    let mut w = ByteWriter::default();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.len_u32(arch.num_groups);
    w.len_u32(arch.channels_per_group);
    w.len_u32(arch.num_classes);
    w.len_u32(model.trained_groups);
    for l in 0..NUM_CONVS {
        for (g, group) in model.groups.iter().enumerate() {
            w.tensor_record(&conv_name(l, g, "weight"), &group.convs[l].weight);
            w.tensor_record(&conv_name(l, g, "bias"), &group.convs[l].bias);
        }
    }
    w.tensor_record("fc.weight", &model.fc_weight);
    w.tensor_record("fc.bias", &model.fc_bias);

    let mut chunks = vec![(TAG_ARCH, arch_chunk(arch))];
    if let Some(mean) = model.channel_mean {
        let mut c = ByteWriter::default();
        mean.iter().for_each(|&m| c.f32(m));
        chunks.push((TAG_MEAN, c.buf));
    }
    w.len_u32(chunks.len());
    for (tag, payload) in chunks {
        w.bytes(&tag);
        w.len_u32(payload.len());
        w.bytes(&payload);
    }
    w.buf
}

fn arch_chunk(arch: &GroupNetArch) -> Vec<u8> {
    let mut c = ByteWriter::default();
    arch.input_dims.iter().for_each(|&d| c.len_u32(d));
    for g in &arch.convs {
        c.len_u32(g.kernel);
        c.len_u32(g.stride);
        c.len_u32(g.pad);
    }
    for p in &arch.pools {
        c.len_u32(p.kernel);
        c.len_u32(p.stride);
    }
    c.len_u32(arch.lrn.local_size);
    c.f32(arch.lrn.alpha);
    c.f32(arch.lrn.beta);
    c.f32(arch.lrn.k);
    c.buf
}

fn parse_arch_chunk(payload: &[u8], arch: &mut GroupNetArch) -> Result<()> {
    let mut r = ByteReader::new(payload);
    for d in arch.input_dims.iter_mut() {
        *d = r.u32()? as usize;
    }
    for g in arch.convs.iter_mut() {
        *g = ConvGeometry::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    }
    for p in arch.pools.iter_mut() {
        *p = PoolSpec::new(r.u32()? as usize, r.u32()? as usize);
    }
    arch.lrn = LrnSpec {
        local_size: r.u32()? as usize,
        alpha: r.f32()?,
        beta: r.f32()?,
        k: r.f32()?,
    };
    Ok(())
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<GroupModel> {
    let mut r = ByteReader::new(bytes);
    r.magic(&CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let header_at = r.offset();
    let num_groups = r.u32()? as usize;
    let channels_per_group = r.u32()? as usize;
    let num_classes = r.u32()? as usize;
    let trained_groups = r.u32()? as usize;
    if num_groups == 0 || num_groups > 1024 || trained_groups > num_groups {
        return Err(Error::Malformed {
            offset: header_at,
            reason: format!("implausible header: {num_groups} groups, {trained_groups} trained"),
        });
    }

    let mut convs = vec![Vec::with_capacity(num_groups); NUM_CONVS];
    for (l, layer) in convs.iter_mut().enumerate() {
        for g in 0..num_groups {
            let w = r.tensor_record(&conv_name(l, g, "weight"))?;
            let b = r.tensor_record(&conv_name(l, g, "bias"))?;
            layer.push((w, b));
        }
    }
    let fc_weight = r.tensor_record("fc.weight")?;
    let fc_bias = r.tensor_record("fc.bias")?;

    let mut arch = GroupNetArch {
        num_groups,
        channels_per_group,
        num_classes,
        ..GroupNetArch::default()
    };
    let mut channel_mean = None;
    let chunk_count = r.u32()?;
    for _ in 0..chunk_count {
        let at = r.offset();
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u32()? as usize;
        let payload = r.take(len)?;
        match tag {
            TAG_ARCH => parse_arch_chunk(payload, &mut arch).map_err(|e| Error::Malformed {
                offset: at,
                reason: format!("ARCH chunk: {e}"),
            })?,
            TAG_MEAN => {
                let mut c = ByteReader::new(payload);
                channel_mean = Some([c.f32()?, c.f32()?, c.f32()?]);
            }
            _ => log::debug!("skipping unknown checkpoint chunk {tag:?}"),
        }
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed {
            offset: r.offset(),
            reason: format!("{} trailing bytes", r.remaining()),
        });
    }

    let mut model = build_model(arch)?;
    let expect = |name: String, t: &Tensor, dims: &[usize]| -> Result<()> {
        if t.dims() != dims {
            return Err(Error::RecordDims {
                name,
                expected: dims.to_vec(),
                found: t.dims().to_vec(),
            });
        }
        Ok(())
    };
    for (l, layer) in convs.into_iter().enumerate() {
        for (g, (w, b)) in layer.into_iter().enumerate() {
            let slot = &mut model.groups[g].convs[l];
            expect(conv_name(l, g, "weight"), &w, slot.weight.dims())?;
            expect(conv_name(l, g, "bias"), &b, slot.bias.dims())?;
            slot.weight = w;
            slot.bias = b;
        }
    }
    expect("fc.weight".into(), &fc_weight, model.fc_weight.dims())?;
    expect("fc.bias".into(), &fc_bias, model.fc_bias.dims())?;
    model.fc_weight = fc_weight;
    model.fc_bias = fc_bias;
    model.trained_groups = trained_groups;
    model.channel_mean = channel_mean;
    debug_assert!(NUM_POOLS == model.arch().pools.len());
    Ok(model)
}

pub fn save_checkpoint(model: &GroupModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GroupModel> {
    read_checkpoint(&fs::read(path)?)
}
