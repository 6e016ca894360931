//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes, each plane row-major 32x32.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_BYTES: usize = 3 * 32 * 32;
pub const RECORD_BYTES: usize = IMAGE_BYTES + 1;
pub const CIFAR10_CLASSES: usize = 10;

pub const TRAIN_BATCHES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_BATCH: &str = "test_batch.bin";

#[derive(Clone, PartialEq, Eq)]
pub struct Cifar10Record {
    pub label: u8,
    pub pixels: Vec<u8>,
}

impl std::fmt::Debug for Cifar10Record {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Cifar10Record {{ label: {} }}", self.label)
    }
}

pub fn parse_cifar_batch(bytes: &[u8]) -> Result<Vec<Cifar10Record>> {
    let whole = bytes.len() / RECORD_BYTES * RECORD_BYTES;
    if whole != bytes.len() {
        return Err(Error::Ingest {
            offset: whole as u64,
            reason: format!(
                "trailing partial record of {} bytes (records are {RECORD_BYTES} bytes)",
                bytes.len() - whole
            ),
        });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            if rec[0] as usize >= CIFAR10_CLASSES {
                return Err(Error::Ingest {
                    offset: (i * RECORD_BYTES) as u64,
                    reason: format!("label {} > 9", rec[0]),
                });
            }
            Ok(Cifar10Record {
                label: rec[0],
                pixels: rec[1..].to_vec(),
            })
        })
        .collect()
}

pub fn write_cifar_batch(records: &[Cifar10Record]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        out.push(r.label);
        out.extend_from_slice(&r.pixels);
    }
    out
}

pub fn read_cifar_file(path: &Path) -> Result<Vec<Cifar10Record>> {
    let bytes = fs::read(path)?;
    parse_cifar_batch(&bytes).map_err(|e| match e {
        Error::Ingest { offset, reason } => Error::Ingest {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

/// Loads the five training batches and the test batch from a CIFAR-10 binary directory.
pub fn load_cifar_dir(dir: &Path) -> Result<(Vec<Cifar10Record>, Vec<Cifar10Record>)> {
    let mut train = Vec::new();
    for name in TRAIN_BATCHES {
        train.extend(read_cifar_file(&dir.join(name))?);
    }
    let test = read_cifar_file(&dir.join(TEST_BATCH))?;
    Ok((train, test))
}
