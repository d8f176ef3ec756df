//! Checkpoint container: named f64 tensors plus a text metadata block in a
//! single binary file. Layout: 7-byte magic, then length-prefixed entries,
//! then a trailing CRC-64 of every byte between magic and checksum. Files
//! failing the checksum or declaring the wrong magic are refused.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 7] = b"SEMLA01";
const TAG_TENSOR: u8 = 0;
const TAG_TEXT: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    Corrupt { stored: u64, computed: u64 },
    #[error("truncated entry at byte {0}")]
    Truncated(usize),
    #[error("malformed entry: {0}")]
    Malformed(String),
    #[error("missing tensor {0}")]
    Missing(String),
}

/// CRC-64/ECMA-182: polynomial 0x42F0E1EBA9EA3693, MSB first, zero init.
fn crc64(bytes: &[u8]) -> u64 {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[u64; 256]> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        const POLY: u64 = 0x42F0_E1EB_A9EA_3693;
        let mut table = [0u64; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            let mut crc = (i as u64) << 56;
            for _ in 0..8 {
                crc = if crc & (1 << 63) != 0 {
                    (crc << 1) ^ POLY
                } else {
                    crc << 1
                };
            }
            *slot = crc;
        }
        table
    });
    let mut crc = 0u64;
    for &b in bytes {
        crc = table[(((crc >> 56) as u8) ^ b) as usize] ^ (crc << 8);
    }
    crc
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    tensors: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], values: &[f64]) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.tensors
            .push((name.to_string(), shape.to_vec(), values.to_vec()));
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64]), CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, v)| (s.as_slice(), v.as_slice()))
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _, _)| n.as_str())
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put_entry = |name: &str, tag: u8, dims: &[usize], bytes: &[u8]| {
            out.extend((name.len() as u32).to_le_bytes());
            out.extend(name.as_bytes());
            out.push(tag);
            out.extend((dims.len() as u32).to_le_bytes());
            for &d in dims {
                out.extend((d as u64).to_le_bytes());
            }
            out.extend(bytes);
        };
        let meta_text: String = self
            .meta
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        put_entry("meta", TAG_TEXT, &[meta_text.len()], meta_text.as_bytes());
        for (name, shape, values) in &self.tensors {
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            put_entry(name, TAG_TENSOR, shape, &bytes);
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(MAGIC.len() + payload.len() + 8);
        out.extend(MAGIC);
        out.extend(&payload);
        out.extend(crc64(&payload).to_le_bytes());
        out
    }

    /// CRC of the current contents; what `to_bytes` will store.
    pub fn crc(&self) -> u64 {
        crc64(&self.payload())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let payload = &bytes[MAGIC.len()..bytes.len() - 8];
        let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
        let computed = crc64(payload);
        if stored != computed {
            return Err(CheckpointError::Corrupt { stored, computed });
        }

        let mut ckpt = Checkpoint::new();
        let mut pos = 0usize;
        let take = |pos: &mut usize, len: usize| -> Result<&[u8], CheckpointError> {
            let end = pos
                .checked_add(len)
                .filter(|&e| e <= payload.len())
                .ok_or(CheckpointError::Truncated(*pos))?;
            let s = &payload[*pos..end];
            *pos = end;
            Ok(s)
        };
        while pos < payload.len() {
            let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            let tag = take(&mut pos, 1)?[0];
            let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
            }
            let numel: usize = dims.iter().product();
            match tag {
                TAG_TEXT => {
                    if rank != 1 {
                        return Err(CheckpointError::Malformed(format!(
                            "text entry {name} must have rank 1"
                        )));
                    }
                    let text = String::from_utf8(take(&mut pos, numel)?.to_vec())
                        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
                    for line in text.lines() {
                        if let Some((k, v)) = line.split_once(" = ") {
                            ckpt.meta.insert(k.to_string(), v.to_string());
                        }
                    }
                }
                TAG_TENSOR => {
                    let raw = take(&mut pos, numel * 8)?;
                    let values: Vec<f64> = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    ckpt.tensors.push((name, dims, values));
                }
                other => {
                    return Err(CheckpointError::Malformed(format!(
                        "unknown entry tag {other}"
                    )));
                }
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
