//! "OVF1" float matrix dumps.
//!
//! Layout: magic `OVF1`, then little-endian `u32 rows`, `u32 cols`,
//! `u32 planes`, then `planes × rows × cols` little-endian f32 values,
//! row-major within each plane.

use crate::error::{OvError, Result};

pub const OVF_MAGIC: &[u8; 4] = b"OVF1";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub rows: usize,
    pub cols: usize,
    pub planes: usize,
    pub data: Vec<f32>,
}

impl FeatureDump {
    pub fn new(rows: usize, cols: usize, planes: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols * planes {
            return Err(OvError::shape(
                "OVF1 dump",
                format!("{} values for {planes}x{rows}x{cols}", data.len()),
            ));
        }
        Ok(FeatureDump {
            rows,
            cols,
            planes,
            data,
        })
    }

    pub fn plane(&self, p: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.data[p * n..(p + 1) * n]
    }
}

pub fn write_ovf(dump: &FeatureDump) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + dump.data.len() * 4);
    out.extend_from_slice(OVF_MAGIC);
    out.extend_from_slice(&(dump.rows as u32).to_le_bytes());
    out.extend_from_slice(&(dump.cols as u32).to_le_bytes());
    out.extend_from_slice(&(dump.planes as u32).to_le_bytes());
    for v in &dump.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_ovf(bytes: &[u8]) -> Result<FeatureDump> {
    if bytes.len() < 16 || &bytes[0..4] != OVF_MAGIC {
        return Err(OvError::CorruptFeatures("missing OVF1 header".into()));
    }
    let u = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize;
    let (rows, cols, planes) = (u(4), u(8), u(12));
    let n = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(planes))
        .ok_or_else(|| OvError::CorruptFeatures("dimension overflow".into()))?;
    if bytes.len() != 16 + n * 4 {
        return Err(OvError::CorruptFeatures(format!(
            "expected {} payload bytes, found {}",
            n * 4,
            bytes.len() - 16
        )));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureDump::new(rows, cols, planes, data)
}
