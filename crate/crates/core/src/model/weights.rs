//! Named parameter store and the "OVW1" container.
//!
//! File layout (little-endian): magic `OVW1`, `u32 version = 1`,
//! `u32 tensor_count`, then per tensor `u16 name_len`, UTF-8 name,
//! `u8 dtype` (0 = f32, 1 = raw bytes), `u8 ndim`, `ndim × u32` dims and the
//! row-major payload; finally `u32` CRC-32 of every preceding byte. The
//! model configuration travels as JSON in the raw-bytes tensor `__config__`.

use indexmap::IndexMap;

use super::config::ModelConfig;
use super::schema::{param_specs, ParamKind};
use super::tensor::{Real, Tensor};
use crate::error::{OvError, Result};

pub const OVW_MAGIC: &[u8; 4] = b"OVW1";
pub const OVW_VERSION: u32 = 1;
pub const CONFIG_TENSOR: &str = "__config__";

const DTYPE_F32: u8 = 0;
const DTYPE_BYTES: u8 = 1;

/// An n-dimensional parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T = f32> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn filled(dims: Vec<usize>, v: T) -> Self {
        let n = dims.iter().product();
        Param { dims, data: vec![v; n] }
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Views a 4-d parameter as a tensor.
    pub fn to_tensor(&self, name: &str) -> Result<Tensor<T>> {
        match self.dims[..] {
            [a, b, c, d] => Tensor::from_vec([a, b, c, d], self.data.clone()),
            _ => Err(OvError::shape(name, format!("expected 4-d weight, got {:?}", self.dims))),
        }
    }
}

impl Param<f32> {
    /// CRC-32 of the little-endian payload as stored on disk.
    pub fn crc32(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for v in &self.data {
            h.update(&v.to_le_bytes());
        }
        h.finalize()
    }
}

pub type ParamMap<T> = IndexMap<String, Param<T>>;

/// Validated parameters for one [`ModelConfig`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    params: ParamMap<f32>,
    config_blob: Vec<u8>,
    /// Position of `__config__` among the file entries.
    config_pos: usize,
}

fn check_schema<T: Real>(cfg: &ModelConfig, params: &ParamMap<T>) -> Result<()> {
    let specs = param_specs(cfg);
    let mut missing = Vec::new();
    let mut misshaped = Vec::new();
    for s in &specs {
        match params.get(&s.name) {
            None => missing.push(s.name.clone()),
            Some(p) if p.dims != s.dims || p.data.len() != s.numel() => {
                misshaped.push(format!("{} (expected {:?}, found {:?})", s.name, s.dims, p.dims))
            }
            Some(_) => {}
        }
    }
    let unexpected: Vec<String> = params
        .keys()
        .filter(|k| !specs.iter().any(|s| &s.name == *k))
        .cloned()
        .collect();
    if !(missing.is_empty() && misshaped.is_empty() && unexpected.is_empty()) {
        return Err(OvError::Schema {
            missing,
            unexpected,
            misshaped,
        });
    }
    for s in specs.iter().filter(|s| s.kind == ParamKind::RunningVar) {
        if params[&s.name].data.iter().any(|v| !(*v > T::zero())) {
            return Err(OvError::CorruptWeights(format!("{}: non-positive running variance", s.name)));
        }
    }
    if let Some((name, _)) = params.iter().find(|(_, p)| p.data.iter().any(|v| !v.is_finite())) {
        return Err(OvError::CorruptWeights(format!("{name}: non-finite values")));
    }
    Ok(())
}

/// Zero weights with identity norms, in canonical order.
pub fn identity_params<T: Real>(cfg: &ModelConfig) -> ParamMap<T> {
    param_specs(cfg)
        .into_iter()
        .map(|s| {
            let v = match s.kind {
                ParamKind::NormScale | ParamKind::RunningVar => T::one(),
                _ => T::zero(),
            };
            (s.name, Param::filled(s.dims, v))
        })
        .collect()
}

impl ModelWeights {
    pub fn new(config: ModelConfig, params: ParamMap<f32>) -> Result<Self> {
        config.validate()?;
        check_schema(&config, &params)?;
        let config_blob = serde_json::to_vec(&config).expect("config serializes");
        Ok(ModelWeights {
            config,
            params,
            config_blob,
            config_pos: 0,
        })
    }

    /// All convolution weights zero; norms are identities.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let params = identity_params(&config);
        Self::new(config, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamMap<f32> {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&Param<f32>> {
        self.params.get(name)
    }

    /// Replaces parameter values, re-validating the schema.
    pub fn with_params(&self, params: ParamMap<f32>) -> Result<Self> {
        check_schema(&self.config, &params)?;
        Ok(ModelWeights {
            params,
            ..self.clone()
        })
    }

    /// Learnable scalars actually stored.
    pub fn stored_learnable(&self) -> usize {
        param_specs(&self.config)
            .iter()
            .filter(|s| s.kind.learnable())
            .map(|s| self.params[&s.name].data.len())
            .sum()
    }

    pub fn cast_params<T: Real>(&self) -> ParamMap<T> {
        self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(OVW_MAGIC);
        out.extend_from_slice(&OVW_VERSION.to_le_bytes());
        out.extend_from_slice(&((self.params.len() + 1) as u32).to_le_bytes());
        let write_entry = |out: &mut Vec<u8>, name: &str, dtype: u8, dims: &[usize]| {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dtype);
            out.push(dims.len() as u8);
            for &d in dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        };
        for (i, (name, p)) in self.params.iter().enumerate() {
            if i == self.config_pos {
                write_entry(&mut out, CONFIG_TENSOR, DTYPE_BYTES, &[self.config_blob.len()]);
                out.extend_from_slice(&self.config_blob);
            }
            write_entry(&mut out, name, DTYPE_F32, &p.dims);
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        if self.config_pos >= self.params.len() {
            write_entry(&mut out, CONFIG_TENSOR, DTYPE_BYTES, &[self.config_blob.len()]);
            out.extend_from_slice(&self.config_blob);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: String| OvError::CorruptWeights(m);
        if bytes.len() < 16 {
            return Err(corrupt(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != OVW_MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(corrupt("CRC mismatch (truncated or modified file)".into()));
        }
        let mut r = Cursor { buf: body, pos: 4 };
        let version = r.u32()?;
        if version != OVW_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut params = ParamMap::new();
        let mut config_blob = None;
        let mut config_pos = 0;
        for _ in 0..count {
            let nlen = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|_| corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = r.u8()?;
            let ndim = r.u8()? as usize;
            let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| corrupt(format!("{name}: dimension overflow")))?;
            match dtype {
                DTYPE_F32 => {
                    let raw = r.take(numel.checked_mul(4).ok_or_else(|| corrupt("size overflow".into()))?)?;
                    let data = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect();
                    if params.insert(name.clone(), Param { dims, data }).is_some() {
                        return Err(corrupt(format!("duplicate tensor {name}")));
                    }
                }
                DTYPE_BYTES if name == CONFIG_TENSOR => {
                    if config_blob.is_some() {
                        return Err(corrupt("duplicate __config__".into()));
                    }
                    config_pos = params.len();
                    config_blob = Some(r.take(numel)?.to_vec());
                }
                _ => return Err(corrupt(format!("{name}: unsupported dtype {dtype}"))),
            }
        }
        if r.pos != body.len() {
            return Err(corrupt(format!("{} trailing bytes", body.len() - r.pos)));
        }
        let config_blob = config_blob.ok_or_else(|| OvError::Schema {
            missing: vec![CONFIG_TENSOR.into()],
            unexpected: vec![],
            misshaped: vec![],
        })?;
        let config: ModelConfig = serde_json::from_slice(&config_blob)
            .map_err(|e| corrupt(format!("__config__ is not valid JSON: {e}")))?;
        config.validate()?;
        check_schema(&config, &params)?;
        Ok(ModelWeights {
            config,
            params,
            config_blob,
            config_pos,
        })
    }
}

pub fn load_weights(bytes: &[u8]) -> Result<ModelWeights> {
    ModelWeights::from_bytes(bytes)
}

pub fn save_weights(w: &ModelWeights) -> Vec<u8> {
    w.to_bytes()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(OvError::CorruptWeights(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_exact() {
        let w = ModelWeights::zeros(ModelConfig::micro()).unwrap();
        let b = w.to_bytes();
        let back = load_weights(&b).unwrap();
        assert_eq!(back, w);
        assert_eq!(save_weights(&back), b);
    }

    #[test]
    fn truncated_and_flipped_files_are_corrupt() {
        let b = ModelWeights::zeros(ModelConfig::micro()).unwrap().to_bytes();
        assert!(matches!(load_weights(&b[..b.len() - 7]), Err(OvError::CorruptWeights(_))));
        let mut f = b.clone();
        f[40] ^= 1;
        assert!(matches!(load_weights(&f), Err(OvError::CorruptWeights(_))));
        let mut m = b;
        m[0] = b'X';
        assert!(matches!(load_weights(&m), Err(OvError::CorruptWeights(_))));
    }

    #[test]
    fn missing_tensor_is_schema_error() {
        let w = ModelWeights::zeros(ModelConfig::micro()).unwrap();
        let mut p = w.params().clone();
        p.shift_remove("stem.conv.bias");
        match w.with_params(p) {
            Err(OvError::Schema { missing, .. }) => assert_eq!(missing, vec!["stem.conv.bias".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_variance_rejected() {
        let w = ModelWeights::zeros(ModelConfig::micro()).unwrap();
        let mut p = w.params().clone();
        p["stem.bn.running_var"].data[0] = 0.0;
        assert!(matches!(w.with_params(p), Err(OvError::CorruptWeights(_))));
    }
}
