//! Binary model file, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "DAMIAMDL"
//! version      u32      1
//! method       u8       0 baseline, 1 ddc, 2 drcn, 3 adda
//! feature      u32      feature layer index
//! n_dims       u32
//! dims         n_dims × u32
//! weights      per layer, row-major f64
//! biases       per layer, f64
//! ```
//!
//! Parameters are stored bit-exactly, so a save/load round trip reproduces the
//! model exactly.

use std::fs;
use std::path::Path;

use super::Method;
use crate::error::{Error, Result};
use crate::numcore::{Mat2, MlpModel};

pub const MODEL_MAGIC: &[u8; 8] = b"DAMIAMDL";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &MlpModel, method: Method) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 8 * model.n_params());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(method.tag());
    out.extend_from_slice(&(model.feature_layer() as u32).to_le_bytes());
    out.extend_from_slice(&(model.layer_dims().len() as u32).to_le_bytes());
    for &d in model.layer_dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for w in model.weights() {
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for b in model.biases() {
        for v in b {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated model file".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<(MlpModel, Method)> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let tag = r.take(1)?[0];
    let method = Method::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown method tag {tag}")))?;
    let feature_layer = r.u32()? as usize;
    let n_dims = r.u32()? as usize;
    if n_dims > 1024 {
        return Err(Error::Format(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 {
        return Err(Error::Format("model needs at least two layer widths".into()));
    }
    let mut weights = Vec::with_capacity(dims.len() - 1);
    for p in dims.windows(2) {
        let data = r.f64s(p[0] * p[1])?;
        weights.push(Mat2::from_vec(p[0], p[1], data).map_err(|e| Error::Format(e.to_string()))?);
    }
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for &d in &dims[1..] {
        biases.push(r.f64s(d)?);
    }
    if r.at != bytes.len() {
        return Err(Error::Format("trailing bytes after model".into()));
    }
    let model = MlpModel::from_parameters(&dims, weights, biases, feature_layer)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((model, method))
}

pub fn save_model(path: impl AsRef<Path>, model: &MlpModel, method: Method) -> Result<()> {
    fs::write(path, encode_model(model, method))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MlpModel, Method)> {
    decode_model(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn round_trip_is_exact() {
        let model = MlpModel::new(&[5, 7, 3, 4], 1, &mut Rng::new(2)).unwrap();
        let bytes = encode_model(&model, Method::Drcn);
        let (back, m) = decode_model(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(m, Method::Drcn);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        save_model(&p, &model, Method::Ddc).unwrap();
        assert_eq!(load_model(&p).unwrap(), (model, Method::Ddc));
    }

    #[test]
    fn rejects_corruption() {
        let model = MlpModel::new(&[2, 3, 2], 0, &mut Rng::new(0)).unwrap();
        let bytes = encode_model(&model, Method::Baseline);
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model(&extra).is_err());
        let mut tag = bytes;
        tag[12] = 9;
        assert!(decode_model(&tag).is_err());
    }
}
