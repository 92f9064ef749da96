//! Little-endian binary file formats.
//!
//! | magic  | contents                                                        |
//! |--------|-----------------------------------------------------------------|
//! | `GMM1` | u32 K, u32 D, K f64 weights, K*D f64 means, K*D f64 variances   |
//! | `FVV1` | u32 dim, u8 normalized flag, dim f32 values                     |
//! | `LSV1` | u32 C, u32 dim, C x (u32 len, UTF-8 name), C*dim f32 weights, C f32 biases |
//! | `FVD1` | u32 D, u32 T, T*D f32 descriptors (row-major)                   |
//!
//! Readers reject a wrong magic, truncated payloads and trailing bytes.

use std::fs;
use std::path::Path;

use crate::classifier::LinearModel;
use crate::descriptor::DescriptorSet;
use crate::error::{Error, Result};
use crate::fisher::FisherVector;
use crate::gmm::GaussianMixture;

pub const GMM_MAGIC: &[u8; 4] = b"GMM1";
pub const FV_MAGIC: &[u8; 4] = b"FVV1";
pub const SVM_MAGIC: &[u8; 4] = b"LSV1";
pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"FVD1";

/// File extension for persisted Fisher vectors.
pub const FV_EXTENSION: &str = "fvv";

type Decoded<T> = std::result::Result<T, String>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4]) -> Decoded<Self> {
        let mut r = Reader { buf, pos: 0 };
        let got = r.take(4)?;
        if got != magic {
            return Err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            ));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Decoded<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format!("truncated at byte {} (needed {n} more)", self.pos))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Decoded<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Decoded<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Decoded<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Decoded<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or("length overflow")?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn finish(self) -> Decoded<()> {
        if self.pos != self.buf.len() {
            return Err(format!("{} trailing bytes", self.buf.len() - self.pos));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{v} exceeds u32 range")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Maps a decode failure or an invariant violation to a format error on `path`.
fn at<T>(path: &Path, r: std::result::Result<T, impl ToString>) -> Result<T> {
    r.map_err(|e| Error::format(path, e.to_string()))
}

pub fn encode_gmm(gmm: &GaussianMixture) -> Result<Vec<u8>> {
    let k = gmm.components();
    let d = gmm.dim();
    let mut out = Vec::with_capacity(12 + 8 * k * (1 + 2 * d));
    out.extend_from_slice(GMM_MAGIC);
    put_u32(&mut out, k)?;
    put_u32(&mut out, d)?;
    for v in gmm.weights().iter().chain(gmm.means()).chain(gmm.variances()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_gmm(bytes: &[u8]) -> std::result::Result<GaussianMixture, String> {
    let mut r = Reader::new(bytes, GMM_MAGIC)?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    if k == 0 || d == 0 {
        return Err(format!("invalid shape K={k} D={d}"));
    }
    let weights = r.f64s(k)?;
    let means = r.f64s(k * d)?;
    let variances = r.f64s(k * d)?;
    r.finish()?;
    GaussianMixture::new(weights, means, variances).map_err(|e| e.to_string())
}

pub fn save_gmm(path: impl AsRef<Path>, gmm: &GaussianMixture) -> Result<()> {
    write_file(path.as_ref(), &encode_gmm(gmm)?)
}

pub fn load_gmm(path: impl AsRef<Path>) -> Result<GaussianMixture> {
    let path = path.as_ref();
    at(path, decode_gmm(&read_file(path)?))
}

pub fn encode_fv(fv: &FisherVector) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(9 + 4 * fv.dim());
    out.extend_from_slice(FV_MAGIC);
    put_u32(&mut out, fv.dim())?;
    out.push(u8::from(fv.is_normalized()));
    put_f32s(&mut out, fv.values());
    Ok(out)
}

pub fn decode_fv(bytes: &[u8]) -> std::result::Result<FisherVector, String> {
    let mut r = Reader::new(bytes, FV_MAGIC)?;
    let dim = r.u32()? as usize;
    let normalized = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(format!("normalized flag {f} is not 0 or 1")),
    };
    let values = r.f32s(dim)?;
    r.finish()?;
    FisherVector::from_parts(values, normalized).map_err(|e| e.to_string())
}

pub fn save_fv(path: impl AsRef<Path>, fv: &FisherVector) -> Result<()> {
    write_file(path.as_ref(), &encode_fv(fv)?)
}

pub fn load_fv(path: impl AsRef<Path>) -> Result<FisherVector> {
    let path = path.as_ref();
    at(path, decode_fv(&read_file(path)?))
}

pub fn encode_model(model: &LinearModel) -> Result<Vec<u8>> {
    let c = model.classes().len();
    let mut out = Vec::with_capacity(12 + 4 * (c * model.dim() + 2 * c));
    out.extend_from_slice(SVM_MAGIC);
    put_u32(&mut out, c)?;
    put_u32(&mut out, model.dim())?;
    for name in model.classes() {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
    }
    put_f32s(&mut out, model.weights());
    put_f32s(&mut out, model.biases());
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> std::result::Result<LinearModel, String> {
    let mut r = Reader::new(bytes, SVM_MAGIC)?;
    let c = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err("model dimension is 0".into());
    }
    let mut classes = Vec::with_capacity(c.min(1024));
    for _ in 0..c {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|e| format!("class name is not UTF-8: {e}"))?;
        classes.push(name.to_string());
    }
    let weights = r.f32s(c.checked_mul(dim).ok_or("length overflow")?)?;
    let biases = r.f32s(c)?;
    r.finish()?;
    LinearModel::new(classes, weights, biases).map_err(|e| e.to_string())
}

pub fn save_model(path: impl AsRef<Path>, model: &LinearModel) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    at(path, decode_model(&read_file(path)?))
}

pub fn encode_descriptors(set: &DescriptorSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + 4 * set.as_slice().len());
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    put_u32(&mut out, set.dim())?;
    put_u32(&mut out, set.len())?;
    put_f32s(&mut out, set.as_slice());
    Ok(out)
}

/// Decodes an `FVD1` payload; the set gets `image_id`.
pub fn decode_descriptors(bytes: &[u8], image_id: &str) -> std::result::Result<DescriptorSet, String> {
    let mut r = Reader::new(bytes, DESCRIPTOR_MAGIC)?;
    let d = r.u32()? as usize;
    let t = r.u32()? as usize;
    if d == 0 {
        return Err("descriptor dimension is 0".into());
    }
    let data = r.f32s(t.checked_mul(d).ok_or("length overflow")?)?;
    r.finish()?;
    DescriptorSet::new(image_id, d, data).map_err(|e| e.to_string())
}

pub fn save_descriptors(path: impl AsRef<Path>, set: &DescriptorSet) -> Result<()> {
    write_file(path.as_ref(), &encode_descriptors(set)?)
}

pub fn load_descriptors(path: impl AsRef<Path>, image_id: &str) -> Result<DescriptorSet> {
    let path = path.as_ref();
    at(path, decode_descriptors(&read_file(path)?, image_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gmm() -> GaussianMixture {
        GaussianMixture::new(vec![0.25, 0.75], vec![1.0, -2.0, 3.5, 0.0], vec![0.5, 1.0, 2.0, 0.1]).unwrap()
    }

    #[test]
    fn gmm_layout_is_bit_exact() {
        let bytes = encode_gmm(&gmm()).unwrap();
        assert_eq!(&bytes[..4], b"GMM1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &0.25f64.to_le_bytes());
        assert_eq!(&bytes[28..36], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 8 * (2 + 4 + 4));
        assert_eq!(decode_gmm(&bytes).unwrap(), gmm());
    }

    #[test]
    fn readers_reject_bad_input() {
        let bytes = encode_gmm(&gmm()).unwrap();
        assert!(decode_gmm(&bytes[..bytes.len() - 1]).unwrap_err().contains("truncated"));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_gmm(&wrong).unwrap_err().contains("magic"));
        let mut long = bytes;
        long.push(0);
        assert!(decode_gmm(&long).unwrap_err().contains("trailing"));
        assert!(decode_fv(b"FVV").is_err());
        assert!(decode_descriptors(b"FVD1\x00\x00\x00\x00\x00\x00\x00\x00", "x").is_err());
    }

    #[test]
    fn fv_layout() {
        let fv = FisherVector::from_parts(vec![0.6, -0.8], true).unwrap();
        let bytes = encode_fv(&fv).unwrap();
        assert_eq!(&bytes[..9], b"FVV1\x02\x00\x00\x00\x01");
        assert_eq!(&bytes[9..13], &0.6f32.to_le_bytes());
        let back = decode_fv(&bytes).unwrap();
        assert!(back.is_normalized());
        assert_eq!(back.values()[1], -0.8f32 as f64);
    }

    #[test]
    fn model_layout() {
        let m = LinearModel::new(
            vec!["MEL".into(), "NV".into()],
            vec![0.5, -1.0, 2.0, 0.25],
            vec![0.0, 1.5],
        )
        .unwrap();
        let bytes = encode_model(&m).unwrap();
        assert_eq!(&bytes[..12], b"LSV1\x02\x00\x00\x00\x02\x00\x00\x00");
        assert_eq!(&bytes[12..19], b"\x03\x00\x00\x00MEL");
        assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn descriptor_layout_and_empty_sets() {
        let s = DescriptorSet::new("img", 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_descriptors(&s).unwrap();
        assert_eq!(&bytes[..12], b"FVD1\x03\x00\x00\x00\x02\x00\x00\x00");
        assert_eq!(decode_descriptors(&bytes, "img").unwrap(), s);
        let e = DescriptorSet::empty("img", 512).unwrap();
        let back = decode_descriptors(&encode_descriptors(&e).unwrap(), "img").unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 512);
    }

    #[test]
    fn load_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.gmm");
        let err = load_gmm(&missing).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("nope.gmm"));
        let bad = dir.path().join("bad.gmm");
        std::fs::write(&bad, b"GMM1").unwrap();
        let err = load_gmm(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bad.gmm"));
    }
}
