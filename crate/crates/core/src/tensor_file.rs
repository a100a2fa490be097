//! FTEN named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "FTEN"  u16 version  u32 count
//! count × { u16 name_len, name (UTF-8), u8 ndim, ndim × u32 dim, prod(dims) × f32 }
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FTEN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        let n: usize = dims.iter().map(|&d| d as usize).product();
        if n != data.len() {
            return Err(Error::TensorFile(format!(
                "tensor '{name}': dims {dims:?} need {n} values, got {}",
                data.len()
            )));
        }
        Ok(NamedTensor { name, dims, data })
    }
}

pub fn write_tensors(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        if name.len() > u16::MAX as usize || t.dims.len() > u8::MAX as usize {
            return Err(Error::TensorFile(format!("tensor '{}' header too large", t.name)));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.dims.len() as u8);
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TensorFile(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_tensors(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::TensorFile("bad magic".into()));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::TensorFile(format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::with_capacity(count.min(1024) as usize);
    for idx in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::TensorFile(format!("tensor {idx}: name is not UTF-8")))?
            .to_owned();
        let ndim = r.u8(&format!("'{name}' rank"))? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32(&format!("'{name}' dims"))?);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::TensorFile(format!("tensor '{name}': shape overflows")))?;
        let payload = n
            .checked_mul(4)
            .filter(|&b| b <= bytes.len() - r.pos)
            .ok_or_else(|| {
                Error::TensorFile(format!(
                    "tensor '{name}': payload truncated (needs {n} floats)"
                ))
            })?;
        let raw = r.take(payload, &name)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::TensorFile(format!(
                "tensor '{name}': non-finite value at element {pos}"
            )));
        }
        out.push(NamedTensor { name, dims, data });
    }
    Ok(out)
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<Vec<NamedTensor>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_tensors(&bytes)
}

pub fn store_tensor_file(path: impl AsRef<Path>, tensors: &[NamedTensor]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_tensors(tensors)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<NamedTensor> {
        vec![
            NamedTensor::new("conv1.weight", vec![2, 1, 3, 3], (0..18).map(|v| v as f32 * 0.5).collect())
                .unwrap(),
            NamedTensor::new("conv1.bias", vec![2], vec![-1.0, 2.5]).unwrap(),
        ]
    }

    #[test]
    fn header_layout() {
        let bytes = write_tensors(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"FTEN");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..12], &[12, 0]);
        assert_eq!(&bytes[12..24], b"conv1.weight");
        assert_eq!(bytes[24], 4);
    }

    #[test]
    fn truncated_payload_names_tensor() {
        let bytes = write_tensors(&sample()).unwrap();
        let err = read_tensors(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("conv1.bias"), "{err}");
    }

    #[test]
    fn rejects_bad_magic_and_nan() {
        let mut bytes = write_tensors(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(read_tensors(&bytes).unwrap_err().to_string().contains("magic"));

        let t = NamedTensor::new("w", vec![2], vec![1.0, f32::NAN]).unwrap();
        let bytes = write_tensors(&[t]).unwrap();
        assert!(read_tensors(&bytes).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn shape_mismatch_on_construction() {
        assert!(NamedTensor::new("w", vec![2, 2], vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(dims in prop::collection::vec(1u32..5, 0..4), seed in any::<u32>()) {
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let data: Vec<f32> = (0..n).map(|i| ((i as u32 ^ seed) as f32).sin()).collect();
            let t = vec![NamedTensor::new("t", dims, data).unwrap()];
            prop_assert_eq!(read_tensors(&write_tensors(&t).unwrap()).unwrap(), t);
        }
    }
}
