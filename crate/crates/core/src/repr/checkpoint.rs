//! `PBT1` binary container: magic, format version, a UTF-8 config echo,
//! element precision and named little-endian tensors.
//!
//! ```text
//! "PBT1" | u32 version | u32 len + config bytes | u32 bits | u32 count
//! count × ( u32 len + name | u32 rank | rank × u64 dim | data )
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numcore::{element_size, ParamSet, Precision, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"PBT1";
pub const FORMAT_VERSION: u32 = 1;

/// Decoded checkpoint with tensors still in their stored precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub precision: Precision,
    pub tensors: Vec<(String, Vec<usize>, Vec<u8>)>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(mut w: W, config: &str, tensors: &[(&str, &Tensor<T>)]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&T::PRECISION.bits().to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

/// Parses a container. When `expected_config` is given, a different config
/// echo is rejected.
pub fn read_checkpoint<R: Read>(mut r: R, expected_config: Option<&str>) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a PBT1 file".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let config = c.string()?;
    if let Some(expected) = expected_config {
        if expected != config {
            return Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint was written for\n{config}\nbut the current config is\n{expected}"
            )));
        }
    }
    let bits = c.u32()?;
    let precision = Precision::from_bits(bits).ok_or_else(|| Error::Checkpoint(format!("unknown precision {bits}")))?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = c.string()?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = c.take(n * element_size(precision))?.to_vec();
        tensors.push((name, shape, data));
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint { config, precision, tensors })
}

impl Checkpoint {
    /// Decodes tensor `name`, converting precision if needed.
    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let (_, shape, bytes) = self
            .tensors
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))?;
        let vals: Vec<f64> = match self.precision {
            Precision::F32 => bytes.chunks(4).map(|b| f32::read_le(b) as f64).collect(),
            Precision::F64 => bytes.chunks(8).map(f64::read_le).collect(),
        };
        Tensor::from_f64(shape, &vals)
    }

    /// Overwrites every parameter of `ps` from same-named tensors.
    pub fn load_into<T: Scalar>(&self, ps: &mut ParamSet<T>) -> Result<()> {
        for id in ps.ids().collect::<Vec<_>>() {
            let t = self.tensor::<T>(ps.name(id))?;
            if t.shape() != ps.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    ps.name(id),
                    t.shape(),
                    ps.value(id).shape()
                )));
            }
            *ps.value_mut(id) = t;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_config_guard() {
        let a = Tensor::<f32>::from_f64(&[2, 3], &[1.0, -2.0, 3.5, 0.25, 1e-7, 9.0]).unwrap();
        let b = Tensor::<f32>::from_f64(&[1], &[42.0]).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "k = v", &[("a", &a), ("b", &b)]).unwrap();
        assert_eq!(&buf[..4], b"PBT1");
        let ck = read_checkpoint(&buf[..], Some("k = v")).unwrap();
        assert_eq!(ck.tensor::<f32>("a").unwrap(), a);
        assert_eq!(ck.tensor::<f32>("b").unwrap(), b);
        assert!(ck.tensor::<f32>("c").is_err());
        assert!(matches!(read_checkpoint(&buf[..], Some("k = w")), Err(Error::Checkpoint(_))));
        assert!(read_checkpoint(&buf[..buf.len() - 1], None).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad[..], None).is_err());
    }
}
