//! The record container: the on-disk format shared by checkpoints and
//! dataset samples.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  b"VXC1"
//! version u32      currently 1
//! count   u64      number of records
//! record:
//!   name_len u32, name (utf-8)
//!   dtype    u8   (1 = f32, 2 = f64, 3 = u8, 4 = u64)
//!   rank     u32
//!   dims     rank x u64
//!   payload  numel x dtype-width bytes, little-endian scalars
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dtype, Element, Tensor};

pub const MAGIC: &[u8; 4] = b"VXC1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum RecordData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
    U64(Vec<u64>),
}

impl RecordData {
    pub fn dtype(&self) -> Dtype {
        match self {
            RecordData::F32(_) => Dtype::F32,
            RecordData::F64(_) => Dtype::F64,
            RecordData::U8(_) => Dtype::U8,
            RecordData::U64(_) => Dtype::U64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            RecordData::F32(v) => v.len(),
            RecordData::F64(v) => v.len(),
            RecordData::U8(v) => v.len(),
            RecordData::U64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: RecordData,
}

impl Record {
    pub fn tensor<T: Element>(name: &str, t: &Tensor<T>) -> Record {
        let data = match T::DTYPE {
            Dtype::F32 => RecordData::F32(t.data().iter().map(|v| v.as_f64() as f32).collect()),
            _ => RecordData::F64(t.data().iter().map(|v| v.as_f64()).collect()),
        };
        Record {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn u8(name: &str, shape: Vec<usize>, data: Vec<u8>) -> Record {
        Record {
            name: name.to_string(),
            shape,
            data: RecordData::U8(data),
        }
    }

    pub fn scalar_u64(name: &str, v: u64) -> Record {
        Record {
            name: name.to_string(),
            shape: vec![1],
            data: RecordData::U64(vec![v]),
        }
    }

    pub fn to_tensor<T: Element>(&self) -> Result<Tensor<T>> {
        let vals: Vec<T> = match &self.data {
            RecordData::F32(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            RecordData::F64(v) => v.iter().map(|&x| T::from_f64(x)).collect(),
            RecordData::U8(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
            RecordData::U64(v) => v.iter().map(|&x| T::from_f64(x as f64)).collect(),
        };
        Tensor::new(self.shape.clone(), vals)
    }

    pub fn as_u64(&self) -> Result<u64> {
        match &self.data {
            RecordData::U64(v) if v.len() == 1 => Ok(v[0]),
            _ => Err(Error::Format(format!(
                "record `{}` is not a u64 scalar",
                self.name
            ))),
        }
    }
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        let numel: usize = r.shape.iter().product();
        if numel != r.data.len() {
            return Err(Error::Format(format!(
                "record `{}`: shape {:?} vs {} values",
                r.name,
                r.shape,
                r.data.len()
            )));
        }
        buf.extend_from_slice(&(r.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.name.as_bytes());
        buf.push(r.data.dtype() as u8);
        buf.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
        for &d in &r.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &r.data {
            RecordData::F32(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            RecordData::F64(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
            RecordData::U8(v) => buf.extend_from_slice(v),
            RecordData::U64(v) => {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&buf).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_records(&bytes)
}

pub fn parse_records(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Format("container truncated".to_string()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(Error::Format("bad container magic".to_string()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "container version {version}, expected {VERSION}"
        )));
    }
    let count = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| Error::Format("record name is not utf-8".to_string()))?;
        let dtype = Dtype::from_tag(take(&mut pos, 1)?[0])?;
        let rank = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = take(&mut pos, numel * dtype.byte_width())?;
        let data = match dtype {
            Dtype::F32 => RecordData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => RecordData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => RecordData::U8(payload.to_vec()),
            Dtype::U64 => RecordData::U64(
                payload
                    .chunks_exact(8)
                    .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        out.push(Record { name, shape, data });
    }
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after records".to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let dir = std::env::temp_dir().join(format!("vxc-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.vxc");
        let records = vec![
            Record::tensor("a/x", &Tensor::<f32>::from_fn(&[2, 3], |i| i as f32 * 0.5)),
            Record::tensor("b", &Tensor::<f64>::from_fn(&[4], |i| (i as f64).sqrt())),
            Record::u8("mask", vec![2, 2], vec![0, 1, 1, 0]),
            Record::scalar_u64("meta/step", 42),
        ];
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, records);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(parse_records(b"nope").is_err());
        let mut good = Vec::new();
        good.extend_from_slice(MAGIC);
        good.extend_from_slice(&VERSION.to_le_bytes());
        good.extend_from_slice(&1u64.to_le_bytes());
        assert!(parse_records(&good).is_err()); // promised 1 record, none present
    }
}
