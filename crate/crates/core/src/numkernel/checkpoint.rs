//! `BRK1` parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    "BRK1"
//! version  u32 (= 1)
//! count    u32
//! count × { name_len u32, name utf-8, ndim u32, dims ndim × u32, values f64 × Π dims }
//! ```

use std::io::{Read, Write};

use super::{KernelError, Parameter, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BRK1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named tensor as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
}

pub fn encode_checkpoint(params: &[Parameter]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &[Parameter]) -> std::io::Result<()> {
    w.write_all(&encode_checkpoint(params))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KernelError> {
        if self.buf.len() - self.pos < n {
            return Err(KernelError::Checkpoint(format!(
                "truncated checkpoint at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, KernelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedTensor>, KernelError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(KernelError::Checkpoint("bad magic, expected BRK1".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(KernelError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| KernelError::Checkpoint("parameter name is not utf-8".into()))?
            .to_string();
        let ndim = cur.u32()? as usize;
        let shape = (0..ndim).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = cur.take(n.checked_mul(8).ok_or_else(|| KernelError::Checkpoint("shape overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push(NamedTensor {
            name,
            value: Tensor::new(shape, data)?,
        });
    }
    if cur.pos != bytes.len() {
        return Err(KernelError::Checkpoint(format!(
            "{} trailing bytes after parameter table",
            bytes.len() - cur.pos
        )));
    }
    Ok(out)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<NamedTensor>, KernelError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| KernelError::Checkpoint(format!("read failed: {e}")))?;
    decode_checkpoint(&bytes)
}

/// Copies checkpoint values into `params`, matching by name and shape.
pub fn restore_into(params: &mut [Parameter], table: &[NamedTensor]) -> Result<(), KernelError> {
    if table.len() != params.len() {
        return Err(KernelError::Checkpoint(format!(
            "checkpoint has {} parameters, model expects {}",
            table.len(),
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let entry = table
            .iter()
            .find(|t| t.name == p.name)
            .ok_or_else(|| KernelError::Checkpoint(format!("missing parameter '{}'", p.name)))?;
        if entry.value.shape() != p.value.shape() {
            return Err(KernelError::Checkpoint(format!(
                "parameter '{}' has shape {:?}, expected {:?}",
                p.name,
                entry.value.shape(),
                p.value.shape()
            )));
        }
        p.value = entry.value.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Vec<Parameter> {
        vec![
            Parameter::new("proj.weight", Tensor::new(vec![2, 3], vec![0.1, -0.2, 1e-300, -0.0, 5.5, 3.25]).unwrap()),
            Parameter::new("proj.bias", Tensor::vector(vec![0.0, 1.0])),
        ]
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_checkpoint(&sample());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(decode_checkpoint(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn truncation_rejected() {
        let bytes = encode_checkpoint(&sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn restore_checks_shapes() {
        let table = decode_checkpoint(&encode_checkpoint(&sample())).unwrap();
        let mut other = vec![
            Parameter::new("proj.weight", Tensor::zeros(&[3, 2])),
            Parameter::new("proj.bias", Tensor::zeros(&[2])),
        ];
        assert!(restore_into(&mut other, &table).is_err());
        let mut same = sample();
        same.iter_mut().for_each(|p| p.value.fill(9.0));
        restore_into(&mut same, &table).unwrap();
        assert_eq!(same, sample());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 1..40)) {
            let n = vals.len();
            let params = vec![Parameter::new("x", Tensor::new(vec![n], vals).unwrap())];
            let table = decode_checkpoint(&encode_checkpoint(&params)).unwrap();
            prop_assert_eq!(table.len(), 1);
            let got: Vec<u64> = table[0].value.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = params[0].value.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
