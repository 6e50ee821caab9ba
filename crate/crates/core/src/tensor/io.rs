//! Binary tensor format: magic `EFT1`, then dtype code, rank and each extent
//! as little-endian u64, then the row-major little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

const MAGIC: &[u8; 4] = b"EFT1";
const MAX_RANK: u64 = 16;

pub fn write_tensor_to<S: Scalar, W: Write>(out: &mut W, tensor: &Tensor<S>) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(4 + 8 * (2 + tensor.rank()) + tensor.len() * S::DTYPE.width());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&S::DTYPE.code().to_le_bytes());
    buf.extend_from_slice(&(tensor.rank() as u64).to_le_bytes());
    for &d in tensor.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Integrity(format!("truncated tensor header: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

/// Reads one tensor, converting the stored element type to `S`.
pub fn read_tensor_from<S: Scalar, R: Read>(input: &mut R) -> Result<Tensor<S>> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Integrity(format!("truncated tensor header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Integrity(format!("bad tensor magic {magic:?}")));
    }
    let code = read_u64(input)?;
    let dtype = DType::from_code(code)
        .ok_or_else(|| Error::Integrity(format!("unknown dtype code {code}")))?;
    let rank = read_u64(input)?;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Integrity(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        shape.push(read_u64(input)? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Integrity(format!("invalid extents {shape:?}")))?;
    let mut raw = vec![0u8; n * dtype.width()];
    input
        .read_exact(&mut raw)
        .map_err(|e| Error::Integrity(format!("truncated tensor payload: {e}")))?;
    let data: Vec<S> = match dtype {
        DType::F32 => raw.chunks_exact(4).map(|c| S::of(f32::read_le(c) as f64)).collect(),
        DType::F64 => raw.chunks_exact(8).map(|c| S::of(f64::read_le(c))).collect(),
    };
    Ok(Tensor::from_parts(shape, data))
}

pub fn write_tensor<S: Scalar>(path: &Path, tensor: &Tensor<S>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(&mut w, tensor)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_tensor<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let file = File::open(path)
        .map_err(|e| Error::Integrity(format!("missing blob {}: {e}", path.display())))?;
    let mut r = BufReader::new(file);
    read_tensor_from(&mut r).map_err(|e| match e {
        Error::Integrity(msg) => Error::Integrity(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_fixed() {
        let t = Tensor::<f32>::new(&[2, 1], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"EFT1");
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[20..28].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[28..36].try_into().unwrap()), 1);
        assert_eq!(&buf[36..40], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 44);
    }

    #[test]
    fn round_trip_f64_exact() {
        let t = Tensor::<f64>::new(&[3], vec![0.1, f64::MIN_POSITIVE, -7.25]).unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        let back: Tensor<f64> = read_tensor_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn corrupted_magic_is_integrity_error() {
        let t = Tensor::<f32>::ones(&[2]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        buf[0] = b'X';
        let err = read_tensor_from::<f32, _>(&mut buf.as_slice()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn truncated_payload_is_integrity_error() {
        let t = Tensor::<f32>::ones(&[4]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &t).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_tensor_from::<f32, _>(&mut buf.as_slice()),
            Err(Error::Integrity(_))
        ));
    }
}
