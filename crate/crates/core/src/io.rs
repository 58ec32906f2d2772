//! Binary tensor files.
//!
//! Layout, all little-endian: the magic bytes `TNSR`, a `u32` format version
//! (currently 1), a `u32` order `K`, `K` × `u64` dimensions, then the entries
//! as `f64` in first-index-fastest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

const MAGIC: &[u8; 4] = b"TNSR";
const VERSION: u32 = 1;

pub fn write_tensor<W: Write>(mut w: W, t: &DenseTensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(t.order() as u32).to_le_bytes())?;
    for &d in t.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Format(format!("truncated while reading {what}"))
        }
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor> {
    let magic = read_array::<4, _>(&mut r, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format("missing TNSR magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r, "version")?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let order = u32::from_le_bytes(read_array(&mut r, "order")?) as usize;
    if order == 0 || order > 16 {
        return Err(Error::Format(format!("implausible order {order}")));
    }
    let mut dims = Vec::with_capacity(order);
    for _ in 0..order {
        let d = u64::from_le_bytes(read_array(&mut r, "dimensions")?);
        dims.push(
            usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?,
        );
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dimensions {dims:?} overflow")))?;
    if n == 0 {
        return Err(Error::Format(format!("zero-sized dimension in {dims:?}")));
    }
    let mut data = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        data.push(f64::from_le_bytes(read_array(&mut r, "data")?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after tensor data".into()));
    }
    DenseTensor::from_vec(&dims, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    read_tensor(BufReader::new(File::open(path)?))
}
