//! Binary parameter dump: `HNCK`, format version, then per tensor the name,
//! shape and little-endian `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layers::Params;
use super::{NnError, Tensor};

const MAGIC: &[u8; 4] = b"HNCK";
const VERSION: u32 = 1;

pub fn write_params(params: &Params, mut w: impl Write) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params.names().iter().zip(params.tensors()) {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rows() as u64).to_le_bytes())?;
        w.write_all(&(t.cols() as u64).to_le_bytes())?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_params(mut r: impl Read) -> Result<Params, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("not a parameter checkpoint".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let count = read_u64(&mut r)? as usize;
    let mut names = Vec::with_capacity(count.min(1 << 16));
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = read_u64(&mut r)? as usize;
        if len > 1 << 16 {
            return Err(NnError::Checkpoint(format!("parameter name of {len} bytes")));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("parameter name is not UTF-8".into()))?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| *n <= 1 << 32)
            .ok_or_else(|| NnError::Checkpoint(format!("parameter {name} has shape {rows}x{cols}")))?;
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        names.push(name);
        tensors.push(Tensor::from_vec(rows, cols, data));
    }
    Ok(Params::from_parts(names, tensors))
}

pub fn save_params(params: &Params, path: &Path) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_params(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Params, NnError> {
    read_params(BufReader::new(File::open(path)?))
}
