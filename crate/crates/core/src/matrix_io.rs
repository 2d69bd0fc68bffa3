//! Binary dump format for complex matrices (snapshots and FCMs).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   b"CFCM"
//! version u32 = 1
//! label   u32 length + UTF-8 bytes
//! rows    u64
//! cols    u64
//! data    rows*cols pairs of (re: f32, im: f32), row-major
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

const MAGIC: &[u8; 4] = b"CFCM";
const VERSION: u32 = 1;

pub fn write_matrix<W: Write>(mut w: W, label: &str, m: &CMatrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(label.len() as u32).to_le_bytes())?;
    w.write_all(label.as_bytes())?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            buf.extend_from_slice(&(z.re as f32).to_le_bytes());
            buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<(String, CMatrix)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not a matrix dump (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Io(format!("unsupported dump version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    let mut label = vec![0u8; len];
    r.read_exact(&mut label)?;
    let label = String::from_utf8(label).map_err(|e| Error::Io(e.to_string()))?;
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let mut data = vec![0u8; rows * cols * 8];
    r.read_exact(&mut data)?;
    let m = CMatrix::from_fn(rows, cols, |i, j| {
        let o = (i * cols + j) * 8;
        let re = f32::from_le_bytes(data[o..o + 4].try_into().unwrap());
        let im = f32::from_le_bytes(data[o + 4..o + 8].try_into().unwrap());
        Complex64::new(re as f64, im as f64)
    });
    Ok((label, m))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
