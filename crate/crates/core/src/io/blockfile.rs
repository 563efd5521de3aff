//! Binary container for block-diagonal Hermitian matrices.
//!
//! Layout: magic `SCOVBLK\0` (8 bytes), version `u32`, basis hash
//! (32 bytes), block count `u32`, then per block `n: u32`, `dim: u32` and
//! `dim * dim` row-major complex64 entries (`f32` real, `f32` imaginary).

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::basis::BasisSpec;
use crate::covariance::BlockDiagHermitian;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SCOVBLK\0";
pub const VERSION: u32 = 1;

pub fn encode_block_matrix(m: &BlockDiagHermitian) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + 8 * m.num_blocks() + 8 * m.total_entries());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&m.basis_hash());
    out.extend_from_slice(&(m.num_blocks() as u32).to_le_bytes());
    for n in 0..m.num_blocks() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(m.dim(n) as u32).to_le_bytes());
        for c in m.block(n) {
            out.extend_from_slice(&(c.re as f32).to_le_bytes());
            out.extend_from_slice(&(c.im as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated(format!(
                "block matrix ends at byte {}, needed {end}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a container; with `basis`, its hash must match.
pub fn decode_block_matrix(bytes: &[u8], basis: Option<&BasisSpec>) -> Result<BlockDiagHermitian> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Schema("not a block matrix file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    if let Some(b) = basis {
        if b.hash() != hash {
            return Err(Error::BasisMismatch {
                expected: b.hash_hex(),
                found: hex::encode(hash),
            });
        }
    }
    let count = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(count);
    for expected in 0..count {
        let n = r.u32()? as usize;
        if n != expected {
            return Err(Error::Schema(format!("block {expected} labelled {n}")));
        }
        let d = r.u32()? as usize;
        let mut b = Vec::with_capacity(d * d);
        for _ in 0..d * d {
            let re = r.f32()? as f64;
            let im = r.f32()? as f64;
            b.push(Complex64::new(re, im));
        }
        blocks.push(b);
    }
    if r.pos != bytes.len() {
        return Err(Error::Schema("trailing bytes after last block".into()));
    }
    BlockDiagHermitian::from_blocks(hash, blocks)
}

pub fn write_block_matrix(m: &BlockDiagHermitian, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_block_matrix(m))?;
    Ok(())
}

pub fn read_block_matrix(path: impl AsRef<Path>, basis: Option<&BasisSpec>) -> Result<BlockDiagHermitian> {
    decode_block_matrix(&fs::read(path)?, basis)
}
