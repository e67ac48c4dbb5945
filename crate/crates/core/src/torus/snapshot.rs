//! Binary field snapshots.
//!
//! Layout (all little-endian): magic `GNLS`, format version `u32`, `d` `u32`,
//! `N_max` `u32`, then `(2 N_max + 1)^d` coefficients as interleaved `f64`
//! pairs `(re, im)` in lexicographic frequency order from `-N_max` to `N_max`
//! per axis. The collocation grid is not stored; the reader chooses it.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{SpectralField, TorusGeometry};
use crate::{Error, Result};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"GNLS";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(mut writer: W, field: &SpectralField) -> Result<()> {
    let g = field.geometry();
    writer.write_all(&SNAPSHOT_MAGIC)?;
    writer.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    writer.write_all(&(g.dim() as u32).to_le_bytes())?;
    writer.write_all(&(g.n_max() as u32).to_le_bytes())?;
    let mut bytes = Vec::with_capacity(16 * field.coeffs().len());
    for a in field.coeffs() {
        bytes.extend_from_slice(&a.re.to_le_bytes());
        bytes.extend_from_slice(&a.im.to_le_bytes());
    }
    writer.write_all(&bytes)?;
    Ok(())
}

/// Reads a snapshot onto a grid with the given oversampling ratio.
pub fn read_snapshot<R: Read>(mut reader: R, oversampling: f64) -> Result<SpectralField> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    let mut read_u32 = |reader: &mut R| -> Result<u32> {
        reader.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word))
    };
    let version = read_u32(&mut reader)?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut reader)? as usize;
    let n_max = read_u32(&mut reader)? as usize;
    let geometry = TorusGeometry::new(dim, n_max, oversampling)?;
    let mut bytes = vec![0u8; 16 * geometry.num_modes()];
    reader.read_exact(&mut bytes)?;
    let coeffs = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after coefficients".into()));
    }
    SpectralField::from_coeffs(geometry, coeffs)
}
