//! Little-endian `BRSG` grid files.
//!
//! Layout: magic `BRSG`, version `u32 = 1`, then for each of the x, y and θ
//! axes `{dim u64, min f64, max f64, periodic u8}`, then `{v, omega_bar, Rc}`
//! as `f64`, then the node values as `f64` with x fastest and θ slowest.
//! Convergence diagnostics are not part of the format.

use std::io::{Read, Write};

use super::grid::{Axis, GameParams, GridSpec, ValueGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BRSG";
pub const VERSION: u32 = 1;

pub fn write_grid<W: Write>(grid: &ValueGrid, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for axis in &grid.spec.axes {
        out.write_all(&(axis.dim as u64).to_le_bytes())?;
        out.write_all(&axis.min.to_le_bytes())?;
        out.write_all(&axis.max.to_le_bytes())?;
        out.write_all(&[axis.periodic as u8])?;
    }
    let p = grid.params;
    for x in [p.v, p.omega_bar, p.rc] {
        out.write_all(&x.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(grid.values.len() * 8);
    for x in &grid.values {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn grid_to_bytes(grid: &ValueGrid) -> Vec<u8> {
    let mut buf = Vec::new();
    write_grid(grid, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated grid file: {e}")))?;
    Ok(b)
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array::<8, _>(input)?))
}

/// Reads a grid file. The returned grid is marked converged; callers that
/// track convergence keep that flag alongside the file.
pub fn read_grid<R: Read>(mut input: R) -> Result<ValueGrid> {
    let magic = read_array::<4, _>(&mut input)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected BRSG")));
    }
    let version = u32::from_le_bytes(read_array::<4, _>(&mut input)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported grid version {version}")));
    }
    let mut axes = [Axis::bounded(0.0, 1.0, 3); 3];
    for axis in &mut axes {
        let dim = u64::from_le_bytes(read_array::<8, _>(&mut input)?);
        let min = read_f64(&mut input)?;
        let max = read_f64(&mut input)?;
        let periodic = match read_array::<1, _>(&mut input)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("bad periodic flag {b}"))),
        };
        let dim = usize::try_from(dim).map_err(|_| Error::Format(format!("axis size {dim}")))?;
        *axis = Axis {
            min,
            max,
            dim,
            periodic,
        };
    }
    let spec = GridSpec::new(axes[0], axes[1], axes[2])?;
    let params = GameParams {
        v: read_f64(&mut input)?,
        omega_bar: read_f64(&mut input)?,
        rc: read_f64(&mut input)?,
    };
    let n = spec.len();
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != n * 8 {
        return Err(Error::Format(format!(
            "expected {} value bytes, found {}",
            n * 8,
            raw.len()
        )));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::Format(format!("non-finite node value {bad}")));
    }
    Ok(ValueGrid {
        spec,
        values,
        converged: true,
        residual: 0.0,
        sweeps: 0,
        params,
    })
}
