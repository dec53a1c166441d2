//! Density snapshots. The binary layout is little-endian:
//! `b"CLPD"`, `u64 G_x`, `u64 G_v`, `f64 v_max`, `f64 time`, then the values
//! x-major.

use std::io::{Read, Write};

use super::PhaseDensity;
use crate::error::{Error, Result};
use crate::experiment::fmt_f64;
use crate::particle_system::csv_err;

const MAGIC: &[u8; 4] = b"CLPD";

pub fn write_binary<W: Write>(mut w: W, f: &PhaseDensity) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(f.gx() as u64).to_le_bytes())?;
    w.write_all(&(f.gv() as u64).to_le_bytes())?;
    w.write_all(&f.v_max().to_le_bytes())?;
    w.write_all(&f.time().to_le_bytes())?;
    for v in f.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<PhaseDensity> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument("not a phase-density snapshot".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let gx = u64::from_le_bytes(next(&mut r)?) as usize;
    let gv = u64::from_le_bytes(next(&mut r)?) as usize;
    let v_max = f64::from_le_bytes(next(&mut r)?);
    let time = f64::from_le_bytes(next(&mut r)?);
    let count = gx
        .checked_mul(gv)
        .filter(|c| *c <= 1 << 28)
        .ok_or_else(|| Error::InvalidArgument("snapshot grid is too large".into()))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(next(&mut r)?));
    }
    PhaseDensity::new(gx, gv, v_max, values, time)
}

/// Header row `G_x,G_v,v_max,time`, its values, then one `x,v,f` row per cell.
pub fn write_csv<W: Write>(w: W, f: &PhaseDensity) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(w);
    w.write_record(["G_x", "G_v", "v_max", "time"]).map_err(csv_err)?;
    w.write_record([f.gx().to_string(), f.gv().to_string(), fmt_f64(f.v_max()), fmt_f64(f.time())])
        .map_err(csv_err)?;
    w.write_record(["x", "v", "f"]).map_err(csv_err)?;
    for i in 0..f.gx() {
        for j in 0..f.gv() {
            w.write_record([fmt_f64(f.x_node(i)), fmt_f64(f.v_node(j)), fmt_f64(f.get(i, j))])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}
