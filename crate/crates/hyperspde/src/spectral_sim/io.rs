//! Trajectory dumps: a little-endian binary column file and CSV.
//!
//! Binary layout: magic `HSPDPATH`, then `u32` version, `u32` integrator
//! (0 exact, 1 euler), `u64` K_max, `u64` n_steps, `u64` seed, `u64` replicate,
//! `f64` horizon, followed by one column of `n_steps + 1` values per series in
//! the order `u_1, v_1, u_2, v_2, ...`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Integrator, ModePaths, SeedRecord, TimeGrid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"HSPDPATH";
const VERSION: u32 = 1;

pub fn write_binary(paths: &ModePaths, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(56 + 16 * paths.u.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let integ: u32 = match paths.seed.integrator {
        Integrator::Exact => 0,
        Integrator::Euler => 1,
    };
    buf.extend_from_slice(&integ.to_le_bytes());
    buf.extend_from_slice(&(paths.k_max as u64).to_le_bytes());
    buf.extend_from_slice(&(paths.grid.n_steps as u64).to_le_bytes());
    buf.extend_from_slice(&paths.seed.master.to_le_bytes());
    buf.extend_from_slice(&paths.seed.replicate.to_le_bytes());
    buf.extend_from_slice(&paths.grid.horizon.to_le_bytes());
    for k in 1..=paths.k_max {
        for n in 0..=paths.grid.n_steps {
            buf.extend_from_slice(&paths.u_mode(k, n).to_le_bytes());
        }
        for n in 0..=paths.grid.n_steps {
            buf.extend_from_slice(&paths.v_mode(k, n).to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<ModePaths> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::InvalidInput(format!("{}: {msg}", path.display()));
    if bytes.len() < 56 || &bytes[..8] != MAGIC {
        return Err(bad("not a trajectory file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(8) != VERSION {
        return Err(bad("unsupported version"));
    }
    let integrator = match u32_at(12) {
        0 => Integrator::Exact,
        1 => Integrator::Euler,
        _ => return Err(bad("unknown integrator tag")),
    };
    let k_max = u64_at(16) as usize;
    let n_steps = u64_at(24) as usize;
    let master = u64_at(32);
    let replicate = u64_at(40);
    let horizon = f64::from_le_bytes(bytes[48..56].try_into().unwrap());
    let len = n_steps + 1;
    if bytes.len() != 56 + 16 * k_max * len {
        return Err(bad("truncated payload"));
    }
    let grid = TimeGrid::new(horizon, n_steps)?;
    let mut u = vec![0.0; k_max * len];
    let mut v = vec![0.0; k_max * len];
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    for k in 0..k_max {
        let base = 56 + 16 * k * len;
        for n in 0..len {
            u[n * k_max + k] = f64_at(base + 8 * n);
            v[n * k_max + k] = f64_at(base + 8 * (len + n));
        }
    }
    Ok(ModePaths {
        k_max,
        grid,
        u,
        v,
        increments: None,
        seed: SeedRecord {
            master,
            replicate,
            integrator,
        },
    })
}

/// CSV with columns `t, u_1, v_1, ..., u_K, v_K`.
pub fn write_csv(paths: &ModePaths, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("t");
    for k in 1..=paths.k_max {
        line.push_str(&format!(",u_{k},v_{k}"));
    }
    line.push('\n');
    for n in 0..=paths.grid.n_steps {
        line.push_str(&format!("{:e}", paths.grid.t(n)));
        for k in 1..=paths.k_max {
            line.push_str(&format!(",{:e},{:e}", paths.u_mode(k, n), paths.v_mode(k, n)));
        }
        line.push('\n');
        if line.len() > 1 << 16 {
            w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
            line.clear();
        }
    }
    w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
