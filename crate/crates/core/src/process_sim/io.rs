//! Ensemble files.
//!
//! Binary layout: the 8-byte magic `STKENS01`, a little-endian `u64` header
//! length, a JSON header, then `f64` little-endian values stored column-major:
//! for each time index `k`, for each coordinate `j`, the `M` path values.

use std::io::{Read, Write};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{PathEnsemble, ProcessModel, SimError, TimeGrid};

const MAGIC: &[u8; 8] = b"STKENS01";

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
struct Header {
    grid: TimeGrid,
    dim: usize,
    n_paths: usize,
    model: ProcessModel,
    seeds: Vec<u64>,
}

fn io_err(e: impl std::fmt::Display) -> SimError {
    SimError::Io(e.to_string())
}

pub fn write_binary<W: Write>(ens: &PathEnsemble, mut out: W) -> Result<(), SimError> {
    let header = Header {
        grid: ens.grid,
        dim: ens.dim,
        n_paths: ens.n_paths,
        model: ens.model.clone(),
        seeds: ens.seeds.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(io_err)?;
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io_err)?;
    out.write_all(&json).map_err(io_err)?;
    let mut buf = Vec::with_capacity(ens.data.len() * 8);
    for k in 0..=ens.grid.steps {
        for j in 0..ens.dim {
            for m in 0..ens.n_paths {
                buf.extend_from_slice(&ens.value(m, k)[j].to_le_bytes());
            }
        }
    }
    out.write_all(&buf).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn read_binary<R: Read>(mut input: R) -> Result<PathEnsemble, SimError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(SimError::Io("not an ensemble file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io_err)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(io_err)?;
    let h: Header = serde_json::from_slice(&json).map_err(io_err)?;
    h.grid.validate()?;
    let n = h.grid.steps + 1;
    let total = n * h.dim * h.n_paths;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw).map_err(io_err)?;
    if raw.len() != total * 8 {
        return Err(SimError::Io(format!("expected {} data bytes, found {}", total * 8, raw.len())));
    }
    let mut data = vec![0.0; total];
    for (c, chunk) in raw.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        let m = c % h.n_paths;
        let j = (c / h.n_paths) % h.dim;
        let k = c / (h.n_paths * h.dim);
        data[(m * n + k) * h.dim + j] = v;
    }
    let ens = PathEnsemble::new(h.grid, h.dim, data, h.seeds, h.model)?;
    if ens.n_paths != h.n_paths {
        return Err(SimError::Io("header path count disagrees with data".into()));
    }
    Ok(ens)
}

/// CSV with columns `path,k,t,x0,…,x{d−1}`, one row per path per time.
pub fn write_csv<W: Write>(ens: &PathEnsemble, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["path".to_string(), "k".to_string(), "t".to_string()];
    head.extend((0..ens.dim).map(|j| format!("x{j}")));
    w.write_record(&head).map_err(io_err)?;
    let times = ens.grid.times();
    for m in 0..ens.n_paths {
        for (k, t) in times.iter().enumerate() {
            let mut row = vec![m.to_string(), k.to_string(), t.to_string()];
            row.extend(ens.value(m, k).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
