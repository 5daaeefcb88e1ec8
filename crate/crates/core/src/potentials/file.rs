//! Binary parameter container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        8 bytes  "GBPNPRM1"
//! height       u32
//! width        u32
//! connectivity u8       4 or 8
//! nl_count     u32      then nl_count x (u32 lo, u32 hi)
//! s            f64 x N  row-major
//! mask         u8  x N
//! w_unary      f64 x N
//! beta         f64 x N
//! edge_count   u32      then edge_count x (u32 src, u32 dst, f64 w, f64 r)
//! ```
//!
//! Each undirected potential is stored once with `src < dst` and describes
//! `w (x_src - x_dst - r)^2 / 2`. The local records define which lattice
//! edges exist; every non-local pair must have a record.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Connectivity, GridGraph};
use crate::scalar::Scalar;

use super::{MrfParams, DEFAULT_W_MIN};

pub const PARAM_MAGIC: &[u8; 8] = b"GBPNPRM1";

pub fn save_params<T: Scalar>(
    params: &MrfParams<T>,
    graph: &GridGraph,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    params.check_shape(graph)?;
    let n = graph.pixel_count();
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::SizeExceeded(format!("{what} {v} exceeds u32")))
    };

    let mut buf = Vec::with_capacity(64 + n * 25 + graph.edge_count() * 12);
    buf.extend_from_slice(PARAM_MAGIC);
    buf.extend_from_slice(&to_u32(graph.height(), "height")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(graph.width(), "width")?.to_le_bytes());
    buf.push(graph.connectivity().flag());

    let nl = graph.nonlocal_pairs();
    buf.extend_from_slice(&to_u32(nl.len(), "non-local count")?.to_le_bytes());
    for (a, b) in nl {
        buf.extend_from_slice(&(a as u32).to_le_bytes());
        buf.extend_from_slice(&(b as u32).to_le_bytes());
    }

    let put_f64 = |buf: &mut Vec<u8>, v: T| buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    for &v in &params.s {
        put_f64(&mut buf, v);
    }
    buf.extend(params.measurement_mask.iter().map(|&m| m as u8));
    for &v in &params.w_unary {
        put_f64(&mut buf, v);
    }
    for &v in &params.beta {
        put_f64(&mut buf, v);
    }

    let canonical: Vec<usize> = graph.canonical_edges().collect();
    buf.extend_from_slice(&to_u32(canonical.len(), "edge count")?.to_le_bytes());
    for id in canonical {
        let e = graph.edge(id);
        buf.extend_from_slice(&(e.src as u32).to_le_bytes());
        buf.extend_from_slice(&(e.dst as u32).to_le_bytes());
        put_f64(&mut buf, params.w_pair[id]);
        put_f64(&mut buf, params.potential_residual(graph, id));
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads and validates a parameter file against the default weight floor.
pub fn load_params<T: Scalar>(path: impl AsRef<Path>) -> Result<(GridGraph, MrfParams<T>)> {
    load_params_with_floor(path, T::lit(DEFAULT_W_MIN))
}

pub fn load_params_with_floor<T: Scalar>(
    path: impl AsRef<Path>,
    w_min: T,
) -> Result<(GridGraph, MrfParams<T>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rd = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };

    if rd.take(8)? != PARAM_MAGIC {
        return Err(Error::parse(path, "bad magic, expected GBPNPRM1"));
    }
    let height = rd.u32()? as usize;
    let width = rd.u32()? as usize;
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension { height, width });
    }
    let flag = rd.u8()?;
    let connectivity = Connectivity::from_flag(flag)
        .ok_or_else(|| Error::parse(path, format!("connectivity flag {flag} is not 4 or 8")))?;
    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::parse(path, "dimensions overflow"))?;

    let nl_count = rd.u32()? as usize;
    let mut nl_pairs = Vec::with_capacity(nl_count.min(bytes.len() / 8));
    for _ in 0..nl_count {
        let a = rd.u32()? as usize;
        let b = rd.u32()? as usize;
        nl_pairs.push((a.min(b), a.max(b)));
    }

    let s = rd.f64_vec::<T>(n)?;
    let mask_bytes = rd.take(n)?;
    let mut measurement_mask = Vec::with_capacity(n);
    for (i, &b) in mask_bytes.iter().enumerate() {
        match b {
            0 => measurement_mask.push(false),
            1 => measurement_mask.push(true),
            other => {
                return Err(Error::Validation(format!(
                    "mask record {i}: byte {other} is not 0 or 1"
                )))
            }
        }
    }
    let w_unary = rd.f64_vec::<T>(n)?;
    let beta = rd.f64_vec::<T>(n)?;

    let edge_count = rd.u32()? as usize;
    let mut records = Vec::with_capacity(edge_count.min(bytes.len() / 24));
    for k in 0..edge_count {
        let src = rd.u32()? as usize;
        let dst = rd.u32()? as usize;
        let w = rd.f64()?;
        let r = rd.f64()?;
        if src >= dst {
            return Err(Error::Validation(format!(
                "edge record {k} ({src} -> {dst}): expected src < dst"
            )));
        }
        if !(w >= w_min.to_f64_lossy()) || !w.is_finite() {
            return Err(Error::Validation(format!(
                "edge record {k} ({src} -> {dst}): weight {w} below floor {w_min}"
            )));
        }
        if !r.is_finite() {
            return Err(Error::Validation(format!(
                "edge record {k} ({src} -> {dst}): residual is not finite"
            )));
        }
        records.push((src, dst, w, r));
    }
    if rd.pos != bytes.len() {
        return Err(Error::parse(
            path,
            format!("{} trailing bytes after edge records", bytes.len() - rd.pos),
        ));
    }

    let nl_set: HashSet<(usize, usize)> = nl_pairs.iter().copied().collect();
    let local: Vec<(usize, usize)> = records
        .iter()
        .map(|&(a, b, _, _)| (a, b))
        .filter(|p| !nl_set.contains(p))
        .collect();
    let graph = GridGraph::from_pairs(height, width, connectivity, &local, &nl_pairs)?;
    if records.len() != graph.canonical_edges().count() {
        return Err(Error::Validation(format!(
            "{} edge records for {} undirected edges (every non-local pair needs a record)",
            records.len(),
            graph.canonical_edges().count()
        )));
    }

    let mut w_pair = vec![T::zero(); graph.edge_count()];
    let mut r_pair = vec![T::zero(); graph.edge_count()];
    for &(src, dst, w, r) in &records {
        let id = graph
            .edge_id(src, dst)
            .expect("record pairs were used to build the graph");
        let rev = graph.reverse(id);
        let (w, r) = (T::lit(w), T::lit(r));
        w_pair[id] = w;
        w_pair[rev] = w;
        r_pair[id] = -r;
        r_pair[rev] = r;
    }

    let params = MrfParams {
        height,
        width,
        s,
        measurement_mask,
        w_unary,
        w_pair,
        r_pair,
        beta,
    };
    params.validate(&graph, w_min)?;
    Ok((graph, params))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::parse(
                    self.path,
                    format!("truncated: needed {len} bytes at offset {}", self.pos),
                )
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::parse(self.path, "overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}
