//! Binary parameter files.
//!
//! Layout: the 8-byte magic, then eight little-endian `u32` header fields
//! (backend, fusion, K, N, embed_dim, T_h, T_f, D_p), a little-endian `u64`
//! value count, and the values as little-endian `f64` in layer order.

use std::io::{Read, Write};

use super::cmp::CmpModelParams;
use super::{Fusion, PredictionError};
use crate::{PLAN_DIM, T_F, T_H};

pub const PARAMS_MAGIC: &[u8; 8] = b"IRLPCMP1";
const BACKEND_LEARNED: u32 = 2;

pub fn write_params<W: Write>(mut w: W, params: &CmpModelParams) -> Result<(), PredictionError> {
    params.check_len()?;
    w.write_all(PARAMS_MAGIC)?;
    let fusion = match params.fusion {
        Fusion::Early => 0u32,
        Fusion::Late => 1,
    };
    let header = [
        BACKEND_LEARNED,
        fusion,
        params.num_modes as u32,
        params.max_agents as u32,
        params.embed_dim as u32,
        T_H as u32,
        T_F as u32,
        PLAN_DIM as u32,
    ];
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    w.write_all(&(params.values.len() as u64).to_le_bytes())?;
    for v in &params.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<CmpModelParams, PredictionError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PARAMS_MAGIC {
        return Err(PredictionError::Format("bad magic".into()));
    }
    let mut header = [0u32; 8];
    for h in &mut header {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *h = u32::from_le_bytes(b);
    }
    let [backend, fusion, k, n, embed, t_h, t_f, d_p] = header;
    if backend != BACKEND_LEARNED {
        return Err(PredictionError::Format(format!("unknown backend tag {backend}")));
    }
    if (t_h as usize, t_f as usize, d_p as usize) != (T_H, T_F, PLAN_DIM) {
        return Err(PredictionError::ConfigMismatch(format!(
            "file horizons T_h={t_h} T_f={t_f} D_p={d_p} differ from {T_H}/{T_F}/{PLAN_DIM}"
        )));
    }
    let fusion = match fusion {
        0 => Fusion::Early,
        1 => Fusion::Late,
        other => return Err(PredictionError::Format(format!("unknown fusion tag {other}"))),
    };
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let count = u64::from_le_bytes(b) as usize;
    let mut params = CmpModelParams {
        fusion,
        num_modes: k as usize,
        max_agents: n as usize,
        embed_dim: embed as usize,
        values: Vec::new(),
    };
    let expected = params.layout().num_params;
    if count != expected {
        return Err(PredictionError::ShapeMismatch { expected, got: count });
    }
    params.values.reserve(count);
    for _ in 0..count {
        r.read_exact(&mut b)?;
        params.values.push(f64::from_le_bytes(b));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(PredictionError::Format(format!("{} trailing bytes", rest.len())));
    }
    params.check_len()?;
    Ok(params)
}
