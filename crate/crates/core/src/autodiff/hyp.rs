//! Poincaré-ball operations recorded on a [`Tape`], batched over rows.
//!
//! These mirror [`crate::hypgeom`] using only the tape's primitive ops.

use super::tape::{Tape, Var};
use crate::error::Result;

/// Row-wise `exp_O`, followed by projection into the shell.
pub fn exp0(t: &mut Tape, u: Var) -> Result<Var> {
    let y = t.exp_origin(u);
    Ok(t.project(y))
}

/// Row-wise `log_O`.
pub fn log0(t: &mut Tape, v: Var) -> Result<Var> {
    Ok(t.log_origin(v))
}

/// Row-wise Möbius addition of two `m × n` batches.
pub fn mobius_add(t: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let out = t.mobius_add(x, y)?;
    Ok(t.project(out))
}

/// Row-wise `M ⊗ x` with `weight` stored as `in × out` (so `M = weightᵀ`),
/// computed as `exp_O(log_O(x) · weight)`.
pub fn mobius_matvec(t: &mut Tape, x: Var, weight: Var) -> Result<Var> {
    let l = log0(t, x)?;
    let z = t.matmul(l, weight)?;
    exp0(t, z)
}

/// Möbius ReLU, `exp_O(ReLU(log_O(x)))`.
pub fn hrelu(t: &mut Tape, x: Var) -> Result<Var> {
    let l = log0(t, x)?;
    let r = t.relu(l);
    exp0(t, r)
}

fn distance_argument(t: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let diff = t.sub(x, y)?;
    let d2 = t.row_sq_norm(diff);
    let x2 = t.row_sq_norm(x);
    let y2 = t.row_sq_norm(y);
    let cx = t.scale(x2, -1.0);
    let cx = t.add_scalar(cx, 1.0);
    let cy = t.scale(y2, -1.0);
    let cy = t.add_scalar(cy, 1.0);
    let den = t.mul(cx, cy)?;
    let num = t.scale(d2, 2.0);
    t.div(num, den)
}

/// Row-wise geodesic distance, `m × 1`.
pub fn distance(t: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let u = distance_argument(t, x, y)?;
    Ok(t.arcosh1p(u))
}

/// Row-wise squared geodesic distance, `m × 1`; smooth where `x = y`.
pub fn distance_sq(t: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let u = distance_argument(t, x, y)?;
    Ok(t.arcosh1p_sq(u))
}
