//! Poincaré-ball primitives at curvature -1.
//!
//! Every operation that produces a point re-projects it into the shell
//! `‖x‖ ≤ 1 - BALL_EPS`. Zero-norm inputs follow the analytic limits exactly.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the boundary shell every produced point is kept out of.
pub const BALL_EPS: f64 = 1e-5;

/// Largest norm a produced point may carry.
pub const MAX_NORM: f64 = 1.0 - BALL_EPS;

/// A point strictly inside the open unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint(Vec<f64>);

/// A vector in the tangent space at the origin. No norm bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector(Vec<f64>);

impl PoincarePoint {
    /// Validates `coords` as a ball point: finite and of norm `< 1`.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("poincare point".into()));
        }
        let n = norm(&coords);
        if n >= 1.0 {
            return Err(Error::OutsideBall(n));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Möbius inverse, `-x`.
    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }
}

impl TangentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("tangent vector".into()));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Clamps the norm into the shell in place; returns the scale applied.
pub(crate) fn clamp_in_place(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > MAX_NORM {
        let s = MAX_NORM / n;
        x.iter_mut().for_each(|c| *c *= s);
        s
    } else {
        1.0
    }
}

/// Rescales `x` onto the shell when it lies outside `‖x‖ ≤ 1 - BALL_EPS`.
pub fn project_to_ball(x: &[f64]) -> Result<PoincarePoint> {
    if x.iter().any(|c| c.is_nan()) {
        return Err(Error::NonFinite("project_to_ball input".into()));
    }
    if x.iter().any(|c| c.is_infinite()) {
        return Err(Error::NonFinite("project_to_ball input".into()));
    }
    let mut out = x.to_vec();
    clamp_in_place(&mut out);
    Ok(PoincarePoint(out))
}

/// `x ⊕ y` in closed form.
pub fn mobius_add(x: &PoincarePoint, y: &PoincarePoint) -> Result<PoincarePoint> {
    check_dims(x.dim(), y.dim())?;
    let mut out = vec![0.0; x.dim()];
    mobius_add_raw(&x.0, &y.0, &mut out);
    clamp_in_place(&mut out);
    Ok(PoincarePoint(out))
}

pub(crate) fn mobius_add_raw(x: &[f64], y: &[f64], out: &mut [f64]) {
    let xy = dot(x, y);
    let x2 = dot(x, x);
    let y2 = dot(y, y);
    let cx = 1.0 + 2.0 * xy + y2;
    let cy = 1.0 - x2;
    let den = 1.0 + 2.0 * xy + x2 * y2;
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        *o = (cx * a + cy * b) / den;
    }
}

/// `tanh(t)/t` with its limit 1 at zero.
pub(crate) fn tanh_ratio(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 - t * t / 3.0
    } else {
        t.tanh() / t
    }
}

/// `artanh(t)/t` with its limit 1 at zero.
pub(crate) fn artanh_ratio(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        1.0 + t * t / 3.0
    } else {
        t.atanh() / t
    }
}

/// Möbius matrix-vector product `M ⊗ x`; `matrix` is `m × n`, `x` has dim `n`.
pub fn mobius_matvec(matrix: ArrayView2<'_, f64>, x: &PoincarePoint) -> Result<PoincarePoint> {
    let (rows, cols) = matrix.dim();
    check_dims(cols, x.dim())?;
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mobius_matvec matrix".into()));
    }
    let xn = x.norm();
    let xv = ndarray::ArrayView1::from(&x.0[..]);
    let mx: Vec<f64> = (0..rows).map(|r| matrix.row(r).dot(&xv)).collect();
    let mxn = norm(&mx);
    if xn == 0.0 || mxn == 0.0 {
        return Ok(PoincarePoint::origin(rows));
    }
    let scale = (mxn / xn * xn.atanh()).tanh() / mxn;
    let mut out: Vec<f64> = mx.iter().map(|v| v * scale).collect();
    clamp_in_place(&mut out);
    Ok(PoincarePoint(out))
}

/// Exponential map at the origin: `tanh(‖u‖) u/‖u‖`.
pub fn exp_map_origin(u: &TangentVector) -> PoincarePoint {
    let n = u.norm();
    if n == 0.0 {
        return PoincarePoint::origin(u.dim());
    }
    let s = n.tanh() / n;
    let mut out: Vec<f64> = u.0.iter().map(|c| c * s).collect();
    clamp_in_place(&mut out);
    PoincarePoint(out)
}

/// Logarithmic map at the origin: `artanh(‖v‖) v/‖v‖`.
pub fn log_map_origin(v: &PoincarePoint) -> TangentVector {
    let n = v.norm();
    if n == 0.0 {
        return TangentVector::zeros(v.dim());
    }
    let s = n.atanh() / n;
    TangentVector(v.0.iter().map(|c| c * s).collect())
}

/// Exponential map at an arbitrary basepoint,
/// `base ⊕ tanh(‖u‖ / (1 - ‖base‖²)) u/‖u‖`. Used as the manifold
/// retraction by the optimizer.
pub fn exp_map(base: &PoincarePoint, u: &TangentVector) -> Result<PoincarePoint> {
    check_dims(base.dim(), u.dim())?;
    let n = u.norm();
    if n == 0.0 {
        return Ok(base.clone());
    }
    let conformal = 1.0 - dot(&base.0, &base.0);
    let s = (n / conformal).tanh() / n;
    let mut step: Vec<f64> = u.0.iter().map(|c| c * s).collect();
    clamp_in_place(&mut step);
    mobius_add(base, &PoincarePoint(step))
}

/// Geodesic distance `arcosh(1 + 2‖x-y‖² / ((1-‖x‖²)(1-‖y‖²)))`.
pub fn poincare_distance(x: &PoincarePoint, y: &PoincarePoint) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    Ok(distance_raw(&x.0, &y.0))
}

pub(crate) fn distance_raw(x: &[f64], y: &[f64]) -> f64 {
    let diff2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if diff2 == 0.0 {
        return 0.0;
    }
    let den = (1.0 - dot(x, x)) * (1.0 - dot(y, y));
    (1.0 + 2.0 * diff2 / den).acosh()
}

/// Euclidean norm of the embedding, the uncertainty proxy read off the ball.
pub fn hyperbolic_radius(x: &PoincarePoint) -> f64 {
    x.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn p(c: &[f64]) -> PoincarePoint {
        PoincarePoint::new(c.to_vec()).unwrap()
    }

    #[test]
    fn mobius_add_identity_and_inverse() {
        let x = p(&[0.3, -0.5]);
        let zero = PoincarePoint::origin(2);
        assert_eq!(mobius_add(&x, &zero).unwrap(), x);
        let back = mobius_add(&x, &x.neg()).unwrap();
        assert!(back.norm() <= 1e-12);
    }

    #[test]
    fn mobius_add_one_dimensional() {
        let r = mobius_add(&p(&[0.5]), &p(&[0.25])).unwrap();
        assert_abs_diff_eq!(r.coords()[0], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn mobius_add_dimension_mismatch() {
        assert!(matches!(
            mobius_add(&p(&[0.1]), &p(&[0.1, 0.2])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matvec_cases() {
        let x = p(&[0.2, -0.4]);
        let id = array![[1.0, 0.0], [0.0, 1.0]];
        let r = mobius_matvec(id.view(), &x).unwrap();
        for (a, b) in r.coords().iter().zip(x.coords()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_eq!(mobius_matvec(id.view(), &PoincarePoint::origin(2)).unwrap(), PoincarePoint::origin(2));
        let two = array![[2.0]];
        let r = mobius_matvec(two.view(), &p(&[0.5])).unwrap();
        assert_abs_diff_eq!(r.coords()[0], 0.8, epsilon = 1e-14);
        let kill = array![[0.0, 0.0]];
        assert_eq!(mobius_matvec(kill.view(), &x).unwrap().coords(), &[0.0]);
    }

    #[test]
    fn exp_and_log_values() {
        assert_eq!(exp_map_origin(&TangentVector::zeros(2)), PoincarePoint::origin(2));
        let e = exp_map_origin(&TangentVector::new(vec![1.0, 0.0]).unwrap());
        assert_abs_diff_eq!(e.coords()[0], 0.761594155955765, epsilon = 1e-12);
        assert_eq!(e.coords()[1], 0.0);
        let l = log_map_origin(&p(&[0.5, 0.0]));
        assert_abs_diff_eq!(l.coords()[0], 0.5493061443340549, epsilon = 1e-12);
        assert_eq!(log_map_origin(&PoincarePoint::origin(3)), TangentVector::zeros(3));
    }

    #[test]
    fn exp_saturates_inside_shell() {
        let e = exp_map_origin(&TangentVector::new(vec![40.0, 0.0]).unwrap());
        assert!(e.norm() <= MAX_NORM);
    }

    #[test]
    fn distance_values() {
        let x = p(&[0.5, 0.0]);
        assert_eq!(poincare_distance(&x, &x).unwrap(), 0.0);
        let d = poincare_distance(&PoincarePoint::origin(2), &x).unwrap();
        assert_abs_diff_eq!(d, 1.0986122886681098, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 2.0 * 0.5f64.atanh(), epsilon = 1e-12);
    }

    #[test]
    fn projection_cases() {
        assert_eq!(project_to_ball(&[0.3, 0.4]).unwrap().coords(), &[0.3, 0.4]);
        let q = project_to_ball(&[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(q.coords()[0], 0.6 * MAX_NORM, epsilon = 1e-15);
        assert_abs_diff_eq!(q.coords()[1], 0.8 * MAX_NORM, epsilon = 1e-15);
        assert_eq!(project_to_ball(&[0.0, 0.0]).unwrap().coords(), &[0.0, 0.0]);
        assert!(project_to_ball(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn radius_cases() {
        assert_eq!(hyperbolic_radius(&PoincarePoint::origin(2)), 0.0);
        assert_eq!(hyperbolic_radius(&p(&[0.5, 0.0])), 0.5);
        let e = exp_map_origin(&TangentVector::new(vec![1.0, 0.0]).unwrap());
        assert_abs_diff_eq!(hyperbolic_radius(&e), 1f64.tanh(), epsilon = 1e-15);
    }

    #[test]
    fn exp_map_at_origin_matches_origin_map() {
        let u = TangentVector::new(vec![0.3, -0.2]).unwrap();
        let a = exp_map(&PoincarePoint::origin(2), &u).unwrap();
        let b = exp_map_origin(&u);
        for (x, y) in a.coords().iter().zip(b.coords()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn new_rejects_outside() {
        assert!(matches!(PoincarePoint::new(vec![1.0, 0.0]), Err(Error::OutsideBall(_))));
        assert!(PoincarePoint::new(vec![f64::INFINITY]).is_err());
    }
}
