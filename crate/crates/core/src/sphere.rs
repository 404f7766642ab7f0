//! Geometry on the unit hypersphere S^(D-1) with the round metric.
//!
//! All arithmetic is `f64`. Inner products are clamped to `[-1, 1]` before
//! they are handed to anything that expects a cosine.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are rejected by [`project`].
pub const ZERO_NORM: f64 = 1e-12;

/// Geodesics shorter than this (radians) are treated as degenerate.
pub const PARALLEL_ANGLE: f64 = 1e-7;

/// Geodesics longer than `PI - ANTIPODAL_MARGIN` are treated as antipodal.
pub const ANTIPODAL_MARGIN: f64 = 1e-7;

/// A point on the unit hypersphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `raw` onto the sphere.
    pub fn project(raw: &[f64]) -> Result<Self> {
        project(raw)
    }

    /// Standard basis vector `e_axis` in `dim` dimensions.
    pub fn axis(dim: usize, axis: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimTooSmall(dim));
        }
        assert!(axis < dim, "axis {axis} out of range for dim {dim}");
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Ok(UnitVector(v))
    }

    /// The point `(cos θ, sin θ)` on the unit circle.
    pub fn from_angle(theta: f64) -> Self {
        UnitVector(vec![theta.cos(), theta.sin()])
    }

    /// Wraps components that are already unit norm. Only for values produced
    /// by closed-form expressions on the sphere.
    pub(crate) fn from_unit_unchecked(v: Vec<f64>) -> Self {
        debug_assert!((norm(&v) - 1.0).abs() < 1e-9, "norm {}", norm(&v));
        UnitVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Raw inner product; the caller guarantees equal dimensions.
    #[inline]
    pub fn dot(&self, other: &UnitVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        dot(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        project(&v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

/// A vector in the tangent space at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: UnitVector,
    components: Vec<f64>,
}

impl TangentVector {
    /// Projects `ambient` onto the tangent space at `base`.
    pub fn new(base: UnitVector, ambient: &[f64]) -> Result<Self> {
        check_dims(base.dim(), ambient.len())?;
        let normal = dot(base.as_slice(), ambient);
        let components = ambient
            .iter()
            .zip(base.as_slice())
            .map(|(v, b)| v - normal * b)
            .collect();
        Ok(TangentVector { base, components })
    }

    pub fn zero(base: UnitVector) -> Self {
        let components = vec![0.0; base.dim()];
        TangentVector { base, components }
    }

    pub fn base(&self) -> &UnitVector {
        &self.base
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }

    pub fn scale(mut self, factor: f64) -> Self {
        self.components.iter_mut().for_each(|c| *c *= factor);
        self
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

/// `raw / ‖raw‖`.
pub fn project(raw: &[f64]) -> Result<UnitVector> {
    if raw.len() < 2 {
        return Err(Error::DimTooSmall(raw.len()));
    }
    let n = norm(raw);
    if !(n > ZERO_NORM) {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(UnitVector(raw.iter().map(|x| x / n).collect()))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cos_sim(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(a.dot(b).clamp(-1.0, 1.0))
}

/// Arc length between `a` and `b`, in `[0, π]`.
///
/// Evaluated as `2·atan2(‖a − b‖, ‖a + b‖)`, which equals `arccos(a·b)` on
/// the sphere but keeps full precision near 0 and π where `arccos` loses
/// about half the significant digits.
pub fn geodesic_angle(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(angle_between(a.as_slice(), b.as_slice()))
}

pub(crate) fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    (2.0 * diff.sqrt().atan2(sum.sqrt())).clamp(0.0, PI)
}

/// Classifies the geodesic between two points, returning its angle when it
/// is well defined.
pub(crate) fn checked_angle(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    let angle = geodesic_angle(a, b)?;
    if angle <= PARALLEL_ANGLE {
        return Err(Error::DegenerateParallel { angle });
    }
    if angle >= PI - ANTIPODAL_MARGIN {
        return Err(Error::AntipodalPoints { angle });
    }
    Ok(angle)
}

/// Coefficients `(sin((1-t)Ω)/sin Ω, sin(tΩ)/sin Ω)` of the constant-speed
/// geodesic from `a` to `b`.
#[inline]
pub(crate) fn slerp_weights(omega: f64, t: f64) -> (f64, f64) {
    let s = omega.sin();
    (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s)
}

/// Combines `wa·a + wb·b` and renormalizes.
pub(crate) fn combine_unit(a: &UnitVector, wa: f64, b: &UnitVector, wb: f64) -> UnitVector {
    let mut v: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| wa * x + wb * y)
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    UnitVector::from_unit_unchecked(v)
}

/// Spherical linear interpolation from `a` (t = 0) to `b` (t = 1).
///
/// Fails with [`Error::DegenerateParallel`] when the points coincide (the
/// caller should use `a`) and with [`Error::AntipodalPoints`] when no unique
/// geodesic exists.
pub fn slerp(a: &UnitVector, b: &UnitVector, t: f64) -> Result<UnitVector> {
    let omega = checked_angle(a, b)?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let (wa, wb) = slerp_weights(omega, t);
    Ok(combine_unit(a, wa, b, wb))
}

/// Riemannian logarithm: the tangent vector at `base` pointing at `x` with
/// length equal to their geodesic distance.
pub fn log_map(base: &UnitVector, x: &UnitVector) -> Result<TangentVector> {
    let angle = geodesic_angle(base, x)?;
    if angle >= PI - ANTIPODAL_MARGIN {
        return Err(Error::AntipodalPoints { angle });
    }
    let cos = base.dot(x);
    let mut dir: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(base.as_slice())
        .map(|(xi, bi)| xi - cos * bi)
        .collect();
    let n = norm(&dir);
    if angle == 0.0 || n == 0.0 {
        return Ok(TangentVector::zero(base.clone()));
    }
    let scale = angle / n;
    dir.iter_mut().for_each(|d| *d *= scale);
    Ok(TangentVector {
        base: base.clone(),
        components: dir,
    })
}

/// Riemannian exponential: walks `‖v‖` along the geodesic leaving `base` in
/// direction `v`.
pub fn exp_map(base: &UnitVector, v: &TangentVector) -> Result<UnitVector> {
    check_dims(base.dim(), v.components.len())?;
    if v.base.as_slice() != base.as_slice() {
        return Err(Error::TangentBaseMismatch);
    }
    let len = v.norm();
    if len == 0.0 {
        return Ok(base.clone());
    }
    let (c, s) = (len.cos(), len.sin() / len);
    let mut out: Vec<f64> = base
        .as_slice()
        .iter()
        .zip(&v.components)
        .map(|(b, t)| c * b + s * t)
        .collect();
    let n = norm(&out);
    out.iter_mut().for_each(|x| *x /= n);
    Ok(UnitVector::from_unit_unchecked(out))
}
