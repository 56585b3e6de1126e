//! Hermitian metric fields on open subsets of `C^n` and their curvature.
//!
//! Convention: a metric is stored through its coefficient matrix `g[i][j] = g_{i\bar j}`,
//! the Kähler form is `(i/2) Σ g_{i\bar j} dz^i ∧ dz̄^j`, and the squared length of a
//! tangent vector is `|ξ|² = Σ g_{i\bar j} ξ^i conj(ξ^j)`. The flat metric is the
//! identity matrix. Every closed form in this crate is stated in this convention.

mod fd;
pub mod fields;

use nalgebra::{Cholesky, Complex, DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

pub use fd::{fd_jet, FD_RELATIVE_STEP};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// A point `(z¹, …, zⁿ)` of `C^n` with finite coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint(Vec<C64>);

impl ComplexPoint {
    pub fn new(coords: Vec<C64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput("a point needs at least one coordinate".into()));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("point coordinates must be finite".into()));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); dim.max(1)])
    }

    /// Point with real coordinates.
    pub fn real(coords: &[f64]) -> Result<Self> {
        Self::new(coords.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// One-dimensional point.
    pub fn scalar(z: C64) -> Result<Self> {
        Self::new(vec![z])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[C64] {
        &self.0
    }

    /// Squared Euclidean norm `Σ |z^i|²`.
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self(self.0.iter().map(|c| c * factor).collect())
    }

    pub fn distance(&self, other: &ComplexPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Copy with coordinate `k` shifted by `delta`.
    pub fn shifted(&self, k: usize, delta: C64) -> Self {
        let mut c = self.0.clone();
        c[k] += delta;
        Self(c)
    }
}

impl fmt::Display for ComplexPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}{:+}i", c.re, c.im)?;
        }
        write!(f, ")")
    }
}

/// A holomorphic tangent vector `ξ ∈ T'_z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: ComplexPoint,
    pub components: Vec<C64>,
}

impl TangentVector {
    pub fn new(base: ComplexPoint, components: Vec<C64>) -> Result<Self> {
        if components.len() != base.dim() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: components.len() });
        }
        if components.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("tangent vector components must be finite".into()));
        }
        Ok(Self { base, components })
    }

    /// The coordinate vector `∂/∂z^k` at `base`.
    pub fn coordinate(base: ComplexPoint, k: usize) -> Result<Self> {
        let mut comps = vec![C64::new(0.0, 0.0); base.dim()];
        if k >= comps.len() {
            return Err(Error::DimensionMismatch { expected: base.dim(), got: k + 1 });
        }
        comps[k] = C64::new(1.0, 0.0);
        Self::new(base, comps)
    }

    pub fn euclidean_norm(&self) -> f64 {
        self.components.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.norm_sqr() == 0.0)
    }

    pub fn scaled(&self, lambda: C64) -> Self {
        Self {
            base: self.base.clone(),
            components: self.components.iter().map(|c| c * lambda).collect(),
        }
    }
}

/// Metric coefficients at a point together with `∂g/∂z^k` and `∂²g/∂z^k∂z̄^l`.
#[derive(Clone, Debug)]
pub struct MetricJet {
    pub g: CMatrix,
    /// `dz[k] = ∂g/∂z^k`.
    pub dz: Vec<CMatrix>,
    /// `dzdzbar[k * n + l] = ∂²g/∂z^k ∂z̄^l`.
    pub dzdzbar: Vec<CMatrix>,
}

impl MetricJet {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn mixed(&self, k: usize, l: usize) -> &CMatrix {
        &self.dzdzbar[k * self.dim() + l]
    }

    /// `∂g/∂z̄^l`, which is `(∂g/∂z^l)^H` for a Hermitian field.
    pub fn dzbar(&self, l: usize) -> CMatrix {
        self.dz[l].adjoint()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// A field of positive Hermitian matrices `z ↦ g_{i\bar j}(z)`.
///
/// Fields are immutable and shareable across threads. Implementors with closed-form
/// derivatives return them from [`MetricField::analytic_jet`]; everything else is
/// differentiated by central differences with one Richardson step.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix>;

    fn analytic_jet(&self, _z: &ComplexPoint) -> Option<Result<MetricJet>> {
        None
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    /// Length scale on which the field varies; finite-difference steps are a fixed
    /// fraction of it.
    fn regularity_radius(&self) -> f64 {
        1.0
    }

    /// Euclidean distance from `z` to the edge of the region where the field is
    /// defined, if known.
    fn boundary_distance(&self, _z: &ComplexPoint) -> Option<f64> {
        None
    }

    fn name(&self) -> String {
        "metric".to_string()
    }
}

/// Coefficients with derivatives, analytic where available.
pub fn metric_jet(metric: &dyn MetricField, z: &ComplexPoint) -> Result<MetricJet> {
    check_dim(metric, z)?;
    if metric.derivative_mode() == DerivativeMode::Analytic {
        if let Some(jet) = metric.analytic_jet(z) {
            return jet;
        }
    }
    fd_jet(metric, z)
}

fn check_dim(metric: &dyn MetricField, z: &ComplexPoint) -> Result<()> {
    if metric.dim() != z.dim() {
        return Err(Error::DimensionMismatch { expected: metric.dim(), got: z.dim() });
    }
    Ok(())
}

/// Inverse of a Hermitian positive-definite matrix, or a degeneracy error.
pub(crate) fn hermitian_inverse(g: &CMatrix, at: &ComplexPoint) -> Result<CMatrix> {
    if g.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::MetricDegenerate(format!("{at} (non-finite coefficients)")));
    }
    Cholesky::new(g.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::MetricDegenerate(at.to_string()))
}

/// `Σ g_{i\bar j} a^i conj(b^j)`.
pub(crate) fn hermitian_form(g: &CMatrix, a: &[C64], b: &[C64]) -> C64 {
    let n = a.len();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += g[(i, j)] * a[i] * b[j].conj();
        }
    }
    acc
}

/// `|ξ|²_ω = Σ g_{i\bar j}(z) ξ^i conj(ξ^j)`.
pub fn norm_sq(metric: &dyn MetricField, v: &TangentVector) -> Result<f64> {
    check_dim(metric, &v.base)?;
    let g = metric.eval(&v.base)?;
    norm_sq_with(&g, v)
}

fn norm_sq_with(g: &CMatrix, v: &TangentVector) -> Result<f64> {
    if g.nrows() == 1 {
        let g11 = g[(0, 0)];
        if !(g11.re > 0.0) || !g11.re.is_finite() {
            return Err(Error::MetricDegenerate(v.base.to_string()));
        }
        return Ok(g11.re * v.components[0].norm_sqr());
    }
    if Cholesky::new(g.clone()).is_none() {
        return Err(Error::MetricDegenerate(v.base.to_string()));
    }
    Ok(hermitian_form(g, &v.components, &v.components).re)
}

/// Curvature components `R_{i\bar j k\bar l}` at one point.
#[derive(Clone, Debug)]
pub struct CurvatureAtPoint {
    pub base: ComplexPoint,
    dim: usize,
    components: Vec<C64>,
}

impl CurvatureAtPoint {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        let n = self.dim;
        self.components[((i * n + j) * n + k) * n + l]
    }

    pub fn components(&self) -> &[C64] {
        &self.components
    }

    /// `R(η, η̄, η, η̄)` without normalisation.
    pub fn contract(&self, eta: &[C64]) -> C64 {
        let n = self.dim;
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let a = eta[i] * eta[j].conj();
                for k in 0..n {
                    for l in 0..n {
                        acc += self.get(i, j, k, l) * a * eta[k] * eta[l].conj();
                    }
                }
            }
        }
        acc
    }

    /// Largest deviation from the conjugation and Kähler symmetries, relative to the
    /// largest component.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.dim;
        let scale = self.components.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.get(i, j, k, l);
                        worst = worst
                            .max((r.conj() - self.get(j, i, l, k)).norm())
                            .max((r - self.get(k, j, i, l)).norm())
                            .max((r - self.get(i, l, k, j)).norm());
                    }
                }
            }
        }
        worst / scale
    }
}

/// `R_{i\bar j k\bar l} = −∂_k∂̄_l g_{i\bar j} + Σ g^{p\bar q} ∂_k g_{i\bar q} ∂̄_l g_{p\bar j}`.
pub fn curvature_tensor(metric: &dyn MetricField, z: &ComplexPoint) -> Result<CurvatureAtPoint> {
    let jet = metric_jet(metric, z)?;
    curvature_from_jet(&jet, z)
}

pub fn curvature_from_jet(jet: &MetricJet, z: &ComplexPoint) -> Result<CurvatureAtPoint> {
    let n = jet.dim();
    let ginv = hermitian_inverse(&jet.g, z)?;
    let mut components = vec![C64::new(0.0, 0.0); n * n * n * n];
    for k in 0..n {
        for l in 0..n {
            let quad = &jet.dz[k] * &ginv * jet.dzbar(l);
            let second = jet.mixed(k, l);
            for i in 0..n {
                for j in 0..n {
                    components[((i * n + j) * n + k) * n + l] = quad[(i, j)] - second[(i, j)];
                }
            }
        }
    }
    Ok(CurvatureAtPoint { base: z.clone(), dim: n, components })
}

/// Holomorphic sectional curvature `H(ω, z, η)` for the unit vector along `η`.
pub fn holo_sectional_curvature(metric: &dyn MetricField, eta: &TangentVector) -> Result<f64> {
    if eta.is_zero() {
        return Err(Error::InvalidInput("holomorphic sectional curvature needs η ≠ 0".into()));
    }
    let jet = metric_jet(metric, &eta.base)?;
    let rm = curvature_from_jet(&jet, &eta.base)?;
    let len2 = norm_sq_with(&jet.g, eta)?;
    Ok(rm.contract(&eta.components).re / (len2 * len2))
}

/// `Ric_{k\bar l} = −∂_k∂̄_l log det g`.
pub fn ricci(metric: &dyn MetricField, z: &ComplexPoint) -> Result<CMatrix> {
    let jet = metric_jet(metric, z)?;
    ricci_from_jet(&jet, z)
}

pub fn ricci_from_jet(jet: &MetricJet, z: &ComplexPoint) -> Result<CMatrix> {
    let n = jet.dim();
    let ginv = hermitian_inverse(&jet.g, z)?;
    let mut ric = CMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            let second = (&ginv * jet.mixed(k, l)).trace();
            let first = (&ginv * jet.dzbar(l) * &ginv * &jet.dz[k]).trace();
            ric[(k, l)] = first - second;
        }
    }
    Ok(ric)
}

/// Scalar curvature `tr_g Ric`.
pub fn scalar_curvature(metric: &dyn MetricField, z: &ComplexPoint) -> Result<f64> {
    let jet = metric_jet(metric, z)?;
    let ric = ricci_from_jet(&jet, z)?;
    let ginv = hermitian_inverse(&jet.g, z)?;
    Ok((ginv * ric).trace().re)
}

/// Eigenvalues of `b` relative to `a` (both Hermitian, `a` positive definite).
pub fn generalized_eigenvalues(a: &CMatrix, b: &CMatrix, at: &ComplexPoint) -> Result<Vec<f64>> {
    if a.nrows() == 1 {
        if !(a[(0, 0)].re > 0.0) {
            return Err(Error::MetricDegenerate(at.to_string()));
        }
        return Ok(vec![b[(0, 0)].re / a[(0, 0)].re]);
    }
    let chol = Cholesky::new(a.clone()).ok_or_else(|| Error::MetricDegenerate(at.to_string()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::MetricDegenerate(at.to_string()))?;
    let mut m = &linv * b * linv.adjoint();
    // symmetrise against round-off before the Hermitian eigensolver
    let mh = m.adjoint();
    m = (m + mh).map(|c| c * 0.5);
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Quasi-isometry statistics of `b` against `a` over a sample of directions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioStats {
    /// `inf |v|²_b / |v|²_a` over the sampled directions.
    pub inf_ratio: f64,
    pub sup_ratio: f64,
    pub argmin: usize,
    pub argmax: usize,
    /// Smallest generalised eigenvalue of `(b, a)` over the sampled base points.
    pub eig_min: f64,
    pub eig_max: f64,
    pub eig_argmin: usize,
    pub eig_argmax: usize,
}

pub fn metric_ratio_stats(
    a: &dyn MetricField,
    b: &dyn MetricField,
    samples: &[TangentVector],
) -> Result<RatioStats> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let per_sample: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .map(|v| {
            check_dim(a, &v.base)?;
            check_dim(b, &v.base)?;
            let ga = a.eval(&v.base)?;
            let gb = b.eval(&v.base)?;
            let ratio = norm_sq_with(&gb, v)? / norm_sq_with(&ga, v)?;
            let eig = generalized_eigenvalues(&ga, &gb, &v.base)?;
            Ok((ratio, eig[0], eig[eig.len() - 1]))
        })
        .collect::<Result<_>>()?;

    let mut stats = RatioStats {
        inf_ratio: f64::INFINITY,
        sup_ratio: f64::NEG_INFINITY,
        argmin: 0,
        argmax: 0,
        eig_min: f64::INFINITY,
        eig_max: f64::NEG_INFINITY,
        eig_argmin: 0,
        eig_argmax: 0,
    };
    for (idx, &(ratio, lo, hi)) in per_sample.iter().enumerate() {
        if ratio < stats.inf_ratio {
            stats.inf_ratio = ratio;
            stats.argmin = idx;
        }
        if ratio > stats.sup_ratio {
            stats.sup_ratio = ratio;
            stats.argmax = idx;
        }
        if lo < stats.eig_min {
            stats.eig_min = lo;
            stats.eig_argmin = idx;
        }
        if hi > stats.eig_max {
            stats.eig_max = hi;
            stats.eig_argmax = idx;
        }
    }
    Ok(stats)
}
