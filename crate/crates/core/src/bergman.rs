//! Bergman kernel and Bergman metric from a truncated orthonormal basis.
//!
//! The basis is built from monomials `v_α(z) = Π ((z_i − c_i)/s_i)^{α_i}` (Laurent
//! monomials on the annulus) of total degree at most `d`, orthonormalised against the
//! pairing `⟨φ dz, ψ dz⟩ = 2ⁿ ∫ φ ψ̄ dV` of holomorphic `(n,0)`-forms.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cholesky::graded_pivoted_cholesky;
use crate::domains::{DomainSpec, SampleSet, SamplingScheme};
use crate::error::{Error, Result};
use crate::geometry::{CMatrix, ComplexPoint, MetricField, C64};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Relative pivot below which a monomial is treated as dependent.
pub const DROP_TOLERANCE: f64 = 1e-12;
const INDEFINITE_TOLERANCE: f64 = 1e-8;

/// `⟨φ dz¹∧…∧dzⁿ, ψ dz¹∧…∧dzⁿ⟩ = pairing_factor(n) · ∫ φ ψ̄ dV`.
pub fn pairing_factor(n: usize) -> f64 {
    2f64.powi(n as i32)
}

/// Default truncation degree by dimension.
pub fn default_degree(domain: &DomainSpec) -> usize {
    match domain {
        DomainSpec::DfhOmega => 6,
        d if d.dim() == 1 => 40,
        d if d.dim() == 2 => 12,
        _ => 6,
    }
}

/// Smallest quadrature budget for which the radial rules integrate every Gram entry exactly.
pub fn default_budget(domain: &DomainSpec, degree: usize) -> usize {
    let d = degree;
    match domain {
        DomainSpec::Ball { dim: 1, .. } => (d + 2) * (d + 2),
        DomainSpec::PuncturedDisk | DomainSpec::Annulus { .. } => (2 * d + 2) * (2 * d + 2),
        DomainSpec::Ball { dim: 2, .. } => (d + 2).pow(4),
        DomainSpec::Polydisk { radii } => (d + 1).pow(2 * radii.len() as u32),
        DomainSpec::Ball { .. } => 200_000,
        DomainSpec::DfhOmega => 100_000,
    }
}

fn basis_frame(domain: &DomainSpec) -> (Vec<C64>, Vec<f64>) {
    let zero = C64::new(0.0, 0.0);
    match domain {
        DomainSpec::Ball { radius, dim } => (vec![zero; *dim], vec![*radius; *dim]),
        DomainSpec::Polydisk { radii } => (vec![zero; radii.len()], radii.clone()),
        DomainSpec::PuncturedDisk => (vec![zero], vec![1.0]),
        DomainSpec::Annulus { outer, .. } => (vec![zero], vec![*outer]),
        DomainSpec::DfhOmega => (vec![C64::new(-0.5, 0.0), zero, zero], vec![0.5, 1.0, 1.0]),
    }
}

/// Exponents of total degree `k` in `n` variables.
fn exponents_of_degree(n: usize, k: usize) -> Vec<Vec<i32>> {
    if n == 1 {
        return vec![vec![k as i32]];
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in exponents_of_degree(n - 1, k - first) {
            rest.insert(0, first as i32);
            out.push(rest);
        }
    }
    out
}

/// Basis exponents grouped by degree.
fn graded_exponents(domain: &DomainSpec, degree: usize) -> Vec<Vec<Vec<i32>>> {
    match domain {
        DomainSpec::Annulus { .. } => (0..=degree)
            .map(|k| if k == 0 { vec![vec![0]] } else { vec![vec![k as i32], vec![-(k as i32)]] })
            .collect(),
        d => (0..=degree).map(|k| exponents_of_degree(d.dim(), k)).collect(),
    }
}

/// Falling factorial `e (e−1) ⋯ (e−a+1)`.
fn falling(e: i32, a: u32) -> f64 {
    (0..a as i32).map(|j| f64::from(e - j)).product()
}

/// Quadrature provenance of a kernel model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureInfo {
    pub scheme: SamplingScheme,
    pub budget: usize,
    pub seed: u64,
    pub points: usize,
    pub total_weight: f64,
    pub exact_degree: Option<usize>,
}

/// Truncated Bergman kernel `b_d(z, w) = Σ_j f_j(z) conj(f_j(w))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelModel {
    pub version: u32,
    pub domain: DomainSpec,
    pub degree: usize,
    pub seed: u64,
    pub quadrature: QuadratureInfo,
    pub center: Vec<C64>,
    pub scale: Vec<f64>,
    /// Monomial exponents in graded order.
    pub exponents: Vec<Vec<i32>>,
    /// Total degree of each monomial.
    pub degrees: Vec<usize>,
    /// Pairings `⟨v_α, v_β⟩`.
    pub gram: CMatrix,
    /// Column `j` expresses `f_j` in the monomials.
    pub coeffs: CMatrix,
    pub dropped: Vec<usize>,
    /// `block_ends[k]` = number of basis functions of degree at most `k`.
    pub block_ends: Vec<usize>,
}

/// Orthonormalise monomials on `domain` up to total degree `degree`.
///
/// Reinhardt domains use the diagonal Gram matrix (off-diagonal angular integrals vanish);
/// the DFH domain uses the full Monte Carlo Gram matrix.
pub fn build_kernel(domain: &DomainSpec, degree: usize, quad_budget: usize, seed: u64) -> Result<KernelModel> {
    let samples = domain.sample(quad_budget, seed)?;
    build_kernel_from_samples(domain, degree, &samples)
}

pub fn build_kernel_from_samples(domain: &DomainSpec, degree: usize, samples: &SampleSet) -> Result<KernelModel> {
    let n = domain.dim();
    if let Some(exact) = samples.exact_degree {
        if exact < degree {
            return Err(Error::QuadratureBudget(format!(
                "{} quadrature with budget {} integrates degree ≤ {exact} exactly, degree {degree} requested",
                domain, samples.budget
            )));
        }
    }
    let (center, scale) = basis_frame(domain);
    let graded = graded_exponents(domain, degree);
    let exponents: Vec<Vec<i32>> = graded.iter().flatten().cloned().collect();
    let degrees: Vec<usize> = graded.iter().enumerate().flat_map(|(k, b)| std::iter::repeat(k).take(b.len())).collect();
    let m = exponents.len();
    let frame = Frame { center: &center, scale: &scale, exponents: &exponents };
    let factor = pairing_factor(n);

    let mut gram = CMatrix::zeros(m, m);
    if domain.is_reinhardt() {
        let diag: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|a| {
                samples
                    .points
                    .iter()
                    .zip(&samples.weights)
                    .map(|(p, w)| w * frame.monomial(a, p.coords()).norm_sqr())
                    .sum::<f64>()
                    * factor
            })
            .collect();
        for (a, d) in diag.into_iter().enumerate() {
            gram[(a, a)] = C64::new(d, 0.0);
        }
    } else {
        const CHUNK: usize = 512;
        let partials: Vec<CMatrix> = samples
            .points
            .par_chunks(CHUNK)
            .zip(samples.weights.par_chunks(CHUNK))
            .map(|(pts, ws)| {
                let mut v = CMatrix::zeros(m, pts.len());
                let mut vw = CMatrix::zeros(pts.len(), m);
                for (k, (p, w)) in pts.iter().zip(ws).enumerate() {
                    let vals = frame.values(p.coords());
                    for a in 0..m {
                        v[(a, k)] = vals[a];
                        vw[(k, a)] = vals[a].conj() * *w;
                    }
                }
                v * vw
            })
            .collect();
        for p in partials {
            gram += p;
        }
        gram *= C64::new(factor, 0.0);
        gram = (&gram + gram.adjoint()) * C64::new(0.5, 0.0);
    }

    let mut blocks = Vec::new();
    let mut start = 0;
    for b in &graded {
        blocks.push((start..start + b.len()).collect::<Vec<_>>());
        start += b.len();
    }
    let chol = graded_pivoted_cholesky(&gram, &blocks, DROP_TOLERANCE, INDEFINITE_TOLERANCE)?;
    let inv = chol.inverse_adjoint()?;
    let k = chol.kept.len();
    let mut coeffs = CMatrix::zeros(m, k);
    for (a, &row) in chol.kept.iter().enumerate() {
        for j in 0..k {
            coeffs[(row, j)] = inv[(a, j)];
        }
    }
    let block_ends = (0..=degree).map(|d| chol.kept.iter().filter(|&&i| degrees[i] <= d).count()).collect();

    Ok(KernelModel {
        version: MODEL_FORMAT_VERSION,
        domain: domain.clone(),
        degree,
        seed: samples.seed,
        quadrature: QuadratureInfo {
            scheme: samples.scheme,
            budget: samples.budget,
            seed: samples.seed,
            points: samples.len(),
            total_weight: samples.total_weight(),
            exact_degree: samples.exact_degree,
        },
        center,
        scale,
        exponents,
        degrees,
        gram,
        coeffs,
        dropped: chol.dropped,
        block_ends,
    })
}

struct Frame<'a> {
    center: &'a [C64],
    scale: &'a [f64],
    exponents: &'a [Vec<i32>],
}

impl Frame<'_> {
    fn zeta(&self, z: &[C64]) -> Vec<C64> {
        z.iter().zip(self.center).zip(self.scale).map(|((z, c), s)| (z - c) / *s).collect()
    }

    fn monomial(&self, a: usize, z: &[C64]) -> C64 {
        let zeta = self.zeta(z);
        self.exponents[a].iter().zip(&zeta).map(|(e, x)| x.powi(*e)).product()
    }

    fn values(&self, z: &[C64]) -> Vec<C64> {
        self.derivative_values(z, &vec![0; z.len()])
    }

    /// `∂^β v_α(z)` for every monomial.
    fn derivative_values(&self, z: &[C64], beta: &[u32]) -> Vec<C64> {
        let zeta = self.zeta(z);
        self.exponents
            .iter()
            .map(|exps| {
                let mut v = C64::new(1.0, 0.0);
                for i in 0..exps.len() {
                    let (e, b) = (exps[i], beta[i]);
                    if b == 0 {
                        v *= zeta[i].powi(e);
                        continue;
                    }
                    let f = falling(e, b);
                    if f == 0.0 {
                        return C64::new(0.0, 0.0);
                    }
                    v *= zeta[i].powi(e - b as i32) * (f / self.scale[i].powi(b as i32));
                }
                v
            })
            .collect()
    }
}

impl KernelModel {
    fn frame(&self) -> Frame<'_> {
        Frame { center: &self.center, scale: &self.scale, exponents: &self.exponents }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn basis_len(&self) -> usize {
        self.coeffs.ncols()
    }

    fn check_point(&self, z: &ComplexPoint) -> Result<()> {
        if !self.domain.contains(z)? {
            return Err(Error::ExteriorPoint { point: z.to_string(), domain: self.domain.to_string() });
        }
        Ok(())
    }

    /// `∂^β f_j(z)` for the first `count` orthonormal functions.
    fn basis_derivatives(&self, z: &ComplexPoint, beta: &[u32], count: usize) -> Vec<C64> {
        let v = self.frame().derivative_values(z.coords(), beta);
        (0..count)
            .map(|j| {
                let mut acc = C64::new(0.0, 0.0);
                for (a, va) in v.iter().enumerate() {
                    acc += self.coeffs[(a, j)] * va;
                }
                acc
            })
            .collect()
    }

    /// Orthonormal basis values `f_j(z)`.
    pub fn basis_at(&self, z: &ComplexPoint) -> Result<Vec<C64>> {
        self.check_point(z)?;
        Ok(self.basis_derivatives(z, &vec![0; self.dim()], self.basis_len()))
    }

    /// `b_d(z, w)`.
    pub fn kernel_at(&self, z: &ComplexPoint, w: &ComplexPoint) -> Result<C64> {
        self.kernel_derivative(z, &vec![0; self.dim()], w, &vec![0; self.dim()])
    }

    /// `∂_z^α ∂_w̄^β b_d(z, w) = Σ_j ∂^α f_j(z) conj(∂^β f_j(w))`.
    pub fn kernel_derivative(&self, z: &ComplexPoint, alpha: &[u32], w: &ComplexPoint, beta: &[u32]) -> Result<C64> {
        self.check_point(z)?;
        self.check_point(w)?;
        if alpha.len() != self.dim() || beta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: alpha.len().min(beta.len()) });
        }
        let fz = self.basis_derivatives(z, alpha, self.basis_len());
        let fw = self.basis_derivatives(w, beta, self.basis_len());
        Ok(hermitian_sum(&fz, &fw))
    }

    /// Diagonal `b_k(z, z)` of the truncations at every degree `k ≤ d`.
    pub fn diagonal_by_degree(&self, z: &ComplexPoint) -> Result<Vec<f64>> {
        let f = self.basis_at(z)?;
        Ok(self.block_ends.iter().map(|&e| f[..e].iter().map(|c| c.norm_sqr()).sum()).collect())
    }
}

/// `Σ_j a_j conj(b_j)` with the real and imaginary parts formed so that swapping the
/// arguments conjugates the result exactly.
fn hermitian_sum(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.im * y.re - x.re * y.im;
    }
    C64::new(re, im)
}

/// `g_{i\bar j} = ∂_i ∂̄_j log b` at `z`, from `b^{-1} ∂∂̄b − b^{-2} ∂b ∂̄b`.
pub fn bergman_metric_at(model: &KernelModel, z: &ComplexPoint) -> Result<CMatrix> {
    model.check_point(z)?;
    let n = model.dim();
    let k = model.basis_len();
    let f = model.basis_derivatives(z, &vec![0; n], k);
    let df: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            let mut beta = vec![0; n];
            beta[i] = 1;
            model.basis_derivatives(z, &beta, k)
        })
        .collect();
    let b: f64 = f.iter().map(|c| c.norm_sqr()).sum();
    if !(b > 1e-300) || !b.is_finite() {
        return Err(Error::KernelVanishes(b));
    }
    let db: Vec<C64> = df.iter().map(|d| hermitian_sum(d, &f)).collect();
    let g = CMatrix::from_fn(n, n, |i, j| {
        let ddb = hermitian_sum(&df[i], &df[j]);
        ddb / b - db[i] * db[j].conj() / (b * b)
    });
    let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    if g.clone().cholesky().is_none() {
        return Err(Error::MetricDegenerate(format!("Bergman metric at {z} (degree {})", model.degree)));
    }
    Ok(g)
}

/// The Bergman metric of a kernel model as a metric field.
#[derive(Clone, Debug)]
pub struct BergmanMetric {
    model: Arc<KernelModel>,
}

impl BergmanMetric {
    pub fn new(model: KernelModel) -> Self {
        Self { model: Arc::new(model) }
    }

    pub fn model(&self) -> &KernelModel {
        &self.model
    }
}

impl MetricField for BergmanMetric {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
        bergman_metric_at(&self.model, z)
    }

    fn regularity_radius(&self) -> f64 {
        self.model.scale.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
        self.model.domain.boundary_distance(z).ok()
    }

    fn name(&self) -> String {
        format!("bergman({}, degree {})", self.model.domain, self.model.degree)
    }
}

/// Growth of `sup_{E×E} |∂^α ∂̄^β b|` across a family of domains.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InteriorEstimate {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    /// `dist(E, ∂Ω)` for each model.
    pub distances: Vec<f64>,
    pub sups: Vec<f64>,
    /// Least-squares slope of `log sup` against `log(1/dist)`; `None` for fewer than two models.
    pub slope: Option<f64>,
    /// `2n + |α| + |β|`.
    pub predicted_exponent: f64,
    pub within_bound: bool,
}

pub const SLOPE_FIT_TOLERANCE: f64 = 0.05;

pub fn interior_estimate_probe(
    family: &[KernelModel],
    alpha: &[u32],
    beta: &[u32],
    probe: &[ComplexPoint],
) -> Result<InteriorEstimate> {
    if family.is_empty() || probe.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = family[0].dim();
    let mut distances = Vec::with_capacity(family.len());
    let mut sups = Vec::with_capacity(family.len());
    for model in family {
        let dist = probe
            .iter()
            .map(|p| model.domain.boundary_distance(p))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let mut sup = 0.0f64;
        for z in probe {
            for w in probe {
                sup = sup.max(model.kernel_derivative(z, alpha, w, beta)?.norm());
            }
        }
        distances.push(dist);
        sups.push(sup);
    }
    let order: u32 = alpha.iter().chain(beta).sum();
    let predicted = (2 * n) as f64 + f64::from(order);
    let slope = (family.len() >= 2).then(|| {
        let xs: Vec<f64> = distances.iter().map(|d| -d.ln()).collect();
        let ys: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
        least_squares_slope(&xs, &ys)
    });
    let within_bound = slope.is_none_or(|s| s <= predicted + SLOPE_FIT_TOLERANCE);
    Ok(InteriorEstimate { alpha: alpha.to_vec(), beta: beta.to_vec(), distances, sups, slope, predicted_exponent: predicted, within_bound })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Convergence of `b_k(z, z)` in the truncation degree `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruncationReport {
    pub diagonal: Vec<f64>,
    /// `b_d(z,z) − b_{⌊d/2⌋}(z,z)`.
    pub cauchy_difference: f64,
    /// Estimated `b_∞(z,z) − b_d(z,z)` from the geometric decay of the last increments.
    pub tail_estimate: f64,
    /// Truncation degree beyond which every increment is below `target`.
    pub recommended_degree: usize,
    pub target: f64,
}

pub const TRUNCATION_TARGET: f64 = 1e-8;

pub fn truncation_report(model: &KernelModel, z: &ComplexPoint) -> Result<TruncationReport> {
    let diag = model.diagonal_by_degree(z)?;
    let d = model.degree;
    let target = TRUNCATION_TARGET;
    let scale = diag.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let increments: Vec<f64> = (0..=d).map(|k| if k == 0 { diag[0] } else { diag[k] - diag[k - 1] }).collect();
    if let Some(k) = increments.iter().skip(1).position(|&x| x < -1e-12 * scale) {
        return Err(Error::Internal(format!("Bergman diagonal decreases at degree {}", k + 1)));
    }
    let cauchy_difference = diag[d] - diag[d / 2];
    let last = increments[d].max(0.0);
    let ratio = if d >= 1 && increments[d - 1] > 0.0 { last / increments[d - 1] } else { 0.0 };
    let (tail_estimate, recommended_degree) = if last < target {
        let rec = increments.iter().rposition(|&x| x >= target).unwrap_or(0);
        let tail = if ratio < 1.0 { last * ratio / (1.0 - ratio) } else { last };
        (tail, rec.min(d))
    } else if ratio > 0.0 && ratio < 1.0 {
        let extra = ((target / last).ln() / ratio.ln()).ceil() as usize;
        (last * ratio / (1.0 - ratio), d + extra)
    } else {
        (f64::INFINITY, usize::MAX)
    };
    Ok(TruncationReport { diagonal: diag, cauchy_difference, tail_estimate, recommended_degree, target })
}

impl KernelModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: KernelModel = serde_json::from_str(s)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!("kernel model version {} (expected {MODEL_FORMAT_VERSION})", m.version)));
        }
        Ok(m)
    }

    /// `‖Cᴴ G C − I‖_max`.
    pub fn reconstruction_error(&self) -> f64 {
        let k = self.basis_len();
        let r = self.coeffs.adjoint() * &self.gram * &self.coeffs - CMatrix::identity(k, k);
        r.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p1(re: f64, im: f64) -> ComplexPoint {
        ComplexPoint::scalar(C64::new(re, im)).unwrap()
    }

    fn disk(degree: usize) -> KernelModel {
        let d = DomainSpec::unit_disk();
        build_kernel(&d, degree, default_budget(&d, degree), 1).unwrap()
    }

    #[test]
    fn disk_gram_is_closed_form() {
        let m = disk(10);
        for j in 0..=10 {
            let g = m.gram[(j, j)].re;
            assert!((g - 2.0 * PI / (j as f64 + 1.0)).abs() < 1e-12, "j = {j}: {g}");
        }
        assert!(m.reconstruction_error() < 1e-8);
    }

    #[test]
    fn kernel_examples_on_disk() {
        let m = disk(40);
        let b0 = m.kernel_at(&p1(0.0, 0.0), &p1(0.0, 0.0)).unwrap();
        assert!((b0.re - 1.0 / (2.0 * PI)).abs() < 1e-13 && b0.im == 0.0);
        let b = m.kernel_at(&p1(0.5, 0.0), &p1(0.5, 0.0)).unwrap();
        assert!((b.re - 8.0 / (9.0 * PI)).abs() < 1e-6);
        let (z, w) = (p1(0.3, -0.2), p1(-0.1, 0.6));
        assert_eq!(m.kernel_at(&z, &w).unwrap().conj(), m.kernel_at(&w, &z).unwrap());
        // off-diagonal closed form 1/(2π(1 − z w̄)²)
        let zw = C64::new(0.3, -0.2) * C64::new(-0.1, 0.6).conj();
        let exact = (C64::new(1.0, 0.0) - zw).powi(-2) / (2.0 * PI);
        assert!((m.kernel_at(&z, &w).unwrap() - exact).norm() < 1e-12);
    }

    #[test]
    fn bergman_metric_on_disk() {
        let m = disk(40);
        let g0 = bergman_metric_at(&m, &p1(0.0, 0.0)).unwrap()[(0, 0)].re;
        assert!((g0 - 2.0).abs() < 1e-12);
        let g = bergman_metric_at(&m, &p1(0.5, 0.0)).unwrap()[(0, 0)].re;
        assert!((g - 32.0 / 9.0).abs() < 1e-6);
    }

    #[test]
    fn polydisk_degree_one_monomials_orthogonal() {
        let d = DomainSpec::polydisk(vec![1.0, 1.0]).unwrap();
        let m = build_kernel(&d, 1, default_budget(&d, 1), 0).unwrap();
        assert_eq!(m.basis_len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.gram[(i, j)].norm(), 0.0);
                }
            }
        }
        // product of the disk kernels 1/(2π(1 − |z_i|²)²)
        let m = build_kernel(&d, 12, default_budget(&d, 12), 0).unwrap();
        let z = ComplexPoint::new(vec![C64::new(0.2, 0.1), C64::new(-0.1, 0.0)]).unwrap();
        let exact: f64 = z.coords().iter().map(|c| 1.0 / (2.0 * PI * (1.0 - c.norm_sqr()).powi(2))).product();
        assert!((m.kernel_at(&z, &z).unwrap().re - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn ball_kernel_matches_closed_form() {
        // b(z,z) = n!/(2ⁿ πⁿ (1 − |z|²)^{n+1}) on the unit ball
        let d = DomainSpec::ball(1.0, 2).unwrap();
        let m = build_kernel(&d, 12, default_budget(&d, 12), 0).unwrap();
        let z = ComplexPoint::new(vec![C64::new(0.2, 0.1), C64::new(-0.1, 0.05)]).unwrap();
        let exact = 2.0 / (4.0 * PI * PI * (1.0 - z.norm_sqr()).powi(3));
        assert!((m.kernel_at(&z, &z).unwrap().re - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn punctured_disk_matches_disk() {
        let d = DomainSpec::PuncturedDisk;
        let pd = build_kernel(&d, 40, default_budget(&d, 40), 1).unwrap();
        let dk = disk(40);
        for j in 0..=40 {
            assert!((pd.gram[(j, j)].re - dk.gram[(j, j)].re).abs() < 1e-12 * dk.gram[(j, j)].re);
        }
        let z = p1(0.3, 0.0);
        let a = bergman_metric_at(&pd, &z).unwrap()[(0, 0)].re;
        let b = bergman_metric_at(&dk, &z).unwrap()[(0, 0)].re;
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn undersized_budget_is_rejected() {
        let d = DomainSpec::unit_disk();
        assert!(matches!(build_kernel(&d, 40, 100, 0), Err(Error::QuadratureBudget(_))));
    }

    #[test]
    fn diagonal_is_monotone_in_degree() {
        let m = disk(20);
        let diag = m.diagonal_by_degree(&p1(0.6, 0.3)).unwrap();
        assert!(diag.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn truncation_examples() {
        let m = disk(40);
        let r0 = truncation_report(&m, &p1(0.0, 0.0)).unwrap();
        assert_eq!(r0.recommended_degree, 0);
        assert_eq!(r0.tail_estimate, 0.0);
        let r = truncation_report(&m, &p1(0.9, 0.0)).unwrap();
        assert!(r.recommended_degree >= 88, "{}", r.recommended_degree);
    }

    #[test]
    fn interior_estimate_slopes() {
        let family: Vec<KernelModel> = [1.0, 0.5, 0.25, 0.125]
            .iter()
            .map(|&r| {
                let d = DomainSpec::ball(r, 1).unwrap();
                build_kernel(&d, 10, default_budget(&d, 10), 0).unwrap()
            })
            .collect();
        let e = [ComplexPoint::origin(1)];
        let s0 = interior_estimate_probe(&family, &[0], &[0], &e).unwrap();
        assert!((s0.slope.unwrap() - 2.0).abs() < 1e-8);
        let s1 = interior_estimate_probe(&family, &[1], &[1], &e).unwrap();
        assert!((s1.slope.unwrap() - 4.0).abs() < 1e-8);
        assert!(s0.within_bound && s1.within_bound);
        let odd = family[0].kernel_derivative(&e[0], &[1], &e[0], &[0]).unwrap();
        assert_eq!(odd.norm(), 0.0);
    }

    #[test]
    fn annulus_kernel_is_hermitian_positive() {
        let d = DomainSpec::annulus(0.2, 1.0).unwrap();
        let m = build_kernel(&d, 10, default_budget(&d, 10), 0).unwrap();
        assert!(m.reconstruction_error() < 1e-8);
        let z = p1(0.5, 0.1);
        let g = bergman_metric_at(&m, &z).unwrap();
        assert!(g[(0, 0)].re > 0.0);
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let m = disk(12);
        let back = KernelModel::from_json(&m.to_json().unwrap()).unwrap();
        let (z, w) = (p1(0.31, 0.2), p1(-0.4, 0.05));
        assert_eq!(m.kernel_at(&z, &w).unwrap(), back.kernel_at(&z, &w).unwrap());
    }
}
