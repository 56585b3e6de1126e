//! Model domains in `C^n`: membership, boundary distance and reproducible quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ComplexPoint, C64};
use crate::quadrature::gauss_legendre_on;
use crate::rng::{self, streams};
use crate::simplex::NelderMead;

/// A model domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DomainSpec {
    /// `{|z| < r}` in `C^n`.
    Ball { radius: f64, dim: usize },
    /// `{|z_i| < r_i for all i}`.
    Polydisk { radii: Vec<f64> },
    /// The unit disk without its centre.
    PuncturedDisk,
    /// `{r_in < |z| < r_out}` in `C`.
    Annulus { inner: f64, outer: f64 },
    /// `{Re z₁ + |z₁|² + |z₂|¹² + |z₃|¹² + |z₂|⁴|z₃|² + |z₂|²|z₃|⁶ < 0}` in `C³`.
    DfhOmega,
}

/// Bounding box of the DFH domain in real coordinates `(x₁, y₁, x₂, y₂, x₃, y₃)`.
///
/// Every term of the defining function other than `Re z₁` is nonnegative, so a point of
/// the domain has `Re z₁ + |z₁|² < 0` (hence `-1 < Re z₁ < 0`, `|Im z₁| < 1`) and each
/// remaining term is below `-Re z₁ < 1`.
pub const DFH_BOX: [(f64, f64); 6] = [(-1.0, 0.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)];

/// Defining function of the DFH domain.
pub fn dfh_rho(z: &[C64]) -> f64 {
    let a = z[1].norm_sqr();
    let b = z[2].norm_sqr();
    z[0].re + z[0].norm_sqr() + a.powi(6) + b.powi(6) + a * a * b + a * b.powi(3)
}

fn dfh_rho_real(p: &[f64; 6]) -> f64 {
    let a = p[2] * p[2] + p[3] * p[3];
    let b = p[4] * p[4] + p[5] * p[5];
    p[0] + p[0] * p[0] + p[1] * p[1] + a.powi(6) + b.powi(6) + a * a * b + a * b.powi(3)
}

fn dfh_grad_real(p: &[f64; 6]) -> [f64; 6] {
    let a = p[2] * p[2] + p[3] * p[3];
    let b = p[4] * p[4] + p[5] * p[5];
    let da = 6.0 * a.powi(5) + 2.0 * a * b + b.powi(3);
    let db = 6.0 * b.powi(5) + a * a + 3.0 * a * b * b;
    [1.0 + 2.0 * p[0], 2.0 * p[1], 2.0 * da * p[2], 2.0 * da * p[3], 2.0 * db * p[4], 2.0 * db * p[5]]
}

fn to_real6(z: &ComplexPoint) -> [f64; 6] {
    let c = z.coords();
    [c[0].re, c[0].im, c[1].re, c[1].im, c[2].re, c[2].im]
}

fn from_real(p: &[f64]) -> ComplexPoint {
    ComplexPoint::new(p.chunks(2).map(|c| C64::new(c[0], c[1])).collect()).expect("finite coordinates")
}

impl DomainSpec {
    pub fn unit_disk() -> Self {
        DomainSpec::Ball { radius: 1.0, dim: 1 }
    }

    pub fn ball(radius: f64, dim: usize) -> Result<Self> {
        Self::Ball { radius, dim }.validated()
    }

    pub fn polydisk(radii: Vec<f64>) -> Result<Self> {
        Self::Polydisk { radii }.validated()
    }

    pub fn annulus(inner: f64, outer: f64) -> Result<Self> {
        Self::Annulus { inner, outer }.validated()
    }

    fn validated(self) -> Result<Self> {
        let ok = match &self {
            DomainSpec::Ball { radius, dim } => *radius > 0.0 && radius.is_finite() && *dim >= 1,
            DomainSpec::Polydisk { radii } => !radii.is_empty() && radii.iter().all(|r| *r > 0.0 && r.is_finite()),
            DomainSpec::Annulus { inner, outer } => *inner > 0.0 && inner < outer && outer.is_finite(),
            DomainSpec::PuncturedDisk | DomainSpec::DfhOmega => true,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidInput(format!("invalid domain parameters: {self:?}")))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Ball { dim, .. } => *dim,
            DomainSpec::Polydisk { radii } => radii.len(),
            DomainSpec::PuncturedDisk | DomainSpec::Annulus { .. } => 1,
            DomainSpec::DfhOmega => 3,
        }
    }

    /// True for domains invariant under `z ↦ (e^{iθ₁}z₁, …, e^{iθₙ}zₙ)`.
    pub fn is_reinhardt(&self) -> bool {
        !matches!(self, DomainSpec::DfhOmega)
    }

    /// Closed-form Lebesgue volume where one exists.
    pub fn volume(&self) -> Option<f64> {
        match self {
            DomainSpec::Ball { radius, dim } => {
                let n = *dim as i32;
                let fact: f64 = (1..=*dim).map(|k| k as f64).product();
                Some(PI.powi(n) * radius.powi(2 * n) / fact)
            }
            DomainSpec::Polydisk { radii } => Some(radii.iter().map(|r| PI * r * r).product()),
            DomainSpec::PuncturedDisk => Some(PI),
            DomainSpec::Annulus { inner, outer } => Some(PI * (outer * outer - inner * inner)),
            DomainSpec::DfhOmega => None,
        }
    }

    fn check_dim(&self, z: &ComplexPoint) -> Result<()> {
        if z.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.dim() });
        }
        Ok(())
    }

    /// Strict membership; boundary points are outside.
    pub fn contains(&self, z: &ComplexPoint) -> Result<bool> {
        self.check_dim(z)?;
        Ok(self.contains_unchecked(z.coords()))
    }

    fn contains_unchecked(&self, c: &[C64]) -> bool {
        match self {
            DomainSpec::Ball { radius, .. } => c.iter().map(|x| x.norm_sqr()).sum::<f64>() < radius * radius,
            DomainSpec::Polydisk { radii } => c.iter().zip(radii).all(|(x, r)| x.norm_sqr() < r * r),
            DomainSpec::PuncturedDisk => {
                let s = c[0].norm_sqr();
                s > 0.0 && s < 1.0
            }
            DomainSpec::Annulus { inner, outer } => {
                let r = c[0].norm();
                r > *inner && r < *outer
            }
            DomainSpec::DfhOmega => dfh_rho(c) < 0.0,
        }
    }

    fn exterior(&self, z: &ComplexPoint) -> Error {
        Error::ExteriorPoint { point: z.to_string(), domain: self.to_string() }
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn boundary_distance(&self, z: &ComplexPoint) -> Result<f64> {
        if !self.contains(z)? {
            return Err(self.exterior(z));
        }
        let c = z.coords();
        Ok(match self {
            DomainSpec::Ball { radius, .. } => radius - z.norm(),
            DomainSpec::Polydisk { radii } => {
                c.iter().zip(radii).map(|(x, r)| r - x.norm()).fold(f64::INFINITY, f64::min)
            }
            DomainSpec::PuncturedDisk => {
                let r = c[0].norm();
                r.min(1.0 - r)
            }
            DomainSpec::Annulus { inner, outer } => {
                let r = c[0].norm();
                (r - inner).min(outer - r)
            }
            DomainSpec::DfhOmega => dfh_distance(z)?.distance,
        })
    }

    /// `count` points on the boundary, reproducible from `seed`.
    pub fn boundary_points(&self, count: usize, seed: u64) -> Vec<ComplexPoint> {
        let mut rng = rng::stream(seed, streams::BOUNDARY);
        let n = self.dim();
        let unit_sphere = |rng: &mut rand_chacha::ChaCha8Rng, dim: usize| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    return v.into_iter().map(|x| x / norm).collect();
                }
            }
        };
        let angle = |rng: &mut rand_chacha::ChaCha8Rng, r: f64| C64::from_polar(r, rng.random::<f64>() * 2.0 * PI);
        (0..count)
            .map(|k| match self {
                DomainSpec::Ball { radius, .. } => {
                    let u = unit_sphere(&mut rng, 2 * n);
                    from_real(&u.iter().map(|x| x * radius).collect::<Vec<_>>())
                }
                DomainSpec::Polydisk { radii } => {
                    let on = rng.random_range(0..n);
                    let coords = radii
                        .iter()
                        .enumerate()
                        .map(|(i, r)| {
                            let radius = if i == on { *r } else { r * rng.random::<f64>().sqrt() };
                            angle(&mut rng, radius)
                        })
                        .collect();
                    ComplexPoint::new(coords).expect("finite")
                }
                DomainSpec::PuncturedDisk => {
                    if k == 0 {
                        ComplexPoint::origin(1)
                    } else {
                        ComplexPoint::new(vec![angle(&mut rng, 1.0)]).expect("finite")
                    }
                }
                DomainSpec::Annulus { inner, outer } => {
                    let r = if rng.random::<bool>() { *inner } else { *outer };
                    ComplexPoint::new(vec![angle(&mut rng, r)]).expect("finite")
                }
                DomainSpec::DfhOmega => {
                    let centre = [-0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
                    loop {
                        let u = unit_sphere(&mut rng, 6);
                        let u6 = [u[0], u[1], u[2], u[3], u[4], u[5]];
                        if let Some(t) = ray_root(&centre, &u6, 4.0) {
                            let p: Vec<f64> = (0..6).map(|i| centre[i] + t * u6[i]).collect();
                            break from_real(&p);
                        }
                    }
                }
            })
            .collect()
    }

    /// Quadrature points and weights, deterministic in `(budget, seed)`.
    ///
    /// Reinhardt domains use Gauss-Legendre in the radial variables times a trapezoid rule in
    /// the angles (the seed only rotates the angular grid); the DFH domain and balls in
    /// dimension ≥ 3 use scrambled Sobol points with rejection and uniform weights.
    pub fn sample(&self, budget: usize, seed: u64) -> Result<SampleSet> {
        if budget == 0 {
            return Err(Error::InvalidInput("sample budget must be at least 1".into()));
        }
        let mut rng = rng::stream(seed, streams::SAMPLING);
        let (points, weights, scheme, exact) = match self {
            DomainSpec::Ball { radius, dim: 1 } => {
                let rule = DiskRule::new(budget, RadialMap::Linear { lo: 0.0, hi: *radius }, &mut rng);
                let exact = rule.n_r - 1;
                let (p, w) = rule.points();
                (p, w, SamplingScheme::TensorGaussRadial, Some(exact))
            }
            DomainSpec::PuncturedDisk => {
                let rule = DiskRule::new(budget, RadialMap::Squared, &mut rng);
                let exact = rule.n_r.saturating_sub(2) / 2;
                let (p, w) = rule.points();
                (p, w, SamplingScheme::TensorGaussRadial, (rule.n_r >= 2).then_some(exact))
            }
            DomainSpec::Annulus { inner, outer } => {
                let rule = DiskRule::new(budget, RadialMap::Linear { lo: *inner, hi: *outer }, &mut rng);
                let (p, w) = rule.points();
                (p, w, SamplingScheme::TensorGaussRadial, None)
            }
            DomainSpec::Ball { radius, dim: 2 } => {
                let (p, w, exact) = ball2_rule(*radius, budget, &mut rng);
                (p, w, SamplingScheme::TensorGaussRadial, Some(exact))
            }
            DomainSpec::Polydisk { radii } => {
                let per = (((budget as f64).powf(1.0 / radii.len() as f64) + 1e-9).floor() as usize).max(1);
                let factors: Vec<DiskRule> = radii
                    .iter()
                    .map(|r| DiskRule::new(per, RadialMap::Linear { lo: 0.0, hi: *r }, &mut rng))
                    .collect();
                let exact = factors.iter().map(|f| f.n_r - 1).min().unwrap_or(0);
                let (p, w) = tensor_product(&factors);
                (p, w, SamplingScheme::TensorGaussRadial, Some(exact))
            }
            DomainSpec::Ball { radius, dim } => {
                let r = *radius;
                let bbox = vec![(-r, r); 2 * dim];
                let scramble: u32 = rng::stream(seed, streams::SOBOL_SCRAMBLE).random();
                let (p, w) = sobol_rejection(self, &bbox, budget, scramble);
                (p, w, SamplingScheme::SobolRejection, None)
            }
            DomainSpec::DfhOmega => {
                let scramble: u32 = rng::stream(seed, streams::SOBOL_SCRAMBLE).random();
                let (p, w) = sobol_rejection(self, &DFH_BOX, budget, scramble);
                (p, w, SamplingScheme::SobolRejection, None)
            }
        };
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        Ok(SampleSet { domain: self.to_string(), points, weights, seed, budget, scheme, exact_degree: exact })
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    TensorGaussRadial,
    SobolRejection,
}

/// Quadrature nodes with Lebesgue-volume weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub domain: String,
    pub points: Vec<ComplexPoint>,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub budget: usize,
    pub scheme: SamplingScheme,
    /// Largest total degree `d` such that `∫ |z^α|² dV` is integrated exactly for `|α| ≤ d`.
    pub exact_degree: Option<usize>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_k f(z_k)`.
    pub fn integrate<F: Fn(&ComplexPoint) -> f64 + Sync>(&self, f: F) -> f64 {
        let vals: Vec<f64> = self.points.par_iter().zip(&self.weights).map(|(p, w)| w * f(p)).collect();
        vals.iter().sum()
    }

    /// Little-endian dump of every coordinate and weight, for byte-level reproducibility checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * 8 * (2 * 3 + 1));
        for (p, w) in self.points.iter().zip(&self.weights) {
            for c in p.coords() {
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }
}

#[derive(Clone, Copy)]
enum RadialMap {
    Linear { lo: f64, hi: f64 },
    /// `r = ρ²` on the unit disk, clustering nodes away from the centre.
    Squared,
}

/// Gauss-Legendre radius × trapezoid angle on a disk or annulus.
struct DiskRule {
    n_r: usize,
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    angles: Vec<f64>,
}

impl DiskRule {
    fn new(budget: usize, map: RadialMap, rng: &mut impl Rng) -> Self {
        let n_r = ((budget as f64).sqrt().ceil() as usize).clamp(1, budget);
        let n_theta = (budget / n_r).max(1);
        let (radii, radial_weights) = match map {
            RadialMap::Linear { lo, hi } => {
                let (x, w) = gauss_legendre_on(n_r, lo, hi);
                let rw = x.iter().zip(&w).map(|(r, w)| r * w).collect();
                (x, rw)
            }
            RadialMap::Squared => {
                let (rho, w) = gauss_legendre_on(n_r, 0.0, 1.0);
                // dA = r dr dθ with r = ρ², dr = 2ρ dρ
                let radii = rho.iter().map(|p| p * p).collect();
                let rw = rho.iter().zip(&w).map(|(p, w)| 2.0 * p.powi(3) * w).collect();
                (radii, rw)
            }
        };
        let step = 2.0 * PI / n_theta as f64;
        let phase = rng.random::<f64>() * step;
        let angles = (0..n_theta).map(|j| phase + step * j as f64).collect();
        Self { n_r, radii, radial_weights, angles }
    }

    fn nodes(&self) -> Vec<(C64, f64)> {
        let dtheta = 2.0 * PI / self.angles.len() as f64;
        let mut out = Vec::with_capacity(self.radii.len() * self.angles.len());
        for (r, wr) in self.radii.iter().zip(&self.radial_weights) {
            for a in &self.angles {
                out.push((C64::from_polar(*r, *a), wr * dtheta));
            }
        }
        out
    }

    fn points(&self) -> (Vec<ComplexPoint>, Vec<f64>) {
        self.nodes().into_iter().map(|(z, w)| (ComplexPoint::new(vec![z]).expect("finite"), w)).unzip()
    }
}

fn tensor_product(factors: &[DiskRule]) -> (Vec<ComplexPoint>, Vec<f64>) {
    let mut acc: Vec<(Vec<C64>, f64)> = vec![(Vec::new(), 1.0)];
    for f in factors {
        let nodes = f.nodes();
        acc = acc
            .into_iter()
            .flat_map(|(coords, w)| {
                nodes.iter().map(move |(z, wz)| {
                    let mut c = coords.clone();
                    c.push(*z);
                    (c, w * wz)
                })
            })
            .collect();
    }
    acc.into_iter().map(|(c, w)| (ComplexPoint::new(c).expect("finite"), w)).unzip()
}

/// Ball in `C²` through `z₁ = ρ√t e^{iθ₁}`, `z₂ = ρ√(1−t) e^{iθ₂}` with `dV = ρ³/2 dρ dt dθ₁ dθ₂`.
fn ball2_rule(radius: f64, budget: usize, rng: &mut impl Rng) -> (Vec<ComplexPoint>, Vec<f64>, usize) {
    let k = (((budget as f64).powf(0.25) - 1e-9).ceil() as usize).max(1);
    let n_theta = (((budget / (k * k)) as f64).sqrt().floor() as usize).max(1);
    let (rho, wrho) = gauss_legendre_on(k, 0.0, radius);
    let (t, wt) = gauss_legendre_on(k, 0.0, 1.0);
    let step = 2.0 * PI / n_theta as f64;
    let phase1 = rng.random::<f64>() * step;
    let phase2 = rng.random::<f64>() * step;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (p, wp) in rho.iter().zip(&wrho) {
        for (tt, wtt) in t.iter().zip(&wt) {
            let (r1, r2) = (p * tt.sqrt(), p * (1.0 - tt).sqrt());
            let w = wp * wtt * p.powi(3) / 2.0 * step * step;
            for a in 0..n_theta {
                for b in 0..n_theta {
                    let z1 = C64::from_polar(r1, phase1 + step * a as f64);
                    let z2 = C64::from_polar(r2, phase2 + step * b as f64);
                    points.push(ComplexPoint::new(vec![z1, z2]).expect("finite"));
                    weights.push(w);
                }
            }
        }
    }
    // ρ^{2|α|+3} needs k ≥ |α| + 2; t^a (1−t)^b needs 2k − 1 ≥ |α|
    let exact = (k.saturating_sub(2)).min(2 * k - 1);
    (points, weights, exact)
}

fn sobol_rejection(
    domain: &DomainSpec,
    bbox: &[(f64, f64)],
    budget: usize,
    scramble: u32,
) -> (Vec<ComplexPoint>, Vec<f64>) {
    let box_volume: f64 = bbox.iter().map(|(lo, hi)| hi - lo).product();
    let weight = box_volume / budget as f64;
    let dims = bbox.len() as u32;
    let accepted: Vec<ComplexPoint> = (0..budget as u32)
        .into_par_iter()
        .filter_map(|i| {
            // the generator addresses 2^16 points per scramble seed; longer runs chain
            // independently scrambled blocks
            let block = i >> 16;
            let seed = scramble ^ block.wrapping_mul(0x9e37_79b9);
            let p: Vec<f64> = (0..dims)
                .map(|d| {
                    let (lo, hi) = bbox[d as usize];
                    lo + (hi - lo) * f64::from(sobol_burley::sample(i & 0xffff, d, seed))
                })
                .collect();
            let z = from_real(&p);
            domain.contains_unchecked(z.coords()).then_some(z)
        })
        .collect();
    let weights = vec![weight; accepted.len()];
    (accepted, weights)
}

/// Nearest boundary point of the DFH domain found by ray search plus local refinement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DistanceCertificate {
    pub distance: f64,
    /// Boundary point realising `distance` (defining function zero to bisection accuracy).
    pub witness: ComplexPoint,
    /// `1 − |cos|` of the angle between the search ray and the boundary normal at the witness.
    pub kkt_residual: f64,
    pub tolerance: f64,
}

/// First `t ∈ (0, cap]` with `ρ(z + t u) ≥ 0`.
fn ray_root(z: &[f64; 6], u: &[f64; 6], cap: f64) -> Option<f64> {
    let at = |t: f64| {
        let mut p = [0.0; 6];
        for i in 0..6 {
            p[i] = z[i] + t * u[i];
        }
        dfh_rho_real(&p)
    };
    let steps = 256;
    let h = cap / steps as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=steps {
        let t = h * k as f64;
        if at(t) >= 0.0 {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn normalise6(v: &[f64]) -> Option<[f64; 6]> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 1e-300) {
        return None;
    }
    let mut u = [0.0; 6];
    for i in 0..6 {
        u[i] = v[i] / n;
    }
    Some(u)
}

/// Distance from an interior point to the boundary of the DFH domain.
pub fn dfh_distance(z: &ComplexPoint) -> Result<DistanceCertificate> {
    if z.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: z.dim() });
    }
    if !(dfh_rho(z.coords()) < 0.0) {
        return Err(Error::ExteriorPoint { point: z.to_string(), domain: "dfh_omega".into() });
    }
    let p = to_real6(z);
    let mut rng = rng::stream(0x5eed, streams::BOUNDARY);
    let mut dirs: Vec<[f64; 6]> = Vec::new();
    for i in 0..6 {
        for s in [1.0, -1.0] {
            let mut u = [0.0; 6];
            u[i] = s;
            dirs.push(u);
        }
    }
    for _ in 0..2048 {
        let v: Vec<f64> = (0..6).map(|_| gaussian(&mut rng)).collect();
        if let Some(u) = normalise6(&v) {
            dirs.push(u);
        }
    }

    // the box diameter bounds every root
    let mut cap = 4.0;
    let mut found: Vec<(f64, [f64; 6])> = Vec::new();
    for u in &dirs {
        if let Some(t) = ray_root(&p, u, cap) {
            cap = cap.min(2.0 * t);
            found.push((t, *u));
        }
    }
    if found.is_empty() {
        return Err(Error::Internal("no boundary point found along any ray".into()));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));

    let nm = NelderMead { max_evals: 3000, f_tol: 1e-15, x_tol: 1e-9, initial_step: 0.05 };
    let mut best = found[0];
    for (t0, u0) in found.iter().take(6) {
        let cap = 1.5 * t0;
        let m = nm.minimize(
            |v| normalise6(v).and_then(|u| ray_root(&p, &u, cap)).unwrap_or(f64::INFINITY),
            u0,
        );
        if let Some(u) = normalise6(&m.x) {
            if let Some(t) = ray_root(&p, &u, cap) {
                if t < best.0 {
                    best = (t, u);
                }
            }
        }
    }
    let (t, u) = best;
    let mut w = [0.0; 6];
    for i in 0..6 {
        w[i] = p[i] + t * u[i];
    }
    let grad = dfh_grad_real(&w);
    let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = grad.iter().zip(&u).map(|(g, u)| g * u).sum::<f64>() / gnorm;
    Ok(DistanceCertificate { distance: t, witness: from_real(&w), kkt_residual: 1.0 - cos.abs(), tolerance: 1e-6 })
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainSpec::Ball { radius, dim } => write!(f, "ball:r={radius},n={dim}"),
            DomainSpec::Polydisk { radii } => {
                let parts: Vec<String> = radii.iter().map(|r| r.to_string()).collect();
                write!(f, "polydisk:{}", parts.join(","))
            }
            DomainSpec::PuncturedDisk => write!(f, "punctured_disk"),
            DomainSpec::Annulus { inner, outer } => write!(f, "annulus:{inner},{outer}"),
            DomainSpec::DfhOmega => write!(f, "dfh_omega"),
        }
    }
}

fn parse_number(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Parse(format!("bad {what} '{s}'")))
}

impl FromStr for DomainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, args) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s, None),
        };
        fn list(a: Option<&str>) -> Vec<&str> {
            a.map(|a| a.split(',').map(str::trim).filter(|p| !p.is_empty()).collect()).unwrap_or_default()
        }
        let spec = match kind {
            "ball" | "disk" => {
                let mut radius = 1.0;
                let mut dim = 1usize;
                for (i, part) in list(args).into_iter().enumerate() {
                    match part.split_once('=') {
                        Some(("r", v)) => radius = parse_number(v, "radius")?,
                        Some(("n", v)) => {
                            dim = v.trim().parse().map_err(|_| Error::Parse(format!("bad dimension '{v}'")))?
                        }
                        Some((k, _)) => return Err(Error::Parse(format!("unknown {kind} parameter '{k}'"))),
                        None if i == 0 => radius = parse_number(part, "radius")?,
                        None => return Err(Error::Parse(format!("unexpected {kind} argument '{part}'"))),
                    }
                }
                if kind == "disk" && dim != 1 {
                    return Err(Error::Parse("a disk has n = 1; use ball:r=..,n=..".into()));
                }
                DomainSpec::Ball { radius, dim }
            }
            "polydisk" => {
                let radii = list(args).into_iter().map(|p| parse_number(p, "radius")).collect::<Result<Vec<_>>>()?;
                if radii.is_empty() {
                    return Err(Error::Parse("polydisk needs at least one radius, e.g. polydisk:1,1".into()));
                }
                DomainSpec::Polydisk { radii }
            }
            "punctured_disk" if args.is_none() => DomainSpec::PuncturedDisk,
            "annulus" => {
                let parts = list(args);
                if parts.len() != 2 {
                    return Err(Error::Parse("annulus needs two radii, e.g. annulus:0.2,1".into()));
                }
                DomainSpec::Annulus { inner: parse_number(parts[0], "radius")?, outer: parse_number(parts[1], "radius")? }
            }
            "dfh_omega" if args.is_none() => DomainSpec::DfhOmega,
            _ => return Err(Error::Parse(format!("unknown domain '{s}'"))),
        };
        spec.validated().map_err(|e| Error::Parse(e.to_string()))
    }
}

impl From<DomainSpec> for String {
    fn from(d: DomainSpec) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for DomainSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[(f64, f64)]) -> ComplexPoint {
        ComplexPoint::new(c.iter().map(|&(a, b)| C64::new(a, b)).collect()).unwrap()
    }

    #[test]
    fn grammar_round_trips() {
        for s in ["ball:r=1,n=2", "polydisk:1,1", "punctured_disk", "annulus:0.2,1", "dfh_omega", "ball:r=0.5,n=1"] {
            let d: DomainSpec = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!("disk".parse::<DomainSpec>().unwrap(), DomainSpec::unit_disk());
        assert_eq!("disk:r=0.25".parse::<DomainSpec>().unwrap(), DomainSpec::Ball { radius: 0.25, dim: 1 });
        for bad in ["ball:r=-1", "annulus:1,0.2", "polydisk", "cube", "ball:q=2", "annulus:0.1"] {
            assert!(bad.parse::<DomainSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn membership_examples() {
        assert!(DomainSpec::unit_disk().contains(&ComplexPoint::origin(1)).unwrap());
        assert!(DomainSpec::DfhOmega.contains(&pt(&[(-0.1, 0.0), (0.0, 0.0), (0.0, 0.0)])).unwrap());
        assert!((dfh_rho(&[C64::new(-0.1, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]) + 0.09).abs() < 1e-15);
        assert!(!DomainSpec::PuncturedDisk.contains(&ComplexPoint::origin(1)).unwrap());
        assert!(!DomainSpec::unit_disk().contains(&pt(&[(1.0, 0.0)])).unwrap());
        assert!(matches!(
            DomainSpec::unit_disk().contains(&ComplexPoint::origin(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn boundary_distance_examples() {
        assert_eq!(DomainSpec::unit_disk().boundary_distance(&ComplexPoint::origin(1)).unwrap(), 1.0);
        let d = DomainSpec::PuncturedDisk.boundary_distance(&pt(&[(0.3, 0.0)])).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
        assert!(DomainSpec::unit_disk().boundary_distance(&pt(&[(2.0, 0.0)])).is_err());
    }

    #[test]
    fn dfh_distance_fixture() {
        // nearest boundary point of (-0.1, 0, 0) is the origin
        let cert = dfh_distance(&pt(&[(-0.1, 0.0), (0.0, 0.0), (0.0, 0.0)])).unwrap();
        assert!((cert.distance - 0.1).abs() < 1e-6, "{cert:?}");
        assert!(cert.kkt_residual < 1e-6);
        assert!(dfh_rho(cert.witness.coords()).abs() < 1e-12);
    }

    #[test]
    fn dfh_box_encloses_domain() {
        let mut rng = rng::stream(11, 0);
        for _ in 0..20_000 {
            let p: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
            let inside_box = p.iter().zip(DFH_BOX.iter()).all(|(x, (lo, hi))| x > lo && x < hi);
            let z = from_real(&p);
            if !inside_box {
                assert!(!DomainSpec::DfhOmega.contains(&z).unwrap());
            }
        }
    }

    #[test]
    fn disk_quadrature_is_exact_on_low_moments() {
        let s = DomainSpec::unit_disk().sample(64, 3).unwrap();
        assert!((s.total_weight() - PI).abs() < 1e-12);
        assert!((s.integrate(|z| z.norm_sqr()) - PI / 2.0).abs() < 1e-12);
        assert!(s.points.iter().all(|p| DomainSpec::unit_disk().contains(p).unwrap()));
    }

    #[test]
    fn tensor_rules_reproduce_volumes() {
        for d in [
            DomainSpec::PuncturedDisk,
            DomainSpec::annulus(0.2, 1.0).unwrap(),
            DomainSpec::ball(1.0, 2).unwrap(),
            DomainSpec::ball(0.5, 2).unwrap(),
            DomainSpec::polydisk(vec![1.0, 0.5]).unwrap(),
        ] {
            let s = d.sample(4096, 1).unwrap();
            let v = d.volume().unwrap();
            assert!((s.total_weight() - v).abs() < 1e-12 * v.max(1.0), "{d}: {} vs {v}", s.total_weight());
            assert!(s.points.iter().all(|p| d.contains(p).unwrap()));
        }
    }

    #[test]
    fn ball2_rule_integrates_moments() {
        // ∫_B |z₁|^{2a} |z₂|^{2b} dV = π² a! b! / (a + b + 2)!
        let d = DomainSpec::ball(1.0, 2).unwrap();
        let s = d.sample(10_000, 0).unwrap();
        let exact = PI * PI * 2.0 / 24.0;
        assert!((s.integrate(|z| z.coords()[0].norm_sqr().powi(2)) - exact).abs() < 1e-12);
    }

    #[test]
    fn sobol_ball_volume() {
        let d = DomainSpec::ball(1.0, 3).unwrap();
        let s = d.sample(200_000, 5).unwrap();
        let v = d.volume().unwrap();
        assert!((s.total_weight() - v).abs() < 0.01 * v);
    }

    #[test]
    fn sampling_is_deterministic() {
        for d in [DomainSpec::unit_disk(), DomainSpec::DfhOmega, DomainSpec::ball(1.0, 2).unwrap()] {
            let a = d.sample(5000, 42).unwrap();
            let b = d.sample(5000, 42).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
            let c = d.sample(5000, 43).unwrap();
            assert_ne!(a.to_bytes(), c.to_bytes());
        }
    }

    #[test]
    fn boundary_points_lie_on_boundary() {
        for w in DomainSpec::ball(0.7, 2).unwrap().boundary_points(50, 9) {
            assert!((w.norm() - 0.7).abs() < 1e-12);
        }
        for w in DomainSpec::DfhOmega.boundary_points(50, 9) {
            assert!(dfh_rho(w.coords()).abs() < 1e-12);
        }
        for w in DomainSpec::annulus(0.2, 1.0).unwrap().boundary_points(50, 9) {
            let r = w.norm();
            assert!((r - 0.2).abs() < 1e-12 || (r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_uses_grammar() {
        let d = DomainSpec::ball(1.0, 2).unwrap();
        let j = serde_json::to_string(&d).unwrap();
        assert_eq!(j, "\"ball:r=1,n=2\"");
        assert_eq!(serde_json::from_str::<DomainSpec>(&j).unwrap(), d);
    }
}
