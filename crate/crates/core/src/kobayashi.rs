//! Kobayashi-Royden metric: the ball formula, upper bounds from explicit holomorphic
//! disks, and lower bounds from negatively curved reference metrics.
//!
//! Upper bounds use disks of the form
//!
//! `F(w) = x + τ [ (w − b) ξ̂ + Σ_{k=2..m} d_k (w − b)^k ]`,
//!
//! checked for containment on the circle `|w| = ρ₀` with `ρ₀ = 1 − 2⁻¹⁰`. Precomposing
//! `w = ρ₀ (ζ + b/ρ₀)/(1 + conj(b/ρ₀) ζ)` gives a disk on the unit disk through `x` with
//! derivative `τ (ρ₀ − |b|²/ρ₀) ξ̂` at the origin, so `𝔎(x, ξ̂) ≤ 1/(τ (ρ₀ − |b|²/ρ₀))`.
//! For `m = 1` the family contains every affine disk, in particular the extremal disks of
//! the ball.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::{dfh_rho, DomainSpec};
use crate::error::{Error, Result};
use crate::geometry::{holo_sectional_curvature, norm_sq, ComplexPoint, MetricField, TangentVector, C64};
use crate::rng::{self, streams};
use crate::simplex::NelderMead;

/// Radius of the certification circle in the disk parameter.
pub const CERT_RADIUS: f64 = 1.0 - 1.0 / 1024.0;
/// Relative tolerance attributed to the discrete containment certificate.
pub const CERT_TOLERANCE: f64 = 1e-2;
/// Fraction by which accepted disks are shrunk after the search.
pub const TAU_BACKOFF: f64 = 1e-4;
/// Circle samples keep this fraction of the centre's distance away from the puncture or
/// hole, so the polygon and the true boundary curve wind the same way.
pub const HOLE_MARGIN: f64 = 0.02;

/// `𝔎_{B(r)}(a, ξ) = sqrt(|ξ|²/(r² − |a|²) + |⟨ξ, a⟩|²/(r² − |a|²)²)`.
pub fn kr_exact_ball(r: f64, a: &ComplexPoint, xi: &TangentVector) -> Result<f64> {
    if xi.components.len() != a.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: xi.components.len() });
    }
    let q = r * r - a.norm_sqr();
    if !(q > 0.0) {
        return Err(Error::ExteriorPoint { point: a.to_string(), domain: format!("ball of radius {r}") });
    }
    if xi.is_zero() {
        return Err(Error::InvalidInput("zero tangent vector".into()));
    }
    let dot: C64 = xi.components.iter().zip(a.coords()).map(|(x, a)| x * a.conj()).sum();
    let xi2 = xi.euclidean_norm().powi(2);
    Ok((xi2 / q + dot.norm_sqr() / (q * q)).sqrt())
}

/// Unit vector `ξ/|ξ|` rotated so that its first largest component is real and positive.
///
/// `λξ` and `ξ` give the same direction for every nonzero complex `λ`.
pub fn normalized_direction(xi: &[C64]) -> Result<(Vec<C64>, f64)> {
    let norm = xi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidInput("direction must be nonzero and finite".into()));
    }
    let lead = xi.iter().fold(C64::new(0.0, 0.0), |best, c| if c.norm() > best.norm() * (1.0 + 1e-12) { *c } else { best });
    let phase = lead.conj() / lead.norm();
    Ok((xi.iter().map(|c| c * phase / norm).collect(), norm))
}

/// A disk `F(w) = x + τ [(w − b) ξ̂ + Σ_k d_k (w − b)^k]`, certified on `|w| = ρ₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDiskFamily {
    pub center: ComplexPoint,
    /// Unit direction `ξ̂`.
    pub direction: Vec<C64>,
    pub tau: f64,
    /// Preimage of the centre in the disk parameter.
    pub b: C64,
    /// `d_k` for `k = 2..=m`.
    pub higher: Vec<Vec<C64>>,
    pub cert_radius: f64,
}

impl AnalyticDiskFamily {
    pub fn poly_degree(&self) -> usize {
        self.higher.len() + 1
    }

    /// `F(w) − x` divided by `τ`.
    fn shape(&self, w: C64) -> Vec<C64> {
        shape_at(&self.direction, self.b, &self.higher, w)
    }

    pub fn eval(&self, w: C64) -> ComplexPoint {
        let v = self.shape(w);
        ComplexPoint::new(self.center.coords().iter().zip(&v).map(|(x, v)| x + v * self.tau).collect())
            .expect("finite disk values")
    }

    /// Radius `R` of the unit-disk reparametrisation with derivative `R ξ̂` at the centre.
    pub fn radius(&self) -> f64 {
        disk_radius(self.tau, self.b, self.cert_radius)
    }

    /// Containment of the certification circle (plus zero winding around the puncture or
    /// hole of one-dimensional non-simply-connected domains).
    pub fn verify(&self, domain: &DomainSpec, points: usize) -> Result<bool> {
        let circle = circle_points(points, self.cert_radius);
        let mut values = Vec::with_capacity(points);
        for w in &circle {
            let z = self.eval(*w);
            if !domain.contains(&z)? {
                return Ok(false);
            }
            values.push(z.coords()[0]);
        }
        if matches!(domain, DomainSpec::PuncturedDisk | DomainSpec::Annulus { .. }) {
            return Ok(winding_number(&values) == 0);
        }
        Ok(true)
    }
}

fn disk_radius(tau: f64, b: C64, rho0: f64) -> f64 {
    tau * (rho0 - b.norm_sqr() / rho0)
}

fn shape_at(direction: &[C64], b: C64, higher: &[Vec<C64>], w: C64) -> Vec<C64> {
    let u = w - b;
    let mut out: Vec<C64> = direction.iter().map(|d| d * u).collect();
    let mut pow = u;
    for dk in higher {
        pow *= u;
        for (o, d) in out.iter_mut().zip(dk) {
            *o += d * pow;
        }
    }
    out
}

fn circle_points(count: usize, radius: f64) -> Vec<C64> {
    (0..count).map(|k| C64::from_polar(radius, 2.0 * PI * k as f64 / count as f64)).collect()
}

/// Winding number of a closed polygon around the origin.
pub fn winding_number(values: &[C64]) -> i64 {
    let mut total = 0.0;
    for k in 0..values.len() {
        let a = values[k];
        let b = values[(k + 1) % values.len()];
        total += (b / a).arg();
    }
    (total / (2.0 * PI)).round() as i64
}

/// Largest `s ≤ cap` such that `p + t v` stays in `domain` for all `t < s` (first exit time).
fn exit_time(domain: &DomainSpec, p: &[C64], v: &[C64], cap: f64) -> f64 {
    // first positive root of |p + t v|² = r² for |p| < r
    let circle_exit = |p: C64, v: C64, r: f64| -> f64 {
        let a = v.norm_sqr();
        if a == 0.0 {
            return f64::INFINITY;
        }
        let bh = (p.conj() * v).re;
        let c = p.norm_sqr() - r * r;
        let disc = bh * bh - a * c;
        (-bh + disc.max(0.0).sqrt()) / a
    };
    // first positive root of |p + t v|² = r² for |p| > r, if the ray meets the circle
    let hole_entry = |p: C64, v: C64, r: f64| -> f64 {
        let a = v.norm_sqr();
        let bh = (p.conj() * v).re;
        let c = p.norm_sqr() - r * r;
        let disc = bh * bh - a * c;
        if a == 0.0 || disc < 0.0 || bh >= 0.0 {
            return f64::INFINITY;
        }
        (-bh - disc.sqrt()) / a
    };
    match domain {
        DomainSpec::Ball { radius, .. } => {
            let a: f64 = v.iter().map(|c| c.norm_sqr()).sum();
            if a == 0.0 {
                return cap;
            }
            let bh: f64 = p.iter().zip(v).map(|(p, v)| (p.conj() * v).re).sum();
            let c = p.iter().map(|c| c.norm_sqr()).sum::<f64>() - radius * radius;
            let disc = bh * bh - a * c;
            ((-bh + disc.max(0.0).sqrt()) / a).min(cap)
        }
        DomainSpec::Polydisk { radii } => {
            radii.iter().enumerate().map(|(i, r)| circle_exit(p[i], v[i], *r)).fold(cap, f64::min)
        }
        DomainSpec::PuncturedDisk => {
            let keep_out = HOLE_MARGIN * p[0].norm();
            circle_exit(p[0], v[0], 1.0).min(hole_entry(p[0], v[0], keep_out)).min(cap)
        }
        DomainSpec::Annulus { inner, outer } => {
            let keep_out = inner + HOLE_MARGIN * (p[0].norm() - inner);
            circle_exit(p[0], v[0], *outer).min(hole_entry(p[0], v[0], keep_out)).min(cap)
        }
        DomainSpec::DfhOmega => {
            let at = |t: f64| -> f64 {
                let z: Vec<C64> = p.iter().zip(v).map(|(p, v)| p + v * t).collect();
                dfh_rho(&z)
            };
            let steps = 24;
            let h = cap / steps as f64;
            let mut lo = 0.0;
            for k in 1..=steps {
                let t = h * k as f64;
                if at(t) >= 0.0 {
                    let mut hi = t;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if at(mid) >= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return lo;
                }
                lo = t;
            }
            cap
        }
    }
}

/// Smallest `t` at which a polygon edge of `x + t·V` passes through the origin.
fn origin_crossing(x: C64, values: &[C64]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..values.len() {
        let v = values[k];
        let dv = values[(k + 1) % values.len()] - v;
        // v + s dv + u x = 0 with s ∈ [0, 1], u = 1/t > 0
        let det = dv.re * x.im - dv.im * x.re;
        if det.abs() < 1e-300 {
            continue;
        }
        let s = (-v.re * x.im + v.im * x.re) / det;
        let u = (-dv.re * v.im + dv.im * v.re) / det;
        if (0.0..=1.0).contains(&s) && u > 0.0 {
            best = best.min(1.0 / u);
        }
    }
    best
}

/// Parameters of the disk search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiskSearch {
    /// Polynomial degree `m` of the disk.
    pub poly_degree: usize,
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    pub circle_points: usize,
    pub seed: u64,
}

impl Default for DiskSearch {
    fn default() -> Self {
        Self { poly_degree: 4, restarts: 8, max_evals: 1500, circle_points: 1024, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KrUpper {
    pub value: f64,
    pub witness: AnalyticDiskFamily,
    /// True when no disk beyond the straight one through `x` was found feasible.
    pub linear_fallback: bool,
    pub evaluations: usize,
}

struct Problem<'a> {
    domain: &'a DomainSpec,
    x: Vec<C64>,
    direction: Vec<C64>,
    circle: Vec<C64>,
    m: usize,
    n: usize,
    diameter_bound: f64,
}

impl Problem<'_> {
    fn unpack(&self, params: &[f64]) -> (C64, Vec<Vec<C64>>) {
        let b = C64::new(params[0], params[1]);
        let higher = (0..self.m.saturating_sub(1))
            .map(|k| (0..self.n).map(|i| C64::new(params[2 + 2 * (k * self.n + i)], params[3 + 2 * (k * self.n + i)])).collect())
            .collect();
        (b, higher)
    }

    fn tau_max(&self, b: C64, higher: &[Vec<C64>]) -> f64 {
        let n = self.n;
        let mut flat = vec![C64::new(0.0, 0.0); n * self.circle.len()];
        let mut vmax = 0.0f64;
        for (w, v) in self.circle.iter().zip(flat.chunks_exact_mut(n)) {
            let u = w - b;
            let mut pow = u;
            for (o, d) in v.iter_mut().zip(&self.direction) {
                *o = d * u;
            }
            for dk in higher {
                pow *= u;
                for (o, d) in v.iter_mut().zip(dk) {
                    *o += d * pow;
                }
            }
            vmax = vmax.max(v.iter().map(|c| c.norm_sqr()).sum::<f64>());
        }
        let vmax = vmax.sqrt();
        if !(vmax > 0.0) {
            return 0.0;
        }
        let mut tau = if self.diameter_bound.is_finite() { self.diameter_bound / vmax } else { f64::INFINITY };
        for v in flat.chunks_exact(n) {
            tau = exit_time(self.domain, &self.x, v, tau);
        }
        if matches!(self.domain, DomainSpec::PuncturedDisk | DomainSpec::Annulus { .. }) {
            let first: Vec<C64> = flat.chunks_exact(n).map(|v| v[0]).collect();
            tau = tau.min(origin_crossing(self.x[0], &first));
        }
        tau
    }

    /// Negative certified radius.
    fn objective(&self, params: &[f64]) -> f64 {
        let (b, higher) = self.unpack(params);
        if b.norm() >= CERT_RADIUS * 0.999 {
            return f64::INFINITY;
        }
        -disk_radius(self.tau_max(b, &higher), b, CERT_RADIUS)
    }
}

/// Upper bound for `𝔎_d(x, ξ)` from the best disk found by the search.
pub fn kr_upper(domain: &DomainSpec, x: &ComplexPoint, xi: &TangentVector, search: &DiskSearch) -> Result<KrUpper> {
    if !domain.contains(x)? {
        return Err(Error::ExteriorPoint { point: x.to_string(), domain: domain.to_string() });
    }
    if xi.components.len() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), got: xi.components.len() });
    }
    let (direction, xi_norm) = normalized_direction(&xi.components)?;
    let n = domain.dim();
    let m = search.poly_degree.max(1);
    let problem = Problem {
        domain,
        x: x.coords().to_vec(),
        direction: direction.clone(),
        circle: circle_points(search.circle_points.max(8), CERT_RADIUS),
        m,
        n,
        diameter_bound: if matches!(domain, DomainSpec::DfhOmega) { 4.0 } else { f64::INFINITY },
    };
    let dim_params = 2 + 2 * n * (m - 1);

    let linear = -problem.objective(&vec![0.0; dim_params]);
    let mut evaluations = 1;

    // stage 1: affine disks, optimise over b only
    let nm1 = NelderMead { max_evals: 400, f_tol: 1e-13, x_tol: 1e-9, initial_step: 0.1 };
    let stage1 = nm1.minimize(
        |p| {
            let mut full = vec![0.0; dim_params];
            full[..2].copy_from_slice(p);
            problem.objective(&full)
        },
        &[0.0, 0.0],
    );
    evaluations += stage1.evals;
    let mut best_params = vec![0.0; dim_params];
    let mut best = linear;
    if -stage1.f > best {
        best = -stage1.f;
        best_params[..2].copy_from_slice(&stage1.x);
    }

    // stage 2: all coefficients, seeded restarts
    if m >= 2 && search.restarts > 0 {
        let start = best_params.clone();
        let nm2 = NelderMead { max_evals: search.max_evals, f_tol: 1e-12, x_tol: 1e-9, initial_step: 0.05 };
        let results: Vec<(f64, Vec<f64>, usize)> = (0..search.restarts)
            .into_par_iter()
            .map(|r| {
                let mut rng = rng::chunk_stream(search.seed, streams::DISK_RESTARTS, r as u64);
                let mut x0 = start.clone();
                if r > 0 {
                    for (i, v) in x0.iter_mut().enumerate() {
                        let spread = if i < 2 { 0.05 } else { 0.15 };
                        *v += spread * (2.0 * rng.random::<f64>() - 1.0);
                    }
                }
                let res = nm2.minimize(|p| problem.objective(p), &x0);
                (-res.f, res.x, res.evals)
            })
            .collect();
        for (val, params, evals) in results {
            evaluations += evals;
            if val > best {
                best = val;
                best_params = params;
            }
        }
    }

    let (b, higher) = problem.unpack(&best_params);
    let tau = problem.tau_max(b, &higher) * (1.0 - TAU_BACKOFF);
    let witness = AnalyticDiskFamily { center: x.clone(), direction, tau, b, higher, cert_radius: CERT_RADIUS };
    let radius = witness.radius();
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Internal(format!("no feasible disk through {x}")));
    }
    let linear_fallback = best <= linear;
    Ok(KrUpper { value: xi_norm / radius, witness, linear_fallback, evaluations })
}

/// Schwarz-lemma lower bound from a reference metric with `H ≤ −κ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchwarzBound {
    pub value: f64,
    /// Curvature bound used (measured sup of `−H` minus the safety margin).
    pub kappa: f64,
    pub sup_h: f64,
    pub probes: usize,
    pub note: String,
}

pub const SCHWARZ_CONSTANT_NOTE: &str =
    "lower bound sqrt(kappa/2)*|xi|_omega (constant from |xi|^2_omega <= (2/kappa)|v|^2 on the unit disk)";

/// `sup H` over probe points and directions.
pub fn sup_holomorphic_curvature(metric: &dyn MetricField, probes: &[ComplexPoint], seed: u64) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = metric.dim();
    let values: Vec<f64> = probes
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let mut rng = rng::chunk_stream(seed, streams::PROBES, i as u64);
            let mut dirs: Vec<Vec<C64>> = (0..n)
                .map(|k| (0..n).map(|j| C64::new(if j == k { 1.0 } else { 0.0 }, 0.0)).collect())
                .collect();
            if n > 1 {
                for _ in 0..8 {
                    dirs.push((0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect());
                }
            }
            let mut sup = f64::NEG_INFINITY;
            for d in dirs {
                let eta = TangentVector::new(z.clone(), d)?;
                if eta.is_zero() {
                    continue;
                }
                sup = sup.max(holo_sectional_curvature(metric, &eta)?);
            }
            Ok(sup)
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `sqrt(κ/2) |ξ|_ω` with `κ = −sup H − margin` measured on `probes`.
pub fn kr_lower_schwarz(metric: &dyn MetricField, xi: &TangentVector, probes: &[ComplexPoint]) -> Result<SchwarzBound> {
    let sup_h = sup_holomorphic_curvature(metric, probes, 0)?;
    let margin = 1e-6 * sup_h.abs().max(1.0);
    let kappa = -sup_h - margin;
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!("reference metric is not negatively curved on the probes (sup H = {sup_h})")));
    }
    let len = norm_sq(metric, xi)?.sqrt();
    Ok(SchwarzBound { value: (kappa / 2.0).sqrt() * len, kappa, sup_h, probes: probes.len(), note: SCHWARZ_CONSTANT_NOTE.into() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KRBracket {
    pub lower: f64,
    pub upper: f64,
    pub witness: AnalyticDiskFamily,
    pub lower_note: Option<String>,
}

/// Lower and upper bounds together; a lower bound above the upper one (beyond the
/// certification tolerance) is an error.
pub fn kr_bracket(
    domain: &DomainSpec,
    x: &ComplexPoint,
    xi: &TangentVector,
    reference: Option<(&dyn MetricField, &[ComplexPoint])>,
    search: &DiskSearch,
) -> Result<KRBracket> {
    let upper = kr_upper(domain, x, xi, search)?;
    let (lower, note) = match reference {
        Some((metric, probes)) => {
            let s = kr_lower_schwarz(metric, xi, probes)?;
            (s.value, Some(s.note))
        }
        None => (0.0, None),
    };
    if lower > upper.value * (1.0 + CERT_TOLERANCE) {
        return Err(Error::BracketInversion { lower, upper: upper.value });
    }
    Ok(KRBracket { lower, upper: upper.value, witness: upper.witness, lower_note: note })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecreasingEntry {
    pub point: ComplexPoint,
    pub direction: Vec<C64>,
    pub inner: f64,
    pub outer: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecreasingReport {
    pub inner: String,
    pub outer: String,
    pub entries: Vec<DecreasingEntry>,
    /// Indices with `outer > inner · (1 + tolerance)`.
    pub violations: Vec<usize>,
    pub tolerance: f64,
}

/// For `inner ⊂ outer`, checks `upper_outer(x, ξ) ≤ upper_inner(x, ξ)` up to the
/// certification tolerance at every sample.
pub fn decreasing_property_check(
    inner: &DomainSpec,
    outer: &DomainSpec,
    samples: &[TangentVector],
    search: &DiskSearch,
) -> Result<DecreasingReport> {
    if inner.dim() != outer.dim() {
        return Err(Error::DimensionMismatch { expected: outer.dim(), got: inner.dim() });
    }
    let probe = inner.sample(256, search.seed)?;
    for p in probe.points.iter().chain(samples.iter().map(|s| &s.base)) {
        if !inner.contains(p)? || !outer.contains(p)? {
            return Err(Error::Precondition(format!("{inner} is not contained in {outer} at {p}")));
        }
    }
    let entries: Vec<DecreasingEntry> = samples
        .iter()
        .map(|v| {
            let a = kr_upper(inner, &v.base, v, search)?.value;
            let b = kr_upper(outer, &v.base, v, search)?.value;
            Ok(DecreasingEntry { point: v.base.clone(), direction: v.components.clone(), inner: a, outer: b })
        })
        .collect::<Result<_>>()?;
    let violations =
        entries.iter().enumerate().filter(|(_, e)| e.outer > e.inner * (1.0 + CERT_TOLERANCE)).map(|(i, _)| i).collect();
    Ok(DecreasingReport { inner: inner.to_string(), outer: outer.to_string(), entries, violations, tolerance: CERT_TOLERANCE })
}
