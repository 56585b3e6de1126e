//! Rotationally symmetric Kähler geometry in one variable: the continuity method for the
//! Monge–Ampère equation, Kähler–Einstein extraction and the Kähler–Ricci flow.
//!
//! A metric on a disk is `g(s) = g_ref(s)·e^{w(s)}` with `s = |z|²`, a closed-form
//! reference `g_ref` and a correction `w` sampled on Chebyshev–Lobatto nodes in
//! `[0, s_max]`. For `f = f(s)`, `∂_z∂_z̄ f = L f` with `L = s d²/ds² + d/ds`, so
//! `Ric = −L log g` and `H = −L log g / g`.
//!
//! With the hyperbolic reference the grid may reach the ideal boundary `s = 1`: there
//! `1/g = 0` and every equation below becomes algebraic, so no boundary condition is
//! imposed. Grids ending inside the disk carry a Dirichlet condition at `s_max`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chebyshev::ChebGrid;
use crate::error::{Error, Result};
use crate::geometry::fields::radial_jet_1d;
use crate::geometry::{self, CMatrix, ComplexPoint, DerivativeMode, MetricField, MetricJet, C64};

pub const DUMP_FORMAT: &str = "invmetrics-radial";
pub const DUMP_VERSION: u32 = 1;
pub const DEFAULT_NODES: usize = 129;
pub const DEFAULT_FLOW_NODES: usize = 33;
pub const KE_TOLERANCE: f64 = 1e-6;
/// RK4 is stable for `dt·λ ∈ [−2.78, 0]` on the real axis.
pub const RK4_STABILITY: f64 = 2.7;
const BLOW_UP: f64 = 700.0;

/// Closed-form background metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Reference {
    /// `g_ref = 1`.
    Flat,
    /// `g_ref = c/(1 − s)²`, holomorphic sectional curvature `−2/c`.
    Hyperbolic { c: f64 },
}

impl Reference {
    pub fn poincare() -> Self {
        Reference::Hyperbolic { c: 2.0 }
    }

    fn log_g(&self, s: f64) -> f64 {
        match *self {
            Reference::Flat => 0.0,
            Reference::Hyperbolic { c } => c.ln() - 2.0 * (1.0 - s).ln(),
        }
    }

    /// `(d/ds, d²/ds²)` of `log g_ref`.
    fn log_g_derivatives(&self, s: f64) -> (f64, f64) {
        match *self {
            Reference::Flat => (0.0, 0.0),
            Reference::Hyperbolic { .. } => (2.0 / (1.0 - s), 2.0 / ((1.0 - s) * (1.0 - s))),
        }
    }

    /// `1/g_ref`, zero on the ideal boundary.
    fn inverse(&self, s: f64) -> f64 {
        match *self {
            Reference::Flat => 1.0,
            Reference::Hyperbolic { c } => (1.0 - s) * (1.0 - s) / c,
        }
    }

    /// `L log g_ref / g_ref`.
    fn ricci_ratio(&self) -> f64 {
        match *self {
            Reference::Flat => 0.0,
            Reference::Hyperbolic { c } => 2.0 / c,
        }
    }

    fn max_s(&self) -> f64 {
        match self {
            Reference::Flat => f64::INFINITY,
            Reference::Hyperbolic { .. } => 1.0,
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Flat => write!(f, "flat"),
            Reference::Hyperbolic { c } => write!(f, "hyperbolic:{c}"),
        }
    }
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        if t == "flat" {
            return Ok(Reference::Flat);
        }
        if let Some(c) = t.strip_prefix("hyperbolic:") {
            let c: f64 = c.trim().parse().map_err(|_| Error::Parse(format!("bad hyperbolic constant in {t:?}")))?;
            if c > 0.0 && c.is_finite() {
                return Ok(Reference::Hyperbolic { c });
            }
        }
        Err(Error::Parse(format!("unknown reference metric {t:?}")))
    }
}

/// A rotationally symmetric metric `g(s) = g_ref(s)·e^{w(s)}` on Chebyshev nodes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "ProfileData", try_from = "ProfileData")]
pub struct RadialProfile {
    reference: Reference,
    grid: ChebGrid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileData {
    dim: usize,
    reference: Reference,
    s_max: f64,
    values: Vec<f64>,
}

impl From<RadialProfile> for ProfileData {
    fn from(p: RadialProfile) -> Self {
        ProfileData { dim: 1, reference: p.reference, s_max: p.s_max(), values: p.values }
    }
}

impl TryFrom<ProfileData> for RadialProfile {
    type Error = Error;

    fn try_from(d: ProfileData) -> Result<Self> {
        if d.dim != 1 {
            return Err(unsupported_dim(d.dim));
        }
        RadialProfile::new(d.reference, d.s_max, d.values)
    }
}

fn unsupported_dim(n: usize) -> Error {
    Error::Unsupported(format!("radial profiles are implemented for n = 1 only (requested n = {n})"))
}

impl RadialProfile {
    pub fn new(reference: Reference, s_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(s_max > 0.0) || s_max > reference.max_s() {
            return Err(Error::InvalidInput(format!("s_max = {s_max} outside the domain of the {reference} reference")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite profile value".into()));
        }
        let grid = ChebGrid::new(values.len(), 0.0, s_max)?;
        Ok(Self { reference, grid, values })
    }

    pub fn from_fn(reference: Reference, nodes: usize, s_max: f64, w: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = ChebGrid::new(nodes, 0.0, s_max)?;
        let values = grid.nodes.iter().map(|&s| w(s)).collect();
        Self::new(reference, s_max, values)
    }

    /// `2/(1 − s)²` up to the ideal boundary.
    pub fn poincare(nodes: usize) -> Result<Self> {
        Self::from_fn(Reference::poincare(), nodes, 1.0, |_| 0.0)
    }

    pub fn flat(nodes: usize, s_max: f64) -> Result<Self> {
        Self::from_fn(Reference::Flat, nodes, s_max, |_| 0.0)
    }

    /// Build a profile for dimension `n`; only `n = 1` is available.
    pub fn with_dim(n: usize, reference: Reference, nodes: usize, s_max: f64) -> Result<Self> {
        if n != 1 {
            return Err(unsupported_dim(n));
        }
        Self::from_fn(reference, nodes, s_max, |_| 0.0)
    }

    /// `λ·g`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {lambda}")));
        }
        Ok(self.with_values(self.values.iter().map(|w| w + lambda.ln()).collect()))
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { reference: self.reference, grid: self.grid.clone(), values }
    }

    pub fn dim(&self) -> usize {
        1
    }

    pub fn reference(&self) -> Reference {
        self.reference
    }

    pub fn s_max(&self) -> f64 {
        self.grid.b
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The correction `w = log g − log g_ref` at the nodes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True when the last node is the ideal boundary of the hyperbolic reference.
    pub fn reaches_ideal_boundary(&self) -> bool {
        matches!(self.reference, Reference::Hyperbolic { .. }) && self.s_max() == 1.0
    }

    pub fn log_g_at(&self, s: f64) -> f64 {
        self.reference.log_g(s) + self.grid.interpolate(&self.values, s)
    }

    /// `g` at node `i` (infinite on the ideal boundary).
    pub fn g_node(&self, i: usize) -> f64 {
        let s = self.grid.nodes[i];
        if self.reaches_ideal_boundary() && i + 1 == self.len() {
            return f64::INFINITY;
        }
        (self.reference.log_g(s) + self.values[i]).exp()
    }

    /// `1/g` at the nodes.
    pub fn inverse_g(&self) -> Vec<f64> {
        self.grid.nodes.iter().zip(&self.values).map(|(&s, w)| self.reference.inverse(s) * (-w).exp()).collect()
    }

    /// `1/g_ref` at the nodes.
    fn inverse_ref(&self) -> Vec<f64> {
        self.grid.nodes.iter().map(|&s| self.reference.inverse(s)).collect()
    }

    /// `L = diag(s)·D² + D`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let d = &self.grid.d;
        let mut l = d * d;
        for (i, s) in self.grid.nodes.iter().enumerate() {
            l.row_mut(i).scale_mut(*s);
        }
        l + d
    }

    fn apply(l: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (l * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// `L log g / g = −Ric/g` at the nodes.
    pub fn ricci_form_ratio(&self) -> Vec<f64> {
        let lw = Self::apply(&self.laplacian(), &self.values);
        let ratio = self.reference.ricci_ratio();
        self.inverse_ref()
            .iter()
            .zip(&lw)
            .zip(&self.values)
            .map(|((inv, lw), w)| (-w).exp() * (ratio + inv * lw))
            .collect()
    }

    /// Holomorphic sectional curvature at the nodes.
    pub fn holomorphic_curvature(&self) -> Vec<f64> {
        self.ricci_form_ratio().into_iter().map(|q| -q).collect()
    }

    /// `(κ₁, κ₂)` with `−κ₂ ≤ H ≤ −κ₁` on the grid.
    pub fn curvature_pinching(&self) -> (f64, f64) {
        let h = self.holomorphic_curvature();
        let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = h.iter().copied().fold(f64::INFINITY, f64::min);
        (-max, -min)
    }

    /// `max |Ric + g|/g` on the grid.
    pub fn einstein_defect(&self) -> f64 {
        self.ricci_form_ratio().iter().map(|q| (1.0 - q).abs()).fold(0.0, f64::max)
    }

    /// Largest relative difference `|g/g' − 1|` at the nodes of `self`.
    pub fn max_ratio_deviation(&self, other: &RadialProfile) -> f64 {
        self.grid
            .nodes
            .iter()
            .zip(&self.values)
            .map(|(&s, w)| {
                let diff = self.reference.log_g(s) + w - other.log_g_at(s);
                diff.exp_m1().abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {DUMP_FORMAT} v{DUMP_VERSION} profile\n");
        let _ = writeln!(out, "# reference={}", self.reference);
        let _ = writeln!(out, "# s_max={}", self.s_max());
        let _ = writeln!(out, "# nodes={}", self.len());
        out.push_str("s,w\n");
        for (s, w) in self.grid.nodes.iter().zip(&self.values) {
            let _ = writeln!(out, "{s},{w}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
        let expected = format!("# {DUMP_FORMAT} v{DUMP_VERSION} profile");
        if header != expected {
            return Err(Error::Parse(format!("line 1: expected header {expected:?}, found {header:?}")));
        }
        let mut reference = None;
        let mut s_max = None;
        let mut s_values = Vec::new();
        let mut w_values = Vec::new();
        for (no, line) in lines {
            let line = line.trim();
            if line.is_empty() || line == "s,w" {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "reference" => reference = Some(v.parse::<Reference>()?),
                        "s_max" => {
                            s_max = Some(v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad s_max", no + 1)))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let (s, w) = line.split_once(',').ok_or_else(|| Error::Parse(format!("line {}: expected `s,w`", no + 1)))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("line {}: bad number {v:?}", no + 1)));
            s_values.push(parse(s)?);
            w_values.push(parse(w)?);
        }
        let reference = reference.ok_or_else(|| Error::Parse("missing `# reference=` line".into()))?;
        let s_max = s_max.ok_or_else(|| Error::Parse("missing `# s_max=` line".into()))?;
        let profile = RadialProfile::new(reference, s_max, w_values)?;
        for (i, (a, b)) in s_values.iter().zip(profile.nodes()).enumerate() {
            if (a - b).abs() > 1e-12 * s_max {
                return Err(Error::Parse(format!("node {i} at s = {a} is not a Chebyshev node on [0, {s_max}]")));
            }
        }
        Ok(profile)
    }
}

impl MetricField for RadialProfile {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, z: &ComplexPoint) -> Result<CMatrix> {
        let s = self.check(z)?;
        Ok(CMatrix::from_element(1, 1, C64::new(self.log_g_at(s).exp(), 0.0)))
    }

    fn analytic_jet(&self, z: &ComplexPoint) -> Option<Result<MetricJet>> {
        let s = match self.check(z) {
            Ok(s) => s,
            Err(e) => return Some(Err(e)),
        };
        let dw = self.grid.diff(&self.values);
        let ddw = self.grid.diff(&dw);
        let (r1, r2) = self.reference.log_g_derivatives(s);
        let l1 = r1 + self.grid.interpolate(&dw, s);
        let l2 = r2 + self.grid.interpolate(&ddw, s);
        let g = self.log_g_at(s).exp();
        Some(Ok(radial_jet_1d(z.coords()[0], g, g * l1, g * (l2 + l1 * l1))))
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn regularity_radius(&self) -> f64 {
        self.s_max().sqrt()
    }

    fn boundary_distance(&self, z: &ComplexPoint) -> Option<f64> {
        Some(self.s_max().sqrt() - z.norm())
    }

    fn name(&self) -> String {
        format!("radial({})", self.reference)
    }
}

impl RadialProfile {
    fn check(&self, z: &ComplexPoint) -> Result<f64> {
        if z.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: z.dim() });
        }
        let s = z.norm_sqr();
        let inside = if self.reaches_ideal_boundary() { s < 1.0 } else { s <= self.s_max() * (1.0 + 1e-14) };
        if inside {
            Ok(s)
        } else {
            Err(Error::ExteriorPoint { point: z.to_string(), domain: format!("disk s ≤ {}", self.s_max()) })
        }
    }
}

/// `max |Ric + g|/g` evaluated through the generic curvature code at every node inside
/// the ideal boundary.
pub fn einstein_defect_via_geometry(profile: &RadialProfile) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, &s) in profile.nodes().iter().enumerate() {
        if profile.reaches_ideal_boundary() && i + 1 == profile.len() {
            continue;
        }
        let z = ComplexPoint::real(&[s.sqrt()])?;
        let ric = geometry::ricci(profile, &z)?[(0, 0)].re;
        let g = profile.eval(&z)?[(0, 0)].re;
        worst = worst.max(((ric + g) / g).abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Smallest damping factor tried before giving up.
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 60, min_damping: 1.0 / 1024.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateBounds {
    pub sup_u: f64,
    pub inf_u: f64,
    /// `sup S` with `S = tr_{ω_t} ω`.
    pub sup_trace: f64,
    /// Smallest `g_t/g` on the grid.
    pub min_omega_t: f64,
}

/// Solution of `t g + L log g + L u = e^u g` on the grid of the background profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityState {
    pub t: f64,
    pub u: Vec<f64>,
    /// Sup norm of `t + (L log g + L u)/g − e^u`.
    pub residual: f64,
    pub iterations: usize,
    /// Residual after each accepted Newton step, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub bounds: StateBounds,
}

struct MaSystem {
    q: Vec<f64>,
    inv_g: Vec<f64>,
    l: DMatrix<f64>,
    dirichlet: bool,
}

impl MaSystem {
    fn new(omega: &RadialProfile) -> Self {
        Self {
            q: omega.ricci_form_ratio(),
            inv_g: omega.inverse_g(),
            l: omega.laplacian(),
            dirichlet: !omega.reaches_ideal_boundary(),
        }
    }

    /// `g_t/g = t + Q + Lu/g`.
    fn omega_t(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let lu = RadialProfile::apply(&self.l, u);
        self.q.iter().zip(&self.inv_g).zip(&lu).map(|((q, ig), lu)| t + q + ig * lu).collect()
    }

    fn residual(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut f: Vec<f64> = self.omega_t(t, u).iter().zip(u).map(|(o, u)| o - u.exp()).collect();
        if self.dirichlet {
            let last = f.len() - 1;
            f[last] = u[last];
        }
        f
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let n = u.len();
        let mut j = self.l.clone();
        for i in 0..n {
            j.row_mut(i).scale_mut(self.inv_g[i]);
            j[(i, i)] -= u[i].exp();
        }
        if self.dirichlet {
            j.row_mut(n - 1).fill(0.0);
            j[(n - 1, n - 1)] = 1.0;
        }
        j
    }

    fn bounds(&self, t: f64, u: &[f64]) -> StateBounds {
        let omega_t = self.omega_t(t, u);
        StateBounds {
            sup_u: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            inf_u: u.iter().copied().fold(f64::INFINITY, f64::min),
            sup_trace: omega_t.iter().map(|o| 1.0 / o).fold(f64::NEG_INFINITY, f64::max),
            min_omega_t: omega_t.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration for `(MA)_t` from the initial guess `u0`.
pub fn ma_newton_solve(omega: &RadialProfile, t: f64, u0: &[f64], options: &NewtonOptions) -> Result<ContinuityState> {
    let sys = MaSystem::new(omega);
    ma_newton_with(&sys, t, u0, options)
}

fn ma_newton_with(sys: &MaSystem, t: f64, u0: &[f64], options: &NewtonOptions) -> Result<ContinuityState> {
    if u0.len() != sys.q.len() {
        return Err(Error::DimensionMismatch { expected: sys.q.len(), got: u0.len() });
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidInput(format!("continuity parameter must be ≥ 0, got {t}")));
    }
    if sys.omega_t(t, u0).iter().any(|o| !(*o > 0.0)) {
        return Err(Error::Precondition(format!("t·ω + dd^c log ω + dd^c u₀ is not positive at t = {t}")));
    }
    let mut u = u0.to_vec();
    let mut f = sys.residual(t, &u);
    let mut norm = sup_norm(&f);
    let mut history = vec![norm];
    let mut iterations = 0;
    while !(norm < options.tolerance) {
        if iterations >= options.max_iterations {
            return Err(Error::ContinuityStepTooLarge { t, residual: norm });
        }
        let rhs = -DVector::from_column_slice(&f);
        let step = sys
            .jacobian(&u)
            .lu()
            .solve(&rhs)
            .ok_or(Error::ContinuityStepTooLarge { t, residual: norm })?;
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(u, d)| u + alpha * d).collect();
            let f_trial = sys.residual(t, &trial);
            let n_trial = sup_norm(&f_trial);
            let positive = sys.omega_t(t, &trial).iter().all(|o| *o > 0.0);
            if positive && n_trial < norm {
                u = trial;
                f = f_trial;
                norm = n_trial;
                break;
            }
            alpha *= 0.5;
            if alpha < options.min_damping {
                return Err(Error::ContinuityStepTooLarge { t, residual: norm });
            }
        }
        iterations += 1;
        history.push(norm);
    }
    let bounds = sys.bounds(t, &u);
    Ok(ContinuityState { t, u, residual: norm, iterations, residual_history: history, bounds })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathOptions {
    /// Starting parameter; defaults to `2t₁`.
    pub t_start: Option<f64>,
    /// Below `floor_fraction·t_start` the path jumps to `t = 0`.
    pub floor_fraction: f64,
    pub max_steps: usize,
    pub newton: NewtonOptions,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { t_start: None, floor_fraction: 1e-3, max_steps: 400, newton: NewtonOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathResult {
    /// `ω_KE = dd^c log ωⁿ + dd^c u` at `t = 0`.
    pub kahler_einstein: RadialProfile,
    pub states: Vec<ContinuityState>,
    /// Grid sup of `|Ric(ω)|/ω`.
    pub b0: f64,
    pub t1: f64,
    /// `max |Ric(ω_KE) + ω_KE|/ω_KE` on the grid.
    pub einstein_defect: f64,
    pub verified: bool,
}

/// Follow `(MA)_t` from `t_start` down to `t = 0`, halving `t` and warm-starting Newton.
pub fn continuity_path(omega: &RadialProfile, options: &PathOptions) -> Result<PathResult> {
    let sys = MaSystem::new(omega);
    let n = omega.dim() as f64;
    let b0 = sup_norm(&sys.q);
    let t1 = (n.sqrt() * b0).max(0.5) * 1.01;
    let t_start = options.t_start.unwrap_or(2.0 * t1);
    if sys.q.iter().any(|q| !(t_start + q > 0.0)) {
        return Err(Error::Precondition(format!("t ω + dd^c log ω is not positive at t_start = {t_start}")));
    }
    let u0: Vec<f64> = sys.q.iter().map(|q| (t_start + q).ln()).collect();
    let first = ma_newton_with(&sys, t_start, &u0, &options.newton)
        .map_err(|_| Error::PathFailure { last_good_t: f64::NAN, failed_t: t_start })?;
    let mut states = vec![first];
    let floor = options.floor_fraction * t_start;
    let mut target = if t_start <= floor { 0.0 } else { 0.5 * t_start };
    let mut steps = 0;
    loop {
        let current = states.last().expect("path has a state");
        if current.t == 0.0 {
            break;
        }
        steps += 1;
        if steps > options.max_steps {
            return Err(Error::PathFailure { last_good_t: current.t, failed_t: target });
        }
        match ma_newton_with(&sys, target, &current.u, &options.newton) {
            Ok(state) => {
                let t = state.t;
                states.push(state);
                target = if t <= floor { 0.0 } else { 0.5 * t };
            }
            Err(_) => {
                let decrement = 0.5 * (current.t - target);
                if decrement < 1e-12 * t_start {
                    return Err(Error::PathFailure { last_good_t: current.t, failed_t: target });
                }
                target = current.t - decrement;
            }
        }
    }
    let u = &states.last().expect("path has a state").u;
    let values = omega.values.iter().zip(u).map(|(w, u)| w + u).collect();
    let kahler_einstein = omega.with_values(values);
    let einstein_defect = kahler_einstein.einstein_defect();
    Ok(PathResult { kahler_einstein, states, b0, t1, einstein_defect, verified: einstein_defect < KE_TOLERANCE })
}

/// Trace and sup/inf checks for an accepted continuity state.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AprioriReport {
    pub kappa1: f64,
    pub sup_u: f64,
    /// `log sup(t + Q)` from the maximum principle at the maximum of `u`.
    pub sup_u_bound: f64,
    pub sup_u_ok: bool,
    pub inf_u: f64,
    /// `n log((n+1)κ₁/2)`, equivalent to the trace bound through `S = e^{−u}`.
    pub inf_u_bound: f64,
    pub inf_u_ok: bool,
    pub sup_trace: f64,
    /// `2n/((n+1)κ₁)`.
    pub trace_bound: f64,
    pub trace_bound_ok: bool,
    /// Equation residual recomputed from `u`.
    pub residual: f64,
    pub residual_ok: bool,
}

pub const MONITOR_RELATIVE_SLACK: f64 = 1e-6;

pub fn apriori_monitor(state: &ContinuityState, omega: &RadialProfile, kappa1: f64) -> Result<AprioriReport> {
    let sys = MaSystem::new(omega);
    if state.u.len() != sys.q.len() {
        return Err(Error::DimensionMismatch { expected: sys.q.len(), got: state.u.len() });
    }
    let n = omega.dim() as f64;
    let bounds = sys.bounds(state.t, &state.u);
    let residual = sup_norm(&sys.residual(state.t, &state.u));
    let trace_bound = 2.0 * n / ((n + 1.0) * kappa1);
    let sup_u_bound = sys.q.iter().map(|q| state.t + q).fold(f64::NEG_INFINITY, f64::max).ln();
    let inf_u_bound = n * ((n + 1.0) * kappa1 / 2.0).ln();
    let slack = MONITOR_RELATIVE_SLACK;
    Ok(AprioriReport {
        kappa1,
        sup_u: bounds.sup_u,
        sup_u_bound,
        sup_u_ok: bounds.sup_u <= sup_u_bound + slack,
        inf_u: bounds.inf_u,
        inf_u_bound,
        inf_u_ok: bounds.inf_u >= inf_u_bound - slack,
        sup_trace: bounds.sup_trace,
        trace_bound,
        trace_bound_ok: bounds.sup_trace <= trace_bound * (1.0 + slack),
        residual,
        residual_ok: residual < 1e3 * NewtonOptions::default().tolerance,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowMonitor {
    pub t: f64,
    /// `h(t) = max H(g(t))` over the grid.
    pub h_max: f64,
    pub h_min: f64,
    /// `max |log(g(t)/g₀)|`.
    pub envelope: f64,
    /// `max |H|`, which is `|Rm|` for one complex dimension.
    pub rm_proxy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowRun {
    pub dt: f64,
    pub t_max: f64,
    pub profiles: Vec<RadialProfile>,
    pub monitors: Vec<FlowMonitor>,
    /// `κ₁ = −max H(g₀)`.
    pub kappa1: f64,
    /// Last time up to which `h(t) ≤ −κ₁/2` held at every step.
    pub t0: f64,
    pub pinching_held: bool,
    /// Largest modulus of the linearized right-hand side at `g₀`.
    pub spectral_radius: f64,
    /// Set when the run stopped early.
    pub truncated: Option<String>,
}

impl FlowRun {
    pub fn final_profile(&self) -> &RadialProfile {
        self.profiles.last().expect("flow run has a profile")
    }

    /// `[min h(t), max h(t)]` over the trajectory.
    pub fn pinching_window(&self) -> (f64, f64) {
        let lo = self.monitors.iter().map(|m| m.h_max).fold(f64::INFINITY, f64::min);
        let hi = self.monitors.iter().map(|m| m.h_max).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {DUMP_FORMAT} v{DUMP_VERSION} flow\n");
        let _ = writeln!(out, "# dt={:e} t_max={:e} kappa1={:e} t0={:e}", self.dt, self.t_max, self.kappa1, self.t0);
        if let Some(reason) = &self.truncated {
            let _ = writeln!(out, "# truncated={reason}");
        }
        out.push_str("t,h_max,h_min,envelope,rm_proxy\n");
        for m in &self.monitors {
            let _ = writeln!(out, "{:e},{:e},{:e},{:e},{:e}", m.t, m.h_max, m.h_min, m.envelope, m.rm_proxy);
        }
        out
    }
}

struct FlowSystem {
    l: DMatrix<f64>,
    inv_ref: Vec<f64>,
    ratio: f64,
    fixed_boundary: bool,
}

impl FlowSystem {
    /// `∂w/∂t = 4 L log g / g`.
    fn rhs(&self, w: &[f64]) -> Vec<f64> {
        let lw = RadialProfile::apply(&self.l, w);
        let mut out: Vec<f64> =
            w.iter().zip(&lw).zip(&self.inv_ref).map(|((w, lw), inv)| 4.0 * (-w).exp() * (self.ratio + inv * lw)).collect();
        if self.fixed_boundary {
            let last = out.len() - 1;
            out[last] = 0.0;
        }
        out
    }

    fn jacobian(&self, w: &[f64]) -> DMatrix<f64> {
        let f = self.rhs(w);
        let n = w.len();
        let mut j = self.l.clone();
        for i in 0..n {
            let scale = 4.0 * (-w[i]).exp() * self.inv_ref[i];
            j.row_mut(i).scale_mut(scale);
            j[(i, i)] -= f[i];
        }
        if self.fixed_boundary {
            j.row_mut(n - 1).fill(0.0);
        }
        j
    }
}

/// Integrate `∂g/∂t = −4 Ric(g)` with classical RK4 from `g0` to `t_max`.
pub fn ricci_flow_run(g0: &RadialProfile, t_max: f64, dt: f64) -> Result<FlowRun> {
    if !(dt > 0.0) || !(t_max >= 0.0) || !dt.is_finite() || !t_max.is_finite() {
        return Err(Error::InvalidInput(format!("need dt > 0 and t_max ≥ 0, got dt = {dt}, t_max = {t_max}")));
    }
    let sys = FlowSystem {
        l: g0.laplacian(),
        inv_ref: g0.inverse_ref(),
        ratio: g0.reference.ricci_ratio(),
        fixed_boundary: !g0.reaches_ideal_boundary(),
    };
    let spectral_radius =
        sys.jacobian(&g0.values).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dt * spectral_radius > RK4_STABILITY {
        return Err(Error::UnstableTimeStep { dt, limit: RK4_STABILITY / spectral_radius });
    }
    let w0 = g0.values.clone();
    let monitor = |t: f64, w: &[f64]| -> FlowMonitor {
        let h = g0.with_values(w.to_vec()).holomorphic_curvature();
        FlowMonitor {
            t,
            h_max: h.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            h_min: h.iter().copied().fold(f64::INFINITY, f64::min),
            envelope: w.iter().zip(&w0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            rm_proxy: h.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        }
    };
    let first = monitor(0.0, &w0);
    let kappa1 = -first.h_max;
    let mut t0 = 0.0;
    let mut pinching_held = first.h_max <= -0.5 * kappa1;
    let mut monitors = vec![first];
    let mut profiles = vec![g0.clone()];
    let mut truncated = None;
    let steps = (t_max / dt - 1e-9).ceil().max(0.0) as usize;
    let mut w = w0.clone();
    let axpy = |w: &[f64], k: &[f64], a: f64| -> Vec<f64> { w.iter().zip(k).map(|(w, k)| w + a * k).collect() };
    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * dt;
        let h = dt.min(t_max - t_prev);
        let k1 = sys.rhs(&w);
        let k2 = sys.rhs(&axpy(&w, &k1, 0.5 * h));
        let k3 = sys.rhs(&axpy(&w, &k2, 0.5 * h));
        let k4 = sys.rhs(&axpy(&w, &k3, h));
        let next: Vec<f64> =
            (0..w.len()).map(|i| w[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
        let t = if step == steps { t_max } else { step as f64 * dt };
        if next.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            truncated = Some(format!("metric left [e^-{BLOW_UP}, e^{BLOW_UP}] on the grid at t = {t:e}"));
            break;
        }
        w = next;
        let m = monitor(t, &w);
        if pinching_held && m.h_max <= -0.5 * kappa1 {
            t0 = t;
        } else {
            pinching_held = false;
        }
        monitors.push(m);
        profiles.push(g0.with_values(w.clone()));
    }
    Ok(FlowRun { dt, t_max, profiles, monitors, kappa1, t0, pinching_held, spectral_radius, truncated })
}

/// Columnar dump of a continuity state against its background metric.
pub fn state_to_text(omega: &RadialProfile, state: &ContinuityState) -> String {
    let sys = MaSystem::new(omega);
    let omega_t = sys.omega_t(state.t, &state.u);
    let f = sys.residual(state.t, &state.u);
    let mut out = format!("# {DUMP_FORMAT} v{DUMP_VERSION} state\n");
    let _ = writeln!(out, "# t={:e} residual={:e} reference={}", state.t, state.residual, omega.reference);
    out.push_str("s,w,u,trace,residual\n");
    for i in 0..state.u.len() {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e}",
            omega.nodes()[i],
            omega.values[i],
            state.u[i],
            1.0 / omega_t[i],
            f[i]
        );
    }
    out
}
