//! Pairwise comparison of metrics on a domain.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::{self, BergmanMetric};
use crate::domains::DomainSpec;
use crate::einstein::{self, PathOptions, RadialProfile};
use crate::error::{Error, Result};
use crate::geometry::fields::{BallHyperbolic, Euclidean, PolydiskPoincare, PuncturedDiskPoincare};
use crate::geometry::{self, CMatrix, ComplexPoint, MetricField, TangentVector, C64};
use crate::kobayashi::{self, DiskSearch};
use crate::rng::{self, streams};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const COMPARISON_SEMANTICS: &str = "ratio = second/first. Hermitian pairs: extremes over sample points of the \
generalized eigenvalues of the second metric against the first. Pairs with kobayashi: extremes over sampled \
directions of squared lengths, kobayashi entering as 2*K(x,xi)^2 (Finsler, not Hermitian; the factor 2 matches \
|xi|^2 = g(xi,xi) for omega = (i/2) g dz^dzbar).";

pub const EVALUATION_SEMANTICS: &str =
    "hermitian metrics: |xi|^2_g = g(xi, xi); kobayashi: K(x, xi) (upper bound from the best disk found)";

/// A metric requested on the command line or in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    Euclidean,
    Poincare,
    Bergman { degree: Option<usize>, budget: Option<usize> },
    Kobayashi { poly_degree: usize, max_evals: usize, restarts: usize },
    KahlerEinstein { nodes: usize, start_scale: f64 },
    Radial { path: PathBuf },
}

impl MetricSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MetricSpec::Euclidean => "euclidean",
            MetricSpec::Poincare => "poincare",
            MetricSpec::Bergman { .. } => "bergman",
            MetricSpec::Kobayashi { .. } => "kobayashi",
            MetricSpec::KahlerEinstein { .. } => "kahler_einstein",
            MetricSpec::Radial { .. } => "radial",
        }
    }

    pub fn kobayashi() -> Self {
        let d = DiskSearch::default();
        MetricSpec::Kobayashi { poly_degree: d.poly_degree, max_evals: d.max_evals, restarts: d.restarts }
    }

    pub fn kahler_einstein() -> Self {
        MetricSpec::KahlerEinstein { nodes: einstein::DEFAULT_NODES, start_scale: 1.0 }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Euclidean | MetricSpec::Poincare => write!(f, "{}", self.label()),
            MetricSpec::Bergman { degree, budget } => {
                let mut parts = Vec::new();
                if let Some(d) = degree {
                    parts.push(format!("degree={d}"));
                }
                if let Some(b) = budget {
                    parts.push(format!("budget={b}"));
                }
                if parts.is_empty() {
                    write!(f, "bergman")
                } else {
                    write!(f, "bergman({})", parts.join(","))
                }
            }
            MetricSpec::Kobayashi { poly_degree, max_evals, restarts } => {
                write!(f, "kobayashi(m={poly_degree},evals={max_evals},restarts={restarts})")
            }
            MetricSpec::KahlerEinstein { nodes, start_scale } => write!(f, "kahler_einstein(nodes={nodes},start={start_scale})"),
            MetricSpec::Radial { path } => write!(f, "radial(file={})", path.display()),
        }
    }
}

fn parse_args(name: &str, args: &str) -> Result<Vec<(String, String)>> {
    if args.trim().is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("{name}: expected key=value, found {kv:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn parse_num<T: FromStr>(name: &str, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse(format!("{name}: bad value {v:?} for {key}")))
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        let (name, args) = match t.find('(') {
            Some(i) if t.ends_with(')') => (t[..i].trim(), &t[i + 1..t.len() - 1]),
            Some(_) => return Err(Error::Parse(format!("unbalanced parentheses in metric {t:?}"))),
            None => (t, ""),
        };
        let args = parse_args(name, args)?;
        let unknown = |k: &str| Error::Parse(format!("{name}: unknown parameter {k:?}"));
        match name {
            "euclidean" | "poincare" => {
                if let Some((k, _)) = args.first() {
                    return Err(unknown(k));
                }
                Ok(if name == "euclidean" { MetricSpec::Euclidean } else { MetricSpec::Poincare })
            }
            "bergman" => {
                let (mut degree, mut budget) = (None, None);
                for (k, v) in &args {
                    match k.as_str() {
                        "degree" => degree = Some(parse_num(name, k, v)?),
                        "budget" => budget = Some(parse_num(name, k, v)?),
                        _ => return Err(unknown(k)),
                    }
                }
                Ok(MetricSpec::Bergman { degree, budget })
            }
            "kobayashi" => {
                let MetricSpec::Kobayashi { mut poly_degree, mut max_evals, mut restarts } = MetricSpec::kobayashi() else {
                    unreachable!()
                };
                for (k, v) in &args {
                    match k.as_str() {
                        "m" => poly_degree = parse_num(name, k, v)?,
                        "evals" | "budget" => max_evals = parse_num(name, k, v)?,
                        "restarts" => restarts = parse_num(name, k, v)?,
                        _ => return Err(unknown(k)),
                    }
                }
                Ok(MetricSpec::Kobayashi { poly_degree, max_evals, restarts })
            }
            "kahler_einstein" => {
                let (mut nodes, mut start_scale) = (einstein::DEFAULT_NODES, 1.0);
                for (k, v) in &args {
                    match k.as_str() {
                        "nodes" => nodes = parse_num(name, k, v)?,
                        "start" => start_scale = parse_num(name, k, v)?,
                        _ => return Err(unknown(k)),
                    }
                }
                Ok(MetricSpec::KahlerEinstein { nodes, start_scale })
            }
            "radial" => match args.as_slice() {
                [(k, v)] if k == "file" => Ok(MetricSpec::Radial { path: PathBuf::from(v) }),
                _ => Err(Error::Parse("radial: expected radial(file=PATH)".into())),
            },
            _ => Err(Error::Parse(format!("unknown metric {name:?}"))),
        }
    }
}

/// Split a comma-separated metric list, keeping commas inside parentheses.
pub fn parse_metric_list(text: &str) -> Result<Vec<MetricSpec>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::Parse(format!("unbalanced parentheses in {text:?}")));
        }
    }
    out.push(&text[start..]);
    out.into_iter().filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// A metric ready for evaluation.
#[derive(Clone)]
pub enum BuiltMetric {
    Hermitian { label: String, field: Arc<dyn MetricField> },
    Kobayashi { label: String, domain: DomainSpec, search: DiskSearch },
}

impl fmt::Debug for BuiltMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BuiltMetric({})", self.label())
    }
}

impl BuiltMetric {
    pub fn label(&self) -> &str {
        match self {
            BuiltMetric::Hermitian { label, .. } | BuiltMetric::Kobayashi { label, .. } => label,
        }
    }

    pub fn is_hermitian(&self) -> bool {
        matches!(self, BuiltMetric::Hermitian { .. })
    }

    /// `|ξ|²_g` for Hermitian metrics, `2𝔎(x, ξ)²` for the Kobayashi metric.
    pub fn squared_length(&self, v: &TangentVector) -> Result<f64> {
        match self {
            BuiltMetric::Hermitian { field, .. } => geometry::norm_sq(field.as_ref(), v),
            BuiltMetric::Kobayashi { .. } => {
                let k = self.value(v)?;
                Ok(2.0 * k * k)
            }
        }
    }

    /// The quantity written by `compute`: `|ξ|²_g` or `𝔎(x, ξ)`.
    pub fn value(&self, v: &TangentVector) -> Result<f64> {
        match self {
            BuiltMetric::Hermitian { field, .. } => geometry::norm_sq(field.as_ref(), v),
            BuiltMetric::Kobayashi { domain, search, .. } => Ok(kobayashi::kr_upper(domain, &v.base, v, search)?.value),
        }
    }

    fn matrix(&self, z: &ComplexPoint) -> Result<CMatrix> {
        match self {
            BuiltMetric::Hermitian { field, .. } => {
                let g = field.eval(z)?;
                if g.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
                    Ok(g)
                } else {
                    Err(Error::MetricDegenerate(format!("non-finite coefficients at {z}")))
                }
            }
            BuiltMetric::Kobayashi { .. } => Err(Error::Internal("kobayashi has no Hermitian matrix".into())),
        }
    }
}

fn unit_disk_radius(domain: &DomainSpec) -> Option<f64> {
    match domain {
        DomainSpec::Ball { radius, dim: 1 } => Some(*radius),
        _ => None,
    }
}

/// Construct the field for `spec` on `domain`; `seed` drives every random choice.
pub fn build_metric(spec: &MetricSpec, domain: &DomainSpec, seed: u64) -> Result<BuiltMetric> {
    let label = spec.label().to_string();
    let hermitian = |field: Arc<dyn MetricField>| Ok(BuiltMetric::Hermitian { label: label.clone(), field });
    let unsupported = || Err(Error::Unsupported(format!("metric {spec} is not available on {domain}")));
    match spec {
        MetricSpec::Euclidean => hermitian(Arc::new(Euclidean::new(domain.dim()))),
        MetricSpec::Poincare => match domain {
            DomainSpec::Ball { radius, dim } => hermitian(Arc::new(BallHyperbolic::new(*dim, *radius, 2.0)?)),
            DomainSpec::Polydisk { radii } => hermitian(Arc::new(PolydiskPoincare::new(radii.clone())?)),
            DomainSpec::PuncturedDisk => hermitian(Arc::new(PuncturedDiskPoincare)),
            _ => unsupported(),
        },
        MetricSpec::Bergman { degree, budget } => {
            let degree = degree.unwrap_or_else(|| bergman::default_degree(domain));
            let budget = budget.unwrap_or_else(|| bergman::default_budget(domain, degree));
            let model = bergman::build_kernel(domain, degree, budget, seed)?;
            hermitian(Arc::new(BergmanMetric::new(model)))
        }
        MetricSpec::Kobayashi { poly_degree, max_evals, restarts } => Ok(BuiltMetric::Kobayashi {
            label,
            domain: domain.clone(),
            search: DiskSearch { poly_degree: *poly_degree, max_evals: *max_evals, restarts: *restarts, seed, ..Default::default() },
        }),
        MetricSpec::KahlerEinstein { nodes, start_scale } => {
            if unit_disk_radius(domain) != Some(1.0) {
                return unsupported();
            }
            let start = RadialProfile::poincare(*nodes)?.scaled(*start_scale)?;
            let path = einstein::continuity_path(&start, &PathOptions::default())?;
            if !path.verified {
                return Err(Error::Internal(format!(
                    "Kähler-Einstein defect {:.3e} above tolerance {:.0e}",
                    path.einstein_defect,
                    einstein::KE_TOLERANCE
                )));
            }
            hermitian(Arc::new(path.kahler_einstein))
        }
        MetricSpec::Radial { path } => {
            if unit_disk_radius(domain).is_none() {
                return unsupported();
            }
            let text = std::fs::read_to_string(path)?;
            hermitian(Arc::new(RadialProfile::from_text(&text)?))
        }
    }
}

/// Which points and directions a comparison visits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
    /// Points stay within this fraction of the way from the centre to the outer boundary.
    pub max_depth: f64,
    /// Smallest `|z|` visited on the punctured disk.
    pub min_radius: f64,
}

impl SamplePlan {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { count, seed, max_depth: 0.7, min_radius: 1e-3 }
    }
}

fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

fn in_core(domain: &DomainSpec, z: &ComplexPoint, plan: &SamplePlan) -> Result<bool> {
    if !domain.contains(z)? {
        return Ok(false);
    }
    let c = z.coords();
    Ok(match domain {
        DomainSpec::Ball { radius, .. } => z.norm() <= plan.max_depth * radius,
        DomainSpec::Polydisk { radii } => c.iter().zip(radii).all(|(x, r)| x.norm() <= plan.max_depth * r),
        DomainSpec::PuncturedDisk => (plan.min_radius..=plan.max_depth).contains(&z.norm()),
        DomainSpec::Annulus { inner, outer } => {
            domain.boundary_distance(z)? >= 0.5 * (1.0 - plan.max_depth) * (outer - inner)
        }
        DomainSpec::DfhOmega => domain.boundary_distance(z)? >= 0.5 * (1.0 - plan.max_depth),
    })
}

fn bounding_box(domain: &DomainSpec) -> Vec<(f64, f64)> {
    match domain {
        DomainSpec::Ball { radius, dim } => vec![(-radius, *radius); 2 * dim],
        DomainSpec::Polydisk { radii } => radii.iter().flat_map(|r| [(-r, *r), (-r, *r)]).collect(),
        DomainSpec::PuncturedDisk => vec![(-1.0, 1.0); 2],
        DomainSpec::Annulus { outer, .. } => vec![(-outer, *outer); 2],
        DomainSpec::DfhOmega => crate::domains::DFH_BOX.to_vec(),
    }
}

/// Tangent vectors at reproducible points of `domain`.
///
/// One-variable disks get a geometric ladder of radii down to the puncture (or to
/// `min_radius` times the radius), filled up with uniform points of the core region.
pub fn comparison_samples(domain: &DomainSpec, plan: &SamplePlan) -> Result<Vec<TangentVector>> {
    if plan.count == 0 {
        return Err(Error::EmptySamples);
    }
    if !(plan.max_depth > 0.0 && plan.max_depth < 1.0) || !(plan.min_radius > 0.0 && plan.min_radius < plan.max_depth) {
        return Err(Error::InvalidInput(format!(
            "sample plan needs 0 < min_radius < max_depth < 1, got {} and {}",
            plan.min_radius, plan.max_depth
        )));
    }
    let mut rng = rng::stream(plan.seed, streams::PROBES);
    let n = domain.dim();
    let mut points = Vec::with_capacity(plan.count);
    let ladder_radius = match domain {
        DomainSpec::Ball { radius, dim: 1 } => Some(*radius),
        DomainSpec::PuncturedDisk => Some(1.0),
        _ => None,
    };
    if let Some(r) = ladder_radius {
        let rungs = (plan.count / 3).max(2).min(plan.count);
        let ratio = (plan.max_depth / plan.min_radius).powf(1.0 / (rungs - 1) as f64);
        for k in 0..rungs {
            let rho = r * plan.min_radius * ratio.powi(k as i32);
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            points.push(ComplexPoint::scalar(C64::from_polar(rho.min(plan.max_depth * r), theta))?);
        }
    }
    let bbox = bounding_box(domain);
    let mut attempts = 0usize;
    while points.len() < plan.count {
        attempts += 1;
        if attempts > 10_000 * plan.count {
            return Err(Error::Internal(format!("could not place {} samples in {domain}", plan.count)));
        }
        let coords: Vec<f64> = bbox.iter().map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
        let z = ComplexPoint::new(coords.chunks(2).map(|c| C64::new(c[0], c[1])).collect())?;
        if in_core(domain, &z, plan)? {
            points.push(z);
        }
    }
    points
        .into_iter()
        .map(|z| {
            let xi = random_unit(&mut rng, n);
            TangentVector::new(z, xi)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairStats {
    pub first: String,
    pub second: String,
    /// `hermitian` or `directional`.
    pub semantics: String,
    pub inf_ratio: f64,
    pub sup_ratio: f64,
    pub argmin: ComplexPoint,
    pub argmax: ComplexPoint,
    pub samples_used: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureSummary {
    pub metric: String,
    pub min_h: Option<f64>,
    pub max_h: Option<f64>,
    pub samples_used: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub domain: String,
    pub seed: u64,
    pub metrics: Vec<String>,
    pub semantics: String,
    pub samples: usize,
    pub pairs: Vec<PairStats>,
    pub curvature: Vec<CurvatureSummary>,
    /// Named conditions: divergent or failed evaluations, skipped curvature.
    pub flags: Vec<String>,
}

impl ComparisonReport {
    pub fn pair(&self, first: &str, second: &str) -> Option<&PairStats> {
        self.pairs.iter().find(|p| p.first == first && p.second == second)
    }
}

/// Per-sample evaluation of one metric, `None` where it failed.
struct Column {
    matrices: Vec<Option<CMatrix>>,
    squared: Vec<Option<f64>>,
}

fn flag_failures(label: &str, what: &str, samples: &[TangentVector], errors: &[Option<String>], flags: &mut Vec<String>) {
    let failed: Vec<usize> = errors.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|_| i)).collect();
    if let Some(&first) = failed.first() {
        flags.push(format!(
            "{label}: {what} not finite at {} of {} samples (first at {}: {})",
            failed.len(),
            samples.len(),
            samples[first].base,
            errors[first].as_deref().unwrap_or("")
        ));
    }
}

fn evaluate_column(metric: &BuiltMetric, samples: &[TangentVector], flags: &mut Vec<String>) -> Column {
    let results: Vec<(Option<CMatrix>, std::result::Result<f64, String>)> = samples
        .par_iter()
        .map(|v| match metric {
            BuiltMetric::Hermitian { .. } => match metric.matrix(&v.base) {
                Ok(g) => {
                    let sq = metric.squared_length(v).map_err(|e| e.to_string());
                    (Some(g), sq)
                }
                Err(e) => (None, Err(e.to_string())),
            },
            BuiltMetric::Kobayashi { .. } => (None, metric.squared_length(v).map_err(|e| e.to_string())),
        })
        .collect();
    let errors: Vec<Option<String>> = results
        .iter()
        .map(|(_, r)| match r {
            Ok(x) if x.is_finite() => None,
            Ok(x) => Some(format!("value {x}")),
            Err(e) => Some(e.clone()),
        })
        .collect();
    flag_failures(metric.label(), "value", samples, &errors, flags);
    let squared = results.iter().map(|(_, r)| r.as_ref().ok().copied().filter(|x| x.is_finite())).collect();
    let matrices = results.into_iter().map(|(g, r)| if r.is_ok() { g } else { None }).collect();
    Column { matrices, squared }
}

fn pair_stats(a: (&BuiltMetric, &Column), b: (&BuiltMetric, &Column), samples: &[TangentVector]) -> Result<PairStats> {
    let hermitian = a.0.is_hermitian() && b.0.is_hermitian();
    let mut lo = (f64::INFINITY, 0usize);
    let mut hi = (f64::NEG_INFINITY, 0usize);
    let mut used = 0;
    for (i, v) in samples.iter().enumerate() {
        let (low, high) = if hermitian {
            match (&a.1.matrices[i], &b.1.matrices[i]) {
                (Some(ga), Some(gb)) => {
                    let eig = geometry::generalized_eigenvalues(ga, gb, &v.base)?;
                    (eig[0], eig[eig.len() - 1])
                }
                _ => continue,
            }
        } else {
            match (a.1.squared[i], b.1.squared[i]) {
                (Some(x), Some(y)) => (y / x, y / x),
                _ => continue,
            }
        };
        used += 1;
        if low < lo.0 {
            lo = (low, i);
        }
        if high > hi.0 {
            hi = (high, i);
        }
    }
    if used == 0 {
        return Err(Error::EmptySamples);
    }
    Ok(PairStats {
        first: a.0.label().to_string(),
        second: b.0.label().to_string(),
        semantics: if hermitian { "hermitian" } else { "directional" }.to_string(),
        inf_ratio: lo.0,
        sup_ratio: hi.0,
        argmin: samples[lo.1].base.clone(),
        argmax: samples[hi.1].base.clone(),
        samples_used: used,
    })
}

fn curvature_summary(metric: &BuiltMetric, samples: &[TangentVector], flags: &mut Vec<String>) -> CurvatureSummary {
    let BuiltMetric::Hermitian { field, label } = metric else {
        flags.push(format!("{}: curvature not defined for a Finsler metric", metric.label()));
        return CurvatureSummary { metric: metric.label().to_string(), min_h: None, max_h: None, samples_used: 0 };
    };
    let results: Vec<std::result::Result<f64, String>> = samples
        .par_iter()
        .map(|v| geometry::holo_sectional_curvature(field.as_ref(), v).map_err(|e| e.to_string()))
        .collect();
    let errors: Vec<Option<String>> = results
        .iter()
        .map(|r| match r {
            Ok(h) if h.is_finite() => None,
            Ok(h) => Some(format!("value {h}")),
            Err(e) => Some(e.clone()),
        })
        .collect();
    flag_failures(label, "holomorphic curvature", samples, &errors, flags);
    let good: Vec<f64> = results.into_iter().filter_map(|r| r.ok()).filter(|h| h.is_finite()).collect();
    CurvatureSummary {
        metric: label.clone(),
        min_h: good.iter().copied().reduce(f64::min),
        max_h: good.iter().copied().reduce(f64::max),
        samples_used: good.len(),
    }
}

/// Pairwise ratio table and curvature summary of `metrics` over `samples`.
pub fn compare(domain: &DomainSpec, metrics: &[BuiltMetric], samples: &[TangentVector], seed: u64) -> Result<ComparisonReport> {
    if metrics.len() < 2 {
        return Err(Error::InvalidInput(format!("comparison needs at least two metrics, got {}", metrics.len())));
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut flags = Vec::new();
    let columns: Vec<Column> = metrics.iter().map(|m| evaluate_column(m, samples, &mut flags)).collect();
    let mut pairs = Vec::new();
    for i in 0..metrics.len() {
        for j in i + 1..metrics.len() {
            match pair_stats((&metrics[i], &columns[i]), (&metrics[j], &columns[j]), samples) {
                Ok(p) => pairs.push(p),
                Err(Error::EmptySamples) => {
                    flags.push(format!("{}/{}: no sample where both metrics are finite", metrics[i].label(), metrics[j].label()))
                }
                Err(e) => return Err(e),
            }
        }
    }
    let curvature = metrics.iter().map(|m| curvature_summary(m, samples, &mut flags)).collect();
    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        domain: domain.to_string(),
        seed,
        metrics: metrics.iter().map(|m| m.label().to_string()).collect(),
        semantics: COMPARISON_SEMANTICS.to_string(),
        samples: samples.len(),
        pairs,
        curvature,
        flags,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub point: ComplexPoint,
    pub direction: Vec<C64>,
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub schema_version: u32,
    pub domain: String,
    pub metrics: Vec<String>,
    pub semantics: String,
    pub rows: Vec<EvaluationRow>,
    pub flags: Vec<String>,
}

/// Values of every metric at every sample; failures become `None` with a flag.
pub fn evaluate(domain: &DomainSpec, metrics: &[BuiltMetric], samples: &[TangentVector]) -> Result<EvaluationTable> {
    if metrics.is_empty() {
        return Err(Error::InvalidInput("no metrics requested".into()));
    }
    let mut flags = Vec::new();
    let mut columns = Vec::new();
    for m in metrics {
        let results: Vec<std::result::Result<f64, String>> =
            samples.par_iter().map(|v| m.value(v).map_err(|e| e.to_string())).collect();
        let errors: Vec<Option<String>> = results
            .iter()
            .map(|r| match r {
                Ok(x) if x.is_finite() => None,
                Ok(x) => Some(format!("value {x}")),
                Err(e) => Some(e.clone()),
            })
            .collect();
        flag_failures(m.label(), "value", samples, &errors, &mut flags);
        columns.push(results.into_iter().map(|r| r.ok().filter(|x| x.is_finite())).collect::<Vec<_>>());
    }
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, v)| EvaluationRow {
            point: v.base.clone(),
            direction: v.components.clone(),
            values: columns.iter().map(|c| c[i]).collect(),
        })
        .collect();
    Ok(EvaluationTable {
        schema_version: REPORT_SCHEMA_VERSION,
        domain: domain.to_string(),
        metrics: metrics.iter().map(|m| m.label().to_string()).collect(),
        semantics: EVALUATION_SEMANTICS.to_string(),
        rows,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_grammar() {
        let list = parse_metric_list("poincare, bergman(degree=20,budget=484),kobayashi(m=2)").unwrap();
        assert_eq!(list[0], MetricSpec::Poincare);
        assert_eq!(list[1], MetricSpec::Bergman { degree: Some(20), budget: Some(484) });
        assert!(matches!(list[2], MetricSpec::Kobayashi { poly_degree: 2, .. }));
        for spec in &list {
            assert_eq!(&spec.to_string().parse::<MetricSpec>().unwrap(), spec);
        }
        assert!(parse_metric_list("bergman(degree=20").is_err());
        assert!("hodge".parse::<MetricSpec>().is_err());
        assert!("poincare(x=1)".parse::<MetricSpec>().is_err());
        assert!(parse_metric_list("").unwrap().is_empty());
    }

    #[test]
    fn samples_are_reproducible_and_reach_the_puncture() {
        let plan = SamplePlan::new(30, 11);
        let a = comparison_samples(&DomainSpec::PuncturedDisk, &plan).unwrap();
        let b = comparison_samples(&DomainSpec::PuncturedDisk, &plan).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let min = a.iter().map(|v| v.base.norm()).fold(f64::INFINITY, f64::min);
        assert!((min - 1e-3).abs() < 1e-12);
        assert!(a.iter().all(|v| v.base.norm() <= 0.7 + 1e-12));
        let dfh = comparison_samples(&DomainSpec::DfhOmega, &SamplePlan::new(3, 1)).unwrap();
        assert!(dfh.iter().all(|v| DomainSpec::DfhOmega.contains(&v.base).unwrap()));
    }

    #[test]
    fn poincare_against_itself() {
        let d = DomainSpec::unit_disk();
        let m = [build_metric(&MetricSpec::Poincare, &d, 1).unwrap(), build_metric(&MetricSpec::Poincare, &d, 1).unwrap()];
        let s = comparison_samples(&d, &SamplePlan::new(12, 3)).unwrap();
        let r = compare(&d, &m, &s, 3).unwrap();
        assert_eq!((r.pairs[0].inf_ratio, r.pairs[0].sup_ratio), (1.0, 1.0));
        let c = &r.curvature[0];
        assert!((c.min_h.unwrap() + 1.0).abs() < 1e-9 && (c.max_h.unwrap() + 1.0).abs() < 1e-9);
        assert!(r.flags.is_empty(), "{:?}", r.flags);
    }

    #[test]
    fn punctured_disk_poincare_dominates_bergman_near_the_puncture() {
        let d = DomainSpec::PuncturedDisk;
        let m = [
            build_metric(&MetricSpec::Bergman { degree: Some(20), budget: None }, &d, 5).unwrap(),
            build_metric(&MetricSpec::Poincare, &d, 5).unwrap(),
        ];
        let s = comparison_samples(&d, &SamplePlan::new(12, 5)).unwrap();
        let r = compare(&d, &m, &s, 5).unwrap();
        assert!(r.pairs[0].sup_ratio > 1e3, "{}", r.pairs[0].sup_ratio);
    }

    #[test]
    fn failures_are_flagged_not_printed() {
        let d = DomainSpec::PuncturedDisk;
        let m = [build_metric(&MetricSpec::Poincare, &d, 1).unwrap()];
        let v = vec![
            TangentVector::new(ComplexPoint::real(&[0.5]).unwrap(), vec![C64::new(1.0, 0.0)]).unwrap(),
            TangentVector::new(ComplexPoint::real(&[0.0]).unwrap(), vec![C64::new(1.0, 0.0)]).unwrap(),
        ];
        let t = evaluate(&d, &m, &v).unwrap();
        assert!(t.rows[0].values[0].is_some());
        assert_eq!(t.rows[1].values[0], None);
        assert_eq!(t.flags.len(), 1);
        assert!(t.flags[0].starts_with("poincare:"));
    }

    #[test]
    fn unsupported_combinations() {
        assert!(matches!(
            build_metric(&MetricSpec::kahler_einstein(), &DomainSpec::PuncturedDisk, 1),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(build_metric(&MetricSpec::Poincare, &DomainSpec::DfhOmega, 1), Err(Error::Unsupported(_))));
        let d = DomainSpec::unit_disk();
        let one = [build_metric(&MetricSpec::Euclidean, &d, 1).unwrap()];
        assert!(compare(&d, &one, &comparison_samples(&d, &SamplePlan::new(3, 1)).unwrap(), 1).is_err());
    }
}
