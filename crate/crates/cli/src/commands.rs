//! The `compute`, `compare`, `flow` and `report` commands.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use invmetrics::compare::{self, BuiltMetric, ComparisonReport, EvaluationTable, MetricSpec, SamplePlan};
use invmetrics::einstein::{self, FlowMonitor, RadialProfile, Reference};
use invmetrics::{ComplexPoint, DomainSpec, TangentVector, C64};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::CliError;
use crate::output::{read_dump, Assertion, Body, Document, Footer, Format, Provenance};

pub const DEFAULT_SAMPLES: usize = 24;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowSummary {
    pub start: String,
    pub nodes: usize,
    pub s_max: f64,
    pub dt: f64,
    pub t_max: f64,
    pub kappa1: f64,
    pub t0: f64,
    pub pinching_held: bool,
    /// `[min, max]` of `h(t) = max H(g(t))` over the trajectory.
    pub window: [f64; 2],
    pub spectral_radius: f64,
    pub truncated: Option<String>,
    pub monitors: Vec<FlowMonitor>,
    pub flags: Vec<String>,
}

/// Parse `a`, `a+bi`, `bi`.
pub fn parse_complex(text: &str) -> Result<C64, CliError> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    t.parse::<C64>().map_err(|_| CliError::Usage(format!("cannot parse complex number {text:?}")))
}

/// Comma-separated complex coordinates.
pub fn parse_coords(text: &str) -> Result<Vec<C64>, CliError> {
    text.split(',').map(parse_complex).collect()
}

fn domain(cfg: &Config) -> Result<DomainSpec, CliError> {
    cfg.required("run", "domain")
}

fn seed(cfg: &Config) -> Result<u64, CliError> {
    cfg.required("run", "seed")
}

fn metrics(cfg: &Config) -> Result<Vec<MetricSpec>, CliError> {
    let text = cfg.str("run", "metrics").unwrap_or("");
    let specs = compare::parse_metric_list(text).map_err(|e| CliError::Usage(format!("run.metrics: {e}")))?;
    if specs.is_empty() {
        return Err(CliError::Usage("run.metrics names no metric".into()));
    }
    Ok(specs)
}

fn build_all(specs: &[MetricSpec], domain: &DomainSpec, seed: u64) -> Result<Vec<BuiltMetric>, CliError> {
    specs
        .iter()
        .map(|s| compare::build_metric(s, domain, seed).map_err(|e| CliError::core(format!("building metric {s}"), e)))
        .collect()
}

fn samples(cfg: &Config, domain: &DomainSpec, seed: u64) -> Result<Vec<TangentVector>, CliError> {
    if let Some(point) = cfg.str("run", "point") {
        let z = parse_coords(point)?;
        if z.len() != domain.dim() {
            return Err(CliError::Usage(format!("point has {} coordinates, domain {domain} has dimension {}", z.len(), domain.dim())));
        }
        let xi = match cfg.str("run", "direction") {
            Some(d) => parse_coords(d)?,
            None => (0..z.len()).map(|i| if i == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect(),
        };
        let base = ComplexPoint::new(z).map_err(|e| CliError::Usage(format!("run.point: {e}")))?;
        let v = TangentVector::new(base, xi).map_err(|e| CliError::Usage(format!("run.direction: {e}")))?;
        return Ok(vec![v]);
    }
    let mut plan = SamplePlan::new(cfg.or("run", "samples", DEFAULT_SAMPLES)?, seed);
    plan.max_depth = cfg.or("samples", "max_depth", plan.max_depth)?;
    plan.min_radius = cfg.or("samples", "min_radius", plan.min_radius)?;
    compare::comparison_samples(domain, &plan).map_err(|e| CliError::core("sampling", e))
}

fn numbers(text: &str, count: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != count {
        return Err(CliError::Usage(format!("{what}: expected {count} comma-separated fields, got {text:?}")));
    }
    parts.iter().map(|p| p.parse::<f64>().map_err(|_| CliError::Usage(format!("{what}: bad number {p:?}")))).collect()
}

/// Split an assertion list on `;`, each entry `name,name,...,number,...`.
fn entries(text: &str) -> impl Iterator<Item = &str> {
    text.split(';').map(str::trim).filter(|e| !e.is_empty())
}

fn split_labels<'a>(entry: &'a str, labels: usize, what: &str) -> Result<(Vec<&'a str>, &'a str), CliError> {
    let mut parts = entry.splitn(labels + 1, ',');
    let names: Vec<&str> = (0..labels).filter_map(|_| parts.next().map(str::trim)).collect();
    match parts.next() {
        Some(rest) if names.len() == labels => Ok((names, rest)),
        _ => Err(CliError::Usage(format!("{what}: malformed entry {entry:?}"))),
    }
}

fn ratio_extremes(report: &ComparisonReport, a: &str, b: &str) -> Option<(f64, f64)> {
    if let Some(p) = report.pair(a, b) {
        return Some((p.inf_ratio, p.sup_ratio));
    }
    report.pair(b, a).map(|p| (1.0 / p.sup_ratio, 1.0 / p.inf_ratio))
}

fn compare_assertions(cfg: &Config, report: &ComparisonReport) -> Result<Vec<Assertion>, CliError> {
    let mut out = Vec::new();
    if let Some(text) = cfg.str("assert", "expect_ratio_band") {
        for e in entries(text) {
            let (names, rest) = split_labels(e, 2, "assert.expect_ratio_band")?;
            let band = numbers(rest, 2, "assert.expect_ratio_band")?;
            let name = format!("ratio_band {}/{}", names[1], names[0]);
            let (passed, detail) = match ratio_extremes(report, names[0], names[1]) {
                Some((lo, hi)) => (band[0] <= lo && hi <= band[1], format!("observed [{lo}; {hi}] expected within [{}; {}]", band[0], band[1])),
                None => (false, "pair not in report".into()),
            };
            out.push(Assertion { name, passed, detail });
        }
    }
    if let Some(text) = cfg.str("assert", "expect_sup_above") {
        for e in entries(text) {
            let (names, rest) = split_labels(e, 2, "assert.expect_sup_above")?;
            let bound = numbers(rest, 1, "assert.expect_sup_above")?[0];
            let name = format!("sup_above {}/{}", names[1], names[0]);
            let (passed, detail) = match ratio_extremes(report, names[0], names[1]) {
                Some((_, hi)) => (hi > bound, format!("observed sup {hi} expected above {bound}")),
                None => (false, "pair not in report".into()),
            };
            out.push(Assertion { name, passed, detail });
        }
    }
    Ok(out)
}

fn value_assertions(cfg: &Config, table: &EvaluationTable) -> Result<Vec<Assertion>, CliError> {
    let mut out = Vec::new();
    if let Some(text) = cfg.str("assert", "expect_value") {
        for e in entries(text) {
            let (names, rest) = split_labels(e, 1, "assert.expect_value")?;
            let band = numbers(rest, 2, "assert.expect_value")?;
            let name = format!("value {}", names[0]);
            let (passed, detail) = match table.metrics.iter().position(|m| m == names[0]) {
                Some(col) => {
                    let vals: Vec<f64> = table.rows.iter().filter_map(|r| r.values[col]).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let missing = table.rows.len() - vals.len();
                    (
                        !vals.is_empty() && missing == 0 && band[0] <= lo && hi <= band[1],
                        format!("observed [{lo}; {hi}] over {} values ({missing} missing) expected within [{}; {}]", vals.len(), band[0], band[1]),
                    )
                }
                None => (false, "metric not evaluated".into()),
            };
            out.push(Assertion { name, passed, detail });
        }
    }
    Ok(out)
}

fn provenance(cfg: &Config) -> Provenance {
    Provenance {
        config_hash: cfg.hash(),
        invmetrics_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.resolved(),
    }
}

fn finish(cfg: &Config, body: Body, assertions: Vec<Assertion>, started: Instant) -> Document {
    let generated_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    Document {
        provenance: provenance(cfg),
        body,
        assertions,
        footer: Footer { generated_unix, runtime_seconds: started.elapsed().as_secs_f64() },
    }
}

pub fn compute(cfg: &Config) -> Result<Document, CliError> {
    let started = Instant::now();
    let domain = domain(cfg)?;
    let seed = seed(cfg)?;
    let specs = metrics(cfg)?;
    let built = build_all(&specs, &domain, seed)?;
    let samples = samples(cfg, &domain, seed)?;
    let table = compare::evaluate(&domain, &built, &samples).map_err(|e| CliError::core("evaluation", e))?;
    let assertions = value_assertions(cfg, &table)?;
    Ok(finish(cfg, Body::Compute(table), assertions, started))
}

pub fn compare(cfg: &Config) -> Result<Document, CliError> {
    let started = Instant::now();
    let domain = domain(cfg)?;
    let seed = seed(cfg)?;
    let specs = metrics(cfg)?;
    if specs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two metrics".into()));
    }
    let built = build_all(&specs, &domain, seed)?;
    let samples = samples(cfg, &domain, seed)?;
    let report = compare::compare(&domain, &built, &samples, seed).map_err(|e| CliError::core("comparison", e))?;
    let assertions = compare_assertions(cfg, &report)?;
    Ok(finish(cfg, Body::Compare(report), assertions, started))
}

fn flow_start(cfg: &Config, nodes: usize) -> Result<(String, RadialProfile), CliError> {
    let start = cfg.str("flow", "start").unwrap_or("poincare").trim().to_string();
    let scale: f64 = cfg.or("flow", "scale", 1.0)?;
    let bad = |e| CliError::core("initial metric", e);
    let g0 = match start.as_str() {
        "poincare" => RadialProfile::poincare(nodes).map_err(bad)?,
        "perturbed" => {
            let eps: f64 = cfg.or("flow", "perturbation", -0.05)?;
            if !(eps.abs() < 1.0) {
                return Err(CliError::Usage(format!("flow.perturbation must lie in (-1, 1), got {eps}")));
            }
            RadialProfile::from_fn(Reference::poincare(), nodes, 1.0, |s| (1.0 + eps * (1.0 - s)).ln()).map_err(bad)?
        }
        "flat" => {
            let s_max: f64 = cfg.or("flow", "s_max", 0.81)?;
            RadialProfile::flat(nodes, s_max).map_err(bad)?
        }
        "profile" => {
            let path: String = cfg.required("flow", "profile")?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read profile {path}: {e}")))?;
            RadialProfile::from_text(&text).map_err(|e| CliError::Malformed { path: path.clone(), reason: e.to_string() })?
        }
        other => return Err(CliError::Usage(format!("flow.start must be poincare, perturbed, flat or profile, got {other:?}"))),
    };
    let g0 = if scale == 1.0 { g0 } else { g0.scaled(scale).map_err(bad)? };
    Ok((start, g0))
}

pub fn flow(cfg: &Config) -> Result<Document, CliError> {
    let started = Instant::now();
    seed(cfg)?;
    if let Some(d) = cfg.parsed::<DomainSpec>("run", "domain")? {
        if d != DomainSpec::unit_disk() {
            return Err(CliError::Usage(format!("flow runs on the unit disk, not {d}")));
        }
    }
    let nodes: usize = cfg.or("flow", "nodes", einstein::DEFAULT_FLOW_NODES)?;
    let t_max: f64 = cfg.or("flow", "t_max", 0.05)?;
    let dt: f64 = cfg.or("flow", "dt", 1e-3)?;
    let (start, g0) = flow_start(cfg, nodes)?;
    let run = einstein::ricci_flow_run(&g0, t_max, dt).map_err(|e| CliError::core("ricci flow", e))?;
    let (lo, hi) = run.pinching_window();
    let mut flags = Vec::new();
    if let Some(reason) = &run.truncated {
        flags.push(format!("flow: truncated ({reason})"));
    }
    if !run.pinching_held {
        flags.push(format!("flow: pinching h(t) <= -kappa1/2 lost after t = {}", run.t0));
    }
    let summary = FlowSummary {
        start,
        nodes,
        s_max: g0.s_max(),
        dt,
        t_max,
        kappa1: run.kappa1,
        t0: run.t0,
        pinching_held: run.pinching_held,
        window: [lo, hi],
        spectral_radius: run.spectral_radius,
        truncated: run.truncated.clone(),
        monitors: run.monitors.clone(),
        flags,
    };
    let mut assertions = Vec::new();
    if let Some(text) = cfg.str("assert", "expect_window") {
        let band = numbers(text, 2, "assert.expect_window")?;
        let passed = band[0] <= lo && hi <= band[1];
        assertions.push(Assertion {
            name: "window".into(),
            passed,
            detail: format!("observed [{lo}; {hi}] expected within [{}; {}]", band[0], band[1]),
        });
    }
    Ok(finish(cfg, Body::Flow(summary), assertions, started))
}

/// Render and write to `run.output`, or return the text for stdout.
pub fn emit(cfg: &Config, doc: &Document) -> Result<Option<String>, CliError> {
    let format: Format = cfg.or("run", "format", Format::Json)?;
    let text = doc.render(format);
    match cfg.str("run", "output").map(str::trim) {
        None | Some("-") | Some("") => Ok(Some(text)),
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(None)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReportOutcome {
    pub summary: String,
    pub failed: Vec<String>,
}

pub fn report(paths: &[impl AsRef<Path>]) -> Result<ReportOutcome, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("report needs at least one dump".into()));
    }
    let mut dumps = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let name = p.display().to_string();
        let bytes = std::fs::read(p).map_err(|e| CliError::Usage(format!("cannot read {name}: {e}")))?;
        let text = String::from_utf8(bytes).map_err(|_| CliError::Malformed { path: name.clone(), reason: "invalid UTF-8".into() })?;
        dumps.push((name.clone(), read_dump(&name, &text)?));
    }
    let first_hash = &dumps[0].1.config_hash;
    if let Some((name, d)) = dumps.iter().find(|(_, d)| &d.config_hash != first_hash) {
        return Err(CliError::Provenance(format!(
            "{} has config hash {first_hash}, {name} has {}",
            dumps[0].0, d.config_hash
        )));
    }
    let mut summary = format!("config_hash={first_hash}\n");
    let mut failed = Vec::new();
    for (name, d) in &dumps {
        let passed = d.assertions.iter().filter(|a| a.passed).count();
        summary.push_str(&format!("{name}: {} with {passed}/{} assertions passing, {} flags\n", d.command, d.assertions.len(), d.flags.len()));
        for a in &d.assertions {
            summary.push_str(&format!("  {} {}: {}\n", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail));
            if !a.passed {
                failed.push(format!("{name}: {}", a.name));
            }
        }
        for f in &d.flags {
            summary.push_str(&format!("  flag: {f}\n"));
        }
    }
    Ok(ReportOutcome { summary, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("0.5").unwrap(), C64::new(0.5, 0.0));
        assert_eq!(parse_complex("0.1-0.2i").unwrap(), C64::new(0.1, -0.2));
        assert_eq!(parse_complex(" -0.3i ").unwrap(), C64::new(0.0, -0.3));
        assert_eq!(parse_coords("0.1,0.2i").unwrap().len(), 2);
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn assertion_entries() {
        let (names, rest) = split_labels("poincare, bergman,0.9,1.1", 2, "x").unwrap();
        assert_eq!(names, ["poincare", "bergman"]);
        assert_eq!(numbers(rest, 2, "x").unwrap(), [0.9, 1.1]);
        assert!(split_labels("poincare", 2, "x").is_err());
        assert!(numbers("1,2,3", 2, "x").is_err());
    }
}
