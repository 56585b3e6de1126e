//! Report documents and their CSV / JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use invmetrics::compare::{ComparisonReport, EvaluationTable};
use invmetrics::{ComplexPoint, C64};
use serde::{Deserialize, Serialize};

use crate::commands::FlowSummary;
use crate::error::CliError;

pub const REPORT_FORMAT: &str = "invmetrics-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("expected csv or json, got {other:?}")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub invmetrics_version: String,
    pub config: BTreeMap<String, String>,
}

/// Wall-clock data, kept apart so the rest of a report is reproducible byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Footer {
    pub generated_unix: u64,
    pub runtime_seconds: f64,
}

#[derive(Clone, Debug)]
pub enum Body {
    Compute(EvaluationTable),
    Compare(ComparisonReport),
    Flow(FlowSummary),
}

impl Body {
    pub fn command(&self) -> &'static str {
        match self {
            Body::Compute(_) => "compute",
            Body::Compare(_) => "compare",
            Body::Flow(_) => "flow",
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Body::Compute(t) => serde_json::to_value(t),
            Body::Compare(r) => serde_json::to_value(r),
            Body::Flow(f) => serde_json::to_value(f),
        }
        .expect("report bodies serialize")
    }

    pub fn flags(&self) -> &[String] {
        match self {
            Body::Compute(t) => &t.flags,
            Body::Compare(r) => &r.flags,
            Body::Flow(f) => &f.flags,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Document {
    pub provenance: Provenance,
    pub body: Body,
    pub assertions: Vec<Assertion>,
    pub footer: Footer,
}

/// Serialized form; `footer` is always the last key.
#[derive(Serialize, Deserialize)]
pub struct DocumentJson {
    pub format: String,
    pub schema_version: u32,
    pub command: String,
    pub provenance: Provenance,
    pub result: serde_json::Value,
    pub flags: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub footer: Option<Footer>,
}

impl Document {
    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.render_json(),
            Format::Csv => self.render_csv(),
        }
    }

    fn render_json(&self) -> String {
        let doc = DocumentJson {
            format: REPORT_FORMAT.into(),
            schema_version: REPORT_VERSION,
            command: self.body.command().into(),
            provenance: self.provenance.clone(),
            result: self.body.to_json(),
            flags: self.body.flags().to_vec(),
            assertions: self.assertions.clone(),
            footer: Some(self.footer.clone()),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
        s.push('\n');
        s
    }

    fn render_csv(&self) -> String {
        let mut out = format!("# {REPORT_FORMAT} v{REPORT_VERSION} {}\n", self.body.command());
        let _ = writeln!(out, "# config_hash={}", self.provenance.config_hash);
        let _ = writeln!(out, "# invmetrics_version={}", self.provenance.invmetrics_version);
        for (k, v) in &self.provenance.config {
            let _ = writeln!(out, "# config {k}={v}");
        }
        for flag in self.body.flags() {
            let _ = writeln!(out, "# flag: {flag}");
        }
        for a in &self.assertions {
            let _ = writeln!(out, "# assertion,{},{},{}", a.name, if a.passed { "pass" } else { "fail" }, a.detail);
        }
        match &self.body {
            Body::Compute(t) => {
                let _ = writeln!(out, "# semantics: {}", t.semantics);
                let _ = writeln!(out, "# domain={}", t.domain);
                let mut header = vec!["index".to_string(), "point".into(), "direction".into()];
                header.extend(t.metrics.iter().cloned());
                out.push_str(&csv_row(&header));
                for (i, row) in t.rows.iter().enumerate() {
                    let mut cells = vec![i.to_string(), fmt_point(&row.point), fmt_coords(&row.direction)];
                    cells.extend(row.values.iter().map(|v| fmt_opt(*v)));
                    out.push_str(&csv_row(&cells));
                }
            }
            Body::Compare(r) => {
                let _ = writeln!(out, "# semantics: {}", r.semantics);
                let _ = writeln!(out, "# domain={} seed={} samples={}", r.domain, r.seed, r.samples);
                out.push_str("record,first,second,semantics,low,high,argmin,argmax,samples\n");
                for p in &r.pairs {
                    out.push_str(&csv_row(&[
                        "ratio".into(),
                        p.first.clone(),
                        p.second.clone(),
                        p.semantics.clone(),
                        fmt_f(p.inf_ratio),
                        fmt_f(p.sup_ratio),
                        fmt_point(&p.argmin),
                        fmt_point(&p.argmax),
                        p.samples_used.to_string(),
                    ]));
                }
                for c in &r.curvature {
                    out.push_str(&csv_row(&[
                        "curvature".into(),
                        c.metric.clone(),
                        String::new(),
                        "holomorphic_sectional".into(),
                        fmt_opt(c.min_h),
                        fmt_opt(c.max_h),
                        String::new(),
                        String::new(),
                        c.samples_used.to_string(),
                    ]));
                }
            }
            Body::Flow(f) => {
                let _ = writeln!(out, "# start={} kappa1={} t0={} pinching_held={}", f.start, fmt_f(f.kappa1), fmt_f(f.t0), f.pinching_held);
                let _ = writeln!(out, "# window={},{}", fmt_f(f.window[0]), fmt_f(f.window[1]));
                if let Some(t) = &f.truncated {
                    let _ = writeln!(out, "# truncated={t}");
                }
                out.push_str("t,h_max,h_min,envelope,rm_proxy\n");
                for m in &f.monitors {
                    out.push_str(&csv_row(&[fmt_f(m.t), fmt_f(m.h_max), fmt_f(m.h_min), fmt_f(m.envelope), fmt_f(m.rm_proxy)]));
                }
            }
        }
        let _ = writeln!(
            out,
            "# footer,generated_unix={},runtime_seconds={}",
            self.footer.generated_unix, self.footer.runtime_seconds
        );
        out
    }
}

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "null".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "null".into(), fmt_f)
}

fn fmt_c(c: &C64) -> String {
    format!("{}{:+}i", c.re, c.im)
}

fn fmt_coords(c: &[C64]) -> String {
    c.iter().map(fmt_c).collect::<Vec<_>>().join(";")
}

fn fmt_point(p: &ComplexPoint) -> String {
    fmt_coords(p.coords())
}

fn csv_row(cells: &[String]) -> String {
    let mut s = cells
        .iter()
        .map(|c| if c.contains([',', '"', '\n']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c.clone() })
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

/// What `report` needs from a dump of either format.
#[derive(Clone, Debug)]
pub struct DumpSummary {
    pub command: String,
    pub config_hash: String,
    pub assertions: Vec<Assertion>,
    pub flags: Vec<String>,
}

pub fn read_dump(path: &str, text: &str) -> Result<DumpSummary, CliError> {
    let malformed = |reason: String| CliError::Malformed { path: path.to_string(), reason };
    if text.trim_start().starts_with('{') {
        let doc: DocumentJson = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        if doc.format != REPORT_FORMAT || doc.schema_version != REPORT_VERSION {
            return Err(malformed(format!("unsupported format {} v{}", doc.format, doc.schema_version)));
        }
        return Ok(DumpSummary {
            command: doc.command,
            config_hash: doc.provenance.config_hash,
            assertions: doc.assertions,
            flags: doc.flags,
        });
    }
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let prefix = format!("# {REPORT_FORMAT} v{REPORT_VERSION} ");
    let command = header.strip_prefix(&prefix).ok_or_else(|| malformed(format!("unrecognised header {header:?}")))?;
    let mut config_hash = None;
    let mut assertions = Vec::new();
    let mut flags = Vec::new();
    for line in lines {
        let Some(meta) = line.strip_prefix("# ") else { continue };
        if let Some(h) = meta.strip_prefix("config_hash=") {
            config_hash = Some(h.trim().to_string());
        } else if let Some(flag) = meta.strip_prefix("flag: ") {
            flags.push(flag.to_string());
        } else if let Some(a) = meta.strip_prefix("assertion,") {
            let mut parts = a.splitn(3, ',');
            let (Some(name), Some(state), detail) = (parts.next(), parts.next(), parts.next()) else {
                return Err(malformed(format!("bad assertion line {line:?}")));
            };
            let passed = match state {
                "pass" => true,
                "fail" => false,
                _ => return Err(malformed(format!("bad assertion state {state:?}"))),
            };
            assertions.push(Assertion { name: name.into(), passed, detail: detail.unwrap_or("").into() });
        }
    }
    Ok(DumpSummary {
        command: command.trim().to_string(),
        config_hash: config_hash.ok_or_else(|| malformed("missing config_hash".into()))?,
        assertions,
        flags,
    })
}
