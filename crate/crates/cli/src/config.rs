//! Run configuration: `[section]` / `key = value` files, `INVMETRICS_*` environment
//! overrides and command-line flags, in increasing order of precedence.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "INVMETRICS_";

/// Recognised sections and their keys.
const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["domain", "metrics", "seed", "samples", "format", "output", "point", "direction"]),
    ("samples", &["max_depth", "min_radius"]),
    ("flow", &["start", "scale", "perturbation", "nodes", "s_max", "t_max", "dt", "profile"]),
    ("assert", &["expect_ratio_band", "expect_sup_above", "expect_value", "expect_window"]),
];

/// Keys that only choose where and how results are written; they do not enter the
/// configuration hash.
const PRESENTATION_KEYS: &[(&str, &str)] = &[("run", "format"), ("run", "output")];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize, column: usize },
    Env(String),
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line, column } => write!(f, "{}:{line}:{column}", path.display()),
            Origin::Env(name) => write!(f, "environment variable {name}"),
            Origin::Flag(name) => write!(f, "flag --{name}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    pub value: String,
    pub origin: Origin,
}

#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<(String, String), Entry>,
}

fn known(section: &str, key: &str) -> bool {
    SCHEMA.iter().any(|(s, keys)| *s == section && keys.contains(&key))
}

fn section_known(section: &str) -> bool {
    SCHEMA.iter().any(|(s, _)| *s == section)
}

fn config_error(path: &Path, line: usize, column: usize, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!("{}:{line}:{column}: {msg}", path.display()))
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let indent = raw.len() - raw.trim_start().len();
            let col = |byte: usize| raw[..byte].chars().count() + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') {
                let Some(close) = line.find(']') else {
                    return Err(config_error(path, line_no, col(indent), "unterminated section header"));
                };
                if !line[close + 1..].trim().is_empty() {
                    return Err(config_error(path, line_no, col(indent + close + 1), "unexpected text after section header"));
                }
                let name = line[1..close].trim();
                if !section_known(name) {
                    return Err(config_error(path, line_no, col(indent + 1), format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some(eq) = raw.find('=') else {
                return Err(config_error(path, line_no, col(indent), "expected `key = value`"));
            };
            let key = raw[..eq].trim();
            if key.is_empty() {
                return Err(config_error(path, line_no, col(eq), "missing key before `=`"));
            }
            let Some(sec) = section.as_deref() else {
                return Err(config_error(path, line_no, col(indent), format!("key `{key}` appears before any [section]")));
            };
            if !known(sec, key) {
                return Err(config_error(path, line_no, col(indent), format!("unknown key `{key}` in [{sec}]")));
            }
            let value_start = eq + 1 + (raw[eq + 1..].len() - raw[eq + 1..].trim_start().len());
            let value = raw[eq + 1..].trim();
            if value.is_empty() {
                return Err(config_error(path, line_no, col(value_start), format!("empty value for `{key}`")));
            }
            let k = (sec.to_string(), key.to_string());
            if let Some(prev) = cfg.entries.get(&k) {
                return Err(config_error(path, line_no, col(indent), format!("duplicate key `{key}` (first set at {})", prev.origin)));
            }
            let origin = Origin::File { path: path.to_path_buf(), line: line_no, column: col(value_start) };
            cfg.entries.insert(k, Entry { value: value.to_string(), origin });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let text = String::from_utf8(bytes).map_err(|e| {
            let offset = e.utf8_error().valid_up_to();
            let before = &e.as_bytes()[..offset];
            let line = before.iter().filter(|b| **b == b'\n').count() + 1;
            let column = offset - before.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1) + 1;
            config_error(path, line, column, "invalid UTF-8")
        })?;
        Self::parse(&text, path)
    }

    /// Apply `INVMETRICS_[SECTION_]KEY` variables; a key without a section prefix is
    /// taken from `[run]`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), CliError> {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let rest = rest.to_ascii_lowercase();
            let (section, key) = SCHEMA
                .iter()
                .find_map(|(s, _)| rest.strip_prefix(&format!("{s}_")).filter(|k| known(s, k)).map(|k| (s.to_string(), k.to_string())))
                .or_else(|| known("run", &rest).then(|| ("run".to_string(), rest.clone())))
                .ok_or_else(|| CliError::Usage(format!("environment variable {name} does not name a configuration key")))?;
            self.entries.insert((section, key), Entry { value, origin: Origin::Env(name) });
        }
        Ok(())
    }

    /// Set `section.key` from a command-line flag.
    pub fn set_flag(&mut self, section: &str, key: &str, value: impl Into<String>, flag: &str) -> Result<(), CliError> {
        if !known(section, key) {
            return Err(CliError::Usage(format!("--{flag}: unknown configuration key {section}.{key}")));
        }
        self.entries.insert((section.into(), key.into()), Entry { value: value.into(), origin: Origin::Flag(flag.into()) });
        Ok(())
    }

    /// `--set section.key=value`.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects section.key=value, got {assignment:?}")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| CliError::Usage(format!("--set expects section.key=value, got {assignment:?}")))?;
        self.set_flag(section, key, value.trim(), "set")
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    pub fn str(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key).map(|e| e.value.as_str())
    }

    pub fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| CliError::Config(format!("{}: invalid value {:?} for {section}.{key}: {err}", e.origin, e.value))),
        }
    }

    pub fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.parsed(section, key)?.ok_or_else(|| CliError::Usage(format!("missing required setting {section}.{key}")))
    }

    pub fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parsed(section, key)?.unwrap_or(default))
    }

    /// Resolved settings that determine the numbers, one `section.key=value` per line.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for ((s, k), e) in &self.entries {
            if PRESENTATION_KEYS.contains(&(s.as_str(), k.as_str())) {
                continue;
            }
            out.push_str(&format!("{s}.{k}={}\n", e.value));
        }
        out
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter(|((s, k), _)| !PRESENTATION_KEYS.contains(&(s.as_str(), k.as_str())))
            .map(|((s, k), e)| (format!("{s}.{k}"), e.value.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, CliError> {
        Config::parse(text, Path::new("run.ini"))
    }

    #[test]
    fn reads_sections_and_keys() {
        let c = parse("# demo\n[run]\ndomain = disk\nmetrics = poincare, bergman(degree=40)\nseed=7\n\n[flow]\ndt = 1e-3\n").unwrap();
        assert_eq!(c.str("run", "metrics"), Some("poincare, bergman(degree=40)"));
        assert_eq!(c.required::<u64>("run", "seed").unwrap(), 7);
        assert_eq!(c.or("flow", "dt", 0.0).unwrap(), 1e-3);
        match &c.get("run", "seed").unwrap().origin {
            Origin::File { line, column, .. } => assert_eq!((*line, *column), (5, 6)),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn errors_carry_line_and_column() {
        let msg = |t: &str| parse(t).unwrap_err().to_string();
        assert!(msg("[run\n").contains("run.ini:1:1"));
        assert!(msg("[run]\nseed 7\n").contains("run.ini:2:1"));
        assert!(msg("[run]\n  colour = red\n").contains("run.ini:2:3: unknown key `colour`"));
        assert!(msg("[nope]\n").contains("unknown section"));
        assert!(msg("seed = 1\n").contains("before any [section]"));
        assert!(msg("[run]\nseed = 1\nseed = 2\n").contains("duplicate key"));
        assert!(msg("[run]\nseed =\n").contains("run.ini:2:7"));
        let c = parse("[run]\nseed = x\n").unwrap();
        assert!(c.required::<u64>("run", "seed").unwrap_err().to_string().contains("run.ini:2:8"));
    }

    #[test]
    fn precedence_is_file_then_env_then_flags() {
        let mut c = parse("[run]\nseed = 1\nsamples = 10\n[flow]\ndt = 0.1\n").unwrap();
        c.apply_env(vec![
            ("INVMETRICS_SEED".to_string(), "2".to_string()),
            ("INVMETRICS_FLOW_DT".to_string(), "0.01".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ])
        .unwrap();
        assert_eq!(c.str("run", "seed"), Some("2"));
        assert_eq!(c.str("flow", "dt"), Some("0.01"));
        c.set_flag("run", "seed", "3", "seed").unwrap();
        assert_eq!(c.str("run", "seed"), Some("3"));
        assert_eq!(c.str("run", "samples"), Some("10"));
        assert!(c.apply_env(vec![("INVMETRICS_BOGUS".to_string(), "1".to_string())]).is_err());
    }

    #[test]
    fn hash_ignores_presentation() {
        let a = parse("[run]\nseed = 1\nformat = csv\n").unwrap();
        let b = parse("[run]\nseed = 1\nformat = json\noutput = x.json\n").unwrap();
        let c = parse("[run]\nseed = 2\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
