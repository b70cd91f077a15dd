//! Flat key-value configuration files and the small parsers shared by the
//! command-line flags.
//!
//! File schema: UTF-8 text, one `key = value` pair per line; blank lines and
//! lines starting with `#` are ignored. Keys match the long flag names of
//! the subcommand (without the leading dashes). Precedence: explicit flags
//! override file values, which override the documented defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Result, WfError};

/// Parsed key-value configuration file.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(WfError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    /// Resolve one parameter: explicit flag, then file value, then default.
    pub fn resolve<T, E>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> std::result::Result<T, E>,
    ) -> Result<T>
    where
        E: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.get(key) {
            Some(raw) => parse(raw).map_err(|e| {
                WfError::Config(format!("config key `{key}`: {e} (value `{raw}`)"))
            }),
            None => Ok(default),
        }
    }
}

/// Angles accept plain decimals or `pi`-forms: `pi`, `pi/8`, `3pi/4`.
pub fn parse_angle(text: &str) -> Result<f64> {
    let t = text.trim();
    if let Ok(x) = t.parse::<f64>() {
        return Ok(x);
    }
    let (num, den) = match t.split_once('/') {
        Some((n, d)) => (
            n.trim(),
            d.trim()
                .parse::<f64>()
                .map_err(|_| WfError::Config(format!("bad angle denominator in `{text}`")))?,
        ),
        None => (t, 1.0),
    };
    let coefficient = match num.strip_suffix("pi") {
        Some("") => 1.0,
        Some("-") => -1.0,
        Some(k) => k
            .parse::<f64>()
            .map_err(|_| WfError::Config(format!("bad angle `{text}`")))?,
        None => return Err(WfError::Config(format!("bad angle `{text}`"))),
    };
    Ok(coefficient * std::f64::consts::PI / den)
}

pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| WfError::Config(format!("bad integer list `{text}`")))
        })
        .collect()
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| WfError::Config(format!("bad number list `{text}`")))
        })
        .collect()
}

/// `lo,hi` time window.
pub fn parse_window(text: &str) -> Result<(f64, f64)> {
    let values = parse_f64_list(text)?;
    if values.len() != 2 || values[0] > values[1] {
        return Err(WfError::Config(format!("bad window `{text}`")));
    }
    Ok((values[0], values[1]))
}
