//! Flat TOML configuration. Keys mirror the long flag names, e.g.
//! `temp = 0.01` or `alpha-lambda = 0.5`. Flags override the file, which
//! overrides built-in defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::{Table, Value};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    table: Table,
}

const KNOWN_KEYS: &[&str] = &[
    "threads",
    "mixtures",
    "update",
    "schedule",
    "inertia",
    "temp",
    "min-temp",
    "alpha-lambda",
    "seed",
    "max-iters",
    "trace-timing",
];

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e| UsageError(format!("config: {e}")))?;
        for (key, value) in &table {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!(UsageError(format!("config: unknown key `{key}`")));
            }
            if matches!(value, Value::Table(_) | Value::Array(_)) {
                bail!(UsageError(format!("config: `{key}` must be a scalar")));
            }
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    fn type_error(key: &str, want: &str) -> anyhow::Error {
        UsageError(format!("config: `{key}` must be {want}")).into()
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(Self::type_error(key, "a number")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(_) => Err(Self::type_error(key, "a non-negative integer")),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn string(&self, key: &str) -> Result<Option<String>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Self::type_error(key, "a string")),
        }
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(Self::type_error(key, "a boolean")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_scalars() {
        let c = FileConfig::parse(
            "temp = 0.5\nseed = 3\nupdate = \"newton\"\nalpha-lambda = 1\ntrace-timing = true",
        )
        .unwrap();
        assert_eq!(c.f64("temp").unwrap(), Some(0.5));
        assert_eq!(c.u64("seed").unwrap(), Some(3));
        assert_eq!(c.f64("alpha-lambda").unwrap(), Some(1.0));
        assert_eq!(c.string("update").unwrap().as_deref(), Some("newton"));
        assert_eq!(c.bool("trace-timing").unwrap(), Some(true));
        assert_eq!(c.f64("min-temp").unwrap(), None);
    }

    #[test]
    fn rejects_unknown_and_mistyped() {
        assert!(FileConfig::parse("colour = 1").is_err());
        assert!(FileConfig::parse("[section]\nseed = 1").is_err());
        let c = FileConfig::parse("seed = \"x\"").unwrap();
        assert!(c.u64("seed").is_err());
        assert!(FileConfig::parse("seed = ").is_err());
    }
}
