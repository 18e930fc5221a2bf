//! Flat `key = value` configuration files.
//!
//! Keys are the long flag names with dashes or underscores (`target-fidelity`
//! and `target_fidelity` are the same key). Lists are comma separated. Blank
//! lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};

pub const WORKERS_ENV: &str = "QDRIVE_WORKERS";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", n + 1))?;
            let key = normalize(key);
            if key.is_empty() {
                bail!("line {}: empty key", n + 1);
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{key}`", n + 1);
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Rejects keys outside `known`.
    pub fn check_keys(&self, known: &[&str]) -> anyhow::Result<()> {
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                bail!("unknown config key `{key}` (accepted: {})", known.join(", "));
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config `{key}`: {e}")))
            .transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> anyhow::Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| item.trim().parse::<T>().map_err(|e| anyhow!("config `{key}`: {e}")))
                    .collect()
            })
            .transpose()
    }
}

/// Flag value if given, else the config value, else `default`.
pub fn layered<T: FromStr>(flag: Option<T>, config: &ConfigFile, key: &str, default: T) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(config.get(key)?.unwrap_or(default)),
    }
}

pub fn layered_list<T: FromStr>(flag: Vec<T>, config: &ConfigFile, key: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    if !flag.is_empty() {
        return Ok(flag);
    }
    Ok(config.get_list(key)?.unwrap_or_default())
}

/// Worker count: flag, then the environment variable, then the config file.
/// `None` leaves the choice to the thread pool.
pub fn resolve_workers(
    flag: Option<usize>,
    env: Option<&str>,
    config: &ConfigFile,
) -> anyhow::Result<Option<usize>> {
    let value = match (flag, env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(
            v.trim()
                .parse::<usize>()
                .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?,
        ),
        (None, None) => config.get::<usize>("workers")?,
    };
    if value == Some(0) {
        bail!("worker count must be at least 1");
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_pairs() {
        let c = ConfigFile::parse("# comment\nomega = 0.3, 0.5\n\ntarget_fidelity=0.9\n").unwrap();
        assert_eq!(c.get_list::<f64>("omega").unwrap(), Some(vec![0.3, 0.5]));
        assert_eq!(c.get::<f64>("target-fidelity").unwrap(), Some(0.9));
        assert_eq!(c.get::<f64>("steps").unwrap(), None);
    }

    #[test]
    fn rejects_malformed_lines_and_keys() {
        assert!(ConfigFile::parse("omega 0.5").is_err());
        assert!(ConfigFile::parse("omega = 1\nomega = 2").is_err());
        let c = ConfigFile::parse("colour = blue").unwrap();
        assert!(c.check_keys(&["omega"]).is_err());
        assert!(ConfigFile::parse("steps = many").unwrap().get::<usize>("steps").is_err());
    }

    #[test]
    fn flags_override_config() {
        let c = ConfigFile::parse("steps = 1024").unwrap();
        assert_eq!(layered(Some(2048), &c, "steps", 4096).unwrap(), 2048);
        assert_eq!(layered(None, &c, "steps", 4096).unwrap(), 1024);
        assert_eq!(layered(None, &ConfigFile::default(), "steps", 4096).unwrap(), 4096);
    }

    #[test]
    fn worker_precedence() {
        let c = ConfigFile::parse("workers = 3").unwrap();
        assert_eq!(resolve_workers(Some(1), Some("2"), &c).unwrap(), Some(1));
        assert_eq!(resolve_workers(None, Some("2"), &c).unwrap(), Some(2));
        assert_eq!(resolve_workers(None, None, &c).unwrap(), Some(3));
        assert_eq!(resolve_workers(None, None, &ConfigFile::default()).unwrap(), None);
        assert!(resolve_workers(None, Some("x"), &c).is_err());
        assert!(resolve_workers(Some(0), None, &c).is_err());
    }
}
