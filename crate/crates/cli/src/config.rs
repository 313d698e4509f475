//! Flat `key = value` run configuration. Keys are long flag names without the
//! leading dashes; list values are comma-separated. Explicit flags override
//! file values.

use crate::error::CliError;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Seed override consulted between the `--seed` flag and the config file.
pub const SEED_ENV: &str = "TILTKIT_SEED";

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    path: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self, CliError> {
        let origin = path.map_or_else(|| "config".to_string(), |p| p.display().to_string());
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: expected `key = value`",
                    n + 1
                )));
            };
            let key = key.trim().trim_start_matches("--");
            if key.is_empty() {
                return Err(CliError::Usage(format!("{origin}:{}: empty key", n + 1)));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: duplicate key `{key}`",
                    n + 1
                )));
            }
        }
        Ok(Self {
            path: path.map(Path::to_path_buf),
            values,
        })
    }

    /// Rejects keys the running subcommand does not understand.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for key in self.values.keys() {
            if key != "jobs" && !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}: unknown key `{key}` (expected one of: jobs, {})",
                    self.origin(),
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn origin(&self) -> String {
        self.path
            .as_ref()
            .map_or_else(|| "config".to_string(), |p| p.display().to_string())
    }

    fn parse_value<T: FromStr>(&self, key: &str, raw: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        raw.parse().map_err(|e| {
            CliError::Usage(format!("{}: invalid value for `{key}`: {e}", self.origin()))
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|raw| self.parse_value(key, raw))
            .transpose()
    }

    /// Flag value if given, otherwise the file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }

    pub fn pick_list<T: FromStr>(&self, flag: Vec<T>, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: Display,
    {
        if !flag.is_empty() {
            return Ok(Some(flag));
        }
        self.values
            .get(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| self.parse_value(key, s))
                    .collect()
            })
            .transpose()
    }

    /// A set flag wins; otherwise `true`/`false` from the file, default false.
    pub fn pick_bool(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            return Ok(true);
        }
        Ok(self.get(key)?.unwrap_or(false))
    }
}

/// `--seed` flag, then [`SEED_ENV`], then the file, then 0.
pub fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(raw) = std::env::var(SEED_ENV) {
        return raw
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{SEED_ENV}: invalid seed `{raw}`: {e}")));
    }
    Ok(file.get("seed")?.unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let c = ConfigFile::parse(
            "# run\nsigma = 0.01\n--seed=7  # trailing\n\nclasses = Car, Pedestrian\n",
            None,
        )
        .unwrap();
        assert_eq!(c.get::<f64>("sigma").unwrap(), Some(0.01));
        assert_eq!(c.pick(None, "seed").unwrap(), Some(7u64));
        assert_eq!(c.pick(Some(3u64), "seed").unwrap(), Some(3));
        assert_eq!(
            c.pick_list::<String>(vec![], "classes").unwrap(),
            Some(vec!["Car".to_string(), "Pedestrian".to_string()])
        );
        assert!(c.check_keys(&["sigma", "seed", "classes"]).is_ok());
        assert!(c.check_keys(&["sigma"]).is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(ConfigFile::parse("novalue\n", None).is_err());
        assert!(ConfigFile::parse("= 3\n", None).is_err());
        assert!(ConfigFile::parse("a = 1\na = 2\n", None).is_err());
        let c = ConfigFile::parse("seed = x\n", None).unwrap();
        assert!(c.get::<u64>("seed").is_err());
    }

    #[test]
    fn bool_and_required() {
        let c = ConfigFile::parse("inverse = true\n", None).unwrap();
        assert!(c.pick_bool(false, "inverse").unwrap());
        assert!(!ConfigFile::default().pick_bool(false, "inverse").unwrap());
        assert!(ConfigFile::default()
            .require::<PathBuf>(None, "labels")
            .is_err());
    }
}
