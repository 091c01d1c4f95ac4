//! Flat `key = value` run configuration.
//!
//! Every command reads an optional config file (`#` comments, one pair per
//! line), overlays command-line flags on top, rejects unknown keys, and
//! records the fully resolved values as `resolved_config.txt` next to its
//! outputs so a run can be reproduced byte-for-byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

pub struct ConfigBag {
    file_values: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl ConfigBag {
    pub fn load(path: Option<&Path>) -> Result<ConfigBag> {
        let mut file_values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    bail!(
                        "{}:{}: expected 'key = value', got '{raw}'",
                        path.display(),
                        lineno + 1
                    );
                };
                let key = key.trim().to_string();
                if file_values
                    .insert(key.clone(), value.trim().to_string())
                    .is_some()
                {
                    bail!("{}:{}: duplicate key '{key}'", path.display(), lineno + 1);
                }
            }
        }
        Ok(ConfigBag {
            file_values,
            consumed: BTreeSet::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.consumed.insert(key.to_string());
        match self.file_values.get(key) {
            Some(raw) => match raw.parse::<T>() {
                Ok(v) => Ok(Some(v)),
                Err(e) => bail!("config key '{key}': cannot parse '{raw}': {e}"),
            },
            None => Ok(None),
        }
    }

    /// Resolves a required setting: CLI flag beats the file, which beats the
    /// default.
    pub fn get<T>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match cli {
            Some(v) => v,
            None => self.file_value::<T>(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Resolves an optional setting (no default).
    pub fn get_opt<T>(&mut self, key: &str, cli: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match cli {
            Some(v) => Some(v),
            None => self.file_value::<T>(key)?,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    /// Records a value that was resolved outside the bag (e.g. paths).
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.consumed.insert(key.to_string());
        self.resolved.insert(key.to_string(), value.to_string());
    }

    /// Fails on config-file keys no command parameter consumed.
    pub fn reject_unknown(&self) -> Result<()> {
        let unknown: Vec<&String> = self
            .file_values
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if !unknown.is_empty() {
            bail!(
                "unknown config keys: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        Ok(())
    }

    /// Writes `resolved_config.txt` into the output directory.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (key, value) in &self.resolved {
            text.push_str(&format!("{key} = {value}\n"));
        }
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved_config.txt"), text)?;
        Ok(())
    }
}
