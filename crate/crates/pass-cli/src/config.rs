//! key=value configuration file with flag-over-file-over-default
//! precedence.

use anyhow::anyhow;
use std::collections::HashMap;
use std::path::Path;

#[derive(Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow!(pass_core::Error::Config(format!(
                "cannot read config file {}: {e}",
                path.display()
            ))))?;
        let mut values = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(anyhow!(pass_core::Error::Config(format!(
                    "config line {}: expected key=value, got '{raw}'",
                    lineno + 1
                ))));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// flag > config file > default.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw.parse::<T>().map_err(|e| {
                anyhow!(pass_core::Error::Config(format!(
                    "config key '{key}': cannot parse '{raw}': {e}"
                )))
            }),
            None => Ok(default),
        }
    }
}
