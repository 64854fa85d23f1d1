//! `key = value` run configuration layered under command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: duplicate key `{key}`")]
    Duplicate {
        path: String,
        line: usize,
        key: String,
    },
    #[error("unknown config key(s): {0}")]
    Unknown(String),
    #[error("invalid value for `{key}`: {value:?} ({reason})")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Normalizes `lr-max` and `lr_max` to one spelling.
fn canon(key: &str) -> String {
    key.trim().replace('-', "_")
}

pub fn parse(text: &str, path: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
            path: path.into(),
            line: i + 1,
        })?;
        let key = canon(k);
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: path.into(),
                line: i + 1,
            });
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                path: path.into(),
                line: i + 1,
                key,
            });
        }
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

/// Picks each setting from the flag, else the file, else the default, and
/// records the outcome for echoing and the manifest.
pub struct Resolver {
    file: BTreeMap<String, String>,
    pub resolved: BTreeMap<String, String>,
}

impl Resolver {
    pub fn new(file: BTreeMap<String, String>) -> Self {
        Resolver {
            file,
            resolved: BTreeMap::new(),
        }
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, ConfigError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let from_file = self.file.remove(key);
        let v = match (flag, from_file) {
            (Some(v), _) => Some(v),
            (None, Some(s)) => Some(s.parse::<T>().map_err(|e| ConfigError::Value {
                key: key.into(),
                value: s.clone(),
                reason: e.to_string(),
            })?),
            (None, None) => None,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.into(), v.to_string());
        }
        Ok(v)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, ConfigError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.into(), v.to_string());
        Ok(v)
    }

    /// Fails if the file named a key no setting consumed.
    pub fn finish(self) -> Result<BTreeMap<String, String>, ConfigError> {
        if !self.file.is_empty() {
            let keys: Vec<_> = self.file.into_keys().collect();
            return Err(ConfigError::Unknown(keys.join(", ")));
        }
        Ok(self.resolved)
    }
}
