//! Plain-text `key = value` settings files.
//!
//! One pair per line, full-line `#` comments, blank lines ignored. Keys not
//! in the command's allowed set are rejected, as are duplicates. A relative
//! path that does not exist is retried under `$COSMOT_CONFIG_DIR`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::fail::Failure;

pub const CONFIG_DIR_VAR: &str = "COSMOT_CONFIG_DIR";

#[derive(Debug, Default)]
pub struct Settings {
    entries: BTreeMap<String, String>,
    source: String,
}

fn resolve(raw: &str) -> Result<PathBuf, Failure> {
    let direct = Path::new(raw);
    if direct.exists() {
        return Ok(direct.to_path_buf());
    }
    if direct.is_relative() {
        if let Ok(dir) = std::env::var(CONFIG_DIR_VAR) {
            let nested = Path::new(&dir).join(direct);
            if nested.exists() {
                return Ok(nested);
            }
            return Err(Failure::usage(format!(
                "config file not found: {raw} (also tried {})",
                nested.display()
            )));
        }
    }
    Err(Failure::usage(format!("config file not found: {raw}")))
}

impl Settings {
    pub fn empty() -> Settings {
        Settings::default()
    }

    pub fn load(raw_path: &str, allowed: &[&str]) -> Result<Settings, Failure> {
        let path = resolve(raw_path)?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let source = path.display().to_string();
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::usage(format!("{source}:{lineno}: expected `key = value`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !allowed.contains(&key) {
                return Err(Failure::usage(format!("{source}:{lineno}: unknown key `{key}`")));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Failure::usage(format!("{source}:{lineno}: duplicate key `{key}`")));
            }
        }
        Ok(Settings { entries, source })
    }

    /// Loads the file when a path was given, otherwise an empty set.
    pub fn load_opt(raw_path: Option<&str>, allowed: &[&str]) -> Result<Settings, Failure> {
        match raw_path {
            Some(p) => Settings::load(p, allowed),
            None => Ok(Settings::empty()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(value) => value.parse::<T>().map(Some).map_err(|e| {
                Failure::usage(format!("{}: key `{key}`: {e}", self.source))
            }),
        }
    }
}

/// CLI flag wins, then the config file, then the built-in default.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like `pick` but the value has no default and must come from somewhere.
pub fn require<T>(flag: Option<T>, file: Option<T>, what: &str) -> Result<T, Failure> {
    flag.or(file)
        .ok_or_else(|| Failure::usage(format!("missing required setting `{what}`")))
}
