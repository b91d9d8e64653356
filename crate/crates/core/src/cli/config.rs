//! Flat `key = value` configuration with paths relative to the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::read_text;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    /// Directory that relative paths are resolved against.
    pub base_dir: PathBuf,
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_dir: base_dir.into(),
            values: BTreeMap::new(),
        }
    }

    /// `#` starts a comment; blank lines are ignored; later keys win.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>, origin: &str) -> Result<Self> {
        let mut cfg = Self::new(base_dir);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(origin, i + 1, "empty key"));
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&read_text(path)?, base, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::arg(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn resolve(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.resolve(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::arg(format!("config key `{key}` is required for this command")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| Error::arg(format!("config key `{key}`: cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(self.get("out_dir").unwrap_or("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let text = "# header\nm = 10\n\nqueries = q.tsv # trailing\nm=20\n";
        let mut cfg = Config::parse(text, "/data", "cfg").unwrap();
        assert_eq!(cfg.parsed::<usize>("m").unwrap(), Some(20));
        assert_eq!(cfg.path("queries").unwrap(), PathBuf::from("/data/q.tsv"));
        cfg.apply_override("m=5").unwrap();
        assert_eq!(cfg.parsed_or("m", 0usize).unwrap(), 5);
        assert_eq!(cfg.out_dir(), PathBuf::from("/data/out"));
    }

    #[test]
    fn errors() {
        assert!(matches!(Config::parse("novalue\n", ".", "cfg"), Err(Error::Parse { line: 1, .. })));
        let cfg = Config::parse("m = x", ".", "cfg").unwrap();
        assert!(matches!(cfg.parsed::<usize>("m"), Err(Error::Argument(_))));
        assert!(matches!(cfg.require_path("documents"), Err(Error::Argument(_))));
        assert!(Config::default().apply_override("nokey").is_err());
    }

    #[test]
    fn absolute_paths_are_kept() {
        let cfg = Config::parse("documents = /abs/d.jsonl", "/base", "cfg").unwrap();
        assert_eq!(cfg.path("documents").unwrap(), PathBuf::from("/abs/d.jsonl"));
    }
}
