//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. A line
//! `include <path>` splices another file in place (paths are relative to the
//! including file). Later entries override earlier ones for scalar lookups;
//! repeated keys are kept in order for list-valued settings.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<(String, String)>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        cfg.parse_into(text, None, &mut HashSet::new())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::new();
        cfg.load_into(path, &mut HashSet::new())?;
        Ok(cfg)
    }

    fn load_into(&mut self, path: &Path, seen: &mut HashSet<PathBuf>) -> Result<()> {
        let canonical = path
            .canonicalize()
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        if !seen.insert(canonical.clone()) {
            return Err(Error::config(format!(
                "include cycle through {}",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(&canonical)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        self.parse_into(&text, canonical.parent(), seen)?;
        seen.remove(&canonical);
        Ok(())
    }

    fn parse_into(
        &mut self,
        text: &str,
        base: Option<&Path>,
        seen: &mut HashSet<PathBuf>,
    ) -> Result<()> {
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let line_offset = offset;
            offset += raw.len();
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include ") {
                let rel = Path::new(rest.trim());
                let path = match base {
                    Some(dir) if rel.is_relative() => dir.join(rel),
                    _ => rel.to_path_buf(),
                };
                self.load_into(&path, seen)?;
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(
                    line_offset,
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(line_offset, "empty key"));
            }
            self.entries.push((key.to_string(), v.trim().to_string()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    /// Appends every entry of `other`, letting it override this config.
    pub fn extend(&mut self, other: &KvConfig) {
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(format!("cannot parse `{key} = {v}`"))),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn read_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub(crate) fn read_bool(cfg: &KvConfig, key: &str, slot: &mut bool) -> Result<()> {
    if let Some(v) = cfg.get(key) {
        *slot = parse_bool(v).ok_or_else(|| Error::config(format!("`{key}` expects a boolean, got `{v}`")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_overrides_and_lists() {
        let cfg = KvConfig::parse("# c\na = 1\nb=x # tail\n\na = 2\nobj = p\nobj = q\n").unwrap();
        assert_eq!(cfg.get("a"), Some("2"));
        assert_eq!(cfg.get("b"), Some("x"));
        assert_eq!(cfg.get_all("obj").collect::<Vec<_>>(), vec!["p", "q"]);
        assert_eq!(cfg.parse_value::<i32>("a").unwrap(), Some(2));
        assert!(cfg.parse_value::<i32>("b").is_err());
    }

    #[test]
    fn malformed_line_reports_offset() {
        match KvConfig::parse("a = 1\nbogus\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn include_is_relative_and_overridable() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("base.cfg"), "a = 1\nb = 2\n").unwrap();
        std::fs::write(dir.path().join("top.cfg"), "include base.cfg\nb = 3\n").unwrap();
        let cfg = KvConfig::load(&dir.path().join("top.cfg")).unwrap();
        assert_eq!(cfg.get("a"), Some("1"));
        assert_eq!(cfg.get("b"), Some("3"));
    }

    #[test]
    fn include_cycle_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.cfg"), "include b.cfg\n").unwrap();
        std::fs::write(dir.path().join("b.cfg"), "include a.cfg\n").unwrap();
        assert!(KvConfig::load(&dir.path().join("a.cfg")).is_err());
    }
}
