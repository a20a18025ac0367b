//! Flat, sectioned `key = value` text with `#` comments.
//!
//! ```text
//! # comment
//! top_level = 1
//! [train]
//! learning_rate = 0.0001
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    /// Section name ("" for keys before the first header) → key → value.
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?;
                section = name.trim().to_string();
                doc.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            let entries = doc.sections.entry(section.clone()).or_default();
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
        }
        Ok(doc)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn section(&self, name: &str) -> Section<'_> {
        Section {
            name: name.to_string(),
            entries: self.sections.get(name),
        }
    }
}

/// Typed accessors over one section; missing keys fall back to defaults.
pub struct Section<'a> {
    name: String,
    entries: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    pub fn raw(&self, key: &str) -> Option<&'a str> {
        self.entries.and_then(|e| e.get(key)).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &'a str> {
        self.entries.into_iter().flat_map(|e| e.keys().map(String::as_str))
    }

    fn err(&self, key: &str, msg: impl std::fmt::Display) -> Error {
        let section = if self.name.is_empty() { "<top>" } else { &self.name };
        Error::Config(format!("[{section}] {key}: {msg}"))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| self.err(key, format!("{v:?}: {e}"))),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(self.err(key, format!("{v:?} is not a boolean"))),
        }
    }

    /// Reject keys outside `known`.
    pub fn expect_keys(&self, known: &[&str]) -> Result<()> {
        for k in self.keys() {
            if !known.contains(&k) && !known.iter().any(|p| p.ends_with('.') && k.starts_with(p)) {
                return Err(self.err(k, "unknown key"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let doc = KvDoc::parse("a = 1 # trailing\n\n[s]\nb= x y \n# c = 2\n").unwrap();
        assert_eq!(doc.section("").raw("a"), Some("1"));
        assert_eq!(doc.section("s").raw("b"), Some("x y"));
        assert_eq!(doc.section("s").raw("c"), None);
        assert_eq!(doc.section("s").parse_or("n", 5u32).unwrap(), 5);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvDoc::parse("[s\n").is_err());
        assert!(KvDoc::parse("novalue\n").is_err());
        assert!(KvDoc::parse("a=1\na=2\n").is_err());
        let doc = KvDoc::parse("flag = maybe").unwrap();
        assert!(doc.section("").bool_or("flag", false).is_err());
    }
}
