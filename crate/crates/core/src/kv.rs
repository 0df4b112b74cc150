//! Minimal `key=value` documents with optional `[section]` headers.
//! `#` starts a comment line. Keys keep their insertion order on output.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str, origin: &Path) -> Result<Option<T>> {
        self.get(key)
            .map(|raw| {
                raw.parse().map_err(|_| Error::Format {
                    path: origin.to_path_buf(),
                    what: "key=value document",
                    reason: format!("bad value `{raw}` for `{}{key}`", self.prefix()),
                })
            })
            .transpose()
    }

    pub fn parse<T: FromStr>(&self, key: &str, origin: &Path) -> Result<T> {
        self.parse_opt(key, origin)?.ok_or_else(|| Error::Format {
            path: origin.to_path_buf(),
            what: "key=value document",
            reason: format!("missing key `{}{key}`", self.prefix()),
        })
    }

    fn prefix(&self) -> String {
        if self.name.is_empty() {
            String::new()
        } else {
            format!("[{}] ", self.name)
        }
    }
}

/// The unnamed leading section comes first, followed by named sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut sections = vec![Section::default()];
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push(Section::new(name.trim()));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                what: "key=value document",
                reason: format!("line {}: expected key=value, found `{line}`", no + 1),
            })?;
            sections
                .last_mut()
                .unwrap()
                .entries
                .push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Document { sections })
    }

    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().skip(1).find(|s| s.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push_str(&format!("\n[{}]\n", s.name));
            }
            for (k, v) in &s.entries {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }
}
