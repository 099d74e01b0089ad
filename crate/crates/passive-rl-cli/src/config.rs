//! Flat `key = value` experiment configs with `[section]` headers.
//!
//! The format is deliberately plain: comments start with `#`, every entry
//! lives under a named section, and values are typed only when read. The
//! reader tracks which keys a command consumed so that misspelled or
//! leftover keys fail the run instead of being silently ignored.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use passive_rl::{Error, Result};

#[derive(Debug)]
pub struct Config {
    sections: BTreeMap<String, Section>,
}

#[derive(Debug)]
pub struct Section {
    name: String,
    entries: BTreeMap<String, (usize, String)>,
    consumed: RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or(Error::Parse { line: line_no, msg: "unterminated section header".into() })?
                    .trim()
                    .to_string();
                if name.is_empty() {
                    return Err(Error::Parse { line: line_no, msg: "empty section name".into() });
                }
                if sections.contains_key(&name) {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("duplicate section [{name}]"),
                    });
                }
                sections.insert(
                    name.clone(),
                    Section {
                        name: name.clone(),
                        entries: BTreeMap::new(),
                        consumed: RefCell::new(BTreeSet::new()),
                    },
                );
                current = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(Error::Parse { line: line_no, msg: "empty key".into() });
            }
            let section = current.as_ref().ok_or(Error::Parse {
                line: line_no,
                msg: format!("key `{key}` appears before any [section] header"),
            })?;
            let section = sections.get_mut(section).expect("current section exists");
            if section.entries.insert(key.clone(), (line_no, value)).is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{key}` in [{}]", section.name),
                });
            }
        }
        Ok(Config { sections })
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    /// The named section; command sections are mandatory where used.
    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .get(name)
            .ok_or_else(|| Error::invalid(format!("config is missing the [{name}] section")))
    }

    pub fn section_opt(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    /// Fails if any key was never read by the command — the cheap way to
    /// catch typos in experiment files.
    pub fn reject_unconsumed(&self) -> Result<()> {
        for section in self.sections.values() {
            let consumed = section.consumed.borrow();
            for (key, (line, _)) in &section.entries {
                if !consumed.contains(key) {
                    return Err(Error::Parse {
                        line: *line,
                        msg: format!("unknown key `{key}` in [{}]", section.name),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every `(section.key, value)` pair, sorted, for run-metadata echoes.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut rows = Vec::new();
        for section in self.sections.values() {
            for (key, (_, value)) in &section.entries {
                rows.push((format!("{}.{}", section.name, key), value.clone()));
            }
        }
        rows.sort();
        rows
    }
}

impl Section {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        let entry = self.entries.get(key)?;
        self.consumed.borrow_mut().insert(key.to_string());
        Some(entry)
    }

    fn parse_err(&self, key: &str, line: usize, what: &str, value: &str) -> Error {
        Error::Parse {
            line,
            msg: format!("key `{key}` in [{}]: expected {what}, got `{value}`", self.name),
        }
    }

    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|(_, v)| v.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.opt_str(key)
            .ok_or_else(|| Error::invalid(format!("missing key `{key}` in [{}]", self.name)))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.parse_err(key, *line, "a number", v)),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?
            .ok_or_else(|| Error::invalid(format!("missing key `{key}` in [{}]", self.name)))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| self.parse_err(key, *line, "a nonnegative integer", v)),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.opt_usize(key)?.unwrap_or(default))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.opt_usize(key)?
            .ok_or_else(|| Error::invalid(format!("missing key `{key}` in [{}]", self.name)))
    }

    pub fn opt_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| self.parse_err(key, *line, "an unsigned integer", v)),
        }
    }

    /// Comma-separated numbers, e.g. `values = 8, 16, 32`.
    pub fn opt_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((line, v)) = self.raw(key) else { return Ok(None) };
        let mut out = Vec::new();
        for piece in v.split(',') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            out.push(
                piece
                    .parse::<f64>()
                    .map_err(|_| self.parse_err(key, *line, "comma-separated numbers", v))?,
            );
        }
        Ok(Some(out))
    }

    pub fn opt_u64_list(&self, key: &str) -> Result<Option<Vec<u64>>> {
        let Some((line, v)) = self.raw(key) else { return Ok(None) };
        let mut out = Vec::new();
        for piece in v.split(',') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            out.push(
                piece
                    .parse::<u64>()
                    .map_err(|_| self.parse_err(key, *line, "comma-separated integers", v))?,
            );
        }
        Ok(Some(out))
    }
}
