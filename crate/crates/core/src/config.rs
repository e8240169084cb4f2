//! Plain-text `key = value` configuration files.
//!
//! One setting per line; blank lines and lines starting with `#` are
//! ignored; keys are case-sensitive; a key may appear at most once.
//!
//! ```text
//! # demo run
//! mechanism = kda
//! dim = 128
//! heads = 4
//! seed = 7
//! lengths = 512, 1024, 2048
//! ```

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every key understood by the pipeline and the command-line tool.
pub const KNOWN_KEYS: &[&str] = &[
    "mechanism",
    "mechanisms",
    "mode",
    "dim",
    "heads",
    "slots",
    "gate_rank",
    "seed",
    "speech_len",
    "text_len",
    "lengths",
    "repeats",
    "warmup",
    "max_length_cap",
    "out",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("unknown key '{key}'"),
                });
            }
            if entries
                .insert(key.to_string(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| Error::Config {
                line: *line,
                message: format!("bad value for '{key}': {e}"),
            }),
        }
    }

    /// Comma-separated list value.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e| Error::Config {
                        line: *line,
                        message: format!("bad element '{s}' in '{key}': {e}"),
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::MechanismKind;

    #[test]
    fn parses_documented_example() {
        let cfg = KvConfig::parse(
            "# demo run\nmechanism = kda\n\ndim = 128\nlengths = 512, 1024,2048\n",
        )
        .unwrap();
        assert_eq!(cfg.get::<MechanismKind>("mechanism").unwrap(), Some(MechanismKind::Kda));
        assert_eq!(cfg.get::<usize>("dim").unwrap(), Some(128));
        assert_eq!(cfg.get::<usize>("heads").unwrap(), None);
        assert_eq!(cfg.get_list::<usize>("lengths").unwrap(), Some(vec![512, 1024, 2048]));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = KvConfig::parse("dim = 4\nbogus = 1\n").unwrap_err();
        assert_eq!(e, Error::Config { line: 2, message: "unknown key 'bogus'".into() });
        let e = KvConfig::parse("dim = 4\n\ndim = 5\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }));
        let e = KvConfig::parse("dim 4\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        let cfg = KvConfig::parse("\n\ndim = four\n").unwrap();
        assert!(matches!(cfg.get::<usize>("dim"), Err(Error::Config { line: 3, .. })));
    }
}
