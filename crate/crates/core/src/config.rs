//! `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Every key must be consumed by the reader; leftovers are reported as
//! unknown keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigSyntax {
                line,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::ConfigSyntax {
                    line,
                    text: raw.to_string(),
                });
            }
            if entries
                .insert(key.to_string(), (line, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::validation(
                    key,
                    format!("duplicate key on line {line}"),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Removes and parses `key`, if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((_, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::validation(key, format!("`{v}`: {e}"))),
        }
    }

    pub fn take_raw(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Removes and parses a comma-separated list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.take_raw(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| Error::validation(key, format!("`{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::UnknownKey { key, line }),
        }
    }
}

/// Accumulates `key = value` lines for writing.
#[derive(Debug, Default)]
pub(crate) struct KvWriter(String);

impl KvWriter {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.0, "{key} = {value}");
        self
    }

    pub fn put_list<T: std::fmt::Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let joined = values
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(", ");
        self.put(key, joined)
    }

    pub fn finish(self) -> String {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let mut kv = KeyValues::parse("# header\n\nseed = 7 # trailing\nname=x\n").unwrap();
        assert_eq!(kv.take::<u64>("seed").unwrap(), Some(7));
        assert_eq!(kv.take_raw("name").as_deref(), Some("x"));
        kv.finish().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let mut kv = KeyValues::parse("seed = 1\nbogus = 2\n").unwrap();
        kv.take::<u64>("seed").unwrap();
        match kv.finish() {
            Err(Error::UnknownKey { key, line }) => {
                assert_eq!(key, "bogus");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_names_field() {
        let mut kv = KeyValues::parse("epochs = ten").unwrap();
        let err = kv.take::<usize>("epochs").unwrap_err();
        assert!(err.to_string().contains("epochs"));
    }

    #[test]
    fn missing_equals_is_syntax_error() {
        assert!(matches!(
            KeyValues::parse("just words"),
            Err(Error::ConfigSyntax { line: 1, .. })
        ));
    }

    #[test]
    fn lists() {
        let mut kv = KeyValues::parse("xs = 0.1, 0.2,0.3").unwrap();
        assert_eq!(
            kv.take_list::<f64>("xs").unwrap(),
            Some(vec![0.1, 0.2, 0.3])
        );
    }
}
