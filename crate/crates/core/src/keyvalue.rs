//! The line-oriented `key = value` dialect shared by platform files, sweep
//! configurations and the `[meta]` section of calibration profiles.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Strips a trailing `#` comment and surrounding whitespace.
pub fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

#[derive(Debug, Clone)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, line_no, format!("expected 'key = value', got '{line}'")))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::parse(path, line_no, "empty key"));
            }
            if entries
                .insert(key.clone(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::parse(path, line_no, format!("duplicate key '{key}'")));
            }
        }
        Ok(KeyValues {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn required_raw(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::parse(&self.path, 0, format!("missing required key '{key}'")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(&self.path, *line, format!("invalid value '{v}' for '{key}'"))),
        }
    }

    /// Comma-separated list value.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                item.parse().map_err(|_| {
                    Error::parse(&self.path, *line, format!("invalid list item '{item}' for '{key}'"))
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub(crate) fn error(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::parse(&self.path, self.line_of(key), msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let kv = KeyValues::parse(Path::new("x"), "# header\n a = 1 # one\nB=2,3, 4\n\n").unwrap();
        assert_eq!(kv.get::<u32>("a").unwrap(), Some(1));
        assert_eq!(kv.get_list::<u32>("b").unwrap(), Some(vec![2, 3, 4]));
        assert_eq!(kv.line_of("b"), 3);
        assert_eq!(kv.get::<u32>("c").unwrap(), None);
    }

    #[test]
    fn rejects_garbage() {
        let err = KeyValues::parse(Path::new("x"), "a = 1\nnonsense\n").unwrap_err();
        assert!(err.to_string().contains("x:2"), "{err}");
        assert!(KeyValues::parse(Path::new("x"), "a = 1\na = 2\n").is_err());
        let kv = KeyValues::parse(Path::new("x"), "a = one\n").unwrap();
        assert!(kv.get::<f64>("a").is_err());
    }
}
