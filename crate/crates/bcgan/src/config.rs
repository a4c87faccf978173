//! Flat `key = value` config files for the CLI.
//!
//! Lines are `key = value`; `#` starts a comment; keys are dotted
//! (e.g. `train.batch_size`). Unknown keys are rejected by the consumer,
//! not the parser.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-')
            {
                return Err(Error::Config(format!(
                    "line {}: invalid key {key:?}",
                    lineno + 1
                )));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    lineno + 1
                )));
            }
        }
        Ok(Config { values })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("key {key:?}: cannot parse {v:?}"))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_basic_file() {
        let cfg = Config::parse(
            "# dataset\n\
             dataset.n = 32\n\
             train.strategy = binary-bits  # default\n\
             \n\
             train.lr = 1e-4\n",
        )
        .unwrap();
        assert_eq!(cfg.get_parsed::<usize>("dataset.n").unwrap(), Some(32));
        assert_eq!(cfg.get("train.strategy"), Some("binary-bits"));
        assert_eq!(cfg.get_parsed::<f32>("train.lr").unwrap(), Some(1e-4));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Config::parse("just a line").is_err());
        assert!(Config::parse("= value").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("bad key! = 1").is_err());
        assert!(Config::parse("n = x")
            .unwrap()
            .get_parsed::<usize>("n")
            .is_err());
    }
}
