//! `key=value` config files. Command-line flags take precedence over them.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KNOWN_KEYS: [&str; 11] = [
    "lambda",
    "sigma",
    "inject_gain",
    "combine",
    "restore_strength",
    "seed",
    "chi",
    "target_mean",
    "sigmas",
    "format",
    "threads",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(CliError::Usage(format!("config line {}: unknown key `{k}`", n + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The parsed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    /// `flag` if given, else the config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }
}

/// Comma-separated noise levels, e.g. `2,4,6,8`.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaList(pub Vec<f64>);

impl FromStr for SigmaList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite() && *x > 0.0)
                    .ok_or_else(|| format!("bad sigma `{t}`"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SigmaList(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let c = ConfigFile::parse("# tuned\nlambda = 0.4\nsigmas=2,4\n").unwrap();
        assert_eq!(c.get::<f64>("lambda").unwrap(), Some(0.4));
        assert_eq!(c.get::<SigmaList>("sigmas").unwrap(), Some(SigmaList(vec![2.0, 4.0])));
        assert_eq!(c.pick(Some(0.3), "lambda", 0.5).unwrap(), 0.3);
        assert_eq!(c.pick(None, "lambda", 0.5).unwrap(), 0.4);
        assert_eq!(c.pick(None, "chi", 1.0).unwrap(), 1.0);
        assert!(matches!(ConfigFile::parse("gamma=2.2"), Err(CliError::Usage(_))));
        assert!(matches!(ConfigFile::parse("lambda"), Err(CliError::Usage(_))));
        assert!(ConfigFile::parse("lambda=x").unwrap().get::<f64>("lambda").is_err());
    }

    #[test]
    fn sigma_lists() {
        assert_eq!("4".parse::<SigmaList>().unwrap().0, vec![4.0]);
        assert!("2,,4".parse::<SigmaList>().is_err());
        assert!("-1".parse::<SigmaList>().is_err());
    }
}
