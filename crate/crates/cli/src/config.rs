//! Flat `key = value` configuration documents.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys may appear once. Every key must be consumed by the command that
//! reads the document; leftovers are reported as unknown.
//!
//! Value syntax:
//! - numbers: `0.25`, `1e-6`, `2^-10`
//! - lists: comma separated, `1, 2, 5`
//! - integer ranges (inclusive) inside lists: `4..200`
//! - power ranges: `2^-2..2^-10` expands to every integer exponent between
//! - window lengths may be written `c/f`, meaning `ceil(c / f)`

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, (String, usize)>,
}

fn bad(key: &str, line: usize, msg: impl std::fmt::Display) -> CliError {
    if line == 0 {
        CliError::Config(format!("{key}: {msg}"))
    } else {
        CliError::Config(format!("line {line}: {key}: {msg}"))
    }
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    i + 1
                ))
            })?;
            cfg.insert(key.trim(), value.trim(), i + 1)?;
        }
        Ok(cfg)
    }

    /// Adds a command-line override `key=value`, replacing any file entry.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--set expects KEY=VALUE, got {assignment:?}"))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Config("--set with an empty key".into()));
        }
        self.entries
            .insert(key.to_string(), (value.trim().to_string(), 0));
        Ok(())
    }

    fn insert(&mut self, key: &str, value: &str, line: usize) -> Result<(), CliError> {
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Config(format!(
                "line {line}: invalid key {key:?}"
            )));
        }
        if let Some((_, first)) = self.entries.get(key) {
            return Err(bad(
                key,
                line,
                format!("duplicate key (first set on line {first})"),
            ));
        }
        self.entries
            .insert(key.to_string(), (value.to_string(), line));
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<(), CliError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(bad(&key, line, "unknown key")),
        }
    }

    pub fn string(&mut self, key: &str) -> Option<String> {
        self.take(key).map(|(v, _)| v)
    }

    pub fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)
            .map(|(v, line)| v.parse::<T>().map_err(|e| bad(key, line, e)))
            .transpose()
    }

    pub fn real(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        self.take(key)
            .map(|(v, line)| parse_real(&v).map_err(|e| bad(key, line, e)))
            .transpose()
    }

    pub fn require_real(&mut self, key: &str) -> Result<f64, CliError> {
        self.real(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key {key}")))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key {key}")))
    }

    pub fn bool(&mut self, key: &str) -> Result<Option<bool>, CliError> {
        self.parsed(key)
    }

    pub fn counts(&mut self, key: &str) -> Result<Option<Vec<u64>>, CliError> {
        self.take(key)
            .map(|(v, line)| parse_counts(&v).map_err(|e| bad(key, line, e)))
            .transpose()
    }

    pub fn reals(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.take(key)
            .map(|(v, line)| parse_reals(&v).map_err(|e| bad(key, line, e)))
            .transpose()
    }

    /// Window lengths; entries of the form `c/f` become `ceil(c / f)`.
    pub fn windows(&mut self, key: &str, f: f64) -> Result<Option<Vec<u64>>, CliError> {
        self.take(key)
            .map(|(v, line)| parse_windows(&v, f).map_err(|e| bad(key, line, e)))
            .transpose()
    }

    /// Comma-separated raw items.
    pub fn items(&mut self, key: &str) -> Option<Vec<String>> {
        self.string(key)
            .map(|v| split_items(&v).map(str::to_string).collect())
    }
}

fn split_items(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Plain float or `base^exp`.
pub fn parse_real(v: &str) -> Result<f64, String> {
    let v = v.trim();
    let out = match v.split_once('^') {
        Some((b, e)) => {
            let b: f64 = b.trim().parse().map_err(|_| format!("bad base in {v:?}"))?;
            let e: f64 = e
                .trim()
                .parse()
                .map_err(|_| format!("bad exponent in {v:?}"))?;
            b.powf(e)
        }
        None => v.parse().map_err(|_| format!("not a number: {v:?}"))?,
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(format!("not a finite number: {v:?}"))
    }
}

fn parse_count(v: &str) -> Result<u64, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("not a non-negative integer: {v:?}"))
}

fn parse_counts(v: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in split_items(v) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b) = (parse_count(a)?, parse_count(b)?);
                out.extend(a..=b);
            }
            None => out.push(parse_count(item)?),
        }
    }
    Ok(out)
}

fn parse_power(v: &str) -> Option<(f64, i32)> {
    let (b, e) = v.trim().split_once('^')?;
    Some((b.trim().parse().ok()?, e.trim().parse().ok()?))
}

fn parse_reals(v: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in split_items(v) {
        match item.split_once("..") {
            Some((a, b)) => {
                let ((ba, ea), (bb, eb)) = parse_power(a).zip(parse_power(b)).ok_or_else(|| {
                    format!("ranges of reals must be powers, as in 2^-2..2^-10: {item:?}")
                })?;
                if ba != bb {
                    return Err(format!("power range with different bases: {item:?}"));
                }
                let step = if eb >= ea { 1 } else { -1 };
                let mut e = ea;
                loop {
                    out.push(ba.powi(e));
                    if e == eb {
                        break;
                    }
                    e += step;
                }
            }
            None => out.push(parse_real(item)?),
        }
    }
    Ok(out)
}

fn parse_windows(v: &str, f: f64) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in split_items(v) {
        match item.strip_suffix("/f") {
            Some(c) => {
                let c = parse_real(c)?;
                out.push((c / f).ceil() as u64);
            }
            None => out.extend(parse_counts(item)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_ranges() {
        let mut c =
            KvConfig::parse("# grid\np = 2^-2..2^-4, 1e-3  # trailing\nN = 4..6, 10\n\nname = x\n")
                .unwrap();
        assert_eq!(
            c.reals("p").unwrap().unwrap(),
            vec![0.25, 0.125, 0.0625, 1e-3]
        );
        assert_eq!(c.counts("N").unwrap().unwrap(), vec![4, 5, 6, 10]);
        assert_eq!(c.string("name").as_deref(), Some("x"));
        c.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let c = KvConfig::parse("a = 1\n").unwrap();
        assert!(matches!(c.finish(), Err(CliError::Config(_))));
        assert!(KvConfig::parse("a = 1\na = 2\n").is_err());
        assert!(KvConfig::parse("just words\n").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = KvConfig::parse("a = 1\n").unwrap();
        c.set("a=3").unwrap();
        assert_eq!(c.require::<u32>("a").unwrap(), 3);
    }

    #[test]
    fn windows_in_units_of_one_over_f() {
        assert_eq!(
            parse_windows("2/f, 4/f, 100", 0.25).unwrap(),
            vec![8, 16, 100]
        );
        assert_eq!(parse_windows("2/f", 0.3).unwrap(), vec![7]);
    }

    #[test]
    fn empty_ranges_expand_to_nothing() {
        assert!(parse_counts("5..4").unwrap().is_empty());
        assert!(parse_real("inf").is_err());
    }
}
