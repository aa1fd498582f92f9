//! Resolved run parameters: config file values overridden by flags, with
//! every default that was used recorded for the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// A user input error; the process exits with status 2.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub type Result<T> = std::result::Result<T, Invalid>;

pub fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Invalid(msg.into()))
}

#[derive(Debug, Default, Clone)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!(
                    "config line {}: expected `key = value`, got {raw:?}",
                    n + 1
                ));
            };
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return invalid(format!("config line {}: empty key", n + 1));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Params { values })
    }

    pub fn load(config: Option<&Path>) -> Result<Self> {
        match config {
            None => Ok(Params::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
                Self::parse_config(&text)
            }
        }
    }

    /// Applies flag values; flags always win over the config file.
    pub fn apply(&mut self, flags: impl IntoIterator<Item = (&'static str, Option<String>)>) {
        for (k, v) in flags {
            if let Some(v) = v {
                self.values.insert(k.to_string(), v);
            }
        }
    }

    pub fn set_default(&mut self, key: &str, default: &str) {
        self.values
            .entry(key.to_string())
            .or_insert_with(|| default.to_string());
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&mut self, key: &str, default: Option<&str>) -> Result<String> {
        if let Some(d) = default {
            self.set_default(key, d);
        }
        match self.values.get(key) {
            Some(v) => Ok(v.clone()),
            None => invalid(format!("missing required parameter `{key}`")),
        }
    }

    pub fn get<T: FromStr>(&mut self, key: &str, default: Option<&str>) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key, default)?;
        raw.parse()
            .map_err(|e| Invalid(format!("parameter `{key}` = {raw:?}: {e}")))
    }

    pub fn flag(&mut self, key: &str) -> Result<bool> {
        match self.raw(key, Some("false"))?.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => invalid(format!(
                "parameter `{key}` must be true or false, got {other:?}"
            )),
        }
    }

    pub fn list<T: FromStr>(&mut self, key: &str, default: Option<&str>) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key, default)?;
        let items: Result<Vec<T>> = raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| Invalid(format!("parameter `{key}` item {s:?}: {e}")))
            })
            .collect();
        let items = items?;
        if items.is_empty() {
            return invalid(format!("parameter `{key}` is empty"));
        }
        Ok(items)
    }

    /// `W x H`, or a single number for a square.
    pub fn size(&mut self, key: &str, default: Option<&str>) -> Result<(u32, u32)> {
        let raw = self.raw(key, default)?;
        parse_size(&raw).map_err(|e| Invalid(format!("parameter `{key}`: {}", e.0)))
    }

    /// `X,Y`, or a single number for both.
    pub fn pair(&mut self, key: &str, default: Option<&str>) -> Result<(u32, u32)> {
        let raw = self.raw(key, default)?;
        parse_pair(&raw).map_err(|e| Invalid(format!("parameter `{key}`: {}", e.0)))
    }

    /// `start:end:step`, inclusive of `end`.
    pub fn range(&mut self, key: &str, default: Option<&str>) -> Result<Vec<f64>> {
        let raw = self.raw(key, default)?;
        parse_range(&raw).map_err(|e| Invalid(format!("parameter `{key}`: {}", e.0)))
    }
}

pub fn parse_size(s: &str) -> Result<(u32, u32)> {
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| Invalid(format!("expected a pixel count, got {t:?}")))
    };
    match s.split_once(['x', 'X']) {
        Some((w, h)) => Ok((parse(w)?, parse(h)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

pub fn parse_pair(s: &str) -> Result<(u32, u32)> {
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| Invalid(format!("expected a non-negative integer, got {t:?}")))
    };
    match s.split_once(',') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Invalid(format!("bad number {p:?} in range {s:?}")))
        })
        .collect::<Result<_>>()?;
    let (start, end, step) = match nums[..] {
        [a] => (a, a, 1.0),
        [a, b] => (a, b, 1.0),
        [a, b, c] => (a, b, c),
        _ => return invalid(format!("range must be start:end[:step], got {s:?}")),
    };
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return invalid(format!("range {s:?} needs start <= end and step > 0"));
    }
    // index-based so that accumulated rounding never drops the end point
    let n = ((end - start) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        return invalid(format!("range {s:?} has too many points"));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_and_flags() {
        let mut p =
            Params::parse_config("# defaults\nimage = 1000x1000\nsigma_data=1000 # baseline\n\n")
                .unwrap();
        p.apply([("image", Some("20x10".to_string())), ("crop", None)]);
        assert_eq!(p.size("image", None).unwrap(), (20, 10));
        assert_eq!(p.get::<f64>("sigma-data", None).unwrap(), 1000.0);
        assert_eq!(p.size("crop", Some("5")).unwrap(), (5, 5));
        assert_eq!(p.resolved()["crop"], "5");
        assert!(p.get::<f64>("missing", None).is_err());
        assert!(Params::parse_config("no equals sign").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1:3").unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_range("0:1:0.25").unwrap().len(), 5);
        assert_eq!(*parse_range("1:5:0.5").unwrap().last().unwrap(), 5.0);
        assert!(parse_range("3:1").is_err());
        assert!(parse_range("1:2:0").is_err());
    }

    #[test]
    fn sizes_and_pairs() {
        assert_eq!(parse_size("100x50").unwrap(), (100, 50));
        assert_eq!(parse_size("7").unwrap(), (7, 7));
        assert!(parse_size("axb").is_err());
        assert_eq!(parse_pair("3,4").unwrap(), (3, 4));
    }
}
