//! Experiment configuration: a structured-text file overlaid by command-line
//! flags, plus the small value parsers shared by the recipes.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use membrane::lattice::{GridDomain, ShapePredicate};

/// Parsed config file as a JSON tree.
pub fn load_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    Ok(serde_json::to_value(table)?)
}

/// The subtree at a dotted key, e.g. `infvol.green`.
pub fn section<'a>(file: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(file, |v, k| v.get(k))
}

/// Fields set on the command line win over the file; unset flags fall back
/// to the file.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>) -> Result<T> {
    let mut merged = match file {
        Some(Value::Object(m)) => m.clone(),
        Some(_) => bail!("config section must be a table"),
        None => Map::new(),
    };
    if let Value::Object(m) = serde_json::to_value(flags)? {
        for (k, v) in m {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| anyhow!("invalid configuration: {e}"))
}

/// `"1/16"` or `"0.0625"`.
pub fn parse_spacing(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>()? / b.trim().parse::<f64>()?,
        None => s.parse::<f64>()?,
    };
    if !(v > 0.0 && v.is_finite()) {
        bail!("spacing must be positive, got '{s}'");
    }
    Ok(v)
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| Ok(p.trim().parse::<T>()?)).collect()
}

pub fn parse_spacings(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_spacing).collect()
}

/// `"5..15"` (inclusive) or a comma list.
pub fn parse_range(s: &str) -> Result<Vec<i32>> {
    match s.split_once("..") {
        Some((a, b)) => Ok((a.trim().parse::<i32>()?..=b.trim().parse::<i32>()?).collect()),
        None => parse_list(s),
    }
}

/// Points separated by `;`, coordinates by `,`.
pub fn parse_points(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').filter(|p| !p.trim().is_empty()).map(parse_list::<f64>).collect()
}

pub fn shape(name: &str, d: usize) -> Result<ShapePredicate> {
    Ok(match name {
        "box" => ShapePredicate::cube(d, -1.0, 1.0)?,
        "ball" => ShapePredicate::unit_ball(d)?,
        other => bail!("unknown shape '{other}' (expected box or ball)"),
    })
}

pub fn domain(shape_name: &str, d: usize, h: f64) -> Result<GridDomain> {
    Ok(GridDomain::classify(&shape(shape_name, d)?, h)?)
}

pub fn required<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| anyhow!("missing required parameter --{name}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, serde::Deserialize, Debug, PartialEq)]
    struct P {
        d: Option<usize>,
        h: Option<String>,
    }

    #[test]
    fn flags_override_file() {
        let file: Value = serde_json::json!({"d": 3, "h": "1/8"});
        let flags = P { d: Some(2), h: None };
        let m = merge(&flags, Some(&file)).unwrap();
        assert_eq!(m, P { d: Some(2), h: Some("1/8".into()) });
    }

    #[test]
    fn spacings() {
        assert_eq!(parse_spacings("1/8, 1/16,0.5").unwrap(), vec![0.125, 0.0625, 0.5]);
        assert!(parse_spacing("-1").is_err());
        assert_eq!(parse_range("5..7").unwrap(), vec![5, 6, 7]);
    }
}
