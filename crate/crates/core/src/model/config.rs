//! JSON model configuration files.
//!
//! ```json
//! {"family": "table", "table": [[k0, k1, prob], ...]}
//! {"family": "binomial_split", "z_pmf": [[k, prob], ...], "p": 0.5}
//! {"family": "cluster", "z_pmf": [[k, prob], ...], "p": 0.5}
//! {"family": "linear_fractional_independent", "b": 0.3, "p": 0.3, "kmax": 30}
//! ```
//!
//! Only the fields of the chosen family may appear. `kmax` is optional and
//! defaults to the smallest value keeping the folded tail below 1e-12.

use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{ModelError, OffspringLaw};
use crate::pmf::Pmf;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn schema(msg: impl Into<String>) -> ConfigError {
    ConfigError::Schema(msg.into())
}

pub fn load_model_config(path: impl AsRef<Path>) -> Result<OffspringLaw, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_model_config(&text)
}

pub fn parse_model_config(text: &str) -> Result<OffspringLaw, ConfigError> {
    let value: Value = serde_json::from_str(text)?;
    let obj = value.as_object().ok_or_else(|| schema("top level must be an object"))?;
    let family = obj
        .get("family")
        .and_then(Value::as_str)
        .ok_or_else(|| schema("missing string field \"family\""))?;

    let (required, optional): (&[&str], &[&str]) = match family {
        "table" => (&["table"], &[]),
        "binomial_split" | "cluster" => (&["z_pmf", "p"], &[]),
        "linear_fractional_independent" => (&["b", "p"], &["kmax"]),
        other => return Err(schema(format!("unknown family \"{other}\""))),
    };
    for key in obj.keys().filter(|k| k.as_str() != "family") {
        if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
            return Err(schema(format!("field \"{key}\" is not allowed for family \"{family}\"")));
        }
    }
    for key in required {
        if !obj.contains_key(*key) {
            return Err(schema(format!("family \"{family}\" requires field \"{key}\"")));
        }
    }

    let law = match family {
        "table" => OffspringLaw::from_table(&table_rows(&obj["table"])?)?,
        "binomial_split" => OffspringLaw::binomial_split(&z_pmf(&obj["z_pmf"])?, number(obj, "p")?)?,
        "cluster" => OffspringLaw::cluster(&z_pmf(&obj["z_pmf"])?, number(obj, "p")?)?,
        _ => {
            let b = number(obj, "b")?;
            let p = number(obj, "p")?;
            let kmax = match obj.get("kmax") {
                Some(v) => count(v, "kmax")? as u32,
                None => OffspringLaw::linear_fractional_default_kmax(b, p)?,
            };
            OffspringLaw::linear_fractional_independent(b, p, kmax)?
        }
    };
    Ok(law)
}

fn number(obj: &Map<String, Value>, key: &str) -> Result<f64, ConfigError> {
    obj[key].as_f64().ok_or_else(|| schema(format!("\"{key}\" must be a number")))
}

/// Nonnegative integer; `2` and `2.0` are accepted, `2.5` is not.
fn count(v: &Value, what: &str) -> Result<u64, ConfigError> {
    if let Some(n) = v.as_u64() {
        return Ok(n);
    }
    match v.as_f64() {
        Some(x) if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 => Ok(x as u64),
        _ => Err(schema(format!("{what} must be a nonnegative integer, got {v}"))),
    }
}

fn rows<'a>(v: &'a Value, what: &str, width: usize) -> Result<Vec<&'a [Value]>, ConfigError> {
    let arr = v.as_array().ok_or_else(|| schema(format!("\"{what}\" must be an array")))?;
    arr.iter()
        .map(|row| match row.as_array() {
            Some(r) if r.len() == width => Ok(r.as_slice()),
            _ => Err(schema(format!("each \"{what}\" entry must be an array of {width} numbers"))),
        })
        .collect()
}

fn table_rows(v: &Value) -> Result<Vec<(u32, u32, f64)>, ConfigError> {
    rows(v, "table", 3)?
        .into_iter()
        .map(|r| {
            let k0 = count(&r[0], "k0")? as u32;
            let k1 = count(&r[1], "k1")? as u32;
            let p = r[2].as_f64().ok_or_else(|| schema("probability must be a number"))?;
            Ok((k0, k1, p))
        })
        .collect()
}

fn z_pmf(v: &Value) -> Result<Pmf, ConfigError> {
    let pairs = rows(v, "z_pmf", 2)?
        .into_iter()
        .map(|r| {
            let k = count(&r[0], "k")? as usize;
            let p = r[1].as_f64().ok_or_else(|| schema("probability must be a number"))?;
            Ok((k, p))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Pmf::from_pairs(&pairs).map_err(|e| ConfigError::Model(e.into()))
}
