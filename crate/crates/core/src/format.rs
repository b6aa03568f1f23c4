//! Output formatting: every number leaves the program with at most nine
//! significant digits.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Round to nine significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Shortest text that reads back as `round9(x)`.
pub fn sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:?}", round9(x))
}

pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(num) => {
            if num.is_f64() {
                if let Some(f) = num.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round9(f)) {
                        *num = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with nine-significant-digit numbers and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::Numeric(e.to_string()))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::Numeric(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
