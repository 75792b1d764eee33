//! Canonical JSON text.
//!
//! Object keys are written in lexicographic order, there is no insignificant
//! whitespace, integers are written verbatim and floating point numbers are
//! rounded to six decimal places with trailing zeros trimmed. Two values with
//! the same canonical text are considered equal throughout the crate, and the
//! SHA-256 of that text is the scene identity used for reproducibility.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Decimal places kept for floating point numbers.
pub const DECIMALS: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum CanonicalError {
    #[error("non-finite number cannot be written canonically")]
    NonFinite,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&value, &mut out)?;
    Ok(out)
}

pub fn write_value(value: &Value, out: &mut String) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                let f = n.as_f64().ok_or(CanonicalError::NonFinite)?;
                out.push_str(&format_decimal(f)?);
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s)?),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(item, out)?;
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key)?);
                out.push(':');
                write_value(&map[key], out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

/// Formats `x` with six decimals, trailing zeros and a dangling point removed.
/// Negative zero (including values that round to it) is written as `0`.
pub fn format_decimal(x: f64) -> Result<String, CanonicalError> {
    if !x.is_finite() {
        return Err(CanonicalError::NonFinite);
    }
    let mut s = format!("{:.*}", DECIMALS, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    Ok(s)
}

/// Rounds to the canonical precision, the value a canonical round-trip yields.
pub fn quantize(x: f64) -> f64 {
    match format_decimal(x) {
        Ok(s) => s.parse().unwrap_or(x),
        Err(_) => x,
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn rounds_to_six_places() {
        assert_eq!(format_decimal(0.3333333).unwrap(), "0.333333");
        assert_eq!(format_decimal(0.5).unwrap(), "0.5");
        assert_eq!(format_decimal(1.0).unwrap(), "1");
        assert_eq!(format_decimal(0.1234565).unwrap().len(), 8);
        assert_eq!(format_decimal(-0.0000001).unwrap(), "0");
        assert_eq!(format_decimal(-2.25).unwrap(), "-2.25");
        assert!(format_decimal(f64::NAN).is_err());
    }

    #[test]
    fn keys_sorted_no_whitespace() {
        let v = json!({"b": 1, "a": [true, null, "x\"y"], "c": {"z": 0.10, "y": -3}});
        let s = to_canonical_string(&v).unwrap();
        assert_eq!(s, r#"{"a":[true,null,"x\"y"],"b":1,"c":{"y":-3,"z":0.1}}"#);
    }

    #[test]
    fn large_integers_exact() {
        let s = to_canonical_string(&json!({"seed": u64::MAX})).unwrap();
        assert_eq!(s, format!("{{\"seed\":{}}}", u64::MAX));
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
