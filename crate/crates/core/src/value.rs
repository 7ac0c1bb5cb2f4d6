//! Dynamic values shared by the interpreter, the bridge and the engine.
//!
//! DateTimes travel as normalised ISO-8601 strings; there is no separate
//! variant.

use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub type Map = IndexMap<String, Value>;

/// Map equality ignores key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(untagged)]
pub enum Value {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    List(Vec<Value>),
    Map(Map),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&Map> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_map_mut(&mut self) -> Option<&mut Map> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Int(_) => "int",
            Value::Str(_) => "String",
            Value::List(_) => "list",
            Value::Map(_) => "object",
        }
    }

    /// Looks up a `/`-free dotted path such as `window.innerWidth`.
    pub fn get_path(&self, path: &str) -> Option<&Value> {
        path.split('.').try_fold(self, |v, k| v.as_map()?.get(k))
    }

    /// Texts a human would see for this value, used by substring search.
    pub fn displayable_fields(&self) -> Vec<String> {
        match self {
            Value::Null => Vec::new(),
            Value::Map(m) => m.values().flat_map(Value::displayable_fields).collect(),
            Value::List(xs) => xs.iter().flat_map(Value::displayable_fields).collect(),
            other => vec![other.to_string()],
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }

    /// Converts JSON; floats are rejected since no payload type maps to them.
    pub fn from_json(v: &serde_json::Value) -> Result<Value, PathError> {
        Value::from_json_at(v, "")
    }

    /// As [`Value::from_json`] with error paths prefixed by `path`.
    pub fn from_json_at(v: &serde_json::Value, path: &str) -> Result<Value, PathError> {
        from_json_at(v, path)
    }
}

/// A conversion error at a JSON-pointer-like path.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct PathError {
    pub path: String,
    pub message: String,
}

fn from_json_at(v: &serde_json::Value, path: &str) -> Result<Value, PathError> {
    Ok(match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => {
                return Err(PathError {
                    path: if path.is_empty() { "/".into() } else { path.to_string() },
                    message: format!("non-integer number {n}"),
                })
            }
        },
        serde_json::Value::String(s) => Value::Str(s.clone()),
        serde_json::Value::Array(xs) => Value::List(
            xs.iter().enumerate().map(|(i, x)| from_json_at(x, &format!("{path}/{i}"))).collect::<Result<_, _>>()?,
        ),
        serde_json::Value::Object(o) => Value::Map(
            o.iter()
                .map(|(k, x)| Ok((k.clone(), from_json_at(x, &format!("{path}/{k}"))?)))
                .collect::<Result<_, PathError>>()?,
        ),
    })
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => Ok(()),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(s) => f.write_str(s),
            Value::List(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            Value::Map(_) => write!(f, "{}", self.to_json()),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl<K: Into<String>, const N: usize> From<[(K, Value); N]> for Value {
    fn from(entries: [(K, Value); N]) -> Self {
        Value::Map(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

/// Parses `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM` or `YYYY-MM-DDTHH:MM:SS`.
pub fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
}

/// `YYYY-MM-DDTHH:MM:SS` (UTC) for a Unix timestamp in milliseconds.
pub fn format_epoch_ms(ms: u64) -> String {
    chrono::DateTime::from_timestamp_millis(ms as i64)
        .map(|d| d.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| "1970-01-01T00:00:00".into())
}

/// Builds a date from possibly out-of-range parts: months past 12 roll into
/// later years and days past the month end roll into later months.
pub fn normalize_date(year: i64, month: i64, day: i64) -> Option<NaiveDate> {
    let months = year.checked_mul(12)?.checked_add(month.checked_sub(1)?)?;
    let (y, m) = (months.div_euclid(12), months.rem_euclid(12) + 1);
    let first = NaiveDate::from_ymd_opt(i32::try_from(y).ok()?, m as u32, 1)?;
    first.checked_add_signed(chrono::Duration::try_days(day.checked_sub(1)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_equality_ignores_order() {
        let a = Value::from([("a", Value::Int(1)), ("b", Value::Int(2))]);
        let b = Value::from([("b", Value::Int(2)), ("a", Value::Int(1))]);
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_and_float_rejection() {
        let j = serde_json::json!({"a": [1, "x", null, true], "b": {"c": -3}});
        let v = Value::from_json(&j).unwrap();
        assert_eq!(v.to_json(), j);
        assert_eq!(Value::from_json(&serde_json::json!({"a": [1.5]})).unwrap_err().to_string(), "/a/0: non-integer number 1.5");
    }

    #[test]
    fn date_normalisation() {
        assert_eq!(normalize_date(2014, 7, 25).unwrap().to_string(), "2014-07-25");
        assert_eq!(normalize_date(2014, 7, 32).unwrap().to_string(), "2014-08-01");
        assert_eq!(normalize_date(2014, 13, 1).unwrap().to_string(), "2015-01-01");
        assert_eq!(normalize_date(2014, 2, 29).unwrap().to_string(), "2014-03-01");
        assert!(parse_datetime("2014-07-22T09:30").is_some());
        assert!(parse_datetime("2014-07-22T09").is_none());
    }
}
