//! Number formatting shared by CSV and JSON writers.
//!
//! Every float is written with 17 significant digits so outputs round-trip
//! bit-exactly and are byte-stable across runs.

use serde_json::{Number, Value};

pub const SCHEMA_VERSION: u32 = 1;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// JSON number with 17 significant digits; non-finite values become `null`.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(
            fmt_f64(x)
                .parse::<Number>()
                .expect("formatted float is valid JSON"),
        )
    } else {
        Value::Null
    }
}

pub fn json_vec(xs: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(xs.into_iter().map(json_f64).collect())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}
