//! Serde helpers for values that may be non-finite.

use serde::Serializer;

/// Finite floats as numbers, `±∞` as `"+inf"`/`"-inf"` and NaN as `"nan"`,
/// since JSON has no literal for them.
pub fn extended_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}
