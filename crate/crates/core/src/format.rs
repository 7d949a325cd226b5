//! Text formatting shared by every exported artifact.

/// Significant digits used for every number written to disk.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` rounded to twelve significant digits, printed in the shortest
/// form that round-trips the rounded value. Negative zero prints as `0`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("scientific notation produced by format! always parses");
    format!("{rounded}")
}

/// Rounds `x` to twelve significant digits, for values that are serialized
/// through serde rather than [`num`].
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("scientific notation produced by format! always parses")
}
