//! Decimal precision control for the text artifact formats.

/// Rounds `x` to `digits` significant decimal digits.
///
/// The result's shortest round-trip representation (what `serde_json` writes)
/// has at most `digits` significant digits, and rounding is idempotent.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 || digits == 0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x)
        .parse()
        .expect("formatted float parses")
}
