//! Float formatting shared by every CSV writer.

/// Scientific notation with 17 significant digits.
pub fn sci17(x: f64) -> String {
    format!("{:.16e}", x)
}
