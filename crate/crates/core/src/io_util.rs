//! Deterministic text formatting shared by every file format and CSV writer.

/// 17 significant digits — enough to round-trip any f64 exactly, fixed width
/// discipline so repeated runs diff clean.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}
