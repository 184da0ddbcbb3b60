//! Human results from the original study. These are shown next to simulated
//! numbers in reports and are never used as test oracles.

/// Mean two-point threshold for focused ultrasound alone, m.
pub const ULTRASOUND_TWO_POINT: f64 = 0.006;
/// Mean two-point threshold for the air cannon alone, m.
pub const VORTEX_TWO_POINT: f64 = 0.011;
/// Approximate increase of the ultrasound two-point threshold while a vortex
/// is held on, m.
pub const CONSTANT_VORTEX_INFLATION: f64 = 0.003;
/// Upper bound on the 50 Hz ultrasound perception rate under a running
/// cannon.
pub const MASKED_50HZ_RATE_BELOW: f64 = 0.20;
/// Ultrasound force above which ultrasound alone was nearly always felt, N.
pub const ULTRASOUND_SATURATION_FORCE: f64 = 4e-3;
/// Cannon force above which the vortex alone was always felt, N.
pub const VORTEX_SATURATION_FORCE: f64 = 11e-3;
/// Simultaneous presentation rates as `(modulation Hz, rate)`.
pub const SIMULTANEOUS_RATES: [(f64, f64); 2] = [(50.0, 0.952), (200.0, 1.0)];

/// Human simultaneous-presentation rate at `modulation_hz`, if measured.
pub fn simultaneous_rate(modulation_hz: f64) -> Option<f64> {
    SIMULTANEOUS_RATES
        .iter()
        .find(|(hz, _)| (hz - modulation_hz).abs() < 1e-9)
        .map(|&(_, r)| r)
}

/// Human two-point threshold for a double-point condition label, m.
///
/// A constant ultrasound left the vortex threshold unchanged, while a constant
/// vortex inflated the ultrasound one.
pub fn two_point_threshold(label: &str) -> Option<f64> {
    match label {
        "a" | "b" => Some(ULTRASOUND_TWO_POINT),
        "c" | "d" | "e" => Some(VORTEX_TWO_POINT),
        "f" | "g" => Some(ULTRASOUND_TWO_POINT + CONSTANT_VORTEX_INFLATION),
        _ => None,
    }
}
