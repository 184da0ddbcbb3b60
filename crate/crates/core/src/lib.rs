//! Engine for co-presenting focused-ultrasound and vortex-ring mid-air
//! haptics.
//!
//! - [`geometry`]: points and sample grids
//! - [`acoustic`]: phased-array delays, field simulation, modulation, force law
//! - [`vortex`]: slug model, formation stability and ring kinematics
//! - [`scheduler`]: co-arrival timing of cannon shots and ultrasound frames
//! - [`calibration`]: setting-to-force curves
//! - [`psychophysics`]: simulated threshold experiments
//! - [`protocol`]: device wire format and loopback emulator
//! - [`config`]: TOML engine configuration
//!
//! All quantities are SI unless a name says otherwise.

pub mod acoustic;
pub mod calibration;
pub mod config;
pub mod geometry;
pub mod protocol;
pub mod psychophysics;
pub mod scheduler;
pub mod vortex;

use thiserror::Error;

pub use config::EngineConfig;
pub use geometry::Point3;

/// Shortest decimal form of `v` after rounding to ten significant digits, so
/// unit conversions print as `3.268` rather than `3.2680000000000002`.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("formatted float parses");
    rounded.to_string()
}

/// Any domain error raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Acoustic(#[from] acoustic::AcousticError),
    #[error(transparent)]
    Vortex(#[from] vortex::VortexError),
    #[error(transparent)]
    Schedule(#[from] scheduler::ScheduleError),
    #[error(transparent)]
    Calibration(#[from] calibration::CalibrationError),
    #[error(transparent)]
    Psychophysics(#[from] psychophysics::PsychophysicsError),
    #[error(transparent)]
    Encode(#[from] protocol::EncodeError),
    #[error(transparent)]
    Decode(#[from] protocol::DecodeError),
    #[error("{0}")]
    Config(String),
}
