//! Device-setting to force curves: a straight line for the cannon supply
//! voltage and the `sin²` intensity law for the array.

use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::{intensity_to_force, MAX_INTENSITY};
use crate::vortex::{slug_length, vortex_speed, CannonSpec, VortexError};

/// Voltage sweep of the cannon force measurement, V.
pub const CANNON_SWEEP_VOLTS: [f64; 6] = [5.0, 7.5, 10.0, 12.5, 15.0, 17.5];
/// Intensity sweep of the ultrasound force measurement, device units.
pub const ULTRASOUND_SWEEP_INTENSITY: [f64; 7] = [0.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("need at least 2 distinct settings, got {0}")]
    InsufficientData(usize),
    #[error("every point sits on a zero of sin²; f_max is unidentifiable")]
    Unidentifiable,
    #[error("point {index} is invalid: {reason}")]
    InvalidPoint { index: usize, reason: String },
    #[error("force {force} N outside the curve range [{min}, {max}]")]
    OutOfRange { force: f64, min: f64, max: f64 },
    #[error("fitted curve is not invertible: {0}")]
    NotInvertible(String),
    #[error("fitted curve predicts negative force {force} at setting {setting}")]
    NegativePrediction { setting: f64, force: f64 },
    #[error("malformed calibration CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Vortex(#[from] VortexError),
}

/// One balance reading at a device setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    /// Supply volts (cannon) or drive intensity (array).
    pub setting: f64,
    /// Newtons.
    pub force: f64,
}

impl CalibrationPoint {
    pub fn new(setting: f64, force: f64) -> Self {
        Self { setting, force }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CalibrationCurve {
    /// `force = slope · volts + intercept` over `[min_setting, max_setting]`.
    CannonLinear {
        slope: f64,
        intercept: f64,
        min_setting: f64,
        max_setting: f64,
        residual: f64,
    },
    /// `force = f_max · sin²(π p / 1248)`.
    UltrasoundSin2 { f_max: f64, residual: f64 },
}

impl CalibrationCurve {
    pub fn linear(slope: f64, intercept: f64, min_setting: f64, max_setting: f64) -> Self {
        CalibrationCurve::CannonLinear {
            slope,
            intercept,
            min_setting,
            max_setting,
            residual: 0.0,
        }
    }

    pub fn sin2(f_max: f64) -> Self {
        CalibrationCurve::UltrasoundSin2 {
            f_max,
            residual: 0.0,
        }
    }

    /// Root-mean-square fit residual in newtons.
    pub fn residual(&self) -> f64 {
        match *self {
            CalibrationCurve::CannonLinear { residual, .. }
            | CalibrationCurve::UltrasoundSin2 { residual, .. } => residual,
        }
    }

    pub fn predict(&self, setting: f64) -> f64 {
        match *self {
            CalibrationCurve::CannonLinear {
                slope, intercept, ..
            } => slope * setting + intercept,
            CalibrationCurve::UltrasoundSin2 { f_max, .. } => {
                let s = (PI * setting / MAX_INTENSITY).sin();
                f_max * s * s
            }
        }
    }

    /// Largest force the curve reaches over its calibrated range.
    pub fn max_force(&self) -> f64 {
        match *self {
            CalibrationCurve::CannonLinear {
                slope,
                intercept,
                min_setting,
                max_setting,
                ..
            } => (slope * min_setting + intercept).max(slope * max_setting + intercept),
            CalibrationCurve::UltrasoundSin2 { f_max, .. } => f_max,
        }
    }

    fn check_non_negative(&self) -> Result<(), CalibrationError> {
        if let CalibrationCurve::CannonLinear {
            min_setting,
            max_setting,
            ..
        } = *self
        {
            for s in [min_setting, max_setting] {
                let f = self.predict(s);
                // Allow rounding noise on a line through the origin.
                if f < -1e-12 {
                    return Err(CalibrationError::NegativePrediction { setting: s, force: f });
                }
            }
        }
        Ok(())
    }
}

fn check_points(points: &[CalibrationPoint]) -> Result<(), CalibrationError> {
    for (index, p) in points.iter().enumerate() {
        if !p.setting.is_finite() || !p.force.is_finite() {
            return Err(CalibrationError::InvalidPoint {
                index,
                reason: "non-finite value".into(),
            });
        }
        if p.force < 0.0 {
            return Err(CalibrationError::InvalidPoint {
                index,
                reason: format!("negative force {}", p.force),
            });
        }
    }
    Ok(())
}

/// Ordinary least-squares line through voltage/force pairs.
pub fn fit_cannon_curve(points: &[CalibrationPoint]) -> Result<CalibrationCurve, CalibrationError> {
    check_points(points)?;
    let mut settings: Vec<f64> = points.iter().map(|p| p.setting).collect();
    settings.sort_by(f64::total_cmp);
    settings.dedup();
    if settings.len() < 2 {
        return Err(CalibrationError::InsufficientData(settings.len()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.setting).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.force).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in points {
        let dx = p.setting - mean_x;
        sxx += dx * dx;
        sxy += dx * (p.force - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = rms(points, |s| slope * s + intercept);
    let curve = CalibrationCurve::CannonLinear {
        slope,
        intercept,
        min_setting: settings[0],
        max_setting: *settings.last().expect("two settings"),
        residual,
    };
    curve.check_non_negative()?;
    Ok(curve)
}

/// Least-squares scale of the `sin²` law: `f_max = Σ F s / Σ s²` with
/// `s = sin²(π p / 1248)`.
pub fn fit_ultrasound_fmax(
    points: &[CalibrationPoint],
) -> Result<CalibrationCurve, CalibrationError> {
    check_points(points)?;
    if points.is_empty() {
        return Err(CalibrationError::InsufficientData(0));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut informative = 0;
    for (index, p) in points.iter().enumerate() {
        let s = intensity_to_force(p.setting, 1.0).map_err(|e| CalibrationError::InvalidPoint {
            index,
            reason: e.to_string(),
        })?;
        // sin²(π) evaluates to ~1e-32, not zero.
        if s > 1e-12 {
            informative += 1;
        }
        num += p.force * s;
        den += s * s;
    }
    if informative == 0 {
        return Err(CalibrationError::Unidentifiable);
    }
    let f_max = num / den;
    if !(f_max > 0.0) {
        return Err(CalibrationError::NotInvertible(format!("f_max = {f_max}")));
    }
    let curve = CalibrationCurve::UltrasoundSin2 {
        f_max,
        residual: 0.0,
    };
    let residual = rms(points, |s| curve.predict(s));
    Ok(CalibrationCurve::UltrasoundSin2 { f_max, residual })
}

fn rms(points: &[CalibrationPoint], model: impl Fn(f64) -> f64) -> f64 {
    let sse: f64 = points
        .iter()
        .map(|p| {
            let e = p.force - model(p.setting);
            e * e
        })
        .sum();
    (sse / points.len() as f64).sqrt()
}

/// Device setting that produces `force` on this curve. The `sin²` branch
/// used is the rising one, `p ∈ [0, 624]`.
pub fn setting_for_force(curve: &CalibrationCurve, force: f64) -> Result<f64, CalibrationError> {
    let max = curve.max_force();
    if !(0.0..=max).contains(&force) {
        return Err(CalibrationError::OutOfRange {
            force,
            min: 0.0,
            max,
        });
    }
    match *curve {
        CalibrationCurve::CannonLinear {
            slope, intercept, ..
        } => {
            if !(slope > 0.0) {
                return Err(CalibrationError::NotInvertible(format!("slope {slope}")));
            }
            let setting = (force - intercept) / slope;
            if setting < 0.0 {
                return Err(CalibrationError::OutOfRange {
                    force,
                    min: intercept.max(0.0),
                    max,
                });
            }
            Ok(setting)
        }
        CalibrationCurve::UltrasoundSin2 { f_max, .. } => {
            let ratio = (force / f_max).clamp(0.0, 1.0);
            Ok(MAX_INTENSITY / PI * ratio.sqrt().asin())
        }
    }
}

/// Slug-exit time implied by an observed ring speed: `L / (2 v)`.
pub fn implied_t_cone(spec: &CannonSpec, observed_speed: f64) -> Result<f64, CalibrationError> {
    if !(observed_speed > 0.0 && observed_speed.is_finite()) {
        return Err(VortexError::NonPositive {
            what: "observed vortex speed",
            value: observed_speed,
        }
        .into());
    }
    let l = slug_length(spec.slug_volume, spec.aperture)?;
    let t_cone = l / (2.0 * observed_speed);
    // Cross-check against the forward speed law.
    debug_assert!(t_cone == 0.0 || (vortex_speed(l, t_cone)?.vortex - observed_speed).abs() < 1e-9);
    Ok(t_cone)
}

/// Read a `setting,force_mN` CSV; forces are converted to newtons.
pub fn read_points_csv<R: Read>(reader: R) -> Result<Vec<CalibrationPoint>, CalibrationError> {
    #[derive(Deserialize)]
    struct Row {
        setting: f64,
        #[serde(rename = "force_mN")]
        force_mn: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CalibrationError::Csv(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["setting", "force_mN"] {
        return Err(CalibrationError::Csv(format!(
            "expected header `setting,force_mN`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .map(|row| {
            let row: Row = row.map_err(|e| CalibrationError::Csv(e.to_string()))?;
            Ok(CalibrationPoint::new(row.setting, row.force_mn * 1e-3))
        })
        .collect()
}
