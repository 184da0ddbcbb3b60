//! Simulated replay of the two-point and perceptual-threshold protocols.
//!
//! Human participants are replaced by a [`PerceiverModel`] that judges force
//! profiles produced by a [`FootprintModel`]. Published human results live in
//! [`reference`] and are only ever reported next to simulated numbers.

mod footprint;
mod limits;
pub mod reference;
mod report;
mod threshold;

pub use footprint::{FootprintModel, LineLattice};
pub use limits::{
    run_method_of_limits, LimitsProtocol, MethodOfLimitsResult, SeriesDirection, ThresholdRun,
    TwoPointTrial,
};
pub use report::{
    write_double_point_csv, write_double_point_thresholds_csv, write_perceptual_csv,
    write_reference_csv, write_simultaneous_csv, DoublePointOutcome, Units,
};
pub use threshold::{
    run_perceptual_threshold, run_simultaneous, LevelRate, PerceptionTrial, PerceptualResult,
    SimultaneousResult, SimultaneousSetup,
};

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::AcousticError;
use crate::calibration::CalibrationError;
use crate::geometry::GeometryError;
use crate::scheduler::ScheduleError;
use crate::vortex::VortexError;

/// Ultrasound force used for two-point trials, N.
pub const ULTRASOUND_TEST_FORCE: f64 = 5.73e-3;
/// Cannon force used for two-point and cross-field trials, N.
pub const CANNON_TEST_FORCE: f64 = 7.67e-3;
/// Ultrasound force held constant while probing the vortex threshold, N.
pub const SUSTAINED_ULTRASOUND_FORCE: f64 = 9.7e-3;
pub const ULTRASOUND_LEVEL_RANGE: (f64, f64) = (0.70e-3, 10.9e-3);
pub const VORTEX_LEVEL_RANGE: (f64, f64) = (0.66e-3, 13.7e-3);
pub const TRIALS_PER_LEVEL: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PsychophysicsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{direction} series did not cross within the platform range ({reason})")]
    NonConvergence {
        direction: SeriesDirection,
        reason: &'static str,
        run: Box<ThresholdRun>,
    },
    #[error("force level {level} N outside the calibrated range [{min}, {max}]")]
    LevelOutOfRange { level: f64, min: f64, max: f64 },
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Vortex(#[from] VortexError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

/// What is presented, and what (if anything) is held on in the background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StimulusKind {
    UltrasoundOnly { modulation_hz: f64 },
    CannonOnly,
    CannonWithConstantUltrasound { modulation_hz: f64 },
    UltrasoundWithConstantVortex { modulation_hz: f64 },
}

impl StimulusKind {
    pub fn target_is_ultrasound(&self) -> bool {
        matches!(
            self,
            StimulusKind::UltrasoundOnly { .. } | StimulusKind::UltrasoundWithConstantVortex { .. }
        )
    }

    pub fn modulation_hz(&self) -> Option<f64> {
        match *self {
            StimulusKind::UltrasoundOnly { modulation_hz }
            | StimulusKind::CannonWithConstantUltrasound { modulation_hz }
            | StimulusKind::UltrasoundWithConstantVortex { modulation_hz } => Some(modulation_hz),
            StimulusKind::CannonOnly => None,
        }
    }

    pub fn slug(&self) -> String {
        match *self {
            StimulusKind::UltrasoundOnly { modulation_hz } => {
                format!("ultrasound-{modulation_hz}hz")
            }
            StimulusKind::CannonOnly => "cannon".into(),
            StimulusKind::CannonWithConstantUltrasound { modulation_hz } => {
                format!("cannon+constant-ultrasound-{modulation_hz}hz")
            }
            StimulusKind::UltrasoundWithConstantVortex { modulation_hz } => {
                format!("ultrasound-{modulation_hz}hz+constant-vortex")
            }
        }
    }
}

/// One experimental cell: stimulus arrangement plus fixed forces and rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCondition {
    pub label: String,
    pub stimulus: StimulusKind,
    /// Ultrasound force when it is the probe, or its background level, N.
    pub ultrasound_force: f64,
    /// Cannon force when it is the probe, or its background level, N.
    pub cannon_force: f64,
    /// Cannon repetition rate while held on in the background, Hz.
    pub cannon_rate_hz: f64,
}

impl ExperimentCondition {
    pub fn new(label: &str, stimulus: StimulusKind) -> Self {
        let cannon_rate_hz = match stimulus {
            StimulusKind::UltrasoundWithConstantVortex { .. } => 15.0,
            _ => 30.0,
        };
        Self {
            label: label.into(),
            stimulus,
            ultrasound_force: ULTRASOUND_TEST_FORCE,
            cannon_force: CANNON_TEST_FORCE,
            cannon_rate_hz,
        }
    }

    /// Column value used in result CSVs, e.g. `a:ultrasound-50hz`.
    pub fn tag(&self) -> String {
        format!("{}:{}", self.label, self.stimulus.slug())
    }

    pub fn validate(&self) -> Result<(), PsychophysicsError> {
        let in_range = |what: &str, v: f64, (lo, hi): (f64, f64)| {
            if v > 0.0 && v <= hi * (1.0 + 1e-12) {
                Ok(())
            } else {
                Err(PsychophysicsError::InvalidParameter(format!(
                    "{what} force {v} N outside (0, {hi}] (calibrated from {lo})"
                )))
            }
        };
        in_range("ultrasound", self.ultrasound_force, ULTRASOUND_LEVEL_RANGE)?;
        in_range("cannon", self.cannon_force, VORTEX_LEVEL_RANGE)?;
        if let Some(f) = self.stimulus.modulation_hz() {
            if !(f > 0.0) {
                return Err(PsychophysicsError::InvalidParameter(format!(
                    "modulation {f} Hz must be positive"
                )));
            }
        }
        if !(self.cannon_rate_hz > 0.0) {
            return Err(PsychophysicsError::InvalidParameter(
                "cannon rate must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The seven two-point conditions, labelled `a`–`g`.
    pub fn double_point_set() -> Vec<ExperimentCondition> {
        use StimulusKind::*;
        vec![
            Self::new("a", UltrasoundOnly { modulation_hz: 50.0 }),
            Self::new("b", UltrasoundOnly { modulation_hz: 200.0 }),
            Self::new("c", CannonOnly),
            Self::new("d", CannonWithConstantUltrasound { modulation_hz: 50.0 }),
            Self::new("e", CannonWithConstantUltrasound { modulation_hz: 200.0 }),
            Self::new("f", UltrasoundWithConstantVortex { modulation_hz: 50.0 }),
            Self::new("g", UltrasoundWithConstantVortex { modulation_hz: 200.0 }),
        ]
    }

    /// Perceptual-threshold conditions. The background ultrasound under a
    /// probed vortex is held at 9.7 mN, the background vortex at 7.67 mN
    /// fired at 20 Hz.
    pub fn perceptual_set() -> Vec<ExperimentCondition> {
        Self::double_point_set()
            .into_iter()
            .map(|mut c| {
                match c.stimulus {
                    StimulusKind::CannonWithConstantUltrasound { .. } => {
                        c.ultrasound_force = SUSTAINED_ULTRASOUND_FORCE;
                    }
                    StimulusKind::UltrasoundWithConstantVortex { .. } => {
                        c.cannon_rate_hz = 20.0;
                    }
                    _ => {}
                }
                c
            })
            .collect()
    }

    /// Force range of the probed stimulus.
    pub fn level_range(&self) -> (f64, f64) {
        if self.stimulus.target_is_ultrasound() {
            ULTRASOUND_LEVEL_RANGE
        } else {
            VORTEX_LEVEL_RANGE
        }
    }

    /// Six evenly spaced probe forces between the range ends.
    pub fn default_levels(&self) -> Vec<f64> {
        let (lo, hi) = self.level_range();
        (0..6).map(|k| lo + (hi - lo) * k as f64 / 5.0).collect()
    }

    /// Background force on the probe site, N.
    pub fn background_force(&self) -> f64 {
        match self.stimulus {
            StimulusKind::CannonWithConstantUltrasound { .. } => self.ultrasound_force,
            StimulusKind::UltrasoundWithConstantVortex { .. } => self.cannon_force,
            _ => 0.0,
        }
    }
}

/// Stand-in observer.
///
/// A stimulus is felt when `gain · F + noise ≥ threshold + masking · B`,
/// where `B` is the background force at the same site. Two stimuli are
/// reported divided when the supra-threshold part of their combined profile
/// has two local maxima and the minimum between them is below
/// `valley_fraction` of the smaller one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceiverModel {
    /// N.
    pub detection_threshold: f64,
    pub valley_fraction: f64,
    pub seed: u64,
    /// Standard deviation of additive force noise, N.
    pub noise_sd: f64,
    /// Fraction of the background force added to the detection threshold.
    pub masking: f64,
    pub ultrasound_gain_50hz: f64,
    pub ultrasound_gain_200hz: f64,
    pub vortex_gain: f64,
}

impl Default for PerceiverModel {
    fn default() -> Self {
        Self {
            detection_threshold: 3.0e-3,
            valley_fraction: 0.75,
            seed: 0,
            noise_sd: 0.0,
            masking: 0.0,
            ultrasound_gain_50hz: 1.0,
            ultrasound_gain_200hz: 1.0,
            vortex_gain: 1.0,
        }
    }
}

impl PerceiverModel {
    pub fn validate(&self) -> Result<(), PsychophysicsError> {
        let bad = |m: String| Err(PsychophysicsError::InvalidParameter(m));
        if !(self.detection_threshold > 0.0 && self.detection_threshold.is_finite()) {
            return bad(format!("detection threshold {} must be positive", self.detection_threshold));
        }
        if !(self.valley_fraction > 0.0 && self.valley_fraction < 1.0) {
            return bad(format!("valley fraction {} must lie in (0, 1)", self.valley_fraction));
        }
        for (name, v) in [
            ("noise_sd", self.noise_sd),
            ("masking", self.masking),
            ("ultrasound_gain_50hz", self.ultrasound_gain_50hz),
            ("ultrasound_gain_200hz", self.ultrasound_gain_200hz),
            ("vortex_gain", self.vortex_gain),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Sensitivity multiplier for an ultrasound probe at `modulation_hz`;
    /// interpolated linearly in frequency between the 50 and 200 Hz gains.
    pub fn ultrasound_gain(&self, modulation_hz: f64) -> f64 {
        let t = ((modulation_hz - 50.0) / 150.0).clamp(0.0, 1.0);
        self.ultrasound_gain_50hz + t * (self.ultrasound_gain_200hz - self.ultrasound_gain_50hz)
    }

    fn probe_gain(&self, stimulus: &StimulusKind) -> f64 {
        match (stimulus.target_is_ultrasound(), stimulus.modulation_hz()) {
            (true, Some(f)) => self.ultrasound_gain(f),
            _ => self.vortex_gain,
        }
    }

    /// Whether a probe of `force` is felt over `background`.
    pub fn detects<R: Rng>(&self, gain: f64, force: f64, background: f64, rng: &mut R) -> bool {
        let noise = if self.noise_sd > 0.0 {
            Normal::new(0.0, self.noise_sd)
                .expect("validated sd")
                .sample(rng)
        } else {
            0.0
        };
        gain * force + noise >= self.detection_threshold + self.masking * background
    }

    /// Twin-peak judgment on an already combined force profile. Only the
    /// part of the profile above the detection threshold is felt, so weak
    /// side lobes never count as a second point.
    pub fn judge_profile(&self, profile: &[f64]) -> TwoPointResponse {
        let felt: Vec<f64> = profile
            .iter()
            .map(|f| (f - self.detection_threshold).max(0.0))
            .collect();
        match twin_peak(&felt) {
            Some(tp) if tp.valley < self.valley_fraction * tp.smaller_peak() => {
                TwoPointResponse::Divided
            }
            _ => TwoPointResponse::NotDivided,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoPointResponse {
    Divided,
    NotDivided,
    Unknown,
}

impl TwoPointResponse {
    /// Unknown answers count as not divided.
    pub fn is_divided(&self) -> bool {
        matches!(self, TwoPointResponse::Divided)
    }
}

impl fmt::Display for TwoPointResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TwoPointResponse::Divided => "divided",
            TwoPointResponse::NotDivided => "not-divided",
            TwoPointResponse::Unknown => "unknown",
        })
    }
}

/// The two dominant local maxima of a profile and the minimum between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinPeak {
    pub left_index: usize,
    pub right_index: usize,
    pub left_peak: f64,
    pub right_peak: f64,
    pub valley: f64,
}

impl TwinPeak {
    pub fn smaller_peak(&self) -> f64 {
        self.left_peak.min(self.right_peak)
    }
}

/// Find the two largest interior local maxima. A sample is a maximum when
/// it exceeds its left neighbour and is not below its right one, so a flat
/// top counts once.
pub fn twin_peak(profile: &[f64]) -> Option<TwinPeak> {
    let mut maxima: Vec<usize> = (1..profile.len().saturating_sub(1))
        .filter(|&i| profile[i] > profile[i - 1] && profile[i] >= profile[i + 1])
        .collect();
    if maxima.len() < 2 {
        return None;
    }
    maxima.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]).then(a.cmp(&b)));
    let (l, r) = if maxima[0] < maxima[1] {
        (maxima[0], maxima[1])
    } else {
        (maxima[1], maxima[0])
    };
    let valley = profile[l..=r].iter().copied().fold(f64::INFINITY, f64::min);
    Some(TwinPeak {
        left_index: l,
        right_index: r,
        left_peak: profile[l],
        right_peak: profile[r],
        valley,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn twin_peak_on_two_bumps() {
        let p = [0.0, 1.0, 0.3, 0.8, 0.1];
        let tp = twin_peak(&p).unwrap();
        assert_eq!((tp.left_index, tp.right_index), (1, 3));
        assert_eq!(tp.valley, 0.3);
        assert_eq!(tp.smaller_peak(), 0.8);
    }

    #[test]
    fn single_bump_has_no_twin() {
        assert!(twin_peak(&[0.0, 0.5, 1.0, 0.5, 0.0]).is_none());
        assert!(twin_peak(&[0.0, 1.0, 1.0, 1.0, 0.0]).is_none());
        assert!(twin_peak(&[1.0, 2.0]).is_none());
    }

    #[test]
    fn judgment_uses_valley_fraction() {
        let p = [0.0, 1.0, 0.7, 1.0, 0.0];
        let lenient = PerceiverModel {
            valley_fraction: 0.75,
            ..Default::default()
        };
        let strict = PerceiverModel {
            valley_fraction: 0.5,
            ..Default::default()
        };
        assert_eq!(lenient.judge_profile(&p), TwoPointResponse::Divided);
        assert_eq!(strict.judge_profile(&p), TwoPointResponse::NotDivided);
    }

    #[test]
    fn step_detection() {
        let m = PerceiverModel {
            detection_threshold: 4e-3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(!m.detects(1.0, 2e-3, 0.0, &mut rng));
        assert!(m.detects(1.0, 6e-3, 0.0, &mut rng));
        let masked = PerceiverModel {
            masking: 0.5,
            ..m.clone()
        };
        assert!(!masked.detects(1.0, 6e-3, 7.67e-3, &mut rng));
    }

    #[test]
    fn condition_sets_cover_all_conditions() {
        let dp = ExperimentCondition::double_point_set();
        let labels: Vec<_> = dp.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["a", "b", "c", "d", "e", "f", "g"]);
        for c in &dp {
            c.validate().unwrap();
        }
        assert_eq!(dp[5].cannon_rate_hz, 15.0);
        let pt = ExperimentCondition::perceptual_set();
        assert_eq!(pt[3].ultrasound_force, SUSTAINED_ULTRASOUND_FORCE);
        assert_eq!(pt[5].cannon_rate_hz, 20.0);
        let levels = pt[0].default_levels();
        assert_eq!(levels.len(), 6);
        assert!((levels[0] - 0.70e-3).abs() < 1e-15 && (levels[5] - 10.9e-3).abs() < 1e-15);
        assert!((pt[2].default_levels()[5] - 13.7e-3).abs() < 1e-15);
    }

    #[test]
    fn perceiver_validation() {
        assert!(PerceiverModel::default().validate().is_ok());
        let bad = PerceiverModel {
            valley_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PerceiverModel {
            detection_threshold: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gain_interpolates_between_frequencies() {
        let m = PerceiverModel {
            ultrasound_gain_50hz: 0.5,
            ultrasound_gain_200hz: 1.0,
            ..Default::default()
        };
        assert_eq!(m.ultrasound_gain(50.0), 0.5);
        assert_eq!(m.ultrasound_gain(200.0), 1.0);
        assert_eq!(m.ultrasound_gain(125.0), 0.75);
    }
}
