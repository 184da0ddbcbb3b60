use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustic::{ArrayParams, FocalPoint, ModulationConfig};
use crate::calibration::{setting_for_force, CalibrationCurve};
use crate::geometry::Point3;
use crate::scheduler::{
    schedule_cross_field, CompensationPolicy, CrossFieldScene, HapticImage,
    DEFAULT_TARGET_TOLERANCE,
};
use crate::vortex::{CannonSpec, VortexShot};

use super::{
    reference, ExperimentCondition, PerceiverModel, PsychophysicsError, StimulusKind,
    CANNON_TEST_FORCE, TRIALS_PER_LEVEL, ULTRASOUND_LEVEL_RANGE, ULTRASOUND_TEST_FORCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionTrial {
    /// Presentation order, from 0.
    pub order: usize,
    /// Probe force, N.
    pub force: f64,
    pub perceived: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRate {
    pub force: f64,
    pub perceived: usize,
    pub trials: usize,
    /// Fraction in `[0, 1]`.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualResult {
    pub condition: ExperimentCondition,
    pub trials: Vec<PerceptionTrial>,
    /// One entry per requested level, in the order given.
    pub rates: Vec<LevelRate>,
}

/// Perception rate per force level, with all trials presented in a seeded
/// random order.
pub fn run_perceptual_threshold(
    condition: &ExperimentCondition,
    perceiver: &PerceiverModel,
    levels: &[f64],
    trials_per_level: usize,
) -> Result<PerceptualResult, PsychophysicsError> {
    condition.validate()?;
    perceiver.validate()?;
    if levels.is_empty() || trials_per_level == 0 {
        return Err(PsychophysicsError::InvalidParameter(
            "need at least one level and one trial per level".into(),
        ));
    }
    let (min, max) = condition.level_range();
    for &level in levels {
        let tol = 1e-12 * max;
        if !(level >= min - tol && level <= max + tol) {
            return Err(PsychophysicsError::LevelOutOfRange { level, min, max });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(perceiver.seed);
    let mut order: Vec<usize> = (0..levels.len())
        .flat_map(|k| std::iter::repeat(k).take(trials_per_level))
        .collect();
    order.shuffle(&mut rng);

    let gain = perceiver.probe_gain(&condition.stimulus);
    let background = condition.background_force();
    let mut counts = vec![0usize; levels.len()];
    let trials = order
        .into_iter()
        .enumerate()
        .map(|(i, k)| {
            let perceived = perceiver.detects(gain, levels[k], background, &mut rng);
            counts[k] += usize::from(perceived);
            PerceptionTrial {
                order: i,
                force: levels[k],
                perceived,
            }
        })
        .collect();
    let rates = levels
        .iter()
        .zip(&counts)
        .map(|(&force, &perceived)| LevelRate {
            force,
            perceived,
            trials: trials_per_level,
            rate: perceived as f64 / trials_per_level as f64,
        })
        .collect();
    Ok(PerceptualResult {
        condition: condition.clone(),
        trials,
        rates,
    })
}

/// Co-scheduled cannon shot and modulated ultrasound focus on one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimultaneousSetup {
    pub modulation_hz: f64,
    pub array: ArrayParams,
    pub cannon: CannonSpec,
    pub cannon_origin: Point3,
    /// Distance of the target above the array center, m.
    pub depth: f64,
    pub policy: CompensationPolicy,
    pub ultrasound_force: f64,
    pub cannon_force: f64,
    /// Converts the ultrasound force to a drive intensity.
    pub ultrasound_curve: CalibrationCurve,
    /// How long the ultrasound focus is held, s.
    pub presentation: f64,
    /// Stimuli arriving closer together than this are felt as one superposed
    /// stimulus and mask each other, s.
    pub coincidence_window: f64,
    pub trials: usize,
}

impl Default for SimultaneousSetup {
    fn default() -> Self {
        let top = ULTRASOUND_LEVEL_RANGE.1;
        let s = (std::f64::consts::PI * 600.0 / crate::acoustic::MAX_INTENSITY).sin();
        Self {
            modulation_hz: 200.0,
            array: ArrayParams::default(),
            cannon: CannonSpec::default(),
            cannon_origin: Point3::ORIGIN,
            depth: 0.15,
            policy: CompensationPolicy::computed(0.0),
            ultrasound_force: ULTRASOUND_TEST_FORCE,
            cannon_force: CANNON_TEST_FORCE,
            ultrasound_curve: CalibrationCurve::sin2(top / (s * s)),
            presentation: 0.2,
            coincidence_window: 0.010,
            trials: TRIALS_PER_LEVEL,
        }
    }
}

impl SimultaneousSetup {
    pub fn at(modulation_hz: f64) -> Self {
        Self {
            modulation_hz,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousResult {
    pub modulation_hz: f64,
    pub trials: Vec<bool>,
    pub rate: f64,
    /// Human rate for the same modulation, if one was measured.
    pub reference_rate: Option<f64>,
    /// First ultrasound arrival minus vortex arrival, s.
    pub arrival_gap: f64,
}

/// Perception rate when a cannon shot and an ultrasound focus are scheduled
/// to reach the same target.
///
/// A trial counts as perceived when either stimulus is felt. When both
/// arrive within the coincidence window each masks the other at the
/// perceiver's masking rate.
pub fn run_simultaneous(
    setup: &SimultaneousSetup,
    perceiver: &PerceiverModel,
) -> Result<SimultaneousResult, PsychophysicsError> {
    perceiver.validate()?;
    ExperimentCondition {
        label: "simultaneous".into(),
        stimulus: StimulusKind::UltrasoundOnly {
            modulation_hz: setup.modulation_hz,
        },
        ultrasound_force: setup.ultrasound_force,
        cannon_force: setup.cannon_force,
        cannon_rate_hz: setup.cannon.actuation_hz,
    }
    .validate()?;
    if setup.trials == 0 || !(setup.coincidence_window >= 0.0) {
        return Err(PsychophysicsError::InvalidParameter(
            "simultaneous setup needs trials > 0 and a non-negative window".into(),
        ));
    }

    let array = setup.array.build()?;
    let target = array.center() + array.normal() * setup.depth;
    let intensity = setting_for_force(&setup.ultrasound_curve, setup.ultrasound_force)?;
    let image = HapticImage::single(FocalPoint::new(target, intensity, setup.presentation)?)?;
    let modulation = ModulationConfig::rectangular(setup.modulation_hz, 0.5)?;
    let shot = VortexShot::aimed(&setup.cannon, 0.0, setup.cannon_origin, target)?;
    let mut policy = setup.policy;
    policy.mechanical_latency += setup.cannon.mechanical_latency;
    let plan = schedule_cross_field(&CrossFieldScene {
        image: &image,
        array: &array,
        modulation: Some(&modulation),
        shot: &shot,
        cannon_id: 0,
        policy,
        target_tolerance: DEFAULT_TARGET_TOLERANCE,
    })?;
    let gap = plan.arrival_gap();
    let coincident = gap.abs() <= setup.coincidence_window;

    let us_gain = perceiver.ultrasound_gain(setup.modulation_hz);
    let (us_bg, vortex_bg) = if coincident {
        (setup.cannon_force, setup.ultrasound_force)
    } else {
        (0.0, 0.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(perceiver.seed);
    let trials: Vec<bool> = (0..setup.trials)
        .map(|_| {
            let vortex = perceiver.detects(perceiver.vortex_gain, setup.cannon_force, vortex_bg, &mut rng);
            let ultrasound = perceiver.detects(us_gain, setup.ultrasound_force, us_bg, &mut rng);
            vortex || ultrasound
        })
        .collect();
    let rate = trials.iter().filter(|&&p| p).count() as f64 / trials.len() as f64;
    Ok(SimultaneousResult {
        modulation_hz: setup.modulation_hz,
        rate,
        reference_rate: reference::simultaneous_rate(setup.modulation_hz),
        arrival_gap: gap,
        trials,
    })
}
