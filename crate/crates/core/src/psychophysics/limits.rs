use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    ExperimentCondition, FootprintModel, PerceiverModel, PsychophysicsError, StimulusKind,
    TwoPointResponse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesDirection {
    Ascending,
    Descending,
}

impl fmt::Display for SeriesDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SeriesDirection::Ascending => "ascending",
            SeriesDirection::Descending => "descending",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointTrial {
    /// Standard-to-comparative distance, m.
    pub separation: f64,
    pub response: TwoPointResponse,
}

/// One ascending or descending series and where it crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRun {
    pub direction: SeriesDirection,
    pub step: f64,
    pub trials: Vec<TwoPointTrial>,
    /// Midpoint of the last two trials; `None` if the series never crossed.
    pub crossing: Option<f64>,
}

/// Platform settings for the method of limits, all in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitsProtocol {
    pub step: f64,
    pub max_separation: f64,
    /// Descending series start uniformly within this range (snapped to the
    /// step lattice).
    pub descending_start: (f64, f64),
    pub ascending_start: (f64, f64),
    /// Number of descending+ascending pairs.
    pub repetitions: usize,
    /// Pause between the standard and comparative stimulus, s. The static
    /// perceiver ignores it; it is kept for device playback.
    pub inter_stimulus_gap: f64,
}

impl Default for LimitsProtocol {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_separation: 0.040,
            descending_start: (0.030, 0.038),
            ascending_start: (0.0, 0.002),
            repetitions: 2,
            inter_stimulus_gap: 2.0,
        }
    }
}

impl LimitsProtocol {
    fn validate(&self) -> Result<(), PsychophysicsError> {
        let ok = self.step > 0.0
            && self.max_separation > self.step
            && 0.0 <= self.ascending_start.0
            && self.ascending_start.0 <= self.ascending_start.1
            && self.descending_start.0 <= self.descending_start.1
            && self.descending_start.1 <= self.max_separation
            && self.repetitions > 0
            && self.inter_stimulus_gap >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(PsychophysicsError::InvalidParameter(format!(
                "inconsistent method-of-limits protocol {self:?}"
            )))
        }
    }

    fn lattice_index(&self, x: f64) -> u64 {
        (x / self.step).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOfLimitsResult {
    pub condition: ExperimentCondition,
    pub runs: Vec<ThresholdRun>,
    /// Mean of all series crossings, m.
    pub threshold: f64,
}

/// Response to a standard stimulus at the origin and a comparative one at
/// `separation`, with any background stimulus held on at the origin.
pub(crate) fn two_point_response<R: Rng>(
    condition: &ExperimentCondition,
    perceiver: &PerceiverModel,
    footprint: &FootprintModel,
    separation: f64,
    rng: &mut R,
) -> Result<TwoPointResponse, PsychophysicsError> {
    let (probe_force, mut profile): (f64, Vec<f64>) = if condition.stimulus.target_is_ultrasound() {
        let a = footprint.ultrasound(0.0)?;
        let b = footprint.ultrasound(separation)?;
        let f = condition.ultrasound_force;
        (f, a.iter().zip(b.iter()).map(|(x, y)| f * (x + y)).collect())
    } else {
        let a = footprint.vortex(0.0);
        let b = footprint.vortex(separation);
        let f = condition.cannon_force;
        (f, a.iter().zip(&b).map(|(x, y)| f * (x + y)).collect())
    };
    let background: Option<Vec<f64>> = match condition.stimulus {
        StimulusKind::CannonWithConstantUltrasound { .. } => Some(
            footprint
                .ultrasound(0.0)?
                .iter()
                .map(|v| condition.ultrasound_force * v)
                .collect(),
        ),
        StimulusKind::UltrasoundWithConstantVortex { .. } => Some(
            footprint
                .vortex(0.0)
                .iter()
                .map(|v| condition.cannon_force * v)
                .collect(),
        ),
        _ => None,
    };
    let background_at_probe = background
        .as_ref()
        .map_or(0.0, |bg| footprint.sample(bg, separation));
    let gain = perceiver.probe_gain(&condition.stimulus);
    if !perceiver.detects(gain, probe_force, background_at_probe, rng) {
        return Ok(TwoPointResponse::Unknown);
    }
    if let Some(bg) = background {
        for (p, b) in profile.iter_mut().zip(bg) {
            *p += b;
        }
    }
    Ok(perceiver.judge_profile(&profile))
}

fn run_series<R: Rng>(
    direction: SeriesDirection,
    start: u64,
    condition: &ExperimentCondition,
    perceiver: &PerceiverModel,
    footprint: &FootprintModel,
    protocol: &LimitsProtocol,
    rng: &mut R,
) -> Result<ThresholdRun, PsychophysicsError> {
    let mut run = ThresholdRun {
        direction,
        step: protocol.step,
        trials: Vec::new(),
        crossing: None,
    };
    let max_k = protocol.lattice_index(protocol.max_separation);
    let fail = |run: ThresholdRun, reason| PsychophysicsError::NonConvergence {
        direction,
        reason,
        run: Box::new(run),
    };
    let mut k = start;
    loop {
        let separation = k as f64 * protocol.step;
        let response = two_point_response(condition, perceiver, footprint, separation, rng)?;
        run.trials.push(TwoPointTrial {
            separation,
            response,
        });
        let stop = match direction {
            SeriesDirection::Descending => !response.is_divided(),
            SeriesDirection::Ascending => response.is_divided(),
        };
        if stop {
            if run.trials.len() == 1 {
                return Err(fail(run, "series started on the wrong side of the threshold"));
            }
            let prev = run.trials[run.trials.len() - 2].separation;
            run.crossing = Some(0.5 * (prev + separation));
            return Ok(run);
        }
        match direction {
            SeriesDirection::Descending => {
                if k == 0 {
                    return Err(fail(run, "still divided at zero separation"));
                }
                k -= 1;
            }
            SeriesDirection::Ascending => {
                if k >= max_k {
                    return Err(fail(run, "never divided within the platform range"));
                }
                k += 1;
            }
        }
    }
}

/// Two-point threshold by alternating descending and ascending series.
///
/// Each series starts at a seeded random point of its start range, moves
/// one platform step per trial, and stops at the first change of answer
/// ("unknown" counts as not divided). The threshold is the mean crossing.
pub fn run_method_of_limits(
    condition: &ExperimentCondition,
    perceiver: &PerceiverModel,
    footprint: &FootprintModel,
    protocol: &LimitsProtocol,
) -> Result<MethodOfLimitsResult, PsychophysicsError> {
    condition.validate()?;
    perceiver.validate()?;
    protocol.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(perceiver.seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        rng.random_range(protocol.lattice_index(lo)..=protocol.lattice_index(hi))
    };
    let mut runs = Vec::with_capacity(2 * protocol.repetitions);
    for _ in 0..protocol.repetitions {
        for direction in [SeriesDirection::Descending, SeriesDirection::Ascending] {
            let range = match direction {
                SeriesDirection::Descending => protocol.descending_start,
                SeriesDirection::Ascending => protocol.ascending_start,
            };
            let start = draw(&mut rng, range);
            runs.push(run_series(
                direction, start, condition, perceiver, footprint, protocol, &mut rng,
            )?);
        }
    }
    let threshold =
        runs.iter().filter_map(|r| r.crossing).sum::<f64>() / runs.len() as f64;
    Ok(MethodOfLimitsResult {
        condition: condition.clone(),
        runs,
        threshold,
    })
}
