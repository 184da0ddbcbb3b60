use serde::{Deserialize, Serialize};

use super::AcousticError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    #[default]
    Rectangular,
}

/// Amplitude-modulation envelope applied to the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationConfig {
    #[serde(default)]
    pub waveform: Waveform,
    pub frequency_hz: f64,
    #[serde(default = "default_duty")]
    pub duty: f64,
}

fn default_duty() -> f64 {
    0.5
}

impl ModulationConfig {
    pub fn rectangular(frequency_hz: f64, duty: f64) -> Result<Self, AcousticError> {
        let m = Self {
            waveform: Waveform::Rectangular,
            frequency_hz,
            duty,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AcousticError> {
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return Err(AcousticError::NonPositive {
                what: "modulation frequency",
                value: self.frequency_hz,
            });
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(AcousticError::NonPositive {
                what: "duty (must lie in (0, 1))",
                value: self.duty,
            });
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency_hz
    }
}

/// Half-open interval `[start, end)` during which the carrier is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnInterval {
    pub start: f64,
    pub end: f64,
}

impl OnInterval {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// On-intervals of a rectangular envelope over `[0, duration)`.
///
/// Every period that starts before `duration` contributes one interval, so
/// there are `⌈duration · f⌉` of them; the last is clipped at `duration`.
pub fn apply_modulation(
    config: &ModulationConfig,
    duration: f64,
) -> Result<Vec<OnInterval>, AcousticError> {
    config.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(AcousticError::NonPositive {
            what: "modulation duration",
            value: duration,
        });
    }
    let cycles = duration * config.frequency_hz;
    // Absorb representation error so 0.2 s at 50 Hz is exactly 10 periods.
    let count = (cycles - 1e-9 * cycles.max(1.0)).ceil().max(1.0) as usize;
    let period = config.period();
    let on = config.duty * period;
    Ok((0..count)
        .map(|k| {
            let start = k as f64 * period;
            OnInterval {
                start,
                end: (start + on).min(duration),
            }
        })
        .collect())
}
