//! TOML engine configuration.
//!
//! Every table is optional and falls back to the reference setup:
//!
//! ```toml
//! [array]            # ArrayParams: rows, cols, pitch, center, carrier_hz, ...
//! [cannon]           # CannonSpec: slug_volume, aperture, t_cone, ...
//! [compensation]     # mode = "fixed" | "computed", fixed_offset, mechanical_latency
//! [calibration.cannon]      # kind = "cannon-linear", slope, intercept, ...
//! [calibration.ultrasound]  # kind = "ultrasound-sin2", f_max, residual
//! [perceiver]        # PerceiverModel
//! [footprint]        # depth, vortex_sigma, lattice = { min, max, step }
//! [limits]           # LimitsProtocol
//! ```
//!
//! All quantities are SI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustic::{ArrayParams, TransducerArray};
use crate::calibration::CalibrationCurve;
use crate::psychophysics::{FootprintModel, LimitsProtocol, LineLattice, PerceiverModel};
use crate::scheduler::CompensationPolicy;
use crate::vortex::CannonSpec;
use crate::Error;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config [{section}]: {source}")]
    Invalid {
        section: &'static str,
        source: Box<Error>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSet {
    pub cannon: Option<CalibrationCurve>,
    pub ultrasound: Option<CalibrationCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootprintConfig {
    /// Palm distance above the array, m.
    pub depth: f64,
    /// Vortex footprint width, m. Defaults to half the cannon aperture.
    pub vortex_sigma: Option<f64>,
    pub lattice: LineLattice,
}

impl Default for FootprintConfig {
    fn default() -> Self {
        Self {
            depth: 0.15,
            vortex_sigma: None,
            lattice: LineLattice::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub array: ArrayParams,
    pub cannon: CannonSpec,
    pub compensation: CompensationPolicy,
    pub calibration: CalibrationSet,
    pub perceiver: PerceiverModel,
    pub footprint: FootprintConfig,
    pub limits: LimitsProtocol,
}

fn invalid(section: &'static str) -> impl FnOnce(Error) -> ConfigError {
    move |e| ConfigError::Invalid {
        section,
        source: Box::new(e),
    }
}

impl EngineConfig {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.array.build().map_err(|e| invalid("array")(e.into()))?;
        self.cannon.validate().map_err(|e| invalid("cannon")(e.into()))?;
        self.compensation
            .validate()
            .map_err(|e| invalid("compensation")(e.into()))?;
        for curve in [&self.calibration.cannon, &self.calibration.ultrasound]
            .into_iter()
            .flatten()
        {
            if !(curve.max_force() > 0.0 && curve.max_force().is_finite()) {
                return Err(ConfigError::Invalid {
                    section: "calibration",
                    source: Box::new(Error::Config(format!(
                        "curve {curve:?} never produces a positive force"
                    ))),
                });
            }
        }
        self.perceiver
            .validate()
            .map_err(|e| invalid("perceiver")(e.into()))?;
        if !(self.footprint.depth > 0.0) || self.footprint.vortex_sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(ConfigError::Invalid {
                section: "footprint",
                source: Box::new(Error::Config(
                    "depth and vortex_sigma must be positive".into(),
                )),
            });
        }
        Ok(())
    }

    pub fn transducer_array(&self) -> Result<TransducerArray, Error> {
        Ok(self.array.build()?)
    }

    pub fn vortex_sigma(&self) -> f64 {
        self.footprint
            .vortex_sigma
            .unwrap_or(0.5 * self.cannon.aperture)
    }

    /// Footprint model for the configured array, depth and vortex width.
    pub fn footprint_model(&self) -> Result<FootprintModel, Error> {
        Ok(FootprintModel::new(
            self.transducer_array()?,
            self.footprint.depth,
            self.vortex_sigma(),
            self.footprint.lattice,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::CompensationMode;

    #[test]
    fn empty_file_is_reference_setup() {
        let cfg = EngineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, EngineConfig::default());
        assert_eq!(cfg.compensation.mode, CompensationMode::Fixed);
        assert!((cfg.vortex_sigma() - 0.0105).abs() < 1e-15);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = EngineConfig::default();
        cfg.calibration.ultrasound = Some(CalibrationCurve::sin2(0.011));
        cfg.calibration.cannon = Some(CalibrationCurve::linear(1e-3, -4e-3, 5.0, 17.5));
        cfg.footprint.vortex_sigma = Some(0.004);
        let text = cfg.to_toml_string();
        assert_eq!(EngineConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_tables_merge_with_defaults() {
        let cfg = EngineConfig::from_toml_str(
            "[array]\nrows = 4\ncols = 8\n[compensation]\nmode = \"computed\"\n",
        )
        .unwrap();
        assert_eq!((cfg.array.rows, cfg.array.cols), (4, 8));
        assert_eq!(cfg.array.carrier_hz, 40_000.0);
        assert_eq!(cfg.compensation.mode, CompensationMode::Computed);
    }

    #[test]
    fn violations_name_the_section() {
        let err = EngineConfig::from_toml_str("[array]\nrows = 0\n").unwrap_err();
        assert!(err.to_string().contains("[array]"), "{err}");
        let err = EngineConfig::from_toml_str("[perceiver]\nvalley_fraction = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("[perceiver]"), "{err}");
        let err = EngineConfig::from_toml_str("[cannon]\naperture = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("[cannon]"), "{err}");
        assert!(matches!(
            EngineConfig::from_toml_str("bogus = 1"),
            Err(ConfigError::Parse(_))
        ));
    }
}
