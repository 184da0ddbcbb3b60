//! Scene files for `schedule`.
//!
//! ```toml
//! cannon_id = 0          # optional
//! target_tolerance = 0.05 # optional, m
//!
//! [[focal_points]]
//! position = { x = 0.0, y = 0.0, z = 0.15 }
//! intensity = 600        # 0..=1248
//! duration = 0.2         # s
//!
//! [modulation]           # optional
//! frequency_hz = 200
//! duty = 0.5
//!
//! [vortex]               # optional; without it only ultrasound is scheduled
//! origin = { x = 0.0, y = 0.0, z = 0.0 }
//! launch_time = 0.0
//! ```
//!
//! The vortex is aimed at the first focal point.

use serde::Deserialize;

use sonovortex::acoustic::{FocalPoint, ModulationConfig};
use sonovortex::geometry::Point3;
use sonovortex::scheduler::DEFAULT_TARGET_TOLERANCE;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub focal_points: Vec<FocalPoint>,
    pub modulation: Option<ModulationConfig>,
    pub vortex: Option<VortexLaunch>,
    #[serde(default)]
    pub cannon_id: u16,
    #[serde(default = "default_tolerance")]
    pub target_tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexLaunch {
    pub origin: Point3,
    #[serde(default)]
    pub launch_time: f64,
}

fn default_tolerance() -> f64 {
    DEFAULT_TARGET_TOLERANCE
}

impl Scene {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
