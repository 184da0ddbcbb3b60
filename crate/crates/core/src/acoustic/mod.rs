//! Phased-array focusing: per-element delays, pressure-field synthesis,
//! rectangular amplitude modulation and the drive-intensity to force law.

mod field;
mod modulation;

pub use field::{focal_spot_width, simulate_field, simulate_field_weighted, Plane, PressureField};
pub use modulation::{apply_modulation, ModulationConfig, OnInterval, Waveform};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, GeometryError, Point3};

/// Upper end of the device intensity scale. `sin²(π p / 1248)` peaks at half
/// of it.
pub const MAX_INTENSITY: f64 = 1248.0;

pub const DEFAULT_CARRIER_HZ: f64 = 40_000.0;
pub const DEFAULT_SOUND_SPEED: f64 = 340.0;
pub const DEFAULT_PITCH: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcousticError {
    #[error("invalid transducer array: {0}")]
    InvalidArray(String),
    #[error("focus coincides with transducer ({row}, {col})")]
    DegenerateGeometry { row: usize, col: usize },
    #[error("delay table is {got:?} but the array is {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("weight vector has {got} entries, array has {expected} transducers")]
    WeightCount { expected: usize, got: usize },
    #[error("intensity {0} outside [0, 1248]")]
    IntensityOutOfRange(f64),
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("point {0:?} lies outside the sampled grid")]
    OutOfDomain(Point3),
    #[error("field has no regular (non-singular) samples")]
    NoRegularSamples,
    #[error("profile never falls to half maximum inside the grid")]
    FlatProfile,
    #[error("grid needs at least 3 samples along the lateral axis, has {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Serializable description of a planar transducer grid.
///
/// Element `(i, j)` sits at
/// `center + row_axis·(i − (rows−1)/2)·pitch + col_axis·(j − (cols−1)/2)·pitch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayParams {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub center: Point3,
    pub row_axis: Point3,
    pub col_axis: Point3,
    pub reference: (usize, usize),
    pub carrier_hz: f64,
    pub sound_speed: f64,
    /// Uniform drive amplitude of every element, arbitrary linear units.
    pub amplitude: f64,
}

impl Default for ArrayParams {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            pitch: DEFAULT_PITCH,
            center: Point3::ORIGIN,
            row_axis: Point3::X,
            col_axis: Point3::Y,
            reference: (0, 0),
            carrier_hz: DEFAULT_CARRIER_HZ,
            sound_speed: DEFAULT_SOUND_SPEED,
            amplitude: 1.0,
        }
    }
}

impl ArrayParams {
    pub fn build(&self) -> Result<TransducerArray, AcousticError> {
        TransducerArray::new(self.clone())
    }
}

/// A validated phased array with precomputed element positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerArray {
    params: ArrayParams,
    positions: Vec<Point3>,
}

impl TransducerArray {
    pub fn new(params: ArrayParams) -> Result<Self, AcousticError> {
        let bad = |m: String| Err(AcousticError::InvalidArray(m));
        if params.rows == 0 || params.cols == 0 {
            return bad(format!("shape {}x{} has no elements", params.rows, params.cols));
        }
        if !(params.pitch > 0.0 && params.pitch.is_finite()) {
            return bad(format!("pitch {} must be positive", params.pitch));
        }
        if !(params.carrier_hz > 0.0 && params.carrier_hz.is_finite()) {
            return bad(format!("carrier {} Hz must be positive", params.carrier_hz));
        }
        if !(params.sound_speed > 0.0 && params.sound_speed.is_finite()) {
            return bad(format!("speed of sound {} must be positive", params.sound_speed));
        }
        if !params.amplitude.is_finite() {
            return bad("amplitude must be finite".into());
        }
        if params.reference.0 >= params.rows || params.reference.1 >= params.cols {
            return bad(format!("reference {:?} out of bounds", params.reference));
        }
        if !params.center.is_finite() {
            return bad("center must be finite".into());
        }
        let (u, v) = (params.row_axis, params.col_axis);
        let orthonormal = (u.norm() - 1.0).abs() < 1e-9
            && (v.norm() - 1.0).abs() < 1e-9
            && u.dot(&v).abs() < 1e-9;
        if !orthonormal {
            return bad("row_axis and col_axis must be orthonormal".into());
        }

        let half_r = (params.rows as f64 - 1.0) / 2.0;
        let half_c = (params.cols as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(params.rows * params.cols);
        for i in 0..params.rows {
            for j in 0..params.cols {
                let a = (i as f64 - half_r) * params.pitch;
                let b = (j as f64 - half_c) * params.pitch;
                positions.push(params.center + u * a + v * b);
            }
        }
        Ok(Self { params, positions })
    }

    pub fn params(&self) -> &ArrayParams {
        &self.params
    }

    pub fn rows(&self) -> usize {
        self.params.rows
    }

    pub fn cols(&self) -> usize {
        self.params.cols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn carrier_hz(&self) -> f64 {
        self.params.carrier_hz
    }

    pub fn sound_speed(&self) -> f64 {
        self.params.sound_speed
    }

    pub fn wavelength(&self) -> f64 {
        self.params.sound_speed / self.params.carrier_hz
    }

    /// Unit normal of the emitting plane.
    pub fn normal(&self) -> Point3 {
        self.params.row_axis.cross(&self.params.col_axis)
    }

    pub fn center(&self) -> Point3 {
        self.params.center
    }

    pub fn position(&self, row: usize, col: usize) -> Point3 {
        self.positions[row * self.params.cols + col]
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    pub fn reference_position(&self) -> Point3 {
        let (r, c) = self.params.reference;
        self.position(r, c)
    }

    /// Copy of this array with every element driven at `amplitude`.
    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        let mut out = self.clone();
        out.params.amplitude = amplitude;
        out
    }
}

/// Per-element emission delays in seconds, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DelayTable {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Option<Self> {
        (rows * cols == values.len() && rows > 0 && cols > 0).then_some(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Shift every entry so the earliest element fires at zero.
    pub fn normalized(&self) -> DelayTable {
        let m = self.min();
        DelayTable {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|d| d - m).collect(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.min() == 0.0
    }
}

/// Emission delays that bring every element into phase at `focus`.
///
/// Entry `(i, j)` is `(l₀₀ − lᵢⱼ) / c` where `l` is the element-to-focus
/// distance and `(0, 0)` stands for the array's reference element. Elements
/// farther than the reference get negative delays; see
/// [`DelayTable::normalized`].
pub fn compute_delays(array: &TransducerArray, focus: Point3) -> Result<DelayTable, AcousticError> {
    if !focus.is_finite() {
        return Err(GeometryError::NonFinite("focus").into());
    }
    let c = array.sound_speed();
    let l_ref = distance(array.reference_position(), focus);
    let mut values = Vec::with_capacity(array.len());
    for (idx, &p) in array.positions().iter().enumerate() {
        let l = distance(p, focus);
        if l == 0.0 {
            return Err(AcousticError::DegenerateGeometry {
                row: idx / array.cols(),
                col: idx % array.cols(),
            });
        }
        values.push((l_ref - l) / c);
    }
    Ok(DelayTable {
        rows: array.rows(),
        cols: array.cols(),
        values,
    })
}

/// Time from the first element firing (normalized delays) until the
/// wavefronts meet at `focus`.
pub fn focusing_latency(array: &TransducerArray, focus: Point3) -> Result<f64, AcousticError> {
    let delays = compute_delays(array, focus)?;
    let l_ref = distance(array.reference_position(), focus);
    Ok(l_ref / array.sound_speed() - delays.min())
}

/// Force produced at drive intensity `p`: `f_max · sin²(π p / 1248)`.
///
/// The law folds over above `p = 624` and returns to zero at `p = 1248`.
pub fn intensity_to_force(p: f64, f_max: f64) -> Result<f64, AcousticError> {
    if !(0.0..=MAX_INTENSITY).contains(&p) {
        return Err(AcousticError::IntensityOutOfRange(p));
    }
    if !(f_max > 0.0 && f_max.is_finite()) {
        return Err(AcousticError::NonPositive {
            what: "f_max",
            value: f_max,
        });
    }
    let s = (PI * p / MAX_INTENSITY).sin();
    Ok(f_max * s * s)
}

/// One entry of a haptic image: where to focus, how hard, and for how long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalPoint {
    pub position: Point3,
    /// Drive intensity in device units, `0..=1248`.
    pub intensity: f64,
    /// Dwell time in seconds.
    pub duration: f64,
}

impl FocalPoint {
    pub fn new(position: Point3, intensity: f64, duration: f64) -> Result<Self, AcousticError> {
        let fp = Self {
            position,
            intensity,
            duration,
        };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<(), AcousticError> {
        if !self.position.is_finite() {
            return Err(GeometryError::NonFinite("focal point").into());
        }
        if !(0.0..=MAX_INTENSITY).contains(&self.intensity) {
            return Err(AcousticError::IntensityOutOfRange(self.intensity));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(AcousticError::NonPositive {
                what: "focal point duration",
                value: self.duration,
            });
        }
        Ok(())
    }
}
