//! Python bindings for the sonovortex engine.
//!
//! Points are `(x, y, z)` tuples in meters. Every engine error surfaces as
//! `ValueError`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use sonovortex::acoustic::{self, ArrayParams, FocalPoint, ModulationConfig};
use sonovortex::calibration::{self, CalibrationCurve, CalibrationPoint};
use sonovortex::geometry::{Point3, SampleGrid};
use sonovortex::protocol;
use sonovortex::scheduler::{
    self, CompensationPolicy, CrossFieldScene, EventKind, HapticImage, DEFAULT_TARGET_TOLERANCE,
};
use sonovortex::vortex::{self, CannonSpec, VortexShot};
use sonovortex::EngineConfig;

type P3 = (f64, f64, f64);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pt((x, y, z): P3) -> Point3 {
    Point3::new(x, y, z)
}

fn tup(p: Point3) -> P3 {
    (p.x, p.y, p.z)
}

/// A phased transducer array.
#[pyclass(name = "TransducerArray", module = "sonovortex_py", frozen)]
struct PyArray {
    inner: acoustic::TransducerArray,
}

#[pymethods]
impl PyArray {
    #[new]
    #[pyo3(signature = (rows=16, cols=16, pitch=None, center=(0.0, 0.0, 0.0)))]
    fn new(rows: usize, cols: usize, pitch: Option<f64>, center: P3) -> PyResult<Self> {
        let mut params = ArrayParams {
            rows,
            cols,
            center: pt(center),
            ..ArrayParams::default()
        };
        if let Some(p) = pitch {
            params.pitch = p;
        }
        Ok(Self {
            inner: params.build().map_err(err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    fn position(&self, row: usize, col: usize) -> PyResult<P3> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(PyValueError::new_err("element index out of range"));
        }
        Ok(tup(self.inner.position(row, col)))
    }

    /// Raw delays `(l00 − lij)/c` as rows of seconds.
    #[pyo3(signature = (focus, normalized=false))]
    fn delays(&self, focus: P3, normalized: bool) -> PyResult<Vec<Vec<f64>>> {
        let mut table = acoustic::compute_delays(&self.inner, pt(focus)).map_err(err)?;
        if normalized {
            table = table.normalized();
        }
        Ok(table
            .as_slice()
            .chunks(table.cols())
            .map(<[f64]>::to_vec)
            .collect())
    }

    fn focusing_latency(&self, focus: P3) -> PyResult<f64> {
        acoustic::focusing_latency(&self.inner, pt(focus)).map_err(err)
    }

    /// Pressure magnitudes on a box around `focus`, flattened x-fastest,
    /// with the grid resolution and the loudest sample.
    #[pyo3(signature = (focus, extent, step))]
    fn field(
        &self,
        focus: P3,
        extent: P3,
        step: f64,
    ) -> PyResult<(Vec<f64>, (usize, usize, usize), Option<P3>)> {
        let focus = pt(focus);
        let delays = acoustic::compute_delays(&self.inner, focus).map_err(err)?;
        let grid = SampleGrid::with_step(focus, [extent.0, extent.1, extent.2], step).map_err(err)?;
        let field = acoustic::simulate_field(&self.inner, &delays, &grid).map_err(err)?;
        let mags = (0..grid.len()).map(|i| field.magnitude(i)).collect();
        let [nx, ny, nz] = grid.resolution();
        let peak = field.argmax().map(|i| {
            let [a, b, c] = grid.unravel(i);
            tup(grid.point(a, b, c))
        });
        Ok((mags, (nx, ny, nz), peak))
    }
}

#[pyfunction]
fn intensity_to_force(p: f64, f_max: f64) -> PyResult<f64> {
    acoustic::intensity_to_force(p, f_max).map_err(err)
}

#[pyfunction]
fn slug_length(volume: f64, aperture: f64) -> PyResult<f64> {
    vortex::slug_length(volume, aperture).map_err(err)
}

/// `(stable, ratio, margin, class)`.
#[pyfunction]
fn is_stable(volume: f64, aperture: f64) -> PyResult<(bool, f64, f64, &'static str)> {
    let s = vortex::is_stable(volume, aperture).map_err(err)?;
    Ok((s.stable, s.ratio, s.margin, s.class.label()))
}

#[pyfunction]
fn min_stable_aperture(volume: f64) -> PyResult<f64> {
    vortex::min_stable_aperture(volume).map_err(err)
}

/// `(slug_speed, vortex_speed)`.
#[pyfunction]
fn vortex_speed(slug_length: f64, t_cone: f64) -> PyResult<(f64, f64)> {
    let v = vortex::vortex_speed(slug_length, t_cone).map_err(err)?;
    Ok((v.slug, v.vortex))
}

fn points(pairs: &[(f64, f64)]) -> Vec<CalibrationPoint> {
    pairs.iter().map(|&(s, f)| CalibrationPoint::new(s, f)).collect()
}

/// Linear fit of `(volts, newtons)` pairs: `(slope, intercept, residual)`.
#[pyfunction]
fn fit_cannon_curve(pairs: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    match calibration::fit_cannon_curve(&points(&pairs)).map_err(err)? {
        CalibrationCurve::CannonLinear {
            slope,
            intercept,
            residual,
            ..
        } => Ok((slope, intercept, residual)),
        CalibrationCurve::UltrasoundSin2 { .. } => unreachable!("cannon fit is linear"),
    }
}

/// `sin²` fit of `(intensity, newtons)` pairs: `(f_max, residual)`.
#[pyfunction]
fn fit_ultrasound_fmax(pairs: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    let curve = calibration::fit_ultrasound_fmax(&points(&pairs)).map_err(err)?;
    Ok((curve.max_force(), curve.residual()))
}

/// Co-arrival schedule for one shot and one image, encoded in the wire
/// format.
#[pyclass(name = "CrossField", module = "sonovortex_py", frozen, get_all)]
struct PyCrossField {
    offset: f64,
    vortex_arrival: f64,
    first_ultrasound_arrival: f64,
    arrival_gap: f64,
    wire: Vec<u8>,
}

#[pymethods]
impl PyCrossField {
    fn __repr__(&self) -> String {
        format!(
            "CrossField(offset={}, arrival_gap={}, bytes={})",
            self.offset,
            self.arrival_gap,
            self.wire.len()
        )
    }
}

/// Schedule a cannon at `cannon_origin` against focal points given as
/// `(position, intensity, duration)`. `fixed_offset=None` uses computed
/// compensation.
#[pyfunction]
#[pyo3(signature = (
    focal_points,
    cannon_origin=(0.0, 0.0, 0.0),
    array=None,
    launch_time=0.0,
    fixed_offset=None,
    mechanical_latency=0.0,
    modulation_hz=None,
))]
fn schedule(
    focal_points: Vec<(P3, f64, f64)>,
    cannon_origin: P3,
    array: Option<&Bound<'_, PyArray>>,
    launch_time: f64,
    fixed_offset: Option<f64>,
    mechanical_latency: f64,
    modulation_hz: Option<f64>,
) -> PyResult<PyCrossField> {
    let default_array;
    let array = match array {
        Some(a) => &a.get().inner,
        None => {
            default_array = ArrayParams::default().build().map_err(err)?;
            &default_array
        }
    };
    let fps = focal_points
        .into_iter()
        .map(|(p, i, d)| FocalPoint::new(pt(p), i, d))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let image = HapticImage::new(fps).map_err(err)?;
    let target = image.points()[0].position;
    let shot =
        VortexShot::aimed(&CannonSpec::default(), launch_time, pt(cannon_origin), target).map_err(err)?;
    let modulation = modulation_hz
        .map(|hz| ModulationConfig::rectangular(hz, 0.5))
        .transpose()
        .map_err(err)?;
    let policy = match fixed_offset {
        Some(o) => CompensationPolicy {
            mechanical_latency,
            ..CompensationPolicy::fixed(o)
        },
        None => CompensationPolicy::computed(mechanical_latency),
    };
    let result = scheduler::schedule_cross_field(&CrossFieldScene {
        image: &image,
        array,
        modulation: modulation.as_ref(),
        shot: &shot,
        cannon_id: 0,
        policy,
        target_tolerance: DEFAULT_TARGET_TOLERANCE,
    })
    .map_err(err)?;
    Ok(PyCrossField {
        offset: result.offset,
        vortex_arrival: result.vortex_arrival,
        first_ultrasound_arrival: result.first_ultrasound_arrival,
        arrival_gap: result.arrival_gap(),
        wire: scheduler::emit_schedule(&result.schedule).map_err(err)?,
    })
}

/// Decode a wire stream into `(emit_time, kind, target)` events.
#[pyfunction]
fn decode(bytes: &[u8]) -> PyResult<Vec<(f64, &'static str, P3)>> {
    let schedule = protocol::decode(bytes).map_err(err)?;
    Ok(schedule
        .events()
        .iter()
        .map(|e| (e.emit_time, e.kind.label(), tup(e.target)))
        .collect())
}

/// Replay a wire stream and return the device log lines.
#[pyfunction]
fn emulate(bytes: &[u8]) -> PyResult<Vec<String>> {
    Ok(protocol::emulate(bytes)
        .map_err(err)?
        .iter()
        .map(ToString::to_string)
        .collect())
}

/// Re-encode a decoded stream; a lossless round trip returns equal bytes.
#[pyfunction]
fn reencode<'py>(py: Python<'py>, bytes: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let schedule = protocol::decode(bytes).map_err(err)?;
    let out = protocol::encode(&schedule).map_err(err)?;
    Ok(PyBytes::new(py, &out))
}

/// Number of phase frames in a wire stream.
#[pyfunction]
fn phase_frame_count(bytes: &[u8]) -> PyResult<usize> {
    let schedule = protocol::decode(bytes).map_err(err)?;
    Ok(schedule
        .events()
        .iter()
        .filter(|e| matches!(e.kind, EventKind::PhaseFrame(_)))
        .count())
}

/// Parse and validate an engine configuration, returning it in canonical
/// TOML with every default filled in.
#[pyfunction]
fn normalize_config(text: &str) -> PyResult<String> {
    let config = EngineConfig::from_toml_str(text).map_err(err)?;
    Ok(config.to_toml_string())
}

#[pymodule]
pub fn sonovortex_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("REFERENCE_SLUG_VOLUME", vortex::REFERENCE_SLUG_VOLUME)?;
    m.add_class::<PyArray>()?;
    m.add_class::<PyCrossField>()?;
    m.add_function(wrap_pyfunction!(intensity_to_force, m)?)?;
    m.add_function(wrap_pyfunction!(slug_length, m)?)?;
    m.add_function(wrap_pyfunction!(is_stable, m)?)?;
    m.add_function(wrap_pyfunction!(min_stable_aperture, m)?)?;
    m.add_function(wrap_pyfunction!(vortex_speed, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cannon_curve, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ultrasound_fmax, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(emulate, m)?)?;
    m.add_function(wrap_pyfunction!(reencode, m)?)?;
    m.add_function(wrap_pyfunction!(phase_frame_count, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    Ok(())
}
