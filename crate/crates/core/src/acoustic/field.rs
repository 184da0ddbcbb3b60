use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use super::{AcousticError, DelayTable, TransducerArray};
use crate::geometry::{distance, Point3, SampleGrid};

/// Complex pressure amplitude sampled on a [`SampleGrid`].
///
/// Samples that coincide with a transducer are flagged singular; they hold
/// zero and are skipped by every maximum search.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    grid: SampleGrid,
    values: Vec<Complex64>,
    singular: Vec<bool>,
}

/// A 2D slice through the grid for image export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    /// Constant z index.
    Xy(usize),
    /// Constant y index.
    Xz(usize),
    /// Constant x index.
    Yz(usize),
}

impl PressureField {
    /// Build a field by evaluating `f` at every grid point.
    pub fn from_fn(grid: SampleGrid, f: impl Fn(Point3) -> Complex64) -> Self {
        let values: Vec<_> = grid.points().map(f).collect();
        let singular = vec![false; values.len()];
        Self {
            grid,
            values,
            singular,
        }
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn is_singular(&self, idx: usize) -> bool {
        self.singular[idx]
    }

    pub fn singular_count(&self) -> usize {
        self.singular.iter().filter(|s| **s).count()
    }

    pub fn magnitude(&self, idx: usize) -> f64 {
        self.values[idx].norm()
    }

    /// Index of the largest regular |p|; ties go to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, v) in self.values.iter().enumerate() {
            if self.singular[idx] {
                continue;
            }
            let m = v.norm();
            if best.map_or(true, |(_, b)| m > b) {
                best = Some((idx, m));
            }
        }
        best.map(|(idx, _)| idx)
    }

    pub fn max_magnitude(&self) -> Option<f64> {
        self.argmax().map(|i| self.magnitude(i))
    }

    /// CSV with header `x,y,z,re,im,abs`; singular samples are written as
    /// `nan` so downstream tools cannot mistake them for zeros.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,z,re,im,abs")?;
        for (idx, v) in self.values.iter().enumerate() {
            let p = self.grid.point_at(idx);
            if self.singular[idx] {
                writeln!(w, "{:.6e},{:.6e},{:.6e},nan,nan,nan", p.x, p.y, p.z)?;
            } else {
                writeln!(
                    w,
                    "{:.6e},{:.6e},{:.6e},{:.9e},{:.9e},{:.9e}",
                    p.x,
                    p.y,
                    p.z,
                    v.re,
                    v.im,
                    v.norm()
                )?;
            }
        }
        Ok(())
    }

    /// Binary (P5) 8-bit PGM of |p| on one plane, scaled to the plane's own
    /// maximum. Rows run along the second axis of the plane.
    pub fn write_pgm<W: Write>(&self, mut w: W, plane: Plane) -> io::Result<()> {
        let [nx, ny, nz] = self.grid.resolution();
        let (width, height) = match plane {
            Plane::Xy(_) => (nx, ny),
            Plane::Xz(_) => (nx, nz),
            Plane::Yz(_) => (ny, nz),
        };
        let index = |a: usize, b: usize| match plane {
            Plane::Xy(k) => self.grid.index(a, b, k.min(nz - 1)),
            Plane::Xz(j) => self.grid.index(a, j.min(ny - 1), b),
            Plane::Yz(i) => self.grid.index(i.min(nx - 1), a, b),
        };
        let mut peak = 0.0f64;
        for b in 0..height {
            for a in 0..width {
                let idx = index(a, b);
                if !self.singular[idx] {
                    peak = peak.max(self.magnitude(idx));
                }
            }
        }
        write!(w, "P5\n{width} {height}\n255\n")?;
        let mut row = Vec::with_capacity(width);
        for b in 0..height {
            row.clear();
            for a in 0..width {
                let idx = index(a, b);
                let level = if self.singular[idx] || peak == 0.0 {
                    0
                } else {
                    (self.magnitude(idx) / peak * 255.0).round() as u8
                };
                row.push(level);
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}

/// Monochromatic point-source superposition of the whole array.
///
/// Each sample holds `Σ A/r · exp(i·2π f (r/c + Δt))` over all elements in
/// row-major order. Samples are evaluated in parallel; each sum runs in a
/// fixed order so the output is bit-identical for any thread count.
pub fn simulate_field(
    array: &TransducerArray,
    delays: &DelayTable,
    grid: &SampleGrid,
) -> Result<PressureField, AcousticError> {
    let weights = vec![array.params().amplitude; array.len()];
    simulate_field_weighted(array, delays, grid, &weights)
}

/// [`simulate_field`] with an explicit amplitude per element.
pub fn simulate_field_weighted(
    array: &TransducerArray,
    delays: &DelayTable,
    grid: &SampleGrid,
    weights: &[f64],
) -> Result<PressureField, AcousticError> {
    if delays.shape() != (array.rows(), array.cols()) {
        return Err(AcousticError::ShapeMismatch {
            expected: (array.rows(), array.cols()),
            got: delays.shape(),
        });
    }
    if weights.len() != array.len() {
        return Err(AcousticError::WeightCount {
            expected: array.len(),
            got: weights.len(),
        });
    }
    let omega = 2.0 * PI * array.carrier_hz();
    let c = array.sound_speed();
    let positions = array.positions();
    let dts = delays.as_slice();

    let samples: Vec<(Complex64, bool)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let p = grid.point_at(idx);
            let mut acc = Complex64::new(0.0, 0.0);
            for ((&q, &dt), &w) in positions.iter().zip(dts).zip(weights) {
                let r = distance(p, q);
                if r == 0.0 {
                    return (Complex64::new(0.0, 0.0), true);
                }
                acc += Complex64::from_polar(w / r, omega * (r / c + dt));
            }
            (acc, false)
        })
        .collect();

    let (values, singular) = samples.into_iter().unzip();
    Ok(PressureField {
        grid: grid.clone(),
        values,
        singular,
    })
}

/// Full width at half maximum of |p| along the x axis through the global
/// arg-max, with linear interpolation between samples.
///
/// A profile that never drops to half maximum before the grid edge yields
/// [`AcousticError::FlatProfile`].
pub fn focal_spot_width(field: &PressureField, focus: Point3) -> Result<f64, AcousticError> {
    let grid = field.grid();
    if !grid.contains(focus) {
        return Err(AcousticError::OutOfDomain(focus));
    }
    let nx = grid.resolution()[0];
    if nx < 3 {
        return Err(AcousticError::TooFewSamples(nx));
    }
    let peak_idx = field.argmax().ok_or(AcousticError::NoRegularSamples)?;
    let [pi, pj, pk] = grid.unravel(peak_idx);
    let line: Vec<Option<f64>> = (0..nx)
        .map(|i| {
            let idx = grid.index(i, pj, pk);
            (!field.is_singular(idx)).then(|| field.magnitude(idx))
        })
        .collect();
    let half = field.magnitude(peak_idx) / 2.0;
    let step = grid.step(0);
    let x0 = grid.point(0, pj, pk).x;

    let crossing = |inner: usize, outer: usize| -> Option<f64> {
        let (a, b) = (line[inner]?, line[outer]?);
        let frac = (a - half) / (a - b);
        let xi = x0 + inner as f64 * step;
        let xo = x0 + outer as f64 * step;
        Some(xi + frac * (xo - xi))
    };

    let mut left = None;
    let mut i = pi;
    while i > 0 {
        if line[i - 1].is_some_and(|m| m < half) {
            left = crossing(i, i - 1);
            break;
        }
        i -= 1;
    }
    let mut right = None;
    let mut i = pi;
    while i + 1 < nx {
        if line[i + 1].is_some_and(|m| m < half) {
            right = crossing(i, i + 1);
            break;
        }
        i += 1;
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(AcousticError::FlatProfile),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{compute_delays, ArrayParams};
    use super::*;

    fn default_array() -> TransducerArray {
        ArrayParams::default().build().unwrap()
    }

    #[test]
    fn single_element_falls_off_as_inverse_distance() {
        let a = ArrayParams {
            rows: 1,
            cols: 1,
            ..Default::default()
        }
        .build()
        .unwrap();
        let d = DelayTable::from_values(1, 1, vec![3.7e-6]).unwrap();
        let grid = SampleGrid::new(Point3::new(0.01, -0.02, 0.05), [0.1, 0.05, 0.2], [5, 4, 6])
            .unwrap();
        let f = simulate_field(&a, &d, &grid).unwrap();
        for idx in 0..grid.len() {
            let r = distance(grid.point_at(idx), Point3::ORIGIN);
            assert!((f.magnitude(idx) * r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_amplitude_scales_field() {
        let a = default_array();
        let d = compute_delays(&a, Point3::new(0.0, 0.0, 0.15)).unwrap();
        let grid = SampleGrid::with_step(Point3::new(0.0, 0.0, 0.15), [0.02, 0.02, 0.0], 0.002)
            .unwrap();
        let f1 = simulate_field(&a, &d, &grid).unwrap();
        let f2 = simulate_field(&a.with_amplitude(2.0), &d, &grid).unwrap();
        for (x, y) in f1.values().iter().zip(f2.values()) {
            assert_eq!(*y, *x * 2.0);
        }
    }

    #[test]
    fn field_is_additive_over_elements() {
        let a = ArrayParams {
            rows: 4,
            cols: 4,
            ..Default::default()
        }
        .build()
        .unwrap();
        let d = compute_delays(&a, Point3::new(0.0, 0.01, 0.1)).unwrap();
        let grid = SampleGrid::with_step(Point3::new(0.0, 0.0, 0.1), [0.02, 0.02, 0.0], 0.005)
            .unwrap();
        let mask_a: Vec<f64> = (0..16).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let mask_b: Vec<f64> = mask_a.iter().map(|m| 1.0 - m).collect();
        let all = simulate_field(&a, &d, &grid).unwrap();
        let fa = simulate_field_weighted(&a, &d, &grid, &mask_a).unwrap();
        let fb = simulate_field_weighted(&a, &d, &grid, &mask_b).unwrap();
        for ((s, x), y) in all.values().iter().zip(fa.values()).zip(fb.values()) {
            assert!((*s - (*x + *y)).norm() < 1e-9 * s.norm().max(1.0));
        }
    }

    #[test]
    fn sample_on_element_is_singular() {
        let a = ArrayParams {
            rows: 1,
            cols: 2,
            ..Default::default()
        }
        .build()
        .unwrap();
        let d = DelayTable::zeros(1, 2);
        let on = a.position(0, 1);
        let grid = SampleGrid::centered(on, [0.01, 0.01, 0.01], [3, 3, 3]).unwrap();
        let f = simulate_field(&a, &d, &grid).unwrap();
        let centre = grid.index(1, 1, 1);
        assert!(f.is_singular(centre));
        assert_eq!(f.singular_count(), 1);
        assert_ne!(f.argmax(), Some(centre));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = default_array();
        let grid = SampleGrid::new(Point3::new(0.0, 0.0, 0.1), [0.01; 3], [1, 1, 1]).unwrap();
        let err = simulate_field(&a, &DelayTable::zeros(2, 2), &grid).unwrap_err();
        assert!(matches!(err, AcousticError::ShapeMismatch { .. }));
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let a = default_array();
        let d = compute_delays(&a, Point3::new(0.01, 0.0, 0.12)).unwrap();
        let grid = SampleGrid::with_step(Point3::new(0.0, 0.0, 0.12), [0.03, 0.03, 0.0], 0.001)
            .unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_field(&a, &d, &grid).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn gaussian_fwhm() {
        let sigma = 0.003;
        let grid = SampleGrid::with_step(Point3::ORIGIN, [0.06, 0.0, 0.0], 0.0005).unwrap();
        let f = PressureField::from_fn(grid.clone(), |p| {
            Complex64::new((-(p.x * p.x) / (2.0 * sigma * sigma)).exp(), 0.0)
        });
        let w = focal_spot_width(&f, Point3::ORIGIN).unwrap();
        assert!((w - 2.354_820_045 * sigma).abs() <= grid.step(0));
    }

    #[test]
    fn flat_profile_is_an_error() {
        let grid = SampleGrid::with_step(Point3::ORIGIN, [0.02, 0.0, 0.0], 0.001).unwrap();
        let f = PressureField::from_fn(grid, |_| Complex64::new(1.0, 0.0));
        assert_eq!(focal_spot_width(&f, Point3::ORIGIN), Err(AcousticError::FlatProfile));
    }

    #[test]
    fn focus_outside_grid_is_out_of_domain() {
        let grid = SampleGrid::with_step(Point3::ORIGIN, [0.02, 0.0, 0.0], 0.001).unwrap();
        let f = PressureField::from_fn(grid, |_| Complex64::new(1.0, 0.0));
        let err = focal_spot_width(&f, Point3::new(0.5, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, AcousticError::OutOfDomain(_)));
    }

    #[test]
    fn focal_spot_is_wavelength_scale() {
        let a = default_array();
        let focus = Point3::new(0.0, 0.0, 0.15);
        let d = compute_delays(&a, focus).unwrap();
        let grid = SampleGrid::with_step(focus, [0.04, 0.0, 0.0], 0.0002).unwrap();
        let f = simulate_field(&a, &d, &grid).unwrap();
        let w = focal_spot_width(&f, focus).unwrap();
        let lambda = a.wavelength();
        assert!(w > 0.5 * lambda && w < 2.0 * lambda, "fwhm {w}");
    }

    #[test]
    fn exports_have_expected_shape() {
        let a = ArrayParams {
            rows: 2,
            cols: 2,
            ..Default::default()
        }
        .build()
        .unwrap();
        let focus = Point3::new(0.0, 0.0, 0.1);
        let d = compute_delays(&a, focus).unwrap();
        let grid = SampleGrid::with_step(focus, [0.004, 0.002, 0.0], 0.001).unwrap();
        let f = simulate_field(&a, &d, &grid).unwrap();
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 3);
        assert!(text.starts_with("x,y,z,re,im,abs\n"));

        let mut pgm = Vec::new();
        f.write_pgm(&mut pgm, Plane::Xy(0)).unwrap();
        let header = b"P5\n5 3\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 15);
        assert!(pgm[header.len()..].contains(&255));
    }
}
