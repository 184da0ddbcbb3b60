//! Points, vectors and regular sampling grids.
//!
//! Everything is SI: coordinates are meters.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("grid extent along axis {axis} must be positive, got {extent}")]
    NonPositiveExtent { axis: usize, extent: f64 },
    #[error("grid resolution along axis {axis} must be at least 1")]
    EmptyAxis { axis: usize },
    #[error("cannot normalize a zero-length vector")]
    ZeroVector,
}

/// A point (or displacement) in 3D space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);
    pub const X: Point3 = Point3::new(1.0, 0.0, 0.0);
    pub const Y: Point3 = Point3::new(0.0, 1.0, 0.0);
    pub const Z: Point3 = Point3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Checked constructor; rejects NaN and infinities.
    pub fn try_new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let p = Self::new(x, y, z);
        if p.is_finite() {
            Ok(p)
        } else {
            Err(GeometryError::NonFinite("point"))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y).hypot(self.z)
    }

    pub fn normalized(&self) -> Result<Point3, GeometryError> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(GeometryError::ZeroVector);
        }
        Ok(*self * (1.0 / n))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, k: f64) -> Point3 {
        Point3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Euclidean distance between two points.
///
/// Computed as the norm of `a - b`; because `hypot` is symmetric in sign the
/// result is bit-identical for `(a, b)` and `(b, a)`.
pub fn distance(a: Point3, b: Point3) -> f64 {
    (a - b).norm()
}

/// A regular axis-aligned lattice of sample points.
///
/// `origin` is the minimum corner. Along an axis with `n > 1` samples the
/// points are spread evenly over `[origin, origin + extent]`; an axis with a
/// single sample sits at the middle of its extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    origin: Point3,
    extents: [f64; 3],
    resolution: [usize; 3],
}

impl SampleGrid {
    pub fn new(
        origin: Point3,
        extents: [f64; 3],
        resolution: [usize; 3],
    ) -> Result<Self, GeometryError> {
        if !origin.is_finite() {
            return Err(GeometryError::NonFinite("grid origin"));
        }
        for axis in 0..3 {
            if !(extents[axis] > 0.0) || !extents[axis].is_finite() {
                return Err(GeometryError::NonPositiveExtent {
                    axis,
                    extent: extents[axis],
                });
            }
            if resolution[axis] == 0 {
                return Err(GeometryError::EmptyAxis { axis });
            }
        }
        Ok(Self {
            origin,
            extents,
            resolution,
        })
    }

    /// Grid whose bounding box is centered on `center`.
    pub fn centered(
        center: Point3,
        extents: [f64; 3],
        resolution: [usize; 3],
    ) -> Result<Self, GeometryError> {
        let origin = center - Point3::from(extents) * 0.5;
        Self::new(origin, extents, resolution)
    }

    /// Grid centered on `center` with samples every `step` meters.
    ///
    /// An extent of zero on an axis gives a single sample on that axis.
    pub fn with_step(center: Point3, extents: [f64; 3], step: f64) -> Result<Self, GeometryError> {
        let mut res = [1usize; 3];
        let mut ext = extents;
        for axis in 0..3 {
            if extents[axis] > 0.0 {
                res[axis] = (extents[axis] / step).round() as usize + 1;
            } else {
                ext[axis] = step;
            }
        }
        Self::centered(center, ext, res)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spacing between neighbouring samples on `axis`, or the full extent
    /// when the axis holds a single sample.
    pub fn step(&self, axis: usize) -> f64 {
        let n = self.resolution[axis];
        if n > 1 {
            self.extents[axis] / (n - 1) as f64
        } else {
            self.extents[axis]
        }
    }

    fn coord(&self, axis: usize, k: usize) -> f64 {
        let base = self.origin.as_array()[axis];
        let n = self.resolution[axis];
        if n > 1 {
            base + self.extents[axis] * k as f64 / (n - 1) as f64
        } else {
            base + 0.5 * self.extents[axis]
        }
    }

    /// Flat index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.resolution;
        (k * ny + j) * nx + i
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.resolution;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3 {
        Point3::new(self.coord(0, i), self.coord(1, j), self.coord(2, k))
    }

    pub fn point_at(&self, idx: usize) -> Point3 {
        let [i, j, k] = self.unravel(idx);
        self.point(i, j, k)
    }

    pub fn points(&self) -> impl Iterator<Item = Point3> + '_ {
        (0..self.len()).map(move |idx| self.point_at(idx))
    }

    /// Whether `p` lies inside the bounding box (inclusive, with a half-step
    /// allowance on single-sample axes).
    pub fn contains(&self, p: Point3) -> bool {
        let lo = self.origin.as_array();
        let q = p.as_array();
        (0..3).all(|axis| {
            let tol = 1e-12 * self.extents[axis].max(1.0);
            q[axis] >= lo[axis] - tol && q[axis] <= lo[axis] + self.extents[axis] + tol
        })
    }

    /// Nearest lattice index to `p` on every axis, clamped to the grid.
    pub fn nearest(&self, p: Point3) -> [usize; 3] {
        let q = p.as_array();
        let lo = self.origin.as_array();
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let n = self.resolution[axis];
            if n > 1 {
                let f = (q[axis] - lo[axis]) / self.step(axis);
                out[axis] = f.round().clamp(0.0, (n - 1) as f64) as usize;
            }
        }
        out
    }
}
