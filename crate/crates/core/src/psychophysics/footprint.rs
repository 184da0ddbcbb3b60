use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::acoustic::{compute_delays, simulate_field, TransducerArray};
use crate::geometry::{Point3, SampleGrid};

use super::PsychophysicsError;

/// Evenly spaced sample positions along the lateral (x) axis of the palm,
/// meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineLattice {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for LineLattice {
    fn default() -> Self {
        Self {
            min: -0.020,
            max: 0.060,
            step: 0.000_05,
        }
    }
}

impl LineLattice {
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.min + k as f64 * self.step).collect()
    }

    fn validate(&self) -> Result<(), PsychophysicsError> {
        if !(self.step > 0.0 && self.max > self.min && self.len() >= 3) {
            return Err(PsychophysicsError::InvalidParameter(format!(
                "lattice {self:?} needs min < max and a positive step"
            )));
        }
        Ok(())
    }
}

/// Spatial force profiles of the two stimuli on the palm line.
///
/// The ultrasound footprint is the simulated focal intensity `|p|²` for a
/// focus placed at each requested lateral offset, normalized so the
/// on-axis focus peaks at 1. Profiles are memoized per offset and the model
/// is shared between runs. The vortex footprint is a unit Gaussian.
#[derive(Debug)]
pub struct FootprintModel {
    array: TransducerArray,
    depth: f64,
    lattice: LineLattice,
    xs: Vec<f64>,
    vortex_sigma: f64,
    peak_intensity: f64,
    cache: Mutex<HashMap<i64, Arc<Vec<f64>>>>,
}

impl FootprintModel {
    pub fn new(
        array: TransducerArray,
        depth: f64,
        vortex_sigma: f64,
        lattice: LineLattice,
    ) -> Result<Self, PsychophysicsError> {
        lattice.validate()?;
        if !(depth > 0.0) || !(vortex_sigma > 0.0) {
            return Err(PsychophysicsError::InvalidParameter(format!(
                "depth {depth} and vortex sigma {vortex_sigma} must be positive"
            )));
        }
        let mut model = Self {
            array,
            depth,
            xs: lattice.positions(),
            lattice,
            vortex_sigma,
            peak_intensity: 1.0,
            cache: Mutex::new(HashMap::new()),
        };
        let on_axis = model.raw_intensity(0.0)?;
        model.peak_intensity = on_axis.iter().copied().fold(0.0, f64::max);
        if !(model.peak_intensity > 0.0) {
            return Err(PsychophysicsError::InvalidParameter(
                "ultrasound footprint has zero intensity".into(),
            ));
        }
        Ok(model)
    }

    pub fn positions(&self) -> &[f64] {
        &self.xs
    }

    pub fn lattice(&self) -> LineLattice {
        self.lattice
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn vortex_sigma(&self) -> f64 {
        self.vortex_sigma
    }

    pub fn array(&self) -> &TransducerArray {
        &self.array
    }

    fn raw_intensity(&self, center: f64) -> Result<Vec<f64>, PsychophysicsError> {
        let focus = Point3::new(center, 0.0, self.depth);
        let delays = compute_delays(&self.array, focus)?;
        let extent = self.lattice.max - self.lattice.min;
        let grid = SampleGrid::new(
            Point3::new(self.lattice.min, -0.5 * self.lattice.step, self.depth - 0.5 * self.lattice.step),
            [extent, self.lattice.step, self.lattice.step],
            [self.xs.len(), 1, 1],
        )?;
        let field = simulate_field(&self.array, &delays, &grid)?;
        Ok(field.values().iter().map(|v| v.norm_sqr()).collect())
    }

    /// Normalized ultrasound intensity for a focus at lateral `center`.
    pub fn ultrasound(&self, center: f64) -> Result<Arc<Vec<f64>>, PsychophysicsError> {
        let key = (center * 1e7).round() as i64;
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let mut profile = self.raw_intensity(center)?;
        for v in &mut profile {
            *v /= self.peak_intensity;
        }
        let profile = Arc::new(profile);
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key, Arc::clone(&profile));
        Ok(profile)
    }

    /// Unit-peak Gaussian vortex footprint centered at `center`.
    pub fn vortex(&self, center: f64) -> Vec<f64> {
        let k = 1.0 / (2.0 * self.vortex_sigma * self.vortex_sigma);
        self.xs
            .iter()
            .map(|x| (-(x - center) * (x - center) * k).exp())
            .collect()
    }

    /// Value of a profile at the lattice point nearest to `x`.
    pub fn sample(&self, profile: &[f64], x: f64) -> f64 {
        let k = ((x - self.lattice.min) / self.lattice.step).round();
        let k = k.clamp(0.0, (profile.len() - 1) as f64) as usize;
        profile[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::ArrayParams;

    fn model() -> FootprintModel {
        FootprintModel::new(
            ArrayParams::default().build().unwrap(),
            0.15,
            0.004,
            LineLattice {
                min: -0.01,
                max: 0.02,
                step: 0.0001,
            },
        )
        .unwrap()
    }

    #[test]
    fn on_axis_profile_peaks_at_one_near_zero() {
        let m = model();
        let p = m.ultrasound(0.0).unwrap();
        let (idx, peak) = p
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((peak - 1.0).abs() < 1e-12);
        assert!(m.positions()[idx].abs() < 0.0005);
    }

    #[test]
    fn shifted_focus_moves_peak() {
        let m = model();
        let p = m.ultrasound(0.008).unwrap();
        let idx = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert!((m.positions()[idx] - 0.008).abs() < 0.0005);
        // memoized
        assert!(Arc::ptr_eq(&p, &m.ultrasound(0.008).unwrap()));
    }

    #[test]
    fn vortex_is_unit_gaussian() {
        let m = model();
        let g = m.vortex(0.0);
        assert!((m.sample(&g, 0.0) - 1.0).abs() < 1e-12);
        let at_sigma = m.sample(&g, 0.004);
        assert!((at_sigma - (-0.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let a = ArrayParams::default().build().unwrap();
        assert!(FootprintModel::new(a.clone(), 0.15, 0.0, LineLattice::default()).is_err());
        let bad = LineLattice {
            min: 0.0,
            max: -1.0,
            step: 0.001,
        };
        assert!(FootprintModel::new(a, 0.15, 0.004, bad).is_err());
    }
}
