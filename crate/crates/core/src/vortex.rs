//! Vortex-ring formation from a piston-driven slug of air, and straight-line
//! kinematics of the launched ring.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, GeometryError, Point3};

/// Largest stroke ratio `L/D` that still forms a single stable ring.
pub const FORMATION_NUMBER_MAX: f64 = 4.5;
/// Lower edge of the usual formation-number band.
pub const FORMATION_NUMBER_MIN: f64 = 3.6;

/// Displaced volume of the reference cannon (five 2-inch drivers), m³.
pub const REFERENCE_SLUG_VOLUME: f64 = 33_670e-9;
/// Reference aperture, m.
pub const REFERENCE_APERTURE: f64 = 0.021;
/// Measured mean ring speed of the reference cannon, m/s.
pub const REFERENCE_VORTEX_SPEED: f64 = 7.2;

pub const DEFAULT_OFF_AXIS_TOLERANCE_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VortexError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("vortex speed {vortex} is not half the slug speed {slug}")]
    SpeedRatio { slug: f64, vortex: f64 },
    #[error("target is {angle_deg:.2}° off the shot axis (tolerance {tolerance_deg}°)")]
    OffAxis { angle_deg: f64, tolerance_deg: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn positive(what: &'static str, value: f64) -> Result<f64, VortexError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(VortexError::NonPositive { what, value })
    }
}

fn non_negative(what: &'static str, value: f64) -> Result<f64, VortexError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(VortexError::Negative { what, value })
    }
}

/// Geometry and drive timing of an air cannon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CannonSpec {
    /// Slug volume, m³.
    pub slug_volume: f64,
    /// Aperture diameter, m.
    pub aperture: f64,
    /// Time for the slug to clear the aperture, s.
    pub t_cone: f64,
    pub actuation_hz: f64,
    pub mechanical_latency: f64,
}

fn default_rate() -> f64 {
    30.0
}

impl Default for CannonSpec {
    /// The reference cannon with `t_cone` chosen so the ring travels at the
    /// measured 7.2 m/s.
    fn default() -> Self {
        let l = slug_length(REFERENCE_SLUG_VOLUME, REFERENCE_APERTURE)
            .expect("reference constants are positive");
        Self {
            slug_volume: REFERENCE_SLUG_VOLUME,
            aperture: REFERENCE_APERTURE,
            t_cone: l / (2.0 * REFERENCE_VORTEX_SPEED),
            actuation_hz: default_rate(),
            mechanical_latency: 0.0,
        }
    }
}

impl CannonSpec {
    pub fn validate(&self) -> Result<(), VortexError> {
        positive("slug volume", self.slug_volume)?;
        positive("aperture", self.aperture)?;
        positive("t_cone", self.t_cone)?;
        positive("actuation rate", self.actuation_hz)?;
        non_negative("mechanical latency", self.mechanical_latency)?;
        Ok(())
    }

    pub fn slug_length(&self) -> Result<f64, VortexError> {
        slug_length(self.slug_volume, self.aperture)
    }

    pub fn speeds(&self) -> Result<VortexSpeed, VortexError> {
        vortex_speed(self.slug_length()?, self.t_cone)
    }

    pub fn stability(&self) -> Result<Stability, VortexError> {
        is_stable(self.slug_volume, self.aperture)
    }
}

/// Length of the cylindrical slug, `4 V / (π D²)`.
pub fn slug_length(volume: f64, aperture: f64) -> Result<f64, VortexError> {
    positive("slug volume", volume)?;
    positive("aperture", aperture)?;
    Ok(4.0 * volume / (PI * aperture * aperture))
}

/// `L / D`.
pub fn stroke_ratio(slug_length: f64, aperture: f64) -> Result<f64, VortexError> {
    positive("aperture", aperture)?;
    non_negative("slug length", slug_length)?;
    Ok(slug_length / aperture)
}

/// Where a stroke ratio falls relative to the formation-number band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormationClass {
    /// Below 3.6: a clean ring, not yet at formation.
    SubFormation,
    /// Within [3.6, 4.5].
    AtFormation,
    /// Above 4.5: trailing jet, the ring pinches off unstably.
    Unstable,
}

impl FormationClass {
    pub fn of(ratio: f64) -> Self {
        if ratio > FORMATION_NUMBER_MAX {
            FormationClass::Unstable
        } else if ratio >= FORMATION_NUMBER_MIN {
            FormationClass::AtFormation
        } else {
            FormationClass::SubFormation
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FormationClass::SubFormation => "stable, sub-formation",
            FormationClass::AtFormation => "at formation",
            FormationClass::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    /// `4 V / (π D³)`, identical to the stroke ratio.
    pub ratio: f64,
    /// `4.5 − ratio`; negative when unstable.
    pub margin: f64,
    pub class: FormationClass,
}

/// Stable iff `4 V / (π D³) ≤ 4.5`.
pub fn is_stable(volume: f64, aperture: f64) -> Result<Stability, VortexError> {
    positive("slug volume", volume)?;
    positive("aperture", aperture)?;
    let ratio = 4.0 * volume / (PI * aperture * aperture * aperture);
    Ok(Stability {
        stable: ratio <= FORMATION_NUMBER_MAX,
        ratio,
        margin: FORMATION_NUMBER_MAX - ratio,
        class: FormationClass::of(ratio),
    })
}

/// Smallest aperture that keeps a slug of `volume` stable:
/// `∛(4 V / (4.5 π))`.
pub fn min_stable_aperture(volume: f64) -> Result<f64, VortexError> {
    positive("slug volume", volume)?;
    Ok((4.0 * volume / (FORMATION_NUMBER_MAX * PI)).cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexSpeed {
    /// Mean slug velocity through the aperture.
    pub slug: f64,
    /// Translational speed of the ring, half the slug velocity.
    pub vortex: f64,
}

/// `v_s = L / t_cone`, `v_vortex = v_s / 2`.
pub fn vortex_speed(slug_length: f64, t_cone: f64) -> Result<VortexSpeed, VortexError> {
    positive("t_cone", t_cone)?;
    non_negative("slug length", slug_length)?;
    let slug = slug_length / t_cone;
    Ok(VortexSpeed {
        slug,
        vortex: slug / 2.0,
    })
}

/// A launched ring travelling in a straight line at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexShot {
    launch_time: f64,
    origin: Point3,
    direction: Point3,
    slug_speed: f64,
    vortex_speed: f64,
}

impl VortexShot {
    /// Rejects a non-unit direction and any `vortex_speed ≠ slug_speed / 2`
    /// beyond rounding (relative 1e-12).
    pub fn new(
        launch_time: f64,
        origin: Point3,
        direction: Point3,
        slug_speed: f64,
        vortex_speed: f64,
    ) -> Result<Self, VortexError> {
        non_negative("launch time", launch_time)?;
        if !origin.is_finite() || !direction.is_finite() {
            return Err(GeometryError::NonFinite("vortex shot").into());
        }
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::ZeroVector.into());
        }
        non_negative("slug speed", slug_speed)?;
        if (vortex_speed - slug_speed / 2.0).abs() > 1e-12 * slug_speed.max(f64::MIN_POSITIVE) {
            return Err(VortexError::SpeedRatio {
                slug: slug_speed,
                vortex: vortex_speed,
            });
        }
        Ok(Self {
            launch_time,
            origin,
            direction,
            slug_speed,
            vortex_speed,
        })
    }

    /// Shot fired by `cannon` from `origin` toward `target`.
    pub fn aimed(
        cannon: &CannonSpec,
        launch_time: f64,
        origin: Point3,
        target: Point3,
    ) -> Result<Self, VortexError> {
        cannon.validate()?;
        let dir = (target - origin).normalized()?;
        let v = cannon.speeds()?;
        Self::new(launch_time, origin, dir, v.slug, v.vortex)
    }

    pub fn launch_time(&self) -> f64 {
        self.launch_time
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn direction(&self) -> Point3 {
        self.direction
    }

    pub fn slug_speed(&self) -> f64 {
        self.slug_speed
    }

    pub fn vortex_speed(&self) -> f64 {
        self.vortex_speed
    }

    pub fn with_launch_time(&self, launch_time: f64) -> Result<Self, VortexError> {
        non_negative("launch time", launch_time)?;
        Ok(Self {
            launch_time,
            ..self.clone()
        })
    }
}

/// Flight time from the shot origin to `target`, using the default 5°
/// off-axis tolerance.
pub fn travel_time(shot: &VortexShot, target: Point3) -> Result<f64, VortexError> {
    travel_time_within(shot, target, DEFAULT_OFF_AXIS_TOLERANCE_DEG)
}

pub fn travel_time_within(
    shot: &VortexShot,
    target: Point3,
    tolerance_deg: f64,
) -> Result<f64, VortexError> {
    positive("vortex speed", shot.vortex_speed)?;
    let offset = target - shot.origin;
    let d = distance(target, shot.origin);
    if d == 0.0 {
        return Ok(0.0);
    }
    let cos = (offset.dot(&shot.direction) / d).clamp(-1.0, 1.0);
    let angle_deg = cos.acos().to_degrees();
    if angle_deg > tolerance_deg {
        return Err(VortexError::OffAxis {
            angle_deg,
            tolerance_deg,
        });
    }
    Ok(d / shot.vortex_speed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MM3: f64 = 1e-9;
    const MM: f64 = 1e-3;

    #[test]
    fn reference_slug_length() {
        // 4 · 33670 / (π · 441) mm
        let l = slug_length(33_670.0 * MM3, 21.0 * MM).unwrap();
        assert!((l / MM - 97.2108).abs() < 1e-3, "{}", l / MM);
    }

    #[test]
    fn slug_length_inverts_cylinder_volume() {
        let (d, len) = (0.03, 0.11);
        let v = PI / 4.0 * d * d * len;
        assert!((slug_length(v, d).unwrap() - len).abs() < 1e-15);
        assert!(
            (slug_length(2.0 * v, d).unwrap() - 2.0 * slug_length(v, d).unwrap()).abs() < 1e-15
        );
    }

    #[test]
    fn domain_errors() {
        assert!(slug_length(0.0, 0.02).is_err());
        assert!(slug_length(1e-6, -0.02).is_err());
        assert!(stroke_ratio(0.1, 0.0).is_err());
        assert!(is_stable(-1.0, 0.02).is_err());
        assert!(min_stable_aperture(0.0).is_err());
        assert!(vortex_speed(0.1, 0.0).is_err());
    }

    #[test]
    fn stroke_ratio_examples() {
        assert_eq!(stroke_ratio(0.02, 0.02).unwrap(), 1.0);
        assert_eq!(stroke_ratio(4.5 * 0.02, 0.02).unwrap(), 4.5);
        let l = slug_length(33_670.0 * MM3, 21.0 * MM).unwrap();
        let r = stroke_ratio(l, 21.0 * MM).unwrap();
        assert!((r - 4.6291).abs() < 1e-3, "{r}");
    }

    #[test]
    fn stability_examples() {
        let s22 = is_stable(33_670.0 * MM3, 22.0 * MM).unwrap();
        assert!(s22.stable);
        assert!((s22.ratio - 4.0261).abs() < 1e-3, "{}", s22.ratio);
        assert_eq!(s22.class, FormationClass::AtFormation);
        let s20 = is_stable(33_670.0 * MM3, 20.0 * MM).unwrap();
        assert!(!s20.stable);
        assert!((s20.ratio - 5.3583).abs() < 1e-3, "{}", s20.ratio);
        assert!(s20.margin < 0.0);
        assert_eq!(s20.class, FormationClass::Unstable);
        assert_eq!(FormationClass::of(2.0), FormationClass::SubFormation);
        assert_eq!(FormationClass::of(4.5), FormationClass::AtFormation);
    }

    #[test]
    fn minimum_aperture_for_reference_volume() {
        let d = min_stable_aperture(33_670.0 * MM3).unwrap();
        assert!((d / MM - 21.2).abs() < 0.05, "{}", d / MM);
        let s = is_stable(33_670.0 * MM3, d).unwrap();
        assert!(s.margin.abs() < 1e-12);
        let eight = min_stable_aperture(8.0 * 33_670.0 * MM3).unwrap();
        assert!((eight / d - 2.0).abs() < 1e-14);
    }

    #[test]
    fn speed_examples() {
        let l = 97.2 * MM;
        let t = l / (2.0 * 7.2);
        assert!((t * 1e3 - 6.75).abs() < 1e-9);
        let v = vortex_speed(l, t).unwrap();
        assert!((v.vortex - 7.2).abs() < 1e-12);
        let z = vortex_speed(0.0, t).unwrap();
        assert_eq!((z.slug, z.vortex), (0.0, 0.0));
    }

    #[test]
    fn travel_time_examples() {
        let shot = VortexShot::new(0.0, Point3::ORIGIN, Point3::Z, 14.4, 7.2).unwrap();
        let t = travel_time(&shot, Point3::new(0.0, 0.0, 0.15)).unwrap();
        assert!((t - 0.15 / 7.2).abs() < 1e-15);
        assert!((t * 1e3 - 20.833).abs() < 1e-3);
        assert_eq!(travel_time(&shot, Point3::ORIGIN).unwrap(), 0.0);
        let slow = VortexShot::new(0.0, Point3::ORIGIN, Point3::Z, 7.2, 3.6).unwrap();
        let t2 = travel_time(&slow, Point3::new(0.0, 0.0, 0.15)).unwrap();
        assert!((t2 - 2.0 * t).abs() < 1e-15);
    }

    #[test]
    fn off_axis_targets_rejected() {
        let shot = VortexShot::new(0.0, Point3::ORIGIN, Point3::Z, 14.4, 7.2).unwrap();
        // 4° off axis is fine, 6° is not.
        let ok = Point3::new(0.15 * 4f64.to_radians().tan(), 0.0, 0.15);
        assert!(travel_time(&shot, ok).is_ok());
        let bad = Point3::new(0.15 * 6f64.to_radians().tan(), 0.0, 0.15);
        assert!(matches!(travel_time(&shot, bad), Err(VortexError::OffAxis { .. })));
        assert!(travel_time_within(&shot, bad, 10.0).is_ok());
    }

    #[test]
    fn shot_constructor_checks_invariants() {
        assert!(matches!(
            VortexShot::new(0.0, Point3::ORIGIN, Point3::Z, 14.4, 7.0),
            Err(VortexError::SpeedRatio { .. })
        ));
        assert!(VortexShot::new(0.0, Point3::ORIGIN, Point3::new(0.0, 0.0, 2.0), 14.4, 7.2).is_err());
        assert!(VortexShot::new(-1.0, Point3::ORIGIN, Point3::Z, 14.4, 7.2).is_err());
    }

    #[test]
    fn default_cannon_moves_at_reference_speed() {
        let c = CannonSpec::default();
        c.validate().unwrap();
        assert!((c.speeds().unwrap().vortex - 7.2).abs() < 1e-12);
        assert!((c.t_cone * 1e3 - 6.7508).abs() < 1e-3);
    }

    fn bisect_min_aperture(volume: f64) -> f64 {
        let (mut lo, mut hi) = (1e-6, 10.0);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if is_stable(volume, mid).unwrap().stable {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    proptest! {
        #[test]
        fn stability_monotone_in_aperture(v in 1e-7..1e-3f64, d1 in 0.001..0.2f64, d2 in 0.001..0.2f64) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            if is_stable(v, lo).unwrap().stable {
                prop_assert!(is_stable(v, hi).unwrap().stable);
            }
        }

        #[test]
        fn stroke_ratio_of_slug_matches_stability_ratio(v in 1e-7..1e-3f64, d in 0.005..0.2f64) {
            let r = stroke_ratio(slug_length(v, d).unwrap(), d).unwrap();
            let s = is_stable(v, d).unwrap().ratio;
            prop_assert!((r - s).abs() <= 4.0 * f64::EPSILON * s);
        }

        #[test]
        fn closed_form_aperture_matches_bisection(v in 1e-7..1e-3f64) {
            let closed = min_stable_aperture(v).unwrap();
            prop_assert!((closed - bisect_min_aperture(v)).abs() < 1e-9);
            prop_assert!(is_stable(v, closed * (1.0 + 1e-9)).unwrap().stable);
        }

        #[test]
        fn vortex_is_half_slug(l in 0.0..1.0f64, t in 1e-4..1.0f64) {
            let v = vortex_speed(l, t).unwrap();
            prop_assert_eq!(v.vortex, v.slug / 2.0);
        }
    }
}
