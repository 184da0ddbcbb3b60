use proptest::prelude::*;

use sonovortex::acoustic::{compute_delays, intensity_to_force, ArrayParams, FocalPoint};
use sonovortex::geometry::{distance, Point3};
use sonovortex::protocol::{decode, encode};
use sonovortex::psychophysics::{
    run_method_of_limits, twin_peak, ExperimentCondition, FootprintModel, LimitsProtocol,
    LineLattice, PerceiverModel, StimulusKind,
};
use sonovortex::scheduler::{render_image, HapticImage};
use sonovortex::vortex::{is_stable, min_stable_aperture};

fn array(rows: usize, cols: usize, pitch: f64) -> sonovortex::acoustic::TransducerArray {
    ArrayParams {
        rows,
        cols,
        pitch,
        ..ArrayParams::default()
    }
    .build()
    .unwrap()
}

proptest! {
    #[test]
    fn normalized_delays_start_at_zero_and_align(
        rows in 1usize..12,
        cols in 1usize..12,
        pitch in 0.004f64..0.02,
        x in -0.1f64..0.1,
        y in -0.1f64..0.1,
        z in 0.02f64..0.5,
    ) {
        let a = array(rows, cols, pitch);
        let focus = Point3::new(x, y, z);
        let d = compute_delays(&a, focus).unwrap().normalized();
        prop_assert_eq!(d.min(), 0.0);
        let arrivals: Vec<f64> = a
            .positions()
            .iter()
            .zip(d.as_slice())
            .map(|(&q, dt)| dt + distance(q, focus) / a.sound_speed())
            .collect();
        let spread = arrivals.iter().copied().fold(f64::MIN, f64::max)
            - arrivals.iter().copied().fold(f64::MAX, f64::min);
        prop_assert!(spread <= 1e-12);
    }

    #[test]
    fn force_law_stays_within_range(p in 0.0f64..=1248.0, f_max in 1e-4f64..0.05) {
        let f = intensity_to_force(p, f_max).unwrap();
        prop_assert!((0.0..=f_max * (1.0 + 1e-12)).contains(&f));
    }

    #[test]
    fn stability_flips_at_min_aperture(volume in 1e-7f64..1e-3, scale in 0.5f64..2.0) {
        let d_min = min_stable_aperture(volume).unwrap();
        let d = d_min * scale;
        let s = is_stable(volume, d).unwrap();
        if scale > 1.0 + 1e-9 {
            prop_assert!(s.stable);
        } else if scale < 1.0 - 1e-9 {
            prop_assert!(!s.stable);
        }
    }

    #[test]
    fn wire_round_trip_preserves_events(
        n in 1usize..4,
        rows in 1usize..8,
        cols in 1usize..8,
        intensity in 0.0f64..=1248.0,
        shift in 0.0f64..2.0,
    ) {
        let a = array(rows, cols, 0.01);
        let points = (0..n)
            .map(|k| FocalPoint::new(Point3::new(0.01 * k as f64, 0.0, 0.15), intensity, 0.01).unwrap())
            .collect();
        let schedule = render_image(&HapticImage::new(points).unwrap(), &a, None)
            .unwrap()
            .shifted(shift)
            .unwrap();
        let bytes = encode(&schedule).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.len(), schedule.len());
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupted_byte_is_rejected(pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let a = array(2, 3, 0.01);
        let fp = FocalPoint::new(Point3::new(0.0, 0.0, 0.15), 600.0, 0.01).unwrap();
        let schedule = render_image(&HapticImage::single(fp).unwrap(), &a, None).unwrap();
        let mut bytes = encode(&schedule).unwrap();
        let at = pos.index(bytes.len());
        bytes[at] ^= flip;
        prop_assert!(decode(&bytes).is_err());
    }

    #[test]
    fn twin_peak_finds_two_separated_bumps(gap in 12usize..40, h in 0.2f64..1.0) {
        let profile: Vec<f64> = (0..100)
            .map(|i| {
                let x = i as f64;
                (-(x - 30.0).powi(2) / 8.0).exp() + h * (-(x - 30.0 - gap as f64).powi(2) / 8.0).exp()
            })
            .collect();
        let tp = twin_peak(&profile).unwrap();
        prop_assert!(tp.valley <= tp.smaller_peak());
        prop_assert!(tp.left_index < tp.right_index);
    }
}

#[test]
fn threshold_does_not_grow_with_valley_fraction() {
    let footprint = FootprintModel::new(
        array(2, 2, 0.01),
        0.15,
        0.0045,
        LineLattice {
            min: -0.02,
            max: 0.06,
            step: 1e-4,
        },
    )
    .unwrap();
    let cannon = ExperimentCondition::new("c", StimulusKind::CannonOnly);
    let protocol = LimitsProtocol::default();
    let mut last = f64::INFINITY;
    for vf in [0.5, 0.6, 0.7, 0.8, 0.9, 0.95] {
        let p = PerceiverModel {
            valley_fraction: vf,
            detection_threshold: 0.004,
            ..PerceiverModel::default()
        };
        let t = run_method_of_limits(&cannon, &p, &footprint, &protocol)
            .unwrap()
            .threshold;
        assert!(t <= last + 1e-12, "valley fraction {vf}: {t} > {last}");
        last = t;
    }
}
