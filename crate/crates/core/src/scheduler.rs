//! Turns haptic images and vortex shots into one time-ordered stimulus
//! schedule, delaying the ultrasound so both stimuli land together.

use std::cmp::Ordering;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustic::{
    apply_modulation, compute_delays, focusing_latency, AcousticError, DelayTable, FocalPoint,
    ModulationConfig, TransducerArray,
};
use crate::geometry::{distance, Point3};
use crate::protocol::{self, EncodeError};
use crate::vortex::{travel_time, VortexError, VortexShot};

/// Offset the reference rig applied to the ultrasound, in seconds.
pub const DEFAULT_FIXED_OFFSET: f64 = 0.030;

/// Default radius within which every focal point of a cross-field image must
/// lie around the shared target.
pub const DEFAULT_TARGET_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("haptic image has no focal points")]
    EmptyImage,
    #[error("event {index} has invalid emit time {time}")]
    InvalidEmitTime { index: usize, time: f64 },
    #[error("events are not ordered by emit time at index {index}")]
    Unordered { index: usize },
    #[error("computed offset {offset} s is negative: ultrasound would need to fire before the cannon")]
    NegativeOffset { offset: f64 },
    #[error("focal point {index} is {distance} m from the shared target (tolerance {tolerance} m)")]
    TargetConflict {
        index: usize,
        distance: f64,
        tolerance: f64,
    },
    #[error("target coincides with the cannon aperture")]
    ZeroDistance,
    #[error("invalid compensation policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Acoustic(#[from] AcousticError),
    #[error(transparent)]
    Vortex(#[from] VortexError),
}

/// A time-multiplexed sequence of focal points rendered in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapticImage {
    points: Vec<FocalPoint>,
}

impl HapticImage {
    pub fn new(points: Vec<FocalPoint>) -> Result<Self, ScheduleError> {
        if points.is_empty() {
            return Err(ScheduleError::EmptyImage);
        }
        for p in &points {
            p.validate()?;
        }
        Ok(Self { points })
    }

    pub fn single(point: FocalPoint) -> Result<Self, ScheduleError> {
        Self::new(vec![point])
    }

    pub fn points(&self) -> &[FocalPoint] {
        &self.points
    }

    pub fn total_duration(&self) -> f64 {
        self.points.iter().map(|p| p.duration).sum()
    }
}

/// One ultrasound frame: a fixed phase pattern held for one envelope
/// on-interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFrame {
    /// Normalized emission delays, seconds.
    pub delays: DelayTable,
    pub carrier_hz: f64,
    pub intensity: f64,
    /// How long the envelope stays on for this frame.
    pub on_duration: f64,
    pub focal_index: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    CannonTrigger { cannon_id: u16 },
    PhaseFrame(PhaseFrame),
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::CannonTrigger { .. } => "cannon-trigger",
            EventKind::PhaseFrame(_) => "phase-frame",
        }
    }

    fn rank(&self) -> (u8, u16) {
        match self {
            EventKind::CannonTrigger { cannon_id } => (0, *cannon_id),
            EventKind::PhaseFrame(f) => (1, f.focal_index),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusEvent {
    pub emit_time: f64,
    pub kind: EventKind,
    pub predicted_arrival: f64,
    pub target: Point3,
}

/// Events ordered by emit time; ties put cannon triggers first, then phase
/// frames by focal-point index. The sort is stable beyond that.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StimulusSchedule {
    events: Vec<StimulusEvent>,
}

impl StimulusSchedule {
    pub fn new(mut events: Vec<StimulusEvent>) -> Result<Self, ScheduleError> {
        check_times(&events)?;
        events.sort_by(event_order);
        Ok(Self { events })
    }

    /// Accepts events in the given order provided emit times never decrease.
    pub fn from_ordered(events: Vec<StimulusEvent>) -> Result<Self, ScheduleError> {
        check_times(&events)?;
        if let Some(index) = events
            .windows(2)
            .position(|w| w[1].emit_time < w[0].emit_time)
        {
            return Err(ScheduleError::Unordered { index: index + 1 });
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[StimulusEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn phase_frames(&self) -> impl Iterator<Item = (&StimulusEvent, &PhaseFrame)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::PhaseFrame(f) => Some((e, f)),
            _ => None,
        })
    }

    pub fn cannon_triggers(&self) -> impl Iterator<Item = &StimulusEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::CannonTrigger { .. }))
    }

    /// Same events delayed by `offset` seconds.
    pub fn shifted(&self, offset: f64) -> Result<Self, ScheduleError> {
        let events = self
            .events
            .iter()
            .map(|e| StimulusEvent {
                emit_time: e.emit_time + offset,
                predicted_arrival: e.predicted_arrival + offset,
                ..e.clone()
            })
            .collect();
        Self::from_ordered(events)
    }

    /// Merge two schedules, re-sorting with the standard tie rules.
    pub fn merged(&self, other: &StimulusSchedule) -> Result<Self, ScheduleError> {
        let mut events = self.events.clone();
        events.extend(other.events.iter().cloned());
        Self::new(events)
    }

    /// CSV: `emit_time_s,kind,target_x,target_y,target_z,predicted_arrival_s`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "emit_time_s,kind,target_x,target_y,target_z,predicted_arrival_s")?;
        for e in &self.events {
            writeln!(
                w,
                "{:.9},{},{:.6},{:.6},{:.6},{:.9}",
                e.emit_time,
                e.kind.label(),
                e.target.x,
                e.target.y,
                e.target.z,
                e.predicted_arrival
            )?;
        }
        Ok(())
    }
}

fn check_times(events: &[StimulusEvent]) -> Result<(), ScheduleError> {
    for (index, e) in events.iter().enumerate() {
        if !(e.emit_time >= 0.0 && e.emit_time.is_finite()) || !e.predicted_arrival.is_finite() {
            return Err(ScheduleError::InvalidEmitTime {
                index,
                time: e.emit_time,
            });
        }
    }
    Ok(())
}

fn event_order(a: &StimulusEvent, b: &StimulusEvent) -> Ordering {
    a.emit_time
        .total_cmp(&b.emit_time)
        .then_with(|| a.kind.rank().cmp(&b.kind.rank()))
}

/// Render an image into phase frames starting at `t = 0`.
///
/// Focal point `k` owns the window after all earlier points' durations. With
/// modulation it gets one frame per envelope on-interval; without, a single
/// frame spanning its whole duration.
pub fn render_image(
    image: &HapticImage,
    array: &TransducerArray,
    modulation: Option<&ModulationConfig>,
) -> Result<StimulusSchedule, ScheduleError> {
    let mut events = Vec::new();
    let mut window_start = 0.0;
    for (k, fp) in image.points().iter().enumerate() {
        let delays = compute_delays(array, fp.position)?.normalized();
        let latency = focusing_latency(array, fp.position)?;
        let focal_index = u16::try_from(k).unwrap_or(u16::MAX);
        let intervals = match modulation {
            Some(m) => apply_modulation(m, fp.duration)?,
            None => vec![crate::acoustic::OnInterval {
                start: 0.0,
                end: fp.duration,
            }],
        };
        for iv in intervals {
            let emit = window_start + iv.start;
            events.push(StimulusEvent {
                emit_time: emit,
                kind: EventKind::PhaseFrame(PhaseFrame {
                    delays: delays.clone(),
                    carrier_hz: array.carrier_hz(),
                    intensity: fp.intensity,
                    on_duration: iv.len(),
                    focal_index,
                }),
                predicted_arrival: emit + latency,
                target: fp.position,
            });
        }
        window_start += fp.duration;
    }
    StimulusSchedule::new(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompensationMode {
    Computed,
    #[default]
    Fixed,
}

/// How long the ultrasound waits after the cannon trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompensationPolicy {
    pub mode: CompensationMode,
    pub fixed_offset: f64,
    /// Trigger-to-launch delay of the cannon, seconds.
    pub mechanical_latency: f64,
}

impl Default for CompensationPolicy {
    fn default() -> Self {
        Self {
            mode: CompensationMode::Fixed,
            fixed_offset: DEFAULT_FIXED_OFFSET,
            mechanical_latency: 0.0,
        }
    }
}

impl CompensationPolicy {
    pub fn computed(mechanical_latency: f64) -> Self {
        Self {
            mode: CompensationMode::Computed,
            mechanical_latency,
            ..Self::default()
        }
    }

    pub fn fixed(offset: f64) -> Self {
        Self {
            mode: CompensationMode::Fixed,
            fixed_offset: offset,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.fixed_offset >= 0.0 && self.fixed_offset.is_finite()) {
            return Err(ScheduleError::InvalidPolicy(format!(
                "fixed offset {} must be non-negative",
                self.fixed_offset
            )));
        }
        if !(self.mechanical_latency >= 0.0 && self.mechanical_latency.is_finite()) {
            return Err(ScheduleError::InvalidPolicy(format!(
                "mechanical latency {} must be non-negative",
                self.mechanical_latency
            )));
        }
        Ok(())
    }
}

fn vortex_delay(
    target: Point3,
    shot: &VortexShot,
    mechanical_latency: f64,
) -> Result<f64, ScheduleError> {
    if distance(target, shot.origin()) == 0.0 {
        return Err(ScheduleError::ZeroDistance);
    }
    Ok(travel_time(shot, target)? + mechanical_latency)
}

/// Delay of the first ultrasound emission after the cannon trigger.
///
/// In computed mode this is the vortex flight time plus mechanical latency,
/// minus the array's own focusing latency to `target`; in fixed mode it is
/// the policy's constant.
pub fn co_arrival_offset(
    target: Point3,
    shot: &VortexShot,
    array: &TransducerArray,
    policy: &CompensationPolicy,
) -> Result<f64, ScheduleError> {
    policy.validate()?;
    match policy.mode {
        CompensationMode::Fixed => Ok(policy.fixed_offset),
        CompensationMode::Computed => {
            let offset = vortex_delay(target, shot, policy.mechanical_latency)?
                - focusing_latency(array, target)?;
            if offset < 0.0 {
                return Err(ScheduleError::NegativeOffset { offset });
            }
            Ok(offset)
        }
    }
}

/// Mechanical latency that would make `fixed_offset` an exact co-arrival
/// offset for this geometry.
pub fn implied_mechanical_latency(
    target: Point3,
    shot: &VortexShot,
    array: &TransducerArray,
    fixed_offset: f64,
) -> Result<f64, ScheduleError> {
    let physical = co_arrival_offset(target, shot, array, &CompensationPolicy::computed(0.0))?;
    Ok(fixed_offset - physical)
}

/// A merged schedule plus the numbers that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFieldSchedule {
    pub schedule: StimulusSchedule,
    pub offset: f64,
    pub vortex_arrival: f64,
    pub first_ultrasound_arrival: f64,
    /// Fixed offset minus the physically computed one, or zero in computed
    /// mode.
    pub implied_mechanical_latency: f64,
}

impl CrossFieldSchedule {
    pub fn arrival_gap(&self) -> f64 {
        self.first_ultrasound_arrival - self.vortex_arrival
    }
}

/// Everything needed to co-schedule one cannon shot with one haptic image.
///
/// The shared target is the image's first focal point; every other focal
/// point must lie within `target_tolerance` of it.
#[derive(Debug, Clone)]
pub struct CrossFieldScene<'a> {
    pub image: &'a HapticImage,
    pub array: &'a TransducerArray,
    pub modulation: Option<&'a ModulationConfig>,
    pub shot: &'a VortexShot,
    pub cannon_id: u16,
    pub policy: CompensationPolicy,
    pub target_tolerance: f64,
}

pub fn schedule_cross_field(scene: &CrossFieldScene<'_>) -> Result<CrossFieldSchedule, ScheduleError> {
    let target = scene.image.points()[0].position;
    for (index, fp) in scene.image.points().iter().enumerate() {
        let d = distance(fp.position, target);
        if d > scene.target_tolerance {
            return Err(ScheduleError::TargetConflict {
                index,
                distance: d,
                tolerance: scene.target_tolerance,
            });
        }
    }
    let offset = co_arrival_offset(target, scene.shot, scene.array, &scene.policy)?;
    let vortex_arrival =
        scene.shot.launch_time() + vortex_delay(target, scene.shot, scene.policy.mechanical_latency)?;
    let implied = match scene.policy.mode {
        CompensationMode::Fixed => {
            implied_mechanical_latency(target, scene.shot, scene.array, scene.policy.fixed_offset)?
        }
        CompensationMode::Computed => 0.0,
    };

    let cannon = StimulusSchedule::new(vec![StimulusEvent {
        emit_time: scene.shot.launch_time(),
        kind: EventKind::CannonTrigger {
            cannon_id: scene.cannon_id,
        },
        predicted_arrival: vortex_arrival,
        target,
    }])?;
    let ultrasound = render_image(scene.image, scene.array, scene.modulation)?
        .shifted(scene.shot.launch_time() + offset)?;
    let first_ultrasound_arrival = ultrasound
        .phase_frames()
        .next()
        .map(|(e, _)| e.predicted_arrival)
        .expect("non-empty image renders at least one frame");
    Ok(CrossFieldSchedule {
        schedule: cannon.merged(&ultrasound)?,
        offset,
        vortex_arrival,
        first_ultrasound_arrival,
        implied_mechanical_latency: implied,
    })
}

/// Serialize a schedule to the device wire format.
pub fn emit_schedule(schedule: &StimulusSchedule) -> Result<Vec<u8>, EncodeError> {
    protocol::encode(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::ArrayParams;

    fn point(z: f64, duration: f64) -> FocalPoint {
        FocalPoint::new(Point3::new(0.0, 0.0, z), 600.0, duration).unwrap()
    }

    fn array() -> TransducerArray {
        ArrayParams::default().build().unwrap()
    }

    fn point_array() -> TransducerArray {
        ArrayParams {
            rows: 1,
            cols: 1,
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn shot() -> VortexShot {
        VortexShot::new(0.0, Point3::ORIGIN, Point3::Z, 14.4, 7.2).unwrap()
    }

    #[test]
    fn modulated_single_point() {
        let img = HapticImage::single(point(0.15, 0.2)).unwrap();
        let m = ModulationConfig::rectangular(50.0, 0.5).unwrap();
        let s = render_image(&img, &array(), Some(&m)).unwrap();
        assert_eq!(s.len(), 10);
        let on: f64 = s.phase_frames().map(|(_, f)| f.on_duration).sum();
        assert!((on - 0.1).abs() < 1e-12);
        for (e, f) in s.phase_frames() {
            assert!(f.delays.is_normalized());
            assert!(e.predicted_arrival > e.emit_time);
        }
    }

    #[test]
    fn continuous_wave_gives_one_frame_per_point() {
        let img = HapticImage::new(vec![point(0.15, 0.2), point(0.16, 0.1)]).unwrap();
        let s = render_image(&img, &array(), None).unwrap();
        assert_eq!(s.len(), 2);
        let frames: Vec<_> = s.phase_frames().collect();
        assert_eq!(frames[0].1.on_duration, 0.2);
        assert_eq!(frames[1].0.emit_time, 0.2);
    }

    #[test]
    fn points_follow_list_order() {
        let img = HapticImage::new(vec![point(0.15, 0.04), point(0.16, 0.04), point(0.15, 0.04)])
            .unwrap();
        let m = ModulationConfig::rectangular(200.0, 0.5).unwrap();
        let s = render_image(&img, &array(), Some(&m)).unwrap();
        let order: Vec<u16> = s.phase_frames().map(|(_, f)| f.focal_index).collect();
        assert_eq!(order.len(), 24);
        assert!(order.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(order[0], 0);
        assert_eq!(order[8], 1);
        assert_eq!(order[16], 2);
    }

    #[test]
    fn empty_image_rejected() {
        assert_eq!(HapticImage::new(vec![]), Err(ScheduleError::EmptyImage));
    }

    #[test]
    fn computed_offset_at_fifteen_cm() {
        let target = Point3::new(0.0, 0.0, 0.15);
        let off =
            co_arrival_offset(target, &shot(), &point_array(), &CompensationPolicy::computed(0.0))
                .unwrap();
        let expected = 0.15 / 7.2 - 0.15 / 340.0;
        assert!((off - expected).abs() < 1e-15);
        assert!((off * 1e3 - 20.392).abs() < 1e-3, "{}", off * 1e3);
    }

    #[test]
    fn fixed_offset_ignores_geometry() {
        for z in [0.1, 0.15, 0.3] {
            let off = co_arrival_offset(
                Point3::new(0.0, 0.0, z),
                &shot(),
                &array(),
                &CompensationPolicy::default(),
            )
            .unwrap();
            assert_eq!(off, 0.030);
        }
    }

    #[test]
    fn short_range_offset_tends_to_latency() {
        let lat = 0.004;
        let off = co_arrival_offset(
            Point3::new(0.0, 0.0, 1e-6),
            &shot(),
            &point_array(),
            &CompensationPolicy::computed(lat),
        )
        .unwrap();
        assert!((off - lat).abs() < 1e-6);
    }

    #[test]
    fn computed_cross_field_co_arrives() {
        let img = HapticImage::single(point(0.15, 0.2)).unwrap();
        let m = ModulationConfig::rectangular(50.0, 0.5).unwrap();
        let a = array();
        let sh = shot();
        let out = schedule_cross_field(&CrossFieldScene {
            image: &img,
            array: &a,
            modulation: Some(&m),
            shot: &sh,
            cannon_id: 0,
            policy: CompensationPolicy::computed(0.0),
            target_tolerance: DEFAULT_TARGET_TOLERANCE,
        })
        .unwrap();
        assert!(out.arrival_gap().abs() <= 1e-6);
        let first = &out.schedule.events()[0];
        assert!(matches!(first.kind, EventKind::CannonTrigger { .. }));
        assert_eq!(first.emit_time, 0.0);
        assert!((out.vortex_arrival - 0.15 / 7.2).abs() < 1e-15);
        let (e, _) = out.schedule.phase_frames().next().unwrap();
        assert!((e.emit_time - out.offset).abs() < 1e-15);
    }

    #[test]
    fn fixed_cross_field_uses_thirty_ms() {
        let img = HapticImage::single(point(0.15, 0.2)).unwrap();
        let a = point_array();
        let sh = shot();
        let out = schedule_cross_field(&CrossFieldScene {
            image: &img,
            array: &a,
            modulation: None,
            shot: &sh,
            cannon_id: 3,
            policy: CompensationPolicy::default(),
            target_tolerance: DEFAULT_TARGET_TOLERANCE,
        })
        .unwrap();
        let (e, _) = out.schedule.phase_frames().next().unwrap();
        assert_eq!(e.emit_time, 0.030);
        // 30 ms − 20.39 ms
        assert!((out.implied_mechanical_latency * 1e3 - 9.608).abs() < 1e-3);
    }

    #[test]
    fn conflicting_targets_rejected() {
        let img = HapticImage::new(vec![
            point(0.15, 0.1),
            FocalPoint::new(Point3::new(0.1, 0.0, 0.15), 600.0, 0.1).unwrap(),
        ])
        .unwrap();
        let a = array();
        let sh = shot();
        let err = schedule_cross_field(&CrossFieldScene {
            image: &img,
            array: &a,
            modulation: None,
            shot: &sh,
            cannon_id: 0,
            policy: CompensationPolicy::computed(0.0),
            target_tolerance: DEFAULT_TARGET_TOLERANCE,
        })
        .unwrap_err();
        assert!(matches!(err, ScheduleError::TargetConflict { index: 1, .. }));
    }

    #[test]
    fn zero_distance_target_rejected() {
        let err = co_arrival_offset(
            Point3::ORIGIN,
            &shot(),
            &array(),
            &CompensationPolicy::computed(0.0),
        )
        .unwrap_err();
        assert_eq!(err, ScheduleError::ZeroDistance);
    }

    #[test]
    fn ties_put_cannon_first() {
        let frame = |idx| StimulusEvent {
            emit_time: 0.01,
            kind: EventKind::PhaseFrame(PhaseFrame {
                delays: DelayTable::zeros(1, 1),
                carrier_hz: 40e3,
                intensity: 0.0,
                on_duration: 0.001,
                focal_index: idx,
            }),
            predicted_arrival: 0.02,
            target: Point3::ORIGIN,
        };
        let cannon = StimulusEvent {
            emit_time: 0.01,
            kind: EventKind::CannonTrigger { cannon_id: 0 },
            predicted_arrival: 0.03,
            target: Point3::ORIGIN,
        };
        let s = StimulusSchedule::new(vec![frame(2), frame(1), cannon]).unwrap();
        let labels: Vec<_> = s.events().iter().map(|e| e.kind.rank()).collect();
        assert_eq!(labels, vec![(0, 0), (1, 1), (1, 2)]);
    }

    #[test]
    fn negative_emit_time_rejected() {
        let e = StimulusEvent {
            emit_time: -0.1,
            kind: EventKind::CannonTrigger { cannon_id: 0 },
            predicted_arrival: 0.0,
            target: Point3::ORIGIN,
        };
        assert!(matches!(
            StimulusSchedule::new(vec![e]),
            Err(ScheduleError::InvalidEmitTime { index: 0, .. })
        ));
    }

    #[test]
    fn csv_export() {
        let img = HapticImage::single(point(0.15, 0.02)).unwrap();
        let s = render_image(&img, &point_array(), None).unwrap();
        let mut out = Vec::new();
        s.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "emit_time_s,kind,target_x,target_y,target_z,predicted_arrival_s"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0.000000000,phase-frame,0.000000,0.000000,0.150000,0.000441176"
        );
    }
}
