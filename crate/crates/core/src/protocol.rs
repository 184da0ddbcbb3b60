//! Binary framing for streaming a [`StimulusSchedule`] to hardware, and a
//! loopback emulator that replays the stream.
//!
//! Every frame is
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SVX1"
//! 4       1     type: 0x01 phase-frame, 0x02 cannon-trigger, 0x03 end
//! 5       8     timestamp, µs, u64 LE
//! 13      2     payload length, u16 LE
//! 15      n     payload
//! 15+n    4     CRC-32 (IEEE) of bytes 0..15+n, u32 LE
//! ```
//!
//! A stream is one frame per event followed by a single end frame whose
//! timestamp repeats the last event's (0 for an empty schedule).
//!
//! Phase-frame payload, all little-endian:
//!
//! ```text
//! rows u8 | cols u8 | delay u16 × rows·cols (row-major) | intensity u16
//! | carrier_hz f64 | on_duration_us u32 | focal_index u16
//! | target x,y,z f64 ×3 | predicted_arrival_us u64
//! ```
//!
//! Delays count 1/256 of a carrier period. Cannon-trigger payload:
//! `cannon_id u16 | target f64 ×3 | predicted_arrival_us u64`. End frames
//! carry no payload.

use std::fmt;

use thiserror::Error;

use crate::acoustic::{DelayTable, MAX_INTENSITY};
use crate::geometry::Point3;
use crate::scheduler::{EventKind, PhaseFrame, StimulusEvent, StimulusSchedule};

pub const MAGIC: [u8; 4] = *b"SVX1";
pub const HEADER_LEN: usize = 15;
pub const CRC_LEN: usize = 4;
/// Delay resolution in steps per carrier period.
pub const DELAY_STEPS_PER_PERIOD: f64 = 256.0;

const PHASE_FIXED_LEN: usize = 2 + 2 + 8 + 4 + 2 + 24 + 8;
const CANNON_LEN: usize = 2 + 24 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    PhaseFrame = 0x01,
    CannonTrigger = 0x02,
    End = 0x03,
}

impl FrameType {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(FrameType::PhaseFrame),
            0x02 => Some(FrameType::CannonTrigger),
            0x03 => Some(FrameType::End),
            _ => None,
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameType::PhaseFrame => "phase-frame",
            FrameType::CannonTrigger => "cannon-trigger",
            FrameType::End => "end",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeErrorKind {
    #[error("delay {seconds} s does not fit the 16-bit quantized range")]
    DelayOutOfRange { seconds: f64 },
    #[error("array {rows}x{cols} exceeds 255 rows or columns")]
    ArrayTooLarge { rows: usize, cols: usize },
    #[error("payload of {0} bytes exceeds 65535")]
    PayloadTooLarge(usize),
    #[error("intensity {0} outside [0, 1248]")]
    Intensity(f64),
    #[error("time {0} s does not fit the microsecond field")]
    TimeOutOfRange(f64),
    #[error("carrier frequency {0} Hz must be positive")]
    Carrier(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot encode event {index}: {kind}")]
pub struct EncodeError {
    pub index: usize,
    pub kind: EncodeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("unknown frame type {ty:#04x} at byte {offset}")]
    UnknownType { offset: usize, ty: u8 },
    #[error("stream truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("CRC mismatch for frame at byte {offset}")]
    Crc { offset: usize },
    #[error("timestamp goes backwards at byte {offset}")]
    TimestampRegression { offset: usize },
    #[error("malformed payload at byte {offset}: {reason}")]
    Payload { offset: usize, reason: &'static str },
    #[error("stream has no end frame")]
    MissingEnd,
    #[error("{count} trailing bytes after end frame at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
}

fn seconds_to_us(t: f64) -> Option<u64> {
    let us = (t * 1e6).round();
    (us >= 0.0 && us < u64::MAX as f64).then_some(us as u64)
}

fn us_to_seconds(us: u64) -> f64 {
    us as f64 / 1e6
}

fn quantize_delay(seconds: f64, carrier_hz: f64) -> Option<u16> {
    let steps = (seconds * carrier_hz * DELAY_STEPS_PER_PERIOD).round();
    (0.0..=u16::MAX as f64).contains(&steps).then_some(steps as u16)
}

fn push_point(buf: &mut Vec<u8>, p: Point3) {
    for v in p.as_array() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_frame(out: &mut Vec<u8>, ty: FrameType, timestamp_us: u64, payload: &[u8]) {
    let start = out.len();
    out.extend_from_slice(&MAGIC);
    out.push(ty as u8);
    out.extend_from_slice(&timestamp_us.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
}

fn phase_payload(event: &StimulusEvent, frame: &PhaseFrame) -> Result<Vec<u8>, EncodeErrorKind> {
    let (rows, cols) = frame.delays.shape();
    if rows > 255 || cols > 255 {
        return Err(EncodeErrorKind::ArrayTooLarge { rows, cols });
    }
    let len = PHASE_FIXED_LEN + 2 * rows * cols;
    if len > u16::MAX as usize {
        return Err(EncodeErrorKind::PayloadTooLarge(len));
    }
    if !(frame.carrier_hz > 0.0 && frame.carrier_hz.is_finite()) {
        return Err(EncodeErrorKind::Carrier(frame.carrier_hz));
    }
    if !(0.0..=MAX_INTENSITY).contains(&frame.intensity) {
        return Err(EncodeErrorKind::Intensity(frame.intensity));
    }
    let mut buf = Vec::with_capacity(len);
    buf.push(rows as u8);
    buf.push(cols as u8);
    for &d in frame.delays.as_slice() {
        let q = quantize_delay(d, frame.carrier_hz)
            .ok_or(EncodeErrorKind::DelayOutOfRange { seconds: d })?;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    buf.extend_from_slice(&(frame.intensity.round() as u16).to_le_bytes());
    buf.extend_from_slice(&frame.carrier_hz.to_le_bytes());
    let on_us = seconds_to_us(frame.on_duration)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or(EncodeErrorKind::TimeOutOfRange(frame.on_duration))?;
    buf.extend_from_slice(&on_us.to_le_bytes());
    buf.extend_from_slice(&frame.focal_index.to_le_bytes());
    push_point(&mut buf, event.target);
    let arrival = seconds_to_us(event.predicted_arrival)
        .ok_or(EncodeErrorKind::TimeOutOfRange(event.predicted_arrival))?;
    buf.extend_from_slice(&arrival.to_le_bytes());
    Ok(buf)
}

fn cannon_payload(event: &StimulusEvent, cannon_id: u16) -> Result<Vec<u8>, EncodeErrorKind> {
    let mut buf = Vec::with_capacity(CANNON_LEN);
    buf.extend_from_slice(&cannon_id.to_le_bytes());
    push_point(&mut buf, event.target);
    let arrival = seconds_to_us(event.predicted_arrival)
        .ok_or(EncodeErrorKind::TimeOutOfRange(event.predicted_arrival))?;
    buf.extend_from_slice(&arrival.to_le_bytes());
    Ok(buf)
}

/// Serialize `schedule`: one frame per event, then an end frame.
pub fn encode(schedule: &StimulusSchedule) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    let mut last_ts = 0u64;
    for (index, event) in schedule.events().iter().enumerate() {
        let err = |kind| EncodeError { index, kind };
        let ts = seconds_to_us(event.emit_time)
            .ok_or_else(|| err(EncodeErrorKind::TimeOutOfRange(event.emit_time)))?;
        let (ty, payload) = match &event.kind {
            EventKind::PhaseFrame(f) => (FrameType::PhaseFrame, phase_payload(event, f).map_err(err)?),
            EventKind::CannonTrigger { cannon_id } => (
                FrameType::CannonTrigger,
                cannon_payload(event, *cannon_id).map_err(err)?,
            ),
        };
        push_frame(&mut out, ty, ts, &payload);
        last_ts = ts;
    }
    push_frame(&mut out, FrameType::End, last_ts, &[]);
    Ok(out)
}

/// A frame that passed magic, length and CRC checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame<'a> {
    pub offset: usize,
    pub frame_type: FrameType,
    pub timestamp_us: u64,
    pub payload: &'a [u8],
}

/// Split `bytes` into verified frames, stopping at the end frame.
pub fn frames(bytes: &[u8]) -> Result<Vec<RawFrame<'_>>, DecodeError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut prev_ts = 0u64;
    loop {
        if pos == bytes.len() {
            return Err(DecodeError::MissingEnd);
        }
        let offset = pos;
        if bytes.len() - pos < HEADER_LEN {
            return Err(DecodeError::Truncated { offset: bytes.len() });
        }
        if bytes[pos..pos + 4] != MAGIC {
            return Err(DecodeError::BadMagic { offset });
        }
        let ty_byte = bytes[pos + 4];
        let ts = u64::from_le_bytes(bytes[pos + 5..pos + 13].try_into().expect("8 bytes"));
        let len = u16::from_le_bytes([bytes[pos + 13], bytes[pos + 14]]) as usize;
        let end = pos + HEADER_LEN + len + CRC_LEN;
        if end > bytes.len() {
            return Err(DecodeError::Truncated { offset: bytes.len() });
        }
        let body = &bytes[pos..pos + HEADER_LEN + len];
        let stored = u32::from_le_bytes(bytes[end - CRC_LEN..end].try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(DecodeError::Crc { offset });
        }
        let frame_type =
            FrameType::from_byte(ty_byte).ok_or(DecodeError::UnknownType { offset, ty: ty_byte })?;
        if ts < prev_ts {
            return Err(DecodeError::TimestampRegression { offset });
        }
        prev_ts = ts;
        out.push(RawFrame {
            offset,
            frame_type,
            timestamp_us: ts,
            payload: &body[HEADER_LEN..],
        });
        pos = end;
        if frame_type == FrameType::End {
            if !out.last().expect("just pushed").payload.is_empty() {
                return Err(DecodeError::Payload {
                    offset,
                    reason: "end frame carries a payload",
                });
            }
            if pos != bytes.len() {
                return Err(DecodeError::TrailingBytes {
                    offset: pos,
                    count: bytes.len() - pos,
                });
            }
            return Ok(out);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let s = self.buf.get(self.pos..self.pos + N)?;
        self.pos += N;
        s.try_into().ok()
    }
    fn u8(&mut self) -> Option<u8> {
        self.take::<1>().map(|b| b[0])
    }
    fn u16(&mut self) -> Option<u16> {
        self.take().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Option<u32> {
        self.take().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Option<u64> {
        self.take().map(u64::from_le_bytes)
    }
    fn f64(&mut self) -> Option<f64> {
        self.take().map(f64::from_le_bytes)
    }
    fn point(&mut self) -> Option<Point3> {
        Some(Point3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn parse_phase(raw: &RawFrame<'_>) -> Result<StimulusEvent, DecodeError> {
    let bad = |reason| DecodeError::Payload {
        offset: raw.offset,
        reason,
    };
    let mut r = Reader {
        buf: raw.payload,
        pos: 0,
    };
    let rows = r.u8().ok_or(bad("short phase payload"))? as usize;
    let cols = r.u8().ok_or(bad("short phase payload"))? as usize;
    if rows == 0 || cols == 0 {
        return Err(bad("empty transducer grid"));
    }
    if raw.payload.len() != PHASE_FIXED_LEN + 2 * rows * cols {
        return Err(bad("payload length does not match grid size"));
    }
    let counts: Vec<u16> = (0..rows * cols).map(|_| r.u16().expect("length checked")).collect();
    let intensity = r.u16().expect("length checked") as f64;
    let carrier_hz = r.f64().expect("length checked");
    if !(carrier_hz > 0.0 && carrier_hz.is_finite()) {
        return Err(bad("carrier frequency must be positive"));
    }
    if intensity > MAX_INTENSITY {
        return Err(bad("intensity above 1248"));
    }
    let on_us = r.u32().expect("length checked");
    let focal_index = r.u16().expect("length checked");
    let target = r.point().expect("length checked");
    let arrival = r.u64().expect("length checked");
    debug_assert!(r.done());
    let delays = counts
        .iter()
        .map(|&q| q as f64 / (DELAY_STEPS_PER_PERIOD * carrier_hz))
        .collect();
    Ok(StimulusEvent {
        emit_time: us_to_seconds(raw.timestamp_us),
        kind: EventKind::PhaseFrame(PhaseFrame {
            delays: DelayTable::from_values(rows, cols, delays).expect("shape checked"),
            carrier_hz,
            intensity,
            on_duration: on_us as f64 / 1e6,
            focal_index,
        }),
        predicted_arrival: us_to_seconds(arrival),
        target,
    })
}

fn parse_cannon(raw: &RawFrame<'_>) -> Result<StimulusEvent, DecodeError> {
    if raw.payload.len() != CANNON_LEN {
        return Err(DecodeError::Payload {
            offset: raw.offset,
            reason: "cannon payload has wrong length",
        });
    }
    let mut r = Reader {
        buf: raw.payload,
        pos: 0,
    };
    let cannon_id = r.u16().expect("length checked");
    let target = r.point().expect("length checked");
    let arrival = r.u64().expect("length checked");
    Ok(StimulusEvent {
        emit_time: us_to_seconds(raw.timestamp_us),
        kind: EventKind::CannonTrigger { cannon_id },
        predicted_arrival: us_to_seconds(arrival),
        target,
    })
}

/// Inverse of [`encode`] up to microsecond and 1/256-period quantization.
pub fn decode(bytes: &[u8]) -> Result<StimulusSchedule, DecodeError> {
    let mut events = Vec::new();
    for raw in frames(bytes)? {
        match raw.frame_type {
            FrameType::PhaseFrame => events.push(parse_phase(&raw)?),
            FrameType::CannonTrigger => events.push(parse_cannon(&raw)?),
            FrameType::End => {}
        }
    }
    Ok(StimulusSchedule::from_ordered(events)
        .expect("frame timestamps are non-negative and non-decreasing"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatorEntry {
    pub timestamp_us: u64,
    pub frame_type: FrameType,
    pub summary: String,
}

impl fmt::Display for EmulatorEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>10} us  {:<14} {}", self.timestamp_us, self.frame_type, self.summary)
    }
}

/// Replay a stream the way a device would, logging each frame.
pub fn emulate(bytes: &[u8]) -> Result<Vec<EmulatorEntry>, DecodeError> {
    let raws = frames(bytes)?;
    let mut log = Vec::with_capacity(raws.len());
    for raw in &raws {
        let summary = match raw.frame_type {
            FrameType::PhaseFrame => {
                let e = parse_phase(raw)?;
                let EventKind::PhaseFrame(f) = &e.kind else {
                    unreachable!()
                };
                let (rows, cols) = f.delays.shape();
                let max_steps = (f.delays.max() * f.carrier_hz * DELAY_STEPS_PER_PERIOD).round();
                format!(
                    "{rows}x{cols} p={} on={}us focal={} max_delay={}/256 arrive={}us",
                    f.intensity,
                    (f.on_duration * 1e6).round(),
                    f.focal_index,
                    max_steps,
                    (e.predicted_arrival * 1e6).round()
                )
            }
            FrameType::CannonTrigger => {
                let e = parse_cannon(raw)?;
                let EventKind::CannonTrigger { cannon_id } = e.kind else {
                    unreachable!()
                };
                format!(
                    "cannon={cannon_id} arrive={}us",
                    (e.predicted_arrival * 1e6).round()
                )
            }
            FrameType::End => format!("frames={}", raws.len() - 1),
        };
        log.push(EmulatorEntry {
            timestamp_us: raw.timestamp_us,
            frame_type: raw.frame_type,
            summary,
        });
    }
    Ok(log)
}
