use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::limits::{MethodOfLimitsResult, ThresholdRun};
use super::reference;
use super::threshold::{PerceptualResult, SimultaneousResult};
use super::{ExperimentCondition, PsychophysicsError};
use crate::fmt_sig;

/// Unit system for lengths and forces in result CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Meters and newtons.
    #[default]
    Si,
    /// Millimeters and millinewtons.
    Lab,
}

impl Units {
    pub fn length(self, meters: f64) -> f64 {
        match self {
            Units::Si => meters,
            Units::Lab => meters * 1e3,
        }
    }

    pub fn force(self, newtons: f64) -> f64 {
        match self {
            Units::Si => newtons,
            Units::Lab => newtons * 1e3,
        }
    }
}

/// A double-point condition's trial log, whether or not it converged.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublePointOutcome {
    pub condition: ExperimentCondition,
    pub runs: Vec<ThresholdRun>,
    pub threshold: Option<f64>,
    pub error: Option<String>,
}

impl DoublePointOutcome {
    pub fn from_result(
        condition: &ExperimentCondition,
        result: Result<MethodOfLimitsResult, PsychophysicsError>,
    ) -> Self {
        match result {
            Ok(r) => Self {
                condition: r.condition,
                runs: r.runs,
                threshold: Some(r.threshold),
                error: None,
            },
            Err(e) => {
                let runs = match &e {
                    PsychophysicsError::NonConvergence { run, .. } => vec![(**run).clone()],
                    _ => Vec::new(),
                };
                Self {
                    condition: condition.clone(),
                    runs,
                    threshold: None,
                    error: Some(e.to_string()),
                }
            }
        }
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn io_err(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::new(io::ErrorKind::Other, format!("{other:?}")),
    }
}

const PANEL_HEADER: [&str; 3] = ["condition", "level_or_separation", "rate_or_response"];

/// Every two-point trial, one row each, in presentation order.
pub fn write_double_point_csv<W: Write>(
    w: W,
    outcomes: &[DoublePointOutcome],
    units: Units,
) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(PANEL_HEADER).map_err(io_err)?;
    for o in outcomes {
        let tag = o.condition.tag();
        for run in &o.runs {
            for t in &run.trials {
                out.write_record([
                    tag.clone(),
                    fmt_sig(units.length(t.separation)),
                    t.response.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
    }
    out.flush()
}

/// Simulated threshold per condition next to the human value, in mm.
/// A condition that did not converge leaves its threshold blank.
pub fn write_double_point_thresholds_csv<W: Write>(
    w: W,
    outcomes: &[DoublePointOutcome],
) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["condition", "threshold_mm", "reference_mm"])
        .map_err(io_err)?;
    let mm = |v: Option<f64>| v.map(|m| fmt_sig(m * 1e3)).unwrap_or_default();
    for o in outcomes {
        out.write_record([
            o.condition.tag(),
            mm(o.threshold),
            mm(reference::two_point_threshold(&o.condition.label)),
        ])
        .map_err(io_err)?;
    }
    out.flush()
}

/// Perception rate (fraction) per force level per condition.
pub fn write_perceptual_csv<W: Write>(
    w: W,
    results: &[PerceptualResult],
    units: Units,
) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(PANEL_HEADER).map_err(io_err)?;
    for r in results {
        let tag = r.condition.tag();
        for lr in &r.rates {
            out.write_record([tag.clone(), fmt_sig(units.force(lr.force)), fmt_sig(lr.rate)])
                .map_err(io_err)?;
        }
    }
    out.flush()
}

pub fn write_simultaneous_csv<W: Write>(w: W, results: &[SimultaneousResult]) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["modulation_hz", "perception_rate", "reference_rate"])
        .map_err(io_err)?;
    for r in results {
        out.write_record([
            fmt_sig(r.modulation_hz),
            fmt_sig(r.rate),
            r.reference_rate.map(fmt_sig).unwrap_or_default(),
        ])
        .map_err(io_err)?;
    }
    out.flush()
}

/// The stored human results as `quantity,value,unit` rows.
pub fn write_reference_csv<W: Write>(w: W) -> io::Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["quantity", "value", "unit"]).map_err(io_err)?;
    let mut rows = vec![
        ("ultrasound_two_point", reference::ULTRASOUND_TWO_POINT, "m"),
        ("vortex_two_point", reference::VORTEX_TWO_POINT, "m"),
        ("constant_vortex_inflation", reference::CONSTANT_VORTEX_INFLATION, "m"),
        ("masked_50hz_rate_below", reference::MASKED_50HZ_RATE_BELOW, "fraction"),
        ("ultrasound_saturation_force", reference::ULTRASOUND_SATURATION_FORCE, "N"),
        ("vortex_saturation_force", reference::VORTEX_SATURATION_FORCE, "N"),
    ];
    let names = ["simultaneous_rate_50hz", "simultaneous_rate_200hz"];
    for (name, (_, rate)) in names.iter().zip(reference::SIMULTANEOUS_RATES) {
        rows.push((name, rate, "fraction"));
    }
    for (q, v, u) in rows {
        out.write_record([q, &fmt_sig(v), u]).map_err(io_err)?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychophysics::{
        LevelRate, SeriesDirection, StimulusKind, TwoPointResponse, TwoPointTrial,
    };

    fn outcome() -> DoublePointOutcome {
        DoublePointOutcome {
            condition: ExperimentCondition::new("c", StimulusKind::CannonOnly),
            runs: vec![ThresholdRun {
                direction: SeriesDirection::Descending,
                step: 1e-4,
                trials: vec![
                    TwoPointTrial {
                        separation: 0.0121,
                        response: TwoPointResponse::Divided,
                    },
                    TwoPointTrial {
                        separation: 0.012,
                        response: TwoPointResponse::NotDivided,
                    },
                ],
                crossing: Some(0.01205),
            }],
            threshold: Some(0.01205),
            error: None,
        }
    }

    fn text(f: impl FnOnce(&mut Vec<u8>)) -> String {
        let mut buf = Vec::new();
        f(&mut buf);
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn double_point_rows() {
        let s = text(|b| write_double_point_csv(b, &[outcome()], Units::Lab).unwrap());
        assert_eq!(
            s,
            "condition,level_or_separation,rate_or_response\n\
             c:cannon,12.1,divided\nc:cannon,12,not-divided\n"
        );
        let s = text(|b| write_double_point_thresholds_csv(b, &[outcome()]).unwrap());
        assert_eq!(s, "condition,threshold_mm,reference_mm\nc:cannon,12.05,11\n");
    }

    #[test]
    fn failed_condition_has_blank_threshold() {
        let c = ExperimentCondition::new("d", StimulusKind::CannonWithConstantUltrasound { modulation_hz: 50.0 });
        let o = DoublePointOutcome::from_result(
            &c,
            Err(PsychophysicsError::InvalidParameter("x".into())),
        );
        let s = text(|b| write_double_point_thresholds_csv(b, &[o]).unwrap());
        assert!(s.ends_with("d:cannon+constant-ultrasound-50hz,,11\n"));
    }

    #[test]
    fn perceptual_and_simultaneous_rows() {
        let r = PerceptualResult {
            condition: ExperimentCondition::new("a", StimulusKind::UltrasoundOnly { modulation_hz: 50.0 }),
            trials: vec![],
            rates: vec![LevelRate {
                force: 0.0007,
                perceived: 3,
                trials: 10,
                rate: 0.3,
            }],
        };
        let s = text(|b| write_perceptual_csv(b, &[r], Units::Si).unwrap());
        assert_eq!(s.lines().nth(1), Some("a:ultrasound-50hz,0.0007,0.3"));
        let sim = SimultaneousResult {
            modulation_hz: 50.0,
            trials: vec![true],
            rate: 1.0,
            reference_rate: Some(0.952),
            arrival_gap: 0.0,
        };
        let s = text(|b| write_simultaneous_csv(b, &[sim]).unwrap());
        assert_eq!(s, "modulation_hz,perception_rate,reference_rate\n50,1,0.952\n");
    }

    #[test]
    fn reference_table_lists_all_constants() {
        let s = text(|b| write_reference_csv(b).unwrap());
        assert_eq!(s.lines().count(), 9);
        assert!(s.contains("simultaneous_rate_50hz,0.952,fraction"));
    }
}
