mod commands;
mod scene;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sonovortex::psychophysics::Units;

#[derive(Debug, Parser)]
#[command(name = "sonovortex", version, about = "Cross-field mid-air haptics engine")]
pub struct Cli {
    /// Engine configuration (TOML). Defaults to the reference setup.
    #[arg(long, global = true, env = "SONOVORTEX_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the perceiver seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files. Commands that print a table write it to
    /// stdout when this is absent.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Units of reported values. Inputs are always SI.
    #[arg(long, global = true, value_enum, default_value_t = UnitsArg::Si)]
    pub units: UnitsArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitsArg {
    /// Meters, seconds, newtons.
    Si,
    /// Millimeters, microseconds, millinewtons.
    Lab,
}

impl From<UnitsArg> for Units {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Si => Units::Si,
            UnitsArg::Lab => Units::Lab,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-element focusing delays for one focus.
    Delays {
        /// Focus position `x,y,z` in meters.
        #[arg(long, value_parser = parse_point)]
        focus: [f64; 3],
    },
    /// Simulated pressure field around a focus, as CSV and PGM.
    Field {
        #[arg(long, value_parser = parse_point)]
        focus: [f64; 3],
        /// Box size `x,y,z` around the focus, m. A zero extent gives a single
        /// sample on that axis.
        #[arg(long, value_parser = parse_point, default_value = "0.04,0,0.04")]
        extent: [f64; 3],
        /// Sample spacing, m.
        #[arg(long, default_value_t = 0.001)]
        step: f64,
    },
    /// Vortex-ring formation stability of a cannon.
    Stability {
        /// Slug volume, m³. Defaults to the configured cannon.
        #[arg(long)]
        volume: Option<f64>,
        /// Aperture diameter, m. Defaults to the configured cannon.
        #[arg(long)]
        aperture: Option<f64>,
    },
    /// Build a co-arrival schedule from a scene file and emit the wire
    /// stream plus an event table.
    Schedule {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Run a simulated experiment and write its result tables.
    Experiment {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// TOML with a `[perceiver]` table and an optional `[footprint]`
        /// table, overriding the configuration.
        #[arg(long)]
        perceiver: Option<PathBuf>,
    },
    /// Fit a setting-to-force curve from a `setting,force_mN` CSV.
    Calibrate {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, value_enum)]
        kind: CurveKind,
        /// Store the curve in the `--config` file instead of printing it.
        #[arg(long)]
        write: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    DoublePoint,
    Perceptual,
    Simultaneous,
    Reference,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Cannon,
    Ultrasound,
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z but got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
