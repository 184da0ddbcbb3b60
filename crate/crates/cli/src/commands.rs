use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sonovortex::acoustic::{
    compute_delays, focal_spot_width, simulate_field, Plane, TransducerArray,
};
use sonovortex::calibration::{
    fit_cannon_curve, fit_ultrasound_fmax, read_points_csv, CalibrationCurve,
};
use sonovortex::config::{ConfigError, FootprintConfig};
use sonovortex::geometry::{distance, Point3, SampleGrid};
use sonovortex::protocol::emulate;
use sonovortex::psychophysics::{
    run_method_of_limits, run_perceptual_threshold, run_simultaneous, write_double_point_csv,
    write_double_point_thresholds_csv, write_perceptual_csv, write_reference_csv,
    write_simultaneous_csv, DoublePointOutcome, ExperimentCondition, PerceiverModel,
    SimultaneousSetup, Units, TRIALS_PER_LEVEL,
};
use sonovortex::scheduler::{
    emit_schedule, render_image, schedule_cross_field, CompensationPolicy, CrossFieldScene,
    HapticImage,
};
use sonovortex::vortex::{is_stable, min_stable_aperture, slug_length, VortexShot};
use sonovortex::EngineConfig;

use crate::scene::Scene;
use crate::{Cli, Command, CurveKind, ProtocolArg};

#[derive(Debug)]
pub enum CliError {
    /// Bad input or a domain rule violated.
    Domain(String),
    /// Anything else, such as a failed write.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<sonovortex::Error> for CliError {
    fn from(e: sonovortex::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Domain(e.to_string())
    }
}

fn domain<E: Into<sonovortex::Error>>(e: E) -> CliError {
    CliError::from(e.into())
}

fn write_failed(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Domain(format!("cannot read {}: {e}", path.display())))
}

use sonovortex::fmt_sig as num;

struct Ctx<'a> {
    cli: &'a Cli,
    units: Units,
    config: EngineConfig,
}

impl Ctx<'_> {
    fn length(&self, m: f64) -> String {
        num(self.units.length(m))
    }

    fn time(&self, s: f64) -> String {
        num(match self.units {
            Units::Si => s,
            Units::Lab => s * 1e6,
        })
    }

    fn point(&self, p: Point3) -> String {
        format!("{},{},{}", self.length(p.x), self.length(p.y), self.length(p.z))
    }

    fn suffix(&self, si: &'static str, lab: &'static str) -> &'static str {
        match self.units {
            Units::Si => si,
            Units::Lab => lab,
        }
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(write_failed(&dir))?;
        Ok(dir)
    }

    fn write_file(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out_dir()?.join(name);
        fs::write(&path, bytes).map_err(write_failed(&path))?;
        Ok(path)
    }

    /// A table goes to `name` under `--out-dir`, or to stdout without one.
    fn emit_table(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        if self.cli.out_dir.is_some() {
            self.write_file(name, bytes)?;
            Ok(())
        } else {
            io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::Internal(format!("stdout: {e}")))
        }
    }

    fn array(&self) -> Result<TransducerArray, CliError> {
        Ok(self.config.transducer_array()?)
    }
}

fn to_point([x, y, z]: [f64; 3]) -> Point3 {
    Point3::new(x, y, z)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) if !(matches!(cli.command, Command::Calibrate { write: true, .. }) && !path.exists()) => {
            EngineConfig::load(path)?
        }
        _ => EngineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.perceiver.seed = seed;
    }
    let ctx = Ctx {
        cli,
        units: cli.units.into(),
        config,
    };
    let mut out = String::new();
    match &cli.command {
        Command::Delays { focus } => return delays(&ctx, to_point(*focus)),
        Command::Field {
            focus,
            extent,
            step,
        } => field(&ctx, to_point(*focus), *extent, *step, &mut out)?,
        Command::Stability { volume, aperture } => stability(&ctx, *volume, *aperture, &mut out)?,
        Command::Schedule { scene } => schedule(&ctx, scene, &mut out)?,
        Command::Experiment {
            protocol,
            perceiver,
        } => {
            let result = experiment(ctx, *protocol, perceiver.as_deref(), &mut out);
            print!("{out}");
            return result;
        }
        Command::Calibrate {
            points,
            kind,
            write,
        } => calibrate(&ctx, points, *kind, *write, &mut out)?,
    }
    print!("{out}");
    Ok(())
}

fn delays(ctx: &Ctx<'_>, focus: Point3) -> Result<(), CliError> {
    let array = ctx.array()?;
    let raw = compute_delays(&array, focus).map_err(domain)?;
    let norm = raw.normalized();
    let unit = ctx.suffix("s", "us");
    let mut csv = format!("row,col,delay_{unit},normalized_{unit}\n");
    for i in 0..raw.rows() {
        for j in 0..raw.cols() {
            csv.push_str(&format!(
                "{i},{j},{},{}\n",
                ctx.time(raw.get(i, j)),
                ctx.time(norm.get(i, j))
            ));
        }
    }
    ctx.emit_table("delays.csv", csv.as_bytes())
}

fn field(
    ctx: &Ctx<'_>,
    focus: Point3,
    extent: [f64; 3],
    step: f64,
    out: &mut String,
) -> Result<(), CliError> {
    if !(step > 0.0) || extent.iter().any(|e| !(*e >= 0.0)) {
        return Err(CliError::Domain(
            "step must be positive and extents non-negative".into(),
        ));
    }
    let array = ctx.array()?;
    let delays = compute_delays(&array, focus).map_err(domain)?;
    let grid = SampleGrid::with_step(focus, extent, step).map_err(domain)?;
    let field = simulate_field(&array, &delays, &grid).map_err(domain)?;

    let mut csv = Vec::new();
    field.write_csv(&mut csv).expect("in-memory write");
    ctx.write_file("field.csv", &csv)?;
    let [_, ny, nz] = grid.resolution();
    let [_, j, k] = grid.nearest(focus);
    let plane = if nz > 1 || ny == 1 {
        Plane::Xz(j)
    } else {
        Plane::Xy(k)
    };
    let mut pgm = Vec::new();
    field.write_pgm(&mut pgm, plane).expect("in-memory write");
    ctx.write_file("field.pgm", &pgm)?;

    let len = ctx.suffix("m", "mm");
    out.push_str(&format!("samples: {}\n", grid.len()));
    out.push_str(&format!("singular: {}\n", field.singular_count()));
    if let Some(idx) = field.argmax() {
        let peak = grid.point_at(idx);
        out.push_str(&format!("peak_{len}: {}\n", ctx.point(peak)));
        out.push_str(&format!("peak_offset_{len}: {}\n", ctx.length(distance(peak, focus))));
    }
    match focal_spot_width(&field, focus) {
        Ok(w) => out.push_str(&format!("fwhm_x_{len}: {}\n", ctx.length(w))),
        Err(e) => out.push_str(&format!("fwhm_x_{len}: n/a ({e})\n")),
    }
    Ok(())
}

fn stability(
    ctx: &Ctx<'_>,
    volume: Option<f64>,
    aperture: Option<f64>,
    out: &mut String,
) -> Result<(), CliError> {
    let v = volume.unwrap_or(ctx.config.cannon.slug_volume);
    let d = aperture.unwrap_or(ctx.config.cannon.aperture);
    let s = is_stable(v, d).map_err(domain)?;
    let l = slug_length(v, d).map_err(domain)?;
    let d_min = min_stable_aperture(v).map_err(domain)?;
    let (len, vol, vol_scale) = match ctx.units {
        Units::Si => ("m", "m3", 1.0),
        Units::Lab => ("mm", "mm3", 1e9),
    };
    out.push_str(&format!("slug_volume_{vol}: {}\n", num(v * vol_scale)));
    out.push_str(&format!("aperture_{len}: {}\n", ctx.length(d)));
    out.push_str(&format!("slug_length_{len}: {}\n", ctx.length(l)));
    out.push_str(&format!("stroke_ratio: {}\n", num(s.ratio)));
    out.push_str(&format!("stable: {}\n", s.stable));
    out.push_str(&format!("margin: {}\n", num(s.margin)));
    out.push_str(&format!("formation: {}\n", s.class.label()));
    out.push_str(&format!("min_aperture_{len}: {}\n", ctx.length(d_min)));
    Ok(())
}

fn schedule(ctx: &Ctx<'_>, scene_path: &Path, out: &mut String) -> Result<(), CliError> {
    let scene = Scene::parse(&read_input(scene_path)?)
        .map_err(|e| CliError::Domain(format!("scene {}: {e}", scene_path.display())))?;
    for fp in &scene.focal_points {
        fp.validate().map_err(domain)?;
    }
    if let Some(m) = &scene.modulation {
        m.validate().map_err(domain)?;
    }
    let array = ctx.array()?;
    let image = HapticImage::new(scene.focal_points.clone()).map_err(domain)?;
    let unit = ctx.suffix("s", "us");

    let schedule = match &scene.vortex {
        Some(launch) => {
            let target = image.points()[0].position;
            let shot = VortexShot::aimed(&ctx.config.cannon, launch.launch_time, launch.origin, target)
                .map_err(domain)?;
            let mut policy: CompensationPolicy = ctx.config.compensation;
            policy.mechanical_latency += ctx.config.cannon.mechanical_latency;
            let plan = schedule_cross_field(&CrossFieldScene {
                image: &image,
                array: &array,
                modulation: scene.modulation.as_ref(),
                shot: &shot,
                cannon_id: scene.cannon_id,
                policy,
                target_tolerance: scene.target_tolerance,
            })
            .map_err(domain)?;
            out.push_str(&format!("offset_{unit}: {}\n", ctx.time(plan.offset)));
            out.push_str(&format!("vortex_arrival_{unit}: {}\n", ctx.time(plan.vortex_arrival)));
            out.push_str(&format!(
                "first_ultrasound_arrival_{unit}: {}\n",
                ctx.time(plan.first_ultrasound_arrival)
            ));
            out.push_str(&format!("arrival_gap_{unit}: {}\n", ctx.time(plan.arrival_gap())));
            out.push_str(&format!(
                "implied_mechanical_latency_{unit}: {}\n",
                ctx.time(plan.implied_mechanical_latency)
            ));
            plan.schedule
        }
        None => render_image(&image, &array, scene.modulation.as_ref()).map_err(domain)?,
    };

    let bytes = emit_schedule(&schedule).map_err(domain)?;
    let mut csv = Vec::new();
    schedule.write_csv(&mut csv).expect("in-memory write");
    let log = emulate(&bytes).map_err(|e| CliError::Internal(format!("loopback failed: {e}")))?;
    let log: String = log.iter().map(|e| format!("{e}\n")).collect();
    ctx.write_file("schedule.bin", &bytes)?;
    ctx.write_file("events.csv", &csv)?;
    ctx.write_file("emulator.log", log.as_bytes())?;
    out.push_str(&format!("events: {}\n", schedule.len()));
    out.push_str(&format!("bytes: {}\n", bytes.len()));
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerceiverFile {
    perceiver: Option<PerceiverModel>,
    footprint: Option<FootprintConfig>,
}

fn experiment(
    mut ctx: Ctx<'_>,
    protocol: ProtocolArg,
    perceiver: Option<&Path>,
    out: &mut String,
) -> Result<(), CliError> {
    if let Some(path) = perceiver {
        let file: PerceiverFile = toml::from_str(&read_input(path)?)
            .map_err(|e| CliError::Domain(format!("perceiver {}: {e}", path.display())))?;
        if let Some(p) = file.perceiver {
            ctx.config.perceiver = p;
        }
        if let Some(f) = file.footprint {
            ctx.config.footprint = f;
        }
        if let Some(seed) = ctx.cli.seed {
            ctx.config.perceiver.seed = seed;
        }
        ctx.config.validate()?;
    }
    let run_all = protocol == ProtocolArg::All;
    let mut failure = None;
    let units = ctx.units;

    if run_all || protocol == ProtocolArg::DoublePoint {
        let footprint = ctx.config.footprint_model()?;
        let outcomes: Vec<DoublePointOutcome> = ExperimentCondition::double_point_set()
            .iter()
            .map(|c| {
                let r = run_method_of_limits(c, &ctx.config.perceiver, &footprint, &ctx.config.limits);
                DoublePointOutcome::from_result(c, r)
            })
            .collect();
        let mut trials = Vec::new();
        write_double_point_csv(&mut trials, &outcomes, units).expect("in-memory write");
        ctx.write_file("double_point.csv", &trials)?;
        let mut thresholds = Vec::new();
        write_double_point_thresholds_csv(&mut thresholds, &outcomes).expect("in-memory write");
        ctx.write_file("double_point_thresholds.csv", &thresholds)?;
        for o in &outcomes {
            match (&o.threshold, &o.error) {
                (Some(t), _) => out.push_str(&format!("{}: {} mm\n", o.condition.tag(), num(t * 1e3))),
                (None, Some(e)) => {
                    out.push_str(&format!("{}: failed ({e})\n", o.condition.tag()));
                    failure.get_or_insert_with(|| format!("condition {}: {e}", o.condition.tag()));
                }
                (None, None) => unreachable!("outcome without threshold carries an error"),
            }
        }
    }

    if run_all || protocol == ProtocolArg::Perceptual {
        let results = ExperimentCondition::perceptual_set()
            .iter()
            .map(|c| run_perceptual_threshold(c, &ctx.config.perceiver, &c.default_levels(), TRIALS_PER_LEVEL))
            .collect::<Result<Vec<_>, _>>()
            .map_err(domain)?;
        let mut csv = Vec::new();
        write_perceptual_csv(&mut csv, &results, units).expect("in-memory write");
        ctx.write_file("perceptual.csv", &csv)?;
        out.push_str(&format!("perceptual: {} conditions\n", results.len()));
    }

    if run_all || protocol == ProtocolArg::Simultaneous {
        let results = [50.0, 200.0]
            .into_iter()
            .map(|hz| {
                let mut setup = SimultaneousSetup {
                    array: ctx.config.array.clone(),
                    cannon: ctx.config.cannon.clone(),
                    depth: ctx.config.footprint.depth,
                    policy: CompensationPolicy::computed(ctx.config.compensation.mechanical_latency),
                    ..SimultaneousSetup::at(hz)
                };
                if let Some(curve @ CalibrationCurve::UltrasoundSin2 { .. }) = &ctx.config.calibration.ultrasound {
                    setup.ultrasound_curve = curve.clone();
                }
                run_simultaneous(&setup, &ctx.config.perceiver)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(domain)?;
        let mut csv = Vec::new();
        write_simultaneous_csv(&mut csv, &results).expect("in-memory write");
        ctx.write_file("simultaneous.csv", &csv)?;
        for r in &results {
            out.push_str(&format!("simultaneous {} Hz: {}\n", num(r.modulation_hz), num(r.rate)));
        }
    }

    if run_all || protocol == ProtocolArg::Reference {
        let mut csv = Vec::new();
        write_reference_csv(&mut csv).expect("in-memory write");
        ctx.write_file("reference.csv", &csv)?;
    }

    match failure {
        Some(msg) => Err(CliError::Domain(msg)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct CurveFragment<'a> {
    calibration: CurveTable<'a>,
}

#[derive(Serialize)]
struct CurveTable<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    cannon: Option<&'a CalibrationCurve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ultrasound: Option<&'a CalibrationCurve>,
}

fn calibrate(
    ctx: &Ctx<'_>,
    points: &Path,
    kind: CurveKind,
    write: bool,
    out: &mut String,
) -> Result<(), CliError> {
    let file = fs::File::open(points)
        .map_err(|e| CliError::Domain(format!("cannot read {}: {e}", points.display())))?;
    let pts = read_points_csv(file).map_err(domain)?;
    let curve = match kind {
        CurveKind::Cannon => fit_cannon_curve(&pts),
        CurveKind::Ultrasound => fit_ultrasound_fmax(&pts),
    }
    .map_err(domain)?;

    if write {
        let path = ctx.cli.config.as_ref().ok_or_else(|| {
            CliError::Domain("--write needs --config (or SONOVORTEX_CONFIG)".into())
        })?;
        let mut config = ctx.config.clone();
        match kind {
            CurveKind::Cannon => config.calibration.cannon = Some(curve),
            CurveKind::Ultrasound => config.calibration.ultrasound = Some(curve),
        }
        fs::write(path, config.to_toml_string()).map_err(write_failed(path))?;
        out.push_str(&format!("updated {}\n", path.display()));
    } else {
        let table = match kind {
            CurveKind::Cannon => CurveTable {
                cannon: Some(&curve),
                ultrasound: None,
            },
            CurveKind::Ultrasound => CurveTable {
                cannon: None,
                ultrasound: Some(&curve),
            },
        };
        let text = toml::to_string(&CurveFragment { calibration: table })
            .map_err(|e| CliError::Internal(e.to_string()))?;
        out.push_str(&text);
    }
    Ok(())
}
