use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use strata_core::export::{
    displacement_field_csv, field_dump_csv, panel_csv, two_beat_panel_csv, GaitFile, SingularityRecord,
    SubgaitFile, TrajectoryRecord,
};
use strata_core::gait::{
    displacement_field as sweep, integrate_two_beat_panel, reconstruct_body_trajectory, run_schedule,
    stratified_panel, two_beat_panel, ControlInputs, CycleInputs, ReconstructOptions, SubgaitSpec, Trajectory,
    TwoBeatGaitSpec,
};
use strata_core::{Error, ModelSpec, ReducedShapeSubspace, ShapeField, SE2};
use strata_steer::{ServeConfig, Session};

use crate::options::{Common, Format, GaitArgs, PairingArg, PanelArgs, Plane, ServeArgs, ShapeArgs, TrajectoryArgs, MIN_GRID};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SingularShape { .. } | Error::NonFiniteVelocity { .. } | Error::OpenContour { .. } => {
                Self::Numerical(e.to_string())
            }
            _ => Self::Config(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn load_model(common: &Common) -> Result<ModelSpec, Failure> {
    ModelSpec::load(&common.model).map_err(|e| config(format!("{}: {e}", common.model.display())))
}

fn check_common(common: &Common) -> Outcome {
    if common.grid < MIN_GRID {
        return Err(config(format!("--grid must be at least {MIN_GRID}, got {}", common.grid)));
    }
    if !(common.step > 0.0 && common.step.is_finite()) {
        return Err(config("--step must be positive"));
    }
    if let Some(seed) = common.seed {
        log::debug!("seed {seed} accepted; no randomized sampling in this command");
    }
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("cannot write to stdout: {e}"))),
    }
}

/// `dir/name.ext` becomes `dir/name{suffix}.{ext}`.
fn with_suffix(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

fn subspace(model: &ModelSpec, [i, j]: [usize; 2], bounds: Option<[f64; 2]>) -> Result<ReducedShapeSubspace, Failure> {
    if i == 0 || j == 0 {
        return Err(config("leg numbers start at 1"));
    }
    let mut sub = ReducedShapeSubspace::new(model, i - 1, j - 1)?;
    if let Some(b) = bounds {
        sub = sub.with_bounds(model, [b, b])?;
    }
    Ok(sub)
}

/// What a gait option set resolves to.
pub enum GaitChoice {
    Single(SubgaitSpec),
    TwoBeat(TwoBeatGaitSpec, Vec<CycleInputs>),
}

impl GaitChoice {
    fn record(&self, model: &ModelSpec) -> Value {
        match self {
            Self::Single(spec) => serde_json::to_value(SubgaitFile::from_spec(spec, model)),
            Self::TwoBeat(gait, schedule) => {
                let mut file = GaitFile::from_spec(gait, model);
                file.schedule = Some(schedule.clone());
                serde_json::to_value(file)
            }
        }
        .expect("gait serializes")
    }

    fn two_beat(&self) -> Result<&TwoBeatGaitSpec, Failure> {
        match self {
            Self::TwoBeat(gait, _) => Ok(gait),
            Self::Single(_) => Err(config("this command needs a two-beat gait on a model with at least four legs")),
        }
    }
}

fn load_schedule(path: &Path) -> Result<Vec<CycleInputs>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
}

pub fn resolve_gait(model: &ModelSpec, args: &GaitArgs) -> Result<GaitChoice, Failure> {
    let override_inputs = |first: ControlInputs, second: ControlInputs| {
        CycleInputs::new(
            args.u13.map(ControlInputs::from).unwrap_or(first),
            args.u24.map(ControlInputs::from).unwrap_or(second),
        )
    };

    if let Some(path) = &args.gait {
        let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        if let Ok(file) = GaitFile::from_json(&text) {
            let gait = file.to_spec(model)?;
            let inputs = override_inputs(gait.first.inputs, gait.second.inputs);
            let gait = gait.with_inputs(inputs);
            let schedule = match (&args.schedule, args.cycles) {
                (Some(p), _) => load_schedule(p)?,
                (None, Some(n)) => vec![inputs; n],
                (None, None) if args.u13.is_some() || args.u24.is_some() => {
                    vec![inputs; file.input_schedule().len()]
                }
                (None, None) => file.input_schedule(),
            };
            return Ok(GaitChoice::TwoBeat(gait, schedule));
        }
        let file: SubgaitFile =
            serde_json::from_str(&text).map_err(|e| config(format!("{}: not a gait file: {e}", path.display())))?;
        let mut spec = file.to_spec(model)?;
        if let Some(u) = args.u13 {
            spec.inputs = u.into();
        }
        return Ok(GaitChoice::Single(spec));
    }

    if model.leg_count() < 4 {
        let pair = args.first_pair.unwrap_or([1, 2]);
        let spec = SubgaitSpec::new(
            subspace(model, pair, None)?,
            args.alpha_star.unwrap_or([0.4, 0.4]),
            args.t0.unwrap_or(-0.6),
            args.t_pi.unwrap_or(-0.6),
        )
        .with_inputs(args.u13.map(ControlInputs::from).unwrap_or_default());
        return Ok(GaitChoice::Single(spec));
    }

    let pairing = args.pairing.unwrap_or(PairingArg::Trot);
    let (p1, p2) = pairing.pairs();
    let star = args.alpha_star.unwrap_or([0.0, 0.0]);
    let (t0, t_pi) = (args.t0.unwrap_or(-0.8), args.t_pi.unwrap_or(-0.8));
    let first = SubgaitSpec::new(subspace(model, args.first_pair.unwrap_or(p1), None)?, star, t0, t_pi);
    let second = SubgaitSpec::new(subspace(model, args.second_pair.unwrap_or(p2), None)?, star, t0, t_pi);
    let inputs = override_inputs(ControlInputs::default(), ControlInputs::default());
    let gait = TwoBeatGaitSpec::new(first, second, pairing.into())?.with_inputs(inputs);
    let schedule = match &args.schedule {
        Some(p) => load_schedule(p)?,
        None => vec![inputs; args.cycles.unwrap_or(1)],
    };
    Ok(GaitChoice::TwoBeat(gait, schedule))
}

pub fn field_dump(common: &Common, shape: &ShapeArgs) -> Outcome {
    check_common(common)?;
    let model = load_model(common)?;
    let pair = match shape.pairs.as_slice() {
        [] => [1, if model.leg_count() < 4 { 2 } else { 3 }],
        [p] => *p,
        _ => return Err(config("field-dump takes a single --pair")),
    };
    let field = ShapeField::new(&model, subspace(&model, pair, shape.bounds)?);
    let samples = field.sample_grid(common.grid);
    if samples.iter().all(|s| s.basis.is_none()) {
        return Err(Failure::Numerical("singular region covers the whole grid".into()));
    }
    let singular: Vec<SingularityRecord> = field
        .find_singularities(common.grid.max(strata_core::shapefield::MIN_SINGULARITY_GRID))?
        .iter()
        .map(SingularityRecord::from)
        .collect();
    for s in &singular {
        log::info!(
            "singularity ({:?}) at ({:.2}°, {:.2}°), F = {:.6}",
            s.kind,
            s.point[0].to_degrees(),
            s.point[1].to_degrees(),
            s.f_value
        );
    }

    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            write_output(common.out.as_deref(), &field_dump_csv(&samples))?;
            if let Some(out) = &common.out {
                write_output(Some(&with_suffix(out, ".singularities", "json")), &pretty(&singular))?;
            }
            Ok(())
        }
        Format::Json => {
            let rows: Vec<Value> = samples
                .iter()
                .map(|s| {
                    json!({
                        "alpha": [s.point[0], s.point[1]],
                        "F": s.f_value,
                        "grad": [s.grad[0], s.grad[1]],
                        "basis": s.basis.map(|b| [b[0], b[1]]),
                    })
                })
                .collect();
            let doc = json!({
                "model": model.name,
                "pair": pair,
                "grid": common.grid,
                "samples": rows,
                "singularities": singular,
            });
            write_output(common.out.as_deref(), &pretty(&doc))
        }
    }
}

pub fn panel(common: &Common, shape: &ShapeArgs, args: &PanelArgs, gait_args: &GaitArgs) -> Outcome {
    check_common(common)?;
    let model = load_model(common)?;
    let gait = resolve_gait(&model, gait_args)?;
    let pairs: Vec<[usize; 2]> = if !shape.pairs.is_empty() {
        shape.pairs.clone()
    } else {
        match &gait {
            GaitChoice::Single(s) => vec![one_based(&s.subspace)],
            GaitChoice::TwoBeat(g, _) => vec![one_based(&g.first.subspace), one_based(&g.second.subspace)],
        }
    };
    if (pairs.len() > 1 || args.two_beat) && common.out.is_none() {
        return Err(config("several output files need --out"));
    }
    let format = common.format.unwrap_or(Format::Csv);
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };

    for &pair in &pairs {
        let grid = stratified_panel(&model, &subspace(&model, pair, shape.bounds)?, common.grid)?;
        if grid.singular_count() == grid.values.len() {
            return Err(Failure::Numerical(format!("panel {pair:?} is singular everywhere")));
        }
        log::info!("panel {pair:?}: {} singular cells", grid.singular_count());
        let path = match (&common.out, pairs.len()) {
            (Some(out), 1) => Some(out.clone()),
            (Some(out), _) => Some(with_suffix(out, &format!("_{}{}", pair[0], pair[1]), ext)),
            (None, _) => None,
        };
        let text = match format {
            Format::Csv => panel_csv(&grid),
            Format::Json => pretty(&grid),
        };
        write_output(path.as_deref(), &text)?;
    }

    if args.two_beat {
        let gait = gait.two_beat()?;
        let samples = two_beat_panel(&model, gait, args.phases, common.step)?;
        let integral = integrate_two_beat_panel(&samples);
        log::info!("two-beat panel integral ({:.6}, {:.6}, {:.6})", integral[0], integral[1], integral[2]);
        let out = common.out.as_deref().expect("checked above");
        let text = match format {
            Format::Csv => two_beat_panel_csv(&samples),
            Format::Json => pretty(&json!({ "samples": samples, "integral": integral })),
        };
        write_output(Some(&with_suffix(out, "_twobeat", ext)), &text)?;
    }
    Ok(())
}

fn one_based(sub: &ReducedShapeSubspace) -> [usize; 2] {
    [sub.pair.0 + 1, sub.pair.1 + 1]
}

pub fn trajectory(common: &Common, gait_args: &GaitArgs, args: &TrajectoryArgs) -> Outcome {
    check_common(common)?;
    let model = load_model(common)?;
    let gait = resolve_gait(&model, gait_args)?;
    let opts = ReconstructOptions {
        step: args.phase_step,
        samples_per_phase: args.samples,
        flow_step: common.step,
    };
    let [x, y, th] = args.start.unwrap_or([0.0; 3]);
    let g0 = SE2::new(x, y, th);
    let (traj, record): (Trajectory, Value) = match (&gait, args.subgait) {
        (GaitChoice::Single(spec), _) => (reconstruct_body_trajectory(&model, spec, g0, &opts)?, gait.record(&model)),
        (GaitChoice::TwoBeat(g, _), true) => {
            let traj = reconstruct_body_trajectory(&model, &g.first, g0, &opts)?;
            let record = serde_json::to_value(SubgaitFile::from_spec(&g.first, &model)).expect("gait serializes");
            (traj, record)
        }
        (GaitChoice::TwoBeat(g, schedule), false) => (run_schedule(&model, g, schedule, g0, &opts)?, gait.record(&model)),
    };
    if traj.out_of_bounds {
        log::warn!("a stance path leaves the swing limits");
    }
    if traj.inputs_out_of_range {
        log::warn!("control inputs outside [-1, 1]");
    }
    let net = traj.net_displacement;
    log::info!("net displacement ({:.6}, {:.6}, {:.3}°)", net.x, net.y, net.theta.to_degrees());

    let text = match common.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut s = TrajectoryRecord::new(&model, record, &traj).to_json();
            s.push('\n');
            s
        }
        Format::Csv => trajectory_csv(&model, &traj),
    };
    write_output(common.out.as_deref(), &text)
}

fn trajectory_csv(model: &ModelSpec, traj: &Trajectory) -> String {
    let n = model.leg_count();
    let mut header = vec!["tau".to_string(), "x".into(), "y".into(), "theta".into()];
    header.extend((1..=n).map(|k| format!("alpha{k}")));
    header.extend((1..=n).map(|k| format!("beta{k}")));
    let mut out = header.join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut fields: Vec<String> = [s.tau, s.pose.x, s.pose.y, s.pose.theta]
            .iter()
            .chain(s.shape.0.iter())
            .map(|v| format!("{v:?}"))
            .collect();
        fields.extend(s.contact.iter().map(|&b| u8::from(b).to_string()));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn displacement_field(common: &Common, gait_args: &GaitArgs, plane: Plane, samples: usize) -> Outcome {
    check_common(common)?;
    let model = load_model(common)?;
    let gait = resolve_gait(&model, gait_args)?;
    let template = gait.two_beat()?;
    let opts = ReconstructOptions::default().with_samples(samples);
    let opts = ReconstructOptions {
        flow_step: common.step,
        ..opts
    };
    let field = sweep(&model, template, plane.into(), common.grid, &opts)?;
    if field.cells.iter().all(|c| c.z.is_none()) {
        return Err(Failure::Numerical("every cell hit a singularity".into()));
    }
    log::info!(
        "max |x| {:.6}, max |y| {:.6}, max |θ| {:.3}°",
        field.max_abs(0),
        field.max_abs(1),
        field.max_abs(2).to_degrees()
    );
    let text = match common.format.unwrap_or(Format::Csv) {
        Format::Csv => displacement_field_csv(&field),
        Format::Json => pretty(&field),
    };
    write_output(common.out.as_deref(), &text)
}

pub fn serve(common: &Common, gait_args: &GaitArgs, args: &ServeArgs) -> Outcome {
    check_common(common)?;
    let model = load_model(common)?;
    let gait = resolve_gait(&model, gait_args)?;
    let template = gait.two_beat()?.clone();
    if !(args.rate.is_finite()) || args.tick_ms == 0 {
        return Err(config("--rate must be finite and --tick-ms positive"));
    }
    let opts = ReconstructOptions {
        flow_step: common.step,
        ..ReconstructOptions::default()
    };
    let mut session = Session::new(Arc::new(model), template).with_options(opts);
    session.handle_message(&strata_steer::ClientMessage::SetRate {
        phase_per_sec: args.rate,
    });
    let config = ServeConfig {
        tick: Duration::from_millis(args.tick_ms),
        decimation: args.decimation,
        ..ServeConfig::default()
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Io(format!("cannot start runtime: {e}")))?;
    let addr = format!("{}:{}", args.host, args.port);
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::Io(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| Failure::Io(e.to_string()))?;
        eprintln!("strata: serving on http://{local} (ws at /ws)");
        strata_steer::serve(listener, session, config)
            .await
            .map_err(|e| Failure::Io(format!("server stopped: {e}")))
    })
}
