//! Subcommand pipelines. Each one writes its manifest first, then its
//! outputs under the configured directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use cylwave_core::carleman::{self, ChainReport};
use cylwave_core::inversion::StopReason;
use cylwave_core::{
    add_noise, check_hypotheses, generate_data, invert, io, postprocess, solve_forward, Acquisition, BoundaryRecord,
    ConductivityModel, ForwardProblem, Grid3, HistoryMode, HypothesisReport, ModelSpec, Phantom, ScalarField3,
    SweepReport,
};

use crate::config::{CarlemanCoefficient, ConfigError, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    GenData,
    Invert,
    CarlemanCheck,
    StabilityProbe,
    Postprocess,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::GenData => "gen-data",
            Command::Invert => "invert",
            Command::CarlemanCheck => "carleman-check",
            Command::StabilityProbe => "stability-probe",
            Command::Postprocess => "postprocess",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] cylwave_core::Error),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    /// SHA-256 of the effective configuration rendered as TOML.
    config_hash: String,
    seed: u64,
    threads: usize,
    status: &'a str,
    wall_time_s: Option<f64>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let text = toml::to_string(cfg).expect("configuration serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, cmd: Command, status: &str, wall: Option<f64>) -> CliResult<()> {
    let m = Manifest {
        tool: "cylwave",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cmd.name(),
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        status,
        wall_time_s: wall,
    };
    write_json(&cfg.out_path(&format!("manifest-{}.json", cmd.name())), &m)
}

/// Runs one subcommand with manifest bookkeeping.
pub fn dispatch(cmd: Command, cfg: &RunConfig) -> CliResult<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let start = Instant::now();
    write_manifest(cfg, cmd, "running", None)?;
    let result = match cmd {
        Command::Forward => forward(cfg),
        Command::GenData => gen_data(cfg),
        Command::Invert => run_invert(cfg),
        Command::CarlemanCheck => carleman_check(cfg),
        Command::StabilityProbe => stability_probe(cfg),
        Command::Postprocess => run_postprocess(cfg),
    };
    let status = if result.is_ok() { "ok" } else { "failed" };
    write_manifest(cfg, cmd, status, Some(start.elapsed().as_secs_f64()))?;
    result
}

fn forward_problem(cfg: &RunConfig, grid: Grid3, with_initial: bool) -> CliResult<ForwardProblem> {
    let zero = ScalarField3::constant(grid, 0.0);
    let theta0 = if with_initial { cfg.initial.sample(&grid) } else { zero.clone() };
    Ok(ForwardProblem::new(grid, cfg.time.tau, cfg.time.t_final, cfg.pulse(), cfg.boundary, theta0, zero)?)
}

fn acquisition(cfg: &RunConfig) -> Acquisition {
    Acquisition {
        tau: cfg.time.tau,
        t_final: cfg.time.t_final,
        pulse: cfg.pulse(),
        bc: cfg.boundary,
        theta0: cfg.initial.clone(),
        theta1: cylwave_core::InitialProfile::Zero,
    }
}

/// The known part of the model: background space part plus the time part.
fn known_model(cfg: &RunConfig, grid: &Grid3) -> CliResult<ConductivityModel> {
    let spec = ModelSpec {
        phantom: Phantom::uniform(cfg.phantom.background),
        time_part: cfg.time_part(),
        inner: Some(cfg.grid.inner),
    };
    Ok(spec.sample(grid)?)
}

fn write_record(cfg: &RunConfig, stem: &str, rec: &BoundaryRecord) -> CliResult<()> {
    io::write_record_raw(&cfg.out_path(&format!("{stem}.raw")), rec)?;
    io::write_record_csv(&cfg.out_path(&format!("{stem}.csv")), rec)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ForwardSummary {
    steps: usize,
    tau_max: f64,
    record_nodes: usize,
    max_abs_record: f64,
    snapshots: usize,
}

fn forward(cfg: &RunConfig) -> CliResult<()> {
    let grid = cfg.grid()?;
    let model = cfg.truth().sample(&grid)?;
    let problem = forward_problem(cfg, grid, true)?;
    let mode = if cfg.snapshot_stride > 0 { HistoryMode::Every(cfg.snapshot_stride) } else { HistoryMode::None };
    let (hist, rec) = solve_forward(&model, &problem, mode)?;
    write_record(cfg, "record", &rec)?;
    for s in 0..hist.snapshot_count() {
        let field = ScalarField3::new(grid, hist.snapshot(s).to_vec())?;
        io::write_vtk(&cfg.out_path(&format!("snapshots/u_{:06}.vtk", s * hist.stride)), &field, "u")?;
    }
    let summary = ForwardSummary {
        steps: problem.steps,
        tau_max: cylwave_core::cfl_check(&model, grid.h, problem.tau).tau_max,
        record_nodes: rec.node_count(),
        max_abs_record: rec.samples.iter().fold(0.0, |m, v| m.max(v.abs())),
        snapshots: hist.snapshot_count(),
    };
    write_json(&cfg.out_path("forward_summary.json"), &summary)
}

#[derive(Debug, Serialize)]
struct DataSummary {
    refine: usize,
    noise: f64,
    seed: u64,
    steps: usize,
    record_nodes: usize,
    true_max_on_mask: f64,
}

fn gen_data(cfg: &RunConfig) -> CliResult<()> {
    let grid = cfg.grid()?;
    let truth = cfg.truth();
    let clean = generate_data(&truth, &grid, cfg.data.refine, &acquisition(cfg))?;
    let noisy = add_noise(&clean, cfg.data.noise, cfg.seed)?;
    write_record(cfg, "data", &noisy)?;
    let c_true = truth.sample(&grid)?;
    io::write_vtk(&cfg.out_path("c_true.vtk"), c_true.space_part(), "c")?;
    let summary = DataSummary {
        refine: cfg.data.refine,
        noise: cfg.data.noise,
        seed: cfg.seed,
        steps: noisy.steps,
        record_nodes: noisy.node_count(),
        true_max_on_mask: c_true.space_part().max_on(&cfg.mask(&grid)?).0,
    };
    write_json(&cfg.out_path("data_summary.json"), &summary)
}

fn data_path(cfg: &RunConfig) -> PathBuf {
    cfg.data.path.as_ref().map(PathBuf::from).unwrap_or_else(|| cfg.out_path("data.raw"))
}

fn read_data(cfg: &RunConfig, grid: &Grid3) -> CliResult<BoundaryRecord> {
    let path = data_path(cfg);
    let rec = if path.extension().is_some_and(|e| e == "csv") {
        io::read_record_csv(&path, *grid, cfg.time.tau)?
    } else {
        io::read_record_raw(&path)?
    };
    if !rec.grid.same_geometry(grid) {
        return Err(cylwave_core::Error::DataMismatch(format!(
            "{} was recorded on a {:?} grid, the configuration describes {:?}",
            path.display(),
            rec.grid.n,
            grid.n
        ))
        .into());
    }
    if (rec.tau - cfg.time.tau).abs() > 1e-12 * cfg.time.tau {
        return Err(cylwave_core::Error::DataMismatch(format!("data step {} differs from tau {}", rec.tau, cfg.time.tau)).into());
    }
    Ok(rec)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvertSummary {
    pub iterations: usize,
    pub stop: StopReason,
    pub j_initial: f64,
    pub j_final: f64,
    pub max_c: f64,
    pub argmax: [f64; 3],
    /// Distance from the argmax to the nearest phantom bump centre.
    pub argmax_distance: f64,
    pub reference_max: f64,
    pub contrast_error_pct: f64,
}

fn run_invert(cfg: &RunConfig) -> CliResult<()> {
    let grid = cfg.grid()?;
    let mask = cfg.mask(&grid)?;
    let data = read_data(cfg, &grid)?;
    let known = known_model(cfg, &grid)?;
    let problem = forward_problem(cfg, grid, true)?;
    let (c, trace) = invert(&cfg.inversion, &data, &known, &problem, &mask)?;

    io::write_trace_csv(&cfg.out_path("trace.csv"), &trace)?;
    io::write_vtk(&cfg.out_path("c_final.vtk"), &c, "c")?;
    io::write_field_raw(&cfg.out_path("c_final.raw"), &c)?;
    let post = postprocess(&c, cfg.postprocess.fraction, cfg.inversion.bounds)?;
    io::write_vtk(&cfg.out_path("c_post.vtk"), &post, "c")?;

    let (max_c, at) = c.max_on(&mask);
    let x = grid.coords(at);
    let argmax_distance = cfg
        .phantom
        .bumps
        .iter()
        .map(|b| ((0..3).map(|k| (x[k] - b.center[k]).powi(2)).sum::<f64>()).sqrt())
        .fold(f64::INFINITY, f64::min);
    let first = trace.entries.first().expect("trace has an initial entry");
    let last = trace.entries.last().expect("trace has an initial entry");
    let summary = InvertSummary {
        iterations: trace.iterations(),
        stop: trace.stop,
        j_initial: first.j,
        j_final: last.j,
        max_c,
        argmax: x,
        argmax_distance,
        reference_max: cfg.inversion.reference_max,
        contrast_error_pct: last.contrast_error_pct,
    };
    write_json(&cfg.out_path("summary.json"), &summary)
}

#[derive(Debug, Serialize)]
struct CarlemanOutput {
    coefficient: CarlemanCoefficient,
    hypotheses: HypothesisReport,
    hypotheses_pass: bool,
    chain: Option<ChainReport>,
    /// Why the admissible chain could not be formed, if it could not.
    chain_error: Option<String>,
}

fn carleman_check(cfg: &RunConfig) -> CliResult<()> {
    let c = &cfg.carleman;
    let (model, theta0) = match c.coefficient {
        CarlemanCoefficient::MonotoneFixture => {
            (carleman::monotone_fixture_model(), carleman::monotone_fixture_theta0(&c.setup))
        }
        CarlemanCoefficient::Phantom => (cfg.truth(), cfg.initial.clone()),
    };
    let hypotheses = check_hypotheses(&model, &theta0, &c.setup, c.resolution)?;
    let (chain, chain_error) = match carleman::admissible_chain(&c.setup, &model, c.samples, cfg.seed) {
        Ok(r) => (Some(r), None),
        Err(e) if e.is_numerical() => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };

    let mut csv = String::from("condition,pass,margin,x1,x2,x3,t\n");
    for r in hypotheses.conditions() {
        let w = r.witness;
        csv.push_str(&format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.name, r.pass, r.margin, w.x[0], w.x[1], w.x[2], w.t
        ));
    }
    if let Some(ch) = &chain {
        for (name, w, m) in [
            ("j_bound", ch.j_scan.j_witness, ch.j_scan.min_j_lower_bound),
            ("a2", ch.j_scan.a2_witness, ch.j_scan.min_a2_at_gradpsi),
        ] {
            csv.push_str(&format!(
                "{name},{},{m:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                m > 0.0,
                w.x[0],
                w.x[1],
                w.x[2],
                w.t
            ));
        }
    }
    std::fs::write(cfg.out_path("carleman_witnesses.csv"), csv)?;
    let out = CarlemanOutput {
        coefficient: c.coefficient,
        hypotheses_pass: hypotheses.all_pass(),
        hypotheses,
        chain,
        chain_error,
    };
    write_json(&cfg.out_path("carleman_report.json"), &out)
}

#[derive(Debug, Serialize)]
struct ProbeOutput {
    sweep: SweepReport,
    theorem_range: [f64; 2],
}

fn stability_probe(cfg: &RunConfig) -> CliResult<()> {
    let sweep = cfg.probe.run()?;
    write_json(&cfg.out_path("stability_probe.json"), &ProbeOutput { sweep, theorem_range: [0.0, 1.0] })
}

fn run_postprocess(cfg: &RunConfig) -> CliResult<()> {
    let input = cfg.postprocess.input.as_ref().map(PathBuf::from).unwrap_or_else(|| cfg.out_path("c_final.raw"));
    let c = io::read_field_raw(&input)?;
    let post = postprocess(&c, cfg.postprocess.fraction, cfg.inversion.bounds)?;
    io::write_vtk(&cfg.out_path("c_post.vtk"), &post, "c")?;
    io::write_field_raw(&cfg.out_path("c_post.raw"), &post)?;
    Ok(())
}
