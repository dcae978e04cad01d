//! Command-line front end: `synth`, `estimate`, `eval` and `compare`.
//!
//! Every command that writes a directory also writes `config.txt` holding the
//! fully resolved configuration, except `synth`, whose `meta.txt` already
//! carries the resolved spec. Precedence is flags > file > defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::contact::{segment_phases, SegmentConfig};
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig, Mode};
use crate::eval::{evaluate, EvalConfig};
use crate::io::{fmt_f64, read_text, read_tum, write_text, KeyValues, TimedPose};
use crate::robot_model::{parse_model, ParseOptions, RobotModel};
use crate::synthdata::{generate, read_log, write_log, GaitSpec, Shape, LOG_FILES};

pub const OUTPUT_ROOT_ENV: &str = "LEGGED_FG_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "legged-fg-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "legged-fg", version, about = "Factor-graph state estimation for legged robots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a log directory from a gait spec file.
    Synth(SynthArgs),
    /// Run an estimator on a log directory.
    Estimate(EstimateArgs),
    /// Align an estimate to a reference and report APE and RPE.
    Eval(EvalArgs),
    /// Run both estimators over every seed and shape of a manifest.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `key = value` gait spec; missing keys take the robot's defaults.
    pub spec: PathBuf,
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spec override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub log: PathBuf,
    /// URDF file or builtin model name (a1, humanoid).
    pub model: String,
    #[arg(long)]
    pub mode: Option<Mode>,
    /// `key = value` estimator config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Config override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory; defaults to `<root>/<log name>-<mode>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TUM file or log directory (its `groundtruth.txt`).
    pub reference: PathBuf,
    /// TUM file or estimate directory (its `estimate.txt`).
    pub estimate: PathBuf,
    /// RPE pair spacing, s.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long)]
    pub translation_only: bool,
    /// Largest accepted timestamp offset when pairing samples, s.
    #[arg(long)]
    pub max_offset: Option<f64>,
    /// Output directory; defaults to `eval/` next to the estimate file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub manifest: PathBuf,
    /// Output directory; overrides the manifest's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed list, overrides the manifest's `seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Manifest override `key=value` (sectioned keys as `section.key`),
    /// repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Singular(_) | Error::GaugeDeficient { .. } | Error::NotPositiveDefinite(_) => {
            EXIT_NOT_CONVERGED
        }
        _ => EXIT_VALIDATION,
    }
}

/// Text for stdout plus the exit code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub text: String,
    pub code: i32,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            print!("{}", out.text);
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
    }
}

/// `<root>` for default output directories.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// A URDF path (relative to `base`) if such a file exists, else a builtin
/// model name.
pub fn load_model(name: &str, base: &Path) -> Result<RobotModel> {
    let path = base.join(name);
    if path.is_file() {
        let text = read_text(&path)?;
        return parse_model(&text, &ParseOptions::default());
    }
    if ["a1", "humanoid"].contains(&name) {
        return RobotModel::builtin(name);
    }
    Err(Error::io(
        path,
        std::io::Error::new(std::io::ErrorKind::NotFound, "model file not found"),
    ))
}

/// `key=value` flags as a key-value set.
pub fn parse_overrides(source: &str, items: &[String]) -> Result<KeyValues> {
    let mut kv = KeyValues::new(source);
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::validation(item.as_str(), "expected KEY=VALUE"))?;
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

fn merged(base: &KeyValues, over: &KeyValues) -> KeyValues {
    let mut kv = base.clone();
    for (k, v) in over.iter() {
        kv.set(k, v);
    }
    kv
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new(""))
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome> {
    let mut kv = KeyValues::load(&a.spec)?;
    kv = merged(&kv, &parse_overrides("--set", &a.overrides)?);
    if let Some(seed) = a.seed {
        kv.set("seed", seed);
    }
    let spec = GaitSpec::from_key_values(&kv)?;
    let model = load_model(&spec.robot, parent_dir(&a.spec))?;
    let log = generate(&spec, &model)?;
    write_log(&log, &a.out)?;

    let times: Vec<f64> = log.ground_truth.iter().map(|s| s.t).collect();
    let phases = segment_phases(&log.contacts, &times, &SegmentConfig::default())?;
    let mut text = String::new();
    let _ = writeln!(text, "wrote {} ({})", a.out.display(), LOG_FILES.join(", "));
    let _ = writeln!(text, "robot = {}", spec.robot);
    let _ = writeln!(text, "gait = {} shape = {} seed = {}", spec.gait, spec.shape, spec.seed);
    let _ = writeln!(text, "duration = {} s", spec.duration);
    let _ = writeln!(text, "imu_samples = {}", log.imu.len());
    let _ = writeln!(text, "keyframes = {}", times.len());
    for (leg, p) in phases.iter().enumerate() {
        let _ = writeln!(text, "leg {leg} ({}): {} phases", model.legs[leg].foot_link, p.len());
    }
    Ok(Outcome { text, code: EXIT_OK })
}

/// Defaults for the model, then the config file, then `--set`, then `--mode`.
pub fn resolve_estimator_config(
    model: &RobotModel,
    file: Option<&Path>,
    overrides: &KeyValues,
    mode: Option<Mode>,
) -> Result<EstimatorConfig> {
    let mut cfg = EstimatorConfig::for_model(model);
    if let Some(path) = file {
        cfg.apply(&KeyValues::load(path)?)?;
    }
    cfg.apply(overrides)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Outcome> {
    let model = load_model(&a.model, Path::new(""))?;
    let overrides = parse_overrides("--set", &a.overrides)?;
    let cfg = resolve_estimator_config(&model, a.config.as_deref(), &overrides, a.mode)?;
    let log = read_log(&a.log)?;
    let est = estimate(&log, &model, &cfg)?;

    let out = a.out.clone().unwrap_or_else(|| {
        let name = a
            .log
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "log".into());
        output_root().join(format!("{name}-{}", cfg.mode))
    });
    let mut resolved = KeyValues::new("resolved config");
    resolved.set("log", a.log.display());
    resolved.set("model", &a.model);
    let resolved = merged(&resolved, &cfg.to_key_values());
    write_text(&out.join("estimate.txt"), &est.to_tum())?;
    write_text(&out.join("report.txt"), &est.report_text())?;
    write_text(&out.join("config.txt"), &resolved.to_text())?;

    let converged = est.report.converged();
    let mut text = String::new();
    let _ = writeln!(text, "wrote {}", out.display());
    let _ = writeln!(text, "mode = {}", cfg.mode);
    let _ = writeln!(text, "converged = {converged}");
    let _ = writeln!(text, "termination = {}", est.report.termination.as_str());
    let _ = writeln!(text, "final_objective = {}", fmt_f64(est.final_objective));
    let code = if converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
    Ok(Outcome { text, code })
}

fn trajectory_file(path: &Path, file_in_dir: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file_in_dir)
    } else {
        path.to_path_buf()
    }
}

fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    let ref_path = trajectory_file(&a.reference, "groundtruth.txt");
    let est_path = trajectory_file(&a.estimate, "estimate.txt");
    let cfg = EvalConfig {
        delta: a.delta,
        translation_only: a.translation_only,
        max_offset: a.max_offset,
    };
    if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
        return Err(Error::validation("delta", "must be > 0"));
    }
    let reference = read_tum(&ref_path)?;
    let estimate: Vec<TimedPose> = read_tum(&est_path)?;
    let report = evaluate(&reference, &estimate, &cfg)?;

    let out = a
        .out
        .clone()
        .unwrap_or_else(|| parent_dir(&est_path).join("eval"));
    let mut resolved = KeyValues::new("resolved config");
    resolved.set("reference", ref_path.display());
    resolved.set("estimate", est_path.display());
    resolved.set("delta", fmt_f64(cfg.delta));
    resolved.set("translation_only", cfg.translation_only);
    resolved.set(
        "max_offset",
        cfg.max_offset.map(fmt_f64).unwrap_or_else(|| "auto".into()),
    );
    let metrics = report.to_key_values().to_text();
    write_text(&out.join("metrics.txt"), &metrics)?;
    write_text(&out.join("series.txt"), &report.series_text())?;
    write_text(&out.join("config.txt"), &resolved.to_text())?;
    Ok(Outcome {
        text: format!("wrote {}\n{metrics}", out.display()),
        code: EXIT_OK,
    })
}

/// A resolved experiment manifest.
///
/// Top-level keys: `model`, `seeds`, `shapes`, `output`, `floor`. Sections:
/// `[gait]` (gait spec keys), `[estimator]` (shared estimator keys),
/// `[proposed]` and `[baseline]` (per-mode overlays), `[eval]` (`delta`,
/// `translation_only`). Relative paths resolve against the manifest's
/// directory.
#[derive(Clone, Debug)]
pub struct Manifest {
    /// As written in the manifest.
    pub model_name: String,
    pub model: RobotModel,
    pub gait: KeyValues,
    pub proposed: EstimatorConfig,
    pub baseline: EstimatorConfig,
    pub seeds: Vec<u64>,
    pub shapes: Vec<Shape>,
    pub output: PathBuf,
    pub eval: EvalConfig,
    /// Baseline medians below this give no improvement figure.
    pub floor: f64,
}

const MANIFEST_KEYS: [&str; 5] = ["model", "seeds", "shapes", "output", "floor"];
const MANIFEST_SECTIONS: [&str; 5] = ["gait", "estimator", "proposed", "baseline", "eval"];

impl Manifest {
    pub fn load(path: &Path, overrides: &KeyValues) -> Result<Manifest> {
        let kv = merged(&KeyValues::load(path)?, overrides);
        Manifest::from_key_values(&kv, parent_dir(path))
    }

    pub fn from_key_values(kv: &KeyValues, base: &Path) -> Result<Manifest> {
        for k in kv.keys() {
            let known = match k.split_once('.') {
                Some((section, _)) => MANIFEST_SECTIONS.contains(&section),
                None => MANIFEST_KEYS.contains(&k),
            };
            if !known {
                return Err(Error::validation(k, "unknown manifest key"));
            }
        }
        let model_name: String = kv.get_or("model", "a1".to_string())?;
        let model = load_model(&model_name, base)?;

        let seeds: Vec<u64> = match kv.get_str("seeds") {
            Some(s) => s
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::validation("seeds", format!("`{t}` is not a seed")))
                })
                .collect::<Result<_>>()?,
            None => vec![1],
        };
        if seeds.is_empty() {
            return Err(Error::validation("seeds", "must list at least one seed"));
        }
        let shapes: Vec<Shape> = match kv.get_str("shapes") {
            Some(s) => s.split_whitespace().map(str::parse).collect::<Result<_>>()?,
            None => Shape::all().to_vec(),
        };
        if shapes.is_empty() {
            return Err(Error::validation("shapes", "must list at least one shape"));
        }

        let gait = kv.section("gait");
        for key in ["robot", "shape", "seed"] {
            if gait.contains(key) {
                return Err(Error::validation(
                    format!("gait.{key}"),
                    "set by the manifest's model, shapes and seeds",
                ));
            }
        }
        let mut shared = EstimatorConfig::for_model(&model);
        shared.apply(&kv.section("estimator"))?;
        let per_mode = |name: &str, mode: Mode| -> Result<EstimatorConfig> {
            let overlay = kv.section(name);
            if overlay.contains("mode") {
                return Err(Error::validation(format!("{name}.mode"), "fixed by the section"));
            }
            let mut c = shared.clone();
            c.apply(&overlay)?;
            c.mode = mode;
            c.validate()?;
            Ok(c)
        };
        let proposed = per_mode("proposed", Mode::Proposed)?;
        let baseline = per_mode("baseline", Mode::Baseline)?;

        let ev = kv.section("eval");
        if let Some(k) = ev.keys().find(|k| !["delta", "translation_only"].contains(k)) {
            return Err(Error::validation(format!("eval.{k}"), "unknown key"));
        }
        let eval = EvalConfig {
            delta: ev.get_or("delta", 1.0)?,
            translation_only: ev.get_or("translation_only", false)?,
            max_offset: None,
        };
        if !(eval.delta > 0.0 && eval.delta.is_finite()) {
            return Err(Error::validation("eval.delta", "must be > 0"));
        }
        let floor: f64 = kv.get_or("floor", 1e-6)?;
        if !(floor >= 0.0) {
            return Err(Error::validation("floor", "must be ≥ 0"));
        }
        let output = match kv.get_str("output") {
            Some(o) => base.join(o),
            None => output_root().join("compare"),
        };
        let m = Manifest {
            model_name,
            model,
            gait,
            proposed,
            baseline,
            seeds,
            shapes,
            output,
            eval,
            floor,
        };
        for &shape in &m.shapes {
            m.gait_spec(shape, m.seeds[0])?;
        }
        Ok(m)
    }

    pub fn gait_spec(&self, shape: Shape, seed: u64) -> Result<GaitSpec> {
        let mut kv = self.gait.clone();
        kv.set("robot", &self.model_name);
        kv.set("shape", shape);
        kv.set("seed", seed);
        GaitSpec::from_key_values(&kv)
    }

    /// Everything that determines the results, defaults expanded. The output
    /// directory is left out so that copies of a run compare equal.
    pub fn resolved(&self) -> Result<KeyValues> {
        let mut kv = KeyValues::new("resolved manifest");
        kv.set("model", &self.model_name);
        kv.set("seeds", join(&self.seeds));
        kv.set("shapes", join(&self.shapes));
        kv.set("floor", fmt_f64(self.floor));
        for &shape in &self.shapes {
            for (k, v) in self.gait_spec(shape, self.seeds[0])?.to_key_values().iter() {
                if !["robot", "shape", "seed"].contains(&k) {
                    kv.set(format!("gait.{k}"), v);
                }
            }
        }
        for (name, cfg) in [("proposed", &self.proposed), ("baseline", &self.baseline)] {
            for (k, v) in cfg.to_key_values().iter() {
                kv.set(format!("{name}.{k}"), v);
            }
        }
        kv.set("eval.delta", fmt_f64(self.eval.delta));
        kv.set("eval.translation_only", self.eval.translation_only);
        Ok(kv)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Ok,
    NotConverged,
    Failed(String),
}

/// One estimator run on one synthesized log.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub shape: Shape,
    pub seed: u64,
    pub mode: Mode,
    pub status: CellStatus,
    pub ape: f64,
    pub rpe: f64,
    pub iterations: usize,
    pub final_objective: f64,
}

impl Cell {
    fn failed(shape: Shape, seed: u64, mode: Mode, e: &Error) -> Cell {
        Cell {
            shape,
            seed,
            mode,
            status: CellStatus::Failed(e.to_string().replace('\n', " ")),
            ape: f64::NAN,
            rpe: f64::NAN,
            iterations: 0,
            final_objective: f64::NAN,
        }
    }

    pub fn has_metrics(&self) -> bool {
        !matches!(self.status, CellStatus::Failed(_))
    }
}

/// Medians over the seeds of one shape; `None` when every cell failed.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub shape: Shape,
    pub baseline_ape: Option<f64>,
    pub baseline_rpe: Option<f64>,
    pub proposed_ape: Option<f64>,
    pub proposed_rpe: Option<f64>,
}

/// `100·(b − p)/b`, or `None` below the floor.
pub fn improvement(baseline: Option<f64>, proposed: Option<f64>, floor: f64) -> Option<f64> {
    match (baseline, proposed) {
        (Some(b), Some(p)) if b >= floor && b > 0.0 => Some(100.0 * (b - p) / b),
        _ => None,
    }
}

impl CompareRow {
    pub fn ape_improvement(&self, floor: f64) -> Option<f64> {
        improvement(self.baseline_ape, self.proposed_ape, floor)
    }

    pub fn rpe_improvement(&self, floor: f64) -> Option<f64> {
        improvement(self.baseline_rpe, self.proposed_rpe, floor)
    }

    /// Mean of the APE and RPE improvements.
    pub fn improvement(&self, floor: f64) -> Option<f64> {
        Some(0.5 * (self.ape_improvement(floor)? + self.rpe_improvement(floor)?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareResult {
    pub cells: Vec<Cell>,
    pub rows: Vec<CompareRow>,
    pub floor: f64,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn run_cells(m: &Manifest, shape: Shape, seed: u64) -> Vec<Cell> {
    let modes = [(Mode::Baseline, &m.baseline), (Mode::Proposed, &m.proposed)];
    let log = match m
        .gait_spec(shape, seed)
        .and_then(|spec| generate(&spec, &m.model))
    {
        Ok(l) => l,
        Err(e) => return modes.iter().map(|(mode, _)| Cell::failed(shape, seed, *mode, &e)).collect(),
    };
    let reference = log.ground_truth_poses();
    modes
        .iter()
        .map(|(mode, cfg)| {
            let run = estimate(&log, &m.model, cfg).and_then(|est| {
                let r = evaluate(&reference, &est.poses(), &m.eval)?;
                Ok((est, r))
            });
            match run {
                Ok((est, r)) => Cell {
                    shape,
                    seed,
                    mode: *mode,
                    status: if est.report.converged() {
                        CellStatus::Ok
                    } else {
                        CellStatus::NotConverged
                    },
                    ape: r.ape_stats.rmse,
                    rpe: r.rpe_stats.rmse,
                    iterations: est.total_iterations,
                    final_objective: est.final_objective,
                },
                Err(e) => Cell::failed(shape, seed, *mode, &e),
            }
        })
        .collect()
}

/// Synthesizes, estimates and evaluates every (shape, seed) cell in order.
pub fn run_compare(m: &Manifest) -> CompareResult {
    let mut cells = Vec::new();
    for &shape in &m.shapes {
        for &seed in &m.seeds {
            cells.extend(run_cells(m, shape, seed));
        }
    }
    let rows = m
        .shapes
        .iter()
        .map(|&shape| {
            let stat = |mode: Mode, f: fn(&Cell) -> f64| {
                let v: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.shape == shape && c.mode == mode && c.has_metrics())
                    .map(f)
                    .collect();
                median(&v)
            };
            CompareRow {
                shape,
                baseline_ape: stat(Mode::Baseline, |c| c.ape),
                baseline_rpe: stat(Mode::Baseline, |c| c.rpe),
                proposed_ape: stat(Mode::Proposed, |c| c.ape),
                proposed_rpe: stat(Mode::Proposed, |c| c.rpe),
            }
        })
        .collect();
    CompareResult {
        cells,
        rows,
        floor: m.floor,
    }
}

fn cell_text(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "failed".into())
}

fn pct_text(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

impl CompareResult {
    /// Medians over seeds; the improvement column is the mean of the APE and
    /// RPE relative improvements.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<10} {:>14} {:>14} {:>14} {:>14} {:>14}",
            "shape", "baseline_ape", "baseline_rpe", "proposed_ape", "proposed_rpe", "improvement_%"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>14} {:>14} {:>14} {:>14} {:>14}",
                r.shape.name(),
                cell_text(r.baseline_ape),
                cell_text(r.baseline_rpe),
                cell_text(r.proposed_ape),
                cell_text(r.proposed_rpe),
                pct_text(r.improvement(self.floor)),
            );
        }
        let mean = |f: &dyn Fn(&CompareRow) -> Option<f64>| {
            let v: Vec<f64> = self.rows.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let _ = writeln!(
            s,
            "# mean improvement %: ape {} rpe {}",
            pct_text(mean(&|r| r.ape_improvement(self.floor))),
            pct_text(mean(&|r| r.rpe_improvement(self.floor))),
        );
        let failed = self.cells.iter().filter(|c| !c.has_metrics()).count();
        let stalled = self
            .cells
            .iter()
            .filter(|c| c.status == CellStatus::NotConverged)
            .count();
        let _ = writeln!(s, "# cells: {} failed: {failed} not_converged: {stalled}", self.cells.len());
        s
    }

    /// One line per cell.
    pub fn series(&self) -> String {
        let mut s = String::from("# shape seed mode status ape_rmse rpe_rmse iterations final_objective\n");
        for c in &self.cells {
            let status = match &c.status {
                CellStatus::Ok => "ok",
                CellStatus::NotConverged => "not_converged",
                CellStatus::Failed(_) => "failed",
            };
            let _ = write!(
                s,
                "{} {} {} {status} {} {} {} {}",
                c.shape.name(),
                c.seed,
                c.mode,
                fmt_f64(c.ape),
                fmt_f64(c.rpe),
                c.iterations,
                fmt_f64(c.final_objective)
            );
            if let CellStatus::Failed(msg) = &c.status {
                let _ = write!(s, " # {msg}");
            }
            s.push('\n');
        }
        s
    }

    /// Shapes where the proposed median is at most the baseline median.
    pub fn proposed_wins(&self, metric: fn(&CompareRow) -> (Option<f64>, Option<f64>)) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(metric(r), (Some(b), Some(p)) if p <= b))
            .count()
    }
}

/// Writes `summary.txt`, `series.txt` and `config.txt` into `out`.
pub fn write_compare(m: &Manifest, result: &CompareResult, out: &Path) -> Result<()> {
    write_text(&out.join("summary.txt"), &result.table())?;
    write_text(&out.join("series.txt"), &result.series())?;
    write_text(&out.join("config.txt"), &m.resolved()?.to_text())
}

fn cmd_compare(a: &CompareArgs) -> Result<Outcome> {
    let mut overrides = parse_overrides("--set", &a.overrides)?;
    if let Some(seeds) = &a.seeds {
        overrides.set("seeds", join(seeds));
    }
    let mut m = Manifest::load(&a.manifest, &overrides)?;
    if let Some(out) = &a.out {
        m.output = out.clone();
    }
    let result = run_compare(&m);
    write_compare(&m, &result, &m.output)?;
    Ok(Outcome {
        text: format!("wrote {}\n{}", m.output.display(), result.table()),
        code: EXIT_OK,
    })
}
