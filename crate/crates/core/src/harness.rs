//! Configuration, run orchestration and report files.
//!
//! A run reads a TOML file with a required `[run]` table and optional
//! tables for every module:
//!
//! ```toml
//! [run]
//! scenario = "stall"          # bumpy | stall | stall_lite | wind_shear | zero | csv
//! algorithms = ["smpc", "mpc_cotc", "mpc_nocotc", "cwf"]
//! duration = 14.0             # s
//! seed = 7                    # optional, default 0
//! ts = 0.05                   # optional
//! out_dir = "out"             # optional
//! strict = false              # optional
//! # trace = "recording.csv"   # required for scenario = "csv"
//!
//! [stall]
//! peak_lateral = 8.0
//!
//! [mpc]
//! n_p = 30
//! ```
//!
//! Unknown keys are rejected everywhere. Optional tables are `bumpy`,
//! `stall`, `mpc`, `supervisor`, `cwf`, `vestibular`, `limits` and
//! `geometry`; anything they leave out keeps its default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cwf::{run_cwf, ClampEvent, CwfConfig, CwfError};
use crate::kinematics::{
    check_limits, leg_lengths, leg_rate_jacobian, ActuatorLimits, KinematicsError, PlatformGeometry, Violation,
};
use crate::metrics::{evaluate, improvement, MetricsReport, CHANNELS};
use crate::mpc::{MpcConfig, MpcLimits, MpcWeights};
use crate::prediction::{augment, build_integrated, discretize, DiscreteModel, PredictionError};
use crate::scenarios::{
    gen_bumpy, gen_horizontal_stall, gen_zero, BumpyParams, ScenarioError, ScenarioTrace, StallParams,
};
use crate::supervisor::{
    replay, run_closed_loop, ClosedLoopTrace, LoopSetup, MpcAlgorithm, SupervisorConfig, SupervisorError,
};
use crate::vestibular::{assemble_vestibular, VestibularError, VestibularModel, VestibularParams};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Supervisor(#[from] SupervisorError),
    #[error(transparent)]
    Cwf(#[from] CwfError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Vestibular(#[from] VestibularError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("strict mode: {count} limit violations ({summary})")]
    Strict { count: usize, summary: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Smpc,
    MpcCotc,
    MpcNocotc,
    Cwf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Smpc, Algorithm::MpcCotc, Algorithm::MpcNocotc, Algorithm::Cwf];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Smpc => "smpc",
            Algorithm::MpcCotc => "mpc_cotc",
            Algorithm::MpcNocotc => "mpc_nocotc",
            Algorithm::Cwf => "cwf",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        Self::ALL.into_iter().find(|a| a.as_str() == s.trim()).ok_or_else(|| {
            HarnessError::Config(format!("unknown algorithm `{s}` (expected smpc, mpc_cotc, mpc_nocotc or cwf)"))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Bumpy,
    Stall,
    StallLite,
    WindShear,
    Zero,
    Csv,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let v = toml::Value::String(s.trim().to_string());
        ScenarioKind::deserialize(v).map_err(|_| {
            HarnessError::Config(format!(
                "unknown scenario `{s}` (expected bumpy, stall, stall_lite, wind_shear, zero or csv)"
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub scenario: ScenarioKind,
    pub algorithms: Vec<Algorithm>,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ts")]
    pub ts: f64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub trace: Option<PathBuf>,
}

fn default_ts() -> f64 {
    0.05
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub bumpy: BumpyParams,
    #[serde(default)]
    pub stall: Option<StallParams>,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub supervisor: SupervisorConfig,
    #[serde(default)]
    pub cwf: CwfConfig,
    #[serde(default)]
    pub vestibular: VestibularParams,
    #[serde(default)]
    pub limits: ActuatorLimits,
    #[serde(default)]
    pub geometry: PlatformGeometry,
}

impl RunConfig {
    /// A config with every optional table at its default.
    pub fn new(scenario: ScenarioKind, algorithms: Vec<Algorithm>, duration: f64) -> Self {
        Self {
            run: RunSection {
                scenario,
                algorithms,
                duration,
                seed: 0,
                ts: default_ts(),
                out_dir: default_out(),
                strict: false,
                trace: None,
            },
            bumpy: BumpyParams::default(),
            stall: None,
            mpc: MpcConfig::default(),
            supervisor: SupervisorConfig::default(),
            cwf: CwfConfig::default(),
            vestibular: VestibularParams::default(),
            limits: ActuatorLimits::default(),
            geometry: PlatformGeometry::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let value: toml::Table = text.parse()?;
        let run = value.get("run").and_then(|v| v.as_table()).ok_or(HarnessError::MissingKey("run"))?;
        for (key, name) in
            [("scenario", "run.scenario"), ("algorithms", "run.algorithms"), ("duration", "run.duration")]
        {
            if !run.contains_key(key) {
                return Err(HarnessError::MissingKey(name));
            }
        }
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let r = &self.run;
        if r.algorithms.is_empty() {
            return Err(HarnessError::Config("run.algorithms is empty".into()));
        }
        if !(r.duration > 0.0 && r.duration.is_finite()) {
            return Err(HarnessError::Config(format!("run.duration = {} must be positive", r.duration)));
        }
        if !(r.ts > 0.0 && r.ts.is_finite() && r.ts < r.duration) {
            return Err(HarnessError::Config(format!("run.ts = {}", r.ts)));
        }
        if r.scenario == ScenarioKind::Csv && r.trace.is_none() {
            return Err(HarnessError::MissingKey("run.trace"));
        }
        MpcWeights::from_config(&self.mpc)
            .validate(crate::prediction::OUTPUTS, crate::prediction::INPUTS)
            .map_err(|e| HarnessError::Config(format!("mpc: {e}")))?;
        if !(self.mpc.leg_rate_fraction > 0.0 && self.mpc.leg_rate_fraction <= 1.0) || self.mpc.leg_margin < 0.0 {
            return Err(HarnessError::Config("mpc: leg_rate_fraction must be in (0, 1] and leg_margin >= 0".into()));
        }
        self.supervisor.validate()?;
        self.cwf.validate()?;
        self.vestibular.validate()?;
        self.limits.validate()?;
        self.geometry.validate(self.limits.leg_length)?;
        Ok(())
    }

    /// Stall parameters of the selected preset, with the run duration.
    pub fn stall_params(&self) -> StallParams {
        let base = match self.run.scenario {
            ScenarioKind::StallLite => StallParams::lite(),
            ScenarioKind::WindShear => StallParams::wind_shear(),
            _ => StallParams::default(),
        };
        StallParams { duration: self.run.duration, ..self.stall.unwrap_or(base) }
    }
}

/// Models and limits shared by every algorithm of a run.
#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub vestibular: VestibularModel,
    pub plant: DiscreteModel,
    pub loop_setup: LoopSetup,
    pub limits: ActuatorLimits,
    pub geometry: PlatformGeometry,
    pub cwf: CwfConfig,
}

pub fn build_setup(cfg: &RunConfig) -> Result<SimulationSetup, HarnessError> {
    let geometry = cfg.geometry.clone();
    let pose = geometry.neutral_pose();
    let jac = leg_rate_jacobian(&geometry, &pose)?;
    let legs = leg_lengths(&geometry, &pose)?;
    let vestibular = assemble_vestibular(&cfg.vestibular)?;
    let integrated = build_integrated(&vestibular, &jac, Vector3::zeros(), nalgebra::Matrix3::identity())?;
    let ts = cfg.run.ts;
    let plant = discretize(&integrated, ts)?;
    let aug = augment(&plant);
    let neutral: [f64; 6] = legs.into();
    let limits = MpcLimits::from_actuator(&cfg.limits, geometry.home_height, &neutral, &jac, &cfg.mpc, ts);
    Ok(SimulationSetup {
        vestibular,
        plant,
        loop_setup: LoopSetup {
            aug,
            limits,
            weights: MpcWeights::from_config(&cfg.mpc),
            mpc: cfg.mpc.clone(),
            supervisor: cfg.supervisor.clone(),
            home_height: geometry.home_height,
        },
        limits: cfg.limits.clone(),
        geometry,
        cwf: cfg.cwf.clone(),
    })
}

pub fn generate_scenario(cfg: &RunConfig, vestibular: &VestibularModel) -> Result<ScenarioTrace, HarnessError> {
    let r = &cfg.run;
    Ok(match r.scenario {
        ScenarioKind::Bumpy => gen_bumpy(r.seed, &BumpyParams { duration: r.duration, ..cfg.bumpy }, r.ts, vestibular)?,
        ScenarioKind::Stall => gen_horizontal_stall("stall", &cfg.stall_params(), r.ts, vestibular)?,
        ScenarioKind::StallLite => gen_horizontal_stall("stall_lite", &cfg.stall_params(), r.ts, vestibular)?,
        ScenarioKind::WindShear => gen_horizontal_stall("wind_shear", &cfg.stall_params(), r.ts, vestibular)?,
        ScenarioKind::Zero => gen_zero(r.duration, r.ts, vestibular)?,
        ScenarioKind::Csv => {
            let path = r.trace.as_ref().ok_or(HarnessError::MissingKey("run.trace"))?;
            let file = fs::File::open(path).map_err(io_err(path))?;
            let trace = ScenarioTrace::read_csv("csv", file, vestibular)?;
            if (trace.ts - r.ts).abs() > 1e-9 {
                return Err(HarnessError::Config(format!(
                    "trace sample time {} differs from run.ts {}",
                    trace.ts, r.ts
                )));
            }
            trace
        }
    })
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub trace: ClosedLoopTrace,
    pub metrics: MetricsReport,
    pub violations: Vec<Violation>,
    pub clamps: Vec<ClampEvent>,
    /// Wall time of the closed loop; reported on screen, never written to
    /// the result files.
    pub elapsed: Duration,
}

pub fn run_algorithm(
    setup: &SimulationSetup,
    scenario: &ScenarioTrace,
    algorithm: Algorithm,
) -> Result<AlgorithmRun, HarnessError> {
    let start = Instant::now();
    let reference = scenario.reference();
    let (trace, clamps) = match algorithm {
        Algorithm::Cwf => {
            let (commands, clamps) = run_cwf(
                &setup.cwf,
                &setup.limits,
                setup.geometry.home_height,
                scenario.ts,
                &scenario.acceleration,
                &scenario.angular_velocity,
            )?;
            (replay(&setup.plant, setup.geometry.home_height, &commands), clamps)
        }
        mpc => {
            let kind = match mpc {
                Algorithm::Smpc => MpcAlgorithm::Smpc,
                Algorithm::MpcCotc => MpcAlgorithm::Cotc,
                _ => MpcAlgorithm::NoCotc,
            };
            (run_closed_loop(&setup.loop_setup, &reference, kind)?, Vec::new())
        }
    };
    let elapsed = start.elapsed();
    let metrics = evaluate(&reference, &trace.perceived);
    let violations = check_limits(&trace.motion, &setup.limits, &setup.geometry)?;
    Ok(AlgorithmRun { algorithm, trace, metrics, violations, clamps, elapsed })
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub scenario: ScenarioTrace,
    pub runs: Vec<AlgorithmRun>,
}

impl RunReport {
    pub fn get(&self, algorithm: Algorithm) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm == algorithm)
    }

    pub fn violation_count(&self) -> usize {
        self.runs.iter().map(|r| r.violations.len()).sum()
    }
}

/// Runs every selected algorithm; independent runs execute on separate
/// threads. Results come back in the configured order.
pub fn run(cfg: &RunConfig) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let setup = build_setup(cfg)?;
    let scenario = generate_scenario(cfg, &setup.vestibular)?;
    let mut algorithms = cfg.run.algorithms.clone();
    algorithms.dedup();
    let results: Vec<Result<AlgorithmRun, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = algorithms
            .iter()
            .map(|&a| {
                let (setup, scenario) = (&setup, &scenario);
                s.spawn(move || run_algorithm(setup, scenario, a))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("algorithm thread panicked")).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport { config: cfg.clone(), scenario, runs })
}

/// Fails when strict mode is on and any applied motion left the envelope.
pub fn enforce_strict(report: &RunReport) -> Result<(), HarnessError> {
    if !report.config.run.strict || report.violation_count() == 0 {
        return Ok(());
    }
    let mut by_algo = BTreeMap::new();
    for r in &report.runs {
        if !r.violations.is_empty() {
            by_algo.insert(r.algorithm.as_str(), r.violations.len());
        }
    }
    let summary = by_algo.iter().map(|(a, n)| format!("{a}: {n}")).collect::<Vec<_>>().join(", ");
    Err(HarnessError::Strict { count: report.violation_count(), summary })
}

fn num(v: f64) -> String {
    format!("{v:.9e}")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents).map_err(io_err(path))
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `t, ax, ay, az, wx, wy, wz, ref_fx, ref_fy, ref_fz, ref_wx, ref_wy, ref_wz`
pub fn reference_csv(scenario: &ScenarioTrace) -> Result<Vec<u8>, HarnessError> {
    let reference = scenario.reference();
    let header = strings(&["t", "ax", "ay", "az", "wx", "wy", "wz"])
        .into_iter()
        .chain(CHANNELS.iter().map(|c| format!("ref_{c}")))
        .collect::<Vec<_>>();
    let rows = (0..scenario.len()).map(|k| {
        let mut r = vec![num(k as f64 * scenario.ts)];
        r.extend(scenario.acceleration.row(k).iter().map(|v| num(*v)));
        r.extend(scenario.angular_velocity.row(k).iter().map(|v| num(*v)));
        r.extend(reference.row(k).iter().map(|v| num(*v)));
        r
    });
    csv_bytes(&header, rows)
}

/// Platform motion, applied inputs, perceived signals and exact leg
/// lengths per sample.
pub fn motion_csv(run: &AlgorithmRun, geometry: &PlatformGeometry) -> Result<Vec<u8>, HarnessError> {
    let mut header = strings(&[
        "t", "x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "ax", "ay", "az", "wx", "wy", "wz", "dwx", "dwy",
        "dwz",
    ]);
    header.extend(["u_ax", "u_ay", "u_az", "u_wx", "u_wy", "u_wz", "u_tilt_x", "u_tilt_y"].map(String::from));
    header.extend(CHANNELS.iter().map(|c| format!("perceived_{c}")));
    header.extend((1..=6).map(|i| format!("leg{i}")));
    let mut rows = Vec::with_capacity(run.trace.motion.len());
    for (k, s) in run.trace.motion.iter().enumerate() {
        let mut r = vec![num(s.t)];
        for v in [s.position, s.attitude, s.velocity, s.acceleration, s.angular_velocity, s.angular_acceleration] {
            r.extend(v.iter().map(|x| num(*x)));
        }
        r.extend(run.trace.commands.row(k).iter().map(|v| num(*v)));
        r.extend(run.trace.perceived.row(k).iter().map(|v| num(*v)));
        let legs = leg_lengths(geometry, &s.pose())?;
        r.extend(legs.iter().map(|v| num(*v)));
        rows.push(r);
    }
    csv_bytes(&header, rows.into_iter())
}

/// `t, active, alpha, qp_status`
pub fn switch_csv(trace: &ClosedLoopTrace) -> Result<Vec<u8>, HarnessError> {
    let rows = trace
        .switch_log
        .iter()
        .map(|s| vec![num(s.t), s.active.as_str().to_string(), num(s.alpha), s.qp_status.as_str().to_string()]);
    csv_bytes(&strings(&["t", "active", "alpha", "qp_status"]), rows)
}

/// `algorithm, channel, naad, aas`; the rows `aggregate` and `force`
/// carry the aggregate AAS and the pooled specific-force AAS.
pub fn metrics_csv(runs: &[AlgorithmRun]) -> Result<Vec<u8>, HarnessError> {
    let mut rows = Vec::new();
    for r in runs {
        let a = r.algorithm.as_str().to_string();
        for c in &r.metrics.channels {
            rows.push(vec![a.clone(), c.name.to_string(), num(c.naad), num(c.aas)]);
        }
        rows.push(vec![a.clone(), "aggregate".into(), String::new(), num(r.metrics.aggregate_aas)]);
        rows.push(vec![a, "force".into(), String::new(), num(r.metrics.force_aas)]);
    }
    csv_bytes(&strings(&["algorithm", "channel", "naad", "aas"]), rows.into_iter())
}

/// `algorithm, t, channel, value, lo, hi`
pub fn limits_csv(runs: &[AlgorithmRun]) -> Result<Vec<u8>, HarnessError> {
    let rows = runs.iter().flat_map(|r| {
        r.violations.iter().map(move |v| {
            vec![
                r.algorithm.as_str().to_string(),
                num(v.t),
                v.channel.clone(),
                num(v.value),
                num(v.bound[0]),
                num(v.bound[1]),
            ]
        })
    });
    csv_bytes(&strings(&["algorithm", "t", "channel", "value", "lo", "hi"]), rows)
}

/// `algorithm, t, channel, requested, applied`
pub fn clamps_csv(runs: &[AlgorithmRun]) -> Result<Vec<u8>, HarnessError> {
    let rows = runs.iter().flat_map(|r| {
        r.clamps.iter().map(move |c| {
            vec![r.algorithm.as_str().to_string(), num(c.t), c.channel.clone(), num(c.requested), num(c.applied)]
        })
    });
    csv_bytes(&strings(&["algorithm", "t", "channel", "requested", "applied"]), rows)
}

/// Side-by-side metrics with improvements of the first algorithm over
/// each of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: Algorithm,
    pub rows: Vec<(Algorithm, MetricsReport)>,
    /// `(other, force AAS improvement, aggregate AAS improvement)`
    pub improvements: Vec<(Algorithm, f64, f64)>,
}

pub fn compare(report: &RunReport) -> Comparison {
    let rows: Vec<_> = report.runs.iter().map(|r| (r.algorithm, r.metrics.clone())).collect();
    let (baseline, base) = rows[0].clone();
    let improvements = rows
        .iter()
        .skip(1)
        .map(|(a, m)| (*a, improvement(m.force_aas, base.force_aas), improvement(m.aggregate_aas, base.aggregate_aas)))
        .collect();
    Comparison { baseline, rows, improvements }
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "algorithm");
        for c in CHANNELS {
            let _ = write!(s, " {:>14}", format!("{c} naad/aas"));
        }
        let _ = writeln!(s, " {:>10} {:>10}", "force_aas", "aggregate");
        for (a, m) in &self.rows {
            let _ = write!(s, "{:<12}", a.as_str());
            for c in &m.channels {
                // Scores against a silent reference only measure the guard.
                let cell = if c.reference_level > 0.0 { format!("{:.3}/{:.3}", c.naad, c.aas) } else { "-".into() };
                let _ = write!(s, " {:>14}", cell);
            }
            let _ = writeln!(s, " {:>10.4} {:>10.4}", m.force_aas, m.aggregate_aas);
        }
        for (a, force, agg) in &self.improvements {
            let _ = writeln!(
                s,
                "{} vs {}: force AAS {:+.2}%, aggregate AAS {:+.2}%",
                self.baseline.as_str(),
                a.as_str(),
                100.0 * force,
                100.0 * agg
            );
        }
        s
    }
}

/// Human-readable summary (no timing, so it is reproducible).
pub fn summary(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} seed {} samples {} ts {}",
        report.scenario.id,
        report.config.run.seed,
        report.scenario.len(),
        report.scenario.ts
    );
    for r in &report.runs {
        let switches = r.trace.switch_times();
        let _ = writeln!(
            s,
            "{:<11} force AAS {:.4}  aggregate AAS {:.4}  violations {}  clamps {}  terminal failures {}  switches {}",
            r.algorithm.as_str(),
            r.metrics.force_aas,
            r.metrics.aggregate_aas,
            r.violations.len(),
            r.clamps.len(),
            r.trace.cotc_failures,
            switches.len()
        );
    }
    s.push('\n');
    s.push_str(&compare(report).render());
    s
}

/// Writes every artifact of a run into `dir` and returns the paths.
pub fn write_artifacts(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), HarnessError> {
        let path = dir.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    put("reference.csv".into(), reference_csv(&report.scenario)?)?;
    for r in &report.runs {
        put(format!("{}_motion.csv", r.algorithm.as_str()), motion_csv(r, &report.config.geometry)?)?;
        if !r.trace.switch_log.is_empty() {
            put(format!("{}_switch.csv", r.algorithm.as_str()), switch_csv(&r.trace)?)?;
        }
    }
    put("metrics.csv".into(), metrics_csv(&report.runs)?)?;
    put("limits.csv".into(), limits_csv(&report.runs)?)?;
    put("clamps.csv".into(), clamps_csv(&report.runs)?)?;
    put("summary.txt".into(), summary(report).into_bytes())?;
    Ok(written)
}

/// Convenience: `samples × 6` perceived reference of a config's scenario.
pub fn scenario_reference(cfg: &RunConfig) -> Result<DMatrix<f64>, HarnessError> {
    let vest = assemble_vestibular(&cfg.vestibular)?;
    Ok(generate_scenario(cfg, &vest)?.reference())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_keys_are_named() {
        let err = RunConfig::from_toml("[run]\nscenario = \"zero\"\nalgorithms = [\"cwf\"]\n").unwrap_err();
        assert!(matches!(err, HarnessError::MissingKey("run.duration")), "{err}");
        let err = RunConfig::from_toml("[run]\nduration = 1.0\nalgorithms = [\"cwf\"]\n").unwrap_err();
        assert!(err.to_string().contains("run.scenario"));
        let err = RunConfig::from_toml("[mpc]\nn_p = 10\n").unwrap_err();
        assert!(matches!(err, HarnessError::MissingKey("run")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[run]\nscenario = \"zero\"\nalgorithms = [\"cwf\"]\nduration = 1.0\n[mpc]\nhorizon = 3\n";
        let err = RunConfig::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
        let text = "[run]\nscenario = \"zero\"\nalgorithms = [\"cwf\"]\nduration = 1.0\ncolour = 1\n";
        assert!(RunConfig::from_toml(text).is_err());
    }

    #[test]
    fn unknown_algorithm_and_scenario_rejected() {
        assert!(Algorithm::parse("lqr").is_err());
        assert_eq!(Algorithm::parse("mpc_cotc").unwrap(), Algorithm::MpcCotc);
        assert!(ScenarioKind::parse("turbulence").is_err());
        assert_eq!(ScenarioKind::parse("stall_lite").unwrap(), ScenarioKind::StallLite);
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::new(ScenarioKind::Stall, vec![Algorithm::Smpc, Algorithm::Cwf], 14.0);
        cfg.stall = Some(StallParams::wind_shear());
        cfg.run.seed = 9;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = RunConfig::new(ScenarioKind::Zero, vec![Algorithm::Cwf], 1.0);
        cfg.mpc.n_c = 50;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(ScenarioKind::Csv, vec![Algorithm::Cwf], 1.0);
        assert!(matches!(cfg.validate(), Err(HarnessError::MissingKey("run.trace"))));
        cfg.run.scenario = ScenarioKind::Zero;
        cfg.run.algorithms.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_scenario_smoke() {
        let cfg = RunConfig::new(ScenarioKind::Zero, Algorithm::ALL.to_vec(), 1.0);
        let report = run(&cfg).unwrap();
        assert_eq!(report.runs.len(), 4);
        for r in &report.runs {
            assert_eq!(r.trace.commands.amax(), 0.0, "{}", r.algorithm.as_str());
            assert_eq!(r.metrics.force_aas, 0.0);
            assert_eq!(r.metrics.aggregate_aas, 0.0);
            assert!(r.violations.is_empty());
        }
        let cmp = compare(&report);
        assert!(cmp.improvements.iter().all(|(_, f, a)| *f == 0.0 && *a == 0.0));
    }
}
