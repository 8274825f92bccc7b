use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hexcue::harness::{
    compare, enforce_strict, generate_scenario, run, summary, write_artifacts, Algorithm, RunConfig, ScenarioKind,
};
use hexcue::kinematics::{check_limits, leg_lengths, leg_rate_jacobian, MotionSample};
use hexcue::vestibular::assemble_vestibular;
use nalgebra::Vector3;

/// Batch simulation of motion-cueing algorithms on a six-DoF platform.
#[derive(Parser)]
#[command(name = "hexcue", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop and write CSV traces, metrics and a summary.
    Run(RunArgs),
    /// Run the algorithms and print the side-by-side metrics table.
    Compare(RunArgs),
    /// Leg lengths, leg-rate Jacobian and limit check for one pose.
    Kinematics(KinematicsArgs),
    /// Write a scenario's reference trace as CSV.
    Gen(RunArgs),
    /// Validate a configuration and print it with defaults filled in.
    Check(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, env = "HEXCUE_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// bumpy, stall, stall_lite, wind_shear, zero or csv.
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated algorithms; the first is the comparison baseline.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run length (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory (`gen`: output file, stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail when any applied command leaves the platform envelope.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct KinematicsArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Pose as `x,y,z,roll,pitch,yaw` in m and degrees; z is the offset
    /// from the neutral height.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,0,0,0,0,0")]
    pose: Vec<f64>,
}

const DEFAULT_DURATION: f64 = 14.0;

fn load_config(args: &ConfigArgs) -> Result<Option<RunConfig>> {
    args.config.as_deref().map(|p| RunConfig::load(p).with_context(|| format!("loading {}", p.display()))).transpose()
}

fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let scenario = args.scenario.as_deref().map(ScenarioKind::parse).transpose()?;
    let algorithms = args
        .algo
        .as_ref()
        .map(|list| list.iter().map(|a| Algorithm::parse(a)).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let mut cfg = match load_config(&args.config)? {
        Some(cfg) => cfg,
        None => {
            let Some(scenario) = scenario else {
                bail!("no configuration given: pass --config, set HEXCUE_CONFIG or pass --scenario");
            };
            RunConfig::new(scenario, Algorithm::ALL.to_vec(), DEFAULT_DURATION)
        }
    };
    if let Some(s) = scenario {
        cfg.run.scenario = s;
    }
    if let Some(a) = algorithms {
        cfg.run.algorithms = a;
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.run.duration = d;
    }
    if let Some(out) = &args.out {
        cfg.run.out_dir = out.clone();
    }
    cfg.run.strict |= args.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let report = run(&cfg)?;
    let written = write_artifacts(&report, &cfg.run.out_dir)?;
    print!("{}", summary(&report));
    println!();
    for p in written {
        println!("wrote {}", p.display());
    }
    enforce_strict(&report)?;
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let report = run(&cfg)?;
    print!("{}", compare(&report).render());
    if args.out.is_some() {
        write_artifacts(&report, &cfg.run.out_dir)?;
    }
    enforce_strict(&report)?;
    Ok(())
}

fn cmd_gen(args: &RunArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let vestibular = assemble_vestibular(&cfg.vestibular)?;
    let trace = generate_scenario(&cfg, &vestibular)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            trace.write_csv(io::BufWriter::new(file))?;
            eprintln!("wrote {} samples to {}", trace.len(), path.display());
        }
        None => trace.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_kinematics(args: &KinematicsArgs) -> Result<()> {
    let cfg = load_config(&args.config)?
        .unwrap_or_else(|| RunConfig::new(ScenarioKind::Zero, vec![Algorithm::Cwf], DEFAULT_DURATION));
    let geom = &cfg.geometry;
    let p = &args.pose;
    if p.len() != 6 {
        bail!("--pose needs 6 comma-separated values, got {}", p.len());
    }
    let mut sample = MotionSample::at_rest(0.0, geom.home_height);
    sample.position += Vector3::new(p[0], p[1], p[2]);
    sample.attitude = Vector3::new(p[3], p[4], p[5]).map(f64::to_radians);
    let pose = sample.pose();
    let legs = leg_lengths(geom, &pose)?;
    let jac = leg_rate_jacobian(geom, &pose)?;

    let mut out = io::stdout().lock();
    writeln!(out, "leg lengths (m):")?;
    for (i, l) in legs.iter().enumerate() {
        writeln!(out, "  leg{} {:.6}", i + 1, l)?;
    }
    writeln!(out, "leg-rate jacobian (rows: legs; cols: vx vy vz wx wy wz):")?;
    for r in 0..6 {
        let row: Vec<String> = (0..6).map(|c| format!("{:>9.5}", jac[(r, c)])).collect();
        writeln!(out, "  {}", row.join(" "))?;
    }
    let violations = check_limits(&[sample], &cfg.limits, geom)?;
    if violations.is_empty() {
        writeln!(out, "within limits")?;
    } else {
        for v in &violations {
            writeln!(out, "violation {} = {:.6} outside [{:.6}, {:.6}]", v.channel, v.value, v.bound[0], v.bound[1])?;
        }
        bail!("pose violates {} limits", violations.len());
    }
    Ok(())
}

fn cmd_check(args: &ConfigArgs) -> Result<()> {
    let Some(path) = args.config.as_deref() else {
        bail!("no configuration given: pass --config or set HEXCUE_CONFIG");
    };
    let cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    print!("{}", cfg.to_toml());
    eprintln!("{}: ok", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Kinematics(a) => cmd_kinematics(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
