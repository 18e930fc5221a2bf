use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qdrive_core::adiabatic::ground_state;
use qdrive_core::analysis::{final_fidelity, quantum_speed_limit, Endpoints, RobustnessAxis};
use qdrive_core::lattice::{self, ExportOptions};
use qdrive_core::propagator::{propagate, propagate_final, ImpulseMode, PropagatorConfig, SampleRule};
use qdrive_core::protocols;
use qdrive_core::qcore::{CompositeMode, QuantumState, Units};

use crate::config::{layered, layered_list, resolve_workers, ConfigFile, WORKERS_ENV};
use crate::experiment::{run_experiment, schedule_for, ExperimentName, ExperimentResult, ExperimentSpec, Series};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 3;

const CONFIG_KEYS: &[&str] = &[
    "workers",
    "kind",
    "omega",
    "T",
    "duration",
    "out",
    "out-dir",
    "steps",
    "sample-rule",
    "convergence-check",
    "impulse-height",
    "target-fidelity",
    "deviation",
    "axis",
    "only",
    "samples",
    "recoil-frequency",
    "slew-seconds",
    "realization",
];

#[derive(Debug, Parser)]
#[command(name = "qdrive", version, about = "Simulate and compare two-level driving protocols")]
pub struct Cli {
    /// Flat `key = value` file; flags take precedence over its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for grid points (overrides QDRIVE_WORKERS and config).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate one protocol and write its trajectory.
    Simulate(SimulateArgs),
    /// Run a custom grid of final fidelities, robustness or time-to-fidelity.
    Sweep(SweepArgs),
    /// Run every built-in experiment and write one CSV each.
    Figures(FiguresArgs),
    /// Write optical-lattice control waveforms and a JSON sidecar.
    ExportLattice(ExportArgs),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Midpoint,
    Magnus4,
}

#[derive(Debug, Args, Default)]
pub struct PropagatorArgs {
    /// Uniform propagation steps per protocol.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub sample_rule: Option<RuleArg>,
    /// Repeat each run at twice the steps and flag changes above 1e-8.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub convergence_check: Option<bool>,
    /// Emulate end impulses as rectangular z pulses of this height.
    #[arg(long)]
    pub impulse_height: Option<f64>,
}

impl PropagatorArgs {
    fn resolve(&self, config: &ConfigFile, check_default: bool) -> anyhow::Result<PropagatorConfig> {
        let steps = layered(self.steps, config, "steps", qdrive_core::propagator::DEFAULT_STEPS)?;
        let rule = match self.sample_rule {
            Some(r) => r,
            None => match config.raw("sample-rule") {
                Some(v) => RuleArg::from_str(v, true).map_err(|e| anyhow::anyhow!("config `sample-rule`: {e}"))?,
                None => RuleArg::Magnus4,
            },
        };
        let check = layered(self.convergence_check, config, "convergence-check", check_default)?;
        let height: Option<f64> = match self.impulse_height {
            Some(h) => Some(h),
            None => config.get("impulse-height")?,
        };
        let cfg = PropagatorConfig::default()
            .with_steps(steps)
            .with_rule(match rule {
                RuleArg::Midpoint => SampleRule::Midpoint,
                RuleArg::Magnus4 => SampleRule::Magnus4,
            })
            .checking_convergence(check)
            .with_impulse_mode(match height {
                Some(height) => ImpulseMode::Finite { height },
                None => ImpulseMode::Exact,
            });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Protocol series to propagate.
    #[arg(long)]
    pub kind: Option<Series>,
    /// Base coupling ω in units of ω_rec.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Protocol duration in units of 1/ω_rec.
    #[arg(long = "T", visible_alias = "duration")]
    pub duration: Option<f64>,
    /// Output CSV; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub propagator: PropagatorArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Protocol series, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub kind: Vec<Series>,
    /// Base couplings, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub omega: Vec<f64>,
    /// Durations, comma separated.
    #[arg(long = "T", visible_alias = "duration", value_delimiter = ',')]
    pub duration: Vec<f64>,
    /// Search for the shortest duration reaching this final fidelity.
    #[arg(long)]
    pub target_fidelity: Option<f64>,
    /// Relative deviations for a robustness scan.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub deviation: Vec<f64>,
    /// Perturbed quantity for robustness scans.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub axis: Vec<AxisArg>,
    /// Output CSV; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub propagator: PropagatorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Duration,
    Coupling,
}

impl std::str::FromStr for AxisArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <AxisArg as ValueEnum>::from_str(s, true)
    }
}

impl From<AxisArg> for RobustnessAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Duration => RobustnessAxis::Duration,
            AxisArg::Coupling => RobustnessAxis::Coupling,
        }
    }
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    /// Directory for the experiment CSVs (required, here or in the config file).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Subset of experiments to run (default: all six).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    #[command(flatten)]
    pub propagator: PropagatorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RealizationArg {
    /// Single lattice: (Γ′, ω′) with quasimomentum jumps at the ends.
    Transformed,
    /// Two lattices: the counter-diabatic term on a displaced second lattice.
    Explicit,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub kind: Option<Series>,
    /// Base coupling ω in units of ω_rec.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long = "T", visible_alias = "duration")]
    pub duration: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// ω_rec in rad/s.
    #[arg(long)]
    pub recoil_frequency: Option<f64>,
    /// Rise time recorded for each quasimomentum jump, in seconds.
    #[arg(long)]
    pub slew_seconds: Option<f64>,
    /// Single-lattice frame (transformed) or explicit σy drive.
    #[arg(long, value_enum)]
    pub realization: Option<RealizationArg>,
    /// Waveform CSV; the sidecar is written next to it with a .json extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn optional<T: std::str::FromStr>(flag: Option<T>, config: &ConfigFile, key: &str) -> anyhow::Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => config.get(key),
    }
}

fn required<T>(value: Option<T>, name: &str) -> anyhow::Result<T> {
    value.with_context(|| format!("missing --{name} (flag or config key)"))
}

fn kind_arg(flag: Option<Series>, config: &ConfigFile) -> anyhow::Result<Series> {
    match flag {
        Some(k) => Ok(k),
        None => required(config.get::<Series>("kind")?, "kind"),
    }
}

fn duration_arg(flag: Option<f64>, config: &ConfigFile) -> anyhow::Result<f64> {
    match flag {
        Some(t) => Ok(t),
        None => match config.get::<f64>("T")? {
            Some(t) => Ok(t),
            None => required(config.get::<f64>("duration")?, "T"),
        },
    }
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct TrajectoryRow {
    tau: f64,
    t: f64,
    gamma: f64,
    omega: f64,
    omega_y: f64,
    fidelity: f64,
    c0_re: f64,
    c0_im: f64,
    c1_re: f64,
    c1_im: f64,
}

fn simulate(args: &SimulateArgs, config: &ConfigFile) -> anyhow::Result<u8> {
    let kind = kind_arg(args.kind, config)?;
    let omega = required(optional(args.omega, config, "omega")?, "omega")?;
    let duration = duration_arg(args.duration, config)?;
    let cfg = args.propagator.resolve(config, false)?;
    let out_path = args.out.clone().or(config.get::<PathBuf>("out")?);

    let schedule = schedule_for(kind, omega, duration)?;
    for w in schedule.warnings() {
        eprintln!("warning: {w}");
    }
    let initial = if kind == Series::LzOmegaOnly {
        ground_state(-protocols::SWEEP_HALF_RANGE, omega)?
    } else {
        Endpoints::AdiabaticGround.resolve(&schedule)?.0
    };
    let tr = propagate(&schedule, &initial, &cfg.recording(true))?;

    let meta = serde_json::json!({
        "artifact": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": "simulate",
        "kind": kind,
        "omega": omega,
        "T": duration,
        "propagator": cfg,
        "impulses": schedule.impulses(),
        "convergence": tr.convergence,
    });
    let mut out = output(out_path.as_deref())?;
    writeln!(out, "# {meta}")?;
    let mut w = csv::Writer::from_writer(out);
    for p in &tr.points {
        let c = schedule.sample(p.tau)?;
        let [a, b] = p.state.amplitudes();
        w.serialize(TrajectoryRow {
            tau: p.tau,
            t: Units::physical_time(p.tau, duration),
            gamma: c.gamma,
            omega: c.omega,
            omega_y: c.omega_y,
            fidelity: p.fidelity,
            c0_re: a.re,
            c0_im: a.im,
            c1_re: b.re,
            c1_im: b.im,
        })?;
    }
    w.flush()?;
    match tr.convergence {
        Some(c) if !c.converged => {
            eprintln!(
                "error: not converged at {} steps: F_fin {} vs {} at twice the steps",
                c.steps, c.coarse, c.fine
            );
            Ok(EXIT_NOT_CONVERGED)
        }
        _ => Ok(0),
    }
}

fn finish(result: &ExperimentResult, label: &str) -> u8 {
    let invalid = result.invalid();
    if invalid > 0 {
        eprintln!("{label}: {invalid} grid point(s) failed preconditions and are flagged `invalid`");
    }
    let bad = result.not_converged();
    if bad > 0 {
        eprintln!("error: {label}: {bad} row(s) not converged at {} steps", result.spec.propagator.steps);
        EXIT_NOT_CONVERGED
    } else {
        0
    }
}

fn sweep(args: &SweepArgs, config: &ConfigFile, workers: Option<usize>) -> anyhow::Result<u8> {
    let series: Vec<Series> = layered_list(args.kind.clone(), config, "kind")?;
    let omegas: Vec<f64> = layered_list(args.omega.clone(), config, "omega")?;
    let mut durations: Vec<f64> = layered_list(args.duration.clone(), config, "T")?;
    if durations.is_empty() {
        durations = config.get_list("duration")?.unwrap_or_default();
    }
    let deviations: Vec<f64> = layered_list(args.deviation.clone(), config, "deviation")?;
    let mut axes: Vec<RobustnessAxis> = layered_list(args.axis.clone(), config, "axis")?
        .into_iter()
        .map(RobustnessAxis::from)
        .collect();
    if !deviations.is_empty() && axes.is_empty() {
        axes = vec![RobustnessAxis::Duration, RobustnessAxis::Coupling];
    }
    let target = match args.target_fidelity {
        Some(t) => Some(t),
        None => config.get("target-fidelity")?,
    };
    let spec = ExperimentSpec {
        series,
        omegas,
        durations,
        deviations,
        axes,
        target_fidelity: target,
        propagator: args.propagator.resolve(config, false)?.recording(false),
        ..ExperimentSpec::built_in(ExperimentName::CustomSweep)
    };
    let result = run_experiment(&spec, workers)?;
    let out_path = args.out.clone().or(config.get::<PathBuf>("out")?);
    result.write_csv(output(out_path.as_deref())?)?;
    Ok(finish(&result, "sweep"))
}

fn figures(args: &FiguresArgs, config: &ConfigFile, workers: Option<usize>) -> anyhow::Result<u8> {
    let out_dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => required(config.get::<PathBuf>("out-dir")?, "out-dir")?,
    };
    let only: Vec<String> = layered_list(args.only.clone(), config, "only")?;
    let cfg = args.propagator.resolve(config, true)?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut code = 0;
    for name in ExperimentName::BUILT_IN {
        if !only.is_empty() && !only.iter().any(|o| o == name.as_str()) {
            continue;
        }
        let built = ExperimentSpec::built_in(name);
        let spec = ExperimentSpec {
            propagator: cfg.recording(built.propagator.record_trajectory),
            ..built
        };
        let result = run_experiment(&spec, workers)?;
        let path = out_dir.join(format!("{name}.csv"));
        result.write_csv(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))?;
        eprintln!("wrote {} ({} rows)", path.display(), result.rows.len());
        code = code.max(finish(&result, name.as_str()));
    }
    Ok(code)
}

fn export_lattice(args: &ExportArgs, config: &ConfigFile) -> anyhow::Result<u8> {
    let kind = kind_arg(args.kind, config)?;
    let omega = required(optional(args.omega, config, "omega")?, "omega")?;
    let duration = duration_arg(args.duration, config)?;
    let samples = layered(args.samples, config, "samples", lattice::DEFAULT_SAMPLES)?;
    let recoil = layered(args.recoil_frequency, config, "recoil-frequency", Units::default_recoil_frequency())?;
    let slew = layered(args.slew_seconds, config, "slew-seconds", 0.0)?;
    let realization = match args.realization {
        Some(r) => r,
        None => match config.raw("realization") {
            Some(v) => RealizationArg::from_str(v, true).map_err(|e| anyhow::anyhow!("config `realization`: {e}"))?,
            None => RealizationArg::Transformed,
        },
    };
    let out = match &args.out {
        Some(p) => p.clone(),
        None => required(config.get::<PathBuf>("out")?, "out")?,
    };
    let schedule = match (realization, kind) {
        (RealizationArg::Transformed, _) => schedule_for(kind, omega, duration)?,
        (RealizationArg::Explicit, Series::SuperadiabaticLinear) => {
            protocols::counterdiabatic_explicit(&protocols::lz_linear(omega, duration)?)?
        }
        (RealizationArg::Explicit, Series::SuperadiabaticTangent) => {
            protocols::counterdiabatic_explicit(&protocols::tangent_base(omega, duration)?)?
        }
        (RealizationArg::Explicit, other) => {
            bail!("explicit realization needs a superadiabatic kind, got {other}")
        }
    };
    let controls = lattice::to_lattice_controls(&schedule, samples, recoil)?;
    lattice::write_csv(&controls, &out)?;
    let sidecar = out.with_extension("json");
    lattice::write_metadata(&controls, &schedule, &ExportOptions { slew_seconds: slew }, &sidecar)?;
    eprintln!("wrote {} and {}", out.display(), sidecar.display());
    Ok(0)
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn selftest_checks() -> anyhow::Result<Vec<Check>> {
    let cfg = PropagatorConfig::default().recording(true);
    let mut checks = Vec::new();

    let d = lattice::displacement_unitary_check();
    checks.push(Check {
        name: "displacement conjugation",
        pass: d.passed,
        detail: format!(
            "errors {:.1e} / {:.1e} / {:.1e}",
            d.identity_error, d.quarter_period_error, d.half_period_error
        ),
    });

    let up = QuantumState::ground_diabatic();
    let qsl = quantum_speed_limit(&up, &up.orthogonal(), 0.5)?;
    checks.push(Check {
        name: "speed limit for orthogonal states",
        pass: qsl.t_qs == std::f64::consts::PI,
        detail: format!("T_qs = {}", qsl.t_qs),
    });

    let lz = protocols::lz_linear(0.5, 8.0)?;
    let ini = ground_state(-2.0, 0.5)?;
    let tr = propagate(&lz, &ini, &cfg)?;
    let f = tr.points.last().map_or(f64::NAN, |p| p.fidelity);
    let reference = qdrive_core::analysis::lz_reference_fidelity(0.5, 8.0);
    checks.push(Check {
        name: "linear sweep vs transition formula",
        pass: (f - reference).abs() <= 0.05,
        detail: format!("F = {f:.4}, formula {reference:.4}"),
    });
    checks.push(Check {
        name: "norm preservation",
        pass: tr.max_norm_drift() <= 1e-12,
        detail: format!("max drift {:.1e}", tr.max_norm_drift()),
    });
    let back = propagate_final(&lz.reversed(), &tr.final_state.conj(), &cfg)?.conj();
    checks.push(Check {
        name: "time reversal",
        pass: back.fidelity(&ini) >= 1.0 - 1e-9,
        detail: format!("overlap {:.15}", back.fidelity(&ini)),
    });

    let ini = ground_state(-2.0, 0.55)?;
    let mut worst = f64::INFINITY;
    for s in [protocols::superadiabatic_linear(0.55, 2.0)?, protocols::superadiabatic_tangent(0.55, 2.0)?] {
        worst = worst.min(propagate(&s, &ini, &cfg)?.min_fidelity());
    }
    checks.push(Check {
        name: "transitionless following",
        pass: worst >= 0.9999,
        detail: format!("min F(tau) = {worst:.12}"),
    });

    let base = protocols::lz_linear(0.55, 2.0)?;
    let a = propagate_final(&protocols::counterdiabatic_explicit(&base)?, &ini, &cfg)?;
    let b = propagate_final(&protocols::superadiabatic_transform(&base)?, &ini, &cfg)?;
    checks.push(Check {
        name: "explicit vs transformed realization",
        pass: a.fidelity(&b) >= 1.0 - 1e-9,
        detail: format!("overlap {:.15}", a.fidelity(&b)),
    });

    let comp = protocols::composite_between_sweep_endpoints(0.5, 1e3, CompositeMode::Ideal)?;
    let f = final_fidelity(&comp, Endpoints::AdiabaticGround, &cfg)?;
    checks.push(Check {
        name: "ideal composite pulse",
        pass: f >= 1.0 - 1e-6,
        detail: format!("F = {f:.12}"),
    });

    let rc = protocols::roland_cerf_for_duration(0.3, 6.0)?;
    let conv = propagate(&rc, &ground_state(-2.0, 0.3)?, &cfg.checking_convergence(true).recording(false))?
        .convergence
        .context("convergence report missing")?;
    checks.push(Check {
        name: "step-doubling convergence",
        pass: conv.converged,
        detail: format!("|dF| = {:.1e}", conv.delta()),
    });
    Ok(checks)
}

fn selftest() -> anyhow::Result<u8> {
    let checks = selftest_checks()?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.pass);
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { 0 } else { EXIT_FAILURE })
}

/// Executes a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> anyhow::Result<u8> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    config.check_keys(CONFIG_KEYS)?;
    let env = std::env::var(WORKERS_ENV).ok();
    let workers = resolve_workers(cli.workers, env.as_deref(), &config)?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &config),
        Command::Sweep(a) => sweep(a, &config, workers),
        Command::Figures(a) => figures(a, &config, workers),
        Command::ExportLattice(a) => export_lattice(a, &config),
        Command::Selftest => selftest(),
    }
}
