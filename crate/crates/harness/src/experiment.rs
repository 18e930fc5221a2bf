//! Experiment specifications, the runner, and long-format result rows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qdrive_core::adiabatic::ground_state;
use qdrive_core::analysis::{
    final_fidelity, min_time_at_coupling, quantum_speed_limit, robustness_scan, time_to_fidelity,
    Endpoints, RobustnessAxis,
};
use qdrive_core::propagator::{propagate, PropagatorConfig};
use qdrive_core::protocols::{self, composite_between_sweep_endpoints, SWEEP_HALF_RANGE};
use qdrive_core::qcore::{CompositeMode, ProtocolKind, ProtocolSchedule};
use qdrive_core::{make_custom_schedule, QdriveError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentName {
    #[serde(rename = "fig2d")]
    Fig2d,
    #[serde(rename = "fig2e")]
    Fig2e,
    #[serde(rename = "fig3c")]
    Fig3c,
    #[serde(rename = "fig3d")]
    Fig3d,
    #[serde(rename = "fig4a")]
    Fig4a,
    #[serde(rename = "fig4b")]
    Fig4b,
    #[serde(rename = "custom-sweep")]
    CustomSweep,
}

impl ExperimentName {
    pub const BUILT_IN: [ExperimentName; 6] = [
        ExperimentName::Fig2d,
        ExperimentName::Fig2e,
        ExperimentName::Fig3c,
        ExperimentName::Fig3d,
        ExperimentName::Fig4a,
        ExperimentName::Fig4b,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::Fig2d => "fig2d",
            ExperimentName::Fig2e => "fig2e",
            ExperimentName::Fig3c => "fig3c",
            ExperimentName::Fig3d => "fig3d",
            ExperimentName::Fig4a => "fig4a",
            ExperimentName::Fig4b => "fig4b",
            ExperimentName::CustomSweep => "custom-sweep",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A data series: a protocol family, or a derived bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    LzLinear,
    RolandCerf,
    Composite,
    SuperadiabaticLinear,
    SuperadiabaticTangent,
    /// Linear sweep with only the coupling replaced by its transformed value.
    LzOmegaOnly,
    /// arccos|⟨ground(+2)|ground(−2)⟩|/ω.
    SpeedLimit,
    /// Shortest tangent protocol at transformed coupling ω′.
    TangentMinimum,
}

impl Series {
    const ALL: [Series; 8] = [
        Series::LzLinear,
        Series::RolandCerf,
        Series::Composite,
        Series::SuperadiabaticLinear,
        Series::SuperadiabaticTangent,
        Series::LzOmegaOnly,
        Series::SpeedLimit,
        Series::TangentMinimum,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Series::LzLinear => "lz_linear",
            Series::RolandCerf => "roland_cerf",
            Series::Composite => "composite",
            Series::SuperadiabaticLinear => "superadiabatic_linear",
            Series::SuperadiabaticTangent => "superadiabatic_tangent",
            Series::LzOmegaOnly => "lz_omega_only",
            Series::SpeedLimit => "speed_limit",
            Series::TangentMinimum => "tangent_minimum",
        }
    }

    fn protocol_kind(&self) -> Option<ProtocolKind> {
        match self {
            Series::LzLinear => Some(ProtocolKind::LzLinear),
            Series::RolandCerf => Some(ProtocolKind::RolandCerf),
            Series::Composite => Some(ProtocolKind::Composite),
            Series::SuperadiabaticLinear => Some(ProtocolKind::SuperadiabaticLinear),
            Series::SuperadiabaticTangent => Some(ProtocolKind::SuperadiabaticTangent),
            _ => None,
        }
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Series {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Series::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .with_context(|| format!("unknown series `{s}`"))
    }
}

/// What to compute and over which grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub series: Vec<Series>,
    pub omegas: Vec<f64>,
    pub durations: Vec<f64>,
    pub deviations: Vec<f64>,
    pub axes: Vec<RobustnessAxis>,
    pub target_fidelity: Option<f64>,
    pub propagator: PropagatorConfig,
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|k| start + step * k as f64).collect()
}

const FIGURE_TARGET: f64 = 0.9;
const COMPOSITE_HEIGHT: f64 = 1e3;

impl ExperimentSpec {
    /// Built-in specifications with their default grids.
    pub fn built_in(name: ExperimentName) -> Self {
        let propagator = PropagatorConfig::default()
            .checking_convergence(true)
            .recording(false);
        let base = ExperimentSpec {
            name,
            series: Vec::new(),
            omegas: Vec::new(),
            durations: Vec::new(),
            deviations: Vec::new(),
            axes: Vec::new(),
            target_fidelity: None,
            propagator,
        };
        match name {
            ExperimentName::Fig2d => ExperimentSpec {
                series: vec![Series::LzLinear, Series::RolandCerf, Series::Composite, Series::SpeedLimit],
                omegas: grid(0.3, 1.0, 0.05),
                target_fidelity: Some(FIGURE_TARGET),
                ..base
            },
            ExperimentName::Fig2e => ExperimentSpec {
                series: vec![Series::LzLinear, Series::RolandCerf, Series::Composite],
                omegas: vec![0.5],
                durations: grid(0.5, 20.0, 0.5),
                ..base
            },
            ExperimentName::Fig3c => ExperimentSpec {
                series: vec![Series::SuperadiabaticLinear, Series::LzLinear, Series::LzOmegaOnly],
                omegas: vec![0.55],
                durations: grid(0.5, 10.0, 0.5),
                ..base
            },
            ExperimentName::Fig3d => ExperimentSpec {
                series: vec![Series::SuperadiabaticLinear, Series::SuperadiabaticTangent, Series::LzLinear],
                omegas: vec![0.55],
                durations: vec![5.0],
                propagator: propagator.recording(true),
                ..base
            },
            ExperimentName::Fig4a => ExperimentSpec {
                series: vec![Series::SuperadiabaticTangent],
                omegas: vec![0.5],
                durations: vec![5.9],
                deviations: grid(-0.5, 1.0, 0.05),
                axes: vec![RobustnessAxis::Duration, RobustnessAxis::Coupling],
                ..base
            },
            ExperimentName::Fig4b => ExperimentSpec {
                series: vec![
                    Series::TangentMinimum,
                    Series::Composite,
                    Series::RolandCerf,
                    Series::LzLinear,
                    Series::SpeedLimit,
                ],
                omegas: grid(0.1, 1.0, 0.05),
                target_fidelity: Some(FIGURE_TARGET),
                ..base
            },
            ExperimentName::CustomSweep => base,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.series.is_empty() {
            bail!("{}: no series selected", self.name);
        }
        if self.omegas.is_empty() {
            bail!("{}: empty coupling grid", self.name);
        }
        let needs_durations = match self.name {
            ExperimentName::Fig2d | ExperimentName::Fig4b => false,
            ExperimentName::CustomSweep => self.target_fidelity.is_none(),
            _ => true,
        };
        if needs_durations && self.durations.is_empty() {
            bail!("{}: empty duration grid", self.name);
        }
        if self.name == ExperimentName::Fig4a && (self.deviations.is_empty() || self.axes.is_empty()) {
            bail!("{}: empty deviation grid", self.name);
        }
        if let Some(t) = self.target_fidelity {
            if !(t > 0.0 && t < 1.0) {
                bail!("target fidelity must lie in (0, 1), got {t}");
            }
        }
        for v in self.omegas.iter().chain(&self.durations).chain(&self.deviations) {
            if !v.is_finite() {
                bail!("grid values must be finite, got {v}");
            }
        }
        self.propagator.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    FinalFidelity,
    TrajectoryFidelity,
    TimeToFidelity,
    Duration,
    BaseCoupling,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: ExperimentName,
    pub series: Series,
    pub omega: f64,
    pub duration: Option<f64>,
    pub axis: Option<RobustnessAxis>,
    pub deviation: Option<f64>,
    pub tau: Option<f64>,
    pub target: Option<f64>,
    pub steps: usize,
    pub quantity: Quantity,
    pub value: Option<f64>,
    pub converged: bool,
    /// `ok`, `not_converged` or `invalid`.
    pub status: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn not_converged(&self) -> usize {
        self.rows.iter().filter(|r| r.status == "not_converged").count()
    }

    pub fn invalid(&self) -> usize {
        self.rows.iter().filter(|r| r.status == "invalid").count()
    }

    /// `#`-prefixed JSON provenance line.
    pub fn header(&self) -> String {
        let meta = serde_json::json!({
            "artifact": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "experiment": self.spec.name,
            "config_hash": self.spec.config_hash(),
            "spec": self.spec,
        });
        format!("# {meta}")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> anyhow::Result<()> {
        writeln!(out, "{}", self.header())?;
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One unit of work; each expands to one or more rows.
#[derive(Debug, Clone, Copy)]
enum Task {
    Final { series: Series, omega: f64, duration: f64 },
    Trajectory { series: Series, omega: f64, duration: f64 },
    TimeTo { series: Series, omega: f64, target: f64 },
    Bound { series: Series, omega: f64 },
    Robustness { series: Series, omega: f64, duration: f64, axis: RobustnessAxis },
}

fn tasks(spec: &ExperimentSpec) -> Vec<Task> {
    let mut out = Vec::new();
    let target = spec.target_fidelity.unwrap_or(FIGURE_TARGET);
    for &series in &spec.series {
        for &omega in &spec.omegas {
            match spec.name {
                ExperimentName::Fig2d | ExperimentName::Fig4b => match series {
                    Series::LzLinear | Series::RolandCerf => out.push(Task::TimeTo { series, omega, target }),
                    _ => out.push(Task::Bound { series, omega }),
                },
                ExperimentName::Fig3d => {
                    for &duration in &spec.durations {
                        out.push(Task::Trajectory { series, omega, duration });
                    }
                }
                ExperimentName::Fig4a => {
                    for &duration in &spec.durations {
                        for &axis in &spec.axes {
                            out.push(Task::Robustness { series, omega, duration, axis });
                        }
                    }
                }
                ExperimentName::Fig2e | ExperimentName::Fig3c => {
                    let mut durations = spec.durations.clone();
                    if series == Series::Composite {
                        if let Ok(s) = composite_between_sweep_endpoints(omega, COMPOSITE_HEIGHT, CompositeMode::Ideal) {
                            durations.push(s.duration());
                        }
                    }
                    for duration in durations {
                        out.push(Task::Final { series, omega, duration });
                    }
                }
                ExperimentName::CustomSweep => {
                    if let Some(target) = spec.target_fidelity {
                        out.push(Task::TimeTo { series, omega, target });
                    } else if !spec.deviations.is_empty() {
                        for &duration in &spec.durations {
                            for &axis in &spec.axes {
                                out.push(Task::Robustness { series, omega, duration, axis });
                            }
                        }
                    } else {
                        for &duration in &spec.durations {
                            out.push(Task::Final { series, omega, duration });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Builds the schedule of `series` at coupling `omega` and duration `duration`.
///
/// The composite pulse is designed between the Γ = ∓2 ground states and then
/// played over `duration`.
pub fn schedule_for(series: Series, omega: f64, duration: f64) -> Result<ProtocolSchedule, QdriveError> {
    match series {
        Series::Composite => {
            composite_between_sweep_endpoints(omega, COMPOSITE_HEIGHT, CompositeMode::Ideal)?.with_duration(duration)
        }
        Series::LzOmegaOnly => {
            let transformed = protocols::superadiabatic_linear(omega, duration)?;
            let coupling = transformed.omega_waveform().clone();
            make_custom_schedule(
                move |t| 2.0 * SWEEP_HALF_RANGE * (t - 0.5),
                move |t| coupling.value(t),
                duration,
                vec![],
            )
        }
        other => match other.protocol_kind() {
            Some(kind) => protocols::build(kind, omega, duration),
            None => Err(QdriveError::FamilyNotApplicable(other.to_string())),
        },
    }
}

/// Measurement endpoints: the ω-only sweep is judged against the ground
/// states of the untransformed sweep, everything else against its own
/// reference Hamiltonian.
fn endpoints_for(series: Series, omega: f64) -> Result<Endpoints, QdriveError> {
    match series {
        Series::LzOmegaOnly => Ok(Endpoints::Custom {
            initial: ground_state(-SWEEP_HALF_RANGE, omega)?,
            target: ground_state(SWEEP_HALF_RANGE, omega)?,
        }),
        _ => Ok(Endpoints::AdiabaticGround),
    }
}

struct RowBuilder<'a> {
    spec: &'a ExperimentSpec,
    series: Series,
    omega: f64,
}

impl RowBuilder<'_> {
    fn row(&self, quantity: Quantity, value: Result<f64, QdriveError>) -> ResultRow {
        let (value, converged, status, message) = match value {
            Ok(v) => (Some(v), true, "ok", String::new()),
            Err(QdriveError::NotConverged { coarse, fine }) => (
                Some(coarse),
                false,
                "not_converged",
                format!("F changes from {coarse} to {fine} when steps double"),
            ),
            Err(e) => (None, false, "invalid", e.to_string()),
        };
        ResultRow {
            experiment: self.spec.name,
            series: self.series,
            omega: self.omega,
            duration: None,
            axis: None,
            deviation: None,
            tau: None,
            target: None,
            steps: self.spec.propagator.steps,
            quantity,
            value,
            converged,
            status,
            message,
        }
    }
}

fn run_task(spec: &ExperimentSpec, task: Task) -> Vec<ResultRow> {
    let cfg = &spec.propagator;
    match task {
        Task::Final { series, omega, duration } => {
            let b = RowBuilder { spec, series, omega };
            let value = schedule_for(series, omega, duration)
                .and_then(|s| final_fidelity(&s, endpoints_for(series, omega)?, cfg));
            vec![ResultRow {
                duration: Some(duration),
                ..b.row(Quantity::FinalFidelity, value)
            }]
        }
        Task::Trajectory { series, omega, duration } => {
            let b = RowBuilder { spec, series, omega };
            let run = schedule_for(series, omega, duration).and_then(|s| {
                let (initial, _) = endpoints_for(series, omega)?.resolve(&s)?;
                propagate(&s, &initial, &cfg.recording(true))
            });
            match run {
                Ok(tr) => {
                    let converged = tr.convergence.is_none_or(|c| c.converged);
                    tr.points
                        .iter()
                        .map(|p| {
                            let mut row = b.row(Quantity::TrajectoryFidelity, Ok(p.fidelity));
                            row.duration = Some(duration);
                            row.tau = Some(p.tau);
                            if !converged {
                                row.converged = false;
                                row.status = "not_converged";
                                row.message = "final state changes when steps double".into();
                            }
                            row
                        })
                        .collect()
                }
                Err(e) => vec![ResultRow {
                    duration: Some(duration),
                    ..b.row(Quantity::TrajectoryFidelity, Err(e))
                }],
            }
        }
        Task::TimeTo { series, omega, target } => {
            let b = RowBuilder { spec, series, omega };
            let value = match series.protocol_kind() {
                Some(kind) => time_to_fidelity(kind, omega, target, cfg).map(|r| r.duration),
                None => Err(QdriveError::FamilyNotApplicable(series.to_string())),
            };
            vec![ResultRow {
                target: Some(target),
                ..b.row(Quantity::TimeToFidelity, value)
            }]
        }
        Task::Bound { series, omega } => {
            let b = RowBuilder { spec, series, omega };
            match series {
                Series::TangentMinimum => match min_time_at_coupling(omega) {
                    Ok(m) => vec![
                        b.row(Quantity::Duration, Ok(m.duration)),
                        b.row(Quantity::BaseCoupling, Ok(m.omega)),
                    ],
                    Err(e) => vec![b.row(Quantity::Duration, Err(e))],
                },
                Series::Composite => {
                    let value = composite_between_sweep_endpoints(omega, COMPOSITE_HEIGHT, CompositeMode::Ideal)
                        .map(|s| s.duration());
                    vec![b.row(Quantity::Duration, value)]
                }
                Series::SpeedLimit => {
                    let value = ground_state(-SWEEP_HALF_RANGE, omega).and_then(|ini| {
                        let fin = ground_state(SWEEP_HALF_RANGE, omega)?;
                        quantum_speed_limit(&ini, &fin, omega).map(|r| r.t_qs)
                    });
                    vec![b.row(Quantity::Duration, value)]
                }
                other => vec![b.row(
                    Quantity::Duration,
                    Err(QdriveError::FamilyNotApplicable(other.to_string())),
                )],
            }
        }
        Task::Robustness { series, omega, duration, axis } => {
            let b = RowBuilder { spec, series, omega };
            let scan = schedule_for(series, omega, duration)
                .and_then(|s| robustness_scan(&s, axis, &spec.deviations, cfg));
            match scan {
                Ok(scan) => scan
                    .deviations
                    .iter()
                    .zip(&scan.fidelities)
                    .zip(&scan.skipped)
                    .map(|((&d, &f), &skipped)| {
                        let value = if skipped {
                            Err(QdriveError::InvalidParameter(format!(
                                "deviation {d} drives the parameter to a non-positive value"
                            )))
                        } else {
                            Ok(f)
                        };
                        ResultRow {
                            duration: Some(duration),
                            axis: Some(axis),
                            deviation: Some(d),
                            ..b.row(Quantity::FinalFidelity, value)
                        }
                    })
                    .collect(),
                // A failing point (for example non-convergence) fails the
                // whole scan call; redo it point by point to flag only that one.
                Err(_) => spec
                    .deviations
                    .iter()
                    .map(|&d| {
                        let value = schedule_for(series, omega, duration)
                            .and_then(|s| robustness_scan(&s, axis, &[d], cfg))
                            .map(|r| r.fidelities[0]);
                        ResultRow {
                            duration: Some(duration),
                            axis: Some(axis),
                            deviation: Some(d),
                            ..b.row(Quantity::FinalFidelity, value)
                        }
                    })
                    .collect(),
            }
        }
    }
}

/// Runs every grid point of `spec`, on `workers` threads if given. Failing
/// points are flagged in their rows; rows come back in grid order.
pub fn run_experiment(spec: &ExperimentSpec, workers: Option<usize>) -> anyhow::Result<ExperimentResult> {
    spec.validate()?;
    let work = tasks(spec);
    let run = || -> Vec<ResultRow> {
        work.par_iter()
            .map(|t| run_task(spec, *t))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    let rows = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building worker pool")?
            .install(run),
        None => run(),
    };
    Ok(ExperimentResult {
        spec: spec.clone(),
        rows,
    })
}
