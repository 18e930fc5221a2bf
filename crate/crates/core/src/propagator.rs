//! Piecewise exact propagation of i·dψ/dt = (Γσz + ωσx + ω_y·σy)ψ.
//!
//! Each step applies closed-form SU(2) exponentials, so the evolution is
//! unitary up to rounding for any step size. Impulses are events at τ = 0 and
//! τ = 1 applied outside the step loop.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adiabatic::eigensystem;
use crate::error::{QdriveError, Result};
use crate::qcore::{
    ControlSample, ImpulseLocation, ImpulseRotation, ProtocolSchedule, QuantumState, C64,
};

pub const DEFAULT_STEPS: usize = 4096;
pub const MIN_STEPS: usize = 16;
/// Largest |ΔF_fin| between N and 2N steps that still counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;

/// Per-step quadrature of the time-ordered exponential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRule {
    /// exp(−iΔt·H(τ_mid)); second order.
    Midpoint,
    /// Fourth-order commutator-free Magnus: two exponentials built from H at
    /// the two Gauss-Legendre nodes of the step.
    #[default]
    Magnus4,
}

/// How end impulses are realized.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ImpulseMode {
    /// exp(−i·area·σz), no elapsed time.
    #[default]
    Exact,
    /// Rectangular σz pulse of the given height for |area|/height, with the
    /// end-point coupling left on.
    Finite { height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub steps: usize,
    pub sample_rule: SampleRule,
    pub record_trajectory: bool,
    pub convergence_check: bool,
    pub impulse_mode: ImpulseMode,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            sample_rule: SampleRule::default(),
            record_trajectory: true,
            convergence_check: false,
            impulse_mode: ImpulseMode::Exact,
        }
    }
}

impl PropagatorConfig {
    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_rule(mut self, rule: SampleRule) -> Self {
        self.sample_rule = rule;
        self
    }

    pub fn recording(mut self, on: bool) -> Self {
        self.record_trajectory = on;
        self
    }

    pub fn checking_convergence(mut self, on: bool) -> Self {
        self.convergence_check = on;
        self
    }

    pub fn with_impulse_mode(mut self, mode: ImpulseMode) -> Self {
        self.impulse_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < MIN_STEPS {
            return Err(QdriveError::InvalidParameter(format!(
                "steps must be at least {MIN_STEPS}, got {}",
                self.steps
            )));
        }
        if let ImpulseMode::Finite { height } = self.impulse_mode {
            if !(height.is_finite() && height > 0.0) {
                return Err(QdriveError::InvalidParameter(format!(
                    "finite impulse height must be positive, got {height}"
                )));
            }
        }
        Ok(())
    }
}

/// 2×2 unitary, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2(pub [[C64; 2]; 2]);

impl Unitary2 {
    pub fn identity() -> Self {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        Unitary2([[one, zero], [zero, one]])
    }

    /// exp(−i·dt·(a·σz + b·σx + c·σy)).
    ///
    /// With r = √(a² + b² + c²) and θ = dt·r this is
    /// cos θ·I − i·sin θ·(aσz + bσx + cσy)/r; θ = 0 gives the identity.
    pub fn from_generator(a: f64, b: f64, c: f64, dt: f64) -> Self {
        let r = (a * a + b * b + c * c).sqrt();
        let theta = dt * r;
        if theta == 0.0 {
            return Self::identity();
        }
        let (sin, cos) = theta.sin_cos();
        let (nz, nx, ny) = (a / r, b / r, c / r);
        Unitary2([
            [C64::new(cos, -sin * nz), C64::new(-sin * ny, -sin * nx)],
            [C64::new(sin * ny, -sin * nx), C64::new(cos, sin * nz)],
        ])
    }

    /// exp(−i·area·σz).
    pub fn z_rotation(area: f64) -> Self {
        let zero = C64::new(0.0, 0.0);
        Unitary2([
            [Complex64::from_polar(1.0, -area), zero],
            [zero, Complex64::from_polar(1.0, area)],
        ])
    }

    pub fn apply(&self, state: &QuantumState) -> QuantumState {
        let [[a, b], [c, d]] = self.0;
        let (x, y) = (state.c0(), state.c1());
        QuantumState::from_unitary_image(a * x + b * y, c * x + d * y)
    }

    /// Matrix product self·rhs.
    pub fn compose(&self, rhs: &Unitary2) -> Unitary2 {
        let m = &self.0;
        let n = &rhs.0;
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[i][0] * n[0][j] + m[i][1] * n[1][j];
            }
        }
        Unitary2(out)
    }

    pub fn dagger(&self) -> Unitary2 {
        let [[a, b], [c, d]] = self.0;
        Unitary2([[a.conj(), c.conj()], [b.conj(), d.conj()]])
    }
}

/// Applies exp(−i·area·σz) to `state`.
pub fn apply_impulse(state: &QuantumState, impulse: &ImpulseRotation) -> QuantumState {
    Unitary2::z_rotation(impulse.area).apply(state)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub tau: f64,
    pub state: QuantumState,
    /// |⟨ground of the reference Hamiltonian at τ|ψ(τ)⟩|²; NaN where the
    /// reference Hamiltonian is degenerate.
    pub fidelity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub steps: usize,
    pub coarse: f64,
    pub fine: f64,
    pub converged: bool,
}

impl ConvergenceReport {
    pub fn delta(&self) -> f64 {
        (self.coarse - self.fine).abs()
    }
}

/// Output of [`propagate`].
///
/// Recorded states for transformed (superadiabatic) schedules are laboratory
/// frame states: the z frame rotation β(τ)/2 is undone at every point, as an
/// end jump would do at that instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_state: QuantumState,
    pub steps: usize,
    pub convergence: Option<ConvergenceReport>,
}

impl Trajectory {
    pub fn min_fidelity(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.fidelity)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.state.norm_sqr() - 1.0).abs())
            .fold((self.final_state.norm_sqr() - 1.0).abs(), f64::max)
    }
}

fn grid(schedule: &ProtocolSchedule, steps: usize) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    if schedule.breakpoints().is_empty() {
        return nodes;
    }
    nodes.extend_from_slice(schedule.breakpoints());
    nodes.sort_by(|a, b| a.total_cmp(b));
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    nodes
}

#[inline]
fn generator(schedule: &ProtocolSchedule, tau: f64) -> Result<(f64, f64, f64)> {
    let ControlSample {
        gamma,
        omega,
        omega_y,
    } = schedule.sample_unchecked(tau);
    if !(gamma.is_finite() && omega.is_finite() && omega_y.is_finite()) {
        return Err(QdriveError::MalformedSchedule(format!(
            "non-finite control sample at tau = {tau}"
        )));
    }
    Ok((gamma, omega, omega_y))
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3/6
const MAGNUS_WEIGHT_A: f64 = 0.25 + GAUSS_OFFSET;
const MAGNUS_WEIGHT_B: f64 = 0.25 - GAUSS_OFFSET;

fn step(
    schedule: &ProtocolSchedule,
    rule: SampleRule,
    tau_a: f64,
    tau_b: f64,
    state: QuantumState,
) -> Result<QuantumState> {
    let h_tau = tau_b - tau_a;
    let dt = h_tau * schedule.duration();
    match rule {
        SampleRule::Midpoint => {
            let (a, b, c) = generator(schedule, tau_a + 0.5 * h_tau)?;
            Ok(Unitary2::from_generator(a, b, c, dt).apply(&state))
        }
        SampleRule::Magnus4 => {
            let h1 = generator(schedule, tau_a + (0.5 - GAUSS_OFFSET) * h_tau)?;
            let h2 = generator(schedule, tau_a + (0.5 + GAUSS_OFFSET) * h_tau)?;
            let mix = |wa: f64, wb: f64| {
                (
                    wa * h1.0 + wb * h2.0,
                    wa * h1.1 + wb * h2.1,
                    wa * h1.2 + wb * h2.2,
                )
            };
            let first = mix(MAGNUS_WEIGHT_A, MAGNUS_WEIGHT_B);
            let second = mix(MAGNUS_WEIGHT_B, MAGNUS_WEIGHT_A);
            let s = Unitary2::from_generator(first.0, first.1, first.2, dt).apply(&state);
            Ok(Unitary2::from_generator(second.0, second.1, second.2, dt).apply(&s))
        }
    }
}

fn apply_end_impulses(
    schedule: &ProtocolSchedule,
    location: ImpulseLocation,
    mode: ImpulseMode,
    mut state: QuantumState,
) -> Result<QuantumState> {
    let edge = match location {
        ImpulseLocation::Start => 0.0,
        ImpulseLocation::End => 1.0,
    };
    for impulse in schedule.impulses().iter().filter(|i| i.location == location) {
        state = match mode {
            ImpulseMode::Exact => apply_impulse(&state, impulse),
            ImpulseMode::Finite { height } => {
                let (_, omega, omega_y) = generator(schedule, edge)?;
                let width = impulse.area.abs() / height;
                let g = height.copysign(impulse.area);
                Unitary2::from_generator(g, omega, omega_y, width).apply(&state)
            }
        };
    }
    Ok(state)
}

fn reference_fidelity(schedule: &ProtocolSchedule, tau: f64, state: &QuantumState) -> f64 {
    match eigensystem(schedule.reference_sample(tau)) {
        Ok(frame) => frame.ground.fidelity(state),
        Err(_) => f64::NAN,
    }
}

fn lab_frame(schedule: &ProtocolSchedule, tau: f64, state: QuantumState) -> QuantumState {
    let area = schedule.frame_area(tau);
    if area == 0.0 {
        state
    } else {
        Unitary2::z_rotation(area).apply(&state)
    }
}

fn run(
    schedule: &ProtocolSchedule,
    initial: &QuantumState,
    config: &PropagatorConfig,
    steps: usize,
    record: bool,
) -> Result<(QuantumState, Vec<TrajectoryPoint>)> {
    let nodes = grid(schedule, steps);
    let mut points = Vec::with_capacity(if record { nodes.len() } else { 0 });
    if record {
        points.push(TrajectoryPoint {
            tau: 0.0,
            state: *initial,
            fidelity: reference_fidelity(schedule, 0.0, initial),
        });
    }
    let mut state =
        apply_end_impulses(schedule, ImpulseLocation::Start, config.impulse_mode, *initial)?;
    let last = nodes.len() - 1;
    for (k, w) in nodes.windows(2).enumerate() {
        state = step(schedule, config.sample_rule, w[0], w[1], state)?;
        if record && k + 1 < last {
            let lab = lab_frame(schedule, w[1], state);
            points.push(TrajectoryPoint {
                tau: w[1],
                state: lab,
                fidelity: reference_fidelity(schedule, w[1], &lab),
            });
        }
    }
    let final_state = apply_end_impulses(schedule, ImpulseLocation::End, config.impulse_mode, state)?;
    if record {
        points.push(TrajectoryPoint {
            tau: 1.0,
            state: final_state,
            fidelity: reference_fidelity(schedule, 1.0, &final_state),
        });
    }
    Ok((final_state, points))
}

fn convergence_metric(schedule: &ProtocolSchedule, state: &QuantumState) -> f64 {
    let f = reference_fidelity(schedule, 1.0, state);
    if f.is_nan() {
        state.norm_sqr()
    } else {
        f
    }
}

/// Propagates `initial` through `schedule`.
pub fn propagate(
    schedule: &ProtocolSchedule,
    initial: &QuantumState,
    config: &PropagatorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !initial.is_normalized() {
        return Err(QdriveError::InvalidParameter(
            "initial state must be normalized".into(),
        ));
    }
    let (final_state, points) = run(schedule, initial, config, config.steps, config.record_trajectory)?;
    let convergence = if config.convergence_check {
        let (fine_state, _) = run(schedule, initial, config, 2 * config.steps, false)?;
        let coarse = convergence_metric(schedule, &final_state);
        let fine = convergence_metric(schedule, &fine_state);
        let overlap_gap = 1.0 - final_state.fidelity(&fine_state);
        Some(ConvergenceReport {
            steps: config.steps,
            coarse,
            fine,
            converged: (coarse - fine).abs() < CONVERGENCE_TOLERANCE
                && overlap_gap < CONVERGENCE_TOLERANCE.sqrt(),
        })
    } else {
        None
    };
    Ok(Trajectory {
        points,
        final_state,
        steps: config.steps,
        convergence,
    })
}

/// Final state only, no recording or convergence check.
pub fn propagate_final(
    schedule: &ProtocolSchedule,
    initial: &QuantumState,
    config: &PropagatorConfig,
) -> Result<QuantumState> {
    config.validate()?;
    run(schedule, initial, config, config.steps, false).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols;
    use crate::qcore::{make_custom_schedule, CompositeMode};
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn generator_exponential_is_unitary() {
        for &(a, b, c, dt) in &[(1.0, 0.0, 0.0, 0.3), (0.2, -1.3, 0.7, 2.1), (0.0, 0.0, 0.0, 1.0)] {
            let u = Unitary2::from_generator(a, b, c, dt);
            let p = u.compose(&u.dagger());
            assert!((p.0[0][0] - 1.0).norm() < 1e-15);
            assert!(p.0[0][1].norm() < 1e-15);
            assert!((p.0[1][1] - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_impulse_is_identity() {
        let s = QuantumState::from_real(0.6, 0.8).unwrap();
        assert_eq!(apply_impulse(&s, &ImpulseRotation::start(0.0)), s);
    }

    #[test]
    fn quarter_pi_impulse_phases() {
        let s = apply_impulse(&QuantumState::ground_diabatic(), &ImpulseRotation::start(FRAC_PI_4));
        assert!((s.c0() - C64::from_polar(1.0, -FRAC_PI_4)).norm() < 1e-15);
        let s = apply_impulse(&QuantumState::excited_diabatic(), &ImpulseRotation::start(FRAC_PI_4));
        assert!((s.c1() - C64::from_polar(1.0, FRAC_PI_4)).norm() < 1e-15);
        // On the Bloch sphere: +x turns into +y.
        let plus = QuantumState::from_real(1.0, 1.0).unwrap();
        let [x, y, _] = apply_impulse(&plus, &ImpulseRotation::start(FRAC_PI_4)).bloch_vector();
        assert!(x.abs() < 1e-15 && (y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_field_rabi_transfer() {
        let s = make_custom_schedule(|_| 0.0, |_| 0.5, PI, vec![]).unwrap();
        for rule in [SampleRule::Midpoint, SampleRule::Magnus4] {
            let cfg = PropagatorConfig::default().with_rule(rule);
            let tr = propagate(&s, &QuantumState::ground_diabatic(), &cfg).unwrap();
            let p1 = tr.final_state.c1().norm_sqr();
            assert!((p1 - 1.0).abs() < 1e-12, "{rule:?}: {p1}");
            assert_eq!(tr.points.len(), DEFAULT_STEPS + 1);
        }
    }

    #[test]
    fn degenerate_sample_is_free_evolution() {
        let s = make_custom_schedule(|_| 0.0, |_| 0.0, 3.0, vec![]).unwrap();
        let psi = QuantumState::from_real(0.6, 0.8).unwrap();
        let tr = propagate(&s, &psi, &PropagatorConfig::default()).unwrap();
        assert_eq!(tr.final_state, psi);
        assert!(tr.points[1].fidelity.is_nan());
    }

    #[test]
    fn malformed_schedule_is_reported() {
        let s = make_custom_schedule(|t| 1.0 / (t - 0.5), |_| 0.5, 1.0, vec![]).unwrap();
        // 4096 nodes: the Gauss points avoid τ = ½ but the midpoint rule hits it.
        let cfg = PropagatorConfig::default().with_rule(SampleRule::Midpoint).with_steps(17);
        let err = propagate(&s, &QuantumState::ground_diabatic(), &cfg).unwrap_err();
        assert!(matches!(err, QdriveError::MalformedSchedule(_)));
    }

    #[test]
    fn too_few_steps_rejected() {
        let s = make_custom_schedule(|_| 0.0, |_| 0.5, 1.0, vec![]).unwrap();
        let cfg = PropagatorConfig::default().with_steps(8);
        assert!(propagate(&s, &QuantumState::ground_diabatic(), &cfg).is_err());
    }

    #[test]
    fn breakpoints_become_grid_nodes() {
        let s = make_custom_schedule(|_| 0.0, |_| 0.5, 1.0, vec![])
            .unwrap()
            .with_breakpoints(vec![0.123_456_7])
            .unwrap();
        let tr = propagate(&s, &QuantumState::ground_diabatic(), &PropagatorConfig::default().with_steps(16)).unwrap();
        assert_eq!(tr.points.len(), 18);
        assert!(tr.points.windows(2).all(|w| w[0].tau < w[1].tau));
        assert!(tr.points.iter().any(|p| p.tau == 0.123_456_7));
    }

    fn start_ground(s: &ProtocolSchedule) -> QuantumState {
        let c = s.reference_sample(0.0);
        crate::adiabatic::ground_state(c.gamma, c.omega).unwrap()
    }

    #[test]
    fn linear_sweep_follows_transition_formula() {
        let s = protocols::lz_linear(0.5, 8.0).unwrap();
        let tr = propagate(&s, &start_ground(&s), &PropagatorConfig::default()).unwrap();
        let closed = 1.0 - (-PI * 8.0 * 0.25 / 4.0).exp();
        assert!((tr.points.last().unwrap().fidelity - closed).abs() < 0.05);
    }

    #[test]
    fn tangent_superadiabatic_tracks_ground_state() {
        let s = protocols::superadiabatic_tangent(0.55, 5.0).unwrap();
        let tr = propagate(&s, &start_ground(&s), &PropagatorConfig::default()).unwrap();
        assert!(tr.min_fidelity() >= 0.9999, "{}", tr.min_fidelity());
        assert!(tr.max_norm_drift() < 1e-12);
    }

    #[test]
    fn finite_composite_approaches_ideal() {
        let ideal = protocols::composite_between_sweep_endpoints(0.5, 100.0, CompositeMode::Ideal).unwrap();
        let finite = protocols::composite_between_sweep_endpoints(0.5, 100.0, CompositeMode::Finite).unwrap();
        let cfg = PropagatorConfig::default();
        let a = propagate(&ideal, &start_ground(&ideal), &cfg).unwrap().final_state;
        let b = propagate(&finite, &start_ground(&finite), &cfg).unwrap().final_state;
        assert!(a.fidelity(&b) >= 1.0 - 1e-4, "{}", a.fidelity(&b));
    }

    #[test]
    fn finite_impulse_mode_matches_exact_for_tall_pulses() {
        let s = protocols::superadiabatic_linear(0.5, 2.0).unwrap();
        let psi = start_ground(&s);
        let exact = propagate_final(&s, &psi, &PropagatorConfig::default()).unwrap();
        let finite = propagate_final(
            &s,
            &psi,
            &PropagatorConfig::default().with_impulse_mode(ImpulseMode::Finite { height: 1e5 }),
        )
        .unwrap();
        assert!(exact.fidelity(&finite) > 1.0 - 1e-8);
    }

    #[test]
    fn convergence_check_reports_small_change() {
        let s = protocols::roland_cerf_for_duration(0.3, 6.0).unwrap();
        let cfg = PropagatorConfig::default().checking_convergence(true).recording(false);
        let rep = propagate(&s, &start_ground(&s), &cfg).unwrap().convergence.unwrap();
        assert!(rep.converged && rep.delta() < 1e-10, "{rep:?}");
    }

    #[test]
    fn time_reversal_recovers_initial_state() {
        for s in [
            protocols::lz_linear(0.5, 6.0).unwrap(),
            protocols::superadiabatic_tangent(0.4, 3.0).unwrap(),
            protocols::composite_between_sweep_endpoints(0.5, 50.0, CompositeMode::Finite).unwrap(),
        ] {
            let psi = start_ground(&s);
            let cfg = PropagatorConfig::default();
            let fin = propagate_final(&s, &psi, &cfg).unwrap();
            let back = propagate_final(&s.reversed(), &fin.conj(), &cfg).unwrap().conj();
            assert!((back.fidelity(&psi) - 1.0).abs() < 1e-10, "{:?}", s.kind());
        }
    }
}
