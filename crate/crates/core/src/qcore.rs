//! Shared data model: unit conventions, the diabatic-basis state, control
//! samples, end-point impulses and the protocol schedule.
//!
//! All energies are in units of ħω_rec and all times in units of 1/ω_rec, with
//! ħ = 1. A schedule is always parametrized by the dimensionless protocol time
//! τ = t/T ∈ [0, 1]; physical time is recovered as t = τ·T.
//!
//! Sign convention: Γ(0) = −2 and Γ(1) = +2 for every built-in protocol, ω ≥ 0,
//! so the ground state at τ = 0 is predominantly |0⟩. The composite pulse
//! end-point values are literally written "−Γ_0 for τ=0" with "Γ_0 = −2", which
//! would put +2 at τ = 0; this crate uses −2 there, consistent with the
//! level-crossing picture used by every other protocol.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QdriveError, Result};

pub type C64 = Complex64;

/// Unit conventions. Carries no data: energies are in ħω_rec, times in 1/ω_rec.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Units;

impl Units {
    pub const HBAR: f64 = 1.0;

    /// Physical (dimensionless) time for protocol time `tau` of a run of length `duration`.
    pub fn physical_time(tau: f64, duration: f64) -> f64 {
        tau * duration
    }

    /// Default recoil angular frequency ω_rec = 2π × 3.15 kHz, in rad/s.
    pub fn default_recoil_frequency() -> f64 {
        2.0 * std::f64::consts::PI * 3.15e3
    }
}

const NORM_TOLERANCE: f64 = 1e-12;

/// Normalized two-component state in the diabatic basis {|0⟩, |1⟩}.
///
/// The global phase is kept; comparisons go through [`QuantumState::fidelity`],
/// which is phase-insensitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumState {
    c0: C64,
    c1: C64,
}

impl QuantumState {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let norm = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QdriveError::InvalidParameter(
                "state amplitudes must be finite and not both zero".into(),
            ));
        }
        Ok(Self {
            c0: c0 / norm,
            c1: c1 / norm,
        })
    }

    /// Real amplitudes, normalized.
    pub fn from_real(c0: f64, c1: f64) -> Result<Self> {
        Self::new(C64::new(c0, 0.0), C64::new(c1, 0.0))
    }

    /// Amplitudes the caller guarantees to be normalized (unitary images of a
    /// normalized state). No renormalization is performed so that drift stays
    /// observable.
    pub(crate) fn from_unitary_image(c0: C64, c1: C64) -> Self {
        Self { c0, c1 }
    }

    pub fn ground_diabatic() -> Self {
        Self {
            c0: C64::new(1.0, 0.0),
            c1: C64::new(0.0, 0.0),
        }
    }

    pub fn excited_diabatic() -> Self {
        Self {
            c0: C64::new(0.0, 0.0),
            c1: C64::new(1.0, 0.0),
        }
    }

    pub fn c0(&self) -> C64 {
        self.c0
    }

    pub fn c1(&self) -> C64 {
        self.c1
    }

    pub fn amplitudes(&self) -> [C64; 2] {
        [self.c0, self.c1]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// Phase-insensitive squared overlap |⟨self|other⟩|².
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// The state orthogonal to `self` on the Bloch sphere (antipodal point).
    pub fn orthogonal(&self) -> QuantumState {
        Self {
            c0: -self.c1.conj(),
            c1: self.c0.conj(),
        }
    }

    /// Complex conjugate in the diabatic basis. Used for time reversal of real
    /// Hamiltonians.
    pub fn conj(&self) -> QuantumState {
        Self {
            c0: self.c0.conj(),
            c1: self.c1.conj(),
        }
    }

    /// Bloch vector (⟨σx⟩, ⟨σy⟩, ⟨σz⟩).
    pub fn bloch_vector(&self) -> [f64; 3] {
        let cross = self.c0.conj() * self.c1;
        [
            2.0 * cross.re,
            2.0 * cross.im,
            self.c0.norm_sqr() - self.c1.norm_sqr(),
        ]
    }
}

/// Control values at one instant: H = gamma·σz + omega·σx + omega_y·σy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub gamma: f64,
    pub omega: f64,
    pub omega_y: f64,
}

impl ControlSample {
    pub fn new(gamma: f64, omega: f64) -> Self {
        Self {
            gamma,
            omega,
            omega_y: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseLocation {
    Start,
    End,
}

/// Instantaneous z rotation exp(−i·area·σz) applied at τ = 0 or τ = 1.
///
/// `area` is the signed pulse area ∫Γ dt; the Bloch vector turns by 2·area
/// about z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpulseRotation {
    pub location: ImpulseLocation,
    pub area: f64,
}

impl ImpulseRotation {
    pub fn start(area: f64) -> Self {
        Self {
            location: ImpulseLocation::Start,
            area,
        }
    }

    pub fn end(area: f64) -> Self {
        Self {
            location: ImpulseLocation::End,
            area,
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

// Step for first derivatives in τ; equals 1e-6·T in physical time.
const FIRST_DERIVATIVE_STEP: f64 = 1e-6;
const SECOND_DERIVATIVE_STEP: f64 = 1e-4;
const KINK_PROBE_STEP: f64 = 1e-5;

/// A real control channel f(τ) with optional analytic τ-derivatives.
///
/// Missing derivatives fall back to finite differences (central in the
/// interior, one-sided second-order near the ends of [0, 1]).
#[derive(Clone)]
pub struct Waveform {
    value: ScalarFn,
    first: Option<ScalarFn>,
    second: Option<ScalarFn>,
}

impl fmt::Debug for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Waveform")
            .field("analytic_first", &self.first.is_some())
            .field("analytic_second", &self.second.is_some())
            .finish()
    }
}

impl Waveform {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(f),
            first: None,
            second: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_derivatives(move |_| c, |_| 0.0, |_| 0.0)
    }

    pub fn with_derivatives(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(f),
            first: Some(Arc::new(d1)),
            second: Some(Arc::new(d2)),
        }
    }

    pub fn is_analytic(&self) -> bool {
        self.first.is_some() && self.second.is_some()
    }

    #[inline]
    pub fn value(&self, tau: f64) -> f64 {
        (self.value)(tau)
    }

    /// df/dτ.
    pub fn derivative(&self, tau: f64) -> f64 {
        match &self.first {
            Some(d) => d(tau),
            None => self.numeric_first(tau),
        }
    }

    /// d²f/dτ².
    pub fn second_derivative(&self, tau: f64) -> f64 {
        match &self.second {
            Some(d) => d(tau),
            None => self.numeric_second(tau),
        }
    }

    fn numeric_first(&self, tau: f64) -> f64 {
        let h = FIRST_DERIVATIVE_STEP;
        let f = &self.value;
        if tau - h < 0.0 {
            (-3.0 * f(tau) + 4.0 * f(tau + h) - f(tau + 2.0 * h)) / (2.0 * h)
        } else if tau + h > 1.0 {
            (3.0 * f(tau) - 4.0 * f(tau - h) + f(tau - 2.0 * h)) / (2.0 * h)
        } else {
            (f(tau + h) - f(tau - h)) / (2.0 * h)
        }
    }

    fn numeric_second(&self, tau: f64) -> f64 {
        let h = SECOND_DERIVATIVE_STEP;
        let f = &self.value;
        if tau - h < 0.0 {
            (2.0 * f(tau) - 5.0 * f(tau + h) + 4.0 * f(tau + 2.0 * h) - f(tau + 3.0 * h)) / (h * h)
        } else if tau + h > 1.0 {
            (2.0 * f(tau) - 5.0 * f(tau - h) + 4.0 * f(tau - 2.0 * h) - f(tau - 3.0 * h)) / (h * h)
        } else {
            (f(tau + h) - 2.0 * f(tau) + f(tau - h)) / (h * h)
        }
    }

    /// Whether the channel looks differentiable at `tau`. Analytic channels
    /// always are; numeric channels are probed by comparing one-sided slopes.
    pub fn is_differentiable_at(&self, tau: f64) -> bool {
        if self.first.is_some() {
            return true;
        }
        let h = KINK_PROBE_STEP;
        if tau - 2.0 * h < 0.0 || tau + 2.0 * h > 1.0 {
            return self.numeric_first(tau).is_finite();
        }
        let f = &self.value;
        let right = (-3.0 * f(tau) + 4.0 * f(tau + h) - f(tau + 2.0 * h)) / (2.0 * h);
        let left = (3.0 * f(tau) - 4.0 * f(tau - h) + f(tau - 2.0 * h)) / (2.0 * h);
        left.is_finite() && right.is_finite() && (left - right).abs() <= 1e-5 * (1.0 + left.abs() + right.abs())
    }

    /// Pointwise multiple s·f(τ).
    pub fn scaled(&self, s: f64) -> Waveform {
        let v = self.value.clone();
        let mut out = Waveform::new(move |t| s * v(t));
        if let Some(d) = self.first.clone() {
            out.first = Some(Arc::new(move |t| s * d(t)));
        }
        if let Some(d) = self.second.clone() {
            out.second = Some(Arc::new(move |t| s * d(t)));
        }
        out
    }

    /// f(1 − τ).
    pub fn reversed(&self) -> Waveform {
        let v = self.value.clone();
        let mut out = Waveform::new(move |t| v(1.0 - t));
        if let Some(d) = self.first.clone() {
            out.first = Some(Arc::new(move |t| -d(1.0 - t)));
        }
        if let Some(d) = self.second.clone() {
            out.second = Some(Arc::new(move |t| d(1.0 - t)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    LzLinear,
    RolandCerf,
    Composite,
    SuperadiabaticLinear,
    SuperadiabaticTangent,
    Custom,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 6] = [
        ProtocolKind::LzLinear,
        ProtocolKind::RolandCerf,
        ProtocolKind::Composite,
        ProtocolKind::SuperadiabaticLinear,
        ProtocolKind::SuperadiabaticTangent,
        ProtocolKind::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolKind::LzLinear => "lz_linear",
            ProtocolKind::RolandCerf => "roland_cerf",
            ProtocolKind::Composite => "composite",
            ProtocolKind::SuperadiabaticLinear => "superadiabatic_linear",
            ProtocolKind::SuperadiabaticTangent => "superadiabatic_tangent",
            ProtocolKind::Custom => "custom",
        }
    }

    pub fn is_superadiabatic(&self) -> bool {
        matches!(
            self,
            ProtocolKind::SuperadiabaticLinear | ProtocolKind::SuperadiabaticTangent
        )
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = QdriveError;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| QdriveError::InvalidParameter(format!("unknown protocol kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeMode {
    /// Exact impulses, τ_0 = 0.
    Ideal,
    /// Rectangular Γ = ±Γ_M pulses of physical duration π/(4Γ_M).
    Finite,
}

/// Kind-specific construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolParams {
    LzLinear {
        omega: f64,
    },
    RolandCerf {
        omega: f64,
        epsilon: f64,
    },
    Composite {
        omega: f64,
        gamma_m: f64,
        tau0: f64,
        overlap: f64,
        mode: CompositeMode,
    },
    SuperadiabaticLinear {
        omega: f64,
    },
    SuperadiabaticTangent {
        omega: f64,
    },
    TangentBase {
        omega: f64,
    },
    Custom,
}

impl ProtocolParams {
    /// The base coupling ω for constant-coupling families.
    pub fn omega(&self) -> Option<f64> {
        match *self {
            ProtocolParams::LzLinear { omega }
            | ProtocolParams::RolandCerf { omega, .. }
            | ProtocolParams::Composite { omega, .. }
            | ProtocolParams::SuperadiabaticLinear { omega }
            | ProtocolParams::SuperadiabaticTangent { omega }
            | ProtocolParams::TangentBase { omega } => Some(omega),
            ProtocolParams::Custom => None,
        }
    }
}

/// How the schedule's Hamiltonian relates to the driven physical system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    /// Γσz + ωσx (+ optional σy) is the Hamiltonian the state is measured against.
    Direct,
    /// Counter-diabatic term carried explicitly on the σy channel.
    ExplicitSigmaY,
    /// Single-field (Γ′, ω′) form with end impulses; the state is measured
    /// against the adiabatic frame of `reference` after undoing the z frame
    /// rotation β(τ)/2.
    Transformed,
}

/// A time-parametrized control pair (Γ(τ), ω(τ)), an optional σy channel and
/// a list of instantaneous end impulses, over duration T.
#[derive(Clone)]
pub struct ProtocolSchedule {
    pub(crate) kind: ProtocolKind,
    pub(crate) duration: f64,
    pub(crate) gamma: Waveform,
    pub(crate) omega: Waveform,
    pub(crate) omega_y: Option<Waveform>,
    pub(crate) impulses: Vec<ImpulseRotation>,
    pub(crate) params: ProtocolParams,
    pub(crate) realization: Realization,
    pub(crate) reference: Option<Arc<ProtocolSchedule>>,
    pub(crate) frame_angle: Option<Waveform>,
    pub(crate) breakpoints: Vec<f64>,
    pub(crate) warnings: Vec<String>,
}

impl fmt::Debug for ProtocolSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProtocolSchedule")
            .field("kind", &self.kind)
            .field("duration", &self.duration)
            .field("params", &self.params)
            .field("realization", &self.realization)
            .field("impulses", &self.impulses)
            .field("breakpoints", &self.breakpoints)
            .field("warnings", &self.warnings)
            .finish()
    }
}

pub(crate) fn check_duration(duration: f64) -> Result<()> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(QdriveError::InvalidParameter(format!(
            "duration T must be positive and finite, got {duration}"
        )));
    }
    Ok(())
}

/// Builds a user-defined schedule. No smoothness is assumed.
pub fn make_custom_schedule(
    gamma_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
    omega_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
    duration: f64,
    impulses: Vec<ImpulseRotation>,
) -> Result<ProtocolSchedule> {
    ProtocolSchedule::from_waveforms(
        ProtocolKind::Custom,
        ProtocolParams::Custom,
        Waveform::new(gamma_fn),
        Waveform::new(omega_fn),
        duration,
        impulses,
    )
}

impl ProtocolSchedule {
    pub(crate) fn from_waveforms(
        kind: ProtocolKind,
        params: ProtocolParams,
        gamma: Waveform,
        omega: Waveform,
        duration: f64,
        impulses: Vec<ImpulseRotation>,
    ) -> Result<Self> {
        check_duration(duration)?;
        if let Some(bad) = impulses.iter().find(|i| !i.area.is_finite()) {
            return Err(QdriveError::InvalidParameter(format!(
                "impulse area must be finite, got {}",
                bad.area
            )));
        }
        Ok(Self {
            kind,
            duration,
            gamma,
            omega,
            omega_y: None,
            impulses,
            params,
            realization: Realization::Direct,
            reference: None,
            frame_angle: None,
            breakpoints: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// Adds an explicit σy channel.
    pub fn with_omega_y(mut self, omega_y: Waveform) -> Self {
        self.omega_y = Some(omega_y);
        self
    }

    /// Declares interior discontinuities; the propagator places grid nodes on them.
    pub fn with_breakpoints(mut self, mut breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.iter().any(|b| !(b.is_finite() && *b > 0.0 && *b < 1.0)) {
            return Err(QdriveError::InvalidParameter(
                "breakpoints must lie strictly inside (0, 1)".into(),
            ));
        }
        breakpoints.sort_by(|a, b| a.total_cmp(b));
        breakpoints.dedup();
        self.breakpoints = breakpoints;
        Ok(self)
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn impulses(&self) -> &[ImpulseRotation] {
        &self.impulses
    }

    pub fn realization(&self) -> Realization {
        self.realization
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn gamma_waveform(&self) -> &Waveform {
        &self.gamma
    }

    pub fn omega_waveform(&self) -> &Waveform {
        &self.omega
    }

    pub fn omega_y_waveform(&self) -> Option<&Waveform> {
        self.omega_y.as_ref()
    }

    /// The schedule whose adiabatic frame defines fidelity: the untransformed
    /// base for [`Realization::Transformed`] schedules, `self` otherwise.
    pub fn reference(&self) -> &ProtocolSchedule {
        self.reference.as_deref().unwrap_or(self)
    }

    pub fn has_reference(&self) -> bool {
        self.reference.is_some()
    }

    /// Control sample at `tau`. Impulses are not folded in.
    pub fn sample(&self, tau: f64) -> Result<ControlSample> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(QdriveError::Domain { tau });
        }
        Ok(self.sample_unchecked(tau))
    }

    #[inline]
    pub(crate) fn sample_unchecked(&self, tau: f64) -> ControlSample {
        ControlSample {
            gamma: self.gamma.value(tau),
            omega: self.omega.value(tau),
            omega_y: self.omega_y.as_ref().map_or(0.0, |w| w.value(tau)),
        }
    }

    /// (Γ, ω) of the original Hamiltonian at `tau`, ignoring any σy channel.
    pub fn reference_sample(&self, tau: f64) -> ControlSample {
        let r = self.reference();
        ControlSample::new(r.gamma.value(tau), r.omega.value(tau))
    }

    /// Pulse area of the virtual end jump that maps the transformed frame back
    /// to the laboratory frame at `tau` (zero for untransformed schedules).
    pub fn frame_area(&self, tau: f64) -> f64 {
        match (&self.realization, &self.frame_angle) {
            (Realization::Transformed, Some(beta)) => 0.5 * beta.value(tau),
            _ => 0.0,
        }
    }

    /// Same τ-waveforms and impulses played over a different duration.
    pub fn with_duration(&self, duration: f64) -> Result<Self> {
        check_duration(duration)?;
        let mut out = self.clone();
        out.duration = duration;
        if let Some(r) = &self.reference {
            out.reference = Some(Arc::new(r.with_duration(duration)?));
        }
        Ok(out)
    }

    /// Every coupling scaled by `scale`, including the σy channel and the
    /// coupling of the reference Hamiltonian. Γ channels and impulses are
    /// unchanged.
    pub fn with_coupling_scale(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QdriveError::InvalidParameter(format!(
                "coupling scale must be positive, got {scale}"
            )));
        }
        let mut out = self.clone();
        out.omega = self.omega.scaled(scale);
        out.omega_y = self.omega_y.as_ref().map(|w| w.scaled(scale));
        if let Some(r) = &self.reference {
            out.reference = Some(Arc::new(r.with_coupling_scale(scale)?));
        }
        Ok(out)
    }

    /// Time-reversed schedule: channels evaluated at 1 − τ, start and end
    /// impulses swapped. For real Hamiltonians, propagating the reversed
    /// schedule from conj(ψ_final) and conjugating recovers ψ_initial.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.gamma = self.gamma.reversed();
        out.omega = self.omega.reversed();
        out.omega_y = self.omega_y.as_ref().map(Waveform::reversed);
        out.impulses = self
            .impulses
            .iter()
            .map(|i| ImpulseRotation {
                location: match i.location {
                    ImpulseLocation::Start => ImpulseLocation::End,
                    ImpulseLocation::End => ImpulseLocation::Start,
                },
                area: i.area,
            })
            .collect();
        out.breakpoints = self.breakpoints.iter().rev().map(|b| 1.0 - b).collect();
        out.reference = self.reference.as_ref().map(|r| Arc::new(r.reversed()));
        out.frame_angle = self.frame_angle.as_ref().map(Waveform::reversed);
        out.kind = ProtocolKind::Custom;
        out.params = ProtocolParams::Custom;
        out
    }
}

/// Free-function form of [`ProtocolSchedule::sample`].
pub fn sample(schedule: &ProtocolSchedule, tau: f64) -> Result<ControlSample> {
    schedule.sample(tau)
}
