//! Generators for the protocol families and the superadiabatic transformation.
//!
//! The transformation folds the counter-diabatic term (1/2)(dφ/dt)σy into a
//! single-field Hamiltonian Γ′σz + ω′σx by a time-dependent z rotation of
//! angle β = arctan(α/ω):
//!
//! ```text
//! Γ′ = Γ − (1/2)·dβ/dt,    ω′ = ω·√(1 + (α/ω)²),    α = (Γω̇ − ωΓ̇) / (2(Γ² + ω²))
//! ```
//!
//! The jumps of β at the ends of the protocol become z impulses of area
//! −β(0)/2 at the start and +β(1)/2 at the end.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use crate::adiabatic::{ground_state, ControlJet};
use crate::error::{QdriveError, Result};
use crate::qcore::{
    check_duration, CompositeMode, ImpulseRotation, ProtocolKind, ProtocolParams,
    ProtocolSchedule, Realization, Waveform,
};

/// Diabatic energy at the ends of every built-in sweep, Γ(0) = −Γ_0, Γ(1) = +Γ_0.
pub const SWEEP_HALF_RANGE: f64 = 2.0;

/// Pulse area of each composite end pulse, Γ_M·τ_0·T.
pub const COMPOSITE_PULSE_AREA: f64 = FRAC_PI_4;

/// Γ_M must be at least this multiple of ω for the impulse picture to hold.
pub const COMPOSITE_HEIGHT_RATIO: f64 = 10.0;

// Grid used to look for zeros of ω before transforming.
const SINGULARITY_PROBE_POINTS: usize = 2001;

fn check_coupling(omega: f64) -> Result<()> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(QdriveError::InvalidParameter(format!(
            "coupling omega must be positive and finite, got {omega}"
        )));
    }
    Ok(())
}

/// Landau-Zener sweep: Γ(τ) = 4(τ − ½), constant ω.
pub fn lz_linear(omega: f64, duration: f64) -> Result<ProtocolSchedule> {
    check_coupling(omega)?;
    check_duration(duration)?;
    let gamma = Waveform::with_derivatives(
        |t| 2.0 * SWEEP_HALF_RANGE * (t - 0.5),
        |_| 2.0 * SWEEP_HALF_RANGE,
        |_| 0.0,
    );
    ProtocolSchedule::from_waveforms(
        ProtocolKind::LzLinear,
        ProtocolParams::LzLinear { omega },
        gamma,
        Waveform::constant(omega),
        duration,
        Vec::new(),
    )
}

/// Locally adiabatic duration T(ε) = 1 / (εω·√(4 + ω²)).
pub fn roland_cerf_duration(omega: f64, epsilon: f64) -> f64 {
    1.0 / (epsilon * omega * (4.0 + omega * omega).sqrt())
}

/// The ε for which [`roland_cerf_duration`] equals `duration`.
pub fn roland_cerf_epsilon(omega: f64, duration: f64) -> f64 {
    1.0 / (duration * omega * (4.0 + omega * omega).sqrt())
}

/// Roland-Cerf locally adiabatic sweep with duration fixed by ε.
///
/// Γ(τ) = 4εω²T(τ − ½) / √(1 − 16ε²ω²T²(τ − ½)²). With T = T(ε) the ends land
/// on Γ = ∓2 independently of ε; only the duration changes.
pub fn roland_cerf(omega: f64, epsilon: f64) -> Result<ProtocolSchedule> {
    check_coupling(omega)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(QdriveError::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let duration = roland_cerf_duration(omega, epsilon);
    roland_cerf_shape(omega, epsilon, duration)
}

/// Roland-Cerf sweep of a given duration (ε recovered from T(ε)).
pub fn roland_cerf_for_duration(omega: f64, duration: f64) -> Result<ProtocolSchedule> {
    check_coupling(omega)?;
    check_duration(duration)?;
    let epsilon = roland_cerf_epsilon(omega, duration);
    if epsilon >= 1.0 {
        return Err(QdriveError::InvalidParameter(format!(
            "duration {duration} is below the Roland-Cerf minimum T(ε=1) = {}",
            roland_cerf_duration(omega, 1.0)
        )));
    }
    roland_cerf_shape(omega, epsilon, duration)
}

fn roland_cerf_shape(omega: f64, epsilon: f64, duration: f64) -> Result<ProtocolSchedule> {
    let c = 4.0 * epsilon * omega * omega * duration;
    let d = 16.0 * (epsilon * omega * duration).powi(2);
    for tau in [0.0, 1.0] {
        let u: f64 = tau - 0.5;
        if 1.0 - d * u * u <= 0.0 {
            return Err(QdriveError::RolandCerfDomain { tau });
        }
    }
    let gamma = Waveform::with_derivatives(
        move |t| {
            let u = t - 0.5;
            c * u / (1.0 - d * u * u).sqrt()
        },
        move |t| {
            let u = t - 0.5;
            c * (1.0 - d * u * u).powf(-1.5)
        },
        move |t| {
            let u = t - 0.5;
            3.0 * c * d * u * (1.0 - d * u * u).powf(-2.5)
        },
    );
    ProtocolSchedule::from_waveforms(
        ProtocolKind::RolandCerf,
        ProtocolParams::RolandCerf { omega, epsilon },
        gamma,
        Waveform::constant(omega),
        duration,
        Vec::new(),
    )
}

/// |⟨ground(Γ=+2)|ground(Γ=−2)⟩| at constant coupling ω.
pub fn sweep_endpoint_overlap(omega: f64) -> Result<f64> {
    let ini = ground_state(-SWEEP_HALF_RANGE, omega)?;
    let fin = ground_state(SWEEP_HALF_RANGE, omega)?;
    Ok(fin.inner(&ini).norm())
}

/// Composite pulse: z pulse of area +π/4, half Rabi cycle at constant ω with
/// Γ = 0, z pulse of area −π/4.
///
/// The plateau lasts arccos(overlap)/ω. In [`CompositeMode::Ideal`] the end
/// pulses are exact impulses and τ_0 = 0. In [`CompositeMode::Finite`] they are
/// rectangular pulses of height Γ_M and physical duration π/(4Γ_M), so
/// τ_0 = π/(4Γ_M T). A Γ_M below 10ω adds a warning to the schedule.
pub fn composite_pulse(
    omega: f64,
    gamma_m: f64,
    overlap: f64,
    mode: CompositeMode,
) -> Result<ProtocolSchedule> {
    check_coupling(omega)?;
    if !(gamma_m.is_finite() && gamma_m > 0.0) {
        return Err(QdriveError::InvalidParameter(format!(
            "pulse height Gamma_M must be positive, got {gamma_m}"
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(QdriveError::InvalidParameter(format!(
            "overlap must lie in [0, 1), got {overlap}"
        )));
    }
    let plateau = overlap.acos() / omega;
    let g0 = SWEEP_HALF_RANGE;
    let mut warnings = Vec::new();
    if gamma_m < COMPOSITE_HEIGHT_RATIO * omega {
        warnings.push(format!(
            "Gamma_M = {gamma_m} is below {COMPOSITE_HEIGHT_RATIO}·omega = {}; the impulse limit does not hold",
            COMPOSITE_HEIGHT_RATIO * omega
        ));
    }

    let schedule = match mode {
        CompositeMode::Ideal => {
            let gamma = Waveform::new(move |t| {
                if t <= 0.0 {
                    -g0
                } else if t >= 1.0 {
                    g0
                } else {
                    0.0
                }
            });
            ProtocolSchedule::from_waveforms(
                ProtocolKind::Composite,
                ProtocolParams::Composite {
                    omega,
                    gamma_m,
                    tau0: 0.0,
                    overlap,
                    mode,
                },
                gamma,
                Waveform::constant(omega),
                plateau,
                vec![
                    ImpulseRotation::start(COMPOSITE_PULSE_AREA),
                    ImpulseRotation::end(-COMPOSITE_PULSE_AREA),
                ],
            )?
        }
        CompositeMode::Finite => {
            let pulse = COMPOSITE_PULSE_AREA / gamma_m;
            let duration = plateau + 2.0 * pulse;
            let tau0 = pulse / duration;
            let gamma = Waveform::new(move |t| {
                if t <= 0.0 {
                    -g0
                } else if t >= 1.0 {
                    g0
                } else if t <= tau0 {
                    gamma_m
                } else if t >= 1.0 - tau0 {
                    -gamma_m
                } else {
                    0.0
                }
            });
            ProtocolSchedule::from_waveforms(
                ProtocolKind::Composite,
                ProtocolParams::Composite {
                    omega,
                    gamma_m,
                    tau0,
                    overlap,
                    mode,
                },
                gamma,
                Waveform::constant(omega),
                duration,
                Vec::new(),
            )?
            .with_breakpoints(vec![tau0, 1.0 - tau0])?
        }
    };
    Ok(ProtocolSchedule {
        warnings,
        ..schedule
    })
}

/// Composite pulse between the adiabatic ground states at Γ = ∓2.
pub fn composite_between_sweep_endpoints(
    omega: f64,
    gamma_m: f64,
    mode: CompositeMode,
) -> Result<ProtocolSchedule> {
    composite_pulse(omega, gamma_m, sweep_endpoint_overlap(omega)?, mode)
}

/// Base sweep of the tangent protocol, Γ(τ) = ω·tan(2(τ − ½)·arctan(2/ω)) at
/// constant ω. Along it dφ/dt = −2·arctan(2/ω)/T is constant.
pub fn tangent_base(omega: f64, duration: f64) -> Result<ProtocolSchedule> {
    check_coupling(omega)?;
    check_duration(duration)?;
    let a = (SWEEP_HALF_RANGE / omega).atan();
    let gamma = Waveform::with_derivatives(
        move |t| omega * (2.0 * (t - 0.5) * a).tan(),
        move |t| {
            let c = (2.0 * (t - 0.5) * a).cos();
            2.0 * a * omega / (c * c)
        },
        move |t| {
            let th = 2.0 * (t - 0.5) * a;
            let c = th.cos();
            8.0 * a * a * omega * th.tan() / (c * c)
        },
    );
    ProtocolSchedule::from_waveforms(
        ProtocolKind::Custom,
        ProtocolParams::TangentBase { omega },
        gamma,
        Waveform::constant(omega),
        duration,
        Vec::new(),
    )
}

fn check_transformable(base: &ProtocolSchedule) -> Result<()> {
    if base.realization() != Realization::Direct || base.omega_y_waveform().is_some() {
        return Err(QdriveError::InvalidParameter(
            "base schedule must be a plain Γσz + ωσx schedule".into(),
        ));
    }
    if !base.impulses().is_empty() {
        return Err(QdriveError::InvalidParameter(
            "base schedule must not carry impulses".into(),
        ));
    }
    if !base.breakpoints().is_empty() {
        return Err(QdriveError::DerivativeUnavailable {
            tau: base.breakpoints()[0],
        });
    }
    let n = SINGULARITY_PROBE_POINTS - 1;
    for k in 0..=n {
        let tau = k as f64 / n as f64;
        let w = base.omega_waveform().value(tau);
        if !(w.is_finite() && w > 0.0) {
            return Err(QdriveError::SingularTransformation { tau });
        }
    }
    Ok(())
}

fn transformed_identity(base: &ProtocolSchedule) -> (ProtocolKind, ProtocolParams) {
    match *base.params() {
        ProtocolParams::LzLinear { omega } => (
            ProtocolKind::SuperadiabaticLinear,
            ProtocolParams::SuperadiabaticLinear { omega },
        ),
        ProtocolParams::TangentBase { omega } => (
            ProtocolKind::SuperadiabaticTangent,
            ProtocolParams::SuperadiabaticTangent { omega },
        ),
        _ => (ProtocolKind::Custom, ProtocolParams::Custom),
    }
}

/// Maps a base schedule to its transitionless single-field counterpart.
pub fn superadiabatic_transform(base: &ProtocolSchedule) -> Result<ProtocolSchedule> {
    check_transformable(base)?;
    let (kind, params) = transformed_identity(base);
    let reference = Arc::new(base.clone());

    let r = reference.clone();
    let gamma = Waveform::new(move |t| {
        let jet = ControlJet::of(&r, t);
        jet.gamma - 0.5 * jet.frame_angle_rate()
    });
    let r = reference.clone();
    let omega = Waveform::new(move |t| ControlJet::of(&r, t).transformed_coupling());
    let r = reference.clone();
    let frame_angle = Waveform::new(move |t| ControlJet::of(&r, t).frame_angle());

    let beta_start = frame_angle.value(0.0);
    let beta_end = frame_angle.value(1.0);
    let impulses = [
        ImpulseRotation::start(-0.5 * beta_start),
        ImpulseRotation::end(0.5 * beta_end),
    ]
    .into_iter()
    .filter(|i| i.area != 0.0)
    .collect();

    let mut out = ProtocolSchedule::from_waveforms(
        kind,
        params,
        gamma,
        omega,
        base.duration(),
        impulses,
    )?;
    out.realization = Realization::Transformed;
    out.reference = Some(reference);
    out.frame_angle = Some(frame_angle);
    out.warnings = base.warnings().to_vec();
    Ok(out)
}

/// Base + H_s with the counter-diabatic term kept on an explicit σy channel
/// (the two-lattice realization).
pub fn counterdiabatic_explicit(base: &ProtocolSchedule) -> Result<ProtocolSchedule> {
    check_transformable(base)?;
    let (kind, params) = transformed_identity(base);
    let r = Arc::new(base.clone());
    let omega_y = Waveform::new(move |t| ControlJet::of(&r, t).counteradiabatic());
    let mut out = base.clone().with_omega_y(omega_y);
    out.kind = kind;
    out.params = params;
    out.realization = Realization::ExplicitSigmaY;
    Ok(out)
}

/// Superadiabatic version of the linear Landau-Zener sweep.
pub fn superadiabatic_linear(omega: f64, duration: f64) -> Result<ProtocolSchedule> {
    superadiabatic_transform(&lz_linear(omega, duration)?)
}

/// Transformed coupling of the tangent protocol, ω′ = ω√(1 + arctan(2/ω)²/(Tω)²).
pub fn tangent_transformed_coupling(omega: f64, duration: f64) -> f64 {
    let a = (SWEEP_HALF_RANGE / omega).atan();
    omega * (1.0 + (a / (duration * omega)).powi(2)).sqrt()
}

/// Duration of the tangent protocol with base coupling ω that runs at
/// transformed coupling ω′: T = arctan(2/ω)/√(ω′² − ω²), for 0 < ω < ω′.
pub fn tangent_duration(omega: f64, omega_prime: f64) -> Result<f64> {
    check_coupling(omega)?;
    if omega_prime.is_nan() || omega_prime <= omega {
        return Err(QdriveError::InvalidParameter(format!(
            "transformed coupling {omega_prime} must exceed base coupling {omega}"
        )));
    }
    let a = (SWEEP_HALF_RANGE / omega).atan();
    Ok(a / (omega_prime * omega_prime - omega * omega).sqrt())
}

/// Superadiabatic tangent protocol: Γ′ = Γ = ω·tan(2(τ − ½)·arctan(2/ω)),
/// constant ω′, and z impulses ±(1/2)·arctan(arctan(2/ω)/(Tω)).
pub fn superadiabatic_tangent(omega: f64, duration: f64) -> Result<ProtocolSchedule> {
    let base = tangent_base(omega, duration)?;
    let a = (SWEEP_HALF_RANGE / omega).atan();
    let beta = -(a / (duration * omega)).atan();
    let mut out = ProtocolSchedule::from_waveforms(
        ProtocolKind::SuperadiabaticTangent,
        ProtocolParams::SuperadiabaticTangent { omega },
        base.gamma_waveform().clone(),
        Waveform::constant(tangent_transformed_coupling(omega, duration)),
        duration,
        vec![
            ImpulseRotation::start(-0.5 * beta),
            ImpulseRotation::end(0.5 * beta),
        ],
    )?;
    out.realization = Realization::Transformed;
    out.reference = Some(Arc::new(base));
    out.frame_angle = Some(Waveform::constant(beta));
    Ok(out)
}

/// Builds a built-in protocol from its kind and the usual parameter pair.
///
/// `duration` is ignored for composite schedules (fixed by the overlap of the
/// Γ = ∓2 ground states) and mapped through T(ε) for Roland-Cerf.
pub fn build(kind: ProtocolKind, omega: f64, duration: f64) -> Result<ProtocolSchedule> {
    match kind {
        ProtocolKind::LzLinear => lz_linear(omega, duration),
        ProtocolKind::RolandCerf => roland_cerf_for_duration(omega, duration),
        ProtocolKind::Composite => {
            composite_between_sweep_endpoints(omega, 1e3 * omega.max(1.0), CompositeMode::Ideal)
        }
        ProtocolKind::SuperadiabaticLinear => superadiabatic_linear(omega, duration),
        ProtocolKind::SuperadiabaticTangent => superadiabatic_tangent(omega, duration),
        ProtocolKind::Custom => Err(QdriveError::FamilyNotApplicable("custom".into())),
    }
}
