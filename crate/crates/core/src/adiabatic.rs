//! Instantaneous eigensystem of H = Γσz + ωσx and the counter-diabatic
//! coefficient (1/2)·dφ/dt.

use crate::error::{QdriveError, Result};
use crate::qcore::{ControlSample, ProtocolSchedule, QuantumState, C64};

/// Instantaneous eigenpair of Γσz + ωσx.
///
/// `phi` is the mixing angle atan2(ω, Γ) ∈ [0, π]: π deep on the Γ < 0 side,
/// π/2 at the crossing, 0 deep on the Γ > 0 side. Both eigenvectors are real
/// with a non-negative |1⟩ component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticFrame {
    pub ground: QuantumState,
    pub excited: QuantumState,
    pub ground_energy: f64,
    pub energy_gap: f64,
    pub phi: f64,
}

/// Diagonalizes Γσz + ωσx. Any σy component of the sample is ignored.
pub fn eigensystem(sample: ControlSample) -> Result<AdiabaticFrame> {
    let ControlSample { gamma, omega, .. } = sample;
    let r = gamma.hypot(omega);
    if r == 0.0 {
        return Err(QdriveError::DegenerateHamiltonian);
    }
    if !r.is_finite() {
        return Err(QdriveError::InvalidParameter(format!(
            "non-finite control sample (gamma = {gamma}, omega = {omega})"
        )));
    }
    // Half-angle pair (sin φ/2, cos φ/2) without cancellation on either side
    // of the crossing; exact zeros when ω = 0.
    let (s, c) = if gamma <= 0.0 {
        let s = ((r - gamma) / (2.0 * r)).sqrt();
        (s, omega / (2.0 * r * s))
    } else {
        let c = ((r + gamma) / (2.0 * r)).sqrt();
        (omega / (2.0 * r * c), c)
    };
    let ground = QuantumState::from_unitary_image(C64::new(-s, 0.0), C64::new(c, 0.0));
    let excited = QuantumState::from_unitary_image(C64::new(c, 0.0), C64::new(s, 0.0));
    Ok(AdiabaticFrame {
        ground,
        excited,
        ground_energy: -r,
        energy_gap: 2.0 * r,
        phi: omega.atan2(gamma),
    })
}

/// Adiabatic ground state of Γσz + ωσx.
pub fn ground_state(gamma: f64, omega: f64) -> Result<QuantumState> {
    eigensystem(ControlSample::new(gamma, omega)).map(|f| f.ground)
}

/// Values and physical-time derivatives of Γ and ω at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlJet {
    pub gamma: f64,
    pub gamma_dot: f64,
    pub gamma_ddot: f64,
    pub omega: f64,
    pub omega_dot: f64,
    pub omega_ddot: f64,
}

impl ControlJet {
    /// Evaluates the jet of `schedule` at `tau`, converting τ-derivatives to
    /// derivatives in t = τT.
    pub fn of(schedule: &ProtocolSchedule, tau: f64) -> Self {
        let t = schedule.duration();
        let g = schedule.gamma_waveform();
        let w = schedule.omega_waveform();
        Self {
            gamma: g.value(tau),
            gamma_dot: g.derivative(tau) / t,
            gamma_ddot: g.second_derivative(tau) / (t * t),
            omega: w.value(tau),
            omega_dot: w.derivative(tau) / t,
            omega_ddot: w.second_derivative(tau) / (t * t),
        }
    }

    /// α = (1/2)dφ/dt = (Γω̇ − ωΓ̇) / (2(Γ² + ω²)).
    pub fn counteradiabatic(&self) -> f64 {
        (self.gamma * self.omega_dot - self.omega * self.gamma_dot)
            / (2.0 * (self.gamma * self.gamma + self.omega * self.omega))
    }

    /// Frame angle β = arctan(α/ω) = arctan((Γω̇ − ωΓ̇) / (2ω(Γ² + ω²))).
    pub fn frame_angle(&self) -> f64 {
        (self.counteradiabatic() / self.omega).atan()
    }

    /// dβ/dt, from the second derivatives of Γ and ω.
    pub fn frame_angle_rate(&self) -> f64 {
        let ControlJet {
            gamma: g,
            gamma_dot: gd,
            gamma_ddot: gdd,
            omega: w,
            omega_dot: wd,
            omega_ddot: wdd,
        } = *self;
        let r2 = g * g + w * w;
        let num = g * wd - w * gd;
        let num_dot = g * wdd - w * gdd;
        let den = 2.0 * w * r2;
        let den_dot = 2.0 * wd * r2 + 4.0 * w * (g * gd + w * wd);
        let y = num / den;
        let y_dot = (num_dot * den - num * den_dot) / (den * den);
        y_dot / (1.0 + y * y)
    }

    /// ω′ = ω·√(1 + (α/ω)²).
    pub fn transformed_coupling(&self) -> f64 {
        self.omega.hypot(self.counteradiabatic())
    }
}

fn near_breakpoint(schedule: &ProtocolSchedule, tau: f64) -> bool {
    schedule.breakpoints().iter().any(|b| (b - tau).abs() < 1e-9)
}

/// The counter-diabatic coefficient (1/2)·dφ/dt at `tau`: the σy amplitude of
/// H_s that keeps the state on the instantaneous ground state.
pub fn counteradiabatic_coefficient(schedule: &ProtocolSchedule, tau: f64) -> Result<f64> {
    let sample = schedule.sample(tau)?;
    if sample.gamma == 0.0 && sample.omega == 0.0 {
        return Err(QdriveError::DegenerateHamiltonian);
    }
    if near_breakpoint(schedule, tau)
        || !schedule.gamma_waveform().is_differentiable_at(tau)
        || !schedule.omega_waveform().is_differentiable_at(tau)
    {
        return Err(QdriveError::DerivativeUnavailable { tau });
    }
    let alpha = ControlJet::of(schedule, tau).counteradiabatic();
    if !alpha.is_finite() {
        return Err(QdriveError::DerivativeUnavailable { tau });
    }
    Ok(alpha)
}
