//! Optical-lattice control signals for a two-level schedule.
//!
//! The two lowest bands at the zone edge form the two levels. Lattice depth
//! sets the coupling, ω = V₀/4, and quasimomentum sets the detuning,
//! Γ = 4(q − ½), with q in units of the Brillouin-zone width. A σy term is
//! realized by a second lattice displaced by a quarter period; the combined
//! potential has amplitude 4√(ω² + ω_y²) and is displaced by
//! β·d_L/(2π) with β = atan(ω_y/ω). Removing the displacement from the moving
//! frame shifts the quasimomentum to q′ = q − β̇/(8ω_rec).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::{QdriveError, Result};
use crate::propagator::Unitary2;
use crate::qcore::{
    ControlSample, ImpulseLocation, ImpulseRotation, ProtocolSchedule, Realization, Units, C64,
};

pub const DEFAULT_SAMPLES: usize = 100_000;

/// One end-point z pulse expressed as a quasimomentum jump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeImpulse {
    pub location: ImpulseLocation,
    /// ∫Γ dt in natural units.
    pub area: f64,
    /// ∫(q − ½) dt in units of 1/ω_rec, equal to area/4.
    pub quasimomentum_area: f64,
}

/// Uniformly sampled lattice controls.
///
/// Natural units: depth in recoil energies, time in 1/ω_rec.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeControls {
    pub tau: Vec<f64>,
    pub time: Vec<f64>,
    pub time_seconds: Vec<f64>,
    /// Combined lattice depth V₀ in recoil energies.
    pub depth: Vec<f64>,
    pub quasimomentum: Vec<f64>,
    /// Quasimomentum including the moving-frame correction −β̇/8.
    pub quasimomentum_corrected: Vec<f64>,
    /// Displacement angle β of the combined lattice.
    pub beta: Vec<f64>,
    /// β/(2π): lattice displacement in units of the lattice period.
    pub displacement: Vec<f64>,
    pub impulses: Vec<LatticeImpulse>,
    pub recoil_frequency: f64,
    pub duration: f64,
}

/// Samples `schedule` on `samples` uniform points of τ ∈ [0, 1].
pub fn to_lattice_controls(
    schedule: &ProtocolSchedule,
    samples: usize,
    recoil_frequency: f64,
) -> Result<LatticeControls> {
    if samples < 2 {
        return Err(QdriveError::InvalidParameter(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    if !(recoil_frequency.is_finite() && recoil_frequency > 0.0) {
        return Err(QdriveError::InvalidParameter(format!(
            "recoil frequency must be positive, got {recoil_frequency}"
        )));
    }
    let duration = schedule.duration();
    let n = samples - 1;
    let mut out = LatticeControls {
        tau: Vec::with_capacity(samples),
        time: Vec::with_capacity(samples),
        time_seconds: Vec::with_capacity(samples),
        depth: Vec::with_capacity(samples),
        quasimomentum: Vec::with_capacity(samples),
        quasimomentum_corrected: Vec::with_capacity(samples),
        beta: Vec::with_capacity(samples),
        displacement: Vec::with_capacity(samples),
        impulses: Vec::new(),
        recoil_frequency,
        duration,
    };
    let omega_w = schedule.omega_waveform();
    let omega_y_w = schedule.omega_y_waveform();
    for k in 0..=n {
        let tau = k as f64 / n as f64;
        let ControlSample {
            gamma,
            omega,
            omega_y,
        } = schedule.sample(tau)?;
        if omega.is_nan() || omega <= 0.0 {
            return Err(QdriveError::SingularTransformation { tau });
        }
        let beta = (omega_y / omega).atan();
        // β̇ = (ω·ω̇_y − ω_y·ω̇)/(ω² + ω_y²), with τ-derivatives divided by T.
        let beta_rate = match omega_y_w {
            Some(wy) => {
                (omega * wy.derivative(tau) - omega_y * omega_w.derivative(tau))
                    / ((omega * omega + omega_y * omega_y) * duration)
            }
            None => 0.0,
        };
        let q = gamma / 4.0 + 0.5;
        let t = Units::physical_time(tau, duration);
        out.tau.push(tau);
        out.time.push(t);
        out.time_seconds.push(t / recoil_frequency);
        out.depth.push(4.0 * omega.hypot(omega_y));
        out.quasimomentum.push(q);
        out.quasimomentum_corrected.push(q - beta_rate / 8.0);
        out.beta.push(beta);
        out.displacement.push(beta / (2.0 * std::f64::consts::PI));
    }

    let jumps: Vec<ImpulseRotation> = match schedule.realization() {
        // Switching the displaced lattice on and off moves it by β in zero
        // time; in the co-moving frame that is a z pulse of area ∓β/2.
        Realization::ExplicitSigmaY => vec![
            ImpulseRotation::start(-0.5 * out.beta[0]),
            ImpulseRotation::end(0.5 * out.beta[n]),
        ],
        _ => schedule.impulses().to_vec(),
    };
    out.impulses = jumps
        .into_iter()
        .filter(|i| i.area != 0.0)
        .map(|i| LatticeImpulse {
            location: i.location,
            area: i.area,
            quasimomentum_area: i.area / 4.0,
        })
        .collect();
    Ok(out)
}

/// Recovers (Γ, ω, ω_y) from the uncorrected lattice signals.
pub fn reconstruct_samples(controls: &LatticeControls) -> Vec<ControlSample> {
    controls
        .depth
        .iter()
        .zip(&controls.quasimomentum)
        .zip(&controls.beta)
        .map(|((&v0, &q), &beta)| {
            let amplitude = v0 / 4.0;
            ControlSample {
                gamma: 4.0 * (q - 0.5),
                omega: amplitude * beta.cos(),
                omega_y: amplitude * beta.sin(),
            }
        })
        .collect()
}

/// Diagonal translation operator for a lattice shift δx, with
/// θ = π·δx/d_L: diag(e^{iθ}, e^{−iθ}).
pub fn displacement_unitary(shift_in_periods: f64) -> Unitary2 {
    let theta = std::f64::consts::PI * shift_in_periods;
    let zero = C64::new(0.0, 0.0);
    Unitary2([
        [C64::from_polar(1.0, theta), zero],
        [zero, C64::from_polar(1.0, -theta)],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisplacementCheck {
    /// max |U†σxU − σx| at δx = 0.
    pub identity_error: f64,
    /// max |U†σxU − σy| at δx = d_L/4.
    pub quarter_period_error: f64,
    /// max |U†σxU + σx| at δx = d_L/2.
    pub half_period_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn max_deviation(a: &Unitary2, b: &Unitary2) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            m = m.max((a.0[i][j] - b.0[i][j]).norm());
        }
    }
    m
}

/// Verifies U†(δx)·σx·U(δx) at zero, quarter and half period shifts.
pub fn displacement_unitary_check() -> DisplacementCheck {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let sigma_x = Unitary2([[zero, one], [one, zero]]);
    let sigma_y = Unitary2([[zero, -i], [i, zero]]);
    let minus_x = Unitary2([[zero, -one], [-one, zero]]);
    let conj = |shift: f64| {
        let u = displacement_unitary(shift);
        u.dagger().compose(&sigma_x).compose(&u)
    };
    let tolerance = 1e-15;
    let identity_error = max_deviation(&conj(0.0), &sigma_x);
    let quarter_period_error = max_deviation(&conj(0.25), &sigma_y);
    let half_period_error = max_deviation(&conj(0.5), &minus_x);
    DisplacementCheck {
        identity_error,
        quarter_period_error,
        half_period_error,
        tolerance,
        passed: identity_error <= tolerance
            && quarter_period_error <= tolerance
            && half_period_error <= tolerance,
    }
}

/// Export settings for [`write_csv`] and [`write_metadata`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExportOptions {
    /// Rise time assumed for each quasimomentum jump, in seconds. Zero marks
    /// the jumps as ideal.
    pub slew_seconds: f64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self { slew_seconds: 0.0 }
    }
}

/// CSV with columns t_seconds, V0_recoils, q, q_prime, beta.
pub fn write_csv(controls: &LatticeControls, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_seconds,V0_recoils,q,q_prime,beta")?;
    for k in 0..controls.tau.len() {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e}",
            controls.time_seconds[k],
            controls.depth[k],
            controls.quasimomentum[k],
            controls.quasimomentum_corrected[k],
            controls.beta[k]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Metadata sidecar describing units, ω_rec, the protocol and impulse segments.
pub fn metadata(
    controls: &LatticeControls,
    schedule: &ProtocolSchedule,
    options: &ExportOptions,
) -> serde_json::Value {
    let segments: Vec<_> = controls
        .impulses
        .iter()
        .map(|i| {
            let at = match i.location {
                ImpulseLocation::Start => 0.0,
                ImpulseLocation::End => controls.duration / controls.recoil_frequency,
            };
            json!({
                "location": i.location,
                "t_seconds": at,
                "gamma_area": i.area,
                "quasimomentum_area": i.quasimomentum_area,
                "slew_seconds": options.slew_seconds,
            })
        })
        .collect();
    json!({
        "units": {
            "t_seconds": "s",
            "V0_recoils": "recoil energies (E_rec = hbar*omega_rec)",
            "q": "Brillouin-zone widths",
            "q_prime": "Brillouin-zone widths",
            "beta": "rad; lattice displacement is beta/(2*pi) periods",
        },
        "recoil_frequency_rad_per_s": controls.recoil_frequency,
        "samples": controls.tau.len(),
        "protocol": {
            "kind": schedule.kind(),
            "params": schedule.params(),
            "realization": schedule.realization(),
            "duration_natural": schedule.duration(),
            "duration_seconds": controls.duration / controls.recoil_frequency,
        },
        "impulse_segments": segments,
    })
}

pub fn write_metadata(
    controls: &LatticeControls,
    schedule: &ProtocolSchedule,
    options: &ExportOptions,
    path: &Path,
) -> Result<()> {
    let text = serde_json::to_string_pretty(&metadata(controls, schedule, options))
        .map_err(|e| QdriveError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
