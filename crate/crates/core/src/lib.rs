//! Two-level quantum driving protocols and their exactly unitary propagation.
//!
//! The Hamiltonian is H(τ) = Γ(τ)σz + ω(τ)σx (+ an optional σy channel) with
//! ħ = 1, energies in recoil units and τ = t/T. Built-in families are the
//! linear Landau-Zener sweep, the local-adiabatic Roland-Cerf ramp, the
//! composite pulse, and two superadiabatic (counter-diabatic) schedules.

pub mod adiabatic;
pub mod analysis;
pub mod error;
pub mod lattice;
pub mod propagator;
pub mod protocols;
pub mod qcore;

pub use error::{QdriveError, Result};
pub use qcore::{
    make_custom_schedule, ControlSample, ImpulseLocation, ImpulseRotation, ProtocolKind,
    ProtocolParams, ProtocolSchedule, QuantumState, Realization, Units, Waveform, C64,
};
pub use propagator::{propagate, PropagatorConfig, SampleRule, Trajectory};
pub use analysis::{final_fidelity, Endpoints};
