//! Acceptance criteria. Each test prints one PASS/FAIL line and then asserts.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::{brute_force, overlap_sqr, report};
use qdrive_core::adiabatic::ground_state;
use qdrive_core::analysis::{
    final_fidelity, min_time_at_coupling, quantum_speed_limit, robustness_scan, time_to_fidelity,
    Endpoints, RobustnessAxis,
};
use qdrive_core::propagator::{propagate, propagate_final, PropagatorConfig};
use qdrive_core::protocols::{
    composite_pulse, counterdiabatic_explicit, lz_linear, roland_cerf, superadiabatic_linear,
    superadiabatic_tangent, superadiabatic_transform, tangent_base,
};
use qdrive_core::qcore::{CompositeMode, ImpulseRotation, ProtocolKind, QuantumState};
use qdrive_core::make_custom_schedule;

fn within(start: Instant, limit_s: u64) -> (bool, Duration) {
    let e = start.elapsed();
    (e < Duration::from_secs(limit_s), e)
}

#[test]
fn criterion_1_speed_limit_and_composite_duration() {
    let start = Instant::now();
    let omega = 0.5;
    let up = QuantumState::ground_diabatic();
    let down = QuantumState::excited_diabatic();
    let qsl = quantum_speed_limit(&up, &down, omega).unwrap();
    let exact = qsl.t_qs == PI;

    let schedule = composite_pulse(omega, 1e3, 0.0, CompositeMode::Ideal).unwrap();
    let designed = schedule.duration();
    let ends = Endpoints::Custom { initial: up, target: down };
    let cfg = PropagatorConfig::default();
    let f_design = final_fidelity(&schedule, ends, &cfg).unwrap();
    let f_short = final_fidelity(&schedule.with_duration(0.99 * designed).unwrap(), ends, &cfg).unwrap();
    let (fast, elapsed) = within(start, 1);

    let pass = exact
        && (designed - qsl.t_qs).abs() < 1e-15
        && f_design >= 1.0 - 1e-6
        && f_short < 1.0 - 1e-4
        && fast;
    report(
        1,
        "speed limit",
        pass,
        &format!(
            "T_qs = {:.17} (pi exact: {exact}), T_design = {designed:.17}, F = {f_design:.12}, F(0.99 T) = {f_short:.8}, {elapsed:.2?}",
            qsl.t_qs
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_lz_closed_form() {
    let start = Instant::now();
    let omega = 0.5;
    let cfg = PropagatorConfig::default();
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let t = 2.0 + 18.0 * k as f64 / 9.0;
        let f = final_fidelity(&lz_linear(omega, t).unwrap(), Endpoints::AdiabaticGround, &cfg).unwrap();
        // Independent closed form: 1 − exp(−πTω²/4).
        let reference = 1.0 - (-PI * t * omega * omega / 4.0).exp();
        worst = worst.max((f - reference).abs());
    }
    let (fast, elapsed) = within(start, 5);
    let pass = worst <= 0.05 && fast;
    report(2, "LZ closed form", pass, &format!("max |F - F_LZ| = {worst:.4} over T in [2, 20], {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn criterion_3_roland_cerf_duration_and_excess() {
    let start = Instant::now();
    let mut formula_ok = true;
    for &omega in &[0.3, 0.5, 0.7, 1.0] {
        for &eps in &[0.05, 0.1, 0.3162, 0.5] {
            let expected = 1.0 / (eps * omega * f64::sqrt(4.0 + omega * omega));
            formula_ok &= roland_cerf(omega, eps).unwrap().duration() == expected;
        }
    }
    let cfg = PropagatorConfig::default();
    let rows: Vec<(f64, f64, f64)> = [0.3, 0.5, 0.7, 1.0]
        .par_iter()
        .map(|&omega| {
            let t = time_to_fidelity(ProtocolKind::RolandCerf, omega, 0.9, &cfg).unwrap();
            let ini = ground_state(-2.0, omega).unwrap();
            let fin = ground_state(2.0, omega).unwrap();
            let qsl = quantum_speed_limit(&ini, &fin, omega).unwrap();
            (omega, t.duration, qsl.t_qs)
        })
        .collect();
    let (fast, elapsed) = within(start, 30);
    let mut detail = format!("T(eps) exact: {formula_ok};");
    let mut in_band = true;
    for (omega, t, tqs) in &rows {
        let excess = t / tqs - 1.0;
        in_band &= (0.10..=0.50).contains(&excess);
        detail += &format!(" w={omega}: T={t:.3} T_qs={tqs:.3} excess={:.1}%;", 100.0 * excess);
    }
    detail += &format!(" {elapsed:.2?}");
    let pass = formula_ok && in_band && fast;
    report(3, "Roland-Cerf", pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_4_transitionless_following() {
    let start = Instant::now();
    let omega = 0.55;
    let cfg = PropagatorConfig::default();
    let mut worst = f64::INFINITY;
    let mut points_ok = true;
    for &t in &[0.5, 1.0, 2.0, 5.0, 10.0] {
        for s in [superadiabatic_linear(omega, t).unwrap(), superadiabatic_tangent(omega, t).unwrap()] {
            let ini = ground_state(-2.0, omega).unwrap();
            let tr = propagate(&s, &ini, &cfg).unwrap();
            points_ok &= tr.points.len() >= 4096;
            worst = worst.min(tr.min_fidelity());
        }
    }
    let (fast, elapsed) = within(start, 10);
    let pass = worst >= 0.9999 && points_ok && fast;
    report(4, "transitionless following", pass, &format!("min F(tau) = {worst:.12}, {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn criterion_5_tangent_robustness() {
    let start = Instant::now();
    let s = superadiabatic_tangent(0.5, 5.9).unwrap();
    let cfg = PropagatorConfig::default();
    let mut deviations: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    deviations.push(-0.5);
    let mut pass = true;
    let mut detail = String::new();
    for axis in [RobustnessAxis::Duration, RobustnessAxis::Coupling] {
        let scan = robustness_scan(&s, axis, &deviations, &cfg).unwrap();
        let nominal = scan.fidelity_at(0.0).unwrap();
        let min_up = scan
            .deviations
            .iter()
            .zip(&scan.fidelities)
            .filter(|(d, _)| **d >= 0.0)
            .map(|(_, f)| *f)
            .fold(f64::INFINITY, f64::min);
        let down = scan.fidelity_at(-0.5).unwrap();
        pass &= min_up >= 0.99 && down < nominal;
        detail += &format!("{axis:?}: F(0) = {nominal:.6}, min F on [0,1] = {min_up:.4}, F(-0.5) = {down:.4}; ");
    }
    let (fast, elapsed) = within(start, 30);
    pass &= fast;
    detail += &format!("{elapsed:.2?}");
    report(5, "tangent robustness", pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_6_minimum_time_frontier() {
    let start = Instant::now();
    let mut limit_ok = true;
    let mut detail = String::new();
    for &wp in &[0.1, 0.2] {
        let m = min_time_at_coupling(wp).unwrap();
        let rel = (m.duration / (PI / (2.0 * wp)) - 1.0).abs();
        limit_ok &= rel <= 0.01;
        detail += &format!("w'={wp}: T_min={:.4} vs pi/2w'={:.4}; ", m.duration, PI / (2.0 * wp));
    }
    let cfg = PropagatorConfig::default();
    let grid: Vec<f64> = (3..=10).map(|k| k as f64 / 10.0).collect();
    let rows: Vec<(f64, f64, f64, f64)> = grid
        .par_iter()
        .map(|&wp| {
            let m = min_time_at_coupling(wp).unwrap();
            let lz = time_to_fidelity(ProtocolKind::LzLinear, wp, 0.9, &cfg).unwrap();
            let rc = time_to_fidelity(ProtocolKind::RolandCerf, wp, 0.9, &cfg).unwrap();
            (wp, m.duration, lz.duration, rc.duration)
        })
        .collect();
    let mut frontier_ok = true;
    for (wp, tmin, lz, rc) in &rows {
        let below = tmin < lz && tmin < rc;
        frontier_ok &= below;
        detail += &format!("w'={wp}: tangent {tmin:.3} LZ {lz:.3} RC {rc:.3}{}; ", if below { "" } else { " (not below)" });
    }
    let (fast, elapsed) = within(start, 60);
    let pass = limit_ok && frontier_ok && fast;
    detail += &format!("{elapsed:.2?}");
    report(6, "minimum-time frontier", pass, &detail);
    assert!(pass);
}

#[test]
fn criterion_7_transformation_self_consistency() {
    let mut worst_coupling: f64 = 0.0;
    for &omega in &[0.25, 0.5, 0.55, 1.0] {
        for &t in &[1.0, 5.0, 20.0] {
            let s = superadiabatic_linear(omega, t).unwrap();
            for k in 0..=1000 {
                let tau = k as f64 / 1000.0;
                let u = tau - 0.5;
                let closed = omega * (1.0 + 1.0 / (t * (8.0 * u * u + omega * omega / 2.0)).powi(2)).sqrt();
                worst_coupling = worst_coupling.max((s.sample(tau).unwrap().omega - closed).abs());
            }
        }
    }
    let mut worst_gamma: f64 = 0.0;
    for &omega in &[0.25, 0.5, 0.55, 1.0] {
        for &t in &[1.0, 5.0, 20.0] {
            let base = tangent_base(omega, t).unwrap();
            let s = superadiabatic_transform(&base).unwrap();
            for k in 0..=980 {
                let tau = 0.01 + 0.98 * k as f64 / 980.0;
                let d = s.sample(tau).unwrap().gamma - base.sample(tau).unwrap().gamma;
                worst_gamma = worst_gamma.max(d.abs());
            }
        }
    }
    let cfg = PropagatorConfig::default();
    let mut worst_overlap: f64 = 1.0;
    for &omega in &[0.3, 0.55, 1.0] {
        for &t in &[0.5, 2.0, 8.0] {
            for base in [lz_linear(omega, t).unwrap(), tangent_base(omega, t).unwrap()] {
                let ini = ground_state(-2.0, omega).unwrap();
                let a = propagate_final(&counterdiabatic_explicit(&base).unwrap(), &ini, &cfg).unwrap();
                let b = propagate_final(&superadiabatic_transform(&base).unwrap(), &ini, &cfg).unwrap();
                worst_overlap = worst_overlap.min(a.fidelity(&b));
            }
        }
    }
    let pass = worst_coupling <= 1e-12 && worst_gamma <= 1e-10 && worst_overlap >= 1.0 - 1e-9;
    report(
        7,
        "transformation consistency",
        pass,
        &format!(
            "max |w' - closed form| = {worst_coupling:.2e}, max |Gamma' - Gamma| (tangent) = {worst_gamma:.2e}, min explicit/transformed overlap = {worst_overlap:.15}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_propagator_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let cfg = PropagatorConfig::default();
    let mut worst_oracle: f64 = 1.0;
    let mut worst_norm: f64 = 0.0;
    let mut worst_reversal: f64 = 1.0;
    for _ in 0..20 {
        let a: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..4.0)];
        let b: [f64; 3] = [rng.gen_range(0.1..1.0), rng.gen_range(-0.5..0.5), rng.gen_range(0.5..4.0)];
        let t = rng.gen_range(0.5..10.0);
        let kicks = vec![
            ImpulseRotation::start(rng.gen_range(-1.0..1.0)),
            ImpulseRotation::end(rng.gen_range(-1.0..1.0)),
        ];
        let s = make_custom_schedule(
            move |x| 4.0 * (x - 0.5) + a[0] * (a[2] * x).sin() + a[1] * x * x,
            move |x| b[0] + 0.5 * b[1].abs() * (1.0 + (b[2] * x).cos()),
            t,
            kicks,
        )
        .unwrap();
        let ini = QuantumState::new(
            num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        )
        .unwrap();
        let tr = propagate(&s, &ini, &cfg).unwrap();
        let oracle = brute_force(&s, &ini, 64 * cfg.steps);
        worst_oracle = worst_oracle.min(overlap_sqr(tr.final_state.amplitudes(), oracle));
        worst_norm = worst_norm.max(tr.max_norm_drift());
        let back = propagate_final(&s.reversed(), &tr.final_state.conj(), &cfg).unwrap().conj();
        worst_reversal = worst_reversal.min(back.fidelity(&ini));
    }
    let pass = worst_oracle >= 1.0 - 1e-9 && worst_norm <= 1e-12 && worst_reversal >= 1.0 - 1e-9;
    report(
        8,
        "propagator oracle",
        pass,
        &format!(
            "min oracle overlap = {worst_oracle:.15}, max norm drift = {worst_norm:.2e}, min reversal overlap = {worst_reversal:.15}"
        ),
    );
    assert!(pass);
}
