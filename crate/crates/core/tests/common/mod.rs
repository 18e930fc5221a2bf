//! Reference propagator written independently of the library: scaled and
//! squared Taylor exponentials on a midpoint grid.
#![allow(dead_code)]

use std::io::Write;

use num_complex::Complex64 as C;
use qdrive_core::{ImpulseLocation, ProtocolSchedule, QuantumState};

pub type M2 = [[C; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// exp(m) by scaling and squaring with a degree-18 Taylor polynomial.
pub fn expm(m: &M2) -> M2 {
    let norm = m.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a: M2 = [[m[0][0] * scale, m[0][1] * scale], [m[1][0] * scale, m[1][1] * scale]];
    let one = C::new(1.0, 0.0);
    let zero = C::new(0.0, 0.0);
    let mut sum: M2 = [[one, zero], [zero, one]];
    let mut term = sum;
    for k in 1..=18 {
        term = mul(&term, &a);
        let inv = 1.0 / k as f64;
        for row in term.iter_mut() {
            for z in row.iter_mut() {
                *z *= inv;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

fn apply(m: &M2, v: [C; 2]) -> [C; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn z_kick(area: f64, v: [C; 2]) -> [C; 2] {
    [v[0] * C::from_polar(1.0, -area), v[1] * C::from_polar(1.0, area)]
}

/// Midpoint propagation with exp(−i·dt·H) from the public sample API.
pub fn brute_force(schedule: &ProtocolSchedule, initial: &QuantumState, steps: usize) -> [C; 2] {
    let mut v = initial.amplitudes();
    for i in schedule.impulses().iter().filter(|i| i.location == ImpulseLocation::Start) {
        v = z_kick(i.area, v);
    }
    let dt = schedule.duration() / steps as f64;
    let mi = C::new(0.0, -dt);
    for k in 0..steps {
        let s = schedule.sample((k as f64 + 0.5) / steps as f64).unwrap();
        let h: M2 = [
            [C::new(s.gamma, 0.0), C::new(s.omega, -s.omega_y)],
            [C::new(s.omega, s.omega_y), C::new(-s.gamma, 0.0)],
        ];
        let g: M2 = [[mi * h[0][0], mi * h[0][1]], [mi * h[1][0], mi * h[1][1]]];
        v = apply(&expm(&g), v);
    }
    for i in schedule.impulses().iter().filter(|i| i.location == ImpulseLocation::End) {
        v = z_kick(i.area, v);
    }
    v
}

pub fn overlap_sqr(a: [C; 2], b: [C; 2]) -> f64 {
    (a[0].conj() * b[0] + a[1].conj() * b[1]).norm_sqr()
}

/// Writes a PASS/FAIL line straight to stderr so it shows even when the test
/// harness captures output.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {id} [{name}]: {detail}");
}
