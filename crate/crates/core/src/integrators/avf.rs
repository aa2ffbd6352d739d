//! Average vector field method, the energy-conserving (non-symplectic)
//! baseline:
//!
//! ```text
//! p⁺ = p − h ∫₀¹ H_q(ξ-line) dξ,   q⁺ = q + h ∫₀¹ H_p(ξ-line) dξ
//! ```
//!
//! where the ξ-line joins `(p, q)` to `(p⁺, q⁺)`. The integrals use
//! Gauss–Legendre quadrature.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hamiltonian::{gradients_at, HamiltonianSystem, PhaseState};
use crate::integrators::schemes::{split, stack};
use crate::solvers::{solve_fixed_point_equation, SolverConfig};

pub const DEFAULT_AVF_NODES: usize = 4;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

pub fn step_avf(
    sys: &dyn HamiltonianSystem,
    s: &PhaseState,
    h: f64,
    nodes: usize,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    if nodes == 0 {
        return Err(Error::InvalidConfig("AVF needs at least one quadrature node".into()));
    }
    let rule = gauss_legendre(nodes);
    let (p, q) = (s.p(), s.q());
    let (gp, gq) = gradients_at(sys, p, q)?;
    let guess = stack(&(p - &gq * h), &(q + &gp * h));
    let sol = solve_fixed_point_equation(
        |x| {
            let (p1, q1) = split(x);
            let mut avg_p = p * 0.0;
            let mut avg_q = q * 0.0;
            for &(xi, w) in &rule {
                let pl = p * (1.0 - xi) + &p1 * xi;
                let ql = q * (1.0 - xi) + &q1 * xi;
                let (a, b) = gradients_at(sys, &pl, &ql)?;
                avg_p += a * w;
                avg_q += b * w;
            }
            Ok(stack(&(p - avg_q * h), &(q + avg_p * h)))
        },
        guess,
        solver,
    )
    .map_err(|e| e.in_stage("AVF stage"))?;
    PhaseState::from_flat(&sol.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::eval_energy;
    use crate::integrators::schemes::step_scheme1;
    use crate::problems::{henon_heiles_initial, HarmonicOscillator, HenonHeiles, OrbitKind};

    #[test]
    fn quadrature_is_exact_on_polynomials() {
        for n in 1..=8 {
            let rule = gauss_legendre(n);
            assert!((rule.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let approx: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
                assert!((approx - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
        let one = gauss_legendre(1);
        assert!((one[0].0 - 0.5).abs() < 1e-16 && (one[0].1 - 1.0).abs() < 1e-16);
    }

    #[test]
    fn quadratic_hamiltonian_gives_midpoint() {
        let osc = HarmonicOscillator::new(2);
        let cfg = SolverConfig::default();
        let s = PhaseState::new(vec![0.4, -1.0], vec![0.3, 0.8]).unwrap();
        for nodes in [1, 2, 4] {
            let a = step_avf(&osc, &s, 0.1, nodes, &cfg).unwrap();
            let b = step_scheme1(&osc, &s, 0.1, 0.5, &cfg).unwrap();
            assert!((a.to_flat() - b.to_flat()).amax() < 1e-12);
        }
    }

    #[test]
    fn conserves_cubic_energy() {
        let hh = HenonHeiles::new();
        let cfg = SolverConfig::default();
        let mut s = henon_heiles_initial(OrbitKind::Chaotic).unwrap();
        let e0 = eval_energy(&hh, &s).unwrap();
        for _ in 0..50 {
            let prev = eval_energy(&hh, &s).unwrap();
            s = step_avf(&hh, &s, 0.02, 2, &cfg).unwrap();
            assert!((eval_energy(&hh, &s).unwrap() - prev).abs() <= 1e-12);
        }
        assert!((eval_energy(&hh, &s).unwrap() - e0).abs() <= 1e-12);
    }

    #[test]
    fn zero_nodes_rejected() {
        let osc = HarmonicOscillator::new(1);
        let s = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
        assert!(step_avf(&osc, &s, 0.1, 0, &SolverConfig::default()).is_err());
    }
}
