//! The λ-parameterized symplectic one-step maps.
//!
//! `Φ_h^λ` (Scheme I) is the one-stage partitioned Runge–Kutta method with
//! tableaux `a = λ`, `â = 1 − λ`, `b = b̂ = 1`:
//!
//! ```text
//! k = −H_q(p + λhk, q + (1−λ)hl),   l = H_p(p + λhk, q + (1−λ)hl)
//! p⁺ = p + hk,                      q⁺ = q + hl
//! ```
//!
//! `λ = 0, 1` are the symplectic Euler methods and `λ = ½` is the implicit
//! midpoint rule. Its adjoint is `Φ_h^{1−λ}`.

use nalgebra::DVector;

use crate::error::Result;
use crate::hamiltonian::{gradients_at, hessians_at, HamiltonianSystem, PhaseState};
use crate::solvers::{solve_fixed_point_equation, SolverConfig};

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

pub(crate) fn split(x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let d = x.len() / 2;
    (x.rows(0, d).into_owned(), x.rows(d, d).into_owned())
}

/// Scheme I, solved on the stage increments `(k, l)`.
pub fn step_scheme1(
    sys: &dyn HamiltonianSystem,
    s: &PhaseState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    let (p, q) = (s.p(), s.q());
    let (gp, gq) = gradients_at(sys, p, q)?;
    let guess = stack(&-gq, &gp);
    let (a, ahat) = (lambda * h, (1.0 - lambda) * h);
    let sol = solve_fixed_point_equation(
        |x| {
            let (k, l) = split(x);
            let (gu, gv) = gradients_at(sys, &(p + k * a), &(q + l * ahat))?;
            Ok(stack(&-gv, &gu))
        },
        guess,
        solver,
    )
    .map_err(|e| e.in_stage("scheme I stage"))?;
    let (k, l) = split(&sol.x);
    PhaseState::from_vectors(p + k * h, q + l * h)
}

/// `Φ_h^{1−λ}`.
pub fn step_scheme1_adjoint(
    sys: &dyn HamiltonianSystem,
    s: &PhaseState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    step_scheme1(sys, s, h, 1.0 - lambda, solver)
}

/// Scheme II: the second-order truncation of the generating function,
///
/// ```text
/// p⁺ = p − h H_v − (λ−½)h² (H_vv H_u + H_vu H_v)
/// q⁺ = q + h H_u + (λ−½)h² (H_uu H_v + H_uv H_u)
/// ```
///
/// with every derivative at `ū = λp⁺ + (1−λ)p`, `v̄ = λq + (1−λ)q⁺`. Solved
/// by fixed-point iteration on `(p⁺, q⁺)`.
pub fn step_scheme2(
    sys: &dyn HamiltonianSystem,
    s: &PhaseState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    let (p, q) = (s.p(), s.q());
    let (gp, gq) = gradients_at(sys, p, q)?;
    let guess = stack(&(p - &gq * h), &(q + &gp * h));
    let c = (lambda - 0.5) * h * h;
    let sol = solve_fixed_point_equation(
        |x| {
            let (p1, q1) = split(x);
            let u = p1 * lambda + p * (1.0 - lambda);
            let v = q * lambda + q1 * (1.0 - lambda);
            let (hu, hv) = gradients_at(sys, &u, &v)?;
            let mut p_new = p - &hv * h;
            let mut q_new = q + &hu * h;
            if c != 0.0 {
                let hess = hessians_at(sys, &u, &v)?;
                p_new -= (&hess.qq * &hu + hess.pq.tr_mul(&hv)) * c;
                q_new += (&hess.pp * &hv + &hess.pq * &hu) * c;
            }
            Ok(stack(&p_new, &q_new))
        },
        guess,
        solver,
    )
    .map_err(|e| e.in_stage("scheme II stage"))?;
    PhaseState::from_flat(&sol.x)
}

/// Scheme III, `Ψ_h^λ = Φ_{h/2}^λ ∘ Φ_{h/2}^{1−λ}`; symmetric and of order 2.
pub fn step_scheme3(
    sys: &dyn HamiltonianSystem,
    s: &PhaseState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    let half = 0.5 * h;
    let mid = step_scheme1(sys, s, half, 1.0 - lambda, solver)
        .map_err(|e| e.in_stage("first half-step"))?;
    step_scheme1(sys, &mid, half, lambda, solver).map_err(|e| e.in_stage("second half-step"))
}

/// Triple-jump weights `(γ1, γ2, γ3)` lifting a symmetric order-2 map to
/// order 4.
pub fn triple_jump_weights() -> [f64; 3] {
    let g1 = 1.0 / (2.0 - 2f64.cbrt());
    [g1, 1.0 - 2.0 * g1, g1]
}

/// `Ψ_{γ1h} ∘ Ψ_{γ2h} ∘ Ψ_{γ3h}` with the triple-jump weights.
pub fn step_composed4(
    sys: &dyn HamiltonianSystem,
    s: &PhaseState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    let mut state = s.clone();
    for g in triple_jump_weights() {
        state = step_scheme3(sys, &state, g * h, lambda, solver)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{kepler_initial, make_coupled_fixture, FreeParticle, HarmonicOscillator, HenonHeiles, PerturbedKepler, henon_heiles_initial, OrbitKind, ProblemId};
    use crate::rng::Lcg;
    use crate::analysis::loglog_slope;

    fn st(p: &[f64], q: &[f64]) -> PhaseState {
        PhaseState::new(p.to_vec(), q.to_vec()).unwrap()
    }

    fn dist(a: &PhaseState, b: &PhaseState) -> f64 {
        (a.to_flat() - b.to_flat()).amax()
    }

    #[test]
    fn scheme1_explicit_cases() {
        let osc = HarmonicOscillator::new(1);
        let cfg = SolverConfig::default();
        let s = st(&[1.0], &[0.0]);
        let out = step_scheme1(&osc, &s, 0.1, 0.0, &cfg).unwrap();
        assert!((out.p()[0] - 0.99).abs() < 1e-15 && (out.q()[0] - 0.1).abs() < 1e-15);
        let out = step_scheme1(&osc, &s, 0.1, 1.0, &cfg).unwrap();
        assert!((out.p()[0] - 1.0).abs() < 1e-15 && (out.q()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn free_particle_drift() {
        let free = FreeParticle::new(1);
        let cfg = SolverConfig::default();
        let s = st(&[2.0], &[0.0]);
        for l in [-1.0, 0.0, 0.3, 0.5, 2.0] {
            let out = step_scheme1(&free, &s, 0.3, l, &cfg).unwrap();
            assert_eq!(out.p()[0], 2.0);
            assert!((out.q()[0] - 0.6).abs() < 1e-15);
            let out = step_scheme2(&free, &s, 0.3, l, &cfg).unwrap();
            assert_eq!(out.p()[0], 2.0);
            assert!((out.q()[0] - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn adjoint_examples() {
        let osc = HarmonicOscillator::new(1);
        let cfg = SolverConfig::default();
        let s = st(&[1.0], &[0.0]);
        let a = step_scheme1_adjoint(&osc, &s, 0.1, 0.0, &cfg).unwrap();
        let b = step_scheme1(&osc, &s, 0.1, 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        let hh = HenonHeiles::new();
        let s = st(&[0.3, -0.2], &[0.1, 0.4]);
        assert_eq!(
            step_scheme1_adjoint(&hh, &s, 0.05, 0.5, &cfg).unwrap(),
            step_scheme1(&hh, &s, 0.05, 0.5, &cfg).unwrap()
        );
    }

    #[test]
    fn adjoint_identity_and_symmetry() {
        let cfg = SolverConfig::default();
        let mut rng = Lcg::new(5);
        for id in [ProblemId::HenonHeiles, ProblemId::PerturbedKepler { mu: 0.0075 }] {
            let sys = id.build().unwrap();
            for _ in 0..10 {
                let s = id.random_state(&mut rng).unwrap();
                let l = rng.uniform(-1.0, 2.0);
                let fwd = step_scheme1(sys.as_ref(), &s, 0.01, l, &cfg).unwrap();
                let back = step_scheme1_adjoint(sys.as_ref(), &fwd, -0.01, l, &cfg).unwrap();
                assert!(dist(&back, &s) < 1e-12);
                let fwd = step_scheme3(sys.as_ref(), &s, 0.01, l, &cfg).unwrap();
                let back = step_scheme3(sys.as_ref(), &fwd, -0.01, l, &cfg).unwrap();
                assert!(dist(&back, &s) < 1e-12);
                let fwd = step_composed4(sys.as_ref(), &s, 0.01, l, &cfg).unwrap();
                let back = step_composed4(sys.as_ref(), &fwd, -0.01, l, &cfg).unwrap();
                assert!(dist(&back, &s) < 1e-12);
            }
        }
    }

    #[test]
    fn scheme2_reduces_to_midpoint() {
        let cfg = SolverConfig::default();
        let coupled = make_coupled_fixture();
        let s = st(&[0.3, -0.2], &[0.1, 0.4]);
        let a = step_scheme2(&coupled, &s, 0.05, 0.5, &cfg).unwrap();
        let b = step_scheme1(&coupled, &s, 0.05, 0.5, &cfg).unwrap();
        assert!(dist(&a, &b) < 1e-13);
    }

    #[test]
    fn scheme3_at_half_is_two_midpoint_steps() {
        let cfg = SolverConfig::default();
        let hh = HenonHeiles::new();
        let s = st(&[0.3, -0.2], &[0.1, 0.4]);
        let a = step_scheme3(&hh, &s, 0.1, 0.5, &cfg).unwrap();
        let m = step_scheme1(&hh, &s, 0.05, 0.5, &cfg).unwrap();
        let b = step_scheme1(&hh, &m, 0.05, 0.5, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn triple_jump_conditions() {
        let g = triple_jump_weights();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(g.iter().map(|x| x.powi(3)).sum::<f64>().abs() < 1e-14);
        assert_eq!(g[0], g[2]);
    }

    #[test]
    fn composed4_at_half_is_triple_jump_of_midpoint_pairs() {
        let cfg = SolverConfig::default();
        let hh = HenonHeiles::new();
        let s = st(&[0.3, -0.2], &[0.1, 0.4]);
        let a = step_composed4(&hh, &s, 0.1, 0.5, &cfg).unwrap();
        let mut b = s.clone();
        for g in triple_jump_weights() {
            for _ in 0..2 {
                b = step_scheme1(&hh, &b, 0.05 * g, 0.5, &cfg).unwrap();
            }
        }
        assert!(dist(&a, &b) < 1e-14);
    }

    #[test]
    fn composed4_fourth_order_on_oscillator() {
        let cfg = SolverConfig::default();
        let osc = HarmonicOscillator::new(1);
        let s0 = st(&[1.0], &[0.0]);
        let exact = HarmonicOscillator::exact_flow(&s0, 1.0);
        let hs = [0.1f64, 0.05, 0.025];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let n = (1.0 / h).round() as usize;
                let mut s = s0.clone();
                for _ in 0..n {
                    s = step_composed4(&osc, &s, h, 1.0 / 3.0, &cfg).unwrap();
                }
                dist(&s, &exact)
            })
            .collect();
        let order = loglog_slope(&hs, &errs);
        assert!((order - 4.0).abs() < 0.25, "{order}");
    }

    #[test]
    fn scheme2_local_error_is_third_order() {
        let cfg = SolverConfig::default();
        let hh = HenonHeiles::new();
        let s0 = henon_heiles_initial(OrbitKind::Chaotic).unwrap();
        let hs = [1e-2, 5e-3, 2.5e-3];
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let one = step_scheme2(&hh, &s0, h, 1.0 / 3.0, &cfg).unwrap();
                let mut r = s0.clone();
                for _ in 0..100 {
                    r = step_composed4(&hh, &r, h / 100.0, 0.5, &cfg).unwrap();
                }
                dist(&one, &r)
            })
            .collect();
        let order = loglog_slope(&hs, &errs);
        assert!((order - 3.0).abs() < 0.2, "{order}");
    }

    #[test]
    fn kepler_angular_momentum_per_step() {
        let cfg = SolverConfig::default();
        let kep = PerturbedKepler::new(0.0075);
        let inv = &kep.quadratic_invariants()[0];
        let s = kepler_initial(0.6).unwrap();
        for l in [-1.0, 1.0 / 3.0, 1.5, 2.0] {
            for f in [step_scheme1, step_scheme3, step_composed4] {
                let out = f(&kep, &s, 0.02, l, &cfg).unwrap();
                assert!((inv.eval(&out) - inv.eval(&s)).abs() < 1e-13);
            }
        }
    }
}
