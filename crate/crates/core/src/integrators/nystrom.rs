//! Nyström form of Scheme I for separable systems `H = ½pᵀM⁻¹p + U(q)`:
//!
//! ```text
//! k = −M⁻¹ U_q(q + (1−λ)h q̇ + λ(1−λ)h² k)
//! q⁺ = q + h q̇ + λh² k,   q̇⁺ = q̇ + h k
//! ```
//!
//! The stage is explicit exactly when `λ ∈ {0, 1}`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianSystem, PhaseState};
use crate::solvers::{solve_fixed_point_equation, SolverConfig};

/// Position and velocity `q̇ = M⁻¹p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl VelocityState {
    pub fn from_phase(sys: &dyn HamiltonianSystem, s: &PhaseState) -> Result<Self> {
        let sep = sys.separable().ok_or(Error::NotSeparable)?;
        Ok(Self {
            q: s.q().clone(),
            v: sep.mass_inverse() * s.p(),
        })
    }

    pub fn to_phase(&self, sys: &dyn HamiltonianSystem) -> Result<PhaseState> {
        let sep = sys.separable().ok_or(Error::NotSeparable)?;
        PhaseState::from_vectors(sep.mass() * &self.v, self.q.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NystromStep {
    pub state: VelocityState,
    /// Stage iterations; zero when the stage was explicit.
    pub iterations: usize,
}

pub fn step_nystrom1(
    sys: &dyn HamiltonianSystem,
    s: &VelocityState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<NystromStep> {
    let sep = sys.separable().ok_or(Error::NotSeparable)?;
    let minv = sep.mass_inverse();
    let base = &s.q + &s.v * ((1.0 - lambda) * h);
    let coupling = lambda * (1.0 - lambda) * h * h;
    let guess = -(minv * sep.potential_gradient(&base)?);
    let (k, iterations) = if coupling == 0.0 {
        (guess, 0)
    } else {
        let sol = solve_fixed_point_equation(
            |k| Ok(-(minv * sep.potential_gradient(&(&base + k * coupling))?)),
            guess,
            solver,
        )
        .map_err(|e| e.in_stage("nystrom stage"))?;
        (sol.x, sol.iterations)
    };
    let q = &s.q + &s.v * h + &k * (lambda * h * h);
    let v = &s.v + &k * h;
    if !q.iter().chain(v.iter()).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("nystrom step"));
    }
    Ok(NystromStep {
        state: VelocityState { q, v },
        iterations,
    })
}
