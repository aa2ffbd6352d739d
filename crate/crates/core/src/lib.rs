//! Parameterized symplectic integrators for canonical Hamiltonian systems.
//!
//! The central map is the λ-family `Φ_h^λ` (Scheme I), a one-stage
//! partitioned Runge–Kutta method that is symplectic for every real λ. Built
//! on it are the generating-function truncation (Scheme II), the symmetric
//! composition `Φ^λ_{h/2} ∘ Φ^{1−λ}_{h/2}` (Scheme III) and its order-4
//! triple jump, plus the EQUIP methods, which choose λ at every step so that
//! the energy is conserved exactly.

pub mod analysis;
pub mod cli;
pub mod equip;
pub mod error;
pub mod hamiltonian;
pub mod integrators;
pub mod problems;
pub mod rng;
pub mod series;
pub mod solvers;

pub use equip::{integrate_equip, step_equip, EquipBase, EquipConfig, EquipStepRecord};
pub use error::{Error, Result};
pub use hamiltonian::{eval_energy, eval_gradients, HamiltonianSystem, PhaseState};
pub use integrators::{integrate, SchemeConfig, SchemeId, Trajectory};
pub use problems::ProblemId;
pub use solvers::SolverConfig;
