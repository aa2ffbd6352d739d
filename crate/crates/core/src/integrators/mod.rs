//! One-step maps and the fixed-step trajectory driver.

pub mod avf;
pub mod nystrom;
pub mod schemes;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::equip::EquipStepRecord;
use crate::error::{Error, Result};
use crate::hamiltonian::{eval_energy, HamiltonianSystem, PhaseState};
use crate::solvers::SolverConfig;

pub use avf::{gauss_legendre, step_avf, DEFAULT_AVF_NODES};
pub use nystrom::{step_nystrom1, NystromStep, VelocityState};
pub use schemes::{
    step_composed4, step_scheme1, step_scheme1_adjoint, step_scheme2, step_scheme3,
    triple_jump_weights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    Scheme1,
    Scheme1Adjoint,
    Scheme2,
    Scheme3,
    Composed4,
    Nystrom1,
    Avf,
}

impl SchemeId {
    pub const ALL: [SchemeId; 7] = [
        SchemeId::Scheme1,
        SchemeId::Scheme1Adjoint,
        SchemeId::Scheme2,
        SchemeId::Scheme3,
        SchemeId::Composed4,
        SchemeId::Nystrom1,
        SchemeId::Avf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Scheme1 => "scheme1",
            SchemeId::Scheme1Adjoint => "scheme1-adjoint",
            SchemeId::Scheme2 => "scheme2",
            SchemeId::Scheme3 => "scheme3",
            SchemeId::Composed4 => "composed4",
            SchemeId::Nystrom1 => "nystrom1",
            SchemeId::Avf => "avf",
        }
    }

    /// Whether the map is symplectic for every λ.
    pub fn is_symplectic(self) -> bool {
        !matches!(self, SchemeId::Avf)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeId,
    pub lambda: f64,
    pub h: f64,
    pub stage_solver: SolverConfig,
    pub avf_nodes: usize,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeId, lambda: f64, h: f64) -> Self {
        Self {
            scheme,
            lambda,
            h,
            stage_solver: SolverConfig::default(),
            avf_nodes: DEFAULT_AVF_NODES,
        }
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.h.is_finite() || self.h == 0.0 {
            return Err(Error::InvalidConfig(format!("step size must be finite and nonzero, got {}", self.h)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::InvalidConfig("lambda must be finite".into()));
        }
        if self.avf_nodes == 0 {
            return Err(Error::InvalidConfig("avf_nodes must be at least 1".into()));
        }
        self.stage_solver.validate()
    }
}

/// One step of the configured scheme with its own `h`.
pub fn step(sys: &dyn HamiltonianSystem, cfg: &SchemeConfig, s: &PhaseState) -> Result<PhaseState> {
    step_with(sys, cfg, s, cfg.h)
}

/// One step of the configured scheme with step size `h`.
pub fn step_with(sys: &dyn HamiltonianSystem, cfg: &SchemeConfig, s: &PhaseState, h: f64) -> Result<PhaseState> {
    if s.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: s.dim(),
        });
    }
    let (l, solver) = (cfg.lambda, &cfg.stage_solver);
    match cfg.scheme {
        SchemeId::Scheme1 => step_scheme1(sys, s, h, l, solver),
        SchemeId::Scheme1Adjoint => step_scheme1_adjoint(sys, s, h, l, solver),
        SchemeId::Scheme2 => step_scheme2(sys, s, h, l, solver),
        SchemeId::Scheme3 => step_scheme3(sys, s, h, l, solver),
        SchemeId::Composed4 => step_composed4(sys, s, h, l, solver),
        SchemeId::Nystrom1 => {
            let vs = VelocityState::from_phase(sys, s)?;
            step_nystrom1(sys, &vs, h, l, solver)?.state.to_phase(sys)
        }
        SchemeId::Avf => step_avf(sys, s, h, cfg.avf_nodes, solver),
    }
}

/// Recorded time series of a fixed-step run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub energy: Vec<f64>,
    pub invariants: BTreeMap<String, Vec<f64>>,
    /// λ used by each step; one shorter than the other series.
    pub lambdas: Vec<f64>,
    /// Per-step EQUIP diagnostics; empty for fixed-λ runs.
    pub records: Vec<EquipStepRecord>,
}

impl Trajectory {
    pub fn start(sys: &dyn HamiltonianSystem, s0: PhaseState) -> Result<Self> {
        let mut traj = Trajectory {
            invariants: sys
                .quadratic_invariants()
                .iter()
                .map(|inv| (inv.label.clone(), Vec::new()))
                .collect(),
            ..Default::default()
        };
        traj.record(sys, 0.0, s0)?;
        Ok(traj)
    }

    pub(crate) fn record(&mut self, sys: &dyn HamiltonianSystem, t: f64, s: PhaseState) -> Result<()> {
        let e = eval_energy(sys, &s)?;
        for inv in sys.quadratic_invariants() {
            if let Some(series) = self.invariants.get_mut(&inv.label) {
                series.push(inv.eval(&s));
            }
        }
        self.times.push(t);
        self.energy.push(e);
        self.states.push(s);
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn initial(&self) -> &PhaseState {
        &self.states[0]
    }

    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Series for an invariant label, or the energy for `"energy"`/`"H"`.
    pub fn series(&self, label: &str) -> Result<&[f64]> {
        match label {
            "energy" | "H" => Ok(&self.energy),
            _ => self
                .invariants
                .get(label)
                .map(|v| v.as_slice())
                .ok_or_else(|| Error::UnknownLabel(label.to_string())),
        }
    }
}

/// A run that stopped early, with everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct PartialRun {
    pub trajectory: Trajectory,
    pub error: Error,
}

impl fmt::Display for PartialRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed steps)", self.error, self.trajectory.n_steps())
    }
}

impl std::error::Error for PartialRun {}

impl From<Box<PartialRun>> for Error {
    fn from(run: Box<PartialRun>) -> Self {
        run.error
    }
}

pub type RunResult = std::result::Result<Trajectory, Box<PartialRun>>;

pub(crate) fn check_steps(n_steps: usize) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
    }
    Ok(())
}

pub fn integrate(sys: &dyn HamiltonianSystem, cfg: &SchemeConfig, s0: &PhaseState, n_steps: usize) -> RunResult {
    let fail = |trajectory, error| Box::new(PartialRun { trajectory, error });
    if let Err(e) = check_steps(n_steps).and_then(|_| cfg.validate()) {
        return Err(fail(Trajectory::default(), e));
    }
    let mut traj = Trajectory::start(sys, s0.clone()).map_err(|e| fail(Trajectory::default(), e))?;
    let mut s = s0.clone();
    for n in 1..=n_steps {
        match step(sys, cfg, &s).and_then(|next| {
            traj.record(sys, n as f64 * cfg.h, next.clone())?;
            Ok(next)
        }) {
            Ok(next) => {
                traj.lambdas.push(cfg.lambda);
                s = next;
            }
            Err(e) => return Err(fail(traj, e.at_step(n))),
        }
    }
    Ok(traj)
}

/// Final state of an `n_steps` run, without recording.
pub fn integrate_final(
    sys: &dyn HamiltonianSystem,
    cfg: &SchemeConfig,
    s0: &PhaseState,
    n_steps: usize,
) -> Result<PhaseState> {
    check_steps(n_steps)?;
    cfg.validate()?;
    let mut s = s0.clone();
    for n in 1..=n_steps {
        s = step(sys, cfg, &s).map_err(|e| e.at_step(n))?;
    }
    Ok(s)
}
