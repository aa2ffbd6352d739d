//! EQUIP methods: Scheme I (Scheme IV) or Scheme III (Scheme V) with λ
//! re-solved at every step so that the energy is conserved exactly:
//!
//! ```text
//! E(λ) = H(step_h^λ(p_n, q_n)) − H_ref = 0
//! ```
//!
//! The root is found by the secant method started at ½. If it fails, the
//! nearest sign change of `E` around ½ is bracketed and solved by the
//! Illinois method before any fallback applies. Every λ the secant visits gives a map of the PRK family, so the
//! bilinear invariants `pᵀCq` are still conserved.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{eval_energy, HamiltonianSystem, PhaseState};
use crate::integrators::{check_steps, step_scheme1, step_scheme3, PartialRun, RunResult, Trajectory};
use crate::solvers::{illinois_solve, secant_solve_fallible, SecantConfig, SecantOutcome, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquipBase {
    /// Scheme IV.
    Scheme1,
    /// Scheme V.
    Scheme3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyRef {
    /// Compare against the target value at the start of the trajectory.
    #[default]
    GlobalInitial,
    /// Compare against the target value at the current state.
    PreviousStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fallback {
    /// Take the step at λ = ½ and flag the record.
    #[default]
    UseHalf,
    Error,
}

/// Starting point `λ0` of each step's secant iteration; `λ1 = λ0 + h²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecantSeed {
    /// Always ½. Keeps the iteration on the root branch nearest ½.
    #[default]
    Half,
    /// The previous step's λ (½ on the first step). Fewer iterations on
    /// smooth orbits, but can follow a distant root branch.
    Previous,
}

/// Scalar invariant to conserve in place of the energy.
pub type TargetFn = dyn Fn(&PhaseState) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub struct EquipConfig {
    pub base: EquipBase,
    pub stage_solver: SolverConfig,
    /// Residual tolerance relative to `max(1, |H_ref|)`.
    pub f_tol_rel: f64,
    pub x_tol: f64,
    pub max_iter: usize,
    pub energy_ref: EnergyRef,
    pub fallback: Fallback,
    pub seed: SecantSeed,
    /// Conserved quantity; the Hamiltonian when `None`.
    pub target: Option<Arc<TargetFn>>,
}

impl fmt::Debug for EquipConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EquipConfig")
            .field("base", &self.base)
            .field("stage_solver", &self.stage_solver)
            .field("f_tol_rel", &self.f_tol_rel)
            .field("x_tol", &self.x_tol)
            .field("max_iter", &self.max_iter)
            .field("energy_ref", &self.energy_ref)
            .field("fallback", &self.fallback)
            .field("seed", &self.seed)
            .field("target", &self.target.as_ref().map(|_| "custom"))
            .finish()
    }
}

impl EquipConfig {
    pub fn new(base: EquipBase) -> Self {
        Self {
            base,
            stage_solver: SolverConfig::default(),
            f_tol_rel: 1e-12,
            x_tol: 1e-15,
            max_iter: 50,
            energy_ref: EnergyRef::default(),
            fallback: Fallback::default(),
            seed: SecantSeed::default(),
            target: None,
        }
    }

    pub fn scheme4() -> Self {
        Self::new(EquipBase::Scheme1)
    }

    pub fn scheme5() -> Self {
        Self::new(EquipBase::Scheme3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_tol_rel > 0.0) || !(self.x_tol > 0.0) {
            return Err(Error::InvalidConfig("EQUIP tolerances must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("EQUIP max_iter must be >= 1".into()));
        }
        self.stage_solver.validate()
    }

    pub fn f_tol(&self, reference: f64) -> f64 {
        self.f_tol_rel * reference.abs().max(1.0)
    }

    pub fn target_value(&self, sys: &dyn HamiltonianSystem, s: &PhaseState) -> Result<f64> {
        match &self.target {
            Some(f) => f(s),
            None => eval_energy(sys, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquipStepRecord {
    pub lambda: f64,
    pub secant_iters: usize,
    /// `|E|` of the accepted step.
    pub energy_defect: f64,
    pub fell_back: bool,
}

/// The base map at parameter λ.
pub fn base_step(
    sys: &dyn HamiltonianSystem,
    base: EquipBase,
    s: &PhaseState,
    h: f64,
    lambda: f64,
    solver: &SolverConfig,
) -> Result<PhaseState> {
    match base {
        EquipBase::Scheme1 => step_scheme1(sys, s, h, lambda, solver),
        EquipBase::Scheme3 => step_scheme3(sys, s, h, lambda, solver),
    }
}

/// `E(λ, h) = H(step) − h_ref`.
pub fn energy_error(
    sys: &dyn HamiltonianSystem,
    s_n: &PhaseState,
    lambda: f64,
    h: f64,
    base: EquipBase,
    stage_solver: &SolverConfig,
    h_ref: f64,
) -> Result<f64> {
    let next = base_step(sys, base, s_n, h, lambda, stage_solver)?;
    Ok(eval_energy(sys, &next)? - h_ref)
}

/// Offsets from ½ scanned for a sign change once the secant has failed.
const BRACKET_STEP: f64 = 0.05;
const BRACKET_REACH: usize = 30;

/// Scans `½ ± k·δ` outward for a sign change of `E` and solves inside the
/// first bracket found, so the root nearest ½ wins.
fn bracket_search<F>(probe: &mut F, f_tol: f64, cfg: &EquipConfig) -> Option<SecantOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mid = (0.5, probe(0.5).ok()?);
    let (mut up, mut down) = (Some(mid), Some(mid));
    for k in 1..=BRACKET_REACH {
        let off = k as f64 * BRACKET_STEP;
        for (edge, x) in [(&mut up, 0.5 + off), (&mut down, 0.5 - off)] {
            let Some(prev) = *edge else { continue };
            let Ok(fx) = probe(x) else {
                *edge = None;
                continue;
            };
            if fx.signum() != prev.1.signum() || fx.abs() <= f_tol {
                let (a, b) = if prev.0 < x { (prev, (x, fx)) } else { ((x, fx), prev) };
                if let Ok(o) = illinois_solve(&mut *probe, a, b, f_tol, cfg.x_tol, 4 * cfg.max_iter) {
                    if o.residual <= f_tol {
                        return Some(o);
                    }
                }
            }
            *edge = Some((x, fx));
        }
    }
    None
}

/// One EQUIP step.
///
/// `h_ref` is the reference for [`EnergyRef::GlobalInitial`] and ignored for
/// [`EnergyRef::PreviousStep`]; `lambda_prev` seeds the secant iteration.
pub fn step_equip(
    sys: &dyn HamiltonianSystem,
    s_n: &PhaseState,
    h: f64,
    cfg: &EquipConfig,
    h_ref: f64,
    lambda_prev: f64,
) -> Result<(PhaseState, EquipStepRecord)> {
    let reference = match cfg.energy_ref {
        EnergyRef::GlobalInitial => h_ref,
        EnergyRef::PreviousStep => cfg.target_value(sys, s_n)?,
    };
    let f_tol = cfg.f_tol(reference);
    let mut probes: Vec<(f64, PhaseState, f64)> = Vec::new();
    let mut probe = |lambda: f64| -> Result<f64> {
        if let Some((_, _, e)) = probes.iter().find(|(l, _, _)| *l == lambda) {
            return Ok(*e);
        }
        let next = base_step(sys, cfg.base, s_n, h, lambda, &cfg.stage_solver)?;
        let e = cfg.target_value(sys, &next)? - reference;
        if !e.is_finite() {
            return Err(Error::NonFinite("energy error"));
        }
        probes.push((lambda, next, e));
        Ok(e)
    };
    let mut solve_from = |x0: f64| {
        let secant = SecantConfig {
            x0,
            x1: x0 + h * h,
            f_tol,
            x_tol: cfg.x_tol,
            max_iter: cfg.max_iter,
        };
        match secant_solve_fallible(&mut probe, &secant, Some(0.5)) {
            Ok(o) if o.residual <= f_tol => Ok(o),
            Ok(o) => Err(Error::SecantNonConvergence {
                iterations: o.iterations,
                best: o.root,
                residual: o.residual,
            }),
            Err(e) => Err(e),
        }
    };
    let x0 = match cfg.seed {
        SecantSeed::Previous => lambda_prev,
        SecantSeed::Half => 0.5,
    };
    let mut accepted = solve_from(x0);
    if accepted.is_err() && x0 != 0.5 {
        accepted = solve_from(0.5);
    }
    if accepted.is_err() {
        if let Some(o) = bracket_search(&mut probe, f_tol, cfg) {
            accepted = Ok(o);
        }
    }
    match accepted {
        Ok(o) => {
            let state = probes
                .iter()
                .find(|(l, _, _)| *l == o.root)
                .map(|(_, s, _)| s.clone())
                .expect("accepted root was probed");
            Ok((
                state,
                EquipStepRecord {
                    lambda: o.root,
                    secant_iters: o.iterations,
                    energy_defect: o.residual,
                    fell_back: false,
                },
            ))
        }
        Err(e) => match cfg.fallback {
            Fallback::Error => Err(e.in_stage("EQUIP secant")),
            Fallback::UseHalf => {
                let iters = match &e {
                    Error::SecantNonConvergence { iterations, .. } => *iterations,
                    _ => cfg.max_iter,
                };
                let state = match probes.iter().find(|(l, _, _)| *l == 0.5) {
                    Some((_, s, _)) => s.clone(),
                    None => base_step(sys, cfg.base, s_n, h, 0.5, &cfg.stage_solver)
                        .map_err(|e| e.in_stage("EQUIP fallback"))?,
                };
                let defect = (cfg.target_value(sys, &state)? - reference).abs();
                Ok((
                    state,
                    EquipStepRecord {
                        lambda: 0.5,
                        secant_iters: iters,
                        energy_defect: defect,
                        fell_back: true,
                    },
                ))
            }
        },
    }
}

pub fn integrate_equip(
    sys: &dyn HamiltonianSystem,
    cfg: &EquipConfig,
    s0: &PhaseState,
    h: f64,
    n_steps: usize,
) -> RunResult {
    let fail = |trajectory, error| Box::new(PartialRun { trajectory, error });
    let setup = check_steps(n_steps)
        .and_then(|_| cfg.validate())
        .and_then(|_| {
            if h.is_finite() && h != 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("step size must be finite and nonzero, got {h}")))
            }
        })
        .and_then(|_| cfg.target_value(sys, s0))
        .and_then(|h0| Ok((h0, Trajectory::start(sys, s0.clone())?)));
    let (h0, mut traj) = setup.map_err(|e| fail(Trajectory::default(), e))?;
    let mut s = s0.clone();
    let mut lambda = 0.5;
    for n in 1..=n_steps {
        let result = step_equip(sys, &s, h, cfg, h0, lambda).and_then(|(next, rec)| {
            traj.record(sys, n as f64 * h, next.clone())?;
            Ok((next, rec))
        });
        match result {
            Ok((next, rec)) => {
                lambda = rec.lambda;
                traj.lambdas.push(rec.lambda);
                traj.records.push(rec);
                s = next;
            }
            Err(e) => return Err(fail(traj, e.at_step(n))),
        }
    }
    Ok(traj)
}

/// Final state of an EQUIP run, without recording.
pub fn integrate_equip_final(
    sys: &dyn HamiltonianSystem,
    cfg: &EquipConfig,
    s0: &PhaseState,
    h: f64,
    n_steps: usize,
) -> Result<PhaseState> {
    check_steps(n_steps)?;
    cfg.validate()?;
    let h0 = cfg.target_value(sys, s0)?;
    let mut s = s0.clone();
    let mut lambda = 0.5;
    for n in 1..=n_steps {
        let (next, rec) = step_equip(sys, &s, h, cfg, h0, lambda).map_err(|e| e.at_step(n))?;
        lambda = rec.lambda;
        s = next;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        angular_momentum, henon_heiles_initial, kepler_initial, HarmonicOscillator, HenonHeiles,
        OrbitKind, PerturbedKepler,
    };

    fn box_state() -> PhaseState {
        henon_heiles_initial(OrbitKind::Box).unwrap()
    }

    /// A box-orbit state away from the symmetric starting point, where the
    /// leading energy-error term of the midpoint rule vanishes.
    fn generic_box_state() -> PhaseState {
        let hh = HenonHeiles::new();
        let mut s = box_state();
        for _ in 0..37 {
            s = step_scheme1(&hh, &s, 0.02, 0.5, &SolverConfig::default()).unwrap();
        }
        s
    }

    fn e_at(s: &PhaseState, lambda: f64, h: f64) -> f64 {
        let hh = HenonHeiles::new();
        let h0 = eval_energy(&hh, s).unwrap();
        energy_error(&hh, s, lambda, h, EquipBase::Scheme1, &SolverConfig::default(), h0).unwrap()
    }

    #[test]
    fn quadratic_energy_error_vanishes_at_half() {
        let osc = HarmonicOscillator::new(2);
        let s = PhaseState::new(vec![0.3, -0.7], vec![1.0, 0.2]).unwrap();
        let h0 = eval_energy(&osc, &s).unwrap();
        for base in [EquipBase::Scheme1, EquipBase::Scheme3] {
            let e = energy_error(&osc, &s, 0.5, 0.1, base, &SolverConfig::default(), h0).unwrap();
            assert!(e.abs() < 1e-14);
        }
    }

    #[test]
    fn energy_error_orders() {
        let s = generic_box_state();
        let e1 = e_at(&s, 0.5, 0.02);
        assert!(e1.abs() <= 1e-5);
        let r = e1 / e_at(&s, 0.5, 0.01);
        assert!((6.0..=10.0).contains(&r), "ratio at half {r}");
        let s0 = box_state();
        assert!(e_at(&s0, 0.5, 0.02).abs() <= 1e-5);
        let r = e_at(&s0, 0.0, 0.02) / e_at(&s0, 0.0, 0.01);
        assert!((3.5..=4.5).contains(&r), "ratio at zero {r}");
        let r = e_at(&s, 0.0, 0.02) / e_at(&s, 0.0, 0.01);
        assert!((3.5..=4.5).contains(&r), "ratio at zero {r}");
    }

    #[test]
    fn oscillator_accepts_half_immediately() {
        let osc = HarmonicOscillator::new(1);
        let s = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
        for cfg in [EquipConfig::scheme4(), EquipConfig::scheme5()] {
            let (_, rec) = step_equip(&osc, &s, 0.1, &cfg, 0.5, 0.5).unwrap();
            assert_eq!(rec.lambda, 0.5);
            assert!(rec.secant_iters <= 1);
            let traj = integrate_equip(&osc, &cfg, &s, 0.1, 50).unwrap();
            assert!(traj.lambdas.iter().all(|l| (l - 0.5).abs() <= 1e-15));
        }
    }

    #[test]
    fn box_orbit_lambda_near_half() {
        let hh = HenonHeiles::new();
        let s = box_state();
        let h0 = eval_energy(&hh, &s).unwrap();
        for (cfg, quantile) in [(EquipConfig::scheme4(), 0.99), (EquipConfig::scheme5(), 0.5)] {
            let traj = integrate_equip(&hh, &cfg, &s, 0.02, 2000).unwrap();
            for rec in &traj.records {
                assert!(!rec.fell_back);
                assert!(rec.lambda > 0.0 && rec.lambda < 1.0, "lambda {}", rec.lambda);
                assert!(rec.energy_defect <= 1e-12);
            }
            assert!(traj.energy.iter().all(|e| (e - h0).abs() <= 1e-12));
            let mut dev: Vec<f64> = traj.lambdas.iter().map(|l| (l - 0.5).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let q = dev[(quantile * dev.len() as f64) as usize];
            assert!(q <= 0.05, "{:?} quantile {quantile}: {q}", cfg.base);
        }
        let traj = integrate_equip(&hh, &EquipConfig::scheme4(), &s, 0.02, 5000).unwrap();
        let mean = traj.lambdas.iter().sum::<f64>() / traj.lambdas.len() as f64;
        assert!((mean - 0.5).abs() <= 1e-3, "mean {mean}");
    }

    #[test]
    fn two_body_conserves_energy_and_momentum() {
        let kep = PerturbedKepler::new(0.0);
        let s = kepler_initial(0.6).unwrap();
        let traj = integrate_equip(&kep, &EquipConfig::scheme5(), &s, 0.02, 2000).unwrap();
        let (h0, l0) = (traj.energy[0], angular_momentum(&s));
        for (e, st) in traj.energy.iter().zip(&traj.states) {
            assert!((e - h0).abs() <= 1e-11);
            assert!((angular_momentum(st) - l0).abs() <= 1e-11);
        }
    }

    #[test]
    fn infinite_tolerance_reproduces_midpoint_base() {
        let hh = HenonHeiles::new();
        let s = henon_heiles_initial(OrbitKind::Chaotic).unwrap();
        for (base, id) in [
            (EquipBase::Scheme1, crate::integrators::SchemeId::Scheme1),
            (EquipBase::Scheme3, crate::integrators::SchemeId::Scheme3),
        ] {
            let mut cfg = EquipConfig::new(base);
            cfg.f_tol_rel = f64::INFINITY;
            let a = integrate_equip(&hh, &cfg, &s, 0.02, 20).unwrap();
            let sc = crate::integrators::SchemeConfig::new(id, 0.5, 0.02);
            let b = crate::integrators::integrate(&hh, &sc, &s, 20).unwrap();
            assert_eq!(a.states, b.states);
        }
    }

    #[test]
    fn previous_step_reference() {
        let hh = HenonHeiles::new();
        let s = henon_heiles_initial(OrbitKind::Chaotic).unwrap();
        let mut cfg = EquipConfig::scheme4();
        cfg.energy_ref = EnergyRef::PreviousStep;
        let traj = integrate_equip(&hh, &cfg, &s, 0.02, 200).unwrap();
        for w in traj.energy.windows(2) {
            assert!((w[1] - w[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn custom_target_scaling_gives_same_lambda() {
        let hh = HenonHeiles::new();
        let s = box_state();
        let mut cfg = EquipConfig::scheme4();
        let a = integrate_equip(&hh, &cfg, &s, 0.02, 20).unwrap();
        cfg.target = Some(Arc::new(|s: &PhaseState| {
            let hh = HenonHeiles::new();
            Ok(0.5 * eval_energy(&hh, s)?)
        }));
        let b = integrate_equip(&hh, &cfg, &s, 0.02, 20).unwrap();
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn fallback_policies() {
        let hh = HenonHeiles::new();
        let s = henon_heiles_initial(OrbitKind::Chaotic).unwrap();
        let h0 = eval_energy(&hh, &s).unwrap();
        let mut cfg = EquipConfig::scheme4();
        cfg.max_iter = 1;
        cfg.f_tol_rel = 1e-300;
        cfg.x_tol = 1e-300;
        let (state, rec) = step_equip(&hh, &s, 0.02, &cfg, h0, 0.5).unwrap();
        assert!(rec.fell_back);
        assert_eq!(rec.lambda, 0.5);
        assert_eq!(state, step_scheme1(&hh, &s, 0.02, 0.5, &cfg.stage_solver).unwrap());
        cfg.fallback = Fallback::Error;
        let err = step_equip(&hh, &s, 0.02, &cfg, h0, 0.5).unwrap_err();
        assert!(matches!(err.root_cause(), Error::SecantNonConvergence { .. }));
    }

    #[test]
    fn flat_secant_start_is_rescued_by_bracketing() {
        // maximum at the secant start, roots at ½ ± 0.05
        let cfg = EquipConfig::scheme5();
        let mut probe = |l: f64| -> Result<f64> { Ok(0.025 - 10.0 * (l - 0.5) * (l - 0.5)) };
        let o = bracket_search(&mut probe, 1e-15, &cfg).unwrap();
        assert!((o.root - 0.55).abs() < 1e-12 || (o.root - 0.45).abs() < 1e-12);
        let mut none = |_: f64| -> Result<f64> { Ok(1.0) };
        assert!(bracket_search(&mut none, 1e-15, &cfg).is_none());
    }

    #[test]
    fn previous_seed_still_conserves() {
        let hh = HenonHeiles::new();
        let s = box_state();
        let mut cfg = EquipConfig::scheme4();
        cfg.seed = SecantSeed::Previous;
        let traj = integrate_equip(&hh, &cfg, &s, 0.02, 500).unwrap();
        assert!(traj.energy.iter().all(|e| (e - traj.energy[0]).abs() <= 1e-12));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = EquipConfig::scheme4();
        cfg.max_iter = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = EquipConfig::scheme4();
        cfg.f_tol_rel = 0.0;
        assert!(cfg.validate().is_err());
        let osc = HarmonicOscillator::new(1);
        let s = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
        assert!(integrate_equip(&osc, &EquipConfig::scheme4(), &s, 0.0, 5).is_err());
        assert!(integrate_equip(&osc, &EquipConfig::scheme4(), &s, 0.1, 0).is_err());
    }
}
