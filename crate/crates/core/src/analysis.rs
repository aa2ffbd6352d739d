//! Measurement harness: convergence studies, symplecticity defects, invariant
//! drift and λ statistics.

use std::thread;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equip::{integrate_equip_final, EquipConfig};
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianSystem, PhaseState};
use crate::integrators::{integrate_final, step_with, SchemeConfig, Trajectory};

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "slope needs paired samples");
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Number of steps of size `h` spanning `[0, t_end]`.
pub fn step_count(t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() || !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidConfig(format!("need t_end > 0 and h > 0, got t_end={t_end}, h={h}")));
    }
    let ratio = t_end / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::InvalidConfig(format!("t_end={t_end} is not an integer multiple of h={h}")));
    }
    Ok(n as usize)
}

/// What a convergence study integrates.
#[derive(Debug, Clone)]
pub enum Method {
    Symplectic(SchemeConfig),
    Equip(EquipConfig),
}

impl Method {
    /// Final state after `n_steps` of size `h`; the config's own `h` is ignored.
    pub fn run_final(
        &self,
        sys: &dyn HamiltonianSystem,
        s0: &PhaseState,
        h: f64,
        n_steps: usize,
    ) -> Result<PhaseState> {
        match self {
            Method::Symplectic(cfg) => integrate_final(sys, &cfg.with_h(h), s0, n_steps),
            Method::Equip(cfg) => integrate_equip_final(sys, cfg, s0, h, n_steps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    /// `‖y_h(t_end) − y_{h/2}(t_end)‖∞`.
    pub error: f64,
    /// `log2(error_prev / error)`; absent on the first row.
    pub order: Option<f64>,
}

/// Self-comparison convergence study over `h0, h0/2, …, h0/2^(levels−1)`.
///
/// Each row compares the run at `h` against the run at `h/2`, so `levels + 1`
/// runs are made. Runs execute on separate threads.
pub fn convergence_study(
    sys: &dyn HamiltonianSystem,
    method: &Method,
    s0: &PhaseState,
    h0: f64,
    levels: usize,
    t_end: f64,
) -> Result<Vec<ConvergenceRow>> {
    if levels < 2 {
        return Err(Error::InvalidConfig(format!("convergence study needs levels >= 2, got {levels}")));
    }
    let n0 = step_count(t_end, h0)?;
    let finals: Vec<Result<PhaseState>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..=levels)
            .map(|k| {
                let h = h0 / f64::powi(2.0, k as i32);
                let n = n0 << k;
                scope.spawn(move || method.run_final(sys, s0, h, n))
            })
            .collect();
        handles
            .into_iter()
            .map(|j| j.join().expect("convergence worker panicked"))
            .collect()
    });
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for k in 0..levels {
        let error = (finals[k].to_flat() - finals[k + 1].to_flat()).amax();
        let order = rows.last().map(|prev| (prev.error / error).log2());
        rows.push(ConvergenceRow {
            h: h0 / f64::powi(2.0, k as i32),
            error,
            order,
        });
    }
    Ok(rows)
}

/// Canonical structure matrix `J = [[0, I], [−I, 0]]`.
pub fn structure_matrix(d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        j[(i, d + i)] = 1.0;
        j[(d + i, i)] = -1.0;
    }
    j
}

/// Central-difference step used for the symplecticity Jacobian.
pub const SYMPLECTIC_FD_STEP: f64 = 1e-6;

/// `‖MᵀJM − J‖∞` for the Jacobian `M` of an arbitrary map on `(p, q)`.
pub fn map_symplecticity_defect<F>(mut map: F, s: &PhaseState) -> Result<f64>
where
    F: FnMut(&PhaseState) -> Result<PhaseState>,
{
    let y = s.to_flat();
    let n = y.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = SYMPLECTIC_FD_STEP * y[j].abs().max(1.0);
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[j] += step;
        minus[j] -= step;
        let fp = map(&PhaseState::from_flat(&plus)?)?.to_flat();
        let fm = map(&PhaseState::from_flat(&minus)?)?.to_flat();
        m.set_column(j, &((fp - fm) / (plus[j] - minus[j])));
    }
    let jm = structure_matrix(n / 2);
    let defect = m.transpose() * &jm * &m - &jm;
    Ok(defect.amax())
}

/// Symplecticity defect of one step of `cfg` from `s`.
pub fn symplecticity_defect(cfg: &SchemeConfig, sys: &dyn HamiltonianSystem, s: &PhaseState) -> Result<f64> {
    map_symplecticity_defect(|x| step_with(sys, cfg, x, cfg.h), s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub label: String,
    /// `I(state_i) − I(state_0)`.
    pub series: Vec<f64>,
    pub max_abs: f64,
    pub final_value: f64,
}

/// Drift of an invariant series; `"energy"` selects the Hamiltonian.
pub fn invariant_drift(traj: &Trajectory, which: &str) -> Result<DriftReport> {
    let values = traj.series(which)?;
    let first = *values
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty trajectory".into()))?;
    let series: Vec<f64> = values.iter().map(|v| v - first).collect();
    let max_abs = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let final_value = *series.last().unwrap_or(&0.0);
    Ok(DriftReport {
        label: which.to_string(),
        series,
        max_abs,
        final_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `max |λ_n − ½|`.
    pub max_dev: f64,
}

pub fn lambda_distribution(traj: &Trajectory) -> Result<LambdaSummary> {
    summarize_lambdas(&traj.lambdas)
}

pub fn summarize_lambdas(lambdas: &[f64]) -> Result<LambdaSummary> {
    if lambdas.is_empty() {
        return Err(Error::InvalidConfig("trajectory carries no lambda data".into()));
    }
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let max_dev = lambdas.iter().fold(0.0f64, |m, l| m.max((l - 0.5).abs()));
    Ok(LambdaSummary {
        count: lambdas.len(),
        min,
        max,
        mean,
        max_dev,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecileCheck {
    pub first_max: f64,
    pub last_max: f64,
    /// `last_max ≤ 2·first_max`.
    pub bounded: bool,
}

/// Compares the largest `|x|` over the first and last tenth of a series.
pub fn decile_boundedness(series: &[f64]) -> Result<DecileCheck> {
    let k = series.len() / 10;
    if k == 0 {
        return Err(Error::InvalidConfig("series too short for a decile comparison".into()));
    }
    let amax = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let first_max = amax(&series[..k]);
    let last_max = amax(&series[series.len() - k..]);
    Ok(DecileCheck {
        first_max,
        last_max,
        bounded: last_max <= 2.0 * first_max,
    })
}

/// `‖a − b‖∞` between two states.
pub fn state_distance(a: &PhaseState, b: &PhaseState) -> f64 {
    let d: DVector<f64> = a.to_flat() - b.to_flat();
    d.amax()
}
