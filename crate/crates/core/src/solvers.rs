//! Nonlinear solvers for the implicit stage equations and the scalar
//! parameter search.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual growth over the initial residual that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stopping tolerance on the ∞-norm residual, scaled by `max(1, ‖x‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
    /// Retry with Newton when fixed-point iteration fails.
    pub newton_fallback: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 200,
            method: SolverMethod::FixedPoint,
            newton_fallback: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("solver tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("solver max_iter must be >= 1".into()));
        }
        Ok(())
    }

    fn threshold(&self, x: &DVector<f64>) -> f64 {
        self.tol * x.amax().max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates `x ← map(x)` until `‖x − map(x)‖∞` drops below the tolerance.
pub fn fixed_point_solve<F>(mut map: F, guess: DVector<f64>, cfg: &SolverConfig) -> Result<Solution>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    let mut x = guess;
    let mut best = x.clone();
    let mut best_res = f64::INFINITY;
    let mut initial = None;
    for k in 0..=cfg.max_iter {
        let next = map(&x)?;
        let res = (&next - &x).amax();
        if !res.is_finite() {
            return Err(Error::Divergence {
                iterations: k,
                residual: best_res,
                best,
            });
        }
        if res < best_res {
            best_res = res;
            best.copy_from(&x);
        }
        if res <= cfg.threshold(&x) {
            return Ok(Solution {
                x,
                iterations: k,
                residual: res,
            });
        }
        let r0 = *initial.get_or_insert(res);
        if res > DIVERGENCE_FACTOR * r0 {
            return Err(Error::Divergence {
                iterations: k,
                residual: best_res,
                best,
            });
        }
        if k == cfg.max_iter {
            break;
        }
        x = next;
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: best_res,
        best,
    })
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: &mut F, x: &DVector<f64>, rel_step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut xw = x.clone();
    for j in 0..n {
        let h = rel_step * x[j].abs().max(1.0);
        xw[j] = x[j] + h;
        let plus = f(&xw)?;
        xw[j] = x[j] - h;
        let minus = f(&xw)?;
        xw[j] = x[j];
        cols.push((plus - minus) / (2.0 * h));
    }
    let m = cols.first().map_or(0, |c| c.len());
    let mut jac = DMatrix::zeros(m, n);
    for (j, c) in cols.iter().enumerate() {
        jac.set_column(j, c);
    }
    Ok(jac)
}

pub type JacobianFn<'a> = dyn FnMut(&DVector<f64>) -> Result<DMatrix<f64>> + 'a;

/// Newton's method on `residual(x) = 0`; the Jacobian falls back to central
/// differences when none is supplied.
pub fn newton_solve<F>(
    mut residual: F,
    mut jacobian: Option<&mut JacobianFn<'_>>,
    guess: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<Solution>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    cfg.validate()?;
    let mut x = guess;
    let mut best = x.clone();
    let mut best_res = f64::INFINITY;
    let mut initial = None;
    for k in 0..=cfg.max_iter {
        let r = residual(&x)?;
        let res = r.amax();
        if !res.is_finite() {
            return Err(Error::Divergence {
                iterations: k,
                residual: best_res,
                best,
            });
        }
        if res < best_res {
            best_res = res;
            best.copy_from(&x);
        }
        if res <= cfg.threshold(&x) {
            return Ok(Solution {
                x,
                iterations: k,
                residual: res,
            });
        }
        let r0 = *initial.get_or_insert(res);
        if res > DIVERGENCE_FACTOR * r0 {
            return Err(Error::Divergence {
                iterations: k,
                residual: best_res,
                best,
            });
        }
        if k == cfg.max_iter {
            break;
        }
        let jac = match jacobian.as_mut() {
            Some(j) => j(&x)?,
            None => fd_jacobian(&mut residual, &x, f64::EPSILON.cbrt())?,
        };
        let delta = jac.lu().solve(&r).filter(|d| d.iter().all(|v| v.is_finite()));
        match delta {
            Some(d) => x -= d,
            None => {
                return Err(Error::SingularJacobian {
                    iterations: k,
                    residual: best_res,
                    best,
                })
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: best_res,
        best,
    })
}

/// Solves `x = map(x)` with the configured method, retrying with Newton on
/// `x − map(x) = 0` when fixed-point iteration fails and the fallback is on.
pub fn solve_fixed_point_equation<F>(
    mut map: F,
    guess: DVector<f64>,
    cfg: &SolverConfig,
) -> Result<Solution>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    match cfg.method {
        SolverMethod::FixedPoint => match fixed_point_solve(&mut map, guess.clone(), cfg) {
            Ok(s) => Ok(s),
            Err(e) if cfg.newton_fallback && is_convergence_failure(&e) => {
                newton_solve(|x| Ok(x - map(x)?), None, guess, cfg).map_err(|_| e)
            }
            Err(e) => Err(e),
        },
        SolverMethod::Newton => newton_solve(|x| Ok(x - map(x)?), None, guess, cfg),
    }
}

fn is_convergence_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::SingularJacobian { .. }
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecantConfig {
    pub x0: f64,
    pub x1: f64,
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_iter: usize,
}

impl SecantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.x0 == self.x1 {
            return Err(Error::InvalidConfig("secant needs x0 != x1".into()));
        }
        if !(self.f_tol > 0.0) || !(self.x_tol > 0.0) {
            return Err(Error::InvalidConfig("secant tolerances must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("secant max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecantOutcome {
    pub root: f64,
    /// Number of secant updates performed.
    pub iterations: usize,
    /// `|f(root)|`.
    pub residual: f64,
}

pub fn secant_solve<F>(mut f: F, cfg: &SecantConfig) -> Result<SecantOutcome>
where
    F: FnMut(f64) -> f64,
{
    secant_solve_fallible(|x| Ok(f(x)), cfg, None)
}

/// Secant iteration where evaluations may fail. When `retreat` is given, a
/// failed evaluation at a new iterate is retried once at the midpoint between
/// that iterate and `retreat` before the failure is returned.
pub fn secant_solve_fallible<F>(
    mut f: F,
    cfg: &SecantConfig,
    retreat: Option<f64>,
) -> Result<SecantOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    let (mut x0, mut x1) = (cfg.x0, cfg.x1);
    let mut f0 = f(x0)?;
    let mut best = (x0, f0.abs());
    if f0.abs() <= cfg.f_tol {
        return Ok(SecantOutcome {
            root: x0,
            iterations: 0,
            residual: f0.abs(),
        });
    }
    let mut f1 = match f(x1) {
        Ok(v) => v,
        Err(e) => match retreat {
            Some(a) => {
                x1 = 0.5 * (x1 + a);
                f(x1).map_err(|_| e)?
            }
            None => return Err(e),
        },
    };
    if f1.abs() < best.1 {
        best = (x1, f1.abs());
    }
    if f1.abs() <= cfg.f_tol {
        return Ok(SecantOutcome {
            root: x1,
            iterations: 0,
            residual: f1.abs(),
        });
    }
    for k in 1..=cfg.max_iter {
        if f1 == f0 {
            return Err(Error::FlatFunction {
                x: x1,
                residual: f1.abs(),
            });
        }
        let mut x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !x2.is_finite() {
            return Err(Error::SecantNonConvergence {
                iterations: k,
                best: best.0,
                residual: best.1,
            });
        }
        let f2 = match f(x2) {
            Ok(v) => v,
            Err(e) => match retreat {
                Some(a) => {
                    x2 = 0.5 * (x2 + a);
                    f(x2).map_err(|_| e)?
                }
                None => return Err(e),
            },
        };
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        if f1.abs() < best.1 {
            best = (x1, f1.abs());
        }
        if f1.abs() <= cfg.f_tol || (x1 - x0).abs() <= cfg.x_tol {
            return Ok(SecantOutcome {
                root: x1,
                iterations: k,
                residual: f1.abs(),
            });
        }
    }
    Err(Error::SecantNonConvergence {
        iterations: cfg.max_iter,
        best: best.0,
        residual: best.1,
    })
}

/// Illinois variant of regula falsi on a bracket `f(a)·f(b) ≤ 0`.
pub fn illinois_solve<F>(
    mut f: F,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    f_tol: f64,
    x_tol: f64,
    max_iter: usize,
) -> Result<SecantOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::InvalidConfig("illinois needs a sign change".into()));
    }
    let mut side = 0i8;
    for k in 1..=max_iter {
        for (x, fx) in [(a, fa), (b, fb)] {
            if fx.abs() <= f_tol {
                return Ok(SecantOutcome {
                    root: x,
                    iterations: k - 1,
                    residual: fx.abs(),
                });
            }
        }
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c)?;
        if fc.abs() <= f_tol || (b - a).abs() <= x_tol {
            return Ok(SecantOutcome {
                root: c,
                iterations: k,
                residual: fc.abs(),
            });
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    let (best, residual) = if fa.abs() < fb.abs() { (a, fa.abs()) } else { (b, fb.abs()) };
    Err(Error::SecantNonConvergence {
        iterations: max_iter,
        best,
        residual,
    })
}
