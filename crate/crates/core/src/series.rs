//! Power-series coefficients of the λ-parameterized generating function and
//! a numerical Hamilton–Jacobi residual.
//!
//! The generating function is written in the mixed coordinates
//! `u = λP + (1−λ)p`, `v = λq + (1−λ)Q`; `S(u, v, t) = Σ K_i(u, v) tⁱ` solves
//!
//! ```text
//! ∂S/∂t = H(u − (1−λ) ∂S/∂v, v + λ ∂S/∂u),   S(u, v, 0) = 0.
//! ```
//!
//! Every `K_i` is evaluated with `u` in the momentum slot and `v` in the
//! position slot of `H`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hamiltonian::{default_fd_step, energy_at, gradients_at, hessians_at, HamiltonianSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct GfPoint {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda: f64,
}

impl GfPoint {
    pub fn new(u: Vec<f64>, v: Vec<f64>, lambda: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        if !u.iter().chain(v.iter()).all(|x| x.is_finite()) || !lambda.is_finite() {
            return Err(Error::NonFinite("generating-function point"));
        }
        Ok(Self {
            u: DVector::from_vec(u),
            v: DVector::from_vec(v),
            lambda,
        })
    }
}

/// `K1 = H(u, v)`.
pub fn k1(sys: &dyn HamiltonianSystem, pt: &GfPoint) -> Result<f64> {
    energy_at(sys, &pt.u, &pt.v)
}

/// `K2 = (λ − ½) H_uᵀ H_v`.
pub fn k2(sys: &dyn HamiltonianSystem, pt: &GfPoint) -> Result<f64> {
    let (hu, hv) = gradients_at(sys, &pt.u, &pt.v)?;
    Ok((pt.lambda - 0.5) * hu.dot(&hv))
}

/// `K3 = ½(λ² − λ + ⅓)(H_uᵀ H_vv H_u + H_vᵀ H_uu H_v) + (λ² − λ + ⅙) H_vᵀ H_uv H_u`,
/// with `[H_uv]_ij = ∂²H/∂u_i∂v_j`.
pub fn k3(sys: &dyn HamiltonianSystem, pt: &GfPoint) -> Result<f64> {
    let (hu, hv) = gradients_at(sys, &pt.u, &pt.v)?;
    let hess = hessians_at(sys, &pt.u, &pt.v)?;
    let l = pt.lambda;
    let a = 0.5 * (l * l - l + 1.0 / 3.0);
    let b = l * l - l + 1.0 / 6.0;
    let sym = hu.dot(&(&hess.qq * &hu)) + hv.dot(&(&hess.pp * &hv));
    let mixed = hv.dot(&(&hess.pq * &hu));
    Ok(a * sym + b * mixed)
}

type Coefficient = fn(&dyn HamiltonianSystem, &GfPoint) -> Result<f64>;

/// Central-difference gradient of a coefficient in `u` and in `v`.
fn coefficient_partials(
    sys: &dyn HamiltonianSystem,
    pt: &GfPoint,
    coef: Coefficient,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = pt.u.len();
    let eps = default_fd_step();
    let mut du = DVector::zeros(d);
    let mut dv = DVector::zeros(d);
    let mut w = pt.clone();
    for i in 0..d {
        let h = eps * pt.u[i].abs().max(1.0);
        w.u[i] = pt.u[i] + h;
        let plus = coef(sys, &w)?;
        w.u[i] = pt.u[i] - h;
        let minus = coef(sys, &w)?;
        w.u[i] = pt.u[i];
        du[i] = (plus - minus) / (2.0 * h);

        let h = eps * pt.v[i].abs().max(1.0);
        w.v[i] = pt.v[i] + h;
        let plus = coef(sys, &w)?;
        w.v[i] = pt.v[i] - h;
        let minus = coef(sys, &w)?;
        w.v[i] = pt.v[i];
        dv[i] = (plus - minus) / (2.0 * h);
    }
    Ok((du, dv))
}

/// `|∂S̄/∂t − H(u − (1−λ)∂S̄/∂v, v + λ∂S̄/∂u)|` for the series truncated after
/// `K_order`, `order ∈ {1, 2, 3}`.
pub fn hj_residual(
    sys: &dyn HamiltonianSystem,
    lambda: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
    t: f64,
    order: usize,
) -> Result<f64> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidConfig(format!(
            "truncation order must be 1, 2 or 3, got {order}"
        )));
    }
    let pt = GfPoint {
        u: u.clone(),
        v: v.clone(),
        lambda,
    };
    let (hu, hv) = gradients_at(sys, u, v)?;
    let mut s_t = k1(sys, &pt)?;
    let mut s_u = &hu * t;
    let mut s_v = &hv * t;
    let higher: [(usize, Coefficient); 2] = [(2, k2), (3, k3)];
    for (i, coef) in higher.into_iter().filter(|(i, _)| *i <= order) {
        let ti = t.powi(i as i32);
        s_t += i as f64 * t.powi(i as i32 - 1) * coef(sys, &pt)?;
        let (cu, cv) = coefficient_partials(sys, &pt, coef)?;
        s_u += cu * ti;
        s_v += cv * ti;
    }
    let p_arg = u - s_v * (1.0 - lambda);
    let q_arg = v + s_u * lambda;
    Ok((s_t - energy_at(sys, &p_arg, &q_arg)?).abs())
}
