//! Phase-space state, the Hamiltonian system abstraction and derivative
//! evaluation.
//!
//! A system only has to provide its energy. Gradients and Hessians are used
//! when the system supplies them analytically and are otherwise approximated
//! with central differences.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Base finite-difference step, scaled per coordinate by `max(1, |x_i|)`.
pub fn default_fd_step() -> f64 {
    f64::EPSILON.cbrt()
}

/// A point `(p, q)` of phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    p: DVector<f64>,
    q: DVector<f64>,
}

impl PhaseState {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        Self::from_vectors(DVector::from_vec(p), DVector::from_vec(q))
    }

    pub fn from_vectors(p: DVector<f64>, q: DVector<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: q.len(),
            });
        }
        if p.is_empty() {
            return Err(Error::InvalidConfig("phase state must have d >= 1".into()));
        }
        if !p.iter().chain(q.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("phase state"));
        }
        Ok(Self { p, q })
    }

    /// Builds a state from the stacked vector `(p, q)` of length `2d`.
    pub fn from_flat(y: &DVector<f64>) -> Result<Self> {
        if !y.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "stacked state has odd length {}",
                y.len()
            )));
        }
        let d = y.len() / 2;
        Self::from_vectors(y.rows(0, d).into_owned(), y.rows(d, d).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// Stacked vector `(p, q)`.
    pub fn to_flat(&self) -> DVector<f64> {
        let d = self.dim();
        DVector::from_iterator(2 * d, self.p.iter().chain(self.q.iter()).copied())
    }

    pub fn into_parts(self) -> (DVector<f64>, DVector<f64>) {
        (self.p, self.q)
    }
}

/// Second derivatives of `H`. `pq[(i, j)]` is `d²H / dp_i dq_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hessians {
    pub pp: DMatrix<f64>,
    pub pq: DMatrix<f64>,
    pub qq: DMatrix<f64>,
}

/// A bilinear first integral `pᵀ C q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInvariant {
    pub label: String,
    pub matrix: DMatrix<f64>,
}

impl QuadraticInvariant {
    pub fn new(label: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        Self {
            label: label.into(),
            matrix,
        }
    }

    pub fn value(&self, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
        p.dot(&(&self.matrix * q))
    }

    pub fn eval(&self, s: &PhaseState) -> f64 {
        self.value(s.p(), s.q())
    }
}

/// Structure `H = ½ pᵀ M⁻¹ p + U(q)`.
pub trait Separable {
    fn mass(&self) -> &DMatrix<f64>;
    fn mass_inverse(&self) -> &DMatrix<f64>;
    fn potential(&self, q: &DVector<f64>) -> Result<f64>;
    fn potential_gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>>;
}

/// A canonical Hamiltonian system `ṗ = -H_q`, `q̇ = H_p`.
///
/// Implementations are immutable once built and shareable across threads.
pub trait HamiltonianSystem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn energy(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64>;

    /// Analytic `(H_p, H_q)`, if known.
    fn gradients(
        &self,
        _p: &DVector<f64>,
        _q: &DVector<f64>,
    ) -> Option<Result<(DVector<f64>, DVector<f64>)>> {
        None
    }

    /// Analytic second derivatives, if known.
    fn hessians(&self, _p: &DVector<f64>, _q: &DVector<f64>) -> Option<Result<Hessians>> {
        None
    }

    fn quadratic_invariants(&self) -> &[QuadraticInvariant] {
        &[]
    }

    fn separable(&self) -> Option<&dyn Separable> {
        None
    }
}

impl fmt::Debug for dyn HamiltonianSystem + '_ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HamiltonianSystem")
            .field("name", &self.name())
            .field("dim", &self.dim())
            .finish()
    }
}

/// First (and optionally second) derivatives at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub h_p: DVector<f64>,
    pub h_q: DVector<f64>,
    pub h_pp: Option<DMatrix<f64>>,
    pub h_pq: Option<DMatrix<f64>>,
    pub h_qq: Option<DMatrix<f64>>,
}

fn check_dim(sys: &dyn HamiltonianSystem, p: &DVector<f64>, q: &DVector<f64>) -> Result<()> {
    let d = sys.dim();
    for len in [p.len(), q.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: len,
            });
        }
    }
    Ok(())
}

fn finite(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `H(p, q)` at raw vectors; the integrators evaluate at stage points that are
/// not states.
pub fn energy_at(sys: &dyn HamiltonianSystem, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
    check_dim(sys, p, q)?;
    let e = sys.energy(p, q)?;
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite("energy"))
    }
}

/// `(H_p, H_q)` at raw vectors, analytic when available.
pub fn gradients_at(
    sys: &dyn HamiltonianSystem,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(sys, p, q)?;
    let (gp, gq) = match sys.gradients(p, q) {
        Some(g) => g?,
        None => fd_gradients_at(sys, p, q, default_fd_step())?,
    };
    finite(&gp, "H_p")?;
    finite(&gq, "H_q")?;
    Ok((gp, gq))
}

/// Central-difference gradient of the energy.
pub fn fd_gradients_at(
    sys: &dyn HamiltonianSystem,
    p: &DVector<f64>,
    q: &DVector<f64>,
    eps: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(sys, p, q)?;
    let d = sys.dim();
    let mut gp = DVector::zeros(d);
    let mut gq = DVector::zeros(d);
    let mut pw = p.clone();
    let mut qw = q.clone();
    for i in 0..d {
        let hi = step_for(p[i], eps)?;
        pw[i] = p[i] + hi;
        let plus = sys.energy(&pw, q)?;
        pw[i] = p[i] - hi;
        let minus = sys.energy(&pw, q)?;
        pw[i] = p[i];
        gp[i] = (plus - minus) / (2.0 * hi);

        let hi = step_for(q[i], eps)?;
        qw[i] = q[i] + hi;
        let plus = sys.energy(p, &qw)?;
        qw[i] = q[i] - hi;
        let minus = sys.energy(p, &qw)?;
        qw[i] = q[i];
        gq[i] = (plus - minus) / (2.0 * hi);
    }
    Ok((gp, gq))
}

fn step_for(x: f64, eps: f64) -> Result<f64> {
    let h = eps * x.abs().max(1.0);
    if !(h > 0.0) || !h.is_finite() || x + h == x {
        return Err(Error::StepUnderflow(eps));
    }
    Ok(h)
}

pub fn eval_energy(sys: &dyn HamiltonianSystem, s: &PhaseState) -> Result<f64> {
    energy_at(sys, s.p(), s.q())
}

/// First derivatives at `s`, plus the analytic Hessians when the system has
/// them.
pub fn eval_gradients(sys: &dyn HamiltonianSystem, s: &PhaseState) -> Result<DerivativeBundle> {
    let (h_p, h_q) = gradients_at(sys, s.p(), s.q())?;
    let (h_pp, h_pq, h_qq) = match sys.hessians(s.p(), s.q()) {
        Some(h) => {
            let h = h?;
            (Some(h.pp), Some(h.pq), Some(h.qq))
        }
        None => (None, None, None),
    };
    Ok(DerivativeBundle {
        h_p,
        h_q,
        h_pp,
        h_pq,
        h_qq,
    })
}

/// Central-difference Hessians built from gradient differences.
///
/// `H_pp` and `H_qq` are symmetrized; `H_pq` averages the two available
/// stencils (differentiating `H_p` in `q` and `H_q` in `p`).
pub fn fd_hessians(sys: &dyn HamiltonianSystem, s: &PhaseState, eps: f64) -> Result<Hessians> {
    fd_hessians_at(sys, s.p(), s.q(), eps)
}

pub fn fd_hessians_at(
    sys: &dyn HamiltonianSystem,
    p: &DVector<f64>,
    q: &DVector<f64>,
    eps: f64,
) -> Result<Hessians> {
    if !(eps > 0.0) {
        return Err(Error::StepUnderflow(eps));
    }
    check_dim(sys, p, q)?;
    let d = sys.dim();
    let mut pp = DMatrix::zeros(d, d);
    let mut qp = DMatrix::zeros(d, d); // d H_q_i / d p_j
    let mut pq = DMatrix::zeros(d, d); // d H_p_i / d q_j
    let mut qq = DMatrix::zeros(d, d);
    let mut pw = p.clone();
    let mut qw = q.clone();
    for j in 0..d {
        let hj = step_for(p[j], eps)?;
        pw[j] = p[j] + hj;
        let (gp_plus, gq_plus) = gradients_at(sys, &pw, q)?;
        pw[j] = p[j] - hj;
        let (gp_minus, gq_minus) = gradients_at(sys, &pw, q)?;
        pw[j] = p[j];
        pp.set_column(j, &((gp_plus - gp_minus) / (2.0 * hj)));
        qp.set_column(j, &((gq_plus - gq_minus) / (2.0 * hj)));

        let hj = step_for(q[j], eps)?;
        qw[j] = q[j] + hj;
        let (gp_plus, gq_plus) = gradients_at(sys, p, &qw)?;
        qw[j] = q[j] - hj;
        let (gp_minus, gq_minus) = gradients_at(sys, p, &qw)?;
        qw[j] = q[j];
        pq.set_column(j, &((gp_plus - gp_minus) / (2.0 * hj)));
        qq.set_column(j, &((gq_plus - gq_minus) / (2.0 * hj)));
    }
    Ok(Hessians {
        pp: (&pp + pp.transpose()) * 0.5,
        pq: (&pq + qp.transpose()) * 0.5,
        qq: (&qq + qq.transpose()) * 0.5,
    })
}

/// Analytic Hessians when provided, central differences otherwise.
pub fn hessians_at(
    sys: &dyn HamiltonianSystem,
    p: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<Hessians> {
    match sys.hessians(p, q) {
        Some(h) => h,
        None => fd_hessians_at(sys, p, q, default_fd_step()),
    }
}

type EnergyFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync;
type HessFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> Hessians + Send + Sync;

/// A system assembled from closures. Only the energy is mandatory.
#[derive(Clone)]
pub struct CustomSystem {
    name: String,
    dim: usize,
    energy: Arc<EnergyFn>,
    gradients: Option<Arc<GradFn>>,
    hessians: Option<Arc<HessFn>>,
    invariants: Vec<QuadraticInvariant>,
}

impl CustomSystem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        energy: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            energy: Arc::new(energy),
            gradients: None,
            hessians: None,
            invariants: Vec::new(),
        }
    }

    pub fn with_gradients(
        mut self,
        g: impl Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>)
            + Send
            + Sync
            + 'static,
    ) -> Self {
        self.gradients = Some(Arc::new(g));
        self
    }

    pub fn with_hessians(
        mut self,
        h: impl Fn(&DVector<f64>, &DVector<f64>) -> Hessians + Send + Sync + 'static,
    ) -> Self {
        self.hessians = Some(Arc::new(h));
        self
    }

    pub fn with_invariant(mut self, inv: QuadraticInvariant) -> Self {
        self.invariants.push(inv);
        self
    }
}

impl HamiltonianSystem for CustomSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        Ok((self.energy)(p, q))
    }

    fn gradients(
        &self,
        p: &DVector<f64>,
        q: &DVector<f64>,
    ) -> Option<Result<(DVector<f64>, DVector<f64>)>> {
        self.gradients.as_ref().map(|g| Ok(g(p, q)))
    }

    fn hessians(&self, p: &DVector<f64>, q: &DVector<f64>) -> Option<Result<Hessians>> {
        self.hessians.as_ref().map(|h| Ok(h(p, q)))
    }

    fn quadratic_invariants(&self) -> &[QuadraticInvariant] {
        &self.invariants
    }
}
