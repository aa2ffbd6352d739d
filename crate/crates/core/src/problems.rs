//! Bundled benchmark systems and their initial conditions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{
    HamiltonianSystem, Hessians, PhaseState, QuadraticInvariant, Separable,
};
use crate::rng::Lcg;

/// Radius below which the Kepler potential is treated as singular.
pub const KEPLER_SINGULAR_RADIUS: f64 = 1e-12;

/// Hénon–Heiles: `H = ½|p|² + ½(q1² + q2² + 2q1²q2 − ⅔q2³)`.
#[derive(Debug, Clone)]
pub struct HenonHeiles {
    eye: DMatrix<f64>,
}

impl HenonHeiles {
    pub fn new() -> Self {
        Self {
            eye: DMatrix::identity(2, 2),
        }
    }

    pub fn potential_value(q1: f64, q2: f64) -> f64 {
        0.5 * (q1 * q1 + q2 * q2 + 2.0 * q1 * q1 * q2 - 2.0 / 3.0 * q2 * q2 * q2)
    }
}

impl Default for HenonHeiles {
    fn default() -> Self {
        Self::new()
    }
}

pub fn make_henon_heiles() -> HenonHeiles {
    HenonHeiles::new()
}

impl Separable for HenonHeiles {
    fn mass(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn potential(&self, q: &DVector<f64>) -> Result<f64> {
        Ok(Self::potential_value(q[0], q[1]))
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let (q1, q2) = (q[0], q[1]);
        Ok(DVector::from_vec(vec![
            q1 + 2.0 * q1 * q2,
            q2 + q1 * q1 - q2 * q2,
        ]))
    }
}

impl HamiltonianSystem for HenonHeiles {
    fn name(&self) -> &str {
        "henon-heiles"
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * p.norm_squared() + Self::potential_value(q[0], q[1]))
    }

    fn gradients(
        &self,
        p: &DVector<f64>,
        q: &DVector<f64>,
    ) -> Option<Result<(DVector<f64>, DVector<f64>)>> {
        Some(self.potential_gradient(q).map(|gq| (p.clone(), gq)))
    }

    fn hessians(&self, _p: &DVector<f64>, q: &DVector<f64>) -> Option<Result<Hessians>> {
        let (q1, q2) = (q[0], q[1]);
        Some(Ok(Hessians {
            pp: DMatrix::identity(2, 2),
            pq: DMatrix::zeros(2, 2),
            qq: DMatrix::from_row_slice(2, 2, &[1.0 + 2.0 * q2, 2.0 * q1, 2.0 * q1, 1.0 - 2.0 * q2]),
        }))
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitKind {
    Box,
    Chaotic,
}

impl FromStr for OrbitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(OrbitKind::Box),
            "chaotic" => Ok(OrbitKind::Chaotic),
            other => Err(Error::InvalidConfig(format!("unknown orbit kind `{other}`"))),
        }
    }
}

impl OrbitKind {
    /// `(H0, q2(0))`; `p2(0) = q1(0) = 0` for both orbits.
    pub fn energy_and_q2(self) -> (f64, f64) {
        match self {
            OrbitKind::Box => (0.02, -0.082),
            OrbitKind::Chaotic => (1.0 / 6.0, 0.82),
        }
    }
}

/// Initial state on the requested Hénon–Heiles orbit; `p1` is the positive
/// root of `H(p, q) = H0`.
pub fn henon_heiles_initial(kind: OrbitKind) -> Result<PhaseState> {
    let (h0, q2) = kind.energy_and_q2();
    let radicand = 2.0 * (h0 - HenonHeiles::potential_value(0.0, q2));
    if !(radicand >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "energy {h0} below the potential at the initial position"
        )));
    }
    PhaseState::new(vec![radicand.sqrt(), 0.0], vec![0.0, q2])
}

/// Perturbed Kepler: `H = ½|p|² − 1/r − μ/(3r³)`. `μ = 0` is the two-body
/// problem.
#[derive(Debug, Clone)]
pub struct PerturbedKepler {
    mu: f64,
    eye: DMatrix<f64>,
    invariants: Vec<QuadraticInvariant>,
}

impl PerturbedKepler {
    pub fn new(mu: f64) -> Self {
        Self {
            mu,
            eye: DMatrix::identity(2, 2),
            invariants: vec![QuadraticInvariant::new(
                "L",
                DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]),
            )],
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn radius(q: &DVector<f64>) -> Result<f64> {
        let r = q.norm();
        if r < KEPLER_SINGULAR_RADIUS {
            return Err(Error::Singularity(format!("kepler potential at r = {r:e}")));
        }
        Ok(r)
    }
}

pub fn make_perturbed_kepler(mu: f64) -> Result<PerturbedKepler> {
    if !mu.is_finite() {
        return Err(Error::InvalidConfig(format!("mu must be finite, got {mu}")));
    }
    Ok(PerturbedKepler::new(mu))
}

/// Angular momentum `q1 p2 − q2 p1`.
pub fn angular_momentum(s: &PhaseState) -> f64 {
    s.q()[0] * s.p()[1] - s.q()[1] * s.p()[0]
}

impl Separable for PerturbedKepler {
    fn mass(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn potential(&self, q: &DVector<f64>) -> Result<f64> {
        let r = Self::radius(q)?;
        Ok(-1.0 / r - self.mu / (3.0 * r * r * r))
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let r = Self::radius(q)?;
        let r2 = r * r;
        let r3 = r2 * r;
        let coef = 1.0 / r3 + self.mu / (r3 * r2);
        Ok(q * coef)
    }
}

impl HamiltonianSystem for PerturbedKepler {
    fn name(&self) -> &str {
        if self.mu == 0.0 {
            "two-body"
        } else {
            "kepler"
        }
    }

    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * p.norm_squared() + self.potential(q)?)
    }

    fn gradients(
        &self,
        p: &DVector<f64>,
        q: &DVector<f64>,
    ) -> Option<Result<(DVector<f64>, DVector<f64>)>> {
        Some(self.potential_gradient(q).map(|gq| (p.clone(), gq)))
    }

    fn hessians(&self, _p: &DVector<f64>, q: &DVector<f64>) -> Option<Result<Hessians>> {
        Some(Self::radius(q).map(|r| {
            let r2 = r * r;
            let r3 = r2 * r;
            let r5 = r3 * r2;
            let r7 = r5 * r2;
            let a = 1.0 / r3 + self.mu / r5;
            let b = 3.0 / r5 + 5.0 * self.mu / r7;
            let qq = DMatrix::identity(2, 2) * a - (q * q.transpose()) * b;
            Hessians {
                pp: DMatrix::identity(2, 2),
                pq: DMatrix::zeros(2, 2),
                qq,
            }
        }))
    }

    fn quadratic_invariants(&self) -> &[QuadraticInvariant] {
        &self.invariants
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

/// `p = (0, sqrt((1+e)/(1−e)))`, `q = (1−e, 0)`.
pub fn kepler_initial(e: f64) -> Result<PhaseState> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidConfig(format!(
            "eccentricity must lie in [0, 1), got {e}"
        )));
    }
    PhaseState::new(vec![0.0, ((1.0 + e) / (1.0 - e)).sqrt()], vec![1.0 - e, 0.0])
}

/// `H = ½(|p|² + |q|²)` in `d` dimensions.
#[derive(Debug, Clone)]
pub struct HarmonicOscillator {
    dim: usize,
    eye: DMatrix<f64>,
}

impl HarmonicOscillator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            eye: DMatrix::identity(dim, dim),
        }
    }

    /// Exact flow: rotation of each `(p_i, q_i)` pair by angle `t`.
    pub fn exact_flow(s: &PhaseState, t: f64) -> PhaseState {
        let (sn, cs) = t.sin_cos();
        let p = s.p() * cs - s.q() * sn;
        let q = s.q() * cs + s.p() * sn;
        PhaseState::from_vectors(p, q).expect("rotation keeps dimensions and finiteness")
    }
}

pub fn make_harmonic_oscillator(dim: usize) -> Result<HarmonicOscillator> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    Ok(HarmonicOscillator::new(dim))
}

impl Separable for HarmonicOscillator {
    fn mass(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn potential(&self, q: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * q.norm_squared())
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(q.clone())
    }
}

impl HamiltonianSystem for HarmonicOscillator {
    fn name(&self) -> &str {
        "oscillator"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * (p.norm_squared() + q.norm_squared()))
    }

    fn gradients(
        &self,
        p: &DVector<f64>,
        q: &DVector<f64>,
    ) -> Option<Result<(DVector<f64>, DVector<f64>)>> {
        Some(Ok((p.clone(), q.clone())))
    }

    fn hessians(&self, _p: &DVector<f64>, _q: &DVector<f64>) -> Option<Result<Hessians>> {
        let d = self.dim;
        Some(Ok(Hessians {
            pp: DMatrix::identity(d, d),
            pq: DMatrix::zeros(d, d),
            qq: DMatrix::identity(d, d),
        }))
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

/// `H = ½|p|²`.
#[derive(Debug, Clone)]
pub struct FreeParticle {
    dim: usize,
    eye: DMatrix<f64>,
}

impl FreeParticle {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            eye: DMatrix::identity(dim, dim),
        }
    }
}

pub fn make_free_particle(dim: usize) -> Result<FreeParticle> {
    if dim == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    Ok(FreeParticle::new(dim))
}

impl Separable for FreeParticle {
    fn mass(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn mass_inverse(&self) -> &DMatrix<f64> {
        &self.eye
    }

    fn potential(&self, _q: &DVector<f64>) -> Result<f64> {
        Ok(0.0)
    }

    fn potential_gradient(&self, _q: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.dim))
    }
}

impl HamiltonianSystem for FreeParticle {
    fn name(&self) -> &str {
        "free"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn energy(&self, p: &DVector<f64>, _q: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * p.norm_squared())
    }

    fn gradients(
        &self,
        p: &DVector<f64>,
        _q: &DVector<f64>,
    ) -> Option<Result<(DVector<f64>, DVector<f64>)>> {
        Some(Ok((p.clone(), DVector::zeros(self.dim))))
    }

    fn hessians(&self, _p: &DVector<f64>, _q: &DVector<f64>) -> Option<Result<Hessians>> {
        let d = self.dim;
        Some(Ok(Hessians {
            pp: DMatrix::identity(d, d),
            pq: DMatrix::zeros(d, d),
            qq: DMatrix::zeros(d, d),
        }))
    }

    fn separable(&self) -> Option<&dyn Separable> {
        Some(self)
    }
}

/// Problem selector used by the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemId {
    HarmonicOscillator { dim: usize },
    FreeParticle { dim: usize },
    HenonHeiles,
    PerturbedKepler { mu: f64 },
    TwoBody,
    Custom,
}

impl ProblemId {
    /// Maps a CLI name (`henon-heiles`, `kepler`, `two-body`, `oscillator`,
    /// `free`) to a problem. `mu` and `dim` are only read where they apply.
    pub fn from_name(name: &str, mu: f64, dim: usize) -> Result<Self> {
        match name {
            "henon-heiles" => Ok(ProblemId::HenonHeiles),
            "kepler" => Ok(ProblemId::PerturbedKepler { mu }),
            "two-body" => Ok(ProblemId::TwoBody),
            "oscillator" => Ok(ProblemId::HarmonicOscillator { dim }),
            "free" => Ok(ProblemId::FreeParticle { dim }),
            other => Err(Error::InvalidConfig(format!("unknown problem `{other}`"))),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn HamiltonianSystem>> {
        Ok(match *self {
            ProblemId::HarmonicOscillator { dim } => Arc::new(make_harmonic_oscillator(dim)?),
            ProblemId::FreeParticle { dim } => Arc::new(make_free_particle(dim)?),
            ProblemId::HenonHeiles => Arc::new(make_henon_heiles()),
            ProblemId::PerturbedKepler { mu } => Arc::new(make_perturbed_kepler(mu)?),
            ProblemId::TwoBody => Arc::new(make_perturbed_kepler(0.0)?),
            ProblemId::Custom => {
                return Err(Error::InvalidConfig(
                    "custom systems are built in code, not by name".into(),
                ))
            }
        })
    }

    /// Random state for symplecticity checks. Entries are uniform in
    /// `[-1, 1]`; Kepler positions are resampled until `0.5 <= |q| <= 1.5`
    /// to stay clear of the singularity.
    pub fn random_state(&self, rng: &mut Lcg) -> Result<PhaseState> {
        let d = match *self {
            ProblemId::HarmonicOscillator { dim } | ProblemId::FreeParticle { dim } => dim,
            ProblemId::Custom => {
                return Err(Error::InvalidConfig("no sampler for custom systems".into()))
            }
            _ => 2,
        };
        let p: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let q: Vec<f64> = match self {
            ProblemId::PerturbedKepler { .. } | ProblemId::TwoBody => loop {
                let q: Vec<f64> = (0..d).map(|_| rng.uniform(-1.5, 1.5)).collect();
                let r = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (0.5..=1.5).contains(&r) {
                    break q;
                }
            },
            _ => (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        };
        PhaseState::new(p, q)
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemId::HarmonicOscillator { dim } => write!(f, "oscillator(d={dim})"),
            ProblemId::FreeParticle { dim } => write!(f, "free(d={dim})"),
            ProblemId::HenonHeiles => write!(f, "henon-heiles"),
            ProblemId::PerturbedKepler { mu } => write!(f, "kepler(mu={mu})"),
            ProblemId::TwoBody => write!(f, "two-body"),
            ProblemId::Custom => write!(f, "custom"),
        }
    }
}

/// Non-separable fixture `H = ½(|p|² + |q|²) + 0.4 p1 q2 + 0.3 p1² q1 + 0.2 p2 q1 q2`
/// with analytic derivatives; exercises the mixed `H_pq` terms.
pub fn make_coupled_fixture() -> crate::hamiltonian::CustomSystem {
    use crate::hamiltonian::CustomSystem;
    const A: f64 = 0.4;
    const B: f64 = 0.3;
    const C: f64 = 0.2;
    CustomSystem::new("coupled", 2, |p, q| {
        0.5 * (p.norm_squared() + q.norm_squared()) + A * p[0] * q[1] + B * p[0] * p[0] * q[0]
            + C * p[1] * q[0] * q[1]
    })
    .with_gradients(|p, q| {
        (
            DVector::from_vec(vec![p[0] + A * q[1] + 2.0 * B * p[0] * q[0], p[1] + C * q[0] * q[1]]),
            DVector::from_vec(vec![q[0] + B * p[0] * p[0] + C * p[1] * q[1], q[1] + A * p[0] + C * p[1] * q[0]]),
        )
    })
    .with_hessians(|p, q| Hessians {
        pp: DMatrix::from_row_slice(2, 2, &[1.0 + 2.0 * B * q[0], 0.0, 0.0, 1.0]),
        pq: DMatrix::from_row_slice(2, 2, &[2.0 * B * p[0], A, C * q[1], C * q[0]]),
        qq: DMatrix::from_row_slice(2, 2, &[1.0, C * p[1], C * p[1], 1.0]),
    })
}
