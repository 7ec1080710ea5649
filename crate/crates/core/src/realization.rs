//! End-to-end constructions.
//!
//! Discrete: `g = φ⁻¹∘h∘φ∘f` with `h = h₁∘…∘h_{4d}` and each `hₖ` a dilated,
//! conjugated time-one map of a rotation generator, so that `D_p g = Â_π·D_p f`
//! while `g = f` away from a small ball.
//!
//! Continuous: a chained transit field rescaled into `B_ϱ` whose linear
//! Poincaré map between `{x₁ = 0}` and `{x₁ = 1}` is a prescribed `Â`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bump::SUPPORT;
use crate::error::{dim_mismatch, FranksError, Result};
use crate::factorization::{decompose_near_identity_with, DecomposeOptions, Factorization};
use crate::flow::{closed_form_k_flow, closed_form_k_jacobian, fd_jacobian, hamiltonian_vector_field, poincare_map, PoincareOptions, PoincareResult};
use crate::hamiltonian::{chained_unchecked, rescale_support, rho, ChainFactor, ChainedField, Drift, Field, Hamiltonian, Rescaled};
use crate::norms::{c0_vector, c1_vector, c2_scalar, matrix_norm, spectral_norm};
use crate::poisson::{lift_a_pi, poisson_defect, PoissonLinearMap, PoissonSpace, SymplecticMatrix};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A map of `R^{2d+n}` preserving `π₀`.
pub trait PoissonMap: Send + Sync + Debug {
    fn space(&self) -> PoissonSpace;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Central differences unless overridden.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let e = DEFAULT_FD_STEP * x.norm().max(1.0);
        fd_jacobian(|y| Ok(self.apply(y)), x, e).expect("infallible map")
    }

    fn name(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityMap(pub PoissonSpace);

impl PoissonMap for IdentityMap {
    fn space(&self) -> PoissonSpace {
        self.0
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len())
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationMap {
    pub space: PoissonSpace,
    pub v: DVector<f64>,
}

impl PoissonMap for TranslationMap {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x + &self.v
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len())
    }

    fn name(&self) -> String {
        "translation".into()
    }
}

/// `x ↦ B·x + c` with `B` in the linear Poisson group.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePoissonMap {
    pub linear: PoissonLinearMap,
    pub offset: DVector<f64>,
}

impl PoissonMap for AffinePoissonMap {
    fn space(&self) -> PoissonSpace {
        self.linear.space()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.linear.matrix() * x + &self.offset
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.linear.matrix().clone()
    }

    fn name(&self) -> String {
        "affine".into()
    }
}

/// Time-one map of `Kᵢ = αℓ(ρ)ρᵢ`, evaluated in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct KFlowMap {
    pub space: PoissonSpace,
    pub alpha: f64,
    pub i: usize,
}

impl PoissonMap for KFlowMap {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        closed_form_k_flow(self.alpha, self.i, 1.0, x, &self.space).expect("validated plane index")
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        closed_form_k_jacobian(self.alpha, self.i, 1.0, x, &self.space).expect("validated plane index")
    }

    fn name(&self) -> String {
        format!("k-flow(alpha={}, i={})", self.alpha, self.i)
    }
}

/// `outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Composition {
    pub outer: Arc<dyn PoissonMap>,
    pub inner: Arc<dyn PoissonMap>,
}

impl PoissonMap for Composition {
    fn space(&self) -> PoissonSpace {
        self.inner.space()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.outer.apply(&self.inner.apply(x))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.outer.jacobian(&self.inner.apply(x)) * self.inner.jacobian(x)
    }

    fn name(&self) -> String {
        format!("{} o {}", self.outer.name(), self.inner.name())
    }
}

/// `u ↦ s·Q·φ¹_K(Q⁻¹u/s)` with `Q = P_π`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRotation {
    pub alpha: f64,
    pub i: usize,
    pub space: PoissonSpace,
    conj: DMatrix<f64>,
    conj_inv: DMatrix<f64>,
    scale: f64,
}

impl LocalRotation {
    /// `None` when the point lies outside the generator's support, in which
    /// case the map is the identity.
    pub fn apply(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let q = &self.conj_inv * u / self.scale;
        if rho(&q) >= SUPPORT {
            return None;
        }
        let r = closed_form_k_flow(self.alpha, self.i, 1.0, &q, &self.space).expect("validated plane");
        Some(&self.conj * r * self.scale)
    }

    /// `Q·Dφ¹_K(Q⁻¹u/s)·Q⁻¹`, or `None` where the map is the identity.
    pub fn jacobian(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let q = &self.conj_inv * u / self.scale;
        if rho(&q) >= SUPPORT {
            return None;
        }
        let j = closed_form_k_jacobian(self.alpha, self.i, 1.0, &q, &self.space).expect("validated plane");
        Some(&self.conj * j * &self.conj_inv)
    }
}

fn chart_from(c: Option<PoissonLinearMap>, space: PoissonSpace) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
    let Some(c) = c else { return Ok(None) };
    if c.space() != space {
        return Err(FranksError::ChartError("chart acts on a different space".into()));
    }
    if c.coupling_block().iter().any(|v| *v != 0.0) {
        return Err(FranksError::ChartError(
            "chart must be block diagonal; coupling block is nonzero".into(),
        ));
    }
    let inv = c
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| FranksError::ChartError("chart is singular".into()))?;
    Ok(Some((c.into_matrix(), inv)))
}

#[derive(Debug, Clone, Default)]
pub struct RealizeOptions {
    /// Linear part `C = D_{f(p)}φ` of an affine Poisson chart; identity if absent.
    pub chart: Option<PoissonLinearMap>,
    pub decompose: DecomposeOptions,
}

#[derive(Debug, Clone)]
pub struct PerturbedMap {
    pub base: Arc<dyn PoissonMap>,
    pub p: DVector<f64>,
    pub fp: DVector<f64>,
    chart: Option<(DMatrix<f64>, DMatrix<f64>)>,
    pub factorization: Factorization,
    pub generators: Vec<LocalRotation>,
    pub rho: f64,
    /// Dilation applied to every generator.
    pub scale: f64,
    pub target: SymplecticMatrix,
    /// `Â_π·D_p f`.
    pub target_derivative: DMatrix<f64>,
}

pub fn realize_discrete(
    f: Arc<dyn PoissonMap>,
    jac_f_at_p: Option<DMatrix<f64>>,
    p: &DVector<f64>,
    target: &SymplecticMatrix,
    rho_ball: f64,
    opts: &RealizeOptions,
) -> Result<PerturbedMap> {
    let space = f.space();
    if p.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), p.len()));
    }
    if target.d() != space.d() {
        return Err(dim_mismatch(format!("d = {}", space.d()), format!("d = {}", target.d())));
    }
    if !(rho_ball > 0.0) {
        return Err(FranksError::InvalidParameter(format!("rho must be positive, got {rho_ball}")));
    }
    let dfp = jac_f_at_p.unwrap_or_else(|| f.jacobian(p));
    let defect = poisson_defect(&dfp, &space)?;
    if defect > 1e-6 * matrix_norm(&dfp).powi(2).max(1.0) {
        return Err(FranksError::NotPoisson(format!(
            "base map derivative has Poisson defect {defect:.3e}"
        )));
    }
    let chart = chart_from(opts.chart.clone(), space)?;
    let d2 = 2 * space.d();
    let a = match &chart {
        Some((c, c_inv)) => {
            let ca = c.view((0, 0), (d2, d2)).into_owned();
            let ca_inv = c_inv.view((0, 0), (d2, d2)).into_owned();
            SymplecticMatrix::with_tol(&ca * target.matrix() * ca_inv, 1e-9)?
        }
        None => target.clone(),
    };
    let factorization = decompose_near_identity_with(&a, &opts.decompose)?;
    let p_norm = factorization
        .factors
        .iter()
        .map(|f| spectral_norm(f.conjugator.matrix()))
        .fold(1.0, f64::max);
    let scale = rho_ball / ((1.5f64).sqrt() * p_norm);
    let generators = factorization
        .factors
        .iter()
        .filter(|f| !f.inert && f.angle != 0.0)
        .map(|f| {
            let lifted = lift_a_pi(&f.conjugator, space.n());
            let inv = lift_a_pi(&f.conjugator.inverse(), space.n());
            LocalRotation {
                alpha: f.angle,
                i: f.k,
                space,
                conj: lifted.into_matrix(),
                conj_inv: inv.into_matrix(),
                scale,
            }
        })
        .collect();
    let target_derivative = lift_a_pi(target, space.n()).matrix() * &dfp;
    Ok(PerturbedMap {
        fp: f.apply(p),
        base: f,
        p: p.clone(),
        chart,
        factorization,
        generators,
        rho: rho_ball,
        scale,
        target: target.clone(),
        target_derivative,
    })
}

impl PerturbedMap {
    pub fn space(&self) -> PoissonSpace {
        self.base.space()
    }

    /// `h = h₁∘…∘h_{4d}`, or `None` when every factor acts trivially.
    fn h_inner(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        let mut cur: Option<DVector<f64>> = None;
        for g in self.generators.iter().rev() {
            let next = g.apply(cur.as_ref().unwrap_or(u));
            if next.is_some() {
                cur = next;
            }
        }
        cur
    }

    pub fn h(&self, u: &DVector<f64>) -> DVector<f64> {
        self.h_inner(u).unwrap_or_else(|| u.clone())
    }

    fn chart_forward(&self, y: &DVector<f64>) -> DVector<f64> {
        let shifted = y - &self.fp;
        match &self.chart {
            Some((c, _)) => c * shifted,
            None => shifted,
        }
    }

    fn chart_inverse(&self, u: &DVector<f64>) -> DVector<f64> {
        let back = match &self.chart {
            Some((_, c_inv)) => c_inv * u,
            None => u.clone(),
        };
        back + &self.fp
    }

    /// `g(x)`; bitwise equal to `f(x)` wherever `h` acts trivially.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = self.base.apply(x);
        match self.h_inner(&self.chart_forward(&y)) {
            Some(u) => self.chart_inverse(&u),
            None => y,
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        let e = fd_step * x.norm().max(1.0);
        fd_jacobian(|y| Ok(self.apply(y)), x, e).expect("infallible")
    }

    /// `D_x g` by the chain rule through the closed-form generator
    /// Jacobians and the base map's own Jacobian.
    pub fn exact_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let df = self.base.jacobian(x);
        let mut u = self.chart_forward(&self.base.apply(x));
        let mut dh: Option<DMatrix<f64>> = None;
        for g in self.generators.iter().rev() {
            if let (Some(j), Some(next)) = (g.jacobian(&u), g.apply(&u)) {
                dh = Some(match dh {
                    Some(acc) => j * acc,
                    None => j,
                });
                u = next;
            }
        }
        match (dh, &self.chart) {
            (None, _) => df,
            (Some(dh), Some((c, c_inv))) => c_inv * dh * c * df,
            (Some(dh), None) => dh * df,
        }
    }

    pub fn h_jacobian(&self, u: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        let e = fd_step * u.norm().max(1.0);
        fd_jacobian(|y| Ok(self.h(y)), u, e).expect("infallible")
    }

    /// `‖D_p g − Â_π·D_p f‖`.
    pub fn derivative_error(&self, fd_step: f64) -> f64 {
        matrix_norm(&(self.jacobian(&self.p, fd_step) - &self.target_derivative))
    }

    /// Whether `x` is outside the region where `g` may differ from `f`.
    pub fn outside_support(&self, x: &DVector<f64>) -> bool {
        self.h_inner(&self.chart_forward(&self.base.apply(x))).is_none()
    }

    /// Poisson defect of the central-difference Jacobian.
    pub fn poisson_defect_at(&self, x: &DVector<f64>, fd_step: f64) -> f64 {
        poisson_defect(&self.jacobian(x, fd_step), &self.space()).expect("dimensions match")
    }

    pub fn exact_poisson_defect_at(&self, x: &DVector<f64>) -> f64 {
        poisson_defect(&self.exact_jacobian(x), &self.space()).expect("dimensions match")
    }

    /// `‖h − id‖_{C¹}` sampled at chart-space points.
    pub fn h_size(&self, samples: &[DVector<f64>], fd_step: f64) -> NormReport {
        let c0 = c0_vector(|u| self.h(u) - u, samples);
        let n = self.space().dim();
        let c1 = c1_vector(
            |u| self.h(u) - u,
            |u| self.h_jacobian(u, fd_step) - DMatrix::identity(n, n),
            samples,
        );
        NormReport {
            c0,
            c1,
            c2: None,
            bound: self.factorization.delta.sqrt(),
        }
    }

    /// `‖g − f‖_{C¹}` sampled at domain points.
    pub fn perturbation_size(&self, samples: &[DVector<f64>], fd_step: f64) -> NormReport {
        let c0 = c0_vector(|x| self.apply(x) - self.base.apply(x), samples);
        let c1 = c1_vector(
            |x| self.apply(x) - self.base.apply(x),
            |x| self.jacobian(x, fd_step) - self.base.jacobian(x),
            samples,
        );
        NormReport {
            c0,
            c1,
            c2: None,
            bound: self.factorization.delta.sqrt(),
        }
    }
}

/// Sampled perturbation norms; `bound` is the scale the theory predicts the
/// norm to be proportional to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub c0: f64,
    pub c1: f64,
    pub c2: Option<f64>,
    pub bound: f64,
}

impl NormReport {
    pub fn fitted_constant(&self) -> f64 {
        self.c2.unwrap_or(self.c1) / self.bound
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedHamiltonian {
    /// `H′ = s·H(p/s)` with `H` the chained field.
    pub field: Arc<Rescaled>,
    pub chained: ChainedField,
    pub slabs: Vec<ChainFactor>,
    pub rho: f64,
    pub scale: f64,
    pub target: SymplecticMatrix,
    pub factorization: Factorization,
    /// Target section `x₁ = section`.
    pub section: f64,
}

/// Builds `H′` with `D₀P_{H′} = Â` from `{x₁ = 0}` to `{x₁ = max(1, s)}`.
pub fn realize_continuous(
    target: &SymplecticMatrix,
    rho_ball: f64,
    n: usize,
    decompose: &DecomposeOptions,
) -> Result<PerturbedHamiltonian> {
    if !(rho_ball > 0.0) {
        return Err(FranksError::InvalidParameter(format!("rho must be positive, got {rho_ball}")));
    }
    let d = target.d();
    let factorization = decompose_near_identity_with(target, decompose)?;
    // The chain applies slab 1 first, so slabs take the factors last-to-first.
    let slabs: Vec<ChainFactor> = factorization
        .factors
        .iter()
        .rev()
        .filter(|f| !f.inert && f.angle != 0.0)
        .map(|f| ChainFactor {
            conjugator: f.conjugator.clone(),
            i: f.k,
            alpha: f.angle,
        })
        .collect();
    let chained = chained_unchecked(&slabs, d, n)?;
    let p_norm = slabs
        .iter()
        .map(|s| spectral_norm(s.conjugator.matrix()))
        .fold(1.0, f64::max);
    let radius = 1.5f64.sqrt() * p_norm;
    let scale = rho_ball / (1.0 + 0.5625 + radius * radius).sqrt();
    let field = Arc::new(rescale_support(Arc::new(chained.clone()) as Field, scale)?);
    Ok(PerturbedHamiltonian {
        field,
        chained,
        slabs,
        rho: rho_ball,
        scale,
        target: target.clone(),
        factorization,
        section: scale.max(1.0),
    })
}

impl PerturbedHamiltonian {
    pub fn space(&self) -> PoissonSpace {
        self.field.space()
    }

    pub fn poincare(&self, opts: &PoincareOptions) -> Result<PoincareResult> {
        let origin = DVector::zeros(self.space().dim());
        poincare_map(self.field.as_ref(), &origin, self.section, opts)
    }

    /// Exact comparison `X_{H′}(p) == X_{H₀}(p)`.
    pub fn matches_drift_at(&self, p: &DVector<f64>) -> bool {
        let drift = Drift::new(self.space());
        let a = hamiltonian_vector_field(self.field.as_ref(), p).expect("dimension");
        let b = hamiltonian_vector_field(&drift, p).expect("dimension");
        (a - b).iter().all(|v| *v == 0.0)
    }

    /// Whether `p` lies outside the closed tube containing the support.
    pub fn outside_tube(&self, p: &DVector<f64>) -> bool {
        let q = p / self.scale;
        let y1 = q[self.space().y_index(1)];
        if q[0] < 0.0 || q[0] > 1.0 || y1.abs() >= SUPPORT {
            return true;
        }
        let p_norm = self
            .slabs
            .iter()
            .map(|s| spectral_norm(s.conjugator.matrix()))
            .fold(1.0, f64::max);
        let (_, _, hat) = crate::hamiltonian::split_enlarged(&q, self.space().d() - 1);
        hat.norm() >= (2.0 * SUPPORT).sqrt() * p_norm
    }

    /// `‖H′ − H₀‖_{C²}` on `samples`, with the bound scale
    /// `N²·maxₖ max(1, ‖Pₖ‖²)|αₖ|`.
    pub fn perturbation_size(&self, samples: &[DVector<f64>]) -> NormReport {
        let pert = rescale_support(Arc::new(self.chained.perturbation()) as Field, self.scale)
            .expect("positive scale");
        let c2 = c2_scalar(|p| pert.value(p), |p| pert.gradient(p), |p| pert.hessian(p), samples);
        NormReport {
            c0: samples.iter().map(|p| pert.value(p).abs()).fold(0.0, f64::max),
            c1: samples.iter().map(|p| pert.gradient(p).amax()).fold(0.0, f64::max),
            c2: Some(c2),
            bound: chain_bound(&self.slabs),
        }
    }
}

/// `N²·maxₖ max(1, ‖Pₖ‖²)·|αₖ|`.
pub fn chain_bound(slabs: &[ChainFactor]) -> f64 {
    let n = slabs.len() as f64;
    n * n
        * slabs
            .iter()
            .map(|s| matrix_norm(s.conjugator.matrix()).powi(2).max(1.0) * s.alpha.abs())
            .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::{plane_rotation, random_symplectic_near_identity};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_target_gives_base_map() {
        let space = PoissonSpace::new(2, 1).unwrap();
        let f = Arc::new(IdentityMap(space));
        let g = realize_discrete(f, None, &DVector::zeros(5), &SymplecticMatrix::identity(2), 1.0, &RealizeOptions::default()).unwrap();
        assert!(g.generators.is_empty());
        let x = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0, 0.5]);
        assert_eq!(g.apply(&x), x);
    }

    #[test]
    fn translation_base_rotation_target() {
        let space = PoissonSpace::new(2, 1).unwrap();
        let v = DVector::from_vec(vec![0.5, -0.1, 0.2, 0.3, 1.0]);
        let f = Arc::new(TranslationMap { space, v });
        let target = SymplecticMatrix::new(plane_rotation(0.05, 1, 2)).unwrap();
        let g = realize_discrete(f, None, &DVector::zeros(5), &target, 0.5, &RealizeOptions::default()).unwrap();
        let expected = lift_a_pi(&target, 1).into_matrix();
        assert!(matrix_norm(&(g.jacobian(&DVector::zeros(5), 1e-5) - expected)) < 1e-5);
        let far = DVector::from_vec(vec![3.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(g.outside_support(&far));
        assert_eq!(g.apply(&far), g.base.apply(&far));
    }

    #[test]
    fn nonlinear_base_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let space = PoissonSpace::new(2, 1).unwrap();
        let f = Arc::new(KFlowMap { space, alpha: 0.2, i: 2 });
        let target = random_symplectic_near_identity(2, 1e-2, &mut rng).unwrap();
        let p = DVector::from_vec(vec![0.3, 0.1, -0.2, 0.2, 0.1]);
        let g = realize_discrete(f, None, &p, &target, 0.3, &RealizeOptions::default()).unwrap();
        let err = g.derivative_error(1e-5);
        assert!(err <= 1e-5 * matrix_norm(&g.base.jacobian(&p)), "err {err}");
        assert!(g.poisson_defect_at(&p, 1e-5) < 1e-6);
        for x in crate::norms::ball_samples(&p, 0.3, 50, &mut rng) {
            let exact = g.exact_jacobian(&x);
            assert!((&exact - g.jacobian(&x, 1e-6)).amax() < 1e-7);
            assert!(g.exact_poisson_defect_at(&x) < 1e-12);
        }
    }

    #[test]
    fn coupled_chart_is_rejected() {
        let space = PoissonSpace::new(1, 1).unwrap();
        let mut c = DMatrix::identity(3, 3);
        c[(0, 2)] = 0.5;
        let chart = PoissonLinearMap::new(c, space, 1e-12).unwrap();
        let opts = RealizeOptions { chart: Some(chart), ..Default::default() };
        let target = SymplecticMatrix::new(plane_rotation(0.05, 1, 1)).unwrap();
        let res = realize_discrete(Arc::new(IdentityMap(space)), None, &DVector::zeros(3), &target, 1.0, &opts);
        assert!(matches!(res, Err(FranksError::ChartError(_))));
    }

    #[test]
    fn block_chart_conjugates_target() {
        let space = PoissonSpace::new(1, 1).unwrap();
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.3, 0.5, 0.0, 0.0, 0.0, 4.0]);
        let chart = PoissonLinearMap::new(c, space, 1e-12).unwrap();
        let opts = RealizeOptions { chart: Some(chart), ..Default::default() };
        let target = SymplecticMatrix::new(plane_rotation(0.03, 1, 1)).unwrap();
        let g = realize_discrete(Arc::new(IdentityMap(space)), None, &DVector::zeros(3), &target, 1.0, &opts).unwrap();
        assert!(g.derivative_error(1e-5) < 1e-5);
        let x = DVector::from_vec(vec![0.05, -0.1, 0.2]);
        assert!((g.exact_jacobian(&x) - g.jacobian(&x, 1e-6)).amax() < 1e-7);
    }

    #[test]
    fn continuous_identity_is_drift() {
        let h = realize_continuous(&SymplecticMatrix::identity(1), 1.0, 0, &DecomposeOptions::default()).unwrap();
        assert!(h.chained.is_empty());
        let p = DVector::from_vec(vec![0.3, 0.1, 0.2, -0.3]);
        assert!(h.matches_drift_at(&p));
    }
}
