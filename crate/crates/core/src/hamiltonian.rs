//! Scalar fields with analytic gradients: the drift `H₀ = −y₁`, the rotation
//! generator `Kᵢ`, the transit field `H̃`, chained transits, quadratic test
//! fields, and support rescaling.
//!
//! Hamiltonian vector fields use `X_H = Ĵ∇H`, so `ẋ = −∂H/∂y`, `ẏ = ∂H/∂x`.
//! With this convention the unit drift `∂/∂x₁` is generated by `−y₁`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bump::{ell, ell_d1, ell_d2, SUPPORT};
use crate::error::{dim_mismatch, FranksError, Result};
use crate::poisson::{embed_phi, PoissonSpace, SymplecticMatrix};

pub trait Hamiltonian: Send + Sync + Debug {
    fn space(&self) -> PoissonSpace;
    fn value(&self, p: &DVector<f64>) -> f64;
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64>;

    /// Central differences of the gradient unless overridden.
    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = p.len();
        let h = 1e-5 * p.amax().max(1.0);
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += h;
            b[j] -= h;
            out.set_column(j, &((self.gradient(&a) - self.gradient(&b)) / (2.0 * h)));
        }
        (&out + out.transpose()) * 0.5
    }

    fn kind(&self) -> &'static str;
}

pub type Field = Arc<dyn Hamiltonian>;

fn check_point(space: &PoissonSpace, p: &DVector<f64>) {
    assert_eq!(p.len(), space.dim(), "point dimension does not match the field");
}

/// `ρ = ½‖p‖²`.
pub fn rho(p: &DVector<f64>) -> f64 {
    0.5 * p.norm_squared()
}

/// `ρᵢ = ½(xᵢ² + yᵢ²)` for 1-based `i`.
pub fn rho_i(p: &DVector<f64>, i: usize, d: usize) -> f64 {
    let (x, y) = (p[i - 1], p[d + i - 1]);
    0.5 * (x * x + y * y)
}

/// `sign·y₁`. The normal-form drift is `sign = −1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    space: PoissonSpace,
    sign: f64,
}

impl Drift {
    pub fn new(space: PoissonSpace) -> Self {
        Self { space, sign: -1.0 }
    }

    pub fn with_sign(space: PoissonSpace, sign: f64) -> Self {
        Self { space, sign }
    }
}

impl Hamiltonian for Drift {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        check_point(&self.space, p);
        self.sign * p[self.space.y_index(1)]
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        check_point(&self.space, p);
        let mut g = DVector::zeros(p.len());
        g[self.space.y_index(1)] = self.sign;
        g
    }

    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(p.len(), p.len())
    }

    fn kind(&self) -> &'static str {
        "drift"
    }
}

/// `Kᵢ = α·ℓ(ρ)·ρᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationGenerator {
    space: PoissonSpace,
    alpha: f64,
    i: usize,
}

pub fn make_rotation_hamiltonian(alpha: f64, i: usize, d: usize, n: usize) -> Result<RotationGenerator> {
    let space = PoissonSpace::new(d, n)?;
    space.check_plane(i)?;
    Ok(RotationGenerator { space, alpha, i })
}

impl RotationGenerator {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn plane(&self) -> usize {
        self.i
    }

    /// `(K, ∇K)`; exact zeros outside `ρ < 3/4`.
    fn value_grad(&self, p: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = rho(p);
        let mut g = DVector::zeros(p.len());
        if r >= SUPPORT {
            return (0.0, g);
        }
        let d = self.space.d();
        let ri = rho_i(p, self.i, d);
        let (l, l1) = (ell(r), ell_d1(r));
        if l1 != 0.0 {
            g.axpy(self.alpha * l1 * ri, p, 0.0);
        }
        let (ix, iy) = (self.i - 1, d + self.i - 1);
        g[ix] += self.alpha * l * p[ix];
        g[iy] += self.alpha * l * p[iy];
        (self.alpha * l * ri, g)
    }

    /// `α[ℓ″ρᵢ ppᵀ + ℓ′(p qᵢᵀ + qᵢ pᵀ) + ℓ′ρᵢ I + ℓ Πᵢ]`.
    fn hess(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let n = p.len();
        let r = rho(p);
        let mut h = DMatrix::zeros(n, n);
        if r >= SUPPORT {
            return h;
        }
        let d = self.space.d();
        let ri = rho_i(p, self.i, d);
        let (l, l1, l2) = (ell(r), ell_d1(r), ell_d2(r));
        let (ix, iy) = (self.i - 1, d + self.i - 1);
        let mut q = DVector::zeros(n);
        q[ix] = p[ix];
        q[iy] = p[iy];
        h += p * p.transpose() * (l2 * ri);
        h += (p * q.transpose() + &q * p.transpose()) * l1;
        for k in 0..n {
            h[(k, k)] += l1 * ri;
        }
        h[(ix, ix)] += l;
        h[(iy, iy)] += l;
        h * self.alpha
    }
}

impl Hamiltonian for RotationGenerator {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        check_point(&self.space, p);
        self.value_grad(p).0
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        check_point(&self.space, p);
        self.value_grad(p).1
    }

    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        check_point(&self.space, p);
        self.hess(p)
    }

    fn kind(&self) -> &'static str {
        "rotation"
    }
}

/// Splits a point of the enlarged space `R^{2(d+1)+n}` into `(x₁, y₁, p̂)`,
/// `p̂ = (x₂..x_{d+1}, y₂..y_{d+1}, z)`.
pub(crate) fn split_enlarged(p: &DVector<f64>, d: usize) -> (f64, f64, DVector<f64>) {
    let de = d + 1;
    let n = p.len() - 2 * de;
    let mut hat = DVector::zeros(2 * d + n);
    for k in 0..d {
        hat[k] = p[1 + k];
        hat[d + k] = p[de + 1 + k];
    }
    for k in 0..n {
        hat[2 * d + k] = p[2 * de + k];
    }
    (p[0], p[de], hat)
}

/// Inverse of [`split_enlarged`].
pub(crate) fn join_enlarged(x1: f64, y1: f64, hat: &DVector<f64>, d: usize) -> DVector<f64> {
    let de = d + 1;
    let n = hat.len() - 2 * d;
    let mut p = DVector::zeros(2 * de + n);
    p[0] = x1;
    p[de] = y1;
    for k in 0..d {
        p[1 + k] = hat[k];
        p[de + 1 + k] = hat[d + k];
    }
    for k in 0..n {
        p[2 * de + k] = hat[2 * d + k];
    }
    p
}

/// `H̃ = 2·ℓ(2x₁ − 1)·ℓ(y₁)·Kᵢ(x̂, ŷ, z)` on `R^{2(d+1)+n}`.
///
/// The factor 2 compensates `∫ℓ = 1`: along the unit drift the plateau
/// rotation rate integrates to `α·∫ℓ(2t − 1)·2 dt = α`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitField {
    space: PoissonSpace,
    k: RotationGenerator,
}

pub fn make_transit_hamiltonian(alpha: f64, i: usize, d: usize, n: usize) -> Result<TransitField> {
    let k = make_rotation_hamiltonian(alpha, i, d, n)?;
    Ok(TransitField {
        space: k.space.enlarged(),
        k,
    })
}

impl TransitField {
    pub fn alpha(&self) -> f64 {
        self.k.alpha
    }

    pub fn plane(&self) -> usize {
        self.k.i
    }

    /// Whether every term of the field vanishes at `p` together with its
    /// derivatives, decided from the `x₁`, `y₁` cutoffs alone.
    fn cut_off(x1: f64, y1: f64) -> bool {
        (2.0 * x1 - 1.0).abs() >= SUPPORT || y1.abs() >= SUPPORT
    }

    fn value_grad(&self, p: &DVector<f64>) -> (f64, DVector<f64>) {
        let d = self.k.space.d();
        let (x1, y1, hat) = split_enlarged(p, d);
        if Self::cut_off(x1, y1) {
            return (0.0, DVector::zeros(p.len()));
        }
        let (a, da) = (ell(2.0 * x1 - 1.0), 2.0 * ell_d1(2.0 * x1 - 1.0));
        let (b, db) = (ell(y1), ell_d1(y1));
        let (kv, kg) = self.k.value_grad(&hat);
        let g = join_enlarged(2.0 * da * b * kv, 2.0 * a * db * kv, &(kg * (2.0 * a * b)), d);
        (2.0 * a * b * kv, g)
    }

    fn hess(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let d = self.k.space.d();
        let de = d + 1;
        let dim = p.len();
        let mut h = DMatrix::zeros(dim, dim);
        let (x1, y1, hat) = split_enlarged(p, d);
        if Self::cut_off(x1, y1) {
            return h;
        }
        let r = 2.0 * x1 - 1.0;
        let (a, da, dda) = (ell(r), 2.0 * ell_d1(r), 4.0 * ell_d2(r));
        let (b, db, ddb) = (ell(y1), ell_d1(y1), ell_d2(y1));
        let (kv, kg) = self.k.value_grad(&hat);
        let kh = self.k.hess(&hat);
        let slot = |r: usize| -> usize {
            if r < d {
                1 + r
            } else if r < 2 * d {
                de + 1 + (r - d)
            } else {
                2 * de + (r - 2 * d)
            }
        };
        let (ix, iy) = (0, de);
        h[(ix, ix)] = 2.0 * dda * b * kv;
        h[(iy, iy)] = 2.0 * a * ddb * kv;
        h[(ix, iy)] = 2.0 * da * db * kv;
        h[(iy, ix)] = h[(ix, iy)];
        for r in 0..hat.len() {
            let sr = slot(r);
            h[(ix, sr)] = 2.0 * da * b * kg[r];
            h[(sr, ix)] = h[(ix, sr)];
            h[(iy, sr)] = 2.0 * a * db * kg[r];
            h[(sr, iy)] = h[(iy, sr)];
            for c in 0..hat.len() {
                h[(sr, slot(c))] = 2.0 * a * b * kh[(r, c)];
            }
        }
        h
    }
}

impl Hamiltonian for TransitField {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        check_point(&self.space, p);
        self.value_grad(p).0
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        check_point(&self.space, p);
        self.value_grad(p).1
    }

    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        check_point(&self.space, p);
        self.hess(p)
    }

    fn kind(&self) -> &'static str {
        "transit"
    }
}

/// One slab of a chained field: `H̃_{i}(M·p + c)`.
#[derive(Debug, Clone, PartialEq)]
struct ChainTerm {
    transit: TransitField,
    m: DMatrix<f64>,
    m_t: DMatrix<f64>,
    shift: f64,
}

/// Specification of one slab: rotate plane `i` by `alpha`, conjugated by `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainFactor {
    pub conjugator: SymplecticMatrix,
    pub i: usize,
    pub alpha: f64,
}

/// `H = H₀ + N·Σₖ H̃_{i(k)}(Φ(Pₖ⁻¹)·Tₖ(p))` with `Tₖ(x₁, …) = (N x₁ − k + 1, …)`.
///
/// Slab `k` occupies `x₁ ∈ [(k−1)/N, k/N]` and its return map is
/// `Pₖ·πᵢ(R_αₖ)·Pₖ⁻¹`; crossing the whole chain gives `A_N⋯A₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainedField {
    space: PoissonSpace,
    terms: Vec<ChainTerm>,
    include_drift: bool,
}

pub fn make_chained_hamiltonian(factors: &[ChainFactor], d: usize, n: usize) -> Result<ChainedField> {
    if factors.is_empty() {
        return Err(FranksError::InvalidParameter(
            "chained field needs at least one factor".into(),
        ));
    }
    chained_unchecked(factors, d, n)
}

/// Like [`make_chained_hamiltonian`] but allows an empty list (`H = H₀`).
pub(crate) fn chained_unchecked(factors: &[ChainFactor], d: usize, n: usize) -> Result<ChainedField> {
    let base = PoissonSpace::new(d, n)?;
    let space = base.enlarged();
    let big_n = factors.len() as f64;
    let mut terms = Vec::with_capacity(factors.len());
    for (idx, f) in factors.iter().enumerate() {
        if f.conjugator.d() != d {
            return Err(dim_mismatch(format!("d = {d}"), format!("d = {}", f.conjugator.d())));
        }
        let transit = make_transit_hamiltonian(f.alpha, f.i, d, n)?;
        let mut m = embed_phi(&f.conjugator.inverse(), n).into_matrix();
        for r in 0..space.dim() {
            m[(r, 0)] *= big_n;
        }
        terms.push(ChainTerm {
            transit,
            m_t: m.transpose(),
            m,
            shift: -(idx as f64),
        });
    }
    Ok(ChainedField {
        space,
        terms,
        include_drift: true,
    })
}

impl ChainedField {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `H − H₀`.
    pub fn perturbation(&self) -> Self {
        Self {
            include_drift: false,
            ..self.clone()
        }
    }

    fn local(&self, term: &ChainTerm, p: &DVector<f64>) -> Option<DVector<f64>> {
        // Φ fixes x₁ and y₁, so the cutoff can be decided before the product.
        let x1 = self.terms.len() as f64 * p[0] + term.shift;
        let y1 = p[self.space.y_index(1)];
        if TransitField::cut_off(x1, y1) {
            return None;
        }
        let mut q = &term.m * p;
        q[0] += term.shift;
        Some(q)
    }
}

impl Hamiltonian for ChainedField {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        check_point(&self.space, p);
        let big_n = self.terms.len() as f64;
        let mut acc = 0.0;
        for t in &self.terms {
            if let Some(q) = self.local(t, p) {
                acc += t.transit.value_grad(&q).0;
            }
        }
        let drift = if self.include_drift { -p[self.space.y_index(1)] } else { 0.0 };
        drift + big_n * acc
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        check_point(&self.space, p);
        let big_n = self.terms.len() as f64;
        let mut g = DVector::zeros(p.len());
        for t in &self.terms {
            if let Some(q) = self.local(t, p) {
                g += &t.m_t * t.transit.value_grad(&q).1 * big_n;
            }
        }
        if self.include_drift {
            g[self.space.y_index(1)] -= 1.0;
        }
        g
    }

    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        check_point(&self.space, p);
        let big_n = self.terms.len() as f64;
        let mut h = DMatrix::zeros(p.len(), p.len());
        for t in &self.terms {
            if let Some(q) = self.local(t, p) {
                h += &t.m_t * t.transit.hess(&q) * &t.m * big_n;
            }
        }
        h
    }

    fn kind(&self) -> &'static str {
        "chained"
    }
}

/// `ϱ·H(p/ϱ)`. Its flow is `ψ⁻¹∘φ_H^{t/ϱ}∘ψ` with `ψ(p) = p/ϱ`.
#[derive(Debug, Clone)]
pub struct Rescaled {
    inner: Field,
    rho: f64,
}

pub fn rescale_support(h: Field, rho: f64) -> Result<Rescaled> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(FranksError::InvalidParameter(format!(
            "rescaling radius must be positive, got {rho}"
        )));
    }
    Ok(Rescaled { inner: h, rho })
}

impl Rescaled {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn inner(&self) -> &Field {
        &self.inner
    }
}

impl Hamiltonian for Rescaled {
    fn space(&self) -> PoissonSpace {
        self.inner.space()
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        self.rho * self.inner.value(&(p / self.rho))
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        self.inner.gradient(&(p / self.rho))
    }

    fn hessian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        self.inner.hessian(&(p / self.rho)) / self.rho
    }

    fn kind(&self) -> &'static str {
        "rescaled"
    }
}

/// `c + bᵀp + ½ pᵀSp`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticField {
    space: PoissonSpace,
    s: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
}

impl QuadraticField {
    pub fn new(space: PoissonSpace, s: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        let dim = space.dim();
        if s.nrows() != dim || s.ncols() != dim || b.len() != dim {
            return Err(dim_mismatch(
                format!("{dim}x{dim} and {dim}"),
                format!("{}x{} and {}", s.nrows(), s.ncols(), b.len()),
            ));
        }
        let s = (&s + s.transpose()) * 0.5;
        Ok(Self { space, s, b, c })
    }
}

impl Hamiltonian for QuadraticField {
    fn space(&self) -> PoissonSpace {
        self.space
    }

    fn value(&self, p: &DVector<f64>) -> f64 {
        check_point(&self.space, p);
        self.c + self.b.dot(p) + 0.5 * p.dot(&(&self.s * p))
    }

    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        check_point(&self.space, p);
        &self.b + &self.s * p
    }

    fn hessian(&self, _p: &DVector<f64>) -> DMatrix<f64> {
        self.s.clone()
    }

    fn kind(&self) -> &'static str {
        "quadratic"
    }
}

/// One slab in a field descriptor; `p_rows` defaults to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub i: usize,
    pub alpha: f64,
    #[serde(default, rename = "P_rows", skip_serializing_if = "Option::is_none")]
    pub p_rows: Option<Vec<Vec<f64>>>,
}

/// JSON form of the built-in fields. `d` is always the rank of the base
/// space; transit and chained fields live on `R^{2(d+1)+n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldDescriptor {
    Drift {
        d: usize,
        #[serde(default)]
        n: usize,
        #[serde(default = "neg_one")]
        sign: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    Rotation {
        d: usize,
        #[serde(default)]
        n: usize,
        alpha: f64,
        i: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    Transit {
        d: usize,
        #[serde(default)]
        n: usize,
        alpha: f64,
        i: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    Chained {
        d: usize,
        #[serde(default)]
        n: usize,
        factors: Vec<FactorSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    Quadratic {
        d: usize,
        #[serde(default)]
        n: usize,
        hessian: Vec<Vec<f64>>,
        #[serde(default)]
        linear: Vec<f64>,
        #[serde(default)]
        constant: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
}

fn neg_one() -> f64 {
    -1.0
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(dim_mismatch(
            format!("{nrows}x{ncols}"),
            format!("{} rows", rows.len()),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl FieldDescriptor {
    pub fn build(&self) -> Result<Field> {
        let (field, rho): (Field, Option<f64>) = match self {
            Self::Drift { d, n, sign, rho } => (
                Arc::new(Drift::with_sign(PoissonSpace::new(*d, *n)?, *sign)),
                *rho,
            ),
            Self::Rotation { d, n, alpha, i, rho } => {
                (Arc::new(make_rotation_hamiltonian(*alpha, *i, *d, *n)?), *rho)
            }
            Self::Transit { d, n, alpha, i, rho } => {
                (Arc::new(make_transit_hamiltonian(*alpha, *i, *d, *n)?), *rho)
            }
            Self::Chained { d, n, factors, rho } => {
                let mut specs = Vec::with_capacity(factors.len());
                for f in factors {
                    let conjugator = match &f.p_rows {
                        Some(rows) => SymplecticMatrix::new(matrix_from_rows(rows, 2 * d, 2 * d)?)?,
                        None => SymplecticMatrix::identity(*d),
                    };
                    specs.push(ChainFactor {
                        conjugator,
                        i: f.i,
                        alpha: f.alpha,
                    });
                }
                (Arc::new(make_chained_hamiltonian(&specs, *d, *n)?), *rho)
            }
            Self::Quadratic {
                d,
                n,
                hessian,
                linear,
                constant,
                rho,
            } => {
                let space = PoissonSpace::new(*d, *n)?;
                let dim = space.dim();
                let s = matrix_from_rows(hessian, dim, dim)?;
                let b = if linear.is_empty() {
                    DVector::zeros(dim)
                } else {
                    DVector::from_vec(linear.clone())
                };
                (Arc::new(QuadraticField::new(space, s, b, *constant)?), *rho)
            }
        };
        match rho {
            Some(r) => Ok(Arc::new(rescale_support(field, r)?)),
            None => Ok(field),
        }
    }
}
