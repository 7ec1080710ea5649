//! Linear Poisson geometry on `R^{2d+n}` with the constant-rank structure
//! `pi_0 = sum_i dx_i ^ dy_i`.
//!
//! Coordinates are ordered `(x_1..x_d, y_1..y_d, z_1..z_n)`. Internally every
//! index is 0-based, so `x_k` lives at `k - 1`, `y_k` at `d + k - 1` and `z_j`
//! at `2d + j - 1`. Public constructors that take a plane index `k` expect the
//! 1-based value used in JSON and on the command line.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, FranksError, Result};
use crate::norms::matrix_norm;

pub const DEFAULT_SYMPLECTIC_TOL: f64 = 1e-10;

/// Dimensions `(d, n)` of the ambient Poisson space `R^{2d+n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoissonSpace {
    d: usize,
    n: usize,
}

impl PoissonSpace {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if d == 0 {
            return Err(FranksError::InvalidParameter("rank d must be >= 1".into()));
        }
        Ok(Self { d, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.d + self.n
    }

    /// The space with one more conjugate pair prepended, `R^{2(d+1)+n}`.
    pub fn enlarged(&self) -> Self {
        Self {
            d: self.d + 1,
            n: self.n,
        }
    }

    /// 0-based position of `x_k` for 1-based `k`.
    pub fn x_index(&self, k: usize) -> usize {
        k - 1
    }

    /// 0-based position of `y_k` for 1-based `k`.
    pub fn y_index(&self, k: usize) -> usize {
        self.d + k - 1
    }

    pub fn check_plane(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.d {
            return Err(FranksError::IndexOutOfRange {
                index: k,
                max: self.d,
            });
        }
        Ok(())
    }

    /// `J^ = [[J, 0], [0, 0]]`.
    pub fn structure_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m.view_mut((0, 0), (2 * self.d, 2 * self.d))
            .copy_from(&standard_j(self.d));
        m
    }
}

/// `J = [[0, -I], [I, 0]]` with `d x d` blocks.
pub fn standard_j(d: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        j[(i, d + i)] = -1.0;
        j[(d + i, i)] = 1.0;
    }
    j
}

fn half_dim(a: &DMatrix<f64>) -> Result<usize> {
    if !a.is_square() || !a.nrows().is_multiple_of(2) || a.nrows() == 0 {
        return Err(dim_mismatch(
            "square matrix of even size",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(a.nrows() / 2)
}

/// `|A^T J A - J|` in the column-sum norm.
pub fn symplectic_defect(a: &DMatrix<f64>) -> Result<f64> {
    let d = half_dim(a)?;
    let j = standard_j(d);
    Ok(matrix_norm(&(a.transpose() * &j * a - j)))
}

pub fn is_symplectic(a: &DMatrix<f64>, d: usize, tol: f64) -> Result<bool> {
    if a.nrows() != 2 * d || a.ncols() != 2 * d {
        return Err(dim_mismatch(
            format!("{0}x{0}", 2 * d),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(symplectic_defect(a)? <= tol)
}

/// `|B J^ B^T - J^|`: how far a linear map is from preserving `pi_0`.
pub fn poisson_defect(b: &DMatrix<f64>, space: &PoissonSpace) -> Result<f64> {
    if b.nrows() != space.dim() || b.ncols() != space.dim() {
        return Err(dim_mismatch(
            format!("{0}x{0}", space.dim()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    let jh = space.structure_matrix();
    Ok(matrix_norm(&(b * &jh * b.transpose() - jh)))
}

/// A `2d x 2d` matrix verified to satisfy `A^T J A = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    m: DMatrix<f64>,
    d: usize,
}

impl SymplecticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Self::with_tol(m, DEFAULT_SYMPLECTIC_TOL)
    }

    pub fn with_tol(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        let d = half_dim(&m)?;
        let defect = symplectic_defect(&m)?;
        if !(defect <= tol) {
            return Err(FranksError::NotSymplectic { defect, tol });
        }
        Ok(Self { m, d })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: DMatrix::identity(2 * d, 2 * d),
            d,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// `A^{-1} = -J A^T J`, exact for symplectic `A`.
    pub fn inverse(&self) -> Self {
        let j = standard_j(self.d);
        Self {
            m: -(&j * self.m.transpose() * &j),
            d: self.d,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.d, other.d, "symplectic product of mismatched sizes");
        Self {
            m: &self.m * &other.m,
            d: self.d,
        }
    }

    pub fn defect(&self) -> f64 {
        symplectic_defect(&self.m).expect("validated at construction")
    }

    /// Distance to the identity in the column-sum norm.
    pub fn distance_to_identity(&self) -> f64 {
        matrix_norm(&(&self.m - DMatrix::identity(2 * self.d, 2 * self.d)))
    }
}

/// An element of `Pn(2d+n, R)`: `B = [[A, a], [0, b]]` with `A` symplectic
/// and `b` invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonLinearMap {
    m: DMatrix<f64>,
    space: PoissonSpace,
}

impl PoissonLinearMap {
    pub fn new(m: DMatrix<f64>, space: PoissonSpace, tol: f64) -> Result<Self> {
        let dim = space.dim();
        if m.nrows() != dim || m.ncols() != dim {
            return Err(dim_mismatch(
                format!("{dim}x{dim}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
        let (d2, n) = (2 * space.d(), space.n());
        let lower_left = m.view((d2, 0), (n, d2));
        if lower_left.iter().any(|v| v.abs() > tol) {
            return Err(FranksError::NotPoisson(
                "lower-left block must vanish".into(),
            ));
        }
        let block = m.view((0, 0), (d2, d2)).into_owned();
        let defect = symplectic_defect(&block)?;
        if !(defect <= tol) {
            return Err(FranksError::NotPoisson(format!(
                "symplectic block defect {defect:.3e}"
            )));
        }
        if n > 0 {
            let b = m.view((d2, d2), (n, n)).into_owned();
            if b.determinant().abs() <= f64::EPSILON {
                return Err(FranksError::NotPoisson(
                    "transverse block is singular".into(),
                ));
            }
        }
        let defect = poisson_defect(&m, &space)?;
        if !(defect <= tol) {
            return Err(FranksError::NotPoisson(format!("defect {defect:.3e}")));
        }
        Ok(Self { m, space })
    }

    pub fn identity(space: PoissonSpace) -> Self {
        Self {
            m: DMatrix::identity(space.dim(), space.dim()),
            space,
        }
    }

    pub fn space(&self) -> PoissonSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn symplectic_block(&self) -> DMatrix<f64> {
        let d2 = 2 * self.space.d();
        self.m.view((0, 0), (d2, d2)).into_owned()
    }

    pub fn coupling_block(&self) -> DMatrix<f64> {
        let d2 = 2 * self.space.d();
        self.m.view((0, d2), (d2, self.space.n())).into_owned()
    }

    pub fn transverse_block(&self) -> DMatrix<f64> {
        let d2 = 2 * self.space.d();
        let n = self.space.n();
        self.m.view((d2, d2), (n, n)).into_owned()
    }

    pub fn inverse(&self) -> Self {
        let inv = self
            .m
            .clone()
            .try_inverse()
            .expect("Poisson linear maps are invertible");
        Self {
            m: inv,
            space: self.space,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.space, other.space);
        Self {
            m: &self.m * &other.m,
            space: self.space,
        }
    }
}

/// `A_pi = diag(A, I_n)`.
pub fn lift_a_pi(a: &SymplecticMatrix, n: usize) -> PoissonLinearMap {
    let d = a.d();
    let space = PoissonSpace { d, n };
    let mut m = DMatrix::identity(space.dim(), space.dim());
    m.view_mut((0, 0), (2 * d, 2 * d)).copy_from(a.matrix());
    PoissonLinearMap { m, space }
}

/// Counter-clockwise planar rotation `R_angle`.
pub fn rotation(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// `pi_k(M)`: places a unimodular `2 x 2` block on the conjugate pair
/// `(x_k, y_k)` of `R^{2d+n}`, identity elsewhere. `k` is 1-based.
pub fn embed_pi_k(
    block: &DMatrix<f64>,
    k: usize,
    space: PoissonSpace,
    tol: f64,
) -> Result<PoissonLinearMap> {
    if block.nrows() != 2 || block.ncols() != 2 {
        return Err(dim_mismatch(
            "2x2",
            format!("{}x{}", block.nrows(), block.ncols()),
        ));
    }
    space.check_plane(k)?;
    let det = block.determinant();
    if (det - 1.0).abs() > tol {
        return Err(FranksError::NotUnimodular { det });
    }
    Ok(PoissonLinearMap {
        m: embed_plane_block(block, k, space.d(), space.dim()),
        space,
    })
}

/// Unchecked `pi_k` placement into a `dim x dim` identity (1-based `k`).
pub(crate) fn embed_plane_block(
    block: &DMatrix<f64>,
    k: usize,
    d: usize,
    dim: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::identity(dim, dim);
    let (ix, iy) = (k - 1, d + k - 1);
    m[(ix, ix)] = block[(0, 0)];
    m[(ix, iy)] = block[(0, 1)];
    m[(iy, ix)] = block[(1, 0)];
    m[(iy, iy)] = block[(1, 1)];
    m
}

/// `pi_k(R_angle)` as a `2d x 2d` symplectic matrix.
pub fn plane_rotation(angle: f64, k: usize, d: usize) -> DMatrix<f64> {
    embed_plane_block(&rotation(angle), k, d, 2 * d)
}

/// Index map of `Phi`: position of `M`'s row/column `r` inside the enlarged
/// space `R^{2d+2+n}`. The `x`-half of `M` lands on `x_2..x_{d+1}` and the
/// `y`-half on `y_2..y_{d+1}`.
pub(crate) fn phi_slot(r: usize, d: usize) -> usize {
    if r < d {
        r + 1
    } else {
        r + 2
    }
}

/// `Phi(M)`: embeds `M in Sp(2d)` into `Pn(2d+2+n)`, fixing `x_1`, `y_1` and
/// the `z` block.
pub fn embed_phi(m: &SymplecticMatrix, n: usize) -> PoissonLinearMap {
    let d = m.d();
    let space = PoissonSpace { d: d + 1, n };
    let dim = space.dim();
    let mut out = DMatrix::identity(dim, dim);
    for r in 0..2 * d {
        for c in 0..2 * d {
            out[(phi_slot(r, d), phi_slot(c, d))] = m.matrix()[(r, c)];
        }
    }
    PoissonLinearMap { m: out, space }
}

/// Random symmetric `2d x 2d` matrix with standard normal entries.
pub fn random_symmetric<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v: f64 = StandardNormal.sample(rng);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// `exp(t J S)` for a random symmetric `S`, with `t` tuned by bisection so
/// that `|A - I| = delta` to about 1e-12 relative.
pub fn random_symplectic_near_identity<R: Rng + ?Sized>(
    d: usize,
    delta: f64,
    rng: &mut R,
) -> Result<SymplecticMatrix> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(FranksError::InvalidParameter(format!(
            "target distance must be positive, got {delta}"
        )));
    }
    let generator = standard_j(d) * random_symmetric(2 * d, rng);
    let id = DMatrix::<f64>::identity(2 * d, 2 * d);
    let dist = |t: f64| matrix_norm(&((&generator * t).exp() - &id));
    let mut hi = delta / matrix_norm(&generator).max(f64::MIN_POSITIVE);
    while dist(hi) < delta {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if dist(mid) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    SymplecticMatrix::new((&generator * (0.5 * (lo + hi))).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn space(d: usize, n: usize) -> PoissonSpace {
        PoissonSpace::new(d, n).unwrap()
    }

    #[test]
    fn structure_matrix_blocks() {
        let s = space(2, 1);
        let jh = s.structure_matrix();
        assert_eq!(jh.nrows(), 5);
        assert_eq!(&jh + jh.transpose(), DMatrix::zeros(5, 5));
        let j = jh.view((0, 0), (4, 4)).into_owned();
        assert_eq!(&j * &j, -DMatrix::<f64>::identity(4, 4));
        assert!(jh.row(4).iter().all(|v| *v == 0.0));
        assert_eq!(jh[(0, 2)], -1.0);
        assert_eq!(jh[(2, 0)], 1.0);
    }

    #[test]
    fn rank_zero_rejected() {
        assert!(PoissonSpace::new(0, 3).is_err());
    }

    #[test]
    fn is_symplectic_examples() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert!(is_symplectic(&id, 2, 1e-12).unwrap());
        let squeeze = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.5]));
        assert!(is_symplectic(&squeeze, 1, 1e-12).unwrap());
        let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 2.0]));
        assert!(!is_symplectic(&scale, 1, 1e-12).unwrap());
        assert!(matches!(
            is_symplectic(&id, 3, 1e-12),
            Err(FranksError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn lift_of_identity_and_j() {
        let lifted = lift_a_pi(&SymplecticMatrix::identity(2), 3);
        assert_eq!(lifted.matrix(), &DMatrix::<f64>::identity(7, 7));

        let j = SymplecticMatrix::new(standard_j(1)).unwrap();
        let lifted = lift_a_pi(&j, 1);
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(lifted.matrix(), &expected);
    }

    #[test]
    fn lift_preserves_structure_for_random_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_symplectic_near_identity(2, 0.3, &mut rng).unwrap();
            let b = lift_a_pi(&a, 2);
            let s = b.space();
            let jh = s.structure_matrix();
            let defect = matrix_norm(&(b.matrix().transpose() * &jh * b.matrix() - &jh));
            assert!(defect <= 1e-12, "defect {defect}");
            assert!(PoissonLinearMap::new(b.into_matrix(), s, 1e-12).is_ok());
        }
    }

    #[test]
    fn pi_k_examples() {
        let id2 = DMatrix::<f64>::identity(2, 2);
        let e = embed_pi_k(&id2, 1, space(2, 0), 1e-12).unwrap();
        assert_eq!(e.matrix(), &DMatrix::<f64>::identity(4, 4));

        let quarter = rotation(std::f64::consts::FRAC_PI_2);
        let e = embed_pi_k(&quarter, 1, space(1, 1), 1e-12).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((e.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn pi_k_rejects_bad_input() {
        let id2 = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            embed_pi_k(&id2, 3, space(2, 0), 1e-12),
            Err(FranksError::IndexOutOfRange { index: 3, max: 2 })
        ));
        assert!(matches!(
            embed_pi_k(&id2, 0, space(2, 0), 1e-12),
            Err(FranksError::IndexOutOfRange { .. })
        ));
        let bad = id2 * 2.0;
        assert!(matches!(
            embed_pi_k(&bad, 1, space(2, 0), 1e-12),
            Err(FranksError::NotUnimodular { .. })
        ));
    }

    #[test]
    fn phi_places_blocks_on_hatted_coordinates() {
        let phi = embed_phi(&SymplecticMatrix::identity(2), 0);
        assert_eq!(phi.matrix(), &DMatrix::<f64>::identity(6, 6));

        // d = 1: M acts on (x_2, y_2) = positions 1 and 3 of R^4.
        let m = SymplecticMatrix::new(rotation(0.3)).unwrap();
        let phi = embed_phi(&m, 1);
        let out = phi.matrix();
        assert_eq!(out.nrows(), 5);
        assert_eq!(out[(0, 0)], 1.0);
        assert_eq!(out[(2, 2)], 1.0);
        assert_eq!(out[(4, 4)], 1.0);
        assert_eq!(out[(1, 1)], m.matrix()[(0, 0)]);
        assert_eq!(out[(1, 3)], m.matrix()[(0, 1)]);
        assert_eq!(out[(3, 1)], m.matrix()[(1, 0)]);
        assert_eq!(out[(3, 3)], m.matrix()[(1, 1)]);
        assert!(PoissonLinearMap::new(out.clone(), phi.space(), 1e-12).is_ok());
    }

    #[test]
    fn phi_norm_saturates_at_one_for_contracting_block() {
        let shrink = SymplecticMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &[0.45, 0.0, 0.0, 1.0 / 0.45],
        ))
        .unwrap();
        // Column sums of Phi(M) include the identity columns.
        let phi = embed_phi(&shrink, 1);
        assert!(matrix_norm(phi.matrix()) <= matrix_norm(shrink.matrix()).max(1.0));
        let small = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.6]);
        let mut placed = DMatrix::<f64>::identity(4, 4);
        placed[(1, 1)] = small[(0, 0)];
        placed[(3, 3)] = small[(1, 1)];
        assert_eq!(matrix_norm(&placed), 1.0);
    }

    #[test]
    fn poisson_map_validation() {
        let s = space(1, 1);
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 2)] = 0.7; // coupling block is free
        m[(2, 2)] = 3.0;
        assert!(PoissonLinearMap::new(m.clone(), s, 1e-12).is_ok());
        m[(2, 0)] = 0.1;
        assert!(PoissonLinearMap::new(m, s, 1e-12).is_err());
    }

    #[test]
    fn symplectic_inverse_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_symplectic_near_identity(3, 0.2, &mut rng).unwrap();
        let prod = a.mul(&a.inverse());
        assert!((prod.matrix() - DMatrix::<f64>::identity(6, 6)).abs().max() < 1e-13);
    }

    #[test]
    fn random_generation_hits_requested_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &delta in &[1e-1, 1e-2, 1e-4] {
            let a = random_symplectic_near_identity(2, delta, &mut rng).unwrap();
            assert!((a.distance_to_identity() - delta).abs() <= 1e-10 * delta);
        }
    }
}
