//! Factorization of a near-identity symplectic matrix into `4d` conjugated
//! planar rotations.
//!
//! Pipeline: pick a diagonal symplectic `L₁` with distinct eigenvalues, set
//! `B = L₁⁻¹A`, diagonalize `B = S·L₂·S⁻¹` symplectically, and split every
//! `π_j(diag(η, η⁻¹))` of `L₁` and `L₂` into a plain rotation followed by a
//! conjugated rotation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, FranksError, Result};
use crate::norms::matrix_norm;
use crate::poisson::{embed_plane_block, plane_rotation, rotation, standard_j, SymplecticMatrix};

/// Near-identity regime: `‖A − I‖` must be strictly below this.
pub const DEFAULT_REGIME: f64 = 0.2;
/// Retries after the deterministic first attempt.
pub const MAX_RETRIES: usize = 5;

const BASE_SPACING: f64 = 3.0;
const IMAG_TOL: f64 = 1e-12;
const OMEGA_FLOOR: f64 = 1e-6;
const INERT_TOL: f64 = 1e-14;

/// `π_k(P)·π_k(R_angle)·π_k(P)⁻¹`, stored with the conjugator already full size.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationFactor {
    /// 1-based conjugate pair.
    pub k: usize,
    /// Signed rotation angle of this factor.
    pub angle: f64,
    /// The `θ` of the planar split this factor came from.
    pub theta: f64,
    pub conjugator: SymplecticMatrix,
    /// Produced by an `η = 1` split; realizes the identity.
    pub inert: bool,
}

impl RotationFactor {
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.conjugator.d();
        let p = self.conjugator.matrix();
        p * plane_rotation(self.angle, self.k, d) * self.conjugator.inverse().matrix()
    }

    /// `‖R_angle − I‖` for the planar rotation.
    pub fn rotation_distance(&self) -> f64 {
        matrix_norm(&(rotation(self.angle) - DMatrix::identity(2, 2)))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lambda: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub min_gap: f64,
    /// `‖B − L₁⁻¹‖` exceeded a quarter of the eigenvalue gap of `L₁⁻¹`.
    pub guard_binding: bool,
    pub attempts: usize,
    /// `max ‖Rᵢ − I‖ / δ^{1/2}`.
    pub c_fit: f64,
    /// `max ‖P^{±1}‖` over the conjugators.
    pub c_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub target: SymplecticMatrix,
    pub factors: Vec<RotationFactor>,
    pub residual: f64,
    pub delta: f64,
    pub diagnostics: Diagnostics,
}

impl Factorization {
    pub fn product(&self) -> DMatrix<f64> {
        let d = self.target.d();
        self.factors
            .iter()
            .fold(DMatrix::identity(2 * d, 2 * d), |acc, f| acc * f.matrix())
    }

    pub fn max_rotation_distance(&self) -> f64 {
        self.factors
            .iter()
            .map(RotationFactor::rotation_distance)
            .fold(0.0, f64::max)
    }
}

fn check_diag_symplectic(l: &DVector<f64>) -> Result<usize> {
    if !l.len().is_multiple_of(2) || l.is_empty() {
        return Err(dim_mismatch("diagonal of even length", l.len()));
    }
    Ok(l.len() / 2)
}

fn min_gap(values: &[f64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            gap = gap.min((values[i] - values[j]).abs());
        }
    }
    gap
}

fn real_spectrum(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let eig = a.complex_eigenvalues();
    let mut out = Vec::with_capacity(eig.len());
    for z in eig.iter() {
        if z.im.abs() > IMAG_TOL * z.re.abs().max(1.0) {
            return Err(FranksError::ComplexSpectrum { re: z.re, im: z.im });
        }
        out.push(z.re);
    }
    Ok(out)
}

/// Assigns each target to its nearest computed eigenvalue; fails unless the
/// assignment is a bijection.
fn assign(eigs: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    let mut used = vec![false; eigs.len()];
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        let (idx, _) = eigs
            .iter()
            .enumerate()
            .map(|(i, e)| (i, (e - t).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty spectrum");
        if used[idx] {
            return Err(FranksError::GapTooSmall {
                gap: min_gap(eigs),
            });
        }
        used[idx] = true;
        out.push(eigs[idx]);
    }
    Ok(out)
}

/// Unit null vector of `A − μI` with positive `i`-th component.
fn eigenvector(a: &DMatrix<f64>, mu: f64, i: usize) -> DVector<f64> {
    let n = a.nrows();
    let shifted = a - DMatrix::identity(n, n) * mu;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty");
    let mut v: DVector<f64> = v_t.row(k).transpose();
    v /= v.norm();
    if v[i] < 0.0 {
        v = -v;
    }
    v
}

/// Eigenpair of `A` continuing the `i`-th diagonal entry of `L` (0-based).
pub fn perturbed_eigenpair(
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    i: usize,
) -> Result<(f64, DVector<f64>)> {
    if !a.is_square() || a.nrows() != l.len() {
        return Err(dim_mismatch(
            format!("{0}x{0}", l.len()),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if i >= l.len() {
        return Err(FranksError::IndexOutOfRange {
            index: i + 1,
            max: l.len(),
        });
    }
    let targets: Vec<f64> = l.iter().copied().collect();
    if min_gap(&targets) == 0.0 {
        return Err(FranksError::GapTooSmall { gap: 0.0 });
    }
    let assigned = assign(&real_spectrum(a)?, &targets)?;
    let mu = assigned[i];
    Ok((mu, eigenvector(a, mu, i)))
}

/// Result of [`symplectic_diagonalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticDiagonalization {
    /// `λ̃₁..λ̃_d`; the full diagonal is `(λ̃, λ̃⁻¹)`.
    pub eigenvalues: Vec<f64>,
    pub s: SymplecticMatrix,
    /// `‖A − L‖` exceeded a quarter of the gap of `L`.
    pub guard_binding: bool,
}

/// `A = S·diag(λ̃, λ̃⁻¹)·S⁻¹` with `S` symplectic, for `A` near the diagonal
/// symplectic matrix `diag(l)`.
pub fn symplectic_diagonalize(
    a: &SymplecticMatrix,
    l: &DVector<f64>,
) -> Result<SymplecticDiagonalization> {
    let d = check_diag_symplectic(l)?;
    if a.d() != d {
        return Err(dim_mismatch(format!("d = {d}"), format!("d = {}", a.d())));
    }
    for j in 0..d {
        if (l[j] * l[d + j] - 1.0).abs() > 1e-12 {
            return Err(FranksError::InvalidParameter(
                "reference diagonal is not symplectic".into(),
            ));
        }
    }
    let targets: Vec<f64> = l.iter().copied().collect();
    let gap = min_gap(&targets);
    if gap == 0.0 {
        return Err(FranksError::GapTooSmall { gap });
    }
    let m = a.matrix();
    let guard_binding = matrix_norm(&(m - DMatrix::from_diagonal(l))) >= gap / 4.0;
    let assigned = assign(&real_spectrum(m)?, &targets)?;

    let jt = standard_j(d).transpose();
    let om = |u: &DVector<f64>, w: &DVector<f64>| (u.transpose() * &jt * w)[(0, 0)];
    let mut cols = DMatrix::zeros(2 * d, 2 * d);
    for j in 0..d {
        let mut v = eigenvector(m, assigned[j], j);
        let mut w = eigenvector(m, assigned[d + j], d + j);
        let omega = om(&v, &w);
        if omega.abs() < OMEGA_FLOOR {
            return Err(FranksError::NondegeneracyFailure {
                pair: j + 1,
                omega,
            });
        }
        v /= omega;
        // Exact eigenvectors of different pairs are ω-orthogonal; rounding
        // leaves ~ε/gap, which symplectic Gram–Schmidt removes.
        for k in 0..j {
            let (e, f) = (cols.column(k).into_owned(), cols.column(d + k).into_owned());
            v = &v - &e * om(&v, &f) + &f * om(&v, &e);
            w = &w - &e * om(&w, &f) + &f * om(&w, &e);
        }
        let omega = om(&v, &w);
        cols.set_column(j, &(v / omega));
        cols.set_column(d + j, &w);
    }
    let s = SymplecticMatrix::with_tol(cols, 1e-9)?;
    Ok(SymplecticDiagonalization {
        eigenvalues: assigned[..d].to_vec(),
        s,
        guard_binding,
    })
}

/// Planar split `R_{-θ}·diag(η, η⁻¹) = P·R_{-ξ}·P⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarFactor {
    pub theta: f64,
    pub xi: f64,
    /// Row-major `2 × 2`, determinant 1.
    pub p: DMatrix<f64>,
    pub inert: bool,
}

/// Splits `diag(η, η⁻¹)` into two rotations. `θ` takes the extreme admissible
/// value `1 − cos θ = min(|η − 1|, 1)`.
pub fn planar_factor(eta: f64) -> Result<PlanarFactor> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(FranksError::DomainError(format!(
            "planar factor needs eta > 0, got {eta}"
        )));
    }
    if (eta - 1.0).abs() < INERT_TOL {
        return Ok(PlanarFactor {
            theta: 0.0,
            xi: 0.0,
            p: DMatrix::identity(2, 2),
            inert: true,
        });
    }
    // 1 - cos θ and 1 - cos ξ are formed directly to avoid cancellation.
    let mut one_minus_ct = (eta - 1.0).abs().min(1.0);
    let lower = (eta - 1.0).powi(2) / (eta * eta + 1.0);
    if !(lower < one_minus_ct) {
        one_minus_ct = 0.5 * (lower + (eta - 1.0).abs().min(1.0));
    }
    let ct = 1.0 - one_minus_ct;
    let bound = 2.0 / (eta + 1.0 / eta);
    if ct.abs() >= bound {
        return Err(FranksError::InfeasibleAngle {
            cos_theta: ct,
            bound,
        });
    }
    let theta = 2.0 * (0.5 * one_minus_ct).sqrt().asin();
    let one_minus_cx = one_minus_ct - ct * (eta - 1.0).powi(2) / (2.0 * eta);
    let xi = 2.0 * (0.5 * one_minus_cx).sqrt().asin();
    let (st, sx) = (theta.sin(), xi.sin());
    let cx_minus_eta_ct = ct * (1.0 / eta - eta) / 2.0;
    let scale = 1.0 / (st * sx / eta).sqrt();
    let p = DMatrix::from_row_slice(
        2,
        2,
        &[st / eta * scale, 0.0, cx_minus_eta_ct * scale, sx * scale],
    );
    Ok(PlanarFactor {
        theta,
        xi,
        p,
        inert: false,
    })
}

/// Splits `conj·π_j(diag(η, η⁻¹))·conj⁻¹` into two rotation factors.
fn push_diagonal_split(
    out: &mut Vec<RotationFactor>,
    conj: &SymplecticMatrix,
    j: usize,
    eta: f64,
) -> Result<()> {
    let d = conj.d();
    let pf = planar_factor(eta)?;
    out.push(RotationFactor {
        k: j,
        angle: pf.theta,
        theta: pf.theta,
        conjugator: conj.clone(),
        inert: pf.inert,
    });
    let inner = SymplecticMatrix::with_tol(embed_plane_block(&pf.p, j, d, 2 * d), 1e-9)?;
    out.push(RotationFactor {
        k: j,
        angle: -pf.xi,
        theta: pf.theta,
        conjugator: conj.mul(&inner),
        inert: pf.inert,
    });
    Ok(())
}

fn attempt(a: &SymplecticMatrix, delta: f64, log_lambda: &[f64]) -> Result<Factorization> {
    let d = a.d();
    let lambda: Vec<f64> = log_lambda.iter().map(|s| s.exp()).collect();
    let mut l1_inv = DVector::zeros(2 * d);
    let mut l1 = DVector::zeros(2 * d);
    for j in 0..d {
        l1[j] = lambda[j];
        l1[d + j] = 1.0 / lambda[j];
        l1_inv[j] = 1.0 / lambda[j];
        l1_inv[d + j] = lambda[j];
    }
    let b = DMatrix::from_diagonal(&l1_inv) * a.matrix();
    let b = SymplecticMatrix::with_tol(b, 1e-8)?;
    let diag = symplectic_diagonalize(&b, &l1_inv)?;

    let identity = SymplecticMatrix::identity(d);
    let mut factors = Vec::with_capacity(4 * d);
    for j in 0..d {
        push_diagonal_split(&mut factors, &identity, j + 1, lambda[j])?;
    }
    for j in 0..d {
        push_diagonal_split(&mut factors, &diag.s, j + 1, diag.eigenvalues[j])?;
    }

    let mut fact = Factorization {
        target: a.clone(),
        factors,
        residual: 0.0,
        delta,
        diagnostics: Diagnostics {
            lambda,
            lambda_tilde: diag.eigenvalues.clone(),
            min_gap: min_gap(&l1_inv.iter().copied().collect::<Vec<_>>()),
            guard_binding: diag.guard_binding,
            attempts: 0,
            c_fit: 0.0,
            c_p: 0.0,
        },
    };
    fact.residual = matrix_norm(&(fact.product() - a.matrix()));
    fact.diagnostics.c_fit = fact.max_rotation_distance() / delta.sqrt();
    fact.diagnostics.c_p = fact
        .factors
        .iter()
        .flat_map(|f| {
            [
                matrix_norm(f.conjugator.matrix()),
                matrix_norm(f.conjugator.inverse().matrix()),
            ]
        })
        .fold(0.0, f64::max);
    Ok(fact)
}

/// A target that already is a single `π_k(R_α)` factors as itself, at any
/// angle.
fn as_plane_rotation(a: &SymplecticMatrix) -> Option<Factorization> {
    let d = a.d();
    let m = a.matrix();
    let moved: Vec<usize> = (1..=d)
        .filter(|&k| m[(k - 1, k - 1)] != 1.0 || m[(d + k - 1, k - 1)] != 0.0)
        .collect();
    let k = match moved.as_slice() {
        [k] => *k,
        _ => return None,
    };
    let angle = m[(d + k - 1, k - 1)].atan2(m[(k - 1, k - 1)]);
    let r = plane_rotation(angle, k, d);
    let residual = matrix_norm(&(&r - m));
    if residual > 4.0 * f64::EPSILON {
        return None;
    }
    let factor = RotationFactor {
        k,
        angle,
        theta: 0.0,
        conjugator: SymplecticMatrix::identity(d),
        inert: false,
    };
    let delta = a.distance_to_identity();
    let c_fit = factor.rotation_distance() / delta.sqrt();
    Some(Factorization {
        target: a.clone(),
        factors: vec![factor],
        residual,
        delta,
        diagnostics: Diagnostics {
            attempts: 1,
            c_fit,
            c_p: 1.0,
            ..Diagnostics::default()
        },
    })
}

/// Options for [`decompose_near_identity_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeOptions {
    pub regime: f64,
    pub max_retries: usize,
    /// Relative reconstruction tolerance; a larger residual triggers a retry.
    pub residual_tol: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            regime: DEFAULT_REGIME,
            max_retries: MAX_RETRIES,
            residual_tol: 1e-9,
        }
    }
}

pub fn decompose_near_identity(a: &SymplecticMatrix) -> Result<Factorization> {
    decompose_near_identity_with(a, &DecomposeOptions::default())
}

/// The first attempt spaces `log λⱼ = (j − ½)·3δ`; retries draw a random
/// spacing factor in `[3, 6]`, shuffle the order and flip signs, from a fixed
/// seed so that results are reproducible.
pub fn decompose_near_identity_with(
    a: &SymplecticMatrix,
    opts: &DecomposeOptions,
) -> Result<Factorization> {
    let d = a.d();
    let delta = a.distance_to_identity();
    if delta == 0.0 {
        return Ok(Factorization {
            target: a.clone(),
            factors: Vec::new(),
            residual: 0.0,
            delta,
            diagnostics: Diagnostics::default(),
        });
    }
    if let Some(single) = as_plane_rotation(a) {
        return Ok(single);
    }
    if !(delta < opts.regime) {
        return Err(FranksError::OutOfRegime {
            delta,
            regime: opts.regime,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f4c7);
    let mut last = String::new();
    for attempt_no in 0..=opts.max_retries {
        let mut sigma: Vec<f64> = (0..d).map(|j| (j as f64 + 0.5) * delta).collect();
        let spacing = if attempt_no == 0 {
            BASE_SPACING
        } else {
            sigma.shuffle(&mut rng);
            for s in sigma.iter_mut() {
                if rng.random_bool(0.5) {
                    *s = -*s;
                }
            }
            rng.random_range(BASE_SPACING..2.0 * BASE_SPACING)
        };
        for s in sigma.iter_mut() {
            *s *= spacing;
        }
        match attempt(a, delta, &sigma) {
            Ok(mut f) => {
                f.diagnostics.attempts = attempt_no + 1;
                let scale = matrix_norm(a.matrix()).max(1.0);
                if f.residual <= opts.residual_tol * scale {
                    return Ok(f);
                }
                last = format!("residual {:.3e}", f.residual);
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(FranksError::RetriesExhausted {
        attempts: opts.max_retries + 1,
        last,
    })
}
