//! Norm conventions.
//!
//! Matrices use the maximum column absolute sum. Sampled function norms
//! follow the component-sum convention: the C⁰ norm of a vector-valued map is
//! the sum over components of the sup of the absolute value, and higher norms
//! take the max over the C⁰ norms of all partial derivatives up to the order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

/// Induced ℓ¹ operator norm: the maximum column absolute sum.
pub fn matrix_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// C⁰ norm of a vector-valued map sampled at `points`.
pub fn c0_vector<F>(f: F, points: &[DVector<f64>]) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut sup: Vec<f64> = Vec::new();
    for p in points {
        let v = f(p);
        if sup.is_empty() {
            sup = vec![0.0; v.len()];
        }
        for (s, x) in sup.iter_mut().zip(v.iter()) {
            *s = s.max(x.abs());
        }
    }
    sup.iter().sum()
}

/// C¹ norm of a vector-valued map from its values and Jacobians.
pub fn c1_vector<F, G>(f: F, jac: G, points: &[DVector<f64>]) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let c0 = c0_vector(&f, points);
    let jacs: Vec<DMatrix<f64>> = points.iter().map(jac).collect();
    let cols = jacs.first().map_or(0, |j| j.ncols());
    let mut best = c0;
    for j in 0..cols {
        let rows = jacs[0].nrows();
        let partial: f64 = (0..rows)
            .map(|i| jacs.iter().map(|m| m[(i, j)].abs()).fold(0.0, f64::max))
            .sum();
        best = best.max(partial);
    }
    best
}

/// C² norm of a scalar field from value, gradient and Hessian samples.
pub fn c2_scalar<V, G, H>(value: V, grad: G, hess: H, points: &[DVector<f64>]) -> f64
where
    V: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
    H: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut best = 0.0f64;
    for p in points {
        best = best.max(value(p).abs());
        best = best.max(grad(p).amax());
        best = best.max(hess(p).amax());
    }
    best
}

/// Regular grid on the cube `[-r, r]^dim` centred at `center`.
pub fn cube_grid(center: &DVector<f64>, r: f64, per_axis: usize) -> Vec<DVector<f64>> {
    let dim = center.len();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = center.clone();
        for k in 0..dim {
            let i = idx % per_axis;
            idx /= per_axis;
            p[k] += -r + 2.0 * r * i as f64 / (per_axis - 1) as f64;
        }
        out.push(p);
    }
    out
}

/// Uniform samples in the Euclidean ball of radius `r` about `center`.
pub fn ball_samples<R: Rng + ?Sized>(
    center: &DVector<f64>,
    r: f64,
    count: usize,
    rng: &mut R,
) -> Vec<DVector<f64>> {
    let dim = center.len();
    (0..count)
        .map(|_| {
            let dir: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
            let norm = dir.norm().max(f64::MIN_POSITIVE);
            let radius = r * rng.random::<f64>().powf(1.0 / dim as f64);
            center + dir * (radius / norm)
        })
        .collect()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_has_unit_norm() {
        assert_eq!(matrix_norm(&DMatrix::identity(5, 5)), 1.0);
        assert_eq!(matrix_norm(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn column_sum_norm() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -4.0, 2.0, 1.0]);
        assert_eq!(matrix_norm(&m), 5.0);
    }

    #[test]
    fn sampled_norms_of_linear_map() {
        let pts = cube_grid(&DVector::zeros(2), 1.0, 5);
        assert_eq!(pts.len(), 25);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -3.0]);
        let f = |p: &DVector<f64>| &a * p;
        assert!((c0_vector(f, &pts) - 5.0).abs() < 1e-15);
        assert!((c1_vector(f, |_| a.clone(), &pts) - 5.0).abs() < 1e-15);
        assert_eq!(c0_vector(|p| p * 0.0, &pts), 0.0);
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        for p in ball_samples(&c, 0.5, 200, &mut rng) {
            assert!((p - &c).norm() <= 0.5);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1e-1, 1e-2, 1e-3];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.sqrt()).collect();
        assert!((loglog_slope(&x, &y) - 0.5).abs() < 1e-12);
    }
}
