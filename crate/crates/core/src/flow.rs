//! Hamiltonian vector fields, fixed-step RK4 flows, closed-form flows of the
//! rotation and transit generators, flow Jacobians and Poincaré maps between
//! hyperplanes `x₁ = const`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bump::{ell, ell_d1, ell_d2, ell_integral, PLATEAU, SUPPORT};
use crate::error::{dim_mismatch, FranksError, Result};
use crate::hamiltonian::{join_enlarged, rho, rho_i, split_enlarged, Hamiltonian};
use crate::poisson::{phi_slot, PoissonSpace};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// `X_H(p) = Ĵ∇H(p)`; the `z` components are zero.
pub fn hamiltonian_vector_field(h: &dyn Hamiltonian, p: &DVector<f64>) -> Result<DVector<f64>> {
    let space = h.space();
    if p.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), p.len()));
    }
    Ok(structure_apply(&space, &h.gradient(p)))
}

/// `Ĵ·v` without forming `Ĵ`.
pub fn structure_apply(space: &PoissonSpace, v: &DVector<f64>) -> DVector<f64> {
    let d = space.d();
    let mut out = DVector::zeros(v.len());
    for k in 0..d {
        out[k] = -v[d + k];
        out[d + k] = v[k];
    }
    out
}

fn field(h: &dyn Hamiltonian, space: &PoissonSpace, p: &DVector<f64>) -> DVector<f64> {
    structure_apply(space, &h.gradient(p))
}

/// One classical RK4 step of length `dt`.
pub fn rk4_step(h: &dyn Hamiltonian, p: &DVector<f64>, dt: f64) -> DVector<f64> {
    let space = h.space();
    let k1 = field(h, &space, p);
    let k2 = field(h, &space, &(p + &k1 * (0.5 * dt)));
    let k3 = field(h, &space, &(p + &k2 * (0.5 * dt)));
    let k4 = field(h, &space, &(p + &k3 * dt));
    p + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub endpoint: Vec<f64>,
    pub time: f64,
    pub steps: usize,
    /// `max |H(pₖ) − H(p₀)|` over the step points.
    pub max_drift: f64,
}

impl FlowResult {
    pub fn endpoint(&self) -> DVector<f64> {
        DVector::from_vec(self.endpoint.clone())
    }
}

fn step_count(t: f64, step: f64) -> usize {
    ((t.abs() / step).ceil() as usize).max(1)
}

/// Integrates `X_H` for time `t` with `⌈|t|/step⌉` equal steps, calling
/// `observe(t, p)` at the start and after every step.
pub fn integrate_flow_with<F>(
    h: &dyn Hamiltonian,
    x0: &DVector<f64>,
    t: f64,
    step: f64,
    mut observe: F,
) -> Result<FlowResult>
where
    F: FnMut(f64, &DVector<f64>),
{
    if !(step > 0.0) || !t.is_finite() {
        return Err(FranksError::InvalidParameter(format!(
            "need step > 0 and finite t, got step {step}, t {t}"
        )));
    }
    if x0.len() != h.space().dim() {
        return Err(dim_mismatch(h.space().dim(), x0.len()));
    }
    let n = if t == 0.0 { 0 } else { step_count(t, step) };
    let dt = if n == 0 { 0.0 } else { t / n as f64 };
    let h0 = h.value(x0);
    let mut p = x0.clone();
    let mut drift = 0.0f64;
    observe(0.0, &p);
    for k in 0..n {
        p = rk4_step(h, &p, dt);
        let tk = (k + 1) as f64 * dt;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(FranksError::Diverged { t: tk });
        }
        drift = drift.max((h.value(&p) - h0).abs());
        observe(tk, &p);
    }
    Ok(FlowResult {
        endpoint: p.iter().copied().collect(),
        time: t,
        steps: n,
        max_drift: drift,
    })
}

pub fn integrate_flow(h: &dyn Hamiltonian, x0: &DVector<f64>, t: f64, step: f64) -> Result<FlowResult> {
    integrate_flow_with(h, x0, t, step, |_, _| {})
}

/// Endpoint of [`integrate_flow`] without drift bookkeeping.
pub fn flow_point(h: &dyn Hamiltonian, x0: &DVector<f64>, t: f64, step: f64) -> Result<DVector<f64>> {
    if t == 0.0 {
        return Ok(x0.clone());
    }
    let n = step_count(t, step);
    let dt = t / n as f64;
    let mut p = x0.clone();
    for k in 0..n {
        p = rk4_step(h, &p, dt);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(FranksError::Diverged { t: (k + 1) as f64 * dt });
        }
    }
    Ok(p)
}

fn rotate_plane(p: &mut DVector<f64>, ix: usize, iy: usize, angle: f64) {
    if angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    let (x, y) = (p[ix], p[iy]);
    p[ix] = c * x - s * y;
    p[iy] = s * x + c * y;
}

/// Exact time-`t` flow of `Kᵢ = αℓ(ρ)ρᵢ`: plane `i` turns by `tαϑᵢ`, every
/// other plane by `tαϑⱼ`, with `ϑᵢ = ℓ′(ρ)ρᵢ + ℓ(ρ)`, `ϑⱼ = ℓ′(ρ)ρᵢ`.
pub fn closed_form_k_flow(
    alpha: f64,
    i: usize,
    t: f64,
    p: &DVector<f64>,
    space: &PoissonSpace,
) -> Result<DVector<f64>> {
    space.check_plane(i)?;
    if p.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), p.len()));
    }
    let r = rho(p);
    let mut out = p.clone();
    if r >= SUPPORT {
        return Ok(out);
    }
    let d = space.d();
    let ri = rho_i(p, i, d);
    let (l, l1) = (ell(r), ell_d1(r));
    for j in 1..=d {
        let theta = if j == i { l1 * ri + l } else { l1 * ri };
        rotate_plane(&mut out, j - 1, d + j - 1, t * alpha * theta);
    }
    Ok(out)
}

/// Jacobian of [`closed_form_k_flow`] with respect to `p`.
///
/// Plane `j` turns by `τⱼ = tαϑⱼ(p)`, so its rows are
/// `R(τⱼ)Eⱼ + R(τⱼ)J₂(xⱼ, yⱼ)ᵀ ⊗ ∇τⱼ` with `Eⱼ` the plane projector.
pub fn closed_form_k_jacobian(
    alpha: f64,
    i: usize,
    t: f64,
    p: &DVector<f64>,
    space: &PoissonSpace,
) -> Result<DMatrix<f64>> {
    space.check_plane(i)?;
    if p.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), p.len()));
    }
    let dim = p.len();
    let mut jac = DMatrix::identity(dim, dim);
    let r = rho(p);
    if r >= SUPPORT {
        return Ok(jac);
    }
    let d = space.d();
    let ri = rho_i(p, i, d);
    let (l, l1, l2) = (ell(r), ell_d1(r), ell_d2(r));
    let (xi, yi) = (i - 1, d + i - 1);
    for j in 1..=d {
        let (ix, iy) = (j - 1, d + j - 1);
        let own = if j == i { l1 } else { 0.0 };
        let theta = if j == i { l1 * ri + l } else { l1 * ri };
        let tau = t * alpha * theta;
        // ∇τⱼ = tα[(ℓ''ρᵢ + [j = i]ℓ')∇ρ + ℓ'∇ρᵢ]
        let mut grad = p * (t * alpha * (l2 * ri + own));
        grad[xi] += t * alpha * l1 * p[xi];
        grad[yi] += t * alpha * l1 * p[yi];
        let (s, c) = tau.sin_cos();
        let (x, y) = (p[ix], p[iy]);
        // R(τ)(−y, x)
        let (dx, dy) = (-c * y - s * x, -s * y + c * x);
        for col in 0..dim {
            jac[(ix, col)] = dx * grad[col];
            jac[(iy, col)] = dy * grad[col];
        }
        jac[(ix, ix)] += c;
        jac[(ix, iy)] -= s;
        jac[(iy, ix)] += s;
        jac[(iy, iy)] += c;
    }
    Ok(jac)
}

/// Exact flow of `H₀ + H̃` (with `H̃` the transit field for `(α, i)`) on the
/// tube where the closed form holds: `ρ(x̂, ŷ, z) ≤ 1/4` and `y₁` stays on the
/// plateau of `ℓ`. `space` is the enlarged space.
pub fn closed_form_transit_flow(
    alpha: f64,
    i: usize,
    t: f64,
    p: &DVector<f64>,
    space: &PoissonSpace,
) -> Result<DVector<f64>> {
    if space.d() < 2 {
        return Err(FranksError::InvalidParameter(
            "transit flows live on an enlarged space with d >= 2".into(),
        ));
    }
    let d = space.d() - 1;
    if i == 0 || i > d {
        return Err(FranksError::IndexOutOfRange { index: i, max: d });
    }
    if p.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), p.len()));
    }
    let (x1, y1, mut hat) = split_enlarged(p, d);
    let r = rho(&hat);
    if r > PLATEAU {
        return Err(FranksError::OutOfTube(format!(
            "rho of transverse part {r:.3e} exceeds 1/4"
        )));
    }
    let ri = rho_i(&hat, i, d);
    if y1.abs() + 2.0 * alpha.abs() * ri > PLATEAU {
        return Err(FranksError::OutOfTube(format!(
            "y1 = {y1:.3e} may leave the plateau"
        )));
    }
    let (r0, r1) = (2.0 * x1 - 1.0, 2.0 * (x1 + t) - 1.0);
    let theta = alpha * (ell_integral(r1) - ell_integral(r0));
    rotate_plane(&mut hat, i - 1, d + i - 1, theta);
    let y1t = y1 + 2.0 * alpha * ri * (ell(r1) - ell(r0));
    Ok(join_enlarged(x1 + t, y1t, &hat, d))
}

/// Central-difference Jacobian of `p ↦ φ_H^t(p)` at `x0`.
pub fn flow_jacobian(
    h: &dyn Hamiltonian,
    x0: &DVector<f64>,
    t: f64,
    step: f64,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    if !(fd_step > 0.0) {
        return Err(FranksError::InvalidParameter("fd_step must be positive".into()));
    }
    let n = x0.len();
    let e = fd_step * x0.norm().max(1.0);
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut a = x0.clone();
        let mut b = x0.clone();
        a[j] += e;
        b[j] -= e;
        let col = (flow_point(h, &a, t, step)? - flow_point(h, &b, t, step)?) / (2.0 * e);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Generic central-difference Jacobian.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, e: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut a = x.clone();
        let mut b = x.clone();
        a[j] += e;
        b[j] -= e;
        cols.push((f(&a)? - f(&b)?) / (2.0 * e));
    }
    Ok(DMatrix::from_columns(&cols))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoincareOptions {
    pub step: f64,
    pub t_max: f64,
    pub fd_step: f64,
    pub bisections: usize,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            t_max: 10.0,
            fd_step: DEFAULT_FD_STEP,
            bisections: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareResult {
    pub hit: DVector<f64>,
    pub tau: f64,
    /// Derivative in the transversal coordinates `(x₂..x_d, y₂..y_d)`.
    pub jacobian: DMatrix<f64>,
    pub section_residual: f64,
}

/// First time `t ≥ 0` at which `x₁(t) = c`, and the point reached.
pub fn first_hit(
    h: &dyn Hamiltonian,
    x0: &DVector<f64>,
    c: f64,
    opts: &PoincareOptions,
) -> Result<(DVector<f64>, f64)> {
    let s0 = x0[0] - c;
    if s0 == 0.0 {
        return Ok((x0.clone(), 0.0));
    }
    let dt = opts.step;
    let max_steps = (opts.t_max / dt).ceil() as usize;
    let mut p = x0.clone();
    for k in 0..max_steps {
        let next = rk4_step(h, &p, dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(FranksError::Diverged { t: (k + 1) as f64 * dt });
        }
        if (next[0] - c) * s0 <= 0.0 {
            // Dense re-integration from the last state before the crossing.
            let (mut lo, mut hi) = (0.0, dt);
            let mut best = (next.clone(), dt);
            for _ in 0..opts.bisections {
                let mid = 0.5 * (lo + hi);
                let q = rk4_step(h, &p, mid);
                if (q[0] - c) * s0 > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (q[0] - c).abs() <= (best.0[0] - c).abs() {
                    best = (q, mid);
                }
            }
            let lo_pt = rk4_step(h, &p, lo);
            if (lo_pt[0] - c).abs() < (best.0[0] - c).abs() {
                best = (lo_pt, lo);
            }
            return Ok((best.0, k as f64 * dt + best.1));
        }
        p = next;
    }
    Err(FranksError::NoReturn {
        section: c,
        t_max: opts.t_max,
    })
}

/// Indices of the transversal coordinates `x₂..x_d, y₂..y_d`.
pub fn transversal_indices(space: &PoissonSpace) -> Vec<usize> {
    let d = space.d() - 1;
    (0..2 * d).map(|r| phi_slot(r, d)).collect()
}

/// Return map from `{x₁ = x0[0]}` to `{x₁ = c}` and its transversal derivative.
pub fn poincare_map(
    h: &dyn Hamiltonian,
    x0: &DVector<f64>,
    c: f64,
    opts: &PoincareOptions,
) -> Result<PoincareResult> {
    let space = h.space();
    if x0.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), x0.len()));
    }
    if space.d() < 2 {
        return Err(FranksError::InvalidParameter(
            "Poincare maps need d >= 2 in the ambient space".into(),
        ));
    }
    let (hit, tau) = first_hit(h, x0, c, opts)?;
    let idx = transversal_indices(&space);
    let e = opts.fd_step * x0.norm().max(1.0);
    let mut jac = DMatrix::zeros(idx.len(), idx.len());
    for (col, &j) in idx.iter().enumerate() {
        let mut a = x0.clone();
        let mut b = x0.clone();
        a[j] += e;
        b[j] -= e;
        let (ha, _) = first_hit(h, &a, c, opts)?;
        let (hb, _) = first_hit(h, &b, c, opts)?;
        for (row, &i) in idx.iter().enumerate() {
            jac[(row, col)] = (ha[i] - hb[i]) / (2.0 * e);
        }
    }
    Ok(PoincareResult {
        section_residual: (hit[0] - c).abs(),
        hit,
        tau,
        jacobian: jac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{make_chained_hamiltonian, make_rotation_hamiltonian, ChainFactor, Drift};
    use crate::poisson::{plane_rotation, SymplecticMatrix};

    fn pt(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn drift_field_is_unit_translation() {
        let h = Drift::new(PoissonSpace::new(2, 1).unwrap());
        let v = hamiltonian_vector_field(&h, &pt(&[0.3, -1.0, 2.0, 0.5, 7.0])).unwrap();
        assert_eq!(v, pt(&[1.0, 0.0, 0.0, 0.0, 0.0]));
        let r = integrate_flow(&h, &DVector::zeros(5), 1.0, 1e-2).unwrap();
        assert!((r.endpoint() - pt(&[1.0, 0.0, 0.0, 0.0, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn k_field_on_plateau_is_rotation() {
        let k = make_rotation_hamiltonian(0.4, 1, 2, 1).unwrap();
        let p = pt(&[0.1, 0.2, -0.05, 0.1, 0.3]);
        let v = hamiltonian_vector_field(&k, &p).unwrap();
        assert!((v - pt(&[0.4 * 0.05, 0.0, 0.4 * 0.1, 0.0, 0.0])).amax() < 1e-16);
        let far = pt(&[1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(hamiltonian_vector_field(&k, &far).unwrap(), DVector::zeros(5));
    }

    #[test]
    fn closed_form_k_jacobian_matches_differences() {
        let space = PoissonSpace::new(2, 1).unwrap();
        // Plateau, ramp and exterior points.
        for p in [
            pt(&[0.1, 0.2, -0.05, 0.1, 0.3]),
            pt(&[0.5, -0.4, 0.3, 0.6, 0.2]),
            pt(&[0.7, 0.1, -0.6, 0.2, -0.3]),
            pt(&[1.0, 1.0, 1.0, 0.0, 0.0]),
        ] {
            for i in 1..=2 {
                let exact = closed_form_k_jacobian(0.7, i, 1.3, &p, &space).unwrap();
                let fd = fd_jacobian(|q| closed_form_k_flow(0.7, i, 1.3, q, &space), &p, 1e-6).unwrap();
                assert!((&exact - fd).amax() < 1e-8, "{exact}");
                assert!(crate::poisson::poisson_defect(&exact, &space).unwrap() < 1e-13);
            }
        }
    }

    #[test]
    fn closed_form_k_examples() {
        let space = PoissonSpace::new(2, 0).unwrap();
        let p = pt(&[0.1, 0.0, 0.0, 0.0]);
        assert_eq!(closed_form_k_flow(0.3, 1, 0.0, &p, &space).unwrap(), p);
        let q = closed_form_k_flow(std::f64::consts::FRAC_PI_2, 1, 1.0, &p, &space).unwrap();
        assert!((q - pt(&[0.0, 0.0, 0.1, 0.0])).amax() < 1e-16);
        let p = pt(&[0.5, -0.3, 0.4, 0.6]);
        let q = closed_form_k_flow(0.9, 2, 1.3, &p, &space).unwrap();
        assert!((rho(&q) - rho(&p)).abs() < 1e-15);
        assert!((rho_i(&q, 2, 2) - rho_i(&p, 2, 2)).abs() < 1e-15);
    }

    #[test]
    fn integrated_k_flow_matches_closed_form() {
        let k = make_rotation_hamiltonian(0.7, 1, 2, 1).unwrap();
        let space = k.space();
        let p = pt(&[0.4, -0.3, 0.2, 0.5, 0.3]);
        let exact = closed_form_k_flow(0.7, 1, 1.0, &p, &space).unwrap();
        let num = integrate_flow(&k, &p, 1.0, 1e-3).unwrap();
        assert!((num.endpoint() - exact).amax() < 1e-10);
        let far = pt(&[2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(integrate_flow(&k, &far, 1.0, 1e-2).unwrap().endpoint(), far);
    }

    #[test]
    fn transit_closed_form_examples() {
        let space = PoissonSpace::new(2, 0).unwrap();
        let origin = DVector::zeros(4);
        let q = closed_form_transit_flow(0.3, 1, 0.7, &origin, &space).unwrap();
        assert_eq!(q, pt(&[0.7, 0.0, 0.0, 0.0]));
        let p = pt(&[0.0, 0.1, 0.0, 0.05]);
        let q = closed_form_transit_flow(0.3, 1, 1.0, &p, &space).unwrap();
        let rotated = plane_rotation(0.3, 1, 1) * pt(&[0.1, 0.05]);
        assert!((q - pt(&[1.0, rotated[0], 0.0, rotated[1]])).amax() < 1e-15);
        let wide = pt(&[0.0, 0.9, 0.0, 0.0]);
        assert!(matches!(
            closed_form_transit_flow(0.3, 1, 1.0, &wide, &space),
            Err(FranksError::OutOfTube(_))
        ));
    }

    #[test]
    fn transit_flow_matches_integration() {
        let h = make_chained_hamiltonian(
            &[ChainFactor { conjugator: SymplecticMatrix::identity(2), i: 2, alpha: 0.5 }],
            2,
            1,
        )
        .unwrap();
        let space = h.space();
        let p = pt(&[0.0, 0.2, -0.1, 0.02, 0.1, 0.3, 0.1]);
        let exact = closed_form_transit_flow(0.5, 2, 1.0, &p, &space).unwrap();
        let num = integrate_flow(&h, &p, 1.0, 1e-3).unwrap();
        assert!((num.endpoint() - &exact).amax() < 1e-8);
        // |y₁(t)| ≤ r²|α| along the way.
        let r2 = (0.2f64.powi(2) + 0.1f64.powi(2) + 0.3f64.powi(2) + 0.1f64.powi(2) + 0.1f64.powi(2)).min(1.0);
        integrate_flow_with(&h, &p, 1.0, 1e-2, |_, q| {
            assert!((q[3] - 0.02).abs() <= r2 * 0.5 + 1e-12);
        })
        .unwrap();
    }

    #[test]
    fn jacobian_of_drift_is_identity() {
        let h = Drift::new(PoissonSpace::new(1, 1).unwrap());
        let j = flow_jacobian(&h, &DVector::zeros(3), 1.0, 1e-2, 1e-5).unwrap();
        assert!((j - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn poincare_of_drift() {
        let h = Drift::new(PoissonSpace::new(3, 1).unwrap());
        let x0 = pt(&[0.0, 0.1, -0.2, 0.0, 0.05, 0.3, 0.7]);
        let res = poincare_map(&h, &x0, 1.0, &PoincareOptions::default()).unwrap();
        assert!((res.tau - 1.0).abs() < 1e-12);
        assert!(res.section_residual <= 1e-12);
        let mut expect = x0.clone();
        expect[0] = 1.0;
        assert!((res.hit - expect).amax() < 1e-12);
        assert!((res.jacobian - DMatrix::identity(4, 4)).amax() < 1e-9);
    }

    #[test]
    fn no_return_is_reported() {
        let h = Drift::new(PoissonSpace::new(2, 0).unwrap());
        let x0 = DVector::zeros(4);
        assert!(matches!(
            first_hit(&h, &x0, -1.0, &PoincareOptions::default()),
            Err(FranksError::NoReturn { .. })
        ));
    }
}
