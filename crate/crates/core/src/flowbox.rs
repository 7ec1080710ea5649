//! Poisson flowbox charts.
//!
//! Near a point `x` with `X_H(x) ≠ 0`, pick a hyperplane `Σ` through `x`
//! transverse to `X_H`, let `τ(m)` be the time to reach `Σ` along `X_H` and
//! `G = −τ`, so `{H, G} := dG(X_H) = 1`. With a Darboux chart `h` of the leaf
//! `Σ_e = Σ ∩ {H = e}`, the chart
//!
//! `g(m) = (G(m), h_x(ψ(m)), −H(m), h_y(ψ(m)), h_z(ψ(m)))`,
//! `ψ(m) = φ_G^{H(m)−e}∘φ_H^{τ(m)}(m)`
//!
//! satisfies `H = H₀∘g` with `H₀ = −y₁` and carries `π` to `π₀`. Since
//! `X_G(H) = −1`, `H∘φ_G^t = H − t`, and
//! `g(φ_H^{t₂}∘φ_G^{t₁}(m)) = g(m) + t₂e_{x₁} + t₁e_{y₁}`.
//!
//! `G` is constant on `Σ` and its flow preserves `Σ`; there `∇τ = −ν/⟨ν, X_H⟩`
//! exactly, which gives `X_G` on `Σ` without differentiating `τ`. Off `Σ`
//! the `G`-flow is transported along `X_H`, with which it commutes.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, FranksError, Result};
use crate::flow::{fd_jacobian, flow_point, hamiltonian_vector_field, structure_apply};
use crate::hamiltonian::{Field, Hamiltonian};
use crate::poisson::{poisson_defect, PoissonSpace};
use crate::report::{Check, VerificationReport};

/// Affine hyperplane `{m : ⟨ν, m − point⟩ = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub point: DVector<f64>,
    pub normal: DVector<f64>,
}

impl Section {
    /// `{x₁ = x₁(point)}`.
    pub fn coordinate(point: DVector<f64>) -> Self {
        let mut normal = DVector::zeros(point.len());
        normal[0] = 1.0;
        Self { point, normal }
    }

    pub fn eval(&self, m: &DVector<f64>) -> f64 {
        self.normal.dot(&(m - &self.point))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowboxConfig {
    pub step: f64,
    pub tol: f64,
    pub t_max: f64,
    pub fd_step: f64,
    pub max_newton: usize,
}

impl Default for FlowboxConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-12,
            t_max: 10.0,
            fd_step: 1e-6,
            max_newton: 50,
        }
    }
}

/// A Darboux chart of the leaf `Σ_e`, valued in `R^{2d−2+n}` with
/// coordinates ordered `(x₂..x_d, y₂..y_d, z)`.
pub trait LeafChart: Send + Sync + Debug {
    fn forward(&self, m: &DVector<f64>, space: &PoissonSpace) -> DVector<f64>;
    fn inverse(
        &self,
        y: &DVector<f64>,
        h: &dyn Hamiltonian,
        section: &Section,
        e: f64,
    ) -> Result<DVector<f64>>;
}

/// Drops `x₁` and `y₁`. The inverse solves for `(x₁, y₁)` so that the point
/// lies on `Σ` at energy `e`. This is a Darboux chart of `Σ_e` whenever the
/// constraint functions only couple to the `(x₁, y₁)` pair, e.g. for
/// `H = ±y₁ + Q(x̂, ŷ, z)` and `Σ = {x₁ = c}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoordinateLeafChart;

pub(crate) fn drop_first_pair(m: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = m.len() - 2 * d;
    let mut out = DVector::zeros(m.len() - 2);
    for k in 1..d {
        out[k - 1] = m[k];
        out[d - 1 + k - 1] = m[d + k];
    }
    for k in 0..n {
        out[2 * d - 2 + k] = m[2 * d + k];
    }
    out
}

pub(crate) fn insert_first_pair(x1: f64, y1: f64, rest: &DVector<f64>, d: usize) -> DVector<f64> {
    let n = rest.len() + 2 - 2 * d;
    let mut m = DVector::zeros(rest.len() + 2);
    m[0] = x1;
    m[d] = y1;
    for k in 1..d {
        m[k] = rest[k - 1];
        m[d + k] = rest[d - 1 + k - 1];
    }
    for k in 0..n {
        m[2 * d + k] = rest[2 * d - 2 + k];
    }
    m
}

impl LeafChart for CoordinateLeafChart {
    fn forward(&self, m: &DVector<f64>, space: &PoissonSpace) -> DVector<f64> {
        drop_first_pair(m, space.d())
    }

    fn inverse(
        &self,
        y: &DVector<f64>,
        h: &dyn Hamiltonian,
        section: &Section,
        e: f64,
    ) -> Result<DVector<f64>> {
        let d = h.space().d();
        let (mut x1, mut y1) = (section.point[0], section.point[d]);
        for _ in 0..100 {
            let m = insert_first_pair(x1, y1, y, d);
            let r0 = section.eval(&m);
            let r1 = h.value(&m) - e;
            if r0.abs() <= 1e-15 * (1.0 + section.point.amax()) && r1.abs() <= 1e-15 * (1.0 + e.abs()) {
                return Ok(m);
            }
            let g = h.gradient(&m);
            let jac = DMatrix::from_row_slice(2, 2, &[section.normal[0], section.normal[d], g[0], g[d]]);
            let Some(inv) = jac.try_inverse() else {
                return Err(FranksError::ChartError("leaf chart Newton system is singular".into()));
            };
            let delta = inv * DVector::from_vec(vec![r0, r1]);
            x1 -= delta[0];
            y1 -= delta[1];
            if delta.amax() <= 1e-16 * (1.0 + x1.abs().max(y1.abs())) {
                return Ok(insert_first_pair(x1, y1, y, d));
            }
        }
        Ok(insert_first_pair(x1, y1, y, d))
    }
}

#[derive(Debug)]
pub struct FlowboxChart {
    h: Field,
    base: DVector<f64>,
    energy: f64,
    section: Section,
    leaf: Box<dyn LeafChart>,
    cfg: FlowboxConfig,
}

pub fn build_flowbox_chart(
    h: Field,
    x: &DVector<f64>,
    section: Section,
    leaf: Box<dyn LeafChart>,
    cfg: FlowboxConfig,
) -> Result<FlowboxChart> {
    let space = h.space();
    if x.len() != space.dim() || section.point.len() != space.dim() || section.normal.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), x.len()));
    }
    let v = hamiltonian_vector_field(h.as_ref(), x)?;
    let norm = v.norm();
    if norm < 1e-12 {
        return Err(FranksError::DegenerateBase { norm });
    }
    if section.normal.dot(&v).abs() < 1e-9 * norm * section.normal.norm() {
        return Err(FranksError::ChartError("section is not transverse to X_H at the base point".into()));
    }
    if section.eval(x).abs() > 1e-12 {
        return Err(FranksError::ChartError("base point does not lie on the section".into()));
    }
    Ok(FlowboxChart {
        energy: h.value(x),
        h,
        base: x.clone(),
        section,
        leaf,
        cfg,
    })
}

impl FlowboxChart {
    pub fn space(&self) -> PoissonSpace {
        self.h.space()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn hamiltonian(&self) -> &Field {
        &self.h
    }

    pub fn flow_h(&self, m: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        flow_point(self.h.as_ref(), m, t, self.cfg.step)
    }

    /// Time `τ(m)` with `φ_H^{τ(m)}(m) ∈ Σ`: Newton on the section function,
    /// with a bracketing scan and bisection as fallback.
    pub fn tau(&self, m: &DVector<f64>) -> Result<f64> {
        let mut t = 0.0;
        let mut q = m.clone();
        for _ in 0..self.cfg.max_newton {
            let s = self.section.eval(&q);
            if s.abs() <= self.cfg.tol {
                return Ok(t);
            }
            let v = hamiltonian_vector_field(self.h.as_ref(), &q)?;
            let ds = self.section.normal.dot(&v);
            if ds == 0.0 || !ds.is_finite() {
                break;
            }
            t -= s / ds;
            if !(t.abs() <= self.cfg.t_max) {
                break;
            }
            q = self.flow_h(m, t)?;
        }
        self.tau_bisect(m)
    }

    fn tau_bisect(&self, m: &DVector<f64>) -> Result<f64> {
        let f = |t: f64| -> Result<f64> { Ok(self.section.eval(&self.flow_h(m, t)?)) };
        let s0 = f(0.0)?;
        let probe = 0.05;
        let steps = (self.cfg.t_max / probe).ceil() as usize;
        for dir in [1.0, -1.0] {
            let mut prev = (0.0, s0);
            for k in 1..=steps {
                let t = dir * k as f64 * probe;
                let s = f(t)?;
                if s * prev.1 <= 0.0 {
                    let (mut lo, mut hi) = (prev.0, t);
                    let mut flo = prev.1;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        let fm = f(mid)?;
                        if fm.abs() <= self.cfg.tol {
                            return Ok(mid);
                        }
                        if fm * flo > 0.0 {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    return Ok(0.5 * (lo + hi));
                }
                prev = (t, s);
            }
        }
        Err(FranksError::NoCrossing { t_max: self.cfg.t_max })
    }

    /// `G(m) = −τ(m)`.
    pub fn g_value(&self, m: &DVector<f64>) -> Result<f64> {
        Ok(-self.tau(m)?)
    }

    /// `∇G` by central differences of `τ`.
    pub fn grad_g(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.cfg.fd_step * m.norm().max(1.0);
        let mut g = DVector::zeros(m.len());
        for j in 0..m.len() {
            let mut a = m.clone();
            let mut b = m.clone();
            a[j] += e;
            b[j] -= e;
            g[j] = (self.g_value(&a)? - self.g_value(&b)?) / (2.0 * e);
        }
        Ok(g)
    }

    /// `X_G = Ĵ∇G`, with `∇G` from finite differences.
    pub fn conjugate_field(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(structure_apply(&self.space(), &self.grad_g(m)?))
    }

    /// `{H, G} = dG(X_H)`.
    pub fn bracket(&self, m: &DVector<f64>) -> Result<f64> {
        let v = hamiltonian_vector_field(self.h.as_ref(), m)?;
        Ok(self.grad_g(m)?.dot(&v))
    }

    /// `X_G` at a point of `Σ`, exact: `Ĵν / ⟨ν, X_H⟩`.
    fn section_field(&self, q: &DVector<f64>) -> DVector<f64> {
        let v = hamiltonian_vector_field(self.h.as_ref(), q).expect("dimension checked");
        structure_apply(&self.space(), &self.section.normal) / self.section.normal.dot(&v)
    }

    /// `φ_G^t` restricted to `Σ`, by RK4 on the exact section field.
    fn flow_g_on_section(&self, q: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        if t == 0.0 {
            return Ok(q.clone());
        }
        let n = ((t.abs() / self.cfg.step).ceil() as usize).max(1);
        let dt = t / n as f64;
        let mut p = q.clone();
        for k in 0..n {
            let k1 = self.section_field(&p);
            let k2 = self.section_field(&(&p + &k1 * (0.5 * dt)));
            let k3 = self.section_field(&(&p + &k2 * (0.5 * dt)));
            let k4 = self.section_field(&(&p + &k3 * dt));
            p += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
            if p.iter().any(|v| !v.is_finite()) {
                return Err(FranksError::Diverged { t: (k + 1) as f64 * dt });
            }
        }
        Ok(p)
    }

    /// `φ_G^t(m) = φ_H^{−τ}∘φ_G^t∘φ_H^{τ}(m)`.
    pub fn flow_g(&self, m: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let tau = self.tau(m)?;
        let q = self.flow_h(m, tau)?;
        let q = self.flow_g_on_section(&q, t)?;
        self.flow_h(&q, -tau)
    }

    /// `ψ(m) ∈ Σ_e`.
    pub fn leaf_point(&self, m: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let tau = self.tau(m)?;
        let q = self.flow_h(m, tau)?;
        let hm = self.h.value(m);
        Ok((tau, self.flow_g_on_section(&q, hm - self.energy)?))
    }

    pub fn forward(&self, m: &DVector<f64>) -> Result<DVector<f64>> {
        let (tau, psi) = self.leaf_point(m)?;
        let leaf = self.leaf.forward(&psi, &self.space());
        let d = self.space().d();
        Ok(insert_first_pair(-tau, -self.h.value(m), &leaf, d))
    }

    /// `g⁻¹(y) = φ_H^{y_{x₁}}∘φ_G^{e + y_{y₁}}∘h⁻¹(ŷ)`.
    pub fn inverse(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.space().d();
        let rest = drop_first_pair(y, d);
        let q = self.leaf.inverse(&rest, self.h.as_ref(), &self.section, self.energy)?;
        let q = self.flow_g_on_section(&q, self.energy + y[d])?;
        self.flow_h(&q, y[0])
    }

    pub fn jacobian(&self, m: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = 1e-5 * m.norm().max(1.0);
        fd_jacobian(|p| self.forward(p), m, e)
    }

    /// `det` of the pairing `[[dH(X_H), dH(X_G)], [dG(X_H), dG(X_G)]]` at the
    /// base point; nonzero means `♯π(dH)`, `♯π(dG)` span a complement of
    /// `T_xΣ_e` and `Σ_e` is Poisson-Dirac.
    pub fn dirac_pairing(&self) -> Result<f64> {
        let x = &self.base;
        let dh = self.h.gradient(x);
        let dg = self.grad_g(x)?;
        let xh = structure_apply(&self.space(), &dh);
        let xg = structure_apply(&self.space(), &dg);
        let m = DMatrix::from_row_slice(2, 2, &[dh.dot(&xh), dh.dot(&xg), dg.dot(&xh), dg.dot(&xg)]);
        Ok(m.determinant())
    }

    /// Flow commutator `(φ_G^{−t}φ_H^{−s}φ_G^{t}φ_H^{s}(m) − m)/(st)`, with the
    /// `G`-flow integrated directly from the finite-difference field.
    pub fn lie_bracket(&self, m: &DVector<f64>, s: f64, t: f64) -> Result<f64> {
        let direct_g = |p: &DVector<f64>, time: f64| -> Result<DVector<f64>> {
            let n = ((time.abs() / self.cfg.step).ceil() as usize).max(1);
            let dt = time / n as f64;
            let mut q = p.clone();
            for _ in 0..n {
                let k1 = self.conjugate_field(&q)?;
                let k2 = self.conjugate_field(&(&q + &k1 * (0.5 * dt)))?;
                let k3 = self.conjugate_field(&(&q + &k2 * (0.5 * dt)))?;
                let k4 = self.conjugate_field(&(&q + &k3 * dt))?;
                q += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
            }
            Ok(q)
        };
        let a = self.flow_h(m, s)?;
        let b = direct_g(&a, t)?;
        let c = self.flow_h(&b, -s)?;
        let d = direct_g(&c, -t)?;
        Ok((d - m).amax() / (s * t))
    }
}

/// Maximum of `‖Dg·Ĵ·Dgᵀ − Ĵ‖` over the samples.
pub fn verify_poisson_chart<F>(
    jacobian: F,
    space: &PoissonSpace,
    samples: &[DVector<f64>],
    tol: f64,
) -> VerificationReport
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for p in samples {
        match jacobian(p).and_then(|j| poisson_defect(&j, space)) {
            Ok(v) => worst = worst.max(v),
            Err(_) => failures += 1,
        }
    }
    let mut report = VerificationReport::new("poisson-chart");
    report.push(Check::at_most("poisson_defect", worst, tol));
    report.push(Check::at_most("evaluation_failures", failures as f64, 0.0));
    report
        .environment
        .insert("samples".into(), serde_json::json!(samples.len()));
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{Drift, QuadraticField};
    use crate::poisson::PoissonLinearMap;
    use std::sync::Arc;

    fn pt(v: &[f64]) -> DVector<f64> {
        DVector::from_vec(v.to_vec())
    }

    fn drift_chart() -> FlowboxChart {
        let space = PoissonSpace::new(2, 1).unwrap();
        let h: Field = Arc::new(Drift::new(space));
        let x = DVector::zeros(5);
        build_flowbox_chart(h, &x, Section::coordinate(x.clone()), Box::new(CoordinateLeafChart), FlowboxConfig::default()).unwrap()
    }

    #[test]
    fn pair_helpers_round_trip() {
        let m = pt(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let rest = drop_first_pair(&m, 3);
        assert_eq!(rest, pt(&[2.0, 3.0, 5.0, 6.0, 7.0]));
        assert_eq!(insert_first_pair(1.0, 4.0, &rest, 3), m);
    }

    #[test]
    fn drift_chart_is_identity() {
        let chart = drift_chart();
        let m = pt(&[0.05, -0.02, 0.03, 0.01, 0.2]);
        assert!((chart.forward(&m).unwrap() - &m).amax() < 1e-14);
        assert!((chart.inverse(&m).unwrap() - &m).amax() < 1e-14);
        assert_eq!(chart.tau(&pt(&[0.0, 0.1, 0.2, 0.3, 0.4])).unwrap(), 0.0);
        assert!((chart.tau(&pt(&[0.3, 0.0, 0.0, 0.0, 0.0])).unwrap() + 0.3).abs() < 1e-14);
        assert!((chart.bracket(&m).unwrap() - 1.0).abs() < 1e-9);
        let xg = chart.conjugate_field(&m).unwrap();
        assert!((xg - pt(&[0.0, 0.0, 1.0, 0.0, 0.0])).amax() < 1e-9);
    }

    #[test]
    fn degenerate_base_rejected() {
        let space = PoissonSpace::new(1, 0).unwrap();
        let h: Field = Arc::new(QuadraticField::new(space, DMatrix::identity(2, 2), DVector::zeros(2), 0.0).unwrap());
        let x = DVector::zeros(2);
        let res = build_flowbox_chart(h, &x, Section::coordinate(x.clone()), Box::new(CoordinateLeafChart), FlowboxConfig::default());
        assert!(matches!(res, Err(FranksError::DegenerateBase { .. })));
    }

    #[test]
    fn far_point_has_no_crossing() {
        let chart = drift_chart();
        let mut cfg = FlowboxConfig::default();
        cfg.t_max = 1.0;
        let chart = FlowboxChart { cfg, ..chart };
        assert!(matches!(
            chart.tau(&pt(&[5.0, 0.0, 0.0, 0.0, 0.0])),
            Err(FranksError::NoCrossing { .. })
        ));
    }

    #[test]
    fn linear_poisson_map_has_zero_defect() {
        let space = PoissonSpace::new(1, 1).unwrap();
        let b = PoissonLinearMap::new(
            DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 0.5, -1.0, 0.0, 0.0, 3.0]),
            space,
            1e-12,
        )
        .unwrap();
        let samples = vec![DVector::zeros(3), pt(&[0.1, 0.2, 0.3])];
        let m = b.matrix().clone();
        let rep = verify_poisson_chart(|_| Ok(m.clone()), &space, &samples, 1e-12);
        assert!(rep.pass);
        let id = verify_poisson_chart(|_| Ok(DMatrix::identity(3, 3)), &space, &samples, 0.0);
        assert!(id.pass);
    }
}
