//! JSON and CSV interchange formats shared by the command-line tools.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, FranksError, Result};
use crate::factorization::Factorization;
use crate::flow::integrate_flow_with;
use crate::hamiltonian::{matrix_from_rows, matrix_to_rows, FactorSpec, FieldDescriptor, Hamiltonian};
use crate::poisson::{PoissonLinearMap, PoissonSpace, SymplecticMatrix, DEFAULT_SYMPLECTIC_TOL};
use crate::realization::{PerturbedHamiltonian, PerturbedMap};

/// `{"d", "n", "rows"}` with `rows` row-major and `(2d+n)²` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub d: usize,
    #[serde(default)]
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<f64>, d: usize, n: usize) -> Self {
        Self {
            d,
            n,
            rows: matrix_to_rows(m),
        }
    }

    pub fn space(&self) -> Result<PoissonSpace> {
        PoissonSpace::new(self.d, self.n)
    }

    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let dim = self.space()?.dim();
        matrix_from_rows(&self.rows, dim, dim)
    }

    /// The symplectic block. For `n > 0` the whole matrix must lie in the
    /// linear Poisson group and only its symplectic part is returned.
    pub fn symplectic(&self) -> Result<SymplecticMatrix> {
        let m = self.matrix()?;
        if self.n == 0 {
            return SymplecticMatrix::new(m);
        }
        let lin = PoissonLinearMap::new(m, self.space()?, DEFAULT_SYMPLECTIC_TOL)?;
        SymplecticMatrix::new(lin.symplectic_block())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorJson {
    /// 1-based conjugate pair.
    pub k: usize,
    /// Signed rotation angle of the factor.
    pub xi: f64,
    pub theta: f64,
    #[serde(rename = "P_rows")]
    pub p_rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub inert: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationJson {
    pub factors: Vec<FactorJson>,
    pub residual: f64,
    pub delta: f64,
    pub c_fit: f64,
}

impl From<&Factorization> for FactorizationJson {
    fn from(f: &Factorization) -> Self {
        Self {
            factors: f
                .factors
                .iter()
                .map(|r| FactorJson {
                    k: r.k,
                    xi: r.angle,
                    theta: r.theta,
                    p_rows: matrix_to_rows(r.conjugator.matrix()),
                    inert: r.inert,
                })
                .collect(),
            residual: f.residual,
            delta: f.delta,
            c_fit: f.diagnostics.c_fit,
        }
    }
}

impl FactorizationJson {
    /// `∏ P_k·π_k(R_ξ)·P_k⁻¹` in the stored order.
    pub fn product(&self, d: usize) -> Result<DMatrix<f64>> {
        let mut acc = DMatrix::identity(2 * d, 2 * d);
        for f in &self.factors {
            let p = SymplecticMatrix::new(matrix_from_rows(&f.p_rows, 2 * d, 2 * d)?)?;
            if f.k == 0 || f.k > d {
                return Err(FranksError::IndexOutOfRange { index: f.k, max: d });
            }
            acc = acc
                * p.matrix()
                * crate::poisson::plane_rotation(f.xi, f.k, d)
                * p.inverse().matrix();
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorJson {
    pub i: usize,
    pub alpha: f64,
}

/// Summary of a realized map `g = φ⁻¹∘h∘φ∘f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedMapJson {
    pub base: String,
    pub d: usize,
    pub n: usize,
    pub p: Vec<f64>,
    pub f_p: Vec<f64>,
    pub rho: f64,
    pub scale: f64,
    pub generators: Vec<GeneratorJson>,
    pub factorization: FactorizationJson,
    pub target_derivative: MatrixJson,
}

impl From<&PerturbedMap> for PerturbedMapJson {
    fn from(g: &PerturbedMap) -> Self {
        let space = g.space();
        Self {
            base: g.base.name(),
            d: space.d(),
            n: space.n(),
            p: g.p.iter().copied().collect(),
            f_p: g.fp.iter().copied().collect(),
            rho: g.rho,
            scale: g.scale,
            generators: g
                .generators
                .iter()
                .map(|l| GeneratorJson { i: l.i, alpha: l.alpha })
                .collect(),
            factorization: (&g.factorization).into(),
            target_derivative: MatrixJson::from_matrix(&g.target_derivative, space.d(), space.n()),
        }
    }
}

/// A realized Hamiltonian as a field descriptor that rebuilds it, plus the
/// section on which its return map hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedHamiltonianJson {
    pub field: FieldDescriptor,
    pub section: f64,
    pub rho: f64,
    pub factorization: FactorizationJson,
}

impl From<&PerturbedHamiltonian> for PerturbedHamiltonianJson {
    fn from(h: &PerturbedHamiltonian) -> Self {
        let base = h.space();
        let (d, n) = (base.d() - 1, base.n());
        let field = if h.slabs.is_empty() {
            FieldDescriptor::Drift {
                d: d + 1,
                n,
                sign: -1.0,
                rho: None,
            }
        } else {
            FieldDescriptor::Chained {
                d,
                n,
                factors: h
                    .slabs
                    .iter()
                    .map(|s| FactorSpec {
                        i: s.i,
                        alpha: s.alpha,
                        p_rows: Some(matrix_to_rows(s.conjugator.matrix())),
                    })
                    .collect(),
                rho: Some(h.scale),
            }
        };
        Self {
            field,
            section: h.section,
            rho: h.rho,
            factorization: (&h.factorization).into(),
        }
    }
}

/// Point JSON: either a bare array or `{"point": [...]}`.
pub fn parse_point(text: &str) -> Result<DVector<f64>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Point {
        Bare(Vec<f64>),
        Wrapped { point: Vec<f64> },
    }
    let v = match serde_json::from_str::<Point>(text).map_err(|e| FranksError::Config(e.to_string()))? {
        Point::Bare(v) | Point::Wrapped { point: v } => v,
    };
    Ok(DVector::from_vec(v))
}

/// Column names `x1..xd, y1..yd, z1..zn`.
pub fn coordinate_names(space: &PoissonSpace) -> Vec<String> {
    let (d, n) = (space.d(), space.n());
    (1..=d)
        .map(|k| format!("x{k}"))
        .chain((1..=d).map(|k| format!("y{k}")))
        .chain((1..=n).map(|k| format!("z{k}")))
        .collect()
}

/// Integrates `X_H` from `x0` for time `t` and writes `t, coordinates, H`
/// every `every` steps (and at the end).
pub fn trajectory_csv(h: &dyn Hamiltonian, x0: &DVector<f64>, t: f64, step: f64, every: usize) -> Result<String> {
    let space = h.space();
    if x0.len() != space.dim() {
        return Err(dim_mismatch(space.dim(), x0.len()));
    }
    let every = every.max(1);
    let mut out = String::new();
    out.push('t');
    for c in coordinate_names(&space) {
        out.push(',');
        out.push_str(&c);
    }
    out.push_str(",H\n");
    let mut rows = Vec::new();
    let res = integrate_flow_with(h, x0, t, step, |s, p| rows.push((s, p.clone())))?;
    let last = rows.len() - 1;
    for (k, (s, p)) in rows.iter().enumerate() {
        if k % every != 0 && k != last {
            continue;
        }
        write_row(&mut out, *s, p, h.value(p));
    }
    debug_assert_eq!(res.steps + 1, rows.len());
    Ok(out)
}

pub(crate) fn write_row(out: &mut String, lead: f64, p: &DVector<f64>, tail: f64) {
    let _ = write!(out, "{lead}");
    for v in p.iter() {
        let _ = write!(out, ",{v}");
    }
    let _ = writeln!(out, ",{tail}");
}
