//! Seeded verification batteries. Each criterion function returns its own
//! report; [`run_suite`] groups them by module.
//!
//! Trials run in parallel with one RNG stream per trial, and results are
//! collected in trial order, so a report depends only on the seed and config.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FranksError, Result};
use crate::factorization::{decompose_near_identity_with, DecomposeOptions, Factorization};
use crate::flow::{closed_form_k_flow, flow_jacobian, flow_point, integrate_flow, integrate_flow_with, poincare_map, PoincareOptions};
use crate::flowbox::{build_flowbox_chart, verify_poisson_chart, CoordinateLeafChart, FlowboxChart, FlowboxConfig, Section};
use crate::hamiltonian::{make_chained_hamiltonian, FieldDescriptor, make_rotation_hamiltonian, rho, rho_i, ChainFactor, Drift, Field, Hamiltonian, QuadraticField};
use crate::norms::{ball_samples, c2_scalar, cube_grid, loglog_slope, matrix_norm};
use crate::poisson::{lift_a_pi, plane_rotation, random_symmetric, random_symplectic_near_identity, symplectic_defect, PoissonLinearMap, PoissonSpace, SymplecticMatrix};
use crate::realization::{realize_continuous, realize_discrete, AffinePoissonMap, Composition, IdentityMap, KFlowMap, PerturbedHamiltonian, PerturbedMap, PoissonMap, RealizeOptions, TranslationMap};
use crate::report::{Check, VerificationReport};

pub const SUITES: [&str; 7] = [
    "factorization",
    "generators",
    "flows",
    "realize-discrete",
    "realize-continuous",
    "flowbox",
    "all",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorizationSuite {
    pub dims: Vec<usize>,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub residual_tol: f64,
    pub factor_symplectic_tol: f64,
    pub min_slope: f64,
    /// Allowed ratio between the largest and smallest fitted constant.
    pub constant_spread: f64,
}

impl Default for FactorizationSuite {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 3],
            deltas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            trials: 1000,
            residual_tol: 1e-9,
            factor_symplectic_tol: 1e-11,
            min_slope: 0.45,
            constant_spread: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowsSuite {
    pub trials: usize,
    pub step: f64,
    pub oracle_tol: f64,
    /// Step sizes for the convergence-order fit.
    pub order_steps: Vec<f64>,
    pub min_order: f64,
    pub rotation_alphas: Vec<f64>,
    pub jacobian_tol: f64,
    pub fd_step: f64,
    pub conservation_tol: f64,
}

impl Default for FlowsSuite {
    fn default() -> Self {
        Self {
            trials: 100,
            step: 1e-3,
            oracle_tol: 1e-8,
            order_steps: vec![0.1, 0.05, 0.025, 0.0125],
            min_order: 3.7,
            rotation_alphas: vec![0.01, 0.1, 0.5],
            jacobian_tol: 1e-6,
            fd_step: 1e-5,
            conservation_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorsSuite {
    pub alphas: Vec<f64>,
    pub slope_tol: f64,
    pub grid_per_axis: usize,
    pub chain_delta: f64,
    pub gradient_tol: f64,
}

impl Default for GeneratorsSuite {
    fn default() -> Self {
        Self {
            alphas: vec![1e-3, 1e-2, 1e-1, 1.0],
            slope_tol: 0.1,
            grid_per_axis: 9,
            chain_delta: 1e-2,
            gradient_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscreteSuite {
    pub trials: usize,
    pub delta: f64,
    pub rho: f64,
    pub fd_step: f64,
    pub derivative_tol: f64,
    pub defect_samples: usize,
    pub defect_tol: f64,
    /// Central-difference step for the sampled defect; at 1e-5 the
    /// truncation error alone is of order 1e-6.
    pub defect_fd_step: f64,
    pub outside_samples: usize,
    pub sweep_deltas: Vec<f64>,
    pub sweep_trials: usize,
    pub sweep_samples: usize,
    pub min_slope: f64,
}

impl Default for DiscreteSuite {
    fn default() -> Self {
        Self {
            trials: 100,
            delta: 1e-2,
            rho: 0.5,
            fd_step: 1e-5,
            derivative_tol: 1e-5,
            defect_samples: 1000,
            defect_tol: 1e-6,
            defect_fd_step: 1e-7,
            outside_samples: 200,
            sweep_deltas: vec![1e-2, 1e-3, 1e-4, 1e-5],
            sweep_trials: 5,
            sweep_samples: 400,
            min_slope: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuousSuite {
    pub transit_alphas: Vec<f64>,
    pub transit_dims: Vec<usize>,
    pub trials: usize,
    pub dims: Vec<usize>,
    pub n: usize,
    pub delta: f64,
    pub rho: f64,
    pub jacobian_tol: f64,
    pub tau_tol: f64,
    pub section_tol: f64,
    pub drift_samples: usize,
    pub poincare: PoincareOptions,
}

impl Default for ContinuousSuite {
    fn default() -> Self {
        Self {
            transit_alphas: vec![0.05, 0.3],
            transit_dims: vec![1, 2],
            trials: 50,
            dims: vec![1, 2],
            n: 1,
            delta: 1e-2,
            rho: 1.0,
            jacobian_tol: 1e-5,
            tau_tol: 1e-10,
            section_tol: 1e-12,
            drift_samples: 200,
            poincare: PoincareOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowboxSuite {
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub radius: f64,
    pub samples: usize,
    pub bracket_points: usize,
    pub defect_samples: usize,
    pub translation_samples: usize,
    pub bracket_tol: f64,
    pub value_tol: f64,
    pub defect_tol: f64,
    pub round_trip_tol: f64,
    pub translation_tol: f64,
    pub lie_tol: f64,
    pub chart: FlowboxConfig,
}

impl Default for FlowboxSuite {
    fn default() -> Self {
        Self {
            d: 2,
            n: 1,
            epsilon: 0.05,
            radius: 0.1,
            samples: 1000,
            bracket_points: 20,
            defect_samples: 200,
            translation_samples: 100,
            bracket_tol: 1e-6,
            value_tol: 1e-8,
            defect_tol: 1e-5,
            round_trip_tol: 1e-8,
            translation_tol: 1e-8,
            lie_tol: 1e-5,
            chart: FlowboxConfig::default(),
        }
    }
}

/// Everything a suite run depends on besides its name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub decompose: DecomposeOptions,
    pub factorization: FactorizationSuite,
    pub flows: FlowsSuite,
    pub generators: GeneratorsSuite,
    pub discrete: DiscreteSuite,
    pub continuous: ContinuousSuite,
    pub flowbox: FlowboxSuite,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            decompose: DecomposeOptions::default(),
            factorization: FactorizationSuite::default(),
            flows: FlowsSuite::default(),
            generators: GeneratorsSuite::default(),
            discrete: DiscreteSuite::default(),
            continuous: ContinuousSuite::default(),
            flowbox: FlowboxSuite::default(),
        }
    }
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FranksError::Config(e.to_string()))
    }
}

/// Independent stream for trial `index` of battery `tag`.
pub fn trial_rng(seed: u64, tag: u32, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 40) ^ index);
    rng
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    // NaN-propagating max so that a broken trial cannot hide.
    values
        .into_iter()
        .fold(0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

fn first_error<T>(results: &[std::result::Result<T, String>]) -> Option<String> {
    results.iter().find_map(|r| r.as_ref().err().cloned())
}

fn record_failures<T>(report: &mut VerificationReport, name: &str, results: &[std::result::Result<T, String>]) {
    let failures = results.iter().filter(|r| r.is_err()).count();
    report.push(Check::at_most(name, failures as f64, 0.0));
    if let Some(e) = first_error(results) {
        report.set_env(format!("{name}.first"), e);
    }
}

// ---------------------------------------------------------------------------
// factorization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub d: usize,
    pub delta: f64,
    pub max_residual: f64,
    pub max_factor_defect: f64,
    pub max_rotation_distance: f64,
    pub max_c_fit: f64,
    pub failures: usize,
    pub guard_binding: usize,
    pub first_error: Option<String>,
}

/// Factorizes `trials` random targets for every `(d, δ)` cell.
pub fn factorization_sweep(cfg: &SuiteConfig) -> Vec<SweepCell> {
    let fc = &cfg.factorization;
    let mut cells = Vec::new();
    for (di, &d) in fc.dims.iter().enumerate() {
        for (ei, &delta) in fc.deltas.iter().enumerate() {
            let tag = 100 + (di * 16 + ei) as u32;
            let outcomes: Vec<std::result::Result<(f64, f64, f64, bool), String>> = (0..fc.trials)
                .into_par_iter()
                .map(|k| {
                    let mut rng = trial_rng(cfg.seed, tag, k as u64);
                    let a = random_symplectic_near_identity(d, delta, &mut rng).map_err(|e| e.to_string())?;
                    let f = decompose_near_identity_with(&a, &cfg.decompose).map_err(|e| e.to_string())?;
                    let rel = f.residual / matrix_norm(a.matrix());
                    let defect = max_of(f.factors.iter().map(|r| symplectic_defect(&r.matrix()).unwrap_or(f64::NAN)));
                    Ok((rel, defect, f.max_rotation_distance(), f.diagnostics.guard_binding))
                })
                .collect();
            let ok: Vec<_> = outcomes.iter().filter_map(|r| r.as_ref().ok()).collect();
            let max_rot = max_of(ok.iter().map(|o| o.2));
            cells.push(SweepCell {
                d,
                delta,
                max_residual: max_of(ok.iter().map(|o| o.0)),
                max_factor_defect: max_of(ok.iter().map(|o| o.1)),
                max_rotation_distance: max_rot,
                max_c_fit: max_rot / delta.sqrt(),
                failures: outcomes.len() - ok.len(),
                guard_binding: ok.iter().filter(|o| o.3).count(),
                first_error: first_error(&outcomes),
            });
        }
    }
    cells
}

/// Round trip: the factors multiply back to `A` and each is symplectic.
pub fn criterion_round_trip(cfg: &SuiteConfig, sweep: &[SweepCell]) -> VerificationReport {
    let fc = &cfg.factorization;
    let mut r = VerificationReport::new("factorization-round-trip");
    r.push(Check::at_most("max_relative_residual", max_of(sweep.iter().map(|c| c.max_residual)), fc.residual_tol));
    r.push(Check::at_most(
        "max_factor_symplectic_defect",
        max_of(sweep.iter().map(|c| c.max_factor_defect)),
        fc.factor_symplectic_tol,
    ));
    r.push(Check::at_most("failed_trials", sweep.iter().map(|c| c.failures).sum::<usize>() as f64, 0.0));
    r.set_env("trials_per_cell", fc.trials);
    r.set_env("cells", sweep);
    r
}

/// `max ‖Rᵢ − I‖` grows like `δ^{1/2}` with a stable constant.
pub fn criterion_sqrt_bound(cfg: &SuiteConfig, sweep: &[SweepCell]) -> VerificationReport {
    let fc = &cfg.factorization;
    let mut r = VerificationReport::new("factorization-sqrt-bound");
    let deltas = fc.deltas.clone();
    let worst: Vec<f64> = deltas
        .iter()
        .map(|&delta| max_of(sweep.iter().filter(|c| c.delta == delta).map(|c| c.max_rotation_distance)))
        .collect();
    r.push(Check::at_least("loglog_slope", loglog_slope(&deltas, &worst), fc.min_slope));
    let c: Vec<f64> = deltas.iter().zip(&worst).map(|(d, w)| w / d.sqrt()).collect();
    let spread = c.iter().cloned().fold(0.0, f64::max) / c.iter().cloned().fold(f64::INFINITY, f64::min);
    r.push(Check::at_most("fitted_constant_spread", spread, fc.constant_spread));
    r.set_env("fitted_constants", &c);
    r.set_env("max_rotation_distance", &worst);
    r
}

// ---------------------------------------------------------------------------
// flows

struct KTrial {
    space: PoissonSpace,
    alpha: f64,
    i: usize,
    p: DVector<f64>,
}

fn k_trial(seed: u64, k: usize) -> KTrial {
    let mut rng = trial_rng(seed, 200, k as u64);
    let d = rng.random_range(1..=3usize);
    let n = rng.random_range(0..=2usize);
    let space = PoissonSpace::new(d, n).expect("valid space");
    let i = rng.random_range(1..=d);
    let alpha = rng.random_range(-1.0..1.0);
    // Radius up to 1.3 covers the plateau, the ramp and the exterior.
    let p = ball_samples(&DVector::zeros(space.dim()), 1.3, 1, &mut rng).remove(0);
    KTrial { space, alpha, i, p }
}

/// RK4 against the closed-form flow of `Kᵢ`, plus the convergence order.
pub fn criterion_flow_oracle(cfg: &SuiteConfig) -> VerificationReport {
    let fl = &cfg.flows;
    let mut r = VerificationReport::new("flow-oracle");
    let errs: Vec<std::result::Result<Vec<f64>, String>> = (0..fl.trials)
        .into_par_iter()
        .map(|k| {
            let t = k_trial(cfg.seed, k);
            let kf = make_rotation_hamiltonian(t.alpha, t.i, t.space.d(), t.space.n()).map_err(|e| e.to_string())?;
            let exact = closed_form_k_flow(t.alpha, t.i, 1.0, &t.p, &t.space).map_err(|e| e.to_string())?;
            let mut out = vec![(flow_point(&kf, &t.p, 1.0, fl.step).map_err(|e| e.to_string())? - &exact).amax()];
            for &h in &fl.order_steps {
                out.push((flow_point(&kf, &t.p, 1.0, h).map_err(|e| e.to_string())? - &exact).amax());
            }
            Ok(out)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = errs.iter().filter_map(|e| e.as_ref().ok()).collect();
    r.push(Check::at_most("max_error_vs_closed_form", max_of(ok.iter().map(|e| e[0])), fl.oracle_tol));
    let per_step: Vec<f64> = (0..fl.order_steps.len()).map(|j| max_of(ok.iter().map(|e| e[j + 1]))).collect();
    r.push(Check::at_least("convergence_order", loglog_slope(&fl.order_steps, &per_step), fl.min_order));
    record_failures(&mut r, "failed_trials", &errs);
    r.set_env("step", fl.step);
    r.set_env("order_errors", &per_step);
    r
}

/// `D₀φ¹_{Kᵢ} = πᵢ(R_α)`.
pub fn criterion_rotation_realization(cfg: &SuiteConfig) -> VerificationReport {
    let fl = &cfg.flows;
    let mut r = VerificationReport::new("rotation-realization");
    let space = PoissonSpace::new(2, 1).expect("valid space");
    for &alpha in &fl.rotation_alphas {
        for i in 1..=space.d() {
            let name = format!("alpha={alpha},i={i}");
            let res = make_rotation_hamiltonian(alpha, i, space.d(), space.n()).and_then(|k| {
                let jac = flow_jacobian(&k, &DVector::zeros(space.dim()), 1.0, fl.step, fl.fd_step)?;
                let target = lift_a_pi(&SymplecticMatrix::new(plane_rotation(alpha, i, space.d()))?, space.n());
                Ok((jac - target.matrix()).amax())
            });
            match res {
                Ok(e) => r.push(Check::at_most(name, e, fl.jacobian_tol)),
                Err(e) => r.push_error(name, &e),
            }
        }
    }
    r
}

/// `ρ`, `ρᵢ` and `H` stay constant along integrated trajectories.
pub fn criterion_conservation(cfg: &SuiteConfig) -> VerificationReport {
    let fl = &cfg.flows;
    let mut r = VerificationReport::new("conservation");
    let k_runs: Vec<std::result::Result<(f64, f64, f64), String>> = (0..fl.trials)
        .into_par_iter()
        .map(|k| {
            let t = k_trial(cfg.seed, k);
            let kf = make_rotation_hamiltonian(t.alpha, t.i, t.space.d(), t.space.n()).map_err(|e| e.to_string())?;
            let (r0, ri0) = (rho(&t.p), rho_i(&t.p, t.i, t.space.d()));
            let (mut dr, mut dri) = (0.0f64, 0.0f64);
            let res = integrate_flow_with(&kf, &t.p, 1.0, fl.step, |_, q| {
                dr = dr.max((rho(q) - r0).abs());
                dri = dri.max((rho_i(q, t.i, t.space.d()) - ri0).abs());
            })
            .map_err(|e| e.to_string())?;
            Ok((dr, dri, res.max_drift))
        })
        .collect();
    let ok: Vec<_> = k_runs.iter().filter_map(|x| x.as_ref().ok()).collect();
    r.push(Check::at_most("rho_drift", max_of(ok.iter().map(|x| x.0)), fl.conservation_tol));
    r.push(Check::at_most("rho_i_drift", max_of(ok.iter().map(|x| x.1)), fl.conservation_tol));

    // Energy along transit chains, drifts and quadratic fields.
    let h_runs: Vec<std::result::Result<f64, String>> = (0..fl.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(cfg.seed, 201, k as u64);
            let d = 1 + k % 2;
            let n = k % 3;
            let mut step = fl.step;
            let (field, x0): (Field, DVector<f64>) = match k % 3 {
                0 => {
                    let a = random_symplectic_near_identity(d, 0.05, &mut rng).map_err(|e| e.to_string())?;
                    let f = decompose_near_identity_with(&a, &cfg.decompose).map_err(|e| e.to_string())?;
                    let h = make_chained_hamiltonian(&slabs_of(&f), d, n).map_err(|e| e.to_string())?;
                    // Each bump ramp is 1/(4N) wide in x₁ instead of 1/2,
                    // and X_H is only C¹ at the ramp ends, where RK4 drops
                    // to about third order; 1/(8N) keeps the drift well
                    // below tolerance.
                    step /= 8.0 * h.len().max(1) as f64;
                    let mut x0 = ball_samples(&DVector::zeros(h.space().dim()), 0.3, 1, &mut rng).remove(0);
                    x0[0] = -0.1;
                    (Arc::new(h), x0)
                }
                1 => {
                    let space = PoissonSpace::new(d, n).expect("valid space");
                    let x0 = ball_samples(&DVector::zeros(space.dim()), 1.0, 1, &mut rng).remove(0);
                    (Arc::new(Drift::new(space)), x0)
                }
                _ => {
                    let space = PoissonSpace::new(d, n).expect("valid space");
                    let s = random_symmetric(space.dim(), &mut rng) * 0.5;
                    let x0 = ball_samples(&DVector::zeros(space.dim()), 1.0, 1, &mut rng).remove(0);
                    let q = QuadraticField::new(space, s, DVector::zeros(space.dim()), 0.0).map_err(|e| e.to_string())?;
                    (Arc::new(q), x0)
                }
            };
            let drift = integrate_flow(field.as_ref(), &x0, 1.2, step).map_err(|e| e.to_string())?.max_drift;
            Ok(drift)
        })
        .collect();
    let k_energy = max_of(ok.iter().map(|x| x.2));
    let other = max_of(h_runs.iter().filter_map(|x| x.as_ref().ok().copied()));
    for (j, family) in ["chained", "drift", "quadratic"].iter().enumerate() {
        let worst = max_of(h_runs.iter().skip(j).step_by(3).filter_map(|x| x.as_ref().ok().copied()));
        r.set_env(format!("{family}_energy_drift"), worst);
    }
    r.set_env("k_flow_energy_drift", k_energy);
    r.push(Check::at_most("hamiltonian_drift", k_energy.max(other), fl.conservation_tol));
    record_failures(&mut r, "failed_k_trials", &k_runs);
    record_failures(&mut r, "failed_h_trials", &h_runs);
    r
}

fn slabs_of(f: &Factorization) -> Vec<ChainFactor> {
    f.factors
        .iter()
        .rev()
        .filter(|x| !x.inert && x.angle != 0.0)
        .map(|x| ChainFactor {
            conjugator: x.conjugator.clone(),
            i: x.k,
            alpha: x.angle,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// generators

/// `‖Kᵢ‖_{C²}` and `‖H − H₀‖_{C²}` are linear in `|α|`.
pub fn criterion_c2_scaling(cfg: &SuiteConfig) -> VerificationReport {
    let g = &cfg.generators;
    let mut r = VerificationReport::new("c2-scaling");
    let space = PoissonSpace::new(1, 1).expect("valid space");
    let grid = cube_grid(&DVector::zeros(space.dim()), 1.3, g.grid_per_axis);
    let k_norms: Vec<f64> = g
        .alphas
        .iter()
        .map(|&a| {
            let k = make_rotation_hamiltonian(a, 1, space.d(), space.n()).expect("valid generator");
            c2_scalar(|p| k.value(p), |p| k.gradient(p), |p| k.hessian(p), &grid)
        })
        .collect();
    let slope = loglog_slope(&g.alphas, &k_norms);
    r.push(Check::near("rotation_generator_slope", slope, 1.0, g.slope_tol));

    // A chain from a fixed target, with every angle rescaled to peak at |α|.
    let mut rng = trial_rng(cfg.seed, 300, 0);
    let chain = random_symplectic_near_identity(1, g.chain_delta, &mut rng)
        .and_then(|a| decompose_near_identity_with(&a, &cfg.decompose))
        .map(|f| slabs_of(&f));
    match chain {
        Ok(slabs) if !slabs.is_empty() => {
            let peak = slabs.iter().map(|s| s.alpha.abs()).fold(0.0, f64::max);
            let ext = PoissonSpace::new(1, 0).expect("valid space").enlarged();
            let mut grid = cube_grid(&DVector::zeros(ext.dim()), 1.0, g.grid_per_axis);
            for p in &mut grid {
                p[0] = 0.5 * (p[0] + 1.0);
            }
            let norms: Vec<f64> = g
                .alphas
                .iter()
                .map(|&a| {
                    let scaled: Vec<ChainFactor> = slabs
                        .iter()
                        .map(|s| ChainFactor { alpha: s.alpha * a / peak, ..s.clone() })
                        .collect();
                    let h = make_chained_hamiltonian(&scaled, 1, 0).expect("valid chain").perturbation();
                    c2_scalar(|p| h.value(p), |p| h.gradient(p), |p| h.hessian(p), &grid)
                })
                .collect();
            r.push(Check::near("chained_perturbation_slope", loglog_slope(&g.alphas, &norms), 1.0, g.slope_tol));
            r.set_env("chained_c2", &norms);
        }
        Ok(_) => r.push(Check::holds("chained_perturbation_slope", false)),
        Err(e) => r.push_error("chained_perturbation_slope", &e),
    }
    r.set_env("rotation_c2", &k_norms);
    r
}

/// Analytic gradients agree with central differences, and every generator
/// vanishes identically outside its support.
pub fn generator_consistency(cfg: &SuiteConfig) -> VerificationReport {
    let g = &cfg.generators;
    let mut r = VerificationReport::new("generator-consistency");
    let mut rng = trial_rng(cfg.seed, 301, 0);
    let space = PoissonSpace::new(2, 1).expect("valid space");
    let k = make_rotation_hamiltonian(0.7, 2, 2, 1).expect("valid generator");
    let a = random_symplectic_near_identity(2, 0.05, &mut rng).expect("valid target");
    let f = decompose_near_identity_with(&a, &cfg.decompose).expect("in regime");
    let chain = make_chained_hamiltonian(&slabs_of(&f), 2, 1).expect("valid chain");
    let fields: [(&str, &dyn Hamiltonian, f64); 2] = [("rotation", &k, 1.3), ("chained", &chain, 1.0)];
    for (name, h, radius) in fields {
        let dim = h.space().dim();
        let pts = ball_samples(&DVector::zeros(dim), radius, 200, &mut rng);
        let mut worst = 0.0f64;
        for p in &pts {
            // Balances truncation (third derivatives reach ~1e6 on chains)
            // against roundoff.
            let e = 1e-7;
            let fd = DVector::from_fn(dim, |j, _| {
                let mut a = p.clone();
                let mut b = p.clone();
                a[j] += e;
                b[j] -= e;
                (h.value(&a) - h.value(&b)) / (2.0 * e)
            });
            worst = worst.max((fd - h.gradient(p)).amax());
        }
        r.push(Check::at_most(format!("{name}_gradient_vs_fd"), worst, g.gradient_tol));
    }
    // Support: ρ ≥ 3/4 gives exact zeros.
    let outside = ball_samples(&DVector::zeros(space.dim()), 3.0, 400, &mut rng)
        .into_iter()
        .filter(|p| rho(p) >= 0.75);
    let mut nonzero = 0usize;
    for p in outside {
        if k.value(&p) != 0.0 || k.gradient(&p).iter().any(|v| *v != 0.0) {
            nonzero += 1;
        }
    }
    r.push(Check::at_most("rotation_nonzero_outside_support", nonzero as f64, 0.0));
    r
}

type OutsideTest = dyn Fn(&DVector<f64>) -> bool;

/// Gradient, Hessian and support battery for a single described field.
///
/// Points are drawn around the field's active region: the origin for
/// rotation and quadratic fields, the middle of the slab `x₁ ∈ [0, s]` for
/// transit and chained ones.
pub fn check_field(desc: &FieldDescriptor, seed: u64, samples: usize, tol: f64) -> VerificationReport {
    let mut r = VerificationReport::new("check-field");
    let h = match desc.build() {
        Ok(h) => h,
        Err(e) => {
            r.push_error("build", &e);
            return r;
        }
    };
    let space = h.space();
    let dim = space.dim();
    let (scale, slab) = match desc {
        FieldDescriptor::Drift { rho, .. } | FieldDescriptor::Rotation { rho, .. } | FieldDescriptor::Quadratic { rho, .. } => {
            (rho.unwrap_or(1.0), false)
        }
        FieldDescriptor::Transit { rho, .. } | FieldDescriptor::Chained { rho, .. } => (rho.unwrap_or(1.0), true),
    };
    let mut center = DVector::zeros(dim);
    if slab {
        center[0] = 0.5 * scale;
    }
    let mut rng = trial_rng(seed, 900, 0);
    let pts = ball_samples(&center, scale, samples, &mut rng);
    let e = 1e-7 * scale.max(1.0);
    let mut grad_err = 0.0f64;
    let mut hess_err = 0.0f64;
    for p in &pts {
        let g = h.gradient(p);
        let fd = DVector::from_fn(dim, |j, _| {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += e;
            b[j] -= e;
            (h.value(&a) - h.value(&b)) / (2.0 * e)
        });
        grad_err = max_of([grad_err, (fd - &g).amax() / g.amax().max(1.0)]);
        let hs = h.hessian(p);
        let mut fdh = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut a = p.clone();
            let mut b = p.clone();
            a[j] += e;
            b[j] -= e;
            fdh.set_column(j, &((h.gradient(&a) - h.gradient(&b)) / (2.0 * e)));
        }
        hess_err = max_of([hess_err, (fdh - &hs).amax() / hs.amax().max(1.0)]);
    }
    r.push(Check::at_most("gradient_vs_fd", grad_err, tol));
    r.push(Check::at_most("hessian_vs_fd", hess_err, 10.0 * tol));

    // Outside the declared support the field (or its perturbation of the
    // drift) must vanish exactly.
    let support: Option<Box<OutsideTest>> = match desc {
        FieldDescriptor::Rotation { .. } => Some(Box::new(move |p: &DVector<f64>| rho(&(p / scale)) >= 0.75)),
        FieldDescriptor::Transit { .. } | FieldDescriptor::Chained { .. } => {
            let iy = space.y_index(1);
            Some(Box::new(move |p: &DVector<f64>| {
                let x1 = p[0] / scale;
                x1 <= 0.0 || x1 >= 1.0 || (p[iy] / scale).abs() >= 0.75
            }))
        }
        _ => None,
    };
    if let Some(outside) = support {
        let drift: Option<Drift> = matches!(desc, FieldDescriptor::Chained { .. }).then(|| Drift::new(space));
        let probe = ball_samples(&center, 3.0 * scale, 10 * samples, &mut rng);
        let mut tested = 0usize;
        let mut nonzero = 0usize;
        for p in probe.iter().filter(|p| outside(p)) {
            tested += 1;
            let mut g = h.gradient(p);
            if let Some(d) = &drift {
                g -= d.gradient(p);
            }
            // With a drift only the vector field is compared: a rescaled
            // drift value `s·(−y₁/s)` need not round back to `−y₁`.
            let v = if drift.is_some() { 0.0 } else { h.value(p) };
            if v != 0.0 || g.iter().any(|x| *x != 0.0) {
                nonzero += 1;
            }
        }
        r.push(Check::at_most("nonzero_outside_support", nonzero as f64, 0.0));
        r.set_env("support_points", tested);
    }
    let c2 = c2_scalar(|p| h.value(p), |p| h.gradient(p), |p| h.hessian(p), &pts);
    r.set_env("c2_norm_on_samples", c2);
    r.set_env("kind", h.kind());
    r
}

// ---------------------------------------------------------------------------
// continuous realization

/// Single transit: `D₀P = πᵢ(R_α)`, `τ = 1`, hit on the section.
pub fn criterion_single_transit(cfg: &SuiteConfig) -> VerificationReport {
    let c = &cfg.continuous;
    let mut r = VerificationReport::new("single-transit");
    let mut cases = Vec::new();
    for &d in &c.transit_dims {
        for i in 1..=d {
            for &alpha in &c.transit_alphas {
                cases.push((d, i, alpha));
            }
        }
    }
    let results: Vec<std::result::Result<(f64, f64, f64), String>> = cases
        .par_iter()
        .map(|&(d, i, alpha)| {
            let slab = ChainFactor {
                conjugator: SymplecticMatrix::identity(d),
                i,
                alpha,
            };
            let h = make_chained_hamiltonian(&[slab], d, c.n).map_err(|e| e.to_string())?;
            let res = poincare_map(&h, &DVector::zeros(h.space().dim()), 1.0, &c.poincare).map_err(|e| e.to_string())?;
            let target = plane_rotation(alpha, i, d);
            Ok(((res.jacobian - target).amax(), (res.tau - 1.0).abs(), res.section_residual))
        })
        .collect();
    let ok: Vec<_> = results.iter().filter_map(|x| x.as_ref().ok()).collect();
    r.push(Check::at_most("max_jacobian_error", max_of(ok.iter().map(|x| x.0)), c.jacobian_tol));
    r.push(Check::at_most("max_return_time_error", max_of(ok.iter().map(|x| x.1)), c.tau_tol));
    r.push(Check::at_most("max_section_residual", max_of(ok.iter().map(|x| x.2)), c.section_tol));
    record_failures(&mut r, "failed_cases", &results);
    r
}

/// Chained transits reproduce random `Â`, and `X_{H′} = X_{H₀}` exactly off
/// the tube and along the axis.
/// Per-Hamiltonian measurements behind the chained-transit checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousMeasure {
    pub jacobian_error: f64,
    pub symplectic_defect: f64,
    pub tau: f64,
    pub section_residual: f64,
    pub drift_mismatches: usize,
    pub drift_tested: usize,
}

pub fn measure_continuous(h: &PerturbedHamiltonian, c: &ContinuousSuite, rng: &mut ChaCha8Rng) -> Result<ContinuousMeasure> {
    let res = h.poincare(&c.poincare)?;
    let err = matrix_norm(&(&res.jacobian - h.target.matrix()));
    let defect = symplectic_defect(&res.jacobian)?;
    let dim = h.space().dim();
    let mut mismatches = 0usize;
    let mut tested = 0usize;
    // Γ₀: the x₁ axis, well past both ends of the chain.
    for j in 0..c.drift_samples {
        let mut p = DVector::zeros(dim);
        p[0] = -1.0 + 3.0 * h.section * j as f64 / (c.drift_samples - 1).max(1) as f64;
        tested += 1;
        mismatches += usize::from(!h.matches_drift_at(&p));
    }
    let span = 2.0 * h.section.max(1.0);
    for p in ball_samples(&DVector::zeros(dim), span, c.drift_samples * 4, rng) {
        if h.outside_tube(&p) {
            tested += 1;
            mismatches += usize::from(!h.matches_drift_at(&p));
        }
    }
    Ok(ContinuousMeasure {
        jacobian_error: err,
        symplectic_defect: defect,
        tau: res.tau,
        section_residual: res.section_residual,
        drift_mismatches: mismatches,
        drift_tested: tested,
    })
}

fn push_continuous(r: &mut VerificationReport, c: &ContinuousSuite, ok: &[&ContinuousMeasure]) {
    r.push(Check::at_most("max_jacobian_error", max_of(ok.iter().map(|x| x.jacobian_error)), c.jacobian_tol));
    r.push(Check::at_most("max_symplectic_defect", max_of(ok.iter().map(|x| x.symplectic_defect)), c.jacobian_tol));
    r.push(Check::at_most("drift_mismatches", ok.iter().map(|x| x.drift_mismatches).sum::<usize>() as f64, 0.0));
    r.push(Check::at_least("drift_points_tested", ok.iter().map(|x| x.drift_tested).sum::<usize>() as f64, 1.0));
}

/// The chained-transit checks for a single realized Hamiltonian.
pub fn verify_perturbed_hamiltonian(h: &PerturbedHamiltonian, cfg: &SuiteConfig) -> VerificationReport {
    let c = &cfg.continuous;
    let mut r = VerificationReport::new("realize-flow");
    match measure_continuous(h, c, &mut trial_rng(cfg.seed, 510, 0)) {
        Ok(m) => {
            push_continuous(&mut r, c, &[&m]);
            r.push(Check::at_most("section_residual", m.section_residual, c.section_tol));
            r.set_env("tau", m.tau);
        }
        Err(e) => r.push_error("poincare", &e),
    }
    r.set_env("seed", cfg.seed);
    r.set_env("section", h.section);
    r
}

pub fn criterion_chained_transit(cfg: &SuiteConfig) -> VerificationReport {
    let c = &cfg.continuous;
    let mut r = VerificationReport::new("chained-transit");
    let results: Vec<std::result::Result<ContinuousMeasure, String>> = (0..c.trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(cfg.seed, 500, k as u64);
            let d = c.dims[k % c.dims.len()];
            let target = random_symplectic_near_identity(d, c.delta, &mut rng).map_err(|e| e.to_string())?;
            let h = realize_continuous(&target, c.rho, c.n, &cfg.decompose).map_err(|e| e.to_string())?;
            measure_continuous(&h, c, &mut rng).map_err(|e| e.to_string())
        })
        .collect();
    let ok: Vec<_> = results.iter().filter_map(|x| x.as_ref().ok()).collect();
    push_continuous(&mut r, c, &ok);
    record_failures(&mut r, "failed_trials", &results);
    r.set_env("trials", c.trials);
    r
}

// ---------------------------------------------------------------------------
// discrete realization

fn base_map(kind: usize, space: PoissonSpace, rng: &mut ChaCha8Rng) -> Result<Arc<dyn PoissonMap>> {
    let dim = space.dim();
    let v = ball_samples(&DVector::zeros(dim), 1.0, 1, rng).remove(0);
    Ok(match kind % 4 {
        0 => Arc::new(TranslationMap { space, v }),
        1 => {
            let s = random_symplectic_near_identity(space.d(), 0.3, rng)?;
            let d2 = 2 * space.d();
            let mut m = DMatrix::identity(dim, dim);
            m.view_mut((0, 0), (d2, d2)).copy_from(s.matrix());
            for row in 0..d2 {
                for col in d2..dim {
                    m[(row, col)] = rng.random_range(-0.5..0.5);
                }
            }
            for row in d2..dim {
                for col in d2..dim {
                    m[(row, col)] += rng.random_range(-0.3..0.3);
                }
            }
            let linear = PoissonLinearMap::new(m, space, 1e-10)?;
            Arc::new(AffinePoissonMap { linear, offset: v })
        }
        2 => Arc::new(KFlowMap {
            space,
            alpha: 0.2,
            i: space.d(),
        }),
        _ => Arc::new(Composition {
            outer: Arc::new(TranslationMap { space, v }),
            inner: Arc::new(KFlowMap {
                space,
                alpha: rng.random_range(-0.5..0.5),
                i: 1,
            }),
        }),
    })
}

/// Trial `k` of the discrete battery: a built-in base map, a point `p` and a
/// random target at distance `delta`.
pub fn discrete_case(cfg: &SuiteConfig, tag: u32, k: usize, delta: f64) -> Result<PerturbedMap> {
    let mut rng = trial_rng(cfg.seed, tag, k as u64);
    let d = 1 + k % 2;
    let n = (k / 2) % 2;
    let space = PoissonSpace::new(d, n)?;
    let f = base_map(k / 4, space, &mut rng)?;
    let p = ball_samples(&DVector::zeros(space.dim()), 0.3, 1, &mut rng).remove(0);
    let target = random_symplectic_near_identity(d, delta, &mut rng)?;
    let opts = RealizeOptions {
        chart: None,
        decompose: cfg.decompose,
    };
    realize_discrete(f, None, &p, &target, cfg.discrete.rho, &opts)
}

/// Per-map measurements behind the discrete realization checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMeasure {
    /// `‖D_p g − Â_π·D_p f‖ / ‖D_p f‖` from finite differences.
    pub relative_derivative_error: f64,
    pub poisson_defect: f64,
    pub poisson_defect_fd: f64,
    pub samples_inside: usize,
    pub outside_tested: usize,
    pub outside_changed: usize,
}

pub fn measure_discrete(g: &PerturbedMap, c: &DiscreteSuite, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let dfp = g.base.jacobian(&g.p);
    let rel = g.derivative_error(c.fd_step) / matrix_norm(&dfp);
    // Points near p, most of which land inside the support.
    let inside = ball_samples(&g.p, c.rho, c.defect_samples, rng);
    let defect = max_of(inside.iter().map(|x| g.exact_poisson_defect_at(x)));
    let fd_defect = max_of(inside.iter().map(|x| g.poisson_defect_at(x, c.defect_fd_step)));
    let supported = inside.iter().filter(|x| !g.outside_support(x)).count();
    let (mut tested, mut differ) = (0usize, 0usize);
    for x in ball_samples(&g.p, 4.0, c.outside_samples, rng) {
        if g.outside_support(&x) {
            tested += 1;
            differ += usize::from(g.apply(&x) != g.base.apply(&x));
        }
    }
    DiscreteMeasure {
        relative_derivative_error: rel,
        poisson_defect: defect,
        poisson_defect_fd: fd_defect,
        samples_inside: supported,
        outside_tested: tested,
        outside_changed: differ,
    }
}

fn push_discrete(r: &mut VerificationReport, c: &DiscreteSuite, ok: &[&DiscreteMeasure]) {
    r.push(Check::at_most("max_relative_derivative_error", max_of(ok.iter().map(|x| x.relative_derivative_error)), c.derivative_tol));
    r.push(Check::at_most("max_poisson_defect", max_of(ok.iter().map(|x| x.poisson_defect)), c.defect_tol));
    // g is only C^{1,1} (the bump is C²): central differences straddling a
    // generator's ρ = 1/4 or ρ = 3/4 level set pick up an O(h) error, so the
    // finite-difference defect is reported but not gated.
    r.set_env("max_poisson_defect_fd", max_of(ok.iter().map(|x| x.poisson_defect_fd)));
    r.push(Check::at_least("samples_inside_support", ok.iter().map(|x| x.samples_inside).sum::<usize>() as f64, 1.0));
    r.push(Check::at_least("outside_points_tested", ok.iter().map(|x| x.outside_tested).sum::<usize>() as f64, 1.0));
    r.push(Check::at_most("outside_points_changed", ok.iter().map(|x| x.outside_changed).sum::<usize>() as f64, 0.0));
}

/// The discrete checks for a single realized map.
pub fn verify_perturbed_map(g: &PerturbedMap, cfg: &SuiteConfig) -> VerificationReport {
    let c = &cfg.discrete;
    let mut r = VerificationReport::new("realize-map");
    let m = measure_discrete(g, c, &mut trial_rng(cfg.seed, 610, 0));
    push_discrete(&mut r, c, &[&m]);
    r.set_env("seed", cfg.seed);
    r.set_env("fd_step", c.fd_step);
    r.set_env("defect_fd_step", c.defect_fd_step);
    r
}

/// `D_p g = Â_π·D_p f`, `g = f` off the support, `g` Poisson.
pub fn criterion_discrete_realization(cfg: &SuiteConfig) -> VerificationReport {
    let c = &cfg.discrete;
    let mut r = VerificationReport::new("discrete-realization");
    let results: Vec<std::result::Result<DiscreteMeasure, String>> = (0..c.trials)
        .into_par_iter()
        .map(|k| {
            let g = discrete_case(cfg, 600, k, c.delta).map_err(|e| e.to_string())?;
            Ok(measure_discrete(&g, c, &mut trial_rng(cfg.seed, 601, k as u64)))
        })
        .collect();
    let ok: Vec<_> = results.iter().filter_map(|x| x.as_ref().ok()).collect();
    push_discrete(&mut r, c, &ok);
    record_failures(&mut r, "failed_trials", &results);
    r.set_env("trials", c.trials);
    r.set_env("defect_samples_per_trial", c.defect_samples);
    r.set_env("defect_fd_step", c.defect_fd_step);
    r
}

/// `‖h − id‖_{C¹}` decays like `δ^{1/2}`.
pub fn criterion_perturbation_law(cfg: &SuiteConfig) -> VerificationReport {
    let c = &cfg.discrete;
    let mut r = VerificationReport::new("perturbation-law");
    let sizes: Vec<std::result::Result<f64, String>> = c
        .sweep_deltas
        .par_iter()
        .enumerate()
        .map(|(j, &delta)| {
            let mut worst = 0.0f64;
            for k in 0..c.sweep_trials {
                let mut rng = trial_rng(cfg.seed, 700 + j as u32, k as u64);
                let d = 1 + k % 2;
                let space = PoissonSpace::new(d, 1).map_err(|e| e.to_string())?;
                let target = random_symplectic_near_identity(d, delta, &mut rng).map_err(|e| e.to_string())?;
                let g = realize_discrete(
                    Arc::new(IdentityMap(space)),
                    None,
                    &DVector::zeros(space.dim()),
                    &target,
                    c.rho,
                    &RealizeOptions {
                        chart: None,
                        decompose: cfg.decompose,
                    },
                )
                .map_err(|e| e.to_string())?;
                let pts = ball_samples(&DVector::zeros(space.dim()), c.rho, c.sweep_samples, &mut rng);
                worst = worst.max(g.h_size(&pts, c.fd_step).c1);
            }
            Ok(worst)
        })
        .collect();
    match sizes.iter().cloned().collect::<std::result::Result<Vec<f64>, String>>() {
        Ok(s) => {
            r.push(Check::at_least("loglog_slope", loglog_slope(&c.sweep_deltas, &s), c.min_slope));
            let monotone = s.windows(2).all(|w| w[1] <= w[0]);
            r.push(Check::holds("monotone_in_delta", monotone));
            r.set_env("c1_sizes", &s);
        }
        Err(e) => {
            r.push(Check::holds("loglog_slope", false));
            r.set_env("error", e);
        }
    }
    r
}

// ---------------------------------------------------------------------------
// flowbox

/// `y₁ + ε·Q(x̂, ŷ, z)` with `Q` a random quadratic form on the hatted slots.
pub fn flowbox_example(d: usize, n: usize, epsilon: f64, rng: &mut ChaCha8Rng) -> Result<Field> {
    let space = PoissonSpace::new(d, n)?;
    let dim = space.dim();
    let hat: Vec<usize> = (0..dim).filter(|&j| j != 0 && j != d).collect();
    let q = random_symmetric(hat.len(), rng);
    let mut s = DMatrix::zeros(dim, dim);
    for (a, &ia) in hat.iter().enumerate() {
        for (b, &ib) in hat.iter().enumerate() {
            s[(ia, ib)] = epsilon * q[(a, b)];
        }
    }
    let mut lin = DVector::zeros(dim);
    lin[d] = 1.0;
    Ok(Arc::new(QuadraticField::new(space, s, lin, 0.0)?))
}

/// Appends the flowbox battery for `chart`, checks prefixed by `label`.
pub fn flowbox_checks(cfg: &SuiteConfig, label: &str, chart: &FlowboxChart, tag: u32, r: &mut VerificationReport) -> Result<()> {
    let fb = &cfg.flowbox;
    let h = chart.hamiltonian().clone();
    let space = h.space();
    let x = chart.base().clone();
    let mut rng = trial_rng(cfg.seed, tag, 0);

    let near = ball_samples(&x, fb.radius, fb.bracket_points, &mut rng);
    let brackets: Result<Vec<f64>> = near.par_iter().map(|m| Ok((chart.bracket(m)? - 1.0).abs())).collect();
    r.push(Check::at_most(format!("{label}/bracket_error"), max_of(brackets?), fb.bracket_tol));

    let samples = ball_samples(&x, fb.radius, fb.samples, &mut rng);
    let per: Result<Vec<(f64, f64, f64)>> = samples
        .par_iter()
        .map(|m| {
            let y = chart.forward(m)?;
            let value = (-y[space.d()] - h.value(m)).abs();
            let back = chart.inverse(&y)?;
            let again = chart.forward(&back)?;
            Ok((value, (&again - &y).amax(), (&back - m).amax()))
        })
        .collect();
    let per = per?;
    r.push(Check::at_most(format!("{label}/h0_of_g_minus_h"), max_of(per.iter().map(|p| p.0)), fb.value_tol));
    r.push(Check::at_most(format!("{label}/round_trip_g_ginv"), max_of(per.iter().map(|p| p.1)), fb.round_trip_tol));
    r.push(Check::at_most(format!("{label}/round_trip_ginv_g"), max_of(per.iter().map(|p| p.2)), fb.round_trip_tol));

    let defect = verify_poisson_chart(|p| chart.jacobian(p), &space, &samples[..fb.defect_samples.min(samples.len())], fb.defect_tol);
    for c in defect.checks {
        r.push(Check {
            name: format!("{label}/chart_{}", c.name),
            ..c
        });
    }

    let shifts: Vec<(DVector<f64>, f64, f64)> = samples
        .iter()
        .take(fb.translation_samples)
        .map(|m| (m.clone(), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    let trans: Result<Vec<(f64, f64)>> = shifts
        .par_iter()
        .map(|(m, t1, t2)| {
            let moved_g = chart.flow_g(m, *t1)?;
            let moved = chart.flow_h(&moved_g, *t2)?;
            let mut expect = chart.forward(m)?;
            expect[0] += t2;
            expect[space.d()] += t1;
            let energy = (h.value(&moved_g) - (h.value(m) - t1)).abs();
            Ok(((chart.forward(&moved)? - expect).amax(), energy))
        })
        .collect();
    let trans = trans?;
    r.push(Check::at_most(format!("{label}/translation_identity"), max_of(trans.iter().map(|t| t.0)), fb.translation_tol));
    r.push(Check::at_most(format!("{label}/energy_along_g_flow"), max_of(trans.iter().map(|t| t.1)), fb.translation_tol));
    r.push(Check::at_most(format!("{label}/lie_bracket"), chart.lie_bracket(&x, 0.05, 0.05)?, fb.lie_tol));
    r.push(Check::near(format!("{label}/dirac_pairing_abs_det"), chart.dirac_pairing()?.abs(), 1.0, fb.bracket_tol));
    Ok(())
}

/// Flowbox charts for `H = y₁` and `H = y₁ + ε·Q`.
pub fn criterion_flowbox(cfg: &SuiteConfig) -> VerificationReport {
    let fb = &cfg.flowbox;
    let mut r = VerificationReport::new("flowbox");
    let rng = trial_rng(cfg.seed, 800, 0);
    for (label, eps, tag) in [("linear", 0.0, 801u32), ("quadratic", fb.epsilon, 802u32)] {
        // Both examples share the quadratic form and base point.
        let mut local = rng.clone();
        let built = flowbox_example(fb.d, fb.n, eps, &mut local).and_then(|h| {
            let mut x = ball_samples(&DVector::zeros(h.space().dim()), 0.3, 1, &mut local).remove(0);
            x[0] = 0.0;
            build_flowbox_chart(h, &x, Section::coordinate(x.clone()), Box::new(CoordinateLeafChart), fb.chart)
        });
        if let Err(e) = built.and_then(|chart| flowbox_checks(cfg, label, &chart, tag, &mut r)) {
            r.push_error(format!("{label}/construction"), &e);
        }
    }
    r.set_env("radius", fb.radius);
    r.set_env("samples", fb.samples);
    r
}

/// The normal-form drift in its own chart is the identity.
pub fn flowbox_identity(cfg: &SuiteConfig) -> VerificationReport {
    let fb = &cfg.flowbox;
    let mut r = VerificationReport::new("flowbox-identity");
    let run = || -> Result<f64> {
        let space = PoissonSpace::new(fb.d, fb.n)?;
        let x = DVector::zeros(space.dim());
        let chart = build_flowbox_chart(Arc::new(Drift::new(space)), &x, Section::coordinate(x.clone()), Box::new(CoordinateLeafChart), fb.chart)?;
        let mut rng = trial_rng(cfg.seed, 803, 0);
        let mut worst = 0.0f64;
        for m in ball_samples(&x, fb.radius, 50, &mut rng) {
            worst = worst.max((chart.forward(&m)? - &m).amax());
        }
        Ok(worst)
    };
    match run() {
        Ok(w) => r.push(Check::at_most("chart_minus_identity", w, 1e-12)),
        Err(e) => r.push_error("chart_minus_identity", &e),
    }
    r
}

// ---------------------------------------------------------------------------

pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<VerificationReport> {
    let mut report = VerificationReport::new(name);
    let parts: Vec<VerificationReport> = match name {
        "factorization" => {
            let sweep = factorization_sweep(cfg);
            vec![criterion_round_trip(cfg, &sweep), criterion_sqrt_bound(cfg, &sweep)]
        }
        "generators" => vec![criterion_c2_scaling(cfg), generator_consistency(cfg)],
        "flows" => vec![
            criterion_flow_oracle(cfg),
            criterion_rotation_realization(cfg),
            criterion_conservation(cfg),
        ],
        "realize-discrete" => vec![criterion_discrete_realization(cfg), criterion_perturbation_law(cfg)],
        "realize-continuous" => vec![criterion_single_transit(cfg), criterion_chained_transit(cfg)],
        "flowbox" => vec![criterion_flowbox(cfg), flowbox_identity(cfg)],
        "all" => {
            for s in &SUITES[..SUITES.len() - 1] {
                report.merge(run_suite(s, cfg)?);
            }
            report.set_env("seed", cfg.seed);
            return Ok(report);
        }
        other => return Err(FranksError::UnknownSuite(other.to_string())),
    };
    for p in parts {
        report.merge(p);
    }
    report.set_env("seed", cfg.seed);
    Ok(report)
}
