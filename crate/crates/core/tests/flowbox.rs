use std::sync::Arc;

use franks_core::flow::flow_point;
use franks_core::flowbox::{build_flowbox_chart, verify_poisson_chart, CoordinateLeafChart, FlowboxChart, FlowboxConfig, Section};
use franks_core::hamiltonian::{Field, Hamiltonian, QuadraticField};
use franks_core::norms::ball_samples;
use franks_core::poisson::PoissonSpace;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `H = y₁ + 0.1·x₂²y₂` on `R^4`.
#[derive(Debug)]
struct Cubic;

impl Hamiltonian for Cubic {
    fn space(&self) -> PoissonSpace {
        PoissonSpace::new(2, 0).unwrap()
    }
    fn value(&self, p: &DVector<f64>) -> f64 {
        p[2] + 0.1 * p[1] * p[1] * p[3]
    }
    fn gradient(&self, p: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.2 * p[1] * p[3], 1.0, 0.1 * p[1] * p[1]])
    }
    fn kind(&self) -> &'static str {
        "cubic"
    }
}

fn quadratic_example(eps: f64) -> Field {
    // d = 2, n = 1; Q only touches (x₂, y₂, z).
    let space = PoissonSpace::new(2, 1).unwrap();
    let mut s = DMatrix::zeros(5, 5);
    let hat = [1usize, 3, 4];
    let q = [[2.0, 0.5, 0.3], [0.5, 1.0, -0.2], [0.3, -0.2, 0.7]];
    for a in 0..3 {
        for b in 0..3 {
            s[(hat[a], hat[b])] = eps * q[a][b];
        }
    }
    let mut lin = DVector::zeros(5);
    lin[2] = 1.0; // y₁
    Arc::new(QuadraticField::new(space, s, lin, 0.0).unwrap())
}

fn chart_at(h: Field, x: DVector<f64>) -> FlowboxChart {
    build_flowbox_chart(h, &x, Section::coordinate(x.clone()), Box::new(CoordinateLeafChart), FlowboxConfig::default()).unwrap()
}

#[test]
fn tau_matches_dense_scan_on_tilted_section() {
    let h: Field = Arc::new(Cubic);
    let x = DVector::from_vec(vec![0.0, 0.2, 0.1, -0.3]);
    let section = Section {
        point: x.clone(),
        normal: DVector::from_vec(vec![1.0, 0.5, 0.0, 0.2]),
    };
    let chart = build_flowbox_chart(h.clone(), &x, section.clone(), Box::new(CoordinateLeafChart), FlowboxConfig::default()).unwrap();
    let m = DVector::from_vec(vec![0.25, 0.1, 0.0, 0.05]);
    let tau = chart.tau(&m).unwrap();

    // Oracle: scan at 1e-2, then bisect the bracketing interval.
    let s = |t: f64| section.eval(&flow_point(h.as_ref(), &m, t, 1e-3).unwrap());
    let (mut lo, mut hi) = (0.0, 0.0);
    for k in 0..200 {
        let (a, b) = (k as f64 * 1e-2, (k + 1) as f64 * 1e-2);
        if s(a) * s(b) <= 0.0 {
            (lo, hi) = (a, b);
            break;
        }
    }
    assert!(hi > 0.0, "no bracket found");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if s(lo) * s(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((tau - 0.5 * (lo + hi)).abs() < 1e-10, "tau {tau} vs oracle {}", 0.5 * (lo + hi));
    assert!(section.eval(&chart.flow_h(&m, tau).unwrap()).abs() <= 1e-12);
}

#[test]
fn quadratic_flowbox_properties() {
    let h = quadratic_example(0.05);
    let x = DVector::from_vec(vec![0.0, 0.1, 0.2, -0.1, 0.3]);
    let chart = chart_at(h.clone(), x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let samples = ball_samples(&x, 0.1, 20, &mut rng);
    for m in &samples {
        assert!((chart.bracket(m).unwrap() - 1.0).abs() < 1e-6);
        let y = chart.forward(m).unwrap();
        assert!((-y[2] - h.value(m)).abs() < 1e-8, "H0∘g != H");
        let back = chart.inverse(&y).unwrap();
        assert!((back - m).amax() < 1e-8);
        let yy = chart.forward(&chart.inverse(&y).unwrap()).unwrap();
        assert!((yy - &y).amax() < 1e-8);

        // g(φ_H^{t₂}∘φ_G^{t₁}(m)) = g(m) + t₂e_{x₁} + t₁e_{y₁}
        let (t1, t2) = (0.07, -0.04);
        let moved = chart.flow_h(&chart.flow_g(m, t1).unwrap(), t2).unwrap();
        let mut expect = y.clone();
        expect[0] += t2;
        expect[2] += t1;
        assert!((chart.forward(&moved).unwrap() - expect).amax() < 1e-8);
        // H∘φ_G^t = H − t
        assert!((h.value(&chart.flow_g(m, t1).unwrap()) - (h.value(m) - t1)).abs() < 1e-8);
    }
    let rep = verify_poisson_chart(|p| chart.jacobian(p), &h.space(), &samples, 1e-5);
    assert!(rep.pass, "{rep}");
    assert!((chart.dirac_pairing().unwrap().abs() - 1.0).abs() < 1e-6);
    assert!(chart.lie_bracket(&x, 0.05, 0.05).unwrap() < 1e-5);
}

#[test]
fn pure_drift_chart_is_reflection() {
    // For H = y₁ the flow runs x₁ backwards, so g flips the first pair.
    let space = PoissonSpace::new(1, 0).unwrap();
    let h: Field = Arc::new(QuadraticField::new(space, DMatrix::zeros(2, 2), DVector::from_vec(vec![0.0, 1.0]), 0.0).unwrap());
    let chart = chart_at(h, DVector::zeros(2));
    let m = DVector::from_vec(vec![0.03, -0.08]);
    let y = chart.forward(&m).unwrap();
    assert!((y + &m).amax() < 1e-14);
}
