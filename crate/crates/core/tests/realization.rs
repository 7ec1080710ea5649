use std::sync::Arc;

use franks_core::norms::{ball_samples, matrix_norm};
use franks_core::poisson::{random_symplectic_near_identity, PoissonLinearMap, PoissonSpace, SymplecticMatrix};
use franks_core::realization::{
    realize_discrete, AffinePoissonMap, IdentityMap, KFlowMap, PoissonMap, RealizeOptions, TranslationMap,
};
use franks_core::FranksError;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `diag(S, B)` with `S` symplectic and `B` invertible: a Poisson chart
/// with no coupling block.
fn block_chart(space: PoissonSpace, seed: u64) -> PoissonLinearMap {
    let s = random_symplectic_near_identity(space.d(), 0.4, &mut rng(seed)).unwrap();
    let dim = space.dim();
    let d2 = 2 * space.d();
    let mut m = DMatrix::identity(dim, dim);
    m.view_mut((0, 0), (d2, d2)).copy_from(s.matrix());
    for r in d2..dim {
        m[(r, r)] = 1.7;
    }
    PoissonLinearMap::new(m, space, 1e-10).unwrap()
}

#[test]
fn derivative_is_realized_through_a_nontrivial_chart() {
    let space = PoissonSpace::new(2, 1).unwrap();
    let f: Arc<dyn PoissonMap> = Arc::new(KFlowMap { space, alpha: 0.3, i: 2 });
    let p = DVector::from_vec(vec![0.1, -0.05, 0.2, 0.0, 0.4]);
    let target = random_symplectic_near_identity(2, 1e-2, &mut rng(4)).unwrap();
    let opts = RealizeOptions {
        chart: Some(block_chart(space, 5)),
        ..RealizeOptions::default()
    };
    let g = realize_discrete(f.clone(), None, &p, &target, 0.5, &opts).unwrap();
    let dgp = g.exact_jacobian(&p);
    let rel = matrix_norm(&(&dgp - &g.target_derivative)) / matrix_norm(&f.jacobian(&p));
    assert!(rel < 1e-12, "relative derivative error {rel}");
    assert!(g.derivative_error(1e-5) / matrix_norm(&f.jacobian(&p)) < 1e-5);
    assert_eq!(g.apply(&p), f.apply(&p), "p is a fixed point of the perturbation");
    for x in ball_samples(&p, 0.5, 200, &mut rng(6)) {
        assert!(g.exact_poisson_defect_at(&x) < 1e-10);
    }
}

#[test]
fn identity_target_leaves_the_map_untouched() {
    let space = PoissonSpace::new(1, 2).unwrap();
    let v = DVector::from_vec(vec![0.3, -0.1, 2.0, 0.5]);
    let f: Arc<dyn PoissonMap> = Arc::new(TranslationMap { space, v });
    let g = realize_discrete(f.clone(), None, &DVector::zeros(4), &SymplecticMatrix::identity(1), 0.5, &RealizeOptions::default())
        .unwrap();
    assert!(g.generators.is_empty());
    for x in ball_samples(&DVector::zeros(4), 1.0, 100, &mut rng(1)) {
        assert_eq!(g.apply(&x), f.apply(&x));
    }
}

#[test]
fn outside_the_support_g_equals_f_bitwise() {
    let space = PoissonSpace::new(2, 0).unwrap();
    let f: Arc<dyn PoissonMap> = Arc::new(IdentityMap(space));
    let target = random_symplectic_near_identity(2, 5e-3, &mut rng(8)).unwrap();
    let g = realize_discrete(f, None, &DVector::zeros(4), &target, 0.2, &RealizeOptions::default()).unwrap();
    let mut outside = 0;
    for x in ball_samples(&DVector::zeros(4), 2.0, 500, &mut rng(9)) {
        if g.outside_support(&x) {
            outside += 1;
            assert_eq!(g.apply(&x), x);
        }
        // The support never leaves the ρ-ball.
        if x.norm() > 0.2 {
            assert!(g.outside_support(&x), "{x} is inside the support");
        }
    }
    assert!(outside > 400);
}

#[test]
fn perturbation_shrinks_with_the_target_distance() {
    let space = PoissonSpace::new(1, 1).unwrap();
    let mut sizes = Vec::new();
    for delta in [1e-2, 1e-3, 1e-4] {
        let target = random_symplectic_near_identity(1, delta, &mut rng(2)).unwrap();
        let g = realize_discrete(Arc::new(IdentityMap(space)), None, &DVector::zeros(3), &target, 0.5, &RealizeOptions::default())
            .unwrap();
        let pts = ball_samples(&DVector::zeros(3), 0.5, 300, &mut rng(3));
        sizes.push(g.h_size(&pts, 1e-5).c1);
    }
    assert!(sizes[0] > sizes[1] && sizes[1] > sizes[2], "{sizes:?}");
}

#[test]
fn invalid_inputs_are_reported() {
    let space = PoissonSpace::new(2, 0).unwrap();
    let f: Arc<dyn PoissonMap> = Arc::new(IdentityMap(space));
    let t1 = SymplecticMatrix::identity(1);
    let err = realize_discrete(f.clone(), None, &DVector::zeros(4), &t1, 0.5, &RealizeOptions::default()).unwrap_err();
    assert!(matches!(err, FranksError::DimensionMismatch { .. }));
    let t2 = SymplecticMatrix::identity(2);
    assert!(realize_discrete(f.clone(), None, &DVector::zeros(3), &t2, 0.5, &RealizeOptions::default()).is_err());
    assert!(matches!(
        realize_discrete(f.clone(), None, &DVector::zeros(4), &t2, 0.0, &RealizeOptions::default()),
        Err(FranksError::InvalidParameter(_))
    ));
    // A base derivative outside the Poisson group is refused.
    let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 1.0, 1.0]));
    assert!(matches!(
        realize_discrete(f.clone(), Some(bad), &DVector::zeros(4), &t2, 0.5, &RealizeOptions::default()),
        Err(FranksError::NotPoisson(_))
    ));
    // Charts with a coupling block are not supported.
    let space1 = PoissonSpace::new(1, 1).unwrap();
    let coupled = PoissonLinearMap::new(DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]), space1, 1e-10).unwrap();
    let opts = RealizeOptions { chart: Some(coupled), ..RealizeOptions::default() };
    let affine: Arc<dyn PoissonMap> = Arc::new(AffinePoissonMap { linear: PoissonLinearMap::identity(space1), offset: DVector::zeros(3) });
    assert!(matches!(
        realize_discrete(affine, None, &DVector::zeros(3), &SymplecticMatrix::identity(1), 0.5, &opts),
        Err(FranksError::ChartError(_))
    ));
}
