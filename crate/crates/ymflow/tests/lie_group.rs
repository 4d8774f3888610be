use proptest::prelude::*;
use rand::RngCore;
use ymflow::lie::{stream_rng, LieAlgebra};

fn algebras() -> [LieAlgebra; 2] {
    [LieAlgebra::su2(), LieAlgebra::su3()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_action_is_a_lie_automorphism(seed in 0u64..10_000) {
        for alg in algebras() {
            let mut rng = stream_rng(seed, 0);
            let g = alg.random_group(&mut rng, 1.5);
            let x = alg.random_element(&mut rng, 1.0);
            let y = alg.random_element(&mut rng, 1.0);
            let lhs = alg.ad(&g, &alg.bracket(&x, &y).unwrap());
            let rhs = alg.bracket(&alg.ad(&g, &x), &alg.ad(&g, &y)).unwrap();
            let diff: f64 = lhs.0.iter().zip(&rhs.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-10, "{diff}");
            prop_assert!((alg.ad(&g, &x).norm() - x.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn exp_intertwines_conjugation(seed in 0u64..10_000) {
        for alg in algebras() {
            let mut rng = stream_rng(seed, 1);
            let g = alg.random_group(&mut rng, 1.0);
            let x = alg.random_element(&mut rng, 0.8);
            let lhs = alg.exp(&alg.ad(&g, &x));
            let rhs = g.mul(&alg.exp(&x)).mul(&g.inverse());
            prop_assert!(lhs.distance(&rhs) < 1e-10);
        }
    }

    #[test]
    fn adjoint_matrix_is_orthogonal_homomorphism(seed in 0u64..10_000) {
        for alg in algebras() {
            let mut rng = stream_rng(seed, 2);
            let g = alg.random_group(&mut rng, 1.0);
            let h = alg.random_group(&mut rng, 1.0);
            let (ag, ah) = (alg.ad_group_matrix(&g), alg.ad_group_matrix(&h));
            let agh = alg.ad_group_matrix(&g.mul(&h));
            prop_assert!((&agh - &ag * &ah).amax() < 1e-10);
            let id = nalgebra::DMatrix::<f64>::identity(alg.dim(), alg.dim());
            prop_assert!((ag.transpose() * &ag - id).amax() < 1e-10);
        }
    }
}

#[test]
fn rng_streams_are_reproducible_and_distinct() {
    let draw = |seed, stream| {
        let mut r = stream_rng(seed, stream);
        (0..8).map(|_| r.next_u64()).collect::<Vec<_>>()
    };
    assert_eq!(draw(7, 3), draw(7, 3));
    assert_ne!(draw(7, 3), draw(7, 4));
    assert_ne!(draw(7, 3), draw(8, 3));
}

#[test]
fn log_inverts_exp_near_identity() {
    for alg in algebras() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..50 {
            let x = alg.random_element(&mut rng, 0.5);
            let back = alg.log(&alg.exp(&x)).unwrap();
            let err: f64 = x.0.iter().zip(&back.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{} {err}", alg.name());
        }
    }
}
