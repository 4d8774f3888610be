use ymflow::gauge::{apply_gauge, holonomy_covariance_residual, wilson_loop, GaugeTransform};
use ymflow::lie::{stream_rng, LieAlgebra};
use ymflow::oneform::{random_trig_form, CurveSpec, LatticeOneForm};

fn loops() -> Vec<CurveSpec> {
    vec![
        CurveSpec::rectangle([0.1, 0.2], 0.4, 0.3).unwrap(),
        CurveSpec::rectangle([0.6, 0.55], 0.3, 0.35).unwrap(),
        CurveSpec::circle([0.5, 0.5], 0.2).unwrap(),
    ]
}

#[test]
fn constant_gauge_leaves_wilson_loops_unchanged() {
    for alg in [LieAlgebra::su2(), LieAlgebra::su3()] {
        let n = 32;
        let a = random_trig_form(alg.dim(), 2, 0.8, 3).to_lattice(n);
        let g = GaugeTransform::constant(n, alg.random_group(&mut stream_rng(4, 0), 2.0));
        let ag = apply_gauge(&alg, &a, &g).unwrap();
        let mesh = 0.25 / n as f64;
        for lp in loops() {
            let w = wilson_loop(&alg, &LatticeOneForm::new(a.clone()), &lp, mesh).unwrap();
            let wg = wilson_loop(&alg, &LatticeOneForm::new(ag.clone()), &lp, mesh).unwrap();
            assert!((w - wg).abs() < 1e-12, "{} {w} {wg}", alg.name());
            assert!(w.abs() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn identity_gauge_is_a_no_op() {
    let alg = LieAlgebra::su2();
    let a = random_trig_form(3, 2, 1.0, 8).to_lattice(16);
    let ag = apply_gauge(&alg, &a, &GaugeTransform::identity(&alg, 16)).unwrap();
    assert!(ag.sup_distance(&a) < 1e-14);
}

#[test]
fn covariance_residual_shrinks_under_refinement() {
    let alg = LieAlgebra::su2();
    let lp = CurveSpec::rectangle([0.2, 0.3], 0.5, 0.4).unwrap();
    let residual = |n: usize| {
        let a = random_trig_form(3, 1, 0.5, 31).to_lattice(n);
        let g = GaugeTransform::smooth_random(&alg, n, 1, 0.05, 32);
        holonomy_covariance_residual(&alg, &a, &g, &lp, 0.25 / n as f64).unwrap()
    };
    let (r32, r64) = (residual(32), residual(64));
    assert!(r64 < r32, "{r32} {r64}");
    assert!(r64 < 5e-3, "{r64}");
}

#[test]
fn successive_gauge_maps_compose() {
    let alg = LieAlgebra::su2();
    let gap = |n: usize| {
        let a = random_trig_form(3, 1, 0.5, 41).to_lattice(n);
        let g = GaugeTransform::smooth_random(&alg, n, 1, 0.05, 42);
        let h = GaugeTransform::smooth_random(&alg, n, 1, 0.05, 43);
        let twice = apply_gauge(&alg, &apply_gauge(&alg, &a, &g).unwrap(), &h).unwrap();
        let once = apply_gauge(&alg, &a, &h.compose(&g).unwrap()).unwrap();
        twice.sup_distance(&once)
    };
    let (e32, e64) = (gap(32), gap(64));
    assert!(e64 < e32 / 2.0, "{e32} {e64}");
}
