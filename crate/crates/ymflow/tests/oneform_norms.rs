use proptest::prelude::*;
use std::f64::consts::PI;
use ymflow::lattice::LatticeGaugeField;
use ymflow::oneform::{random_trig_form, LatticeOneForm, NormKind, SampleFamily, SamplerConfig, Segment, SegmentFunction};

const KINDS: [NormKind; 4] = [NormKind::Alpha, NormKind::Gr, NormKind::Vee, NormKind::Tri];

fn scaled(a: &LatticeGaugeField, s: f64) -> LatticeGaugeField {
    LatticeGaugeField {
        comps: [a.comps[0].scaled(s), a.comps[1].scaled(s)],
    }
}

fn norms(fam: &SampleFamily, a: &LatticeGaugeField, alpha: f64) -> Vec<f64> {
    let vals = fam.evaluate(&LatticeOneForm::new(a.clone()));
    KINDS.iter().map(|&k| fam.norm(k, alpha, &vals).unwrap().value).collect()
}

fn family() -> SampleFamily {
    SampleFamily::new(&SamplerConfig {
        seed: 5,
        ..SamplerConfig::default()
    })
}

#[test]
fn norms_are_seminorms_over_a_fixed_family() {
    let fam = family();
    let a = random_trig_form(3, 3, 1.0, 21).to_lattice(32);
    let b = random_trig_form(3, 2, 0.7, 22).to_lattice(32);
    let mut sum = a.clone();
    for c in 0..2 {
        sum.comps[c].axpy(1.0, &b.comps[c]);
    }
    for alpha in [0.5, 0.75, 0.95] {
        let (na, nb, ns) = (norms(&fam, &a, alpha), norms(&fam, &b, alpha), norms(&fam, &sum, alpha));
        for k in 0..KINDS.len() {
            assert!(ns[k] <= na[k] + nb[k] + 1e-12 * (na[k] + nb[k]), "{:?}", KINDS[k]);
        }
        for s in [-2.5, 0.3, 7.0] {
            let nsc = norms(&fam, &scaled(&a, s), alpha);
            for k in 0..KINDS.len() {
                assert!((nsc[k] - s.abs() * na[k]).abs() <= 1e-12 * nsc[k].max(1.0), "{:?} {s}", KINDS[k]);
            }
        }
    }
}

#[test]
fn zero_form_has_zero_norms() {
    let fam = family();
    let z = LatticeGaugeField::zeros(16, 3);
    assert!(norms(&fam, &z, 0.6).iter().all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// A constant form integrates to ⟨(c₁, c₂), v⟩ along any segment.
    #[test]
    fn constant_form_integrates_exactly(
        x in 0.0f64..1.0, y in 0.0f64..1.0, r in 0.0f64..0.25, th in 0.0f64..(2.0 * PI),
        c1 in -3.0f64..3.0, c2 in -3.0f64..3.0,
    ) {
        let n = 16;
        let mut a = LatticeGaugeField::zeros(n, 1);
        a.comps[0].data.iter_mut().for_each(|v| *v = c1);
        a.comps[1].data.iter_mut().for_each(|v| *v = c2);
        let seg = Segment { x: [x, y], v: [r * th.cos(), r * th.sin()] };
        let got = LatticeOneForm::new(a).eval(&seg);
        let want = c1 * seg.v[0] + c2 * seg.v[1];
        prop_assert!((got.0[0] - want).abs() < 1e-12);
    }

    /// Integrals are unchanged by an integer translation on the torus.
    #[test]
    fn periodic_translation_invariance(
        x in 0.0f64..1.0, y in 0.0f64..1.0, r in 0.0f64..0.25, th in 0.0f64..(2.0 * PI),
        sx in -2i32..3, sy in -2i32..3,
    ) {
        let f = LatticeOneForm::new(random_trig_form(2, 2, 1.0, 9).to_lattice(32));
        let v = [r * th.cos(), r * th.sin()];
        let s0 = Segment { x: [x, y], v };
        let s1 = Segment { x: [x + sx as f64, y + sy as f64], v };
        let (a, b) = (f.eval(&s0), f.eval(&s1));
        prop_assert!((&a - &b).max_abs() < 1e-10);
    }
}
