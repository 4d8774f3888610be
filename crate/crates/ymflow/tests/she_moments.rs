use proptest::prelude::*;
use std::f64::consts::PI;
use ymflow::oneform::{Segment, Triangle};
use ymflow::she::{mode_variance, segment_second_moment, stationary_mode_variance, triangle_second_moment};

fn arb_seg() -> impl Strategy<Value = Segment> {
    (0.0f64..1.0, 0.0f64..1.0, 0.01f64..0.25, 0.0f64..(2.0 * PI))
        .prop_map(|(x, y, r, t)| Segment { x: [x, y], v: [r * t.cos(), r * t.sin()] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mode_variance_grows_towards_stationary(k0 in -20i64..20, k1 in -20i64..20, t in 1e-4f64..1.0, dt in 0.0f64..1.0) {
        let k = [k0, k1];
        let (a, b) = (mode_variance(k, t), mode_variance(k, t + dt));
        prop_assert!(a > 0.0 && b >= a);
        prop_assert!(a <= t * (1.0 + 1e-12));
        if k != [0, 0] {
            prop_assert!(b <= stationary_mode_variance(k));
        }
    }

    #[test]
    fn segment_moment_increases_in_time(s in arb_seg(), t in 0.01f64..0.2) {
        let a = segment_second_moment(&s, t, 12).value;
        let b = segment_second_moment(&s, 2.0 * t, 12).value;
        prop_assert!(a > 0.0 && b > a);
    }

    /// |X_P|² ≤ 3 Σ|X_side|² pathwise, so the same holds for second moments.
    #[test]
    fn triangle_moment_bounded_by_boundary(p in (0.0f64..1.0, 0.0f64..1.0), q in arb_seg(), r in arb_seg(), t in 0.01f64..0.2) {
        let p0 = [p.0, p.1];
        let p1 = [p0[0] + q.v[0], p0[1] + q.v[1]];
        let p2 = [p0[0] + r.v[0], p0[1] + r.v[1]];
        let tri = Triangle { vertices: [p0, p1, p2] };
        let sides = [
            Segment { x: p0, v: [p1[0] - p0[0], p1[1] - p0[1]] },
            Segment { x: p1, v: [p2[0] - p1[0], p2[1] - p1[1]] },
            Segment { x: p2, v: [p0[0] - p2[0], p0[1] - p2[1]] },
        ];
        let k = 10;
        let whole = triangle_second_moment(&tri, t, k).value;
        let bound: f64 = sides.iter().map(|s| segment_second_moment(s, t, k).value).sum::<f64>() * 3.0;
        prop_assert!(whole <= bound * (1.0 + 1e-9), "{whole} {bound}");
    }
}

#[test]
fn zero_mode_variance_is_time() {
    assert_eq!(mode_variance([0, 0], 0.37), 0.37);
    assert!(stationary_mode_variance([0, 0]).is_infinite());
}

#[test]
fn degenerate_segment_has_no_moment() {
    let s = Segment { x: [0.3, 0.4], v: [0.0, 0.0] };
    assert_eq!(segment_second_moment(&s, 0.1, 8).value, 0.0);
}
