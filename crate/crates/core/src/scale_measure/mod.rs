//! Interval-set algebra, Lebesgue–Stieltjes measures of piecewise-linear
//! scale functions, speed measures, and monotone families of characteristic
//! sets.

mod family;
mod intervals;
mod scale;
mod speed;

pub use family::{
    check_nesting, dyadic_rationals, example26_family, growing_removed_interval_family, is_characteristic,
    pointwise_scale_limit, single_removed_interval_family, CharacteristicFamily, CharacteristicReport, Direction,
};
pub use intervals::{set_op, DomainSpec, IntervalUnion, SetOp};
pub use scale::{derive_subscale, stieltjes_measure, ScaleFunction};
pub use speed::SpeedMeasure;

#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn arb_union() -> impl Strategy<Value = IntervalUnion> {
        prop::collection::vec((0u32..32, 1u32..8), 0..5).prop_map(|v| {
            IntervalUnion::from_pairs(
                v.into_iter().map(|(a, w)| (a as f64 / 32.0, ((a + w) as f64 / 32.0).min(1.0))).collect(),
            )
        })
    }

    fn arb_scale() -> impl Strategy<Value = ScaleFunction> {
        prop::collection::vec(0u32..4, 8).prop_map(|incs| {
            let mut acc = 0.0;
            let mut knots = vec![(0.0, 0.0)];
            for (i, inc) in incs.into_iter().enumerate() {
                acc += inc as f64 * 0.25;
                knots.push(((i + 1) as f64 / 8.0, acc));
            }
            ScaleFunction::from_knots(knots, 0.5).unwrap()
        })
    }

    proptest! {
        #[test]
        fn stieltjes_measure_is_modular(s in arb_scale(), g in arb_union(), h in arb_union()) {
            let m = |a: &IntervalUnion| stieltjes_measure(&s, a).unwrap();
            let lhs = m(&g.union(&h)) + m(&g.intersect(&h));
            let rhs = m(&g) + m(&h);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn subscales_partition_the_scale(s in arb_scale(), g in arb_union(), e in 0u32..=8) {
            let e = e as f64 / 8.0;
            let sub = derive_subscale(&s, &g, e).unwrap();
            let rest = derive_subscale(&s, &g.complement_within(0.0, 1.0), e).unwrap();
            for k in 0..=64 {
                let x = k as f64 / 64.0;
                prop_assert!((sub.eval(x) + rest.eval(x) - (s.eval(x) - s.eval(e))).abs() < 1e-12);
            }
            prop_assert_eq!(sub.eval(e), 0.0);
            prop_assert!(sub.knots().windows(2).all(|w| w[0].1 <= w[1].1));
        }

        #[test]
        fn decreasing_family_values_are_monotone(k in 1usize..24, x in 0.5f64..1.0) {
            let dom = DomainSpec::bounded(0.0, 1.0).unwrap();
            let fam = example26_family(&dom, k, &[1, 2, 3, 5, 8]).unwrap();
            let s = ScaleFunction::identity(0.0, 1.0, 0.5).unwrap();
            let vals: Vec<f64> = fam.sets.iter().map(|g| derive_subscale(&s, g, 0.5).unwrap().eval(x)).collect();
            prop_assert!(vals.windows(2).all(|w| w[1] <= w[0] + 1e-15));
            for w in fam.sets.windows(2) {
                prop_assert!(w[1].is_subset_of(&w[0]));
            }
        }
    }
}
