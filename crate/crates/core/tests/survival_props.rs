use dto_core::survival::{
    delta_effect, prob_visit_if_not_send, prob_visit_if_send, weibull_cdf, weibull_pdf, StatePair, WeibullParams,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = WeibullParams> {
    (1e-3f64..2.0, 0.1f64..3.0).prop_map(|(l, a)| WeibullParams::new(l, a).unwrap())
}

proptest! {
    #[test]
    fn cdf_is_monotone_bounded_and_complements_survival(p in params(), t in 0.0f64..200.0, dt in 0.0f64..50.0) {
        let f = weibull_cdf(t, p).unwrap();
        let g = weibull_cdf(t + dt, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(g >= f);
        prop_assert!((p.survival(t).unwrap() + f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pdf_matches_cdf_slope(p in params(), t in 0.5f64..30.0) {
        let h = 1e-5 * t;
        let fd = (weibull_cdf(t + h, p).unwrap() - weibull_cdf(t - h, p).unwrap()) / (2.0 * h);
        let pdf = weibull_pdf(t, p).unwrap().value();
        prop_assert!((fd - pdf).abs() <= 1e-6 * pdf.abs().max(1e-3), "fd {fd} pdf {pdf}");
    }

    #[test]
    fn exponential_wait_is_memoryless(lambda in 1e-3f64..2.0, t in 0.01f64..100.0, w0 in 0.0f64..500.0) {
        let p = WeibullParams::new(lambda, 1.0).unwrap();
        let a = prob_visit_if_not_send(t, p, 0.0).unwrap();
        let b = prob_visit_if_not_send(t, p, w0).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn delta_increases_with_elapsed_time_when_alpha_below_one(
        l0 in 0.01f64..0.3,
        a0 in 0.05f64..0.95,
        post in params(),
        t in 1.0f64..48.0,
        mut grid in proptest::collection::vec(0.0f64..128.0, 2..10),
    ) {
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let pre = WeibullParams::new(l0, a0).unwrap();
        let d: Vec<f64> = grid.iter().map(|&w| delta_effect(&StatePair::new(pre, post, w).unwrap(), t).unwrap()).collect();
        prop_assert!(d.windows(2).all(|w| w[1] > w[0]), "{grid:?} -> {d:?}");
    }

    #[test]
    fn delta_is_send_minus_wait(pre in params(), post in params(), t in 0.01f64..96.0, w0 in 0.0f64..96.0) {
        let d = delta_effect(&StatePair::new(pre, post, w0).unwrap(), t).unwrap();
        let direct = prob_visit_if_send(t, post).unwrap() - prob_visit_if_not_send(t, pre, w0).unwrap();
        prop_assert!((d - direct).abs() < 1e-12);
    }
}
