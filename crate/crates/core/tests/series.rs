mod common;

use proptest::prelude::*;

use gpam::combinatorics::{compositions, factorial, maps_g, riordan_derivative, weights_series, weights_w, FormalSeries, MapFilter};

use common::{poly, series_exp_by_powers};

fn coeffs(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    len.prop_flat_map(|n| prop::collection::vec(-1.0..1.0f64, n))
}

proptest! {
    #[test]
    fn riordan_matches_composed_polynomial(
        f in coeffs(1..=6),
        g in coeffs(1..=4),
        x in -0.9..0.9f64,
        m in 1usize..=6,
    ) {
        let gx = poly::eval(&g, x);
        let f_derivs: Vec<f64> = (0..=m).map(|k| poly::eval(&poly::nth_derivative(&f, k), gx)).collect();
        let g_derivs: Vec<f64> = (0..=m).map(|i| poly::eval(&poly::nth_derivative(&g, i), x)).collect();
        let got = riordan_derivative(&f_derivs, &g_derivs, m).unwrap();
        let expected = poly::eval(&poly::nth_derivative(&poly::compose(&f, &g), m), x);
        prop_assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
    }

    #[test]
    fn weights_agree_with_both_series_routes(tail in prop::collection::vec(-3.0..3.0f64, 0..=6)) {
        let n = tail.len();
        let mut fhat = vec![0.0; 3];
        fhat.extend(&tail);
        let w = weights_w(&fhat, n).unwrap();
        let via_series = weights_series(&fhat, n).unwrap();
        let mut s = vec![0.0; n + 1];
        for m in 1..=n {
            s[m] = -fhat[m + 2] / factorial(m + 2);
        }
        let oracle = series_exp_by_powers(&s);
        prop_assert_eq!(w.len(), n + 1);
        prop_assert_eq!(w[0], 1.0);
        for m in 0..=n {
            prop_assert!((w[m] - oracle[m]).abs() <= 1e-12 * oracle[m].abs().max(1.0));
            prop_assert!((w[m] - via_series[m]).abs() <= 1e-12 * oracle[m].abs().max(1.0));
        }
    }

    #[test]
    fn series_exponential_is_a_homomorphism(
        a in prop::collection::vec(-1.0..1.0f64, 5),
        b in prop::collection::vec(-1.0..1.0f64, 5),
    ) {
        let mut a = a;
        let mut b = b;
        a[0] = 0.0;
        b[0] = 0.0;
        let sa = FormalSeries::new(a);
        let sb = FormalSeries::new(b);
        let lhs = sa.add(&sb).exp().unwrap();
        let rhs = sa.exp().unwrap().mul(&sb.exp().unwrap());
        for (l, r) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            prop_assert!((l - r).abs() < 1e-13);
        }
    }
}

#[test]
fn composition_counts_are_binomial() {
    // compositions of m into k positive parts: C(m−1, k−1)
    for m in 1..=8usize {
        for k in 1..=m {
            let expected = factorial(m - 1) / (factorial(k - 1) * factorial(m - k));
            assert_eq!(compositions(k, m).len() as f64, expected);
        }
        assert!(compositions(m + 1, m).is_empty());
    }
}

#[test]
fn map_enumeration_partitions_by_excess() {
    for k in 1..=3usize {
        for n in 1..=3usize {
            let all = maps_g(k, n, MapFilter::All);
            assert_eq!(all.len(), n.pow(k as u32));
            for map in &all {
                assert_eq!(map.len(), k);
                assert!(map.excess() >= k && map.excess() <= k * n);
                assert_eq!(map.size(), map.excess() + 2 * k);
            }
            let low = maps_g(k, n, MapFilter::ExcessAtMost(n)).len();
            let high = maps_g(k, n, MapFilter::ExcessAbove(n)).len();
            assert_eq!(low + high, all.len());
        }
    }
}

#[test]
fn exponential_rejects_constant_term() {
    assert!(FormalSeries::new(vec![0.5, 1.0]).exp().is_err());
}

#[test]
fn low_order_weights_closed_form() {
    let fhat = [0.0, 0.0, 0.0, 1.5, -2.0, 0.7];
    let w = weights_w(&fhat, 3).unwrap();
    let (f3, f4, f5) = (fhat[3], fhat[4], fhat[5]);
    assert!((w[1] + f3 / 6.0).abs() < 1e-15);
    assert!((w[2] - (-f4 / 24.0 + f3 * f3 / 72.0)).abs() < 1e-15);
    let w3 = -f5 / 120.0 + f3 * f4 / 144.0 - f3.powi(3) / 1296.0;
    assert!((w[3] - w3).abs() < 1e-15);
}
