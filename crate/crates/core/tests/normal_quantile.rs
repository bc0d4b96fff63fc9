use merge_cbf::cbf::{inv_norm_cdf, norm_cdf};
use proptest::prelude::*;

/// Φ(x) from the complementary error function, accurate in the lower tail.
fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Φ⁻¹(p) by bisection on `phi`.
fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn tabulated_quantiles() {
    assert!((inv_norm_cdf(0.99).unwrap() - 2.326347874).abs() < 1e-9);
    assert!((inv_norm_cdf(0.975).unwrap() - 1.959963985).abs() < 1e-9);
    assert!((inv_norm_cdf(0.95).unwrap() - 1.644853627).abs() < 1e-9);
    assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
}

#[test]
fn matches_bisection_across_the_unit_interval() {
    for k in 1..1000 {
        let p = k as f64 / 1000.0;
        let q = inv_norm_cdf(p).unwrap();
        assert!((q - bisect_quantile(p)).abs() < 1e-9, "p = {p}");
    }
    for p in [1e-10, 1e-6, 1e-3, 1.0 - 1e-3, 1.0 - 1e-6] {
        let q = inv_norm_cdf(p).unwrap();
        assert!((q - bisect_quantile(p)).abs() < 1e-8, "p = {p}");
    }
}

#[test]
fn rejects_probabilities_outside_the_open_interval() {
    for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(inv_norm_cdf(p).is_err(), "p = {p}");
    }
}

proptest! {
    #[test]
    fn round_trip(p in 1e-6f64..(1.0 - 1e-6)) {
        let q = inv_norm_cdf(p).unwrap();
        prop_assert!((norm_cdf(q) - p).abs() < 1e-9);
        prop_assert!((phi(q) - p).abs() < 1e-9);
    }

    #[test]
    fn cdf_agrees_with_erfc(x in -8.0f64..8.0) {
        prop_assert!((norm_cdf(x) - phi(x)).abs() < 1e-12);
    }
}
