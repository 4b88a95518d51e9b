use std::f64::consts::{FRAC_PI_4, PI};

use proptest::prelude::*;
use zeno_drag::analytics::{spectral_analysis, Regime};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn characteristic_identities(gd_hz in 1e3f64..1e7, v_frac in -1.0f64..1.0) {
        let gamma_d = 2.0 * PI * gd_hz;
        let v = v_frac * gamma_d / (2.0 * PI);
        let a = spectral_analysis(gamma_d, v);
        let sum = a.lambda_plus + a.lambda_minus;
        let prod = a.lambda_plus * a.lambda_minus;
        prop_assert!((sum.re + gamma_d).abs() <= 1e-12 * gamma_d);
        prop_assert!(sum.im.abs() <= 1e-12 * gamma_d);
        let w2 = a.omega * a.omega;
        prop_assert!((prod.re - w2).abs() <= 1e-12 * gamma_d * gamma_d);
        prop_assert!(a.lambda_plus.re <= 0.0 && a.lambda_minus.re <= 0.0);
        prop_assert_eq!(a.regime == Regime::Zeno, gamma_d >= 2.0 * a.omega.abs());
    }

    #[test]
    fn theta_increases_towards_boundary(gd_hz in 1e4f64..1e7, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
        let gamma_d = 2.0 * PI * gd_hz;
        let vmax = gamma_d / (4.0 * PI);
        let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
        prop_assume!(hi - lo > 1e-9);
        let a = spectral_analysis(gamma_d, lo * vmax).theta.unwrap();
        let b = spectral_analysis(gamma_d, hi * vmax).theta.unwrap();
        prop_assert!(a < b);
        prop_assert!(b <= FRAC_PI_4 + 1e-12);
    }
}

#[test]
fn series_limit_of_jump_rate() {
    let gamma_d = 2.0 * PI * 0.13e6;
    let mut last = f64::INFINITY;
    for ratio in [10.0, 30.0, 100.0] {
        let omega = gamma_d / ratio;
        let a = spectral_analysis(gamma_d, omega / (2.0 * PI));
        let r = a.gamma_j.unwrap() / (omega * omega / (2.0 * gamma_d));
        // 1 + (omega / gamma_d)^2 + O(ratio^-4)
        let series = 1.0 + 1.0 / (ratio * ratio) + 2.0 / ratio.powi(4);
        assert!((r - series).abs() < 6.0 / ratio.powi(6), "ratio {ratio}: {r} vs {series}");
        assert!((r - 1.0).abs() < last);
        last = (r - 1.0).abs();
    }
}
