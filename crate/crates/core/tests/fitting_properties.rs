use proptest::prelude::*;

use dprc_core::fitting::{fit_power_law, FitSample};

fn curve(a: f64, b: f64, xs: &[f64]) -> Vec<FitSample> {
    xs.iter()
        .map(|&x| FitSample {
            samples: x,
            observed_error: a * x.powf(-b),
        })
        .collect()
}

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn noiseless_curves_are_recovered(a in 0.5f64..20.0, b in 0.1f64..1.5, n in 3usize..12) {
        let fit = fit_power_law(&curve(a, b, &grid(n, 10.0, 5000.0))).unwrap();
        prop_assert!((fit.amplitude - a).abs() <= 1e-6 * a, "{fit:?}");
        prop_assert!((fit.decay - b).abs() <= 1e-6 * b, "{fit:?}");
    }

    /// Scaling every error by `k` scales the amplitude by `k` and leaves the
    /// decay alone; scaling every sample count by `s` multiplies the
    /// amplitude by `s^b`.
    #[test]
    fn fits_transform_covariantly(
        a in 0.5f64..10.0,
        b in 0.2f64..1.2,
        k in 0.1f64..10.0,
        s in 0.5f64..4.0,
        noise in prop::collection::vec(-0.05f64..0.05, 8),
    ) {
        let xs = grid(8, 20.0, 2000.0);
        let base: Vec<FitSample> = curve(a, b, &xs)
            .into_iter()
            .zip(&noise)
            .map(|(p, e)| FitSample { observed_error: p.observed_error * (1.0 + e), ..p })
            .collect();
        let f = fit_power_law(&base).unwrap();
        let scaled: Vec<FitSample> = base.iter().map(|p| FitSample { observed_error: p.observed_error * k, ..*p }).collect();
        let fk = fit_power_law(&scaled).unwrap();
        prop_assert!((fk.amplitude - k * f.amplitude).abs() <= 1e-5 * k * f.amplitude, "{f:?} {fk:?}");
        prop_assert!((fk.decay - f.decay).abs() <= 1e-5 * f.decay.max(1e-3));
        prop_assert!((fk.rmse - k * f.rmse).abs() <= 1e-5 * (k * f.rmse).max(1e-12));
        let stretched: Vec<FitSample> = base.iter().map(|p| FitSample { samples: p.samples * s, ..*p }).collect();
        let fs = fit_power_law(&stretched).unwrap();
        prop_assert!((fs.decay - f.decay).abs() <= 1e-5 * f.decay.max(1e-3));
        let expect = f.amplitude * s.powf(f.decay);
        prop_assert!((fs.amplitude - expect).abs() <= 1e-5 * expect, "{fs:?} vs {expect}");
    }

    #[test]
    fn the_fit_beats_nearby_parameters(
        a in 0.5f64..10.0,
        b in 0.2f64..1.2,
        noise in prop::collection::vec(-0.2f64..0.2, 6),
        da in -0.01f64..0.01,
        db in -0.01f64..0.01,
    ) {
        let xs = grid(6, 10.0, 1000.0);
        let pts: Vec<FitSample> = curve(a, b, &xs)
            .into_iter()
            .zip(&noise)
            .map(|(p, e)| FitSample { observed_error: p.observed_error * (1.0 + e), ..p })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        let sse = |a: f64, b: f64| pts.iter().map(|p| (a * p.samples.powf(-b) - p.observed_error).powi(2)).sum::<f64>();
        let here = sse(f.amplitude, f.decay);
        let there = sse(f.amplitude * (1.0 + da), (f.decay + db).max(0.0));
        prop_assert!(here <= there * (1.0 + 1e-9), "{here} > {there}");
    }
}
