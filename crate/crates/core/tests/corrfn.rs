use std::sync::OnceLock;

use harris::rng::SeedStream;
use harris::stats::ks_one_sample;
use harris::{CorrelationFunction, NoiseClass, ScaleSpeedChart};
use proptest::prelude::*;
use rand::Rng;

fn table() -> CorrelationFunction {
    let rows: Vec<(f64, f64)> = (0..=400)
        .map(|k| {
            let x = if k == 0 { 0.0 } else { 10f64.powf(-9.0 + 11.0 * k as f64 / 400.0) };
            (x, (-x.powf(0.4)).exp())
        })
        .collect();
    CorrelationFunction::tabulated(rows).unwrap()
}

fn kinds() -> Vec<CorrelationFunction> {
    vec![
        CorrelationFunction::Indicator,
        CorrelationFunction::exp_power(1.0, 0.5).unwrap(),
        CorrelationFunction::exp_power(3.0, 1.0).unwrap(),
        table(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn even_and_bounded(x in -50.0f64..50.0, c in 0.1f64..5.0, alpha in 0.05f64..=1.0) {
        let mut fs = kinds();
        fs.push(CorrelationFunction::exp_power(c, alpha).unwrap());
        for f in &fs {
            let v = f.eval(x);
            prop_assert_eq!(v, f.eval(-x));
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn nonincreasing_away_from_zero(a in 0.0f64..20.0, d in 0.0f64..5.0) {
        for f in &kinds() {
            prop_assert!(f.eval(a) >= f.eval(a + d));
        }
    }
}

#[test]
fn origin_value_is_one() {
    for f in &kinds() {
        assert_eq!(f.eval(0.0), 1.0);
    }
    assert_eq!(CorrelationFunction::Indicator.eval(1e-300), 0.0);
}

#[test]
fn sample_mu_matches_one_minus_b() {
    for f in [CorrelationFunction::exp_power(1.0, 0.5).unwrap(), CorrelationFunction::exp_power(2.0, 1.0).unwrap(), table()] {
        let mut rng = SeedStream::new(17).rng(0);
        let xs: Vec<f64> = (0..100_000).map(|_| f.sample_mu(rng.random::<f64>())).collect();
        let d = ks_one_sample(&xs, |x| 1.0 - f.eval(x)).unwrap();
        assert!(d <= 0.01, "{f:?}: KS {d}");
    }
}

#[test]
fn classification_of_the_power_family() {
    for k in 1..=9 {
        let f = CorrelationFunction::exp_power(1.0, k as f64 / 10.0).unwrap();
        assert_eq!(f.classify().unwrap(), NoiseClass::Nonclassical);
    }
    for c in [0.7, 1.0, 3.0] {
        let f = CorrelationFunction::exp_power(c, 1.0).unwrap();
        assert_eq!(f.classify().unwrap(), NoiseClass::Classical);
    }
    // the power family is restricted to α ≤ 1
    assert!(CorrelationFunction::exp_power(1.0, 1.5).is_err());
    assert_eq!(CorrelationFunction::Indicator.classify().unwrap(), NoiseClass::Nonclassical);
    assert_eq!(table().classify().unwrap(), NoiseClass::Nonclassical);
}

fn chart() -> &'static ScaleSpeedChart {
    static C: OnceLock<ScaleSpeedChart> = OnceLock::new();
    C.get_or_init(|| ScaleSpeedChart::build(&CorrelationFunction::exp_power(1.0, 0.5).unwrap(), 64.0, 4096).unwrap())
}

proptest! {
    #[test]
    fn chart_round_trip(u in 0.0f64..1.0) {
        let (lo, hi) = chart().x_range();
        let x = lo + u * (hi - lo);
        let back = chart().x_of_xi(chart().xi_of_x(x));
        prop_assert!((back - x).abs() <= 1e-6 * (1.0 + x), "x={x} back={back}");
    }

    #[test]
    fn chart_is_increasing(a in 0.0f64..5.0, d in 1e-6f64..1.0) {
        prop_assert!(chart().xi_of_x(a + d) > chart().xi_of_x(a));
    }
}
