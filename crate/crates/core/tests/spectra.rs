use harris::flows::Rho;
use harris::rng::{replicate, SeedStream};
use harris::sde::SimParams;
use harris::semigroup::{GridSpec, Solver};
use harris::spectra::{
    extrapolate_one_minus, generating_function, prob_avoid, prob_nonempty_three_ways, sample_spectral_set,
    spectral_mass_fit, Estimate, McParams, SpectralSampler,
};
use harris::{CorrelationFunction, Error, RegimeSchedule};

fn cheap() -> SimParams {
    SimParams {
        dt: 1e-3,
        dt_w: 1e-5,
        levels: 7,
        near_k: 3.0,
    }
}

fn cheap_mc() -> McParams {
    McParams {
        spectral: cheap(),
        flow_grid: cheap(),
        ..McParams::default()
    }
}

fn half() -> CorrelationFunction {
    CorrelationFunction::exp_power(1.0, 0.5).unwrap()
}

const RHOS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.9];

fn genfun(corr: &CorrelationFunction, f: &str, n: usize) -> Vec<Estimate> {
    let f = RegimeSchedule::parse(f).unwrap();
    generating_function(corr, &f, &RHOS.map(Rho::Value), n, 31, cheap()).unwrap()
}

#[test]
fn generating_function_is_a_monotone_probability_transform() {
    let g = genfun(&half(), "0,0.5", 6000);
    for e in &g {
        assert!(e.value >= -3.0 * e.stderr && e.value <= 1.0 + 3.0 * e.stderr, "{e:?}");
    }
    for w in g.windows(2) {
        assert!(w[1].value >= w[0].value - 2.0 * w[0].stderr.hypot(w[1].stderr), "{w:?}");
    }
    let (v, se) = extrapolate_one_minus(&RHOS, &g).unwrap();
    assert!(v <= 1.0 + 3.0 * se && v >= g[4].value - 3.0 * se);
}

#[test]
fn larger_sets_have_smaller_generating_functions() {
    let small = genfun(&half(), "0.25,0.5", 6000);
    let large = genfun(&half(), "0,0.75", 6000);
    for (s, l) in small.iter().zip(&large) {
        assert!(s.value >= l.value - 2.0 * s.stderr.hypot(l.stderr), "{s:?} vs {l:?}");
    }
}

#[test]
fn avoidance_and_hitting_are_complementary() {
    let corr = half();
    let f = RegimeSchedule::parse("0.25,0.5").unwrap();
    let a = prob_avoid(&corr, &f, 2000, 3, &cheap_mc(), GridSpec::default()).unwrap();
    let sampler = SpectralSampler::new(&corr, cheap()).unwrap();
    let hits = replicate(8000, &SeedStream::new(77), |_, rng| {
        f64::from(u8::from(!sampler.avoids(&f, rng).unwrap()))
    });
    let hit = Estimate::from_samples("hit", &hits, 77);
    let sum = a.deterministic.value + hit.value;
    assert!((sum - 1.0).abs() <= 3.0 * hit.stderr, "{sum} ± {}", hit.stderr);
    assert!(a.switching.z_distance(&a.deterministic) <= 3.0 + 1e-3 / a.switching.stderr);
}

#[test]
fn nonempty_routes_agree() {
    let est = prob_nonempty_three_ways(&half(), 4000, 5, &cheap_mc()).unwrap();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(est[i].z_distance(&est[j]) <= 3.0, "{est:?}");
        }
    }
}

#[test]
fn arratia_black_noise() {
    let corr = CorrelationFunction::Indicator;
    // no mass on finite sets: G_F is flat in rho and equals the avoidance
    // probability of F
    let f = RegimeSchedule::parse("0.25,0.5").unwrap();
    let avoid = Solver::new(&corr, GridSpec::default()).unwrap().avoid_probability(&f);
    let g = genfun(&corr, "0.25,0.5", 6000);
    for e in &g {
        assert!((e.value - avoid).abs() <= 3.0 * e.stderr + 1e-3, "{e:?} vs {avoid}");
    }
    // on the whole interval the spectral set is never missed
    let full = genfun(&corr, "0,1", 6000);
    for e in &full {
        assert!(e.value.abs() <= 3.0 * e.stderr, "{e:?}");
    }
    let fit = spectral_mass_fit(
        &RHOS,
        &full.iter().map(|e| e.value).collect::<Vec<_>>(),
        &full.iter().map(|e| e.stderr).collect::<Vec<_>>(),
        3,
    )
    .unwrap();
    // the tail is 1 - G exactly when G is flat
    assert!((fit.tail - 1.0).abs() <= 3.0 * full[0].stderr + 1e-9, "{fit:?}");
    let a = prob_avoid(&corr, &RegimeSchedule::full(), 3000, 1, &cheap_mc(), GridSpec::default()).unwrap();
    for e in [a.switching, a.spectral, a.deterministic] {
        assert!(e.value.abs() <= 0.01, "{e:?}");
    }
    // every sampled set is nonempty
    let sampler = SpectralSampler::new(&corr, cheap()).unwrap();
    let s = replicate(200, &SeedStream::new(2), |_, rng| sampler.sample(rng).unwrap());
    assert!(s.iter().all(|x| !x.is_empty()));
}

#[test]
fn degenerate_inputs() {
    let corr = half();
    let empty = RegimeSchedule::empty();
    let a = prob_avoid(&corr, &empty, 10, 1, &cheap_mc(), GridSpec::default()).unwrap();
    assert_eq!((a.switching.value, a.spectral.value, a.deterministic.value), (1.0, 1.0, 1.0));
    let g = generating_function(&corr, &empty, &[Rho::Value(0.3)], 50, 1, cheap()).unwrap();
    assert_eq!(g[0].value, 1.0);
    assert_eq!(g[0].stderr, 0.0);

    let classical = CorrelationFunction::exp_power(1.0, 1.0).unwrap();
    assert_eq!(SpectralSampler::new(&classical, cheap()).unwrap_err(), Error::ScaleDegenerate);
    assert!(sample_spectral_set(&classical, cheap(), 0).is_err());
    assert!(prob_nonempty_three_ways(&classical, 10, 0, &cheap_mc()).is_err());

    let e = prob_avoid(&corr, &RegimeSchedule::full(), 0, 1, &cheap_mc(), GridSpec::default()).unwrap_err();
    assert_eq!(e.to_string(), "empty sample");
    let e = generating_function(&corr, &RegimeSchedule::full(), &[Rho::Value(0.0)], 0, 1, cheap()).unwrap_err();
    assert_eq!(e, Error::EmptySample);
    assert!(generating_function(&corr, &RegimeSchedule::full(), &[Rho::Value(1.0)], 5, 1, cheap()).is_err());
}

#[test]
fn mass_fit_rejects_too_few_parameters() {
    assert!(spectral_mass_fit(&[0.0, 0.5], &[0.2, 0.4], &[0.01, 0.01], 3).is_err());
}
