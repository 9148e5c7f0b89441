use harris::flows::{joint_vs_difference_check, Rho};
use harris::rng::{replicate, seed_stream, SeedStream};
use harris::sde::SimParams;
use harris::semigroup::GridSpec;
use harris::spectra::{generating_function, prob_avoid, McParams, SpectralSampler};
use harris::{CorrelationFunction, RegimeSchedule};
use rand::Rng;

fn cheap() -> SimParams {
    SimParams {
        dt: 1e-3,
        dt_w: 1e-5,
        levels: 7,
        near_k: 3.0,
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn streams_are_reproducible_and_uncorrelated() {
    let draw = |seed: u64, index: u64| -> Vec<f64> {
        let mut r = seed_stream(seed, index);
        (0..10_000).map(|_| r.random::<f64>()).collect()
    };
    assert_eq!(draw(5, 9), draw(5, 9));
    for (s, i, j) in [(5, 0, 1), (5, 1, 2), (0, 0, u64::MAX), (1, 7, 1 << 40)] {
        let c = correlation(&draw(s, i), &draw(s, j));
        assert!(c.abs() <= 0.03, "seed {s} streams {i},{j}: {c}");
    }
    let c = correlation(&draw(1, 3), &draw(2, 3));
    assert!(c.abs() <= 0.03);
}

fn fingerprint() -> Vec<u64> {
    let corr = CorrelationFunction::exp_power(1.0, 0.5).unwrap();
    let mc = McParams {
        spectral: cheap(),
        flow_grid: cheap(),
        ..McParams::default()
    };
    let f = RegimeSchedule::parse("0,0.25;0.5,0.75").unwrap();
    let mut out = Vec::new();
    let a = prob_avoid(&corr, &f, 300, 4, &mc, GridSpec { dt: 1e-3, h_max: 8e-3, ..GridSpec::default() }).unwrap();
    for e in [a.switching, a.spectral] {
        out.extend([e.value.to_bits(), e.stderr.to_bits()]);
    }
    let g = generating_function(&corr, &f, &[Rho::Value(0.0), Rho::OneMinus], 300, 4, cheap()).unwrap();
    out.extend(g.iter().map(|e| e.value.to_bits()));
    out.push(joint_vs_difference_check(&corr, 0.5, 300, 4, cheap()).unwrap().to_bits());
    let s = SpectralSampler::new(&corr, cheap()).unwrap();
    let sets = replicate(50, &SeedStream::new(4), |_, rng| s.sample(rng).unwrap());
    out.extend(sets.iter().flat_map(|x| x.cells.clone()));
    out
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let runs: Vec<Vec<u64>> = [1, 4, 8]
        .iter()
        .map(|&k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap().install(fingerprint))
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    assert_eq!(runs[0], fingerprint());
}
