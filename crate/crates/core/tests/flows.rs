use harris::flows::{simulate_npoint, simulate_npoint_with, FlowSample};
use harris::rng::{replicate, try_replicate, SeedStream};
use harris::sde::{DifferenceProcess, SimParams};
use harris::stats::{mean_stderr, normal_cdf};
use harris::{CorrelationFunction, RegimeSchedule};
use proptest::prelude::*;

fn half() -> CorrelationFunction {
    CorrelationFunction::exp_power(1.0, 0.5).unwrap()
}

fn corr_of(kind: u8) -> CorrelationFunction {
    match kind {
        0 => CorrelationFunction::Indicator,
        1 => half(),
        _ => CorrelationFunction::exp_power(2.0, 1.0).unwrap(),
    }
}

fn sorted_points() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..0.4, 1..6).prop_map(|gaps| {
        let mut x = -0.5;
        gaps.iter()
            .map(|g| {
                x += g;
                x
            })
            .collect()
    })
}

fn check_coarsening(s: &FlowSample) -> Result<(), TestCaseError> {
    let n = s.points.len();
    let mut prev = s.partition_at(0);
    for k in (0..=s.n_steps()).step_by(25) {
        let p = s.partition_at(k);
        for i in 0..n {
            for j in 0..n {
                if prev[i] == prev[j] {
                    prop_assert_eq!(p[i], p[j]);
                }
                if p[i] == p[j] {
                    prop_assert_eq!(s.trajectories[k][i], s.trajectories[k][j]);
                }
            }
        }
        prev = p;
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn order_is_kept_and_partitions_coarsen(xs in sorted_points(), seed in any::<u64>(), kind in 0u8..3) {
        let s = simulate_npoint(&corr_of(kind), &xs, 1.0, 2e-3, seed).unwrap();
        for row in &s.trajectories {
            prop_assert!(row.windows(2).all(|w| w[0] <= w[1]));
        }
        check_coarsening(&s)?;
        for m in &s.merges {
            prop_assert!(s.coalescence_time(m.i, m.j).unwrap() <= m.time + 1e-12);
        }
    }
}

#[test]
fn one_point_motion_is_brownian() {
    for corr in [CorrelationFunction::Indicator, half()] {
        let seeds = SeedStream::new(21);
        let ends = replicate(4000, &seeds, |_, rng| {
            let s = simulate_npoint_with(&corr, &[0.2, 0.5], 1.0, 1e-2, rng).unwrap();
            [25, 50, 100].map(|k| s.trajectories[k][1] - 0.5)
        });
        for (j, t) in [0.25, 0.5, 1.0].iter().enumerate() {
            let sq: Vec<f64> = ends.iter().map(|e| e[j] * e[j]).collect();
            let (m, se) = mean_stderr(&sq);
            assert!((m - t).abs() <= 2.0 * se, "{corr:?} t={t}: {m}±{se}");
        }
    }
}

#[test]
fn single_particle_variance_is_one() {
    let ends = replicate(4000, &SeedStream::new(4), |_, rng| {
        simulate_npoint_with(&half(), &[0.0], 1.0, 1e-2, rng).unwrap().trajectories[100][0]
    });
    let sq: Vec<f64> = ends.iter().map(|x| x * x).collect();
    let (m, se) = mean_stderr(&sq);
    assert!((m - 1.0).abs() <= 2.0 * se, "{m}±{se}");
}

#[test]
fn relabelling_is_exchangeable() {
    // starting points listed in the opposite order give the relabelled law
    let f = half();
    let a = replicate(4000, &SeedStream::new(6).fork("a"), |_, rng| {
        let s = simulate_npoint_with(&f, &[0.0, 0.3], 1.0, 1e-2, rng).unwrap();
        (s.trajectories[100][0], s.trajectories[100][1] - 0.3)
    });
    let b = replicate(4000, &SeedStream::new(6).fork("b"), |_, rng| {
        let s = simulate_npoint_with(&f, &[0.3, 0.0], 1.0, 1e-2, rng).unwrap();
        (s.trajectories[100][1], s.trajectories[100][0] - 0.3)
    });
    let stat = |v: &[(f64, f64)], g: fn(&(f64, f64)) -> f64| mean_stderr(&v.iter().map(g).collect::<Vec<_>>());
    let checks: [fn(&(f64, f64)) -> f64; 4] = [|p| p.0, |p| p.1, |p| p.0 * p.1, |p| p.1 * p.1];
    for g in checks {
        let ((ma, sa), (mb, sb)) = (stat(&a, g), stat(&b, g));
        assert!((ma - mb).abs() <= 3.0 * sa.hypot(sb), "{ma}±{sa} vs {mb}±{sb}");
    }
}

#[test]
fn arratia_pair_meets_like_brownian_difference() {
    let hits = replicate(20_000, &SeedStream::new(9), |_, rng| {
        let s = simulate_npoint_with(&CorrelationFunction::Indicator, &[0.0, 0.1], 1.0, 1e-3, rng).unwrap();
        f64::from(u8::from(!s.merges.is_empty()))
    });
    let (p, _) = mean_stderr(&hits);
    let want = 2.0 * (1.0 - normal_cdf(0.1 / 2f64.sqrt()));
    assert!((p - want).abs() <= 0.01, "{p} vs {want}");
}

#[test]
fn bracket_matches_difference_engine() {
    // E[X1(1) X2(1)] = x1 x2 + E ∫₀¹ b(X2 − X1) ds, with the difference run
    // by the absorbed difference diffusion
    let f = half();
    let (x1, x2) = (-0.1, 0.2);
    let prods = replicate(40_000, &SeedStream::new(12).fork("flow"), |_, rng| {
        let s = simulate_npoint_with(&f, &[x1, x2], 1.0, 1e-3, rng).unwrap();
        s.trajectories[1000][0] * s.trajectories[1000][1]
    });
    let d = DifferenceProcess::new(&f, 1.0, SimParams { dt_w: 1e-5, levels: 7, ..SimParams::default() }).unwrap();
    let b = |x: f64| f.eval(x);
    let ints = try_replicate(40_000, &SeedStream::new(12).fork("difference"), |_, rng| {
        Ok(d.functional_from(x2 - x1, &RegimeSchedule::empty(), 1.0, &b, rng)?.integral)
    })
    .unwrap();
    let ((m1, s1), (m2, s2)) = (mean_stderr(&prods), mean_stderr(&ints));
    let want = x1 * x2 + m2;
    assert!((m1 - want).abs() <= 3.0 * s1.hypot(s2) + 5e-3, "{m1}±{s1} vs {want}±{s2}");
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(simulate_npoint(&half(), &[0.1, 0.1], 1.0, 1e-2, 0).is_err());
    assert!(simulate_npoint(&half(), &[], 1.0, 1e-2, 0).is_err());
    assert!(simulate_npoint(&half(), &[0.0], 1.0, 0.0, 0).is_err());
}
