//! Dimension of spectral sets: box counting on sampled zero sets and the
//! exponent of the inverse local time at 0 of the dual diffusion.

use rayon::prelude::*;
use serde::Serialize;

use crate::semigroup::{resolvent_at_origin, GridSpec, Solver};
use crate::spectra::SpectralSample;
use crate::stats::linear_fit;
use crate::{CorrelationFunction, Error, RegimeSchedule, Result, ScaleSpeedChart};

/// Pooling needs at least this many nonempty samples.
pub const MIN_NONEMPTY: usize = 100;

/// Batches used for the slope standard error.
const BATCHES: usize = 10;

/// `(1 − α) / (2 − α)`.
pub fn predicted_dimension(alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok((1.0 - alpha) / (2.0 - alpha))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoxCountCurve {
    /// Box widths `2^{-k}`.
    pub scales: Vec<f64>,
    /// Mean number of occupied boxes over the nonempty samples.
    pub counts: Vec<f64>,
    pub slope: f64,
    /// Spread of the slope over independent batches of samples.
    pub stderr: f64,
    pub n_nonempty: usize,
    /// Dyadic levels `(k_lo, k_hi)` of the fit window.
    pub window: (u32, u32),
}

fn slope_of(levels: &[u32], counts: &[f64]) -> f64 {
    let x: Vec<f64> = levels.iter().map(|&k| f64::from(k) * std::f64::consts::LN_2).collect();
    let y: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    linear_fit(&x, &y).0
}

/// Least-squares slope of `log N(ε)` against `log(1/ε)` for `ε = 2^{-k}`,
/// `k_lo ≤ k ≤ k_hi`, pooled over the nonempty samples.
pub fn box_dimension(samples: &[SpectralSample], window: (u32, u32)) -> Result<BoxCountCurve> {
    let (k_lo, k_hi) = window;
    if k_hi < k_lo + 4 {
        return Err(Error::InvalidInput("the fit window needs at least five scales".into()));
    }
    let nonempty: Vec<&SpectralSample> = samples.iter().filter(|s| !s.is_empty()).collect();
    if nonempty.len() < MIN_NONEMPTY {
        return Err(Error::TooFewSamples {
            got: nonempty.len(),
            need: MIN_NONEMPTY,
        });
    }
    if let Some(s) = nonempty.iter().find(|s| s.dt > 0.5f64.powi(k_hi as i32)) {
        return Err(Error::InvalidInput(format!(
            "sample resolution {} is coarser than the finest box 2^-{k_hi}",
            s.dt
        )));
    }
    let levels: Vec<u32> = (k_lo..=k_hi).collect();
    let per_sample: Vec<Vec<f64>> = nonempty
        .iter()
        .map(|s| levels.iter().map(|&k| s.box_count(k) as f64).collect())
        .collect();
    let mean_counts = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..levels.len())
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let counts = mean_counts(&per_sample);
    let slope = slope_of(&levels, &counts);
    let size = per_sample.len() / BATCHES;
    let batch: Vec<f64> = per_sample
        .chunks(size)
        .take(BATCHES)
        .map(|c| slope_of(&levels, &mean_counts(c)))
        .collect();
    let m = batch.iter().sum::<f64>() / batch.len() as f64;
    let var = batch.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (batch.len() - 1) as f64;
    Ok(BoxCountCurve {
        scales: levels.iter().map(|&k| 0.5f64.powi(k as i32)).collect(),
        counts,
        slope,
        // pooled curve averages all batches
        stderr: (var / batch.len() as f64).sqrt(),
        n_nonempty: nonempty.len(),
        window,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolventCurve {
    pub lambdas: Vec<f64>,
    /// `g̃_λ(0,0)`.
    pub g: Vec<f64>,
    /// `Ψ(λ) = 1 / g̃_λ(0,0)`.
    pub psi: Vec<f64>,
    pub exponent: f64,
    pub stderr: f64,
}

/// Sweeps `λ` log-uniformly over `window` and fits the growth exponent of `Ψ`.
pub fn exponent_via_resolvent(
    chart: &ScaleSpeedChart,
    window: (f64, f64),
    points: usize,
) -> Result<ResolventCurve> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && points >= 3) {
        return Err(Error::InvalidInput(format!(
            "need 0 < lambda_lo < lambda_hi and at least 3 points, got {window:?}, {points}"
        )));
    }
    let step = (hi / lo).ln() / (points - 1) as f64;
    let lambdas: Vec<f64> = (0..points).map(|k| lo * (step * k as f64).exp()).collect();
    let g = lambdas
        .par_iter()
        .map(|&l| resolvent_at_origin(chart, l))
        .collect::<Result<Vec<f64>>>()?;
    let psi: Vec<f64> = g.iter().map(|v| 1.0 / v).collect();
    let x: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = psi.iter().map(|p| p.ln()).collect();
    let (exponent, _, stderr) = linear_fit(&x, &y);
    Ok(ResolventCurve {
        lambdas,
        g,
        psi,
        exponent,
        stderr,
    })
}

/// Log-log slope of `P(S̃ ∩ [t, t+ε] ≠ ∅)` against `ε`, computed with the
/// semigroup route. Small intervals are hit with probability of order
/// `ε^{1/(2−α)}`.
pub fn avoidance_scaling(
    corr: &CorrelationFunction,
    t: f64,
    eps: &[f64],
    spec: GridSpec,
) -> Result<(Vec<f64>, f64)> {
    if eps.len() < 2 || eps.iter().any(|&e| !(e > 0.0) || t + e > 1.0) {
        return Err(Error::InvalidInput("need ≥ 2 widths with [t, t+ε] ⊆ [0,1]".into()));
    }
    let solver = Solver::new(corr, spec)?;
    let hit = eps
        .iter()
        .map(|&e| {
            let f = RegimeSchedule::new(vec![(t, t + e)])?;
            Ok(1.0 - solver.avoid_probability(&f))
        })
        .collect::<Result<Vec<f64>>>()?;
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = hit.iter().map(|p| p.ln()).collect();
    Ok((hit, linear_fit(&x, &y).0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_examples() {
        assert_eq!(predicted_dimension(0.0).unwrap(), 0.5);
        assert!((predicted_dimension(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(predicted_dimension(0.999_999).unwrap() < 1e-5);
        assert!(predicted_dimension(1.0).is_err());
        let mut last = 1.0;
        for k in 0..100 {
            let d = predicted_dimension(k as f64 / 100.0).unwrap();
            assert!(d < last);
            last = d;
        }
    }

    fn single_points(n: usize) -> Vec<SpectralSample> {
        (0..n)
            .map(|i| SpectralSample {
                tau: 1.0,
                xi0: 0.0,
                dt: 0.5f64.powi(20),
                cells: vec![(i as u64 * 7919) % (1 << 20)],
            })
            .collect()
    }

    #[test]
    fn finite_sets_have_dimension_zero() {
        let c = box_dimension(&single_points(200), (6, 16)).unwrap();
        assert!(c.slope.abs() < 1e-12);
        assert!(c.counts.windows(2).all(|w| w[1] >= w[0]));
        assert!(matches!(
            box_dimension(&single_points(50), (6, 16)),
            Err(Error::TooFewSamples { got: 50, .. })
        ));
    }

    #[test]
    fn full_interval_has_dimension_one() {
        let s = SpectralSample {
            tau: 1.0,
            xi0: 0.0,
            dt: 0.5f64.powi(16),
            cells: (0..1 << 16).collect(),
        };
        let c = box_dimension(&vec![s; 100], (6, 16)).unwrap();
        assert!((c.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resolvent_exponent_indicator() {
        let chart = ScaleSpeedChart::build(&CorrelationFunction::Indicator, 10.0, 64).unwrap();
        let c = exponent_via_resolvent(&chart, (1e2, 1e6), 9).unwrap();
        assert!((c.exponent - 0.5).abs() < 1e-12);
        assert!(c.psi.windows(2).all(|w| w[1] > w[0]));
    }
}
