//! Spectral sets of the noise, their avoidance and nonemptiness
//! probabilities, and spectral masses recovered from joinings.
//!
//! The spectral set is sampled as the time-reversed zero set of the dual
//! diffusion started from `μ = −db` and run for a uniform time `τ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::Serialize;

use crate::flows::Rho;
use crate::rng::{try_replicate, Rng, SeedStream};
use crate::sde::{BridgeCursor, DifferenceProcess, DualProcess, Leaf, Observer, SimParams};
use crate::semigroup::{GridSpec, Solver};
use crate::stats::{linear_fit, mean_stderr};
use crate::{CorrelationFunction, Error, NoiseClass, RegimeSchedule, Result, ScaleSpeedChart};

/// A number with its Monte Carlo error and provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub method: String,
    pub value: f64,
    pub stderr: f64,
    #[serde(rename = "n")]
    pub n_replicas: usize,
    #[serde(rename = "seed")]
    pub master_seed: u64,
}

impl Estimate {
    pub fn from_samples(method: &str, xs: &[f64], master_seed: u64) -> Self {
        let (value, stderr) = mean_stderr(xs);
        Self {
            method: method.into(),
            value,
            stderr,
            n_replicas: xs.len(),
            master_seed,
        }
    }

    pub fn exact(method: &str, value: f64) -> Self {
        Self {
            method: method.into(),
            value,
            stderr: 0.0,
            n_replicas: 0,
            master_seed: 0,
        }
    }

    /// `|a − b|` in units of the combined standard error.
    pub fn z_distance(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        let d = (self.value - other.value).abs();
        if s > 0.0 {
            d / s
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Zero cells of `t ↦ ξ̂⁺(τ − t)` on `[0, τ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSample {
    pub tau: f64,
    /// Starting point of the dual diffusion, in scale coordinates.
    pub xi0: f64,
    /// Cell width.
    pub dt: f64,
    /// Sorted indices `k` of the cells `[k·dt, (k+1)·dt)` that contain a zero.
    pub cells: Vec<u64>,
}

impl SpectralSample {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Left ends of the flagged cells.
    pub fn zero_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().map(move |&k| k as f64 * self.dt)
    }

    /// Number of dyadic boxes of width `2^{-level}` that meet the set.
    /// Requires `dt = 2^{-m}` with `m ≥ level`.
    pub fn box_count(&self, level: u32) -> usize {
        let shift = (-self.dt.log2()).round() as i64 - i64::from(level);
        let shift = shift.max(0) as u32;
        let mut n = 0;
        let mut last = None;
        for &k in &self.cells {
            let b = k >> shift;
            if last != Some(b) {
                n += 1;
                last = Some(b);
            }
        }
        n
    }
}

/// Watches the dual diffusion for zeros inside forward-time windows.
struct ZeroWatch<'a> {
    windows: &'a [(f64, f64)],
    tau: f64,
    /// Record every zero cell at this width (reversed time).
    cell: Option<f64>,
    cells: Vec<u64>,
    hit: bool,
}

impl Observer for ZeroWatch<'_> {
    fn split(&self, t0: f64, t1: f64) -> bool {
        if let Some(c) = self.cell {
            if t1 - t0 > 0.5 * c && t0 < self.tau {
                return true;
            }
        }
        self.windows
            .iter()
            .any(|&(a, b)| (t0 < a && t1 > a) || (t0 < b && t1 > b))
    }

    fn leaf(&mut self, leaf: &Leaf, _: &mut BridgeCursor, _: &mut Rng) -> bool {
        if let Some(z) = leaf.zero_at.filter(|&z| z <= self.tau) {
            if self.windows.iter().any(|&(a, b)| z >= a && z <= b) {
                self.hit = true;
            }
            if let Some(c) = self.cell {
                let k = ((self.tau - z) / c).floor().max(0.0) as u64;
                if self.cells.last() != Some(&k) {
                    self.cells.push(k);
                }
            }
        }
        self.cell.is_some() || !self.hit
    }
}

/// Samples spectral sets of one correlation function.
#[derive(Clone, Debug)]
pub struct SpectralSampler {
    corr: CorrelationFunction,
    chart: ScaleSpeedChart,
    process: DualProcess,
}

impl SpectralSampler {
    pub fn new(corr: &CorrelationFunction, params: SimParams) -> Result<Self> {
        if corr.classify()? == NoiseClass::Classical {
            return Err(Error::ScaleDegenerate);
        }
        let chart = ScaleSpeedChart::build(corr, 64.0, 4096)?;
        let process = DualProcess::new(&chart, params)?;
        Ok(Self {
            corr: corr.clone(),
            chart,
            process,
        })
    }

    pub fn chart(&self) -> &ScaleSpeedChart {
        &self.chart
    }

    fn start(&self, rng: &mut Rng) -> (f64, f64) {
        let tau: f64 = rng.random();
        let u: f64 = rng.random();
        (tau, self.chart.xi_of_x(self.corr.sample_mu(u)))
    }

    /// Full zero set at the flow-grid resolution of the parameters.
    pub fn sample(&self, rng: &mut Rng) -> Result<SpectralSample> {
        let (tau, xi0) = self.start(rng);
        let dt = self.process.params().dt;
        let mut w = ZeroWatch {
            windows: &[],
            tau,
            cell: Some(dt),
            cells: Vec::new(),
            hit: false,
        };
        self.process.run(xi0, tau, rng, &mut w)?;
        let mut cells = w.cells;
        cells.sort_unstable();
        cells.dedup();
        Ok(SpectralSample {
            tau,
            xi0,
            dt,
            cells,
        })
    }

    /// `true` when the spectral set misses `F`.
    pub fn avoids(&self, f: &RegimeSchedule, rng: &mut Rng) -> Result<bool> {
        let (tau, xi0) = self.start(rng);
        let windows: Vec<(f64, f64)> = f
            .intervals()
            .iter()
            .filter(|&&(a, _)| a <= tau)
            .map(|&(a, b)| ((tau - b).max(0.0), tau - a))
            .collect();
        if windows.is_empty() {
            return Ok(true);
        }
        let mut w = ZeroWatch {
            windows: &windows,
            tau,
            cell: None,
            cells: Vec::new(),
            hit: false,
        };
        self.process.run(xi0, tau, rng, &mut w)?;
        Ok(!w.hit)
    }
}

pub fn sample_spectral_set(
    corr: &CorrelationFunction,
    params: SimParams,
    seed: u64,
) -> Result<SpectralSample> {
    SpectralSampler::new(corr, params)?.sample(&mut SeedStream::new(seed).rng(0))
}

/// Simulation settings of the three Monte Carlo routes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McParams {
    /// Dual diffusion for spectral sets.
    pub spectral: SimParams,
    /// Difference process when a functional is integrated in flow time.
    pub flow_grid: SimParams,
    /// Difference process when only the Wiener clock is read.
    pub wiener_clock: SimParams,
}

impl Default for McParams {
    fn default() -> Self {
        Self {
            spectral: SimParams::default(),
            flow_grid: SimParams::default(),
            wiener_clock: SimParams {
                dt_w: 1e-4,
                levels: 4,
                ..SimParams::default()
            },
        }
    }
}

/// `P(S̃ ≠ ∅)` by (a) spectral-set frequency, (b) `E∫₀¹(1 − b(ξ⁺))`, (c)
/// half the mean Wiener time of the reflected L-diffusion at flow time 1.
pub fn prob_nonempty_three_ways(
    corr: &CorrelationFunction,
    n: usize,
    seed: u64,
    p: &McParams,
) -> Result<[Estimate; 3]> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let seeds = SeedStream::new(seed);
    let full = RegimeSchedule::full();
    let sampler = SpectralSampler::new(corr, p.spectral)?;
    let a: Vec<f64> = try_replicate(n, &seeds.fork("nonempty/spectral"), |_, rng| {
        Ok(if sampler.avoids(&full, rng)? { 0.0 } else { 1.0 })
    })?;
    let grid = DifferenceProcess::new(corr, 1.0, p.flow_grid)?;
    let g = |x: f64| corr.one_minus_b(x);
    let b: Vec<f64> = try_replicate(n, &seeds.fork("nonempty/integral"), |_, rng| {
        Ok(grid.functional(&full, 1.0, &g, rng)?.integral)
    })?;
    let clock = DifferenceProcess::new(corr, 1.0, p.wiener_clock)?;
    let zero = |_: f64| 0.0;
    let c: Vec<f64> = try_replicate(n, &seeds.fork("nonempty/wiener"), |_, rng| {
        Ok(0.5 * clock.functional(&full, 1.0, &zero, rng)?.wiener_time)
    })?;
    Ok([
        Estimate::from_samples("spectral_set", &a, seed),
        Estimate::from_samples("integral_one_minus_b", &b, seed),
        Estimate::from_samples("wiener_clock", &c, seed),
    ])
}

/// Deterministic `1 − ∫₀¹ (T⁺_t b)(0) dt`.
pub fn prob_nonempty_pde(corr: &CorrelationFunction, spec: GridSpec) -> Result<Estimate> {
    let s = Solver::new(corr, spec)?;
    s.probe(1.0)?;
    Ok(Estimate::exact("pde", s.prob_nonempty()))
}

/// The three routes to `P(S̃ ∩ F = ∅)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AvoidResult {
    /// `∫₀¹ E[b(ξ(t))] dt` along the regime-switching difference.
    pub switching: Estimate,
    /// Frequency of `S̃ ∩ F = ∅`.
    pub spectral: Estimate,
    /// Alternating semigroup products.
    pub deterministic: Estimate,
}

pub fn prob_avoid(
    corr: &CorrelationFunction,
    f: &RegimeSchedule,
    n: usize,
    seed: u64,
    p: &McParams,
    spec: GridSpec,
) -> Result<AvoidResult> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if f.is_empty() {
        let one = |m: &str| Estimate {
            n_replicas: n,
            master_seed: seed,
            ..Estimate::exact(m, 1.0)
        };
        return Ok(AvoidResult {
            switching: one("switching"),
            spectral: one("spectral_set"),
            deterministic: Estimate::exact("semigroup", 1.0),
        });
    }
    let seeds = SeedStream::new(seed);
    let diff = DifferenceProcess::new(corr, 1.0, p.flow_grid)?;
    let b = |x: f64| corr.eval(x);
    let sw: Vec<f64> = try_replicate(n, &seeds.fork("avoid/switching"), |_, rng| {
        Ok(diff.functional(f, 1.0, &b, rng)?.integral)
    })?;
    let sampler = SpectralSampler::new(corr, p.spectral)?;
    let sp: Vec<f64> = try_replicate(n, &seeds.fork("avoid/spectral"), |_, rng| {
        Ok(if sampler.avoids(f, rng)? { 1.0 } else { 0.0 })
    })?;
    let solver = Solver::new(corr, spec)?;
    solver.probe(1.0)?;
    Ok(AvoidResult {
        switching: Estimate::from_samples("switching", &sw, seed),
        spectral: Estimate::from_samples("spectral_set", &sp, seed),
        deterministic: Estimate::exact("semigroup", solver.avoid_probability(f)),
    })
}

impl Rho {
    fn as_f64(self) -> f64 {
        match self {
            Rho::Value(r) => r,
            Rho::OneMinus | Rho::OnePlus => 1.0,
        }
    }
}

/// `G_F(ρ) = 1 − ½ E|ξ(1)|²` for each `ρ`, with common random numbers
/// across the list.
pub fn generating_function(
    corr: &CorrelationFunction,
    f: &RegimeSchedule,
    rhos: &[Rho],
    n: usize,
    seed: u64,
    params: SimParams,
) -> Result<Vec<Estimate>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let seeds = SeedStream::new(seed).fork("genfun");
    let zero = |_: f64| 0.0;
    rhos.iter()
        .map(|&rho| {
            if let Rho::Value(r) = rho {
                if !(0.0..1.0).contains(&r) {
                    return Err(Error::InvalidInput(format!("rho must lie in [0, 1), got {r}")));
                }
            }
            let method = format!("genfun rho={}", rho.as_f64());
            if rho == Rho::OnePlus {
                return Ok(Estimate {
                    n_replicas: n,
                    master_seed: seed,
                    ..Estimate::exact(&method, 1.0)
                });
            }
            let d = DifferenceProcess::new(corr, rho.as_f64(), params)?;
            let xs: Vec<f64> = try_replicate(n, &seeds, |_, rng| {
                let y = d.functional(f, 1.0, &zero, rng)?.y_end;
                Ok(1.0 - 0.5 * y * y)
            })?;
            Ok(Estimate::from_samples(&method, &xs, seed))
        })
        .collect()
}

/// Fitted spectral masses `m_0 … m_M` and the remaining mass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassFit {
    pub masses: Vec<f64>,
    pub tail: f64,
    pub condition: f64,
}

/// Largest acceptable condition number of the weighted design matrix.
pub const MAX_CONDITION: f64 = 1e10;

/// Lawson–Hanson nonnegative least squares.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > 1e-12)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = a.select_columns(&idx);
            let z_p = sub
                .clone()
                .svd(true, true)
                .solve(b, 1e-14)
                .expect("svd with both factors");
            if z_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = z_p[k];
                }
                break;
            }
            // step back toward the feasible region
            let mut step = 1.0f64;
            for (k, &i) in idx.iter().enumerate() {
                if z_p[k] <= 0.0 {
                    step = step.min(x[i] / (x[i] - z_p[k]));
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += step * (z_p[k] - x[i]);
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

/// Fits `G(ρ) ≈ Σ_{m ≤ M} m_m ρ^m` with `m_m ≥ 0` and `Σ m_m ≤ 1`.
pub fn spectral_mass_fit(rhos: &[f64], g: &[f64], stderr: &[f64], m_max: usize) -> Result<MassFit> {
    if rhos.len() != g.len() || g.len() != stderr.len() {
        return Err(Error::InvalidInput("rho, G and stderr lengths differ".into()));
    }
    let mut distinct = rhos.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < m_max + 2 {
        return Err(Error::InvalidInput(format!(
            "need at least {} distinct rho values for order {m_max}",
            m_max + 2
        )));
    }
    let floor = stderr.iter().cloned().filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let weight = |s: f64| if floor.is_finite() { 1.0 / s.max(floor) } else { 1.0 };
    let k = rhos.len();
    let a = DMatrix::from_fn(k, m_max + 1, |i, m| weight(stderr[i]) * rhos[i].powi(m as i32));
    let y = DVector::from_fn(k, |i, _| weight(stderr[i]) * g[i]);
    let sv = a.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let mut x = nnls(&a, &y);
    if x.sum() > 1.0 {
        // enforce Σ m = 1 through a dominant extra row
        let big = 1e6 * a.amax().max(1.0);
        let mut a2 = a.clone().insert_row(k, 0.0);
        a2.row_mut(k).fill(big);
        let y2 = y.clone().insert_row(k, big);
        x = nnls(&a2, &y2);
    }
    let masses: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let tail = (1.0 - masses.iter().sum::<f64>()).max(0.0);
    Ok(MassFit {
        masses,
        tail,
        condition,
    })
}

/// Value at `ρ → 1⁻` from a line in `1 − ρ` through the three largest `ρ`.
pub fn extrapolate_one_minus(rhos: &[f64], g: &[Estimate]) -> Result<(f64, f64)> {
    if rhos.len() != g.len() || rhos.len() < 3 {
        return Err(Error::InvalidInput("need at least three (rho, G) pairs".into()));
    }
    let mut idx: Vec<usize> = (0..rhos.len()).collect();
    idx.sort_by(|&i, &j| rhos[j].total_cmp(&rhos[i]));
    let top = &idx[..3];
    let x: Vec<f64> = top.iter().map(|&i| 1.0 - rhos[i]).collect();
    let y: Vec<f64> = top.iter().map(|&i| g[i].value).collect();
    let (_, intercept, _) = linear_fit(&x, &y);
    // propagate the pointwise errors through the intercept weights
    let mx = x.iter().sum::<f64>() / 3.0;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let var: f64 = top
        .iter()
        .zip(&x)
        .map(|(&i, xi)| {
            let w = 1.0 / 3.0 - mx * (xi - mx) / sxx;
            (w * g[i].stderr).powi(2)
        })
        .sum();
    Ok((intercept, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_fit_examples() {
        let rhos = [0.0, 0.25, 0.5, 0.75, 0.9];
        let zeros = [0.0; 5];
        let se = [0.01; 5];
        let fit = spectral_mass_fit(&rhos, &zeros, &se, 3).unwrap();
        assert!(fit.masses.iter().all(|&m| m == 0.0));
        assert_eq!(fit.tail, 1.0);
        let fit = spectral_mass_fit(&rhos, &rhos, &[0.0; 5], 3).unwrap();
        assert!((fit.masses[1] - 1.0).abs() < 1e-9, "{:?}", fit.masses);
        assert!(fit.masses[0].abs() + fit.masses[2].abs() + fit.masses[3].abs() < 1e-9);
        assert!(fit.tail < 1e-9);
        let clustered = [0.5, 0.5 + 1e-9, 0.5 + 2e-9, 0.5 + 3e-9, 0.5 + 4e-9];
        assert!(matches!(
            spectral_mass_fit(&clustered, &clustered, &[0.0; 5], 3),
            Err(Error::IllConditioned { .. })
        ));
        assert!(spectral_mass_fit(&rhos[..3], &zeros[..3], &se[..3], 3).is_err());
    }

    #[test]
    fn mass_fit_respects_total_mass() {
        // G above the constant 1 cannot be matched with Σ m ≤ 1
        let rhos = [0.0, 0.3, 0.6, 0.9];
        let g = [1.2; 4];
        let fit = spectral_mass_fit(&rhos, &g, &[0.0; 4], 1).unwrap();
        assert!((fit.masses.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn extrapolation_of_a_line_is_exact() {
        let rhos = [0.5, 0.8, 0.9, 0.95];
        let g: Vec<Estimate> = rhos.iter().map(|r| Estimate::exact("x", 0.2 + 0.5 * (1.0 - r))).collect();
        let (v, se) = extrapolate_one_minus(&rhos, &g).unwrap();
        assert!((v - 0.2).abs() < 1e-12 && se == 0.0);
    }

    #[test]
    fn box_counts_nest() {
        let s = SpectralSample {
            tau: 1.0,
            xi0: 0.0,
            dt: 2f64.powi(-10),
            cells: vec![0, 1, 2, 511, 512, 1023],
        };
        assert_eq!(s.box_count(10), 6);
        assert_eq!(s.box_count(1), 2);
        assert_eq!(s.box_count(0), 1);
        assert_eq!(s.box_count(2), 4);
    }
}
