//! Flow clocks `A(s) = ∫₀ˢ r(β_u) du` and their increments over Brownian
//! bridge segments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::corrfn::{CorrelationFunction, RateTable, ScaleSpeedChart};
use crate::stats::gauss_legendre;

/// Bridge endpoints (in units of `√h`) inside which the singular part of the
/// clock is integrated exactly in conditional mean.
const J_NEAR: f64 = 8.0;
/// Half-width of the tabulated `J` grid.
const J_MAX: f64 = 12.0;
const J_STEP: f64 = 1.0 / 16.0;
const G_MAX: f64 = 10.0;
const G_STEP: f64 = 1.0 / 128.0;

/// `J_γ(a, b) = ∫₀¹ E|m_v + σ_v N|^{-γ} dv` for the standard Brownian bridge
/// from `a` to `b` (`m_v = a + (b-a)v`, `σ_v² = v(1-v)`), tabulated on a
/// square grid. By scaling, the conditional mean of `∫₀ʰ |β_u|^{-γ} du` given
/// `β_0 = y0`, `β_h = y1` is `h^{1-γ/2} J_γ(y0/√h, y1/√h)`.
#[derive(Debug)]
pub(crate) struct JTable {
    gamma: f64,
    g: Vec<f64>,
    n: usize,
    j: Vec<f64>,
}

impl JTable {
    /// Shared table for `gamma`; building one takes a noticeable fraction of
    /// a second, so tables are kept for the life of the process.
    pub(crate) fn shared(gamma: f64) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<JTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(t) = cache.lock().unwrap().get(&gamma.to_bits()) {
            return t.clone();
        }
        let t = Arc::new(Self::new(gamma));
        cache.lock().unwrap().entry(gamma.to_bits()).or_insert(t).clone()
    }

    pub(crate) fn new(gamma: f64) -> Self {
        let q = 1.0 / (1.0 - gamma);
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // g(t) = E|t + N|^{-γ}; with z = w^q the singularity disappears
        let g: Vec<f64> = (0..=(G_MAX / G_STEP) as usize)
            .map(|i| {
                let t = i as f64 * G_STEP;
                let w_max = (t + 10.0).powf(1.0 - gamma);
                let n = 4000;
                let hw = w_max / n as f64;
                let f = |w: f64| {
                    let z = w.powf(q);
                    phi(z - t) + phi(z + t)
                };
                let mut acc = f(0.0) + f(w_max);
                for k in 1..n {
                    acc += f(k as f64 * hw) * if k % 2 == 1 { 4.0 } else { 2.0 };
                }
                acc * hw / 3.0 * q
            })
            .collect();
        let mut table = Self {
            gamma,
            g,
            n: (2.0 * J_MAX / J_STEP) as usize + 1,
            j: vec![],
        };
        let nodes = gauss_legendre(64);
        let n = table.n;
        let half = std::f64::consts::FRAC_PI_2;
        let integral = |a: f64, b: f64| {
            nodes
                .iter()
                .map(|&(x, w)| {
                    let th = half * (x + 1.0);
                    let v = 0.5 * (1.0 - th.cos());
                    let sigma = 0.5 * th.sin();
                    let m = a + (b - a) * v;
                    w * sigma.powf(1.0 - gamma) * table.g_eval(m.abs() / sigma)
                })
                .sum::<f64>()
                * half
        };
        // symmetries J(a,b) = J(b,a) = J(-b,-a): compute the region
        // ia <= ib, ia + ib <= n-1 and copy the rest
        let mut j = vec![0.0; n * n];
        for ia in 0..n {
            for ib in ia..n - ia {
                let a = -J_MAX + ia as f64 * J_STEP;
                let b = -J_MAX + ib as f64 * J_STEP;
                j[ia * n + ib] = integral(a, b);
            }
        }
        for ia in 0..n {
            for ib in 0..n {
                let (lo, hi) = if ia <= ib { (ia, ib) } else { (ib, ia) };
                let (lo, hi) = if lo + hi > n - 1 { (n - 1 - hi, n - 1 - lo) } else { (lo, hi) };
                j[ia * n + ib] = j[lo * n + hi];
            }
        }
        table.j = j;
        table
    }

    fn g_eval(&self, t: f64) -> f64 {
        if t >= G_MAX {
            let gm = self.gamma;
            let t2 = t * t;
            return t.powf(-gm)
                * (1.0 + gm * (gm + 1.0) / (2.0 * t2)
                    + gm * (gm + 1.0) * (gm + 2.0) * (gm + 3.0) / (8.0 * t2 * t2));
        }
        let s = t / G_STEP;
        let k = s as usize;
        let f = s - k as f64;
        self.g[k] + f * (self.g[k + 1] - self.g[k])
    }

    pub(crate) fn eval(&self, a: f64, b: f64) -> f64 {
        let sa = ((a.clamp(-J_MAX, J_MAX) + J_MAX) / J_STEP).min((self.n - 1) as f64 - 1e-9);
        let sb = ((b.clamp(-J_MAX, J_MAX) + J_MAX) / J_STEP).min((self.n - 1) as f64 - 1e-9);
        let (ia, ib) = (sa as usize, sb as usize);
        let (fa, fb) = (sa - ia as f64, sb - ib as f64);
        let n = self.n;
        let j00 = self.j[ia * n + ib];
        let j01 = self.j[ia * n + ib + 1];
        let j10 = self.j[(ia + 1) * n + ib];
        let j11 = self.j[(ia + 1) * n + ib + 1];
        (1.0 - fa) * ((1.0 - fb) * j00 + fb * j01) + fa * ((1.0 - fb) * j10 + fb * j11)
    }
}

/// Rate `r(y)` of a flow clock together with its bridge-increment rule.
#[derive(Clone, Debug)]
pub(crate) enum Clock {
    Constant(f64),
    /// `r = scale · a(|y|)` looked up in a table (dual diffusion).
    Table(Arc<RateTable>),
    /// `r = 1 / (2 (1 - ρ b(y)))` with `ρ < 1`: bounded.
    Joining { rho: f64, corr: CorrelationFunction },
    /// `r = 1 / (2 (1 - b(y)))`, split as `C|y|^{-γ}` plus a bounded rest.
    Singular {
        coef: f64,
        gamma: f64,
        corr: CorrelationFunction,
        j: Arc<JTable>,
    },
}

impl Clock {
    /// Clock of the difference of two particles whose driving noises have
    /// cross-correlation `rho · b` (`rho = 1`: same flow).
    pub(crate) fn difference(corr: &CorrelationFunction, rho: f64) -> Self {
        match corr.head_power_law() {
            None => Clock::Constant(0.5),
            Some(_) if rho < 1.0 => Clock::Joining {
                rho,
                corr: corr.clone(),
            },
            Some((k, p)) => Clock::Singular {
                coef: 0.5 / k,
                gamma: p,
                corr: corr.clone(),
                j: JTable::shared(p),
            },
        }
    }

    /// Clock `½ a(ξ)` of the dual diffusion in scale coordinates.
    pub(crate) fn dual(chart: &ScaleSpeedChart) -> Self {
        if chart.is_identity() {
            Clock::Constant(0.5)
        } else {
            Clock::Table(Arc::new(RateTable::for_chart(chart, 0.5)))
        }
    }

    /// Rate bounded away from 0 and ∞ near the origin: no refinement needed
    /// close to zero.
    pub(crate) fn is_regular(&self) -> bool {
        matches!(self, Clock::Constant(_) | Clock::Joining { .. })
    }

    #[inline]
    pub(crate) fn rate(&self, y: f64) -> f64 {
        match self {
            Clock::Constant(r) => *r,
            Clock::Table(t) => t.eval(y),
            Clock::Joining { rho, corr } => 0.5 / (1.0 - rho * corr.eval(y)),
            Clock::Singular { corr, .. } => 0.5 / corr.one_minus_b(y),
        }
    }

    #[inline]
    fn regular_part(&self, y: f64) -> f64 {
        match self {
            Clock::Singular {
                coef, gamma, corr, ..
            } => {
                if let CorrelationFunction::ExpPower { c, alpha } = corr {
                    let u = c * y.abs().powf(*alpha);
                    if u < 1e-3 {
                        return 0.5 * (0.5 + u / 12.0);
                    }
                    return 0.5 * (1.0 / -(-u).exp_m1() - 1.0 / u);
                }
                if y == 0.0 {
                    return 0.0;
                }
                self.rate(y) - coef * y.abs().powf(-gamma)
            }
            _ => self.rate(y),
        }
    }

    /// `true` when the increment rule cannot handle this segment and it
    /// must be bisected.
    #[inline]
    pub(crate) fn needs_split(&self, y0: f64, y1: f64, h: f64) -> bool {
        if let Clock::Singular { .. } = self {
            let sh = h.sqrt();
            let (a, b) = ((y0 / sh).abs(), (y1 / sh).abs());
            let near = y0 * y1 <= 0.0 || a.min(b) < J_NEAR;
            return near && a.max(b) > J_MAX;
        }
        false
    }

    /// Approximate `∫ r(β_u) du` over a bridge segment of Wiener length `h`.
    #[inline]
    pub(crate) fn increment(&self, y0: f64, y1: f64, h: f64) -> f64 {
        match self {
            Clock::Constant(r) => r * h,
            Clock::Singular {
                coef, gamma, j, ..
            } => {
                let sh = h.sqrt();
                let (a, b) = (y0 / sh, y1 / sh);
                if y0 * y1 <= 0.0 || a.abs().min(b.abs()) < J_NEAR {
                    coef * h * sh.powf(-gamma) * j.eval(a, b)
                        + 0.5 * h * (self.regular_part(y0) + self.regular_part(y1))
                } else {
                    0.5 * h * (self.rate(y0) + self.rate(y1))
                }
            }
            _ => 0.5 * h * (self.rate(y0) + self.rate(y1)),
        }
    }
}
