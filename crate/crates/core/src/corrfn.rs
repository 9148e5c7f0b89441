//! Correlation functions `b`, the noise classifier and `μ = -db` sampling.

mod chart;

pub use chart::{RateTable, ScaleSpeedChart};

use crate::stats::integrate_log;
use crate::{Error, Result};

/// Correlation function of a Harris flow: even, `b(0) = 1`, nonincreasing on
/// `(0, ∞)` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub enum CorrelationFunction {
    /// `b(x) = exp(-c |x|^α)`.
    ExpPower { c: f64, alpha: f64 },
    /// `b = 1_{0}`: the Arratia flow.
    Indicator,
    Tabulated(Table),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseClass {
    Classical,
    Nonclassical,
}

impl NoiseClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseClass::Classical => "classical",
            NoiseClass::Nonclassical => "nonclassical",
        }
    }
}

/// Tabulated `b`, interpolated as a monotone cubic (Fritsch–Carlson) in the
/// variables `(ln x, ln(1-b))` so that power-law behaviour near the origin is
/// reproduced exactly. Below the first positive abscissa the first segment's
/// power law is continued; beyond the last one `b` decays exponentially.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    rows: Vec<(f64, f64)>,
    lx: Vec<f64>,
    ly: Vec<f64>,
    slopes: Vec<f64>,
}

impl Table {
    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Smallest positive abscissa: the table says nothing below it.
    pub fn resolution(&self) -> f64 {
        self.rows[1].0
    }

    fn one_minus_b(&self, x: f64) -> f64 {
        let n = self.lx.len();
        let (x_last, b_last) = self.rows[self.rows.len() - 1];
        if x >= x_last {
            return 1.0 - b_last * (-(x - x_last) / x_last).exp();
        }
        let s = x.ln();
        if s <= self.lx[0] {
            return (self.ly[0] + self.slopes[0] * (s - self.lx[0])).exp();
        }
        let k = self.lx.partition_point(|&v| v <= s).min(n - 1) - 1;
        let h = self.lx[k + 1] - self.lx[k];
        let t = (s - self.lx[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * self.ly[k]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ly[k + 1]
            + (t3 - t2) * h * self.slopes[k + 1];
        y.exp().min(1.0)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m
}

impl CorrelationFunction {
    pub fn exp_power(c: f64, alpha: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidInput(format!("b.c must be positive, got {c}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "b.alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self::ExpPower { c, alpha })
    }

    pub fn indicator() -> Self {
        Self::Indicator
    }

    /// Builds a tabulated `b` from `(x, b(x))` rows. The first row must be
    /// `(0, 1)`; `x` strictly increasing; `b` nonincreasing, in `[0, 1)` for
    /// `x > 0`.
    pub fn tabulated(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::InvalidInput(
                "table needs at least three rows".into(),
            ));
        }
        if rows[0] != (0.0, 1.0) {
            return Err(Error::InvalidInput(
                "table must start with the row x=0, b=1".into(),
            ));
        }
        for (i, w) in rows.windows(2).enumerate() {
            let ((x0, b0), (x1, b1)) = (w[0], w[1]);
            if !(x1.is_finite() && b1.is_finite()) {
                return Err(Error::InvalidInput(format!("row {}: non-finite value", i + 2)));
            }
            if x1 <= x0 {
                return Err(Error::InvalidInput(format!(
                    "row {}: x must be strictly ascending",
                    i + 2
                )));
            }
            if b1 > b0 {
                return Err(Error::InvalidInput(format!(
                    "row {}: b must be nonincreasing ({b1} > {b0})",
                    i + 2
                )));
            }
            if !(0.0..1.0).contains(&b1) {
                return Err(Error::InvalidInput(format!(
                    "row {}: b must lie in [0, 1) for x > 0, got {b1}",
                    i + 2
                )));
            }
        }
        let lx: Vec<f64> = rows[1..].iter().map(|r| r.0.ln()).collect();
        let ly: Vec<f64> = rows[1..].iter().map(|r| (-r.1).ln_1p()).collect();
        let slopes = pchip_slopes(&lx, &ly);
        Ok(Self::Tabulated(Table {
            rows,
            lx,
            ly,
            slopes,
        }))
    }

    /// Parses a two-column `x,b` CSV with a header line.
    pub fn from_table_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.replace(' ', "") == "x,b" => {}
            _ => {
                return Err(Error::InvalidInput(
                    "table line 1: expected header `x,b`".into(),
                ))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let mut it = line.split(',').map(str::trim);
            let parse = |v: Option<&str>| v.and_then(|s| s.parse::<f64>().ok());
            match (parse(it.next()), parse(it.next()), it.next()) {
                (Some(x), Some(b), None) => rows.push((x, b)),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "table line {}: expected two numbers `x,b`",
                        i + 1
                    )))
                }
            }
        }
        Self::tabulated(rows)
    }

    /// `b(|x|)`.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        if x == 0.0 {
            return 1.0;
        }
        match self {
            Self::Indicator => 0.0,
            _ => 1.0 - self.one_minus_b(x),
        }
    }

    /// `1 - b(|x|)`, accurate for small `x`.
    pub fn one_minus_b(&self, x: f64) -> f64 {
        let x = x.abs();
        if x == 0.0 {
            return 0.0;
        }
        match self {
            Self::ExpPower { c, alpha } => {
                let p = if *alpha == 0.5 { x.sqrt() } else { x.powf(*alpha) };
                -(-c * p).exp_m1()
            }
            Self::Indicator => 1.0,
            Self::Tabulated(t) => t.one_minus_b(x),
        }
    }

    /// Hölder exponent of `1 - b` at the origin: `α` for the power family, 0
    /// for the indicator, and the first-segment power for a table.
    pub fn alpha(&self) -> f64 {
        match self {
            Self::ExpPower { alpha, .. } => *alpha,
            Self::Indicator => 0.0,
            Self::Tabulated(t) => t.slopes[0],
        }
    }

    /// `(k, p)` with `1 - b(x) ≈ k x^p` as `x → 0+`; `None` for the indicator.
    pub(crate) fn head_power_law(&self) -> Option<(f64, f64)> {
        match self {
            Self::ExpPower { c, alpha } => Some((*c, *alpha)),
            Self::Indicator => None,
            Self::Tabulated(t) => {
                let p = t.slopes[0];
                Some(((t.ly[0] - p * t.lx[0]).exp(), p))
            }
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Self::Indicator)
    }

    /// Classical iff `∫_{0+} (1-b)^{-1}` diverges.
    pub fn classify(&self) -> Result<NoiseClass> {
        match self {
            Self::ExpPower { alpha, .. } => Ok(if *alpha >= 1.0 {
                NoiseClass::Classical
            } else {
                NoiseClass::Nonclassical
            }),
            Self::Indicator => Ok(NoiseClass::Nonclassical),
            Self::Tabulated(t) => {
                let k_max = (-t.resolution().log2()).floor() as i32 - 1;
                if k_max < MIN_RESOLVED_SHELLS as i32 {
                    return Err(Error::InsufficientResolution(format!(
                        "smallest positive x is {:.3e}; need {} resolved dyadic shells below 1",
                        t.resolution(),
                        MIN_RESOLVED_SHELLS
                    )));
                }
                Ok(shell_test(|x| t.one_minus_b(x), k_max.min(60) as usize).class)
            }
        }
    }

    /// Inverse-CDF draw from `μ(dx) = -db(x)` on `[0, ∞)`.
    pub fn sample_mu(&self, u: f64) -> f64 {
        match self {
            Self::Indicator => 0.0,
            Self::ExpPower { c, alpha } => (-(-u).ln_1p() / c).powf(1.0 / alpha),
            Self::Tabulated(_) => {
                if u <= 0.0 {
                    return 0.0;
                }
                let mut hi = 1.0;
                while self.one_minus_b(hi) < u {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return hi;
                    }
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.one_minus_b(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// A table must resolve this many dyadic shells below 1 to be classified.
pub const MIN_RESOLVED_SHELLS: usize = 16;

/// Outcome of the dyadic-shell divergence test.
#[derive(Clone, Debug)]
pub struct ShellVerdict {
    pub class: NoiseClass,
    /// Contributions of the shells `[2^{-k-1}, 2^{-k}]`, `k = 0, 1, …`.
    pub shells: Vec<f64>,
    /// Geometric-mean ratio of consecutive shells over the last five.
    pub ratio: f64,
    /// Estimated remaining integral below the last shell (∞ when divergent).
    pub tail: f64,
}

/// Decides whether `∫_{0+}^1 dx / g(x)` diverges from the contributions of
/// `k_max` dyadic shells.
///
/// Divergent when every shell in the inner half contributes at least 90% of
/// the previous one *and* the ratio over the last five shells is within `1e-3` of 1. The second
/// condition is needed because a power law `g = x^p` with `p` close to 1 has a
/// shell ratio `2^{p-1}` above 0.9 while still being integrable.
pub fn shell_test(g: impl Fn(f64) -> f64, k_max: usize) -> ShellVerdict {
    let shells: Vec<f64> = (0..k_max)
        .map(|k| {
            let hi = 0.5f64.powi(k as i32);
            let lo = 0.5 * hi;
            // two sub-pieces per shell keep the log-variable rule exact to roundoff
            let m = lo * std::f64::consts::SQRT_2;
            integrate_log(|x| 1.0 / g(x), lo, m) + integrate_log(|x| 1.0 / g(x), m, hi)
        })
        .collect();
    let ratios: Vec<f64> = shells.windows(2).map(|w| w[1] / w[0]).collect();
    let last = &ratios[ratios.len().saturating_sub(5)..];
    let ratio = (last.iter().map(|r| r.ln()).sum::<f64>() / last.len() as f64).exp();
    // the outer shells are dominated by the bulk of b, not by its behaviour at 0
    let all_big = ratios[ratios.len() / 2..].iter().all(|&r| r >= 0.9);
    let divergent = all_big && ratio >= 1.0 - 1e-3;
    let s_last = *shells.last().unwrap_or(&0.0);
    ShellVerdict {
        class: if divergent {
            NoiseClass::Classical
        } else {
            NoiseClass::Nonclassical
        },
        shells,
        ratio,
        tail: if divergent {
            f64::INFINITY
        } else {
            s_last * ratio / (1.0 - ratio)
        },
    }
}
