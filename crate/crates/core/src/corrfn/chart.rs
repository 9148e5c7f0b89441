//! The scale chart `ξ(x) = ∫₀ˣ (1-b)^{-1}` and the speed density
//! `a(ξ) = 1 - b(x(ξ))` of the dual diffusion.

use super::{CorrelationFunction, NoiseClass};
use crate::stats::integrate_log;
use crate::{Error, Result};

/// Below this scale value the chart is a pure power law.
const XI_FLOOR: f64 = 1e-12;

/// Tabulated scale/speed chart.
///
/// `ξ` is stored at geometric nodes `x_k` and evaluated between nodes by a
/// Gauss–Legendre integral from the nearest node, so `xi_of_x` is accurate to
/// roundoff rather than to an interpolation order. The inverse uses Newton
/// steps with the exact derivative `1/(1-b)`. Below the first node the local
/// power law of `1-b` is continued analytically.
#[derive(Clone, Debug)]
pub struct ScaleSpeedChart {
    corr: CorrelationFunction,
    identity: bool,
    xs: Vec<f64>,
    xis: Vec<f64>,
    head_p: f64,
    xi_max: f64,
}

fn local_power(g: &impl Fn(f64) -> f64, x: f64) -> f64 {
    (g(2.0 * x) / g(x)).ln() / std::f64::consts::LN_2
}

impl ScaleSpeedChart {
    pub fn build(corr: &CorrelationFunction, xi_max: f64, n_nodes: usize) -> Result<Self> {
        if !(xi_max.is_finite() && xi_max > 0.0) {
            return Err(Error::InvalidInput(format!("xi_max must be positive, got {xi_max}")));
        }
        if n_nodes < 16 {
            return Err(Error::InvalidInput("chart needs at least 16 nodes".into()));
        }
        if corr.is_indicator() {
            return Ok(Self {
                corr: corr.clone(),
                identity: true,
                xs: vec![],
                xis: vec![],
                head_p: 0.0,
                xi_max,
            });
        }
        if corr.classify()? == NoiseClass::Classical {
            return Err(Error::ScaleDegenerate);
        }
        let g = |x: f64| corr.one_minus_b(x);
        let inv = |x: f64| 1.0 / corr.one_minus_b(x);

        // walk down until the power-law head carries less than XI_FLOOR
        let mut x_lo = 1e-3;
        let mut p = local_power(&g, x_lo);
        loop {
            if p >= 1.0 - 1e-9 {
                return Err(Error::ScaleDegenerate);
            }
            if x_lo / (g(x_lo) * (1.0 - p)) < XI_FLOOR || x_lo < 1e-290 {
                break;
            }
            x_lo /= 16.0;
            p = local_power(&g, x_lo);
        }
        let xi_lo = x_lo / (g(x_lo) * (1.0 - p));

        // walk up until ξ reaches xi_max
        let mut x_hi = x_lo;
        let mut xi = xi_lo;
        while xi < xi_max {
            xi += integrate_log(inv, x_hi, 1.5 * x_hi);
            x_hi *= 1.5;
        }

        let ratio = (x_hi / x_lo).powf(1.0 / (n_nodes - 1) as f64);
        let mut xs = Vec::with_capacity(n_nodes);
        let mut xis = Vec::with_capacity(n_nodes);
        xs.push(x_lo);
        xis.push(xi_lo);
        for k in 1..n_nodes {
            let x = if k == n_nodes - 1 { x_hi } else { x_lo * ratio.powi(k as i32) };
            let prev = xs[k - 1];
            xis.push(xis[k - 1] + integrate_log(inv, prev, x));
            xs.push(x);
        }
        Ok(Self {
            corr: corr.clone(),
            identity: false,
            xs,
            xis,
            head_p: p,
            xi_max,
        })
    }

    pub fn corr(&self) -> &CorrelationFunction {
        &self.corr
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    /// `ξ(|x|)`.
    pub fn xi_of_x(&self, x: f64) -> f64 {
        let x = x.abs();
        if self.identity || x == 0.0 {
            return x;
        }
        let inv = |y: f64| 1.0 / self.corr.one_minus_b(y);
        let (x0, xi0) = (self.xs[0], self.xis[0]);
        if x < x0 {
            return xi0 * (x / x0).powf(1.0 - self.head_p);
        }
        let last = self.xs.len() - 1;
        if x <= self.xs[last] {
            let k = self.xs.partition_point(|&v| v <= x) - 1;
            return self.xis[k] + integrate_log(inv, self.xs[k], x);
        }
        let mut acc = self.xis[last];
        let mut a = self.xs[last];
        while a < x {
            let b = (1.25 * a).min(x);
            acc += integrate_log(inv, a, b);
            a = b;
        }
        acc
    }

    /// Inverse of [`Self::xi_of_x`] on `[0, ∞)`.
    pub fn x_of_xi(&self, xi: f64) -> f64 {
        if self.identity || xi <= 0.0 {
            return xi.max(0.0);
        }
        let (x0, xi0) = (self.xs[0], self.xis[0]);
        if xi < xi0 {
            return x0 * (xi / xi0).powf(1.0 / (1.0 - self.head_p));
        }
        let last = self.xs.len() - 1;
        let (mut lo, mut hi, guess, base_x, base_xi);
        if xi <= self.xis[last] {
            let k = (self.xis.partition_point(|&v| v <= xi) - 1).min(last - 1);
            lo = self.xs[k];
            hi = self.xs[k + 1];
            let t = (xi / self.xis[k]).ln() / (self.xis[k + 1] / self.xis[k]).ln();
            guess = lo * (hi / lo).powf(t);
            base_x = lo;
            base_xi = self.xis[k];
        } else {
            lo = self.xs[last];
            hi = f64::INFINITY;
            guess = lo + (xi - self.xis[last]) * self.corr.one_minus_b(lo);
            base_x = lo;
            base_xi = self.xis[last];
        }
        let eval = |x: f64| {
            if base_x == self.xs[last] && x > base_x {
                self.xi_of_x(x)
            } else {
                base_xi + integrate_log(|y| 1.0 / self.corr.one_minus_b(y), base_x, x)
            }
        };
        let mut x = guess;
        for _ in 0..60 {
            let f = eval(x) - xi;
            if f > 0.0 {
                hi = hi.min(x);
            } else {
                lo = lo.max(x);
            }
            let mut next = x - f * self.corr.one_minus_b(x);
            if !(next > lo && next < hi) {
                next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
            }
            if (next - x).abs() <= 1e-15 * x {
                return next;
            }
            x = next;
        }
        x
    }

    /// Speed density `a(ξ) = 1 - b(x(ξ))`.
    pub fn a_of_xi(&self, xi: f64) -> f64 {
        if self.identity {
            return 1.0;
        }
        self.corr.one_minus_b(self.x_of_xi(xi.abs()))
    }

    /// Log-log regression slope of `a` over `[xi_lo, xi_hi]`.
    pub fn local_exponent(&self, xi_lo: f64, xi_hi: f64) -> f64 {
        let n = 41;
        let (lx, ly): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let xi = xi_lo * (xi_hi / xi_lo).powf(i as f64 / (n - 1) as f64);
                (xi.ln(), self.a_of_xi(xi).ln())
            })
            .unzip();
        crate::stats::linear_fit(&lx, &ly).0
    }

    /// Smallest and largest tabulated `x`.
    pub fn x_range(&self) -> (f64, f64) {
        if self.identity {
            (0.0, self.xi_max)
        } else {
            (self.xs[0], self.xs[self.xs.len() - 1])
        }
    }
}

/// Fast lookup of a positive function of `ξ` (clock rates in hot loops).
///
/// Geometric nodes with log-linear interpolation between `xi0` and `xi_sw`,
/// uniform nodes with linear interpolation up to `xi_end`, a power law below
/// `xi0` and the last value beyond `xi_end`.
#[derive(Clone, Debug)]
pub struct RateTable {
    constant: Option<f64>,
    xi0: f64,
    ln_xi0: f64,
    inv_ln_ratio: f64,
    geo: Vec<f64>,
    head_p: f64,
    xi_sw: f64,
    inv_h: f64,
    uni: Vec<f64>,
}

impl RateTable {
    pub fn constant(v: f64) -> Self {
        Self {
            constant: Some(v),
            xi0: 0.0,
            ln_xi0: 0.0,
            inv_ln_ratio: 0.0,
            geo: vec![],
            head_p: 0.0,
            xi_sw: 0.0,
            inv_h: 0.0,
            uni: vec![],
        }
    }

    pub fn new(f: impl Fn(f64) -> f64, xi0: f64, xi_sw: f64, xi_end: f64, ratio: f64, h: f64) -> Self {
        let n_geo = ((xi_sw / xi0).ln() / ratio.ln()).ceil() as usize + 1;
        let ratio = (xi_sw / xi0).powf(1.0 / (n_geo - 1) as f64);
        let geo: Vec<f64> = (0..n_geo).map(|k| f(xi0 * ratio.powi(k as i32))).collect();
        let n_uni = ((xi_end - xi_sw) / h).ceil() as usize + 1;
        let uni: Vec<f64> = (0..n_uni).map(|k| f(xi_sw + k as f64 * h)).collect();
        let head_p = (geo[1] / geo[0]).ln() / ratio.ln();
        Self {
            constant: None,
            xi0,
            ln_xi0: xi0.ln(),
            inv_ln_ratio: 1.0 / ratio.ln(),
            geo,
            head_p,
            xi_sw,
            inv_h: 1.0 / h,
            uni,
        }
    }

    /// `scale · a(ξ)` for a chart; constant for the identity chart.
    pub fn for_chart(chart: &ScaleSpeedChart, scale: f64) -> Self {
        if chart.is_identity() {
            return Self::constant(scale);
        }
        let end = chart.xi_max().min(64.0);
        Self::new(|xi| scale * chart.a_of_xi(xi), 1e-10, 0.05, end, 1.005, 2e-3)
    }

    #[inline]
    pub fn eval(&self, xi: f64) -> f64 {
        if let Some(v) = self.constant {
            return v;
        }
        let xi = xi.abs();
        if xi >= self.xi_sw {
            let s = (xi - self.xi_sw) * self.inv_h;
            let k = s as usize;
            if k + 1 >= self.uni.len() {
                return self.uni[self.uni.len() - 1];
            }
            let t = s - k as f64;
            return self.uni[k] + t * (self.uni[k + 1] - self.uni[k]);
        }
        if xi <= self.xi0 {
            if xi == 0.0 {
                return if self.head_p > 0.0 { 0.0 } else { self.geo[0] };
            }
            return self.geo[0] * (xi / self.xi0).powf(self.head_p);
        }
        let s = (xi.ln() - self.ln_xi0) * self.inv_ln_ratio;
        let k = (s as usize).min(self.geo.len() - 2);
        let t = s - k as f64;
        self.geo[k] + t * (self.geo[k + 1] - self.geo[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(alpha: f64) -> ScaleSpeedChart {
        let f = CorrelationFunction::exp_power(1.0, alpha).unwrap();
        ScaleSpeedChart::build(&f, 20.0, 2048).unwrap()
    }

    #[test]
    fn indicator_chart_is_identity() {
        let c = ScaleSpeedChart::build(&CorrelationFunction::Indicator, 10.0, 64).unwrap();
        for x in [0.0, 0.1, 3.0] {
            assert_eq!(c.xi_of_x(x), x);
            assert_eq!(c.x_of_xi(x), x);
            assert_eq!(c.a_of_xi(x), 1.0);
        }
    }

    #[test]
    fn classical_is_rejected() {
        let f = CorrelationFunction::exp_power(1.0, 1.0).unwrap();
        assert_eq!(ScaleSpeedChart::build(&f, 10.0, 64).unwrap_err(), Error::ScaleDegenerate);
    }

    #[test]
    fn local_exponent_matches_power_law() {
        let e = chart(0.5).local_exponent(1e-7, 1e-5);
        assert!((e - 1.0).abs() < 0.05, "{e}");
        let e = chart(0.25).local_exponent(1e-7, 1e-5);
        assert!((e - 1.0 / 3.0).abs() < 0.05, "{e}");
    }

    #[test]
    fn closed_form_scale_for_sqrt_power() {
        // ∫₀ˣ dy/(1-e^{-√y}) with y=s²: 2∫₀^{√x} s/(1-e^{-s}) ds; compare with a
        // dense trapezoid in s, which has no singularity
        let c = chart(0.5);
        let x: f64 = 2.0;
        let n = 200_000;
        let smax = x.sqrt();
        let g = |s: f64| if s == 0.0 { 1.0 } else { s / -(-s).exp_m1() };
        let h = smax / n as f64;
        let mut acc = 0.5 * (g(0.0) + g(smax));
        for i in 1..n {
            acc += g(i as f64 * h);
        }
        let oracle = 2.0 * acc * h;
        assert!((c.xi_of_x(x) - oracle).abs() < 1e-8, "{} {}", c.xi_of_x(x), oracle);
    }

    #[test]
    fn round_trip_and_monotone() {
        for alpha in [0.25, 0.5, 0.75] {
            let c = chart(alpha);
            let mut prev = 0.0;
            for i in 0..400 {
                let x = 1e-14 * 10f64.powf(i as f64 * 15.5 / 400.0);
                let xi = c.xi_of_x(x);
                assert!(xi > prev);
                prev = xi;
                let back = c.x_of_xi(xi);
                assert!((back - x).abs() <= 1e-6 * (1.0 + x), "alpha {alpha} x {x} back {back}");
            }
            assert!(c.a_of_xi(c.xi_max()) > 0.85);
            assert!(c.a_of_xi(1e-6) > 0.0 && c.a_of_xi(1e-6) < 1.0);
        }
    }

    #[test]
    fn rate_table_tracks_chart() {
        let c = chart(0.5);
        let t = RateTable::for_chart(&c, 0.5);
        for xi in [1e-12, 1e-9, 1e-6, 1e-3, 0.04, 0.06, 0.5, 3.0, 15.0] {
            let (a, b) = (0.5 * c.a_of_xi(xi), t.eval(xi));
            assert!((a - b).abs() <= 1e-4 * a, "xi {xi}: {a} vs {b}");
        }
        assert_eq!(t.eval(0.0), 0.0);
    }
}
