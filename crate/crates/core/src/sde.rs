//! One-dimensional diffusions as time-changed Brownian motion.
//!
//! Every process here is `y(t) = β(A⁻¹(t))` for a Brownian motion `β` on its
//! own (Wiener) clock and an additive clock `A(s) = ∫₀ˢ r(β_u) du`. The
//! Wiener path is generated in coarse steps and bisected with exact Brownian
//! bridge midpoints wherever more resolution is needed: near the origin (the
//! clock rate degenerates there), where a zero would straddle a time window
//! edge, and at the horizon. Zeros inside a final segment are decided with the
//! exact bridge hitting probability.

mod clock;

pub(crate) use clock::Clock;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::corrfn::{CorrelationFunction, ScaleSpeedChart};
use crate::rng::Rng;
use crate::{Error, Result};

/// Zero probabilities below this never trigger refinement.
const ZERO_TOL: f64 = 1e-10;

/// Elementary set `F ⊂ [0,1]`: sorted, pairwise disjoint closed intervals.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RegimeSchedule {
    intervals: Vec<(f64, f64)>,
}

impl RegimeSchedule {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for (i, &(a, b)) in intervals.iter().enumerate() {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidInput(format!("interval {}: non-finite endpoint", i + 1)));
            }
            if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                return Err(Error::InvalidInput(format!(
                    "interval {}: [{a},{b}] not contained in [0,1]",
                    i + 1
                )));
            }
            if b <= a {
                return Err(Error::InvalidInput(format!(
                    "interval {}: [{a},{b}] has nonincreasing endpoints",
                    i + 1
                )));
            }
            if a <= prev {
                return Err(Error::InvalidInput(format!(
                    "interval {}: [{a},{b}] overlaps or precedes the previous interval",
                    i + 1
                )));
            }
            prev = b;
        }
        Ok(Self { intervals })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn full() -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
        }
    }

    /// Parses `"a,b;c,d"`; the empty string is the empty set.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self::empty());
        }
        let mut out = Vec::new();
        for (i, part) in s.split(';').enumerate() {
            let nums: Vec<&str> = part.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> = nums.iter().map(|v| v.parse().ok()).collect();
            match parsed.as_deref() {
                Some([a, b]) => out.push((*a, *b)),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "interval {}: expected `a,b`, got `{part}`",
                        i + 1
                    )))
                }
            }
        }
        Self::new(out)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Closed-interval membership.
    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= t && t <= b)
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    /// Splits `[0, t_end]` into consecutive `(start, end, in_f)` segments.
    pub fn segments(&self, t_end: f64) -> Vec<(f64, f64, bool)> {
        let mut out = Vec::new();
        let mut t = 0.0;
        for &(a, b) in &self.intervals {
            if a >= t_end {
                break;
            }
            if a > t {
                out.push((t, a, false));
            }
            out.push((a, b.min(t_end), true));
            t = b.min(t_end);
        }
        if t < t_end {
            out.push((t, t_end, false));
        }
        out
    }
}

impl std::fmt::Display for RegimeSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.intervals.iter().map(|(a, b)| format!("{a},{b}")).collect();
        write!(f, "{}", parts.join(";"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coordinate {
    X,
    Xi,
}

/// Trajectory sampled on the flow-time grid `k·dt`, `k = 0..=⌊T/dt⌋`.
#[derive(Clone, Debug)]
pub struct Path {
    pub dt: f64,
    pub values: Vec<f64>,
    /// Time of the last absorption still in force at the horizon.
    pub absorbed_at: Option<f64>,
    pub coordinate: Coordinate,
    /// Wiener clock consumed up to the horizon, `A⁻¹(T)`.
    pub wiener_time: f64,
    /// Wiener clock at each grid time (frozen while absorbed).
    pub clock: Vec<f64>,
}

/// Discretisation parameters shared by all simulators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    /// Flow-time grid of emitted paths.
    pub dt: f64,
    /// Finest Wiener-clock step.
    pub dt_w: f64,
    /// Coarse steps are `dt_w · 2^levels`.
    pub levels: u32,
    /// Segments within `near_k · √h` of the origin are bisected down to `dt_w`.
    pub near_k: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            dt_w: 1e-6,
            levels: 10,
            near_k: 3.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.dt_w > 0.0 && self.dt_w.is_finite()) {
            return Err(Error::InvalidInput("dt and dt_w must be positive".into()));
        }
        if self.levels > 40 || !(self.near_k >= 0.0) {
            return Err(Error::InvalidInput("levels ≤ 40 and near_k ≥ 0 required".into()));
        }
        Ok(())
    }

    fn coarse(&self) -> f64 {
        self.dt_w * 2f64.powi(self.levels as i32)
    }
}

/// Probability that a Brownian bridge from `x1` to `x2` over time `dt`
/// touches 0 (both endpoints on the same side).
pub fn bridge_zero_probability(x1: f64, x2: f64, dt: f64) -> f64 {
    if x1 * x2 <= 0.0 {
        return 1.0;
    }
    (-2.0 * x1 * x2 / dt).exp()
}

/// A final (unrefined) Wiener segment as seen by observers.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Leaf {
    pub s0: f64,
    pub h: f64,
    pub y0: f64,
    pub y1: f64,
    pub t0: f64,
    pub t1: f64,
    /// Flow time of a zero inside the segment, when one occurred.
    pub zero_at: Option<f64>,
}

/// Sequential sampler of the bridge inside a leaf at increasing flow times;
/// the clock is linearised within the leaf.
pub(crate) struct BridgeCursor {
    leaf: Leaf,
    lam: f64,
    y: f64,
}

impl BridgeCursor {
    fn new(leaf: Leaf) -> Self {
        Self {
            leaf,
            lam: 0.0,
            y: leaf.y0,
        }
    }

    /// Signed Wiener position and Wiener time at flow time `t`.
    pub(crate) fn at(&mut self, t: f64, rng: &mut Rng) -> (f64, f64) {
        let l = &self.leaf;
        let span = l.t1 - l.t0;
        let lam = if span > 0.0 {
            ((t - l.t0) / span).clamp(self.lam, 1.0)
        } else {
            1.0
        };
        if lam > self.lam {
            let frac = (lam - self.lam) / (1.0 - self.lam);
            let var = l.h * (1.0 - self.lam) * frac * (1.0 - frac);
            let z: f64 = rng.sample(StandardNormal);
            self.y += frac * (l.y1 - self.y) + var.max(0.0).sqrt() * z;
            self.lam = lam;
        }
        (self.y, l.s0 + self.lam * l.h)
    }
}

pub(crate) trait Observer {
    /// Asked only for segments that may contain a zero.
    fn split(&self, _t0: f64, _t1: f64) -> bool {
        false
    }
    /// Final segments in time order; return `false` to stop the run.
    fn leaf(&mut self, leaf: &Leaf, cursor: &mut BridgeCursor, rng: &mut Rng) -> bool;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct RunEnd {
    /// Signed Wiener position at the end (0 when absorbed).
    pub y: f64,
    /// Wiener time consumed.
    pub wiener: f64,
    pub absorbed_at: Option<f64>,
}

pub(crate) struct Engine<'a> {
    clock: &'a Clock,
    h_min: f64,
    coarse: f64,
    near_k: f64,
}

enum Flow {
    Continue(f64),
    Done(RunEnd),
}

impl<'a> Engine<'a> {
    pub(crate) fn new(clock: &'a Clock, p: &SimParams) -> Self {
        Self {
            clock,
            h_min: p.dt_w,
            coarse: p.coarse(),
            near_k: if clock.is_regular() { 0.0 } else { p.near_k },
        }
    }

    /// Runs from Wiener position `y` at flow time `t_start` until `t_end`.
    pub(crate) fn run<O: Observer>(
        &self,
        y: f64,
        t_start: f64,
        t_end: f64,
        absorb: bool,
        rng: &mut Rng,
        obs: &mut O,
    ) -> Result<RunEnd> {
        if absorb && y == 0.0 {
            return Ok(RunEnd {
                y: 0.0,
                wiener: 0.0,
                absorbed_at: Some(t_start),
            });
        }
        if t_end <= t_start {
            return Ok(RunEnd {
                y,
                wiener: 0.0,
                absorbed_at: None,
            });
        }
        let stall = 1e3 + 1e4 * (t_end - t_start);
        let (mut y, mut s, mut t) = (y, 0.0, t_start);
        let sh = self.coarse.sqrt();
        loop {
            if s > stall {
                return Err(Error::ClockStall {
                    wiener_time: s,
                    flow_time: t,
                });
            }
            let z: f64 = rng.sample(StandardNormal);
            let y1 = y + sh * z;
            let ctx = Ctx { t_end, absorb };
            match self.process(y, y1, s, self.coarse, t, &ctx, rng, obs)? {
                Flow::Continue(t1) => {
                    y = y1;
                    s += self.coarse;
                    t = t1;
                }
                Flow::Done(end) => return Ok(end),
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn process<O: Observer>(
        &self,
        y0: f64,
        y1: f64,
        s0: f64,
        h: f64,
        t0: f64,
        ctx: &Ctx,
        rng: &mut Rng,
        obs: &mut O,
    ) -> Result<Flow> {
        let inc = self.clock.increment(y0, y1, h);
        if !inc.is_finite() || inc < 0.0 {
            return Err(Error::ClockStall {
                wiener_time: s0,
                flow_time: t0,
            });
        }
        let t1 = t0 + inc;
        let p = bridge_zero_probability(y0, y1, h);
        let can_split = h > 1.5 * self.h_min;
        let split = can_split
            && (self.clock.needs_split(y0, y1, h)
                || (self.near_k > 0.0
                    && (y0 * y1 <= 0.0 || y0.abs().min(y1.abs()) < self.near_k * h.sqrt()))
                || (p > ZERO_TOL && ((t0 < ctx.t_end && t1 > ctx.t_end) || obs.split(t0, t1))));
        if split {
            let z: f64 = rng.sample(StandardNormal);
            let mid = 0.5 * (y0 + y1) + (0.25 * h).sqrt() * z;
            let tm = match self.process(y0, mid, s0, 0.5 * h, t0, ctx, rng, obs)? {
                Flow::Continue(tm) => tm,
                done => return Ok(done),
            };
            return self.process(mid, y1, s0 + 0.5 * h, 0.5 * h, tm, ctx, rng, obs);
        }

        let zero = p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p);
        let zero_at = zero.then(|| {
            let frac = if y0 * y1 < 0.0 {
                y0.abs() / (y0.abs() + y1.abs())
            } else if y0 == 0.0 {
                0.0
            } else if y1 == 0.0 {
                1.0
            } else {
                0.5
            };
            t0 + frac * inc
        });
        let leaf = Leaf {
            s0,
            h,
            y0,
            y1,
            t0,
            t1,
            zero_at,
        };
        let mut cursor = BridgeCursor::new(leaf);
        let go_on = obs.leaf(&leaf, &mut cursor, rng);
        if ctx.absorb {
            if let Some(tz) = zero_at.filter(|&tz| tz <= ctx.t_end) {
                let frac = if inc > 0.0 { (tz - t0) / inc } else { 0.0 };
                return Ok(Flow::Done(RunEnd {
                    y: 0.0,
                    wiener: s0 + frac * h,
                    absorbed_at: Some(tz),
                }));
            }
        }
        if !go_on {
            return Ok(Flow::Done(RunEnd {
                y: y1,
                wiener: s0 + h,
                absorbed_at: None,
            }));
        }
        if t1 >= ctx.t_end {
            let (y, w) = cursor.at(ctx.t_end, rng);
            return Ok(Flow::Done(RunEnd {
                y,
                wiener: w,
                absorbed_at: None,
            }));
        }
        Ok(Flow::Continue(t1))
    }
}

struct Ctx {
    t_end: f64,
    absorb: bool,
}

/// Records a path on the flow grid and/or `∫ f(|y|) dt`.
pub(crate) struct Recorder<'f> {
    pub dt: f64,
    pub values: Option<Vec<f64>>,
    pub clock: Vec<f64>,
    /// Wiener time at the start of the current segment.
    pub s_offset: f64,
    last_s: f64,
    pub integrand: Option<&'f (dyn Fn(f64) -> f64 + Sync)>,
    pub integral: f64,
    pub t_end: f64,
    /// A zero ends the current segment.
    pub absorbing: bool,
}

impl<'f> Recorder<'f> {
    pub(crate) fn new(dt: f64, keep_path: bool) -> Self {
        Self {
            dt,
            values: keep_path.then(Vec::new),
            clock: Vec::new(),
            s_offset: 0.0,
            last_s: 0.0,
            integrand: None,
            integral: 0.0,
            t_end: f64::INFINITY,
            absorbing: false,
        }
    }

    fn next_time(&self) -> f64 {
        self.values.as_ref().map_or(f64::INFINITY, |v| v.len() as f64 * self.dt)
    }

    /// Grid values and clock readings on `0..=⌊t_end/dt⌋`.
    fn finish(&mut self, t_end: f64, y_end: f64, s_end: f64) -> (Vec<f64>, Vec<f64>) {
        let mut values = self.values.take().unwrap_or_default();
        let mut clock = std::mem::take(&mut self.clock);
        let n = (t_end / self.dt + 1e-9).floor() as usize + 1;
        values.truncate(n);
        clock.truncate(n);
        values.resize(n, y_end.abs());
        clock.resize(n, s_end);
        (values, clock)
    }

    pub(crate) fn set_last_s(&mut self, s: f64) {
        self.last_s = s;
    }

    /// Constant value on `[t0, t1)`.
    pub(crate) fn hold(&mut self, t0: f64, t1: f64, y: f64) {
        if let Some(f) = self.integrand {
            self.integral += (t1 - t0) * f(y.abs());
        }
        if let Some(v) = self.values.as_mut() {
            while (v.len() as f64) * self.dt < t1 - 1e-12 {
                v.push(y.abs());
                self.clock.push(self.last_s);
            }
        }
    }
}

impl Observer for Recorder<'_> {
    fn leaf(&mut self, leaf: &Leaf, cursor: &mut BridgeCursor, rng: &mut Rng) -> bool {
        let mut t_hi = leaf.t1.min(self.t_end);
        if self.absorbing {
            t_hi = t_hi.min(leaf.zero_at.unwrap_or(f64::INFINITY));
        }
        if let Some(f) = self.integrand {
            if t_hi > leaf.t0 {
                let frac = (t_hi - leaf.t0) / (leaf.t1 - leaf.t0);
                // a leaf endpoint at exactly 0 stands for its neighbourhood
                let g = |y: f64| f(y.abs().max(f64::MIN_POSITIVE));
                self.integral +=
                    (t_hi - leaf.t0) * 0.5 * (g(leaf.y0) + g(leaf.y0 + frac * (leaf.y1 - leaf.y0)));
            }
        }
        loop {
            let tk = self.next_time();
            if !(tk < t_hi - 1e-12) {
                break;
            }
            let (y, w) = cursor.at(tk, rng);
            self.values.as_mut().expect("grid enabled").push(y.abs());
            self.clock.push(self.s_offset + w);
        }
        self.last_s = self.s_offset + leaf.s0 + leaf.h;
        true
    }
}

/// Difference of two particles: the L-diffusion (`ρ = 1`) or a ρ-joining
/// difference on `F`, and the coalescing L-diffusion (absorbed at 0) off `F`.
#[derive(Clone, Debug)]
pub struct DifferenceProcess {
    on_f: Clock,
    off_f: Clock,
    params: SimParams,
}

/// Terminal state of a run together with an integrated functional.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Functional {
    pub y_end: f64,
    pub wiener_time: f64,
    pub integral: f64,
    pub absorbed_at: Option<f64>,
}

/// Outcome of a regime-switching run.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SwitchEnd {
    pub y: f64,
    pub wiener: f64,
    pub absorbed_at: Option<f64>,
}

impl DifferenceProcess {
    /// `rho ∈ [0, 1]`; `rho = 1` is the 1⁻ case (reflecting L-diffusion on F).
    pub fn new(corr: &CorrelationFunction, rho: f64, params: SimParams) -> Result<Self> {
        params.validate()?;
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidInput(format!("rho must lie in [0,1], got {rho}")));
        }
        if corr.classify()? == crate::NoiseClass::Classical {
            return Err(Error::ScaleDegenerate);
        }
        let off_f = Clock::difference(corr, 1.0);
        let on_f = if rho == 1.0 {
            off_f.clone()
        } else {
            Clock::difference(corr, rho)
        };
        Ok(Self {
            on_f,
            off_f,
            params,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub(crate) fn run<'f>(
        &self,
        x0: f64,
        f: &RegimeSchedule,
        t_end: f64,
        rng: &mut Rng,
        rec: &mut Recorder<'f>,
    ) -> Result<SwitchEnd> {
        let mut y = x0;
        let mut wiener = 0.0;
        let mut absorbed_at = None;
        for (a, b, in_f) in f.segments(t_end) {
            rec.t_end = b;
            rec.absorbing = !in_f;
            rec.s_offset = wiener;
            if in_f {
                let end = Engine::new(&self.on_f, &self.params).run(y, a, b, false, rng, rec)?;
                y = end.y;
                wiener += end.wiener;
                absorbed_at = None;
            } else {
                let end = Engine::new(&self.off_f, &self.params).run(y, a, b, true, rng, rec)?;
                wiener += end.wiener;
                match end.absorbed_at {
                    Some(ta) => {
                        rec.set_last_s(wiener);
                        rec.hold(ta, b, 0.0);
                        y = 0.0;
                        if absorbed_at.is_none() {
                            absorbed_at = Some(ta);
                        }
                    }
                    None => y = end.y,
                }
            }
        }
        Ok(SwitchEnd {
            y,
            wiener,
            absorbed_at,
        })
    }

    /// Runs without storing the path; returns the terminal state and
    /// `∫₀^{t_end} g(|ξ(t)|) dt`.
    pub fn functional(
        &self,
        f: &RegimeSchedule,
        t_end: f64,
        g: &(dyn Fn(f64) -> f64 + Sync),
        rng: &mut Rng,
    ) -> Result<Functional> {
        self.functional_from(0.0, f, t_end, g, rng)
    }

    /// As [`functional`](Self::functional), started at `x0 ≥ 0`.
    pub fn functional_from(
        &self,
        x0: f64,
        f: &RegimeSchedule,
        t_end: f64,
        g: &(dyn Fn(f64) -> f64 + Sync),
        rng: &mut Rng,
    ) -> Result<Functional> {
        if !(x0 >= 0.0 && x0.is_finite()) {
            return Err(Error::InvalidInput(format!("start must be ≥ 0, got {x0}")));
        }
        let mut rec = Recorder::new(self.params.dt, false);
        rec.integrand = Some(g);
        let end = self.run(x0, f, t_end, rng, &mut rec)?;
        Ok(Functional {
            y_end: end.y.abs(),
            wiener_time: end.wiener,
            integral: rec.integral,
            absorbed_at: end.absorbed_at,
        })
    }

    /// `|ξ|` on the flow grid over `[0, t_end]`.
    pub fn path(&self, f: &RegimeSchedule, t_end: f64, rng: &mut Rng) -> Result<Path> {
        let mut rec = Recorder::new(self.params.dt, true);
        let end = self.run(0.0, f, t_end, rng, &mut rec)?;
        let (values, clock) = rec.finish(t_end, end.y, end.wiener);
        Ok(Path {
            dt: self.params.dt,
            values,
            absorbed_at: end.absorbed_at,
            coordinate: Coordinate::X,
            wiener_time: end.wiener,
            clock,
        })
    }
}

/// The dual (L̂) diffusion in scale coordinates, reflected at 0.
#[derive(Clone, Debug)]
pub struct DualProcess {
    clock: Clock,
    params: SimParams,
}

impl DualProcess {
    pub fn new(chart: &ScaleSpeedChart, params: SimParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            clock: Clock::dual(chart),
            params,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub(crate) fn run<O: Observer>(
        &self,
        xi0: f64,
        t_end: f64,
        rng: &mut Rng,
        obs: &mut O,
    ) -> Result<RunEnd> {
        Engine::new(&self.clock, &self.params).run(xi0, 0.0, t_end, false, rng, obs)
    }

    pub fn path(&self, xi0: f64, t_end: f64, rng: &mut Rng) -> Result<Path> {
        let mut rec = Recorder::new(self.params.dt, true);
        rec.t_end = t_end;
        let end = self.run(xi0, t_end, rng, &mut rec)?;
        let (values, clock) = rec.finish(t_end, end.y, end.wiener);
        Ok(Path {
            dt: self.params.dt,
            values,
            absorbed_at: None,
            coordinate: Coordinate::Xi,
            wiener_time: end.wiener,
            clock,
        })
    }
}

/// Reflecting L-diffusion `ξ⁺` started at 0.
pub fn simulate_l_reflecting(
    corr: &CorrelationFunction,
    t: f64,
    params: SimParams,
    rng: &mut Rng,
) -> Result<Path> {
    DifferenceProcess::new(corr, 1.0, params)?.path(&RegimeSchedule::full(), t, rng)
}

/// Reflecting L̂-diffusion in scale coordinates started at `x0_xi`.
pub fn simulate_lhat_reflecting(
    chart: &ScaleSpeedChart,
    x0_xi: f64,
    t: f64,
    params: SimParams,
    rng: &mut Rng,
) -> Result<Path> {
    if !(x0_xi >= 0.0) {
        return Err(Error::InvalidInput(format!("start must be ≥ 0, got {x0_xi}")));
    }
    DualProcess::new(chart, params)?.path(x0_xi, t, rng)
}

/// `|ξ|` on `[0,1]`: reflecting L on `F`, absorbed at 0 off `F`.
pub fn simulate_difference_switching(
    corr: &CorrelationFunction,
    f: &RegimeSchedule,
    params: SimParams,
    rng: &mut Rng,
) -> Result<Path> {
    DifferenceProcess::new(corr, 1.0, params)?.path(f, 1.0, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    #[test]
    fn bridge_probability_examples() {
        assert_eq!(bridge_zero_probability(0.0, 0.7, 0.1), 1.0);
        assert!((bridge_zero_probability(1.0, 1.0, 0.5) - (-4.0f64).exp()).abs() < 1e-15);
        assert!(bridge_zero_probability(3.0, 3.0, 0.1) < 1e-70);
    }

    #[test]
    fn schedule_validation_and_segments() {
        assert!(RegimeSchedule::parse("0.5,0.2").is_err());
        assert!(RegimeSchedule::parse("0,0.3;0.2,0.5").is_err());
        assert!(RegimeSchedule::parse("0,1.5").is_err());
        let f = RegimeSchedule::parse("0,0.25; 0.5,0.75").unwrap();
        assert_eq!(
            f.segments(1.0),
            vec![(0.0, 0.25, true), (0.25, 0.5, false), (0.5, 0.75, true), (0.75, 1.0, false)]
        );
        assert!(f.contains(0.25) && !f.contains(0.3));
        assert_eq!(f.to_string(), "0,0.25;0.5,0.75");
        assert_eq!(RegimeSchedule::empty().segments(1.0), vec![(0.0, 1.0, false)]);
    }

    #[test]
    fn paths_start_at_origin_and_have_grid_length() {
        let corr = CorrelationFunction::exp_power(1.0, 0.5).unwrap();
        let p = SimParams::default();
        let path = simulate_l_reflecting(&corr, 1.0, p, &mut SeedStream::new(3).rng(0)).unwrap();
        assert_eq!(path.values.len(), 10_001);
        assert_eq!(path.values[0], 0.0);
        assert!(path.values.iter().all(|v| *v >= 0.0));
        let empty = simulate_difference_switching(&corr, &RegimeSchedule::empty(), p, &mut SeedStream::new(3).rng(0)).unwrap();
        assert!(empty.values.iter().all(|v| *v == 0.0));
        assert_eq!(empty.absorbed_at, Some(0.0));
    }

    #[test]
    fn absorbed_paths_stay_at_zero() {
        let corr = CorrelationFunction::Indicator;
        let f = RegimeSchedule::parse("0,0.2").unwrap();
        let proc_ = DifferenceProcess::new(&corr, 1.0, SimParams::default()).unwrap();
        let seeds = SeedStream::new(11);
        for i in 0..50 {
            let path = proc_.path(&f, 1.0, &mut seeds.rng(i)).unwrap();
            if let Some(ta) = path.absorbed_at {
                let k = (ta / path.dt).ceil() as usize;
                assert!(path.values[k.min(path.values.len() - 1)..].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn far_start_rarely_hits_zero() {
        // |B| would need to travel 10 with variance ≤ 2·0.01
        let chart = ScaleSpeedChart::build(&CorrelationFunction::exp_power(1.0, 0.5).unwrap(), 40.0, 1024).unwrap();
        let dual = DualProcess::new(&chart, SimParams::default()).unwrap();
        struct Z(bool);
        impl Observer for Z {
            fn leaf(&mut self, l: &Leaf, _: &mut BridgeCursor, _: &mut Rng) -> bool {
                self.0 |= l.zero_at.is_some();
                true
            }
        }
        let seeds = SeedStream::new(5);
        for i in 0..200 {
            let mut z = Z(false);
            dual.run(10.0, 0.01, &mut seeds.rng(i), &mut z).unwrap();
            assert!(!z.0);
        }
    }
}
