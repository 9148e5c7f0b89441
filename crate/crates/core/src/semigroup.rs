//! Finite-volume semigroups of the L- and L̂-diffusions on `[0, X_max]`.
//!
//! Both operators are written as `d/dm · d/ds` on the same node set: the
//! L-diffusion has scale `x` and speed `(1-b)^{-1} dx` (cell masses are
//! increments of the scale chart ξ), the L̂-diffusion has scale `ξ(x)` and
//! Lebesgue speed. Each semigroup is a birth–death chain with cell masses `M`
//! and edge conductances `k`, advanced by implicit Euler steps
//! `(M + dt K) u⁺ = M u`. The two discretisations are built independently,
//! so the duality residual measures genuine discretisation error.

use crate::corrfn::{CorrelationFunction, ScaleSpeedChart};
use crate::sde::RegimeSchedule;
use crate::{Error, NoiseClass, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    L,
    Lhat,
}

/// Behaviour at 0: reflecting (`+`), stopped (`-`) or killed (`0`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Plus,
    Minus,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SemigroupLabel {
    pub operator: Operator,
    pub boundary: Boundary,
}

impl SemigroupLabel {
    pub const fn new(operator: Operator, boundary: Boundary) -> Self {
        Self { operator, boundary }
    }
}

/// Node layout: spacing `h0 · ratio^k` near 0, capped at `h_max`, up to `x_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub h0: f64,
    pub ratio: f64,
    pub h_max: f64,
    pub x_max: f64,
    /// Implicit Euler time step.
    pub dt: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            h0: 1e-8,
            ratio: 1.1,
            h_max: 2e-3,
            x_max: 10.0,
            dt: 1e-4,
        }
    }
}

impl GridSpec {
    /// Halves every spacing and the time step.
    pub fn refined(&self) -> Self {
        Self {
            h0: 0.5 * self.h0,
            ratio: self.ratio.sqrt(),
            h_max: 0.5 * self.h_max,
            x_max: self.x_max,
            dt: 0.5 * self.dt,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.h0 > 0.0
            && self.ratio > 1.0
            && self.ratio <= 1.2
            && self.h_max >= self.h0
            && self.x_max > self.h_max
            && self.dt > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid grid {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grid1D {
    nodes: Vec<f64>,
}

impl Grid1D {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let mut nodes = vec![0.0];
        let mut h = spec.h0;
        let mut x = 0.0;
        while x + h < spec.x_max * (1.0 - 1e-12) {
            x += h;
            nodes.push(x);
            h = (h * spec.ratio).min(spec.h_max);
        }
        nodes.push(spec.x_max);
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Cell faces: 0, midpoints, x_max.
    fn faces(&self) -> Vec<f64> {
        let n = self.nodes.len();
        let mut w = Vec::with_capacity(n + 1);
        w.push(0.0);
        w.extend(self.nodes.windows(2).map(|p| 0.5 * (p[0] + p[1])));
        w.push(self.nodes[n - 1]);
        w
    }

    pub fn nearest(&self, x: f64) -> usize {
        let k = self.nodes.partition_point(|&v| v < x);
        if k == 0 {
            return 0;
        }
        if k >= self.nodes.len() {
            return self.nodes.len() - 1;
        }
        if x - self.nodes[k - 1] <= self.nodes[k] - x {
            k - 1
        } else {
            k
        }
    }
}

/// Birth–death chain: `M_i du_i/dt = k_{i+½}(u_{i+1}-u_i) - k_{i-½}(u_i-u_{i-1})`.
#[derive(Clone, Debug)]
struct Chain {
    /// Cell measures (faces of the operator's speed measure).
    mass: Vec<f64>,
    /// Edge conductances `1 / Δs`.
    cond: Vec<f64>,
    /// Cumulative speed measure at the faces (for cell averages).
    face_measure: Vec<f64>,
}

/// Tridiagonal system with a cached LU factorisation.
#[derive(Clone, Debug)]
struct Tridiag {
    sub: Vec<f64>,
    diag_inv: Vec<f64>,
    sup_mod: Vec<f64>,
}

impl Tridiag {
    fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        let mut sup_mod = vec![0.0; n];
        let mut diag_inv = vec![0.0; n];
        let mut d = diag[0];
        diag_inv[0] = 1.0 / d;
        for i in 0..n {
            if i > 0 {
                d = diag[i] - sub[i] * sup_mod[i - 1];
                diag_inv[i] = 1.0 / d;
            }
            if i + 1 < n {
                sup_mod[i] = sup[i] * diag_inv[i];
            }
        }
        Self {
            sub: sub.to_vec(),
            diag_inv,
            sup_mod,
        }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.diag_inv[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) * self.diag_inv[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.sup_mod[i] * rhs[i + 1];
        }
    }
}

/// One implicit Euler step `B u⁺ = c ⊙ u` and its transpose.
#[derive(Clone, Debug)]
struct Stepper {
    c: Vec<f64>,
    dirichlet: bool,
    sub: Vec<f64>,
    sup: Vec<f64>,
    lu: Tridiag,
    lu_t: Tridiag,
}

impl Stepper {
    fn new(chain: &Chain, boundary: Boundary, dt: f64) -> Self {
        let n = chain.mass.len();
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut c = chain.mass.clone();
        for i in 0..n {
            let kl = if i > 0 { chain.cond[i - 1] } else { 0.0 };
            let kr = if i + 1 < n { chain.cond[i] } else { 0.0 };
            diag[i] = chain.mass[i] + dt * (kl + kr);
            if i > 0 {
                sub[i] = -dt * kl;
            }
            if i + 1 < n {
                sup[i] = -dt * kr;
            }
        }
        match boundary {
            Boundary::Plus => {}
            Boundary::Minus | Boundary::Zero => {
                diag[0] = 1.0;
                sup[0] = 0.0;
                c[0] = if boundary == Boundary::Minus { 1.0 } else { 0.0 };
            }
        }
        let lu = Tridiag::factor(&sub, &diag, &sup);
        // transpose: sub/sup swap roles
        let mut sub_t = vec![0.0; n];
        let mut sup_t = vec![0.0; n];
        for i in 0..n {
            if i > 0 {
                sub_t[i] = sup[i - 1];
            }
            if i + 1 < n {
                sup_t[i] = sub[i + 1];
            }
        }
        let lu_t = Tridiag::factor(&sub_t, &diag, &sup_t);
        Self {
            c,
            dirichlet: boundary != Boundary::Plus,
            sub,
            sup,
            lu,
            lu_t,
        }
    }

    /// Solves for the increment `δ = u⁺ − u` from `B δ = (C − B) u`, written
    /// with differences of `u` so that constants are preserved exactly.
    fn backward(&self, u: &mut [f64]) {
        let n = u.len();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            // (C − B) has zero row sums except on a Dirichlet row
            let mut r = if i == 0 && self.dirichlet {
                (self.c[0] - 1.0) * u[0]
            } else {
                0.0
            };
            if i > 0 {
                r -= self.sub[i] * (u[i - 1] - u[i]);
            }
            if i + 1 < n {
                r -= self.sup[i] * (u[i + 1] - u[i]);
            }
            rhs[i] = r;
        }
        self.lu.solve(&mut rhs);
        for (v, d) in u.iter_mut().zip(&rhs) {
            *v += d;
        }
    }

    fn forward(&self, r: &mut [f64]) {
        self.lu_t.solve(r);
        for (v, c) in r.iter_mut().zip(&self.c) {
            *v *= c;
        }
    }
}

/// Semigroup solver for one correlation function on one grid.
#[derive(Clone, Debug)]
pub struct Solver {
    corr: CorrelationFunction,
    spec: GridSpec,
    grid: Grid1D,
    l: Chain,
    lhat: Chain,
    steppers: Vec<(SemigroupLabel, Stepper)>,
}

impl Solver {
    pub fn new(corr: &CorrelationFunction, spec: GridSpec) -> Result<Self> {
        if corr.classify()? == NoiseClass::Classical {
            return Err(Error::ScaleDegenerate);
        }
        let grid = Grid1D::new(&spec)?;
        let chart = ScaleSpeedChart::build(corr, spec.x_max * 2.0 + 10.0, 4096)?;
        let x = grid.nodes();
        let w = grid.faces();
        let xi_w: Vec<f64> = w.iter().map(|&v| chart.xi_of_x(v)).collect();
        let xi_x: Vec<f64> = x.iter().map(|&v| chart.xi_of_x(v)).collect();
        let l = Chain {
            mass: xi_w.windows(2).map(|p| p[1] - p[0]).collect(),
            cond: x.windows(2).map(|p| 1.0 / (p[1] - p[0])).collect(),
            face_measure: xi_w,
        };
        let lhat = Chain {
            mass: w.windows(2).map(|p| p[1] - p[0]).collect(),
            cond: xi_x.windows(2).map(|p| 1.0 / (p[1] - p[0])).collect(),
            face_measure: w,
        };
        let mut steppers = Vec::new();
        for op in [Operator::L, Operator::Lhat] {
            for bd in [Boundary::Plus, Boundary::Minus, Boundary::Zero] {
                let chain = if op == Operator::L { &l } else { &lhat };
                steppers.push((SemigroupLabel::new(op, bd), Stepper::new(chain, bd, spec.dt)));
            }
        }
        Ok(Self {
            corr: corr.clone(),
            spec,
            grid,
            l,
            lhat,
            steppers,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn corr(&self) -> &CorrelationFunction {
        &self.corr
    }

    fn chain(&self, op: Operator) -> &Chain {
        match op {
            Operator::L => &self.l,
            Operator::Lhat => &self.lhat,
        }
    }

    fn stepper(&self, label: SemigroupLabel) -> &Stepper {
        &self.steppers.iter().find(|(l, _)| *l == label).expect("all labels built").1
    }

    fn n_steps(&self, t: f64) -> usize {
        (t / self.spec.dt).round() as usize
    }

    /// Cell averages of `1_{[lo, hi]}` with respect to the operator's speed
    /// measure (indicator data mollified over one cell).
    pub fn indicator(&self, op: Operator, lo: f64, hi: f64) -> Vec<f64> {
        let chain = self.chain(op);
        let fm = &chain.face_measure;
        let w = self.grid.faces();
        let measure_at = |x: f64| -> f64 {
            // speed measure of [0, x], linear inside cells
            let k = w.partition_point(|&v| v <= x).clamp(1, w.len() - 1) - 1;
            let frac = ((x - w[k]) / (w[k + 1] - w[k])).clamp(0.0, 1.0);
            fm[k] + frac * (fm[k + 1] - fm[k])
        };
        let (mlo, mhi) = (measure_at(lo), measure_at(hi));
        (0..chain.mass.len())
            .map(|i| {
                let a = fm[i].max(mlo);
                let b = fm[i + 1].min(mhi);
                if chain.mass[i] > 0.0 {
                    ((b - a) / chain.mass[i]).clamp(0.0, 1.0)
                } else {
                    f64::from(u8::from(self.grid.nodes()[i] >= lo && self.grid.nodes()[i] <= hi))
                }
            })
            .collect()
    }

    /// Point values of a function at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.grid.nodes().iter().map(|&x| f(x)).collect()
    }

    /// `T_t f` for the labelled semigroup.
    pub fn apply(&self, label: SemigroupLabel, f: &[f64], t: f64) -> Vec<f64> {
        let mut u = f.to_vec();
        self.apply_in_place(label, &mut u, t);
        u
    }

    fn apply_in_place(&self, label: SemigroupLabel, u: &mut [f64], t: f64) {
        let st = self.stepper(label);
        let n = self.n_steps(t);
        if n > 0 && label.boundary == Boundary::Zero {
            u[0] = 0.0;
        }
        for _ in 0..n {
            st.backward(u);
        }
    }

    /// The node nearest to `x`.
    pub fn snap(&self, x: f64) -> f64 {
        self.grid.nodes()[self.grid.nearest(x)]
    }

    /// Value of a grid function at the node nearest to `x`.
    pub fn at(&self, u: &[f64], x: f64) -> f64 {
        u[self.grid.nearest(x)]
    }

    /// `∫ u dm` for the operator's speed measure.
    pub fn mass(&self, op: Operator, u: &[f64]) -> f64 {
        self.chain(op).mass.iter().zip(u).map(|(m, v)| m * v).sum()
    }

    /// Checks that mass started in `[0, 1]` stays clear of the far boundary up
    /// to time `t`.
    pub fn probe(&self, t: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for op in [Operator::L, Operator::Lhat] {
            let f = self.indicator(op, 0.0, 1.0);
            let u = self.apply(SemigroupLabel::new(op, Boundary::Plus), &f, t);
            worst = worst.max(u[u.len() - 1].abs());
        }
        if worst > 1e-8 {
            return Err(Error::GridHorizon { mass: worst });
        }
        Ok(worst)
    }

    /// `∫₀¹ E[b(ξ(t))] dt` for the difference process that reflects on `F`
    /// and is absorbed at 0 off `F`, started at 0; computed by evolving the
    /// law of `ξ` with the transposed scheme.
    pub fn avoid_probability(&self, f: &RegimeSchedule) -> f64 {
        if f.is_empty() {
            return 1.0;
        }
        let n = self.grid.len();
        // cell averages of b (two-point Gauss in x); the indicator vanishes
        // off the origin
        let w = self.grid.faces();
        let b_cells: Vec<f64> = (0..n)
            .map(|i| {
                if self.corr.is_indicator() {
                    return 0.0;
                }
                let (a, c) = (w[i], w[i + 1]);
                let g = 0.5 / 3f64.sqrt();
                0.5 * (self.corr.eval(a + (0.5 - g) * (c - a)) + self.corr.eval(a + (0.5 + g) * (c - a)))
            })
            .collect();
        let mut r = vec![0.0; n];
        r[0] = 1.0;
        let dt = self.spec.dt;
        let mut total = 0.0;
        for (a, b, in_f) in f.segments(1.0) {
            let label = SemigroupLabel::new(
                Operator::L,
                if in_f { Boundary::Plus } else { Boundary::Minus },
            );
            let st = self.stepper(label);
            let weight = |r: &[f64]| -> f64 {
                let mut s: f64 = r[1..].iter().zip(&b_cells[1..]).map(|(p, q)| p * q).sum();
                // while stopped, node 0 is the absorbed atom at the origin
                s += r[0] * if in_f { b_cells[0] } else { 1.0 };
                s
            };
            let steps = ((b - a) / dt).round().max(0.0) as usize;
            let mut prev = weight(&r);
            for _ in 0..steps {
                st.forward(&mut r);
                let cur = weight(&r);
                total += 0.5 * (prev + cur) * dt;
                prev = cur;
            }
        }
        total
    }

    /// Deterministic `P(S̃ ≠ ∅) = 1 − ∫₀¹ (T⁺_t b)(0) dt`.
    pub fn prob_nonempty(&self) -> f64 {
        1.0 - self.avoid_probability(&RegimeSchedule::full())
    }
}

/// Convenience wrapper: `T_t f` on a fresh solver.
pub fn apply_semigroup(
    label: SemigroupLabel,
    corr: &CorrelationFunction,
    f: impl Fn(f64) -> f64,
    t: f64,
    spec: GridSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = Solver::new(corr, spec)?;
    let data = s.sample(f);
    let u = s.apply(label, &data, t);
    Ok((s.grid().nodes().to_vec(), u))
}

/// Residuals `|T⁺_t 1_{[0,y]}(x) − T̂⁰_t 1_{[x,∞)}(y)|` and
/// `|T⁻_t 1_{[0,y]}(x) − T̂⁺_t 1_{[x,∞)}(y)|`, with the four values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityResidual {
    pub plus: f64,
    pub hat_zero: f64,
    pub minus: f64,
    pub hat_plus: f64,
}

impl DualityResidual {
    pub fn residual_plus0(&self) -> f64 {
        (self.plus - self.hat_zero).abs()
    }
    pub fn residual_minus_hatplus(&self) -> f64 {
        (self.minus - self.hat_plus).abs()
    }
}

pub fn check_duality_single(s: &Solver, t: f64, x: f64, y: f64) -> Result<DualityResidual> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("t must be positive, got {t}")));
    }
    let xmax = s.spec().x_max;
    let (x, y) = (s.snap(x), s.snap(y));
    let below = s.indicator(Operator::L, 0.0, y);
    let above = s.indicator(Operator::Lhat, x, xmax);
    let plus = s.at(&s.apply(SemigroupLabel::new(Operator::L, Boundary::Plus), &below, t), x);
    let minus = s.at(&s.apply(SemigroupLabel::new(Operator::L, Boundary::Minus), &below, t), x);
    let hat_zero = s.at(
        &s.apply(SemigroupLabel::new(Operator::Lhat, Boundary::Zero), &above, t),
        y,
    );
    let hat_plus = s.at(
        &s.apply(SemigroupLabel::new(Operator::Lhat, Boundary::Plus), &above, t),
        y,
    );
    Ok(DualityResidual {
        plus,
        hat_zero,
        minus,
        hat_plus,
    })
}

/// Both sides of the alternating identity for times `t_0 < … < t_m`:
/// `T⁺T⁻T⁺⋯ 1_{[0,y]}(x)` against the reversed product of `T̂⁰`/`T̂⁺`
/// applied to `1_{[x,∞)}` at `y`.
pub fn check_duality_alternating(s: &Solver, times: &[f64], x: f64, y: f64) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("need at least two times".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("times must be nondecreasing".into()));
    }
    let (x, y) = (s.snap(x), s.snap(y));
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    // left: innermost operator is the last gap
    let mut u = s.indicator(Operator::L, 0.0, y);
    for (k, &g) in gaps.iter().enumerate().rev() {
        let bd = if k % 2 == 0 { Boundary::Plus } else { Boundary::Minus };
        s.apply_in_place(SemigroupLabel::new(Operator::L, bd), &mut u, g);
    }
    let lhs = s.at(&u, x);
    // right: innermost operator is the first gap
    let mut v = s.indicator(Operator::Lhat, x, s.spec().x_max);
    for (k, &g) in gaps.iter().enumerate() {
        let bd = if k % 2 == 0 { Boundary::Zero } else { Boundary::Plus };
        s.apply_in_place(SemigroupLabel::new(Operator::Lhat, bd), &mut v, g);
    }
    let rhs = s.at(&v, y);
    Ok((lhs, rhs))
}

/// Resolvent density `g̃_λ(0,0)` of the reflected L̂-diffusion in scale
/// coordinates, with respect to the speed measure `a(ξ)dξ`.
///
/// With `φ` the decaying solution of `φ'' = λ a φ`, `g̃_λ(0,0) = -φ(0)/φ'(0)`.
/// The Riccati variable `r = φ'/φ` obeys `r' = λa − r²`, which is stable when
/// integrated from large ξ (where `r ≈ −√(λa)`) down to 0.
pub fn resolvent_at_origin(chart: &ScaleSpeedChart, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    if chart.is_identity() {
        return Ok(1.0 / lambda.sqrt());
    }
    let a = |xi: f64| chart.a_of_xi(xi);
    // start where ∫₀^Ξ √(λa) ≥ 30
    let xi_max = chart.xi_max();
    let mut big = 0.0;
    let mut xi = 0.0;
    let step = 1e-3f64.max(0.01 / lambda.sqrt());
    while big < 30.0 {
        if xi >= xi_max {
            return Err(Error::DecayNotReached { lambda, xi_max });
        }
        big += step * (lambda * a(xi + 0.5 * step)).sqrt();
        xi += step;
    }
    let mut r = -(lambda * a(xi)).sqrt();
    let rhs = |xi: f64, r: f64| lambda * a(xi) - r * r;
    let xi_min = 1e-12;
    while xi > xi_min {
        let h = (0.01 / (lambda * a(xi)).sqrt().max(r.abs()).max(1e-300))
            .min(0.05 * xi)
            .min(xi - xi_min)
            .max(1e-300);
        let k1 = rhs(xi, r);
        let k2 = rhs(xi - 0.5 * h, r - 0.5 * h * k1);
        let k3 = rhs(xi - 0.5 * h, r - 0.5 * h * k2);
        let k4 = rhs(xi - h, r - h * k3);
        r -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        xi -= h;
        if !r.is_finite() {
            return Err(Error::DecayNotReached { lambda, xi_max });
        }
    }
    // below ξ_min the λa term is negligible: d(1/r)/dξ = 1
    let inv_r0 = 1.0 / r - xi;
    Ok(-inv_r0)
}
