//! n-point motions of a Harris flow and two-point motions of its joinings.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::{replicate, try_replicate, Rng, SeedStream};
use crate::sde::{bridge_zero_probability, DifferenceProcess, Path, SimParams};
use crate::stats::ks_two_sample;
use crate::{CorrelationFunction, Error, RegimeSchedule, Result};

/// Continuous `b`: clusters closer than this may merge.
pub const MERGE_TOL: f64 = 1e-5;

/// Diagonal jitter tried once when the Cholesky factorisation fails.
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// Euler step of the joint two-point engine.
pub const JOINT_DT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Merge {
    pub step: usize,
    pub time: f64,
    /// Smallest particle index of each of the two merging clusters.
    pub i: usize,
    pub j: usize,
}

#[derive(Clone, Debug)]
pub struct FlowSample {
    pub dt: f64,
    pub points: Vec<f64>,
    /// `trajectories[k][i]`: position of particle `i` at time `k·dt`.
    pub trajectories: Vec<Vec<f64>>,
    /// Coalescence events in time order.
    pub merges: Vec<Merge>,
}

impl FlowSample {
    pub fn n_steps(&self) -> usize {
        self.trajectories.len() - 1
    }

    /// Cluster label (smallest member index) of every particle after `step`.
    pub fn partition_at(&self, step: usize) -> Vec<usize> {
        let mut label: Vec<usize> = (0..self.points.len()).collect();
        for m in self.merges.iter().take_while(|m| m.step <= step) {
            let (keep, drop) = (label[m.i].min(label[m.j]), label[m.i].max(label[m.j]));
            for l in label.iter_mut() {
                if *l == drop {
                    *l = keep;
                }
            }
        }
        label
    }

    /// Time of the first merge involving both `i` and `j`, if any.
    pub fn coalescence_time(&self, i: usize, j: usize) -> Option<f64> {
        (0..=self.n_steps())
            .find(|&k| {
                let p = self.partition_at(k);
                p[i] == p[j]
            })
            .map(|k| k as f64 * self.dt)
    }
}

struct Cluster {
    members: Vec<usize>,
    pos: f64,
}

impl Cluster {
    fn head(&self) -> usize {
        *self.members.iter().min().expect("clusters are never empty")
    }
}

fn cholesky(c: DMatrix<f64>, pos: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(l) = c.clone().cholesky() {
        return Ok(l.l());
    }
    let n = c.nrows();
    let jittered = c + DMatrix::identity(n, n) * CHOLESKY_JITTER;
    jittered
        .cholesky()
        .map(|l| l.l())
        .ok_or_else(|| Error::NotPositiveDefinite(pos.to_vec()))
}

/// Euler scheme for the n-point motion started from distinct `xs`.
///
/// Each step draws Gaussian increments with covariance `b(x_i − x_j) dt`
/// over the current clusters. Crossed neighbours are merged (pooling
/// adjacent violators keeps the order), and touching neighbours are merged
/// when the bridge of their difference hits 0: by a Bernoulli draw for the
/// indicator, and when closer than [`MERGE_TOL`] with hitting probability
/// above ½ otherwise.
pub fn simulate_npoint_with(
    corr: &CorrelationFunction,
    xs: &[f64],
    t_end: f64,
    dt: f64,
    rng: &mut Rng,
) -> Result<FlowSample> {
    if xs.is_empty() {
        return Err(Error::InvalidInput("need at least one starting point".into()));
    }
    if !(dt > 0.0 && t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidInput("need dt > 0 and a finite T ≥ 0".into()));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    if order.windows(2).any(|w| xs[w[0]] == xs[w[1]]) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("starting points must be finite and distinct".into()));
    }
    let mut clusters: Vec<Cluster> = order
        .iter()
        .map(|&i| Cluster {
            members: vec![i],
            pos: xs[i],
        })
        .collect();
    let steps = (t_end / dt).round() as usize;
    let sdt = dt.sqrt();
    let snapshot = |cl: &[Cluster]| {
        let mut row = vec![0.0; xs.len()];
        for c in cl {
            for &i in &c.members {
                row[i] = c.pos;
            }
        }
        row
    };
    let mut trajectories = Vec::with_capacity(steps + 1);
    trajectories.push(snapshot(&clusters));
    let mut merges = Vec::new();
    for step in 1..=steps {
        let m = clusters.len();
        let pos: Vec<f64> = clusters.iter().map(|c| c.pos).collect();
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let inc = if corr.is_indicator() || m == 1 {
            z
        } else {
            let c = DMatrix::from_fn(m, m, |i, j| corr.eval(pos[i] - pos[j]));
            cholesky(c, &pos)? * z
        };
        let old = pos;
        for (k, c) in clusters.iter_mut().enumerate() {
            c.pos += sdt * inc[k];
        }
        // stack pass: merge crossed or touching neighbours
        let mut merged: Vec<(Cluster, f64)> = Vec::with_capacity(m);
        for (k, c) in clusters.drain(..).enumerate() {
            let mut cur = (c, old[k]);
            while let Some((top, top_old)) = merged.last() {
                let d1 = cur.0.pos - top.pos;
                let d0 = cur.1 - top_old;
                let meet = if d1 <= 0.0 {
                    true
                } else if corr.is_indicator() {
                    // difference of independent motions has variance 2 dt
                    let p = bridge_zero_probability(d0, d1, 2.0 * dt);
                    rng.random::<f64>() < p
                } else {
                    let var = 2.0 * corr.one_minus_b(d0) * dt;
                    d1 < MERGE_TOL && bridge_zero_probability(d0, d1, var) > 0.5
                };
                if !meet {
                    break;
                }
                let (top, top_old) = merged.pop().expect("checked non-empty");
                merges.push(Merge {
                    step,
                    time: step as f64 * dt,
                    i: top.head(),
                    j: cur.0.head(),
                });
                let mut members = top.members;
                members.extend(cur.0.members);
                cur = (
                    Cluster {
                        members,
                        pos: 0.5 * (top.pos + cur.0.pos),
                    },
                    0.5 * (top_old + cur.1),
                );
            }
            merged.push(cur);
        }
        clusters = merged.into_iter().map(|(c, _)| c).collect();
        trajectories.push(snapshot(&clusters));
    }
    Ok(FlowSample {
        dt,
        points: xs.to_vec(),
        trajectories,
        merges,
    })
}

/// [`simulate_npoint_with`] on replica stream 0 of `seed`.
pub fn simulate_npoint(
    corr: &CorrelationFunction,
    xs: &[f64],
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<FlowSample> {
    simulate_npoint_with(corr, xs, t_end, dt, &mut SeedStream::new(seed).rng(0))
}

/// Correlation parameter of a joining.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rho {
    Value(f64),
    /// Limit law as ρ ↑ 1: reflected L-diffusion.
    OneMinus,
    /// Identity joining: both flows coincide.
    OnePlus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JoiningSpec {
    pub rho: Rho,
    pub f: RegimeSchedule,
}

impl JoiningSpec {
    pub fn new(rho: Rho, f: RegimeSchedule) -> Result<Self> {
        if let Rho::Value(r) = rho {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::InvalidInput(format!("rho must lie in [0, 1), got {r}")));
            }
        }
        Ok(Self { rho, f })
    }
}

/// `|X_{0,t}(0) − X'_{0,t}(0)|` on `[0, 1]` for a `(ρ, F)`-joining.
pub fn simulate_joining_difference_with(
    corr: &CorrelationFunction,
    spec: &JoiningSpec,
    params: SimParams,
    rng: &mut Rng,
) -> Result<Path> {
    let rho = match spec.rho {
        Rho::Value(r) => r,
        Rho::OneMinus => 1.0,
        Rho::OnePlus => {
            params.validate()?;
            let n = (1.0 / params.dt + 1e-9).floor() as usize + 1;
            return Ok(Path {
                dt: params.dt,
                values: vec![0.0; n],
                absorbed_at: Some(0.0),
                coordinate: crate::sde::Coordinate::X,
                wiener_time: 0.0,
                clock: vec![0.0; n],
            });
        }
    };
    DifferenceProcess::new(corr, rho, params)?.path(&spec.f, 1.0, rng)
}

pub fn simulate_joining_difference(
    corr: &CorrelationFunction,
    spec: &JoiningSpec,
    params: SimParams,
    seed: u64,
) -> Result<Path> {
    simulate_joining_difference_with(corr, spec, params, &mut SeedStream::new(seed).rng(0))
}

/// Joint Euler simulation of `(X_{0,t}(0), X'_{0,t}(0))` for a ρ-joining:
/// unit variances and cross-covariance `ρ b(X − X')`.
pub fn simulate_joining_pair(
    corr: &CorrelationFunction,
    rho: f64,
    t_end: f64,
    dt: f64,
    rng: &mut Rng,
) -> (f64, f64) {
    let (mut x, mut y) = (0.0f64, 0.0f64);
    let sdt = dt.sqrt();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        let r = rho * corr.eval(x - y);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        x += sdt * z1;
        y += sdt * (r * z1 + (1.0 - r * r).max(0.0).sqrt() * z2);
    }
    (x, y)
}

/// KS distance at `t = 1` between `|X − X'|` from the joint two-point engine
/// and from the difference diffusion.
pub fn joint_vs_difference_check(
    corr: &CorrelationFunction,
    rho: f64,
    n_samples: usize,
    seed: u64,
    params: SimParams,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::EmptySample);
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("rho must lie in [0, 1), got {rho}")));
    }
    let seeds = SeedStream::new(seed);
    let joint: Vec<f64> = replicate(n_samples, &seeds.fork("joint"), |_, rng| {
        let (x, y) = simulate_joining_pair(corr, rho, 1.0, JOINT_DT, rng);
        (x - y).abs()
    });
    let diff = DifferenceProcess::new(corr, rho, params)?;
    let full = RegimeSchedule::full();
    let zero = |_: f64| 0.0;
    let marg: Vec<f64> = try_replicate(n_samples, &seeds.fork("difference"), |_, rng| {
        Ok(diff.functional(&full, 1.0, &zero, rng)?.y_end)
    })?;
    ks_two_sample(&joint, &marg)
}
