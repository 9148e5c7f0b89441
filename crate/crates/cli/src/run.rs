//! One function per subcommand. Each writes its CSVs into the output
//! directory and returns the JSON summary, which is also saved there as
//! `<subcommand>.json`.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Map, Value};

use harris::dimension::{box_dimension, exponent_via_resolvent, predicted_dimension};
use harris::flows::{simulate_npoint, Rho};
use harris::rng::{try_replicate, SeedStream};
use harris::sde::SimParams;
use harris::semigroup::{check_duality_alternating, check_duality_single, Solver};
use harris::spectra::{
    generating_function, prob_avoid, prob_nonempty_pde, prob_nonempty_three_ways,
    spectral_mass_fit, Estimate, SpectralSampler,
};
use harris::{CorrelationFunction, ScaleSpeedChart, VERSION};

use crate::config::Config;
use crate::{Command, Failure};

/// Chart range used by the resolvent sweep.
const CHART_XI_MAX: f64 = 64.0;
const CHART_NODES: usize = 4096;

fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn write_csv<R: Serialize>(dir: &Path, name: &str, header: &[&str], rows: &[R]) -> Result<(), Failure> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    w.write_record(header).map_err(|e| io(&path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(&path, e))?;
    }
    w.flush().map_err(|e| io(&path, e))
}

pub fn run(cmd: Command, cfg: &Config) -> Result<String, Failure> {
    let started = Instant::now();
    let out = cfg.out();
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let body = match cmd {
        Command::Classify => classify(cfg)?,
        Command::SimulateFlow => simulate_flow(cfg, out)?,
        Command::DualityCheck => duality_check(cfg, out)?,
        Command::ResolventExponent => resolvent(cfg, out)?,
        Command::SpectralAvoid => spectral_avoid(cfg)?,
        Command::NonemptyProb => nonempty(cfg)?,
        Command::Genfun => genfun(cfg, out)?,
        Command::Dimension => dimension(cfg, out)?,
    };
    let mut summary = Map::new();
    summary.insert("experiment".into(), json!(cmd.name()));
    summary.insert("version".into(), json!(VERSION));
    summary.insert("config_hash".into(), json!(cfg.hash(cmd.name())));
    summary.extend(body);
    summary.insert("wall_clock_s".into(), json!(started.elapsed().as_secs_f64()));
    let text = serde_json::to_string_pretty(&Value::Object(summary)).expect("summary serialises");
    let path = out.join(format!("{}.json", cmd.name()));
    fs::write(&path, format!("{text}\n")).map_err(|e| io(&path, e))?;
    Ok(text)
}

type Body = Map<String, Value>;

fn obj(v: Value) -> Body {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("summaries are objects"),
    }
}

fn classify(cfg: &Config) -> Result<Body, Failure> {
    let class = cfg.corr()?.classify()?;
    Ok(obj(json!({ "classification": class.as_str() })))
}

fn simulate_flow(cfg: &Config, out: &Path) -> Result<Body, Failure> {
    let corr = cfg.corr()?;
    let xs = cfg.list("flow.points")?;
    let t_end = cfg.positive("flow.t_end")?;
    let dt = cfg.positive("dt")?;
    let seed = cfg.seed()?;
    let s = simulate_npoint(&corr, &xs, t_end, dt, seed)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=xs.len()).map(|i| format!("x{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = s
        .trajectories
        .iter()
        .enumerate()
        .map(|(k, row)| std::iter::once(k as f64 * s.dt).chain(row.iter().copied()).collect())
        .collect();
    write_csv(out, "trajectories.csv", &header, &rows)?;
    let merges: Vec<(f64, usize, usize)> = s.merges.iter().map(|m| (m.time, m.i, m.j)).collect();
    write_csv(out, "merges.csv", &["time", "i", "j"], &merges)?;
    Ok(obj(json!({
        "n_points": xs.len(),
        "n_steps": s.n_steps(),
        "n_merges": s.merges.len(),
        "seed": seed,
    })))
}

fn duality_check(cfg: &Config, out: &Path) -> Result<Body, Failure> {
    let solver = Solver::new(&cfg.corr()?, cfg.grid()?)?;
    let (x, y) = (cfg.list("duality.x")?, cfg.list("duality.y")?);
    let (&[x], &[y]) = (x.as_slice(), y.as_slice()) else {
        return Err(crate::config::ConfigError {
            origin: "duality.x/duality.y".into(),
            message: "expected one number each".into(),
        }
        .into());
    };
    let mut rows = Vec::new();
    let (mut worst_plus, mut worst_minus) = (0.0f64, 0.0f64);
    for t in cfg.list("duality.t")? {
        let d = check_duality_single(&solver, t, x, y)?;
        worst_plus = worst_plus.max(d.residual_plus0());
        worst_minus = worst_minus.max(d.residual_minus_hatplus());
        rows.push((t, solver.snap(x), solver.snap(y), d.residual_plus0(), d.residual_minus_hatplus()));
    }
    write_csv(
        out,
        "duality.csv",
        &["t", "x", "y", "residual_plus0", "residual_minus_hatplus"],
        &rows,
    )?;
    let mut body = obj(json!({
        "max_residual_plus0": worst_plus,
        "max_residual_minus_hatplus": worst_minus,
    }));
    let times = cfg.list("duality.times")?;
    if !times.is_empty() {
        let (lhs, rhs) = check_duality_alternating(&solver, &times, x, y)?;
        body.insert("alternating".into(), json!({ "times": times, "lhs": lhs, "rhs": rhs }));
    }
    Ok(body)
}

fn resolvent_curve(corr: &CorrelationFunction, cfg: &Config, out: &Path) -> Result<Estimate, Failure> {
    let chart = ScaleSpeedChart::build(corr, CHART_XI_MAX, CHART_NODES)?;
    let c = exponent_via_resolvent(&chart, cfg.window("lambda_window")?, cfg.count("lambda_points")?)?;
    let rows: Vec<(f64, f64, f64)> = (0..c.lambdas.len()).map(|i| (c.lambdas[i], c.g[i], c.psi[i])).collect();
    write_csv(out, "resolvent.csv", &["lambda", "g", "psi"], &rows)?;
    Ok(Estimate {
        stderr: c.stderr,
        ..Estimate::exact("resolvent_exponent", c.exponent)
    })
}

fn predicted(corr: &CorrelationFunction) -> Value {
    predicted_dimension(corr.alpha()).map_or(Value::Null, |d| json!(d))
}

fn resolvent(cfg: &Config, out: &Path) -> Result<Body, Failure> {
    let corr = cfg.corr()?;
    let e = resolvent_curve(&corr, cfg, out)?;
    Ok(obj(json!({
        "estimates": [e],
        "predicted": predicted(&corr),
        "lambda_window": cfg.window("lambda_window")?,
    })))
}

fn spectral_avoid(cfg: &Config) -> Result<Body, Failure> {
    let corr = cfg.corr()?;
    let f = cfg.f()?;
    let a = prob_avoid(&corr, &f, cfg.positive_count("n")?, cfg.seed()?, &cfg.mc()?, cfg.grid()?)?;
    Ok(obj(json!({
        "F": f.intervals(),
        "estimates": [a.switching, a.spectral, a.deterministic],
    })))
}

fn nonempty(cfg: &Config) -> Result<Body, Failure> {
    let corr = cfg.corr()?;
    let [a, b, c] = prob_nonempty_three_ways(&corr, cfg.positive_count("n")?, cfg.seed()?, &cfg.mc()?)?;
    let pde = prob_nonempty_pde(&corr, cfg.grid()?)?;
    Ok(obj(json!({ "estimates": [a, b, c, pde] })))
}

fn rho_label(r: Rho) -> String {
    match r {
        Rho::Value(v) => v.to_string(),
        Rho::OneMinus => "1-".into(),
        Rho::OnePlus => "1+".into(),
    }
}

fn genfun(cfg: &Config, out: &Path) -> Result<Body, Failure> {
    let corr = cfg.corr()?;
    let f = cfg.f()?;
    let rhos = cfg.rhos()?;
    let seed = cfg.seed()?;
    let g = generating_function(&corr, &f, &rhos, cfg.positive_count("n")?, seed, cfg.sim()?)?;
    let rows: Vec<(String, f64, f64)> =
        rhos.iter().zip(&g).map(|(&r, e)| (rho_label(r), e.value, e.stderr)).collect();
    write_csv(out, "genfun.csv", &["rho", "G", "stderr"], &rows)?;
    let mut body = obj(json!({ "F": f.intervals(), "estimates": g }));
    let m_max = cfg.count("fit.m_max")?;
    if m_max > 0 {
        let (mut r, mut v, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (rho, e) in rhos.iter().zip(&g) {
            if let Rho::Value(x) = rho {
                r.push(*x);
                v.push(e.value);
                s.push(e.stderr);
            }
        }
        let fit = spectral_mass_fit(&r, &v, &s, m_max)?;
        body.insert("mass_fit".into(), serde_json::to_value(fit).expect("fit serialises"));
    }
    Ok(body)
}

fn dimension(cfg: &Config, out: &Path) -> Result<Body, Failure> {
    let corr = cfg.corr()?;
    let level = cfg.count("dim.level")?;
    let window = (cfg.count("dim.k_lo")? as u32, cfg.count("dim.k_hi")? as u32);
    let n = cfg.positive_count("n")?;
    let seed = cfg.seed()?;
    let params = SimParams {
        dt: 0.5f64.powi(level as i32),
        ..cfg.sim()?
    };
    let sampler = SpectralSampler::new(&corr, params)?;
    let samples = try_replicate(n, &SeedStream::new(seed).fork("dimension"), |_, rng| sampler.sample(rng))?;
    let c = box_dimension(&samples, window)?;
    let rows: Vec<(f64, f64)> = c.scales.iter().copied().zip(c.counts.iter().copied()).collect();
    write_csv(out, "box_counts.csv", &["eps", "count"], &rows)?;
    let boxes = Estimate {
        method: "box_count".into(),
        value: c.slope,
        stderr: c.stderr,
        n_replicas: n,
        master_seed: seed,
    };
    let res = resolvent_curve(&corr, cfg, out)?;
    Ok(obj(json!({
        "estimates": [boxes, res],
        "predicted": predicted(&corr),
        "n_nonempty": c.n_nonempty,
        "box_window": window,
        "lambda_window": cfg.window("lambda_window")?,
    })))
}
