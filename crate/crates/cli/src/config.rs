//! Flat `key = value` configuration with per-key provenance, so that every
//! validation error can point at the file line or flag that set the value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use harris::flows::Rho;
use harris::semigroup::GridSpec;
use harris::sde::SimParams;
use harris::spectra::McParams;
use harris::{CorrelationFunction, RegimeSchedule};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{origin}: {message}")]
pub struct ConfigError {
    pub origin: String,
    pub message: String,
}

fn err(origin: impl fmt::Display, message: impl Into<String>) -> ConfigError {
    ConfigError {
        origin: origin.to_string(),
        message: message.into(),
    }
}

/// Known keys, their defaults and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("b.kind", "exp_power", "exp_power | indicator | tabulated"),
    ("b.c", "1", "scale c of exp(-c|x|^alpha)"),
    ("b.alpha", "0.5", "exponent alpha of exp(-c|x|^alpha)"),
    ("b.table_path", "", "CSV `x,b` with header, for b.kind = tabulated"),
    ("F", "0.25,0.5", "elementary set `a,b;c,d` in [0,1]"),
    ("n", "10000", "Monte Carlo replicas"),
    ("seed", "1", "master seed"),
    ("dt", "1e-4", "flow-time grid step"),
    ("dt_w", "1e-6", "finest Wiener-clock step"),
    ("levels", "10", "coarse Wiener step is dt_w * 2^levels"),
    ("near_k", "3", "bridge refinement band in units of sqrt(step)"),
    ("clock.dt_w", "1e-4", "finest Wiener step when only the clock is read"),
    ("clock.levels", "4", "coarse levels when only the clock is read"),
    ("rho", "0,0.25,0.5,0.75,0.9", "joining parameters; `1-` and `1+` allowed"),
    ("fit.m_max", "3", "highest fitted spectral level (0 disables the fit)"),
    ("lambda_window", "1e2,1e6", "resolvent sweep `lo,hi`"),
    ("lambda_points", "17", "resolvent sweep size"),
    ("grid.h0", "1e-8", "first spacing of the semigroup grid"),
    ("grid.ratio", "1.1", "geometric growth of the spacing"),
    ("grid.h_max", "2e-3", "largest spacing"),
    ("grid.x_max", "10", "far end of the grid"),
    ("grid.dt", "1e-4", "semigroup time step"),
    ("flow.points", "0,0.1,0.3", "initial positions for simulate-flow"),
    ("flow.t_end", "1", "horizon for simulate-flow"),
    ("duality.t", "0.1,0.5,1", "times for duality-check"),
    ("duality.x", "0.3", "x for duality-check"),
    ("duality.y", "0.7", "y for duality-check"),
    ("duality.times", "", "optional alternating times `0,t1,...,1`"),
    ("dim.level", "20", "dimension samples on cells of 2^-level"),
    ("dim.k_lo", "6", "coarsest box level of the fit"),
    ("dim.k_hi", "16", "finest box level of the fit"),
    ("out", "out", "output directory"),
];

#[derive(Clone, Debug, PartialEq)]
enum Origin {
    Default,
    File(String, usize),
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "default"),
            Origin::File(p, l) => write!(f, "{p}:{l}"),
            Origin::Flag(name) => write!(f, "--{name}"),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Clone, Debug)]
pub struct Config {
    entries: BTreeMap<&'static str, Entry>,
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().map(|k| k.0).find(|k| *k == key)
}

impl Default for Config {
    fn default() -> Self {
        let entries = KEYS
            .iter()
            .map(|&(k, v, _)| {
                let e = Entry {
                    value: v.to_string(),
                    origin: Origin::Default,
                };
                (k, e)
            })
            .collect();
        Self { entries }
    }
}

impl Config {
    /// `--show-config` text: every key with its current value, commented.
    pub fn show(&self) -> String {
        let mut s = String::new();
        for (k, _, help) in KEYS {
            s.push_str(&format!("# {help}\n{k} = {}\n", self.str(k)));
        }
        s
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(path.display(), format!("cannot read config: {e}")))?;
        self.load_str(&path.display().to_string(), &text)
    }

    pub fn load_str(&mut self, name: &str, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File(name.to_string(), i + 1);
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err(origin, format!("expected `key = value`, got `{line}`")));
            };
            let key = known(k.trim()).ok_or_else(|| err(&origin, format!("unknown key `{}`", k.trim())))?;
            self.entries.insert(
                key,
                Entry {
                    value: v.trim().to_string(),
                    origin,
                },
            );
        }
        Ok(())
    }

    /// Command-line override; `flag` names the option for error messages.
    pub fn set(&mut self, key: &str, value: &str, flag: &str) -> Result<(), ConfigError> {
        let origin = Origin::Flag(flag.to_string());
        let key = known(key).ok_or_else(|| err(&origin, format!("unknown key `{key}`")))?;
        self.entries.insert(
            key,
            Entry {
                value: value.trim().to_string(),
                origin,
            },
        );
        Ok(())
    }

    fn entry(&self, key: &str) -> &Entry {
        &self.entries[key]
    }

    pub fn str(&self, key: &str) -> &str {
        &self.entry(key).value
    }

    fn fail(&self, key: &str, message: impl fmt::Display) -> ConfigError {
        let e = self.entry(key);
        err(&e.origin, format!("{key} = `{}`: {message}", e.value))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.str(key).parse().map_err(|_| self.fail(key, "not a number"))
    }

    pub fn positive(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(key)?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.fail(key, "must be positive"))
        }
    }

    pub fn count(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key)
    }

    pub fn positive_count(&self, key: &str) -> Result<usize, ConfigError> {
        match self.count(key)? {
            0 => Err(self.fail(key, "must be positive")),
            v => Ok(v),
        }
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.parse("seed")
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let s = self.str(key);
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| self.fail(key, format!("`{v}` is not a number"))))
            .collect()
    }

    pub fn f(&self) -> Result<RegimeSchedule, ConfigError> {
        RegimeSchedule::parse(self.str("F")).map_err(|e| self.fail("F", e))
    }

    pub fn rhos(&self) -> Result<Vec<Rho>, ConfigError> {
        self.str("rho")
            .split(',')
            .map(|v| match v.trim() {
                "1-" => Ok(Rho::OneMinus),
                "1+" => Ok(Rho::OnePlus),
                t => match t.parse::<f64>() {
                    Ok(r) if (0.0..1.0).contains(&r) => Ok(Rho::Value(r)),
                    _ => Err(self.fail("rho", format!("`{t}` is not in [0,1), `1-` or `1+`"))),
                },
            })
            .collect()
    }

    pub fn window(&self, key: &str) -> Result<(f64, f64), ConfigError> {
        match self.list(key)?.as_slice() {
            &[lo, hi] if lo > 0.0 && hi > lo => Ok((lo, hi)),
            _ => Err(self.fail(key, "expected `lo,hi` with 0 < lo < hi")),
        }
    }

    pub fn corr(&self) -> Result<CorrelationFunction, ConfigError> {
        match self.str("b.kind") {
            "indicator" => Ok(CorrelationFunction::Indicator),
            "exp_power" => {
                let c = self.positive("b.c")?;
                let alpha = self.positive("b.alpha")?;
                CorrelationFunction::exp_power(c, alpha).map_err(|e| self.fail("b.alpha", e))
            }
            "tabulated" => {
                let path = self.str("b.table_path");
                if path.is_empty() {
                    return Err(self.fail("b.table_path", "required when b.kind = tabulated"));
                }
                let text = std::fs::read_to_string(path).map_err(|e| self.fail("b.table_path", e))?;
                CorrelationFunction::from_table_csv(&text).map_err(|e| self.fail("b.table_path", e))
            }
            _ => Err(self.fail("b.kind", "expected exp_power, indicator or tabulated")),
        }
    }

    pub fn sim(&self) -> Result<SimParams, ConfigError> {
        let p = SimParams {
            dt: self.positive("dt")?,
            dt_w: self.positive("dt_w")?,
            levels: self.parse("levels")?,
            near_k: self.positive("near_k")?,
        };
        p.validate().map_err(|e| self.fail("levels", e))?;
        Ok(p)
    }

    pub fn mc(&self) -> Result<McParams, ConfigError> {
        let sim = self.sim()?;
        Ok(McParams {
            spectral: sim,
            flow_grid: sim,
            wiener_clock: SimParams {
                dt_w: self.positive("clock.dt_w")?,
                levels: self.parse("clock.levels")?,
                ..sim
            },
        })
    }

    pub fn grid(&self) -> Result<GridSpec, ConfigError> {
        let g = GridSpec {
            h0: self.positive("grid.h0")?,
            ratio: self.positive("grid.ratio")?,
            h_max: self.positive("grid.h_max")?,
            x_max: self.positive("grid.x_max")?,
            dt: self.positive("grid.dt")?,
        };
        if !(g.ratio > 1.0 && g.ratio <= 1.2) {
            return Err(self.fail("grid.ratio", "must lie in (1, 1.2]"));
        }
        if !(g.h_max >= g.h0 && g.x_max > g.h_max) {
            return Err(self.fail("grid.h_max", "need grid.h0 <= grid.h_max < grid.x_max"));
        }
        Ok(g)
    }

    pub fn out(&self) -> &Path {
        Path::new(self.str("out"))
    }

    /// Resolved `key = value` text; identical configurations hash equally
    /// regardless of where each value came from.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, e)| format!("{k} = {}\n", e.value)).collect()
    }

    pub fn hash(&self, subcommand: &str) -> String {
        let mut h = Sha256::new();
        h.update(subcommand.as_bytes());
        h.update(b"\n");
        h.update(self.canonical().as_bytes());
        format!("{:x}", h.finalize())[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.corr().unwrap();
        c.sim().unwrap();
        c.mc().unwrap();
        c.grid().unwrap();
        c.f().unwrap();
        assert_eq!(c.rhos().unwrap().len(), 5);
        assert_eq!(c.window("lambda_window").unwrap(), (1e2, 1e6));
        // show-config text round-trips to the same configuration
        let mut d = Config::default();
        d.load_str("show", &Config::default().show()).unwrap();
        assert_eq!(c.canonical(), d.canonical());
    }

    #[test]
    fn errors_name_the_line() {
        let mut c = Config::default();
        let e = c.load_str("run.cfg", "# comment\n\nn = 5\nbogus = 1\n").unwrap_err();
        assert_eq!(e.to_string(), "run.cfg:4: unknown key `bogus`");
        let mut c = Config::default();
        c.load_str("run.cfg", "n = 5\nF = 0.5,0.2\n").unwrap();
        let e = c.f().unwrap_err().to_string();
        assert!(e.starts_with("run.cfg:2: F = `0.5,0.2`"), "{e}");
        let e = Config::default().load_str("x", "just words").unwrap_err();
        assert_eq!(e.origin, "x:1");
    }

    #[test]
    fn flags_override_file() {
        let mut c = Config::default();
        c.load_str("a", "b.alpha = 0.25\n").unwrap();
        c.set("b.alpha", "0.75", "alpha").unwrap();
        assert_eq!(c.str("b.alpha"), "0.75");
        c.set("dt", "-1", "dt").unwrap();
        assert_eq!(c.sim().unwrap_err().origin, "--dt");
        assert!(c.set("nope", "1", "set").is_err());
    }

    #[test]
    fn hash_depends_on_values_only() {
        let mut a = Config::default();
        let mut b = Config::default();
        a.load_str("f", "n = 7\n").unwrap();
        b.set("n", "7", "n").unwrap();
        assert_eq!(a.hash("genfun"), b.hash("genfun"));
        assert_ne!(a.hash("genfun"), a.hash("nonempty-prob"));
        assert_ne!(a.hash("genfun"), Config::default().hash("genfun"));
    }

    #[test]
    fn rho_tokens() {
        let mut c = Config::default();
        c.set("rho", "0, 0.5, 1-, 1+", "rho").unwrap();
        assert_eq!(c.rhos().unwrap(), vec![Rho::Value(0.0), Rho::Value(0.5), Rho::OneMinus, Rho::OnePlus]);
        c.set("rho", "1", "rho").unwrap();
        assert!(c.rhos().is_err());
    }
}
