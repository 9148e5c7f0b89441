//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! The [`ops`] functions are plain Rust (and tested natively); the exported
//! wrappers only turn their errors into JavaScript exceptions.

use wasm_bindgen::prelude::*;

pub mod ops {
    use harris::dimension::{exponent_via_resolvent, predicted_dimension};
    use harris::sde::SimParams;
    use harris::spectra::SpectralSampler;
    use harris::{CorrelationFunction, ScaleSpeedChart, SeedStream};

    pub type Result<T> = std::result::Result<T, String>;

    fn text(e: harris::Error) -> String {
        e.to_string()
    }

    /// `α = 0` stands for the Arratia flow.
    fn corr(alpha: f64) -> Result<CorrelationFunction> {
        if alpha == 0.0 {
            Ok(CorrelationFunction::Indicator)
        } else {
            CorrelationFunction::exp_power(1.0, alpha).map_err(text)
        }
    }

    pub fn classify(c: f64, alpha: f64) -> Result<String> {
        let f = CorrelationFunction::exp_power(c, alpha).map_err(text)?;
        Ok(f.classify().map_err(text)?.as_str().to_string())
    }

    pub fn predicted(alpha: f64) -> f64 {
        predicted_dimension(alpha).unwrap_or(f64::NAN)
    }

    /// Interleaved `[λ₀, Ψ₀, λ₁, Ψ₁, …]` followed by the fitted exponent.
    pub fn resolvent_curve(alpha: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
        let chart = ScaleSpeedChart::build(&corr(alpha)?, 64.0, 2048).map_err(text)?;
        let c = exponent_via_resolvent(&chart, (lo, hi), points).map_err(text)?;
        let mut out: Vec<f64> = c.lambdas.iter().zip(&c.psi).flat_map(|(&l, &p)| [l, p]).collect();
        out.push(c.exponent);
        Ok(out)
    }

    /// `[τ, zero times…]` of one spectral-set sample on cells of `2^-level`.
    pub fn spectral_set(alpha: f64, seed: u64, level: u32) -> Result<Vec<f64>> {
        if !(8..=20).contains(&level) {
            return Err("level must lie in 8..=20".into());
        }
        let params = SimParams {
            dt: 0.5f64.powi(level as i32),
            dt_w: 0.5f64.powi(level as i32 + 2),
            levels: 10,
            near_k: 3.0,
        };
        let sampler = SpectralSampler::new(&corr(alpha)?, params).map_err(text)?;
        let s = sampler.sample(&mut SeedStream::new(seed).rng(0)).map_err(text)?;
        Ok(std::iter::once(s.tau).chain(s.zero_times()).collect())
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// `"classical"` or `"nonclassical"` for `b(x) = exp(-c|x|^α)`.
#[wasm_bindgen]
pub fn classify(c: f64, alpha: f64) -> Result<String, JsError> {
    ops::classify(c, alpha).map_err(js)
}

/// `(1 − α)/(2 − α)`, NaN outside `[0, 1)`.
#[wasm_bindgen]
pub fn predicted(alpha: f64) -> f64 {
    ops::predicted(alpha)
}

#[wasm_bindgen]
pub fn resolvent_curve(alpha: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    ops::resolvent_curve(alpha, lo, hi, points).map_err(js)
}

#[wasm_bindgen]
pub fn spectral_set(alpha: f64, seed: u64, level: u32) -> Result<Vec<f64>, JsError> {
    ops::spectral_set(alpha, seed, level).map_err(js)
}
