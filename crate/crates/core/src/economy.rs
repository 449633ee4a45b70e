//! Random economies: Gaussian returns with an exact risk-premium shift and
//! bimodal commodity prices.

use crate::error::{Error, Result};
use crate::utility::Crra;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Name of the random generator, recorded in every serialized economy.
pub const GENERATOR: &str = "ChaCha20 (rand_chacha 0.9, seed_from_u64 + set_stream) / StandardNormal ziggurat (rand_distr 0.5)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Financial complexity `n = N / Ω`.
    pub n_ratio: f64,
    /// Risk premium; every asset has `E_π[r] = −ε/Ω`.
    pub epsilon: f64,
    pub omega_count: usize,
    pub crra_exponent: f64,
    /// Prices are `1 ± price_spread` with equal probability.
    pub price_spread: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_ratio: 0.5,
            epsilon: 0.05,
            omega_count: 400,
            crra_exponent: 0.5,
            price_spread: 0.2,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn asset_count(&self) -> usize {
        (self.n_ratio * self.omega_count as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_count < 2 {
            return Err(Error::Config(format!(
                "omega_count must be at least 2, got {}",
                self.omega_count
            )));
        }
        if !(self.n_ratio > 0.0 && self.n_ratio.is_finite()) {
            return Err(Error::Config(format!("n_ratio must be positive, got {}", self.n_ratio)));
        }
        if self.asset_count() < 1 {
            return Err(Error::Config(format!(
                "round(n_ratio * omega_count) must be at least 1 (n_ratio {}, omega_count {})",
                self.n_ratio, self.omega_count
            )));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::Config("epsilon must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.price_spread) {
            return Err(Error::Config(format!(
                "price_spread must lie in [0,1), got {}",
                self.price_spread
            )));
        }
        Crra::new(self.crra_exponent)?;
        Ok(())
    }

    pub fn utility(&self) -> Result<Crra> {
        Crra::new(self.crra_exponent)
    }
}

/// One sampled realization. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Economy {
    /// `N × Ω`, entry `(i, ω)` is `r_i^ω`.
    pub returns: DMatrix<f64>,
    pub prices: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub epsilon: f64,
    pub utility: Crra,
    pub price_spread: f64,
    pub seed: u64,
    pub stream: u64,
}

impl Economy {
    /// Build an economy from explicit data with uniform state probabilities.
    pub fn from_parts(returns: DMatrix<f64>, prices: Vec<f64>, epsilon: f64, utility: Crra) -> Result<Self> {
        let omega = returns.ncols();
        if omega < 2 || returns.nrows() < 1 {
            return Err(Error::Config(format!(
                "need at least one asset and two states, got {}x{}",
                returns.nrows(),
                omega
            )));
        }
        if prices.len() != omega || prices.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Config("prices must be positive, one per state".into()));
        }
        Ok(Economy {
            returns,
            prices,
            probabilities: vec![1.0 / omega as f64; omega],
            epsilon,
            utility,
            price_spread: f64::NAN,
            seed: 0,
            stream: 0,
        })
    }

    pub fn asset_count(&self) -> usize {
        self.returns.nrows()
    }

    pub fn state_count(&self) -> usize {
        self.returns.ncols()
    }

    /// Self-describing JSON document; the return matrix is stored row-major.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..self.asset_count())
            .map(|i| self.returns.row(i).iter().copied().collect())
            .collect();
        serde_json::json!({
            "schema": "complexmarket.economy/1",
            "generator": GENERATOR,
            "seed": self.seed,
            "stream": self.stream,
            "assets": self.asset_count(),
            "states": self.state_count(),
            "epsilon": self.epsilon,
            "price_spread": self.price_spread,
            "crra_exponent": self.utility.exponent(),
            "prices": self.prices,
            "probabilities": self.probabilities,
            "returns": rows,
        })
    }
}

/// Sample with the configured seed on stream 0.
pub fn sample_economy(config: &ModelConfig) -> Result<Economy> {
    sample_economy_stream(config, 0)
}

/// Sample on an independent generator stream; ensembles use one stream per sample.
pub fn sample_economy_stream(config: &ModelConfig, stream: u64) -> Result<Economy> {
    config.validate()?;
    let n = config.asset_count();
    let omega = config.omega_count;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let scale = 1.0 / (omega as f64).sqrt();
    let mut returns = DMatrix::<f64>::zeros(n, omega);
    for i in 0..n {
        for w in 0..omega {
            let g: f64 = rng.sample(StandardNormal);
            returns[(i, w)] = g * scale;
        }
    }
    let prices: Vec<f64> = (0..omega)
        .map(|_| {
            if rng.random_bool(0.5) {
                1.0 + config.price_spread
            } else {
                1.0 - config.price_spread
            }
        })
        .collect();
    let target = -config.epsilon / omega as f64;
    for i in 0..n {
        let mean = returns.row(i).sum() / omega as f64;
        let shift = target - mean;
        for w in 0..omega {
            returns[(i, w)] += shift;
        }
    }
    Ok(Economy {
        returns,
        prices,
        probabilities: vec![1.0 / omega as f64; omega],
        epsilon: config.epsilon,
        utility: config.utility()?,
        price_spread: config.price_spread,
        seed: config.seed,
        stream,
    })
}
