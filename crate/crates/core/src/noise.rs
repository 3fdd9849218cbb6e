//! Infinitely divisible two-sided geometric noise.
//!
//! A two-sided geometric variable with parameter `α` is the difference of two
//! i.i.d. geometric variables, and a geometric variable is the sum of `n`
//! i.i.d. negative binomials with shape `1/n`. Each of the `|P| − τ` honest
//! workers therefore draws `R1 − R2` with `R1, R2 ~ NB(1/(|P| − τ), α)`; the
//! sum of their shares is distributed exactly as the centralized geometric
//! mechanism. Summing all `|P|` shares only adds more noise.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Geometric, Poisson};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, NoiseError>;

/// Per-query noise configuration shared by every worker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    epsilon_portion: f64,
    num_workers: usize,
    collusion_tau: usize,
}

impl NoiseParams {
    pub fn new(epsilon_portion: f64, num_workers: usize, collusion_tau: usize) -> Result<Self> {
        if !(epsilon_portion > 0.0) || !epsilon_portion.is_finite() {
            return Err(NoiseError::InvalidParameter(format!(
                "epsilon portion must be positive and finite, got {epsilon_portion}"
            )));
        }
        if num_workers == 0 || collusion_tau >= num_workers {
            return Err(NoiseError::InvalidParameter(format!(
                "need tau < |P|, got tau = {collusion_tau}, |P| = {num_workers}"
            )));
        }
        Ok(Self { epsilon_portion, num_workers, collusion_tau })
    }

    pub fn epsilon_portion(&self) -> f64 {
        self.epsilon_portion
    }

    pub fn num_workers(&self) -> usize {
        self.num_workers
    }

    pub fn collusion_tau(&self) -> usize {
        self.collusion_tau
    }

    /// `α = e^(−ε)`; sensitivity is 1 for every count query.
    pub fn alpha(&self) -> f64 {
        (-self.epsilon_portion).exp()
    }

    /// Negative binomial shape of one share, `1 / (|P| − τ)`.
    pub fn share_exponent(&self) -> f64 {
        1.0 / (self.num_workers - self.collusion_tau) as f64
    }

    /// Variance of the sum of all `|P|` shares of one query.
    pub fn total_noise_variance(&self) -> f64 {
        let a = self.alpha();
        let shape = self.num_workers as f64 * self.share_exponent();
        2.0 * shape * a / ((1.0 - a) * (1.0 - a))
    }
}

/// Draws from `g(k) = C(k − 1 + r, k) α^k (1 − α)^r` through the gamma–Poisson
/// mixture `λ ~ Γ(r, α/(1 − α))`, `k ~ Poisson(λ)`. Exact for any real `r > 0`.
pub fn sample_negative_binomial<R: Rng + ?Sized>(r: f64, alpha: f64, rng: &mut R) -> Result<u64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(NoiseError::InvalidParameter(format!("shape r must be positive, got {r}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        if alpha == 0.0 {
            // α underflowed (huge ε): the pmf is a point mass at 0
            return Ok(0);
        }
        return Err(NoiseError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let scale = alpha / (1.0 - alpha);
    let gamma = Gamma::new(r, scale).map_err(|e| NoiseError::InvalidParameter(e.to_string()))?;
    let lambda: f64 = gamma.sample(rng);
    if !(lambda > 0.0) {
        return Ok(0);
    }
    let poisson = Poisson::new(lambda).map_err(|e| NoiseError::InvalidParameter(e.to_string()))?;
    Ok(poisson.sample(rng) as u64)
}

/// One worker's noise share `R1 − R2`.
pub fn noise_share<R: Rng + ?Sized>(params: &NoiseParams, rng: &mut R) -> i64 {
    let r = params.share_exponent();
    let a = params.alpha();
    let r1 = sample_negative_binomial(r, a, rng).expect("validated parameters");
    let r2 = sample_negative_binomial(r, a, rng).expect("validated parameters");
    r1 as i64 - r2 as i64
}

/// Sum of `count` independent shares, drawn in one step using the additivity
/// of the negative binomial in its shape parameter. Distributionally identical
/// to summing `count` calls to [`noise_share`].
pub fn aggregate_noise<R: Rng + ?Sized>(params: &NoiseParams, count: usize, rng: &mut R) -> i64 {
    if count == 0 {
        return 0;
    }
    let r = params.share_exponent() * count as f64;
    let a = params.alpha();
    let r1 = sample_negative_binomial(r, a, rng).expect("validated parameters");
    let r2 = sample_negative_binomial(r, a, rng).expect("validated parameters");
    r1 as i64 - r2 as i64
}

/// Centralized geometric-mechanism noise for a count query, used as an oracle.
pub fn two_sided_geometric<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> Result<i64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(NoiseError::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let alpha = (-epsilon).exp();
    if alpha == 0.0 {
        return Ok(0);
    }
    let geo = Geometric::new(1.0 - alpha).map_err(|e| NoiseError::InvalidParameter(e.to_string()))?;
    Ok(geo.sample(rng) as i64 - geo.sample(rng) as i64)
}
