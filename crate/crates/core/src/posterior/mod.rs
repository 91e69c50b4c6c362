//! Posterior models over the option parameters.
//!
//! Two families live here: a conjugate Beta-Bernoulli baseline that pools
//! counts within (u, v) type cells, and three hierarchical models sharing
//! the additive effect decomposition
//!
//! ```text
//! eta_j = gamma_u[u_j] + gamma_v[v_j] + gamma_uv[u_j, v_j]
//! ```
//!
//! with `theta_j = eta_j` for continuous outcomes and
//! `theta_j = 1 / (1 + exp(-eta_j))` for binary and bounded-count outcomes.
//! The hierarchical models are sampled by Gibbs (continuous) or
//! Metropolis-within-Gibbs (logit link); see [`hier`].
//!
//! Continuous-model theta draws can leave [0,1]. Raw values are kept for
//! inference and interval reporting; clipping happens only when a draw is
//! materialized as a [`ThetaVector`] for the solver.

pub mod beta_bernoulli;
pub mod hier;

use std::collections::BTreeMap;

use crate::domain::{ModelFamily, ThetaVector};
use crate::error::{Error, Result};

pub use beta_bernoulli::BetaBernoulliState;
pub use hier::{
    mcmc_sample_beta_binomial, mcmc_sample_gaussian, mcmc_sample_logit, HierarchicalParams,
    HierarchicalPriors,
};

/// Prior on a location parameter (the interaction mean mu).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPrior {
    Fixed(f64),
    Normal { mean: f64, sd: f64 },
}

/// Prior on a variance parameter.
///
/// `Fixed(0.0)` pins the corresponding effect block at its prior mean, which
/// is how collapsed sub-models (for example "no row or column effects") are
/// expressed in tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VariancePrior {
    Fixed(f64),
    /// Inverse-gamma on the variance; conjugate in the continuous model.
    InvGamma { shape: f64, scale: f64 },
    /// Half-normal on the standard deviation, updated by a log-scale
    /// random-walk step.
    HalfNormalSd { scale: f64 },
}

/// Prior on the Beta-Binomial dispersion parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DispersionPrior {
    Fixed(f64),
    LogNormal { mu: f64, sigma: f64 },
}

/// A set of posterior draws of theta, stored unclipped.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    draws: Vec<Vec<f64>>,
    model: ModelFamily,
    pub chain_diagnostics: BTreeMap<String, f64>,
}

impl PosteriorDraws {
    pub fn new(draws: Vec<Vec<f64>>, model: ModelFamily) -> Result<Self> {
        let d = match draws.first() {
            Some(first) => first.len(),
            None => return Err(Error::InvalidArgument("no posterior draws".into())),
        };
        for draw in &draws {
            if draw.len() != d {
                return Err(Error::DimensionMismatch("ragged posterior draws".into()));
            }
            if draw.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite posterior draw".into()));
            }
        }
        Ok(Self { draws, model, chain_diagnostics: BTreeMap::new() })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn d(&self) -> usize {
        self.draws[0].len()
    }

    pub fn model(&self) -> ModelFamily {
        self.model
    }

    /// The raw draw, which for the continuous model may leave [0,1].
    pub fn raw(&self, i: usize) -> &[f64] {
        &self.draws[i]
    }

    /// Draw `i` clamped into parameter space for the solver.
    pub fn theta_vector(&self, i: usize) -> ThetaVector {
        ThetaVector::from_unclipped(self.draws[i].clone())
    }

    /// The chain of draws for a single option, in draw order.
    pub fn option_chain(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|draw| draw[j]).collect()
    }

    pub fn iter_raw(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.iter().map(Vec::as_slice)
    }
}

/// Equal-tailed interval from the empirical quantiles of option `j`'s chain.
///
/// Quantiles interpolate linearly between order statistics, so ten draws
/// 0.1, 0.2, ..., 1.0 at level 0.8 give roughly (0.19, 0.91).
pub fn credible_interval(
    draws: &PosteriorDraws,
    option: usize,
    level: f64,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} outside (0,1)")));
    }
    if option >= draws.d() {
        return Err(Error::InvalidArgument(format!("option {option} out of range")));
    }
    if draws.n_draws() < 2 {
        return Err(Error::InvalidArgument(
            "credible interval needs at least two draws".into(),
        ));
    }
    let mut chain = draws.option_chain(option);
    chain.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let alpha = 1.0 - level;
    Ok((quantile_sorted(&chain, alpha / 2.0), quantile_sorted(&chain, 1.0 - alpha / 2.0)))
}

/// Linear-interpolation quantile of an ascending-sorted sample.
pub(crate) fn quantile_sorted(xs: &[f64], p: f64) -> f64 {
    debug_assert!(!xs.is_empty() && (0.0..=1.0).contains(&p));
    let h = (xs.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Effective sample size of a (possibly autocorrelated) chain, by Geyer's
/// initial positive sequence of paired autocovariances.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 2 {
        return n as f64;
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let gamma = |lag: usize| -> f64 {
        (0..n - lag).map(|t| (chain[t] - mean) * (chain[t + lag] - mean)).sum::<f64>() / n as f64
    };
    let var = gamma(0);
    if var <= 0.0 {
        return n as f64;
    }
    let mut acc = -var;
    let mut lag = 0;
    while lag + 1 < n && lag < 1024 {
        let pair = gamma(lag) + gamma(lag + 1);
        if pair <= 0.0 {
            break;
        }
        acc += 2.0 * pair;
        lag += 2;
    }
    (n as f64 * var / acc).clamp(1.0, n as f64)
}

/// Monte Carlo standard error of the chain mean: sd / sqrt(ESS).
pub fn mcse_mean(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let var = chain.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (var / effective_sample_size(chain)).sqrt()
}
