//! Conjugate Beta-Bernoulli posterior, the tractable baseline model.
//!
//! Each option carries Beta pseudo-counts. Sampling pools the accumulated
//! counts of all options in the same (u, v) cell and draws one Beta variate
//! per cell, so options that share a cell always receive identical values,
//! matching a prior under which their parameters are equal with
//! probability one.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::domain::{ActionVector, History, OutcomeVector, ThetaVector, TypeStructure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BetaBernoulliState {
    alpha0: Vec<f64>,
    beta0: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl BetaBernoulliState {
    /// Beta(1, 1) on every option.
    pub fn uniform(d: usize) -> Self {
        Self {
            alpha0: vec![1.0; d],
            beta0: vec![1.0; d],
            alpha: vec![1.0; d],
            beta: vec![1.0; d],
        }
    }

    pub fn with_prior(alpha0: Vec<f64>, beta0: Vec<f64>) -> Result<Self> {
        if alpha0.len() != beta0.len() {
            return Err(Error::DimensionMismatch("alpha/beta length mismatch".into()));
        }
        if alpha0.iter().chain(&beta0).any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("Beta parameters must be positive".into()));
        }
        Ok(Self { alpha0: alpha0.clone(), beta0: beta0.clone(), alpha: alpha0, beta: beta0 })
    }

    /// Replays a full history of binary feedback onto the uniform prior.
    pub fn from_history(d: usize, history: &History) -> Result<Self> {
        let mut state = Self::uniform(d);
        for record in history.records() {
            state.update(&record.action, &record.outcomes)?;
        }
        Ok(state)
    }

    pub fn d(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Adds one period of feedback: observed successes bump alpha, observed
    /// failures bump beta, unobserved options are untouched.
    pub fn update(&mut self, action: &ActionVector, outcomes: &OutcomeVector) -> Result<()> {
        if action.len() != self.d() || outcomes.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} options, record has {}",
                self.d(),
                action.len()
            )));
        }
        if !outcomes.matches_action(action) {
            return Err(Error::InvalidHistory(
                "observation pattern does not match the action".into(),
            ));
        }
        for (j, y) in outcomes.iter_observed() {
            if y != 0.0 && y != 1.0 {
                return Err(Error::BadOutcome(format!(
                    "option {j}: outcome {y} is not binary"
                )));
            }
            self.alpha[j] += y;
            self.beta[j] += 1.0 - y;
        }
        Ok(())
    }

    /// Marginal posterior mean of a single option, ignoring cell pooling.
    pub fn posterior_mean(&self, j: usize) -> f64 {
        self.alpha[j] / (self.alpha[j] + self.beta[j])
    }

    /// One joint posterior draw: a single Beta variate per (u, v) cell,
    /// broadcast to every option of the cell.
    ///
    /// The cell's Beta parameters are the prior of its lowest-indexed option
    /// plus the success/failure counts accumulated by all of its options.
    pub fn sample_theta<R: Rng + ?Sized>(
        &self,
        structure: &TypeStructure,
        rng: &mut R,
    ) -> Result<ThetaVector> {
        if structure.d() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "type structure covers {} options, state has {}",
                structure.d(),
                self.d()
            )));
        }
        let mut theta = vec![0.0; self.d()];
        for members in structure.options_by_cell() {
            let Some(&lead) = members.first() else { continue };
            let mut a = self.alpha0[lead];
            let mut b = self.beta0[lead];
            for &j in &members {
                a += self.alpha[j] - self.alpha0[j];
                b += self.beta[j] - self.beta0[j];
            }
            let draw = Beta::new(a, b)
                .map_err(|e| Error::InvalidArgument(format!("Beta({a}, {b}): {e}")))?
                .sample(rng);
            for &j in &members {
                theta[j] = draw;
            }
        }
        ThetaVector::new(theta)
    }
}
