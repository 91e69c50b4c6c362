//! Running full episodes and replicated experiments.

use rand::Rng;
use rayon::prelude::*;

use crate::domain::{
    reward, ActionVector, History, HistoryRecord, OutcomeVector, ThetaVector, TypeStructure,
};
use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed, RunRng};
use crate::solvers::FeasibleSet;

use super::{oracle_action, Environment, ModelSpec, PosteriorModel};

/// One period of an episode, as recorded for reporting.
#[derive(Debug, Clone)]
pub struct PeriodRecord {
    pub period: usize,
    pub action: ActionVector,
    pub outcomes: OutcomeVector,
    pub theta_hat: ThetaVector,
    /// `reward(A*, theta0) - reward(A_t, theta0)`, clamped at zero against
    /// float noise; nonnegative because the solver is exact.
    pub expected_regret: f64,
    pub realized_reward: f64,
}

/// A full episode against a fixed environment.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub oracle_action: ActionVector,
    pub oracle_value: f64,
    pub periods: Vec<PeriodRecord>,
}

impl Trajectory {
    /// Running sums of expected regret, one entry per period.
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut total = 0.0;
        self.periods
            .iter()
            .map(|p| {
                total += p.expected_regret;
                total
            })
            .collect()
    }

    pub fn total_regret(&self) -> f64 {
        self.periods.iter().map(|p| p.expected_regret).sum()
    }
}

/// Runs `horizon` periods of posterior sampling against the environment.
///
/// The policy and the environment consume independent streams derived from
/// `rng`, so a rerun with the same seed reproduces the trajectory exactly.
pub fn run_episode(
    env: &Environment,
    spec: &ModelSpec,
    structure: &TypeStructure,
    set: &FeasibleSet,
    horizon: usize,
    rng: &mut RunRng,
) -> Result<Trajectory> {
    let policy_seed = rng.random::<u64>();
    let mut env_rng = rng_from_seed(rng.random::<u64>());
    let outcomes: Vec<Vec<f64>> =
        (0..horizon).map(|_| env.draw_outcomes(&mut env_rng)).collect();
    run_episode_from_outcomes(
        &outcomes,
        env.theta0(),
        spec,
        structure,
        set,
        &mut rng_from_seed(policy_seed),
    )
}

/// Runs the policy against a pre-drawn outcome table; row t is the full
/// potential-outcome vector of period t+1, of which only the chosen entries
/// are revealed.
///
/// Separating the outcome table from the policy stream makes adaptivity
/// directly checkable: permuting rows after period t cannot change the first
/// t actions. It is also how counterfactual reruns on imputed outcomes are
/// executed.
pub fn run_episode_from_outcomes(
    outcomes: &[Vec<f64>],
    theta0: &ThetaVector,
    spec: &ModelSpec,
    structure: &TypeStructure,
    set: &FeasibleSet,
    policy_rng: &mut RunRng,
) -> Result<Trajectory> {
    set.validate()?;
    let d = set.d();
    if let Some(row) = outcomes.iter().find(|row| row.len() != d) {
        return Err(crate::error::Error::DimensionMismatch(format!(
            "outcome row has {} entries, the option space has {d}",
            row.len()
        )));
    }
    let (oracle, oracle_value) = oracle_action(theta0, set)?;
    let mut model = PosteriorModel::new(spec.clone(), structure.clone())?;
    let mut history = History::new();
    let mut periods = Vec::with_capacity(outcomes.len());
    for (t, full) in outcomes.iter().enumerate() {
        let period = t + 1;
        let theta_hat = model.draw(&history, policy_rng)?;
        let action = set.solve(theta_hat.as_slice())?;
        let observed = OutcomeVector::new(
            (0..d).map(|j| action.get(j).then(|| full[j])).collect(),
        )?;
        let realized_reward = observed.iter_observed().map(|(_, y)| y).sum();
        let gap = oracle_value - reward(&action, theta0)?;
        debug_assert!(gap >= -1e-9, "negative regret {gap} from an exact solver");
        let expected_regret = gap.max(0.0);
        history.push(HistoryRecord {
            period,
            action: action.clone(),
            outcomes: observed.clone(),
        })?;
        periods.push(PeriodRecord {
            period,
            action,
            outcomes: observed,
            theta_hat,
            expected_regret,
            realized_reward,
        });
    }
    Ok(Trajectory { oracle_action: oracle, oracle_value, periods })
}

/// Runs independent replications in parallel, one derived seed per
/// replication; results come back in replication order.
pub fn run_replications(
    env: &Environment,
    spec: &ModelSpec,
    structure: &TypeStructure,
    set: &FeasibleSet,
    horizon: usize,
    n_reps: usize,
    base_seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_from_seed(derive_seed(base_seed, rep as u64));
            run_episode(env, spec, structure, set, horizon, &mut rng)
        })
        .collect()
}

/// Mean cumulative expected regret across trajectories, per period.
pub fn mean_cumulative_regret(trajectories: &[Trajectory]) -> Vec<f64> {
    let horizon = trajectories.iter().map(|t| t.periods.len()).max().unwrap_or(0);
    let mut acc = vec![0.0; horizon];
    for trajectory in trajectories {
        for (t, value) in trajectory.cumulative_regret().into_iter().enumerate() {
            acc[t] += value;
        }
    }
    for value in &mut acc {
        *value /= trajectories.len() as f64;
    }
    acc
}
