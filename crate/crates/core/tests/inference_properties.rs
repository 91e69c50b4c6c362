//! Statistical behavior of the replay-based randomization test: size under
//! a true null, approximate rank uniformity, validity bounds, and power
//! against a strong effect.

mod common;

use combi_bandit::domain::{History, HistoryRecord, ThetaVector, TypeStructure};
use combi_bandit::engine::{run_episode, Environment, ModelSpec};
use combi_bandit::inference::{
    group_mean_diff, randomization_test, NullSpec, ReplayDesign,
};
use combi_bandit::rng::rng_from_seed;
use combi_bandit::solvers::FeasibleSet;
use common::ks_uniform;

fn design_d4() -> ReplayDesign {
    ReplayDesign {
        spec: ModelSpec::beta_bernoulli(),
        structure: TypeStructure::independent(4),
        set: FeasibleSet::TopM { d: 4, m: 2 },
    }
}

fn simulate_history(env: &Environment, design: &ReplayDesign, horizon: usize, seed: u64) -> History {
    let mut rng = rng_from_seed(seed);
    let trajectory =
        run_episode(env, &design.spec, &design.structure, &design.set, horizon, &mut rng)
            .unwrap();
    let mut history = History::new();
    for p in trajectory.periods {
        history
            .push(HistoryRecord { period: p.period, action: p.action, outcomes: p.outcomes })
            .unwrap();
    }
    history
}

#[test]
fn size_is_near_nominal_under_a_true_global_null() {
    let design = design_d4();
    let env =
        Environment::bernoulli(ThetaVector::new(vec![0.45; 4]).unwrap()).unwrap();
    let stat = group_mean_diff(&[0, 1], &[2, 3]);
    let two_sided = move |h: &History| stat(h).abs();
    let n_sims = 100;
    let mut rejections = 0;
    for sim in 0..n_sims {
        let history = simulate_history(&env, &design, 15, 5000 + sim);
        let mut rng = rng_from_seed(6000 + sim);
        let result = randomization_test(
            &design,
            &history,
            NullSpec::GlobalNull,
            &two_sided,
            99,
            &mut rng,
        )
        .unwrap();
        if result.rejects(0.05) {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / n_sims as f64;
    assert!(
        (0.0..=0.12).contains(&rate),
        "rejection rate {rate} far from the nominal 0.05"
    );
}

#[test]
fn p_values_are_roughly_uniform_under_the_null() {
    let design = design_d4();
    let env =
        Environment::bernoulli(ThetaVector::new(vec![0.5; 4]).unwrap()).unwrap();
    let stat = group_mean_diff(&[0, 1], &[2, 3]);
    let n_sims = 150;
    let mut p_values = Vec::with_capacity(n_sims as usize);
    for sim in 0..n_sims {
        let history = simulate_history(&env, &design, 12, 7000 + sim);
        let mut rng = rng_from_seed(8000 + sim);
        let result =
            randomization_test(&design, &history, NullSpec::GlobalNull, &stat, 59, &mut rng)
                .unwrap();
        p_values.push(result.p_value);
    }
    let (d, p) = ks_uniform(&p_values);
    assert!(p > 0.01, "p-value sample departs from uniform: KS {d}, p {p}");
}

#[test]
fn strong_effects_are_detected() {
    // Two options per period keep the imputation pools informative; a
    // single-selection design would copy one outcome per period whatever
    // the replay chooses, leaving little to distinguish.
    let design = design_d4();
    let env = Environment::bernoulli(
        ThetaVector::new(vec![0.9, 0.9, 0.1, 0.1]).unwrap(),
    )
    .unwrap();
    let history = simulate_history(&env, &design, 40, 42);
    // A replay that never tries the weak group must not tie the observed
    // split, so an unobserved group counts as the neutral 0.5 here.
    let stat = |h: &History| {
        let mean_over = |group: [usize; 2]| {
            let obs: Vec<f64> = h
                .records()
                .iter()
                .flat_map(|r| group.iter().filter_map(|j| r.outcomes.observed(*j)))
                .collect();
            if obs.is_empty() {
                0.5
            } else {
                obs.iter().sum::<f64>() / obs.len() as f64
            }
        };
        mean_over([0, 1]) - mean_over([2, 3])
    };
    let mut rng = rng_from_seed(43);
    let result =
        randomization_test(&design, &history, NullSpec::GlobalNull, &stat, 199, &mut rng)
            .unwrap();
    assert!(
        result.p_value <= 0.05,
        "a wide mean gap should be detected, got p {}",
        result.p_value
    );
}

#[test]
fn p_values_respect_their_attainable_range() {
    let design = design_d4();
    let env =
        Environment::bernoulli(ThetaVector::new(vec![0.3, 0.6, 0.5, 0.4]).unwrap()).unwrap();
    let stat = group_mean_diff(&[0, 2], &[1, 3]);
    for (null, seed) in [
        (NullSpec::GlobalNull, 71),
        (NullSpec::RowNull, 72),
        (NullSpec::ColumnNull, 73),
    ] {
        let history = simulate_history(&env, &design, 10, seed);
        let mut rng = rng_from_seed(seed + 100);
        let result =
            randomization_test(&design, &history, null, &stat, 49, &mut rng).unwrap();
        assert!(result.p_value >= 1.0 / 50.0 && result.p_value <= 1.0, "{null:?}");
        assert_eq!(result.statistic_resamples.len(), 49);
    }
}
