//! Empirical checks of the probability-matching identity: because each
//! step draws one posterior sample and plays the exact argmax, the chance
//! of playing an action equals the posterior probability that it is the
//! best action.

mod common;

use std::collections::BTreeMap;

use combi_bandit::domain::{
    ActionVector, History, HistoryRecord, OutcomeVector, TypeStructure,
};
use combi_bandit::engine::{ModelSpec, PosteriorModel};
use combi_bandit::posterior::BetaBernoulliState;
use combi_bandit::rng::rng_from_seed;
use combi_bandit::solvers::FeasibleSet;
use common::{prob_beta_greater, tv_distance};

#[test]
fn two_option_matching_hits_the_integral_oracle() {
    let oracle = prob_beta_greater(2.0, 1.0, 1.0, 1.0);
    assert!((oracle - 2.0 / 3.0).abs() < 1e-5, "quadrature drifted: {oracle}");

    let state = BetaBernoulliState::with_prior(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
    let structure = TypeStructure::independent(2);
    let set = FeasibleSet::TopM { d: 2, m: 1 };
    let mut rng = rng_from_seed(301);
    let steps = 50_000;
    let mut first = 0usize;
    for _ in 0..steps {
        let theta = state.sample_theta(&structure, &mut rng).unwrap();
        let action = set.solve(theta.as_slice()).unwrap();
        if action.get(0) {
            first += 1;
        }
    }
    let frequency = first as f64 / steps as f64;
    assert!(
        (frequency - oracle).abs() <= 0.01,
        "chose the Beta(2,1) option {frequency} of the time, oracle {oracle}"
    );
}

#[test]
fn flat_posterior_spreads_uniformly_over_subsets() {
    let state = BetaBernoulliState::uniform(4);
    let structure = TypeStructure::independent(4);
    let set = FeasibleSet::TopM { d: 4, m: 2 };
    let mut rng = rng_from_seed(302);
    let steps = 60_000;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for _ in 0..steps {
        let theta = state.sample_theta(&structure, &mut rng).unwrap();
        let action = set.solve(theta.as_slice()).unwrap();
        *counts.entry(action.chosen()).or_default() += 1;
    }
    assert_eq!(counts.len(), 6, "every 2-subset should appear");
    for (subset, n) in counts {
        let p = n as f64 / steps as f64;
        assert!(
            (p - 1.0 / 6.0).abs() <= 0.01,
            "subset {subset:?} frequency {p}, expected 1/6"
        );
    }
}

#[test]
fn engine_draws_match_direct_posterior_argmax_in_distribution() {
    // Feed both paths the same 12-record history: the engine replays it
    // incrementally inside PosteriorModel, the oracle path folds it into a
    // fresh state, and the resulting action distributions must agree.
    let structure = TypeStructure::independent(4);
    let set = FeasibleSet::TopM { d: 4, m: 2 };
    let mut history = History::new();
    let outcomes = [
        (vec![0, 1], vec![1.0, 0.0]),
        (vec![0, 2], vec![1.0, 1.0]),
        (vec![1, 3], vec![0.0, 1.0]),
        (vec![0, 3], vec![1.0, 0.0]),
        (vec![2, 3], vec![0.0, 0.0]),
        (vec![0, 1], vec![1.0, 1.0]),
        (vec![0, 2], vec![0.0, 1.0]),
        (vec![1, 2], vec![0.0, 1.0]),
        (vec![0, 3], vec![1.0, 1.0]),
        (vec![1, 3], vec![0.0, 0.0]),
        (vec![0, 2], vec![1.0, 1.0]),
        (vec![2, 3], vec![1.0, 0.0]),
    ];
    for (t, (chosen, ys)) in outcomes.iter().enumerate() {
        let action = ActionVector::from_indices(4, chosen).unwrap();
        let mut values = vec![None; 4];
        for (j, y) in chosen.iter().zip(ys) {
            values[*j] = Some(*y);
        }
        history
            .push(HistoryRecord {
                period: t + 1,
                action,
                outcomes: OutcomeVector::new(values).unwrap(),
            })
            .unwrap();
    }

    let steps = 100_000;
    let subsets: Vec<Vec<usize>> =
        vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]];
    let index_of = |chosen: &[usize]| subsets.iter().position(|s| s == chosen).unwrap();

    let mut engine_freq = vec![0.0; subsets.len()];
    let mut model = PosteriorModel::new(ModelSpec::beta_bernoulli(), structure.clone()).unwrap();
    let mut rng = rng_from_seed(303);
    for _ in 0..steps {
        let theta = model.draw(&history, &mut rng).unwrap();
        let action = set.solve(theta.as_slice()).unwrap();
        engine_freq[index_of(&action.chosen())] += 1.0 / steps as f64;
    }

    let mut direct_freq = vec![0.0; subsets.len()];
    let state = BetaBernoulliState::from_history(4, &history).unwrap();
    let mut rng = rng_from_seed(909);
    for _ in 0..steps {
        let theta = state.sample_theta(&structure, &mut rng).unwrap();
        let action = set.solve(theta.as_slice()).unwrap();
        direct_freq[index_of(&action.chosen())] += 1.0 / steps as f64;
    }

    let tv = tv_distance(&engine_freq, &direct_freq);
    assert!(tv <= 0.02, "total variation {tv} between engine and direct draws");
}

#[test]
fn overwhelming_evidence_pins_the_action() {
    let state = BetaBernoulliState::with_prior(vec![1e9, 1.0], vec![1.0, 1e9]).unwrap();
    let structure = TypeStructure::independent(2);
    let set = FeasibleSet::TopM { d: 2, m: 1 };
    let mut rng = rng_from_seed(304);
    for _ in 0..500 {
        let theta = state.sample_theta(&structure, &mut rng).unwrap();
        let action = set.solve(theta.as_slice()).unwrap();
        assert_eq!(action.chosen(), vec![0]);
    }
}
