//! The acceptance gate: every guarantee this crate ships, checked
//! end-to-end at its stated tolerance. Each test prints one PASS or FAIL
//! line with the measured numbers (run with `--nocapture` to see them all).

mod common;

use combi_bandit::domain::{
    reward, History, HistoryRecord, ThetaVector, TypeStructure,
};
use combi_bandit::engine::{
    generate_synthetic_scenario, mean_cumulative_regret, run_episode, run_replications,
    run_resettlement, Environment, ModelSpec,
};
use combi_bandit::inference::{group_mean_diff, randomization_test, NullSpec, ReplayDesign};
use combi_bandit::metrics::lemmas::{packaged_instances, verify_lemma_properties};
use combi_bandit::metrics::{per_capita_bound, theorem1_bound};
use combi_bandit::posterior::{
    mcmc_sample_beta_binomial, mcmc_sample_gaussian, mcmc_sample_logit, mcse_mean,
    BetaBernoulliState, DispersionPrior, HierarchicalPriors, ScalarPrior, VariancePrior,
};
use combi_bandit::rng::{derive_seed, rng_from_seed};
use combi_bandit::solvers::{solve_multiple_knapsack, FeasibleSet};
use common::{
    bernoulli_loglik, enumeration_argmax, grid_mean_sigmoid_eta, knapsack_oracle, ks_two_sample,
    mean, prob_beta_greater,
};
use rand::Rng;

fn report(name: &str, ok: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

#[test]
fn mean_regret_stays_under_the_cumulative_bound() {
    let horizon = 500;
    let mut worst_margin = f64::INFINITY;
    let mut worst_at = String::new();
    for &(d, m) in &[(4usize, 2usize), (9, 3), (16, 4)] {
        for (variant, set) in
            [FeasibleSet::TopM { d, m }, FeasibleSet::Assignment { k: m }].into_iter().enumerate()
        {
            let tag = (d * 10 + variant) as u64;
            let mut trajectories = Vec::with_capacity(200);
            for instance in 0..20u64 {
                let mut env_rng = rng_from_seed(derive_seed(9100 + tag, instance));
                let theta0 =
                    ThetaVector::new((0..d).map(|_| env_rng.random()).collect()).unwrap();
                let env = Environment::bernoulli(theta0).unwrap();
                trajectories.extend(
                    run_replications(
                        &env,
                        &ModelSpec::beta_bernoulli(),
                        &TypeStructure::independent(d),
                        &set,
                        horizon,
                        10,
                        derive_seed(9200 + tag, instance),
                    )
                    .unwrap(),
                );
            }
            assert_eq!(trajectories.len(), 200);
            for (t, value) in mean_cumulative_regret(&trajectories).iter().enumerate() {
                let margin = theorem1_bound(d, m, t + 1).unwrap() - value;
                if margin < worst_margin {
                    worst_margin = margin;
                    worst_at = format!("d={d} m={m} variant={variant} t={}", t + 1);
                }
            }
        }
    }
    report(
        "cumulative regret bound",
        worst_margin >= 0.0,
        &format!("smallest margin {worst_margin:.3} at {worst_at}"),
    );
}

#[test]
fn single_draw_choice_frequency_matches_the_matching_probability() {
    let structure = TypeStructure::independent(2);
    let state = BetaBernoulliState::with_prior(vec![2.0, 1.0], vec![1.0, 1.0]).unwrap();
    let set = FeasibleSet::TopM { d: 2, m: 1 };
    let mut rng = rng_from_seed(9301);
    let n = 50_000;
    let mut first = 0usize;
    for _ in 0..n {
        let theta = state.sample_theta(&structure, &mut rng).unwrap();
        first += usize::from(set.solve(theta.as_slice()).unwrap().get(0));
    }
    let frequency = first as f64 / n as f64;
    let quadrature = prob_beta_greater(2.0, 1.0, 1.0, 1.0);
    assert!((quadrature - 2.0 / 3.0).abs() < 1e-6, "quadrature oracle {quadrature}");
    report(
        "probability matching",
        (frequency - quadrature).abs() <= 0.01,
        &format!("empirical {frequency:.4} vs quadrature {quadrature:.4} over {n} draws"),
    );
}

#[test]
fn specialized_solvers_match_enumeration_on_random_batteries() {
    let mut rng = rng_from_seed(9401);
    let per_variant = 1000;
    let mut exact = 0usize;
    let mut total = 0usize;

    for _ in 0..per_variant {
        let d = rng.random_range(1..=12);
        let m = rng.random_range(1..=d);
        let theta: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let set = FeasibleSet::TopM { d, m };
        let got = reward(
            &set.solve(&theta).unwrap(),
            &ThetaVector::new(theta.clone()).unwrap(),
        )
        .unwrap();
        let (_, want) = enumeration_argmax(&set, &theta);
        exact += usize::from(got == want);
        total += 1;
    }

    for _ in 0..per_variant {
        let k = rng.random_range(1..=5);
        let theta: Vec<f64> = (0..k * k).map(|_| rng.random()).collect();
        let set = FeasibleSet::Assignment { k };
        let got = reward(
            &set.solve(&theta).unwrap(),
            &ThetaVector::new(theta.clone()).unwrap(),
        )
        .unwrap();
        let (_, want) = enumeration_argmax(&set, &theta);
        exact += usize::from(got == want);
        total += 1;
    }

    for _ in 0..per_variant {
        let n_items = rng.random_range(1..=8);
        let n_nodes = rng.random_range(1..=3);
        let mut capacities: Vec<usize> = (0..n_nodes).map(|_| rng.random_range(1..=4)).collect();
        while capacities.iter().sum::<usize>() < n_items {
            capacities[rng.random_range(0..n_nodes)] += 1;
        }
        let theta: Vec<f64> = (0..n_items * n_nodes).map(|_| rng.random()).collect();
        let set = FeasibleSet::Capacitated { n_items, capacities };
        let got = reward(
            &set.solve(&theta).unwrap(),
            &ThetaVector::new(theta.clone()).unwrap(),
        )
        .unwrap();
        let (_, want) = enumeration_argmax(&set, &theta);
        exact += usize::from(got == want);
        total += 1;
    }

    for _ in 0..per_variant {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=3);
        let weights: Vec<u64> = (0..n).map(|_| rng.random_range(1..=5)).collect();
        let capacities: Vec<u64> = (0..k).map(|_| rng.random_range(1..=9)).collect();
        let theta: Vec<f64> = (0..n * k).map(|_| rng.random()).collect();
        let solution = solve_multiple_knapsack(&theta, &weights, &capacities).unwrap();
        let (want, want_complete) = knapsack_oracle(&theta, &weights, &capacities);
        exact +=
            usize::from(solution.value == want && solution.complete == want_complete);
        total += 1;
    }

    report(
        "solver exactness",
        exact == total,
        &format!("{exact}/{total} random instances matched enumeration exactly"),
    );
}

#[test]
fn packaged_instances_satisfy_every_inequality_to_depth_three() {
    let mut all = true;
    let mut parts = Vec::new();
    for instance in packaged_instances() {
        let result = verify_lemma_properties(&instance, 3).unwrap();
        all &= result.all_hold();
        parts.push(format!(
            "{} ({} nodes, hold={})",
            result.label,
            result.nodes_checked,
            result.all_hold()
        ));
    }
    report("inequality walk to depth 3", all, &parts.join(", "));
}

#[test]
fn mcmc_chains_agree_with_independent_oracles() {
    // Continuous model, pinned scales: each cell is an exact normal-normal
    // update, so the chain mean must sit on the closed form.
    let structure = TypeStructure::grid(1, 1);
    let (m0, v0, s2) = (0.5, 0.5, 0.2);
    let ys = [0.3, 0.8, 0.6];
    let mut history = History::new();
    for (t, y) in ys.iter().enumerate() {
        history
            .push(HistoryRecord {
                period: t + 1,
                action: combi_bandit::domain::ActionVector::from_indices(1, &[0]).unwrap(),
                outcomes: combi_bandit::domain::OutcomeVector::new(vec![Some(*y)]).unwrap(),
            })
            .unwrap();
    }
    let priors = HierarchicalPriors {
        mu: ScalarPrior::Fixed(m0),
        tau_u_sq: VariancePrior::Fixed(0.0),
        tau_v_sq: VariancePrior::Fixed(0.0),
        tau_uv_sq: VariancePrior::Fixed(v0),
        sigma_sq: VariancePrior::Fixed(s2),
        ..HierarchicalPriors::gaussian()
    };
    let mut rng = rng_from_seed(9501);
    let draws = mcmc_sample_gaussian(&history, &structure, &priors, 6000, &mut rng).unwrap();
    let chain = draws.option_chain(0);
    let n = ys.len() as f64;
    let ybar = ys.iter().sum::<f64>() / n;
    let post_var = 1.0 / (1.0 / v0 + n / s2);
    let closed_form = post_var * (m0 / v0 + n * ybar / s2);
    let err = mcse_mean(&chain);
    let gaussian_ok = (mean(&chain) - closed_form).abs() <= 3.0 * err;
    let gaussian_detail = format!(
        "gaussian mean {:.4} vs closed form {closed_form:.4} (mcse {err:.5})",
        mean(&chain)
    );

    // Binary model, one cell: grid quadrature over eta is the oracle.
    let mut values = vec![1.0; 10];
    values.extend(vec![0.0; 6]);
    let mut history = History::new();
    for (t, y) in values.iter().enumerate() {
        history
            .push(HistoryRecord {
                period: t + 1,
                action: combi_bandit::domain::ActionVector::from_indices(1, &[0]).unwrap(),
                outcomes: combi_bandit::domain::OutcomeVector::new(vec![Some(*y)]).unwrap(),
            })
            .unwrap();
    }
    let priors = HierarchicalPriors {
        mu: ScalarPrior::Fixed(0.3),
        tau_u_sq: VariancePrior::Fixed(0.0),
        tau_v_sq: VariancePrior::Fixed(0.0),
        tau_uv_sq: VariancePrior::Fixed(1.0),
        thin: 2,
        ..HierarchicalPriors::logit()
    };
    let mut rng = rng_from_seed(9502);
    let draws = mcmc_sample_logit(&history, &structure, &priors, 8000, &mut rng).unwrap();
    let chain = draws.option_chain(0);
    let oracle = grid_mean_sigmoid_eta(0.3, 1.0, bernoulli_loglik(10, 6), 10_000);
    let err = mcse_mean(&chain);
    let logit_ok = err < 0.01 && (mean(&chain) - oracle).abs() <= 3.0 * err;
    let logit_detail = format!(
        "logit mean {:.4} vs quadrature {oracle:.4} (mcse {err:.5})",
        mean(&chain)
    );

    // With one trial per observation the count model is the binary model;
    // the two chains must agree in distribution.
    let shared = HierarchicalPriors {
        mu: ScalarPrior::Normal { mean: 0.0, sd: 1.5 },
        tau_u_sq: VariancePrior::Fixed(0.0),
        tau_v_sq: VariancePrior::Fixed(0.0),
        tau_uv_sq: VariancePrior::HalfNormalSd { scale: 1.0 },
        thin: 20,
        ..HierarchicalPriors::logit()
    };
    let counts = HierarchicalPriors {
        dispersion: DispersionPrior::LogNormal { mu: 0.0, sigma: 1.0 },
        y_bar: 1,
        ..shared
    };
    let mut values = vec![1.0; 9];
    values.extend(vec![0.0; 6]);
    let mut history = History::new();
    for (t, y) in values.iter().enumerate() {
        history
            .push(HistoryRecord {
                period: t + 1,
                action: combi_bandit::domain::ActionVector::from_indices(1, &[0]).unwrap(),
                outcomes: combi_bandit::domain::OutcomeVector::new(vec![Some(*y)]).unwrap(),
            })
            .unwrap();
    }
    let mut rng_a = rng_from_seed(9503);
    let mut rng_b = rng_from_seed(9504);
    let a = mcmc_sample_logit(&history, &structure, &shared, 5000, &mut rng_a)
        .unwrap()
        .option_chain(0);
    let b = mcmc_sample_beta_binomial(&history, &structure, &counts, 5000, &mut rng_b)
        .unwrap()
        .option_chain(0);
    let (ks, p) = ks_two_sample(&a, &b);
    let ks_ok = p > 0.01;
    let ks_detail = format!("unit-support count vs binary KS {ks:.4} (p {p:.3})");

    report(
        "mcmc oracles",
        gaussian_ok && logit_ok && ks_ok,
        &format!("{gaussian_detail}; {logit_detail}; {ks_detail}"),
    );
}

#[test]
fn replay_test_rejection_rate_stays_near_nominal() {
    let design = ReplayDesign {
        spec: ModelSpec::beta_bernoulli(),
        structure: TypeStructure::independent(4),
        set: FeasibleSet::TopM { d: 4, m: 2 },
    };
    // Identical means make the null exactly true: outcomes are i.i.d.
    // whatever the policy picks.
    let env = Environment::bernoulli(ThetaVector::new(vec![0.5; 4]).unwrap()).unwrap();
    let diff = group_mean_diff(&[0, 1], &[2, 3]);
    let statistic = move |h: &History| diff(h).abs();
    let n_sims = 200;
    let mut rejections = 0usize;
    for sim in 0..n_sims as u64 {
        let mut rng = rng_from_seed(derive_seed(9601, sim));
        let trajectory =
            run_episode(&env, &design.spec, &design.structure, &design.set, 20, &mut rng)
                .unwrap();
        let mut history = History::new();
        for p in trajectory.periods {
            history
                .push(HistoryRecord { period: p.period, action: p.action, outcomes: p.outcomes })
                .unwrap();
        }
        let result =
            randomization_test(&design, &history, NullSpec::GlobalNull, &statistic, 199, &mut rng)
                .unwrap();
        rejections += usize::from(result.rejects(0.05));
    }
    let rate = rejections as f64 / n_sims as f64;
    report(
        "replay test size",
        (0.02..=0.10).contains(&rate),
        &format!("rejection rate {rate:.3} over {n_sims} null simulations at alpha 0.05"),
    );
}

#[test]
fn monthly_scenario_run_is_feasible_conserving_and_reproducible() {
    let scenario = generate_synthetic_scenario(8, 17, 24, 20.0, 20260814).unwrap();
    scenario.validate().unwrap();
    let run_once = || {
        let mut rng = rng_from_seed(424242);
        run_resettlement(&scenario, &ModelSpec::beta_bernoulli(), &mut rng).unwrap()
    };
    let first = run_once();
    let validation = first.validate(&scenario);
    let placed: usize = first.months.iter().map(|m| m.placements.len()).sum();
    let carried_at_end = first.months.last().unwrap().carried.len();
    let conserved = placed + carried_at_end == scenario.families.len();
    let identical = format!("{first:?}") == format!("{:?}", run_once());
    report(
        "monthly scenario",
        validation.is_ok() && conserved && identical,
        &format!(
            "constraint problems {:?}, {placed} placed + {carried_at_end} carried of {} families, rerun identical: {identical}",
            validation.problems,
            scenario.families.len()
        ),
    );
}

#[test]
fn bound_formulas_match_direct_evaluation() {
    let cumulative = theorem1_bound(4, 2, 100).unwrap();
    let per_capita = per_capita_bound(1, 1, 1).unwrap();
    let ok = (cumulative - 26.024).abs() <= 0.001 && (per_capita - 0.70711).abs() <= 1e-5;
    report(
        "closed forms",
        ok,
        &format!("theorem bound {cumulative:.6}, per-capita level {per_capita:.6}"),
    );
}
