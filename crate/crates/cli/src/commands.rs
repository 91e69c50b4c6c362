//! The five subcommands. Each reads its settings from the parsed
//! configuration, derives every random stream from the run seed, writes
//! plain-text artifacts into the output directory, and finishes with a
//! manifest recording exactly what produced them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use combi_bandit::domain::{ModelFamily, ThetaVector, TypeStructure};
use combi_bandit::engine::{
    generate_synthetic_scenario, mean_cumulative_regret, run_replications, run_resettlement,
    Environment, ModelSpec, OutcomeFamily, ResettlementScenario,
};
use combi_bandit::inference::{group_mean_diff, randomization_test, ReplayDesign};
use combi_bandit::io::{
    read_history_csv, write_bound_csv, write_capacity_csv, write_history_csv, write_kv_report,
    write_resamples_csv, write_resettlement_csv, write_trajectory_csv,
};
use combi_bandit::metrics::lemmas::{packaged_instances, verify_lemma_properties};
use combi_bandit::metrics::BoundSpec;
use combi_bandit::posterior::HierarchicalPriors;
use combi_bandit::rng::{derive_seed, rng_from_seed};
use combi_bandit::solvers::FeasibleSet;
use combi_bandit::{Error, Result};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::cases;
use crate::config::{Config, ScenarioKind};

/// Everything a subcommand needs: the configuration, where it came from,
/// and the run-level arguments.
pub struct RunContext {
    pub config: Config,
    pub config_path: Option<PathBuf>,
    pub config_text: Option<String>,
    pub seed: u64,
    pub reps: usize,
    pub out: PathBuf,
}

impl RunContext {
    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_manifest(&self, command: &str) -> Result<()> {
        let config = match &self.config_path {
            Some(path) => path.display().to_string(),
            None => "defaults".into(),
        };
        let config_sha256 = match &self.config_text {
            Some(text) => {
                let digest = Sha256::digest(text.as_bytes());
                digest.iter().map(|b| format!("{b:02x}")).collect()
            }
            None => "none".to_string(),
        };
        let mut w = self.create("manifest.txt")?;
        write_kv_report(
            &mut w,
            &[
                ("command", command.to_string()),
                ("version", env!("CARGO_PKG_VERSION").to_string()),
                ("seed", self.seed.to_string()),
                ("replications", self.reps.to_string()),
                ("output_dir", self.out.display().to_string()),
                ("config", config),
                ("config_sha256", config_sha256),
            ],
        )
    }
}

/// The action space and type structure a non-resettlement scenario
/// describes, plus its per-period batch size.
fn design(config: &Config) -> Result<(FeasibleSet, TypeStructure, usize)> {
    let s = &config.scenario;
    match s.kind {
        ScenarioKind::TopM => Ok((
            FeasibleSet::TopM { d: s.d, m: s.m },
            TypeStructure::independent(s.d),
            s.m,
        )),
        ScenarioKind::Assignment => Ok((
            FeasibleSet::Assignment { k: s.k },
            TypeStructure::grid(s.k, s.k),
            s.k,
        )),
        ScenarioKind::Resettlement => Err(Error::InvalidArgument(
            "the resettlement scenario has no fixed per-period action set; \
             this command needs kind = top_m or assignment"
                .into(),
        )),
    }
}

fn model_spec(config: &Config) -> Result<ModelSpec> {
    let m = &config.model;
    match m.family {
        ModelFamily::BetaBernoulli => Ok(ModelSpec::BetaBernoulli {
            prior_alpha: m.prior_alpha,
            prior_beta: m.prior_beta,
        }),
        family => {
            let mut priors = match family {
                ModelFamily::GaussianHier => HierarchicalPriors::gaussian(),
                ModelFamily::LogitHier => HierarchicalPriors::logit(),
                ModelFamily::BetaBinomialHier => HierarchicalPriors::beta_binomial(m.y_bar),
                ModelFamily::BetaBernoulli => unreachable!(),
            };
            priors.warmup = config.mcmc.warmup;
            priors.thin = config.mcmc.thin;
            Ok(ModelSpec::Mcmc {
                family,
                priors,
                draws_per_fit: config.mcmc.draws_per_fit,
                refresh_every: config.mcmc.refresh_every,
            })
        }
    }
}

/// Outcome process paired with the model family: binary outcomes for the
/// Bernoulli-likelihood models, truncated Gaussian and bounded counts for
/// the other two.
fn environment(config: &Config, theta0: ThetaVector) -> Result<Environment> {
    let family = match config.model.family {
        ModelFamily::BetaBernoulli | ModelFamily::LogitHier => OutcomeFamily::Bernoulli,
        ModelFamily::GaussianHier => {
            OutcomeFamily::GaussianTruncated { sigma: config.scenario.noise_sd }
        }
        ModelFamily::BetaBinomialHier => OutcomeFamily::BetaBinomial {
            dispersion: config.scenario.dispersion,
            y_bar: config.model.y_bar,
        },
    };
    Environment::new(theta0, family)
}

pub fn simulate(ctx: &RunContext) -> Result<()> {
    let (set, structure, batch) = design(&ctx.config)?;
    let spec = model_spec(&ctx.config)?;
    let d = set.d();
    let mut root = rng_from_seed(ctx.seed);
    let theta_seed = root.random::<u64>();
    let reps_seed = root.random::<u64>();
    let theta0 = match &ctx.config.scenario.theta0 {
        Some(values) => {
            if values.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "theta0 has {} entries, the option space has {d}",
                    values.len()
                )));
            }
            ThetaVector::new(values.clone())?
        }
        None => {
            let mut rng = rng_from_seed(theta_seed);
            ThetaVector::new((0..d).map(|_| rng.random::<f64>()).collect())?
        }
    };
    let env = environment(&ctx.config, theta0)?;
    let horizon = ctx.config.scenario.horizon;
    let trajectories =
        run_replications(&env, &spec, &structure, &set, horizon, ctx.reps, reps_seed)?;

    for (i, trajectory) in trajectories.iter().enumerate() {
        let mut w = ctx.create(&format!("trajectory_rep{}.csv", i + 1))?;
        write_trajectory_csv(&mut w, trajectory)?;
        let history = combi_bandit::io::history_from_periods(&trajectory.periods)?;
        let mut w = ctx.create(&format!("history_rep{}.csv", i + 1))?;
        write_history_csv(&mut w, &history)?;
    }

    let mean_regret = mean_cumulative_regret(&trajectories);
    let bound = BoundSpec::new(d, batch, horizon)?;
    let mut w = ctx.create("summary.txt")?;
    write_kv_report(
        &mut w,
        &[
            ("kind", ctx.config.scenario.kind.as_str().to_string()),
            ("family", ctx.config.model.family.to_string()),
            ("d", d.to_string()),
            ("batch", batch.to_string()),
            ("horizon", horizon.to_string()),
            ("replications", ctx.reps.to_string()),
            ("oracle_value", trajectories[0].oracle_value.to_string()),
            ("mean_total_regret", mean_regret.last().copied().unwrap_or(0.0).to_string()),
            ("bound_at_horizon", bound.cumulative(horizon).to_string()),
        ],
    )?;
    ctx.write_manifest("simulate")
}

fn load_scenario(ctx: &RunContext, seed: u64) -> Result<ResettlementScenario> {
    let s = &ctx.config.scenario;
    match &s.cases {
        Some(path) => {
            let counts = s.annual_counts.as_deref().ok_or_else(|| {
                Error::InvalidArgument(
                    "a case-file scenario needs annual_counts, one per affiliate".into(),
                )
            })?;
            let file = File::open(path).map_err(|e| {
                Error::InvalidArgument(format!("cannot open cases {}: {e}", path.display()))
            })?;
            let records = cases::ingest_cases(BufReader::new(file))?;
            cases::scenario_from_cases(&records, counts, s.min_cases, s.months)
        }
        None => generate_synthetic_scenario(s.k_u, s.k_v, s.months, s.arrival_rate, seed),
    }
}

pub fn resettle(ctx: &RunContext) -> Result<()> {
    let spec = model_spec(&ctx.config)?;
    let mut root = rng_from_seed(ctx.seed);
    let scenario_seed = root.random::<u64>();
    let runs_seed = root.random::<u64>();
    let scenario = load_scenario(ctx, scenario_seed)?;
    scenario.validate()?;

    let mut total_regret = 0.0;
    let mut per_case = 0.0;
    let mut placed = 0usize;
    for rep in 0..ctx.reps {
        let mut rng = rng_from_seed(derive_seed(runs_seed, rep as u64));
        let run = run_resettlement(&scenario, &spec, &mut rng)?;
        let report = run.validate(&scenario);
        if !report.is_ok() {
            return Err(Error::InvalidArgument(format!(
                "replication {} broke the scenario constraints: {}",
                rep + 1,
                report.problems.join("; ")
            )));
        }
        let mut w = ctx.create(&format!("resettlement_rep{}.csv", rep + 1))?;
        write_resettlement_csv(&mut w, &run)?;
        let mut w = ctx.create(&format!("capacity_rep{}.csv", rep + 1))?;
        write_capacity_csv(&mut w, &run.months)?;
        total_regret += run.total_regret;
        per_case += run.regret_per_case();
        placed += run.placements_by_algorithm();
    }

    let reps = ctx.reps as f64;
    let mut w = ctx.create("summary.txt")?;
    write_kv_report(
        &mut w,
        &[
            ("months", scenario.months.to_string()),
            ("k_u", scenario.k_u.to_string()),
            ("k_v", scenario.k_v().to_string()),
            ("families", scenario.families.len().to_string()),
            ("replications", ctx.reps.to_string()),
            ("mean_placed_by_algorithm", (placed as f64 / reps).to_string()),
            ("mean_total_regret", (total_regret / reps).to_string()),
            ("mean_regret_per_case", (per_case / reps).to_string()),
        ],
    )?;
    ctx.write_manifest("resettle")
}

pub fn bound(ctx: &RunContext) -> Result<()> {
    let s = &ctx.config.scenario;
    let (d, batch) = match s.kind {
        ScenarioKind::Assignment => (s.k * s.k, s.k),
        _ => (s.d, s.m),
    };
    let spec = BoundSpec::new(d, batch, s.horizon)?;
    let mut w = ctx.create("bound.csv")?;
    write_bound_csv(&mut w, &spec)?;
    ctx.write_manifest("bound")
}

pub fn lemmas(ctx: &RunContext) -> Result<()> {
    let mut w = ctx.create("lemmas.txt")?;
    let mut failures = Vec::new();
    for (i, instance) in packaged_instances().iter().enumerate() {
        let report = verify_lemma_properties(instance, 3)?;
        if i > 0 {
            writeln!(w)?;
        }
        w.write_all(report.to_kv().as_bytes())?;
        if !report.all_hold() {
            failures.push(report.label.clone());
        }
    }
    drop(w);
    ctx.write_manifest("lemmas")?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "inequalities violated on: {}",
            failures.join(", ")
        )))
    }
}

pub fn infer(ctx: &RunContext) -> Result<()> {
    let f = &ctx.config.inference;
    let path = f.history.as_ref().ok_or_else(|| {
        Error::InvalidArgument("inference needs a history file; set inference.history".into())
    })?;
    if f.group_a.is_empty() || f.group_b.is_empty() {
        return Err(Error::InvalidArgument(
            "inference needs two option groups; set inference.group_a and group_b".into(),
        ));
    }
    let (set, structure, _) = design(&ctx.config)?;
    let d = set.d();
    if let Some(&j) = f.group_a.iter().chain(&f.group_b).find(|&&j| j >= d) {
        return Err(Error::InvalidArgument(format!(
            "group option {} is outside 1..={d}",
            j + 1
        )));
    }
    let file = File::open(path).map_err(|e| {
        Error::InvalidArgument(format!("cannot open history {}: {e}", path.display()))
    })?;
    let history = read_history_csv(BufReader::new(file))?;
    let replay = ReplayDesign { spec: model_spec(&ctx.config)?, structure, set };
    let diff = group_mean_diff(&f.group_a, &f.group_b);
    let two_sided = f.two_sided;
    let statistic = move |h: &combi_bandit::domain::History| {
        let value = diff(h);
        if two_sided {
            value.abs()
        } else {
            value
        }
    };
    let mut rng = rng_from_seed(ctx.seed);
    let result = randomization_test(&replay, &history, f.null, statistic, f.n_resamples, &mut rng)?;

    let mut w = ctx.create("resamples.csv")?;
    write_resamples_csv(&mut w, &result.statistic_resamples)?;
    let mut w = ctx.create("inference.txt")?;
    write_kv_report(
        &mut w,
        &[
            ("null", f.null.as_str().to_string()),
            ("two_sided", f.two_sided.to_string()),
            ("periods", history.len().to_string()),
            ("statistic_observed", result.statistic_observed.to_string()),
            ("n_resamples", result.statistic_resamples.len().to_string()),
            ("p_value", result.p_value.to_string()),
            ("alpha", f.alpha.to_string()),
            ("rejects", result.rejects(f.alpha).to_string()),
        ],
    )?;
    ctx.write_manifest("infer")
}

/// Relative paths in a config file are resolved against the file itself,
/// so a config next to its data keeps working from any directory.
pub fn anchor_paths(config: &mut Config, config_path: &Path) {
    let Some(base) = config_path.parent() else { return };
    if base.as_os_str().is_empty() {
        return;
    }
    for path in [&mut config.scenario.cases, &mut config.inference.history]
        .into_iter()
        .flatten()
    {
        if path.is_relative() {
            let anchored = base.join(path.as_path());
            *path = anchored;
        }
    }
}
