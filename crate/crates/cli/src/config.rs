//! Run configuration: a sectioned `key = value` file.
//!
//! Sections are `[scenario]`, `[model]`, `[mcmc]`, `[solver]`, and
//! `[inference]`. Lines starting with `#` and blank lines are skipped.
//! Every key has a default, so an empty file (or no file at all) is a
//! valid configuration. Unknown sections, unknown keys, and repeated keys
//! are hard errors: a typo should stop the run, not silently fall back to
//! a default.

use std::path::PathBuf;

use combi_bandit::domain::ModelFamily;
use combi_bandit::inference::NullSpec;
use combi_bandit::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    TopM,
    Assignment,
    Resettlement,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "top_m" => Ok(ScenarioKind::TopM),
            "assignment" => Ok(ScenarioKind::Assignment),
            "resettlement" => Ok(ScenarioKind::Resettlement),
            other => Err(Error::Parse(format!(
                "unknown scenario kind '{other}', expected top_m, assignment, or resettlement"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::TopM => "top_m",
            ScenarioKind::Assignment => "assignment",
            ScenarioKind::Resettlement => "resettlement",
        }
    }
}

/// What the world looks like: the action space for `simulate`, `bound`,
/// and `infer`, or the monthly placement setup for `resettle`.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub d: usize,
    pub m: usize,
    /// Side length of the assignment grid; its option space has k*k cells.
    pub k: usize,
    pub horizon: usize,
    /// True option means; drawn uniformly from the run seed when omitted.
    pub theta0: Option<Vec<f64>>,
    /// Outcome noise scale for the Gaussian outcome family.
    pub noise_sd: f64,
    /// Outcome dispersion for the bounded-count outcome family.
    pub dispersion: f64,
    pub k_u: usize,
    pub k_v: usize,
    pub months: usize,
    pub arrival_rate: f64,
    /// Case file to build the placement scenario from instead of the
    /// synthetic generator.
    pub cases: Option<PathBuf>,
    /// Annual resettlement counts per affiliate, required with `cases`.
    pub annual_counts: Option<Vec<u64>>,
    /// Affiliates with an annual count below this are dropped from a
    /// case-file scenario.
    pub min_cases: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            kind: ScenarioKind::TopM,
            d: 4,
            m: 2,
            k: 2,
            horizon: 100,
            theta0: None,
            noise_sd: 0.25,
            dispersion: 1.0,
            k_u: 8,
            k_v: 17,
            months: 24,
            arrival_rate: 20.0,
            cases: None,
            annual_counts: None,
            min_cases: 150,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub family: ModelFamily,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub y_bar: u32,
}

impl Default for Model {
    fn default() -> Self {
        Model {
            family: ModelFamily::BetaBernoulli,
            prior_alpha: 1.0,
            prior_beta: 1.0,
            y_bar: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mcmc {
    pub warmup: usize,
    pub thin: usize,
    pub draws_per_fit: usize,
    pub refresh_every: usize,
}

impl Default for Mcmc {
    fn default() -> Self {
        Mcmc { warmup: 2000, thin: 1, draws_per_fit: 1, refresh_every: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub null: NullSpec,
    pub n_resamples: usize,
    /// Option groups compared by the test statistic, 0-based in memory
    /// and 1-based in the file.
    pub group_a: Vec<usize>,
    pub group_b: Vec<usize>,
    pub history: Option<PathBuf>,
    pub alpha: f64,
    pub two_sided: bool,
}

impl Default for Inference {
    fn default() -> Self {
        Inference {
            null: NullSpec::GlobalNull,
            n_resamples: 199,
            group_a: Vec::new(),
            group_b: Vec::new(),
            history: None,
            alpha: 0.05,
            two_sided: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    pub scenario: Scenario,
    pub model: Model,
    pub mcmc: Mcmc,
    pub inference: Inference,
}

const SECTIONS: [&str; 5] = ["scenario", "model", "mcmc", "solver", "inference"];

pub fn parse(text: &str) -> Result<Config> {
    let mut config = Config::default();
    let mut section: Option<String> = None;
    let mut seen = std::collections::BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let at = |msg: String| Error::Parse(format!("config line {}: {msg}", i + 1));
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| at(format!("unterminated section header '{line}'")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(at(format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected 'key = value', found '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(at("empty key".into()));
        }
        let Some(section) = section.as_deref() else {
            return Err(at(format!("key '{key}' appears before any [section]")));
        };
        if !seen.insert(format!("{section}.{key}")) {
            return Err(at(format!("duplicate key {section}.{key}")));
        }
        apply(&mut config, section, key, value)
            .map_err(|msg| at(format!("{section}.{key}: {msg}")))?;
    }
    validate(&config)?;
    Ok(config)
}

fn apply(
    config: &mut Config,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    let unknown = || "unknown key".to_string();
    match section {
        "scenario" => {
            let s = &mut config.scenario;
            match key {
                "kind" => s.kind = ScenarioKind::parse(value).map_err(plain)?,
                "d" => s.d = number(value)?,
                "m" => s.m = number(value)?,
                "k" => s.k = number(value)?,
                "horizon" => s.horizon = number(value)?,
                "theta0" => s.theta0 = Some(list(value)?),
                "noise_sd" => s.noise_sd = number(value)?,
                "dispersion" => s.dispersion = number(value)?,
                "k_u" => s.k_u = number(value)?,
                "k_v" => s.k_v = number(value)?,
                "months" => s.months = number(value)?,
                "arrival_rate" => s.arrival_rate = number(value)?,
                "cases" => s.cases = Some(PathBuf::from(value)),
                "annual_counts" => s.annual_counts = Some(list(value)?),
                "min_cases" => s.min_cases = number(value)?,
                _ => return Err(unknown()),
            }
        }
        "model" => {
            let m = &mut config.model;
            match key {
                "family" => m.family = ModelFamily::parse(value).map_err(plain)?,
                "prior_alpha" => m.prior_alpha = number(value)?,
                "prior_beta" => m.prior_beta = number(value)?,
                "y_bar" => m.y_bar = number(value)?,
                _ => return Err(unknown()),
            }
        }
        "mcmc" => {
            let m = &mut config.mcmc;
            match key {
                "warmup" => m.warmup = number(value)?,
                "thin" => m.thin = number(value)?,
                "draws_per_fit" => m.draws_per_fit = number(value)?,
                "refresh_every" => m.refresh_every = number(value)?,
                _ => return Err(unknown()),
            }
        }
        // Reserved for solver tuning knobs; none exist today, so every
        // key is unknown.
        "solver" => return Err(unknown()),
        "inference" => {
            let f = &mut config.inference;
            match key {
                "null" => f.null = NullSpec::parse(value).map_err(plain)?,
                "n_resamples" => f.n_resamples = number(value)?,
                "group_a" => f.group_a = option_indices(value)?,
                "group_b" => f.group_b = option_indices(value)?,
                "history" => f.history = Some(PathBuf::from(value)),
                "alpha" => f.alpha = number(value)?,
                "two_sided" => f.two_sided = boolean(value)?,
                _ => return Err(unknown()),
            }
        }
        _ => unreachable!("section names are checked at the header"),
    }
    Ok(())
}

/// The message without the error-kind prefix; the caller supplies the
/// file location instead.
fn plain(e: Error) -> String {
    match e {
        Error::Parse(msg) | Error::InvalidArgument(msg) => msg,
        other => other.to_string(),
    }
}

fn validate(config: &Config) -> Result<()> {
    let s = &config.scenario;
    if s.d == 0 || s.m == 0 || s.m > s.d {
        return Err(Error::InvalidArgument(format!(
            "scenario needs 1 <= m <= d, got d = {}, m = {}",
            s.d, s.m
        )));
    }
    if s.k == 0 || s.horizon == 0 {
        return Err(Error::InvalidArgument("k and horizon must be positive".into()));
    }
    if let Some(theta0) = &s.theta0 {
        if let Some(bad) = theta0.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "theta0 entry {bad} is outside [0, 1]"
            )));
        }
    }
    if s.annual_counts.is_some() && s.cases.is_none() {
        return Err(Error::InvalidArgument(
            "annual_counts only makes sense together with cases".into(),
        ));
    }
    let m = &config.model;
    if !(m.prior_alpha > 0.0 && m.prior_beta > 0.0) {
        return Err(Error::InvalidArgument("Beta prior parameters must be positive".into()));
    }
    let f = &config.inference;
    if f.n_resamples == 0 {
        return Err(Error::InvalidArgument("n_resamples must be positive".into()));
    }
    if !(f.alpha > 0.0 && f.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {} is outside (0, 1)",
            f.alpha
        )));
    }
    Ok(())
}

fn number<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}' as a number"))
}

fn boolean(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, found '{other}'")),
    }
}

/// Semicolon-separated numeric list, e.g. `0.5;0.25;0.25`.
fn list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value.split(';').map(|part| number(part.trim())).collect()
}

/// Semicolon-separated 1-based option indices, stored 0-based.
fn option_indices(value: &str) -> std::result::Result<Vec<usize>, String> {
    list::<usize>(value)?
        .into_iter()
        .map(|j| {
            if j == 0 {
                Err("option indices are 1-based".to_string())
            } else {
                Ok(j - 1)
            }
        })
        .collect()
}
