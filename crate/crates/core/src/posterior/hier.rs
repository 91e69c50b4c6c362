//! Hierarchical models over (u, v) cells and their MCMC samplers.
//!
//! All three models share the additive decomposition
//! `eta[a,b] = gamma_u[a] + gamma_v[b] + gamma_uv[a,b]` with independent
//! normal priors `gamma_u ~ N(0, tau_u_sq)`, `gamma_v ~ N(0, tau_v_sq)`,
//! `gamma_uv ~ N(mu, tau_uv_sq)`, and differ in the outcome likelihood:
//!
//! - continuous: `y ~ N(eta, sigma_sq)`, theta = eta;
//! - binary: `y ~ Bernoulli(sigmoid(eta))`;
//! - bounded counts: `y ~ BetaBinomial(m theta, m (1 - theta), y_bar)` with
//!   theta = sigmoid(eta) and dispersion m.
//!
//! The continuous model is sampled by a Gibbs sweep whose conditionals are
//! all normal or inverse-gamma. The logit-linked models use random-walk
//! Metropolis steps on each effect component inside the same sweep, with
//! step sizes adapted during warm-up toward an acceptance rate in
//! [0.2, 0.5]. The location mu and any inverse-gamma variance stay conjugate
//! in every model; half-normal variance priors and the dispersion get
//! log-scale random-walk updates.
//!
//! Histories with no observed outcomes are handled by direct prior
//! simulation instead of a chain.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::domain::{History, ModelFamily, TypeStructure};
use crate::error::{Error, Result};

use super::{
    effective_sample_size, DispersionPrior, PosteriorDraws, ScalarPrior, VariancePrior,
};

/// Largest representable value strictly below 1, used to keep logit-linked
/// draws inside the open interval.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Likelihood {
    Gaussian,
    Logit,
    BetaBinomial,
}

/// One state of the hierarchical parameter vector.
#[derive(Debug, Clone)]
pub struct HierarchicalParams {
    pub gamma_u: Vec<f64>,
    pub gamma_v: Vec<f64>,
    /// Row-major `k_u x k_v` interaction effects.
    pub gamma_uv: Vec<f64>,
    pub mu: f64,
    pub tau_u_sq: f64,
    pub tau_v_sq: f64,
    pub tau_uv_sq: f64,
    pub sigma_sq: f64,
    pub dispersion: f64,
    pub y_bar: u32,
}

impl HierarchicalParams {
    pub fn k_u(&self) -> usize {
        self.gamma_u.len()
    }

    pub fn k_v(&self) -> usize {
        self.gamma_v.len()
    }

    /// The additive effect for cell (a, b).
    pub fn eta(&self, a: usize, b: usize) -> f64 {
        self.gamma_u[a] + self.gamma_v[b] + self.gamma_uv[a * self.k_v() + b]
    }
}

/// Prior specification and chain settings for the hierarchical samplers.
///
/// Defaults follow the usual weakly informative choices: `mu ~ N(0, 5^2)`,
/// half-normal(2.5) on the effect scales for the logit-linked models,
/// inverse-gamma(2, 2.5) variances for the continuous model (keeping its
/// sweep fully conjugate), and log-normal(0, 1) dispersion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchicalPriors {
    pub mu: ScalarPrior,
    pub tau_u_sq: VariancePrior,
    pub tau_v_sq: VariancePrior,
    pub tau_uv_sq: VariancePrior,
    pub sigma_sq: VariancePrior,
    pub dispersion: DispersionPrior,
    /// Outcome support bound for the bounded-count model.
    pub y_bar: u32,
    pub warmup: usize,
    pub thin: usize,
}

impl HierarchicalPriors {
    pub fn gaussian() -> Self {
        Self {
            mu: ScalarPrior::Normal { mean: 0.0, sd: 5.0 },
            tau_u_sq: VariancePrior::InvGamma { shape: 2.0, scale: 2.5 },
            tau_v_sq: VariancePrior::InvGamma { shape: 2.0, scale: 2.5 },
            tau_uv_sq: VariancePrior::InvGamma { shape: 2.0, scale: 2.5 },
            sigma_sq: VariancePrior::InvGamma { shape: 2.0, scale: 2.5 },
            dispersion: DispersionPrior::Fixed(1.0),
            y_bar: 1,
            warmup: 2000,
            thin: 1,
        }
    }

    pub fn logit() -> Self {
        Self {
            mu: ScalarPrior::Normal { mean: 0.0, sd: 5.0 },
            tau_u_sq: VariancePrior::HalfNormalSd { scale: 2.5 },
            tau_v_sq: VariancePrior::HalfNormalSd { scale: 2.5 },
            tau_uv_sq: VariancePrior::HalfNormalSd { scale: 2.5 },
            sigma_sq: VariancePrior::Fixed(1.0),
            dispersion: DispersionPrior::Fixed(1.0),
            y_bar: 1,
            warmup: 2000,
            thin: 1,
        }
    }

    pub fn beta_binomial(y_bar: u32) -> Self {
        Self {
            dispersion: DispersionPrior::LogNormal { mu: 0.0, sigma: 1.0 },
            y_bar,
            ..Self::logit()
        }
    }

    fn validate(&self, lik: Likelihood) -> Result<()> {
        for (name, prior) in [
            ("tau_u_sq", self.tau_u_sq),
            ("tau_v_sq", self.tau_v_sq),
            ("tau_uv_sq", self.tau_uv_sq),
        ] {
            check_variance_prior(name, prior, true)?;
        }
        if let ScalarPrior::Normal { sd, .. } = self.mu {
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::InvalidArgument("mu prior needs a positive sd".into()));
            }
        }
        if matches!(self.tau_uv_sq, VariancePrior::Fixed(v) if v == 0.0)
            && !matches!(self.mu, ScalarPrior::Fixed(_))
        {
            return Err(Error::InvalidArgument(
                "pinning the interaction block requires a fixed mu".into(),
            ));
        }
        if lik == Likelihood::Gaussian {
            check_variance_prior("sigma_sq", self.sigma_sq, false)?;
        }
        if lik == Likelihood::BetaBinomial {
            if self.y_bar == 0 {
                return Err(Error::InvalidArgument("y_bar must be at least 1".into()));
            }
            match self.dispersion {
                DispersionPrior::Fixed(m) if !(m > 0.0) || !m.is_finite() => {
                    return Err(Error::InvalidArgument("dispersion must be positive".into()));
                }
                DispersionPrior::LogNormal { sigma, .. } if !(sigma > 0.0) => {
                    return Err(Error::InvalidArgument(
                        "dispersion prior needs a positive sigma".into(),
                    ));
                }
                _ => {}
            }
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_variance_prior(name: &str, prior: VariancePrior, zero_ok: bool) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidArgument(msg));
    match prior {
        VariancePrior::Fixed(v) => {
            if !v.is_finite() || v < 0.0 || (v == 0.0 && !zero_ok) {
                return bad(format!("{name}: fixed value {v} is not a usable variance"));
            }
        }
        VariancePrior::InvGamma { shape, scale } => {
            if !(shape > 0.0 && scale > 0.0) {
                return bad(format!("{name}: inverse-gamma needs positive shape and scale"));
            }
        }
        VariancePrior::HalfNormalSd { scale } => {
            if !(scale > 0.0) {
                return bad(format!("{name}: half-normal needs a positive scale"));
            }
        }
    }
    Ok(())
}

/// Per-cell sufficient statistics of the observed outcomes.
#[derive(Debug, Clone, Default)]
struct CellStats {
    n: f64,
    sum: f64,
    sum_sq: f64,
    /// Histogram over {0, ..., y_bar}; empty outside the count model.
    counts: Vec<f64>,
}

fn collect_cells(
    history: &History,
    structure: &TypeStructure,
    lik: Likelihood,
    y_bar: u32,
) -> Result<Vec<CellStats>> {
    let d = structure.d();
    let mut cells = vec![CellStats::default(); structure.n_cells()];
    if lik == Likelihood::BetaBinomial {
        for cell in &mut cells {
            cell.counts = vec![0.0; y_bar as usize + 1];
        }
    }
    for record in history.records() {
        if record.outcomes.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "period {}: record covers {} options, structure has {}",
                record.period,
                record.outcomes.len(),
                d
            )));
        }
        for (j, y) in record.outcomes.iter_observed() {
            let cell = &mut cells[structure.cell_of(j)];
            match lik {
                Likelihood::Gaussian => {
                    cell.sum_sq += y * y;
                }
                Likelihood::Logit => {
                    if y != 0.0 && y != 1.0 {
                        return Err(Error::BadOutcome(format!(
                            "period {}, option {j}: outcome {y} is not binary",
                            record.period
                        )));
                    }
                }
                Likelihood::BetaBinomial => {
                    let raw = y * f64::from(y_bar);
                    let k = raw.round();
                    if (raw - k).abs() > 1e-9 {
                        return Err(Error::BadOutcome(format!(
                            "period {}, option {j}: outcome {y} is not a multiple of 1/{y_bar}",
                            record.period
                        )));
                    }
                    cell.counts[k as usize] += 1.0;
                }
            }
            cell.n += 1.0;
            cell.sum += y;
        }
    }
    Ok(cells)
}

/// Gibbs sampler for the continuous-outcome model.
pub fn mcmc_sample_gaussian<R: Rng + ?Sized>(
    history: &History,
    structure: &TypeStructure,
    priors: &HierarchicalPriors,
    n_draws: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    run_mcmc(Likelihood::Gaussian, ModelFamily::GaussianHier, history, structure, priors, n_draws, rng)
}

/// Metropolis-within-Gibbs sampler for the binary-outcome model.
pub fn mcmc_sample_logit<R: Rng + ?Sized>(
    history: &History,
    structure: &TypeStructure,
    priors: &HierarchicalPriors,
    n_draws: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    run_mcmc(Likelihood::Logit, ModelFamily::LogitHier, history, structure, priors, n_draws, rng)
}

/// Metropolis-within-Gibbs sampler for the bounded-count model.
pub fn mcmc_sample_beta_binomial<R: Rng + ?Sized>(
    history: &History,
    structure: &TypeStructure,
    priors: &HierarchicalPriors,
    n_draws: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    run_mcmc(
        Likelihood::BetaBinomial,
        ModelFamily::BetaBinomialHier,
        history,
        structure,
        priors,
        n_draws,
        rng,
    )
}

fn run_mcmc<R: Rng + ?Sized>(
    lik: Likelihood,
    model: ModelFamily,
    history: &History,
    structure: &TypeStructure,
    priors: &HierarchicalPriors,
    n_draws: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    priors.validate(lik)?;
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be at least 1".into()));
    }
    let cells = collect_cells(history, structure, lik, priors.y_bar)?;
    if cells.iter().all(|c| c.n == 0.0) {
        return prior_draws(lik, model, structure, priors, n_draws, rng);
    }
    let sampler = Sampler::new(lik, structure, priors, cells);
    sampler.run(model, n_draws, rng)
}

/// Direct simulation from the prior push-forward, used when there is
/// nothing to condition on.
fn prior_draws<R: Rng + ?Sized>(
    lik: Likelihood,
    model: ModelFamily,
    structure: &TypeStructure,
    priors: &HierarchicalPriors,
    n_draws: usize,
    rng: &mut R,
) -> Result<PosteriorDraws> {
    let (k_u, k_v, d) = (structure.k_u(), structure.k_v(), structure.d());
    let mut draws = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let tau_u = sample_variance(priors.tau_u_sq, rng);
        let tau_v = sample_variance(priors.tau_v_sq, rng);
        let tau_uv = sample_variance(priors.tau_uv_sq, rng);
        let mu = match priors.mu {
            ScalarPrior::Fixed(v) => v,
            ScalarPrior::Normal { mean, sd } => mean + sd * standard_normal(rng),
        };
        let gu: Vec<f64> = (0..k_u).map(|_| normal_draw(0.0, tau_u, rng)).collect();
        let gv: Vec<f64> = (0..k_v).map(|_| normal_draw(0.0, tau_v, rng)).collect();
        let guv: Vec<f64> = (0..k_u * k_v).map(|_| normal_draw(mu, tau_uv, rng)).collect();
        let draw: Vec<f64> = (0..d)
            .map(|j| {
                let (a, b) = (structure.u_of(j), structure.v_of(j));
                link(lik, gu[a] + gv[b] + guv[a * k_v + b])
            })
            .collect();
        draws.push(draw);
    }
    let mut out = PosteriorDraws::new(draws, model)?;
    out.chain_diagnostics.insert("n_draws".into(), n_draws as f64);
    out.chain_diagnostics.insert("prior_only".into(), 1.0);
    Ok(out)
}

fn sample_variance<R: Rng + ?Sized>(prior: VariancePrior, rng: &mut R) -> f64 {
    match prior {
        VariancePrior::Fixed(v) => v,
        VariancePrior::InvGamma { shape, scale } => sample_inv_gamma(shape, scale, rng),
        VariancePrior::HalfNormalSd { scale } => (scale * standard_normal(rng)).powi(2),
    }
}

fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale).expect("validated parameters").sample(rng);
    1.0 / g.max(1e-300)
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_draw<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    if var <= 0.0 {
        mean
    } else {
        mean + var.sqrt() * standard_normal(rng)
    }
}

fn link(lik: Likelihood, eta: f64) -> f64 {
    match lik {
        Likelihood::Gaussian => eta,
        Likelihood::Logit | Likelihood::BetaBinomial => sigmoid(eta),
    }
}

fn sigmoid(x: f64) -> f64 {
    (1.0 / (1.0 + (-x).exp())).clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

#[derive(Debug, Clone, Copy)]
enum GammaBlock {
    U,
    V,
    Uv,
}

/// Random-walk step size with warm-up adaptation toward an acceptance rate
/// in [0.2, 0.5], adjusted every 50 proposals and clamped to [1e-3, 10].
#[derive(Debug, Clone)]
struct StepSize {
    step: f64,
    accepted: u32,
    tried: u32,
}

impl StepSize {
    fn new() -> Self {
        Self { step: 0.5, accepted: 0, tried: 0 }
    }

    fn observe(&mut self, accepted: bool) {
        self.tried += 1;
        self.accepted += u32::from(accepted);
        if self.tried == 50 {
            let rate = f64::from(self.accepted) / 50.0;
            if rate < 0.2 {
                self.step *= 0.7;
            } else if rate > 0.5 {
                self.step *= 1.4;
            }
            self.step = self.step.clamp(1e-3, 10.0);
            self.accepted = 0;
            self.tried = 0;
        }
    }
}

struct Sampler<'a> {
    lik: Likelihood,
    structure: &'a TypeStructure,
    priors: &'a HierarchicalPriors,
    cells: Vec<CellStats>,
    params: HierarchicalParams,
    steps_u: Vec<StepSize>,
    steps_v: Vec<StepSize>,
    steps_uv: Vec<StepSize>,
    step_tau_u: StepSize,
    step_tau_v: StepSize,
    step_tau_uv: StepSize,
    step_sigma: StepSize,
    step_disp: StepSize,
    adapting: bool,
    accept_gamma: u64,
    propose_gamma: u64,
    accept_var: u64,
    propose_var: u64,
    accept_disp: u64,
    propose_disp: u64,
}

impl<'a> Sampler<'a> {
    fn new(
        lik: Likelihood,
        structure: &'a TypeStructure,
        priors: &'a HierarchicalPriors,
        cells: Vec<CellStats>,
    ) -> Self {
        let (k_u, k_v) = (structure.k_u(), structure.k_v());
        let mu = match priors.mu {
            ScalarPrior::Fixed(v) => v,
            ScalarPrior::Normal { mean, .. } => mean,
        };
        let init_var = |prior: VariancePrior| match prior {
            VariancePrior::Fixed(v) => v,
            VariancePrior::InvGamma { shape, scale } => {
                if shape > 1.0 {
                    scale / (shape - 1.0)
                } else {
                    scale
                }
            }
            VariancePrior::HalfNormalSd { scale } => scale * scale,
        };
        let params = HierarchicalParams {
            gamma_u: vec![0.0; k_u],
            gamma_v: vec![0.0; k_v],
            gamma_uv: vec![mu; k_u * k_v],
            mu,
            tau_u_sq: init_var(priors.tau_u_sq),
            tau_v_sq: init_var(priors.tau_v_sq),
            tau_uv_sq: init_var(priors.tau_uv_sq),
            sigma_sq: init_var(priors.sigma_sq),
            dispersion: match priors.dispersion {
                DispersionPrior::Fixed(m) => m,
                DispersionPrior::LogNormal { mu, .. } => mu.exp(),
            },
            y_bar: priors.y_bar,
        };
        Self {
            lik,
            structure,
            priors,
            cells,
            params,
            steps_u: vec![StepSize::new(); k_u],
            steps_v: vec![StepSize::new(); k_v],
            steps_uv: vec![StepSize::new(); k_u * k_v],
            step_tau_u: StepSize::new(),
            step_tau_v: StepSize::new(),
            step_tau_uv: StepSize::new(),
            step_sigma: StepSize::new(),
            step_disp: StepSize::new(),
            adapting: true,
            accept_gamma: 0,
            propose_gamma: 0,
            accept_var: 0,
            propose_var: 0,
            accept_disp: 0,
            propose_disp: 0,
        }
    }

    fn run<R: Rng + ?Sized>(
        mut self,
        model: ModelFamily,
        n_draws: usize,
        rng: &mut R,
    ) -> Result<PosteriorDraws> {
        for _ in 0..self.priors.warmup {
            self.sweep(rng);
        }
        self.adapting = false;
        let thin = self.priors.thin;
        let mut draws = Vec::with_capacity(n_draws);
        for i in 0..n_draws * thin {
            self.sweep(rng);
            if (i + 1) % thin == 0 {
                draws.push(self.theta_draw());
            }
        }
        let mut out = PosteriorDraws::new(draws, model)?;
        out.chain_diagnostics = self.diagnostics(&out);
        Ok(out)
    }

    fn theta_draw(&self) -> Vec<f64> {
        (0..self.structure.d())
            .map(|j| {
                let eta = self.params.eta(self.structure.u_of(j), self.structure.v_of(j));
                link(self.lik, eta)
            })
            .collect()
    }

    fn diagnostics(&self, draws: &PosteriorDraws) -> BTreeMap<String, f64> {
        let mut diag = BTreeMap::new();
        diag.insert("n_draws".into(), draws.n_draws() as f64);
        diag.insert("warmup".into(), self.priors.warmup as f64);
        diag.insert("thin".into(), self.priors.thin as f64);
        if self.propose_gamma > 0 {
            diag.insert(
                "accept_rate_gamma".into(),
                self.accept_gamma as f64 / self.propose_gamma as f64,
            );
        }
        if self.propose_var > 0 {
            diag.insert(
                "accept_rate_variance".into(),
                self.accept_var as f64 / self.propose_var as f64,
            );
        }
        if self.propose_disp > 0 {
            diag.insert(
                "accept_rate_dispersion".into(),
                self.accept_disp as f64 / self.propose_disp as f64,
            );
        }
        let mut ess_min = f64::INFINITY;
        let mut ess_sum = 0.0;
        for j in 0..draws.d() {
            let ess = effective_sample_size(&draws.option_chain(j));
            ess_min = ess_min.min(ess);
            ess_sum += ess;
        }
        diag.insert("ess_min".into(), ess_min);
        diag.insert("ess_mean".into(), ess_sum / draws.d() as f64);
        diag
    }

    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self.lik {
            Likelihood::Gaussian => self.sweep_gaussian(rng),
            Likelihood::Logit | Likelihood::BetaBinomial => self.sweep_metropolis(rng),
        }
        self.update_mu(rng);
        self.update_tau(GammaBlock::U, rng);
        self.update_tau(GammaBlock::V, rng);
        self.update_tau(GammaBlock::Uv, rng);
        if self.lik == Likelihood::Gaussian {
            self.update_sigma(rng);
        }
        if self.lik == Likelihood::BetaBinomial {
            self.update_dispersion(rng);
        }
    }

    /// Conjugate normal updates of every effect, given the current
    /// variances.
    fn sweep_gaussian<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (k_u, k_v) = (self.params.k_u(), self.params.k_v());
        let sigma_sq = self.params.sigma_sq;
        for a in 0..k_u {
            if self.params.tau_u_sq <= 0.0 {
                self.params.gamma_u[a] = 0.0;
                continue;
            }
            let mut prec = 1.0 / self.params.tau_u_sq;
            let mut num = 0.0;
            for b in 0..k_v {
                let c = a * k_v + b;
                let st = &self.cells[c];
                if st.n == 0.0 {
                    continue;
                }
                let rest = self.params.gamma_v[b] + self.params.gamma_uv[c];
                prec += st.n / sigma_sq;
                num += (st.sum - st.n * rest) / sigma_sq;
            }
            self.params.gamma_u[a] = normal_draw(num / prec, 1.0 / prec, rng);
        }
        for b in 0..k_v {
            if self.params.tau_v_sq <= 0.0 {
                self.params.gamma_v[b] = 0.0;
                continue;
            }
            let mut prec = 1.0 / self.params.tau_v_sq;
            let mut num = 0.0;
            for a in 0..k_u {
                let c = a * k_v + b;
                let st = &self.cells[c];
                if st.n == 0.0 {
                    continue;
                }
                let rest = self.params.gamma_u[a] + self.params.gamma_uv[c];
                prec += st.n / sigma_sq;
                num += (st.sum - st.n * rest) / sigma_sq;
            }
            self.params.gamma_v[b] = normal_draw(num / prec, 1.0 / prec, rng);
        }
        for c in 0..k_u * k_v {
            if self.params.tau_uv_sq <= 0.0 {
                self.params.gamma_uv[c] = self.params.mu;
                continue;
            }
            let (a, b) = (c / k_v, c % k_v);
            let mut prec = 1.0 / self.params.tau_uv_sq;
            let mut num = self.params.mu / self.params.tau_uv_sq;
            let st = &self.cells[c];
            if st.n > 0.0 {
                let rest = self.params.gamma_u[a] + self.params.gamma_v[b];
                prec += st.n / sigma_sq;
                num += (st.sum - st.n * rest) / sigma_sq;
            }
            self.params.gamma_uv[c] = normal_draw(num / prec, 1.0 / prec, rng);
        }
    }

    /// Component-wise random-walk Metropolis on every effect.
    fn sweep_metropolis<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for a in 0..self.params.k_u() {
            self.metropolis_gamma(GammaBlock::U, a, rng);
        }
        for b in 0..self.params.k_v() {
            self.metropolis_gamma(GammaBlock::V, b, rng);
        }
        for c in 0..self.params.k_u() * self.params.k_v() {
            self.metropolis_gamma(GammaBlock::Uv, c, rng);
        }
    }

    fn metropolis_gamma<R: Rng + ?Sized>(&mut self, block: GammaBlock, idx: usize, rng: &mut R) {
        let (prior_mean, prior_var) = match block {
            GammaBlock::U => (0.0, self.params.tau_u_sq),
            GammaBlock::V => (0.0, self.params.tau_v_sq),
            GammaBlock::Uv => (self.params.mu, self.params.tau_uv_sq),
        };
        if prior_var <= 0.0 {
            match block {
                GammaBlock::U => self.params.gamma_u[idx] = prior_mean,
                GammaBlock::V => self.params.gamma_v[idx] = prior_mean,
                GammaBlock::Uv => self.params.gamma_uv[idx] = prior_mean,
            }
            return;
        }
        let current = match block {
            GammaBlock::U => self.params.gamma_u[idx],
            GammaBlock::V => self.params.gamma_v[idx],
            GammaBlock::Uv => self.params.gamma_uv[idx],
        };
        let step = match block {
            GammaBlock::U => self.steps_u[idx].step,
            GammaBlock::V => self.steps_v[idx].step,
            GammaBlock::Uv => self.steps_uv[idx].step,
        };
        let proposal = current + step * standard_normal(rng);
        let delta = self.gamma_log_target(block, idx, proposal, prior_mean, prior_var)
            - self.gamma_log_target(block, idx, current, prior_mean, prior_var);
        let accepted = delta >= 0.0 || rng.random::<f64>() < delta.exp();
        if accepted {
            match block {
                GammaBlock::U => self.params.gamma_u[idx] = proposal,
                GammaBlock::V => self.params.gamma_v[idx] = proposal,
                GammaBlock::Uv => self.params.gamma_uv[idx] = proposal,
            }
        }
        if self.adapting {
            match block {
                GammaBlock::U => self.steps_u[idx].observe(accepted),
                GammaBlock::V => self.steps_v[idx].observe(accepted),
                GammaBlock::Uv => self.steps_uv[idx].observe(accepted),
            }
        } else {
            self.propose_gamma += 1;
            self.accept_gamma += u64::from(accepted);
        }
    }

    fn gamma_log_target(
        &self,
        block: GammaBlock,
        idx: usize,
        x: f64,
        prior_mean: f64,
        prior_var: f64,
    ) -> f64 {
        let k_v = self.params.k_v();
        let mut lt = -(x - prior_mean).powi(2) / (2.0 * prior_var);
        match block {
            GammaBlock::U => {
                for b in 0..k_v {
                    let c = idx * k_v + b;
                    if self.cells[c].n > 0.0 {
                        lt += self.cell_loglik(
                            c,
                            x + self.params.gamma_v[b] + self.params.gamma_uv[c],
                        );
                    }
                }
            }
            GammaBlock::V => {
                for a in 0..self.params.k_u() {
                    let c = a * k_v + idx;
                    if self.cells[c].n > 0.0 {
                        lt += self.cell_loglik(
                            c,
                            self.params.gamma_u[a] + x + self.params.gamma_uv[c],
                        );
                    }
                }
            }
            GammaBlock::Uv => {
                if self.cells[idx].n > 0.0 {
                    let (a, b) = (idx / k_v, idx % k_v);
                    lt += self.cell_loglik(
                        idx,
                        self.params.gamma_u[a] + self.params.gamma_v[b] + x,
                    );
                }
            }
        }
        lt
    }

    /// Log-likelihood of one cell's data at linear predictor `eta`,
    /// dropping terms constant in the parameters.
    fn cell_loglik(&self, c: usize, eta: f64) -> f64 {
        let st = &self.cells[c];
        match self.lik {
            Likelihood::Gaussian => unreachable!("continuous model uses conjugate sweeps"),
            Likelihood::Logit => {
                let successes = st.sum;
                let failures = st.n - st.sum;
                -successes * softplus(-eta) - failures * softplus(eta)
            }
            Likelihood::BetaBinomial => {
                self.count_loglik(st, sigmoid(eta), self.params.dispersion)
            }
        }
    }

    fn count_loglik(&self, st: &CellStats, theta: f64, m: f64) -> f64 {
        let theta = theta.clamp(1e-12, 1.0 - 1e-12);
        let (alpha, beta) = (m * theta, m * (1.0 - theta));
        let y_bar = f64::from(self.params.y_bar);
        let mut lt = -st.n * ln_beta(alpha, beta);
        for (k, &count) in st.counts.iter().enumerate() {
            if count > 0.0 {
                lt += count * ln_beta(k as f64 + alpha, y_bar - k as f64 + beta);
            }
        }
        lt
    }

    fn update_mu<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self.priors.mu {
            ScalarPrior::Fixed(v) => self.params.mu = v,
            ScalarPrior::Normal { mean, sd } => {
                let k = self.params.gamma_uv.len() as f64;
                let tau = self.params.tau_uv_sq;
                let mut prec = 1.0 / (sd * sd);
                let mut num = mean / (sd * sd);
                if tau > 0.0 {
                    prec += k / tau;
                    num += self.params.gamma_uv.iter().sum::<f64>() / tau;
                }
                self.params.mu = normal_draw(num / prec, 1.0 / prec, rng);
            }
        }
    }

    fn update_tau<R: Rng + ?Sized>(&mut self, block: GammaBlock, rng: &mut R) {
        let prior = match block {
            GammaBlock::U => self.priors.tau_u_sq,
            GammaBlock::V => self.priors.tau_v_sq,
            GammaBlock::Uv => self.priors.tau_uv_sq,
        };
        let (ss, len) = match block {
            GammaBlock::U => {
                (self.params.gamma_u.iter().map(|g| g * g).sum::<f64>(), self.params.k_u())
            }
            GammaBlock::V => {
                (self.params.gamma_v.iter().map(|g| g * g).sum::<f64>(), self.params.k_v())
            }
            GammaBlock::Uv => {
                let mu = self.params.mu;
                let ss = self.params.gamma_uv.iter().map(|g| (g - mu).powi(2)).sum::<f64>();
                (ss, self.params.gamma_uv.len())
            }
        };
        let new = match prior {
            VariancePrior::Fixed(v) => v,
            VariancePrior::InvGamma { shape, scale } => {
                sample_inv_gamma(shape + len as f64 / 2.0, scale + ss / 2.0, rng)
            }
            VariancePrior::HalfNormalSd { scale } => {
                let current = match block {
                    GammaBlock::U => self.params.tau_u_sq,
                    GammaBlock::V => self.params.tau_v_sq,
                    GammaBlock::Uv => self.params.tau_uv_sq,
                };
                let width = match block {
                    GammaBlock::U => self.step_tau_u.step,
                    GammaBlock::V => self.step_tau_v.step,
                    GammaBlock::Uv => self.step_tau_uv.step,
                };
                let target = |v: f64| {
                    -0.5 * len as f64 * v.ln() - ss / (2.0 * v) - v / (2.0 * scale * scale)
                        - 0.5 * v.ln()
                };
                let (value, accepted) = log_walk_variance(current, width, target, rng);
                self.note_variance_step(block, accepted);
                value
            }
        };
        match block {
            GammaBlock::U => self.params.tau_u_sq = new,
            GammaBlock::V => self.params.tau_v_sq = new,
            GammaBlock::Uv => self.params.tau_uv_sq = new,
        }
    }

    fn note_variance_step(&mut self, block: GammaBlock, accepted: bool) {
        if self.adapting {
            match block {
                GammaBlock::U => self.step_tau_u.observe(accepted),
                GammaBlock::V => self.step_tau_v.observe(accepted),
                GammaBlock::Uv => self.step_tau_uv.observe(accepted),
            }
        } else {
            self.propose_var += 1;
            self.accept_var += u64::from(accepted);
        }
    }

    fn residual_sum_of_squares(&self) -> (f64, f64) {
        let k_v = self.params.k_v();
        let mut n = 0.0;
        let mut rss = 0.0;
        for (c, st) in self.cells.iter().enumerate() {
            if st.n == 0.0 {
                continue;
            }
            let eta = self.params.eta(c / k_v, c % k_v);
            n += st.n;
            rss += st.sum_sq - 2.0 * eta * st.sum + st.n * eta * eta;
        }
        (n, rss.max(0.0))
    }

    fn update_sigma<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self.priors.sigma_sq {
            VariancePrior::Fixed(v) => self.params.sigma_sq = v,
            VariancePrior::InvGamma { shape, scale } => {
                let (n, rss) = self.residual_sum_of_squares();
                self.params.sigma_sq = sample_inv_gamma(shape + n / 2.0, scale + rss / 2.0, rng);
            }
            VariancePrior::HalfNormalSd { scale } => {
                let (n, rss) = self.residual_sum_of_squares();
                let target = |v: f64| {
                    -0.5 * n * v.ln() - rss / (2.0 * v) - v / (2.0 * scale * scale) - 0.5 * v.ln()
                };
                let (value, accepted) =
                    log_walk_variance(self.params.sigma_sq, self.step_sigma.step, target, rng);
                if self.adapting {
                    self.step_sigma.observe(accepted);
                } else {
                    self.propose_var += 1;
                    self.accept_var += u64::from(accepted);
                }
                self.params.sigma_sq = value;
            }
        }
    }

    fn update_dispersion<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match self.priors.dispersion {
            DispersionPrior::Fixed(m) => self.params.dispersion = m,
            DispersionPrior::LogNormal { mu: lm, sigma: ls } => {
                let k_v = self.params.k_v();
                let total = |m: f64| -> f64 {
                    let mut lt = -(m.ln() - lm).powi(2) / (2.0 * ls * ls);
                    for (c, st) in self.cells.iter().enumerate() {
                        if st.n > 0.0 {
                            let theta = sigmoid(self.params.eta(c / k_v, c % k_v));
                            lt += self.count_loglik(st, theta, m);
                        }
                    }
                    lt
                };
                let current = self.params.dispersion;
                let proposal = (current.ln() + self.step_disp.step * standard_normal(rng)).exp();
                // The log-normal prior's 1/m density factor cancels against
                // the log-scale proposal Jacobian.
                let delta = total(proposal) - total(current);
                let accepted =
                    proposal.is_finite() && (delta >= 0.0 || rng.random::<f64>() < delta.exp());
                if accepted {
                    self.params.dispersion = proposal;
                }
                if self.adapting {
                    self.step_disp.observe(accepted);
                } else {
                    self.propose_disp += 1;
                    self.accept_disp += u64::from(accepted);
                }
            }
        }
    }
}

/// One log-scale random-walk update of a variance parameter against
/// `log_target` (a density in the variance itself; the Jacobian is applied
/// here). Returns the new value and whether the proposal was accepted.
fn log_walk_variance<R: Rng + ?Sized>(
    current: f64,
    width: f64,
    log_target: impl Fn(f64) -> f64,
    rng: &mut R,
) -> (f64, bool) {
    let proposal = (current.ln() + width * standard_normal(rng)).exp();
    let delta = (log_target(proposal) + proposal.ln()) - (log_target(current) + current.ln());
    let accepted = proposal.is_finite()
        && proposal > 0.0
        && (delta >= 0.0 || rng.random::<f64>() < delta.exp());
    (if accepted { proposal } else { current }, accepted)
}
