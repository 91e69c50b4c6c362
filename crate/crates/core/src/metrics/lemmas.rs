//! Exact verification of the inequalities behind the regret bound.
//!
//! On an instance with a discrete prior over finitely many theta vectors,
//! Bernoulli outcomes, and a small feasible set, every posterior quantity is
//! a finite sum. This module walks every reachable history up to a given
//! depth and checks, at each node:
//!
//! - the regret/divergence inequality: expected one-step regret is at most
//!   `sqrt(d/2 * sum_j pbar_j^2 KL(nustar_j, nubar_j))`,
//! - the per-option divergence/information inequality:
//!   `pbar_j^2 KL(nustar_j, nubar_j) <= I(A*_j ; (A_t, Y_t(A_t)))`,
//! - Pinsker in standard form: `(nustar_j - nubar_j)^2 <= KL/2`,
//!
//! and, across the whole tree, the information-budget inequality: the
//! expected per-period informations about each `A*_j` sum to at most the
//! entropy of the optimal-selection indicators at the root, itself at most
//! `m (ln(d/m) + 1)`.
//!
//! Here `pbar_j` is the posterior probability option j is in the optimal
//! action, `nubar_j` the posterior mean of theta_j, and `nustar_j` that mean
//! conditioned on j being optimal. The selection rule is the same exact
//! argmax (with lexicographic ties) the policy uses, so the checked
//! quantities are exactly those the sampler realizes.

use crate::domain::ThetaVector;
use crate::error::{Error, Result};
use crate::solvers::{enumerate_feasible, FeasibleSet};

use super::{bernoulli_entropy, bernoulli_kl, mutual_information, DiscreteJoint};

/// Numerical slack for inequality checks; the math is exact, the floats are
/// not.
const TOL: f64 = 1e-9;

/// A fully enumerable instance: a discrete prior over theta vectors with
/// Bernoulli outcomes.
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    pub label: String,
    pub set: FeasibleSet,
    pub support: Vec<ThetaVector>,
    pub prior: Vec<f64>,
}

impl DiscreteInstance {
    fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.prior.len() {
            return Err(Error::InvalidArgument(
                "prior and support must be non-empty and the same length".into(),
            ));
        }
        let total: f64 = self.prior.iter().sum();
        if self.prior.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("prior is not a distribution".into()));
        }
        let d = self.set.d();
        if self.support.iter().any(|t| t.len() != d) {
            return Err(Error::DimensionMismatch(
                "support vectors disagree with the feasible set dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Worst observed slack for each checked inequality (positive = violated).
#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub label: String,
    pub depth: usize,
    pub nodes_checked: usize,
    /// max over nodes of (one-step regret - divergence bound).
    pub regret_gap: f64,
    /// max over nodes and options of (pbar^2 KL - information).
    pub divergence_gap: f64,
    /// max over nodes and options of ((nustar-nubar)^2 - KL/2).
    pub pinsker_gap: f64,
    /// Total expected information gathered about the A*_j over the tree.
    pub information_total: f64,
    /// Entropy of the optimal-selection indicators at the root.
    pub selection_entropy: f64,
    /// `m (ln(d/m) + 1)`.
    pub packing_bound: f64,
}

impl LemmaReport {
    /// True when every inequality held (up to float slack) at every node.
    pub fn all_hold(&self) -> bool {
        self.regret_gap <= TOL
            && self.divergence_gap <= TOL
            && self.pinsker_gap <= TOL
            && self.information_total <= self.selection_entropy + TOL
            && self.selection_entropy <= self.packing_bound + TOL
    }

    /// Key-value text rendering, one `key = value` per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("label = {}\n", self.label));
        s.push_str(&format!("depth = {}\n", self.depth));
        s.push_str(&format!("nodes_checked = {}\n", self.nodes_checked));
        s.push_str(&format!("regret_gap = {:.6e}\n", self.regret_gap));
        s.push_str(&format!("divergence_gap = {:.6e}\n", self.divergence_gap));
        s.push_str(&format!("pinsker_gap = {:.6e}\n", self.pinsker_gap));
        s.push_str(&format!("information_total = {:.9}\n", self.information_total));
        s.push_str(&format!("selection_entropy = {:.9}\n", self.selection_entropy));
        s.push_str(&format!("packing_bound = {:.9}\n", self.packing_bound));
        s.push_str(&format!("all_hold = {}\n", self.all_hold()));
        s
    }
}

struct Walker<'a> {
    d: usize,
    thetas: &'a [ThetaVector],
    actions: Vec<Vec<usize>>,
    /// astar[s] = index into `actions` of the optimal action at atom s.
    astar: Vec<usize>,
    nodes: usize,
    regret_gap: f64,
    divergence_gap: f64,
    pinsker_gap: f64,
    info_total: f64,
}

/// Checks the inequalities at every reachable history node up to `depth`
/// records deep (depth 0 checks only the prior node).
pub fn verify_lemma_properties(instance: &DiscreteInstance, depth: usize) -> Result<LemmaReport> {
    instance.validate()?;
    let m = instance.set.batch_size().ok_or_else(|| {
        Error::InvalidArgument("lemma checks need a feasible set with a fixed batch size".into())
    })?;
    let actions_raw = enumerate_feasible(&instance.set, 20)?;
    let d = instance.set.d();

    let actions: Vec<Vec<usize>> = actions_raw.iter().map(|a| a.chosen()).collect();
    // Exact argmax per atom, lexicographic smallest on ties: the enumeration
    // order is already the tie-break order, so strict improvement suffices.
    let astar: Vec<usize> = instance
        .support
        .iter()
        .map(|theta| {
            let mut best = 0usize;
            let mut best_val = f64::NEG_INFINITY;
            for (idx, chosen) in actions.iter().enumerate() {
                let v: f64 = chosen.iter().map(|&j| theta.get(j)).sum();
                if v > best_val {
                    best_val = v;
                    best = idx;
                }
            }
            best
        })
        .collect();

    let mut walker = Walker {
        d,
        thetas: &instance.support,
        actions,
        astar,
        nodes: 0,
        regret_gap: f64::NEG_INFINITY,
        divergence_gap: f64::NEG_INFINITY,
        pinsker_gap: f64::NEG_INFINITY,
        info_total: 0.0,
    };

    let root_pbar = walker.selection_profile(&instance.prior);
    let selection_entropy: f64 = root_pbar
        .iter()
        .map(|&p| bernoulli_entropy(p.clamp(0.0, 1.0)).expect("probability"))
        .sum();

    walker.visit(instance.prior.clone(), 1.0, depth)?;

    let ratio = d as f64 / m as f64;
    Ok(LemmaReport {
        label: instance.label.clone(),
        depth,
        nodes_checked: walker.nodes,
        regret_gap: walker.regret_gap,
        divergence_gap: walker.divergence_gap,
        pinsker_gap: walker.pinsker_gap,
        information_total: walker.info_total,
        selection_entropy,
        packing_bound: m as f64 * (ratio.ln() + 1.0),
    })
}

impl Walker<'_> {
    /// pbar_j = posterior probability that option j is in the optimal action.
    fn selection_profile(&self, posterior: &[f64]) -> Vec<f64> {
        let mut pbar = vec![0.0; self.d];
        for (s, &w) in posterior.iter().enumerate() {
            for &j in &self.actions[self.astar[s]] {
                pbar[j] += w;
            }
        }
        pbar
    }

    fn visit(&mut self, posterior: Vec<f64>, node_prob: f64, depth_left: usize) -> Result<()> {
        self.nodes += 1;
        let n_actions = self.actions.len();

        let mut p_act = vec![0.0f64; n_actions];
        for (s, &w) in posterior.iter().enumerate() {
            p_act[self.astar[s]] += w;
        }
        let pbar = self.selection_profile(&posterior);
        let mut nubar = vec![0.0f64; self.d];
        let mut nustar_mass = vec![0.0f64; self.d];
        for (s, &w) in posterior.iter().enumerate() {
            for j in 0..self.d {
                nubar[j] += w * self.thetas[s].get(j);
            }
            for &j in &self.actions[self.astar[s]] {
                nustar_mass[j] += w * self.thetas[s].get(j);
            }
        }

        // One-step expected regret under probability matching:
        // E[R(A*)] - E[R(A_t)] = sum_j pbar_j (nustar_j - nubar_j).
        let mut regret = 0.0;
        let mut divergence_sum = 0.0;
        let mut kls = vec![0.0f64; self.d];
        for j in 0..self.d {
            if pbar[j] <= 0.0 {
                continue;
            }
            let nustar = (nustar_mass[j] / pbar[j]).clamp(0.0, 1.0);
            let nb = nubar[j].clamp(0.0, 1.0);
            regret += pbar[j] * (nustar - nb);
            let kl = bernoulli_kl(nustar, nb)?;
            debug_assert!(kl.is_finite(), "degenerate mean forces equal conditional mean");
            kls[j] = kl;
            divergence_sum += pbar[j] * pbar[j] * kl;
            let pinsker = (nustar - nb).powi(2) - 0.5 * kl;
            self.pinsker_gap = self.pinsker_gap.max(pinsker);
        }
        let lemma1_rhs = (self.d as f64 / 2.0 * divergence_sum).sqrt();
        self.regret_gap = self.regret_gap.max(regret - lemma1_rhs);

        // Observation alphabet: (action, outcome pattern) pairs with
        // positive selection probability.
        let live_actions: Vec<usize> = (0..n_actions).filter(|&a| p_act[a] > 0.0).collect();
        // Per atom and live action, the Bernoulli likelihood of each outcome
        // pattern on the action's chosen options.
        let mut info_here = 0.0;
        for j in 0..self.d {
            if pbar[j] <= 0.0 || pbar[j] >= 1.0 {
                // Information about a deterministic indicator is zero and the
                // divergence side vanishes too (nustar = nubar when pbar = 1).
                let lhs = if pbar[j] > 0.0 { pbar[j] * pbar[j] * kls[j] } else { 0.0 };
                self.divergence_gap = self.divergence_gap.max(lhs - 0.0);
                continue;
            }
            let mut rows = vec![Vec::new(), Vec::new()];
            for &a in &live_actions {
                let chosen = &self.actions[a];
                for pattern in 0..(1usize << chosen.len()) {
                    let mut cell = [0.0f64; 2];
                    for (s, &w) in posterior.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let lik = self.pattern_likelihood(s, chosen, pattern);
                        let b = usize::from(self.is_in_astar(s, j));
                        cell[b] += w * p_act[a] * lik;
                    }
                    rows[0].push(cell[0]);
                    rows[1].push(cell[1]);
                }
            }
            let joint = DiscreteJoint::new(rows)?;
            let info = mutual_information(&joint);
            info_here += info;
            self.divergence_gap = self.divergence_gap.max(pbar[j] * pbar[j] * kls[j] - info);
        }
        self.info_total += node_prob * info_here;

        if depth_left == 0 {
            return Ok(());
        }
        for &a in &live_actions {
            let chosen = self.actions[a].clone();
            for pattern in 0..(1usize << chosen.len()) {
                let mut child: Vec<f64> = posterior
                    .iter()
                    .enumerate()
                    .map(|(s, &w)| w * self.pattern_likelihood(s, &chosen, pattern))
                    .collect();
                let mass: f64 = child.iter().sum();
                if mass <= 0.0 {
                    continue;
                }
                for w in &mut child {
                    *w /= mass;
                }
                self.visit(child, node_prob * p_act[a] * mass, depth_left - 1)?;
            }
        }
        Ok(())
    }

    fn is_in_astar(&self, s: usize, j: usize) -> bool {
        self.actions[self.astar[s]].contains(&j)
    }

    /// Probability of the given 0/1 outcome pattern on `chosen` under atom s.
    fn pattern_likelihood(&self, s: usize, chosen: &[usize], pattern: usize) -> f64 {
        let theta = &self.thetas[s];
        chosen
            .iter()
            .enumerate()
            .map(|(pos, &j)| {
                if pattern >> pos & 1 == 1 {
                    theta.get(j)
                } else {
                    1.0 - theta.get(j)
                }
            })
            .product()
    }
}

/// The instances shipped with the acceptance suite: small enough to walk to
/// depth 3 in well under a second, varied enough to exercise asymmetric
/// priors and a matching-structured feasible set.
pub fn packaged_instances() -> Vec<DiscreteInstance> {
    let theta = |v: Vec<f64>| ThetaVector::new(v).expect("valid theta");
    vec![
        DiscreteInstance {
            label: "two_options_mirror_prior".into(),
            set: FeasibleSet::TopM { d: 2, m: 1 },
            support: vec![theta(vec![0.8, 0.2]), theta(vec![0.2, 0.8])],
            prior: vec![0.5, 0.5],
        },
        DiscreteInstance {
            label: "four_options_three_atoms".into(),
            set: FeasibleSet::TopM { d: 4, m: 2 },
            support: vec![
                theta(vec![0.9, 0.6, 0.3, 0.1]),
                theta(vec![0.2, 0.8, 0.5, 0.4]),
                theta(vec![0.4, 0.3, 0.7, 0.6]),
            ],
            prior: vec![0.4, 0.35, 0.25],
        },
        DiscreteInstance {
            label: "two_by_two_assignment".into(),
            set: FeasibleSet::Assignment { k: 2 },
            support: vec![
                theta(vec![0.7, 0.2, 0.3, 0.6]),
                theta(vec![0.2, 0.7, 0.8, 0.1]),
                theta(vec![0.5, 0.5, 0.4, 0.45]),
            ],
            prior: vec![0.45, 0.35, 0.2],
        },
    ]
}
