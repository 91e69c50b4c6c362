//! Exact argmax solvers over structured action sets.
//!
//! Every solver returns a true optimum of `sum_j a_j * theta_j` over its
//! feasible set, with deterministic tie-breaking: among optimal actions, the
//! one whose sorted chosen-index sequence is lexicographically smallest wins
//! (for the multiple-knapsack set the documented preference is "assign the
//! item, lower knapsack first", which orders prefix ties). Ties have
//! probability zero under continuous posterior draws, but the rule keeps
//! replays and tests bit-stable.
//!
//! `enumerate_feasible` provides the brute-force counterpart used by oracle
//! tests and by the exact information-theoretic checks.

mod flow;
mod hungarian;
mod knapsack;

pub use flow::solve_capacitated;
pub use hungarian::solve_assignment;
pub use knapsack::{solve_multiple_knapsack, KnapsackSolution};

use crate::domain::ActionVector;
use crate::error::{Error, Result};

/// The structured action sets the solvers understand.
///
/// Option indexing is row-major for the bipartite variants: the pair
/// `(item i, right node r)` is option `i * n_right + r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeasibleSet {
    /// All subsets of exactly `m` of the `d` options.
    TopM { d: usize, m: usize },
    /// Perfect matchings on a `k` by `k` bipartite graph.
    Assignment { k: usize },
    /// Each of `n_items` unit-demand items goes to exactly one node; node `r`
    /// accepts at most `capacities[r]` items.
    Capacitated { n_items: usize, capacities: Vec<usize> },
    /// Each item goes to at most one knapsack; knapsack `r` holds total
    /// weight at most `capacities[r]`. Items may remain unassigned.
    MultipleKnapsack { weights: Vec<u64>, capacities: Vec<u64> },
    /// An explicit list of allowed actions.
    Explicit { actions: Vec<ActionVector> },
}

impl FeasibleSet {
    /// Number of options an action over this set must cover.
    pub fn d(&self) -> usize {
        match self {
            FeasibleSet::TopM { d, .. } => *d,
            FeasibleSet::Assignment { k } => k * k,
            FeasibleSet::Capacitated { n_items, capacities } => n_items * capacities.len(),
            FeasibleSet::MultipleKnapsack { weights, capacities } => {
                weights.len() * capacities.len()
            }
            FeasibleSet::Explicit { actions } => actions.first().map_or(0, |a| a.len()),
        }
    }

    /// The fixed batch size, where the set has one.
    ///
    /// Multiple-knapsack actions may leave items unassigned and explicit sets
    /// are unconstrained, so those report `None`.
    pub fn batch_size(&self) -> Option<usize> {
        match self {
            FeasibleSet::TopM { m, .. } => Some(*m),
            FeasibleSet::Assignment { k } => Some(*k),
            FeasibleSet::Capacitated { n_items, .. } => Some(*n_items),
            FeasibleSet::MultipleKnapsack { .. } | FeasibleSet::Explicit { .. } => None,
        }
    }

    /// Structural sanity of the set itself.
    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::TopM { d, m } => {
                if *m < 1 || m > d {
                    return Err(Error::InvalidArgument(format!(
                        "top-m needs 1 <= m <= d, got m={m}, d={d}"
                    )));
                }
            }
            FeasibleSet::Assignment { k } => {
                if *k < 1 {
                    return Err(Error::InvalidArgument("assignment needs k >= 1".into()));
                }
            }
            FeasibleSet::Capacitated { n_items, capacities } => {
                if *n_items < 1 || capacities.is_empty() {
                    return Err(Error::InvalidArgument(
                        "capacitated set needs at least one item and one node".into(),
                    ));
                }
            }
            FeasibleSet::MultipleKnapsack { weights, capacities } => {
                if weights.is_empty() || capacities.is_empty() {
                    return Err(Error::InvalidArgument(
                        "knapsack set needs at least one item and one knapsack".into(),
                    ));
                }
                if weights.iter().any(|&w| w == 0) {
                    return Err(Error::InvalidArgument("item weights must be >= 1".into()));
                }
            }
            FeasibleSet::Explicit { actions } => {
                if actions.is_empty() {
                    return Err(Error::InvalidArgument("explicit set is empty".into()));
                }
                let d = actions[0].len();
                if actions.iter().any(|a| a.len() != d) {
                    return Err(Error::DimensionMismatch(
                        "explicit actions disagree on the option count".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks that `action` is a member of this feasible set.
    pub fn validate_action(&self, action: &ActionVector) -> Result<()> {
        if action.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "action covers {} options, set has {}",
                action.len(),
                self.d()
            )));
        }
        match self {
            FeasibleSet::TopM { m, .. } => {
                let c = action.count_chosen();
                if c != *m {
                    return Err(Error::Infeasible(format!("action selects {c} options, need {m}")));
                }
            }
            FeasibleSet::Assignment { k } => {
                let k = *k;
                let mut col_used = vec![false; k];
                for i in 0..k {
                    let row: Vec<usize> =
                        (0..k).filter(|&c| action.get(i * k + c)).collect();
                    if row.len() != 1 {
                        return Err(Error::Infeasible(format!(
                            "row {i} matched {} times, need exactly 1",
                            row.len()
                        )));
                    }
                    if col_used[row[0]] {
                        return Err(Error::Infeasible(format!("column {} matched twice", row[0])));
                    }
                    col_used[row[0]] = true;
                }
            }
            FeasibleSet::Capacitated { n_items, capacities } => {
                let k = capacities.len();
                let mut load = vec![0usize; k];
                for i in 0..*n_items {
                    let picks: Vec<usize> =
                        (0..k).filter(|&r| action.get(i * k + r)).collect();
                    if picks.len() != 1 {
                        return Err(Error::Infeasible(format!(
                            "item {i} assigned {} times, need exactly 1",
                            picks.len()
                        )));
                    }
                    load[picks[0]] += 1;
                }
                for (r, (&l, &c)) in load.iter().zip(capacities).enumerate() {
                    if l > c {
                        return Err(Error::Infeasible(format!(
                            "node {r} holds {l} items over capacity {c}"
                        )));
                    }
                }
            }
            FeasibleSet::MultipleKnapsack { weights, capacities } => {
                let k = capacities.len();
                let mut load = vec![0u64; k];
                for (i, &w) in weights.iter().enumerate() {
                    let picks: Vec<usize> =
                        (0..k).filter(|&r| action.get(i * k + r)).collect();
                    if picks.len() > 1 {
                        return Err(Error::Infeasible(format!(
                            "item {i} assigned {} times, need at most 1",
                            picks.len()
                        )));
                    }
                    if let Some(&r) = picks.first() {
                        load[r] += w;
                    }
                }
                for (r, (&l, &c)) in load.iter().zip(capacities).enumerate() {
                    if l > c {
                        return Err(Error::Infeasible(format!(
                            "knapsack {r} holds weight {l} over capacity {c}"
                        )));
                    }
                }
            }
            FeasibleSet::Explicit { actions } => {
                if !actions.contains(action) {
                    return Err(Error::Infeasible("action not in the explicit list".into()));
                }
            }
        }
        Ok(())
    }

    /// Exact argmax of `<a, theta>` over this set.
    pub fn solve(&self, theta: &[f64]) -> Result<ActionVector> {
        self.validate()?;
        let action = match self {
            FeasibleSet::TopM { d, m } => {
                check_dim(theta, *d)?;
                solve_top_m(theta, *m)?
            }
            FeasibleSet::Assignment { k } => solve_assignment(theta, *k)?,
            FeasibleSet::Capacitated { n_items, capacities } => {
                solve_capacitated(theta, *n_items, capacities)?
            }
            FeasibleSet::MultipleKnapsack { weights, capacities } => {
                solve_multiple_knapsack(theta, weights, capacities)?.action
            }
            FeasibleSet::Explicit { actions } => {
                check_dim(theta, self.d())?;
                check_finite(theta)?;
                let mut best: Option<(&ActionVector, f64)> = None;
                for a in actions {
                    let v: f64 = a.iter_chosen().map(|j| theta[j]).sum();
                    best = match best {
                        None => Some((a, v)),
                        Some((ba, bv)) => {
                            if v > bv
                                || (v == bv && a.cmp_chosen(ba) == std::cmp::Ordering::Less)
                            {
                                Some((a, v))
                            } else {
                                Some((ba, bv))
                            }
                        }
                    };
                }
                best.expect("validated non-empty").0.clone()
            }
        };
        debug_assert!(
            self.validate_action(&action).is_ok(),
            "solver returned an infeasible action for {self:?}"
        );
        Ok(action)
    }
}

/// Selects the `m` options with the largest values; ties go to the lowest
/// index.
pub fn solve_top_m(theta: &[f64], m: usize) -> Result<ActionVector> {
    let d = theta.len();
    if m < 1 || m > d {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    check_finite(theta)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_unstable_by(|&a, &b| {
        theta[b].partial_cmp(&theta[a]).expect("finite values").then(a.cmp(&b))
    });
    ActionVector::from_indices(d, &order[..m])
}

/// Lists every action in the set, in the same preference order the solvers
/// use for tie-breaking. Errors once the count exceeds `limit`.
pub fn enumerate_feasible(set: &FeasibleSet, limit: usize) -> Result<Vec<ActionVector>> {
    set.validate()?;
    let mut out: Vec<ActionVector> = Vec::new();
    match set {
        FeasibleSet::TopM { d, m } => {
            let mut chosen: Vec<usize> = Vec::with_capacity(*m);
            combinations_rec(*d, *m, 0, &mut chosen, &mut out, limit)?;
        }
        FeasibleSet::Assignment { k } => {
            let mut cols: Vec<usize> = Vec::with_capacity(*k);
            let mut used = vec![false; *k];
            permutations_rec(*k, &mut cols, &mut used, &mut out, limit)?;
        }
        FeasibleSet::Capacitated { n_items, capacities } => {
            let mut caps = capacities.clone();
            let mut picks: Vec<usize> = Vec::with_capacity(*n_items);
            assign_rec(*n_items, &mut caps, &mut picks, false, &[], &mut out, limit)?;
        }
        FeasibleSet::MultipleKnapsack { weights, capacities } => {
            let mut caps: Vec<usize> = capacities.iter().map(|&c| c as usize).collect();
            let mut picks: Vec<usize> = Vec::with_capacity(weights.len());
            assign_rec(weights.len(), &mut caps, &mut picks, true, weights, &mut out, limit)?;
        }
        FeasibleSet::Explicit { actions } => {
            if actions.len() > limit {
                return Err(Error::EnumerationLimit { limit });
            }
            out = actions.clone();
        }
    }
    Ok(out)
}

fn check_dim(theta: &[f64], d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, set has {d} options",
            theta.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(theta: &[f64]) -> Result<()> {
    if let Some(j) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite value at option {j}")));
    }
    Ok(())
}

fn push_limited(
    out: &mut Vec<ActionVector>,
    action: ActionVector,
    limit: usize,
) -> Result<()> {
    if out.len() >= limit {
        return Err(Error::EnumerationLimit { limit });
    }
    out.push(action);
    Ok(())
}

fn combinations_rec(
    d: usize,
    m: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<ActionVector>,
    limit: usize,
) -> Result<()> {
    if chosen.len() == m {
        return push_limited(out, ActionVector::from_indices(d, chosen)?, limit);
    }
    let need = m - chosen.len();
    for j in start..=d.saturating_sub(need) {
        chosen.push(j);
        combinations_rec(d, m, j + 1, chosen, out, limit)?;
        chosen.pop();
    }
    Ok(())
}

fn permutations_rec(
    k: usize,
    cols: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<ActionVector>,
    limit: usize,
) -> Result<()> {
    if cols.len() == k {
        let indices: Vec<usize> = cols.iter().enumerate().map(|(i, &c)| i * k + c).collect();
        return push_limited(out, ActionVector::from_indices(k * k, &indices)?, limit);
    }
    for c in 0..k {
        if !used[c] {
            used[c] = true;
            cols.push(c);
            permutations_rec(k, cols, used, out, limit)?;
            cols.pop();
            used[c] = false;
        }
    }
    Ok(())
}

/// Enumerates item-to-node assignments under capacities. `allow_skip` adds a
/// "leave unassigned" branch after the node branches, and `weights` (same
/// length as the item count when `allow_skip`) gives each item's load;
/// unit loads otherwise. `usize::MAX` marks a skipped item in `picks`.
fn assign_rec(
    n_items: usize,
    caps: &mut [usize],
    picks: &mut Vec<usize>,
    allow_skip: bool,
    weights: &[u64],
    out: &mut Vec<ActionVector>,
    limit: usize,
) -> Result<()> {
    if picks.len() == n_items {
        let k = caps.len();
        let indices: Vec<usize> = picks
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != usize::MAX)
            .map(|(i, &r)| i * k + r)
            .collect();
        return push_limited(out, ActionVector::from_indices(n_items * k, &indices)?, limit);
    }
    let i = picks.len();
    let w = if allow_skip { weights[i] as usize } else { 1 };
    for r in 0..caps.len() {
        if caps[r] >= w {
            caps[r] -= w;
            picks.push(r);
            assign_rec(n_items, caps, picks, allow_skip, weights, out, limit)?;
            picks.pop();
            caps[r] += w;
        }
    }
    if allow_skip {
        picks.push(usize::MAX);
        assign_rec(n_items, caps, picks, allow_skip, weights, out, limit)?;
        picks.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_m_picks_largest_values() {
        let a = solve_top_m(&[0.3, 0.9, 0.5], 2).unwrap();
        assert_eq!(a.chosen(), vec![1, 2]);
    }

    #[test]
    fn top_m_breaks_ties_toward_low_indices() {
        let a = solve_top_m(&[0.5, 0.5, 0.1], 1).unwrap();
        assert_eq!(a.chosen(), vec![0]);
        let a = solve_top_m(&[0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(a.chosen(), vec![0, 1]);
    }

    #[test]
    fn top_m_rejects_bad_m_and_nan() {
        assert!(solve_top_m(&[0.1, 0.2], 0).is_err());
        assert!(solve_top_m(&[0.1, 0.2], 3).is_err());
        assert!(solve_top_m(&[f64::NAN, 0.2], 1).is_err());
    }

    #[test]
    fn enumerate_counts_match_closed_forms() {
        let top = enumerate_feasible(&FeasibleSet::TopM { d: 4, m: 2 }, 100).unwrap();
        assert_eq!(top.len(), 6);
        let asg = enumerate_feasible(&FeasibleSet::Assignment { k: 3 }, 100).unwrap();
        assert_eq!(asg.len(), 6);
    }

    #[test]
    fn enumerate_respects_limit() {
        let err = enumerate_feasible(&FeasibleSet::TopM { d: 10, m: 5 }, 100);
        assert!(matches!(err, Err(Error::EnumerationLimit { limit: 100 })));
    }

    #[test]
    fn enumerate_capacitated_filters_by_capacity() {
        let set = FeasibleSet::Capacitated { n_items: 3, capacities: vec![1, 2] };
        let actions = enumerate_feasible(&set, 100).unwrap();
        // Of the 2^3 assignments, only those with exactly one item on node 0
        // respect both capacities.
        assert_eq!(actions.len(), 3);
        for a in &actions {
            set.validate_action(a).unwrap();
        }
    }

    #[test]
    fn enumerate_knapsack_includes_skips() {
        let set = FeasibleSet::MultipleKnapsack { weights: vec![1, 1], capacities: vec![1] };
        let actions = enumerate_feasible(&set, 100).unwrap();
        // item0 placed, item1 placed, or neither; both at once does not fit.
        assert_eq!(actions.len(), 3);
    }

    #[test]
    fn explicit_solve_breaks_ties_lexicographically() {
        let d = 3;
        let actions = vec![
            ActionVector::from_indices(d, &[1, 2]).unwrap(),
            ActionVector::from_indices(d, &[0, 2]).unwrap(),
            ActionVector::from_indices(d, &[0, 1]).unwrap(),
        ];
        let set = FeasibleSet::Explicit { actions };
        let best = set.solve(&[0.4, 0.4, 0.4]).unwrap();
        assert_eq!(best.chosen(), vec![0, 1]);
    }

    #[test]
    fn feasibility_validator_catches_violations() {
        let set = FeasibleSet::TopM { d: 4, m: 2 };
        let bad = ActionVector::from_indices(4, &[0]).unwrap();
        assert!(set.validate_action(&bad).is_err());

        let set = FeasibleSet::Assignment { k: 2 };
        let bad = ActionVector::from_indices(4, &[0, 2]).unwrap(); // both rows -> col 0
        assert!(set.validate_action(&bad).is_err());
        let good = ActionVector::from_indices(4, &[0, 3]).unwrap();
        assert!(set.validate_action(&good).is_ok());
    }
}
