//! Exact multiple-knapsack assignment by branch and bound.

use crate::domain::ActionVector;
use crate::error::{Error, Result};

use super::check_finite;

/// Result of a multiple-knapsack solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSolution {
    pub action: ActionVector,
    /// Knapsack index per item, `None` when the item stays out.
    pub assignment: Vec<Option<usize>>,
    /// Items left out, in increasing index order.
    pub unassigned: Vec<usize>,
    /// Total value of the assigned items.
    pub value: f64,
    /// True when every item was assigned.
    pub complete: bool,
}

/// The heuristic incumbent is admitted at this margin below its own value so
/// exact ties are still resolved by the search order, not by the heuristic.
const SEED_MARGIN: f64 = 1e-9;

/// Assigns items to knapsacks maximizing total value.
///
/// When the weights can all be packed, the optimum is taken over complete
/// assignments; otherwise items may be left out (the caller carries them
/// over) and the optimum is over all capacity-respecting partial
/// assignments. Ties prefer settling each item in index order into the
/// lowest-index knapsack, with "leave out" ranked last.
///
/// Depth-first branch and bound; nodes are pruned against the cheaper of a
/// fractional greedy relaxation pooling the remaining capacity and a
/// Lagrangian relaxation whose capacity prices are tuned once by
/// subgradient descent. A locally improved greedy assignment seeds the
/// incumbent, interchangeable items (equal weight and equal value row) are
/// restricted to non-decreasing knapsack indices, and complete searches
/// drop branches whose remaining weight cannot fit.
pub fn solve_multiple_knapsack(
    theta: &[f64],
    weights: &[u64],
    capacities: &[u64],
) -> Result<KnapsackSolution> {
    let n = weights.len();
    let k = capacities.len();
    if n < 1 || k < 1 {
        return Err(Error::InvalidArgument(
            "knapsack set needs at least one item and one knapsack".into(),
        ));
    }
    if weights.iter().any(|&w| w == 0) {
        return Err(Error::InvalidArgument("item weights must be >= 1".into()));
    }
    if theta.len() != n * k {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, expected {} items x {} knapsacks",
            theta.len(),
            n,
            k
        )));
    }
    check_finite(theta)?;

    let complete_exists = packing_exists(weights, capacities);

    // Density order for the fractional bound: each item counts at most its
    // best nonnegative per-knapsack value.
    let best_value: Vec<f64> = (0..n)
        .map(|i| (0..k).map(|r| theta[i * k + r]).fold(0.0f64, f64::max))
        .collect();
    let mut density_order: Vec<usize> = (0..n).collect();
    density_order.sort_by(|&a, &b| {
        let da = best_value[a] / weights[a] as f64;
        let db = best_value[b] / weights[b] as f64;
        db.partial_cmp(&da).expect("finite").then(a.cmp(&b))
    });
    let suffix_weight: Vec<u64> = {
        let mut s = vec![0u64; n + 1];
        for i in (0..n).rev() {
            s[i] = s[i + 1] + weights[i];
        }
        s
    };
    let suffix_max_weight: Vec<u64> = {
        let mut s = vec![0u64; n + 1];
        for i in (0..n).rev() {
            s[i] = s[i + 1].max(weights[i]);
        }
        s
    };
    let same_as_prev: Vec<bool> = (0..n)
        .map(|i| {
            i > 0
                && weights[i] == weights[i - 1]
                && theta[i * k..(i + 1) * k] == theta[(i - 1) * k..i * k]
        })
        .collect();

    let seed = heuristic_assignment(theta, weights, capacities, &density_order, complete_exists)
        .map(|mut picks| {
            improve_assignment(theta, weights, capacities, &mut picks, complete_exists);
            let value: f64 = picks
                .iter()
                .enumerate()
                .filter(|&(_, &r)| r != usize::MAX)
                .map(|(i, &r)| theta[i * k + r])
                .sum();
            (picks, value)
        });

    let reachable = seed.as_ref().map_or(0.0, |(_, v)| *v);
    let pi = capacity_prices(theta, weights, capacities, reachable);
    let suffix_alpha: Vec<f64> = {
        let mut s = vec![0.0f64; n + 1];
        for i in (0..n).rev() {
            let w = weights[i] as f64;
            let reduced =
                (0..k).map(|r| theta[i * k + r] / w - pi[r]).fold(0.0f64, f64::max);
            s[i] = s[i + 1] + w * reduced;
        }
        s
    };
    let priced_bins: Vec<(usize, f64)> =
        pi.iter().enumerate().filter(|&(_, &p)| p > 1e-15).map(|(r, &p)| (r, p)).collect();

    let mut search = Search {
        theta,
        weights,
        n,
        k,
        require_complete: complete_exists,
        best_value: &best_value,
        density_order: &density_order,
        suffix_weight: &suffix_weight,
        suffix_max_weight: &suffix_max_weight,
        same_as_prev: &same_as_prev,
        suffix_alpha: &suffix_alpha,
        priced_bins: &priced_bins,
        caps: capacities.to_vec(),
        picks: Vec::with_capacity(n),
        incumbent_value: f64::NEG_INFINITY,
        incumbent: None,
    };
    if let Some((picks, value)) = seed {
        search.incumbent_value = value - SEED_MARGIN;
        search.incumbent = Some(picks);
    }
    search.dfs(0, 0.0);

    let picks = search.incumbent.expect("search space always contains a leaf");
    let assignment: Vec<Option<usize>> =
        picks.iter().map(|&r| if r == usize::MAX { None } else { Some(r) }).collect();
    let unassigned: Vec<usize> =
        assignment.iter().enumerate().filter(|(_, a)| a.is_none()).map(|(i, _)| i).collect();
    let indices: Vec<usize> = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|r| i * k + r))
        .collect();
    let value: f64 = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|r| theta[i * k + r]))
        .sum();
    Ok(KnapsackSolution {
        action: ActionVector::from_indices(n * k, &indices)?,
        complete: unassigned.is_empty(),
        assignment,
        unassigned,
        value,
    })
}

struct Search<'a> {
    theta: &'a [f64],
    weights: &'a [u64],
    n: usize,
    k: usize,
    require_complete: bool,
    best_value: &'a [f64],
    density_order: &'a [usize],
    suffix_weight: &'a [u64],
    suffix_max_weight: &'a [u64],
    same_as_prev: &'a [bool],
    suffix_alpha: &'a [f64],
    priced_bins: &'a [(usize, f64)],
    caps: Vec<u64>,
    picks: Vec<usize>,
    incumbent_value: f64,
    incumbent: Option<Vec<usize>>,
}

impl Search<'_> {
    fn dfs(&mut self, item: usize, value: f64) {
        if item == self.n {
            // Strict improvement keeps the first-found optimum, which the
            // branch order makes the preferred one.
            if value > self.incumbent_value {
                self.incumbent_value = value;
                self.incumbent = Some(self.picks.clone());
            }
            return;
        }
        if self.upper_bound(item, value).min(self.dual_bound(item, value))
            <= self.incumbent_value
        {
            return;
        }
        if self.require_complete {
            let residual: u64 = self.caps.iter().sum();
            if self.suffix_weight[item] > residual {
                return;
            }
            let widest = self.caps.iter().copied().max().unwrap_or(0);
            if self.suffix_max_weight[item] > widest {
                return;
            }
        }
        let w = self.weights[item];
        // Items equal in weight and value row are interchangeable, so force
        // their knapsack indices to be non-decreasing ("out" sorts last).
        let first_bin = if self.same_as_prev[item] { self.picks[item - 1] } else { 0 };
        if first_bin != usize::MAX {
            for r in first_bin..self.k {
                if self.caps[r] >= w {
                    self.caps[r] -= w;
                    self.picks.push(r);
                    self.dfs(item + 1, value + self.theta[item * self.k + r]);
                    self.picks.pop();
                    self.caps[r] += w;
                }
            }
        }
        if !self.require_complete {
            self.picks.push(usize::MAX);
            self.dfs(item + 1, value);
            self.picks.pop();
        }
    }

    /// Priced relaxation: each remaining item contributes its best value
    /// net of capacity rent, each priced knapsack charges rent on its
    /// remaining room. Valid for any nonnegative prices by weak duality;
    /// tight where demand piles onto few knapsacks, which is exactly where
    /// the pooled fractional bound goes blind.
    fn dual_bound(&self, item: usize, value: f64) -> f64 {
        let rest = self.suffix_weight[item] as f64;
        let mut ub = value + self.suffix_alpha[item];
        for &(r, p) in self.priced_bins {
            ub += (self.caps[r] as f64).min(rest) * p;
        }
        ub
    }

    /// Fractional greedy relaxation: remaining items, best per-item values,
    /// pooled remaining capacity.
    fn upper_bound(&self, item: usize, value: f64) -> f64 {
        let mut room: f64 = self.caps.iter().sum::<u64>() as f64;
        let mut ub = value;
        for &i in self.density_order {
            if i < item {
                continue;
            }
            let b = self.best_value[i];
            if b <= 0.0 || room <= 0.0 {
                break;
            }
            let w = self.weights[i] as f64;
            if room >= w {
                ub += b;
                room -= w;
            } else {
                ub += b * room / w;
                room = 0.0;
            }
        }
        ub
    }
}

/// Tunes per-knapsack capacity prices by projected subgradient descent on
/// the Lagrangian dual. Starting from zero prices (worth the plain
/// sum-of-best bound), each step discounts every item by the current rent,
/// charges the rent on capacity, and moves prices against the slack with a
/// Polyak step toward `reachable`, a known achievable value; the best
/// iterate wins. Any iterate gives a valid bound, so accuracy here only
/// affects pruning power.
fn capacity_prices(
    theta: &[f64],
    weights: &[u64],
    capacities: &[u64],
    reachable: f64,
) -> Vec<f64> {
    let n = weights.len();
    let k = capacities.len();
    let total_weight: f64 = weights.iter().map(|&w| w as f64).sum();
    // A knapsack never holds more than the total item weight, so rent is
    // only charged on the usable part of its capacity.
    let usable: Vec<f64> = capacities.iter().map(|&c| (c as f64).min(total_weight)).collect();
    let mut pi = vec![0.0f64; k];
    let mut best_pi = pi.clone();
    let mut best_bound = f64::INFINITY;
    for _ in 0..120 {
        let mut bound: f64 = pi.iter().zip(&usable).map(|(p, c)| p * c).sum();
        let mut slack = usable.clone();
        for i in 0..n {
            let w = weights[i] as f64;
            let mut top = 0.0f64;
            let mut top_r = None;
            for r in 0..k {
                let reduced = theta[i * k + r] / w - pi[r];
                if reduced > top {
                    top = reduced;
                    top_r = Some(r);
                }
            }
            if let Some(r) = top_r {
                bound += w * top;
                slack[r] -= w;
            }
        }
        if bound < best_bound {
            best_bound = bound;
            best_pi = pi.clone();
        }
        let gap = bound - reachable;
        // Projection: components pinned at zero price with positive slack
        // cannot move, so they stay out of the step size.
        let norm2: f64 = slack
            .iter()
            .zip(&pi)
            .map(|(g, p)| if *p > 0.0 || *g < 0.0 { g * g } else { 0.0 })
            .sum();
        if gap < 1e-9 || norm2 < 1e-18 {
            break;
        }
        let step = 0.7 * gap / norm2;
        for r in 0..k {
            pi[r] = (pi[r] - step * slack[r]).max(0.0);
        }
    }
    best_pi
}

/// Hill-climbs an assignment with single relocations and pairwise swaps
/// until neither finds a gain. Complete assignments stay complete.
fn improve_assignment(
    theta: &[f64],
    weights: &[u64],
    capacities: &[u64],
    picks: &mut [usize],
    require_complete: bool,
) {
    let n = weights.len();
    let k = capacities.len();
    let mut resid: Vec<u64> = capacities.to_vec();
    for i in 0..n {
        if picks[i] != usize::MAX {
            resid[picks[i]] -= weights[i];
        }
    }
    let held = |i: usize, r: usize| if r == usize::MAX { 0.0 } else { theta[i * k + r] };
    for _ in 0..60 {
        let mut improved = false;
        for i in 0..n {
            let cur = picks[i];
            let mut best_r = cur;
            let mut best_gain = 1e-12;
            for r in 0..k {
                if r != cur && resid[r] >= weights[i] {
                    let gain = theta[i * k + r] - held(i, cur);
                    if gain > best_gain {
                        best_gain = gain;
                        best_r = r;
                    }
                }
            }
            if !require_complete && cur != usize::MAX && -held(i, cur) > best_gain {
                best_r = usize::MAX;
            }
            if best_r != cur {
                if cur != usize::MAX {
                    resid[cur] += weights[i];
                }
                if best_r != usize::MAX {
                    resid[best_r] -= weights[i];
                }
                picks[i] = best_r;
                improved = true;
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (bi, bj) = (picks[i], picks[j]);
                if bi == bj || bi == usize::MAX || bj == usize::MAX {
                    continue;
                }
                if resid[bi] + weights[i] < weights[j] || resid[bj] + weights[j] < weights[i]
                {
                    continue;
                }
                let gain = theta[i * k + bj] + theta[j * k + bi]
                    - theta[i * k + bi]
                    - theta[j * k + bj];
                if gain > 1e-12 {
                    resid[bi] = resid[bi] + weights[i] - weights[j];
                    resid[bj] = resid[bj] + weights[j] - weights[i];
                    picks[i] = bj;
                    picks[j] = bi;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Builds a feasible assignment to seed the incumbent. Complete mode walks
/// items heaviest first and keeps the best-value fit, retrying with the
/// roomiest fit when value greed dead-ends; partial mode walks the density
/// order and skips items with no positive-value fit.
fn heuristic_assignment(
    theta: &[f64],
    weights: &[u64],
    capacities: &[u64],
    density_order: &[usize],
    require_complete: bool,
) -> Option<Vec<usize>> {
    let n = weights.len();
    let k = capacities.len();
    let picks = if require_complete {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
        complete_greedy(theta, weights, capacities, &order, true)
            .or_else(|| complete_greedy(theta, weights, capacities, &order, false))?
    } else {
        let mut picks = vec![usize::MAX; n];
        let mut caps = capacities.to_vec();
        for &i in density_order {
            let mut best: Option<usize> = None;
            for r in 0..k {
                if caps[r] >= weights[i]
                    && theta[i * k + r] > 0.0
                    && best.map_or(true, |b| theta[i * k + r] > theta[i * k + b])
                {
                    best = Some(r);
                }
            }
            if let Some(r) = best {
                caps[r] -= weights[i];
                picks[i] = r;
            }
        }
        picks
    };
    Some(picks)
}

fn complete_greedy(
    theta: &[f64],
    weights: &[u64],
    capacities: &[u64],
    order: &[usize],
    by_value: bool,
) -> Option<Vec<usize>> {
    let k = capacities.len();
    let mut caps = capacities.to_vec();
    let mut picks = vec![usize::MAX; weights.len()];
    for &i in order {
        let mut best: Option<usize> = None;
        for r in 0..k {
            if caps[r] < weights[i] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    if by_value {
                        theta[i * k + r] > theta[i * k + b]
                    } else {
                        caps[r] > caps[b]
                    }
                }
            };
            if better {
                best = Some(r);
            }
        }
        let r = best?;
        caps[r] -= weights[i];
        picks[i] = r;
    }
    Some(picks)
}

/// Can every item be packed? Best-fit decreasing settles the easy cases;
/// the rest fall to a depth-first search over items in decreasing weight
/// with a perfect-fit shortcut, a remaining-weight cut, and skipping
/// knapsacks with identical residual capacity.
fn packing_exists(weights: &[u64], capacities: &[u64]) -> bool {
    let total: u64 = weights.iter().sum();
    if total > capacities.iter().sum() {
        return false;
    }
    let mut order: Vec<u64> = weights.to_vec();
    order.sort_unstable_by(|a, b| b.cmp(a));
    if order.first().copied().unwrap_or(0) > capacities.iter().copied().max().unwrap_or(0) {
        return false;
    }
    if best_fit_decreasing(&order, &mut capacities.to_vec()) {
        return true;
    }
    let suffix: Vec<u64> = {
        let mut s = vec![0u64; order.len() + 1];
        for i in (0..order.len()).rev() {
            s[i] = s[i + 1] + order[i];
        }
        s
    };
    let mut caps = capacities.to_vec();
    pack_rec(&order, &suffix, 0, &mut caps)
}

fn best_fit_decreasing(order: &[u64], caps: &mut [u64]) -> bool {
    for &w in order {
        let mut best: Option<usize> = None;
        for r in 0..caps.len() {
            if caps[r] >= w && best.map_or(true, |b| caps[r] < caps[b]) {
                best = Some(r);
            }
        }
        match best {
            Some(r) => caps[r] -= w,
            None => return false,
        }
    }
    true
}

fn pack_rec(weights: &[u64], suffix: &[u64], i: usize, caps: &mut [u64]) -> bool {
    if i == weights.len() {
        return true;
    }
    if suffix[i] > caps.iter().sum() {
        return false;
    }
    let w = weights[i];
    // The largest remaining item can always take a knapsack it fills
    // exactly: any packing can be rearranged to do so.
    if let Some(r) = (0..caps.len()).find(|&r| caps[r] == w) {
        caps[r] -= w;
        let ok = pack_rec(weights, suffix, i + 1, caps);
        caps[r] += w;
        return ok;
    }
    let mut tried: Vec<u64> = Vec::new();
    for r in 0..caps.len() {
        if caps[r] >= w && !tried.contains(&caps[r]) {
            tried.push(caps[r]);
            caps[r] -= w;
            if pack_rec(weights, suffix, i + 1, caps) {
                caps[r] += w;
                return true;
            }
            caps[r] += w;
        }
    }
    false
}
