//! Capacitated many-to-one matching via min-cost flow.

use crate::domain::ActionVector;
use crate::error::{Error, Result};

use super::check_finite;

/// Assigns each of `n_items` unit-demand items to exactly one node without
/// exceeding node capacities, maximizing total value.
///
/// `theta` is row-major over `(item, node)` pairs. The reduction sends one
/// unit of flow per item through arcs costed `-theta`; among optimal
/// assignments the lexicographically smallest one (items settled in order,
/// lowest node index that preserves the optimum) is returned.
pub fn solve_capacitated(theta: &[f64], n_items: usize, capacities: &[usize]) -> Result<ActionVector> {
    let k = capacities.len();
    if n_items < 1 || k < 1 {
        return Err(Error::InvalidArgument(
            "capacitated set needs at least one item and one node".into(),
        ));
    }
    if theta.len() != n_items * k {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, expected {} items x {} nodes",
            theta.len(),
            n_items,
            k
        )));
    }
    check_finite(theta)?;
    let total_cap: usize = capacities.iter().sum();
    if total_cap < n_items {
        return Err(Error::Infeasible(format!(
            "{n_items} items exceed total capacity {total_cap}"
        )));
    }

    let all_items: Vec<usize> = (0..n_items).collect();
    let opt = flow_value(theta, k, &all_items, capacities);
    let tol = 1e-9 * (1.0 + opt.abs());

    let mut caps = capacities.to_vec();
    let mut indices = Vec::with_capacity(n_items);
    let mut acc = 0.0f64;
    for i in 0..n_items {
        let rest: Vec<usize> = (i + 1..n_items).collect();
        let mut placed = false;
        for r in 0..k {
            if caps[r] == 0 {
                continue;
            }
            caps[r] -= 1;
            let candidate = acc + theta[i * k + r] + flow_value(theta, k, &rest, &caps);
            if candidate >= opt - tol {
                acc += theta[i * k + r];
                indices.push(i * k + r);
                placed = true;
                break;
            }
            caps[r] += 1;
        }
        debug_assert!(placed, "an optimal completion must exist for item {i}");
        if !placed {
            return Err(Error::Infeasible(format!("no optimal completion for item {i}")));
        }
    }
    ActionVector::from_indices(n_items * k, &indices)
}

/// Best achievable total value assigning exactly the given items under the
/// given residual capacities (infinite capacity slack assumed checked).
fn flow_value(theta: &[f64], k: usize, items: &[usize], caps: &[usize]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    // Nodes: 0 source, 1..=n items, n+1..=n+k right nodes, n+k+1 sink.
    let n = items.len();
    let sink = n + k + 1;
    let mut g = Graph::new(sink + 1);
    for (slot, _) in items.iter().enumerate() {
        g.add(0, 1 + slot, 1, 0.0);
    }
    for (slot, &item) in items.iter().enumerate() {
        for r in 0..k {
            g.add(1 + slot, 1 + n + r, 1, -theta[item * k + r]);
        }
    }
    for (r, &c) in caps.iter().enumerate() {
        if c > 0 {
            g.add(1 + n + r, sink, c as i64, 0.0);
        }
    }
    let (flow, cost) = g.min_cost_max_flow(0, sink);
    debug_assert_eq!(flow, n as i64, "complete bipartite graph with enough capacity");
    -cost
}

struct Edge {
    to: usize,
    rev: usize,
    cap: i64,
    cost: f64,
}

struct Graph {
    adj: Vec<Vec<Edge>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Graph { adj: (0..n).map(|_| Vec::new()).collect() }
    }

    fn add(&mut self, from: usize, to: usize, cap: i64, cost: f64) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge { to, rev: rev_from, cap, cost });
        self.adj[to].push(Edge { to: from, rev: rev_to, cap: 0, cost: -cost });
    }

    /// Successive shortest augmenting paths with Bellman-Ford label
    /// correction (costs may be negative; the graph is acyclic in the
    /// forward direction so no negative cycles arise).
    fn min_cost_max_flow(&mut self, s: usize, t: usize) -> (i64, f64) {
        let n = self.adj.len();
        let mut flow = 0i64;
        let mut cost = 0.0f64;
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            let mut in_queue = vec![false; n];
            dist[s] = 0.0;
            let mut queue = std::collections::VecDeque::new();
            queue.push_back(s);
            in_queue[s] = true;
            while let Some(u) = queue.pop_front() {
                in_queue[u] = false;
                let du = dist[u];
                for (ei, e) in self.adj[u].iter().enumerate() {
                    if e.cap > 0 && du + e.cost < dist[e.to] - 1e-15 {
                        dist[e.to] = du + e.cost;
                        prev[e.to] = Some((u, ei));
                        if !in_queue[e.to] {
                            queue.push_back(e.to);
                            in_queue[e.to] = true;
                        }
                    }
                }
            }
            if prev[t].is_none() {
                return (flow, cost);
            }
            let mut push = i64::MAX;
            let mut v = t;
            while let Some((u, ei)) = prev[v] {
                push = push.min(self.adj[u][ei].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, ei)) = prev[v] {
                self.adj[u][ei].cap -= push;
                let rev = self.adj[u][ei].rev;
                cost += self.adj[u][ei].cost * push as f64;
                self.adj[v][rev].cap += push;
                v = u;
            }
            flow += push;
        }
    }
}
