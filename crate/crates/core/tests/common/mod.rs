//! Shared oracles for the integration tests: Kolmogorov-Smirnov machinery,
//! quadrature posteriors, and small distributional helpers. Everything
//! here is computed independently of the library paths under test.

#![allow(dead_code)]

use combi_bandit::domain::{reward, ActionVector, ThetaVector};
use combi_bandit::solvers::{enumerate_feasible, FeasibleSet};
use statrs::function::gamma::ln_gamma;

/// Exhaustive argmax over the feasible set with the library's tie-break:
/// highest value, then lexicographically smallest chosen set.
pub fn enumeration_argmax(set: &FeasibleSet, theta: &[f64]) -> (ActionVector, f64) {
    let actions = enumerate_feasible(set, 1_000_000).unwrap();
    let tv = ThetaVector::new(theta.iter().map(|x| x.clamp(0.0, 1.0)).collect()).unwrap();
    let mut best: Option<(ActionVector, f64)> = None;
    for action in actions {
        let value = reward(&action, &tv).unwrap();
        match &best {
            None => best = Some((action, value)),
            Some((b, bv)) => {
                if value > bv + 1e-12
                    || ((value - bv).abs() <= 1e-12
                        && action.cmp_chosen(b) == std::cmp::Ordering::Less)
                {
                    best = Some((action, value));
                }
            }
        }
    }
    best.unwrap()
}

/// Brute-force two-phase multiple-knapsack oracle: prefer complete
/// packings, maximize total value. Returns (value, complete).
pub fn knapsack_oracle(theta: &[f64], weights: &[u64], capacities: &[u64]) -> (f64, bool) {
    fn rec(
        i: usize,
        used: &mut Vec<u64>,
        value: f64,
        placed: usize,
        theta: &[f64],
        weights: &[u64],
        capacities: &[u64],
        best_complete: &mut Option<f64>,
        best_any: &mut Option<f64>,
    ) {
        if i == weights.len() {
            if placed == weights.len() {
                *best_complete = Some(best_complete.map_or(value, |b: f64| b.max(value)));
            }
            *best_any = Some(best_any.map_or(value, |b: f64| b.max(value)));
            return;
        }
        let k = capacities.len();
        for r in 0..k {
            if used[r] + weights[i] <= capacities[r] {
                used[r] += weights[i];
                rec(
                    i + 1,
                    used,
                    value + theta[i * k + r],
                    placed + 1,
                    theta,
                    weights,
                    capacities,
                    best_complete,
                    best_any,
                );
                used[r] -= weights[i];
            }
        }
        rec(i + 1, used, value, placed, theta, weights, capacities, best_complete, best_any);
    }
    let mut best_complete = None;
    let mut best_any = None;
    let mut used = vec![0u64; capacities.len()];
    rec(0, &mut used, 0.0, 0, theta, weights, capacities, &mut best_complete, &mut best_any);
    match best_complete {
        Some(v) => (v, true),
        None => (best_any.unwrap(), false),
    }
}

/// Asymptotic Kolmogorov survival function Q(lambda).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-14 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let a = sorted(a);
    let b = sorted(b);
    let (n, m) = (a.len(), b.len());
    assert!(n > 0 && m > 0);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// One-sample KS against Uniform(0,1).
pub fn ks_uniform(samples: &[f64]) -> (f64, f64) {
    let xs = sorted(samples);
    let n = xs.len();
    assert!(n > 0);
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let hi = (i + 1) as f64 / n as f64 - x;
        let lo = x - i as f64 / n as f64;
        d = d.max(hi.max(lo));
    }
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    (d, kolmogorov_q(lambda))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Total variation distance between two distributions over the same
/// indexed support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Posterior mean of sigmoid(eta) when eta has a normal prior and the
/// caller supplies the data log-likelihood as a function of eta. Plain
/// trapezoid quadrature over prior_mean +- 12 prior sd.
pub fn grid_mean_sigmoid_eta(
    prior_mean: f64,
    prior_sd: f64,
    loglik: impl Fn(f64) -> f64,
    n_points: usize,
) -> f64 {
    let lo = prior_mean - 12.0 * prior_sd;
    let hi = prior_mean + 12.0 * prior_sd;
    let step = (hi - lo) / (n_points - 1) as f64;
    let mut log_w = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let eta = lo + step * i as f64;
        let z = (eta - prior_mean) / prior_sd;
        log_w.push(-0.5 * z * z + loglik(eta));
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, lw) in log_w.iter().enumerate() {
        let w = (lw - max).exp();
        let eta = lo + step * i as f64;
        num += w * sigmoid(eta);
        den += w;
    }
    num / den
}

/// Log-likelihood of `successes` ones and `failures` zeros under a
/// Bernoulli(sigmoid(eta)) model.
pub fn bernoulli_loglik(successes: usize, failures: usize) -> impl Fn(f64) -> f64 {
    move |eta: f64| {
        let s = successes as f64;
        let f = failures as f64;
        -s * softplus(-eta) - f * softplus(eta)
    }
}

/// Log-likelihood of beta-binomial counts at a fixed dispersion: `counts`
/// maps raw count k to its multiplicity, trials per observation is
/// `y_bar`.
pub fn beta_binomial_loglik(
    counts: Vec<(u64, usize)>,
    y_bar: u64,
    dispersion: f64,
) -> impl Fn(f64) -> f64 {
    move |eta: f64| {
        let theta = sigmoid(eta).clamp(1e-12, 1.0 - 1e-12);
        let alpha = dispersion * theta;
        let beta = dispersion * (1.0 - theta);
        let mut ll = 0.0;
        for &(k, n_k) in &counts {
            ll += n_k as f64
                * (ln_beta(k as f64 + alpha, (y_bar - k) as f64 + beta) - ln_beta(alpha, beta));
        }
        ll
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// P(X > Y) for independent X ~ Beta(a1,b1), Y ~ Beta(a2,b2), by Simpson
/// integration of the Y density against the X survival function.
pub fn prob_beta_greater(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    use statrs::distribution::{Beta, ContinuousCDF};
    let x = Beta::new(a1, b1).unwrap();
    let n = 20_000usize;
    let h = 1.0 / n as f64;
    let integrand = |t: f64| {
        let t = t.clamp(1e-12, 1.0 - 1e-12);
        beta_pdf(a2, b2, t) * (1.0 - x.cdf(t))
    };
    let mut total = integrand(0.0) + integrand(1.0);
    for i in 1..n {
        let t = i as f64 * h;
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(t);
    }
    total * h / 3.0
}

fn beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
}
