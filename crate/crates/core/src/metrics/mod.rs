//! Information-theoretic primitives and regret bounds.
//!
//! Everything uses natural logarithms. Degenerate Bernoulli divergences
//! return `f64::INFINITY` rather than raising floating-point errors, and
//! `0 * ln 0` is always treated as zero.

pub mod lemmas;

use crate::error::{Error, Result};

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::InvalidArgument(format!("{name}={p} is not a probability")));
    }
    Ok(())
}

/// `x ln x` with the continuous extension `0 ln 0 = 0`.
fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropy of a Bernoulli(p) in nats.
pub fn bernoulli_entropy(p: f64) -> Result<f64> {
    check_prob("p", p)?;
    Ok(-xlnx(p) - xlnx(1.0 - p))
}

/// Kullback-Leibler divergence between Bernoulli(p) and Bernoulli(q).
///
/// Returns `f64::INFINITY` when q is degenerate and p disagrees with it.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    check_prob("p", p)?;
    check_prob("q", q)?;
    if p == q {
        return Ok(0.0);
    }
    if q == 0.0 || q == 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    Ok(kl)
}

/// Entropy of a discrete distribution in nats.
pub fn entropy(dist: &[f64]) -> f64 {
    -dist.iter().map(|&p| xlnx(p)).sum::<f64>()
}

/// A joint probability mass function over a pair of finite variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pmf: Vec<Vec<f64>>,
}

impl DiscreteJoint {
    /// Validates nonnegativity, rectangular shape, and total mass 1 within
    /// 1e-12.
    pub fn new(pmf: Vec<Vec<f64>>) -> Result<Self> {
        if pmf.is_empty() || pmf[0].is_empty() {
            return Err(Error::InvalidArgument("joint pmf must be non-empty".into()));
        }
        let cols = pmf[0].len();
        let mut total = 0.0;
        for row in &pmf {
            if row.len() != cols {
                return Err(Error::DimensionMismatch("ragged joint pmf".into()));
            }
            for &p in row {
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::InvalidArgument(format!("pmf entry {p} is invalid")));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("pmf sums to {total}, expected 1")));
        }
        Ok(DiscreteJoint { pmf })
    }

    pub fn n_x(&self) -> usize {
        self.pmf.len()
    }

    pub fn n_y(&self) -> usize {
        self.pmf[0].len()
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.pmf[x][y]
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.pmf.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_y()];
        for row in &self.pmf {
            for (y, &p) in row.iter().enumerate() {
                m[y] += p;
            }
        }
        m
    }
}

/// Mutual information `I(X; Y)` of a joint pmf, in nats.
///
/// Computed as the expected divergence between the joint and the product of
/// its marginals; tiny negative rounding residue is clamped to zero.
pub fn mutual_information(joint: &DiscreteJoint) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut info = 0.0;
    for x in 0..joint.n_x() {
        for y in 0..joint.n_y() {
            let p = joint.entry(x, y);
            if p > 0.0 {
                info += p * (p / (px[x] * py[y])).ln();
            }
        }
    }
    if info < 0.0 && info > -1e-12 {
        0.0
    } else {
        info
    }
}

/// `H(X | Y)` of a joint pmf, in nats.
pub fn conditional_entropy_x_given_y(joint: &DiscreteJoint) -> f64 {
    let py = joint.marginal_y();
    let mut h = 0.0;
    for y in 0..joint.n_y() {
        if py[y] == 0.0 {
            continue;
        }
        for x in 0..joint.n_x() {
            let p = joint.entry(x, y);
            if p > 0.0 {
                h -= p * (p / py[y]).ln();
            }
        }
    }
    h
}

/// Problem size for the regret bound curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundSpec {
    pub d: usize,
    pub m: usize,
    pub horizon: usize,
}

impl BoundSpec {
    pub fn new(d: usize, m: usize, horizon: usize) -> Result<Self> {
        if m < 1 || m > d {
            return Err(Error::InvalidArgument(format!("need 1 <= m <= d, got m={m}, d={d}")));
        }
        Ok(BoundSpec { d, m, horizon })
    }

    pub fn cumulative(&self, t: usize) -> f64 {
        theorem1_bound(self.d, self.m, t).expect("validated at construction")
    }

    pub fn per_capita(&self, t: usize) -> f64 {
        per_capita_bound(self.d, self.m, t).expect("validated at construction")
    }
}

/// Prior-averaged cumulative regret bound after `t` periods:
/// `sqrt(d t m (ln(d/m) + 1) / 2)`.
pub fn theorem1_bound(d: usize, m: usize, t: usize) -> Result<f64> {
    if m < 1 || m > d {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    let ratio = d as f64 / m as f64;
    Ok((0.5 * d as f64 * t as f64 * m as f64 * (ratio.ln() + 1.0)).sqrt())
}

/// Per-period bound on regret per selected option:
/// `sqrt((d/m)(ln(d/m) + 1) / 2) * (sqrt(t) - sqrt(t - 1))`.
pub fn per_capita_bound(d: usize, m: usize, t: usize) -> Result<f64> {
    if m < 1 || m > d {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    if t < 1 {
        return Err(Error::InvalidArgument("per-period bound needs t >= 1".into()));
    }
    let ratio = d as f64 / m as f64;
    let level = (0.5 * ratio * (ratio.ln() + 1.0)).sqrt();
    Ok(level * ((t as f64).sqrt() - ((t - 1) as f64).sqrt()))
}

/// Running sums of a per-period regret series.
pub fn cumulative_regret(per_period: &[f64]) -> Vec<f64> {
    per_period
        .iter()
        .scan(0.0, |acc, &r| {
            *acc += r;
            Some(*acc)
        })
        .collect()
}
