//! Value types shared by the whole crate.
//!
//! A problem instance has `d` options indexed `0..d`. An action selects a
//! subset of options (for most feasible sets, exactly `m` of them); semi-bandit
//! feedback reveals the outcome of every selected option and nothing else.
//! Outcome values always live in `[0, 1]`; count-valued outcomes are stored
//! normalized by their maximum so the same invariant holds for every model
//! family. Indices are zero-based in memory and one-based in every serialized
//! artifact.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::solvers::FeasibleSet;

/// Zero-based option identifier. Serialized forms (CSV columns, reports)
/// shift to one-based.
pub type OptionIndex = usize;

/// A subset of the `d` options encoded as a bit vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionVector {
    bits: Vec<bool>,
}

impl ActionVector {
    pub fn new(bits: Vec<bool>) -> Self {
        ActionVector { bits }
    }

    pub fn zeros(d: usize) -> Self {
        ActionVector { bits: vec![false; d] }
    }

    /// Builds an action with the given option indices set.
    pub fn from_indices(d: usize, chosen: &[usize]) -> Result<Self> {
        let mut bits = vec![false; d];
        for &j in chosen {
            if j >= d {
                return Err(Error::DimensionMismatch(format!(
                    "option index {j} out of range for d={d}"
                )));
            }
            if bits[j] {
                return Err(Error::InvalidArgument(format!("option {j} listed twice")));
            }
            bits[j] = true;
        }
        Ok(ActionVector { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j]
    }

    /// Number of selected options (the batch size of this action).
    pub fn count_chosen(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Selected option indices in increasing order.
    pub fn chosen(&self) -> Vec<usize> {
        self.iter_chosen().collect()
    }

    pub fn iter_chosen(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// Compares two actions by their sorted chosen-index sequences.
    ///
    /// This is the ordering used for deterministic tie-breaking: the action
    /// that selects smaller option indices first is "smaller".
    pub fn cmp_chosen(&self, other: &Self) -> std::cmp::Ordering {
        self.iter_chosen().cmp(other.iter_chosen())
    }
}

/// Semi-bandit feedback for one period. Entries for unselected options are
/// explicitly absent, never stored as zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector {
    values: Vec<Option<f64>>,
}

impl OutcomeVector {
    /// Validates that every observed value lies in `[0, 1]`.
    pub fn new(values: Vec<Option<f64>>) -> Result<Self> {
        for (j, v) in values.iter().enumerate() {
            if let Some(y) = v {
                if !y.is_finite() || *y < 0.0 || *y > 1.0 {
                    return Err(Error::BadOutcome(format!(
                        "outcome {y} for option {j} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(OutcomeVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The observed value for option `j`, if option `j` was selected.
    pub fn observed(&self, j: usize) -> Option<f64> {
        self.values[j]
    }

    pub fn observed_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_some()).collect()
    }

    /// Iterates over `(option, value)` pairs that were actually observed.
    pub fn iter_observed(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(j, v)| v.map(|y| (j, y)))
    }

    /// True when the observation pattern matches the action exactly.
    pub fn matches_action(&self, action: &ActionVector) -> bool {
        self.values.len() == action.len()
            && self.values.iter().zip(action.as_slice()).all(|(v, &b)| v.is_some() == b)
    }
}

/// Per-option mean parameters, always inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    values: Vec<f64>,
}

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (j, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "theta {v} for option {j} outside [0, 1]"
                )));
            }
        }
        Ok(ThetaVector { values })
    }

    /// Clamps each entry into `[0, 1]`. Used when a model with unbounded
    /// support (e.g. the Gaussian hierarchy) hands a draw to the solver;
    /// the raw draw is kept elsewhere for inference.
    pub fn from_unclipped(values: Vec<f64>) -> Self {
        ThetaVector {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Expected reward of an action: the sum of theta over selected options.
pub fn reward(action: &ActionVector, theta: &ThetaVector) -> Result<f64> {
    if action.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "action has {} options, theta has {}",
            action.len(),
            theta.len()
        )));
    }
    Ok(action.iter_chosen().map(|j| theta.get(j)).sum())
}

/// Maps each option to a row type `u` and a column type `v`; options in the
/// same `(u, v)` cell share their mean parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeStructure {
    u_of: Vec<usize>,
    v_of: Vec<usize>,
    k_u: usize,
    k_v: usize,
}

impl TypeStructure {
    pub fn new(u_of: Vec<usize>, v_of: Vec<usize>, k_u: usize, k_v: usize) -> Result<Self> {
        if u_of.len() != v_of.len() {
            return Err(Error::DimensionMismatch(format!(
                "u map has {} entries, v map has {}",
                u_of.len(),
                v_of.len()
            )));
        }
        if k_u == 0 || k_v == 0 {
            return Err(Error::InvalidArgument("type counts must be positive".into()));
        }
        for (j, (&u, &v)) in u_of.iter().zip(&v_of).enumerate() {
            if u >= k_u || v >= k_v {
                return Err(Error::InvalidArgument(format!(
                    "option {j} mapped to cell ({u}, {v}) outside {k_u}x{k_v} grid"
                )));
            }
        }
        Ok(TypeStructure { u_of, v_of, k_u, k_v })
    }

    /// One option per cell of a full `k_u` by `k_v` grid, row-major.
    pub fn grid(k_u: usize, k_v: usize) -> Self {
        let mut u_of = Vec::with_capacity(k_u * k_v);
        let mut v_of = Vec::with_capacity(k_u * k_v);
        for u in 0..k_u {
            for v in 0..k_v {
                u_of.push(u);
                v_of.push(v);
            }
        }
        TypeStructure { u_of, v_of, k_u, k_v }
    }

    /// Every option is its own cell; nothing is pooled.
    pub fn independent(d: usize) -> Self {
        TypeStructure {
            u_of: (0..d).collect(),
            v_of: vec![0; d],
            k_u: d.max(1),
            k_v: 1,
        }
    }

    pub fn d(&self) -> usize {
        self.u_of.len()
    }

    pub fn k_u(&self) -> usize {
        self.k_u
    }

    pub fn k_v(&self) -> usize {
        self.k_v
    }

    pub fn u_of(&self, j: usize) -> usize {
        self.u_of[j]
    }

    pub fn v_of(&self, j: usize) -> usize {
        self.v_of[j]
    }

    /// Row-major cell index of option `j`.
    pub fn cell_of(&self, j: usize) -> usize {
        self.u_of[j] * self.k_v + self.v_of[j]
    }

    pub fn n_cells(&self) -> usize {
        self.k_u * self.k_v
    }

    /// Option indices grouped by cell (row-major cell order).
    pub fn options_by_cell(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.n_cells()];
        for j in 0..self.d() {
            cells[self.cell_of(j)].push(j);
        }
        cells
    }
}

/// One period of play.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub period: usize,
    pub action: ActionVector,
    pub outcomes: OutcomeVector,
}

/// Append-only sequence of play records with strictly increasing periods.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<HistoryRecord>,
}

impl History {
    pub fn new() -> Self {
        History { records: Vec::new() }
    }

    /// Appends a record, enforcing period ordering and feedback consistency.
    pub fn push(&mut self, record: HistoryRecord) -> Result<()> {
        let floor = self.records.last().map(|r| r.period).unwrap_or(0);
        if record.period <= floor {
            return Err(Error::InvalidHistory(format!(
                "period {} does not increase past {}",
                record.period, floor
            )));
        }
        if !record.outcomes.matches_action(&record.action) {
            return Err(Error::InvalidHistory(format!(
                "period {}: observation pattern does not match the action",
                record.period
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Outcome of a structural history check.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub problems: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks a history against fixed dimensions: `d` options per record and
/// exactly `m` selections per action. Every violation is reported with its
/// period and field.
pub fn validate_history(history: &History, d: usize, m: usize) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut last_period = 0usize;
    for record in history.records() {
        let t = record.period;
        if t <= last_period {
            report
                .problems
                .push(format!("period {t}: not strictly increasing (previous {last_period})"));
        }
        last_period = t;
        if record.action.len() != d {
            report
                .problems
                .push(format!("period {t}: action has {} options, expected {d}", record.action.len()));
        }
        if record.action.count_chosen() != m {
            report.problems.push(format!(
                "period {t}: action selects {} options, expected {m}",
                record.action.count_chosen()
            ));
        }
        if record.outcomes.len() != record.action.len() {
            report.problems.push(format!(
                "period {t}: outcomes cover {} options, action has {}",
                record.outcomes.len(),
                record.action.len()
            ));
        } else if !record.outcomes.matches_action(&record.action) {
            report
                .problems
                .push(format!("period {t}: observation pattern does not match the action"));
        }
    }
    report
}

/// Which likelihood governs outcomes and which posterior the policy carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    BetaBernoulli,
    GaussianHier,
    LogitHier,
    BetaBinomialHier,
}

impl ModelFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "beta_bernoulli" => Ok(ModelFamily::BetaBernoulli),
            "gaussian_hier" => Ok(ModelFamily::GaussianHier),
            "logit_hier" => Ok(ModelFamily::LogitHier),
            "beta_binomial_hier" => Ok(ModelFamily::BetaBinomialHier),
            other => Err(Error::Parse(format!("unknown model family '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::BetaBernoulli => "beta_bernoulli",
            ModelFamily::GaussianHier => "gaussian_hier",
            ModelFamily::LogitHier => "logit_hier",
            ModelFamily::BetaBinomialHier => "beta_binomial_hier",
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything needed to reproduce one simulated scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub d: usize,
    pub m: usize,
    pub horizon: usize,
    pub feasible_set: FeasibleSet,
    pub model: ModelFamily,
    pub seed: u64,
    /// Free-form numeric knobs (hyperpriors, sampler schedule, ...).
    /// Consumers reject keys they do not understand.
    pub hyperparameters: BTreeMap<String, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_is_the_masked_sum() {
        let a = ActionVector::from_indices(3, &[0, 2]).unwrap();
        let theta = ThetaVector::new(vec![0.2, 0.9, 0.3]).unwrap();
        let r = reward(&a, &theta).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reward_rejects_dimension_mismatch() {
        let a = ActionVector::from_indices(3, &[0]).unwrap();
        let theta = ThetaVector::new(vec![0.2, 0.9]).unwrap();
        assert!(matches!(reward(&a, &theta), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn outcome_vector_rejects_out_of_range() {
        assert!(OutcomeVector::new(vec![Some(1.5), None]).is_err());
        assert!(OutcomeVector::new(vec![Some(-0.1)]).is_err());
        assert!(OutcomeVector::new(vec![Some(f64::NAN)]).is_err());
        assert!(OutcomeVector::new(vec![Some(1.0), Some(0.0), None]).is_ok());
    }

    #[test]
    fn theta_vector_rejects_out_of_range() {
        assert!(ThetaVector::new(vec![1.1]).is_err());
        assert!(ThetaVector::new(vec![-0.0001]).is_err());
        let clipped = ThetaVector::from_unclipped(vec![-3.0, 0.4, 7.0]);
        assert_eq!(clipped.as_slice(), &[0.0, 0.4, 1.0]);
    }

    #[test]
    fn action_tie_break_ordering_prefers_small_indices() {
        let a = ActionVector::from_indices(4, &[0, 3]).unwrap();
        let b = ActionVector::from_indices(4, &[1, 2]).unwrap();
        assert_eq!(a.cmp_chosen(&b), std::cmp::Ordering::Less);
    }

    #[test]
    fn history_enforces_period_order_and_masks() {
        let mut h = History::new();
        let a = ActionVector::from_indices(2, &[0]).unwrap();
        let y = OutcomeVector::new(vec![Some(1.0), None]).unwrap();
        h.push(HistoryRecord { period: 1, action: a.clone(), outcomes: y.clone() }).unwrap();
        let err = h.push(HistoryRecord { period: 1, action: a.clone(), outcomes: y.clone() });
        assert!(err.is_err());

        let bad_mask = OutcomeVector::new(vec![None, Some(0.5)]).unwrap();
        let err = h.push(HistoryRecord { period: 2, action: a, outcomes: bad_mask });
        assert!(err.is_err());
    }

    #[test]
    fn validate_history_reports_offending_periods() {
        let mut h = History::new();
        let a = ActionVector::from_indices(3, &[0, 1]).unwrap();
        let y = OutcomeVector::new(vec![Some(1.0), Some(0.0), None]).unwrap();
        h.push(HistoryRecord { period: 1, action: a.clone(), outcomes: y.clone() }).unwrap();
        h.push(HistoryRecord { period: 2, action: a.clone(), outcomes: y.clone() }).unwrap();
        assert!(validate_history(&h, 3, 2).is_ok());

        let report = validate_history(&h, 3, 1);
        assert!(!report.is_ok());
        assert!(report.problems.iter().all(|p| p.contains("selects 2")));
        assert_eq!(report.problems.len(), 2);

        let report = validate_history(&h, 4, 2);
        assert!(report.problems.iter().any(|p| p.contains("expected 4")));
    }

    #[test]
    fn grid_structure_indexes_cells_row_major() {
        let ts = TypeStructure::grid(2, 3);
        assert_eq!(ts.d(), 6);
        assert_eq!(ts.cell_of(4), 4);
        assert_eq!((ts.u_of(4), ts.v_of(4)), (1, 1));
        let cells = ts.options_by_cell();
        assert!(cells.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn model_family_round_trips_through_names() {
        for f in [
            ModelFamily::BetaBernoulli,
            ModelFamily::GaussianHier,
            ModelFamily::LogitHier,
            ModelFamily::BetaBinomialHier,
        ] {
            assert_eq!(ModelFamily::parse(f.as_str()).unwrap(), f);
        }
        assert!(ModelFamily::parse("poisson").is_err());
    }
}
