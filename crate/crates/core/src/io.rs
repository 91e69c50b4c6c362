//! Plain-text serialization: comma-delimited tables and `key = value`
//! reports.
//!
//! Every table is UTF-8 with a header row and `\n` line endings, and all
//! numbers use Rust's shortest round-trip formatting, so rewriting a file
//! from parsed data reproduces it byte for byte. Option indices are
//! 1-based on disk and 0-based in memory.

use std::io::{BufRead, Write};

use crate::domain::{ActionVector, History, HistoryRecord, OutcomeVector};
use crate::engine::{MonthRecord, PeriodRecord, ResettlementRun, Trajectory};
use crate::error::{Error, Result};
use crate::metrics::BoundSpec;
use crate::posterior::PosteriorDraws;

pub const HISTORY_HEADER: &str = "period,option_index,chosen,outcome";
pub const TRAJECTORY_HEADER: &str =
    "period,action,expected_regret,cumulative_regret,realized_reward";
pub const DRAWS_HEADER: &str = "draw_index,option_index,theta";
pub const BOUND_HEADER: &str = "t,cumulative_bound,per_capita_bound";
pub const RESAMPLES_HEADER: &str = "resample_index,statistic";

/// One row per (period, option) pair; unobserved outcomes are left empty.
pub fn write_history_csv<W: Write>(w: &mut W, history: &History) -> Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for record in history.records() {
        for j in 0..record.action.len() {
            let chosen = u8::from(record.action.get(j));
            match record.outcomes.observed(j) {
                Some(y) => writeln!(w, "{},{},{},{}", record.period, j + 1, chosen, y)?,
                None => writeln!(w, "{},{},{},", record.period, j + 1, chosen)?,
            }
        }
    }
    Ok(())
}

pub fn read_history_csv<R: BufRead>(r: R) -> Result<History> {
    let mut lines = r.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("history file is empty".into()))?
        .1?;
    if header.trim_end() != HISTORY_HEADER {
        return Err(Error::Parse(format!(
            "expected header '{HISTORY_HEADER}', found '{header}'"
        )));
    }
    struct Row {
        period: usize,
        option: usize,
        chosen: bool,
        outcome: Option<f64>,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let at = |msg: &str| Error::Parse(format!("history line {}: {msg}", i + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(at(&format!("expected 4 fields, found {}", fields.len())));
        }
        let period: usize =
            fields[0].parse().map_err(|_| at("period is not an integer"))?;
        let option: usize =
            fields[1].parse().map_err(|_| at("option_index is not an integer"))?;
        if option == 0 {
            return Err(at("option_index is 1-based"));
        }
        let chosen = match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(at("chosen must be 0 or 1")),
        };
        let outcome = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse::<f64>().map_err(|_| at("outcome is not a number"))?)
        };
        if outcome.is_some() != chosen {
            return Err(at("outcome must be present exactly when chosen=1"));
        }
        rows.push(Row { period, option: option - 1, chosen, outcome });
    }
    let d = rows.iter().map(|r| r.option + 1).max().unwrap_or(0);
    let mut history = History::new();
    let mut i = 0;
    while i < rows.len() {
        let period = rows[i].period;
        let mut chosen = Vec::new();
        let mut values = vec![None; d];
        let mut seen = vec![false; d];
        while i < rows.len() && rows[i].period == period {
            let row = &rows[i];
            if seen[row.option] {
                return Err(Error::Parse(format!(
                    "period {period}: option {} listed twice",
                    row.option + 1
                )));
            }
            seen[row.option] = true;
            if row.chosen {
                chosen.push(row.option);
            }
            values[row.option] = row.outcome;
            i += 1;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Parse(format!(
                "period {period}: does not list every option 1..={d}"
            )));
        }
        history.push(HistoryRecord {
            period,
            action: ActionVector::from_indices(d, &chosen)?,
            outcomes: OutcomeVector::new(values)?,
        })?;
    }
    Ok(history)
}

fn join_action(action: &ActionVector) -> String {
    action
        .iter_chosen()
        .map(|j| (j + 1).to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per period; `action` holds the chosen option indices joined by
/// semicolons.
pub fn write_trajectory_csv<W: Write>(w: &mut W, trajectory: &Trajectory) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    let mut cumulative = 0.0;
    for p in &trajectory.periods {
        cumulative += p.expected_regret;
        writeln!(
            w,
            "{},{},{},{},{}",
            p.period,
            join_action(&p.action),
            p.expected_regret,
            cumulative,
            p.realized_reward
        )?;
    }
    Ok(())
}

/// The same table for a resettlement run, one row per month; the action
/// lists the cells the algorithm placed families into, with multiplicity.
pub fn write_resettlement_csv<W: Write>(w: &mut W, run: &ResettlementRun) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    let mut cumulative = 0.0;
    for month in &run.months {
        cumulative += month.expected_regret;
        let action = month
            .thompson_cells()
            .iter()
            .map(|c| (c + 1).to_string())
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            w,
            "{},{},{},{},{}",
            month.month,
            action,
            month.expected_regret,
            cumulative,
            month.realized_reward()
        )?;
    }
    Ok(())
}

/// Capacity ledger companion table: one row per (month, affiliate).
pub fn write_capacity_csv<W: Write>(w: &mut W, months: &[MonthRecord]) -> Result<()> {
    writeln!(w, "month,affiliate,capacity_start,capacity_end,placed_families,carried_families")?;
    for m in months {
        for (r, (start, end)) in m.capacity_start.iter().zip(&m.capacity_end).enumerate() {
            let placed = m.placements.iter().filter(|p| p.affiliate == r).count();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                m.month,
                r + 1,
                start,
                end,
                placed,
                m.carried.len()
            )?;
        }
    }
    Ok(())
}

pub fn write_draws_csv<W: Write>(w: &mut W, draws: &PosteriorDraws) -> Result<()> {
    writeln!(w, "{DRAWS_HEADER}")?;
    for i in 0..draws.n_draws() {
        let row = draws.raw(i);
        for (j, theta) in row.iter().enumerate() {
            writeln!(w, "{},{},{}", i + 1, j + 1, theta)?;
        }
    }
    Ok(())
}

/// Evaluates the regret bound at every period 1..=horizon.
pub fn write_bound_csv<W: Write>(w: &mut W, spec: &BoundSpec) -> Result<()> {
    writeln!(w, "{BOUND_HEADER}")?;
    for t in 1..=spec.horizon {
        writeln!(w, "{},{},{}", t, spec.cumulative(t), spec.per_capita(t))?;
    }
    Ok(())
}

pub fn write_resamples_csv<W: Write>(w: &mut W, resamples: &[f64]) -> Result<()> {
    writeln!(w, "{RESAMPLES_HEADER}")?;
    for (i, s) in resamples.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, s)?;
    }
    Ok(())
}

/// `key = value` lines, one per entry, in the order given.
pub fn write_kv_report<W: Write, K: AsRef<str>, V: std::fmt::Display>(
    w: &mut W,
    entries: &[(K, V)],
) -> Result<()> {
    for (k, v) in entries {
        writeln!(w, "{} = {}", k.as_ref(), v)?;
    }
    Ok(())
}

/// Serializes a whole episode back into the engine's feedback format, so
/// downstream tools (and the inference command) can consume a simulated
/// run as a history file.
pub fn history_from_periods(periods: &[PeriodRecord]) -> Result<History> {
    let mut history = History::new();
    for p in periods {
        history.push(HistoryRecord {
            period: p.period,
            action: p.action.clone(),
            outcomes: p.outcomes.clone(),
        })?;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ThetaVector;
    use crate::engine::{run_episode, Environment, ModelSpec};
    use crate::domain::TypeStructure;
    use crate::rng::rng_from_seed;
    use crate::solvers::FeasibleSet;

    fn sample_history() -> History {
        let mut history = History::new();
        for t in 1..=4 {
            let chosen = [t % 3, 3];
            let action = ActionVector::from_indices(5, &chosen).unwrap();
            let values = (0..5)
                .map(|j| action.get(j).then_some(if j == 3 { 1.0 } else { 0.25 * t as f64 }))
                .collect();
            history
                .push(HistoryRecord {
                    period: t,
                    action,
                    outcomes: OutcomeVector::new(values).unwrap(),
                })
                .unwrap();
        }
        history
    }

    #[test]
    fn history_round_trips_exactly() {
        let history = sample_history();
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &history).unwrap();
        let parsed = read_history_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed.len(), history.len());
        for (a, b) in parsed.records().iter().zip(history.records()) {
            assert_eq!(a.period, b.period);
            assert_eq!(a.action.as_slice(), b.action.as_slice());
            for j in 0..5 {
                assert_eq!(a.outcomes.observed(j), b.outcomes.observed(j));
            }
        }
        let mut again = Vec::new();
        write_history_csv(&mut again, &parsed).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn history_reader_rejects_malformed_rows() {
        let cases = [
            "period,option_index,chosen,outcome\n1,0,1,0.5\n",
            "period,option_index,chosen,outcome\n1,1,2,0.5\n",
            "period,option_index,chosen,outcome\n1,1,0,0.5\n",
            "period,option_index,chosen,outcome\n1,1,1,\n",
            "period,option_index,chosen,outcome\n1,1,1,0.5\n1,1,0,\n",
            "period,option_index,chosen,outcome\n1,2,1,0.5\n",
            "bad header\n",
        ];
        for text in cases {
            assert!(
                read_history_csv(text.as_bytes()).is_err(),
                "accepted malformed input: {text:?}"
            );
        }
    }

    #[test]
    fn trajectory_rows_accumulate_regret() {
        let env = Environment::bernoulli(ThetaVector::new(vec![0.9, 0.1]).unwrap()).unwrap();
        let mut rng = rng_from_seed(7);
        let trajectory = run_episode(
            &env,
            &ModelSpec::beta_bernoulli(),
            &TypeStructure::independent(2),
            &FeasibleSet::TopM { d: 2, m: 1 },
            5,
            &mut rng,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &trajectory).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines.len(), 6);
        let last: Vec<&str> = lines[5].split(',').collect();
        let cumulative: f64 = last[3].parse().unwrap();
        assert!((cumulative - trajectory.total_regret()).abs() < 1e-12);
    }

    #[test]
    fn bound_table_matches_direct_evaluation() {
        let spec = BoundSpec::new(4, 2, 100).unwrap();
        let mut buf = Vec::new();
        write_bound_csv(&mut buf, &spec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 101);
        let row: Vec<&str> = lines[100].split(',').collect();
        assert_eq!(row[0], "100");
        let cumulative: f64 = row[1].parse().unwrap();
        assert!((cumulative - 26.024197820950757).abs() < 1e-12);
    }

    #[test]
    fn kv_report_formats_lines() {
        let mut buf = Vec::new();
        write_kv_report(&mut buf, &[("alpha", 1.5), ("beta", 2.0)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "alpha = 1.5\nbeta = 2\n");
    }

    #[test]
    fn empty_action_serializes_as_empty_field() {
        let mut history = History::new();
        history
            .push(HistoryRecord {
                period: 1,
                action: ActionVector::zeros(2),
                outcomes: OutcomeVector::new(vec![None, None]).unwrap(),
            })
            .unwrap();
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &history).unwrap();
        let parsed = read_history_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed.records()[0].action.count_chosen(), 0);
    }
}
