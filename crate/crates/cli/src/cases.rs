//! Case-file ingestion for the placement scenario.
//!
//! A case file is a comma table, one row per family. The three binary
//! attributes (working age, female, english) define eight family types;
//! affiliate indices are 1-based on disk. `tied_affiliate` must be present
//! exactly when `us_tie` is 1, and `employed_90d` may be empty for cases
//! whose outcome was never recorded. Reading reports every malformed row
//! at once, and writing reproduces a read file byte for byte.

use std::io::BufRead;

use combi_bandit::domain::ThetaVector;
use combi_bandit::engine::{Affiliate, Family, ResettlementScenario};
use combi_bandit::{Error, Result};

pub const CASES_HEADER: &str =
    "case_id,family_size,working_age,female,english,us_tie,tied_affiliate,arrival_month,employed_90d";

/// Family types the eight attribute combinations map to.
pub const CASE_TYPES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: u64,
    pub family_size: u64,
    /// Attribute bits packed as working_age * 4 + female * 2 + english.
    pub u_type: usize,
    pub tied_affiliate: Option<usize>,
    pub arrival_month: usize,
    pub employed_90d: Option<bool>,
}

pub fn ingest_cases<R: BufRead>(r: R) -> Result<Vec<CaseRecord>> {
    let mut lines = r.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("case file is empty".into()))?
        .1?;
    if header.trim_end() != CASES_HEADER {
        return Err(Error::Parse(format!(
            "expected header '{CASES_HEADER}', found '{header}'"
        )));
    }
    let mut records = Vec::new();
    let mut problems = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    for (i, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match parse_row(&line, &mut seen_ids) {
            Ok(record) => records.push(record),
            Err(msg) => problems.push(format!("cases line {}: {msg}", i + 1)),
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(Error::Parse(problems.join("; ")))
    }
}

fn parse_row(
    line: &str,
    seen_ids: &mut std::collections::BTreeSet<u64>,
) -> std::result::Result<CaseRecord, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 9 {
        return Err(format!("expected 9 fields, found {}", fields.len()));
    }
    let case_id: u64 =
        fields[0].parse().map_err(|_| "case_id is not an integer".to_string())?;
    if !seen_ids.insert(case_id) {
        return Err(format!("case_id {case_id} appears twice"));
    }
    let family_size: u64 =
        fields[1].parse().map_err(|_| "family_size is not an integer".to_string())?;
    if family_size == 0 {
        return Err("family_size must be at least 1".into());
    }
    let bit = |name: &str, raw: &str| match raw {
        "0" => Ok(0usize),
        "1" => Ok(1usize),
        _ => Err(format!("{name} must be 0 or 1")),
    };
    let working_age = bit("working_age", fields[2])?;
    let female = bit("female", fields[3])?;
    let english = bit("english", fields[4])?;
    let us_tie = bit("us_tie", fields[5])? == 1;
    let tied_affiliate = if fields[6].is_empty() {
        None
    } else {
        let r: usize =
            fields[6].parse().map_err(|_| "tied_affiliate is not an integer".to_string())?;
        if r == 0 {
            return Err("tied_affiliate is 1-based".into());
        }
        Some(r - 1)
    };
    if us_tie != tied_affiliate.is_some() {
        return Err("tied_affiliate must be present exactly when us_tie is 1".into());
    }
    let arrival_month: usize =
        fields[7].parse().map_err(|_| "arrival_month is not an integer".to_string())?;
    if arrival_month == 0 {
        return Err("arrival_month is 1-based".into());
    }
    let employed_90d = match fields[8] {
        "" => None,
        "0" => Some(false),
        "1" => Some(true),
        _ => return Err("employed_90d must be 0, 1, or empty".into()),
    };
    Ok(CaseRecord {
        case_id,
        family_size,
        u_type: working_age * 4 + female * 2 + english,
        tied_affiliate,
        arrival_month,
        employed_90d,
    })
}

/// Inverse of `ingest_cases`, kept as the format's round-trip witness.
#[cfg(test)]
pub fn emit_cases<W: std::io::Write>(w: &mut W, records: &[CaseRecord]) -> Result<()> {
    writeln!(w, "{CASES_HEADER}")?;
    for record in records {
        let tied = match record.tied_affiliate {
            Some(r) => (r + 1).to_string(),
            None => String::new(),
        };
        let employed = match record.employed_90d {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            record.case_id,
            record.family_size,
            record.u_type >> 2 & 1,
            record.u_type >> 1 & 1,
            record.u_type & 1,
            u8::from(record.tied_affiliate.is_some()),
            tied,
            record.arrival_month,
            employed
        )?;
    }
    Ok(())
}

/// Builds a placement scenario from ingested cases.
///
/// `annual_counts[r]` is the yearly resettlement count of affiliate r + 1;
/// affiliates below `min_cases` are dropped and the survivors renumbered,
/// so a case tied to a dropped affiliate is an error. The horizon is
/// `months` extended to cover the latest arrival. Cell probabilities are
/// calibrated from the recorded outcomes of tied cases; cells with no data
/// fall back to the overall employment rate, and 1/2 when no outcome was
/// recorded anywhere.
pub fn scenario_from_cases(
    records: &[CaseRecord],
    annual_counts: &[u64],
    min_cases: u64,
    months: usize,
) -> Result<ResettlementScenario> {
    if annual_counts.is_empty() {
        return Err(Error::InvalidArgument("annual_counts is empty".into()));
    }
    let mut remap = vec![None; annual_counts.len()];
    let mut affiliates = Vec::new();
    for (r, &count) in annual_counts.iter().enumerate() {
        if count >= min_cases {
            remap[r] = Some(affiliates.len());
            affiliates.push(Affiliate { id: affiliates.len(), annual_count: count });
        }
    }
    if affiliates.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no affiliate reaches min_cases = {min_cases}"
        )));
    }
    let k_v = affiliates.len();

    let mut families = Vec::with_capacity(records.len());
    let mut months = months;
    let mut cell_hits = vec![0u64; CASE_TYPES * k_v];
    let mut cell_totals = vec![0u64; CASE_TYPES * k_v];
    for record in records {
        let tied_affiliate = match record.tied_affiliate {
            None => None,
            Some(r) => {
                let mapped = remap.get(r).copied().flatten();
                match mapped {
                    Some(new) => Some(new),
                    None => {
                        return Err(Error::InvalidArgument(format!(
                            "case {} is tied to affiliate {}, which is {}",
                            record.case_id,
                            r + 1,
                            if r < annual_counts.len() {
                                "below min_cases"
                            } else {
                                "not in annual_counts"
                            }
                        )))
                    }
                }
            }
        };
        if let (Some(r), Some(employed)) = (tied_affiliate, record.employed_90d) {
            let cell = record.u_type * k_v + r;
            cell_totals[cell] += 1;
            cell_hits[cell] += u64::from(employed);
        }
        months = months.max(record.arrival_month);
        families.push(Family {
            id: record.case_id as usize,
            size: record.family_size,
            u_type: record.u_type,
            arrival_month: record.arrival_month,
            tied_affiliate,
        });
    }

    let observed: u64 = cell_totals.iter().sum();
    let overall = if observed == 0 {
        0.5
    } else {
        cell_hits.iter().sum::<u64>() as f64 / observed as f64
    };
    let theta0: Vec<f64> = cell_totals
        .iter()
        .zip(&cell_hits)
        .map(|(&n, &hits)| if n == 0 { overall } else { hits as f64 / n as f64 })
        .collect();

    Ok(ResettlementScenario {
        months,
        k_u: CASE_TYPES,
        families,
        affiliates,
        theta0: ThetaVector::new(theta0)?,
    })
}
