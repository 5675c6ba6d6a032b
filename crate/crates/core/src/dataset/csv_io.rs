use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::loan_model::{
    Feature, FeatureKind, FeatureValue, LoanRecord, Predictors, RawState, TargetOptions,
};

use super::LoanTable;

pub const DEFAULT_MISSING_TOKENS: [&str; 2] = ["", "NA"];

/// Maps logical fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    features: Vec<String>,
    pub loan_id: String,
    pub state: String,
    pub total_payment: String,
    pub principal: String,
    /// Realized duration in months. When this header is absent the duration
    /// is computed from `issue_date` and `last_payment_date`.
    pub months_elapsed: String,
    pub issue_date: String,
    pub last_payment_date: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            features: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
            loan_id: "id".into(),
            state: "loan_status".into(),
            total_payment: "total_pymnt".into(),
            principal: "funded_amnt".into(),
            months_elapsed: "last_pymnt_months_since_issue".into(),
            issue_date: "issue_d".into(),
            last_payment_date: "last_pymnt_d".into(),
        }
    }
}

impl ColumnMap {
    pub fn feature(&self, feature: Feature) -> &str {
        &self.features[feature.index()]
    }

    /// Overrides one mapping. `key` is a feature name or one of `loan_id`,
    /// `state`, `total_payment`, `principal`, `months_elapsed`, `issue_date`,
    /// `last_payment_date`.
    pub fn set(&mut self, key: &str, header: impl Into<String>) -> Result<()> {
        let header = header.into();
        if let Some(f) = Feature::from_name(key) {
            self.features[f.index()] = header;
            return Ok(());
        }
        let slot = match key {
            "loan_id" => &mut self.loan_id,
            "state" => &mut self.state,
            "total_payment" => &mut self.total_payment,
            "principal" => &mut self.principal,
            "months_elapsed" => &mut self.months_elapsed,
            "issue_date" => &mut self.issue_date,
            "last_payment_date" => &mut self.last_payment_date,
            _ => return Err(Error::Config(format!("unknown column mapping key `{key}`"))),
        };
        *slot = header;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub columns: ColumnMap,
    pub missing_tokens: Vec<String>,
    pub targets: TargetOptions,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            columns: ColumnMap::default(),
            missing_tokens: DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
            targets: TargetOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based data row number (header excluded).
    pub row: u64,
    /// Raw id cell, which may itself be the unparseable value.
    pub loan_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub table: LoanTable,
    pub rows_read: usize,
    pub dropped_intermediate: usize,
    pub rejects: Vec<Reject>,
}

pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let report = read_csv(file, options)?;
    info!(
        "{}: {} rows read, {} retained, {} intermediate dropped, {} rejected",
        path.display(),
        report.rows_read,
        report.table.len(),
        report.dropped_intermediate,
        report.rejects.len()
    );
    Ok(report)
}

enum Months {
    Direct(usize),
    Dates { issue: usize, last: usize },
}

struct Layout {
    features: [usize; 27],
    loan_id: usize,
    state: usize,
    total_payment: usize,
    principal: usize,
    months: Months,
}

impl Layout {
    fn resolve(headers: &csv::StringRecord, map: &ColumnMap) -> Result<Layout> {
        let lookup: HashMap<&str, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim(), i))
            .collect();
        let find = |name: &str| {
            lookup
                .get(name)
                .copied()
                .ok_or_else(|| Error::Schema(format!("missing mandatory column `{name}`")))
        };
        let mut features = [0usize; 27];
        for f in Feature::ALL {
            features[f.index()] = find(map.feature(f))?;
        }
        let months = match lookup.get(map.months_elapsed.as_str()) {
            Some(&i) => Months::Direct(i),
            None => match (
                lookup.get(map.issue_date.as_str()),
                lookup.get(map.last_payment_date.as_str()),
            ) {
                (Some(&issue), Some(&last)) => Months::Dates { issue, last },
                _ => {
                    return Err(Error::Schema(format!(
                        "missing mandatory column `{}` (or both `{}` and `{}`)",
                        map.months_elapsed, map.issue_date, map.last_payment_date
                    )))
                }
            },
        };
        Ok(Layout {
            features,
            loan_id: find(&map.loan_id)?,
            state: find(&map.state)?,
            total_payment: find(&map.total_payment)?,
            principal: find(&map.principal)?,
            months,
        })
    }
}

/// Reads a loan CSV. Intermediate-state rows are dropped and counted; rows
/// with unparseable or invalid cells go to the rejects list.
pub fn read_csv<R: Read>(reader: R, options: &LoadOptions) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let layout = Layout::resolve(&headers, &options.columns)?;
    let missing: HashSet<&str> = options.missing_tokens.iter().map(String::as_str).collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut rejects = Vec::new();
    let mut dropped = 0usize;
    let mut rows_read = 0usize;

    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        rows_read += 1;
        let row_no = i as u64 + 1;
        let id_cell = row.get(layout.loan_id).unwrap_or("").trim().to_string();
        let mut reject = |reason: String| {
            rejects.push(Reject {
                row: row_no,
                loan_id: id_cell.clone(),
                reason,
            })
        };
        let state_cell = row.get(layout.state).unwrap_or("");
        let state = match RawState::parse(state_cell) {
            Some(RawState::Intermediate) => {
                dropped += 1;
                continue;
            }
            Some(s) => s,
            None => {
                reject(format!("unknown loan state `{state_cell}`"));
                continue;
            }
        };
        match parse_row(&row, &layout, state, &missing) {
            Ok(record) => {
                if !seen.insert(record.loan_id) {
                    reject("duplicate loan_id".into());
                } else if let Err(e) = record.validate() {
                    reject(e.to_string());
                } else {
                    records.push(record);
                }
            }
            Err(reason) => reject(reason),
        }
    }
    if !rejects.is_empty() {
        warn!("{} row(s) rejected", rejects.len());
    }
    let table = LoanTable::from_records(records, &options.targets)?;
    Ok(LoadReport {
        table,
        rows_read,
        dropped_intermediate: dropped,
        rejects,
    })
}

fn parse_row(
    row: &csv::StringRecord,
    layout: &Layout,
    raw_state: RawState,
    missing: &HashSet<&str>,
) -> std::result::Result<LoanRecord, String> {
    let cell = |i: usize| row.get(i).unwrap_or("").trim();
    let number = |name: &str, i: usize| {
        parse_number(cell(i)).ok_or_else(|| format!("unparseable {name} `{}`", cell(i)))
    };

    let loan_id: u64 = cell(layout.loan_id)
        .parse()
        .map_err(|_| format!("unparseable loan id `{}`", cell(layout.loan_id)))?;

    let mut predictors = Predictors::default();
    for f in Feature::ALL {
        let raw = cell(layout.features[f.index()]);
        if missing.contains(raw) {
            continue;
        }
        let value = match f.kind() {
            FeatureKind::Categorical => FeatureValue::Categorical(raw.to_string()),
            FeatureKind::Numeric => {
                let parsed = if f == Feature::EmpLength {
                    parse_emp_length(raw)
                } else {
                    parse_number(raw)
                };
                match parsed {
                    Some(x) => FeatureValue::Numeric(x),
                    None => return Err(format!("unparseable {} `{raw}`", f.name())),
                }
            }
        };
        predictors.set(f, Some(value));
    }

    let total_payment = number("total payment", layout.total_payment)?;
    let principal = number("principal", layout.principal)?;
    let months_elapsed = match layout.months {
        Months::Direct(i) => {
            let m = number("months elapsed", i)?;
            if m.fract() != 0.0 || m < 1.0 || m > f64::from(u32::MAX) {
                return Err(format!("months elapsed must be a positive integer, got {m}"));
            }
            m as u32
        }
        Months::Dates { issue, last } => {
            let start = parse_year_month(cell(issue))
                .ok_or_else(|| format!("unparseable issue date `{}`", cell(issue)))?;
            let end = parse_year_month(cell(last))
                .ok_or_else(|| format!("unparseable last payment date `{}`", cell(last)))?;
            if end < start {
                return Err("last payment precedes issue date".into());
            }
            // repaid within the issue month still spans part of a month
            (end - start).max(1) as u32
        }
    };
    Ok(LoanRecord {
        loan_id,
        predictors,
        raw_state,
        total_payment,
        principal,
        months_elapsed,
    })
}

/// Plain decimal, optionally with a trailing percent sign (`"45.3%"`).
fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let s = s.strip_suffix('%').unwrap_or(s).trim();
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

/// Accepts plain numbers and the `"10+ years"` / `"< 1 year"` spellings.
fn parse_emp_length(s: &str) -> Option<f64> {
    if let Some(x) = parse_number(s) {
        return Some(x);
    }
    let lower = s.to_ascii_lowercase();
    if lower.starts_with('<') {
        return Some(0.0);
    }
    let digits: String = lower.chars().take_while(|c| c.is_ascii_digit()).collect();
    let rest = lower[digits.len()..].trim_start_matches('+').trim();
    if digits.is_empty() || !rest.starts_with("year") {
        return None;
    }
    digits.parse().ok()
}

/// Months since year 0 for `Mon-YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
fn parse_year_month(s: &str) -> Option<i64> {
    const MONTHS: [&str; 12] = [
        "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
    ];
    let s = s.trim();
    let (year, month) = if s.len() >= 8 && s.as_bytes()[3] == b'-' {
        let prefix = s.get(..3)?;
        let m = MONTHS.iter().position(|m| prefix.eq_ignore_ascii_case(m))? as i64 + 1;
        (s.get(4..)?.parse::<i64>().ok()?, m)
    } else {
        let mut parts = s.split('-');
        let y = parts.next()?.parse::<i64>().ok()?;
        let m = parts.next()?.parse::<i64>().ok()?;
        (y, m)
    };
    if !(1..=12).contains(&month) {
        return None;
    }
    Some(year * 12 + month - 1)
}

fn io_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}

/// Writes rejects as `loan_id,reason`.
pub fn write_rejects(path: impl AsRef<Path>, rejects: &[Reject]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(io_err(path))?;
    w.write_record(["loan_id", "reason"]).map_err(io_err(path))?;
    for r in rejects {
        w.write_record([r.loan_id.as_str(), r.reason.as_str()])
            .map_err(io_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a table using the default column map, with the months column
/// written directly. The output loads back through [`load_csv`] unchanged.
pub fn write_table_csv<W: Write>(table: &LoanTable, out: W) -> Result<()> {
    let map = ColumnMap::default();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = vec![&map.loan_id];
    header.extend(Feature::ALL.iter().map(|&f| map.feature(f)));
    header.extend([
        map.state.as_str(),
        &map.total_payment,
        &map.principal,
        &map.months_elapsed,
    ]);
    w.write_record(&header)?;
    for r in table.records() {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.loan_id.to_string());
        for f in Feature::ALL {
            row.push(match r.predictors.get(f) {
                None => "NA".to_string(),
                Some(FeatureValue::Numeric(x)) => x.to_string(),
                Some(FeatureValue::Categorical(s)) => s.clone(),
            });
        }
        row.push(
            match r.raw_state {
                RawState::FullyPaid => "Fully Paid",
                RawState::ChargedOff => "Charged Off",
                RawState::Intermediate => "Current",
            }
            .to_string(),
        );
        row.push(r.total_payment.to_string());
        row.push(r.principal.to_string());
        row.push(r.months_elapsed.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}
