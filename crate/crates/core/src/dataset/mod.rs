//! Loan tables: ingestion, sparse-feature pruning, train/test splitting and a
//! seeded synthetic generator.

mod csv_io;
mod synthetic;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loan_model::{derive_outcome_with, Feature, LoanRecord, ProfitOutcome, TargetOptions};

pub use csv_io::{
    load_csv, read_csv, write_rejects, write_table_csv, ColumnMap, LoadOptions, LoadReport, Reject,
    DEFAULT_MISSING_TOKENS,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

/// An ordered set of expired loans with their derived targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanTable {
    records: Vec<LoanRecord>,
    outcomes: Vec<ProfitOutcome>,
    schema_version: String,
    index: HashMap<u64, usize>,
}

impl LoanTable {
    pub const SCHEMA_VERSION: &'static str = "loan-table/v1";

    /// Validates every record and derives its outcome.
    pub fn from_records(records: Vec<LoanRecord>, targets: &TargetOptions) -> Result<Self> {
        let outcomes = records
            .iter()
            .map(|r| {
                r.validate()?;
                derive_outcome_with(r, targets)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(records, outcomes)
    }

    pub fn from_parts(records: Vec<LoanRecord>, outcomes: Vec<ProfitOutcome>) -> Result<Self> {
        if records.len() != outcomes.len() {
            return Err(Error::Structural(format!(
                "{} records but {} outcomes",
                records.len(),
                outcomes.len()
            )));
        }
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.loan_id, i).is_some() {
                return Err(Error::Structural(format!("duplicate loan_id {}", r.loan_id)));
            }
        }
        Ok(LoanTable {
            records,
            outcomes,
            schema_version: Self::SCHEMA_VERSION.to_string(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LoanRecord] {
        &self.records
    }

    pub fn outcomes(&self) -> &[ProfitOutcome] {
        &self.outcomes
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LoanRecord, &ProfitOutcome)> {
        self.records.iter().zip(&self.outcomes)
    }

    pub fn loan_ids(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.loan_id).collect()
    }

    pub fn position(&self, loan_id: u64) -> Option<usize> {
        self.index.get(&loan_id).copied()
    }

    pub fn get(&self, loan_id: u64) -> Option<(&LoanRecord, &ProfitOutcome)> {
        self.position(loan_id)
            .map(|i| (&self.records[i], &self.outcomes[i]))
    }

    pub fn statuses(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| f64::from(o.loan_status)).collect()
    }

    pub fn arrs(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.arr).collect()
    }

    /// Rows at `positions`, in the given order.
    pub fn subset(&self, positions: &[usize]) -> LoanTable {
        let records = positions.iter().map(|&i| self.records[i].clone()).collect();
        let outcomes = positions.iter().map(|&i| self.outcomes[i]).collect();
        // positions drawn from a table with unique ids stay unique unless repeated
        Self::from_parts(records, outcomes).expect("subset positions must be distinct")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// `floor(n * train_fraction)`, kept within `[1, n - 1]`.
    pub fn train_size(&self, n: usize) -> usize {
        let raw = (n as f64 * self.train_fraction + 1e-9).floor() as usize;
        raw.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Features whose missing fraction does not exceed `max_missing_fraction`,
/// in catalogue order.
pub fn prune_sparse_features(table: &LoanTable, max_missing_fraction: f64) -> Vec<Feature> {
    let n = table.len() as f64;
    Feature::ALL
        .into_iter()
        .filter(|&f| {
            let missing = table
                .records()
                .iter()
                .filter(|r| r.predictors.is_missing(f))
                .count() as f64;
            !(missing / n > max_missing_fraction)
        })
        .collect()
}

/// Seeded random partition into (train, test). Each side keeps the input's
/// row order.
pub fn split(table: &LoanTable, spec: &SplitSpec) -> Result<(LoanTable, LoanTable)> {
    spec.validate()?;
    let n = table.len();
    if n < 2 {
        return Err(Error::Size(format!("cannot split a table of {n} record(s)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let cut = spec.train_size(n);
    let (train, test) = order.split_at_mut(cut);
    train.sort_unstable();
    test.sort_unstable();
    Ok((table.subset(train), table.subset(test)))
}
