//! Fit-on-train feature encoding: one-hot for categoricals, min-max for
//! numerics, median imputation for residual missing numeric cells.

use std::collections::{HashMap, HashSet};

use crate::dataset::LoanTable;
use crate::error::{Error, Result};
use crate::loan_model::{Feature, FeatureKind};
use crate::textfmt::{self, Lines};

/// Label used for a missing categorical cell; it is one-hot encoded like
/// any other category.
pub const MISSING_CATEGORY: &str = "<missing>";
/// Suffix of the catch-all column of truncated categoricals.
pub const OTHER_CATEGORY: &str = "<other>";

const ENCODER_MAGIC: &str = "loanprofit-encoder";
const ENCODER_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOptions {
    /// Categories kept for high-cardinality features, by training frequency.
    pub top_k: usize,
    pub high_cardinality: Vec<Feature>,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        EncoderOptions {
            top_k: 50,
            high_cardinality: vec![Feature::EmpTitle, Feature::ZipCode, Feature::AddrState],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureEncoding {
    Numeric {
        feature: Feature,
        min: f64,
        max: f64,
        impute: f64,
    },
    Categorical {
        feature: Feature,
        categories: Vec<String>,
        other_bucket: bool,
    },
}

impl FeatureEncoding {
    pub fn feature(&self) -> Feature {
        match self {
            FeatureEncoding::Numeric { feature, .. } | FeatureEncoding::Categorical { feature, .. } => {
                *feature
            }
        }
    }

    fn width(&self) -> usize {
        match self {
            FeatureEncoding::Numeric { .. } => 1,
            FeatureEncoding::Categorical {
                categories,
                other_bucket,
                ..
            } => categories.len() + usize::from(*other_bucket),
        }
    }
}

/// Learned encoding. Immutable once fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    encodings: Vec<FeatureEncoding>,
    columns: Vec<String>,
}

fn output_columns(encodings: &[FeatureEncoding]) -> Result<Vec<String>> {
    let mut columns = Vec::new();
    for enc in encodings {
        match enc {
            FeatureEncoding::Numeric { feature, .. } => columns.push(feature.name().to_string()),
            FeatureEncoding::Categorical {
                feature,
                categories,
                other_bucket,
            } => {
                columns.extend(categories.iter().map(|c| format!("{}_{}", feature.name(), c)));
                if *other_bucket {
                    columns.push(format!("{}_{}", feature.name(), OTHER_CATEGORY));
                }
            }
        }
    }
    let mut seen = HashSet::new();
    for c in &columns {
        if !seen.insert(c.as_str()) {
            return Err(Error::Encoding(format!("duplicate output column `{c}`")));
        }
    }
    Ok(columns)
}

impl EncoderSpec {
    pub fn from_encodings(encodings: Vec<FeatureEncoding>) -> Result<Self> {
        for enc in &encodings {
            match enc {
                FeatureEncoding::Numeric {
                    feature, min, max, ..
                } if !(min <= max) => {
                    return Err(Error::Encoding(format!("{feature}: min {min} exceeds max {max}")))
                }
                FeatureEncoding::Categorical {
                    feature,
                    categories,
                    ..
                } if categories.is_empty() => {
                    return Err(Error::Encoding(format!("{feature}: empty category list")))
                }
                _ => {}
            }
        }
        let columns = output_columns(&encodings)?;
        Ok(EncoderSpec { encodings, columns })
    }

    pub fn encodings(&self) -> &[FeatureEncoding] {
        &self.encodings
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn features(&self) -> Vec<Feature> {
        self.encodings.iter().map(FeatureEncoding::feature).collect()
    }

    pub fn encoding(&self, feature: Feature) -> Option<&FeatureEncoding> {
        self.encodings.iter().find(|e| e.feature() == feature)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{ENCODER_MAGIC}\t{ENCODER_VERSION}\n");
        out.push_str(&format!("features\t{}\n", self.encodings.len()));
        for enc in &self.encodings {
            let fields: Vec<String> = match enc {
                FeatureEncoding::Numeric {
                    feature,
                    min,
                    max,
                    impute,
                } => vec![
                    "numeric".into(),
                    feature.name().into(),
                    min.to_string(),
                    max.to_string(),
                    impute.to_string(),
                ],
                FeatureEncoding::Categorical {
                    feature,
                    categories,
                    other_bucket,
                } => {
                    let mut f = vec![
                        "categorical".into(),
                        feature.name().into(),
                        u8::from(*other_bucket).to_string(),
                    ];
                    f.extend(categories.iter().cloned());
                    f
                }
            };
            out.push_str(&textfmt::join(&fields));
            out.push('\n');
        }
        out.push_str(&format!("columns\t{}\n", self.columns.len()));
        for c in &self.columns {
            out.push_str(&textfmt::escape(c));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new("encoder spec", text);
        let header = lines.expect_fields()?;
        if header != [ENCODER_MAGIC, ENCODER_VERSION] {
            return Err(lines.error("unsupported encoder header"));
        }
        let n = lines.expect_kv("features")?;
        let n: usize = lines.parse(&n)?;
        let mut encodings = Vec::with_capacity(n);
        for _ in 0..n {
            let fields = lines.expect_fields()?;
            let feature = fields
                .get(1)
                .and_then(|name| Feature::from_name(name))
                .ok_or_else(|| lines.error("unknown feature"))?;
            let enc = match (fields[0].as_str(), feature.kind()) {
                ("numeric", FeatureKind::Numeric) if fields.len() == 5 => FeatureEncoding::Numeric {
                    feature,
                    min: lines.parse(&fields[2])?,
                    max: lines.parse(&fields[3])?,
                    impute: lines.parse(&fields[4])?,
                },
                ("categorical", FeatureKind::Categorical) if fields.len() >= 4 => {
                    FeatureEncoding::Categorical {
                        feature,
                        other_bucket: match fields[2].as_str() {
                            "0" => false,
                            "1" => true,
                            _ => return Err(lines.error("other-bucket flag must be 0 or 1")),
                        },
                        categories: fields[3..].to_vec(),
                    }
                }
                _ => return Err(lines.error("malformed feature encoding")),
            };
            encodings.push(enc);
        }
        let m = lines.expect_kv("columns")?;
        let m: usize = lines.parse(&m)?;
        let mut columns = Vec::with_capacity(m);
        for _ in 0..m {
            let fields = lines.expect_fields()?;
            if fields.len() != 1 {
                return Err(lines.error("expected one column name"));
            }
            columns.extend(fields);
        }
        if lines.next_fields()?.is_some() {
            return Err(lines.error("trailing content"));
        }
        let spec = EncoderSpec::from_encodings(encodings)?;
        if spec.columns != columns {
            return Err(Error::Encoding(
                "stored column names disagree with the encodings".into(),
            ));
        }
        Ok(spec)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Learns the encoding from training rows only.
pub fn fit_encoder(
    train: &LoanTable,
    retained: &[Feature],
    options: &EncoderOptions,
) -> Result<EncoderSpec> {
    if train.is_empty() {
        return Err(Error::Encoding("cannot fit an encoder on an empty table".into()));
    }
    if retained.is_empty() {
        return Err(Error::Encoding("no features retained".into()));
    }
    let mut encodings = Vec::with_capacity(retained.len());
    for &feature in retained {
        let records = train.records();
        match feature.kind() {
            FeatureKind::Numeric => {
                let mut observed: Vec<f64> = records
                    .iter()
                    .filter_map(|r| r.predictors.numeric(feature))
                    .collect();
                if observed.is_empty() {
                    return Err(Error::Encoding(format!("{feature} has no observed values")));
                }
                let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
                let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let impute = median(&mut observed);
                encodings.push(FeatureEncoding::Numeric {
                    feature,
                    min,
                    max,
                    impute,
                });
            }
            FeatureKind::Categorical => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                let mut observed = 0usize;
                for r in records {
                    let label = match r.predictors.label(feature) {
                        Some(l) => {
                            observed += 1;
                            l
                        }
                        None => MISSING_CATEGORY,
                    };
                    *counts.entry(label).or_default() += 1;
                }
                if observed == 0 {
                    return Err(Error::Encoding(format!("{feature} has no observed values")));
                }
                let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
                let truncate = options.high_cardinality.contains(&feature);
                if truncate {
                    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                    ranked.truncate(options.top_k.max(1));
                }
                let mut categories: Vec<String> = ranked.into_iter().map(|(l, _)| l.to_string()).collect();
                categories.sort();
                encodings.push(FeatureEncoding::Categorical {
                    feature,
                    categories,
                    other_bucket: truncate,
                });
            }
        }
    }
    EncoderSpec::from_encodings(encodings)
}

/// Dense row-major matrix with named columns and the loan id of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    column_names: Vec<String>,
    row_ids: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>, row_ids: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        let (rows, cols) = (row_ids.len(), column_names.len());
        if values.len() != rows * cols {
            return Err(Error::Structural(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = column_names.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Structural(format!("duplicate column `{dup}`")));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            column_names,
            row_ids,
        })
    }

    /// Builds a matrix from row vectors with generated names `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Structural("ragged rows".into()));
        }
        let names = (0..cols).map(|j| format!("f{j}")).collect();
        let ids = (0..rows.len() as u64).collect();
        Self::new(names, ids, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |r| self.get(r, col))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            rows: rows.len(),
            cols: self.cols,
            values,
            column_names: self.column_names.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// New matrix with `values` appended as the last column.
    pub fn append_column(&self, name: &str, values: &[f64]) -> Result<FeatureMatrix> {
        if values.len() != self.rows {
            return Err(Error::Structural(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.rows
            )));
        }
        if self.column_index(name).is_some() {
            return Err(Error::Structural(format!("column `{name}` already present")));
        }
        let cols = self.cols + 1;
        let mut out = Vec::with_capacity(self.rows * cols);
        for (r, &v) in values.iter().enumerate() {
            out.extend_from_slice(self.row(r));
            out.push(v);
        }
        let mut names = self.column_names.clone();
        names.push(name.to_string());
        Ok(FeatureMatrix {
            rows: self.rows,
            cols,
            values: out,
            column_names: names,
            row_ids: self.row_ids.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnseenCategory {
    pub loan_id: u64,
    pub feature: Feature,
    pub value: String,
}

/// Rows whose categorical value was not seen during fitting and had no
/// catch-all column; their one-hot group is all zeros.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransformReport {
    pub unseen: Vec<UnseenCategory>,
}

impl TransformReport {
    pub fn unseen_rows(&self) -> usize {
        self.unseen
            .iter()
            .map(|u| u.loan_id)
            .collect::<HashSet<_>>()
            .len()
    }
}

/// Applies a fitted encoding. Row order is preserved.
pub fn transform(table: &LoanTable, spec: &EncoderSpec) -> (FeatureMatrix, TransformReport) {
    let cols = spec.columns.len();
    let lookups: Vec<Option<HashMap<&str, usize>>> = spec
        .encodings
        .iter()
        .map(|e| match e {
            FeatureEncoding::Categorical { categories, .. } => Some(
                categories
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.as_str(), i))
                    .collect(),
            ),
            FeatureEncoding::Numeric { .. } => None,
        })
        .collect();

    let mut values = vec![0.0; table.len() * cols];
    let mut report = TransformReport::default();
    for (r, record) in table.records().iter().enumerate() {
        let row = &mut values[r * cols..(r + 1) * cols];
        let mut offset = 0;
        for (enc, lookup) in spec.encodings.iter().zip(&lookups) {
            match enc {
                FeatureEncoding::Numeric {
                    feature,
                    min,
                    max,
                    impute,
                } => {
                    let x = record.predictors.numeric(*feature).unwrap_or(*impute);
                    row[offset] = min_max(x, *min, *max);
                }
                FeatureEncoding::Categorical {
                    feature,
                    categories,
                    other_bucket,
                } => {
                    let label = record.predictors.label(*feature).unwrap_or(MISSING_CATEGORY);
                    match lookup.as_ref().and_then(|m| m.get(label)) {
                        Some(&i) => row[offset + i] = 1.0,
                        None if *other_bucket => row[offset + categories.len()] = 1.0,
                        None => report.unseen.push(UnseenCategory {
                            loan_id: record.loan_id,
                            feature: *feature,
                            value: label.to_string(),
                        }),
                    }
                }
            }
            offset += enc.width();
        }
    }
    let matrix = FeatureMatrix {
        rows: table.len(),
        cols,
        values,
        column_names: spec.columns.clone(),
        row_ids: table.loan_ids(),
    };
    (matrix, report)
}

/// `clamp((x - min) / (max - min), 0, 1)`, or 0 for a constant feature.
pub fn min_max(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((x - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
