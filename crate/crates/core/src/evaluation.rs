//! Top-k profitability comparison and the report tables built on it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::LoanTable;
use crate::error::{Error, Result};
use crate::loan_model::Grade;
use crate::pipeline::ScoredLoan;

pub const TOPK_FILE: &str = "topk_curve.csv";
pub const GRADE_FILE: &str = "grade_table.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CROSS_FILE: &str = "cross_table.csv";
pub const TEXT_FILE: &str = "report.txt";

/// `(loan_id, predicted ARR)` pairs from scored loans.
pub fn arr_scores(scored: &[ScoredLoan]) -> Vec<(u64, f64)> {
    scored.iter().map(|s| (s.loan_id, s.arr_hat)).collect()
}

fn ranked(scores: &[(u64, f64)]) -> Result<Vec<(u64, f64)>> {
    if let Some((id, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
        return Err(Error::Input(format!("loan {id} has non-finite score {s}")));
    }
    let mut order = scores.to_vec();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(order)
}

/// Ids of the `k` highest scores; ties go to the lower loan id.
pub fn top_k_selection(scores: &[(u64, f64)], k: usize) -> Result<Vec<u64>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Size(format!(
            "k = {k} outside 1..={} scored loans",
            scores.len()
        )));
    }
    Ok(ranked(scores)?.into_iter().take(k).map(|(id, _)| id).collect())
}

/// Mean realized ARR of the top `k` loans, for `k = 1..=k_max`.
pub fn topk_curve(scores: &[(u64, f64)], table: &LoanTable, k_max: usize) -> Result<Vec<(usize, f64)>> {
    let selection = top_k_selection(scores, k_max)?;
    let mut curve = Vec::with_capacity(k_max);
    let mut sum = 0.0;
    for (i, id) in selection.iter().enumerate() {
        let (_, outcome) = table.get(*id).ok_or(Error::Lookup(*id))?;
        sum += outcome.arr;
        curve.push((i + 1, sum / (i + 1) as f64));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradeCount {
    pub grade: Grade,
    pub selected: usize,
    pub defaults: usize,
}

/// Selected and defaulted counts for each grade A..G.
pub fn grade_constitution(selection: &[u64], table: &LoanTable) -> Result<Vec<GradeCount>> {
    let mut counts: Vec<GradeCount> = Grade::ALL
        .iter()
        .map(|&grade| GradeCount {
            grade,
            selected: 0,
            defaults: 0,
        })
        .collect();
    for id in selection {
        let (record, outcome) = table.get(*id).ok_or(Error::Lookup(*id))?;
        let grade = record.grade().ok_or_else(|| Error::InvalidRecord {
            loan_id: *id,
            reason: "missing grade".into(),
        })?;
        let slot = &mut counts[grade.index()];
        slot.selected += 1;
        slot.defaults += usize::from(outcome.is_default());
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub average_arr: f64,
    pub default_rate: f64,
}

pub fn summary_metrics(selection: &[u64], table: &LoanTable) -> Result<Summary> {
    if selection.is_empty() {
        return Err(Error::Size("empty selection".into()));
    }
    let (mut arr, mut defaults) = (0.0, 0usize);
    for id in selection {
        let (_, outcome) = table.get(*id).ok_or(Error::Lookup(*id))?;
        arr += outcome.arr;
        defaults += usize::from(outcome.is_default());
    }
    let n = selection.len() as f64;
    Ok(Summary {
        average_arr: arr / n,
        default_rate: defaults as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrBand {
    Any,
    AtMostOne,
    AboveOne,
}

impl ArrBand {
    pub fn label(self) -> &'static str {
        match self {
            ArrBand::Any => "any",
            ArrBand::AtMostOne => "<=1",
            ArrBand::AboveOne => ">1",
        }
    }

    fn contains(self, arr: f64) -> bool {
        match self {
            ArrBand::Any => true,
            ArrBand::AtMostOne => arr <= 1.0,
            ArrBand::AboveOne => arr > 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossLayout {
    /// Status by `ARR <= 1` / `ARR > 1` for both statuses.
    Full,
    /// Fully paid loans in one row; charged-off loans split at ARR 1.
    PaidPooled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossRow {
    pub loan_status: u8,
    pub band: ArrBand,
    pub count: usize,
    pub proportion: f64,
}

/// Status by ARR-band counts over the whole table, full 2x2 layout.
pub fn cross_table(table: &LoanTable) -> Vec<CrossRow> {
    cross_table_with(table, CrossLayout::Full)
}

/// Cross table in the given layout. Empty cells are omitted.
pub fn cross_table_with(table: &LoanTable, layout: CrossLayout) -> Vec<CrossRow> {
    let cells: &[(u8, ArrBand)] = match layout {
        CrossLayout::Full => &[
            (0, ArrBand::AtMostOne),
            (0, ArrBand::AboveOne),
            (1, ArrBand::AtMostOne),
            (1, ArrBand::AboveOne),
        ],
        CrossLayout::PaidPooled => &[(0, ArrBand::Any), (1, ArrBand::AtMostOne), (1, ArrBand::AboveOne)],
    };
    let total = table.len();
    cells
        .iter()
        .filter_map(|&(status, band)| {
            let count = table
                .outcomes()
                .iter()
                .filter(|o| o.loan_status == status && band.contains(o.arr))
                .count();
            (count > 0).then(|| CrossRow {
                loan_status: status,
                band,
                count,
                proportion: count as f64 / total as f64,
            })
        })
        .collect()
}

pub fn rmse(predicted: &[f64], realized: &[f64]) -> Result<f64> {
    if predicted.len() != realized.len() || predicted.is_empty() {
        return Err(Error::Size(format!(
            "rmse over {} predictions and {} outcomes",
            predicted.len(),
            realized.len()
        )));
    }
    let sse: f64 = predicted
        .iter()
        .zip(realized)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// Area under the ROC curve: the probability a random positive outscores a
/// random negative, with ties counted as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Size("scores and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateTarget("auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average ranks over tied groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&r| labels[r] == 1).count() as f64 * avg_rank;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Everything reported for one scored model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub name: String,
    pub k: usize,
    pub curve: Vec<(usize, f64)>,
    pub grades: Vec<GradeCount>,
    pub summary: Summary,
    pub rmse: f64,
}

pub fn evaluate_model(name: &str, scored: &[ScoredLoan], table: &LoanTable, k: usize) -> Result<ModelEvaluation> {
    let scores = arr_scores(scored);
    let curve = topk_curve(&scores, table, k)?;
    let selection = top_k_selection(&scores, k)?;
    let mut realized = Vec::with_capacity(scored.len());
    for s in scored {
        realized.push(table.get(s.loan_id).ok_or(Error::Lookup(s.loan_id))?.1.arr);
    }
    let predicted: Vec<f64> = scored.iter().map(|s| s.arr_hat).collect();
    Ok(ModelEvaluation {
        name: name.to_string(),
        k,
        curve,
        grades: grade_constitution(&selection, table)?,
        summary: summary_metrics(&selection, table)?,
        rmse: rmse(&predicted, &realized)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub models: Vec<ModelEvaluation>,
    pub cross_table: Vec<CrossRow>,
}

impl EvaluationReport {
    pub fn topk_csv(&self) -> String {
        let mut s = String::from("k");
        for m in &self.models {
            s.push(',');
            s.push_str(&m.name);
        }
        s.push('\n');
        let k_max = self.models.iter().map(|m| m.curve.len()).max().unwrap_or(0);
        for k in 0..k_max {
            let _ = write!(s, "{}", k + 1);
            for m in &self.models {
                match m.curve.get(k) {
                    Some((_, v)) => {
                        let _ = write!(s, ",{v}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn grade_csv(&self) -> String {
        let mut s = String::from("model,grade,selected,defaults\n");
        for m in &self.models {
            for g in &m.grades {
                let _ = writeln!(s, "{},{},{},{}", m.name, g.grade, g.selected, g.defaults);
            }
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("model,k,average_arr,default_rate,rmse\n");
        for m in &self.models {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                m.name, m.k, m.summary.average_arr, m.summary.default_rate, m.rmse
            );
        }
        s
    }

    pub fn cross_csv(&self) -> String {
        let mut s = String::from("loan_status,arr_band,count,proportion\n");
        for r in &self.cross_table {
            let _ = writeln!(s, "{},{},{},{}", r.loan_status, r.band.label(), r.count, r.proportion);
        }
        s
    }

    /// Plain-text tables for reading in a terminal.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let k = self.models.first().map_or(0, |m| m.k);
        let _ = writeln!(s, "Top {k} loans by grade: selected (defaults)");
        let _ = write!(s, "{:<6}", "grade");
        for m in &self.models {
            let _ = write!(s, "{:>14}", m.name);
        }
        s.push('\n');
        for (gi, grade) in Grade::ALL.iter().enumerate() {
            let _ = write!(s, "{:<6}", grade.to_string());
            for m in &self.models {
                let g = m.grades[gi];
                let cell = if g.selected == 0 {
                    "-".to_string()
                } else {
                    format!("{} ({})", g.selected, g.defaults)
                };
                let _ = write!(s, "{cell:>14}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\nTop {k} summary");
        let _ = writeln!(s, "{:<14}{:>12}{:>14}{:>10}", "model", "avg ARR", "default rate", "RMSE");
        for m in &self.models {
            let _ = writeln!(
                s,
                "{:<14}{:>12.2}{:>14.2}{:>10.4}",
                m.name, m.summary.average_arr, m.summary.default_rate, m.rmse
            );
        }
        let _ = writeln!(s, "\nloan_status by ARR");
        for r in &self.cross_table {
            let _ = writeln!(
                s,
                "{:<4}{:<6}{:>10}{:>10.2}%",
                r.loan_status,
                r.band.label(),
                r.count,
                100.0 * r.proportion
            );
        }
        let _ = writeln!(s, "\nMean realized ARR of the top k loans");
        for &kk in &[1usize, 5, 10, 25, 50, 100] {
            if kk > k {
                break;
            }
            let _ = write!(s, "k={kk:<5}");
            for m in &self.models {
                let _ = write!(s, "{:>14.4}", m.curve[kk - 1].1);
            }
            s.push('\n');
        }
        s
    }

    /// Writes the four CSV reports and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            (TOPK_FILE, self.topk_csv()),
            (GRADE_FILE, self.grade_csv()),
            (SUMMARY_FILE, self.summary_csv()),
            (CROSS_FILE, self.cross_csv()),
            (TEXT_FILE, self.render_text()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
