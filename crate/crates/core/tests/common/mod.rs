#![allow(dead_code)]

use loanprofit::dataset::LoanTable;
use loanprofit::gbdt::{
    build_histograms, find_best_split, BinMapper, BinStats, GbdtConfig, TIE_TOLERANCE,
};
use loanprofit::loan_model::{Feature, LoanRecord, Predictors, ProfitOutcome, RawState};
use loanprofit::preprocess::FeatureMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random split-search problem small enough for exhaustive search.
pub struct SplitCase {
    pub columns: Vec<Vec<f64>>,
    pub grads: Vec<f64>,
    pub hess: Vec<f64>,
    pub lambda: f64,
    pub min_leaf: usize,
}

pub fn random_split_case(seed: u64) -> SplitCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.gen_range(2..=256);
    let features = rng.gen_range(1..=8);
    let columns = (0..features)
        .map(|_| {
            let levels = [2usize, 3, 7, 40, 0][rng.gen_range(0..5)];
            (0..rows)
                .map(|_| {
                    if levels == 0 {
                        rng.gen_range(-5.0..5.0)
                    } else {
                        rng.gen_range(0..levels) as f64
                    }
                })
                .collect()
        })
        .collect();
    let unit_hess = rng.gen_bool(0.5);
    SplitCase {
        columns,
        grads: (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        hess: (0..rows)
            .map(|_| if unit_hess { 1.0 } else { rng.gen_range(0.05..1.0) })
            .collect(),
        lambda: [0.0, 0.5, 1.0, 3.0][rng.gen_range(0..4)],
        min_leaf: rng.gen_range(1..=10),
    }
}

/// Exhaustive search over every feature and every cut between consecutive
/// distinct values, with sums taken directly over rows. Returns
/// `(feature, rank of the last value sent left, gain)`.
pub fn brute_force_split(case: &SplitCase) -> Option<(usize, usize, f64)> {
    let n = case.grads.len();
    let score = |g: f64, h: f64| {
        if h + case.lambda > 0.0 {
            g * g / (h + case.lambda)
        } else {
            0.0
        }
    };
    let g_all: f64 = case.grads.iter().sum();
    let h_all: f64 = case.hess.iter().sum();
    let mut best: Option<(usize, usize, f64)> = None;
    for (f, col) in case.columns.iter().enumerate() {
        let mut distinct = col.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        for (rank, &cut) in distinct.iter().enumerate().take(distinct.len().saturating_sub(1)) {
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            let (mut gr, mut hr) = (0.0, 0.0);
            for ((&x, &g), &h) in col.iter().zip(&case.grads).zip(&case.hess) {
                if x <= cut {
                    gl += g;
                    hl += h;
                    nl += 1;
                } else {
                    gr += g;
                    hr += h;
                }
            }
            if nl < case.min_leaf || n - nl < case.min_leaf {
                continue;
            }
            let gain = score(gl, hl) + score(gr, hr) - score(g_all, h_all);
            let better = match best {
                None => true,
                Some((_, _, g)) => gain - g > TIE_TOLERANCE * g.abs(),
            };
            if gain > 0.0 && better {
                best = Some((f, rank, gain));
            }
        }
    }
    best
}

/// The library's answer for the same case: `(feature, bin, gain)`.
pub fn library_split(case: &SplitCase) -> Option<(usize, usize, f64)> {
    let n = case.grads.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| case.columns.iter().map(|c| c[i]).collect())
        .collect();
    let matrix = FeatureMatrix::from_rows(&rows).unwrap();
    let mapper = BinMapper::build(&matrix, 256);
    let data = mapper.bin_matrix(&matrix);
    let all: Vec<u32> = (0..n as u32).collect();
    let features: Vec<usize> = (0..case.columns.len()).collect();
    let hists = build_histograms(&data, &case.grads, &case.hess, &all, &features);
    let parent = BinStats::over_rows(&all, &case.grads, &case.hess);
    let config = GbdtConfig {
        lambda_l2: case.lambda,
        min_samples_leaf: case.min_leaf,
        ..GbdtConfig::default()
    };
    find_best_split(&hists, &parent, &config)
        .unwrap()
        .map(|c| (c.feature, usize::from(c.bin), c.gain))
}

pub fn fixture_loan(id: u64, grade: char, defaulted: bool, arr: f64) -> (LoanRecord, ProfitOutcome) {
    let mut p = Predictors::default();
    p.set_label(Feature::Grade, grade.to_string());
    p.set_label(Feature::SubGrade, format!("{grade}3"));
    let record = LoanRecord {
        loan_id: id,
        predictors: p,
        raw_state: if defaulted { RawState::ChargedOff } else { RawState::FullyPaid },
        total_payment: 0.0,
        principal: 1000.0,
        months_elapsed: 36,
    };
    let outcome = ProfitOutcome {
        loan_status: u8::from(defaulted),
        arr,
        years: 3.0,
    };
    (record, outcome)
}

/// Top-50 grade mix `(grade, selected, defaults)` of the one-stage model.
pub const ONE_STAGE_GRADES: [(char, usize, usize); 6] =
    [('B', 1, 0), ('C', 7, 1), ('D', 14, 1), ('E', 14, 2), ('F', 10, 1), ('G', 4, 1)];
/// Top-50 grade mix of the two-stage model.
pub const TWO_STAGE_GRADES: [(char, usize, usize); 4] =
    [('D', 2, 0), ('E', 13, 1), ('F', 30, 3), ('G', 5, 2)];

/// Builds 50 loans with the given grade mix. Paid loans realize `paid_arr`
/// and defaults `default_arr`. Ids start at `first_id`.
pub fn fixture_selection(
    mix: &[(char, usize, usize)],
    paid_arr: f64,
    default_arr: f64,
    first_id: u64,
) -> Vec<(LoanRecord, ProfitOutcome)> {
    let mut out = Vec::new();
    let mut id = first_id;
    for &(grade, selected, defaults) in mix {
        for i in 0..selected {
            let defaulted = i < defaults;
            out.push(fixture_loan(id, grade, defaulted, if defaulted { default_arr } else { paid_arr }));
            id += 1;
        }
    }
    out
}

/// Both 50-loan selections in one table. Paid/default ARRs are chosen so the
/// averages come out at 1.09 (ids 1..=50) and 1.13 (ids 101..=150).
pub fn selection_fixture() -> LoanTable {
    let mut loans = fixture_selection(&ONE_STAGE_GRADES, 1.15, 0.65, 1);
    loans.extend(fixture_selection(&TWO_STAGE_GRADES, 1.2, 0.6, 101));
    let (records, outcomes) = loans.into_iter().unzip();
    LoanTable::from_parts(records, outcomes).unwrap()
}
