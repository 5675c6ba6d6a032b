//! Seeded synthetic loans with Lending Club-like structure.
//!
//! Each loan draws a platform risk score `r ~ U(0,1)` that fixes its grade and
//! sub-grade (and through them the interest rate), plus a hidden borrower
//! quality `u ~ N(0,1)` the platform does not price. Default probability rises
//! with both. Credit-worthiness columns are noisy functions of `r` and `u`, so
//! PD is learnable from the predictors but not from the grade alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::loan_model::{Feature, Grade, LoanRecord, Predictors, RawState, TargetOptions};

use super::LoanTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// Overall charged-off fraction the PD curve is calibrated to.
    pub default_rate: f64,
    /// Population share of grades A..G.
    pub grade_shares: [f64; 7],
    /// Annual interest rate of sub-grade A1.
    pub base_rate: f64,
    /// Rate increment per sub-grade step (A1 -> A2 -> ... -> G5).
    pub rate_step: f64,
    /// Uncalibrated PD at grades A..G; interpolated linearly across sub-grades.
    pub pd_by_grade: [f64; 7],
    /// Log-odds weight of the hidden borrower quality.
    pub hidden_risk_weight: f64,
    /// Multiplier on the noise of the credit-worthiness columns.
    pub feature_noise: f64,
    /// Chance a fully paid loan is repaid before term.
    pub prepay_probability: f64,
    /// Upper bound of the recovered fraction of outstanding balance on default.
    pub max_recovery: f64,
    pub targets: TargetOptions,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            default_rate: 0.1956,
            grade_shares: [0.16, 0.26, 0.24, 0.16, 0.10, 0.05, 0.03],
            base_rate: 0.06,
            rate_step: 0.0075,
            pd_by_grade: [0.05, 0.10, 0.17, 0.24, 0.31, 0.38, 0.45],
            hidden_risk_weight: 1.0,
            feature_noise: 1.0,
            prepay_probability: 0.35,
            max_recovery: 0.12,
            targets: TargetOptions::default(),
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let total: f64 = self.grade_shares.iter().sum();
        if self.grade_shares.iter().any(|&s| !(s >= 0.0)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config("grade_shares must be non-negative and sum to 1".into()));
        }
        if !(self.default_rate > 0.0 && self.default_rate < 1.0) {
            return Err(Error::Config("default_rate must lie in (0, 1)".into()));
        }
        if self.pd_by_grade.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Config("pd_by_grade entries must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

const PURPOSES: [(&str, f64); 8] = [
    ("debt_consolidation", 0.56),
    ("credit_card", 0.22),
    ("home_improvement", 0.07),
    ("other", 0.06),
    ("major_purchase", 0.03),
    ("small_business", 0.02),
    ("car", 0.02),
    ("medical", 0.02),
];

const STATES: [&str; 15] = [
    "CA", "TX", "NY", "FL", "IL", "NJ", "PA", "OH", "GA", "VA", "NC", "MI", "MA", "AZ", "WA",
];

const TITLES: [&str; 30] = [
    "Teacher", "Manager", "Registered Nurse", "Owner", "Supervisor", "Sales", "Driver",
    "Project Manager", "Office Manager", "General Manager", "Director", "Engineer", "Nurse",
    "Truck Driver", "Operations Manager", "Accountant", "Police Officer", "Technician",
    "Administrative Assistant", "Mechanic", "Store Manager", "Analyst", "Software Engineer",
    "Attorney", "President", "Consultant", "Electrician", "Pharmacist", "Cashier", "Server",
];

struct Latent {
    record: LoanRecord,
    risk_logit: f64,
    rate: f64,
    term: u32,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, weighted: &'a [(T, f64)]) -> &'a T {
    let total: f64 = weighted.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen::<f64>() * total;
    for (item, w) in weighted {
        if x < *w {
            return item;
        }
        x -= w;
    }
    &weighted[weighted.len() - 1].0
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn amortized_payment(principal: f64, annual_rate: f64, months: u32) -> f64 {
    let i = annual_rate / 12.0;
    principal * i / (1.0 - (1.0 + i).powi(-(months as i32)))
}

/// Outstanding balance after `k` scheduled payments.
fn balance_after(principal: f64, annual_rate: f64, payment: f64, k: u32) -> f64 {
    let i = annual_rate / 12.0;
    let g = (1.0 + i).powi(k as i32);
    (principal * g - payment * (g - 1.0) / i).max(0.0)
}

fn draw_latent(id: u64, cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Latent {
    let noise = cfg.feature_noise;
    let r: f64 = rng.gen();
    let u = normal(rng);

    // grade by r-quantile, sub-grade by position inside the grade band
    let mut lo = 0.0;
    let mut grade_idx = 6;
    for (g, share) in cfg.grade_shares.iter().enumerate() {
        if r < lo + share || g == 6 {
            grade_idx = g;
            break;
        }
        lo += share;
    }
    let share = cfg.grade_shares[grade_idx].max(f64::EPSILON);
    let level = (((r - lo) / share * 5.0).floor() as i64).clamp(0, 4) as usize;
    let grade = Grade::ALL[grade_idx];
    let step = grade_idx * 5 + level;
    let position = step as f64 / 34.0;

    let rate = (cfg.base_rate + cfg.rate_step * step as f64 + 0.002 * normal(rng)).max(0.03);
    let term = if rng.gen::<f64>() < 0.08 + 0.06 * grade_idx as f64 {
        60
    } else {
        36
    };
    let amount = round_to(
        (9.3 + 0.05 * grade_idx as f64 + 0.55 * normal(rng))
            .exp()
            .clamp(1000.0, 40000.0),
        25.0,
    );
    let installment = cents(amortized_payment(amount, rate, term));

    // PD curve: linear across sub-grades between the per-grade anchors
    let seg = (position * 6.0).min(5.999_999);
    let (k, frac) = (seg.floor() as usize, seg.fract());
    let base_pd = cfg.pd_by_grade[k] * (1.0 - frac) + cfg.pd_by_grade[k + 1] * frac;
    let purpose = *pick(rng, &PURPOSES);
    let mut risk_logit = logit(base_pd) + cfg.hidden_risk_weight * u;
    if purpose == "small_business" {
        risk_logit += 0.35;
    }

    let centred = r - 0.5;
    let fico_low = round_to(700.0 - 70.0 * centred - 22.0 * u + 15.0 * noise * normal(rng), 5.0)
        .clamp(660.0, 845.0);
    let dti = cents((18.0 + 6.0 * centred + 3.5 * u + 6.0 * noise * normal(rng)).clamp(0.0, 45.0));
    let inq = (0.7 + 1.0 * r + 0.45 * u + 0.9 * noise * normal(rng)).round().max(0.0);
    let revol_util =
        round_to((50.0 + 15.0 * centred + 9.0 * u + 20.0 * noise * normal(rng)).clamp(0.0, 120.0), 0.1);
    let annual_inc = round_to(
        (11.0 - 0.15 * r - 0.12 * u + 0.45 * noise * normal(rng)).exp(),
        100.0,
    )
    .max(4000.0);
    let count = |rng: &mut ChaCha8Rng, base: f64| -> f64 {
        let mut n = 0.0;
        while n < 5.0 && rng.gen::<f64>() < sigmoid(base + 0.6 * u) {
            n += 1.0;
        }
        n
    };
    let delinq = count(rng, -2.0);
    let pub_rec = count(rng, -2.3);
    let acc_now = if rng.gen::<f64>() < sigmoid(-5.0 + 0.8 * u) { 1.0 } else { 0.0 };
    let emp_length = (5.5 - 1.0 * u + 3.0 * normal(rng)).round().clamp(0.0, 10.0);
    let open_acc = (11.0 + 4.0 * normal(rng)).round().max(1.0);
    let total_acc = open_acc + 2.0 + (10.0 * normal(rng)).abs().round();
    let revol_bal = (9.3 + 0.9 * normal(rng)).exp().round();
    let cr_line = (190.0 - 25.0 * u + 70.0 * normal(rng)).round().clamp(36.0, 700.0);

    let mut p = Predictors::default();
    p.set_label(
        Feature::ApplicationType,
        if rng.gen::<f64>() < 0.05 { "Joint App" } else { "Individual" },
    );
    p.set_numeric(Feature::Dti, dti);
    p.set_label(Feature::Grade, grade.to_string());
    p.set_label(Feature::SubGrade, format!("{}{}", grade, level + 1));
    p.set_label(
        Feature::InitialListStatus,
        if rng.gen::<f64>() < 0.55 { "w" } else { "f" },
    );
    p.set_numeric(Feature::Installment, installment);
    p.set_numeric(Feature::LoanAmnt, amount);
    p.set_label(Feature::Purpose, purpose);
    p.set_label(Feature::Term, format!("{term} months"));
    let verified = 0.3 + 0.08 * grade_idx as f64;
    let v: f64 = rng.gen();
    p.set_label(
        Feature::VerificationStatus,
        if v < verified {
            "Verified"
        } else if v < verified + 0.35 {
            "Source Verified"
        } else {
            "Not Verified"
        },
    );
    p.set_numeric(Feature::AccNowDelinq, acc_now);
    p.set_numeric(Feature::Delinq2yrs, delinq);
    p.set_numeric(Feature::CrLineMonth, cr_line);
    p.set_numeric(Feature::FicoRangeLow, fico_low);
    p.set_numeric(Feature::FicoRangeHigh, fico_low + 4.0);
    p.set_numeric(Feature::InqLast6mths, inq);
    p.set_numeric(Feature::OpenAcc, open_acc);
    p.set_numeric(Feature::PubRec, pub_rec);
    p.set_numeric(Feature::RevolBal, revol_bal);
    if rng.gen::<f64>() >= 0.001 {
        p.set_numeric(Feature::RevolUtil, revol_util);
    }
    p.set_numeric(Feature::TotalAcc, total_acc);
    let state = rng.gen_range(0..STATES.len());
    p.set_label(Feature::AddrState, STATES[state]);
    p.set_numeric(Feature::AnnualInc, annual_inc);
    if rng.gen::<f64>() >= 0.05 {
        p.set_numeric(Feature::EmpLength, emp_length);
    }
    if rng.gen::<f64>() >= 0.06 {
        p.set_label(Feature::EmpTitle, TITLES[rng.gen_range(0..TITLES.len())]);
    }
    let home = rng.gen::<f64>();
    p.set_label(
        Feature::HomeOwnership,
        if home < 0.48 {
            "MORTGAGE"
        } else if home < 0.88 {
            "RENT"
        } else {
            "OWN"
        },
    );
    p.set_label(
        Feature::ZipCode,
        format!("{:03}xx", 100 + state * 40 + rng.gen_range(0..3usize) * 7),
    );

    Latent {
        record: LoanRecord {
            loan_id: id,
            predictors: p,
            raw_state: RawState::FullyPaid,
            total_payment: 0.0,
            principal: amount,
            months_elapsed: term,
        },
        risk_logit,
        rate,
        term,
    }
}

/// Intercept shift making the mean PD over the drawn sample hit `target`.
fn calibrate(logits: &[f64], target: f64) -> f64 {
    let mean_pd = |shift: f64| logits.iter().map(|&l| sigmoid(l + shift)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-20.0, 20.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_pd(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generates `n` expired loans with ids `1..=n`. Identical inputs give
/// identical tables.
pub fn generate_synthetic(n: usize, seed: u64, config: &SyntheticConfig) -> Result<LoanTable> {
    if n == 0 {
        return Err(Error::Size("synthetic table needs at least one loan".into()));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents: Vec<Latent> = (1..=n as u64)
        .map(|id| draw_latent(id, config, &mut rng))
        .collect();
    let logits: Vec<f64> = latents.iter().map(|l| l.risk_logit).collect();
    let shift = calibrate(&logits, config.default_rate);

    let records = latents
        .into_iter()
        .map(|l| {
            let mut rec = l.record;
            let pd = sigmoid(l.risk_logit + shift);
            let payment = rec.predictors.numeric(Feature::Installment).unwrap_or(0.0);
            let principal = rec.principal;
            if rng.gen::<f64>() < pd {
                let made = ((l.term as f64) * 0.85 * rng.gen::<f64>().powf(1.6)).floor() as u32;
                let recovered = balance_after(principal, l.rate, payment, made)
                    * config.max_recovery
                    * rng.gen::<f64>();
                rec.raw_state = RawState::ChargedOff;
                rec.total_payment = cents(payment * f64::from(made) + recovered);
                // charged off roughly 150 days after the last payment
                rec.months_elapsed = made + 5;
            } else {
                rec.raw_state = RawState::FullyPaid;
                if rng.gen::<f64>() < config.prepay_probability {
                    let m = rng.gen_range(2..l.term);
                    let balance = balance_after(principal, l.rate, payment, m);
                    rec.total_payment = cents(payment * f64::from(m) + balance);
                    rec.months_elapsed = m;
                } else {
                    rec.total_payment = cents(payment * f64::from(l.term));
                    rec.months_elapsed = l.term;
                }
            }
            rec
        })
        .collect();
    LoanTable::from_records(records, &config.targets)
}
