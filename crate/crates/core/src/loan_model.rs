//! Loan records and the two modelling targets derived from them.
//!
//! A loan that has expired ends either fully paid or charged off. The credit
//! target is the binary `loan_status` (1 = charged off) and the profit target
//! is the annualized rate of return `(paid / principal)^(1 / years)`, where
//! `years` is the realized repayment duration rather than the scheduled term.

use std::fmt;

use crate::error::{Error, Result};

/// The 27 predictor attributes, grouped as loan characteristics, credit
/// worthiness, and borrower information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    ApplicationType,
    Dti,
    Grade,
    InitialListStatus,
    Installment,
    LoanAmnt,
    Purpose,
    SubGrade,
    Term,
    VerificationStatus,
    AccNowDelinq,
    Delinq2yrs,
    CrLineMonth,
    FicoRangeHigh,
    FicoRangeLow,
    InqLast6mths,
    OpenAcc,
    PubRec,
    RevolBal,
    RevolUtil,
    TotalAcc,
    AddrState,
    AnnualInc,
    EmpLength,
    EmpTitle,
    HomeOwnership,
    ZipCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureGroup {
    LoanCharacteristics,
    CreditWorthiness,
    BorrowerInformation,
}

pub const NUM_FEATURES: usize = 27;

impl Feature {
    pub const ALL: [Feature; NUM_FEATURES] = [
        Feature::ApplicationType,
        Feature::Dti,
        Feature::Grade,
        Feature::InitialListStatus,
        Feature::Installment,
        Feature::LoanAmnt,
        Feature::Purpose,
        Feature::SubGrade,
        Feature::Term,
        Feature::VerificationStatus,
        Feature::AccNowDelinq,
        Feature::Delinq2yrs,
        Feature::CrLineMonth,
        Feature::FicoRangeHigh,
        Feature::FicoRangeLow,
        Feature::InqLast6mths,
        Feature::OpenAcc,
        Feature::PubRec,
        Feature::RevolBal,
        Feature::RevolUtil,
        Feature::TotalAcc,
        Feature::AddrState,
        Feature::AnnualInc,
        Feature::EmpLength,
        Feature::EmpTitle,
        Feature::HomeOwnership,
        Feature::ZipCode,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical attribute name, also the default CSV header.
    pub fn name(self) -> &'static str {
        match self {
            Feature::ApplicationType => "application_type",
            Feature::Dti => "dti",
            Feature::Grade => "grade",
            Feature::InitialListStatus => "initial_list_status",
            Feature::Installment => "installment",
            Feature::LoanAmnt => "loan_amnt",
            Feature::Purpose => "purpose",
            Feature::SubGrade => "sub_grade",
            Feature::Term => "term",
            Feature::VerificationStatus => "verification_status",
            Feature::AccNowDelinq => "acc_now_delinq",
            Feature::Delinq2yrs => "delinq_2yrs",
            Feature::CrLineMonth => "cr_line_month",
            Feature::FicoRangeHigh => "fico_range_high",
            Feature::FicoRangeLow => "fico_range_low",
            Feature::InqLast6mths => "inq_last_6mths",
            Feature::OpenAcc => "open_acc",
            Feature::PubRec => "pub_rec",
            Feature::RevolBal => "revol_bal",
            Feature::RevolUtil => "revol_util",
            Feature::TotalAcc => "total_acc",
            Feature::AddrState => "addr_state",
            Feature::AnnualInc => "annual_inc",
            Feature::EmpLength => "emp_length",
            Feature::EmpTitle => "emp_title",
            Feature::HomeOwnership => "home_ownership",
            Feature::ZipCode => "zip_code",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn kind(self) -> FeatureKind {
        use Feature::*;
        match self {
            ApplicationType | Grade | InitialListStatus | Purpose | SubGrade | Term
            | VerificationStatus | AddrState | EmpTitle | HomeOwnership | ZipCode => {
                FeatureKind::Categorical
            }
            _ => FeatureKind::Numeric,
        }
    }

    pub fn group(self) -> FeatureGroup {
        match self.index() {
            0..=9 => FeatureGroup::LoanCharacteristics,
            10..=20 => FeatureGroup::CreditWorthiness,
            _ => FeatureGroup::BorrowerInformation,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
}

impl FeatureValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(x) => Some(*x),
            FeatureValue::Categorical(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            FeatureValue::Categorical(s) => Some(s),
            FeatureValue::Numeric(_) => None,
        }
    }
}

/// Predictor cells indexed by [`Feature`]; `None` is a missing cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictors {
    values: [Option<FeatureValue>; NUM_FEATURES],
}

impl Predictors {
    pub fn get(&self, feature: Feature) -> Option<&FeatureValue> {
        self.values[feature.index()].as_ref()
    }

    pub fn numeric(&self, feature: Feature) -> Option<f64> {
        self.get(feature).and_then(FeatureValue::as_numeric)
    }

    pub fn label(&self, feature: Feature) -> Option<&str> {
        self.get(feature).and_then(FeatureValue::as_label)
    }

    pub fn set(&mut self, feature: Feature, value: Option<FeatureValue>) {
        self.values[feature.index()] = value;
    }

    pub fn set_numeric(&mut self, feature: Feature, value: f64) {
        self.set(feature, Some(FeatureValue::Numeric(value)));
    }

    pub fn set_label(&mut self, feature: Feature, label: impl Into<String>) {
        self.set(feature, Some(FeatureValue::Categorical(label.into())));
    }

    pub fn is_missing(&self, feature: Feature) -> bool {
        self.values[feature.index()].is_none()
    }
}

/// Lending Club risk grade, A (safest) to G (riskiest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Grade {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl Grade {
    pub const ALL: [Grade; 7] = [
        Grade::A,
        Grade::B,
        Grade::C,
        Grade::D,
        Grade::E,
        Grade::F,
        Grade::G,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn from_letter(c: char) -> Option<Grade> {
        match c {
            'A'..='G' => Some(Grade::ALL[(c as u8 - b'A') as usize]),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Grade> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Grade::from_letter(c),
            _ => None,
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubGrade {
    pub grade: Grade,
    /// 1 (safest) through 5.
    pub level: u8,
}

impl SubGrade {
    pub fn parse(s: &str) -> Option<SubGrade> {
        let s = s.trim();
        let mut chars = s.chars();
        let grade = Grade::from_letter(chars.next()?)?;
        let digit = chars.next()?.to_digit(10)?;
        if chars.next().is_some() || !(1..=5).contains(&digit) {
            return None;
        }
        Some(SubGrade {
            grade,
            level: digit as u8,
        })
    }
}

impl fmt::Display for SubGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.grade, self.level)
    }
}

/// Terminal repayment state as reported by the platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RawState {
    FullyPaid,
    ChargedOff,
    Intermediate,
}

impl RawState {
    /// Accepts the canonical labels plus the Lending Club `loan_status`
    /// spellings. Unknown labels yield `None`.
    pub fn parse(label: &str) -> Option<RawState> {
        let norm = label.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        match norm.as_str() {
            "fully_paid" | "does_not_meet_the_credit_policy._status:fully_paid" => {
                Some(RawState::FullyPaid)
            }
            "charged_off" | "does_not_meet_the_credit_policy._status:charged_off" => {
                Some(RawState::ChargedOff)
            }
            "intermediate" | "current" | "issued" | "in_grace_period" | "default" => {
                Some(RawState::Intermediate)
            }
            s if s.starts_with("late") => Some(RawState::Intermediate),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RawState::FullyPaid => "fully_paid",
            RawState::ChargedOff => "charged_off",
            RawState::Intermediate => "intermediate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoanRecord {
    pub loan_id: u64,
    pub predictors: Predictors,
    pub raw_state: RawState,
    pub total_payment: f64,
    pub principal: f64,
    pub months_elapsed: u32,
}

impl LoanRecord {
    pub fn grade(&self) -> Option<Grade> {
        self.predictors.label(Feature::Grade).and_then(Grade::parse)
    }

    pub fn sub_grade(&self) -> Option<SubGrade> {
        self.predictors
            .label(Feature::SubGrade)
            .and_then(SubGrade::parse)
    }

    /// Checks the record-level invariants: positive principal, non-negative
    /// payment, at least one elapsed month, a valid grade whose letter agrees
    /// with the sub-grade, and an ordered FICO range.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidRecord {
            loan_id: self.loan_id,
            reason,
        };
        if !(self.principal > 0.0) || !self.principal.is_finite() {
            return Err(bad(format!("principal must be > 0, got {}", self.principal)));
        }
        if !(self.total_payment >= 0.0) || !self.total_payment.is_finite() {
            return Err(bad(format!(
                "total payment must be >= 0, got {}",
                self.total_payment
            )));
        }
        if self.months_elapsed < 1 {
            return Err(bad("months elapsed must be >= 1".into()));
        }
        let grade = match self.predictors.label(Feature::Grade) {
            Some(label) => {
                Grade::parse(label).ok_or_else(|| bad(format!("invalid grade `{label}`")))?
            }
            None => return Err(bad("grade is missing".into())),
        };
        let sub = match self.predictors.label(Feature::SubGrade) {
            Some(label) => SubGrade::parse(label)
                .ok_or_else(|| bad(format!("invalid sub_grade `{label}`")))?,
            None => return Err(bad("sub_grade is missing".into())),
        };
        if sub.grade != grade {
            return Err(bad(format!("sub_grade {sub} does not belong to grade {grade}")));
        }
        if let (Some(lo), Some(hi)) = (
            self.predictors.numeric(Feature::FicoRangeLow),
            self.predictors.numeric(Feature::FicoRangeHigh),
        ) {
            if lo > hi {
                return Err(bad(format!("fico_range_low {lo} exceeds fico_range_high {hi}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitOutcome {
    /// 0 = fully paid, 1 = charged off.
    pub loan_status: u8,
    pub arr: f64,
    pub years: f64,
}

impl ProfitOutcome {
    pub fn is_default(&self) -> bool {
        self.loan_status == 1
    }
}

/// Target-construction options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOptions {
    /// Ceiling applied to ARR; `None` leaves the formula unbounded.
    pub arr_cap: Option<f64>,
}

impl TargetOptions {
    pub const DEFAULT_ARR_CAP: f64 = 10.0;

    /// No cap: ARR exactly as the formula gives it.
    pub fn uncapped() -> Self {
        TargetOptions { arr_cap: None }
    }
}

impl Default for TargetOptions {
    fn default() -> Self {
        TargetOptions {
            arr_cap: Some(Self::DEFAULT_ARR_CAP),
        }
    }
}

/// Annualized rate of return, `(total_payment / principal)^(1 / years)`.
pub fn compute_arr(total_payment: f64, principal: f64, years: f64) -> Result<f64> {
    if !(principal > 0.0) || !principal.is_finite() {
        return Err(Error::Domain {
            field: "principal",
            value: principal,
        });
    }
    if !(years > 0.0) || !years.is_finite() {
        return Err(Error::Domain {
            field: "years",
            value: years,
        });
    }
    if !(total_payment >= 0.0) || !total_payment.is_finite() {
        return Err(Error::Domain {
            field: "total_payment",
            value: total_payment,
        });
    }
    let arr = (total_payment / principal).powf(1.0 / years);
    if total_payment > 0.0 && arr == 0.0 {
        // underflow; a positive repayment never maps to exactly zero
        return Ok(f64::MIN_POSITIVE);
    }
    Ok(arr)
}

/// Undiscounted return over the life of the loan, `(paid - principal) / principal`.
///
/// This is the simple-return arithmetic sometimes labelled "IRR" in the P2P
/// literature; no discounting or root finding is involved.
pub fn compute_simple_return(total_payment: f64, principal: f64) -> Result<f64> {
    if !(principal > 0.0) || !principal.is_finite() {
        return Err(Error::Domain {
            field: "principal",
            value: principal,
        });
    }
    Ok((total_payment - principal) / principal)
}

/// Derives both targets with the default options (ARR capped at 10).
pub fn derive_outcome(record: &LoanRecord) -> Result<ProfitOutcome> {
    derive_outcome_with(record, &TargetOptions::default())
}

pub fn derive_outcome_with(record: &LoanRecord, options: &TargetOptions) -> Result<ProfitOutcome> {
    let loan_status = match record.raw_state {
        RawState::FullyPaid => 0,
        RawState::ChargedOff => 1,
        RawState::Intermediate => {
            return Err(Error::RejectedRecord {
                loan_id: record.loan_id,
            })
        }
    };
    if record.months_elapsed < 1 {
        return Err(Error::InvalidRecord {
            loan_id: record.loan_id,
            reason: "months elapsed must be >= 1".into(),
        });
    }
    let years = f64::from(record.months_elapsed) / 12.0;
    let mut arr = compute_arr(record.total_payment, record.principal, years)?;
    if let Some(cap) = options.arr_cap {
        arr = arr.min(cap);
    }
    Ok(ProfitOutcome {
        loan_status,
        arr,
        years,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn record(state: RawState, paid: f64, principal: f64, months: u32) -> LoanRecord {
        let mut predictors = Predictors::default();
        predictors.set_label(Feature::Grade, "C");
        predictors.set_label(Feature::SubGrade, "C3");
        LoanRecord {
            loan_id: 7,
            predictors,
            raw_state: state,
            total_payment: paid,
            principal,
            months_elapsed: months,
        }
    }

    #[test]
    fn arr_worked_examples() {
        assert_eq!(compute_arr(150.0, 100.0, 1.0).unwrap(), 1.5);
        assert_abs_diff_eq!(compute_arr(7003.0, 6000.0, 16.0 / 12.0).unwrap(), 1.12, epsilon = 0.005);
        let scheduled = 6000.0 + 6000.0 * 0.1499 * 3.0;
        assert_abs_diff_eq!(scheduled, 8698.2, epsilon = 1e-9);
        assert_abs_diff_eq!(compute_arr(scheduled, 6000.0, 3.0).unwrap(), 1.13, epsilon = 0.005);
        assert_eq!(compute_arr(0.0, 100.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(compute_arr(150.0, 100.0, 2.0).unwrap(), 1.2247, epsilon = 1e-4);
    }

    #[test]
    fn arr_rejects_bad_domain() {
        assert!(matches!(
            compute_arr(1.0, 0.0, 1.0),
            Err(Error::Domain { field: "principal", .. })
        ));
        assert!(matches!(
            compute_arr(1.0, 10.0, -1.0),
            Err(Error::Domain { field: "years", .. })
        ));
        assert!(matches!(
            compute_arr(1.0, 10.0, 0.0),
            Err(Error::Domain { field: "years", .. })
        ));
    }

    #[test]
    fn simple_return_examples() {
        assert_abs_diff_eq!(compute_simple_return(150.0, 100.0).unwrap(), 0.5);
        assert_abs_diff_eq!(compute_simple_return(95.0, 100.0).unwrap(), -0.05, epsilon = 1e-12);
        assert_eq!(compute_simple_return(100.0, 100.0).unwrap(), 0.0);
        assert!(compute_simple_return(100.0, -1.0).is_err());
    }

    #[test]
    fn outcome_examples() {
        let paid = derive_outcome(&record(RawState::FullyPaid, 7003.0, 6000.0, 16)).unwrap();
        assert_eq!(paid.loan_status, 0);
        assert_abs_diff_eq!(paid.arr, 1.12, epsilon = 0.005);
        assert_abs_diff_eq!(paid.years, 16.0 / 12.0);

        let lost = derive_outcome(&record(RawState::ChargedOff, 0.0, 100.0, 12)).unwrap();
        assert_eq!((lost.loan_status, lost.arr), (1, 0.0));

        let lucky = derive_outcome(&record(RawState::ChargedOff, 130.0, 100.0, 12)).unwrap();
        assert_eq!(lucky.loan_status, 1);
        assert_abs_diff_eq!(lucky.arr, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn intermediate_is_rejected() {
        let err = derive_outcome(&record(RawState::Intermediate, 50.0, 100.0, 3)).unwrap_err();
        assert!(matches!(err, Error::RejectedRecord { loan_id: 7 }));
    }

    #[test]
    fn cap_bounds_short_duration_records() {
        let r = record(RawState::FullyPaid, 200.0, 100.0, 1);
        assert_eq!(derive_outcome(&r).unwrap().arr, 10.0);
        let raw = derive_outcome_with(&r, &TargetOptions::uncapped()).unwrap();
        assert_abs_diff_eq!(raw.arr, 4096.0, epsilon = 1e-9);
    }

    #[test]
    fn grade_parsing_and_validation() {
        assert_eq!(Grade::parse("E"), Some(Grade::E));
        assert_eq!(Grade::parse("H"), None);
        assert_eq!(SubGrade::parse("G5").unwrap().to_string(), "G5");
        assert_eq!(SubGrade::parse("A6"), None);

        let mut r = record(RawState::FullyPaid, 1.0, 1.0, 1);
        assert!(r.validate().is_ok());
        r.predictors.set_label(Feature::SubGrade, "D2");
        assert!(r.validate().is_err());
        r.predictors.set_label(Feature::SubGrade, "C2");
        r.predictors.set_numeric(Feature::FicoRangeLow, 700.0);
        r.predictors.set_numeric(Feature::FicoRangeHigh, 690.0);
        assert!(r.validate().is_err());
    }

    #[test]
    fn raw_state_labels() {
        assert_eq!(RawState::parse("Fully Paid"), Some(RawState::FullyPaid));
        assert_eq!(RawState::parse("Charged Off"), Some(RawState::ChargedOff));
        assert_eq!(RawState::parse("Late (31-120 days)"), Some(RawState::Intermediate));
        assert_eq!(RawState::parse("Current"), Some(RawState::Intermediate));
        assert_eq!(RawState::parse("bogus"), None);
    }

    #[test]
    fn feature_catalogue_is_consistent() {
        for (i, f) in Feature::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(Feature::from_name(f.name()), Some(*f));
        }
        let groups = |g| Feature::ALL.iter().filter(|f| f.group() == g).count();
        assert_eq!(groups(FeatureGroup::LoanCharacteristics), 10);
        assert_eq!(groups(FeatureGroup::CreditWorthiness), 11);
        assert_eq!(groups(FeatureGroup::BorrowerInformation), 6);
    }

    proptest! {
        #[test]
        fn arr_decreasing_in_years(ratio in 1.001f64..5.0, y1 in 0.1f64..10.0, dy in 0.01f64..5.0) {
            let a = compute_arr(ratio * 100.0, 100.0, y1).unwrap();
            let b = compute_arr(ratio * 100.0, 100.0, y1 + dy).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn arr_increasing_in_payment(pa in 0.0f64..1000.0, d in 0.01f64..100.0, y in 0.1f64..10.0) {
            let a = compute_arr(pa, 100.0, y).unwrap();
            let b = compute_arr(pa + d, 100.0, y).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn arr_break_even_is_one(x in 0.01f64..1e6, y in 0.01f64..30.0) {
            prop_assert!((compute_arr(x, x, y).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn status_zero_only_when_fully_paid(charged in any::<bool>(), pa in 0.0f64..500.0, m in 1u32..80) {
            let state = if charged { RawState::ChargedOff } else { RawState::FullyPaid };
            let out = derive_outcome(&record(state, pa, 100.0, m)).unwrap();
            prop_assert_eq!(out.loan_status == 0, state == RawState::FullyPaid);
            prop_assert!(out.arr >= 0.0);
            prop_assert_eq!(out.arr == 0.0, pa == 0.0);
        }
    }
}
