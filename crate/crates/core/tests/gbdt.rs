mod common;

use loanprofit::gbdt::{fit, GbdtConfig, GbdtModel, LossKind};
use loanprofit::preprocess::FeatureMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_search_agrees_with_exhaustive_search(seed in 1000u64..1_000_000) {
        let case = common::random_split_case(seed);
        let expected = common::brute_force_split(&case);
        let actual = common::library_split(&case);
        match (expected, actual) {
            (None, None) => {}
            (Some((ef, eb, eg)), Some((af, ab, ag))) => {
                prop_assert_eq!((ef, eb), (af, ab));
                prop_assert!((eg - ag).abs() <= 1e-9);
            }
            (e, a) => prop_assert!(false, "oracle {:?} library {:?}", e, a),
        }
    }
}

#[test]
fn saved_model_predicts_identically() {
    let rows: Vec<Vec<f64>> = (0..400)
        .map(|i| {
            let x = f64::from(i) / 40.0;
            vec![x.sin(), (x * 3.0).cos(), f64::from(i % 7)]
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[0] + 0.3 * r[2] > 1.0))).collect();
    let matrix = FeatureMatrix::from_rows(&rows).unwrap();
    let config = GbdtConfig {
        num_rounds: 60,
        learning_rate: 0.2,
        ..GbdtConfig::default()
    };
    let model = fit(&matrix, &y, LossKind::Logistic, &config, None).unwrap();
    let back = GbdtModel::from_text(&model.to_text()).unwrap();
    let a = model.predict(&matrix).unwrap();
    let b = back.predict(&matrix).unwrap();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(back.to_text(), model.to_text());
}
