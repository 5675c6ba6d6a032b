use loanprofit::dataset::{generate_synthetic, split, SyntheticConfig};
use loanprofit::evaluation::{auc, rmse};
use loanprofit::pipeline::{fit_one_stage, fit_two_stage_detailed, CrossFit, FittedPipeline, PipelineConfig};

fn quick() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    for stage in [&mut c.stage1, &mut c.stage2] {
        stage.num_rounds = 120;
        stage.learning_rate = 0.05;
    }
    c.cross_fit = CrossFit::Folds(3);
    c
}

#[test]
fn two_stage_uses_its_default_estimate() {
    let table = generate_synthetic(5000, 31, &SyntheticConfig::default()).unwrap();
    let config = quick();
    let (train, test) = split(&table, &config.split).unwrap();
    let (fitted, cross) = fit_two_stage_detailed(&train, &config).unwrap();

    let top3: Vec<String> = fitted.stage2().importance_ranking().into_iter().take(3).map(|(n, _)| n).collect();
    assert!(top3.contains(&"pd_hat".to_string()), "{top3:?}");

    let folds = cross.fold_of_row.as_ref().unwrap();
    for (k, ids) in cross.fold_training_ids.iter().enumerate() {
        for (row, id) in train.loan_ids().iter().enumerate() {
            assert_eq!(folds[row] == k, !ids.contains(id), "row {row} fold {k}");
        }
    }

    let scored = fitted.score(&test).unwrap();
    let pd: Vec<f64> = scored.iter().map(|s| s.pd_hat.unwrap()).collect();
    let status: Vec<u8> = test.outcomes().iter().map(|o| o.loan_status).collect();
    assert!(auc(&pd, &status).unwrap() > 0.6);
}

#[test]
fn one_stage_beats_the_mean_predictor() {
    let table = generate_synthetic(5000, 32, &SyntheticConfig::default()).unwrap();
    let config = quick();
    let (train, test) = split(&table, &config.split).unwrap();
    let fitted = fit_one_stage(&train, &config).unwrap();
    let predicted: Vec<f64> = fitted.score(&test).unwrap().iter().map(|s| s.arr_hat).collect();
    let realized = test.arrs();
    let mean = train.arrs().iter().sum::<f64>() / train.len() as f64;
    let model = rmse(&predicted, &realized).unwrap();
    let baseline = rmse(&vec![mean; realized.len()], &realized).unwrap();
    assert!(model < baseline, "{model} vs {baseline}");
}

#[test]
fn in_sample_estimates_look_better_than_they_are() {
    let table = generate_synthetic(4000, 33, &SyntheticConfig::default()).unwrap();
    let mut config = quick();
    let (train, _) = split(&table, &config.split).unwrap();
    let status: Vec<u8> = train.outcomes().iter().map(|o| o.loan_status).collect();

    let (_, crossed) = fit_two_stage_detailed(&train, &config).unwrap();
    config.cross_fit = CrossFit::InSample;
    let (_, leaked) = fit_two_stage_detailed(&train, &config).unwrap();
    assert!(leaked.fold_of_row.is_none());

    let honest = auc(&crossed.pd_hat, &status).unwrap();
    let optimistic = auc(&leaked.pd_hat, &status).unwrap();
    assert!(optimistic > honest, "{optimistic} vs {honest}");
}

#[test]
fn saved_pipeline_scores_identically() {
    let table = generate_synthetic(1500, 34, &SyntheticConfig::default()).unwrap();
    let config = quick();
    let (train, test) = split(&table, &config.split).unwrap();
    let (fitted, _) = fit_two_stage_detailed(&train, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fitted.save(dir.path()).unwrap();
    let loaded = FittedPipeline::load(dir.path()).unwrap();
    assert_eq!(fitted.score(&test).unwrap(), loaded.score(&test).unwrap());

    std::fs::write(dir.path().join("pipeline.cfg"), "mode = one_stage\n").unwrap();
    assert!(FittedPipeline::load(dir.path()).is_err());
}
