//! One-stage and two-stage return models.
//!
//! The one-stage model regresses ARR on the encoded loan features. The
//! two-stage model first fits a default classifier, then appends its
//! probability estimate as an extra column for the ARR regressor. By default
//! the appended training column is cross-fitted: each training row's estimate
//! comes from a fold model that never saw that row.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset::{prune_sparse_features, LoanTable, SplitSpec};
use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtConfig, GbdtModel, LossKind};
use crate::loan_model::TargetOptions;
use crate::preprocess::{fit_encoder, transform, EncoderOptions, EncoderSpec, FeatureMatrix, TransformReport};

pub const ENCODER_FILE: &str = "encoder.txt";
pub const STAGE1_FILE: &str = "stage1.model";
pub const STAGE2_FILE: &str = "stage2.model";
pub const CONFIG_FILE: &str = "pipeline.cfg";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    OneStage,
    TwoStage,
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineMode::OneStage => "one_stage",
            PipelineMode::TwoStage => "two_stage",
        })
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_stage" | "one-stage" => Ok(PipelineMode::OneStage),
            "two_stage" | "two-stage" => Ok(PipelineMode::TwoStage),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

/// How the training-time default-probability column is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossFit {
    /// Out-of-fold estimates from this many fold models.
    Folds(usize),
    /// Estimates from the final classifier on its own training rows.
    InSample,
}

impl fmt::Display for CrossFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CrossFit::Folds(k) => write!(f, "{k}"),
            CrossFit::InSample => f.write_str("in-sample"),
        }
    }
}

impl FromStr for CrossFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-sample" | "in_sample" => Ok(CrossFit::InSample),
            _ => match s.parse::<usize>() {
                Ok(k) if k >= 2 => Ok(CrossFit::Folds(k)),
                _ => Err(Error::Config(format!(
                    "cross_fit_folds must be an integer >= 2 or `in-sample`, got `{s}`"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    pub stage1: GbdtConfig,
    pub stage2: GbdtConfig,
    pub pd_feature_name: String,
    pub cross_fit: CrossFit,
    pub split: SplitSpec,
    /// Share of each stage's training rows held out for early stopping; 0 disables.
    pub valid_fraction: f64,
    pub max_missing_fraction: f64,
    pub encoder: EncoderOptions,
    pub targets: TargetOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: PipelineMode::TwoStage,
            stage1: GbdtConfig::default(),
            stage2: GbdtConfig::default(),
            pd_feature_name: "pd_hat".into(),
            cross_fit: CrossFit::Folds(5),
            split: SplitSpec::default(),
            valid_fraction: 0.2,
            max_missing_fraction: 0.7,
            encoder: EncoderOptions::default(),
            targets: TargetOptions::default(),
        }
    }
}

fn parse_config_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.split.validate()?;
        if self.pd_feature_name.trim().is_empty() {
            return Err(Error::Config("pd_feature_name must not be empty".into()));
        }
        if !(0.0..1.0).contains(&self.valid_fraction) {
            return Err(Error::Config("valid_fraction must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.max_missing_fraction) {
            return Err(Error::Config("max_missing_fraction must be in [0, 1]".into()));
        }
        if self.encoder.top_k == 0 {
            return Err(Error::Config("top_k_categories must be at least 1".into()));
        }
        if let Some(cap) = self.targets.arr_cap {
            if !(cap > 0.0 && cap.is_finite()) {
                return Err(Error::Config("arr_cap must be positive".into()));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting. `gbdt.*` keys set both stages;
    /// `stage1.*` and `stage2.*` set one.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some(k) = key.strip_prefix("gbdt.") {
            self.stage1.set(k, value)?;
            return self.stage2.set(k, value);
        }
        if let Some(k) = key.strip_prefix("stage1.") {
            return self.stage1.set(k, value);
        }
        if let Some(k) = key.strip_prefix("stage2.") {
            return self.stage2.set(k, value);
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "pd_feature_name" => self.pd_feature_name = value.to_string(),
            "cross_fit_folds" => self.cross_fit = value.parse()?,
            "split.train_fraction" => self.split.train_fraction = parse_config_value(key, value)?,
            "split.seed" => self.split.seed = parse_config_value(key, value)?,
            "valid_fraction" => self.valid_fraction = parse_config_value(key, value)?,
            "max_missing_fraction" => {
                self.max_missing_fraction = parse_config_value(key, value)?
            }
            "top_k_categories" => self.encoder.top_k = parse_config_value(key, value)?,
            "arr_cap" => {
                self.targets.arr_cap = match value {
                    "none" => None,
                    v => Some(parse_config_value(key, v)?),
                }
            }
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("mode".to_string(), self.mode.to_string()),
            ("pd_feature_name".into(), self.pd_feature_name.clone()),
            ("cross_fit_folds".into(), self.cross_fit.to_string()),
            ("split.train_fraction".into(), self.split.train_fraction.to_string()),
            ("split.seed".into(), self.split.seed.to_string()),
            ("valid_fraction".into(), self.valid_fraction.to_string()),
            ("max_missing_fraction".into(), self.max_missing_fraction.to_string()),
            ("top_k_categories".into(), self.encoder.top_k.to_string()),
            (
                "arr_cap".into(),
                self.targets
                    .arr_cap
                    .map_or_else(|| "none".to_string(), |c| c.to_string()),
            ),
        ];
        for (prefix, stage) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            for (k, v) in stage.to_pairs() {
                out.push((format!("{prefix}.{k}"), v));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        for (key, value) in parse_kv_lines(text)? {
            config.set(&key, &value)?;
        }
        Ok(config)
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    encoder: EncoderSpec,
    stage1: Option<GbdtModel>,
    stage2: GbdtModel,
    config: PipelineConfig,
}

/// Per-row provenance of the training-time default-probability column.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossFitResult {
    /// Appended column, aligned with the training table.
    pub pd_hat: Vec<f64>,
    /// Fold whose model produced each row's estimate; `None` in in-sample mode.
    pub fold_of_row: Option<Vec<usize>>,
    /// Loan ids each fold model was trained on (including its early-stopping rows).
    pub fold_training_ids: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLoan {
    pub loan_id: u64,
    pub pd_hat: Option<f64>,
    pub arr_hat: f64,
}

/// SplitMix64 finalizer; decorrelates seeds derived from one base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const VALID_STREAM: u64 = 0x0076_616c_6964;
const FOLD_STREAM: u64 = 0x666f_6c64;

/// Fits one stage, holding out `valid_fraction` of the rows for early stopping.
fn fit_stage(
    matrix: &FeatureMatrix,
    targets: &[f64],
    loss: LossKind,
    config: &GbdtConfig,
    valid_fraction: f64,
) -> Result<GbdtModel> {
    let n = matrix.rows();
    let n_valid = (n as f64 * valid_fraction).floor() as usize;
    if valid_fraction <= 0.0 || n_valid == 0 || n_valid >= n {
        return gbdt::fit(matrix, targets, loss, config, None);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, VALID_STREAM)));
    let (valid, fit_rows) = order.split_at_mut(n_valid);
    valid.sort_unstable();
    fit_rows.sort_unstable();
    let pick = |rows: &[usize]| -> Vec<f64> { rows.iter().map(|&r| targets[r]).collect() };
    let (fit_x, fit_y) = (matrix.select_rows(fit_rows), pick(fit_rows));
    let (valid_x, valid_y) = (matrix.select_rows(valid), pick(valid));
    if loss == LossKind::Logistic && !has_both_classes(&fit_y) {
        return gbdt::fit(matrix, targets, loss, config, None);
    }
    gbdt::fit(&fit_x, &fit_y, loss, config, Some((&valid_x, &valid_y)))
}

fn has_both_classes(labels: &[f64]) -> bool {
    labels.contains(&0.0) && labels.contains(&1.0)
}

fn prepare(train: &LoanTable, config: &PipelineConfig) -> Result<(EncoderSpec, FeatureMatrix)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Size("training table is empty".into()));
    }
    let retained = prune_sparse_features(train, config.max_missing_fraction);
    let encoder = fit_encoder(train, &retained, &config.encoder)?;
    let (matrix, report) = transform(train, &encoder);
    debug_assert!(report.unseen.is_empty());
    Ok((encoder, matrix))
}

pub fn fit_one_stage(train: &LoanTable, config: &PipelineConfig) -> Result<FittedPipeline> {
    let (encoder, matrix) = prepare(train, config)?;
    let stage2 = fit_stage(
        &matrix,
        &train.arrs(),
        LossKind::Squared,
        &config.stage2,
        config.valid_fraction,
    )?;
    Ok(FittedPipeline {
        encoder,
        stage1: None,
        stage2,
        config: PipelineConfig {
            mode: PipelineMode::OneStage,
            ..config.clone()
        },
    })
}

pub fn fit_two_stage(train: &LoanTable, config: &PipelineConfig) -> Result<FittedPipeline> {
    fit_two_stage_detailed(train, config).map(|(p, _)| p)
}

/// Two-stage fit that also reports how the appended column was produced.
pub fn fit_two_stage_detailed(
    train: &LoanTable,
    config: &PipelineConfig,
) -> Result<(FittedPipeline, CrossFitResult)> {
    let (encoder, matrix) = prepare(train, config)?;
    if encoder.columns().iter().any(|c| c == &config.pd_feature_name) {
        return Err(Error::Config(format!(
            "pd_feature_name `{}` collides with an encoded column",
            config.pd_feature_name
        )));
    }
    let status = train.statuses();
    if !has_both_classes(&status) {
        return Err(Error::DegenerateTarget(
            "loan_status has a single class in the training table".into(),
        ));
    }

    let stage1 = fit_stage(
        &matrix,
        &status,
        LossKind::Logistic,
        &config.stage1,
        config.valid_fraction,
    )?;
    let cross_fit = match config.cross_fit {
        CrossFit::InSample => CrossFitResult {
            pd_hat: stage1.predict(&matrix)?,
            fold_of_row: None,
            fold_training_ids: vec![train.loan_ids()],
        },
        CrossFit::Folds(k) => cross_fit_pd(&matrix, &status, k, config)?,
    };

    let augmented = matrix.append_column(&config.pd_feature_name, &cross_fit.pd_hat)?;
    let stage2 = fit_stage(
        &augmented,
        &train.arrs(),
        LossKind::Squared,
        &config.stage2,
        config.valid_fraction,
    )?;
    let pipeline = FittedPipeline {
        encoder,
        stage1: Some(stage1),
        stage2,
        config: PipelineConfig {
            mode: PipelineMode::TwoStage,
            ..config.clone()
        },
    };
    Ok((pipeline, cross_fit))
}

fn cross_fit_pd(
    matrix: &FeatureMatrix,
    status: &[f64],
    folds: usize,
    config: &PipelineConfig,
) -> Result<CrossFitResult> {
    let n = matrix.rows();
    if folds > n {
        return Err(Error::Config(format!("{folds} folds for {n} training rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        config.stage1.seed,
        FOLD_STREAM,
    )));
    let mut fold_of_row = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of_row[row] = pos % folds;
    }

    // per fold: held-out rows, their estimates, ids the fold model trained on
    type FoldOutput = (Vec<usize>, Vec<f64>, Vec<u64>);
    let results: Vec<Result<FoldOutput>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (held, kept): (Vec<usize>, Vec<usize>) = (0..n).partition(|&r| fold_of_row[r] == k);
            let kept_y: Vec<f64> = kept.iter().map(|&r| status[r]).collect();
            if !has_both_classes(&kept_y) {
                return Err(Error::DegenerateTarget(format!(
                    "fold {k}: loan_status has a single class outside the fold"
                )));
            }
            let stage = GbdtConfig {
                seed: derive_seed(config.stage1.seed, k as u64),
                ..config.stage1.clone()
            };
            let kept_x = matrix.select_rows(&kept);
            let model = fit_stage(&kept_x, &kept_y, LossKind::Logistic, &stage, config.valid_fraction)?;
            let pd = model.predict(&matrix.select_rows(&held))?;
            let ids = kept.iter().map(|&r| matrix.row_ids()[r]).collect();
            Ok((held, pd, ids))
        })
        .collect();

    let mut pd_hat = vec![f64::NAN; n];
    let mut fold_training_ids = Vec::with_capacity(folds);
    for result in results {
        let (held, pd, ids) = result?;
        for (r, p) in held.into_iter().zip(pd) {
            pd_hat[r] = p;
        }
        fold_training_ids.push(ids);
    }
    Ok(CrossFitResult {
        pd_hat,
        fold_of_row: Some(fold_of_row),
        fold_training_ids,
    })
}

/// Fits the pipeline named by `config.mode`.
pub fn fit(train: &LoanTable, config: &PipelineConfig) -> Result<FittedPipeline> {
    match config.mode {
        PipelineMode::OneStage => fit_one_stage(train, config),
        PipelineMode::TwoStage => fit_two_stage(train, config),
    }
}

impl FittedPipeline {
    pub fn mode(&self) -> PipelineMode {
        self.config.mode
    }

    pub fn encoder(&self) -> &EncoderSpec {
        &self.encoder
    }

    pub fn stage1(&self) -> Option<&GbdtModel> {
        self.stage1.as_ref()
    }

    pub fn stage2(&self) -> &GbdtModel {
        &self.stage2
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn score(&self, table: &LoanTable) -> Result<Vec<ScoredLoan>> {
        self.score_with_report(table).map(|(s, _)| s)
    }

    /// Scores every loan; the report lists categories not seen in training.
    pub fn score_with_report(&self, table: &LoanTable) -> Result<(Vec<ScoredLoan>, TransformReport)> {
        let (matrix, report) = transform(table, &self.encoder);
        let (pd, arr) = match &self.stage1 {
            Some(stage1) => {
                let pd = stage1.predict(&matrix)?;
                let augmented = matrix.append_column(&self.config.pd_feature_name, &pd)?;
                let arr = self.stage2.predict(&augmented)?;
                (Some(pd), arr)
            }
            None => (None, self.stage2.predict(&matrix)?),
        };
        let scored = table
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| ScoredLoan {
                loan_id: r.loan_id,
                pd_hat: pd.as_ref().map(|p| p[i]),
                arr_hat: arr[i],
            })
            .collect();
        Ok((scored, report))
    }

    fn check_schema(&self) -> Result<()> {
        let mut expected: Vec<String> = self.encoder.columns().to_vec();
        match (&self.stage1, self.config.mode) {
            (Some(stage1), PipelineMode::TwoStage) => {
                if stage1.feature_names() != expected.as_slice() {
                    return Err(Error::Schema("stage-1 columns differ from the encoder".into()));
                }
                expected.push(self.config.pd_feature_name.clone());
            }
            (None, PipelineMode::OneStage) => {}
            _ => {
                return Err(Error::Schema(format!(
                    "mode {} does not match the stored stage-1 model",
                    self.config.mode
                )))
            }
        }
        if self.stage2.feature_names() != expected.as_slice() {
            return Err(Error::Schema("stage-2 columns differ from the encoder".into()));
        }
        Ok(())
    }

    pub fn manifest(&self) -> String {
        self.manifest_with(&[])
    }

    /// Manifest text with caller-supplied `key = value` lines appended.
    pub fn manifest_with(&self, extra: &[(String, String)]) -> String {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let c = &self.config;
        let cross_fit_note = match (c.mode, c.cross_fit) {
            (PipelineMode::OneStage, _) => "not applicable".to_string(),
            (_, CrossFit::Folds(k)) => format!("out-of-fold default probabilities from {k} fold models"),
            (_, CrossFit::InSample) => {
                "in-sample default probabilities (training labels leak into the stage-2 column)".to_string()
            }
        };
        let mut s = String::new();
        s.push_str("format = loanprofit-pipeline/1\n");
        s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("created_unix = {created}\n"));
        s.push_str(&format!("mode = {}\n", c.mode));
        s.push_str(&format!("config_sha256 = {}\n", c.hash()));
        s.push_str(&format!("split_seed = {}\n", c.split.seed));
        s.push_str(&format!("stage1_seed = {}\n", c.stage1.seed));
        s.push_str(&format!("stage2_seed = {}\n", c.stage2.seed));
        s.push_str(&format!("cross_fit = {cross_fit_note}\n"));
        if let Some(stage1) = &self.stage1 {
            s.push_str(&format!("stage1_trees = {}\n", stage1.best_iteration()));
        }
        s.push_str(&format!("stage2_trees = {}\n", self.stage2.best_iteration()));
        for (k, v) in extra {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with(dir, &[])
    }

    /// Saves the pipeline; `extra` lines go into the manifest.
    pub fn save_with(&self, dir: &Path, extra: &[(String, String)]) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: &str| -> Result<()> {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
        };
        write(ENCODER_FILE, &self.encoder.to_text())?;
        if let Some(stage1) = &self.stage1 {
            write(STAGE1_FILE, &stage1.to_text())?;
        } else if dir.join(STAGE1_FILE).exists() {
            let path = dir.join(STAGE1_FILE);
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
        write(STAGE2_FILE, &self.stage2.to_text())?;
        write(CONFIG_FILE, &self.config.to_text())?;
        write(MANIFEST_FILE, &self.manifest_with(extra))
    }

    pub fn load(dir: &Path) -> Result<FittedPipeline> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        let config = PipelineConfig::from_text(&read(CONFIG_FILE)?)?;
        let manifest = parse_kv_lines(&read(MANIFEST_FILE)?)?;
        let recorded = manifest
            .iter()
            .find(|(k, _)| k == "config_sha256")
            .map(|(_, v)| v.as_str());
        if recorded != Some(config.hash().as_str()) {
            return Err(Error::Format {
                what: "pipeline manifest",
                line: 0,
                reason: "config hash does not match pipeline.cfg".into(),
            });
        }
        let encoder = EncoderSpec::from_text(&read(ENCODER_FILE)?)?;
        let stage1 = match config.mode {
            PipelineMode::TwoStage => Some(GbdtModel::from_text(&read(STAGE1_FILE)?)?),
            PipelineMode::OneStage => None,
        };
        let stage2 = GbdtModel::from_text(&read(STAGE2_FILE)?)?;
        let pipeline = FittedPipeline {
            encoder,
            stage1,
            stage2,
            config,
        };
        pipeline.check_schema()?;
        Ok(pipeline)
    }
}

/// Writes `loan_id,pd_hat,arr_hat`; `pd_hat` is empty for one-stage scores.
pub fn write_scores<W: Write>(scores: &[ScoredLoan], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["loan_id", "pd_hat", "arr_hat"])?;
    for s in scores {
        w.write_record([
            s.loan_id.to_string(),
            s.pd_hat.map(|p| p.to_string()).unwrap_or_default(),
            s.arr_hat.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}
