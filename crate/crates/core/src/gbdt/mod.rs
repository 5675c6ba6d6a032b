//! Histogram gradient-boosted decision trees with leaf-wise growth.
//!
//! Used as the default classifier (logistic loss) and the return regressor
//! (squared loss). Training is deterministic for a fixed seed regardless of
//! the rayon thread count: only per-feature histogram accumulation runs in
//! parallel and every reduction happens in feature order.

mod bins;
mod loss;
mod split;
mod tree;

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bins::{BinMapper, BinnedMatrix};
pub use loss::{loss_grad_hess, mean_loss, metric, point_loss, sigmoid, LossKind};
pub use split::{build_histograms, find_best_split, BinStats, FeatureHistogram, SplitCandidate, TIE_TOLERANCE};
pub use tree::{grow_tree, sample_features, Node, PreorderItem, Tree};

use crate::error::{Error, Result};
use crate::preprocess::FeatureMatrix;
use crate::textfmt::{self, Lines};

const MODEL_HEADER: &str = "loanprofit-gbdt\t1";

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtConfig {
    pub max_depth: usize,
    pub num_leaves: usize,
    pub feature_fraction: f64,
    pub bagging_fraction: f64,
    pub learning_rate: f64,
    pub num_rounds: usize,
    /// Stop after this many rounds without validation improvement; 0 disables.
    pub early_stopping_rounds: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
    pub lambda_l2: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            max_depth: 6,
            num_leaves: 10,
            feature_fraction: 0.8,
            bagging_fraction: 0.5,
            learning_rate: 0.01,
            num_rounds: 500,
            early_stopping_rounds: 50,
            max_bins: 255,
            min_samples_leaf: 20,
            lambda_l2: 1.0,
            seed: 42,
        }
    }
}

pub const CONFIG_KEYS: [&str; 11] = [
    "max_depth",
    "num_leaves",
    "feature_fraction",
    "bagging_fraction",
    "learning_rate",
    "num_rounds",
    "early_stopping_rounds",
    "max_bins",
    "min_samples_leaf",
    "lambda_l2",
    "seed",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("gbdt: {what}")));
        if self.num_leaves < 2 {
            return bad("num_leaves must be at least 2");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        for (name, f) in [
            ("feature_fraction", self.feature_fraction),
            ("bagging_fraction", self.bagging_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(&format!("{name} must be in (0, 1]"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.num_rounds < 1 {
            return bad("num_rounds must be at least 1");
        }
        if self.max_bins < 2 || self.max_bins > usize::from(u16::MAX) + 1 {
            return bad("max_bins must be in [2, 65536]");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite()) {
            return bad("lambda_l2 must be non-negative");
        }
        Ok(())
    }

    /// Sets one field by name, as used in config files.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "max_depth" => self.max_depth = parse_value(key, value)?,
            "num_leaves" => self.num_leaves = parse_value(key, value)?,
            "feature_fraction" => self.feature_fraction = parse_value(key, value)?,
            "bagging_fraction" => self.bagging_fraction = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "num_rounds" => self.num_rounds = parse_value(key, value)?,
            "early_stopping_rounds" => self.early_stopping_rounds = parse_value(key, value)?,
            "max_bins" => self.max_bins = parse_value(key, value)?,
            "min_samples_leaf" => self.min_samples_leaf = parse_value(key, value)?,
            "lambda_l2" => self.lambda_l2 = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown gbdt key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("max_depth", self.max_depth.to_string()),
            ("num_leaves", self.num_leaves.to_string()),
            ("feature_fraction", self.feature_fraction.to_string()),
            ("bagging_fraction", self.bagging_fraction.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("num_rounds", self.num_rounds.to_string()),
            ("early_stopping_rounds", self.early_stopping_rounds.to_string()),
            ("max_bins", self.max_bins.to_string()),
            ("min_samples_leaf", self.min_samples_leaf.to_string()),
            ("lambda_l2", self.lambda_l2.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Convenience wrapper matching the other module-level entry points.
pub fn build_bins(matrix: &FeatureMatrix, max_bins: usize) -> BinMapper {
    BinMapper::build(matrix, max_bins)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    loss: LossKind,
    base_score: f64,
    trees: Vec<Tree>,
    config: GbdtConfig,
    bin_mapper: BinMapper,
    feature_names: Vec<String>,
    best_iteration: usize,
    rounds_trained: usize,
}

/// Per-round diagnostics from [`fit_with_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    /// Mean training loss after each round; entry 0 is the base score.
    pub train_loss: Vec<f64>,
    /// Validation metric after each round; entry 0 is the base score.
    pub valid_metric: Vec<f64>,
    /// Raw training predictions after the last kept round.
    pub final_raw: Vec<f64>,
}

fn check_targets(what: &str, rows: usize, targets: &[f64], loss: LossKind) -> Result<()> {
    if targets.len() != rows {
        return Err(Error::Input(format!(
            "{what}: {} targets for {rows} rows",
            targets.len()
        )));
    }
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::Input(format!("{what}: non-finite target {t}")));
    }
    if loss == LossKind::Logistic {
        if let Some(t) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::Input(format!(
                "{what}: logistic target {t} is not 0 or 1"
            )));
        }
    }
    Ok(())
}

fn base_score(loss: LossKind, targets: &[f64]) -> f64 {
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    match loss {
        LossKind::Squared => mean,
        LossKind::Logistic => {
            let p = mean.clamp(1e-12, 1.0 - 1e-12);
            (p / (1.0 - p)).ln()
        }
    }
}

/// Trains a boosted ensemble. With a validation set the model keeps the
/// prefix of trees minimizing the validation metric.
pub fn fit(
    matrix: &FeatureMatrix,
    targets: &[f64],
    loss: LossKind,
    config: &GbdtConfig,
    valid: Option<(&FeatureMatrix, &[f64])>,
) -> Result<GbdtModel> {
    fit_with_trace(matrix, targets, loss, config, valid).map(|(m, _)| m)
}

pub fn fit_with_trace(
    matrix: &FeatureMatrix,
    targets: &[f64],
    loss: LossKind,
    config: &GbdtConfig,
    valid: Option<(&FeatureMatrix, &[f64])>,
) -> Result<(GbdtModel, TrainingTrace)> {
    config.validate()?;
    if matrix.rows() == 0 || matrix.cols() == 0 {
        return Err(Error::Input("empty training matrix".into()));
    }
    check_targets("training", matrix.rows(), targets, loss)?;
    if let Some((vm, vt)) = valid {
        if vm.column_names() != matrix.column_names() {
            return Err(Error::Schema("validation columns differ from training".into()));
        }
        check_targets("validation", vm.rows(), vt, loss)?;
    }

    let n = matrix.rows();
    let mapper = BinMapper::build(matrix, config.max_bins);
    let data = mapper.bin_matrix(matrix);
    let base = base_score(loss, targets);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut raw = vec![base; n];
    let mut grads = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let all_rows: Vec<u32> = (0..n as u32).collect();
    let bag_size = ((n as f64 * config.bagging_fraction).floor() as usize).clamp(1, n);

    let valid_data = valid.map(|(vm, vt)| (mapper.bin_matrix(vm), vt));
    let mut valid_raw = valid_data
        .as_ref()
        .map(|(vd, _)| vec![base; vd.rows()])
        .unwrap_or_default();

    let mut trace = TrainingTrace {
        train_loss: vec![mean_loss(loss, &raw, targets)],
        valid_metric: Vec::new(),
        final_raw: Vec::new(),
    };
    let mut best = (0usize, f64::INFINITY);
    if let Some((_, vt)) = &valid_data {
        let m = metric(loss, &valid_raw, vt);
        trace.valid_metric.push(m);
        best = (0, m);
    }
    let mut best_raw = raw.clone();

    let mut trees = Vec::new();
    for round in 1..=config.num_rounds {
        for i in 0..n {
            let (g, h) = loss_grad_hess(loss, raw[i], targets[i]);
            grads[i] = g;
            hess[i] = h;
        }
        let rows = if bag_size < n {
            let mut picked: Vec<u32> = sample(&mut rng, n, bag_size)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            picked.sort_unstable();
            picked
        } else {
            all_rows.clone()
        };
        let tree = grow_tree(&data, &grads, &hess, &rows, config, &mut rng)?;
        for (i, r) in raw.iter_mut().enumerate() {
            *r += tree.predict_binned(&data, i);
        }
        trace.train_loss.push(mean_loss(loss, &raw, targets));

        if let Some((vd, vt)) = &valid_data {
            for (i, r) in valid_raw.iter_mut().enumerate() {
                *r += tree.predict_binned(vd, i);
            }
            let m = metric(loss, &valid_raw, vt);
            trace.valid_metric.push(m);
            trees.push(tree);
            if m < best.1 {
                best = (round, m);
                best_raw.clone_from(&raw);
            } else if config.early_stopping_rounds > 0
                && round - best.0 >= config.early_stopping_rounds
            {
                break;
            }
        } else {
            trees.push(tree);
        }
    }

    let rounds_trained = trees.len();
    let best_iteration = if valid_data.is_some() {
        trees.truncate(best.0);
        trace.final_raw = best_raw;
        best.0
    } else {
        trace.final_raw = raw;
        rounds_trained
    };
    log::debug!(
        "gbdt {loss}: {rounds_trained} rounds trained, {best_iteration} kept"
    );
    let model = GbdtModel {
        loss,
        base_score: base,
        trees,
        config: config.clone(),
        bin_mapper: mapper,
        feature_names: matrix.column_names().to_vec(),
        best_iteration,
        rounds_trained,
    };
    Ok((model, trace))
}

/// Predicted probabilities (logistic) or values (squared).
pub fn predict(model: &GbdtModel, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(matrix)
}

impl GbdtModel {
    /// A model of no trees that always predicts `base_score` on the raw scale.
    pub fn constant(
        loss: LossKind,
        base_score: f64,
        feature_names: Vec<String>,
        config: GbdtConfig,
    ) -> Result<GbdtModel> {
        if !base_score.is_finite() {
            return Err(Error::Input(format!("base score {base_score} is not finite")));
        }
        let bin_mapper = BinMapper::from_thresholds(vec![Vec::new(); feature_names.len()])?;
        Ok(GbdtModel {
            loss,
            base_score,
            trees: Vec::new(),
            config,
            bin_mapper,
            feature_names,
            best_iteration: 0,
            rounds_trained: 0,
        })
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn config(&self) -> &GbdtConfig {
        &self.config
    }

    pub fn bin_mapper(&self) -> &BinMapper {
        &self.bin_mapper
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Number of trees used for prediction.
    pub fn best_iteration(&self) -> usize {
        self.best_iteration
    }

    /// Rounds run before early stopping, including discarded ones.
    pub fn rounds_trained(&self) -> usize {
        self.rounds_trained
    }

    fn check_columns(&self, matrix: &FeatureMatrix) -> Result<()> {
        if matrix.column_names() != self.feature_names.as_slice() {
            return Err(Error::Schema(format!(
                "model expects {} columns ({}...), matrix has {}",
                self.feature_names.len(),
                self.feature_names.first().map(String::as_str).unwrap_or(""),
                matrix.cols()
            )));
        }
        Ok(())
    }

    pub fn predict_raw(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(matrix)?;
        let data = self.bin_mapper.bin_matrix(matrix);
        let mut raw = vec![self.base_score; matrix.rows()];
        for tree in &self.trees[..self.best_iteration] {
            for (i, r) in raw.iter_mut().enumerate() {
                *r += tree.predict_binned(&data, i);
            }
        }
        Ok(raw)
    }

    pub fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
        let mut out = self.predict_raw(matrix)?;
        if self.loss == LossKind::Logistic {
            for v in &mut out {
                *v = sigmoid(*v);
            }
        }
        Ok(out)
    }

    /// Number of splits on each column, in column order.
    pub fn split_counts(&self) -> Vec<(String, usize)> {
        let mut counts = vec![0usize; self.feature_names.len()];
        for tree in &self.trees[..self.best_iteration] {
            for f in tree.split_features() {
                counts[f] += 1;
            }
        }
        self.feature_names.iter().cloned().zip(counts).collect()
    }

    /// Column names ordered by split count, most used first; ties by column order.
    pub fn importance_ranking(&self) -> Vec<(String, usize)> {
        let mut ranked = self.split_counts();
        ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
        ranked
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_HEADER}");
        let _ = writeln!(s, "loss\t{}", self.loss);
        let _ = writeln!(s, "base_score\t{}", self.base_score);
        let _ = writeln!(s, "best_iteration\t{}", self.best_iteration);
        let _ = writeln!(s, "rounds_trained\t{}", self.rounds_trained);
        for (k, v) in self.config.to_pairs() {
            let _ = writeln!(s, "config\t{k}\t{v}");
        }
        let _ = writeln!(s, "features\t{}", self.feature_names.len());
        for (f, name) in self.feature_names.iter().enumerate() {
            let mut fields = vec![name.clone()];
            fields.extend(self.bin_mapper.thresholds(f).iter().map(|t| t.to_string()));
            let _ = writeln!(s, "{}", textfmt::join(&fields));
        }
        let _ = writeln!(s, "trees\t{}", self.trees.len());
        for tree in &self.trees {
            let _ = writeln!(s, "tree\t{}", tree.nodes().len());
            for item in tree.preorder() {
                let _ = match item {
                    PreorderItem::Split(f, b) => writeln!(s, "S\t{f}\t{b}"),
                    PreorderItem::Leaf(v) => writeln!(s, "L\t{v}"),
                };
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<GbdtModel> {
        let mut lines = Lines::new("gbdt model", text);
        let header = lines.expect_fields()?;
        if header.join("\t") != MODEL_HEADER {
            return Err(lines.error("unrecognized model header"));
        }
        let loss_text = lines.expect_kv("loss")?;
        let loss: LossKind = loss_text.parse().map_err(|e: String| lines.error(e))?;
        let base_text = lines.expect_kv("base_score")?;
        let base_score: f64 = lines.parse(&base_text)?;
        let best_text = lines.expect_kv("best_iteration")?;
        let best_iteration: usize = lines.parse(&best_text)?;
        let rounds_text = lines.expect_kv("rounds_trained")?;
        let rounds_trained: usize = lines.parse(&rounds_text)?;

        let mut config = GbdtConfig::default();
        for key in CONFIG_KEYS {
            let fields = lines.expect_fields()?;
            if fields.len() != 3 || fields[0] != "config" || fields[1] != key {
                return Err(lines.error(format!("expected config `{key}`")));
            }
            config.set(key, &fields[2]).map_err(|e| lines.error(e.to_string()))?;
        }

        let count_text = lines.expect_kv("features")?;
        let n_features: usize = lines.parse(&count_text)?;
        let mut names = Vec::with_capacity(n_features);
        let mut thresholds = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            let fields = lines.expect_fields()?;
            let mut t = Vec::with_capacity(fields.len() - 1);
            for v in &fields[1..] {
                t.push(lines.parse::<f64>(v)?);
            }
            names.push(fields[0].clone());
            thresholds.push(t);
        }
        let bin_mapper =
            BinMapper::from_thresholds(thresholds).map_err(|e| lines.error(e.to_string()))?;

        let tree_text = lines.expect_kv("trees")?;
        let n_trees: usize = lines.parse(&tree_text)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let size_text = lines.expect_kv("tree")?;
            let size: usize = lines.parse(&size_text)?;
            let mut items = Vec::with_capacity(size);
            for _ in 0..size {
                let fields = lines.expect_fields()?;
                let item = match (fields[0].as_str(), fields.len()) {
                    ("S", 3) => {
                        let f: usize = lines.parse(&fields[1])?;
                        let b: u16 = lines.parse(&fields[2])?;
                        if f >= n_features || usize::from(b) >= bin_mapper.n_bins(f) {
                            return Err(lines.error("split refers to an unknown feature or bin"));
                        }
                        PreorderItem::Split(f, b)
                    }
                    ("L", 2) => PreorderItem::Leaf(lines.parse(&fields[1])?),
                    _ => return Err(lines.error("expected a split or leaf node")),
                };
                items.push(item);
            }
            trees.push(Tree::from_preorder(&items).map_err(|e| lines.error(e.to_string()))?);
        }
        lines.finish()?;
        if best_iteration > trees.len() {
            return Err(Error::Format {
                what: "gbdt model",
                line: 0,
                reason: format!("best_iteration {best_iteration} exceeds {} trees", trees.len()),
            });
        }
        if !base_score.is_finite() {
            return Err(Error::Format {
                what: "gbdt model",
                line: 0,
                reason: "base_score is not finite".into(),
            });
        }
        Ok(GbdtModel {
            loss,
            base_score,
            trees,
            config,
            bin_mapper,
            feature_names: names,
            best_iteration,
            rounds_trained,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen::<f64>()).collect())
            .collect();
        FeatureMatrix::from_rows(&data).unwrap()
    }

    fn quick(rounds: usize) -> GbdtConfig {
        GbdtConfig {
            num_rounds: rounds,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            ..GbdtConfig::default()
        }
    }

    #[test]
    fn finite_difference_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let raw: f64 = rng.gen_range(-10.0..10.0);
            let y = f64::from(rng.gen_range(0..2u8));
            let h = 1e-5;
            let f = |r: f64| point_loss(LossKind::Logistic, r, y);
            let fd_grad = (f(raw + h) - f(raw - h)) / (2.0 * h);
            let (g, hs) = loss_grad_hess(LossKind::Logistic, raw, y);
            let gp = |r: f64| loss_grad_hess(LossKind::Logistic, r, y).0;
            let fd_hess = (gp(raw + h) - gp(raw - h)) / (2.0 * h);
            assert!((g - fd_grad).abs() <= 1e-6 * g.abs().max(1e-3), "{raw} {y}");
            assert!((hs - fd_hess).abs() <= 1e-6 * hs.abs().max(1e-3), "{raw} {y}");
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let m = random_matrix(100, 3, 1);
        let y = vec![0.37; 100];
        let model = fit(&m, &y, LossKind::Squared, &quick(20), None).unwrap();
        for p in model.predict(&m).unwrap() {
            assert!((p - 0.37).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_tree_model_predicts_base() {
        let m = random_matrix(5, 2, 1);
        let model =
            GbdtModel::constant(LossKind::Squared, 0.99, m.column_names().to_vec(), GbdtConfig::default())
                .unwrap();
        assert_eq!(model.predict(&m).unwrap(), vec![0.99; 5]);
    }

    #[test]
    fn training_loss_is_monotone_without_sampling() {
        let m = random_matrix(300, 4, 2);
        let y: Vec<f64> = (0..300).map(|i| m.get(i, 0) * 3.0 + (m.get(i, 1) * 7.0).sin()).collect();
        let config = GbdtConfig {
            bagging_fraction: 1.0,
            feature_fraction: 1.0,
            ..quick(60)
        };
        let (_, trace) = fit_with_trace(&m, &y, LossKind::Squared, &config, None).unwrap();
        for w in trace.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
        assert!(trace.train_loss.last().unwrap() < &(trace.train_loss[0] * 0.5));
    }

    #[test]
    fn separable_classes_are_learned() {
        let m = random_matrix(200, 2, 3);
        let y: Vec<f64> = (0..200)
            .map(|i| if m.get(i, 0) + m.get(i, 1) > 1.0 { 1.0 } else { 0.0 })
            .collect();
        let config = GbdtConfig {
            min_samples_leaf: 1,
            num_leaves: 31,
            max_depth: 10,
            learning_rate: 0.3,
            bagging_fraction: 1.0,
            feature_fraction: 1.0,
            ..quick(100)
        };
        let model = fit(&m, &y, LossKind::Logistic, &config, None).unwrap();
        let p = model.predict(&m).unwrap();
        let correct = p.iter().zip(&y).filter(|(p, y)| (**p > 0.5) == (**y == 1.0)).count();
        assert_eq!(correct, 200);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn predict_reproduces_training_scores() {
        let m = random_matrix(250, 5, 4);
        let y: Vec<f64> = (0..250).map(|i| f64::from(m.get(i, 2) > 0.6)).collect();
        let (model, trace) =
            fit_with_trace(&m, &y, LossKind::Logistic, &quick(40), None).unwrap();
        assert_eq!(model.predict_raw(&m).unwrap(), trace.final_raw);
    }

    #[test]
    fn early_stopping_keeps_best_prefix() {
        let m = random_matrix(400, 3, 5);
        let y: Vec<f64> = (0..400).map(|i| m.get(i, 0)).collect();
        let v = random_matrix(100, 3, 6);
        // validation target unrelated to the features: no round should help much
        let vy: Vec<f64> = (0..100).map(|i| v.get(i, 2)).collect();
        let config = GbdtConfig {
            early_stopping_rounds: 5,
            ..quick(200)
        };
        let (model, trace) =
            fit_with_trace(&m, &y, LossKind::Squared, &config, Some((&v, &vy))).unwrap();
        assert!(model.rounds_trained() < 200);
        let argmin = trace
            .valid_metric
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(model.best_iteration(), argmin);
        assert_eq!(model.rounds_trained(), argmin + 5);
        assert_eq!(model.predict_raw(&m).unwrap(), trace.final_raw);
    }

    #[test]
    fn shrinkage_scales_first_step() {
        let m = random_matrix(200, 2, 7);
        let y: Vec<f64> = (0..200).map(|i| if m.get(i, 0) > 0.5 { 2.0 } else { 0.0 }).collect();
        let step = |lr: f64| {
            let config = GbdtConfig {
                learning_rate: lr,
                bagging_fraction: 1.0,
                feature_fraction: 1.0,
                ..quick(1)
            };
            let model = fit(&m, &y, LossKind::Squared, &config, None).unwrap();
            let p = model.predict(&m).unwrap();
            p[0] - model.base_score()
        };
        let (a, b) = (step(0.01), step(0.02));
        assert!(a.abs() > 0.0);
        assert!((b / a - 2.0).abs() < 1e-9);
    }

    #[test]
    fn input_errors() {
        let m = random_matrix(10, 2, 8);
        let c = quick(3);
        assert!(matches!(fit(&m, &[0.0; 9], LossKind::Squared, &c, None), Err(Error::Input(_))));
        assert!(matches!(fit(&m, &[0.5; 10], LossKind::Logistic, &c, None), Err(Error::Input(_))));
        let empty = FeatureMatrix::new(vec!["a".into()], Vec::new(), Vec::new()).unwrap();
        assert!(matches!(fit(&empty, &[], LossKind::Squared, &c, None), Err(Error::Input(_))));
        let model = fit(&m, &[1.0; 10], LossKind::Squared, &c, None).unwrap();
        let other = random_matrix(4, 3, 9);
        assert!(matches!(model.predict(&other), Err(Error::Schema(_))));
    }

    #[test]
    fn invalid_configs() {
        for (k, v) in [
            ("num_leaves", "1"),
            ("max_depth", "0"),
            ("feature_fraction", "0"),
            ("bagging_fraction", "1.5"),
            ("learning_rate", "0"),
            ("max_bins", "1"),
        ] {
            let mut c = GbdtConfig::default();
            c.set(k, v).unwrap();
            assert!(c.validate().is_err(), "{k}={v}");
        }
        assert!(GbdtConfig::default().set("depth", "3").is_err());
        assert!(GbdtConfig::default().set("max_depth", "three").is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = random_matrix(300, 4, 10);
        let y: Vec<f64> = (0..300).map(|i| (m.get(i, 0) * 10.0).exp().ln_1p() / 3.0).collect();
        let model = fit(&m, &y, LossKind::Squared, &quick(25), None).unwrap();
        let text = model.to_text();
        let back = GbdtModel::from_text(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_text(), text);
        let a = model.predict(&m).unwrap();
        let b = back.predict(&m).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn corrupt_model_text_is_rejected() {
        let m = random_matrix(50, 2, 12);
        let model = fit(&m, &[1.0; 50], LossKind::Squared, &quick(2), None).unwrap();
        let text = model.to_text();
        assert!(GbdtModel::from_text(&text.replace("loanprofit-gbdt", "other")).is_err());
        assert!(GbdtModel::from_text(&text[..text.len() / 2]).is_err());
        assert!(GbdtModel::from_text(&format!("{text}extra\n")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn training_is_seed_deterministic(seed in 0u64..1000) {
            let m = random_matrix(120, 3, seed);
            let y: Vec<f64> = (0..120).map(|i| f64::from(m.get(i, 1) > 0.4)).collect();
            let c = GbdtConfig { seed, ..quick(10) };
            let a = fit(&m, &y, LossKind::Logistic, &c, None).unwrap();
            let b = fit(&m, &y, LossKind::Logistic, &c, None).unwrap();
            prop_assert_eq!(a.to_text(), b.to_text());
        }
    }
}
