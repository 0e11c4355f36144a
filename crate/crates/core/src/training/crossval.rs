use serde::{Deserialize, Serialize};

use crate::data_io::Sample;
use crate::error::Result;
use crate::metrics::{evaluate, EvalOptions, MetricsReport};
use crate::model::{Model, ModelConfig};
use crate::rng;

use super::kfold::kfold_split;
use super::train::{train_with, EpochStats, TrainConfig, TrainHistory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub history: TrainHistory,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    /// Every held-out image across folds, aggregated as one set.
    pub aggregate: MetricsReport,
}

/// Trains a fresh model per fold (seeded from `(train.seed, fold)`) and
/// scores it on the held-out fold.
pub fn cross_validate(
    model_cfg: ModelConfig,
    data: &[Sample],
    train_cfg: &TrainConfig,
    opts: EvalOptions,
    mut on_epoch: impl FnMut(usize, &EpochStats),
) -> Result<CrossValReport> {
    train_cfg.validate()?;
    let splits = kfold_split(data.len(), train_cfg.folds, train_cfg.seed)?;
    let mut folds = Vec::with_capacity(splits.len());
    for (f, split) in splits.iter().enumerate() {
        let seed = rng::derive_seed(train_cfg.seed, &[f as u64]);
        let model = Model::build(ModelConfig { seed, ..model_cfg })?;
        let train_set: Vec<Sample> = split.train.iter().map(|&i| data[i].clone()).collect();
        let test_set: Vec<Sample> = split.test.iter().map(|&i| data[i].clone()).collect();
        let cfg = TrainConfig { seed, ..*train_cfg };
        let (model, mut history) = train_with(model, &train_set, &cfg, |s| on_epoch(f, s))?;
        let mut report = evaluate(&model, &test_set, opts)?;
        report.provenance.insert("fold".into(), f.to_string());
        history.validation = report.all;
        folds.push(FoldResult {
            fold: f,
            seed,
            test_ids: test_set.iter().map(|s| s.id.clone()).collect(),
            history,
            report,
        });
    }
    let rows = folds.iter().flat_map(|f| f.report.rows.iter().cloned()).collect();
    let excluded = folds.iter().flat_map(|f| f.report.excluded.iter().cloned()).collect();
    let mut aggregate = MetricsReport::from_rows(rows, excluded, opts);
    aggregate.provenance.insert("arch".into(), model_cfg.arch.to_string());
    aggregate.provenance.insert("folds".into(), train_cfg.folds.to_string());
    aggregate.provenance.insert("seed".into(), train_cfg.seed.to_string());
    Ok(CrossValReport { folds, aggregate })
}
