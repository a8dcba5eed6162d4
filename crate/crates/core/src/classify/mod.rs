//! "age"/"no age" classification behind one contract.
//!
//! Two backends: [`BaselineModel`], a class-weighted linear max-margin model
//! over scaled word n-gram counts, and [`ExternalClassifierClient`], which
//! talks to a plug-in process over the `age-clf/1` line protocol.

mod baseline;
mod plugin;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledPost, Post};
use crate::error::{Error, Result};
use crate::eval::{classification_eval, EvalCounts};

pub use baseline::{
    featurize, scale, train_baseline, BaselineConfig, BaselineModel, NgramVocabulary, SparseCounts,
    SparseVector, MODEL_MAGIC, MODEL_SCHEMA_VERSION,
};
pub use plugin::{ExternalClassifierClient, PluginOptions, PROTOCOL};

/// One classifier decision. For the baseline, `score` is the signed margin
/// and the label is Age iff `score > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub post_id: String,
    pub label: Label,
    pub score: f64,
}

pub trait Classifier: Send {
    fn name(&self) -> &str;

    /// One prediction per post, in input order.
    fn classify(&mut self, posts: &[Post]) -> Result<Vec<Prediction>>;
}

/// Deterministic k-fold partition of `0..n`: every index lands in exactly one
/// test fold, and fold sizes differ by at most one.
pub fn k_fold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("cannot split {n} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Trains on k−1 folds and tests on the held-out one, k times, and sums the
/// classification counts.
pub fn cross_validate(data: &[LabeledPost], config: &BaselineConfig, k: usize) -> Result<EvalCounts> {
    let folds = k_fold(data.len(), k, config.seed)?;
    let mut total = EvalCounts::default();
    for (f, test_idx) in folds.iter().enumerate() {
        let mut in_test = vec![false; data.len()];
        for &i in test_idx {
            in_test[i] = true;
        }
        let train: Vec<LabeledPost> = data
            .iter()
            .zip(&in_test)
            .filter(|(_, &t)| !t)
            .map(|(d, _)| d.clone())
            .collect();
        let test: Vec<LabeledPost> = test_idx.iter().map(|&i| data[i].clone()).collect();
        let model = train_baseline(&train, config)
            .map_err(|e| Error::Training(format!("fold {f}: {e}")))?;
        let predictions: Vec<Prediction> = test.iter().map(|d| model.predict(d.post())).collect();
        total += classification_eval(&predictions, &test)?;
    }
    Ok(total)
}
