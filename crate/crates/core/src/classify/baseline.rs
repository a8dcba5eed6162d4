use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, Prediction};
use crate::corpus::{Label, LabeledPost, Post};
use crate::error::{Error, Result};
use crate::normalize::normalize_for_ngram_classifier;

pub const MODEL_MAGIC: &str = "selfage-ngram-linear";
pub const MODEL_SCHEMA_VERSION: u32 = 1;
const MAX_N: usize = 3;

/// `(feature index, count)` pairs, sorted by index.
pub type SparseCounts = Vec<(usize, u32)>;
/// `(feature index, value)` pairs, sorted by index.
pub type SparseVector = Vec<(usize, f64)>;

/// Word 1–3-grams seen in training, with per-feature count ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramVocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    min: Vec<f64>,
    max: Vec<f64>,
}

fn for_each_ngram(tokens: &[String], mut f: impl FnMut(&str)) {
    let mut buf = String::new();
    for start in 0..tokens.len() {
        buf.clear();
        for (k, tok) in tokens[start..].iter().take(MAX_N).enumerate() {
            if k > 0 {
                buf.push(' ');
            }
            buf.push_str(tok);
            f(&buf);
        }
    }
}

impl NgramVocabulary {
    /// Fits the vocabulary and count ranges. Indices follow first appearance.
    pub fn fit<'a>(documents: impl IntoIterator<Item = &'a [String]>) -> Self {
        let mut terms: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut docs: Vec<SparseCounts> = Vec::new();
        for tokens in documents {
            let mut counts: HashMap<usize, u32> = HashMap::new();
            for_each_ngram(tokens, |g| {
                let i = match index.get(g) {
                    Some(&i) => i,
                    None => {
                        terms.push(g.to_string());
                        index.insert(g.to_string(), terms.len() - 1);
                        terms.len() - 1
                    }
                };
                *counts.entry(i).or_default() += 1;
            });
            let mut counts: SparseCounts = counts.into_iter().collect();
            counts.sort_unstable();
            docs.push(counts);
        }
        let mut max = vec![0f64; terms.len()];
        let mut present = vec![0usize; terms.len()];
        let mut min = vec![f64::INFINITY; terms.len()];
        for doc in &docs {
            for &(i, c) in doc {
                let c = c as f64;
                max[i] = max[i].max(c);
                min[i] = min[i].min(c);
                present[i] += 1;
            }
        }
        for (m, &p) in min.iter_mut().zip(&present) {
            if p < docs.len() {
                *m = 0.0;
            }
        }
        NgramVocabulary {
            terms,
            index,
            min,
            max,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn range(&self, index: usize) -> Option<(f64, f64)> {
        Some((*self.min.get(index)?, *self.max.get(index)?))
    }

    fn from_parts(terms: Vec<String>, min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != terms.len() || max.len() != terms.len() {
            return Err(Error::Model("vocabulary and range lengths differ".into()));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Model(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(NgramVocabulary {
            terms,
            index,
            min,
            max,
        })
    }
}

/// Counts of in-vocabulary n-grams; unknown n-grams are ignored.
pub fn featurize(tokens: &[String], vocab: &NgramVocabulary) -> SparseCounts {
    let mut counts: Vec<(usize, u32)> = Vec::new();
    for_each_ngram(tokens, |g| {
        if let Some(i) = vocab.get(g) {
            counts.push((i, 1));
        }
    });
    counts.sort_unstable_by_key(|&(i, _)| i);
    counts.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    counts
}

/// Min-max scaling into [0, 1] with the training ranges. Out-of-range values
/// are clamped; constant features become 0.
pub fn scale(counts: &SparseCounts, vocab: &NgramVocabulary) -> SparseVector {
    counts
        .iter()
        .filter_map(|&(i, c)| {
            let (lo, hi) = vocab.range(i)?;
            let v = if hi > lo {
                ((c as f64 - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (v != 0.0).then_some((i, v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Cost C of the hinge loss.
    pub cost: f64,
    pub weight_no_age: f64,
    pub weight_age: f64,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop when the projected-gradient gap drops below this.
    pub tolerance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            cost: 32.0,
            weight_no_age: 1.0,
            weight_age: 2.0,
            seed: 0,
            max_iterations: 1000,
            tolerance: 1e-3,
        }
    }
}

impl BaselineConfig {
    pub fn with_seed(seed: u64) -> Self {
        BaselineConfig {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    vocabulary: NgramVocabulary,
    weights: Vec<f64>,
    bias: f64,
    config: BaselineConfig,
}

/// Trains an L2-regularized, class-weighted hinge-loss linear model by dual
/// coordinate descent. The bias is learned as the weight of a constant
/// feature. Visiting order is shuffled with `config.seed`.
pub fn train_baseline(train: &[LabeledPost], config: &BaselineConfig) -> Result<BaselineModel> {
    if !(config.cost > 0.0 && config.weight_age > 0.0 && config.weight_no_age > 0.0) {
        return Err(Error::Training("cost and class weights must be positive".into()));
    }
    let n_age = train.iter().filter(|d| d.label() == Label::Age).count();
    if n_age == 0 || n_age == train.len() {
        return Err(Error::Training(format!(
            "need both classes, got {n_age} age and {} no_age posts",
            train.len() - n_age
        )));
    }

    let tokens: Vec<Vec<String>> = train
        .iter()
        .map(|d| normalize_for_ngram_classifier(&d.post().text))
        .collect();
    let vocabulary = NgramVocabulary::fit(tokens.iter().map(Vec::as_slice));
    let xs: Vec<SparseVector> = tokens
        .iter()
        .map(|t| scale(&featurize(t, &vocabulary), &vocabulary))
        .collect();
    let ys: Vec<f64> = train
        .iter()
        .map(|d| if d.label() == Label::Age { 1.0 } else { -1.0 })
        .collect();
    let upper: Vec<f64> = ys
        .iter()
        .map(|&y| config.cost * if y > 0.0 { config.weight_age } else { config.weight_no_age })
        .collect();
    // squared norm including the constant bias feature
    let q: Vec<f64> = xs
        .iter()
        .map(|x| 1.0 + x.iter().map(|(_, v)| v * v).sum::<f64>())
        .collect();

    let mut w = vec![0f64; vocabulary.len()];
    let mut b = 0f64;
    let mut alpha = vec![0f64; xs.len()];
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for _ in 0..config.max_iterations {
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let x = &xs[i];
            let y = ys[i];
            let margin = b + x.iter().map(|&(j, v)| w[j] * v).sum::<f64>();
            let g = y * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, upper[i]);
                let d = (alpha[i] - old) * y;
                for &(j, v) in x {
                    w[j] += d * v;
                }
                b += d;
            }
        }
        if pg_max - pg_min < config.tolerance {
            break;
        }
    }

    Ok(BaselineModel {
        vocabulary,
        weights: w,
        bias: b,
        config: config.clone(),
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    schema_version: u32,
    config: BaselineConfig,
    vocabulary: Vec<String>,
    min: Vec<f64>,
    max: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl BaselineModel {
    pub fn vocabulary(&self) -> &NgramVocabulary {
        &self.vocabulary
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    /// Signed margin of raw text.
    pub fn score_text(&self, text: &str) -> f64 {
        let tokens = normalize_for_ngram_classifier(text);
        let x = scale(&featurize(&tokens, &self.vocabulary), &self.vocabulary);
        self.bias + x.iter().map(|&(j, v)| self.weights[j] * v).sum::<f64>()
    }

    /// Empty text scores the bias alone.
    pub fn predict(&self, post: &Post) -> Prediction {
        let score = self.score_text(&post.text);
        Prediction {
            post_id: post.id.clone(),
            label: if score > 0.0 { Label::Age } else { Label::NoAge },
            score,
        }
    }

    pub fn predict_all(&self, posts: &[Post]) -> Vec<Prediction> {
        posts.par_iter().map(|p| self.predict(p)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            magic: MODEL_MAGIC.into(),
            schema_version: MODEL_SCHEMA_VERSION,
            config: self.config.clone(),
            vocabulary: self.vocabulary.terms.clone(),
            min: self.vocabulary.min.clone(),
            max: self.vocabulary.max.clone(),
            weights: self.weights.clone(),
            bias: self.bias,
        };
        serde_json::to_string(&file).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if file.magic != MODEL_MAGIC {
            return Err(Error::Model(format!("not a model file (magic {:?})", file.magic)));
        }
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported schema version {}",
                file.schema_version
            )));
        }
        if file.weights.len() != file.vocabulary.len() {
            return Err(Error::Model(format!(
                "{} weights for {} features",
                file.weights.len(),
                file.vocabulary.len()
            )));
        }
        Ok(BaselineModel {
            vocabulary: NgramVocabulary::from_parts(file.vocabulary, file.min, file.max)?,
            weights: file.weights,
            bias: file.bias,
            config: file.config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = self.to_json()?;
        let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        out.write_all(json.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(file), &mut text).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Classifier for BaselineModel {
    fn name(&self) -> &str {
        MODEL_MAGIC
    }

    fn classify(&mut self, posts: &[Post]) -> Result<Vec<Prediction>> {
        Ok(self.predict_all(posts))
    }
}
