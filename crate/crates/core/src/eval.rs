//! Evaluation: precision/recall/F₁ for the "age" class under the
//! classification and joint extraction taxonomies, and Fleiss' kappa.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::classify::Prediction;
use crate::corpus::{Label, LabeledPost};
use crate::error::{Error, Result};
use crate::extract::Extraction;

/// Confusion tallies for the "age" class. `tn` is kept for conservation
/// checks and is not used by [`prf`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(default)]
    pub tn: u64,
}

impl EvalCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        EvalCounts { tp, fp, fn_, tn: 0 }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, other: Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Three-decimal display values, rounded half to even.
    pub fn rounded(&self) -> Metrics {
        Metrics {
            precision: round3(self.precision),
            recall: round3(self.recall),
            f1: round3(self.f1),
        }
    }
}

pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round_ties_even() / 1000.0
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and their harmonic mean. A 0/0 ratio is 0.
pub fn prf(counts: EvalCounts) -> Metrics {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    };
    Metrics {
        precision,
        recall,
        f1,
    }
}

fn gold_index(gold: &[LabeledPost]) -> Result<HashMap<&str, &LabeledPost>> {
    let mut index = HashMap::with_capacity(gold.len());
    for g in gold {
        if index.insert(g.post().id.as_str(), g).is_some() {
            return Err(Error::Eval(format!("duplicate gold id {:?}", g.post().id)));
        }
    }
    Ok(index)
}

fn check_bijection<'a>(
    ids: impl ExactSizeIterator<Item = &'a str>,
    gold: &HashMap<&str, &LabeledPost>,
) -> Result<()> {
    if ids.len() != gold.len() {
        return Err(Error::Eval(format!(
            "{} predictions for {} gold items",
            ids.len(),
            gold.len()
        )));
    }
    let mut seen = std::collections::HashSet::with_capacity(gold.len());
    for id in ids {
        if !gold.contains_key(id) {
            return Err(Error::Eval(format!("prediction for unknown id {id:?}")));
        }
        if !seen.insert(id) {
            return Err(Error::Eval(format!("duplicate prediction for {id:?}")));
        }
    }
    Ok(())
}

/// Tallies classification outcomes; "age" is the positive class.
pub fn classification_eval(predictions: &[Prediction], gold: &[LabeledPost]) -> Result<EvalCounts> {
    let index = gold_index(gold)?;
    check_bijection(predictions.iter().map(|p| p.post_id.as_str()), &index)?;
    let mut counts = EvalCounts::default();
    for p in predictions {
        match (index[p.post_id.as_str()].label(), p.label) {
            (Label::Age, Label::Age) => counts.tp += 1,
            (Label::NoAge, Label::Age) => counts.fp += 1,
            (Label::Age, Label::NoAge) => counts.fn_ += 1,
            (Label::NoAge, Label::NoAge) => counts.tn += 1,
        }
    }
    Ok(counts)
}

/// Per-cell tallies for the joint classification + extraction taxonomy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointBreakdown {
    /// gold age, predicted age, extracted age correct
    pub correct_age: u64,
    /// gold age, predicted age, extracted age wrong
    pub wrong_age: u64,
    /// gold no-age, predicted age, some age extracted
    pub no_age_extracted: u64,
    /// gold age, predicted age, nothing extracted
    pub age_not_extracted: u64,
    /// gold age, predicted no-age
    pub age_misclassified: u64,
    /// gold no-age, predicted age, nothing extracted
    pub no_age_unextracted: u64,
    /// gold no-age, predicted no-age
    pub no_age_rejected: u64,
}

impl JointBreakdown {
    pub fn counts(&self) -> EvalCounts {
        EvalCounts {
            tp: self.correct_age,
            fp: self.wrong_age + self.no_age_extracted,
            fn_: self.age_not_extracted + self.age_misclassified,
            tn: self.no_age_unextracted + self.no_age_rejected,
        }
    }
}

impl AddAssign for JointBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.correct_age += o.correct_age;
        self.wrong_age += o.wrong_age;
        self.no_age_extracted += o.no_age_extracted;
        self.age_not_extracted += o.age_not_extracted;
        self.age_misclassified += o.age_misclassified;
        self.no_age_unextracted += o.no_age_unextracted;
        self.no_age_rejected += o.no_age_rejected;
    }
}

/// Places one item in its joint-taxonomy cell.
pub fn joint_cell(gold_label: Label, gold_age: Option<u8>, predicted: Label, extracted: Option<u8>) -> JointBreakdown {
    let mut cell = JointBreakdown::default();
    match (gold_label, predicted, extracted) {
        (Label::Age, Label::Age, Some(age)) if Some(age) == gold_age => cell.correct_age = 1,
        (Label::Age, Label::Age, Some(_)) => cell.wrong_age = 1,
        (Label::Age, Label::Age, None) => cell.age_not_extracted = 1,
        (Label::Age, Label::NoAge, _) => cell.age_misclassified = 1,
        (Label::NoAge, Label::Age, Some(_)) => cell.no_age_extracted = 1,
        (Label::NoAge, Label::Age, None) => cell.no_age_unextracted = 1,
        (Label::NoAge, Label::NoAge, _) => cell.no_age_rejected = 1,
    }
    cell
}

/// Scores classification and extraction together: a true positive needs the
/// right class and the right age.
pub fn joint_extraction_eval(
    results: &[(Prediction, Option<Extraction>)],
    gold: &[LabeledPost],
) -> Result<JointBreakdown> {
    let index = gold_index(gold)?;
    check_bijection(results.iter().map(|(p, _)| p.post_id.as_str()), &index)?;
    let mut breakdown = JointBreakdown::default();
    for (prediction, extraction) in results {
        if let Some(e) = extraction {
            if e.post_id != prediction.post_id {
                return Err(Error::Eval(format!(
                    "extraction for {:?} paired with prediction for {:?}",
                    e.post_id, prediction.post_id
                )));
            }
        }
        let g = index[prediction.post_id.as_str()];
        // extraction only runs on posts predicted "age"
        let extracted = match prediction.label {
            Label::Age => extraction.as_ref().map(|e| e.age),
            Label::NoAge => None,
        };
        breakdown += joint_cell(g.label(), g.age(), prediction.label, extracted);
    }
    Ok(breakdown)
}

/// Items × categories table of how many raters chose each category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingMatrix {
    counts: Vec<Vec<u32>>,
    raters_per_item: u32,
}

impl RatingMatrix {
    pub fn new(counts: Vec<Vec<u32>>, raters_per_item: u32) -> Result<Self> {
        if raters_per_item < 2 {
            return Err(Error::Ratings("need at least 2 raters per item".into()));
        }
        let Some(width) = counts.first().map(Vec::len) else {
            return Err(Error::Ratings("no items".into()));
        };
        if width == 0 {
            return Err(Error::Ratings("no categories".into()));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Ratings(format!(
                    "item {i} has {} categories, expected {width}",
                    row.len()
                )));
            }
            let sum: u32 = row.iter().sum();
            if sum != raters_per_item {
                return Err(Error::Ratings(format!(
                    "item {i} has {sum} ratings, expected {raters_per_item}"
                )));
            }
        }
        Ok(RatingMatrix {
            counts,
            raters_per_item,
        })
    }

    /// Builds the matrix from per-item rater choices. Categories are ordered
    /// by their natural order; each item must have the same number of raters.
    pub fn from_ratings<C: Ord + Eq + Hash + Clone>(items: &[Vec<C>]) -> Result<Self> {
        let categories: BTreeMap<C, usize> = items
            .iter()
            .flatten()
            .cloned()
            .map(|c| (c, 0))
            .collect::<BTreeMap<_, _>>()
            .into_keys()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        let raters = items.first().map(Vec::len).unwrap_or(0) as u32;
        let counts = items
            .iter()
            .map(|item| {
                let mut row = vec![0u32; categories.len()];
                for c in item {
                    row[categories[c]] += 1;
                }
                row
            })
            .collect();
        RatingMatrix::new(counts, raters)
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }

    pub fn categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn raters_per_item(&self) -> u32 {
        self.raters_per_item
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' kappa, `(P̄ − P̄e) / (1 − P̄e)`.
///
/// When every rating falls in one category chance agreement is 1 and the
/// ratio is undefined; that case is perfect agreement and returns 1.
pub fn fleiss_kappa(matrix: &RatingMatrix) -> f64 {
    let n = matrix.raters_per_item as f64;
    let items = matrix.items() as f64;
    let mut category_totals = vec![0f64; matrix.categories()];
    let mut agreement_sum = 0.0;
    for row in &matrix.counts {
        let mut squares = 0.0;
        for (j, &c) in row.iter().enumerate() {
            let c = c as f64;
            category_totals[j] += c;
            squares += c * c;
        }
        agreement_sum += (squares - n) / (n * (n - 1.0));
    }
    let observed = agreement_sum / items;
    let expected: f64 = category_totals
        .iter()
        .map(|t| {
            let p = t / (items * n);
            p * p
        })
        .sum();
    if (1.0 - expected).abs() < 1e-12 {
        return 1.0;
    }
    (observed - expected) / (1.0 - expected)
}

/// Machine-readable evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classification: Option<Section>,
    pub joint_extraction: Option<JointSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub counts: EvalCounts,
    pub metrics: Metrics,
    pub metrics_rounded: Metrics,
}

impl Section {
    pub fn new(counts: EvalCounts) -> Self {
        let metrics = prf(counts);
        Section {
            counts,
            metrics,
            metrics_rounded: metrics.rounded(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSection {
    #[serde(flatten)]
    pub section: Section,
    pub breakdown: JointBreakdown,
}

impl JointSection {
    pub fn new(breakdown: JointBreakdown) -> Self {
        JointSection {
            section: Section::new(breakdown.counts()),
            breakdown,
        }
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>6} {:>6} {:>6} {:>9} {:>7} {:>6}",
            "evaluation", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        let mut row = |name: &str, s: &Section| {
            let m = s.metrics_rounded;
            let _ = writeln!(
                out,
                "{:<18} {:>6} {:>6} {:>6} {:>9.3} {:>7.3} {:>6.3}",
                name, s.counts.tp, s.counts.fp, s.counts.fn_, m.precision, m.recall, m.f1
            );
        };
        if let Some(c) = &self.classification {
            row("classification", c);
        }
        if let Some(j) = &self.joint_extraction {
            row("joint extraction", &j.section);
        }
        if let Some(j) = &self.joint_extraction {
            let b = j.breakdown;
            let _ = writeln!(out);
            let _ = writeln!(out, "true positives   correct class and age      {}", b.correct_age);
            let _ = writeln!(out, "false positives  correct class, wrong age   {}", b.wrong_age);
            let _ = writeln!(out, "                 no-age classified as age   {}", b.no_age_extracted);
            let _ = writeln!(out, "false negatives  correct class, no age      {}", b.age_not_extracted);
            let _ = writeln!(out, "                 age classified as no-age   {}", b.age_misclassified);
        }
        out
    }
}
