//! End-to-end run: ingest → retrieve → classify → extract, streamed in
//! bounded batches, with per-post and per-user JSONL output.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{BaselineModel, Classifier, ExternalClassifierClient, PluginOptions, Prediction};
use crate::corpus::{timestamp, Label, Post, PostFormat, PostReader};
use crate::error::{Error, Result};
use crate::extract::{load_rules, Extraction, RuleSet};
use crate::retrieval::{
    compile_pattern_set, default_patterns, load_patterns, match_candidates, should_drop,
    CompiledPatternSet, DropDecision,
};

pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const USERS_FILE: &str = "users.jsonl";
pub const REPORT_FILE: &str = "report.json";
/// Suffix carried by output files until the run completes.
pub const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    /// A saved baseline model file.
    Builtin(PathBuf),
    /// A plug-in command line, program first.
    Plugin(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    /// Forces the input format; otherwise it follows each file's extension.
    pub input_format: Option<PostFormat>,
    /// Query patterns; the shipped set when absent.
    pub patterns: Option<PathBuf>,
    /// Extraction rules; the shipped set when absent.
    pub rules: Option<PathBuf>,
    pub classifier: ClassifierSpec,
    pub plugin_options: PluginOptions,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub batch_size: usize,
    /// Recorded in the report. No stage draws random numbers.
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(inputs: Vec<PathBuf>, classifier: ClassifierSpec, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            inputs,
            input_format: None,
            patterns: None,
            rules: None,
            classifier,
            plugin_options: PluginOptions::default(),
            output_dir: output_dir.into(),
            parallelism: 1,
            batch_size: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut files: Vec<&Path> = self.inputs.iter().map(PathBuf::as_path).collect();
        files.extend(self.patterns.as_deref());
        files.extend(self.rules.as_deref());
        if let ClassifierSpec::Builtin(model) = &self.classifier {
            files.push(model);
        }
        if let ClassifierSpec::Plugin(command) = &self.classifier {
            if command.is_empty() {
                return Err(Error::Config("empty plug-in command".into()));
            }
        }
        for f in files {
            if !f.is_file() {
                return Err(Error::Config(format!("{} does not exist", f.display())));
            }
        }
        Ok(())
    }
}

/// Funnel counts for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub posts_scanned: u64,
    pub users_scanned: u64,
    pub retweets_dropped: u64,
    /// Matched posts dropped as quotations or headlines.
    pub reported_speech_dropped: u64,
    pub candidates_matched: u64,
    pub users_matched: u64,
    pub age_classified: u64,
    pub ages_extracted: u64,
    pub users_with_age: u64,
    pub seed: u64,
}

/// Each funnel count over the stage feeding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunnelFractions {
    /// retweets / posts scanned
    pub retweets_dropped: f64,
    /// reported speech / posts that matched a pattern
    pub reported_speech_dropped: f64,
    /// candidates / posts scanned
    pub candidates_matched: f64,
    /// users with a candidate / users scanned
    pub users_matched: f64,
    /// age predictions / candidates
    pub age_classified: f64,
    /// extractions / age predictions
    pub ages_extracted: f64,
    /// users with an age / users scanned
    pub users_with_age: f64,
}

fn frac(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl PipelineReport {
    pub fn fractions(&self) -> FunnelFractions {
        FunnelFractions {
            retweets_dropped: frac(self.retweets_dropped, self.posts_scanned),
            reported_speech_dropped: frac(
                self.reported_speech_dropped,
                self.reported_speech_dropped + self.candidates_matched,
            ),
            candidates_matched: frac(self.candidates_matched, self.posts_scanned),
            users_matched: frac(self.users_matched, self.users_scanned),
            age_classified: frac(self.age_classified, self.candidates_matched),
            ages_extracted: frac(self.ages_extracted, self.age_classified),
            users_with_age: frac(self.users_with_age, self.users_scanned),
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.candidates_matched >= self.age_classified && self.age_classified >= self.ages_extracted
    }
}

/// One line of the per-post output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub post_id: String,
    pub user_id: String,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
    pub label: Label,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    /// first query pattern that matched the post
    pub pattern_id: String,
}

/// An extraction tied to its author and posting time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserExtraction {
    pub user_id: String,
    pub post_id: String,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
    pub age: u8,
    pub rule_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAgeEntry {
    pub post_id: String,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
    pub age: u8,
    pub rule_id: String,
}

/// All ages found for one user. `latest_age` is a plain recency policy, not
/// an estimate reconciled across the timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAgeRecord {
    pub user_id: String,
    /// oldest post first
    pub extractions: Vec<UserAgeEntry>,
    pub latest_age: u8,
}

/// Keeps every extraction and reports the age from the most recent post;
/// posts with equal timestamps resolve to the larger age.
pub fn rollup_user(extractions: &[UserExtraction]) -> Result<UserAgeRecord> {
    let first = extractions
        .first()
        .ok_or_else(|| Error::Config("no extractions to roll up".into()))?;
    if let Some(other) = extractions.iter().find(|e| e.user_id != first.user_id) {
        return Err(Error::Config(format!(
            "extractions from users {:?} and {:?} in one rollup",
            first.user_id, other.user_id
        )));
    }
    let mut entries: Vec<UserAgeEntry> = extractions
        .iter()
        .map(|e| UserAgeEntry {
            post_id: e.post_id.clone(),
            created_at: e.created_at,
            age: e.age,
            rule_id: e.rule_id.clone(),
        })
        .collect();
    entries.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then(a.age.cmp(&b.age))
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
    let latest_age = entries.last().expect("non-empty").age;
    Ok(UserAgeRecord {
        user_id: first.user_id.clone(),
        extractions: entries,
        latest_age,
    })
}

enum Routed {
    Retweet,
    Unmatched,
    ReportedSpeech,
    Candidate(String),
}

fn route(post: &Post, matcher: &CompiledPatternSet) -> Routed {
    let decision = should_drop(post);
    if decision == DropDecision::Retweet {
        return Routed::Retweet;
    }
    let Some(hit) = match_candidates(post, matcher).into_iter().next() else {
        return Routed::Unmatched;
    };
    if decision == DropDecision::ReportedSpeech {
        return Routed::ReportedSpeech;
    }
    Routed::Candidate(hit.pattern_id)
}

struct Outputs {
    dir: PathBuf,
    tweets: BufWriter<File>,
}

fn partial(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}{PARTIAL_SUFFIX}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_line<T: Serialize>(out: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))
}

fn finalize(dir: &Path, name: &str) -> Result<()> {
    let from = partial(dir, name);
    let to = dir.join(name);
    std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))
}

struct Run<'a> {
    matcher: CompiledPatternSet,
    rules: RuleSet,
    classifier: &'a mut dyn Classifier,
    pool: rayon::ThreadPool,
    report: PipelineReport,
    users_seen: HashSet<String>,
    users_matched: HashSet<String>,
    by_user: BTreeMap<String, Vec<UserExtraction>>,
}

impl Run<'_> {
    fn batch(&mut self, posts: &[Post], out: &mut Outputs) -> Result<()> {
        let matcher = &self.matcher;
        let routed: Vec<Routed> = self
            .pool
            .install(|| posts.par_iter().map(|p| route(p, matcher)).collect());

        let mut candidates: Vec<Post> = Vec::new();
        let mut pattern_ids: Vec<String> = Vec::new();
        for (post, r) in posts.iter().zip(routed) {
            self.report.posts_scanned += 1;
            if !self.users_seen.contains(&post.user_id) {
                self.users_seen.insert(post.user_id.clone());
            }
            match r {
                Routed::Retweet => self.report.retweets_dropped += 1,
                Routed::Unmatched => {}
                Routed::ReportedSpeech => self.report.reported_speech_dropped += 1,
                Routed::Candidate(pattern_id) => {
                    self.report.candidates_matched += 1;
                    if !self.users_matched.contains(&post.user_id) {
                        self.users_matched.insert(post.user_id.clone());
                    }
                    candidates.push(post.clone());
                    pattern_ids.push(pattern_id);
                }
            }
        }
        if candidates.is_empty() {
            return Ok(());
        }

        let classifier = &mut *self.classifier;
        let predictions = self
            .pool
            .install(|| classifier.classify(&candidates))
            .map_err(|e| e.in_stage("classify"))?;
        check_predictions(&candidates, &predictions).map_err(|e| e.in_stage("classify"))?;

        let rules = &self.rules;
        let extractions: Vec<Option<Extraction>> = self.pool.install(|| {
            candidates
                .par_iter()
                .zip(&predictions)
                .map(|(post, p)| match p.label {
                    Label::Age => rules.extract(post),
                    Label::NoAge => None,
                })
                .collect()
        });

        let tweets_path = partial(&out.dir, TWEETS_FILE);
        for ((post, prediction), (extraction, pattern_id)) in candidates
            .into_iter()
            .zip(predictions)
            .zip(extractions.into_iter().zip(pattern_ids))
        {
            if prediction.label == Label::Age {
                self.report.age_classified += 1;
            }
            if let Some(e) = &extraction {
                self.report.ages_extracted += 1;
                self.by_user
                    .entry(post.user_id.clone())
                    .or_default()
                    .push(UserExtraction {
                        user_id: post.user_id.clone(),
                        post_id: post.id.clone(),
                        created_at: post.created_at,
                        age: e.age,
                        rule_id: e.rule_id.clone(),
                    });
            }
            let record = TweetRecord {
                post_id: post.id,
                user_id: post.user_id,
                created_at: post.created_at,
                label: prediction.label,
                score: prediction.score,
                age: extraction.as_ref().map(|e| e.age),
                rule_id: extraction.map(|e| e.rule_id),
                pattern_id,
            };
            write_line(&mut out.tweets, &tweets_path, &record).map_err(|e| e.in_stage("write"))?;
        }
        Ok(())
    }
}

fn check_predictions(posts: &[Post], predictions: &[Prediction]) -> Result<()> {
    if posts.len() != predictions.len() {
        return Err(Error::Plugin(format!(
            "{} predictions for {} posts",
            predictions.len(),
            posts.len()
        )));
    }
    if let Some((post, p)) = posts.iter().zip(predictions).find(|(a, b)| a.id != b.post_id) {
        return Err(Error::Plugin(format!(
            "prediction for {:?} where {:?} was expected",
            p.post_id, post.id
        )));
    }
    Ok(())
}

fn build_classifier(config: &PipelineConfig) -> Result<Box<dyn Classifier>> {
    Ok(match &config.classifier {
        ClassifierSpec::Builtin(path) => Box::new(BaselineModel::load(path)?),
        ClassifierSpec::Plugin(command) => Box::new(ExternalClassifierClient::spawn(
            command.clone(),
            config.plugin_options.clone(),
        )?),
    })
}

/// Runs the pipeline with the classifier named in the config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let mut classifier = build_classifier(config).map_err(|e| e.in_stage("classify"))?;
    run_pipeline_with(config, classifier.as_mut())
}

/// Runs the pipeline with a caller-supplied classifier; `config.classifier`
/// is ignored.
///
/// Output goes to `*.partial` files that are renamed only once every stage
/// has finished, so a failed run leaves its partial output marked as such.
pub fn run_pipeline_with(config: &PipelineConfig, classifier: &mut dyn Classifier) -> Result<PipelineReport> {
    if config.parallelism == 0 || config.batch_size == 0 {
        return Err(Error::Config("parallelism and batch size must be at least 1".into()).in_stage("config"));
    }
    let patterns = match &config.patterns {
        Some(p) => load_patterns(p),
        None => Ok(default_patterns()),
    }
    .and_then(|p| compile_pattern_set(&p))
    .map_err(|e| e.in_stage("retrieve"))?;
    let rules = match &config.rules {
        Some(p) => load_rules(p),
        None => Ok(RuleSet::default_rules()),
    }
    .map_err(|e| e.in_stage("extract"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(e.to_string()).in_stage("config"))?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).in_stage("write"))?;
    for name in [TWEETS_FILE, USERS_FILE, REPORT_FILE] {
        let stale = dir.join(name);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e).in_stage("write"))?;
        }
    }
    let mut out = Outputs {
        dir: dir.clone(),
        tweets: create(&partial(dir, TWEETS_FILE)).map_err(|e| e.in_stage("write"))?,
    };

    let mut run = Run {
        matcher: patterns,
        rules,
        classifier,
        pool,
        report: PipelineReport {
            seed: config.seed,
            ..Default::default()
        },
        users_seen: HashSet::new(),
        users_matched: HashSet::new(),
        by_user: BTreeMap::new(),
    };

    let mut batch = Vec::with_capacity(config.batch_size);
    for input in &config.inputs {
        let format = config.input_format.unwrap_or_else(|| PostFormat::from_path(input));
        let reader = PostReader::open(input, format).map_err(|e| e.in_stage("ingest"))?;
        for post in reader {
            batch.push(post.map_err(|e| e.in_stage("ingest"))?);
            if batch.len() == config.batch_size {
                run.batch(&batch, &mut out)?;
                batch.clear();
            }
        }
    }
    run.batch(&batch, &mut out)?;

    let tweets_path = partial(dir, TWEETS_FILE);
    out.tweets
        .flush()
        .map_err(|e| Error::io(&tweets_path, e).in_stage("write"))?;

    let users_path = partial(dir, USERS_FILE);
    let mut users = create(&users_path).map_err(|e| e.in_stage("write"))?;
    for extractions in run.by_user.values() {
        let record = rollup_user(extractions).map_err(|e| e.in_stage("rollup"))?;
        write_line(&mut users, &users_path, &record).map_err(|e| e.in_stage("write"))?;
    }
    users
        .flush()
        .map_err(|e| Error::io(&users_path, e).in_stage("write"))?;

    let mut report = run.report;
    report.users_scanned = run.users_seen.len() as u64;
    report.users_matched = run.users_matched.len() as u64;
    report.users_with_age = run.by_user.len() as u64;

    let report_path = partial(dir, REPORT_FILE);
    let json = serde_json::json!({ "counts": &report, "fractions": report.fractions() });
    std::fs::write(&report_path, serde_json::to_string_pretty(&json).expect("serializable") + "\n")
        .map_err(|e| Error::io(&report_path, e).in_stage("write"))?;

    for name in [TWEETS_FILE, USERS_FILE, REPORT_FILE] {
        finalize(dir, name).map_err(|e| e.in_stage("write"))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ux(user: &str, post: &str, year: i32, age: u8) -> UserExtraction {
        UserExtraction {
            user_id: user.into(),
            post_id: post.into(),
            created_at: Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap(),
            age,
            rule_id: "r".into(),
        }
    }

    #[test]
    fn rollup_recency() {
        assert_eq!(rollup_user(&[ux("u", "a", 2015, 21)]).unwrap().latest_age, 21);
        let r = rollup_user(&[ux("u", "b", 2018, 21), ux("u", "a", 2015, 19)]).unwrap();
        assert_eq!(r.latest_age, 21);
        assert_eq!(r.extractions[0].post_id, "a");
        let r = rollup_user(&[ux("u", "a", 2018, 21), ux("u", "b", 2018, 20)]).unwrap();
        assert_eq!(r.latest_age, 21);
        assert_eq!(r.extractions.len(), 2);
    }

    #[test]
    fn rollup_errors() {
        assert!(rollup_user(&[]).is_err());
        assert!(rollup_user(&[ux("u", "a", 2015, 21), ux("v", "b", 2015, 21)]).is_err());
    }

    #[test]
    fn fractions_of_empty_report() {
        let f = PipelineReport::default().fractions();
        assert_eq!(f.candidates_matched, 0.0);
        assert!(PipelineReport::default().is_monotone());
    }

    #[test]
    fn config_validation() {
        let mut c = PipelineConfig::new(vec![], ClassifierSpec::Plugin(vec!["x".into()]), "out");
        assert!(c.validate().is_ok());
        c.parallelism = 0;
        assert!(c.validate().is_err());
        let c = PipelineConfig::new(
            vec![PathBuf::from("/no/such/file.jsonl")],
            ClassifierSpec::Plugin(vec!["x".into()]),
            "out",
        );
        assert!(c.validate().is_err());
    }
}
