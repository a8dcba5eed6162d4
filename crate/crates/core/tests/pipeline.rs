mod common;

use std::path::{Path, PathBuf};

use selfage::classify::{Classifier, Prediction};
use selfage::corpus::{read_jsonl, write_posts, PostFormat};
use selfage::pipeline::{
    run_pipeline, run_pipeline_with, ClassifierSpec, PipelineConfig, PipelineReport, TweetRecord, UserAgeRecord,
    PARTIAL_SUFFIX, REPORT_FILE, TWEETS_FILE, USERS_FILE,
};
use selfage::retrieval::{match_candidates, CompiledPatternSet};
use selfage::{Error, Label, Post};

const STUB: &str = env!("CARGO_BIN_EXE_age-clf-stub");

/// Labels a post "age" iff it contains a keyword.
struct Keyword(&'static str);

impl Classifier for Keyword {
    fn name(&self) -> &str {
        "keyword"
    }

    fn classify(&mut self, posts: &[Post]) -> selfage::Result<Vec<Prediction>> {
        Ok(posts
            .iter()
            .map(|p| {
                let age = p.text.to_lowercase().contains(self.0);
                Prediction {
                    post_id: p.id.clone(),
                    label: if age { Label::Age } else { Label::NoAge },
                    score: if age { 1.0 } else { -1.0 },
                }
            })
            .collect())
    }
}

fn fixture() -> Vec<Post> {
    let texts = [
        "my 21st birthday is today",
        "happy 30th birthday to me!!",
        "It's my 18th birthday and I'm so happy",
        "I am 25 and so tired",
        "turned 40 last week lol",
        "hello world",
        "coffee time",
        "rain again today",
        "see you at the game",
        "no numbers here",
    ];
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Post::new(format!("t{i}"), format!("user{}", i % 4), common::at(2020, 1 + i as u32), *t))
        .collect()
}

fn write_input(dir: &Path, posts: &[Post]) -> PathBuf {
    let path = dir.join("posts.jsonl");
    write_posts(&path, posts, PostFormat::Jsonl).unwrap();
    path
}

fn config(input: PathBuf, out: PathBuf) -> PipelineConfig {
    PipelineConfig::new(vec![input], ClassifierSpec::Plugin(vec![STUB.into()]), out)
}

fn tweets(out: &Path) -> Vec<TweetRecord> {
    read_jsonl(out.join(TWEETS_FILE)).unwrap()
}

#[test]
fn ten_post_funnel() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &fixture());
    let out = dir.path().join("out");
    let report = run_pipeline_with(&config(input, out.clone()), &mut Keyword("birthday")).unwrap();
    assert_eq!(
        (report.posts_scanned, report.candidates_matched, report.age_classified, report.ages_extracted),
        (10, 5, 3, 3)
    );
    assert_eq!((report.retweets_dropped, report.reported_speech_dropped), (0, 0));
    assert!(report.is_monotone());
    assert_eq!(report.users_scanned, 4);

    let records = tweets(&out);
    assert_eq!(records.len(), 5);
    let ages: Vec<Option<u8>> = records.iter().map(|r| r.age).collect();
    assert_eq!(ages, vec![Some(21), Some(30), Some(18), None, None]);
    assert_eq!(records[3].label, Label::NoAge);
    assert!(records[3].rule_id.is_none());

    let users: Vec<UserAgeRecord> = read_jsonl(out.join(USERS_FILE)).unwrap();
    assert_eq!(users.len() as u64, report.users_with_age);
    assert_eq!(users.iter().map(|u| u.extractions.len()).sum::<usize>(), 3);

    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(saved["counts"]["ages_extracted"], 3);
    assert_eq!(saved["fractions"]["candidates_matched"], 0.5);
}

#[test]
fn ten_post_funnel_through_plugin() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &fixture());
    let out = dir.path().join("out");
    let mut cfg = config(input, out);
    cfg.classifier = ClassifierSpec::Plugin(vec![STUB.into(), "contains:birthday".into()]);
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!((report.candidates_matched, report.age_classified, report.ages_extracted), (5, 3, 3));
}

#[test]
fn empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &[]);
    let out = dir.path().join("out");
    let report = run_pipeline(&config(input, out.clone())).unwrap();
    assert_eq!(report, PipelineReport::default());
    assert!(tweets(&out).is_empty());
    assert_eq!(std::fs::read_to_string(out.join(USERS_FILE)).unwrap(), "");
}

#[test]
fn published_examples_with_always_age() {
    let posts: Vec<Post> = common::EXTRACTION_GOLDEN
        .iter()
        .enumerate()
        .map(|(i, (t, _))| common::post(format!("g{i}"), format!("u{i}"), *t))
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &posts);
    let out = dir.path().join("out");
    let report = run_pipeline(&config(input, out.clone())).unwrap();
    assert_eq!(report.ages_extracted, 10);
    let ages: Vec<u8> = tweets(&out).iter().map(|r| r.age.unwrap()).collect();
    let expected: Vec<u8> = common::EXTRACTION_GOLDEN.iter().map(|(_, a)| *a).collect();
    assert_eq!(ages, expected);
}

fn mixed_corpus() -> Vec<Post> {
    let mut posts = fixture();
    posts.extend(common::EXTRACTION_GOLDEN.iter().map(|(t, _)| common::post("", "", *t)));
    posts.extend(common::ERROR_CASES.iter().map(|(t, _, _)| common::post("", "", *t)));
    posts.push(common::post("", "", "RT @friend: my 21st birthday is today"));
    let mut flagged = common::post("", "", "I turned 30 today");
    flagged.is_retweet = true;
    posts.push(flagged);
    posts.push(common::post("", "", "\"I'm 25 and broke\" - a famous singer"));
    posts.push(common::post("", "", "Local man turns 100 years old https://t.co/abc"));
    posts.push(common::post("", "", "Woman, 45 years old, wins lottery https://news.example.com/x"));
    for (i, p) in posts.iter_mut().enumerate() {
        p.id = format!("m{i}");
        p.user_id = format!("user{}", i % 7);
        p.created_at = common::at(2015 + (i % 5) as i32, 1 + (i % 20) as u32);
    }
    posts
}

#[test]
fn drops_and_funnel_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &mixed_corpus());
    let out = dir.path().join("out");
    let report = run_pipeline_with(&config(input, out), &mut Keyword("i")).unwrap();
    assert_eq!(report.retweets_dropped, 2);
    assert_eq!(report.reported_speech_dropped, 2);
    assert!(report.is_monotone());
    assert!(report.users_with_age <= report.users_matched && report.users_matched <= report.users_scanned);
}

#[test]
fn rerun_is_byte_identical_across_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &mixed_corpus());
    let mut outputs = Vec::new();
    for (i, (parallelism, batch)) in [(1, 10_000), (1, 10_000), (4, 3), (3, 1)].into_iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let mut cfg = config(input.clone(), out.clone());
        cfg.parallelism = parallelism;
        cfg.batch_size = batch;
        run_pipeline_with(&cfg, &mut Keyword("i")).unwrap();
        outputs.push((
            std::fs::read(out.join(TWEETS_FILE)).unwrap(),
            std::fs::read(out.join(USERS_FILE)).unwrap(),
        ));
    }
    assert!(!outputs[0].0.is_empty());
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn outputs_only_from_candidates() {
    let posts = mixed_corpus();
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &posts);
    let out = dir.path().join("out");
    run_pipeline_with(&config(input, out.clone()), &mut Keyword("")).unwrap();
    let matcher = CompiledPatternSet::default_set();
    for r in tweets(&out) {
        let post = posts.iter().find(|p| p.id == r.post_id).unwrap();
        let hits = match_candidates(post, &matcher);
        assert_eq!(hits.first().map(|h| h.pattern_id.as_str()), Some(r.pattern_id.as_str()));
    }
}

#[test]
fn plugin_failure_is_stage_tagged_and_partial() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &fixture());
    let out = dir.path().join("out");
    let mut cfg = config(input, out.clone());
    cfg.classifier = ClassifierSpec::Plugin(vec![STUB.into(), "crash-after:0".into()]);
    cfg.plugin_options.retries = 1;
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: "classify", .. }), "{err}");
    assert!(err.to_string().starts_with("[classify]"), "{err}");
    assert!(out.join(format!("{TWEETS_FILE}{PARTIAL_SUFFIX}")).exists());
    assert!(!out.join(TWEETS_FILE).exists());
}

#[test]
fn bad_input_is_ingest_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    std::fs::write(&input, "{\"id\":\"a\"}\n").unwrap();
    let err = run_pipeline(&config(input, dir.path().join("out"))).unwrap_err();
    assert!(matches!(&err, Error::Stage { stage: "ingest", .. }), "{err}");
}

#[test]
fn invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), &fixture());
    let mut cfg = config(input, dir.path().join("out"));
    cfg.parallelism = 0;
    assert!(matches!(run_pipeline(&cfg), Err(Error::Stage { stage: "config", .. })));
    cfg.parallelism = 1;
    cfg.classifier = ClassifierSpec::Builtin(dir.path().join("missing.json"));
    assert!(matches!(run_pipeline(&cfg), Err(Error::Stage { stage: "config", .. })));
}

#[test]
fn tsv_and_multiple_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let posts = fixture();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.jsonl");
    write_posts(&a, &posts[..5], PostFormat::Tsv).unwrap();
    write_posts(&b, &posts[5..], PostFormat::Jsonl).unwrap();
    let mut cfg = config(a, dir.path().join("out"));
    cfg.inputs.push(b);
    let report = run_pipeline_with(&cfg, &mut Keyword("birthday")).unwrap();
    assert_eq!((report.posts_scanned, report.ages_extracted), (10, 3));
}
