//! Posts, gold annotations, and reproducible stratified splitting.
//!
//! Posts are read from JSONL (one object per line) or from a TSV file with a
//! header row. Both carry the keys `id`, `user_id`, `created_at`, `text` and
//! an optional `is_retweet`. Timestamps are RFC-3339 strings on disk and are
//! held as whole-second UTC instants in memory.
//!
//! Labels live in a separate TSV file with the columns `post_id`, `label`
//! (`age` or `no_age`) and `age` (empty for `no_age`).

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Timelike, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Youngest age the system reports.
pub const MIN_AGE: u8 = 10;
/// Oldest age the system reports.
pub const MAX_AGE: u8 = 99;

/// One social-media message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub user_id: String,
    #[serde(with = "timestamp")]
    pub created_at: DateTime<Utc>,
    pub text: String,
    #[serde(default)]
    pub is_retweet: bool,
}

impl Post {
    pub fn new(
        id: impl Into<String>,
        user_id: impl Into<String>,
        created_at: DateTime<Utc>,
        text: impl Into<String>,
    ) -> Self {
        Post {
            id: id.into(),
            user_id: user_id.into(),
            created_at: truncate_to_seconds(created_at),
            text: text.into(),
            is_retweet: false,
        }
    }
}

/// Parses an RFC-3339 timestamp into a whole-second UTC instant.
///
/// Sub-second precision is truncated.
pub fn parse_timestamp(value: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(value.trim())
        .map(|t| truncate_to_seconds(t.with_timezone(&Utc)))
        .map_err(|e| Error::Timestamp {
            value: value.to_string(),
            message: e.to_string(),
        })
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn truncate_to_seconds(t: DateTime<Utc>) -> DateTime<Utc> {
    t.with_nanosecond(0).unwrap_or(t)
}

pub(crate) mod timestamp {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_timestamp(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Age,
    NoAge,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Age => "age",
            Label::NoAge => "no_age",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "age" | "+" => Ok(Label::Age),
            "no_age" | "noage" | "-" => Ok(Label::NoAge),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// A post with its gold class and, for `Age` posts, the annotated exact age.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPost {
    post: Post,
    label: Label,
    age: Option<u8>,
}

impl LabeledPost {
    /// Validates the label/age coupling: `Age` needs an age in
    /// `[MIN_AGE, MAX_AGE]`, `NoAge` must not carry one.
    pub fn new(post: Post, label: Label, age: Option<u32>) -> Result<Self> {
        let fail = |message: String| Error::Label {
            post_id: post.id.clone(),
            message,
        };
        let age = match (label, age) {
            (Label::Age, None) => return Err(fail("age label without an age".into())),
            (Label::Age, Some(a)) if !(MIN_AGE as u32..=MAX_AGE as u32).contains(&a) => {
                return Err(fail(format!("age {a} outside [{MIN_AGE}, {MAX_AGE}]")))
            }
            (Label::Age, Some(a)) => Some(a as u8),
            (Label::NoAge, Some(a)) => {
                return Err(fail(format!("no_age label carries age {a}")))
            }
            (Label::NoAge, None) => None,
        };
        Ok(LabeledPost { post, label, age })
    }

    pub fn post(&self) -> &Post {
        &self.post
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn age(&self) -> Option<u8> {
        self.age
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostFormat {
    Jsonl,
    Tsv,
}

impl PostFormat {
    /// Guesses the format from a file extension; anything but `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => PostFormat::Tsv,
            _ => PostFormat::Jsonl,
        }
    }
}

impl FromStr for PostFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(PostFormat::Jsonl),
            "tsv" => Ok(PostFormat::Tsv),
            other => Err(format!("unknown post format {other:?}")),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawPost {
    id: String,
    user_id: String,
    created_at: String,
    text: String,
    #[serde(default)]
    is_retweet: Option<bool>,
}

impl RawPost {
    fn into_post(self, path: &Path, line: usize) -> Result<Post> {
        if self.id.is_empty() {
            return Err(Error::parse(path, line, "empty post id"));
        }
        let created_at = parse_timestamp(&self.created_at)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        Ok(Post {
            id: self.id,
            user_id: self.user_id,
            created_at,
            text: self.text,
            is_retweet: self.is_retweet.unwrap_or(false),
        })
    }
}

/// Streams posts from a file in file order without holding them in memory.
pub struct PostReader {
    path: PathBuf,
    inner: ReaderKind,
}

enum ReaderKind {
    Jsonl {
        lines: std::io::Lines<BufReader<File>>,
        line_no: usize,
    },
    Tsv {
        reader: csv::Reader<BufReader<File>>,
        headers: Option<csv::StringRecord>,
        record: csv::StringRecord,
    },
}

impl PostReader {
    pub fn open(path: impl AsRef<Path>, format: PostFormat) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let reader = BufReader::new(file);
        let inner = match format {
            PostFormat::Jsonl => ReaderKind::Jsonl {
                lines: reader.lines(),
                line_no: 0,
            },
            PostFormat::Tsv => ReaderKind::Tsv {
                reader: csv::ReaderBuilder::new()
                    .delimiter(b'\t')
                    .has_headers(true)
                    .from_reader(reader),
                headers: None,
                record: csv::StringRecord::new(),
            },
        };
        Ok(PostReader { path, inner })
    }
}

impl Iterator for PostReader {
    type Item = Result<Post>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            ReaderKind::Jsonl { lines, line_no } => loop {
                let line = lines.next()?;
                *line_no += 1;
                let line = match line {
                    Ok(l) => l,
                    Err(e) => return Some(Err(Error::io(&self.path, e))),
                };
                if line.trim().is_empty() {
                    continue;
                }
                let n = *line_no;
                return Some(
                    serde_json::from_str::<RawPost>(&line)
                        .map_err(|e| Error::parse(&self.path, n, e.to_string()))
                        .and_then(|raw| raw.into_post(&self.path, n)),
                );
            },
            ReaderKind::Tsv {
                reader,
                headers,
                record,
            } => {
                let path = &self.path;
                let csv_err = |e: csv::Error| {
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    Error::parse(path, line, e.to_string())
                };
                if headers.is_none() {
                    match reader.headers() {
                        Ok(h) => *headers = Some(h.clone()),
                        Err(e) => return Some(Err(csv_err(e))),
                    }
                }
                match reader.read_record(record) {
                    Ok(false) => None,
                    Ok(true) => {
                        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                        Some(
                            record
                                .deserialize::<RawPost>(headers.as_ref())
                                .map_err(|e| Error::parse(path, line, e.to_string()))
                                .and_then(|raw| raw.into_post(path, line)),
                        )
                    }
                    Err(e) => Some(Err(csv_err(e))),
                }
            }
        }
    }
}

/// Loads every post in a file, checking id uniqueness.
pub fn load_posts(path: impl AsRef<Path>, format: PostFormat) -> Result<Vec<Post>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    for post in PostReader::open(path, format)? {
        let post = post?;
        if !seen.insert(post.id.clone()) {
            return Err(Error::parse(
                path,
                posts.len() + 1,
                format!("duplicate post id {:?}", post.id),
            ));
        }
        posts.push(post);
    }
    Ok(posts)
}

pub fn write_posts(path: impl AsRef<Path>, posts: &[Post], format: PostFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        PostFormat::Jsonl => {
            for post in posts {
                serde_json::to_writer(&mut out, post)
                    .map_err(|e| Error::io(path, e.into()))?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        PostFormat::Tsv => {
            let mut writer = csv::WriterBuilder::new()
                .delimiter(b'\t')
                .from_writer(&mut out);
            writer
                .write_record(["id", "user_id", "created_at", "text", "is_retweet"])
                .map_err(|e| Error::io(path, e.into()))?;
            for post in posts {
                writer
                    .write_record([
                        post.id.as_str(),
                        post.user_id.as_str(),
                        format_timestamp(&post.created_at).as_str(),
                        post.text.as_str(),
                        if post.is_retweet { "true" } else { "false" },
                    ])
                    .map_err(|e| Error::io(path, e.into()))?;
            }
            writer.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Loads gold labels and joins them against `posts` by id.
///
/// A header row starting with `post_id` is skipped. Every row is validated
/// through [`LabeledPost::new`].
pub fn load_labels(path: impl AsRef<Path>, posts: &[Post]) -> Result<Vec<LabeledPost>> {
    let path = path.as_ref();
    let by_id: HashMap<&str, &Post> = posts.iter().map(|p| (p.id.as_str(), p)).collect();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (idx == 0 && line.starts_with("post_id")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(Error::parse(path, line_no, "expected post_id, label, age"));
        }
        let post_id = cols[0].trim();
        let label: Label = cols[1]
            .parse()
            .map_err(|e: String| Error::parse(path, line_no, e))?;
        let age = match cols.get(2).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(raw) => Some(raw.parse::<u32>().map_err(|_| Error::Label {
                post_id: post_id.to_string(),
                message: format!("age {raw:?} is not a whole number"),
            })?),
            None => None,
        };
        let post = by_id.get(post_id).ok_or_else(|| Error::Label {
            post_id: post_id.to_string(),
            message: "unknown post id".into(),
        })?;
        if !seen.insert(post_id.to_string()) {
            return Err(Error::parse(path, line_no, format!("duplicate label for {post_id:?}")));
        }
        out.push(LabeledPost::new((*post).clone(), label, age)?);
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, data: &[LabeledPost]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(out, "post_id\tlabel\tage")?;
        for item in data {
            let age = item.age.map(|a| a.to_string()).unwrap_or_default();
            writeln!(out, "{}\t{}\t{}", item.post.id, item.label, age)?;
        }
        out.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub train: Vec<LabeledPost>,
    pub test: Vec<LabeledPost>,
    pub seed: u64,
}

/// Splits `data` into train and test sets, preserving the class mix.
///
/// Each class is shuffled with a ChaCha8 generator seeded from `seed`; the
/// first `floor(count * train_fraction)` items go to train and the rest to
/// test. Both halves are returned in input order.
pub fn stratified_split(
    data: &[LabeledPost],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction {train_fraction} not in (0, 1)"
        )));
    }
    let mut in_train = vec![false; data.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for label in [Label::Age, Label::NoAge] {
        let mut members: Vec<usize> = data
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(Error::Split(format!("class {label} has no items")));
        }
        members.shuffle(&mut rng);
        // the epsilon absorbs representation error such as 0.29 * 100 = 28.999...
        let take = ((members.len() as f64) * train_fraction + 1e-9).floor() as usize;
        for &i in &members[..take.min(members.len())] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (item, train_side) in data.iter().zip(in_train) {
        if train_side {
            train.push(item.clone());
        } else {
            test.push(item.clone());
        }
    }
    Ok(SplitResult { train, test, seed })
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
