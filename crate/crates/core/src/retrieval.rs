//! Candidate retrieval: query patterns that select posts which may state the
//! author's age, plus the retweet and reported-speech filters.

use std::ops::Range;
use std::path::Path;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder, RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::normalize;

/// The shipped pattern file.
pub const DEFAULT_PATTERNS: &str = include_str!("../data/query_patterns.tsv");

const PATTERN_FILE_VERSION: u32 = 1;

const SPELLED_TENS: &str = "twenty|thirty|forty|fifty|sixty|seventy|eighty|ninety";
const SPELLED_UNITS: &str = "one|two|three|four|five|six|seven|eight|nine";
const SPELLED_TEENS: &str =
    "ten|eleven|twelve|thirteen|fourteen|fifteen|sixteen|seventeen|eighteen|nineteen";

fn placeholders() -> [(&'static str, String); 5] {
    let spelled = format!(
        r"\b(?:{SPELLED_TEENS}|(?:{SPELLED_TENS})(?:[- ]?(?:{SPELLED_UNITS}))?)\b"
    );
    let spelled_ordinal = format!(
        r"\b(?:tenth|eleventh|twelfth|thirteenth|fourteenth|fifteenth|sixteenth|seventeenth|eighteenth|nineteenth|twentieth|thirtieth|fortieth|fiftieth|sixtieth|seventieth|eightieth|ninetieth|(?:{SPELLED_TENS})[- ]?(?:first|second|third|fourth|fifth|sixth|seventh|eighth|ninth))\b"
    );
    let count = format!(
        r"(?:\b[0-9]+|\ban?\b|\b(?:{SPELLED_TEENS}|{SPELLED_UNITS}|(?:{SPELLED_TENS})(?:[- ]?(?:{SPELLED_UNITS}))?)\b)"
    );
    [
        ("{age}", r"\b[1-9][0-9]".to_string()),
        ("{ordinal}", r"\b[1-9][0-9](?:st|nd|rd|th)\b".to_string()),
        ("{spelled_ordinal}", spelled_ordinal),
        ("{spelled}", spelled),
        ("{count}", count),
    ]
}

/// Expands the `{age}`-style placeholders used in pattern files.
pub fn expand_placeholders(source: &str) -> String {
    let mut out = source.to_string();
    for (name, value) in placeholders() {
        out = out.replace(name, &value);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPattern {
    pub id: String,
    pub source: String,
    pub description: String,
}

impl QueryPattern {
    pub fn new(id: impl Into<String>, source: impl Into<String>, description: impl Into<String>) -> Self {
        QueryPattern {
            id: id.into(),
            source: source.into(),
            description: description.into(),
        }
    }
}

/// Parses a pattern file: `id TAB source TAB description` per line, `#`
/// comments, and an optional `#version` line.
pub fn parse_patterns(text: &str) -> Result<Vec<QueryPattern>> {
    let mut patterns = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(version) = line.strip_prefix("#version") {
            let version = version.trim();
            if version.parse::<u32>().ok() != Some(PATTERN_FILE_VERSION) {
                return Err(Error::parse(
                    "<patterns>",
                    idx + 1,
                    format!("unsupported pattern file version {version:?}"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(source)) = (cols.next(), cols.next()) else {
            return Err(Error::parse("<patterns>", idx + 1, "expected id, source, description"));
        };
        patterns.push(QueryPattern::new(
            id.trim(),
            source,
            cols.next().unwrap_or("").trim(),
        ));
    }
    Ok(patterns)
}

pub fn load_patterns(path: impl AsRef<Path>) -> Result<Vec<QueryPattern>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_patterns(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::parse(path, line, message),
        other => other,
    })
}

pub fn default_patterns() -> Vec<QueryPattern> {
    parse_patterns(DEFAULT_PATTERNS).expect("shipped pattern file parses")
}

/// Immutable matcher over a pattern list.
#[derive(Debug, Clone)]
pub struct CompiledPatternSet {
    patterns: Vec<QueryPattern>,
    regexes: Vec<Regex>,
    set: RegexSet,
}

/// Compiles every pattern; a failure names the offending pattern id.
pub fn compile_pattern_set(patterns: &[QueryPattern]) -> Result<CompiledPatternSet> {
    let mut regexes = Vec::with_capacity(patterns.len());
    let mut expanded = Vec::with_capacity(patterns.len());
    for p in patterns {
        let source = expand_placeholders(&p.source);
        let re = RegexBuilder::new(&source)
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Pattern {
                id: p.id.clone(),
                message: e.to_string(),
            })?;
        regexes.push(re);
        expanded.push(source);
    }
    let set = RegexSetBuilder::new(&expanded)
        .case_insensitive(true)
        .build()
        .map_err(|e| Error::Pattern {
            id: "<set>".into(),
            message: e.to_string(),
        })?;
    Ok(CompiledPatternSet {
        patterns: patterns.to_vec(),
        regexes,
        set,
    })
}

impl CompiledPatternSet {
    pub fn default_set() -> Self {
        compile_pattern_set(&default_patterns()).expect("shipped patterns compile")
    }

    pub fn patterns(&self) -> &[QueryPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Cheap yes/no check.
    pub fn is_match(&self, text: &str) -> bool {
        self.set.is_match(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub post_id: String,
    pub pattern_id: String,
    /// half-open character offsets into the post text
    pub span: Range<usize>,
}

/// All non-overlapping hits in text order.
///
/// Where hits from different patterns overlap, the earliest start wins, then
/// the longest match, then the pattern listed first.
pub fn match_candidates(post: &Post, matcher: &CompiledPatternSet) -> Vec<RetrievalHit> {
    let text = post.text.as_str();
    let matched = matcher.set.matches(text);
    if !matched.matched_any() {
        return Vec::new();
    }
    let mut raw: Vec<(Range<usize>, usize)> = matched
        .iter()
        .flat_map(|idx| {
            matcher.regexes[idx]
                .find_iter(text)
                .filter(|m| !m.is_empty())
                .map(move |m| (m.range(), idx))
        })
        .collect();
    raw.sort_by(|(a, ai), (b, bi)| {
        a.start
            .cmp(&b.start)
            .then(b.end.cmp(&a.end))
            .then(ai.cmp(bi))
    });
    let mut hits = Vec::new();
    let mut last_end = 0;
    for (range, idx) in raw {
        if range.start < last_end {
            continue;
        }
        last_end = range.end;
        hits.push(RetrievalHit {
            post_id: post.id.clone(),
            pattern_id: matcher.patterns[idx].id.clone(),
            span: char_span(text, range),
        });
    }
    hits
}

pub(crate) fn char_span(text: &str, bytes: Range<usize>) -> Range<usize> {
    let start = text[..bytes.start].chars().count();
    let len = text[bytes.clone()].chars().count();
    start..start + len
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropDecision {
    Keep,
    Retweet,
    ReportedSpeech,
}

static RETWEET_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*RT\s*@\w").expect("retweet pattern"));

static QUOTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""[^"]*"|“[^”]*”"#).expect("quote pattern"));

static AGE_MENTION: LazyLock<Regex> = LazyLock::new(|| {
    let source = expand_placeholders(
        r"\b[1-9][0-9](?:st|nd|rd|th)?\b|\b[1-9]\s?[-–]\s?0\b|{spelled}|{spelled_ordinal}",
    );
    RegexBuilder::new(&source)
        .case_insensitive(true)
        .build()
        .expect("age mention pattern")
});

static ATTRIBUTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)[—–]|(?:^|\s)-{1,2}(?:\s|$)|(?:^|\s)~|\bvia\b|\b(?:says?|said|told|tells)\b")
        .expect("attribution pattern")
});

static FIRST_PERSON: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:i|im|me|my|mine|myself|we|us|our|ours|ourselves)\b")
        .expect("first person pattern")
});

/// Decides whether a post is excluded before retrieval counts.
///
/// Reported speech is flagged when an age mention sits inside a balanced
/// quotation and an attribution marker (dash, "via", "says", a URL) appears
/// outside it, or when the post looks like a headline: no first-person
/// pronoun anywhere and a trailing URL.
pub fn should_drop(post: &Post) -> DropDecision {
    if post.is_retweet || RETWEET_PREFIX.is_match(&post.text) {
        return DropDecision::Retweet;
    }
    if is_quoted_attribution(&post.text) || is_headline(&post.text) {
        return DropDecision::ReportedSpeech;
    }
    DropDecision::Keep
}

fn is_quoted_attribution(text: &str) -> bool {
    let mut quoted_age = false;
    let mut outside = String::with_capacity(text.len());
    let mut cursor = 0;
    for m in QUOTED.find_iter(text) {
        outside.push_str(&text[cursor..m.start()]);
        outside.push(' ');
        cursor = m.end();
        quoted_age |= AGE_MENTION.is_match(m.as_str());
    }
    if !quoted_age {
        return false;
    }
    outside.push_str(&text[cursor..]);
    ATTRIBUTION.is_match(&outside) || normalize::has_url(&outside)
}

fn is_headline(text: &str) -> bool {
    let trimmed = text.trim_end();
    if FIRST_PERSON.is_match(text) {
        return false;
    }
    normalize::trailing_url(trimmed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn post(text: &str) -> Post {
        Post::new("p", "u", Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(), text)
    }

    #[test]
    fn default_set_compiles() {
        let set = CompiledPatternSet::default_set();
        assert!(set.len() >= 10);
    }

    #[test]
    fn bad_pattern_names_id() {
        let err = compile_pattern_set(&[
            QueryPattern::new("ok", r"\bfine\b", ""),
            QueryPattern::new("broken", r"(unbalanced", ""),
        ])
        .unwrap_err();
        match err {
            Error::Pattern { id, .. } => assert_eq!(id, "broken"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_set_matches_nothing() {
        let set = compile_pattern_set(&[]).unwrap();
        assert!(set.is_empty());
        assert!(match_candidates(&post("I'm 21"), &set).is_empty());
    }

    #[test]
    fn hits_and_misses() {
        let set = CompiledPatternSet::default_set();
        let hits = match_candidates(
            &post("It's my 21st birthday today. But who cares..... ITS FINALLY AUGUST!!!!"),
            &set,
        );
        assert!(!hits.is_empty());
        assert_eq!(hits[0].span, 5..12);
        assert!(match_candidates(&post("hello world"), &set).is_empty());
        assert!(match_candidates(&post("I am 150 years old"), &set).is_empty());
        assert!(match_candidates(&post("i'm 21"), &set).len() == 1);
        assert!(!match_candidates(&post("the big 3-0 is coming"), &set).is_empty());
        assert!(!match_candidates(&post("I'm twenty-one now"), &set).is_empty());
    }

    #[test]
    fn hits_do_not_overlap_and_are_ordered() {
        let set = CompiledPatternSet::default_set();
        let hits = match_candidates(
            &post("2 more years until my 21st birthday, I'm 19 and turned 19 at 19"),
            &set,
        );
        for pair in hits.windows(2) {
            assert!(pair[0].span.end <= pair[1].span.start);
        }
        assert!(hits.len() >= 3);
    }

    #[test]
    fn spans_are_character_offsets() {
        let set = CompiledPatternSet::default_set();
        let hits = match_candidates(&post("✨✨ turned 30"), &set);
        assert_eq!(hits[0].span, 3..12);
    }

    #[test]
    fn drop_decisions() {
        let mut rt = post("I'm turning 21");
        rt.is_retweet = true;
        assert_eq!(should_drop(&rt), DropDecision::Retweet);
        assert_eq!(should_drop(&post("RT @someone: I'm turning 21")), DropDecision::Retweet);
        assert_eq!(
            should_drop(&post("\"I just turned 30\" — celebrity magazine https://example.com/x")),
            DropDecision::ReportedSpeech
        );
        assert_eq!(
            should_drop(&post("“I was 16 when it happened,” says singer via @mag")),
            DropDecision::ReportedSpeech
        );
        assert_eq!(
            should_drop(&post("Local woman turns 100 today https://news.example.com/a")),
            DropDecision::ReportedSpeech
        );
        assert_eq!(should_drop(&post("I just turned 30 and I feel great")), DropDecision::Keep);
        assert_eq!(
            should_drop(&post("my sister said \"you're 21 now\" lol")),
            DropDecision::ReportedSpeech
        );
        assert_eq!(
            should_drop(&post("turning 21 tomorrow https://pic.example.com/x")),
            DropDecision::ReportedSpeech
        );
        assert_eq!(
            should_drop(&post("I'm turning 21 tomorrow https://pic.example.com/x")),
            DropDecision::Keep
        );
        assert_eq!(should_drop(&post("\"twenty one\" is my favorite song")), DropDecision::Keep);
    }
}
