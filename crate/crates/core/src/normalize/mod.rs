//! Text normalization.
//!
//! Three fixed step sequences, one per consumer:
//!
//! * [`normalize_for_extraction`]: drop URLs and @-mentions, rewrite spelled-out
//!   numbers 1–99 (cardinal and ordinal) as digits, then join single digits
//!   split by at most two non-alphanumeric characters ("the big 3-0" becomes
//!   "the big 30"). Everything else is preserved, including case.
//! * [`normalize_for_ngram_classifier`]: URLs, mentions and digit runs become
//!   sentinel tokens, text is lowercased, split on non-alphanumerics and each
//!   word is Porter-stemmed.
//! * [`normalize_for_contextual_classifier`]: URLs and mentions become sentinel
//!   tokens and the text is lowercased; nothing else changes.

pub mod porter;

use std::ops::Range;
use std::sync::LazyLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";
pub const NUM_TOKEN: &str = "<num>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationProfile {
    Extraction,
    NgramClassifier,
    ContextualClassifier,
}

static URL_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"(?ix)
        \b(?:https?|ftp)://(?:\S*[^\s.,!?;:)\]}"'<>])?
        | \bwww\.\S*[^\s.,!?;:)\]}"'<>]
        | \b[a-z0-9](?:[a-z0-9-]*[a-z0-9])?(?:\.[a-z0-9](?:[a-z0-9-]*[a-z0-9])?)*
          \.(?:com|org|net|edu|gov|io|co|ly|me|us|uk|tv|gl|be|info|biz|ca|de)\b
          (?:/\S*[^\s.,!?;:)\]}"'<>])?
        "#,
    )
    .expect("url pattern")
});

static MENTION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"@[\w@]*\w").expect("mention pattern"));

static DIGITS_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("digit pattern"));

const UNITS: [&str; 9] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];
const UNIT_ORDINALS: [&str; 9] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
];
const TEENS: [&str; 10] = [
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen",
    "eighteen", "nineteen",
];
const TEEN_ORDINALS: [&str; 10] = [
    "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth", "sixteenth",
    "seventeenth", "eighteenth", "nineteenth",
];
const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const TEN_ORDINALS: [&str; 8] = [
    "twentieth", "thirtieth", "fortieth", "fiftieth", "sixtieth", "seventieth", "eightieth",
    "ninetieth",
];

static NUMBER_WORD_RE: LazyLock<Regex> = LazyLock::new(|| {
    let units = [&UNITS[..], &UNIT_ORDINALS[..]].concat().join("|");
    let pattern = format!(
        r"(?i)\b(?:(?P<tens>{tens})(?:[- ](?P<unit>{units}))?|(?P<word>{singles}))\b",
        tens = TENS.join("|"),
        singles = [
            &TEN_ORDINALS[..],
            &TEEN_ORDINALS[..],
            &TEENS[..],
            &UNITS[..],
            &UNIT_ORDINALS[..],
        ]
        .concat()
        .join("|"),
    );
    Regex::new(&pattern).expect("number word pattern")
});

/// Numeric value and ordinal flag of a single number word.
fn word_value(word: &str) -> Option<(u32, bool)> {
    let lower = word.to_ascii_lowercase();
    let find = |table: &[&str]| table.iter().position(|w| *w == lower);
    if let Some(i) = find(&UNITS) {
        return Some((i as u32 + 1, false));
    }
    if let Some(i) = find(&UNIT_ORDINALS) {
        return Some((i as u32 + 1, true));
    }
    if let Some(i) = find(&TEENS) {
        return Some((i as u32 + 10, false));
    }
    if let Some(i) = find(&TEEN_ORDINALS) {
        return Some((i as u32 + 10, true));
    }
    if let Some(i) = find(&TENS) {
        return Some((i as u32 * 10 + 20, false));
    }
    find(&TEN_ORDINALS).map(|i| (i as u32 * 10 + 20, true))
}

/// English ordinal suffix for a number.
pub fn ordinal_suffix(n: u32) -> &'static str {
    match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    }
}

fn number_word_replacement(caps: &Captures<'_>) -> Option<String> {
    let (value, ordinal) = if let Some(tens) = caps.name("tens") {
        let (tens_value, _) = word_value(tens.as_str())?;
        match caps.name("unit") {
            Some(unit) => {
                let (unit_value, ordinal) = word_value(unit.as_str())?;
                (tens_value + unit_value, ordinal)
            }
            None => (tens_value, false),
        }
    } else {
        let word = caps.name("word")?.as_str();
        // "second" on its own is far more often a unit of time than an ordinal
        if word.eq_ignore_ascii_case("second") {
            return None;
        }
        word_value(word)?
    };
    Some(if ordinal {
        format!("{value}{}", ordinal_suffix(value))
    } else {
        value.to_string()
    })
}

/// Text plus, for every byte, the character offset it came from in the
/// original input.
#[derive(Debug, Clone)]
struct Tracked {
    text: String,
    origin: Vec<usize>,
    original_chars: usize,
}

impl Tracked {
    fn new(text: &str) -> Self {
        let mut origin = Vec::with_capacity(text.len());
        let mut chars = 0;
        for (ci, ch) in text.chars().enumerate() {
            origin.extend(std::iter::repeat_n(ci, ch.len_utf8()));
            chars += 1;
        }
        Tracked {
            text: text.to_string(),
            origin,
            original_chars: chars,
        }
    }

    fn origin_at(&self, byte: usize) -> usize {
        self.origin.get(byte).copied().unwrap_or(self.original_chars)
    }

    /// Replaces non-overlapping, ascending byte ranges. Replacement bytes map
    /// back to the start of the range they replace.
    fn splice(self, edits: Vec<(Range<usize>, String)>) -> Self {
        if edits.is_empty() {
            return self;
        }
        let mut text = String::with_capacity(self.text.len());
        let mut origin = Vec::with_capacity(self.origin.len());
        let mut cursor = 0;
        for (range, with) in edits {
            text.push_str(&self.text[cursor..range.start]);
            origin.extend_from_slice(&self.origin[cursor..range.start]);
            let at = self.origin_at(range.start);
            text.push_str(&with);
            origin.extend(std::iter::repeat_n(at, with.len()));
            cursor = range.end;
        }
        text.push_str(&self.text[cursor..]);
        origin.extend_from_slice(&self.origin[cursor..]);
        Tracked {
            text,
            origin,
            original_chars: self.original_chars,
        }
    }
}

fn url_ranges(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    URL_RE.find_iter(text).map(|m| m.range())
}

pub(crate) fn has_url(text: &str) -> bool {
    URL_RE.is_match(text)
}

/// True when the text ends in a URL, ignoring trailing whitespace.
pub(crate) fn trailing_url(text: &str) -> bool {
    let trimmed = text.trim_end();
    URL_RE
        .find_iter(trimmed)
        .last()
        .is_some_and(|m| m.end() == trimmed.len())
}

/// Mentions: "@" plus word characters, not glued to a preceding word or "@".
fn mention_ranges(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    MENTION_RE.find_iter(text).filter_map(move |m| {
        let glued = text[..m.start()]
            .chars()
            .next_back()
            .is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '@');
        (!glued).then(|| m.range())
    })
}

fn join_split_digits(tracked: Tracked) -> Tracked {
    let text = &tracked.text;
    let runs: Vec<Range<usize>> = digit_runs(text).collect();
    let mut edits = Vec::new();
    let mut i = 0;
    while i + 1 < runs.len() {
        let (left, right) = (&runs[i], &runs[i + 1]);
        let gap = &text[left.end..right.start];
        let gap_chars = gap.chars().count();
        if left.len() == 1
            && right.len() == 1
            && (1..=2).contains(&gap_chars)
            && !gap.chars().any(char::is_alphanumeric)
        {
            edits.push((left.end..right.start, String::new()));
            i += 2;
        } else {
            i += 1;
        }
    }
    tracked.splice(edits)
}

/// Maximal runs of ASCII digits, as byte ranges.
pub(crate) fn digit_runs(text: &str) -> impl Iterator<Item = Range<usize>> + '_ {
    let bytes = text.as_bytes();
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() && !bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i >= bytes.len() {
            return None;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        Some(start..i)
    })
}

fn extraction_tracked(text: &str) -> Tracked {
    let mut tracked = Tracked::new(text);

    let urls: Vec<_> = url_ranges(&tracked.text).map(|r| (r, String::new())).collect();
    tracked = tracked.splice(urls);
    let mentions: Vec<_> = mention_ranges(&tracked.text)
        .map(|r| (r, String::new()))
        .collect();
    tracked = tracked.splice(mentions);

    let words: Vec<_> = NUMBER_WORD_RE
        .captures_iter(&tracked.text)
        .filter_map(|caps| {
            let whole = caps.get(0)?.range();
            number_word_replacement(&caps).map(|with| (whole, with))
        })
        .collect();
    tracked = tracked.splice(words);

    join_split_digits(tracked)
}

/// Maps character offsets in normalized text back to the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetMap {
    /// original character offset for each normalized character
    origins: Vec<usize>,
    original_len: usize,
}

impl OffsetMap {
    pub fn original_offset(&self, normalized_char: usize) -> usize {
        self.origins
            .get(normalized_char)
            .copied()
            .unwrap_or(self.original_len)
    }

    /// Half-open span in the original text covering a normalized span.
    pub fn original_span(&self, span: Range<usize>) -> Range<usize> {
        if span.is_empty() {
            let at = self.original_offset(span.start);
            return at..at;
        }
        let start = self.original_offset(span.start);
        let end = self.original_offset(span.end - 1) + 1;
        start..end.max(start)
    }
}

/// Normalizes text for the rule cascade.
pub fn normalize_for_extraction(text: &str) -> String {
    extraction_tracked(text).text
}

/// Like [`normalize_for_extraction`], also returning the offset map.
pub fn normalize_for_extraction_with_offsets(text: &str) -> (String, OffsetMap) {
    let tracked = extraction_tracked(text);
    let mut origins = Vec::with_capacity(tracked.text.len());
    for (byte, _) in tracked.text.char_indices() {
        origins.push(tracked.origin_at(byte));
    }
    let map = OffsetMap {
        origins,
        original_len: tracked.original_chars,
    };
    (tracked.text, map)
}

fn replace_entities(text: &str) -> String {
    let urls: Vec<_> = url_ranges(text).collect();
    let text = splice_plain(text, &urls, URL_TOKEN);
    let mentions: Vec<_> = mention_ranges(&text).collect();
    splice_plain(&text, &mentions, USER_TOKEN)
}

fn splice_plain(text: &str, ranges: &[Range<usize>], with: &str) -> String {
    if ranges.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for r in ranges {
        out.push_str(&text[cursor..r.start]);
        out.push_str(with);
        cursor = r.end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// The n-gram cleaning stage without stemming: sentinel substitution,
/// lowercasing, and splitting on everything that is not alphanumeric.
pub fn ngram_clean_tokens(text: &str) -> Vec<String> {
    let text = replace_entities(text);
    let text = DIGITS_RE.replace_all(&text, " <num> ").to_lowercase();
    let mut tokens = Vec::new();
    let mut rest = text.as_str();
    while !rest.is_empty() {
        if let Some(sentinel) = [URL_TOKEN, USER_TOKEN, NUM_TOKEN]
            .into_iter()
            .find(|s| rest.starts_with(s))
        {
            tokens.push(sentinel.to_string());
            rest = &rest[sentinel.len()..];
            continue;
        }
        let word_len: usize = rest
            .chars()
            .take_while(|c| c.is_alphanumeric())
            .map(char::len_utf8)
            .sum();
        if word_len > 0 {
            tokens.push(rest[..word_len].to_string());
            rest = &rest[word_len..];
        } else {
            let skip = rest.chars().next().map(char::len_utf8).unwrap_or(1);
            rest = &rest[skip..];
        }
    }
    tokens
}

/// Tokens for the n-gram classifier: cleaned, then Porter-stemmed.
pub fn normalize_for_ngram_classifier(text: &str) -> Vec<String> {
    ngram_clean_tokens(text)
        .into_iter()
        .map(|t| {
            if t.starts_with('<') {
                t
            } else {
                porter::stem(&t)
            }
        })
        .collect()
}

pub fn normalize_for_contextual_classifier(text: &str) -> String {
    replace_entities(text).to_lowercase()
}
