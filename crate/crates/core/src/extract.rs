//! The age-extraction rule cascade.
//!
//! Rules are tried in priority order against normalized text; the first rule
//! whose pattern matches decides the age through its [`RuleKind`]. When no
//! rule matches, the fallback takes the first two-digit group in the text.
//! Ages outside 10–99 are discarded rather than clamped.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use regex::{Captures, Regex, RegexBuilder, RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::{Post, MAX_AGE, MIN_AGE};
use crate::error::{Error, Result};
use crate::normalize::{self, normalize_for_extraction_with_offsets};
use crate::retrieval::char_span;

/// The shipped rule file.
pub const DEFAULT_RULES: &str = include_str!("../data/extraction_rules.tsv");

const RULE_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Day,
    Week,
    Month,
    Year,
}

impl TimeUnit {
    pub fn units_in_year(self) -> i64 {
        match self {
            TimeUnit::Day => 365,
            TimeUnit::Week => 52,
            TimeUnit::Month => 12,
            TimeUnit::Year => 1,
        }
    }

    /// Reads a captured unit word such as "weeks" or "yr".
    pub fn from_word(word: &str) -> Option<Self> {
        let w = word.trim().to_ascii_lowercase();
        if w.starts_with("day") {
            Some(TimeUnit::Day)
        } else if w.starts_with("week") || w.starts_with("wk") {
            Some(TimeUnit::Week)
        } else if w.starts_with("month") || w.starts_with("mo") {
            Some(TimeUnit::Month)
        } else if w.starts_with("year") || w.starts_with("yr") {
            Some(TimeUnit::Year)
        } else {
            None
        }
    }
}

/// Age implied by reaching `future_age` after `quantity` units of time:
/// `future_age - ceil(quantity / units_in_year)`.
pub fn countdown_age(quantity: u64, unit: TimeUnit, future_age: i64) -> i64 {
    let per_year = unit.units_in_year() as u64;
    let years = quantity.div_ceil(per_year);
    future_age.saturating_sub(years.min(i64::MAX as u64) as i64)
}

/// How a rule turns its captured numbers into an age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// age = captured age
    Direct,
    /// age = future age - ceil(quantity / units in year)
    FutureCountdown,
    /// age = quantity + past age
    PastElapsed,
    /// age = the larger of two captured ages
    MaxOfAges,
    /// age = ordinal - 1
    AnticipatoryBirthday,
    /// age = base + (times - 1)
    TurnedRepeat,
    /// first two-digit group in the text
    Fallback,
}

impl RuleKind {
    /// Named capture groups a pattern of this kind must declare, exactly.
    pub fn required_groups(self) -> &'static [&'static str] {
        match self {
            RuleKind::Direct | RuleKind::AnticipatoryBirthday => &["age"],
            RuleKind::FutureCountdown => &["age", "qty", "unit"],
            RuleKind::PastElapsed => &["age", "qty"],
            RuleKind::MaxOfAges => &["age", "other"],
            RuleKind::TurnedRepeat => &["age", "times"],
            RuleKind::Fallback => &[],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::Direct => "direct",
            RuleKind::FutureCountdown => "future_countdown",
            RuleKind::PastElapsed => "past_elapsed",
            RuleKind::MaxOfAges => "max_of_ages",
            RuleKind::AnticipatoryBirthday => "anticipatory_birthday",
            RuleKind::TurnedRepeat => "turned_repeat",
            RuleKind::Fallback => "fallback",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "direct" => RuleKind::Direct,
            "future_countdown" => RuleKind::FutureCountdown,
            "past_elapsed" => RuleKind::PastElapsed,
            "max_of_ages" => RuleKind::MaxOfAges,
            "anticipatory_birthday" => RuleKind::AnticipatoryBirthday,
            "turned_repeat" => RuleKind::TurnedRepeat,
            "fallback" => RuleKind::Fallback,
            other => return Err(format!("unknown rule kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub id: String,
    pub priority: i64,
    pub source: String,
    pub kind: RuleKind,
    #[serde(default)]
    pub notes: String,
}

impl ExtractionRule {
    pub fn new(id: impl Into<String>, priority: i64, kind: RuleKind, source: impl Into<String>) -> Self {
        ExtractionRule {
            id: id.into(),
            priority,
            source: source.into(),
            kind,
            notes: String::new(),
        }
    }

    pub fn fallback(priority: i64) -> Self {
        ExtractionRule::new("first_two_digits", priority, RuleKind::Fallback, "-")
    }
}

#[derive(Debug, Clone)]
struct CompiledRule {
    rule: ExtractionRule,
    regex: Option<Regex>,
}

/// An ordered, compiled rule list. The fallback is always last.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
    /// patterns of every non-fallback rule, index-aligned with `rules`
    set: RegexSet,
}

fn compile_rule(rule: &ExtractionRule) -> Result<Option<Regex>> {
    if rule.kind == RuleKind::Fallback {
        return Ok(None);
    }
    let fail = |message: String| Error::Rule {
        id: rule.id.clone(),
        message,
    };
    let regex = RegexBuilder::new(&rule.source)
        .case_insensitive(true)
        .build()
        .map_err(|e| fail(e.to_string()))?;
    let mut names = BTreeSet::new();
    for (i, name) in regex.capture_names().enumerate().skip(1) {
        match name {
            Some(n) => {
                names.insert(n);
            }
            None => {
                return Err(fail(format!(
                    "arity: unnamed capture group #{i}; use (?:...) or a named group"
                )))
            }
        }
    }
    let required: BTreeSet<&str> = rule.kind.required_groups().iter().copied().collect();
    if names != required {
        return Err(fail(format!(
            "arity: kind {} needs groups {:?}, pattern declares {:?}",
            rule.kind, required, names
        )));
    }
    Ok(Some(regex))
}

impl RuleSet {
    /// Validates and orders rules by priority.
    ///
    /// Priorities must be unique. A missing fallback is appended; an explicit
    /// fallback is moved to the end regardless of its priority.
    pub fn new(mut rules: Vec<ExtractionRule>) -> Result<Self> {
        let mut priorities = HashSet::new();
        let mut ids = HashSet::new();
        for rule in &rules {
            if !priorities.insert(rule.priority) {
                return Err(Error::Rule {
                    id: rule.id.clone(),
                    message: format!("duplicate priority {}", rule.priority),
                });
            }
            if !ids.insert(rule.id.as_str()) {
                return Err(Error::Rule {
                    id: rule.id.clone(),
                    message: "duplicate rule id".into(),
                });
            }
        }
        let fallbacks = rules.iter().filter(|r| r.kind == RuleKind::Fallback).count();
        if fallbacks > 1 {
            return Err(Error::Rule {
                id: rules
                    .iter()
                    .filter(|r| r.kind == RuleKind::Fallback)
                    .nth(1)
                    .map(|r| r.id.clone())
                    .unwrap_or_default(),
                message: "more than one fallback rule".into(),
            });
        }
        if fallbacks == 0 {
            let priority = rules.iter().map(|r| r.priority).max().unwrap_or(0).saturating_add(1);
            rules.push(ExtractionRule::fallback(priority));
        }
        rules.sort_by_key(|r| (r.kind == RuleKind::Fallback, r.priority));

        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let regex = compile_rule(&rule)?;
            compiled.push(CompiledRule { rule, regex });
        }
        let sources: Vec<&str> = compiled
            .iter()
            .filter_map(|c| c.regex.as_ref().map(|r| r.as_str()))
            .collect();
        let set = RegexSetBuilder::new(sources)
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Rule {
                id: "<set>".into(),
                message: e.to_string(),
            })?;
        Ok(RuleSet {
            rules: compiled,
            set,
        })
    }

    pub fn default_rules() -> Self {
        RuleSet::new(parse_rules(DEFAULT_RULES).expect("shipped rules parse"))
            .expect("shipped rules compile")
    }

    pub fn rules(&self) -> impl ExactSizeIterator<Item = &ExtractionRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    /// The rule list in cascade order, for editing and rebuilding.
    pub fn to_rules(&self) -> Vec<ExtractionRule> {
        self.rules().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Runs the cascade over text already passed through
    /// [`normalize_for_extraction`](crate::normalize::normalize_for_extraction).
    pub fn apply(&self, normalized_text: &str) -> Option<CascadeMatch> {
        apply_cascade(normalized_text, self)
    }

    /// Normalizes a post and runs the cascade over it.
    pub fn extract(&self, post: &Post) -> Option<Extraction> {
        let (normalized, offsets) = normalize_for_extraction_with_offsets(&post.text);
        let found = self.apply(&normalized)?;
        Some(Extraction {
            post_id: post.id.clone(),
            age: found.age,
            rule_id: found.rule_id,
            original_span: offsets.original_span(found.span.clone()),
            span: found.span,
        })
    }
}

/// A cascade result before it is tied to a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeMatch {
    pub age: u8,
    pub rule_id: String,
    /// character offsets in the normalized text
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub post_id: String,
    pub age: u8,
    pub rule_id: String,
    /// character offsets in the normalized text
    pub span: Range<usize>,
    /// the same span mapped back onto the raw post text
    pub original_span: Range<usize>,
}

fn number(caps: &Captures<'_>, name: &str) -> Option<i64> {
    let text = caps.name(name)?.as_str();
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // quantities are allowed to be long; anything past i64 is not an age
    text.parse::<i64>().ok()
}

fn rule_age(kind: RuleKind, caps: &Captures<'_>) -> Option<i64> {
    let age = number(caps, "age")?;
    Some(match kind {
        RuleKind::Direct => age,
        RuleKind::AnticipatoryBirthday => age - 1,
        RuleKind::FutureCountdown => {
            let quantity = number(caps, "qty")?;
            let unit = TimeUnit::from_word(caps.name("unit")?.as_str())?;
            countdown_age(quantity as u64, unit, age)
        }
        RuleKind::PastElapsed => number(caps, "qty")?.saturating_add(age),
        RuleKind::MaxOfAges => age.max(number(caps, "other")?),
        RuleKind::TurnedRepeat => age.saturating_add(number(caps, "times")? - 1),
        RuleKind::Fallback => return None,
    })
}

fn in_range(age: i64) -> Option<u8> {
    (MIN_AGE as i64..=MAX_AGE as i64)
        .contains(&age)
        .then_some(age as u8)
}

/// First matching rule wins; with no match the fallback fires. An age
/// outside 10–99 yields nothing.
pub fn apply_cascade(normalized_text: &str, rules: &RuleSet) -> Option<CascadeMatch> {
    let matched = rules.set.matches(normalized_text);
    // the fallback is last, so set indices line up with rule positions
    for (idx, compiled) in rules.rules.iter().enumerate() {
        let Some(regex) = &compiled.regex else {
            // fallback, always last
            let span = first_two_digit_span(normalized_text)?;
            let age = normalized_text[span.clone()].parse::<i64>().ok()?;
            return Some(CascadeMatch {
                age: in_range(age)?,
                rule_id: compiled.rule.id.clone(),
                span: char_span(normalized_text, span),
            });
        };
        if !matched.matched(idx) {
            continue;
        }
        let Some(caps) = regex.captures(normalized_text) else {
            continue;
        };
        // digits outside ASCII do not parse; treat as no match
        let Some(age) = rule_age(compiled.rule.kind, &caps) else {
            continue;
        };
        let whole = caps.get(0).expect("group 0").range();
        return Some(CascadeMatch {
            age: in_range(age)?,
            rule_id: compiled.rule.id.clone(),
            span: char_span(normalized_text, whole),
        });
    }
    None
}

fn first_two_digit_span(text: &str) -> Option<Range<usize>> {
    normalize::digit_runs(text).find(|r| r.len() == 2)
}

/// The leftmost maximal digit run of exactly two digits.
pub fn fallback_first_two_digit(normalized_text: &str) -> Option<u32> {
    first_two_digit_span(normalized_text).and_then(|r| normalized_text[r].parse().ok())
}

/// Parses a rule file: `id TAB priority TAB kind TAB pattern [TAB notes]`.
pub fn parse_rules(text: &str) -> Result<Vec<ExtractionRule>> {
    let mut rules = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if let Some(version) = line.strip_prefix("#version") {
            let version = version.trim();
            if version.parse::<u32>().ok() != Some(RULE_FILE_VERSION) {
                return Err(Error::parse(
                    "<rules>",
                    line_no,
                    format!("unsupported rule file version {version:?}"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.splitn(5, '\t').collect();
        if cols.len() < 4 {
            return Err(Error::parse(
                "<rules>",
                line_no,
                "expected id, priority, kind, pattern[, notes]",
            ));
        }
        let id = cols[0].trim();
        let rule_err = |message: String| Error::Rule {
            id: id.to_string(),
            message,
        };
        let priority = cols[1]
            .trim()
            .parse::<i64>()
            .map_err(|_| rule_err(format!("bad priority {:?}", cols[1])))?;
        let kind: RuleKind = cols[2].parse().map_err(rule_err)?;
        rules.push(ExtractionRule {
            id: id.to_string(),
            priority,
            source: cols[3].to_string(),
            kind,
            notes: cols.get(4).map(|s| s.trim().to_string()).unwrap_or_default(),
        });
    }
    Ok(rules)
}

/// Loads and compiles a rule file.
pub fn load_rules(path: impl AsRef<Path>) -> Result<RuleSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rules = parse_rules(&text).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::parse(path, line, message),
        other => other,
    })?;
    RuleSet::new(rules)
}
