mod common;

use std::sync::LazyLock;

use proptest::prelude::*;
use selfage::retrieval::{match_candidates, should_drop, CompiledPatternSet, DropDecision};

static MATCHER: LazyLock<CompiledPatternSet> = LazyLock::new(CompiledPatternSet::default_set);

fn matches(text: &str) -> bool {
    let matcher = &*MATCHER;
    !match_candidates(&common::post("p", "u", text), matcher).is_empty()
}

#[test]
fn numeric_templates_accept_exactly_two_digit_ages() {
    let matcher = &*MATCHER;
    let templates = ["I am {} years old", "i'm {}", "turned {} today", "at the age of {}", "{}yo"];
    for template in templates {
        for n in 0..1000u32 {
            let text = template.replace("{}", &n.to_string());
            let expected = (10..=99).contains(&n);
            assert_eq!(matcher.is_match(&text), expected, "{text:?}");
        }
    }
}

#[test]
fn published_examples_all_match() {
    let texts = common::ANNOTATED
        .iter()
        .map(|(t, _, _)| *t)
        .chain(common::EXTRACTION_GOLDEN.iter().map(|(t, _)| *t))
        .chain(common::ERROR_CASES.iter().map(|(t, _, _)| *t))
        .chain([common::MISSED_AGE_POST]);
    for t in texts {
        assert!(matches(t), "{t:?}");
    }
    assert!(!matches("hello world"));
    assert!(!matches("I am 150 years old"));
}

#[test]
fn retweets_and_reported_speech() {
    let p = |t: &str| common::post("p", "u", t);
    assert_eq!(should_drop(&p("RT @x: I'm 21 today")), DropDecision::Retweet);
    assert_eq!(should_drop(&p("\"I am 30 years old\" says actor https://t.co/x")), DropDecision::ReportedSpeech);
    assert_eq!(should_drop(&p("Man, 40 years old, arrested https://t.co/x")), DropDecision::ReportedSpeech);
    assert_eq!(should_drop(&p("I'm 21 today https://t.co/x")), DropDecision::Keep);
}

fn digit_groups(s: &str) -> Vec<u32> {
    s.split(|c: char| !c.is_ascii_digit())
        .filter(|g| !g.is_empty())
        .map(|g| g.parse().unwrap_or(u32::MAX))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3_000))]

    #[test]
    fn numeric_hits_only_cover_ages(
        words in prop::collection::vec(
            prop_oneof![
                "[0-9]{1,4}".boxed(),
                prop::sample::select(vec!["i am", "I'm", "turned", "years old", "yo", "at", "aged", "will be", "the"])
                    .prop_map(String::from)
                    .boxed(),
                "[a-z]{1,5}".boxed(),
            ],
            0..12,
        )
    ) {
        let text = words.join(" ");
        let matcher = &*MATCHER;
        let chars: Vec<char> = text.chars().collect();
        for hit in match_candidates(&common::post("p", "u", text.as_str()), matcher) {
            if hit.pattern_id.starts_with("num.") {
                let span: String = chars[hit.span.clone()].iter().collect();
                for g in digit_groups(&span) {
                    prop_assert!((10..=99).contains(&g), "{} in {:?} via {}", g, span, hit.pattern_id);
                }
            }
        }
    }
}
