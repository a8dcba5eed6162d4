#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use selfage::{Label, LabeledPost, Post};

/// Annotated examples: text, gold label, gold age.
pub const ANNOTATED: &[(&str, bool, Option<u32>)] = &[
    ("It's my 21st birthday today. But who cares..... ITS FINALLY AUGUST!!!!", true, Some(21)),
    ("It's crazy, tomorrow I'll be 20. I'm getting so OLD.", true, Some(19)),
    ("can't believe im going to be 21 i want to be a teenager again", true, Some(20)),
    ("I graduate in May only focusing on me and my child.. watch me at 21", false, None),
    ("Had just turned 18 then found out I was pregnant 2 weeks later", false, None),
];

/// Extraction examples with the age each must yield.
pub const EXTRACTION_GOLDEN: &[(&str, u8)] = &[
    ("Two more years until my 21st birthday! Can't wait! #surprise", 19),
    ("It's my 18th birthday! And we have to go to school", 18),
    ("excited for my 18th but also don't want to grow up", 17),
    ("I started having #depression 20 yrs ago at the age of 19.", 39),
    ("I started at 28 and I'm currently doing a PhD at 35.", 35),
    ("i feel like i'm going through a midlife crisis at the age of 21", 21),
    ("I've turned 21 three times now. I don't think I can turn it a 4th.", 23),
    ("I'm right there with you. Recently turned 47.", 47),
    ("I was just reminded that I'm turning 18 in 3 weeks I feel old", 17),
    ("I'm going out for the first time tonight since turning 21", 21),
];

/// Known extraction errors: text, gold age, age the cascade produces.
pub const ERROR_CASES: &[(&str, Option<u8>, u8)] = &[
    ("Blessed to see my 22nd birthday! I feel good to be alive.", Some(22), 21),
    (
        "The most exciting part of turning 25 is that my insurance is dropping 20 bucks per month.",
        Some(25),
        24,
    ),
    ("Got to love Facebook for reminding me of my 21st bday cruise", None, 20),
    (
        "Who will be going to two 21st birthdays next week and doesn't have anything nothing to wear?! ME",
        None,
        20,
    ),
];

/// An age post the classifier missed, so nothing was extracted.
pub const MISSED_AGE_POST: &str = "Big 30 coming up on the 31st";

pub fn at(year: i32, day: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(year, 1, day, 12, 0, 0).unwrap()
}

pub fn post(id: impl Into<String>, user: impl Into<String>, text: impl Into<String>) -> Post {
    Post::new(id, user, at(2020, 1), text)
}

pub fn labeled(id: impl Into<String>, text: &str, age: Option<u32>) -> LabeledPost {
    let label = if age.is_some() { Label::Age } else { Label::NoAge };
    LabeledPost::new(post(id, "u", text), label, age).unwrap()
}

/// Separable synthetic corpus: every post carries at least one cue word of
/// its own class and none of the other; filler words are shared.
pub fn separable_corpus(n: usize, seed: u64) -> Vec<LabeledPost> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let age_cues = ["birthday", "turning", "bday", "celebrate", "candles", "older", "born"];
    let other_cues = ["traffic", "weather", "coffee", "meeting", "football", "score", "office"];
    let filler = ["the", "and", "today", "so", "lol", "my", "is", "at", "with", "this", "week", "friends"];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let age = i % 2 == 0;
            let cues = if age { &age_cues } else { &other_cues };
            let mut words: Vec<String> = (0..rng.gen_range(1..3))
                .map(|_| cues.choose(&mut rng).unwrap().to_string())
                .collect();
            for _ in 0..rng.gen_range(2..9) {
                words.push(filler.choose(&mut rng).unwrap().to_string());
            }
            if rng.gen_bool(0.5) {
                words.push(rng.gen_range(10..60).to_string());
            }
            words.shuffle(&mut rng);
            labeled(format!("s{i}"), &words.join(" "), age.then_some(20 + (i % 30) as u32))
        })
        .collect()
}

fn token() -> impl proptest::strategy::Strategy<Value = String> {
    use proptest::prelude::*;
    prop_oneof![
        3 => "[a-zA-Z]{1,8}",
        2 => "[0-9]{1,4}",
        1 => prop::sample::select(vec![
            "twenty", "one", "twenty-one", "thirty first", "second", "eighteenth", "Forty", "ninety-nine",
        ])
        .prop_map(String::from),
        1 => "(https?://|www\\.)[a-z]{1,6}\\.(com|org|co)(/[a-z0-9]{0,5})?",
        1 => "@[a-zA-Z_0-9]{1,8}",
        1 => "[!?.,'\"#:;()\\-]{1,3}",
        1 => "\\PC{1,3}",
    ]
}

/// Post-like strings mixing words, digits, number words, URLs, mentions,
/// punctuation and arbitrary characters.
pub fn tweet() -> impl proptest::strategy::Strategy<Value = String> {
    use proptest::prelude::*;
    let sep = prop::sample::select(vec![" ", " ", "", "-", "  ", "\n", ". "]);
    prop::collection::vec((token(), sep), 0..20).prop_map(|parts| {
        parts.into_iter().fold(String::new(), |mut s, (t, sep)| {
            s.push_str(&t);
            s.push_str(sep);
            s
        })
    })
}
