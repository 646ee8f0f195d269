//! Matching confounders: publication day, length, readability, sentiment, rating.
//!
//! Readability is Flesch Reading Ease. Syllables are counted per word as runs
//! of vowels (`aeiouy`), minus one for a trailing silent `e` (but not `le`),
//! with a floor of one. Sentences are runs of `.`, `!` or `?`, with a floor of
//! one. Sentiment is the mean valence of the words found in a lexicon.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Review;
use crate::error::{Error, Result};

const DEFAULT_SENTIMENT: &str = include_str!("../data/sentiment.tsv");

/// Number of numeric confounders; fixes the covariance layout.
pub const DIM: usize = 5;
pub const FEATURE_NAMES: [&str; DIM] = ["timestamp_days", "length_words", "readability", "sentiment", "rating"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderVector {
    pub timestamp_days: i64,
    pub length_words: usize,
    pub readability: f64,
    pub sentiment: f64,
    pub rating: u8,
}

impl ConfounderVector {
    /// Components in [`FEATURE_NAMES`] order.
    pub fn to_array(&self) -> [f64; DIM] {
        [
            self.timestamp_days as f64,
            self.length_words as f64,
            self.readability,
            self.sentiment,
            f64::from(self.rating),
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    valence: HashMap<String, f64>,
}

impl SentimentLexicon {
    pub fn parse(text: &str) -> Result<Self> {
        let mut valence = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tok, v) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!("sentiment lexicon line {}: expected token<TAB>valence", i + 1))
            })?;
            let v: f64 = v.trim().parse().map_err(|_| {
                Error::Config(format!("sentiment lexicon line {}: bad valence `{v}`", i + 1))
            })?;
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "sentiment lexicon line {}: valence {v} outside [-1, 1]",
                    i + 1
                )));
            }
            valence.insert(tok.trim().to_lowercase(), v);
        }
        Ok(SentimentLexicon { valence })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_SENTIMENT).expect("bundled sentiment lexicon parses")
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let text: String = pairs.into_iter().map(|(t, v)| format!("{t}\t{v}\n")).collect();
        Self::parse(&text)
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.valence.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.valence.contains_key(token)
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    let is_vowel = |c: char| "aeiouy".contains(c);
    let mut count = 0usize;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            count += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    if n >= 2 && letters[n - 1] == 'e' && letters[n - 2] != 'l' && !is_vowel(letters[n - 2]) {
        count = count.saturating_sub(1);
    }
    count.max(1)
}

pub fn sentence_count(text: &str) -> usize {
    let mut n = 0;
    let mut in_run = false;
    for c in text.chars() {
        let terminal = matches!(c, '.' | '!' | '?');
        if terminal && !in_run {
            n += 1;
        }
        in_run = terminal;
    }
    n.max(1)
}

/// Flesch Reading Ease; 0 for text without words.
pub fn readability(text: &str) -> f64 {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return 0.0;
    }
    let w = words.len() as f64;
    let syl: usize = words.iter().map(|w| syllables(w)).sum();
    206.835 - 1.015 * (w / sentence_count(text) as f64) - 84.6 * (syl as f64 / w)
}

fn sentiment_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Mean valence over in-lexicon tokens; 0 when none match.
pub fn sentiment(text: &str, lexicon: &SentimentLexicon) -> f64 {
    let (sum, n) = sentiment_tokens(text)
        .filter_map(|t| lexicon.get(&t))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn confounder_vector(review: &Review, lexicon: &SentimentLexicon) -> ConfounderVector {
    ConfounderVector {
        timestamp_days: review.timestamp,
        length_words: word_count(&review.text),
        readability: readability(&review.text),
        sentiment: sentiment(&review.text, lexicon),
        rating: review.rating,
    }
}
