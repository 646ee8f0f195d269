//! Signaled gender from user names.
//!
//! The first alphabetic token of the name is looked up in a first-name
//! lexicon. Only definite `male` / `female` entries count; `mostly_*`,
//! androgynous and unknown names fall through to a keyword scan over the whole
//! name ("gamer girl", "some dude").

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};

const DEFAULT_NAMES: &str = include_str!("../data/names.tsv");
const DEFAULT_FEMALE_KEYWORDS: &str = include_str!("../data/keywords_female.txt");
const DEFAULT_MALE_KEYWORDS: &str = include_str!("../data/keywords_male.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictLabel {
    Male,
    Female,
    MostlyMale,
    MostlyFemale,
    Androgynous,
}

impl FromStr for DictLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "male" => DictLabel::Male,
            "female" => DictLabel::Female,
            "mostly_male" => DictLabel::MostlyMale,
            "mostly_female" => DictLabel::MostlyFemale,
            "androgynous" => DictLabel::Androgynous,
            other => return Err(Error::Config(format!("unknown lexicon label `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GenderSignal {
    SignalMale,
    SignalFemale,
    NoSignal,
}

impl GenderSignal {
    pub fn as_str(self) -> &'static str {
        match self {
            GenderSignal::SignalMale => "signal_male",
            GenderSignal::SignalFemale => "signal_female",
            GenderSignal::NoSignal => "no_signal",
        }
    }

    /// Training label for the text classifier: 1 = male, 0 = female.
    pub fn label(self) -> Option<u8> {
        match self {
            GenderSignal::SignalMale => Some(1),
            GenderSignal::SignalFemale => Some(0),
            GenderSignal::NoSignal => None,
        }
    }
}

impl fmt::Display for GenderSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenderSignal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signal_male" => Ok(GenderSignal::SignalMale),
            "signal_female" => Ok(GenderSignal::SignalFemale),
            "no_signal" => Ok(GenderSignal::NoSignal),
            other => Err(Error::Validation(format!("unknown signal `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct NameLexicon {
    entries: HashMap<String, DictLabel>,
}

impl NameLexicon {
    /// Parses `name<TAB>label` lines; `#` lines and blanks are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, label) = line.split_once('\t').ok_or_else(|| {
                Error::Config(format!("lexicon line {}: expected name<TAB>label", i + 1))
            })?;
            entries.insert(name.trim().to_lowercase(), label.trim().parse()?);
        }
        Ok(NameLexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_NAMES).expect("bundled lexicon parses")
    }

    pub fn insert(&mut self, name: &str, label: DictLabel) {
        self.entries.insert(name.trim().to_lowercase(), label);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Names carrying `label`, sorted.
    pub fn names_with(&self, label: DictLabel) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .entries
            .iter()
            .filter(|(_, &l)| l == label)
            .map(|(k, _)| k.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }
}

#[derive(Debug, Clone, Default)]
pub struct KeywordLists {
    female: HashSet<String>,
    male: HashSet<String>,
}

fn parse_token_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

impl KeywordLists {
    pub fn new<I, J, S, T>(female: I, male: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let female: HashSet<String> = female.into_iter().map(|s| s.as_ref().trim().to_lowercase()).collect();
        let male: HashSet<String> = male.into_iter().map(|s| s.as_ref().trim().to_lowercase()).collect();
        if let Some(shared) = female.intersection(&male).next() {
            return Err(Error::Config(format!(
                "keyword `{shared}` appears in both keyword lists"
            )));
        }
        Ok(KeywordLists { female, male })
    }

    pub fn parse(female: &str, male: &str) -> Result<Self> {
        Self::new(parse_token_list(female), parse_token_list(male))
    }

    pub fn load(female: &Path, male: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Self::parse(&read(female)?, &read(male)?)
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_FEMALE_KEYWORDS, DEFAULT_MALE_KEYWORDS).expect("bundled keywords are disjoint")
    }

    pub fn is_keyword(&self, token: &str) -> bool {
        self.female.contains(token) || self.male.contains(token)
    }
}

/// Lowercased alphabetic runs of a name.
fn alpha_tokens(name: &str) -> impl Iterator<Item = String> + '_ {
    name.split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// First maximal run of letters, lowercased; empty when the name has no letters.
pub fn first_token(user_name: &str) -> String {
    alpha_tokens(user_name).next().unwrap_or_default()
}

pub fn lookup_name(lexicon: &NameLexicon, token: &str) -> Option<DictLabel> {
    lexicon.entries.get(token).copied()
}

/// Gender of the keyword tokens in the name, if they all agree.
pub fn keyword_scan(user_name: &str, lists: &KeywordLists) -> Option<GenderSignal> {
    let mut found = None;
    for token in alpha_tokens(user_name) {
        let hit = if lists.female.contains(&token) {
            GenderSignal::SignalFemale
        } else if lists.male.contains(&token) {
            GenderSignal::SignalMale
        } else {
            continue;
        };
        match found {
            None => found = Some(hit),
            Some(prev) if prev != hit => return None,
            Some(_) => {}
        }
    }
    found
}

pub fn classify_signal(user_name: &str, lexicon: &NameLexicon, lists: &KeywordLists) -> GenderSignal {
    match lookup_name(lexicon, &first_token(user_name)) {
        Some(DictLabel::Male) => GenderSignal::SignalMale,
        Some(DictLabel::Female) => GenderSignal::SignalFemale,
        _ => keyword_scan(user_name, lists).unwrap_or(GenderSignal::NoSignal),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerSignal {
    pub reviewer_id: String,
    pub user_name: String,
    pub signal: GenderSignal,
}

/// One signal per reviewer, from the reviewer's most frequent user name
/// (ties broken by the lexicographically smallest name). Sorted by reviewer id.
pub fn reviewer_signals(store: &CorpusStore, lexicon: &NameLexicon, lists: &KeywordLists) -> Vec<ReviewerSignal> {
    store
        .reviewer_index()
        .iter()
        .map(|(reviewer_id, ids)| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for id in ids {
                if let Some(r) = store.review(*id) {
                    *counts.entry(r.user_name.as_str()).or_default() += 1;
                }
            }
            // BTreeMap iterates names ascending; keep the first maximum.
            let mut best: Option<(&str, usize)> = None;
            for (name, n) in counts {
                if best.is_none_or(|(_, m)| n > m) {
                    best = Some((name, n));
                }
            }
            let user_name = best.map(|(n, _)| n).unwrap_or_default().to_string();
            ReviewerSignal {
                reviewer_id: reviewer_id.clone(),
                signal: classify_signal(&user_name, lexicon, lists),
                user_name,
            }
        })
        .collect()
}
