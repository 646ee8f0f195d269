//! Seeded synthetic corpora with planted signal rates, writing styles and
//! helpfulness advantages.
//!
//! Every review is written by a reviewer of a known group. Signaling groups
//! get lexicon names, performing groups neutral handles. Text is a bag of
//! tokens drawn from the author's gender style pool, or from a shared pool
//! with probability `overlap`. Votes are `up ~ Poisson(mean + noise)`,
//! `down ~ Poisson(noise)`, so the expected helpfulness of a group is exactly
//! its mean and the planted advantages follow in closed form.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{serialize_product_record, serialize_review_record, Product, Review};
use crate::effects::advantage;
use crate::error::{Error, Result};
use crate::matching::PairGroup;
use crate::perform::ReviewerGroup;
use crate::seeding::rng_for;
use crate::signal::{classify_signal, DictLabel, GenderSignal, KeywordLists, NameLexicon};

pub const MALE_STYLE: &[&str] = &[
    "solid", "drive", "battery", "torque", "specs", "install", "performance", "sturdy", "tool", "engine",
    "bolt", "wrench", "power", "mount", "gear", "firmware", "speed", "bass", "voltage", "durable", "grip",
    "setup", "upgrade", "cable", "motor", "throughput", "drill", "rugged", "benchmark", "hardware",
];

pub const FEMALE_STYLE: &[&str] = &[
    "cute", "lovely", "soft", "adorable", "color", "pretty", "sweet", "comfy", "pink", "fabric", "scent",
    "gorgeous", "cozy", "stylish", "blouse", "floral", "charming", "delicate", "dress", "shade", "sparkle",
    "pastel", "velvet", "lace", "glow", "fragrance", "elegant", "blush", "silky", "darling",
];

pub const SHARED_STYLE: &[&str] = &[
    "the", "product", "was", "it", "and", "this", "for", "with", "very", "really", "great", "good", "bad",
    "not", "price", "value", "arrived", "time", "would", "buy", "again", "works", "quality", "ordered",
    "item", "use", "day", "recommend", "fine", "nice", "box", "shipping", "overall", "expected", "happy",
];

const HANDLE_ADJECTIVES: &[&str] = &[
    "blue", "quiet", "rapid", "silver", "lucky", "cosmic", "green", "honest", "urban", "crimson", "golden",
    "hidden", "northern", "frozen", "amber", "clever", "distant", "wild",
];

const HANDLE_NOUNS: &[&str] = &[
    "reader", "shopper", "customer", "hawk", "river", "comet", "maple", "falcon", "harbor", "meadow",
    "otter", "pixel", "canyon", "lantern", "badger", "willow", "summit", "ember",
];

/// One category; arrays are indexed like [`ReviewerGroup::TREATMENT`]
/// (SM, SW, PM, PW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub counts: [usize; 4],
    pub means: [f64; 4],
}

impl CategorySpec {
    /// Every pair group carries the advantage `advantage_pct` (positive
    /// favours the first-named group): SM = m, PM = SW = m·r, PW = m·r²
    /// with r = 1 + a for a ≥ 0 and r = 1 / (1 + |a|) otherwise.
    pub fn uniform(name: &str, per_group: usize, base_mean: f64, advantage_pct: f64) -> Self {
        let a = advantage_pct / 100.0;
        let r = if a >= 0.0 { 1.0 + a } else { 1.0 / (1.0 - a) };
        CategorySpec {
            name: name.to_string(),
            counts: [per_group; 4],
            means: [base_mean, base_mean * r, base_mean * r, base_mean * r * r],
        }
    }

    pub fn mean_of(&self, g: ReviewerGroup) -> f64 {
        self.means[group_index(g)]
    }

    pub fn count_of(&self, g: ReviewerGroup) -> usize {
        self.counts[group_index(g)]
    }
}

fn group_index(g: ReviewerGroup) -> usize {
    ReviewerGroup::TREATMENT
        .iter()
        .position(|&t| t == g)
        .expect("treatment group")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub categories: Vec<CategorySpec>,
    /// Probability that a token comes from the shared pool.
    pub overlap: f64,
    pub male_style: Vec<String>,
    pub female_style: Vec<String>,
    pub shared_style: Vec<String>,
    pub male_names: Vec<String>,
    pub female_names: Vec<String>,
    pub neutral_names: Vec<String>,
    pub reviews_per_reviewer: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Rate of the vote noise added to both up- and downvotes.
    pub noise: f64,
    pub products_per_category: usize,
    pub first_day: i64,
    pub day_span: i64,
    pub seed: u64,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Handles built from fixed word lists whose tokens carry no name or keyword.
pub fn neutral_handles(lexicon: &NameLexicon, keywords: &KeywordLists) -> Vec<String> {
    let clean = |w: &&&str| !lexicon.contains(w) && !keywords.is_keyword(w);
    let mut out = vec!["Kindle Customer".to_string(), "Amazon Customer".to_string()];
    for a in HANDLE_ADJECTIVES.iter().filter(clean) {
        for n in HANDLE_NOUNS.iter().filter(clean) {
            out.push(format!("{} {}", capitalize(a), capitalize(n)));
        }
    }
    out
}

impl SynthSpec {
    /// Defaults with the bundled lexicon and the given categories.
    pub fn with_categories(categories: Vec<CategorySpec>, seed: u64) -> Self {
        let lexicon = NameLexicon::bundled();
        let keywords = KeywordLists::bundled();
        let names = |l| lexicon.names_with(l).into_iter().map(capitalize).collect();
        SynthSpec {
            categories,
            overlap: 0.3,
            male_style: strings(MALE_STYLE),
            female_style: strings(FEMALE_STYLE),
            shared_style: strings(SHARED_STYLE),
            male_names: names(DictLabel::Male),
            female_names: names(DictLabel::Female),
            neutral_names: neutral_handles(&lexicon, &keywords),
            reviews_per_reviewer: 3,
            min_words: 20,
            max_words: 60,
            noise: 2.0,
            products_per_category: 50,
            first_day: 14_000,
            day_span: 2_000,
            seed,
        }
    }

    /// Categories with uniform planted advantages, `per_group` reviews per
    /// group and base mean helpfulness `base_mean`.
    pub fn planted(advantages: &[(&str, f64)], per_group: usize, base_mean: f64, seed: u64) -> Self {
        Self::with_categories(
            advantages
                .iter()
                .map(|&(name, a)| CategorySpec::uniform(name, per_group, base_mean, a))
                .collect(),
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synth spec: {m}")));
        if !(0.0..=1.0).contains(&self.overlap) {
            return bad(format!("overlap {} outside [0, 1]", self.overlap));
        }
        if self.reviews_per_reviewer == 0 || self.products_per_category == 0 {
            return bad("reviews per reviewer and products per category must be positive".into());
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad(format!("word range {}..={} is empty", self.min_words, self.max_words));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() || self.day_span <= 0 {
            return bad("noise must be finite and non-negative, day span positive".into());
        }
        let pools = [
            &self.male_style,
            &self.female_style,
            &self.male_names,
            &self.female_names,
            &self.neutral_names,
        ];
        if pools.iter().any(|p| p.is_empty()) || (self.overlap > 0.0 && self.shared_style.is_empty()) {
            return bad("style and name pools must be non-empty".into());
        }
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if !seen.insert(&c.name) {
                return bad(format!("duplicate category `{}`", c.name));
            }
            for m in c.means {
                if !m.is_finite() || m + self.noise < 0.0 {
                    return bad(format!("mean {m} in `{}` needs mean + noise >= 0", c.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub review_id: u64,
    pub reviewer_id: String,
    pub category: String,
    pub group: ReviewerGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub pair_group: PairGroup,
    pub category: String,
    pub favored_group: Option<ReviewerGroup>,
    pub advantage_pct: f64,
    pub degenerate: bool,
}

impl PlantedEffect {
    /// Positive when the first-named group is favoured.
    pub fn signed(&self) -> f64 {
        match self.favored_group {
            Some(g) if g == self.pair_group.groups().0 => self.advantage_pct,
            Some(_) => -self.advantage_pct,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub reviews: Vec<TruthRow>,
    pub planted: Vec<PlantedEffect>,
}

impl GroundTruth {
    pub fn count(&self, category: &str, group: ReviewerGroup) -> usize {
        self.reviews
            .iter()
            .filter(|r| r.category == category && r.group == group)
            .count()
    }

    pub fn write_reviews_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(["review_id", "reviewer_id", "category", "group"])?;
        for r in &self.reviews {
            out.write_record([&r.review_id.to_string(), &r.reviewer_id, &r.category, r.group.tag()])?;
        }
        out.flush().map_err(|e| Error::io("ground truth", e))
    }

    pub fn write_planted_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(["pair_group", "category", "favored_group", "advantage_pct", "degenerate"])?;
        for p in &self.planted {
            out.write_record([
                p.pair_group.tag().to_string(),
                p.category.clone(),
                p.favored_group.map_or("none", ReviewerGroup::tag).to_string(),
                format!("{:.6}", p.advantage_pct),
                p.degenerate.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("planted effects", e))
    }
}

/// Expected advantage of every (pair group, category) under the vote model.
pub fn planted_truth(spec: &SynthSpec) -> Vec<PlantedEffect> {
    let mut out = Vec::new();
    for c in &spec.categories {
        for pair in PairGroup::ALL {
            let (ga, gb) = pair.groups();
            let a = advantage(c.mean_of(ga), c.mean_of(gb));
            let favored = a.favored.map(|s| match s {
                crate::effects::Side::First => ga,
                crate::effects::Side::Second => gb,
            });
            out.push(PlantedEffect {
                pair_group: pair,
                category: c.name.clone(),
                favored_group: favored,
                advantage_pct: a.magnitude_pct,
                degenerate: a.degenerate,
            });
        }
    }
    out
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let d = Poisson::new(rate).expect("finite positive rate");
    d.sample(rng) as u32
}

fn review_text(rng: &mut ChaCha8Rng, spec: &SynthSpec, style: &[String]) -> String {
    let n = rng.random_range(spec.min_words..=spec.max_words);
    let mut text = String::new();
    let mut sentence = 0;
    let mut sentence_len = rng.random_range(5..=12);
    for i in 0..n {
        let pool = if rng.random_bool(spec.overlap) {
            &spec.shared_style
        } else {
            style
        };
        let word = pool.choose(rng).expect("non-empty pool");
        if i > 0 {
            text.push(' ');
        }
        if sentence == 0 {
            text.push_str(&capitalize(word));
        } else {
            text.push_str(word);
        }
        sentence += 1;
        if sentence == sentence_len || i + 1 == n {
            text.push('.');
            sentence = 0;
            sentence_len = rng.random_range(5..=12);
        }
    }
    text
}

/// Everything one category contributes, before global review ids are assigned.
fn generate_category(spec: &SynthSpec, ci: usize) -> (Vec<Product>, Vec<(Review, ReviewerGroup)>) {
    let cat = &spec.categories[ci];
    let mut rng = rng_for(spec.seed, &format!("synth/{}", cat.name));
    let products: Vec<Product> = (0..spec.products_per_category)
        .map(|p| Product {
            product_id: format!("C{ci:02}P{p:05}"),
            categories: BTreeSet::from([cat.name.clone()]),
        })
        .collect();
    let mut reviews = Vec::new();
    for (gi, &group) in ReviewerGroup::TREATMENT.iter().enumerate() {
        let (names, style) = match group {
            ReviewerGroup::SignalingMan => (&spec.male_names, &spec.male_style),
            ReviewerGroup::SignalingWoman => (&spec.female_names, &spec.female_style),
            ReviewerGroup::PerformingMan => (&spec.neutral_names, &spec.male_style),
            _ => (&spec.neutral_names, &spec.female_style),
        };
        let mut user_name = String::new();
        for k in 0..cat.counts[gi] {
            let reviewer = k / spec.reviews_per_reviewer;
            if k % spec.reviews_per_reviewer == 0 {
                user_name = names.choose(&mut rng).expect("non-empty pool").clone();
            }
            let product = &products[rng.random_range(0..products.len())];
            let review = Review {
                review_id: 0,
                reviewer_id: format!("C{ci:02}{}{reviewer:06}", group.tag()),
                product_id: product.product_id.clone(),
                user_name: user_name.clone(),
                rating: rng.random_range(1..=5),
                upvotes: poisson(&mut rng, cat.means[gi] + spec.noise),
                downvotes: poisson(&mut rng, spec.noise),
                text: review_text(&mut rng, spec, style),
                timestamp: spec.first_day + rng.random_range(0..spec.day_span),
            };
            reviews.push((review, group));
        }
    }
    (products, reviews)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub review_lines: Vec<String>,
    pub product_lines: Vec<String>,
    pub truth: GroundTruth,
}

/// Review and product lines in the ingest format plus ground truth. Review
/// ids are the 1-based line numbers, as assigned on ingest.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut out = SynthCorpus {
        review_lines: Vec::new(),
        product_lines: Vec::new(),
        truth: GroundTruth {
            reviews: Vec::new(),
            planted: planted_truth(spec),
        },
    };
    for ci in 0..spec.categories.len() {
        let (products, reviews) = generate_category(spec, ci);
        out.product_lines.extend(products.iter().map(serialize_product_record));
        for (review, group) in reviews {
            out.review_lines.push(serialize_review_record(&review));
            out.truth.reviews.push(TruthRow {
                review_id: out.review_lines.len() as u64,
                reviewer_id: review.reviewer_id,
                category: spec.categories[ci].name.clone(),
                group,
            });
        }
    }
    Ok(out)
}

/// File names written by [`write_corpus`].
pub const REVIEWS_FILE: &str = "reviews.json";
pub const PRODUCTS_FILE: &str = "products.json";
pub const TRUTH_FILE: &str = "ground_truth.csv";
pub const PLANTED_FILE: &str = "planted.csv";

pub fn write_corpus(spec: &SynthSpec, dir: &Path) -> Result<GroundTruth> {
    let corpus = generate_corpus(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write_lines = |name: &str, lines: &[String]| -> Result<()> {
        let path = dir.join(name);
        let mut body = lines.join("\n");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write_lines(REVIEWS_FILE, &corpus.review_lines)?;
    write_lines(PRODUCTS_FILE, &corpus.product_lines)?;
    let create = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path).map_err(|e| Error::io(&path, e))
    };
    corpus.truth.write_reviews_csv(create(TRUTH_FILE)?)?;
    corpus.truth.write_planted_csv(create(PLANTED_FILE)?)?;
    Ok(corpus.truth)
}

/// Signal the synthetic name pools are meant to produce.
pub fn intended_signal(group: ReviewerGroup) -> GenderSignal {
    match group {
        ReviewerGroup::SignalingMan => GenderSignal::SignalMale,
        ReviewerGroup::SignalingWoman => GenderSignal::SignalFemale,
        _ => GenderSignal::NoSignal,
    }
}

/// Checks that every pool name classifies as intended.
pub fn check_name_pools(spec: &SynthSpec, lexicon: &NameLexicon, keywords: &KeywordLists) -> Result<()> {
    let pools = [
        (&spec.male_names, GenderSignal::SignalMale),
        (&spec.female_names, GenderSignal::SignalFemale),
        (&spec.neutral_names, GenderSignal::NoSignal),
    ];
    for (names, want) in pools {
        if let Some(n) = names.iter().find(|n| classify_signal(n, lexicon, keywords) != want) {
            return Err(Error::Config(format!("synth name `{n}` does not classify as {want}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_review_record;

    fn small() -> SynthSpec {
        SynthSpec::planted(&[("Books", 30.0), ("Toys & Games", 0.0)], 40, 5.0, 7)
    }

    #[test]
    fn uniform_category_realizes_advantage() {
        for a in [40.0, -40.0, 25.0, 0.0] {
            let spec = SynthSpec::planted(&[("Books", a)], 1, 10.0, 1);
            for p in planted_truth(&spec) {
                assert!((p.signed() - a).abs() < 1e-9, "{} {}", p.pair_group, p.signed());
            }
        }
    }

    #[test]
    fn two_means_give_thirty_percent() {
        let mut spec = SynthSpec::planted(&[("Books", 0.0)], 1, 1.0, 1);
        spec.categories[0].means = [1.0, 1.0, 1.3, 1.0];
        let t = planted_truth(&spec);
        let pm_sm = t.iter().find(|p| p.pair_group == PairGroup::PmSm).unwrap();
        assert!((pm_sm.advantage_pct - 30.0).abs() < 1e-9);
        assert_eq!(pm_sm.favored_group, Some(ReviewerGroup::PerformingMan));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_corpus(&small()).unwrap();
        assert_eq!(a, generate_corpus(&small()).unwrap());
        let mut other = small();
        other.seed = 8;
        assert_ne!(a.review_lines, generate_corpus(&other).unwrap().review_lines);
    }

    #[test]
    fn counts_and_ids_match_truth() {
        let spec = small();
        let c = generate_corpus(&spec).unwrap();
        assert_eq!(c.review_lines.len(), 2 * 4 * 40);
        for g in ReviewerGroup::TREATMENT {
            assert_eq!(c.truth.count("Books", g), 40);
        }
        for (i, line) in c.review_lines.iter().enumerate() {
            let r = parse_review_record(line, i + 1).unwrap();
            assert_eq!(r.reviewer_id, c.truth.reviews[i].reviewer_id);
        }
    }

    #[test]
    fn name_pools_classify_as_intended() {
        let spec = small();
        check_name_pools(&spec, &NameLexicon::bundled(), &KeywordLists::bundled()).unwrap();
        assert!(spec.neutral_names.len() > 100);
    }

    #[test]
    fn zero_overlap_styles_are_disjoint() {
        let mut spec = small();
        spec.overlap = 0.0;
        let c = generate_corpus(&spec).unwrap();
        let male: BTreeSet<&str> = MALE_STYLE.iter().copied().collect();
        let female: BTreeSet<&str> = FEMALE_STYLE.iter().copied().collect();
        assert!(male.is_disjoint(&female));
        for (line, truth) in c.review_lines.iter().zip(&c.truth.reviews) {
            let r = parse_review_record(line, 1).unwrap();
            let own = if matches!(truth.group, ReviewerGroup::SignalingMan | ReviewerGroup::PerformingMan) {
                &male
            } else {
                &female
            };
            for w in r.text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()) {
                assert!(own.contains(w.to_lowercase().as_str()), "{w}");
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small();
        s.overlap = 1.5;
        assert!(generate_corpus(&s).is_err());
        let mut s = small();
        s.categories[0].means[0] = -10.0;
        assert!(generate_corpus(&s).is_err());
    }
}
