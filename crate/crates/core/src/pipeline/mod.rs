//! File-based pipeline stages behind the `genderlens` binary.
//!
//! Each stage reads the files of earlier stages from the output directory,
//! writes its own, and records a `<stage>.summary.json` with input and output
//! counts. Nothing time-dependent is written, so reruns are byte-identical.

pub mod config;

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::{resolve_category, PipelineConfig, SynthSettings, CATEGORY_ALIASES};

use crate::corpus::{corpus_stats, ingest_corpus, open_input, CorpusStore, Review};
use crate::effects::{
    aggregate_estimates, bootstrap_advantage, pair_outcomes, quadrant_classify, rank_curve, write_estimates_csv,
    write_quadrants_csv, write_rank_curves_csv, AdvantageEstimate, Metric, ALL_CATEGORIES,
};
use crate::error::{Error, Result};
use crate::features::{confounder_vector, ConfounderVector, SentimentLexicon, DIM};
use crate::matching::{
    balance_report, covariance_of, sample_and_match, CategoryPopulation, CovarianceMode, MatchConfig, MatchedPair,
    PairGroup, Point,
};
use crate::perform::{
    aggregate_user_label, assign_group, checkpoint, cnn_train, evaluate, predict_text, split_by_user,
    train_logreg_baseline, FeatureConfig, LabeledReview, Performance, ReviewerGroup,
};
use crate::seeding::rng_for;
use crate::signal::{reviewer_signals, GenderSignal, KeywordLists, NameLexicon};
use crate::synth::{write_corpus, CategorySpec, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Signal,
    Train,
    Predict,
    Features,
    Match,
    Estimate,
    Report,
    Synth,
}

impl Stage {
    /// The analysis stages in execution order (synth is separate).
    pub const PIPELINE: [Stage; 8] = [
        Stage::Ingest,
        Stage::Signal,
        Stage::Train,
        Stage::Predict,
        Stage::Features,
        Stage::Match,
        Stage::Estimate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Signal => "signal",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Features => "features",
            Stage::Match => "match",
            Stage::Estimate => "estimate",
            Stage::Report => "report",
            Stage::Synth => "synth",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .into_iter()
            .chain([Stage::Synth])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Output file names inside the output directory.
pub mod files {
    pub const SIGNALS: &str = "signals.csv";
    pub const MODEL: &str = "model.ckpt";
    pub const TRAINING_LOG: &str = "training_log.csv";
    pub const BASELINE_TOKENS: &str = "baseline_tokens.csv";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const GROUPS: &str = "groups.csv";
    pub const FEATURES: &str = "features.csv";
    pub const PAIRS: &str = "pairs.csv";
    pub const BALANCE: &str = "balance.csv";
    pub const ESTIMATES: &str = "estimates.csv";
    pub const QUADRANTS: &str = "quadrants.csv";
    pub const RANK_CURVES: &str = "rank_curves.csv";
    pub const SUMMARY_TABLE: &str = "summary.txt";
}

/// Machine-readable record of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub inputs: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, Value>,
}

impl StageReport {
    fn new(stage: Stage) -> Self {
        StageReport {
            stage: stage.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, k: &str, v: impl Serialize) -> &mut Self {
        self.inputs.insert(k.into(), serde_json::to_value(v).expect("serializable"));
        self
    }

    fn output(&mut self, k: &str, v: impl Serialize) -> &mut Self {
        self.outputs.insert(k.into(), serde_json::to_value(v).expect("serializable"));
        self
    }
}

pub fn summary_path(out_dir: &Path, stage: Stage) -> PathBuf {
    out_dir.join(format!("{stage}.summary.json"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(f)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the pipeline around one output directory.
pub struct Pipeline {
    pub cfg: PipelineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SignalRow {
    reviewer_id: String,
    user_name: String,
    signal: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupRow {
    reviewer_id: String,
    signal: String,
    performance: String,
    male_votes: usize,
    female_votes: usize,
    abstentions: usize,
    group: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FeatureRow {
    review_id: u64,
    timestamp_days: i64,
    length_words: usize,
    readability: f64,
    sentiment: f64,
    rating: u8,
    category: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairRow {
    pair_group: String,
    category: String,
    treated_id: u64,
    control_id: u64,
    distance: f64,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline { cfg }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn require(&self, stage: Stage, path: &Path, missing: Stage) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::Prerequisite {
                stage: stage.to_string(),
                missing: missing.to_string(),
            })
        }
    }

    fn require_store(&self, stage: Stage) -> Result<CorpusStore> {
        let dir = self.cfg.store_dir();
        if !CorpusStore::exists(&dir) {
            return Err(Error::Prerequisite {
                stage: stage.to_string(),
                missing: Stage::Ingest.to_string(),
            });
        }
        CorpusStore::open(&dir)
    }

    fn lexicon(&self) -> Result<(NameLexicon, KeywordLists)> {
        let lex = match &self.cfg.names {
            Some(p) => NameLexicon::load(p)?,
            None => NameLexicon::bundled(),
        };
        let kw = match (&self.cfg.keywords_female, &self.cfg.keywords_male) {
            (Some(f), Some(m)) => KeywordLists::load(f, m)?,
            (None, None) => KeywordLists::bundled(),
            _ => {
                return Err(Error::Config(
                    "set both keywords_female and keywords_male, or neither".into(),
                ))
            }
        };
        Ok((lex, kw))
    }

    /// Admitted categories of a review, sorted.
    fn categories_of(&self, store: &CorpusStore, review: &Review) -> Vec<String> {
        store
            .product_of(review)
            .map(|p| p.categories.iter().filter(|c| self.cfg.admits(c)).cloned().collect())
            .unwrap_or_default()
    }

    pub fn run(&self, stage: Stage) -> Result<StageReport> {
        std::fs::create_dir_all(&self.cfg.out_dir).map_err(|e| Error::io(&self.cfg.out_dir, e))?;
        let report = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Signal => self.signal()?,
            Stage::Train => self.train()?,
            Stage::Predict => self.predict()?,
            Stage::Features => self.features()?,
            Stage::Match => self.matching()?,
            Stage::Estimate => self.estimate()?,
            Stage::Report => self.report()?,
            Stage::Synth => self.synth()?,
        };
        let path = summary_path(&self.cfg.out_dir, stage);
        let mut body = serde_json::to_string_pretty(&report)?;
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        Ok(report)
    }

    /// Every analysis stage in order.
    pub fn run_all(&self) -> Result<Vec<StageReport>> {
        Stage::PIPELINE.iter().map(|&s| self.run(s)).collect()
    }

    fn ingest(&self) -> Result<StageReport> {
        let input = |p: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
            let p = p
                .clone()
                .ok_or_else(|| Error::Config(format!("ingest needs `{key}` (config key or --{key})")))?;
            if !p.exists() {
                return Err(Error::Config(format!("{key} file {} does not exist", p.display())));
            }
            Ok(p)
        };
        let reviews = input(&self.cfg.reviews, "reviews")?;
        let products = input(&self.cfg.products, "products")?;
        let (store, ingest) = ingest_corpus(open_input(&reviews)?, open_input(&products)?)?;
        store.save(&self.cfg.store_dir())?;
        let mut r = StageReport::new(Stage::Ingest);
        r.input("reviews", reviews.display().to_string())
            .input("products", products.display().to_string())
            .input("review_lines", ingest.review_lines)
            .input("product_lines", ingest.product_lines)
            .output("admitted_reviews", ingest.admitted_count)
            .output("skipped_reviews", ingest.skipped_count)
            .output("orphan_reviews", ingest.orphan_count)
            .output("skipped_products", ingest.product_skipped)
            .output("duplicate_products", ingest.duplicate_products)
            .output("sample_errors", &ingest.sample_errors)
            .output("stats", corpus_stats(&store));
        Ok(r)
    }

    fn signal(&self) -> Result<StageReport> {
        let store = self.require_store(Stage::Signal)?;
        let (lex, kw) = self.lexicon()?;
        let signals = reviewer_signals(&store, &lex, &kw);
        let path = self.out(files::SIGNALS);
        let mut w = csv_writer(&path)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &signals {
            *counts.entry(s.signal.as_str()).or_default() += 1;
            w.serialize(SignalRow {
                reviewer_id: s.reviewer_id.clone(),
                user_name: s.user_name.clone(),
                signal: s.signal.as_str().into(),
            })?;
        }
        flush(w, &path)?;
        let mut r = StageReport::new(Stage::Signal);
        r.input("reviewers", signals.len()).output("signals", counts);
        Ok(r)
    }

    fn load_signals(&self, stage: Stage) -> Result<BTreeMap<String, GenderSignal>> {
        let path = self.out(files::SIGNALS);
        self.require(stage, &path, Stage::Signal)?;
        read_csv::<SignalRow>(&path)?
            .into_iter()
            .map(|row| Ok((row.reviewer_id, row.signal.parse()?)))
            .collect()
    }

    /// Reviews that fall in at least one admitted category.
    fn admitted<'a>(&self, store: &'a CorpusStore) -> Vec<&'a Review> {
        store
            .reviews()
            .iter()
            .filter(|r| !self.categories_of(store, r).is_empty())
            .collect()
    }

    fn train(&self) -> Result<StageReport> {
        let store = self.require_store(Stage::Train)?;
        let signals = self.load_signals(Stage::Train)?;
        let mut labeled: Vec<LabeledReview> = self
            .admitted(&store)
            .into_iter()
            .filter_map(|r| {
                let label = signals.get(&r.reviewer_id)?.label()?;
                Some(LabeledReview {
                    review_id: r.review_id,
                    reviewer_id: r.reviewer_id.clone(),
                    text: r.text.clone(),
                    label,
                })
            })
            .collect();
        let available = labeled.len();
        if self.cfg.max_train_reviews > 0 && labeled.len() > self.cfg.max_train_reviews {
            let mut rng = rng_for(self.cfg.seed, "train/cap");
            let mut keep = index::sample(&mut rng, labeled.len(), self.cfg.max_train_reviews).into_vec();
            keep.sort_unstable();
            labeled = keep.into_iter().map(|i| labeled[i].clone()).collect();
        }
        let (train, holdout) =
            split_by_user(labeled, |r| r.reviewer_id.as_str(), self.cfg.train_fraction, self.cfg.seed)?;
        let mut hp = self.cfg.hp.clone();
        hp.seed = self.cfg.seed;
        hp.validate()?;
        let (model, log) = cnn_train(&train, &holdout, &hp)?;
        checkpoint::save(&model, &self.out(files::MODEL))?;
        let log_path = self.out(files::TRAINING_LOG);
        std::fs::write(&log_path, log.to_csv()).map_err(|e| Error::io(&log_path, e))?;

        let probs: Vec<f64> = holdout.iter().map(|r| predict_text(&model, &r.text)).collect();
        let eval = evaluate(&holdout, &probs);

        // interpretable baseline on the same training split
        let baseline = train_logreg_baseline(
            &train,
            &FeatureConfig {
                seed: self.cfg.seed,
                ..FeatureConfig::default()
            },
        );
        let tokens_path = self.out(files::BASELINE_TOKENS);
        let mut w = csv_writer(&tokens_path)?;
        w.write_record(["token", "weight"])?;
        let mut baseline_accuracy = None;
        if let Ok(model) = &baseline {
            let mut ranked: Vec<(&String, f64)> = model.vocabulary.iter().zip(model.weights.iter().copied()).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            // 20 most male-leaning, then 20 most female-leaning
            let n = ranked.len();
            let head = n.min(20);
            for i in (0..head).chain(n.saturating_sub(20).max(head)..n) {
                w.write_record([ranked[i].0.as_str(), &format!("{:.6}", ranked[i].1)])?;
            }
            if !holdout.is_empty() {
                let correct = holdout
                    .iter()
                    .filter(|r| u8::from(model.predict(&r.text) >= 0.5) == r.label)
                    .count();
                baseline_accuracy = Some(correct as f64 / holdout.len() as f64);
            }
        }
        flush(w, &tokens_path)?;

        let mut r = StageReport::new(Stage::Train);
        r.input("signaled_reviews", available)
            .input("train_reviews", train.len())
            .input("holdout_reviews", holdout.len())
            .input("hyperparameters", &hp)
            .output("parameters", model.parameter_count())
            .output("epochs", log.epochs.len())
            .output("selected_epoch", log.selected_epoch)
            .output("final_loss", log.epochs.last().map(|e| e.mean_loss))
            .output("holdout", &eval)
            .output("baseline_holdout_accuracy", baseline_accuracy);
        Ok(r)
    }

    fn predict(&self) -> Result<StageReport> {
        let store = self.require_store(Stage::Predict)?;
        let signals = self.load_signals(Stage::Predict)?;
        let model_path = self.out(files::MODEL);
        self.require(Stage::Predict, &model_path, Stage::Train)?;
        let model = checkpoint::load(&model_path)?;

        let mut probs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let pred_path = self.out(files::PREDICTIONS);
        let mut w = csv_writer(&pred_path)?;
        w.write_record(["review_id", "reviewer_id", "p_male"])?;
        let mut predicted = 0usize;
        for r in self.admitted(&store) {
            if signals.get(&r.reviewer_id) != Some(&GenderSignal::NoSignal) {
                continue;
            }
            let p = predict_text(&model, &r.text);
            w.write_record([r.review_id.to_string(), r.reviewer_id.clone(), format!("{p:.6}")])?;
            probs.entry(&r.reviewer_id).or_default().push(p);
            predicted += 1;
        }
        flush(w, &pred_path)?;

        let groups_path = self.out(files::GROUPS);
        let mut w = csv_writer(&groups_path)?;
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (reviewer_id, &signal) in &signals {
            let label = probs
                .get(reviewer_id.as_str())
                .map(|ps| aggregate_user_label(ps, self.cfg.threshold));
            let perf = label.as_ref().map_or(Performance::Indeterminate, |l| l.label);
            let group = assign_group(signal, perf);
            *counts.entry(group.tag()).or_default() += 1;
            w.serialize(GroupRow {
                reviewer_id: reviewer_id.clone(),
                signal: signal.as_str().into(),
                performance: label.as_ref().map_or("", |l| l.label.as_str()).into(),
                male_votes: label.as_ref().map_or(0, |l| l.male_votes),
                female_votes: label.as_ref().map_or(0, |l| l.female_votes),
                abstentions: label.as_ref().map_or(0, |l| l.abstentions),
                group: group.tag().into(),
            })?;
        }
        flush(w, &groups_path)?;
        let mut r = StageReport::new(Stage::Predict);
        r.input("reviewers", signals.len())
            .input("threshold", self.cfg.threshold.value())
            .output("predicted_reviews", predicted)
            .output("reviewers_by_group", counts);
        Ok(r)
    }

    fn load_groups(&self, stage: Stage) -> Result<HashMap<String, ReviewerGroup>> {
        let path = self.out(files::GROUPS);
        self.require(stage, &path, Stage::Predict)?;
        read_csv::<GroupRow>(&path)?
            .into_iter()
            .map(|row| Ok((row.reviewer_id, row.group.parse()?)))
            .collect()
    }

    fn features(&self) -> Result<StageReport> {
        let store = self.require_store(Stage::Features)?;
        let lexicon = match &self.cfg.sentiment {
            Some(p) => SentimentLexicon::load(p)?,
            None => SentimentLexicon::bundled(),
        };
        let path = self.out(files::FEATURES);
        let mut w = csv_writer(&path)?;
        let (mut reviews, mut rows) = (0usize, 0usize);
        let mut per_category: BTreeMap<String, usize> = BTreeMap::new();
        for r in store.reviews() {
            let cats = self.categories_of(&store, r);
            if cats.is_empty() {
                continue;
            }
            reviews += 1;
            let v = confounder_vector(r, &lexicon);
            for category in cats {
                rows += 1;
                *per_category.entry(category.clone()).or_default() += 1;
                w.serialize(FeatureRow {
                    review_id: r.review_id,
                    timestamp_days: v.timestamp_days,
                    length_words: v.length_words,
                    readability: v.readability,
                    sentiment: v.sentiment,
                    rating: v.rating,
                    category,
                })?;
            }
        }
        flush(w, &path)?;
        let mut out = StageReport::new(Stage::Features);
        out.input("store_reviews", store.len())
            .output("reviews", reviews)
            .output("rows", rows)
            .output("rows_by_category", per_category);
        Ok(out)
    }

    fn matching(&self) -> Result<StageReport> {
        let feature_path = self.out(files::FEATURES);
        self.require(Stage::Match, &feature_path, Stage::Features)?;
        let groups = self.load_groups(Stage::Match)?;
        let store = self.require_store(Stage::Match)?;
        let rows: Vec<FeatureRow> = read_csv(&feature_path)?;

        let mut features: HashMap<u64, ConfounderVector> = HashMap::new();
        let mut populations: BTreeMap<String, CategoryPopulation> = BTreeMap::new();
        for row in rows {
            let v = ConfounderVector {
                timestamp_days: row.timestamp_days,
                length_words: row.length_words,
                readability: row.readability,
                sentiment: row.sentiment,
                rating: row.rating,
            };
            features.insert(row.review_id, v);
            let Some(review) = store.review(row.review_id) else {
                return Err(Error::Validation(format!("feature row for unknown review {}", row.review_id)));
            };
            let group = groups.get(&review.reviewer_id).copied().unwrap_or(ReviewerGroup::Unclassified);
            let pop = populations.entry(row.category.clone()).or_insert_with(|| CategoryPopulation {
                category: row.category.clone(),
                members: Vec::new(),
            });
            if group != ReviewerGroup::Unclassified {
                pop.members.push((row.review_id, group, v));
            }
        }
        for p in populations.values_mut() {
            p.members.sort_by_key(|m| m.0);
        }

        let covariance = if self.cfg.global_covariance {
            let mut ids: Vec<(&u64, &ConfounderVector)> = features.iter().collect();
            ids.sort_by_key(|e| *e.0);
            let points: Vec<Point> = ids
                .into_iter()
                .filter(|(id, _)| {
                    store
                        .review(**id)
                        .and_then(|r| groups.get(&r.reviewer_id))
                        .is_some_and(|g| *g != ReviewerGroup::Unclassified)
                })
                .map(|(_, v)| v.to_array())
                .collect();
            CovarianceMode::Global(covariance_of(&points)?)
        } else {
            CovarianceMode::PerCategory
        };
        let mcfg = MatchConfig {
            sample_size: self.cfg.match_n,
            seed: self.cfg.seed,
            ridge: self.cfg.ridge,
            covariance,
        };

        let pairs_path = self.out(files::PAIRS);
        let mut pw = csv_writer(&pairs_path)?;
        let balance_path = self.out(files::BALANCE);
        let mut bw = csv_writer(&balance_path)?;
        bw.write_record([
            "pair_group", "category", "feature", "bin", "lower", "upper", "group", "count", "mean", "variance",
        ])?;
        let mut summary = Vec::new();
        let mut total_pairs = 0usize;
        for pop in populations.values() {
            for pair in PairGroup::ALL {
                let (ga, gb) = pair.groups();
                let mut entry = json!({
                    "category": pop.category,
                    "pair_group": pair.tag(),
                    "pool_sizes": { ga.tag(): pop.count(ga), gb.tag(): pop.count(gb) },
                });
                if pop.count(ga) + pop.count(gb) == 0 {
                    entry["status"] = json!("unmatched category: both pools empty");
                    summary.push(entry);
                    continue;
                }
                let outcome = sample_and_match(pop, pair, &mcfg)?;
                entry["sampled"] = json!(outcome.sampled);
                entry["pairs"] = json!(outcome.pairs.len());
                entry["unmatched"] = json!(outcome.unmatched);
                summary.push(entry);
                total_pairs += outcome.pairs.len();
                for p in &outcome.pairs {
                    pw.serialize(PairRow {
                        pair_group: p.pair_group.tag().into(),
                        category: p.category.clone(),
                        treated_id: p.treated_id,
                        control_id: p.control_id,
                        distance: p.distance,
                    })?;
                }
                if outcome.pairs.is_empty() {
                    continue;
                }
                for f in 0..DIM {
                    let b = balance_report(&outcome.pairs, f, &features, self.cfg.balance_bins)?;
                    for side in &b.sides {
                        for (i, count) in side.counts.iter().enumerate() {
                            bw.write_record([
                                pair.tag().to_string(),
                                pop.category.clone(),
                                b.feature.clone(),
                                (i + 1).to_string(),
                                b.edges[i].to_string(),
                                b.edges[i + 1].to_string(),
                                side.group.tag().to_string(),
                                count.to_string(),
                                side.mean.to_string(),
                                side.variance.to_string(),
                            ])?;
                        }
                    }
                }
            }
        }
        if total_pairs == 0 {
            // serialize() writes the header only with the first row
            pw.write_record(["pair_group", "category", "treated_id", "control_id", "distance"])?;
        }
        flush(pw, &pairs_path)?;
        flush(bw, &balance_path)?;
        let mut r = StageReport::new(Stage::Match);
        r.input("feature_reviews", features.len())
            .input("sample_size", self.cfg.match_n)
            .input("covariance", if self.cfg.global_covariance { "global" } else { "per-category" })
            .output("pairs", total_pairs)
            .output("by_category", summary);
        Ok(r)
    }

    fn load_pairs(&self, stage: Stage, groups: &HashMap<String, ReviewerGroup>, store: &CorpusStore) -> Result<Vec<MatchedPair>> {
        let path = self.out(files::PAIRS);
        self.require(stage, &path, Stage::Match)?;
        read_csv::<PairRow>(&path)?
            .into_iter()
            .map(|row| {
                let treated_group = store
                    .review(row.treated_id)
                    .and_then(|r| groups.get(&r.reviewer_id))
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("pair review {} has no group", row.treated_id)))?;
                Ok(MatchedPair {
                    pair_group: row.pair_group.parse()?,
                    category: row.category,
                    treated_id: row.treated_id,
                    control_id: row.control_id,
                    treated_group,
                    distance: row.distance,
                })
            })
            .collect()
    }

    fn estimate(&self) -> Result<StageReport> {
        let pairs_path = self.out(files::PAIRS);
        self.require(Stage::Estimate, &pairs_path, Stage::Match)?;
        let store = self.require_store(Stage::Estimate)?;
        let groups = self.load_groups(Stage::Estimate)?;
        let pairs = self.load_pairs(Stage::Estimate, &groups, &store)?;
        let helpfulness: HashMap<u64, i64> = store.reviews().iter().map(|r| (r.review_id, r.helpfulness())).collect();

        let mut by_key: BTreeMap<(String, PairGroup), Vec<MatchedPair>> = BTreeMap::new();
        for p in pairs {
            by_key.entry((p.category.clone(), p.pair_group)).or_default().push(p);
        }
        let mut estimates = Vec::new();
        for ((category, pair), ps) in &by_key {
            let outcomes = pair_outcomes(ps, &helpfulness)?;
            estimates.push(bootstrap_advantage(&outcomes, *pair, category, self.cfg.bootstrap_b, self.cfg.seed)?);
        }
        let aggregate = aggregate_estimates(&estimates);
        let (placements, skipped) = quadrant_classify(&estimates);
        let all: Vec<AdvantageEstimate> = estimates.iter().cloned().chain(aggregate.iter().cloned()).collect();
        write_estimates_csv(create(&self.out(files::ESTIMATES))?, &all)?;
        write_quadrants_csv(create(&self.out(files::QUADRANTS))?, &placements)?;
        let mut r = StageReport::new(Stage::Estimate);
        r.input("pairs", by_key.values().map(Vec::len).sum::<usize>())
            .input("bootstrap_b", self.cfg.bootstrap_b)
            .output("estimates", estimates.len())
            .output("aggregate_rows", aggregate.len())
            .output("quadrants", placements.len())
            .output("quadrant_skipped_categories", skipped);
        Ok(r)
    }

    fn report(&self) -> Result<StageReport> {
        let est_path = self.out(files::ESTIMATES);
        self.require(Stage::Report, &est_path, Stage::Estimate)?;
        let store = self.require_store(Stage::Report)?;
        let groups = self.load_groups(Stage::Report)?;

        let mut by_group: BTreeMap<ReviewerGroup, Vec<&Review>> = BTreeMap::new();
        for r in self.admitted(&store) {
            if let Some(&g) = groups.get(&r.reviewer_id) {
                if g != ReviewerGroup::Unclassified {
                    by_group.entry(g).or_default().push(r);
                }
            }
        }
        let mut curves = Vec::new();
        for g in ReviewerGroup::TREATMENT {
            let reviews = by_group.get(&g).map(Vec::as_slice).unwrap_or(&[]);
            for m in Metric::ALL {
                curves.push(rank_curve(g, reviews, m, self.cfg.rank_k, self.cfg.seed)?);
            }
        }
        write_rank_curves_csv(create(&self.out(files::RANK_CURVES))?, &curves)?;

        let mut rows: Vec<csv::StringRecord> = csv::Reader::from_path(&est_path)?
            .records()
            .collect::<std::result::Result<_, _>>()?;
        let (aggregate, per_category): (Vec<_>, Vec<_>) = rows.drain(..).partition(|r| &r[1] == ALL_CATEGORIES);
        let table = summary_table(&per_category, &aggregate);
        let table_path = self.out(files::SUMMARY_TABLE);
        std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;

        let mut r = StageReport::new(Stage::Report);
        r.input("estimate_rows", per_category.len() + aggregate.len())
            .output("summary_rows", per_category.len())
            .output("aggregate_rows", aggregate.len())
            .output("rank_curve_points", curves.iter().map(|c| c.points.len()).sum::<usize>())
            .output(
                "files",
                [
                    files::ESTIMATES,
                    files::QUADRANTS,
                    files::RANK_CURVES,
                    files::BALANCE,
                    files::PAIRS,
                    files::SUMMARY_TABLE,
                ],
            );
        Ok(r)
    }

    fn synth(&self) -> Result<StageReport> {
        let s = &self.cfg.synth;
        let cats: Vec<CategorySpec> = s
            .categories
            .iter()
            .map(|(name, a)| CategorySpec::uniform(name, s.per_group, s.base_mean, *a))
            .collect();
        let mut spec = SynthSpec::with_categories(cats, self.cfg.seed);
        spec.overlap = s.overlap;
        spec.noise = s.noise;
        spec.reviews_per_reviewer = s.reviews_per_reviewer;
        let dir = self.cfg.synth_dir();
        let truth = write_corpus(&spec, &dir)?;
        let mut r = StageReport::new(Stage::Synth);
        r.input("categories", s.categories.len())
            .input("per_group", s.per_group)
            .output("directory", dir.display().to_string())
            .output("reviews", truth.reviews.len())
            .output("planted", &truth.planted);
        Ok(r)
    }
}

/// Fixed-width table of per-category advantages, aggregate rows last.
pub fn summary_table(per_category: &[csv::StringRecord], aggregate: &[csv::StringRecord]) -> String {
    let mut s = String::new();
    let header = ["pair", "category", "favoured", "advantage %", "std err", "pairs", "flag"];
    let line = |s: &mut String, r: [&str; 7]| {
        writeln!(s, "{:<6} {:<28} {:<8} {:>12} {:>10} {:>8} {}", r[0], r[1], r[2], r[3], r[4], r[5], r[6])
            .expect("write to string");
    };
    line(&mut s, header);
    let row = |s: &mut String, r: &csv::StringRecord| {
        let flag = if &r[6] == "true" { "degenerate" } else { "" };
        line(s, [&r[0], &r[1], &r[2], &r[3], &r[4], &r[5], flag]);
    };
    for r in per_category {
        row(&mut s, r);
    }
    if !aggregate.is_empty() {
        s.push('\n');
        for r in aggregate {
            row(&mut s, r);
        }
    }
    s
}
