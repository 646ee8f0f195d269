//! Plain-text `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! override earlier ones, and command-line overrides are applied last.
//! `PipelineConfig::default().to_text()` lists every key with its default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::perform::{HyperParams, VoteThreshold};

/// Short category names mapped to the product category strings matched
/// against product metadata.
pub const CATEGORY_ALIASES: [(&str, &str); 15] = [
    ("Books", "Books"),
    ("Electronics", "Electronics"),
    ("CDs", "CDs & Vinyl"),
    ("Clothing", "Clothing, Shoes & Jewelry"),
    ("Home", "Home & Kitchen"),
    ("Kindle", "Kindle Store"),
    ("Sports", "Sports & Outdoors"),
    ("Cellphone", "Cell Phones & Accessories"),
    ("Toys", "Toys & Games"),
    ("Games", "Video Games"),
    ("Literature", "Literature & Fiction"),
    ("Beauty", "Beauty"),
    ("Health", "Health & Personal Care"),
    ("Movies", "Movies & TV"),
    ("Computers", "Computers & Accessories"),
];

/// Resolves a short alias to its full category name; other names pass through.
pub fn resolve_category(name: &str) -> String {
    CATEGORY_ALIASES
        .iter()
        .find(|(short, _)| short.eq_ignore_ascii_case(name))
        .map_or_else(|| name.to_string(), |(_, full)| full.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    /// Reviews per group per category.
    pub per_group: usize,
    pub base_mean: f64,
    pub overlap: f64,
    pub noise: f64,
    pub reviews_per_reviewer: usize,
    /// Category and its uniform planted advantage in percent.
    pub categories: Vec<(String, f64)>,
    /// Directory the corpus is written to; defaults to `<out_dir>/synth`.
    pub out: Option<PathBuf>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            per_group: 500,
            base_mean: 10.0,
            overlap: 0.3,
            noise: 2.0,
            reviews_per_reviewer: 3,
            categories: vec![
                ("Books".into(), 40.0),
                ("Electronics".into(), -40.0),
                ("Toys & Games".into(), 25.0),
                ("Beauty".into(), 0.0),
            ],
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub reviews: Option<PathBuf>,
    pub products: Option<PathBuf>,
    /// Defaults to `<out_dir>/store`.
    pub store: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub names: Option<PathBuf>,
    pub keywords_female: Option<PathBuf>,
    pub keywords_male: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub hp: HyperParams,
    /// Share of signaling reviewers used for training; the rest is held out.
    pub train_fraction: f64,
    /// Cap on training reviews (0 = no cap), sampled with the global seed.
    pub max_train_reviews: usize,
    pub match_n: usize,
    pub bootstrap_b: usize,
    pub threshold: VoteThreshold,
    /// `None` uses the trace-scaled default.
    pub ridge: Option<f64>,
    pub global_covariance: bool,
    /// `None` admits every category.
    pub categories: Option<Vec<String>>,
    pub rank_k: usize,
    pub balance_bins: usize,
    pub seed: u64,
    pub synth: SynthSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            reviews: None,
            products: None,
            store: None,
            out_dir: PathBuf::from("genderlens-out"),
            names: None,
            keywords_female: None,
            keywords_male: None,
            sentiment: None,
            hp: HyperParams::default(),
            train_fraction: 0.9,
            max_train_reviews: 0,
            match_n: crate::matching::DEFAULT_SAMPLE_SIZE,
            bootstrap_b: crate::effects::DEFAULT_BOOTSTRAP,
            threshold: VoteThreshold::default(),
            ridge: None,
            global_covariance: false,
            categories: Some(CATEGORY_ALIASES.iter().map(|(_, full)| full.to_string()).collect()),
            rank_k: 1_000_000,
            balance_bins: 20,
            seed: 1,
            synth: SynthSettings::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(';').map(str::trim).filter(|s| !s.is_empty())
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "reviews" => self.reviews = optional_path(value),
            "products" => self.products = optional_path(value),
            "store" => self.store = optional_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "names" => self.names = optional_path(value),
            "keywords_female" => self.keywords_female = optional_path(value),
            "keywords_male" => self.keywords_male = optional_path(value),
            "sentiment" => self.sentiment = optional_path(value),
            "cnn.preset" => {
                let seed = self.hp.seed;
                self.hp = match value {
                    "desk" => HyperParams::default(),
                    "full" => HyperParams::full_size(),
                    _ => return Err(Error::Config(format!("`cnn.preset`: expected desk or full, got `{value}`"))),
                };
                self.hp.seed = seed;
            }
            "cnn.window" => self.hp.window = parse(key, value)?,
            "cnn.kernel_widths" => {
                let widths: Vec<usize> = value
                    .split(',')
                    .map(|w| parse(key, w.trim()))
                    .collect::<Result<_>>()?;
                self.hp.kernel_widths = widths
                    .try_into()
                    .map_err(|_| Error::Config("`cnn.kernel_widths` needs six comma-separated widths".into()))?;
            }
            "cnn.pool_width" => self.hp.pool_width = parse(key, value)?,
            "cnn.filters" => self.hp.filters = parse(key, value)?,
            "cnn.hidden" => self.hp.hidden = parse(key, value)?,
            "cnn.keep_prob" => self.hp.keep_prob = parse(key, value)?,
            "cnn.batch_size" => self.hp.batch_size = parse(key, value)?,
            "cnn.learning_rate" => self.hp.learning_rate = parse(key, value)?,
            "cnn.momentum" => self.hp.momentum = parse(key, value)?,
            "cnn.epochs" => self.hp.epochs = parse(key, value)?,
            "cnn.reverse_text" => self.hp.reverse_text = parse_bool(key, value)?,
            "cnn.clip_norm" => self.hp.clip_norm = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "max_train_reviews" => self.max_train_reviews = parse(key, value)?,
            "match_n" => self.match_n = parse(key, value)?,
            "bootstrap_b" => self.bootstrap_b = parse(key, value)?,
            "threshold" => self.threshold = VoteThreshold::new(parse(key, value)?)?,
            "ridge" => {
                self.ridge = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "global_covariance" => self.global_covariance = parse_bool(key, value)?,
            "categories" => {
                self.categories = match value {
                    "*" => None,
                    v => Some(list(v).map(resolve_category).collect()),
                }
            }
            "rank_k" => self.rank_k = parse(key, value)?,
            "balance_bins" => self.balance_bins = parse(key, value)?,
            "seed" => {
                self.seed = parse(key, value)?;
                self.hp.seed = self.seed;
            }
            "synth.per_group" => self.synth.per_group = parse(key, value)?,
            "synth.base_mean" => self.synth.base_mean = parse(key, value)?,
            "synth.overlap" => self.synth.overlap = parse(key, value)?,
            "synth.noise" => self.synth.noise = parse(key, value)?,
            "synth.reviews_per_reviewer" => self.synth.reviews_per_reviewer = parse(key, value)?,
            "synth.categories" => {
                self.synth.categories = list(value)
                    .map(|item| {
                        let (name, adv) = item.rsplit_once(':').ok_or_else(|| {
                            Error::Config(format!("`synth.categories`: expected name:advantage, got `{item}`"))
                        })?;
                        Ok((resolve_category(name.trim()), parse(key, adv.trim())?))
                    })
                    .collect::<Result<_>>()?
            }
            "synth.out" => self.synth.out = optional_path(value),
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn store_dir(&self) -> PathBuf {
        self.store.clone().unwrap_or_else(|| self.out_dir.join("store"))
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.synth.out.clone().unwrap_or_else(|| self.out_dir.join("synth"))
    }

    pub fn admits(&self, category: &str) -> bool {
        self.categories.as_ref().is_none_or(|c| c.iter().any(|x| x == category))
    }

    /// Every key with its current value, in a form [`PipelineConfig::apply_text`] accepts.
    pub fn to_text(&self) -> String {
        let hp = &self.hp;
        let widths: Vec<String> = hp.kernel_widths.iter().map(|w| w.to_string()).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("write to string");
        kv("reviews", show_path(&self.reviews));
        kv("products", show_path(&self.products));
        kv("store", show_path(&self.store));
        kv("out_dir", self.out_dir.display().to_string());
        kv("names", show_path(&self.names));
        kv("keywords_female", show_path(&self.keywords_female));
        kv("keywords_male", show_path(&self.keywords_male));
        kv("sentiment", show_path(&self.sentiment));
        kv("cnn.window", hp.window.to_string());
        kv("cnn.kernel_widths", widths.join(","));
        kv("cnn.pool_width", hp.pool_width.to_string());
        kv("cnn.filters", hp.filters.to_string());
        kv("cnn.hidden", hp.hidden.to_string());
        kv("cnn.keep_prob", hp.keep_prob.to_string());
        kv("cnn.batch_size", hp.batch_size.to_string());
        kv("cnn.learning_rate", hp.learning_rate.to_string());
        kv("cnn.momentum", hp.momentum.to_string());
        kv("cnn.epochs", hp.epochs.to_string());
        kv("cnn.reverse_text", hp.reverse_text.to_string());
        kv("cnn.clip_norm", hp.clip_norm.to_string());
        kv("train_fraction", self.train_fraction.to_string());
        kv("max_train_reviews", self.max_train_reviews.to_string());
        kv("match_n", self.match_n.to_string());
        kv("bootstrap_b", self.bootstrap_b.to_string());
        kv("threshold", self.threshold.value().to_string());
        kv("ridge", self.ridge.map_or("auto".into(), |r| r.to_string()));
        kv("global_covariance", self.global_covariance.to_string());
        kv(
            "categories",
            self.categories.as_ref().map_or("*".into(), |c| c.join("; ")),
        );
        kv("rank_k", self.rank_k.to_string());
        kv("balance_bins", self.balance_bins.to_string());
        kv("seed", self.seed.to_string());
        kv("synth.per_group", self.synth.per_group.to_string());
        kv("synth.base_mean", self.synth.base_mean.to_string());
        kv("synth.overlap", self.synth.overlap.to_string());
        kv("synth.noise", self.synth.noise.to_string());
        kv("synth.reviews_per_reviewer", self.synth.reviews_per_reviewer.to_string());
        let cats: Vec<String> = self.synth.categories.iter().map(|(c, a)| format!("{c}:{a}")).collect();
        kv("synth.categories", cats.join("; "));
        kv("synth.out", show_path(&self.synth.out));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = PipelineConfig::default();
        let mut back = PipelineConfig::default();
        back.set("seed", "99").unwrap();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn default_allow_list_has_fifteen_categories() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.categories.as_ref().unwrap().len(), 15);
        assert!(cfg.admits("Clothing, Shoes & Jewelry"));
        assert!(!cfg.admits("Automotive"));
    }

    #[test]
    fn aliases_and_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text("# comment\ncategories = Toys; Kindle\nseed = 5\n").unwrap();
        assert_eq!(cfg.categories, Some(vec!["Toys & Games".into(), "Kindle Store".into()]));
        assert_eq!((cfg.seed, cfg.hp.seed), (5, 5));
        cfg.apply_override("categories=*").unwrap();
        assert!(cfg.admits("Automotive"));
        assert!(matches!(cfg.set("bogus", "1"), Err(Error::Config(_))));
        assert!(cfg.set("threshold", "0.4").is_err());
        assert!(cfg.apply_text("no equals sign").is_err());
        cfg.set("synth.categories", "Books:40; Electronics:-12.5").unwrap();
        assert_eq!(cfg.synth.categories[1], ("Electronics".to_string(), -12.5));
    }
}
