//! Bag-of-words logistic regression baseline with exact coefficient attribution.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::LabeledReview;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Minimum number of documents a token must appear in.
    pub min_doc_count: usize,
    /// Keep at most this many tokens (most frequent first).
    pub max_features: usize,
    pub l2: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the epoch loss improves by less than this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            min_doc_count: 2,
            max_features: 20_000,
            l2: 1e-4,
            learning_rate: 0.1,
            max_epochs: 50,
            tolerance: 1e-5,
            seed: 1,
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub vocabulary: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl LinearModel {
    fn new(vocabulary: Vec<String>) -> Self {
        let index = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let n = vocabulary.len();
        LinearModel {
            vocabulary,
            weights: vec![0.0; n],
            bias: 0.0,
            index,
        }
    }

    pub fn weight_of(&self, token: &str) -> Option<f64> {
        self.index.get(token).map(|&i| self.weights[i])
    }

    fn features(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokenize(text) {
            if let Some(&i) = self.index.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    fn logit(&self, x: &[(usize, f64)]) -> f64 {
        self.bias + x.iter().map(|&(i, v)| self.weights[i] * v).sum::<f64>()
    }

    /// P(male).
    pub fn predict(&self, text: &str) -> f64 {
        sigmoid(self.logit(&self.features(text)))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn train_logreg_baseline(labeled: &[LabeledReview], cfg: &FeatureConfig) -> Result<LinearModel> {
    let positives = labeled.iter().filter(|r| r.label == 1).count();
    if positives == 0 || positives == labeled.len() {
        return Err(Error::Config("logistic baseline needs both labels".into()));
    }

    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    for r in labeled {
        let seen: HashSet<String> = tokenize(&r.text).into_iter().collect();
        for t in seen {
            *doc_freq.entry(t).or_default() += 1;
        }
    }
    let mut vocab: Vec<(String, usize)> = doc_freq
        .into_iter()
        .filter(|(_, n)| *n >= cfg.min_doc_count)
        .collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    vocab.truncate(cfg.max_features);
    if vocab.is_empty() {
        return Err(Error::Config("empty vocabulary after frequency cap".into()));
    }
    let mut vocab: Vec<String> = vocab.into_iter().map(|(t, _)| t).collect();
    vocab.sort();
    let mut model = LinearModel::new(vocab);

    let data: Vec<(Vec<(usize, f64)>, f64)> = labeled
        .iter()
        .map(|r| (model.features(&r.text), f64::from(r.label)))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prev = f64::INFINITY;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr = cfg.learning_rate / (1.0 + epoch as f64).sqrt();
        for &i in &order {
            let (x, y) = &data[i];
            let g = sigmoid(model.logit(x)) - y;
            for &(j, v) in x {
                model.weights[j] -= lr * (g * v + cfg.l2 * model.weights[j]);
            }
            model.bias -= lr * g;
        }
        let loss = data
            .iter()
            .map(|(x, y)| {
                let p = sigmoid(model.logit(x)).clamp(1e-12, 1.0 - 1e-12);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / data.len() as f64;
        if (prev - loss).abs() < cfg.tolerance {
            break;
        }
        prev = loss;
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub token: String,
    /// Model coefficient; positive pushes toward male.
    pub weight: f64,
    /// Whether the token pushes toward the class the model predicts for the text.
    pub supports_prediction: bool,
}

/// The `k` distinct in-vocabulary tokens of `text` with the largest absolute
/// coefficient (ties by token).
pub fn explain_tokens(model: &LinearModel, text: &str, k: usize) -> Vec<TokenAttribution> {
    let predicted_male = model.predict(text) >= 0.5;
    let mut seen = HashSet::new();
    let mut out: Vec<TokenAttribution> = tokenize(text)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .filter_map(|t| {
            model.weight_of(&t).map(|w| TokenAttribution {
                supports_prediction: (w > 0.0) == predicted_male,
                token: t,
                weight: w,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.weight
            .abs()
            .total_cmp(&a.weight.abs())
            .then_with(|| a.token.cmp(&b.token))
    });
    out.truncate(k);
    out
}
