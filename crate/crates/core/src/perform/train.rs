use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cnn::{CnnModel, HyperParams, Tensor};
use super::vocab::{CharVocabulary, QuantizedText};
use crate::corpus::Review;
use crate::error::{Error, Result};
use crate::seeding::mix64;

/// A review with its author's signaled gender as the target (1 = male).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledReview {
    pub review_id: u64,
    pub reviewer_id: String,
    pub text: String,
    pub label: u8,
}

/// Stable seeded hash of a reviewer id mapped to [0, 1).
pub fn reviewer_unit_hash(reviewer_id: &str, seed: u64) -> f64 {
    // FNV-1a over the bytes, then mixed with the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in reviewer_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let z = mix64(h ^ mix64(seed));
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Splits by reviewer: each reviewer's reviews land wholly on one side, the
/// train side receiving roughly `fraction` of the reviewers.
pub fn split_by_user<T, K>(items: Vec<T>, reviewer: K, fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)>
where
    K: Fn(&T) -> &str,
{
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} outside (0, 1)")));
    }
    Ok(items
        .into_iter()
        .partition(|item| reviewer_unit_hash(reviewer(item), seed) < fraction))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub holdout_accuracy: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were returned: the best holdout accuracy, later
    /// epochs winning ties; the last epoch when there is no holdout.
    #[serde(default)]
    pub selected_epoch: usize,
}

impl TrainingLog {
    /// CSV with columns `epoch,mean_loss,holdout_accuracy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,holdout_accuracy\n");
        for e in &self.epochs {
            let acc = e.holdout_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            s.push_str(&format!("{},{:.9},{}\n", e.epoch, e.mean_loss, acc));
        }
        s
    }
}

fn quantize_for(hp: &HyperParams, text: &str) -> QuantizedText {
    CharVocabulary::default().quantize(text, hp.window, hp.reverse_text)
}

/// Minibatch SGD with momentum; the step halves whenever an epoch's mean
/// training loss fails to improve on the best so far. Returns the weights
/// of the epoch with the best holdout accuracy.
pub fn cnn_train(
    train: &[LabeledReview],
    holdout: &[LabeledReview],
    hp: &HyperParams,
) -> Result<(CnnModel<f32>, TrainingLog)> {
    let mut model = CnnModel::<f32>::new(hp.clone())?;
    let mut log = TrainingLog::default();
    if hp.epochs == 0 {
        return Ok((model, log));
    }
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let positives = train.iter().filter(|r| r.label == 1).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::Config("training set needs both labels".into()));
    }
    if let Some(bad) = train.iter().find(|r| r.label > 1) {
        return Err(Error::Config(format!("review {} has label {}", bad.review_id, bad.label)));
    }

    let vocab = CharVocabulary::default();
    let inputs: Vec<QuantizedText> = train
        .iter()
        .map(|r| vocab.quantize(&r.text, hp.window, hp.reverse_text))
        .collect();
    let holdout_inputs: Vec<QuantizedText> = holdout
        .iter()
        .map(|r| vocab.quantize(&r.text, hp.window, hp.reverse_text))
        .collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x5348_5546_464c_45);
    let mut grads = model.zero_grads();
    let mut velocity: Vec<Tensor<f32>> = model.zero_grads();
    let mut lr = hp.learning_rate;
    let mut best = f64::INFINITY;
    let momentum = hp.momentum as f32;
    let mut kept: Option<(f64, CnnModel<f32>)> = None;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(hp.batch_size).enumerate() {
            grads.iter_mut().for_each(Tensor::fill_zero);
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(hp.seed);
            dropout_rng.set_stream(((epoch as u64) << 32) | b as u64);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += model.accumulate_gradient(&inputs[i], train[i].label, scale, Some(&mut dropout_rng), &mut grads)?;
            }
            let mut step = lr as f32;
            if hp.clip_norm > 0.0 {
                let norm = grads
                    .iter()
                    .flat_map(|g| &g.data)
                    .map(|&v| f64::from(v) * f64::from(v))
                    .sum::<f64>()
                    .sqrt();
                if norm > hp.clip_norm {
                    step *= (hp.clip_norm / norm) as f32;
                }
            }
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grads) {
                for ((pv, vv), &gv) in p.data.iter_mut().zip(&mut v.data).zip(&g.data) {
                    *vv = momentum * *vv - step * gv;
                    *pv += *vv;
                }
            }
        }
        let mean_loss = total / train.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {}", epoch + 1)));
        }
        let holdout_accuracy = (!holdout.is_empty()).then(|| {
            let correct = holdout_inputs
                .iter()
                .zip(holdout)
                .filter(|(x, r)| {
                    let p = model.predict(x).expect("window checked");
                    u8::from(p >= 0.5) == r.label
                })
                .count();
            correct as f64 / holdout.len() as f64
        });
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            mean_loss,
            holdout_accuracy,
            learning_rate: lr,
        });
        let score = holdout_accuracy.unwrap_or(f64::NEG_INFINITY);
        if kept.as_ref().is_none_or(|(s, _)| score >= *s) {
            kept = Some((score, model.clone()));
            log.selected_epoch = epoch + 1;
        }
        if mean_loss < best {
            best = mean_loss;
        } else {
            lr *= 0.5;
        }
    }
    Ok((kept.map_or(model, |(_, m)| m), log))
}

/// Eval-mode P(male) for a review's text.
pub fn predict_review(model: &CnnModel<f32>, review: &Review) -> f64 {
    predict_text(model, &review.text)
}

pub fn predict_text(model: &CnnModel<f32>, text: &str) -> f64 {
    model
        .predict(&quantize_for(&model.hp, text))
        .expect("quantized to the model window")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reviews: usize,
    pub users: usize,
    pub review_accuracy: f64,
    /// Accuracy when every review takes its author's majority label.
    pub user_vote_accuracy: f64,
}

/// Per-review accuracy at 0.5 and accuracy after each reviewer's reviews
/// take the majority predicted label (ties fall back to the mean probability).
pub fn evaluate(labeled: &[LabeledReview], probabilities: &[f64]) -> Evaluation {
    assert_eq!(labeled.len(), probabilities.len());
    let n = labeled.len();
    let mut per_user: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    let mut correct = 0;
    for (r, &p) in labeled.iter().zip(probabilities) {
        let pred = u8::from(p >= 0.5);
        correct += usize::from(pred == r.label);
        let e = per_user.entry(&r.reviewer_id).or_default();
        if pred == 1 {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
        e.2 += p;
    }
    let user_label: BTreeMap<&str, u8> = per_user
        .iter()
        .map(|(&u, &(m, f, sum))| {
            let label = match m.cmp(&f) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => u8::from(sum / (m + f) as f64 >= 0.5),
            };
            (u, label)
        })
        .collect();
    let user_correct = labeled
        .iter()
        .filter(|r| user_label[r.reviewer_id.as_str()] == r.label)
        .count();
    let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Evaluation {
        reviews: n,
        users: per_user.len(),
        review_accuracy: frac(correct),
        user_vote_accuracy: frac(user_correct),
    }
}
