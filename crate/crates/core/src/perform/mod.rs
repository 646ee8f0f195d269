//! Gendered writing performance: a character-level CNN trained on reviews
//! whose authors signal gender by name, per-user majority voting, and the
//! final four-way reviewer grouping. A bag-of-words logistic regression serves
//! as the interpretable baseline.

pub mod checkpoint;
pub mod cnn;
pub mod logreg;
pub mod real;
pub mod train;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cnn::{cnn_loss, cnn_loss_and_gradient, CnnModel, HyperParams, ShapePlan, Tensor};
pub use logreg::{explain_tokens, train_logreg_baseline, FeatureConfig, LinearModel, TokenAttribution};
pub use train::{cnn_train, evaluate, predict_review, predict_text, split_by_user, LabeledReview, TrainingLog};
pub use vocab::{quantize_text, CharVocabulary, QuantizedText};

use crate::error::{Error, Result};
use crate::signal::GenderSignal;

pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Vote threshold in (0.5, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteThreshold(f64);

impl VoteThreshold {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.5 && t <= 1.0 {
            Ok(VoteThreshold(t))
        } else {
            Err(Error::Config(format!("vote threshold {t} outside (0.5, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for VoteThreshold {
    fn default() -> Self {
        VoteThreshold(DEFAULT_THRESHOLD)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Performance {
    PerformMale,
    PerformFemale,
    Indeterminate,
}

impl Performance {
    pub fn as_str(self) -> &'static str {
        match self {
            Performance::PerformMale => "perform_male",
            Performance::PerformFemale => "perform_female",
            Performance::Indeterminate => "indeterminate",
        }
    }
}

impl FromStr for Performance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perform_male" => Ok(Performance::PerformMale),
            "perform_female" => Ok(Performance::PerformFemale),
            "indeterminate" => Ok(Performance::Indeterminate),
            other => Err(Error::Validation(format!("unknown performance label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformanceLabel {
    pub label: Performance,
    pub male_votes: usize,
    pub female_votes: usize,
    pub abstentions: usize,
}

/// Each probability votes male at `p >= t`, female at `p <= 1 - t`, and
/// abstains otherwise. Majority of cast votes wins; ties and no votes are
/// indeterminate.
pub fn aggregate_user_label(probabilities: &[f64], threshold: VoteThreshold) -> PerformanceLabel {
    let t = threshold.value();
    let mut out = PerformanceLabel {
        label: Performance::Indeterminate,
        male_votes: 0,
        female_votes: 0,
        abstentions: 0,
    };
    for &p in probabilities {
        if p >= t {
            out.male_votes += 1;
        } else if p <= 1.0 - t {
            out.female_votes += 1;
        } else {
            out.abstentions += 1;
        }
    }
    out.label = match out.male_votes.cmp(&out.female_votes) {
        std::cmp::Ordering::Greater => Performance::PerformMale,
        std::cmp::Ordering::Less => Performance::PerformFemale,
        std::cmp::Ordering::Equal => Performance::Indeterminate,
    };
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReviewerGroup {
    SignalingMan,
    SignalingWoman,
    PerformingMan,
    PerformingWoman,
    Unclassified,
}

impl ReviewerGroup {
    pub const TREATMENT: [ReviewerGroup; 4] = [
        ReviewerGroup::SignalingMan,
        ReviewerGroup::SignalingWoman,
        ReviewerGroup::PerformingMan,
        ReviewerGroup::PerformingWoman,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ReviewerGroup::SignalingMan => "SM",
            ReviewerGroup::SignalingWoman => "SW",
            ReviewerGroup::PerformingMan => "PM",
            ReviewerGroup::PerformingWoman => "PW",
            ReviewerGroup::Unclassified => "UN",
        }
    }

    pub fn is_signaling(self) -> bool {
        matches!(self, ReviewerGroup::SignalingMan | ReviewerGroup::SignalingWoman)
    }
}

impl fmt::Display for ReviewerGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ReviewerGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SM" => Ok(ReviewerGroup::SignalingMan),
            "SW" => Ok(ReviewerGroup::SignalingWoman),
            "PM" => Ok(ReviewerGroup::PerformingMan),
            "PW" => Ok(ReviewerGroup::PerformingWoman),
            "UN" => Ok(ReviewerGroup::Unclassified),
            other => Err(Error::Validation(format!("unknown group `{other}`"))),
        }
    }
}

/// The name signal dominates; performance only places unsignaled reviewers.
pub fn assign_group(signal: GenderSignal, perf: Performance) -> ReviewerGroup {
    match (signal, perf) {
        (GenderSignal::SignalMale, _) => ReviewerGroup::SignalingMan,
        (GenderSignal::SignalFemale, _) => ReviewerGroup::SignalingWoman,
        (GenderSignal::NoSignal, Performance::PerformMale) => ReviewerGroup::PerformingMan,
        (GenderSignal::NoSignal, Performance::PerformFemale) => ReviewerGroup::PerformingWoman,
        (GenderSignal::NoSignal, Performance::Indeterminate) => ReviewerGroup::Unclassified,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vote(ps: &[f64]) -> Performance {
        aggregate_user_label(ps, VoteThreshold::default()).label
    }

    #[test]
    fn vote_examples() {
        let l = aggregate_user_label(&[0.9, 0.8, 0.2], VoteThreshold::default());
        assert_eq!((l.label, l.male_votes, l.female_votes), (Performance::PerformMale, 2, 1));
        assert_eq!(vote(&[0.9, 0.1]), Performance::Indeterminate);
        assert_eq!(vote(&[0.6, 0.55]), Performance::Indeterminate);
        assert_eq!(vote(&[]), Performance::Indeterminate);
        assert_eq!(vote(&[0.3, 0.5]), Performance::PerformFemale);
        assert_eq!(vote(&[0.7]), Performance::PerformMale);
    }

    #[test]
    fn threshold_range() {
        assert!(VoteThreshold::new(0.5).is_err());
        assert!(VoteThreshold::new(1.01).is_err());
        assert!(VoteThreshold::new(1.0).is_ok());
    }

    #[test]
    fn group_examples() {
        use GenderSignal::*;
        assert_eq!(assign_group(SignalMale, Performance::PerformFemale), ReviewerGroup::SignalingMan);
        assert_eq!(assign_group(NoSignal, Performance::PerformMale), ReviewerGroup::PerformingMan);
        assert_eq!(assign_group(NoSignal, Performance::PerformFemale), ReviewerGroup::PerformingWoman);
        assert_eq!(assign_group(NoSignal, Performance::Indeterminate), ReviewerGroup::Unclassified);
        assert_eq!(assign_group(SignalFemale, Performance::Indeterminate), ReviewerGroup::SignalingWoman);
    }

    proptest! {
        #[test]
        fn signaling_iff_signal(s in 0usize..3, p in 0usize..3) {
            let signal = [GenderSignal::SignalMale, GenderSignal::SignalFemale, GenderSignal::NoSignal][s];
            let perf = [Performance::PerformMale, Performance::PerformFemale, Performance::Indeterminate][p];
            prop_assert_eq!(assign_group(signal, perf).is_signaling(), signal != GenderSignal::NoSignal);
        }

        #[test]
        fn votes_partition_inputs(ps in proptest::collection::vec(0.0f64..=1.0, 0..20)) {
            let l = aggregate_user_label(&ps, VoteThreshold::default());
            prop_assert_eq!(l.male_votes + l.female_votes + l.abstentions, ps.len());
        }
    }
}
