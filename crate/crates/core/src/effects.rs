//! Helpfulness advantages between matched groups, their bootstrap
//! uncertainty, rank curves and the signaling/performance quadrants.
//!
//! Signs follow the pair-group tag: a positive signed advantage favours the
//! first-named group (`PW` in `PW-PM`).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Review;
use crate::error::{Error, Result};
use crate::matching::{MatchedPair, PairGroup};
use crate::perform::ReviewerGroup;
use crate::seeding::derive_seed;

pub const DEFAULT_BOOTSTRAP: usize = 1_000;
pub const ALL_CATEGORIES: &str = "ALL (unweighted mean)";

/// Helpfulness of both reviews of a matched pair, in tag order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub first: i64,
    pub second: i64,
}

pub fn pair_outcomes(pairs: &[MatchedPair], helpfulness: &HashMap<u64, i64>) -> Result<Vec<PairOutcome>> {
    let h = |id: u64| {
        helpfulness
            .get(&id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("matched review {id} not in corpus")))
    };
    pairs
        .iter()
        .map(|p| {
            let (a, b) = p.ordered_ids();
            Ok(PairOutcome {
                first: h(a)?,
                second: h(b)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    First,
    Second,
}

pub fn group_mean_helpfulness(outcomes: &[PairOutcome], side: Side) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Validation("mean helpfulness over zero pairs".into()));
    }
    let sum: i64 = outcomes
        .iter()
        .map(|o| match side {
            Side::First => o.first,
            Side::Second => o.second,
        })
        .sum();
    Ok(sum as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    /// `None` on equal means.
    pub favored: Option<Side>,
    pub magnitude_pct: f64,
    pub degenerate: bool,
}

impl Advantage {
    /// Positive when the first side is favoured.
    pub fn signed(&self) -> f64 {
        match self.favored {
            Some(Side::First) => self.magnitude_pct,
            Some(Side::Second) => -self.magnitude_pct,
            None => 0.0,
        }
    }
}

/// `|h2 − h1| / min(h1, h2) · 100`; for a non-positive minimum the
/// denominator becomes `(|h1| + |h2|) / 2` and the result is flagged.
pub fn advantage(h1: f64, h2: f64) -> Advantage {
    let favored = if h1 > h2 {
        Some(Side::First)
    } else if h2 > h1 {
        Some(Side::Second)
    } else {
        None
    };
    let gap = (h2 - h1).abs();
    let lo = h1.min(h2);
    if lo > 0.0 {
        return Advantage {
            favored,
            magnitude_pct: gap / lo * 100.0,
            degenerate: false,
        };
    }
    let denom = (h1.abs() + h2.abs()) / 2.0;
    Advantage {
        favored,
        magnitude_pct: if denom > 0.0 { gap / denom * 100.0 } else { 0.0 },
        degenerate: true,
    }
}

fn outcome_advantage(outcomes: &[PairOutcome], picks: impl Iterator<Item = usize>) -> Advantage {
    let (mut s1, mut s2, mut n) = (0i64, 0i64, 0usize);
    for i in picks {
        s1 += outcomes[i].first;
        s2 += outcomes[i].second;
        n += 1;
    }
    advantage(s1 as f64 / n as f64, s2 as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageEstimate {
    pub pair_group: PairGroup,
    pub category: String,
    /// `None` when the mean advantage is exactly zero.
    pub favored_group: Option<ReviewerGroup>,
    pub mean_advantage_pct: f64,
    pub standard_error: f64,
    pub n_pairs: usize,
    /// The fallback normalization was used by the point estimate or a replicate.
    pub degenerate: bool,
    /// Advantage on the full pair set, signed.
    pub point_estimate_pct: f64,
}

impl AdvantageEstimate {
    /// Mean advantage, positive when `group` is favoured.
    pub fn signed_toward(&self, group: ReviewerGroup) -> f64 {
        match self.favored_group {
            Some(g) if g == group => self.mean_advantage_pct,
            Some(_) => -self.mean_advantage_pct,
            None => 0.0,
        }
    }

    /// Mean advantage, positive when the first-named group is favoured.
    pub fn signed(&self) -> f64 {
        self.signed_toward(self.pair_group.groups().0)
    }

    pub fn favored_tag(&self) -> &'static str {
        self.favored_group.map_or("none", ReviewerGroup::tag)
    }
}

/// `b` resamples of size `n` with replacement. Replicate `r` draws from a
/// ChaCha stream numbered `r`, so replicates are order-independent. The
/// reported magnitude is the absolute mean of the signed replicate
/// advantages; the standard error is their standard deviation.
pub fn bootstrap_advantage(
    outcomes: &[PairOutcome],
    pair_group: PairGroup,
    category: &str,
    b: usize,
    seed: u64,
) -> Result<AdvantageEstimate> {
    if outcomes.is_empty() {
        return Err(Error::Validation(format!(
            "no matched pairs for {pair_group} in `{category}`"
        )));
    }
    if b == 0 {
        return Err(Error::Config("bootstrap replicate count must be positive".into()));
    }
    let n = outcomes.len();
    let point = outcome_advantage(outcomes, 0..n);
    let base = derive_seed(seed, &format!("bootstrap/{category}/{}", pair_group.tag()));
    let mut degenerate = point.degenerate;
    let mut reps = Vec::with_capacity(b);
    for r in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(r as u64);
        let a = outcome_advantage(outcomes, (0..n).map(|_| rng.random_range(0..n)));
        degenerate |= a.degenerate;
        reps.push(a.signed());
    }
    let mean = reps.iter().sum::<f64>() / b as f64;
    let (lo, hi) = reps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let standard_error = if b < 2 || lo == hi {
        0.0
    } else {
        (reps.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (b - 1) as f64).sqrt()
    };
    let (first, second) = pair_group.groups();
    let favored_group = if mean > 0.0 {
        Some(first)
    } else if mean < 0.0 {
        Some(second)
    } else {
        None
    };
    Ok(AdvantageEstimate {
        pair_group,
        category: category.to_string(),
        favored_group,
        mean_advantage_pct: mean.abs(),
        standard_error,
        n_pairs: n,
        degenerate,
        point_estimate_pct: point.signed(),
    })
}

/// One row per pair group averaging the signed per-category estimates with
/// equal weight; the standard error assumes independent categories.
pub fn aggregate_estimates(estimates: &[AdvantageEstimate]) -> Vec<AdvantageEstimate> {
    let mut by_pair: BTreeMap<PairGroup, Vec<&AdvantageEstimate>> = BTreeMap::new();
    for e in estimates.iter().filter(|e| e.category != ALL_CATEGORIES) {
        by_pair.entry(e.pair_group).or_default().push(e);
    }
    by_pair
        .into_iter()
        .map(|(pair_group, es)| {
            let k = es.len() as f64;
            let mean = es.iter().map(|e| e.signed()).sum::<f64>() / k;
            let point = es.iter().map(|e| e.point_estimate_pct).sum::<f64>() / k;
            let se = es.iter().map(|e| e.standard_error.powi(2)).sum::<f64>().sqrt() / k;
            let (first, second) = pair_group.groups();
            AdvantageEstimate {
                pair_group,
                category: ALL_CATEGORIES.to_string(),
                favored_group: (mean != 0.0).then_some(if mean > 0.0 { first } else { second }),
                mean_advantage_pct: mean.abs(),
                standard_error: se,
                n_pairs: es.iter().map(|e| e.n_pairs).sum(),
                degenerate: es.iter().any(|e| e.degenerate),
                point_estimate_pct: point,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Upvotes,
    Downvotes,
    Helpfulness,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Upvotes, Metric::Downvotes, Metric::Helpfulness];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Upvotes => "upvotes",
            Metric::Downvotes => "downvotes",
            Metric::Helpfulness => "helpfulness",
        }
    }

    pub fn of(self, r: &Review) -> i64 {
        match self {
            Metric::Upvotes => i64::from(r.upvotes),
            Metric::Downvotes => i64::from(r.downvotes),
            Metric::Helpfulness => r.helpfulness(),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCurve {
    pub group: ReviewerGroup,
    pub metric: Metric,
    /// `(rank, value)` with rank from 1 and values non-increasing.
    pub points: Vec<(usize, i64)>,
}

/// A seeded sample of `min(k, len)` reviews sorted by `metric`, descending.
pub fn rank_curve(group: ReviewerGroup, reviews: &[&Review], metric: Metric, k: usize, seed: u64) -> Result<RankCurve> {
    if k == 0 {
        return Err(Error::Config("rank curve sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("rank/{}/{}", group.tag(), metric.as_str())));
    let take = k.min(reviews.len());
    let mut values: Vec<i64> = index::sample(&mut rng, reviews.len(), take)
        .into_iter()
        .map(|i| metric.of(reviews[i]))
        .collect();
    values.sort_unstable_by(|a, b| b.cmp(a));
    Ok(RankCurve {
        group,
        metric,
        points: values.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrant {
    SignalingManFavoured,
    SignalingWomanFavoured,
    SignalingFavoured,
    PerformanceFavoured,
    Boundary,
}

impl Quadrant {
    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::SignalingManFavoured => "signaling-man favoured",
            Quadrant::SignalingWomanFavoured => "signaling-woman favoured",
            Quadrant::SignalingFavoured => "signaling favoured",
            Quadrant::PerformanceFavoured => "performance favoured",
            Quadrant::Boundary => "boundary",
        }
    }

    /// Only the signs of `x` (SM over PM) and `y` (SW over PW) matter.
    pub fn from_signs(x: f64, y: f64) -> Quadrant {
        if x == 0.0 || y == 0.0 || x.is_nan() || y.is_nan() {
            return Quadrant::Boundary;
        }
        match (x > 0.0, y > 0.0) {
            (true, false) => Quadrant::SignalingManFavoured,
            (false, true) => Quadrant::SignalingWomanFavoured,
            (true, true) => Quadrant::SignalingFavoured,
            (false, false) => Quadrant::PerformanceFavoured,
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantPlacement {
    pub category: String,
    /// Advantage of SM over PM.
    pub x: f64,
    /// Advantage of SW over PW.
    pub y: f64,
    pub quadrant: Quadrant,
}

/// Places every category with both a PM-SM and a PW-SW estimate; the
/// categories lacking one are returned separately.
pub fn quadrant_classify(estimates: &[AdvantageEstimate]) -> (Vec<QuadrantPlacement>, Vec<String>) {
    let mut axes: BTreeMap<&str, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for e in estimates {
        let slot = axes.entry(&e.category).or_default();
        match e.pair_group {
            PairGroup::PmSm => slot.0 = Some(e.signed_toward(ReviewerGroup::SignalingMan)),
            PairGroup::PwSw => slot.1 = Some(e.signed_toward(ReviewerGroup::SignalingWoman)),
            _ => {}
        }
    }
    let mut placed = Vec::new();
    let mut skipped = Vec::new();
    for (category, axis) in axes {
        match axis {
            (Some(x), Some(y)) => placed.push(QuadrantPlacement {
                category: category.to_string(),
                x,
                y,
                quadrant: Quadrant::from_signs(x, y),
            }),
            _ => skipped.push(category.to_string()),
        }
    }
    (placed, skipped)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_estimates_csv<W: Write>(w: W, estimates: &[AdvantageEstimate]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["pair_group", "category", "favored_group", "advantage_pct", "std_err", "n_pairs", "degenerate"])?;
    for e in estimates {
        out.write_record([
            e.pair_group.tag().to_string(),
            e.category.clone(),
            e.favored_tag().to_string(),
            format!("{:.6}", e.mean_advantage_pct),
            format!("{:.6}", e.standard_error),
            e.n_pairs.to_string(),
            e.degenerate.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("estimates", e))
}

pub fn write_rank_curves_csv<W: Write>(w: W, curves: &[RankCurve]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["group", "metric", "rank", "value"])?;
    for c in curves {
        for (rank, value) in &c.points {
            out.write_record([c.group.tag(), c.metric.as_str(), &rank.to_string(), &value.to_string()])?;
        }
    }
    out.flush().map_err(|e| Error::io("rank curves", e))
}

pub fn write_quadrants_csv<W: Write>(w: W, placements: &[QuadrantPlacement]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["category", "x", "y", "quadrant"])?;
    for p in placements {
        out.write_record([
            p.category.clone(),
            format!("{:.6}", p.x),
            format!("{:.6}", p.y),
            p.quadrant.as_str().to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("quadrants", e))
}
