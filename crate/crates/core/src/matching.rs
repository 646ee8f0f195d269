//! Mahalanobis nearest-neighbour matching between reviewer groups within a
//! category.
//!
//! Distances are computed in whitened coordinates `T·x`, where `T = L⁻¹` and
//! `L` is the Cholesky factor of the pooled covariance plus a ridge. Search is
//! exact: a kd-tree over the whitened points, with a linear scan for small
//! pools. Both paths compare candidates by `(squared distance, review_id)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ConfounderVector, DIM, FEATURE_NAMES};
use crate::perform::ReviewerGroup;
use crate::seeding::rng_for;

pub type Matrix = [[f64; DIM]; DIM];
pub type Point = [f64; DIM];

pub const DEFAULT_SAMPLE_SIZE: usize = 10_000;
const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairGroup {
    PwPm,
    SwSm,
    PwSw,
    PmSm,
}

impl PairGroup {
    pub const ALL: [PairGroup; 4] = [PairGroup::PwPm, PairGroup::SwSm, PairGroup::PwSw, PairGroup::PmSm];

    pub fn tag(self) -> &'static str {
        match self {
            PairGroup::PwPm => "PW-PM",
            PairGroup::SwSm => "SW-SM",
            PairGroup::PwSw => "PW-SW",
            PairGroup::PmSm => "PM-SM",
        }
    }

    /// The two groups in tag order.
    pub fn groups(self) -> (ReviewerGroup, ReviewerGroup) {
        use ReviewerGroup::*;
        match self {
            PairGroup::PwPm => (PerformingWoman, PerformingMan),
            PairGroup::SwSm => (SignalingWoman, SignalingMan),
            PairGroup::PwSw => (PerformingWoman, SignalingWoman),
            PairGroup::PmSm => (PerformingMan, SignalingMan),
        }
    }

    pub fn contains(self, g: ReviewerGroup) -> bool {
        let (a, b) = self.groups();
        g == a || g == b
    }

    /// The other group of the pair; `None` if `g` is not in the pair.
    pub fn opposite(self, g: ReviewerGroup) -> Option<ReviewerGroup> {
        let (a, b) = self.groups();
        if g == a {
            Some(b)
        } else if g == b {
            Some(a)
        } else {
            None
        }
    }
}

impl fmt::Display for PairGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PairGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PairGroup::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| Error::Validation(format!("unknown pair group `{s}`")))
    }
}

/// Unbiased sample covariance of raw points.
pub fn covariance_of(points: &[Point]) -> Result<Matrix> {
    if points.len() < 2 {
        return Err(Error::Config(format!(
            "covariance needs at least 2 vectors, got {}",
            points.len()
        )));
    }
    // Welford-style co-moment accumulation
    let mut mean = [0.0; DIM];
    let mut m2 = [[0.0; DIM]; DIM];
    for (k, p) in points.iter().enumerate() {
        let n = (k + 1) as f64;
        let mut delta = [0.0; DIM];
        for i in 0..DIM {
            delta[i] = p[i] - mean[i];
            mean[i] += delta[i] / n;
        }
        for i in 0..DIM {
            for j in 0..DIM {
                m2[i][j] += delta[i] * (p[j] - mean[j]);
            }
        }
    }
    let denom = (points.len() - 1) as f64;
    let mut cov = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..=i {
            let v = 0.5 * (m2[i][j] + m2[j][i]) / denom;
            cov[i][j] = v;
            cov[j][i] = v;
        }
    }
    Ok(cov)
}

pub fn covariance_matrix(vectors: &[ConfounderVector]) -> Result<Matrix> {
    let points: Vec<Point> = vectors.iter().map(ConfounderVector::to_array).collect();
    covariance_of(&points)
}

/// `1e-8 · trace / DIM`; 1 for an all-zero covariance, where every scale works.
pub fn default_ridge(cov: &Matrix) -> f64 {
    let trace: f64 = (0..DIM).map(|i| cov[i][i]).sum();
    if trace > 0.0 {
        1e-8 * trace / DIM as f64
    } else {
        1.0
    }
}

/// Lower-triangular `T = L⁻¹` with `L·Lᵀ = cov + ridge·I`.
pub fn whitening_transform(cov: &Matrix, ridge: f64) -> Result<Matrix> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Config(format!("ridge {ridge} must be a non-negative number")));
    }
    let mut a = *cov;
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += ridge;
    }
    let mut l = [[0.0; DIM]; DIM];
    for j in 0..DIM {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "covariance not positive definite at pivot {j} (ridge {ridge:e})"
            )));
        }
        l[j][j] = d.sqrt();
        for i in j + 1..DIM {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    // forward substitution column by column
    let mut t = [[0.0; DIM]; DIM];
    for c in 0..DIM {
        for i in c..DIM {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[i][k] * t[k][c];
            }
            t[i][c] = s / l[i][i];
        }
    }
    Ok(t)
}

pub fn whiten(transform: &Matrix, x: &Point) -> Point {
    let mut out = [0.0; DIM];
    for i in 0..DIM {
        let mut s = 0.0;
        for k in 0..=i {
            s += transform[i][k] * x[k];
        }
        out[i] = s;
    }
    out
}

/// Squared Euclidean distance, summed in axis order.
#[inline]
pub fn squared_distance(a: &Point, b: &Point) -> f64 {
    let mut s = 0.0;
    for i in 0..DIM {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

pub fn mahalanobis_distance(u: &ConfounderVector, v: &ConfounderVector, transform: &Matrix) -> f64 {
    let (u, v) = (u.to_array(), v.to_array());
    let mut diff = [0.0; DIM];
    for i in 0..DIM {
        diff[i] = u[i] - v[i];
    }
    let w = whiten(transform, &diff);
    squared_distance(&w, &[0.0; DIM]).sqrt()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// kd-tree over whitened points. Points in a left subtree have coordinate
/// `<= value` on the split axis and points in a right subtree `>= value`.
#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl KdTree {
    fn build(points: &[Point]) -> Self {
        let mut tree = KdTree {
            nodes: Vec::new(),
            order: (0..points.len()).collect(),
        };
        if !points.is_empty() {
            tree.build_node(points, 0, points.len());
        }
        tree
    }

    fn build_node(&mut self, points: &[Point], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let slice = &mut self.order[start..end];
        let mut axis = 0;
        let mut widest = -1.0;
        for a in 0..DIM {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][a]), hi.max(points[i][a]))
            });
            if hi - lo > widest {
                widest = hi - lo;
                axis = a;
            }
        }
        if !(widest > 0.0) {
            return id;
        }
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[slice[mid]][axis];
        let left = self.build_node(points, start, start + mid);
        let right = self.build_node(points, start + mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }
}

/// A nearest-neighbour result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub review_id: u64,
    pub squared_distance: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }

    fn better_than(&self, other: &Option<Neighbor>) -> bool {
        match other {
            None => true,
            Some(o) => (self.squared_distance, self.review_id) < (o.squared_distance, o.review_id),
        }
    }
}

/// All reviews of one group in one category, whitened once.
#[derive(Debug, Clone)]
pub struct MatchPool {
    pub category: String,
    pub group: ReviewerGroup,
    ids: Vec<u64>,
    vectors: Vec<ConfounderVector>,
    whitened: Vec<Point>,
    transform: Matrix,
    tree: Option<KdTree>,
}

impl MatchPool {
    /// Entries are sorted by review id, so construction ignores input order.
    pub fn new(
        category: &str,
        group: ReviewerGroup,
        mut entries: Vec<(u64, ConfounderVector)>,
        transform: Matrix,
    ) -> Self {
        entries.sort_by_key(|e| e.0);
        entries.dedup_by_key(|e| e.0);
        let whitened: Vec<Point> = entries.iter().map(|(_, v)| whiten(&transform, &v.to_array())).collect();
        let finite = whitened.iter().all(|p| p.iter().all(|x| x.is_finite()));
        let tree = (finite && whitened.len() > LEAF_SIZE).then(|| KdTree::build(&whitened));
        let (ids, vectors) = entries.into_iter().unzip();
        MatchPool {
            category: category.to_string(),
            group,
            ids,
            vectors,
            whitened,
            transform,
            tree,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn vectors(&self) -> &[ConfounderVector] {
        &self.vectors
    }

    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn whitened(&self) -> &[Point] {
        &self.whitened
    }

    fn query_point(&self, treated: &ConfounderVector) -> Point {
        whiten(&self.transform, &treated.to_array())
    }

    fn consider(&self, q: &Point, i: usize, exclude: Option<u64>, best: &mut Option<Neighbor>) {
        let id = self.ids[i];
        if Some(id) == exclude {
            return;
        }
        let cand = Neighbor {
            review_id: id,
            squared_distance: squared_distance(q, &self.whitened[i]),
        };
        if cand.better_than(best) {
            *best = Some(cand);
        }
    }

    fn search(&self, tree: &KdTree, node: usize, q: &Point, exclude: Option<u64>, best: &mut Option<Neighbor>) {
        match tree.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &tree.order[start..end] {
                    self.consider(q, i, exclude, best);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(tree, near, q, exclude, best);
                // a bound equal to the best may still hide a smaller id
                let prune = matches!(best, Some(b) if diff * diff > b.squared_distance);
                if !prune {
                    self.search(tree, far, q, exclude, best);
                }
            }
        }
    }

    /// Exact nearest entry other than `exclude`, ties to the smaller id.
    pub fn nearest(&self, treated: &ConfounderVector, exclude: Option<u64>) -> Option<Neighbor> {
        let q = self.query_point(treated);
        let mut best = None;
        match (&self.tree, q.iter().all(|x| x.is_finite())) {
            (Some(tree), true) => self.search(tree, 0, &q, exclude, &mut best),
            _ => (0..self.len()).for_each(|i| self.consider(&q, i, exclude, &mut best)),
        }
        best
    }

    /// Exhaustive scan; the correctness oracle for [`MatchPool::nearest`].
    pub fn nearest_linear(&self, treated: &ConfounderVector, exclude: Option<u64>) -> Option<Neighbor> {
        let q = self.query_point(treated);
        let mut best = None;
        for i in 0..self.len() {
            self.consider(&q, i, exclude, &mut best);
        }
        best
    }
}

pub fn nearest_match(treated: &ConfounderVector, pool: &MatchPool, exclude: Option<u64>) -> Option<Neighbor> {
    pool.nearest(treated, exclude)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pair_group: PairGroup,
    pub category: String,
    pub treated_id: u64,
    pub control_id: u64,
    pub treated_group: ReviewerGroup,
    pub distance: f64,
}

impl MatchedPair {
    pub fn control_group(&self) -> ReviewerGroup {
        self.pair_group
            .opposite(self.treated_group)
            .expect("treated group belongs to the pair")
    }

    /// (review of the first-named group, review of the second-named group).
    pub fn ordered_ids(&self) -> (u64, u64) {
        if self.treated_group == self.pair_group.groups().0 {
            (self.treated_id, self.control_id)
        } else {
            (self.control_id, self.treated_id)
        }
    }
}

/// Every review of one category with its reviewer group and confounders.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryPopulation {
    pub category: String,
    pub members: Vec<(u64, ReviewerGroup, ConfounderVector)>,
}

impl CategoryPopulation {
    pub fn of_group(&self, group: ReviewerGroup) -> Vec<(u64, ConfounderVector)> {
        self.members
            .iter()
            .filter(|m| m.1 == group)
            .map(|m| (m.0, m.2))
            .collect()
    }

    pub fn count(&self, group: ReviewerGroup) -> usize {
        self.members.iter().filter(|m| m.1 == group).count()
    }
}

/// Splits reviews into per-category populations. A review listed under
/// several categories joins each of them; reviews without a group or
/// features are left out.
pub fn category_populations<'a>(
    reviews: impl IntoIterator<Item = (u64, &'a str, ReviewerGroup)>,
    categories_of: impl Fn(u64) -> Vec<String>,
    features: &HashMap<u64, ConfounderVector>,
) -> BTreeMap<String, CategoryPopulation> {
    let mut out: BTreeMap<String, CategoryPopulation> = BTreeMap::new();
    for (id, _reviewer, group) in reviews {
        let Some(v) = features.get(&id) else { continue };
        for cat in categories_of(id) {
            out.entry(cat.clone())
                .or_insert_with(|| CategoryPopulation {
                    category: cat,
                    members: Vec::new(),
                })
                .members
                .push((id, group, *v));
        }
    }
    for pop in out.values_mut() {
        pop.members.sort_by_key(|m| m.0);
    }
    out
}

/// Covariance source for the whitening transform.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CovarianceMode {
    /// Pooled over both groups of the pair within the category.
    #[default]
    PerCategory,
    /// One matrix for every category.
    Global(Matrix),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub sample_size: usize,
    pub seed: u64,
    /// `None` selects [`default_ridge`].
    pub ridge: Option<f64>,
    pub covariance: CovarianceMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 1,
            ridge: None,
            covariance: CovarianceMode::PerCategory,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOutcome {
    pub pairs: Vec<MatchedPair>,
    pub sampled: usize,
    /// Sampled treated reviews whose opposite pool was empty.
    pub unmatched: usize,
}

pub fn pair_transform(points: &[Point], cfg: &MatchConfig) -> Result<Matrix> {
    let cov = match cfg.covariance {
        CovarianceMode::Global(c) => c,
        CovarianceMode::PerCategory if points.len() >= 2 => covariance_of(points)?,
        // a lone review is never compared, any metric will do
        CovarianceMode::PerCategory => return whitening_transform(&identity(), 0.0),
    };
    let ridge = cfg.ridge.unwrap_or_else(|| default_ridge(&cov));
    whitening_transform(&cov, ridge)
}

pub fn identity() -> Matrix {
    let mut m = [[0.0; DIM]; DIM];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Samples treated reviews from the union of the pair's groups and matches
/// each to its nearest review of the opposite group, with replacement.
pub fn sample_and_match(pop: &CategoryPopulation, pair: PairGroup, cfg: &MatchConfig) -> Result<MatchOutcome> {
    if cfg.sample_size == 0 {
        return Err(Error::Config("matching sample size must be positive".into()));
    }
    let (ga, gb) = pair.groups();
    let union: Vec<(u64, ReviewerGroup, ConfounderVector)> =
        pop.members.iter().filter(|m| pair.contains(m.1)).copied().collect();
    if union.is_empty() {
        return Err(Error::Config(format!(
            "category `{}` has no {} or {} reviews",
            pop.category,
            ga.tag(),
            gb.tag()
        )));
    }
    let points: Vec<Point> = union.iter().map(|m| m.2.to_array()).collect();
    let transform = pair_transform(&points, cfg)?;
    let pool_a = MatchPool::new(&pop.category, ga, pop.of_group(ga), transform);
    let pool_b = MatchPool::new(&pop.category, gb, pop.of_group(gb), transform);

    let mut rng = rng_for(cfg.seed, &format!("match/{}/{}", pop.category, pair.tag()));
    let k = cfg.sample_size.min(union.len());
    let mut picks = index::sample(&mut rng, union.len(), k).into_vec();
    picks.sort_unstable();

    let mut out = MatchOutcome {
        sampled: k,
        ..MatchOutcome::default()
    };
    for i in picks {
        let (id, group, v) = union[i];
        let pool = if group == ga { &pool_b } else { &pool_a };
        match pool.nearest(&v, Some(id)) {
            Some(nb) => out.pairs.push(MatchedPair {
                pair_group: pair,
                category: pop.category.clone(),
                treated_id: id,
                control_id: nb.review_id,
                treated_group: group,
                distance: nb.distance(),
            }),
            None => out.unmatched += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSummary {
    pub group: ReviewerGroup,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub pair_group: PairGroup,
    pub feature: String,
    /// `bins + 1` shared bin edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub sides: [SideSummary; 2],
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Distribution of one confounder on each side of the pairs. Sides follow the
/// tag order of the pair group, whichever review was treated.
pub fn balance_report(
    pairs: &[MatchedPair],
    feature_index: usize,
    features: &HashMap<u64, ConfounderVector>,
    bins: usize,
) -> Result<BalanceReport> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Validation("balance report over an empty pair set".into()))?;
    if feature_index >= DIM {
        return Err(Error::Config(format!("feature index {feature_index} out of range")));
    }
    if bins == 0 {
        return Err(Error::Config("balance report needs at least one bin".into()));
    }
    let pair_group = first.pair_group;
    let value = |id: u64| -> Result<f64> {
        features
            .get(&id)
            .map(|v| v.to_array()[feature_index])
            .ok_or_else(|| Error::Validation(format!("review {id} has no features")))
    };
    let mut sides: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for p in pairs {
        if p.pair_group != pair_group {
            return Err(Error::Validation("balance report mixes pair groups".into()));
        }
        let (a, b) = p.ordered_ids();
        sides[0].push(value(a)?);
        sides[1].push(value(b)?);
    }
    let (lo, hi) = sides
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let histogram = |xs: &[f64]| {
        let mut counts = vec![0usize; bins];
        for &x in xs {
            let b = if width > 0.0 {
                (((x - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1;
        }
        counts
    };
    let (ga, gb) = pair_group.groups();
    let summary = |group, xs: &[f64]| {
        let (mean, variance) = mean_var(xs);
        SideSummary {
            group,
            counts: histogram(xs),
            mean,
            variance,
        }
    };
    Ok(BalanceReport {
        pair_group,
        feature: FEATURE_NAMES[feature_index].to_string(),
        edges,
        sides: [summary(ga, &sides[0]), summary(gb, &sides[1])],
    })
}
