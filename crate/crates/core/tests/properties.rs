//! Property tests for matching, effect estimation and the synthetic corpus.

use std::collections::HashMap;

use proptest::prelude::*;

use genderlens::effects::{advantage, bootstrap_advantage, pair_outcomes, PairOutcome};
use genderlens::features::ConfounderVector;
use genderlens::matching::{identity, sample_and_match, CategoryPopulation, MatchConfig, MatchPool, PairGroup};
use genderlens::perform::ReviewerGroup;
use genderlens::synth::{generate_corpus, planted_truth, SynthSpec};

fn vector() -> impl Strategy<Value = ConfounderVector> {
    (0i64..100, 1usize..50, -10.0..10.0f64, -1.0..1.0f64, 1u8..=5).prop_map(|(t, l, r, s, g)| ConfounderVector {
        timestamp_days: t,
        length_words: l,
        readability: r,
        sentiment: s,
        rating: g,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kd_search_equals_linear_scan(points in prop::collection::vec(vector(), 1..120), q in vector()) {
        let entries: Vec<(u64, ConfounderVector)> = points.into_iter().enumerate().map(|(i, v)| (i as u64, v)).collect();
        let pool = MatchPool::new("c", ReviewerGroup::PerformingMan, entries, identity());
        prop_assert_eq!(pool.nearest(&q, None), pool.nearest_linear(&q, None));
        prop_assert_eq!(pool.nearest(&q, Some(0)), pool.nearest_linear(&q, Some(0)));
    }

    #[test]
    fn pool_order_does_not_matter(points in prop::collection::vec(vector(), 2..60), q in vector()) {
        let entries: Vec<(u64, ConfounderVector)> = points.into_iter().enumerate().map(|(i, v)| (i as u64, v)).collect();
        let mut reversed = entries.clone();
        reversed.reverse();
        let a = MatchPool::new("c", ReviewerGroup::SignalingMan, entries, identity());
        let b = MatchPool::new("c", ReviewerGroup::SignalingMan, reversed, identity());
        prop_assert_eq!(a.nearest(&q, None), b.nearest(&q, None));
    }

    #[test]
    fn advantage_is_never_negative(h1 in -100.0..100.0f64, h2 in -100.0..100.0f64) {
        let a = advantage(h1, h2);
        prop_assert!(a.magnitude_pct >= 0.0);
        prop_assert_eq!(a.degenerate, h1.min(h2) <= 0.0);
    }

    #[test]
    fn bootstrap_is_reproducible(pairs in prop::collection::vec((1i64..30, 1i64..30), 1..80), seed in 0u64..1000) {
        let outcomes: Vec<PairOutcome> = pairs.iter().map(|&(first, second)| PairOutcome { first, second }).collect();
        let a = bootstrap_advantage(&outcomes, PairGroup::PwPm, "c", 50, seed).unwrap();
        let b = bootstrap_advantage(&outcomes, PairGroup::PwPm, "c", 50, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.standard_error >= 0.0);
        prop_assert_eq!(a.n_pairs, outcomes.len());
    }
}

fn population(per_group: usize) -> CategoryPopulation {
    let mut members = Vec::new();
    let mut id = 0;
    for g in ReviewerGroup::TREATMENT {
        for i in 0..per_group {
            id += 1;
            let v = ConfounderVector {
                timestamp_days: (id * 37 % 101) as i64,
                length_words: 5 + i,
                readability: (id as f64 * 0.37).sin() * 40.0,
                sentiment: (id as f64 * 0.11).cos(),
                rating: (id % 5 + 1) as u8,
            };
            members.push((id as u64, g, v));
        }
    }
    CategoryPopulation {
        category: "Books".into(),
        members,
    }
}

#[test]
fn every_pair_crosses_groups_and_preserves_treated_group() {
    let pop = population(40);
    let groups: HashMap<u64, ReviewerGroup> = pop.members.iter().map(|m| (m.0, m.1)).collect();
    for pg in PairGroup::ALL {
        let out = sample_and_match(&pop, pg, &MatchConfig::default()).unwrap();
        assert_eq!(out.sampled, 80);
        assert_eq!(out.pairs.len(), 80);
        for p in &out.pairs {
            assert_eq!(groups[&p.treated_id], p.treated_group);
            assert_eq!(groups[&p.control_id], p.control_group());
            assert_ne!(p.treated_group, p.control_group());
            assert!(pg.contains(p.treated_group) && pg.contains(p.control_group()));
        }
    }
}

#[test]
fn sample_size_caps_the_treated_draw() {
    let pop = population(40);
    let cfg = MatchConfig {
        sample_size: 25,
        ..MatchConfig::default()
    };
    let out = sample_and_match(&pop, PairGroup::PmSm, &cfg).unwrap();
    assert_eq!(out.sampled, 25);
    let again = sample_and_match(&pop, PairGroup::PmSm, &cfg).unwrap();
    assert_eq!(out, again);
}

#[test]
fn one_sided_pool_leaves_treated_unmatched() {
    let mut pop = population(10);
    pop.members.retain(|m| m.1 != ReviewerGroup::SignalingWoman);
    let out = sample_and_match(&pop, PairGroup::PwSw, &MatchConfig::default()).unwrap();
    assert_eq!((out.pairs.len(), out.unmatched), (0, 10));
}

#[test]
fn missing_helpfulness_is_a_validation_error() {
    let pop = population(5);
    let out = sample_and_match(&pop, PairGroup::PmSm, &MatchConfig::default()).unwrap();
    assert!(pair_outcomes(&out.pairs, &HashMap::new()).is_err());
}

#[test]
fn synthetic_corpus_matches_its_ground_truth() {
    let spec = SynthSpec::planted(&[("Books", 30.0), ("Beauty", 0.0)], 30, 8.0, 9);
    let corpus = generate_corpus(&spec).unwrap();
    assert_eq!(corpus.review_lines.len(), 2 * 4 * 30);
    assert_eq!(corpus.truth.reviews.len(), corpus.review_lines.len());
    for g in ReviewerGroup::TREATMENT {
        assert_eq!(corpus.truth.count("Books", g), 30);
    }
    let planted = planted_truth(&spec);
    assert_eq!(planted.len(), 8);
    for p in &planted {
        let want = if p.category == "Books" { 30.0 } else { 0.0 };
        assert!((p.signed() - want).abs() < 1e-9, "{p:?}");
    }
    assert_eq!(generate_corpus(&spec).unwrap().review_lines, corpus.review_lines);
}
