//! Acceptance suite: one check per criterion, each printing a single
//! `criterion N: PASS|FAIL ...` line. Runs with a custom harness so the
//! lines are always shown and the timed criteria run one at a time.
//!
//! `cargo test --test acceptance` runs all; extra arguments select criteria
//! by number, e.g. `cargo test --test acceptance -- 7 8`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use genderlens::corpus::parse_review_record;
use genderlens::effects::{advantage, bootstrap_advantage, quadrant_classify, AdvantageEstimate, PairOutcome, Quadrant};
use genderlens::features::ConfounderVector;
use genderlens::matching::{
    covariance_of, default_ridge, nearest_match, sample_and_match, whitening_transform, CategoryPopulation, MatchConfig,
    MatchPool, PairGroup,
};
use genderlens::perform::cnn::{cnn_loss, cnn_loss_and_gradient, ShapePlan, OUTPUT_WEIGHT, PARAM_NAMES};
use genderlens::perform::{cnn_train, evaluate, predict_text, split_by_user, CnnModel, HyperParams, LabeledReview};
use genderlens::perform::{QuantizedText, ReviewerGroup};
use genderlens::pipeline::{Pipeline, PipelineConfig, Stage};
use genderlens::signal::{classify_signal, DictLabel, GenderSignal, KeywordLists, NameLexicon};
use genderlens::synth::{generate_corpus, SynthSpec};

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n:>2}: {} {name} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

// ---------------------------------------------------------------- 1

fn tiny_configs() -> Vec<HyperParams> {
    let kernels = [
        [7, 7, 3, 3, 3, 3],
        [5, 5, 3, 3, 3, 3],
        [3, 3, 3, 3, 3, 3],
        [7, 5, 3, 3, 3, 2],
        [4, 4, 2, 2, 2, 2],
    ];
    kernels
        .iter()
        .enumerate()
        .map(|(i, &kernel_widths)| HyperParams {
            window: 64,
            kernel_widths,
            pool_width: 2,
            filters: 8,
            hidden: 16,
            seed: 100 + i as u64,
            ..HyperParams::default()
        })
        .collect()
}

fn random_text(rng: &mut ChaCha8Rng, window: usize) -> QuantizedText {
    QuantizedText::from_rows((0..window).map(|_| Some(rng.random_range(0..69))).collect())
}

/// Largest relative error |a − n| / max(|a|, |n|, floor) over every parameter.
fn gradient_check(hp: &HyperParams, with_dropout: bool) -> (f64, usize, String) {
    const STEP: f64 = 1e-4;
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = CnnModel::<f64>::new(hp.clone()).unwrap();
    // nonzero biases keep activations away from the ReLU kink; the output
    // weights start at zero and would otherwise hide every upstream gradient
    for (i, t) in model.params_mut().iter_mut().enumerate() {
        if i == OUTPUT_WEIGHT {
            t.data.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
        } else if i % 2 == 1 {
            t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        }
    }
    let inputs = [random_text(&mut rng, hp.window), random_text(&mut rng, hp.window)];
    let batch: Vec<(&QuantizedText, u8)> = vec![(&inputs[0], 0), (&inputs[1], 1)];
    let mask_rng = || ChaCha8Rng::seed_from_u64(hp.seed ^ 0xd00d);

    let (_, grads) = if with_dropout {
        cnn_loss_and_gradient(&model, &batch, Some(&mut mask_rng())).unwrap()
    } else {
        cnn_loss_and_gradient(&model, &batch, None::<&mut ChaCha8Rng>).unwrap()
    };
    let loss = |m: &CnnModel<f64>| {
        if with_dropout {
            cnn_loss(m, &batch, Some(&mut mask_rng())).unwrap()
        } else {
            cnn_loss(m, &batch, None::<&mut ChaCha8Rng>).unwrap()
        }
    };

    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for t in 0..grads.len() {
        for j in 0..grads[t].data.len() {
            let orig = model.params()[t].data[j];
            model.params_mut()[t].data[j] = orig + STEP;
            let up = loss(&model);
            model.params_mut()[t].data[j] = orig - STEP;
            let down = loss(&model);
            model.params_mut()[t].data[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads[t].data[j];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}] analytic {analytic:e} numeric {numeric:e}", PARAM_NAMES[t]));
            }
            checked += 1;
        }
    }
    (worst.0, checked, worst.1)
}

fn criterion_01_gradient_check() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut where_ = String::new();
    for (i, hp) in tiny_configs().iter().enumerate() {
        let (rel, n, at) = gradient_check(hp, i == 4);
        checked += n;
        if rel > worst {
            worst = rel;
            where_ = at;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-3 && elapsed < Duration::from_secs(60);
    verdict(
        1,
        "gradient check",
        pass,
        &format!("5 configs, {checked} parameters, max rel err {worst:.2e} at {where_}, {elapsed:.1?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

/// Independent shape calculator: valid convolutions, floor pooling after
/// layers 1, 2 and 6.
fn flat_width(window: usize, kernels: [usize; 6], pool: usize, filters: usize) -> Option<usize> {
    let mut len = window as i64;
    for (l, k) in kernels.iter().enumerate() {
        len = len - *k as i64 + 1;
        if len < 1 {
            return None;
        }
        if l == 0 || l == 1 || l == 5 {
            len /= pool as i64;
            if len < 1 {
                return None;
            }
        }
    }
    Some(len as usize * filters)
}

fn criterion_02_shape_oracle() {
    let full = HyperParams::full_size();
    let plan = ShapePlan::new(&full).unwrap();
    let mut ok = plan.flat == 8704 && flat_width(1014, [7, 7, 3, 3, 3, 3], 3, 256) == Some(8704);
    let model = CnnModel::<f32>::new(HyperParams { epochs: 0, ..full }).unwrap();
    ok &= model.params()[12].shape == vec![8704, 1024];

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tested = 0;
    while tested < 20 {
        let hp = HyperParams {
            window: rng.random_range(40..400),
            kernel_widths: std::array::from_fn(|_| rng.random_range(1..8)),
            pool_width: rng.random_range(1..5),
            filters: rng.random_range(1..12),
            hidden: rng.random_range(1..9),
            ..HyperParams::default()
        };
        let oracle = flat_width(hp.window, hp.kernel_widths, hp.pool_width, hp.filters);
        match (oracle, CnnModel::<f32>::new(hp.clone())) {
            (Some(w), Ok(m)) => {
                ok &= m.plan().flat == w && m.params()[12].shape == vec![w, hp.hidden];
                tested += 1;
            }
            (None, Err(_)) => {}
            _ => ok = false,
        }
    }
    verdict(2, "shape oracle", ok, &format!("default architecture flat {} and {tested} random configs", plan.flat));
    assert!(ok);
}

// ---------------------------------------------------------------- 3

fn random_vector(rng: &mut ChaCha8Rng) -> ConfounderVector {
    ConfounderVector {
        timestamp_days: rng.random_range(14_000..16_000),
        length_words: rng.random_range(5..400),
        readability: rng.random_range(-20.0..100.0),
        sentiment: rng.random_range(-1.0..1.0),
        rating: rng.random_range(1..=5),
    }
}

fn pool_transform(vectors: &[ConfounderVector]) -> [[f64; 5]; 5] {
    let points: Vec<[f64; 5]> = vectors.iter().map(ConfounderVector::to_array).collect();
    let cov = covariance_of(&points).unwrap();
    whitening_transform(&cov, default_ridge(&cov)).unwrap()
}

fn criterion_03_matching_oracle() {
    let start = Instant::now();
    let (mut queries, mut mismatches) = (0, 0);
    for pool_seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + pool_seed);
        let vectors: Vec<ConfounderVector> = (0..1000).map(|_| random_vector(&mut rng)).collect();
        let entries: Vec<(u64, ConfounderVector)> = vectors.iter().enumerate().map(|(i, v)| (i as u64 * 7 + 3, *v)).collect();
        let pool = MatchPool::new("pool", ReviewerGroup::SignalingMan, entries.clone(), pool_transform(&vectors));
        // fresh queries, then every member against the rest of the pool
        let fresh: Vec<(ConfounderVector, Option<u64>)> = (0..1000).map(|_| (random_vector(&mut rng), None)).collect();
        let members = entries.iter().map(|(id, v)| (*v, Some(*id)));
        for (q, exclude) in fresh.into_iter().chain(members) {
            queries += 1;
            if nearest_match(&q, &pool, exclude) != pool.nearest_linear(&q, exclude) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(60);
    verdict(3, "matching oracle", pass, &format!("20 pools, {queries} queries, {mismatches} mismatches, {elapsed:.1?}"));
    assert!(pass);
}

// ---------------------------------------------------------------- 4

fn scaled(v: &ConfounderVector, column: usize, factor: f64) -> ConfounderVector {
    let mut out = *v;
    match column {
        0 => out.timestamp_days = (v.timestamp_days as f64 * factor).round() as i64,
        1 => out.length_words = (v.length_words as f64 * factor).round() as usize,
        2 => out.readability *= factor,
        3 => out.sentiment *= factor,
        _ => unreachable!(),
    }
    out
}

fn matched_ids(pop: &CategoryPopulation, cfg: &MatchConfig) -> Vec<(PairGroup, u64, u64)> {
    PairGroup::ALL
        .iter()
        .flat_map(|&pg| sample_and_match(pop, pg, cfg).unwrap().pairs)
        .map(|p| (p.pair_group, p.treated_id, p.control_id))
        .collect()
}

fn criterion_04_affine_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let groups = ReviewerGroup::TREATMENT;
    // integer columns hold multiples of 100 so every scaling is exact
    let members: Vec<(u64, ReviewerGroup, ConfounderVector)> = (0..800u64)
        .map(|i| {
            let mut v = random_vector(&mut rng);
            v.timestamp_days *= 100;
            v.length_words *= 100;
            (i + 1, groups[i as usize % 4], v)
        })
        .collect();
    let pop = |f: &dyn Fn(&ConfounderVector) -> ConfounderVector| CategoryPopulation {
        category: "Synthetic".into(),
        members: members.iter().map(|(id, g, v)| (*id, *g, f(v))).collect(),
    };
    let cfg = MatchConfig {
        sample_size: 400,
        seed: 4,
        ridge: Some(0.0),
        ..MatchConfig::default()
    };
    let reference = matched_ids(&pop(&|v| *v), &cfg);
    let mut ok = reference.len() == 4 * 400;
    let mut cases = 0;
    for column in 0..5 {
        for factor in [0.01, 1.0, 100.0] {
            // the integer rating column cannot hold its own scaled values;
            // scaling the other four by 1/factor is the same map up to a
            // uniform factor, which leaves every nearest neighbour unchanged
            let f: Box<dyn Fn(&ConfounderVector) -> ConfounderVector> = if column == 4 {
                Box::new(move |v| (0..4).fold(*v, |acc, c| scaled(&acc, c, 1.0 / factor)))
            } else {
                Box::new(move |v| scaled(v, column, factor))
            };
            ok &= matched_ids(&pop(&*f), &cfg) == reference;
            cases += 1;
        }
    }
    verdict(4, "affine invariance", ok, &format!("{cases} column scalings, {} pairs each", reference.len()));
    assert!(ok);
}

// ---------------------------------------------------------------- 5

fn criterion_05_advantage_formula() {
    let mut ok = true;
    let a = advantage(2.0, 2.0);
    ok &= a.magnitude_pct == 0.0 && a.favored.is_none() && !a.degenerate;
    let b = advantage(1.0, 1.5);
    ok &= b.magnitude_pct == 50.0 && !b.degenerate;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    for _ in 0..1000 {
        let h1 = rng.random_range(1e-3..1e3);
        let h2 = rng.random_range(1e-3..1e3);
        let c = rng.random_range(1e-3..1e3);
        let fwd = advantage(h1, h2);
        let rev = advantage(h2, h1);
        ok &= fwd.magnitude_pct == rev.magnitude_pct && close(fwd.signed(), -rev.signed());
        ok &= close(advantage(c * h1, c * h2).magnitude_pct, fwd.magnitude_pct);
        ok &= !fwd.degenerate;
    }
    let mut flagged = 0;
    for _ in 0..1000 {
        let lo = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-50.0..0.0) };
        let hi = rng.random_range(-50.0..50.0f64).max(lo);
        let (h1, h2) = if rng.random_bool(0.5) { (lo, hi) } else { (hi, lo) };
        if advantage(h1, h2).degenerate {
            flagged += 1;
        }
    }
    ok &= flagged == 1000;
    verdict(5, "advantage formula", ok, &format!("1000 random pairs, {flagged}/1000 non-positive minima flagged"));
    assert!(ok);
}

// ---------------------------------------------------------------- 6

fn poisson_pairs(n: usize, first_mean: f64, second_mean: f64, seed: u64) -> Vec<PairOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p1, p2) = (Poisson::new(first_mean).unwrap(), Poisson::new(second_mean).unwrap());
    (0..n)
        .map(|_| PairOutcome {
            first: p1.sample(&mut rng) as i64,
            second: p2.sample(&mut rng) as i64,
        })
        .collect()
}

fn criterion_06_bootstrap_sanity() {
    let constant = vec![PairOutcome { first: 6, second: 4 }; 500];
    let c = bootstrap_advantage(&constant, PairGroup::PmSm, "Constant", 500, 6).unwrap();
    let mut ok = c.standard_error == 0.0 && c.mean_advantage_pct == 50.0;

    let mut covered = 0;
    for seed in 0..100 {
        let outcomes = poisson_pairs(2000, 13.0, 10.0, 600 + seed);
        let e = bootstrap_advantage(&outcomes, PairGroup::PmSm, "Planted", 300, seed).unwrap();
        if (e.point_estimate_pct - 30.0).abs() <= 2.0 * e.standard_error {
            covered += 1;
        }
    }
    ok &= covered >= 90;

    let fixed = poisson_pairs(2000, 13.0, 10.0, 66);
    let big = bootstrap_advantage(&fixed, PairGroup::PmSm, "Fixed", 10_000, 6).unwrap();
    let gap = (big.signed() - big.point_estimate_pct).abs();
    ok &= gap < 3.0 * big.standard_error;
    verdict(
        6,
        "bootstrap sanity",
        ok,
        &format!(
            "constant SE {}, planted 30% covered in {covered}/100 seeds, b=10000 gap {gap:.4} vs 3 SE {:.4}",
            c.standard_error,
            3.0 * big.standard_error
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 7

fn is_male(g: ReviewerGroup) -> bool {
    matches!(g, ReviewerGroup::SignalingMan | ReviewerGroup::PerformingMan)
}

fn criterion_07_classifier_on_planted_styles() {
    let start = Instant::now();
    let mut spec = SynthSpec::planted(&[("Books", 0.0)], 2500, 10.0, 7);
    spec.overlap = 0.3;
    let corpus = generate_corpus(&spec).unwrap();
    let labeled: Vec<LabeledReview> = corpus
        .review_lines
        .iter()
        .zip(&corpus.truth.reviews)
        .enumerate()
        .map(|(i, (line, truth))| {
            let r = parse_review_record(line, i + 1).unwrap();
            LabeledReview {
                review_id: r.review_id,
                reviewer_id: r.reviewer_id,
                text: r.text,
                label: u8::from(is_male(truth.group)),
            }
        })
        .collect();
    let total = labeled.len();
    let (train, holdout) = split_by_user(labeled, |r| r.reviewer_id.as_str(), 0.8, 7).unwrap();
    let hp = HyperParams { seed: 7, ..HyperParams::default() };
    let (model, _) = cnn_train(&train, &holdout, &hp).unwrap();
    let probs: Vec<f64> = holdout.iter().map(|r| predict_text(&model, &r.text)).collect();
    let eval = evaluate(&holdout, &probs);
    let elapsed = start.elapsed();
    let pass = total == 10_000
        && eval.review_accuracy >= 0.90
        && eval.user_vote_accuracy >= eval.review_accuracy
        && elapsed < Duration::from_secs(300);
    verdict(
        7,
        "classifier on planted styles",
        pass,
        &format!(
            "{total} reviews, {} held out, review acc {:.4}, user vote acc {:.4}, {elapsed:.1?}",
            holdout.len(),
            eval.review_accuracy,
            eval.user_vote_accuracy
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

fn synth_pipeline_config(out_dir: &Path, per_group: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.out_dir = out_dir.to_path_buf();
    cfg.synth.per_group = per_group;
    let synth = cfg.synth_dir();
    cfg.reviews = Some(synth.join("reviews.json"));
    cfg.products = Some(synth.join("products.json"));
    cfg
}

fn run_synth_pipeline(cfg: PipelineConfig) {
    let pipeline = Pipeline::new(cfg);
    pipeline.run(Stage::Synth).unwrap();
    pipeline.run_all().unwrap();
}

/// Signed advantage per (category, pair tag), positive toward the first-named group.
fn signed_rows(path: &Path, group_col: &str, value_col: &str, se_col: Option<&str>) -> BTreeMap<(String, String), (f64, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (pg, cat, fav, val) = (col("pair_group"), col("category"), col(group_col), col(value_col));
    let se = se_col.map(col);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let pair = PairGroup::from_str(&rec[pg]).unwrap();
            let magnitude: f64 = rec[val].parse().unwrap();
            let sign = if &rec[fav] == pair.groups().0.tag() {
                1.0
            } else if &rec[fav] == "none" {
                0.0
            } else {
                -1.0
            };
            let se = se.map_or(0.0, |i| rec[i].parse().unwrap());
            ((rec[cat].to_string(), rec[pg].to_string()), (sign * magnitude, se))
        })
        .collect()
}

fn criterion_08_end_to_end_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth_pipeline_config(dir.path(), 3000);
    cfg.max_train_reviews = 6000;
    cfg.hp.epochs = 4;
    let synth_dir = cfg.synth_dir();
    let out_dir = cfg.out_dir.clone();

    let start = Instant::now();
    run_synth_pipeline(cfg);
    let elapsed = start.elapsed();

    let planted = signed_rows(&synth_dir.join("planted.csv"), "favored_group", "advantage_pct", None);
    let estimated = signed_rows(&out_dir.join("estimates.csv"), "favored_group", "advantage_pct", Some("std_err"));
    let mut ok = elapsed < Duration::from_secs(15 * 60) && planted.len() == 16;
    let (mut worst_rel, mut worst_null_z) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for (key, &(truth, _)) in &planted {
        let Some(&(est, se)) = estimated.get(key) else {
            ok = false;
            failures.push(format!("{} {} missing", key.0, key.1));
            continue;
        };
        let good = if truth.abs() >= 20.0 {
            let rel = (est - truth).abs() / truth.abs();
            worst_rel = worst_rel.max(rel);
            est.signum() == truth.signum() && rel <= 0.25
        } else if truth == 0.0 {
            worst_null_z = worst_null_z.max(if se > 0.0 { est.abs() / se } else { f64::INFINITY });
            est.abs() <= 3.0 * se
        } else {
            true
        };
        if !good {
            ok = false;
            failures.push(format!("{} {}: planted {truth:.1}, estimated {est:.2} (SE {se:.2})", key.0, key.1));
        }
    }
    verdict(
        8,
        "end-to-end planted recovery",
        ok,
        &format!(
            "16 effects, worst relative error {worst_rel:.3}, worst null |est|/SE {worst_null_z:.2}, failures {failures:?}, {elapsed:.1?}"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- 9

fn criterion_09_signal_module() {
    let lex = NameLexicon::bundled();
    let kw = KeywordLists::bundled();
    let mut ok = classify_signal("Andrew", &lex, &kw) == GenderSignal::SignalMale;
    ok &= classify_signal("Kindle Customer", &lex, &kw) == GenderSignal::NoSignal;
    ok &= classify_signal("Amazon Customer", &lex, &kw) == GenderSignal::NoSignal;
    for name in ["gamer girl", "Bookworm Girl 77", "girl"] {
        ok &= classify_signal(name, &lex, &kw) == GenderSignal::SignalFemale;
    }
    for name in ["The Dude", "dude_abides", "Rad Dude"] {
        ok &= classify_signal(name, &lex, &kw) == GenderSignal::SignalMale;
    }
    let mut mostly = 0;
    for label in [DictLabel::MostlyMale, DictLabel::MostlyFemale] {
        for name in lex.names_with(label) {
            mostly += 1;
            for handle in [name.to_string(), format!("{name} Reader"), format!("{} 42", name.to_uppercase())] {
                ok &= classify_signal(&handle, &lex, &kw) == GenderSignal::NoSignal;
            }
        }
    }
    ok &= mostly > 0;
    verdict(9, "signal module", ok, &format!("fixed examples and {mostly} mostly_* lexicon names"));
    assert!(ok);
}

// ---------------------------------------------------------------- 10

fn estimate(pair_group: PairGroup, favored: ReviewerGroup, pct: f64) -> AdvantageEstimate {
    AdvantageEstimate {
        pair_group,
        category: "Electronics".into(),
        favored_group: Some(favored),
        mean_advantage_pct: pct,
        standard_error: 1.0,
        n_pairs: 10_000,
        degenerate: false,
        point_estimate_pct: 0.0,
    }
}

fn criterion_10_quadrant_reproduction() {
    let estimates = [
        estimate(PairGroup::PmSm, ReviewerGroup::SignalingMan, 16.4),
        estimate(PairGroup::PwSw, ReviewerGroup::PerformingWoman, 38.5),
    ];
    let (placed, skipped) = quadrant_classify(&estimates);
    let ok = skipped.is_empty()
        && placed.len() == 1
        && placed[0].quadrant == Quadrant::SignalingManFavoured
        && placed[0].x == 16.4
        && placed[0].y == -38.5;
    let got = placed.first().map_or("none", |p| p.quadrant.as_str());
    verdict(10, "quadrant reproduction", ok, &format!("Electronics at SM +16.4, PW +38.5 -> {got}"));
    assert!(ok);
}

// ---------------------------------------------------------------- 11

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_11_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bundle");
    let config = || {
        let mut cfg = synth_pipeline_config(&out, 150);
        cfg.hp.epochs = 2;
        cfg.bootstrap_b = 200;
        cfg.seed = 11;
        cfg.hp.seed = 11;
        cfg
    };
    run_synth_pipeline(config());
    let first = collect_files(&out);
    std::fs::remove_dir_all(&out).unwrap();
    run_synth_pipeline(config());
    let second = collect_files(&out);
    let differing: Vec<String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let ok = !first.is_empty() && differing.is_empty();
    verdict(
        11,
        "determinism",
        ok,
        &format!("{} files compared, differing: {differing:?}", first.len()),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- harness

fn main() -> std::process::ExitCode {
    let criteria: [(u32, fn()); 11] = [
        (1, criterion_01_gradient_check),
        (2, criterion_02_shape_oracle),
        (3, criterion_03_matching_oracle),
        (4, criterion_04_affine_invariance),
        (5, criterion_05_advantage_formula),
        (6, criterion_06_bootstrap_sanity),
        (7, criterion_07_classifier_on_planted_styles),
        (8, criterion_08_end_to_end_recovery),
        (9, criterion_09_signal_module),
        (10, criterion_10_quadrant_reproduction),
        (11, criterion_11_determinism),
    ];
    // cargo passes libtest flags such as --nocapture; only numbers select
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        if std::panic::catch_unwind(check).is_err() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        std::process::ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
