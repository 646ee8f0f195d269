//! Review corpus: record parsing, the on-disk store, and corpus statistics.
//!
//! Input reviews are JSON lines in the public Amazon review layout:
//!
//! ```text
//! {"reviewerID": "A1..", "reviewerName": "Andrew", "asin": "B000..", "overall": 5.0,
//!  "helpful": [4, 9], "reviewText": "...", "unixReviewTime": 1382400000}
//! ```
//!
//! `helpful` is `[yes, total]`, so downvotes are `total - yes`. Product metadata
//! lines carry `asin` and `categories`, a list of category paths.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: u64,
    pub reviewer_id: String,
    pub product_id: String,
    pub user_name: String,
    pub rating: u8,
    pub upvotes: u32,
    pub downvotes: u32,
    pub text: String,
    /// Days since 1970-01-01.
    pub timestamp: i64,
}

impl Review {
    pub fn helpfulness(&self) -> i64 {
        helpfulness_score(self)
    }
}

/// Upvotes minus downvotes. May be negative.
pub fn helpfulness_score(review: &Review) -> i64 {
    i64::from(review.upvotes) - i64::from(review.downvotes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    pub categories: BTreeSet<String>,
}

#[derive(Debug, Deserialize)]
struct RawReview {
    #[serde(rename = "reviewerID")]
    reviewer_id: Option<String>,
    #[serde(rename = "reviewerName")]
    reviewer_name: Option<String>,
    asin: Option<String>,
    overall: Option<f64>,
    helpful: Option<Vec<i64>>,
    #[serde(rename = "reviewText")]
    review_text: Option<String>,
    #[serde(rename = "unixReviewTime")]
    unix_review_time: Option<i64>,
}

#[derive(Serialize)]
struct RawReviewOut<'a> {
    #[serde(rename = "reviewerID")]
    reviewer_id: &'a str,
    #[serde(rename = "reviewerName")]
    reviewer_name: &'a str,
    asin: &'a str,
    overall: f64,
    helpful: [u64; 2],
    #[serde(rename = "reviewText")]
    review_text: &'a str,
    #[serde(rename = "unixReviewTime")]
    unix_review_time: i64,
}

#[derive(Debug, Deserialize)]
struct RawProduct {
    asin: Option<String>,
    #[serde(default)]
    categories: Vec<Vec<String>>,
}

#[derive(Serialize)]
struct RawProductOut<'a> {
    asin: &'a str,
    categories: Vec<Vec<&'a str>>,
}

fn missing(line: usize, field: &str) -> Error {
    Error::Parse {
        line,
        message: format!("missing field `{field}`"),
    }
}

/// Parses one review line. `line_no` is the 1-based position in the review
/// stream and becomes the review id.
pub fn parse_review_record(line: &str, line_no: usize) -> Result<Review> {
    let raw: RawReview = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let reviewer_id = raw.reviewer_id.ok_or_else(|| missing(line_no, "reviewerID"))?;
    let user_name = raw
        .reviewer_name
        .ok_or_else(|| missing(line_no, "reviewerName"))?;
    let product_id = raw.asin.ok_or_else(|| missing(line_no, "asin"))?;
    let overall = raw.overall.ok_or_else(|| missing(line_no, "overall"))?;
    let helpful = raw.helpful.ok_or_else(|| missing(line_no, "helpful"))?;
    let text = raw
        .review_text
        .ok_or_else(|| missing(line_no, "reviewText"))?;
    let unix_time = raw
        .unix_review_time
        .ok_or_else(|| missing(line_no, "unixReviewTime"))?;

    if overall.fract() != 0.0 || !(1.0..=5.0).contains(&overall) {
        return Err(Error::Validation(format!(
            "line {line_no}: rating {overall} is not an integer in 1..=5"
        )));
    }
    let [yes, total] = helpful[..] else {
        return Err(Error::Parse {
            line: line_no,
            message: format!("`helpful` must have two elements, got {}", helpful.len()),
        });
    };
    if yes < 0 || total < 0 {
        return Err(Error::Validation(format!(
            "line {line_no}: negative vote count [{yes}, {total}]"
        )));
    }
    if total < yes {
        return Err(Error::Validation(format!(
            "line {line_no}: total votes {total} < helpful votes {yes}"
        )));
    }
    let to_u32 = |v: i64| {
        u32::try_from(v).map_err(|_| Error::Validation(format!("line {line_no}: vote count {v} overflows")))
    };

    Ok(Review {
        review_id: line_no as u64,
        reviewer_id,
        product_id,
        user_name,
        rating: overall as u8,
        upvotes: to_u32(yes)?,
        downvotes: to_u32(total - yes)?,
        text,
        timestamp: unix_time.div_euclid(SECONDS_PER_DAY),
    })
}

/// Inverse of [`parse_review_record`] (the review id is positional, not serialized).
pub fn serialize_review_record(review: &Review) -> String {
    let out = RawReviewOut {
        reviewer_id: &review.reviewer_id,
        reviewer_name: &review.user_name,
        asin: &review.product_id,
        overall: f64::from(review.rating),
        helpful: [
            u64::from(review.upvotes),
            u64::from(review.upvotes) + u64::from(review.downvotes),
        ],
        review_text: &review.text,
        unix_review_time: review.timestamp * SECONDS_PER_DAY,
    };
    serde_json::to_string(&out).expect("review serializes")
}

/// Parses one metadata line, flattening category paths into a set of names.
pub fn parse_product_record(line: &str, line_no: usize) -> Result<Product> {
    let raw: RawProduct = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    let product_id = raw.asin.ok_or_else(|| missing(line_no, "asin"))?;
    let categories = raw
        .categories
        .into_iter()
        .flatten()
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .collect();
    Ok(Product {
        product_id,
        categories,
    })
}

/// Metadata line for a product. Each category is written as its own one-element path.
pub fn serialize_product_record(product: &Product) -> String {
    let out = RawProductOut {
        asin: &product.product_id,
        categories: product.categories.iter().map(|c| vec![c.as_str()]).collect(),
    };
    serde_json::to_string(&out).expect("product serializes")
}

/// Opens a text input, decompressing transparently when it starts with the gzip magic.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub review_lines: usize,
    pub admitted_count: usize,
    pub skipped_count: usize,
    /// Of the skipped reviews, those whose product has no metadata record.
    pub orphan_count: usize,
    pub product_lines: usize,
    pub product_skipped: usize,
    pub duplicate_products: usize,
    /// First few skip reasons, for the stage summary.
    pub sample_errors: Vec<String>,
}

const MAX_SAMPLE_ERRORS: usize = 20;

/// Immutable, indexed review corpus.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    reviews: Vec<Review>,
    products: BTreeMap<String, Product>,
    by_id: HashMap<u64, usize>,
    by_reviewer: BTreeMap<String, Vec<u64>>,
    by_category: BTreeMap<String, Vec<u64>>,
}

const REVIEW_LOG: &str = "reviews.jsonl";
const PRODUCT_LOG: &str = "products.jsonl";

impl CorpusStore {
    /// Builds the indexes. Reviews are ordered by id so the store is independent
    /// of input order.
    pub fn from_parts(mut reviews: Vec<Review>, products: BTreeMap<String, Product>) -> Self {
        reviews.sort_by_key(|r| r.review_id);
        let mut by_id = HashMap::with_capacity(reviews.len());
        let mut by_reviewer: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        let mut by_category: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for (i, r) in reviews.iter().enumerate() {
            by_id.insert(r.review_id, i);
            by_reviewer
                .entry(r.reviewer_id.clone())
                .or_default()
                .push(r.review_id);
            if let Some(p) = products.get(&r.product_id) {
                for c in &p.categories {
                    by_category.entry(c.clone()).or_default().push(r.review_id);
                }
            }
        }
        CorpusStore {
            reviews,
            products,
            by_id,
            by_reviewer,
            by_category,
        }
    }

    pub fn reviews(&self) -> &[Review] {
        &self.reviews
    }

    pub fn review(&self, id: u64) -> Option<&Review> {
        self.by_id.get(&id).map(|&i| &self.reviews[i])
    }

    pub fn products(&self) -> &BTreeMap<String, Product> {
        &self.products
    }

    pub fn product_of(&self, review: &Review) -> Option<&Product> {
        self.products.get(&review.product_id)
    }

    pub fn reviewer_index(&self) -> &BTreeMap<String, Vec<u64>> {
        &self.by_reviewer
    }

    pub fn reviews_by(&self, reviewer_id: &str) -> &[u64] {
        self.by_reviewer
            .get(reviewer_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn category_index(&self) -> &BTreeMap<String, Vec<u64>> {
        &self.by_category
    }

    pub fn reviews_in(&self, category: &str) -> &[u64] {
        self.by_category
            .get(category)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    /// Writes the review and product logs into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write_log = |name: &str, lines: &mut dyn Iterator<Item = String>| -> Result<()> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            for line in lines {
                writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))
        };
        write_log(
            REVIEW_LOG,
            &mut self
                .reviews
                .iter()
                .map(|r| serde_json::to_string(r).expect("review serializes")),
        )?;
        write_log(
            PRODUCT_LOG,
            &mut self
                .products
                .values()
                .map(|p| serde_json::to_string(p).expect("product serializes")),
        )
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let read_log = |name: &str| -> Result<Vec<String>> {
            let path = dir.join(name);
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            BufReader::new(file)
                .lines()
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(|e| Error::io(&path, e))
        };
        let reviews = read_log(REVIEW_LOG)?
            .iter()
            .map(|l| serde_json::from_str::<Review>(l))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let products = read_log(PRODUCT_LOG)?
            .iter()
            .map(|l| serde_json::from_str::<Product>(l).map(|p| (p.product_id.clone(), p)))
            .collect::<std::result::Result<BTreeMap<_, _>, _>>()?;
        Ok(Self::from_parts(reviews, products))
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(REVIEW_LOG).is_file() && dir.join(PRODUCT_LOG).is_file()
    }

    pub fn log_paths(dir: &Path) -> [PathBuf; 2] {
        [dir.join(REVIEW_LOG), dir.join(PRODUCT_LOG)]
    }
}

/// Reads both streams and builds the store. Products are read first so every
/// admitted review resolves to a product; reviews of unknown products are
/// skipped and counted as orphans.
pub fn ingest_corpus<R: BufRead, P: BufRead>(
    review_stream: R,
    product_stream: P,
) -> Result<(CorpusStore, IngestReport)> {
    let mut report = IngestReport::default();
    let note = |report: &mut IngestReport, err: &Error| {
        if report.sample_errors.len() < MAX_SAMPLE_ERRORS {
            report.sample_errors.push(err.to_string());
        }
    };

    let mut products = BTreeMap::new();
    for (i, line) in product_stream.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<product stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.product_lines += 1;
        match parse_product_record(&line, i + 1) {
            Ok(p) => {
                if products.insert(p.product_id.clone(), p).is_some() {
                    report.duplicate_products += 1;
                }
            }
            Err(e) => {
                note(&mut report, &e);
                report.product_skipped += 1;
            }
        }
    }

    let mut reviews = Vec::new();
    for (i, line) in review_stream.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<review stream>", e))?;
        report.review_lines += 1;
        match parse_review_record(&line, i + 1) {
            Ok(r) if products.contains_key(&r.product_id) => reviews.push(r),
            Ok(r) => {
                report.skipped_count += 1;
                report.orphan_count += 1;
                note(
                    &mut report,
                    &Error::Validation(format!(
                        "line {}: product {} has no metadata",
                        i + 1,
                        r.product_id
                    )),
                );
            }
            Err(e) => {
                note(&mut report, &e);
                report.skipped_count += 1;
            }
        }
    }
    report.admitted_count = reviews.len();
    Ok((CorpusStore::from_parts(reviews, products), report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub review_count: usize,
    pub reviewer_count: usize,
    pub product_count: usize,
    pub category_count: usize,
    pub mean_words_per_review: Option<f64>,
    pub mean_rating: Option<f64>,
    pub mean_upvotes: Option<f64>,
    pub mean_downvotes: Option<f64>,
}

pub fn corpus_stats(store: &CorpusStore) -> CorpusStats {
    let n = store.len();
    let mean = |f: &dyn Fn(&Review) -> f64| -> Option<f64> {
        (n > 0).then(|| store.reviews().iter().map(f).sum::<f64>() / n as f64)
    };
    let categories: BTreeSet<&String> = store
        .products()
        .values()
        .flat_map(|p| p.categories.iter())
        .collect();
    CorpusStats {
        review_count: n,
        reviewer_count: store.reviewer_index().len(),
        product_count: store.products().len(),
        category_count: categories.len(),
        mean_words_per_review: mean(&|r| crate::features::word_count(&r.text) as f64),
        mean_rating: mean(&|r| f64::from(r.rating)),
        mean_upvotes: mean(&|r| f64::from(r.upvotes)),
        mean_downvotes: mean(&|r| f64::from(r.downvotes)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(name: &str, rating: f64, yes: i64, total: i64, text: &str) -> String {
        format!(
            r#"{{"reviewerID":"R1","reviewerName":"{name}","asin":"P1","overall":{rating:?},"helpful":[{yes},{total}],"reviewText":"{text}","unixReviewTime":1382400000}}"#
        )
    }

    const PRODUCTS: &str = r#"{"asin":"P1","categories":[["Electronics","Computers"]]}"#;

    #[test]
    fn vote_pair_converts_to_up_and_down() {
        let r = parse_review_record(&line("Andrew", 5.0, 4, 9, "fine"), 1).unwrap();
        assert_eq!((r.rating, r.upvotes, r.downvotes), (5, 4, 5));
        assert_eq!(r.timestamp, 1382400000 / 86400);
        let r = parse_review_record(&line("Andrew", 3.0, 0, 0, "fine"), 1).unwrap();
        assert_eq!((r.upvotes, r.downvotes), (0, 0));
    }

    #[test]
    fn malformed_records_are_rejected() {
        let no_text = r#"{"reviewerID":"R1","reviewerName":"x","asin":"P1","overall":5.0,"helpful":[0,0],"unixReviewTime":1}"#;
        match parse_review_record(no_text, 7) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("reviewText"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_review_record(&line("x", 5.0, 5, 3, "t"), 1),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse_review_record(&line("x", 6.0, 0, 0, "t"), 1),
            Err(Error::Validation(_))
        ));
        assert!(parse_review_record("not json", 1).is_err());
    }

    #[test]
    fn product_categories_flatten() {
        let p = parse_product_record(PRODUCTS, 1).unwrap();
        let want: BTreeSet<String> = ["Electronics", "Computers"].iter().map(|s| s.to_string()).collect();
        assert_eq!(p.categories, want);
        let p = parse_product_record(r#"{"asin":"P2","categories":[]}"#, 1).unwrap();
        assert!(p.categories.is_empty());
        assert!(parse_product_record(r#"{"categories":[["A"]]}"#, 3).is_err());
    }

    #[test]
    fn ingest_counts_skips_and_duplicates() {
        let reviews = [
            line("a", 5.0, 1, 2, "one two"),
            line("b", 4.0, 0, 0, "three"),
            "{broken".to_string(),
            line("c", 1.0, 2, 2, "x"),
        ]
        .join("\n");
        let products = format!(
            "{PRODUCTS}\n{}\n",
            r#"{"asin":"P1","categories":[["Books"]]}"#
        );
        let (store, report) = ingest_corpus(reviews.as_bytes(), products.as_bytes()).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(report.skipped_count, 1);
        assert_eq!(report.admitted_count + report.skipped_count, report.review_lines);
        assert_eq!(report.duplicate_products, 1);
        // last record wins
        assert_eq!(store.reviews_in("Books").len(), 3);
        assert!(store.reviews_in("Electronics").is_empty());
        assert_eq!(store.reviews_by("R1").len(), 3);
    }

    #[test]
    fn orphan_reviews_are_skipped() {
        let reviews = line("a", 5.0, 1, 2, "x");
        let (store, report) = ingest_corpus(reviews.as_bytes(), &b""[..]).unwrap();
        assert!(store.is_empty());
        assert_eq!((report.skipped_count, report.orphan_count), (1, 1));
    }

    #[test]
    fn empty_streams_give_empty_stats() {
        let (store, report) = ingest_corpus(&b""[..], &b""[..]).unwrap();
        assert_eq!(report.review_lines, 0);
        let stats = corpus_stats(&store);
        assert_eq!(stats.review_count, 0);
        assert_eq!(stats.mean_rating, None);
    }

    #[test]
    fn stats_means() {
        let reviews = [
            line("a", 4.0, 1, 2, "w w w w w w w w w w"),
            line("a", 5.0, 3, 3, "w w w w w w w w w w w w w w w w w w w w"),
        ]
        .join("\n");
        let (store, _) = ingest_corpus(reviews.as_bytes(), PRODUCTS.as_bytes()).unwrap();
        let s = corpus_stats(&store);
        assert_eq!(s.mean_words_per_review, Some(15.0));
        assert_eq!(s.mean_rating, Some(4.5));
        assert_eq!(s.mean_upvotes, Some(2.0));
        assert_eq!(s.mean_downvotes, Some(0.5));
        assert_eq!((s.reviewer_count, s.product_count, s.category_count), (1, 1, 2));
    }

    #[test]
    fn helpfulness_examples() {
        let mut r = parse_review_record(&line("a", 5.0, 10, 13, "t"), 1).unwrap();
        assert_eq!(helpfulness_score(&r), 7);
        r.upvotes = 0;
        r.downvotes = 0;
        assert_eq!(helpfulness_score(&r), 0);
        r.upvotes = 2;
        r.downvotes = 5;
        assert_eq!(helpfulness_score(&r), -3);
    }

    #[test]
    fn store_save_and_open() {
        let dir = tempfile::tempdir().unwrap();
        let reviews = [line("a", 5.0, 1, 2, "x y"), line("b", 2.0, 0, 1, "z")].join("\n");
        let (store, _) = ingest_corpus(reviews.as_bytes(), PRODUCTS.as_bytes()).unwrap();
        store.save(dir.path()).unwrap();
        let back = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(back.reviews(), store.reviews());
        assert_eq!(back.products(), store.products());
        assert_eq!(back.reviews_in("Computers"), store.reviews_in("Computers"));
    }

    #[test]
    fn gzip_input_is_transparent() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::default());
        enc.write_all(b"hello\nworld\n").unwrap();
        enc.finish().unwrap();
        let lines: Vec<String> = open_input(&path).unwrap().lines().map(|l| l.unwrap()).collect();
        assert_eq!(lines, ["hello", "world"]);
    }

    proptest! {
        #[test]
        fn review_round_trip(
            name in "\\PC{0,12}",
            text in "\\PC{0,40}",
            rating in 1u8..=5,
            up in 0u32..1000,
            down in 0u32..1000,
            day in 0i64..30000,
            id in 1usize..100000,
        ) {
            let r = Review {
                review_id: id as u64,
                reviewer_id: "AX".into(),
                product_id: "P9".into(),
                user_name: name,
                rating,
                upvotes: up,
                downvotes: down,
                text,
                timestamp: day,
            };
            let line = serialize_review_record(&r);
            prop_assert_eq!(parse_review_record(&line, id).unwrap(), r);
        }

        #[test]
        fn helpfulness_is_pure(up in 0u32..10_000, down in 0u32..10_000) {
            let r = Review {
                review_id: 1, reviewer_id: String::new(), product_id: String::new(),
                user_name: String::new(), rating: 3, upvotes: up, downvotes: down,
                text: String::new(), timestamp: 0,
            };
            prop_assert_eq!(helpfulness_score(&r), helpfulness_score(&r.clone()));
            prop_assert_eq!(helpfulness_score(&r), i64::from(up) - i64::from(down));
        }
    }
}
