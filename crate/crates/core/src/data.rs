//! Ratings ingestion, preprocessing into train/validation/test user splits,
//! item weights, and a seeded synthetic ratings generator.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, fnv1a64, RngStream};
use crate::recsys::{EvalSplit, EvalUser, ItemWeights};

pub const POSITIVE_THRESHOLD: f64 = 3.5;
pub const DEFAULT_RATIOS: [f64; 3] = [0.90, 0.05, 0.05];
pub const DEFAULT_MASK_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: String,
    pub item: String,
    pub rating: f64,
    pub timestamp: i64,
}

/// Ratings with at most one record per `(user, item)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingsTable {
    records: Vec<Rating>,
}

impl RatingsTable {
    /// Deduplicates `(user, item)` pairs, keeping the latest timestamp
    /// (the later record on ties). Order of first appearance is kept.
    pub fn new(records: Vec<Rating>) -> Self {
        let mut index: HashMap<(String, String), usize> = HashMap::new();
        let mut kept: Vec<Rating> = Vec::with_capacity(records.len());
        for r in records {
            match index.get(&(r.user.clone(), r.item.clone())) {
                Some(&i) => {
                    if r.timestamp >= kept[i].timestamp {
                        kept[i] = r;
                    }
                }
                None => {
                    index.insert((r.user.clone(), r.item.clone()), kept.len());
                    kept.push(r);
                }
            }
        }
        Self { records: kept }
    }

    pub fn records(&self) -> &[Rating] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reads a `user,item,rating,timestamp` CSV with a header row.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let expected = ["user", "item", "rating", "timestamp"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected header `user,item,rating,timestamp`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut records = Vec::new();
        for row in reader.deserialize::<Rating>() {
            let r = row.map_err(|e| Error::csv(path, e))?;
            if !r.rating.is_finite() {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("non-finite rating for ({}, {})", r.user, r.item),
                });
            }
            records.push(r);
        }
        Ok(Self::new(records))
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        for r in &self.records {
            writer.serialize(r).map_err(|e| Error::csv(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    /// Every item id in the table, sorted.
    pub fn item_vocabulary(&self) -> Vec<String> {
        let mut items: Vec<String> = self.records.iter().map(|r| r.item.clone()).collect();
        items.sort();
        items.dedup();
        items
    }
}

/// Reads an `item,price` CSV.
pub fn read_prices(path: &Path) -> Result<HashMap<String, f64>> {
    #[derive(Deserialize)]
    struct Row {
        item: String,
        price: f64,
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = HashMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        if !(row.price.is_finite() && row.price > 0.0) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("price for item {} must be finite and > 0", row.item),
            });
        }
        out.insert(row.item, row.price);
    }
    Ok(out)
}

pub fn write_prices(path: &Path, prices: &[(String, f64)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    writer.write_record(["item", "price"]).map_err(|e| Error::csv(path, e))?;
    for (item, price) in prices {
        writer
            .write_record([item.as_str(), &format!("{price:?}")])
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Binary user-item matrix stored as sorted item-index rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Interactions {
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub rows: Vec<Vec<u32>>,
}

impl Interactions {
    pub fn num_interactions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Keeps ratings `>= threshold` as positives. The item vocabulary spans the
/// whole table; users without positives are dropped. Users are sorted by id.
pub fn binarize(table: &RatingsTable, threshold: f64) -> Interactions {
    let items = table.item_vocabulary();
    let item_index: HashMap<&str, u32> = items
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let mut by_user: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for r in table.records() {
        if r.rating >= threshold {
            by_user.entry(&r.user).or_default().push(item_index[r.item.as_str()]);
        }
    }
    let (users, rows) = by_user
        .into_iter()
        .map(|(u, mut row)| {
            row.sort_unstable();
            (u.to_string(), row)
        })
        .unzip();
    Interactions { users, items, rows }
}

/// User indices per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..num_users` partitioned by `ratios`
/// (validation and test sizes are rounded, train takes the rest).
pub fn split_users(num_users: usize, ratios: [f64; 3], seed: u64) -> Result<UserSplit> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("ratios", "entries must be finite and > 0"));
    }
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("ratios", "must sum to 1"));
    }
    let n_val = (num_users as f64 * ratios[1]).round() as usize;
    let n_test = (num_users as f64 * ratios[2]).round() as usize;
    if n_val == 0 || n_test == 0 || n_val + n_test >= num_users {
        return Err(Error::invalid(
            "users",
            format!("{num_users} users are too few for non-empty splits"),
        ));
    }
    let mut order: Vec<usize> = (0..num_users).collect();
    shuffle(&mut order, &mut RngStream::new(seed));
    let test = order.split_off(num_users - n_test);
    let validation = order.split_off(num_users - n_test - n_val);
    Ok(UserSplit {
        train: order,
        validation,
        test,
    })
}

fn shuffle<T>(v: &mut [T], rng: &mut RngStream) {
    for i in (1..v.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        v.swap(i, j);
    }
}

/// Per-user masking seed: `derive_seed(seed, fnv1a64(user_id))`.
pub fn user_seed(seed: u64, user_id: &str) -> u64 {
    derive_seed(seed, fnv1a64(user_id.as_bytes()))
}

/// Outcome of [`mask_interactions`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedUsers {
    pub users: Vec<String>,
    pub split: EvalSplit,
    pub excluded: Vec<String>,
}

/// Holds out `ceil(fraction * degree)` items of every user (at least one
/// item always stays in the fold-in set). Users with fewer than two
/// interactions are excluded and logged.
pub fn mask_interactions(
    users: &[String],
    rows: &[Vec<u32>],
    fraction: f64,
    seed: u64,
) -> Result<MaskedUsers> {
    if users.len() != rows.len() {
        return Err(Error::LengthMismatch {
            expected: users.len(),
            actual: rows.len(),
        });
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("mask fraction", "must lie in (0, 1)"));
    }
    let mut out = MaskedUsers {
        users: Vec::new(),
        split: EvalSplit::default(),
        excluded: Vec::new(),
    };
    for (user, row) in users.iter().zip(rows) {
        let degree = row.len();
        if degree < 2 {
            warn!("excluding evaluation user {user}: {degree} interaction(s)");
            out.excluded.push(user.clone());
            continue;
        }
        let count = ((fraction * degree as f64 - 1e-9).ceil() as usize).clamp(1, degree - 1);
        let mut items = row.clone();
        shuffle(&mut items, &mut RngStream::new(user_seed(seed, user)));
        let mut held_out = items.split_off(degree - count);
        items.sort_unstable();
        held_out.sort_unstable();
        out.users.push(user.clone());
        out.split.users.push(EvalUser {
            fold_in: items,
            held_out,
        });
    }
    Ok(out)
}

/// First-rating timestamp per vocabulary item, min-max normalized across
/// items. A single distinct timestamp maps every item to 0.5.
pub fn recency_scores(table: &RatingsTable, items: &[String]) -> Result<Vec<f64>> {
    let mut first: HashMap<&str, i64> = HashMap::new();
    for r in table.records() {
        first
            .entry(&r.item)
            .and_modify(|t| *t = (*t).min(r.timestamp))
            .or_insert(r.timestamp);
    }
    let times = items
        .iter()
        .map(|i| {
            first
                .get(i.as_str())
                .copied()
                .ok_or_else(|| Error::invalid("items", format!("item {i} has no timestamp")))
        })
        .collect::<Result<Vec<i64>>>()?;
    let (Some(&lo), Some(&hi)) = (times.iter().min(), times.iter().max()) else {
        return Ok(Vec::new());
    };
    if lo == hi {
        return Ok(vec![0.5; times.len()]);
    }
    let span = (hi - lo) as f64;
    Ok(times.iter().map(|&t| (t - lo) as f64 / span).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
    #[serde(default = "default_mask_fraction")]
    pub mask_fraction: f64,
}

fn default_threshold() -> f64 {
    POSITIVE_THRESHOLD
}

fn default_ratios() -> [f64; 3] {
    DEFAULT_RATIOS
}

fn default_mask_fraction() -> f64 {
    DEFAULT_MASK_FRACTION
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            threshold: POSITIVE_THRESHOLD,
            ratios: DEFAULT_RATIOS,
            mask_fraction: DEFAULT_MASK_FRACTION,
        }
    }
}

/// Preprocessed dataset ready for training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub items: Vec<String>,
    pub train_users: Vec<String>,
    pub train: Vec<Vec<u32>>,
    pub validation_users: Vec<String>,
    pub validation: EvalSplit,
    pub test_users: Vec<String>,
    pub test: EvalSplit,
    pub excluded_users: Vec<String>,
    pub weights: ItemWeights,
    pub config: PreprocessConfig,
    pub seed: u64,
}

/// Binarize, split users, mask evaluation users and attach item weights.
pub fn prepare_dataset(
    table: &RatingsTable,
    prices: &HashMap<String, f64>,
    config: PreprocessConfig,
    seed: u64,
) -> Result<SplitDataset> {
    let interactions = binarize(table, config.threshold);
    if interactions.rows.is_empty() {
        return Err(Error::Empty("positive interactions"));
    }
    let split = split_users(interactions.users.len(), config.ratios, derive_seed(seed, 0))?;
    let pick = |idx: &[usize]| -> (Vec<String>, Vec<Vec<u32>>) {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        idx.iter()
            .map(|&u| (interactions.users[u].clone(), interactions.rows[u].clone()))
            .unzip()
    };
    let (train_users, train) = pick(&split.train);
    let (val_users, val_rows) = pick(&split.validation);
    let (test_users, test_rows) = pick(&split.test);
    let mask_seed = derive_seed(seed, 1);
    let validation = mask_interactions(&val_users, &val_rows, config.mask_fraction, mask_seed)?;
    let test = mask_interactions(&test_users, &test_rows, config.mask_fraction, mask_seed)?;

    let price_vec = interactions
        .items
        .iter()
        .map(|i| {
            prices
                .get(i)
                .copied()
                .ok_or_else(|| Error::invalid("prices", format!("no price for item {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let recency = recency_scores(table, &interactions.items)?;
    let weights = ItemWeights::new(price_vec, recency)?;
    let mut excluded_users = validation.excluded.clone();
    excluded_users.extend(test.excluded.iter().cloned());
    info!(
        "dataset: {} items, {} train / {} validation / {} test users, {} excluded",
        interactions.items.len(),
        train_users.len(),
        validation.users.len(),
        test.users.len(),
        excluded_users.len()
    );
    Ok(SplitDataset {
        items: interactions.items,
        train_users,
        train,
        validation_users: validation.users,
        validation: validation.split,
        test_users: test.users,
        test: test.split,
        excluded_users,
        weights,
        config,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCounts {
    pub items: usize,
    pub train_users: usize,
    pub validation_users: usize,
    pub test_users: usize,
    pub train_interactions: usize,
    pub excluded_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub threshold: f64,
    pub mask_fraction: f64,
    pub counts: SplitCounts,
    pub excluded_users: Vec<String>,
    pub files: Vec<String>,
}

impl SplitDataset {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            ratios: self.config.ratios,
            threshold: self.config.threshold,
            mask_fraction: self.config.mask_fraction,
            counts: SplitCounts {
                items: self.items.len(),
                train_users: self.train_users.len(),
                validation_users: self.validation_users.len(),
                test_users: self.test_users.len(),
                train_interactions: self.train.iter().map(Vec::len).sum(),
                excluded_users: self.excluded_users.len(),
            },
            excluded_users: self.excluded_users.clone(),
            files: ["items.csv", "train.csv", "validation.csv", "test.csv"]
                .map(String::from)
                .to_vec(),
        }
    }

    /// Writes `items.csv`, `train.csv`, `validation.csv`, `test.csv` and
    /// `split_manifest.json` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let path = dir.join("items.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["index", "item", "price", "recency_raw", "recency"])
            .map_err(|e| Error::csv(&path, e))?;
        for (j, item) in self.items.iter().enumerate() {
            w.write_record([
                j.to_string(),
                item.clone(),
                format!("{:?}", self.weights.prices()[j]),
                format!("{:?}", self.weights.recency_raw()[j]),
                format!("{:?}", self.weights.recency_transformed()[j]),
            ])
            .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("train.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["user", "item"]).map_err(|e| Error::csv(&path, e))?;
        for (user, row) in self.train_users.iter().zip(&self.train) {
            for &j in row {
                w.write_record([user.as_str(), self.items[j as usize].as_str()])
                    .map_err(|e| Error::csv(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        for (name, users, split) in [
            ("validation.csv", &self.validation_users, &self.validation),
            ("test.csv", &self.test_users, &self.test),
        ] {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
            w.write_record(["user", "item", "role"]).map_err(|e| Error::csv(&path, e))?;
            for (user, eu) in users.iter().zip(&split.users) {
                for (role, list) in [("fold_in", &eu.fold_in), ("held_out", &eu.held_out)] {
                    for &j in list {
                        w.write_record([user.as_str(), self.items[j as usize].as_str(), role])
                            .map_err(|e| Error::csv(&path, e))?;
                    }
                }
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }

        let path = dir.join("split_manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }
}

/// Log-normal price distribution `exp(N(mu, sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceDistribution {
    pub log_mean: f64,
    pub log_std: f64,
}

impl Default for PriceDistribution {
    fn default() -> Self {
        Self {
            log_mean: 2.5,
            log_std: 0.8,
        }
    }
}

/// Item availability times uniform on `[start, end]` (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecencyDistribution {
    pub start: i64,
    pub end: i64,
}

impl Default for RecencyDistribution {
    fn default() -> Self {
        Self {
            start: 946_684_800,
            end: 1_577_836_800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Target mean ratings per user.
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_factors")]
    pub factors: usize,
    #[serde(default)]
    pub price: PriceDistribution,
    #[serde(default)]
    pub recency: RecencyDistribution,
}

fn default_density() -> f64 {
    20.0
}

fn default_clusters() -> usize {
    8
}

fn default_factors() -> usize {
    8
}

impl SynthConfig {
    pub fn new(num_users: usize, num_items: usize) -> Self {
        Self {
            num_users,
            num_items,
            density: default_density(),
            clusters: default_clusters(),
            factors: default_factors(),
            price: PriceDistribution::default(),
            recency: RecencyDistribution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::config("num_users", "must be >= 1"));
        }
        if self.num_items == 0 {
            return Err(Error::config("num_items", "must be >= 1"));
        }
        if !(self.density >= 1.0 && self.density <= self.num_items as f64) {
            return Err(Error::config("density", "must lie in [1, num_items]"));
        }
        if self.clusters == 0 || self.factors == 0 {
            return Err(Error::config("clusters", "clusters and factors must be >= 1"));
        }
        if !(self.price.log_std >= 0.0 && self.price.log_std.is_finite() && self.price.log_mean.is_finite()) {
            return Err(Error::config("price", "log_mean must be finite and log_std >= 0"));
        }
        if self.recency.end <= self.recency.start {
            return Err(Error::config("recency", "end must be after start"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub ratings: RatingsTable,
    pub prices: Vec<(String, f64)>,
}

impl SyntheticData {
    pub fn price_map(&self) -> HashMap<String, f64> {
        self.prices.iter().cloned().collect()
    }
}

/// Clustered latent-factor ratings. Users and items belong to clusters;
/// each user rates about `density` items drawn by Gumbel-top-k on affinity,
/// and ratings follow affinity in half-star steps on `[0.5, 5]`. Every
/// rating happens after its item became available.
pub fn synth_dataset(config: &SynthConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let f = config.factors;
    let mut rng = RngStream::new(derive_seed(seed, 0));
    let centers: Vec<Vec<f64>> = (0..config.clusters)
        .map(|_| (0..f).map(|_| rng.normal()).collect())
        .collect();
    let around = |rng: &mut RngStream, c: &[f64]| -> Vec<f64> {
        c.iter().map(|v| v + 0.5 * rng.normal()).collect()
    };

    let mut item_rng = RngStream::new(derive_seed(seed, 1));
    let item_factors: Vec<Vec<f64>> = (0..config.num_items)
        .map(|_| {
            let c = item_rng.below(config.clusters as u64) as usize;
            around(&mut item_rng, &centers[c])
        })
        .collect();
    let width = (config.num_items.max(10) as f64).log10().ceil() as usize;
    let item_ids: Vec<String> = (0..config.num_items).map(|j| format!("i{j:0width$}")).collect();
    let prices: Vec<(String, f64)> = item_ids
        .iter()
        .map(|id| {
            let p = (config.price.log_mean + config.price.log_std * item_rng.normal()).exp();
            (id.clone(), (p * 100.0).round().max(1.0) / 100.0)
        })
        .collect();
    let span = (config.recency.end - config.recency.start) as f64;
    let available: Vec<i64> = (0..config.num_items)
        .map(|_| config.recency.start + (item_rng.uniform() * span) as i64)
        .collect();

    let scale = (f as f64).sqrt();
    let mut records = Vec::new();
    let width = (config.num_users.max(10) as f64).log10().ceil() as usize;
    for u in 0..config.num_users {
        let mut r = RngStream::new(derive_seed(derive_seed(seed, 2), u as u64));
        let c = r.below(config.clusters as u64) as usize;
        let factors = around(&mut r, &centers[c]);
        let count = ((config.density * (0.5 + r.uniform())).round() as usize).clamp(1, config.num_items);
        let affinity: Vec<f64> = item_factors
            .iter()
            .map(|v| v.iter().zip(&factors).map(|(a, b)| a * b).sum::<f64>() / scale)
            .collect();
        let mut keyed: Vec<(f64, usize)> = affinity
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let gumbel = -(-(r.uniform().max(1e-300)).ln()).ln();
                (2.0 * a + gumbel, j)
            })
            .collect();
        keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let user = format!("u{u:0width$}");
        for &(_, j) in keyed.iter().take(count) {
            let raw = 3.0 + 1.2 * affinity[j] + 0.6 * r.normal();
            let rating = ((raw * 2.0).round() / 2.0).clamp(0.5, 5.0);
            let after = (r.uniform() * (config.recency.end - available[j]) as f64) as i64;
            records.push(Rating {
                user: user.clone(),
                item: item_ids[j].clone(),
                rating,
                timestamp: available[j] + after,
            });
        }
    }
    Ok(SyntheticData {
        ratings: RatingsTable::new(records),
        prices,
    })
}
