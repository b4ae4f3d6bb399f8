//! Labeled samples over multiple prediction times, train/test splitting and
//! majority-class subsampling.
//!
//! A sample is one (IP, prediction time) pair: the 58-feature vector from
//! the history window plus a binary label saying whether the IP was reported
//! with the target category inside the prediction window. Only IPs with at
//! least one target-category alert in the history window are sampled, so a
//! model scores *recurrence*, not first sightings.
//!
//! Subsampling keeps every positive and a seeded uniform subset of the
//! negatives. The class ratio β = N⁺/N⁻ of the *original* pool is recorded
//! before subsampling and carried through; the recalibration in
//! [`crate::model`] needs it to undo the bias that training on balanced
//! data introduces. Split before subsampling: the test set must retain the
//! original class distribution.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerts::{format_ts, parse_ts, Category, Timestamp, WindowConfig};
use crate::features::{
    assemble_vector_with, ContextActivity, FeatureParams, FeatureVector, FEATURE_COUNT,
    FEATURE_NAMES,
};
use crate::store::AlertStore;

/// One labeled (IP, prediction time) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub ip: Ipv4Addr,
    pub t0: Timestamp,
    pub x: FeatureVector,
    pub y: bool,
}

/// A set of samples for one target category, with subsampling metadata.
///
/// `beta` is always the positive/negative ratio of the pool *before* any
/// subsampling; `n_pos`/`n_neg` count the samples currently present.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub target_category: Category,
    pub samples: Vec<Sample>,
    pub n_pos: u64,
    pub n_neg: u64,
    pub beta: f64,
    pub subsampled: bool,
    pub seed: u64,
    pub alpha: f64,
    pub w_h: u32,
    pub w_p: u32,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no qualifying (ip, t0) pairs")]
    EmptyDataset,
    #[error("invalid subsample ratio {0}: must be positive")]
    InvalidRatio(f64),
    #[error("dataset is already subsampled")]
    AlreadySubsampled,
    #[error("invalid test fraction {0}: must be in (0, 1)")]
    InvalidFraction(f64),
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad dataset file: {0}")]
    BadFile(String),
}

/// 1 iff the IP has at least one alert of the target category inside the
/// prediction window `(t0, t0 + w_p days]`. Alerts of other categories are
/// ignored; an alert exactly at `t0` does not count.
pub fn label(
    store: &AlertStore,
    ip: Ipv4Addr,
    window: &WindowConfig,
    target_category: Category,
) -> bool {
    store
        .query_entity(ip, window.prediction())
        .iter()
        .any(|e| e.category == target_category)
}

fn class_ratio(n_pos: u64, n_neg: u64) -> f64 {
    // a dataset without negatives cannot be subsampled or recalibrated;
    // dividing by one keeps the stored ratio finite
    n_pos as f64 / n_neg.max(1) as f64
}

impl Dataset {
    /// Wrap prepared samples, computing the class counts and ratio.
    pub fn from_samples(
        target_category: Category,
        samples: Vec<Sample>,
        alpha: f64,
        w_h: u32,
        w_p: u32,
    ) -> Dataset {
        let n_pos = samples.iter().filter(|s| s.y).count() as u64;
        let n_neg = samples.len() as u64 - n_pos;
        Dataset {
            target_category,
            samples,
            n_pos,
            n_neg,
            beta: class_ratio(n_pos, n_neg),
            subsampled: false,
            seed: 0,
            alpha,
            w_h,
            w_p,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Share of positive samples among those currently present.
    pub fn positive_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.n_pos as f64 / self.samples.len() as f64
        }
    }
}

/// Build the dataset for the given prediction times.
///
/// One sample is emitted per (ip, t0) where the IP has at least one
/// target-category alert in the history window of t0. Samples are ordered by
/// (t0, ip), so the result is independent of iteration order.
pub fn build(
    store: &AlertStore,
    prediction_times: &[Timestamp],
    target_category: Category,
    w_h: u32,
    w_p: u32,
    params: &FeatureParams,
) -> Result<Dataset, DatasetError> {
    let times: BTreeSet<Timestamp> = prediction_times.iter().copied().collect();
    let mut samples = Vec::new();
    for &t0 in &times {
        let window = WindowConfig { t0, w_h, w_p };
        let history = window.history();
        let activity = ContextActivity::compute(store, &window);
        for ip in store.ips() {
            let record = store.entity(ip).expect("listed ip has a record");
            if !record.has_category_in(history, target_category) {
                continue;
            }
            let x = assemble_vector_with(store, ip, &window, params, &activity);
            let y = label(store, ip, &window, target_category);
            samples.push(Sample { ip, t0, x, y });
        }
    }
    if samples.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    Ok(Dataset::from_samples(target_category, samples, params.ewma.alpha, w_h, w_p))
}

/// Keep all positives and a seeded uniform subset of the negatives of size
/// `round(ratio × n_pos)`, capped at the number of negatives present.
///
/// `beta` is left untouched: it keeps describing the original pool.
pub fn subsample_majority(ds: &Dataset, ratio: f64, seed: u64) -> Result<Dataset, DatasetError> {
    if ds.subsampled {
        return Err(DatasetError::AlreadySubsampled);
    }
    if !(ratio > 0.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let keep = ((ratio * ds.n_pos as f64).round() as u64).min(ds.n_neg) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives: Vec<usize> = (0..ds.samples.len()).filter(|&i| !ds.samples[i].y).collect();
    let chosen: BTreeSet<usize> = rand::seq::index::sample(&mut rng, negatives.len(), keep)
        .into_iter()
        .map(|j| negatives[j])
        .collect();
    let samples: Vec<Sample> = ds
        .samples
        .iter()
        .enumerate()
        .filter(|(i, s)| s.y || chosen.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    Ok(Dataset {
        target_category: ds.target_category,
        n_pos: ds.n_pos,
        n_neg: keep as u64,
        samples,
        beta: ds.beta,
        subsampled: true,
        seed,
        alpha: ds.alpha,
        w_h: ds.w_h,
        w_p: ds.w_p,
    })
}

/// Randomly split into (train, test). Splitting happens before any
/// subsampling so the test set keeps the original class distribution; the
/// class ratio of each side is recomputed on its own pool.
pub fn split(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if ds.subsampled {
        return Err(DatasetError::AlreadySubsampled);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(test_fraction));
    }
    let n = ds.samples.len();
    let n_test = ((test_fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_idx: BTreeSet<usize> =
        rand::seq::index::sample(&mut rng, n, n_test).into_iter().collect();
    let mut train_samples = Vec::with_capacity(n - n_test);
    let mut test_samples = Vec::with_capacity(n_test);
    for (i, s) in ds.samples.iter().enumerate() {
        if test_idx.contains(&i) {
            test_samples.push(s.clone());
        } else {
            train_samples.push(s.clone());
        }
    }
    let mut train =
        Dataset::from_samples(ds.target_category, train_samples, ds.alpha, ds.w_h, ds.w_p);
    let mut test =
        Dataset::from_samples(ds.target_category, test_samples, ds.alpha, ds.w_h, ds.w_p);
    train.seed = seed;
    test.seed = seed;
    Ok((train, test))
}

/// Metadata sidecar stored next to the feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub target_category: Category,
    pub beta: f64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub subsampled: bool,
    pub seed: u64,
    pub alpha: f64,
    pub w_h: u32,
    pub w_p: u32,
}

impl From<&Dataset> for DatasetSidecar {
    fn from(ds: &Dataset) -> Self {
        DatasetSidecar {
            target_category: ds.target_category,
            beta: ds.beta,
            n_pos: ds.n_pos,
            n_neg: ds.n_neg,
            subsampled: ds.subsampled,
            seed: ds.seed,
            alpha: ds.alpha,
            w_h: ds.w_h,
            w_p: ds.w_p,
        }
    }
}

/// Write the feature matrix as CSV: `ip,t0,<58 feature columns>,label`.
pub fn write_csv<W: Write>(ds: &Dataset, mut w: W) -> Result<(), DatasetError> {
    write!(w, "ip,t0")?;
    for name in FEATURE_NAMES {
        write!(w, ",{name}")?;
    }
    writeln!(w, ",label")?;
    for s in &ds.samples {
        write!(w, "{},{}", s.ip, format_ts(s.t0))?;
        for v in s.x.as_slice() {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", u8::from(s.y))?;
    }
    Ok(())
}

/// Write `features.csv` and `dataset.json` into a directory.
pub fn write_dir(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("features.csv"))?);
    write_csv(ds, &mut csv)?;
    csv.flush()?;
    let sidecar = serde_json::to_vec_pretty(&DatasetSidecar::from(ds))
        .map_err(|e| DatasetError::BadFile(e.to_string()))?;
    std::fs::write(dir.join("dataset.json"), sidecar)?;
    Ok(())
}

/// Read a dataset written by [`write_dir`].
pub fn read_dir(dir: &Path) -> Result<Dataset, DatasetError> {
    let sidecar: DatasetSidecar = serde_json::from_slice(&std::fs::read(dir.join("dataset.json"))?)
        .map_err(|e| DatasetError::BadFile(format!("dataset.json: {e}")))?;
    let file = std::io::BufReader::new(std::fs::File::open(dir.join("features.csv"))?);
    let samples = read_csv(file)?;
    let n_pos = samples.iter().filter(|s| s.y).count() as u64;
    let n_neg = samples.len() as u64 - n_pos;
    if n_pos != sidecar.n_pos || n_neg != sidecar.n_neg {
        return Err(DatasetError::BadFile(format!(
            "sidecar counts ({}, {}) do not match csv ({n_pos}, {n_neg})",
            sidecar.n_pos, sidecar.n_neg
        )));
    }
    Ok(Dataset {
        target_category: sidecar.target_category,
        samples,
        n_pos,
        n_neg,
        beta: sidecar.beta,
        subsampled: sidecar.subsampled,
        seed: sidecar.seed,
        alpha: sidecar.alpha,
        w_h: sidecar.w_h,
        w_p: sidecar.w_p,
    })
}

/// Parse a feature CSV produced by [`write_csv`], verifying the header.
pub fn read_csv<R: BufRead>(mut reader: R) -> Result<Vec<Sample>, DatasetError> {
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let mut expected = String::from("ip,t0");
    for name in FEATURE_NAMES {
        expected.push(',');
        expected.push_str(name);
    }
    expected.push_str(",label");
    if header.trim_end() != expected {
        return Err(DatasetError::BadFile("feature csv header does not match schema".into()));
    }
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != FEATURE_COUNT + 3 {
            return Err(DatasetError::BadFile(format!("row {row}: wrong column count")));
        }
        let ip: Ipv4Addr =
            fields[0].parse().map_err(|_| DatasetError::BadFile(format!("row {row}: bad ip")))?;
        let t0 = parse_ts(fields[1])
            .map_err(|_| DatasetError::BadFile(format!("row {row}: bad t0")))?;
        let mut values = [0.0; FEATURE_COUNT];
        for (slot, raw) in values.iter_mut().zip(&fields[2..2 + FEATURE_COUNT]) {
            *slot = raw
                .parse()
                .map_err(|_| DatasetError::BadFile(format!("row {row}: bad feature value")))?;
        }
        let y = match fields[FEATURE_COUNT + 2] {
            "0" => false,
            "1" => true,
            _ => return Err(DatasetError::BadFile(format!("row {row}: bad label"))),
        };
        samples.push(Sample { ip, t0, x: FeatureVector(values), y });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alerts::{Alert, SECS_PER_DAY};

    const DAY: i64 = SECS_PER_DAY;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn scan_alert(t: Timestamp, e: &str) -> Alert {
        Alert::new(t, ip(e), Category::Scan, 1, "d")
    }

    #[test]
    fn label_prediction_window_boundaries() {
        let mut store = AlertStore::new();
        let t0 = 50 * DAY;
        store.ingest(vec![
            scan_alert(t0 + 3600, "10.0.0.1"),
            Alert::new(t0 + 3600, ip("10.0.0.2"), Category::Access, 1, "d"),
            scan_alert(t0, "10.0.0.3"),
            scan_alert(t0 + DAY, "10.0.0.4"),
        ]);
        let w = WindowConfig::standard(t0);
        assert!(label(&store, ip("10.0.0.1"), &w, Category::Scan));
        // only an other-category alert in the window
        assert!(!label(&store, ip("10.0.0.2"), &w, Category::Scan));
        // exactly at t0: excluded
        assert!(!label(&store, ip("10.0.0.3"), &w, Category::Scan));
        // exactly at the window end: included
        assert!(label(&store, ip("10.0.0.4"), &w, Category::Scan));
    }

    #[test]
    fn build_labels_persistent_scanner() {
        let mut store = AlertStore::new();
        // one alert per day for 10 days
        store.ingest((0..10).map(|d| scan_alert(d * DAY + 100, "10.0.0.1")));
        let times = [7 * DAY, 8 * DAY, 9 * DAY];
        let ds = build(&store, &times, Category::Scan, 7, 1, &Default::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.samples.iter().all(|s| s.y));
        assert_eq!(ds.n_pos, 3);
    }

    #[test]
    fn build_requires_history_presence() {
        let mut store = AlertStore::new();
        let t0 = 50 * DAY;
        // reported only inside the prediction window
        store.ingest(vec![scan_alert(t0 + 3600, "10.0.0.9")]);
        assert!(matches!(
            build(&store, &[t0], Category::Scan, 7, 1, &Default::default()),
            Err(DatasetError::EmptyDataset)
        ));
    }

    #[test]
    fn build_orders_by_t0_then_ip() {
        let mut store = AlertStore::new();
        store.ingest(vec![scan_alert(49 * DAY, "10.0.0.2"), scan_alert(49 * DAY, "10.0.0.1")]);
        let ds = build(&store, &[51 * DAY, 50 * DAY], Category::Scan, 7, 1, &Default::default())
            .unwrap();
        let keys: Vec<(Timestamp, Ipv4Addr)> = ds.samples.iter().map(|s| (s.t0, s.ip)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(ds.len(), 4);
    }

    fn synthetic_dataset(n_pos: usize, n_neg: usize) -> Dataset {
        let samples: Vec<Sample> = (0..n_pos + n_neg)
            .map(|i| Sample {
                ip: Ipv4Addr::from(0x0a00_0000 + i as u32),
                t0: 50 * DAY,
                x: FeatureVector::zeros(),
                y: i < n_pos,
            })
            .collect();
        Dataset::from_samples(Category::Scan, samples, 0.25, 7, 1)
    }

    #[test]
    fn subsample_balances_and_keeps_original_beta() {
        let ds = synthetic_dataset(100, 900);
        assert!((ds.beta - 100.0 / 900.0).abs() < 1e-15);
        let sub = subsample_majority(&ds, 1.0, 7).unwrap();
        assert_eq!(sub.n_pos, 100);
        assert_eq!(sub.n_neg, 100);
        assert_eq!(sub.len(), 200);
        assert!(sub.subsampled);
        assert!((sub.beta - 100.0 / 900.0).abs() < 1e-15, "beta still the original ratio");
        assert_eq!(sub.samples.iter().filter(|s| s.y).count(), 100, "every positive kept");
    }

    #[test]
    fn subsample_cap_keeps_all_negatives() {
        let ds = synthetic_dataset(100, 50);
        let sub = subsample_majority(&ds, 1.0, 7).unwrap();
        assert_eq!(sub.len(), 150);
        let ips: BTreeSet<Ipv4Addr> = ds.samples.iter().map(|s| s.ip).collect();
        let sub_ips: BTreeSet<Ipv4Addr> = sub.samples.iter().map(|s| s.ip).collect();
        assert_eq!(ips, sub_ips);
    }

    #[test]
    fn subsample_is_deterministic_per_seed() {
        let ds = synthetic_dataset(50, 500);
        let a = subsample_majority(&ds, 1.0, 42).unwrap();
        let b = subsample_majority(&ds, 1.0, 42).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = subsample_majority(&ds, 1.0, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn subsample_rejects_bad_input() {
        let ds = synthetic_dataset(10, 100);
        assert!(matches!(subsample_majority(&ds, 0.0, 1), Err(DatasetError::InvalidRatio(_))));
        assert!(matches!(subsample_majority(&ds, -1.0, 1), Err(DatasetError::InvalidRatio(_))));
        let sub = subsample_majority(&ds, 1.0, 1).unwrap();
        assert!(matches!(subsample_majority(&sub, 1.0, 1), Err(DatasetError::AlreadySubsampled)));
    }

    #[test]
    fn split_partitions_and_recomputes_beta() {
        let ds = synthetic_dataset(1000, 9000);
        let (train, test) = split(&ds, 0.1, 5).unwrap();
        assert_eq!(test.len(), 1000);
        assert_eq!(train.len(), 9000);
        let train_ips: BTreeSet<Ipv4Addr> = train.samples.iter().map(|s| s.ip).collect();
        let test_ips: BTreeSet<Ipv4Addr> = test.samples.iter().map(|s| s.ip).collect();
        assert!(train_ips.is_disjoint(&test_ips));
        assert_eq!(train_ips.len() + test_ips.len(), 10000);
        // test retains roughly the original 10% positive share
        let share = test.positive_fraction();
        assert!((share - 0.1).abs() < 0.03, "test share {share}");
        assert!((train.beta - train.n_pos as f64 / train.n_neg as f64).abs() < 1e-15);
    }

    #[test]
    fn split_is_deterministic_and_validates() {
        let ds = synthetic_dataset(100, 900);
        let (a_train, a_test) = split(&ds, 0.25, 9).unwrap();
        let (b_train, b_test) = split(&ds, 0.25, 9).unwrap();
        assert_eq!(a_train.samples, b_train.samples);
        assert_eq!(a_test.samples, b_test.samples);
        assert!(matches!(split(&ds, 0.0, 1), Err(DatasetError::InvalidFraction(_))));
        assert!(matches!(split(&ds, 1.0, 1), Err(DatasetError::InvalidFraction(_))));
        let sub = subsample_majority(&ds, 1.0, 1).unwrap();
        assert!(matches!(split(&sub, 0.5, 1), Err(DatasetError::AlreadySubsampled)));
    }

    #[test]
    fn csv_round_trip() {
        let mut ds = synthetic_dataset(3, 5);
        for (i, s) in ds.samples.iter_mut().enumerate() {
            s.x.0[i % FEATURE_COUNT] = 0.1 + i as f64 * 0.37;
        }
        let dir = tempfile::tempdir().unwrap();
        write_dir(&ds, dir.path()).unwrap();
        let back = read_dir(dir.path()).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!(back.beta, ds.beta);
        assert_eq!(back.target_category, ds.target_category);
        assert_eq!(back.w_h, ds.w_h);
    }

    #[test]
    fn csv_header_is_validated() {
        let bad = "ip,t0,not_a_feature,label\n";
        assert!(matches!(read_csv(bad.as_bytes()), Err(DatasetError::BadFile(_))));
    }

    #[test]
    fn rebuild_yields_identical_labels() {
        let mut store = AlertStore::new();
        store.ingest((0..60u32).flat_map(|i| {
            let e: Ipv4Addr = format!("10.0.{}.{}", i / 8, i % 8).parse().unwrap();
            (0..10)
                .filter(move |d| (d + i as i64) % 3 != 0)
                .map(move |d| Alert::new(d * DAY + 100 + i64::from(i), e, Category::Scan, 1, "d"))
        }));
        let times = [8 * DAY, 9 * DAY];
        let a = build(&store, &times, Category::Scan, 7, 1, &Default::default()).unwrap();
        let b = build(&store, &times, Category::Scan, 7, 1, &Default::default()).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.beta, b.beta);
    }
}
