//! The fixed-order 58-dimensional feature vector for one (IP, prediction
//! time) pair.
//!
//! Count-like quantities are transformed by `ln(x + 1)`, which compresses
//! large values while keeping small differences significant. Time intervals
//! are transformed by `exp(-x)`, which maps "never" (an infinite interval)
//! to 0 and "just now" to 1. Daily series over the history window are
//! summarized by an exponentially weighted moving average,
//! `x̄ ← α·x + (1 − α)·x̄`, a cheap next-value predictor.
//!
//! Layout (fixed order, indices 0..58):
//!
//! | indices | content                                            |
//! |---------|----------------------------------------------------|
//! | 0–11    | IP-scope scan features f1..f12                     |
//! | 12–23   | IP-scope access features f1..f12                   |
//! | 24–34   | prefix-scope scan features p1..p11                 |
//! | 35–45   | prefix-scope access features p1..p11               |
//! | 46, 47  | country and ASN maliciousness rates                |
//! | 48–52   | blacklist flags bl1..bl5                           |
//! | 53      | dynamic-range list flag                            |
//! | 54–57   | hostname tags (static, dynamic, ip-in-name, no-ptr)|
//!
//! Features of both categories are always present, regardless of which
//! category a model predicts.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::net::Ipv4Addr;
use std::sync::OnceLock;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alerts::{Category, TimeRange, WindowConfig, SECS_PER_DAY};
use crate::store::{AlertEvent, AlertStore, EnrichmentTags};

/// Number of features in a vector.
pub const FEATURE_COUNT: usize = 58;

/// Canonical column names, in layout order.
pub static FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "ip_scan_alerts_1d",
    "ip_scan_volume_1d",
    "ip_scan_detectors_1d",
    "ip_scan_alerts_win",
    "ip_scan_volume_win",
    "ip_scan_detectors_win",
    "ip_scan_ewma_alerts",
    "ip_scan_ewma_volume",
    "ip_scan_ewma_presence",
    "ip_scan_recency",
    "ip_scan_mean_gap",
    "ip_scan_median_gap",
    "ip_access_alerts_1d",
    "ip_access_volume_1d",
    "ip_access_detectors_1d",
    "ip_access_alerts_win",
    "ip_access_volume_win",
    "ip_access_detectors_win",
    "ip_access_ewma_alerts",
    "ip_access_ewma_volume",
    "ip_access_ewma_presence",
    "ip_access_recency",
    "ip_access_mean_gap",
    "ip_access_median_gap",
    "pfx_scan_alerts_1d",
    "pfx_scan_volume_1d",
    "pfx_scan_detectors_1d",
    "pfx_scan_alerts_win",
    "pfx_scan_volume_win",
    "pfx_scan_detectors_win",
    "pfx_scan_ewma_alerts",
    "pfx_scan_ewma_volume",
    "pfx_scan_ewma_presence",
    "pfx_scan_ips_1d",
    "pfx_scan_ips_win",
    "pfx_access_alerts_1d",
    "pfx_access_volume_1d",
    "pfx_access_detectors_1d",
    "pfx_access_alerts_win",
    "pfx_access_volume_win",
    "pfx_access_detectors_win",
    "pfx_access_ewma_alerts",
    "pfx_access_ewma_volume",
    "pfx_access_ewma_presence",
    "pfx_access_ips_1d",
    "pfx_access_ips_win",
    "country_rate",
    "asn_rate",
    "bl1",
    "bl2",
    "bl3",
    "bl4",
    "bl5",
    "dynamic_list",
    "host_static",
    "host_dynamic",
    "host_ip_in_name",
    "host_no_ptr",
];

/// Range of the prefix-scope features within the layout.
pub const PREFIX_FEATURE_RANGE: std::ops::Range<usize> = 24..46;

/// Hex digest identifying the feature layout; models refuse vectors with a
/// different schema.
pub fn schema_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| {
        let mut hasher = Sha256::new();
        for name in FEATURE_NAMES {
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    })
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty series")]
    EmptySeries,
}

/// EWMA smoothing factor, in (0, 1). Higher values weigh recent days more.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaParams {
    pub alpha: f64,
}

impl EwmaParams {
    pub fn new(alpha: f64) -> Result<EwmaParams, FeatureError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(EwmaParams { alpha })
        } else {
            Err(FeatureError::Domain(format!("alpha must be in (0, 1), got {alpha}")))
        }
    }
}

impl Default for EwmaParams {
    fn default() -> Self {
        EwmaParams { alpha: 0.25 }
    }
}

/// Extraction knobs. `no_ptr_tag` can be disabled to drop the fourth
/// hostname rule (the feature column stays, pinned to 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub ewma: EwmaParams,
    pub no_ptr_tag: bool,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { ewma: EwmaParams::default(), no_ptr_tag: true }
    }
}

/// A fixed-order vector of [`FEATURE_COUNT`] finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn zeros() -> FeatureVector {
        FeatureVector([0.0; FEATURE_COUNT])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn from_slice(values: &[f64]) -> Result<FeatureVector, FeatureError> {
        let arr: [f64; FEATURE_COUNT] = values
            .try_into()
            .map_err(|_| FeatureError::Domain(format!("expected {FEATURE_COUNT} features")))?;
        Ok(FeatureVector(arr))
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(FEATURE_COUNT))?;
        for v in &self.0 {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FeatureVector;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "a sequence of {FEATURE_COUNT} numbers")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let mut arr = [0.0; FEATURE_COUNT];
                for (i, slot) in arr.iter_mut().enumerate() {
                    *slot = seq
                        .next_element()?
                        .ok_or_else(|| serde::de::Error::invalid_length(i, &self))?;
                }
                if seq.next_element::<f64>()?.is_some() {
                    return Err(serde::de::Error::invalid_length(FEATURE_COUNT + 1, &self));
                }
                Ok(FeatureVector(arr))
            }
        }
        deserializer.deserialize_seq(V)
    }
}

/// `ln(x + 1)`, strictly increasing, 0 at 0.
pub fn log1p_transform(x: f64) -> Result<f64, FeatureError> {
    if x < 0.0 {
        return Err(FeatureError::Domain(format!("log1p input must be non-negative, got {x}")));
    }
    Ok(x.ln_1p())
}

/// `exp(-x)` for x ≥ 0 or +∞; maps an infinite interval to 0 and 0 to 1.
pub fn expneg_transform(x: f64) -> Result<f64, FeatureError> {
    if x < 0.0 {
        return Err(FeatureError::Domain(format!("exp(-x) input must be non-negative, got {x}")));
    }
    Ok((-x).exp())
}

/// EWMA over a daily series, oldest first. Initialized to the oldest value,
/// then `x̄ ← α·x + (1 − α)·x̄` toward the most recent day.
pub fn ewma(series: &[f64], params: EwmaParams) -> Result<f64, FeatureError> {
    let (&first, rest) = series.split_first().ok_or(FeatureError::EmptySeries)?;
    // increment form: exact on constant series
    Ok(rest.iter().fold(first, |acc, &x| acc + params.alpha * (x - acc)))
}

/// Daily aggregates of one day of the history window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DayBucket {
    pub count: u64,
    pub volume: u64,
    pub present: bool,
}

/// Bucket alert (time, volume) pairs into the `w_h` days of the history
/// window, oldest day first.
///
/// Day k (1 = most recent) covers `(t0 − k·24h, t0 − (k−1)·24h]`: an alert
/// exactly on a day boundary counts toward the older day. The window's left
/// edge folds into the oldest bucket so the buckets cover the history window
/// exactly. Alerts outside the history window are ignored.
pub fn day_buckets(
    times: impl IntoIterator<Item = (i64, u64)>,
    window: &WindowConfig,
) -> Vec<DayBucket> {
    let mut buckets = vec![DayBucket::default(); window.w_h as usize];
    let history = window.history();
    for (t, v) in times {
        if !history.contains(t) {
            continue;
        }
        let k = (((window.t0 - t) / SECS_PER_DAY) + 1).min(i64::from(window.w_h)) as usize;
        let bucket = &mut buckets[window.w_h as usize - k];
        bucket.count += 1;
        bucket.volume += v;
        bucket.present = true;
    }
    buckets
}

/// The last day of the history window, `(t0 − 24h, t0)`.
fn last_day(window: &WindowConfig) -> TimeRange {
    TimeRange::new(window.t0 - SECS_PER_DAY + 1, window.t0)
}

struct ScopeAggregate {
    count_1d: u64,
    volume_1d: u64,
    detectors_1d: usize,
    count_win: u64,
    volume_win: u64,
    detectors_win: usize,
    ewma_counts: f64,
    ewma_volumes: f64,
    ewma_presence: f64,
}

fn aggregate_scope<'a>(
    events: impl Iterator<Item = &'a AlertEvent> + Clone,
    window: &WindowConfig,
    params: &FeatureParams,
) -> ScopeAggregate {
    let day1 = last_day(window);
    let mut count_1d = 0;
    let mut volume_1d = 0;
    let mut detectors_1d: HashSet<&str> = HashSet::new();
    let mut count_win = 0;
    let mut volume_win = 0;
    let mut detectors_win: HashSet<&str> = HashSet::new();
    for e in events.clone() {
        count_win += 1;
        volume_win += e.volume;
        detectors_win.insert(&e.detector);
        if day1.contains(e.t) {
            count_1d += 1;
            volume_1d += e.volume;
            detectors_1d.insert(&e.detector);
        }
    }
    let buckets = day_buckets(events.map(|e| (e.t, e.volume)), window);
    let counts: Vec<f64> = buckets.iter().map(|b| b.count as f64).collect();
    let volumes: Vec<f64> = buckets.iter().map(|b| b.volume as f64).collect();
    let presence: Vec<f64> = buckets.iter().map(|b| f64::from(b.present)).collect();
    ScopeAggregate {
        count_1d,
        volume_1d,
        detectors_1d: detectors_1d.len(),
        count_win,
        volume_win,
        detectors_win: detectors_win.len(),
        ewma_counts: ewma(&counts, params.ewma).unwrap_or(0.0),
        ewma_volumes: ewma(&volumes, params.ewma).unwrap_or(0.0),
        ewma_presence: ewma(&presence, params.ewma).unwrap_or(0.0),
    }
}

fn nine_transformed(agg: &ScopeAggregate) -> [f64; 9] {
    let lp = |x: f64| x.ln_1p();
    [
        lp(agg.count_1d as f64),
        lp(agg.volume_1d as f64),
        lp(agg.detectors_1d as f64),
        lp(agg.count_win as f64),
        lp(agg.volume_win as f64),
        lp(agg.detectors_win as f64),
        lp(agg.ewma_counts),
        lp(agg.ewma_volumes),
        agg.ewma_presence,
    ]
}

/// The 12 IP-scope features of one category: counts, volumes and detector
/// counts over the last day and the whole window (log1p), EWMAs of the three
/// daily series, and the recency / inter-alert gap features (exp(-days)).
pub fn ip_features(
    store: &AlertStore,
    ip: Ipv4Addr,
    category: Category,
    window: &WindowConfig,
    params: &FeatureParams,
) -> [f64; 12] {
    let events: Vec<&AlertEvent> = store
        .query_entity(ip, window.history())
        .iter()
        .filter(|e| e.category == category)
        .collect();
    let agg = aggregate_scope(events.iter().copied(), window, params);
    let nine = nine_transformed(&agg);

    let recency = match events.last() {
        Some(last) => (-((window.t0 - last.t) as f64 / SECS_PER_DAY as f64)).exp(),
        None => 0.0,
    };
    let (mean_gap, median_gap) = if events.len() < 2 {
        (0.0, 0.0)
    } else {
        let gaps: Vec<f64> = events
            .windows(2)
            .map(|w| (w[1].t - w[0].t) as f64 / SECS_PER_DAY as f64)
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let mut sorted = gaps;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
        };
        ((-mean).exp(), (-median).exp())
    };

    [
        nine[0], nine[1], nine[2], nine[3], nine[4], nine[5], nine[6], nine[7], nine[8],
        recency, mean_gap, median_gap,
    ]
}

/// The 11 prefix-scope features of one category: the first nine IP-scope
/// features computed over every alert in the /24 prefix, plus distinct
/// reported IP counts over the last day and the whole window (log1p).
pub fn prefix_features(
    store: &AlertStore,
    ip: Ipv4Addr,
    category: Category,
    window: &WindowConfig,
    params: &FeatureParams,
) -> [f64; 11] {
    let history = window.history();
    let day1 = last_day(window);
    let mut events: Vec<(Ipv4Addr, &AlertEvent)> = Vec::new();
    let mut ips_1d: HashSet<Ipv4Addr> = HashSet::new();
    let mut ips_win: HashSet<Ipv4Addr> = HashSet::new();
    for (member, record) in store.prefix_members(ip) {
        for e in record.events_in(history) {
            if e.category != category {
                continue;
            }
            events.push((member, e));
            ips_win.insert(member);
            if day1.contains(e.t) {
                ips_1d.insert(member);
            }
        }
    }
    let agg = aggregate_scope(events.iter().map(|(_, e)| *e), window, params);
    let nine = nine_transformed(&agg);
    [
        nine[0], nine[1], nine[2], nine[3], nine[4], nine[5], nine[6], nine[7], nine[8],
        (ips_1d.len() as f64).ln_1p(),
        (ips_win.len() as f64).ln_1p(),
    ]
}

/// Distinct active IPs per ASN and per country over one history window.
///
/// Computing this once per prediction time and passing it to
/// [`assemble_vector_with`] avoids a full store scan per IP.
#[derive(Debug, Clone, Default)]
pub struct ContextActivity {
    asn_counts: BTreeMap<u32, u64>,
    country_counts: BTreeMap<String, u64>,
}

impl ContextActivity {
    /// Count the IPs with at least one alert of any category in the history
    /// window, grouped by their ASN and country.
    pub fn compute(store: &AlertStore, window: &WindowConfig) -> ContextActivity {
        let mut activity = ContextActivity::default();
        for ip in store.active_ips(window.history(), None) {
            if let Some(asn) = store.asn_of(ip) {
                *activity.asn_counts.entry(asn).or_insert(0) += 1;
            }
            if let Some(cc) = store.country_of(ip) {
                *activity.country_counts.entry(cc.to_string()).or_insert(0) += 1;
            }
        }
        activity
    }

    fn rates(&self, store: &AlertStore, ip: Ipv4Addr) -> (f64, f64) {
        let maps = store.context();
        let country_rate = store
            .country_of(ip)
            .and_then(|cc| {
                let size = *maps.country_sizes.get(cc)?;
                let active = self.country_counts.get(cc).copied().unwrap_or(0);
                Some((active as f64 / size as f64).clamp(0.0, 1.0))
            })
            .unwrap_or(0.0);
        let asn_rate = store
            .asn_of(ip)
            .and_then(|asn| {
                let size = *maps.asn_sizes.get(&asn)?;
                let active = self.asn_counts.get(&asn).copied().unwrap_or(0);
                Some((active as f64 / size as f64).clamp(0.0, 1.0))
            })
            .unwrap_or(0.0);
        (country_rate, asn_rate)
    }
}

/// Fraction of each of the IP's country and ASN address space reported
/// malicious (any category) within the history window. 0 for unmapped IPs.
pub fn context_rates(store: &AlertStore, ip: Ipv4Addr, window: &WindowConfig) -> (f64, f64) {
    ContextActivity::compute(store, window).rates(store, ip)
}

/// Assemble the full 58-feature vector for one (IP, window) pair.
pub fn assemble_vector(
    store: &AlertStore,
    ip: Ipv4Addr,
    window: &WindowConfig,
    params: &FeatureParams,
) -> FeatureVector {
    let activity = ContextActivity::compute(store, window);
    assemble_vector_with(store, ip, window, params, &activity)
}

/// [`assemble_vector`] with a precomputed [`ContextActivity`] for the window.
pub fn assemble_vector_with(
    store: &AlertStore,
    ip: Ipv4Addr,
    window: &WindowConfig,
    params: &FeatureParams,
    activity: &ContextActivity,
) -> FeatureVector {
    let mut values = [0.0; FEATURE_COUNT];
    values[0..12].copy_from_slice(&ip_features(store, ip, Category::Scan, window, params));
    values[12..24].copy_from_slice(&ip_features(store, ip, Category::Access, window, params));
    values[24..35].copy_from_slice(&prefix_features(store, ip, Category::Scan, window, params));
    values[35..46].copy_from_slice(&prefix_features(store, ip, Category::Access, window, params));
    let (country_rate, asn_rate) = activity.rates(store, ip);
    values[46] = country_rate;
    values[47] = asn_rate;
    let default_tags = EnrichmentTags::default();
    let tags = store.entity(ip).map(|r| &r.enrichment).unwrap_or(&default_tags);
    for (i, &flag) in tags.on_blacklist.iter().enumerate() {
        values[48 + i] = f64::from(flag);
    }
    values[53] = f64::from(tags.on_dynamic_list);
    values[54] = f64::from(tags.tag_static);
    values[55] = f64::from(tags.tag_dynamic);
    values[56] = f64::from(tags.tag_ip_in_hostname);
    values[57] = f64::from(tags.tag_no_ptr && params.no_ptr_tag);
    debug_assert!(values.iter().all(|v| v.is_finite()));
    FeatureVector(values)
}
