//! Time-indexed alert storage keyed by IP and /24 prefix, per-IP enrichment,
//! and snapshot persistence.
//!
//! The store keeps one record per reported entity. Records hold the entity's
//! alerts sorted by time plus enrichment gathered out of band (blacklist
//! flags, hostname tags, ASN, country). Windowed queries against the store
//! drive feature extraction, labeling and blacklist evaluation.
//!
//! Writes take `&mut self`, reads take `&self`, so the single-writer /
//! many-reader discipline is enforced by the borrow checker.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alerts::{Alert, Category, TimeRange, Timestamp};

/// The /24 network containing `ip`.
pub fn prefix24(ip: Ipv4Addr) -> Ipv4Addr {
    Ipv4Addr::from(u32::from(ip) & 0xffff_ff00)
}

/// One stored alert, without the source address (implied by the record key).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlertEvent {
    pub t: Timestamp,
    pub category: Category,
    pub volume: u64,
    pub detector: String,
}

/// Hostname-derived boolean tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HostnameTags {
    pub is_static: bool,
    pub is_dynamic: bool,
    pub ip_in_hostname: bool,
    pub no_ptr: bool,
}

/// Point-in-time enrichment for one IP: blacklist presence, dynamic-range
/// listing, resolved hostname and the tags derived from it, ASN and country.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentTags {
    pub on_blacklist: [bool; 5],
    pub on_dynamic_list: bool,
    pub hostname: Option<String>,
    pub tag_static: bool,
    pub tag_dynamic: bool,
    pub tag_ip_in_hostname: bool,
    pub tag_no_ptr: bool,
    pub asn: Option<u32>,
    pub country: Option<String>,
}

impl Default for EnrichmentTags {
    fn default() -> Self {
        // No hostname known means the no-PTR tag is set.
        EnrichmentTags {
            on_blacklist: [false; 5],
            on_dynamic_list: false,
            hostname: None,
            tag_static: false,
            tag_dynamic: false,
            tag_ip_in_hostname: false,
            tag_no_ptr: true,
            asn: None,
            country: None,
        }
    }
}

/// Per-IP aggregate: time-sorted alerts plus enrichment.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EntityRecord {
    alerts: Vec<AlertEvent>,
    pub enrichment: EnrichmentTags,
}

impl EntityRecord {
    pub fn alerts(&self) -> &[AlertEvent] {
        &self.alerts
    }

    /// Alerts with `range.start <= t < range.end`, time-ascending.
    pub fn events_in(&self, range: TimeRange) -> &[AlertEvent] {
        let lo = self.alerts.partition_point(|a| a.t < range.start);
        let hi = self.alerts.partition_point(|a| a.t < range.end);
        &self.alerts[lo..hi]
    }

    pub fn has_category_in(&self, range: TimeRange, category: Category) -> bool {
        self.events_in(range).iter().any(|a| a.category == category)
    }

    /// Insert keeping (t, category, volume, detector) order; false on duplicate.
    fn insert(&mut self, event: AlertEvent) -> bool {
        match self.alerts.binary_search(&event) {
            Ok(_) => false,
            Err(pos) => {
                self.alerts.insert(pos, event);
                true
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub scan: u64,
    pub access: u64,
    pub duplicates: u64,
}

impl IngestSummary {
    pub fn total(&self) -> u64 {
        self.scan + self.access
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichSummary {
    pub applied: u64,
    pub skipped: u64,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("context map i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {reason}")]
    BadLine { file: String, line: u64, reason: String },
}

const SNAPSHOT_MAGIC: &[u8; 6] = b"FMPSNP";
const SNAPSHOT_VERSION: u8 = 1;

/// Longest-prefix-match table over IPv4 CIDRs.
///
/// One map per prefix length; lookups probe lengths from /32 down.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PrefixTable<V> {
    by_len: BTreeMap<u8, BTreeMap<u32, V>>,
}

impl<V> PrefixTable<V> {
    pub fn new() -> Self {
        PrefixTable { by_len: BTreeMap::new() }
    }

    pub fn insert(&mut self, base: Ipv4Addr, len: u8, value: V) {
        let masked = u32::from(base) & prefix_mask(len);
        self.by_len.entry(len).or_default().insert(masked, value);
    }

    pub fn lookup(&self, ip: Ipv4Addr) -> Option<&V> {
        let ip = u32::from(ip);
        self.by_len
            .iter()
            .rev()
            .find_map(|(&len, entries)| entries.get(&(ip & prefix_mask(len))))
    }

    pub fn is_empty(&self) -> bool {
        self.by_len.values().all(|m| m.is_empty())
    }
}

/// Network mask of a prefix length.
pub fn prefix_mask(len: u8) -> u32 {
    match len {
        0 => 0,
        n if n >= 32 => u32::MAX,
        n => !(u32::MAX >> n),
    }
}

/// Parse `a.b.c.d/len` (or a bare address, meaning /32).
pub fn parse_cidr(s: &str) -> Result<(Ipv4Addr, u8), String> {
    let (addr, len) = match s.split_once('/') {
        Some((a, l)) => {
            let len: u8 = l.parse().map_err(|_| format!("bad prefix length {l:?}"))?;
            if len > 32 {
                return Err(format!("prefix length {len} out of range"));
            }
            (a, len)
        }
        None => (s, 32),
    };
    let ip: Ipv4Addr = addr.parse().map_err(|_| format!("bad address {addr:?}"))?;
    Ok((ip, len))
}

/// ASN and country lookup tables plus the address-space sizes used as
/// denominators of the maliciousness rates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ContextMaps {
    pub ip_to_asn: PrefixTable<u32>,
    pub ip_to_country: PrefixTable<String>,
    pub asn_sizes: BTreeMap<u32, u64>,
    pub country_sizes: BTreeMap<String, u64>,
}

impl ContextMaps {
    /// Load `asn_map.csv`, `cc_map.csv`, `asn_sizes.csv`, `cc_sizes.csv`
    /// from a directory. Two-column CSV, no header, `#` comments.
    pub fn load_dir(dir: &Path) -> Result<ContextMaps, ContextError> {
        let mut maps = ContextMaps::default();
        for_each_csv_row(&dir.join("asn_map.csv"), |fields, ctx| {
            let (base, len) = parse_cidr(fields[0]).map_err(|e| ctx.bad(e))?;
            let asn: u32 = fields[1].parse().map_err(|_| ctx.bad("bad ASN"))?;
            maps.ip_to_asn.insert(base, len, asn);
            Ok(())
        })?;
        for_each_csv_row(&dir.join("cc_map.csv"), |fields, ctx| {
            let (base, len) = parse_cidr(fields[0]).map_err(|e| ctx.bad(e))?;
            let cc = validate_cc(fields[1]).map_err(|e| ctx.bad(e))?;
            maps.ip_to_country.insert(base, len, cc);
            Ok(())
        })?;
        for_each_csv_row(&dir.join("asn_sizes.csv"), |fields, ctx| {
            let asn: u32 = fields[0].parse().map_err(|_| ctx.bad("bad ASN"))?;
            let count: u64 = fields[1].parse().map_err(|_| ctx.bad("bad count"))?;
            if count < 1 {
                return Err(ctx.bad("size must be at least 1"));
            }
            maps.asn_sizes.insert(asn, count);
            Ok(())
        })?;
        for_each_csv_row(&dir.join("cc_sizes.csv"), |fields, ctx| {
            let cc = validate_cc(fields[0]).map_err(|e| ctx.bad(e))?;
            let count: u64 = fields[1].parse().map_err(|_| ctx.bad("bad count"))?;
            if count < 1 {
                return Err(ctx.bad("size must be at least 1"));
            }
            maps.country_sizes.insert(cc, count);
            Ok(())
        })?;
        Ok(maps)
    }

    pub fn is_empty(&self) -> bool {
        self.ip_to_asn.is_empty() && self.ip_to_country.is_empty()
    }
}

struct RowCtx<'a> {
    file: &'a str,
    line: u64,
}

impl RowCtx<'_> {
    fn bad(&self, reason: impl Into<String>) -> ContextError {
        ContextError::BadLine { file: self.file.to_string(), line: self.line, reason: reason.into() }
    }
}

fn for_each_csv_row(
    path: &Path,
    mut f: impl FnMut([&str; 2], &RowCtx) -> Result<(), ContextError>,
) -> Result<(), ContextError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = RowCtx { file: &file, line: i as u64 + 1 };
        let Some((a, b)) = line.split_once(',') else {
            return Err(ctx.bad("expected two comma-separated fields"));
        };
        f([a.trim(), b.trim()], &ctx)?;
    }
    Ok(())
}

fn validate_cc(s: &str) -> Result<String, String> {
    if s.len() == 2 && s.chars().all(|c| c.is_ascii_alphabetic()) {
        Ok(s.to_ascii_uppercase())
    } else {
        Err(format!("bad country code {s:?}"))
    }
}

/// Derive the four hostname tags for an IP.
///
/// * static: hostname contains `static` (case-insensitive);
/// * dynamic: hostname contains one of `dynamic`, `dyn`, `dsl`, `dial`, `pool`;
/// * ip-in-hostname: all four decimal octets appear in order as digit runs,
///   forward or reversed;
/// * no-ptr: no hostname at all.
pub fn derive_hostname_tags(hostname: Option<&str>, ip: Ipv4Addr) -> HostnameTags {
    let Some(h) = hostname else {
        return HostnameTags { no_ptr: true, ..HostnameTags::default() };
    };
    let lower = h.to_ascii_lowercase();
    const DYNAMIC_KEYWORDS: [&str; 5] = ["dynamic", "dyn", "dsl", "dial", "pool"];
    HostnameTags {
        is_static: lower.contains("static"),
        is_dynamic: DYNAMIC_KEYWORDS.iter().any(|k| lower.contains(k)),
        ip_in_hostname: ip_encoded_in(&lower, ip),
        no_ptr: false,
    }
}

fn ip_encoded_in(hostname: &str, ip: Ipv4Addr) -> bool {
    let runs = digit_runs(hostname);
    let octets = ip.octets().map(u32::from);
    let reversed = [octets[3], octets[2], octets[1], octets[0]];
    is_subsequence(&runs, &octets) || is_subsequence(&runs, &reversed)
}

/// Maximal ASCII digit runs, parsed numerically (so `007` matches octet 7).
fn digit_runs(s: &str) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current: Option<u32> = None;
    for b in s.bytes() {
        if b.is_ascii_digit() {
            let digit = u32::from(b - b'0');
            current = Some(current.unwrap_or(0).saturating_mul(10).saturating_add(digit));
        } else if let Some(v) = current.take() {
            runs.push(v);
        }
    }
    if let Some(v) = current {
        runs.push(v);
    }
    runs
}

fn is_subsequence(haystack: &[u32], needle: &[u32; 4]) -> bool {
    let mut need = needle.iter();
    let mut next = need.next();
    for &v in haystack {
        if Some(&v) == next {
            next = need.next();
            if next.is_none() {
                return true;
            }
        }
    }
    false
}

/// Enrichment interchange record.
#[derive(Deserialize)]
struct WireEnrichment {
    ip: String,
    #[serde(default)]
    hostname: Option<String>,
    bl: Vec<u8>,
    #[serde(rename = "dyn")]
    dynamic: u8,
    #[serde(default)]
    asn: Option<u32>,
    #[serde(default)]
    cc: Option<String>,
}

/// The alert store: one [`EntityRecord`] per reported IP, a /24 membership
/// index, and the loaded context maps.
#[derive(Debug, Default)]
pub struct AlertStore {
    entities: BTreeMap<u32, EntityRecord>,
    prefixes: BTreeMap<u32, BTreeSet<u32>>,
    context: ContextMaps,
}

#[derive(Serialize, Deserialize)]
struct SnapshotPayload {
    entities: BTreeMap<u32, EntityRecord>,
    context: ContextMaps,
}

impl AlertStore {
    pub fn new() -> AlertStore {
        AlertStore::default()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// All known IPs, ascending.
    pub fn ips(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.entities.keys().map(|&k| Ipv4Addr::from(k))
    }

    pub fn entity(&self, ip: Ipv4Addr) -> Option<&EntityRecord> {
        self.entities.get(&u32::from(ip))
    }

    pub fn context(&self) -> &ContextMaps {
        &self.context
    }

    pub fn set_context(&mut self, maps: ContextMaps) {
        self.context = maps;
    }

    /// ASN of an IP: per-IP enrichment first, then longest-prefix lookup.
    pub fn asn_of(&self, ip: Ipv4Addr) -> Option<u32> {
        self.entity(ip)
            .and_then(|r| r.enrichment.asn)
            .or_else(|| self.context.ip_to_asn.lookup(ip).copied())
    }

    /// Country of an IP: per-IP enrichment first, then longest-prefix lookup.
    pub fn country_of(&self, ip: Ipv4Addr) -> Option<&str> {
        self.entity(ip)
            .and_then(|r| r.enrichment.country.as_deref())
            .or_else(|| self.context.ip_to_country.lookup(ip).map(|s| s.as_str()))
    }

    /// Insert a batch of alerts. Alerts need not be time-sorted; exact
    /// duplicates (same time, source, category, volume, detector) are
    /// stored once. Ingest order never affects any query result.
    pub fn ingest<I: IntoIterator<Item = Alert>>(&mut self, alerts: I) -> IngestSummary {
        let mut summary = IngestSummary::default();
        for alert in alerts {
            let key = u32::from(alert.source());
            let event = AlertEvent {
                t: alert.time(),
                category: alert.category(),
                volume: alert.volume(),
                detector: alert.detector().to_string(),
            };
            let record = self.entities.entry(key).or_default();
            if record.insert(event) {
                match alert.category() {
                    Category::Scan => summary.scan += 1,
                    Category::Access => summary.access += 1,
                }
                self.prefixes.entry(key & 0xffff_ff00).or_default().insert(key);
            } else {
                summary.duplicates += 1;
            }
        }
        summary
    }

    /// All and only the alerts of `ip` with `start <= t < end`, time-ascending.
    /// Unknown IPs yield an empty slice.
    pub fn query_entity(&self, ip: Ipv4Addr, range: TimeRange) -> &[AlertEvent] {
        self.entity(ip).map(|r| r.events_in(range)).unwrap_or(&[])
    }

    /// Alerts of every IP in the /24 prefix containing `prefix_ip`, within
    /// the range, ordered by (time, ip).
    pub fn query_prefix(
        &self,
        prefix_ip: Ipv4Addr,
        range: TimeRange,
    ) -> Vec<(Ipv4Addr, &AlertEvent)> {
        let mut out: Vec<(Ipv4Addr, &AlertEvent)> = self
            .prefix_members(prefix_ip)
            .flat_map(|(ip, rec)| rec.events_in(range).iter().map(move |e| (ip, e)))
            .collect();
        out.sort_by(|a, b| (a.1.t, a.0, a.1).cmp(&(b.1.t, b.0, b.1)));
        out
    }

    /// Member records of the /24 prefix containing `prefix_ip`, ascending IP.
    pub fn prefix_members(
        &self,
        prefix_ip: Ipv4Addr,
    ) -> impl Iterator<Item = (Ipv4Addr, &EntityRecord)> {
        let key = u32::from(prefix_ip) & 0xffff_ff00;
        self.prefixes
            .get(&key)
            .into_iter()
            .flat_map(move |members| {
                members.iter().map(move |&m| (Ipv4Addr::from(m), &self.entities[&m]))
            })
    }

    /// IPs with at least one alert in the range, optionally restricted to a
    /// category. Ascending order.
    pub fn active_ips(
        &self,
        range: TimeRange,
        category: Option<Category>,
    ) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.entities.iter().filter_map(move |(&key, rec)| {
            let events = rec.events_in(range);
            let hit = match category {
                Some(cat) => events.iter().any(|e| e.category == cat),
                None => !events.is_empty(),
            };
            hit.then_some(Ipv4Addr::from(key))
        })
    }

    /// Apply a stream of enrichment records (line-delimited JSON). Bad lines
    /// are skipped and counted. The latest record per IP wins; hostname tags
    /// are derived on the spot. Unknown IPs get a record with no alerts.
    pub fn attach_enrichment<R: BufRead>(&mut self, reader: R) -> std::io::Result<EnrichSummary> {
        let mut summary = EnrichSummary::default();
        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match parse_enrichment_line(trimmed) {
                Some((ip, tags)) => {
                    let record = self.entities.entry(u32::from(ip)).or_default();
                    record.enrichment = tags;
                    summary.applied += 1;
                }
                None => summary.skipped += 1,
            }
        }
        Ok(summary)
    }

    /// Write a snapshot: magic, version byte, payload length, JSON payload,
    /// SHA-256 checksum of the payload.
    pub fn snapshot_save(&self, path: &Path) -> Result<(), SnapshotError> {
        let payload = serde_json::to_vec(&SnapshotPayload {
            entities: self.entities.clone(),
            context: self.context.clone(),
        })
        .map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
        let digest = Sha256::digest(&payload);
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(SNAPSHOT_MAGIC)?;
        file.write_all(&[SNAPSHOT_VERSION])?;
        file.write_all(&(payload.len() as u64).to_le_bytes())?;
        file.write_all(&payload)?;
        file.write_all(&digest)?;
        file.flush()?;
        Ok(())
    }

    /// Load a snapshot written by [`snapshot_save`]. Reproduces all query
    /// results exactly.
    pub fn snapshot_load(path: &Path) -> Result<AlertStore, SnapshotError> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = [0u8; 7];
        read_exact(&mut file, &mut header)?;
        if &header[..6] != SNAPSHOT_MAGIC {
            return Err(SnapshotError::Corrupt("bad magic".into()));
        }
        if header[6] != SNAPSHOT_VERSION {
            return Err(SnapshotError::Corrupt(format!(
                "unsupported snapshot version {}",
                header[6]
            )));
        }
        let mut len_bytes = [0u8; 8];
        read_exact(&mut file, &mut len_bytes)?;
        let len = u64::from_le_bytes(len_bytes) as usize;
        let mut payload = vec![0u8; len];
        read_exact(&mut file, &mut payload)?;
        let mut checksum = [0u8; 32];
        read_exact(&mut file, &mut checksum)?;
        if Sha256::digest(&payload).as_slice() != checksum {
            return Err(SnapshotError::Corrupt("checksum mismatch".into()));
        }
        let doc: SnapshotPayload = serde_json::from_slice(&payload)
            .map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
        let mut prefixes: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for &key in doc.entities.keys() {
            prefixes.entry(key & 0xffff_ff00).or_default().insert(key);
        }
        Ok(AlertStore { entities: doc.entities, prefixes, context: doc.context })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), SnapshotError> {
    r.read_exact(buf).map_err(|_| SnapshotError::Corrupt("truncated snapshot".into()))
}

fn parse_enrichment_line(line: &str) -> Option<(Ipv4Addr, EnrichmentTags)> {
    let wire: WireEnrichment = serde_json::from_str(line).ok()?;
    let ip: Ipv4Addr = wire.ip.parse().ok()?;
    if wire.bl.len() != 5 || wire.bl.iter().any(|&b| b > 1) {
        return None;
    }
    if wire.dynamic > 1 {
        return None;
    }
    let country = match wire.cc {
        Some(cc) => Some(validate_cc(&cc).ok()?),
        None => None,
    };
    let mut on_blacklist = [false; 5];
    for (flag, &raw) in on_blacklist.iter_mut().zip(&wire.bl) {
        *flag = raw == 1;
    }
    let tags = derive_hostname_tags(wire.hostname.as_deref(), ip);
    Some((
        ip,
        EnrichmentTags {
            on_blacklist,
            on_dynamic_list: wire.dynamic == 1,
            hostname: wire.hostname,
            tag_static: tags.is_static,
            tag_dynamic: tags.is_dynamic,
            tag_ip_in_hostname: tags.ip_in_hostname,
            tag_no_ptr: tags.no_ptr,
            asn: wire.asn,
            country,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alerts::SECS_PER_DAY;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn alert(t: Timestamp, e: &str, c: Category, v: u64, d: &str) -> Alert {
        Alert::new(t, ip(e), c, v, d)
    }

    fn day(n: i64) -> Timestamp {
        n * SECS_PER_DAY
    }

    #[test]
    fn ingest_counts_and_records() {
        let mut store = AlertStore::new();
        let summary = store.ingest(vec![
            alert(10, "10.0.0.1", Category::Scan, 1, "a"),
            alert(20, "10.0.0.1", Category::Scan, 2, "a"),
            alert(30, "10.0.0.2", Category::Scan, 3, "b"),
        ]);
        assert_eq!(summary.scan, 3);
        assert_eq!(summary.access, 0);
        assert_eq!(store.entity_count(), 2);
    }

    #[test]
    fn ingest_deduplicates_exact_tuples() {
        let mut store = AlertStore::new();
        let a = alert(10, "10.0.0.1", Category::Scan, 1, "a");
        let summary = store.ingest(vec![a.clone(), a]);
        assert_eq!(summary.scan, 1);
        assert_eq!(summary.duplicates, 1);
        assert_eq!(store.query_entity(ip("10.0.0.1"), TimeRange::new(0, 100)).len(), 1);
    }

    #[test]
    fn query_entity_filters_by_range() {
        let mut store = AlertStore::new();
        store.ingest([1, 3, 9].map(|d| alert(day(d), "10.0.0.1", Category::Scan, 1, "a")));
        let hits = store.query_entity(ip("10.0.0.1"), TimeRange::new(day(0), day(7)));
        assert_eq!(hits.iter().map(|e| e.t).collect::<Vec<_>>(), vec![day(1), day(3)]);
        assert!(store.query_entity(ip("10.9.9.9"), TimeRange::new(day(0), day(7))).is_empty());
        assert!(store.query_entity(ip("10.0.0.1"), TimeRange::new(day(1), day(1))).is_empty());
    }

    #[test]
    fn query_prefix_groups_by_slash24() {
        let mut store = AlertStore::new();
        store.ingest(vec![
            alert(10, "192.0.2.7", Category::Scan, 1, "a"),
            alert(20, "192.0.2.200", Category::Scan, 1, "a"),
            alert(30, "192.0.3.7", Category::Scan, 1, "a"),
        ]);
        let hits = store.query_prefix(ip("192.0.2.0"), TimeRange::new(0, 100));
        let ips: Vec<Ipv4Addr> = hits.iter().map(|(i, _)| *i).collect();
        assert_eq!(ips, vec![ip("192.0.2.7"), ip("192.0.2.200")]);
        // prefix query contains everything an entity query returns
        let single = store.query_entity(ip("192.0.2.7"), TimeRange::new(0, 100));
        assert!(single.iter().all(|e| hits.iter().any(|(i, p)| *i == ip("192.0.2.7") && *p == e)));
    }

    #[test]
    fn ingest_order_does_not_matter() {
        let alerts = vec![
            alert(30, "10.0.0.2", Category::Access, 3, "b"),
            alert(10, "10.0.0.1", Category::Scan, 1, "a"),
            alert(20, "10.0.0.1", Category::Scan, 2, "c"),
        ];
        let mut forward = AlertStore::new();
        forward.ingest(alerts.clone());
        let mut backward = AlertStore::new();
        backward.ingest(alerts.into_iter().rev().collect::<Vec<_>>());
        for e in ["10.0.0.1", "10.0.0.2"] {
            assert_eq!(
                forward.query_entity(ip(e), TimeRange::new(0, 100)),
                backward.query_entity(ip(e), TimeRange::new(0, 100))
            );
        }
    }

    #[test]
    fn interval_partition_is_additive() {
        let mut store = AlertStore::new();
        store.ingest((0..50).map(|i| alert(i * 7, "10.0.0.1", Category::Scan, 1, "a")));
        let whole = store.query_entity(ip("10.0.0.1"), TimeRange::new(0, 400));
        let left = store.query_entity(ip("10.0.0.1"), TimeRange::new(0, 123));
        let right = store.query_entity(ip("10.0.0.1"), TimeRange::new(123, 400));
        let mut glued: Vec<&AlertEvent> = left.iter().collect();
        glued.extend(right.iter());
        assert_eq!(whole.iter().collect::<Vec<_>>(), glued);
    }

    #[test]
    fn hostname_tags_static_and_encoded_ip() {
        let tags = derive_hostname_tags(Some("static-192-0-2-7.isp.example"), ip("192.0.2.7"));
        assert_eq!(tags, HostnameTags {
            is_static: true,
            is_dynamic: false,
            ip_in_hostname: true,
            no_ptr: false,
        });
    }

    #[test]
    fn hostname_tags_plain() {
        let tags = derive_hostname_tags(Some("mail.example.org"), ip("192.0.2.7"));
        assert_eq!(tags, HostnameTags::default());
    }

    #[test]
    fn hostname_tags_absent() {
        let tags = derive_hostname_tags(None, ip("192.0.2.7"));
        assert_eq!(tags, HostnameTags { no_ptr: true, ..HostnameTags::default() });
    }

    #[test]
    fn hostname_tags_reversed_octets_and_keywords() {
        let tags = derive_hostname_tags(Some("7-2-0-192.pool.example"), ip("192.0.2.7"));
        assert!(tags.ip_in_hostname);
        assert!(tags.is_dynamic);
        let tags = derive_hostname_tags(Some("dsl-customer.example"), ip("192.0.2.7"));
        assert!(tags.is_dynamic);
    }

    #[test]
    fn enrichment_applies_and_last_writer_wins() {
        let mut store = AlertStore::new();
        let lines = concat!(
            "{\"ip\":\"192.0.2.7\",\"hostname\":\"static-192-0-2-7.isp.example\",",
            "\"bl\":[1,0,0,0,0],\"dyn\":0,\"asn\":64500,\"cc\":\"CZ\"}\n",
            "{\"ip\":\"192.0.2.8\",\"bl\":[0,0,0,0,0],\"dyn\":1}\n",
            "{\"ip\":\"192.0.2.8\",\"bl\":[0,1,0,0,0],\"dyn\":0}\n",
            "not json\n",
        );
        let summary = store.attach_enrichment(lines.as_bytes()).unwrap();
        assert_eq!(summary.applied, 3);
        assert_eq!(summary.skipped, 1);
        let seven = &store.entity(ip("192.0.2.7")).unwrap().enrichment;
        assert!(seven.tag_static);
        assert!(seven.tag_ip_in_hostname);
        assert!(!seven.tag_no_ptr);
        assert_eq!(seven.asn, Some(64500));
        assert_eq!(seven.country.as_deref(), Some("CZ"));
        assert_eq!(seven.on_blacklist, [true, false, false, false, false]);
        let eight = &store.entity(ip("192.0.2.8")).unwrap().enrichment;
        assert_eq!(eight.on_blacklist, [false, true, false, false, false]);
        assert!(!eight.on_dynamic_list);
        assert!(eight.tag_no_ptr);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut store = AlertStore::new();
        store.ingest((0..100u32).map(|i| {
            alert(
                i64::from(i) * 1000,
                &format!("10.{}.{}.{}", i % 3, i % 7, i % 11),
                if i % 2 == 0 { Category::Scan } else { Category::Access },
                u64::from(i),
                &format!("d{}", i % 5),
            )
        }));
        store
            .attach_enrichment(
                "{\"ip\":\"10.0.0.0\",\"bl\":[1,1,0,0,1],\"dyn\":1,\"cc\":\"de\"}\n".as_bytes(),
            )
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.snap");
        store.snapshot_save(&path).unwrap();
        let loaded = AlertStore::snapshot_load(&path).unwrap();
        assert_eq!(loaded.entity_count(), store.entity_count());
        for e in store.ips() {
            assert_eq!(
                store.query_entity(e, TimeRange::new(0, i64::MAX)),
                loaded.query_entity(e, TimeRange::new(0, i64::MAX)),
            );
            assert_eq!(store.entity(e).unwrap().enrichment, loaded.entity(e).unwrap().enrichment);
        }
        // prefix index is rebuilt on load
        assert_eq!(
            store.query_prefix(ip("10.0.0.0"), TimeRange::new(0, i64::MAX)),
            loaded.query_prefix(ip("10.0.0.0"), TimeRange::new(0, i64::MAX)),
        );
    }

    #[test]
    fn snapshot_empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.snap");
        AlertStore::new().snapshot_save(&path).unwrap();
        let loaded = AlertStore::snapshot_load(&path).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn truncated_snapshot_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.snap");
        let mut store = AlertStore::new();
        store.ingest(vec![alert(1, "10.0.0.1", Category::Scan, 1, "a")]);
        store.snapshot_save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(AlertStore::snapshot_load(&path), Err(SnapshotError::Corrupt(_))));
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.snap");
        let mut store = AlertStore::new();
        store.ingest(vec![alert(1, "10.0.0.1", Category::Scan, 1, "a")]);
        store.snapshot_save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(AlertStore::snapshot_load(&path), Err(SnapshotError::Corrupt(_))));
    }

    #[test]
    fn prefix_table_longest_match_wins() {
        let mut table = PrefixTable::new();
        table.insert(ip("10.0.0.0"), 8, 100u32);
        table.insert(ip("10.1.0.0"), 16, 200u32);
        assert_eq!(table.lookup(ip("10.1.2.3")), Some(&200));
        assert_eq!(table.lookup(ip("10.2.2.3")), Some(&100));
        assert_eq!(table.lookup(ip("11.0.0.1")), None);
    }

    #[test]
    fn cidr_parsing() {
        assert_eq!(parse_cidr("10.0.0.0/8").unwrap(), (ip("10.0.0.0"), 8));
        assert_eq!(parse_cidr("192.0.2.1").unwrap(), (ip("192.0.2.1"), 32));
        assert!(parse_cidr("10.0.0.0/33").is_err());
        assert!(parse_cidr("abc/8").is_err());
    }

    #[test]
    fn active_ips_respects_category() {
        let mut store = AlertStore::new();
        store.ingest(vec![
            alert(10, "10.0.0.1", Category::Scan, 1, "a"),
            alert(10, "10.0.0.2", Category::Access, 1, "a"),
        ]);
        let range = TimeRange::new(0, 100);
        let scans: Vec<_> = store.active_ips(range, Some(Category::Scan)).collect();
        assert_eq!(scans, vec![ip("10.0.0.1")]);
        let all: Vec<_> = store.active_ips(range, None).collect();
        assert_eq!(all.len(), 2);
    }
}
