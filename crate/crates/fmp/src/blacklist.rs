//! Predictive blacklists and their evaluation.
//!
//! A blacklist is built at the end of a day and used to block traffic during
//! the next one. FMP-based lists take the highest-scored IPs, either the top
//! N or everything at or above a threshold. The classic baseline is the
//! global worst offender list (GWOL): the most active attackers of the
//! recent past. Lists are judged by their hit count — how many listed IPs
//! really attack in the prediction day — and the hit rate, hits divided by
//! list size.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerts::{Category, TimeRange, Timestamp, SECS_PER_DAY};
use crate::store::AlertStore;

#[derive(Debug, Error)]
pub enum BlacklistError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("blacklists have different categories")]
    CategoryMismatch,
    #[error("line {line}: {reason}")]
    MalformedList { line: u64, reason: String },
    #[error("blacklist i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// How a blacklist was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    FmpTopN { n: usize },
    FmpThreshold { t: f64 },
    Gwol { window_days: u32, n: usize },
    Imported { name: String },
    Union,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::FmpTopN { n } => write!(f, "fmp_topn({n})"),
            Policy::FmpThreshold { t } => write!(f, "fmp_threshold({t})"),
            Policy::Gwol { window_days, n } => write!(f, "gwol({window_days},{n})"),
            Policy::Imported { name } => write!(f, "imported({name})"),
            Policy::Union => write!(f, "union"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlacklistEntry {
    pub ip: Ipv4Addr,
    /// FMP score, alert count for GWOL, 0 for imported lists.
    pub score: f64,
    /// Which source list contributed the entry (set by unions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// A dated, ordered list of IPs with its generation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blacklist {
    pub generated_at: Timestamp,
    pub policy: Policy,
    pub category: Category,
    pub entries: Vec<BlacklistEntry>,
}

impl Blacklist {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ips(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.entries.iter().map(|e| e.ip)
    }

    /// The plain-text form: one IPv4 per line, list order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.ip.to_string());
            out.push('\n');
        }
        out
    }
}

/// Hit statistics of one blacklist against one prediction day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub hit_count: u64,
    /// Hits divided by list size; 0 for an empty list.
    pub hit_rate: f64,
    /// Distinct IPs attacking (in the category) during the prediction day.
    pub attackers_total: u64,
    pub attackers_blocked_fraction: f64,
    /// Fraction of the day's attackers with no category alert in the seven
    /// days before the list was generated.
    pub new_attacker_fraction: f64,
}

/// Sort scored IPs by score descending (ties: ascending IP) and apply the
/// policy: keep the first N, or every entry with score ≥ T.
pub fn fmp_blacklist(
    scored: &[(Ipv4Addr, f64)],
    policy: Policy,
    category: Category,
    generated_at: Timestamp,
) -> Result<Blacklist, BlacklistError> {
    match &policy {
        Policy::FmpTopN { n } if *n < 1 => {
            return Err(BlacklistError::Config("top-n size must be at least 1".into()))
        }
        Policy::FmpThreshold { t } if !(0.0..=1.0).contains(t) => {
            return Err(BlacklistError::Config(format!("threshold {t} outside [0, 1]")))
        }
        Policy::FmpTopN { .. } | Policy::FmpThreshold { .. } => {}
        other => {
            return Err(BlacklistError::Config(format!("{other} is not an FMP policy")));
        }
    }
    let mut seen = BTreeSet::new();
    for (ip, score) in scored {
        if !(0.0..=1.0).contains(score) {
            return Err(BlacklistError::Config(format!("score {score} of {ip} outside [0, 1]")));
        }
        if !seen.insert(*ip) {
            return Err(BlacklistError::Config(format!("duplicate score entry for {ip}")));
        }
    }
    let mut ranked: Vec<(Ipv4Addr, f64)> = scored.to_vec();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).expect("finite scores").then(u32::from(a.0).cmp(&u32::from(b.0)))
    });
    let entries: Vec<BlacklistEntry> = match policy {
        Policy::FmpTopN { n } => ranked.into_iter().take(n).collect::<Vec<_>>(),
        Policy::FmpThreshold { t } => ranked.into_iter().filter(|(_, s)| *s >= t).collect(),
        _ => unreachable!(),
    }
    .into_iter()
    .map(|(ip, score)| BlacklistEntry { ip, score, source: None })
    .collect();
    Ok(Blacklist { generated_at, policy, category, entries })
}

/// Global worst offender list: the N most active attackers of the category
/// within `[t0 − window_days, t0)`, ranked by alert count (ties broken by
/// total volume descending, then ascending IP). Entry scores carry the
/// alert counts.
pub fn gwol(
    store: &AlertStore,
    t0: Timestamp,
    window_days: u32,
    n: usize,
    category: Category,
) -> Result<Blacklist, BlacklistError> {
    if n < 1 {
        return Err(BlacklistError::Config("top-n size must be at least 1".into()));
    }
    if window_days < 1 {
        return Err(BlacklistError::Config("window must be at least 1 day".into()));
    }
    let range = TimeRange::new(t0 - i64::from(window_days) * SECS_PER_DAY, t0);
    let mut ranked: Vec<(u64, u64, Ipv4Addr)> = store
        .ips()
        .filter_map(|ip| {
            let events = store.query_entity(ip, range);
            let mut count = 0u64;
            let mut volume = 0u64;
            for e in events.iter().filter(|e| e.category == category) {
                count += 1;
                volume += e.volume;
            }
            (count > 0).then_some((count, volume, ip))
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(u32::from(a.2).cmp(&u32::from(b.2)))
    });
    let entries = ranked
        .into_iter()
        .take(n)
        .map(|(count, _, ip)| BlacklistEntry { ip, score: count as f64, source: None })
        .collect();
    Ok(Blacklist {
        generated_at: t0,
        policy: Policy::Gwol { window_days, n },
        category,
        entries,
    })
}

/// Score a blacklist against the prediction day `(t0, t0 + 24h]`.
pub fn evaluate_blacklist(bl: &Blacklist, store: &AlertStore, category: Category) -> HitReport {
    let t0 = bl.generated_at;
    let day = TimeRange::left_open(t0, t0 + SECS_PER_DAY);
    let attackers: BTreeSet<Ipv4Addr> = store.active_ips(day, Some(category)).collect();
    let hit_count = bl.ips().filter(|ip| attackers.contains(ip)).count() as u64;
    let prior_week = TimeRange::new(t0 - 7 * SECS_PER_DAY, t0);
    let new_attackers = attackers
        .iter()
        .filter(|&&ip| {
            store
                .entity(ip)
                .map(|r| !r.has_category_in(prior_week, category))
                .unwrap_or(true)
        })
        .count() as u64;
    let attackers_total = attackers.len() as u64;
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    HitReport {
        hit_count,
        hit_rate: ratio(hit_count, bl.len() as u64),
        attackers_total,
        attackers_blocked_fraction: ratio(hit_count, attackers_total),
        new_attacker_fraction: ratio(new_attackers, attackers_total),
    }
}

/// Set union of same-category blacklists. Each IP keeps its best (maximum)
/// score across the sources and remembers which list it came from.
pub fn union_blacklists(lists: &[Blacklist]) -> Result<Blacklist, BlacklistError> {
    let Some(first) = lists.first() else {
        return Err(BlacklistError::Config("union of zero blacklists".into()));
    };
    if lists.iter().any(|l| l.category != first.category) {
        return Err(BlacklistError::CategoryMismatch);
    }
    let mut merged: BTreeMap<Ipv4Addr, BlacklistEntry> = BTreeMap::new();
    for list in lists {
        let label = list.policy.to_string();
        for e in &list.entries {
            let candidate = BlacklistEntry {
                ip: e.ip,
                score: e.score,
                source: Some(e.source.clone().unwrap_or_else(|| label.clone())),
            };
            merged
                .entry(e.ip)
                .and_modify(|cur| {
                    if candidate.score > cur.score {
                        *cur = candidate.clone();
                    }
                })
                .or_insert(candidate);
        }
    }
    let mut entries: Vec<BlacklistEntry> = merged.into_values().collect();
    entries.sort_by(|a, b| {
        b.score.partial_cmp(&a.score).expect("finite scores").then(u32::from(a.ip).cmp(&u32::from(b.ip)))
    });
    Ok(Blacklist {
        generated_at: first.generated_at,
        policy: Policy::Union,
        category: first.category,
        entries,
    })
}

/// Read a third-party list: one IPv4 or CIDR per line, `#` comments. CIDRs
/// of /24 and longer are expanded to their addresses; shorter prefixes are
/// rejected. Entries carry score 0 and ascend by IP.
pub fn read_plain_list<R: BufRead>(
    reader: R,
    name: &str,
    category: Category,
    generated_at: Timestamp,
) -> Result<Blacklist, BlacklistError> {
    let mut ips: BTreeSet<Ipv4Addr> = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let line_no = i as u64 + 1;
        let (base, len) = crate::store::parse_cidr(trimmed)
            .map_err(|reason| BlacklistError::MalformedList { line: line_no, reason })?;
        if len < 24 {
            return Err(BlacklistError::MalformedList {
                line: line_no,
                reason: format!("prefix /{len} too broad; only /24 and longer are expanded"),
            });
        }
        let start = u32::from(base) & crate::store::prefix_mask(len);
        let count = 1u32 << (32 - len);
        for offset in 0..count {
            ips.insert(Ipv4Addr::from(start + offset));
        }
    }
    let entries = ips
        .into_iter()
        .map(|ip| BlacklistEntry { ip, score: 0.0, source: None })
        .collect();
    Ok(Blacklist {
        generated_at,
        policy: Policy::Imported { name: name.to_string() },
        category,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alerts::Alert;

    const DAY: i64 = SECS_PER_DAY;
    const T0: i64 = 100 * DAY;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn scored(list: &[(&str, f64)]) -> Vec<(Ipv4Addr, f64)> {
        list.iter().map(|(s, v)| (ip(s), *v)).collect()
    }

    #[test]
    fn topn_sorts_and_breaks_ties_by_ip() {
        let bl = fmp_blacklist(
            &scored(&[("10.0.0.9", 0.9), ("10.0.0.5", 0.5), ("10.0.0.1", 0.9)]),
            Policy::FmpTopN { n: 2 },
            Category::Scan,
            T0,
        )
        .unwrap();
        let ips: Vec<Ipv4Addr> = bl.ips().collect();
        assert_eq!(ips, vec![ip("10.0.0.1"), ip("10.0.0.9")]);
    }

    #[test]
    fn threshold_keeps_scores_at_or_above() {
        let input = scored(&[("10.0.0.1", 0.2), ("10.0.0.2", 0.5), ("10.0.0.3", 0.9)]);
        let bl = fmp_blacklist(&input, Policy::FmpThreshold { t: 0.5 }, Category::Scan, T0)
            .unwrap();
        assert_eq!(bl.len(), 2);
        assert!(bl.entries.iter().all(|e| e.score >= 0.5));
        let all = fmp_blacklist(&input, Policy::FmpThreshold { t: 0.0 }, Category::Scan, T0)
            .unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn topn_lists_are_nested() {
        let input = scored(&[
            ("10.0.0.1", 0.3),
            ("10.0.0.2", 0.9),
            ("10.0.0.3", 0.5),
            ("10.0.0.4", 0.7),
        ]);
        let mut previous: BTreeSet<Ipv4Addr> = BTreeSet::new();
        for n in 1..=4 {
            let bl =
                fmp_blacklist(&input, Policy::FmpTopN { n }, Category::Scan, T0).unwrap();
            let current: BTreeSet<Ipv4Addr> = bl.ips().collect();
            assert!(previous.is_subset(&current));
            previous = current;
        }
    }

    #[test]
    fn threshold_lists_shrink_as_threshold_grows() {
        let input = scored(&[
            ("10.0.0.1", 0.1),
            ("10.0.0.2", 0.4),
            ("10.0.0.3", 0.6),
            ("10.0.0.4", 0.95),
        ]);
        let mut last_size = usize::MAX;
        for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let bl = fmp_blacklist(&input, Policy::FmpThreshold { t }, Category::Scan, T0)
                .unwrap();
            assert!(bl.len() <= last_size);
            last_size = bl.len();
        }
    }

    #[test]
    fn fmp_blacklist_validates() {
        let input = scored(&[("10.0.0.1", 0.5)]);
        assert!(fmp_blacklist(&input, Policy::FmpTopN { n: 0 }, Category::Scan, T0).is_err());
        assert!(
            fmp_blacklist(&input, Policy::FmpThreshold { t: 1.5 }, Category::Scan, T0).is_err()
        );
        let dup = scored(&[("10.0.0.1", 0.5), ("10.0.0.1", 0.7)]);
        assert!(fmp_blacklist(&dup, Policy::FmpTopN { n: 1 }, Category::Scan, T0).is_err());
        let bad = scored(&[("10.0.0.1", 1.5)]);
        assert!(fmp_blacklist(&bad, Policy::FmpTopN { n: 1 }, Category::Scan, T0).is_err());
    }

    fn gwol_store() -> AlertStore {
        let mut store = AlertStore::new();
        let mut alerts = Vec::new();
        // 5 alerts yesterday for .1, 3 for .2
        for i in 0..5 {
            alerts.push(Alert::new(T0 - 3600 - i, ip("10.0.0.1"), Category::Scan, 1, "d"));
        }
        for i in 0..3 {
            alerts.push(Alert::new(T0 - 3600 - i, ip("10.0.0.2"), Category::Scan, 1, "d"));
        }
        // an old offender outside the 1-day window but inside 7 days
        for i in 0..9 {
            alerts.push(Alert::new(T0 - 3 * DAY - i, ip("10.0.0.3"), Category::Scan, 1, "d"));
        }
        store.ingest(alerts);
        store
    }

    #[test]
    fn gwol_ranks_by_activity() {
        let store = gwol_store();
        let top1 = gwol(&store, T0, 1, 1, Category::Scan).unwrap();
        assert_eq!(top1.ips().collect::<Vec<_>>(), vec![ip("10.0.0.1")]);
        assert_eq!(top1.entries[0].score, 5.0);
    }

    #[test]
    fn gwol_windows_differ() {
        let store = gwol_store();
        let one_day = gwol(&store, T0, 1, 10, Category::Scan).unwrap();
        assert_eq!(one_day.len(), 2, "3-day-old offender not in the 1-day window");
        let week = gwol(&store, T0, 7, 10, Category::Scan).unwrap();
        assert_eq!(week.len(), 3);
        assert_eq!(week.ips().next().unwrap(), ip("10.0.0.3"), "9 alerts beat 5");
    }

    #[test]
    fn gwol_ties_break_on_volume() {
        let mut store = AlertStore::new();
        store.ingest(vec![
            Alert::new(T0 - 10, ip("10.0.0.1"), Category::Scan, 1, "d"),
            Alert::new(T0 - 11, ip("10.0.0.2"), Category::Scan, 50, "d"),
        ]);
        let top = gwol(&store, T0, 1, 1, Category::Scan).unwrap();
        assert_eq!(top.ips().next().unwrap(), ip("10.0.0.2"));
    }

    #[test]
    fn evaluate_counts_hits_and_new_attackers() {
        let mut store = AlertStore::new();
        // listed, attacks next day, active before: a hit, not new
        store.ingest(vec![
            Alert::new(T0 - DAY, ip("10.0.0.1"), Category::Scan, 1, "d"),
            Alert::new(T0 + 3600, ip("10.0.0.1"), Category::Scan, 1, "d"),
            // unlisted attacker never seen before: new
            Alert::new(T0 + 3600, ip("10.0.0.2"), Category::Scan, 1, "d"),
            // listed but silent in the prediction day
            Alert::new(T0 - DAY, ip("10.0.0.3"), Category::Scan, 1, "d"),
        ]);
        let bl = fmp_blacklist(
            &scored(&[("10.0.0.1", 0.9), ("10.0.0.3", 0.8)]),
            Policy::FmpTopN { n: 2 },
            Category::Scan,
            T0,
        )
        .unwrap();
        let report = evaluate_blacklist(&bl, &store, Category::Scan);
        assert_eq!(report.hit_count, 1);
        assert_eq!(report.hit_rate, 0.5);
        assert_eq!(report.attackers_total, 2);
        assert_eq!(report.attackers_blocked_fraction, 0.5);
        assert_eq!(report.new_attacker_fraction, 0.5);
        assert!(report.hit_count <= report.attackers_total.min(bl.len() as u64));
    }

    #[test]
    fn evaluate_empty_list_and_empty_day() {
        let store = AlertStore::new();
        let bl = Blacklist {
            generated_at: T0,
            policy: Policy::FmpTopN { n: 5 },
            category: Category::Scan,
            entries: vec![],
        };
        let report = evaluate_blacklist(&bl, &store, Category::Scan);
        assert_eq!(report.hit_count, 0);
        assert_eq!(report.hit_rate, 0.0);
        assert_eq!(report.attackers_total, 0);
    }

    #[test]
    fn perfect_list_hits_everything() {
        let mut store = AlertStore::new();
        let ips: Vec<Ipv4Addr> = (1..=100).map(|i| Ipv4Addr::from(0x0a000000 + i)).collect();
        store.ingest(ips.iter().map(|&e| Alert::new(T0 - DAY, e, Category::Scan, 1, "d")));
        store.ingest(ips.iter().map(|&e| Alert::new(T0 + 60, e, Category::Scan, 1, "d")));
        let scored: Vec<(Ipv4Addr, f64)> = ips.iter().map(|&e| (e, 0.99)).collect();
        let bl = fmp_blacklist(&scored, Policy::FmpTopN { n: 100 }, Category::Scan, T0).unwrap();
        let report = evaluate_blacklist(&bl, &store, Category::Scan);
        assert_eq!(report.hit_count, 100);
        assert_eq!(report.hit_rate, 1.0);
    }

    #[test]
    fn union_merges_and_keeps_best_score() {
        let a = fmp_blacklist(
            &scored(&[("10.0.0.1", 0.9), ("10.0.0.2", 0.5), ("10.0.0.3", 0.4)]),
            Policy::FmpTopN { n: 3 },
            Category::Scan,
            T0,
        )
        .unwrap();
        let b = fmp_blacklist(
            &scored(&[("10.0.0.2", 0.8), ("10.0.0.4", 0.3), ("10.0.0.5", 0.2), ("10.0.0.6", 0.1)]),
            Policy::FmpTopN { n: 4 },
            Category::Scan,
            T0,
        )
        .unwrap();
        let u = union_blacklists(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(u.len(), 6);
        let two = u.entries.iter().find(|e| e.ip == ip("10.0.0.2")).unwrap();
        assert_eq!(two.score, 0.8);
        assert_eq!(two.source.as_deref(), Some("fmp_topn(4)"));
        let same = union_blacklists(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.len(), a.len());
    }

    #[test]
    fn union_hit_count_dominates_parts() {
        let mut store = AlertStore::new();
        store.ingest(vec![
            Alert::new(T0 + 60, ip("10.0.0.1"), Category::Scan, 1, "d"),
            Alert::new(T0 + 60, ip("10.0.0.4"), Category::Scan, 1, "d"),
        ]);
        let a = fmp_blacklist(&scored(&[("10.0.0.1", 0.9)]), Policy::FmpTopN { n: 1 }, Category::Scan, T0).unwrap();
        let b = fmp_blacklist(&scored(&[("10.0.0.4", 0.7)]), Policy::FmpTopN { n: 1 }, Category::Scan, T0).unwrap();
        let u = union_blacklists(&[a.clone(), b.clone()]).unwrap();
        let hits = |l: &Blacklist| evaluate_blacklist(l, &store, Category::Scan).hit_count;
        assert!(hits(&u) >= hits(&a).max(hits(&b)));
    }

    #[test]
    fn union_rejects_mixed_categories() {
        let a = fmp_blacklist(&scored(&[("10.0.0.1", 0.9)]), Policy::FmpTopN { n: 1 }, Category::Scan, T0).unwrap();
        let mut b = a.clone();
        b.category = Category::Access;
        assert!(matches!(union_blacklists(&[a, b]), Err(BlacklistError::CategoryMismatch)));
    }

    #[test]
    fn plain_list_parses_ips_and_expands_cidrs() {
        let text = "# third-party list\n192.0.2.7\n198.51.100.0/30\n";
        let bl = read_plain_list(text.as_bytes(), "part", Category::Scan, T0).unwrap();
        assert_eq!(bl.len(), 5);
        assert!(bl.ips().any(|i| i == ip("198.51.100.3")));
        let full = "10.1.2.0/24\n";
        let bl = read_plain_list(full.as_bytes(), "part", Category::Scan, T0).unwrap();
        assert_eq!(bl.len(), 256);
    }

    #[test]
    fn plain_list_rejects_broad_cidrs() {
        let err = read_plain_list("10.0.0.0/16\n".as_bytes(), "p", Category::Scan, T0)
            .unwrap_err();
        assert!(matches!(err, BlacklistError::MalformedList { line: 1, .. }));
    }

    #[test]
    fn text_output_is_one_ip_per_line() {
        let bl = fmp_blacklist(
            &scored(&[("10.0.0.2", 0.5), ("10.0.0.1", 0.9)]),
            Policy::FmpTopN { n: 2 },
            Category::Scan,
            T0,
        )
        .unwrap();
        assert_eq!(bl.to_text(), "10.0.0.1\n10.0.0.2\n");
    }
}
