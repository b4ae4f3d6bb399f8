//! Seeded synthetic alert streams with closed-form ground-truth attack
//! probabilities.
//!
//! Every actor's probability of attacking on the next day is computable
//! exactly from the generator state, and — by construction — equals the
//! best prediction an observer of the alert stream could make. That makes
//! the emitted truth a Bayes-optimal oracle: estimators can be scored
//! against it, calibration can be checked against realized labels, and
//! blacklists built from oracle scores are provably optimal in expectation.
//!
//! Actor kinds:
//!
//! * `persistent` — attacks each day of its lifetime independently with a
//!   fixed probability drawn from a configured range.
//! * `periodic` — attacks deterministically every k days.
//! * `oneshot` — attacks exactly once, then never again.
//! * `churning` — attacks every day while alive, dying with a fixed
//!   probability at the end of each day. A population of these with births
//!   spread over the scenario reproduces the "most attackers are new"
//!   churn of real alert feeds.
//! * `neighborhood_member` — lives in a shared "bad" /24 whose activity
//!   level (hot/cold) follows a persistent Markov chain; members attack
//!   with the prefix's current rate. A member's own history is a weak
//!   signal of the hidden state, the prefix's aggregate a strong one, so
//!   prefix features carry real predictive value.
//! * `cross_category` — scans on random days; a scan is followed by an
//!   access attempt the next day with a configured probability, giving the
//!   other-category features something to predict.
//!
//! All randomness comes from one seeded ChaCha stream consumed in a fixed
//! order, so identical configs produce byte-identical outputs.

use std::io::{BufRead, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alerts::{render_alert, Alert, Category, Timestamp, WindowConfig, SECS_PER_DAY};

#[derive(Debug, Error)]
pub enum SimgenError {
    #[error("bad scenario config: {0}")]
    Config(String),
    #[error("day {day} outside the scenario's truth range 0..={max}")]
    OutOfRange { day: u32, max: u32 },
    #[error("simgen i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad truth file: {0}")]
    BadFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Persistent,
    Periodic,
    Oneshot,
    Churning,
    NeighborhoodMember,
    CrossCategory,
}

/// Per-alert volume distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeDist {
    Constant(u64),
    /// Support 1, 2, …; the parameter is the per-trial success probability.
    Geometric(f64),
}

impl Default for VolumeDist {
    fn default() -> Self {
        VolumeDist::Constant(1)
    }
}

/// One group of identically-parameterized actors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub kind: ActorKind,
    pub count: u32,
    /// Category the actor attacks with (cross-category actors scan with
    /// this one and follow up with the other).
    #[serde(default = "default_category")]
    pub category: Category,
    /// Daily attack probability range (uniform per actor). Used by
    /// persistent and cross-category actors.
    #[serde(default = "default_prob_range")]
    pub prob_range: (f64, f64),
    #[serde(default)]
    pub volume: VolumeDist,
    /// Alert records emitted per active day.
    #[serde(default = "default_one")]
    pub alerts_per_active_day: u32,
    /// Lifetime length range in days; `None` means the whole scenario.
    /// Oneshot actors ignore this (their lifetime is a single day).
    #[serde(default)]
    pub lifetime_days: Option<(u32, u32)>,
    /// Attack period range for periodic actors.
    #[serde(default = "default_period_range")]
    pub period_range: (u32, u32),
    /// Detector identifiers the actor trips (cycled across its alerts).
    #[serde(default = "default_one")]
    pub detectors: u32,
}

fn default_category() -> Category {
    Category::Scan
}

fn default_prob_range() -> (f64, f64) {
    (0.5, 0.5)
}

fn default_one() -> u32 {
    1
}

fn default_period_range() -> (u32, u32) {
    (2, 4)
}

/// Hot/cold dynamics of bad-neighborhood prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    /// P(state stays the same across a day boundary).
    pub persistence: f64,
    pub attack_prob_hot: f64,
    pub attack_prob_cold: f64,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        NeighborhoodSpec { persistence: 0.85, attack_prob_hot: 0.5, attack_prob_cold: 0.05 }
    }
}

/// Full scenario description. Identical config + seed reproduce the alert
/// stream and truth table byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_days: u32,
    /// Timestamp of the start of day 0.
    #[serde(default = "default_start")]
    pub start: Timestamp,
    pub actors: Vec<ActorSpec>,
    /// Number of distinct /24 prefixes available.
    #[serde(default = "default_pool")]
    pub prefix_pool_size: u32,
    /// Fraction of the pool operating as shared bad neighborhoods.
    #[serde(default)]
    pub bad_neighborhood_fraction: f64,
    #[serde(default)]
    pub neighborhood: NeighborhoodSpec,
    /// P(access attempt tomorrow | scan today) for cross-category actors.
    #[serde(default = "default_follow")]
    pub cross_category_follow_prob: f64,
    /// Daily death probability of churning actors.
    #[serde(default = "default_churn")]
    pub churn_death_prob: f64,
}

fn default_start() -> Timestamp {
    // 2020-01-01T00:00:00Z
    1_577_836_800
}

fn default_pool() -> u32 {
    4096
}

fn default_follow() -> f64 {
    0.7
}

fn default_churn() -> f64 {
    0.6
}

/// One ground-truth row: the probability that `ip` attacks on day
/// `day + 1`, per category, given everything observable through `day`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub ip: Ipv4Addr,
    pub day: u32,
    pub p_scan: f64,
    pub p_access: f64,
}

/// The ground-truth table of a generated scenario, sorted by (day, ip).
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub start: Timestamp,
    pub n_days: u32,
    pub records: Vec<TruthRecord>,
}

impl TruthTable {
    /// Last day index that carries truth rows (its prediction day is the
    /// scenario's final day).
    pub fn max_day(&self) -> u32 {
        self.n_days.saturating_sub(2)
    }

    /// The prediction time anchored at the end of `day`: features come from
    /// the days up to and including `day`, the label from `day + 1`.
    pub fn prediction_time(&self, day: u32) -> Timestamp {
        self.start + i64::from(day + 1) * SECS_PER_DAY
    }

    /// Standard window (7-day history, 1-day prediction) for a day.
    pub fn window_for_day(&self, day: u32) -> WindowConfig {
        WindowConfig::standard(self.prediction_time(day))
    }

    /// Bayes-optimal scores for every IP with a truth row on `day`.
    pub fn oracle_scores(
        &self,
        day: u32,
        category: Category,
    ) -> Result<Vec<(Ipv4Addr, f64)>, SimgenError> {
        if day > self.max_day() {
            return Err(SimgenError::OutOfRange { day, max: self.max_day() });
        }
        let lo = self.records.partition_point(|r| r.day < day);
        let hi = self.records.partition_point(|r| r.day <= day);
        Ok(self.records[lo..hi]
            .iter()
            .map(|r| {
                let p = match category {
                    Category::Scan => r.p_scan,
                    Category::Access => r.p_access,
                };
                (r.ip, p)
            })
            .collect())
    }

    /// Truth for one (ip, day), if recorded.
    pub fn lookup(&self, ip: Ipv4Addr, day: u32) -> Option<(f64, f64)> {
        self.records
            .binary_search_by_key(&(day, u32::from(ip)), |r| (r.day, u32::from(r.ip)))
            .ok()
            .map(|i| (self.records[i].p_scan, self.records[i].p_access))
    }

    /// The day whose prediction time is `t0`, if any.
    pub fn day_of_t0(&self, t0: Timestamp) -> Option<u32> {
        let delta = t0 - self.start;
        if delta <= 0 || delta % SECS_PER_DAY != 0 {
            return None;
        }
        let day = (delta / SECS_PER_DAY - 1) as u32;
        (day <= self.max_day()).then_some(day)
    }

    /// CSV form: `ip,day_index,p_scan,p_access` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# start={} n_days={}", self.start, self.n_days)?;
        writeln!(w, "ip,day_index,p_scan,p_access")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.ip, r.day, r.p_scan, r.p_access)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<TruthTable, SimgenError> {
        let mut lines = reader.lines();
        let meta = lines
            .next()
            .ok_or_else(|| SimgenError::BadFile("empty truth file".into()))??;
        let meta = meta
            .strip_prefix("# ")
            .ok_or_else(|| SimgenError::BadFile("missing metadata comment".into()))?;
        let mut start = None;
        let mut n_days = None;
        for part in meta.split_whitespace() {
            if let Some(v) = part.strip_prefix("start=") {
                start = v.parse::<Timestamp>().ok();
            } else if let Some(v) = part.strip_prefix("n_days=") {
                n_days = v.parse::<u32>().ok();
            }
        }
        let (Some(start), Some(n_days)) = (start, n_days) else {
            return Err(SimgenError::BadFile("bad metadata comment".into()));
        };
        let header = lines
            .next()
            .ok_or_else(|| SimgenError::BadFile("missing header".into()))??;
        if header.trim_end() != "ip,day_index,p_scan,p_access" {
            return Err(SimgenError::BadFile("unexpected header".into()));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = || SimgenError::BadFile(format!("bad row {}", i + 3));
            let mut fields = line.split(',');
            let ip: Ipv4Addr = fields.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            let day: u32 = fields.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            let p_scan: f64 = fields.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            let p_access: f64 = fields.next().ok_or_else(err)?.parse().map_err(|_| err())?;
            if fields.next().is_some() {
                return Err(err());
            }
            records.push(TruthRecord { ip, day, p_scan, p_access });
        }
        Ok(TruthTable { start, n_days, records })
    }
}

/// A generated scenario: the alert stream (time-sorted) plus ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub alerts: Vec<Alert>,
    pub truth: TruthTable,
}

struct Actor {
    ip: Ipv4Addr,
    kind: ActorKind,
    category: Category,
    daily_prob: f64,
    volume: VolumeDist,
    alerts_per_day: u32,
    detectors: Vec<String>,
    birth: u32,
    /// Exclusive end of life; churning actors die dynamically instead.
    death: u32,
    period: u32,
    phase: u32,
    /// Index into the neighborhood state vector, for members.
    prefix_state: Option<usize>,
    /// Churning: still alive.
    alive: bool,
    /// Cross-category: scanned on the previous day.
    scanned_yesterday: bool,
    scanned_today: bool,
}

fn validate(config: &ScenarioConfig) -> Result<(), SimgenError> {
    let err = |msg: String| Err(SimgenError::Config(msg));
    if config.n_days < 2 {
        return err("scenario needs at least 2 days".into());
    }
    if !(0.0..=1.0).contains(&config.bad_neighborhood_fraction) {
        return err("bad_neighborhood_fraction outside [0, 1]".into());
    }
    if !(0.0..=1.0).contains(&config.cross_category_follow_prob) {
        return err("cross_category_follow_prob outside [0, 1]".into());
    }
    if !(0.0 < config.churn_death_prob && config.churn_death_prob <= 1.0) {
        return err("churn_death_prob outside (0, 1]".into());
    }
    let nb = &config.neighborhood;
    if !(0.0 < nb.persistence && nb.persistence < 1.0) {
        return err("neighborhood persistence outside (0, 1)".into());
    }
    for p in [nb.attack_prob_hot, nb.attack_prob_cold] {
        if !(0.0..=1.0).contains(&p) {
            return err("neighborhood attack probability outside [0, 1]".into());
        }
    }
    if config.prefix_pool_size == 0 || config.prefix_pool_size > 65_536 {
        return err("prefix_pool_size must be in 1..=65536".into());
    }
    for spec in &config.actors {
        let (lo, hi) = spec.prob_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return err(format!("bad prob_range ({lo}, {hi})"));
        }
        if spec.alerts_per_active_day < 1 || spec.alerts_per_active_day > 1000 {
            return err("alerts_per_active_day must be in 1..=1000".into());
        }
        if spec.detectors < 1 || spec.detectors > 16 {
            return err("detectors must be in 1..=16".into());
        }
        if let Some((lo, hi)) = spec.lifetime_days {
            if lo < 1 || lo > hi {
                return err(format!("bad lifetime_days ({lo}, {hi})"));
            }
        }
        let (plo, phi) = spec.period_range;
        if spec.kind == ActorKind::Periodic && (plo < 1 || plo > phi) {
            return err(format!("bad period_range ({plo}, {phi})"));
        }
        if let VolumeDist::Geometric(p) = spec.volume {
            if !(0.0 < p && p <= 1.0) {
                return err(format!("bad geometric volume parameter {p}"));
            }
        }
    }
    Ok(())
}

fn prefix_base(pool_index: u32) -> u32 {
    // 10.x.y.0/24 out of the pool
    (10u32 << 24) | (pool_index << 8)
}

fn geometric(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.gen();
    let k = 1.0 + ((1.0 - u).ln() / (1.0 - p).ln()).floor();
    (k as u64).clamp(1, 10_000)
}

/// Generate the alert stream and ground truth for a scenario.
pub fn generate(config: &ScenarioConfig) -> Result<GeneratedScenario, SimgenError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_days = config.n_days;

    // prefix layout: bad neighborhoods first, singleton prefixes after
    let n_members: u32 = config
        .actors
        .iter()
        .filter(|s| s.kind == ActorKind::NeighborhoodMember)
        .map(|s| s.count)
        .sum();
    let n_singletons: u32 =
        config.actors.iter().filter(|s| s.kind != ActorKind::NeighborhoodMember).map(|s| s.count).sum();
    let n_bad =
        (config.bad_neighborhood_fraction * f64::from(config.prefix_pool_size)).round() as u32;
    if n_members > 0 && n_bad == 0 {
        return Err(SimgenError::Config(
            "neighborhood members configured but no bad prefixes in the pool".into(),
        ));
    }
    if n_bad > 0 && n_members.div_ceil(n_bad) > 254 {
        return Err(SimgenError::Config("more than 254 members per bad prefix".into()));
    }
    if n_bad + n_singletons > config.prefix_pool_size {
        return Err(SimgenError::Config(format!(
            "prefix pool of {} cannot hold {} bad prefixes plus {} singleton actors",
            config.prefix_pool_size, n_bad, n_singletons
        )));
    }

    // neighborhood hidden states, one per bad prefix, initially hot with p=1/2
    let mut hot: Vec<bool> = (0..n_bad).map(|_| rng.gen_bool(0.5)).collect();

    // materialize actors in spec order; all parameter draws happen here
    let mut actors: Vec<Actor> = Vec::new();
    let mut member_cursor = 0u32;
    let mut singleton_cursor = 0u32;
    for spec in &config.actors {
        for _ in 0..spec.count {
            let daily_prob = if spec.prob_range.0 == spec.prob_range.1 {
                spec.prob_range.0
            } else {
                rng.gen_range(spec.prob_range.0..=spec.prob_range.1)
            };
            let (birth, death) = match spec.kind {
                ActorKind::Oneshot => {
                    let b = rng.gen_range(0..n_days);
                    (b, b + 1)
                }
                ActorKind::Churning => {
                    // births spread over the scenario keep the population and
                    // its churn rate steady
                    (rng.gen_range(0..n_days), n_days)
                }
                _ => match spec.lifetime_days {
                    Some((lo, hi)) => {
                        let len = if lo == hi { lo } else { rng.gen_range(lo..=hi) }.min(n_days);
                        let b = rng.gen_range(0..=(n_days - len));
                        (b, b + len)
                    }
                    None => (0, n_days),
                },
            };
            let (period, phase) = if spec.kind == ActorKind::Periodic {
                let (lo, hi) = spec.period_range;
                let period = if lo == hi { lo } else { rng.gen_range(lo..=hi) };
                (period, rng.gen_range(0..period))
            } else {
                (1, 0)
            };
            let detectors: Vec<String> = (0..spec.detectors)
                .map(|_| format!("det{:02}", rng.gen_range(0..16u8)))
                .collect();
            let (ip, prefix_state) = if spec.kind == ActorKind::NeighborhoodMember {
                let prefix = member_cursor % n_bad;
                let host = 1 + member_cursor / n_bad;
                member_cursor += 1;
                (Ipv4Addr::from(prefix_base(prefix) | host), Some(prefix as usize))
            } else {
                let prefix = n_bad + singleton_cursor;
                singleton_cursor += 1;
                (Ipv4Addr::from(prefix_base(prefix) | 1), None)
            };
            actors.push(Actor {
                ip,
                kind: spec.kind,
                category: spec.category,
                daily_prob,
                volume: spec.volume,
                alerts_per_day: spec.alerts_per_active_day,
                detectors,
                birth,
                death,
                period,
                phase,
                prefix_state,
                alive: false,
                scanned_yesterday: false,
                scanned_today: false,
            });
        }
    }

    let nb = config.neighborhood;
    let q = config.churn_death_prob;
    let follow = config.cross_category_follow_prob;
    let mut alerts: Vec<Alert> = Vec::new();
    let mut records: Vec<TruthRecord> = Vec::new();

    for day in 0..n_days {
        let day_start = config.start + i64::from(day) * SECS_PER_DAY;

        // state transitions at the day boundary
        if day > 0 {
            for state in hot.iter_mut() {
                let stay = rng.gen_bool(nb.persistence);
                if !stay {
                    *state = !*state;
                }
            }
        }
        for actor in actors.iter_mut() {
            if actor.kind == ActorKind::Churning && day == actor.birth {
                actor.alive = true;
            }
            actor.scanned_yesterday = actor.scanned_today;
            actor.scanned_today = false;
        }

        // activity
        for actor in actors.iter_mut() {
            let in_lifetime = day >= actor.birth && day < actor.death;
            let attacks_primary = match actor.kind {
                ActorKind::Persistent => in_lifetime && rng.gen_bool(actor.daily_prob),
                ActorKind::Periodic => {
                    in_lifetime && (day - actor.birth) % actor.period == actor.phase
                }
                ActorKind::Oneshot => day == actor.birth,
                ActorKind::Churning => actor.alive,
                ActorKind::NeighborhoodMember => {
                    let state = actor.prefix_state.expect("member has a prefix");
                    let p = if hot[state] { nb.attack_prob_hot } else { nb.attack_prob_cold };
                    in_lifetime && rng.gen_bool(p)
                }
                ActorKind::CrossCategory => in_lifetime && rng.gen_bool(actor.daily_prob),
            };
            if attacks_primary {
                if actor.kind == ActorKind::CrossCategory {
                    actor.scanned_today = true;
                }
                emit_alerts(&mut alerts, &mut rng, actor, actor.category, day_start);
            }
            if actor.kind == ActorKind::CrossCategory
                && actor.scanned_yesterday
                && rng.gen_bool(follow)
            {
                let other = match actor.category {
                    Category::Scan => Category::Access,
                    Category::Access => Category::Scan,
                };
                emit_alerts(&mut alerts, &mut rng, actor, other, day_start);
            }
        }

        // ground truth for the *next* day, given everything up to now
        if day + 1 < n_days {
            for actor in actors.iter() {
                let next = day + 1;
                let next_alive = next >= actor.birth && next < actor.death;
                let p_primary = match actor.kind {
                    ActorKind::Persistent => {
                        if next_alive {
                            actor.daily_prob
                        } else {
                            0.0
                        }
                    }
                    ActorKind::Periodic => {
                        if next_alive && (next - actor.birth) % actor.period == actor.phase {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ActorKind::Oneshot => f64::from(next == actor.birth),
                    ActorKind::Churning => {
                        if actor.alive {
                            // the end-of-day death coin has not been tossed
                            1.0 - q
                        } else {
                            f64::from(next == actor.birth)
                        }
                    }
                    ActorKind::NeighborhoodMember => {
                        if next_alive {
                            let state = actor.prefix_state.expect("member has a prefix");
                            let (now, other) = if hot[state] {
                                (nb.attack_prob_hot, nb.attack_prob_cold)
                            } else {
                                (nb.attack_prob_cold, nb.attack_prob_hot)
                            };
                            nb.persistence * now + (1.0 - nb.persistence) * other
                        } else {
                            0.0
                        }
                    }
                    ActorKind::CrossCategory => {
                        if next_alive {
                            actor.daily_prob
                        } else {
                            0.0
                        }
                    }
                };
                let p_follow = if actor.kind == ActorKind::CrossCategory && actor.scanned_today {
                    follow
                } else {
                    0.0
                };
                let (p_scan, p_access) = match actor.category {
                    Category::Scan => (p_primary, p_follow),
                    Category::Access => (p_follow, p_primary),
                };
                records.push(TruthRecord { ip: actor.ip, day, p_scan, p_access });
            }
        }

        // end-of-day deaths
        for actor in actors.iter_mut() {
            if actor.kind == ActorKind::Churning && actor.alive && rng.gen_bool(q) {
                actor.alive = false;
                actor.death = day + 1;
            }
        }
    }

    alerts.sort_by(|a, b| {
        (a.time(), a.source(), a.category(), a.volume(), a.detector()).cmp(&(
            b.time(),
            b.source(),
            b.category(),
            b.volume(),
            b.detector(),
        ))
    });
    records.sort_by_key(|r| (r.day, u32::from(r.ip)));
    Ok(GeneratedScenario {
        alerts,
        truth: TruthTable { start: config.start, n_days, records },
    })
}

fn emit_alerts(
    alerts: &mut Vec<Alert>,
    rng: &mut ChaCha8Rng,
    actor: &Actor,
    category: Category,
    day_start: Timestamp,
) {
    let burst = i64::from(actor.alerts_per_day);
    let offset = rng.gen_range(1..(SECS_PER_DAY - burst));
    for i in 0..actor.alerts_per_day {
        let volume = match actor.volume {
            VolumeDist::Constant(v) => v,
            VolumeDist::Geometric(p) => geometric(rng, p),
        };
        let detector = actor.detectors[i as usize % actor.detectors.len()].clone();
        alerts.push(Alert::new(day_start + offset + i64::from(i), actor.ip, category, volume, detector));
    }
}

/// Generate and write the interchange files: alerts as line-delimited JSON,
/// truth as CSV. Returns the alert count.
pub fn generate_to_files(
    config: &ScenarioConfig,
    alerts_path: &Path,
    truth_path: &Path,
) -> Result<u64, SimgenError> {
    let scenario = generate(config)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(alerts_path)?);
    for alert in &scenario.alerts {
        writeln!(out, "{}", render_alert(alert))?;
    }
    out.flush()?;
    let mut truth = std::io::BufWriter::new(std::fs::File::create(truth_path)?);
    scenario.truth.write_csv(&mut truth)?;
    truth.flush()?;
    Ok(scenario.alerts.len() as u64)
}

/// Named scenario presets used by the verification suite and the examples.
pub mod presets {
    use super::*;

    /// Large pool of persistent scanners, mostly sporadic with a habitual
    /// minority, giving a low positive rate overall: the recalibration and
    /// oracle-Brier checks run on this.
    pub fn calibration(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            n_days: 32,
            start: default_start(),
            actors: [
                (8100, (0.01, 0.08)),
                (2700, (0.04, 0.16)),
                (675, (0.15, 0.4)),
                (200, (0.4, 0.75)),
            ]
            .into_iter()
            .map(|(count, prob_range)| ActorSpec {
                kind: ActorKind::Persistent,
                count,
                category: Category::Scan,
                prob_range,
                volume: VolumeDist::Geometric(0.4),
                alerts_per_active_day: 1,
                lifetime_days: None,
                period_range: default_period_range(),
                detectors: 2,
            })
            .collect(),
            prefix_pool_size: 16_384,
            bad_neighborhood_fraction: 0.0,
            neighborhood: NeighborhoodSpec::default(),
            cross_category_follow_prob: 0.0,
            churn_death_prob: 0.6,
        }
    }

    /// A mixed population of every actor kind; the model-quality checks
    /// train on this.
    pub fn standard(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            n_days: 32,
            start: default_start(),
            actors: vec![
                ActorSpec {
                    kind: ActorKind::Persistent,
                    count: 800,
                    category: Category::Scan,
                    prob_range: (0.03, 0.25),
                    volume: VolumeDist::Geometric(0.3),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 2,
                },
                ActorSpec {
                    kind: ActorKind::Persistent,
                    count: 500,
                    category: Category::Scan,
                    prob_range: (0.7, 0.97),
                    volume: VolumeDist::Geometric(0.3),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 2,
                },
                ActorSpec {
                    kind: ActorKind::Periodic,
                    count: 700,
                    category: Category::Scan,
                    prob_range: (1.0, 1.0),
                    volume: VolumeDist::Constant(2),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: (2, 4),
                    detectors: 1,
                },
                ActorSpec {
                    kind: ActorKind::Oneshot,
                    count: 800,
                    category: Category::Scan,
                    prob_range: (1.0, 1.0),
                    volume: VolumeDist::Geometric(0.2),
                    alerts_per_active_day: 4,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 1,
                },
                ActorSpec {
                    kind: ActorKind::Churning,
                    count: 1200,
                    category: Category::Scan,
                    prob_range: (1.0, 1.0),
                    volume: VolumeDist::Constant(1),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 1,
                },
                ActorSpec {
                    kind: ActorKind::CrossCategory,
                    count: 400,
                    category: Category::Scan,
                    prob_range: (0.2, 0.7),
                    volume: VolumeDist::Constant(3),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 2,
                },
            ],
            prefix_pool_size: 8192,
            bad_neighborhood_fraction: 0.0,
            neighborhood: NeighborhoodSpec::default(),
            cross_category_follow_prob: 0.7,
            churn_death_prob: 0.6,
        }
    }

    /// High-volume oneshot bursts over low-volume persistent attackers:
    /// activity ranking (GWOL) chases the bursts, probability ranking does
    /// not.
    pub fn gwol_contrast(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            n_days: 32,
            start: default_start(),
            actors: vec![
                ActorSpec {
                    kind: ActorKind::Persistent,
                    count: 300,
                    category: Category::Scan,
                    prob_range: (0.7, 0.95),
                    volume: VolumeDist::Constant(1),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 1,
                },
                ActorSpec {
                    kind: ActorKind::Oneshot,
                    count: 1600,
                    category: Category::Scan,
                    prob_range: (1.0, 1.0),
                    volume: VolumeDist::Constant(50),
                    alerts_per_active_day: 20,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 3,
                },
            ],
            prefix_pool_size: 4096,
            bad_neighborhood_fraction: 0.0,
            neighborhood: NeighborhoodSpec::default(),
            cross_category_follow_prob: 0.0,
            churn_death_prob: 0.6,
        }
    }

    /// Most of the signal sits in shared /24 activity; dropping the prefix
    /// features must cost measurable AUC here.
    pub fn bad_neighborhood(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            n_days: 32,
            start: default_start(),
            actors: vec![
                ActorSpec {
                    kind: ActorKind::NeighborhoodMember,
                    count: 2400,
                    category: Category::Scan,
                    prob_range: (0.5, 0.5),
                    volume: VolumeDist::Constant(1),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 1,
                },
                ActorSpec {
                    kind: ActorKind::Persistent,
                    count: 400,
                    category: Category::Scan,
                    prob_range: (0.15, 0.45),
                    volume: VolumeDist::Constant(1),
                    alerts_per_active_day: 1,
                    lifetime_days: None,
                    period_range: default_period_range(),
                    detectors: 1,
                },
            ],
            prefix_pool_size: 4096,
            // 2400 members over ~240 bad prefixes: 10 siblings each
            bad_neighborhood_fraction: 240.0 / 4096.0,
            neighborhood: NeighborhoodSpec {
                persistence: 0.85,
                attack_prob_hot: 0.5,
                attack_prob_cold: 0.05,
            },
            cross_category_follow_prob: 0.0,
            churn_death_prob: 0.6,
        }
    }

    /// A small mixed scenario for smoke tests and the walkthrough.
    pub fn small(seed: u64) -> ScenarioConfig {
        let mut config = standard(seed);
        for spec in config.actors.iter_mut() {
            spec.count /= 20;
        }
        config.n_days = 16;
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::AlertStore;

    fn single_actor_config(kind: ActorKind, prob: f64, n_days: u32) -> ScenarioConfig {
        ScenarioConfig {
            seed: 1,
            n_days,
            start: default_start(),
            actors: vec![ActorSpec {
                kind,
                count: 1,
                category: Category::Scan,
                prob_range: (prob, prob),
                volume: VolumeDist::Constant(1),
                alerts_per_active_day: 1,
                lifetime_days: None,
                period_range: (3, 3),
                detectors: 1,
            }],
            prefix_pool_size: 64,
            bad_neighborhood_fraction: 0.0,
            neighborhood: NeighborhoodSpec::default(),
            cross_category_follow_prob: 0.0,
            churn_death_prob: 0.6,
        }
    }

    #[test]
    fn certain_persistent_actor_attacks_every_day() {
        let scenario = generate(&single_actor_config(ActorKind::Persistent, 1.0, 10)).unwrap();
        assert_eq!(scenario.alerts.len(), 10);
        // truth 1.0 on every recorded day
        for r in &scenario.truth.records {
            assert_eq!(r.p_scan, 1.0);
            assert_eq!(r.p_access, 0.0);
        }
        assert_eq!(scenario.truth.records.len(), 9);
    }

    #[test]
    fn oneshot_truth_is_zero_after_its_day() {
        let scenario = generate(&single_actor_config(ActorKind::Oneshot, 1.0, 12)).unwrap();
        assert_eq!(scenario.alerts.len(), 1);
        let attack_day =
            ((scenario.alerts[0].time() - scenario.truth.start) / SECS_PER_DAY) as u32;
        for r in &scenario.truth.records {
            let expected = f64::from(r.day + 1 == attack_day);
            assert_eq!(r.p_scan, expected, "day {}", r.day);
        }
    }

    #[test]
    fn periodic_actor_truth_matches_schedule() {
        let scenario = generate(&single_actor_config(ActorKind::Periodic, 1.0, 13)).unwrap();
        let mut attack_days: Vec<u32> = scenario
            .alerts
            .iter()
            .map(|a| ((a.time() - scenario.truth.start) / SECS_PER_DAY) as u32)
            .collect();
        attack_days.dedup();
        // every 3rd day
        assert!(attack_days.windows(2).all(|w| w[1] - w[0] == 3));
        for r in &scenario.truth.records {
            assert_eq!(r.p_scan, f64::from(attack_days.contains(&(r.day + 1))));
        }
    }

    #[test]
    fn expired_churning_actor_has_zero_truth() {
        let mut config = single_actor_config(ActorKind::Churning, 1.0, 20);
        config.churn_death_prob = 0.5;
        let scenario = generate(&config).unwrap();
        let last_attack =
            ((scenario.alerts.last().unwrap().time() - scenario.truth.start) / SECS_PER_DAY) as u32;
        for r in &scenario.truth.records {
            if r.day >= last_attack + 1 {
                assert_eq!(r.p_scan, 0.0, "dead actor must have zero truth on day {}", r.day);
            } else if r.day >= last_attack.saturating_sub(0) && r.day < last_attack {
                // alive days carry the survival probability
                assert_eq!(r.p_scan, 0.5);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = presets::small(7);
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a.alerts, b.alerts);
        assert_eq!(a.truth, b.truth);
        let c = generate(&presets::small(8)).unwrap();
        assert_ne!(a.alerts, c.alerts);
    }

    #[test]
    fn stream_is_time_sorted() {
        let scenario = generate(&presets::small(3)).unwrap();
        assert!(scenario.alerts.windows(2).all(|w| w[0].time() <= w[1].time()));
    }

    #[test]
    fn empirical_rates_match_configured_probability() {
        // binomial 3σ check of the per-day attack frequency
        let mut config = single_actor_config(ActorKind::Persistent, 0.3, 30);
        config.actors[0].count = 2000;
        config.prefix_pool_size = 4096;
        let scenario = generate(&config).unwrap();
        let n = 2000.0 * 30.0;
        let rate = scenario.alerts.len() as f64 / n;
        let sigma = (0.3 * 0.7 / n).sqrt();
        assert!((rate - 0.3).abs() < 3.0 * sigma, "rate {rate}");
    }

    #[test]
    fn truth_matches_realized_frequency_for_churning() {
        // among actor-days with truth 1-q, the realized next-day attack
        // frequency should match 1-q within binomial noise
        let mut config = single_actor_config(ActorKind::Churning, 1.0, 30);
        config.actors[0].count = 3000;
        config.prefix_pool_size = 8192;
        config.churn_death_prob = 0.6;
        let scenario = generate(&config).unwrap();
        let mut store = AlertStore::new();
        store.ingest(scenario.alerts.clone());
        let mut hits = 0u64;
        let mut total = 0u64;
        for r in &scenario.truth.records {
            if r.p_scan == 0.4 {
                total += 1;
                let w = scenario.truth.window_for_day(r.day);
                if crate::dataset::label(&store, r.ip, &w, Category::Scan) {
                    hits += 1;
                }
            }
        }
        assert!(total > 1000, "need a populated sample, got {total}");
        let rate = hits as f64 / total as f64;
        let sigma = (0.4 * 0.6 / total as f64).sqrt();
        assert!((rate - 0.4).abs() < 3.0 * sigma, "rate {rate} over {total}");
    }

    #[test]
    fn oracle_scores_slice_one_day() {
        let scenario = generate(&presets::small(5)).unwrap();
        let day = 7;
        let scores = scenario.truth.oracle_scores(day, Category::Scan).unwrap();
        assert!(!scores.is_empty());
        let total_that_day =
            scenario.truth.records.iter().filter(|r| r.day == day).count();
        assert_eq!(scores.len(), total_that_day);
        let bad = scenario.truth.oracle_scores(scenario.truth.n_days, Category::Scan);
        assert!(matches!(bad, Err(SimgenError::OutOfRange { .. })));
    }

    #[test]
    fn truth_csv_round_trip() {
        let scenario = generate(&presets::small(9)).unwrap();
        let mut buf = Vec::new();
        scenario.truth.write_csv(&mut buf).unwrap();
        let back = TruthTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, scenario.truth);
    }

    #[test]
    fn files_round_trip_through_interchange_format() {
        let dir = tempfile::tempdir().unwrap();
        let alerts_path = dir.path().join("alerts.jsonl");
        let truth_path = dir.path().join("truth.csv");
        let config = presets::small(11);
        let count = generate_to_files(&config, &alerts_path, &truth_path).unwrap();
        let file = std::io::BufReader::new(std::fs::File::open(&alerts_path).unwrap());
        let alerts = crate::alerts::read_alerts(file).unwrap();
        assert_eq!(alerts.len() as u64, count);
        let expected = generate(&config).unwrap();
        assert_eq!(alerts, expected.alerts);
    }

    #[test]
    fn day_and_t0_mapping_invert() {
        let scenario = generate(&presets::small(2)).unwrap();
        for day in [0, 3, scenario.truth.max_day()] {
            let t0 = scenario.truth.prediction_time(day);
            assert_eq!(scenario.truth.day_of_t0(t0), Some(day));
        }
        assert_eq!(scenario.truth.day_of_t0(scenario.truth.start), None);
    }

    #[test]
    fn config_validation_catches_mistakes() {
        let mut config = presets::small(1);
        config.n_days = 1;
        assert!(matches!(generate(&config), Err(SimgenError::Config(_))));
        let mut config = presets::small(1);
        config.actors[0].prob_range = (0.9, 0.1);
        assert!(matches!(generate(&config), Err(SimgenError::Config(_))));
        let mut config = presets::small(1);
        config.prefix_pool_size = 2;
        assert!(matches!(generate(&config), Err(SimgenError::Config(_))));
    }

    #[test]
    fn scenario_config_json_round_trip() {
        let config = presets::bad_neighborhood(13);
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }
}
