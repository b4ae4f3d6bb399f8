//! Score-file and blacklist-sidecar formats shared by the subcommands.
//!
//! A score file is a CSV. The single-t0 form (from `score --snapshot`)
//! carries its context in a leading comment so downstream commands need no
//! repeated flags:
//!
//! ```text
//! # t0=2020-01-09T00:00:00Z category=scan
//! ip,fmp
//! 10.0.1.1,0.9251
//! ```
//!
//! The per-sample form (from `score --dataset`) has columns `ip,t0,fmp` and
//! no comment.

use std::io::{BufRead, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use fmp::alerts::{format_ts, parse_ts, Category, Timestamp};
use fmp::blacklist::{Blacklist, BlacklistEntry, Policy};

use crate::CliError;

pub struct ScoreFile {
    pub t0: Option<Timestamp>,
    pub category: Option<Category>,
    /// (ip, per-row t0 when present, score)
    pub rows: Vec<(Ipv4Addr, Option<Timestamp>, f64)>,
}

pub fn write_scores_single(
    path: &Path,
    t0: Timestamp,
    category: Category,
    rows: &[(Ipv4Addr, f64)],
) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&format!("# t0={} category={}\n", format_ts(t0), category));
    out.push_str("ip,fmp\n");
    for (ip, score) in rows {
        out.push_str(&format!("{ip},{score}\n"));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub fn write_scores_per_sample(
    path: &Path,
    rows: &[(Ipv4Addr, Timestamp, f64)],
) -> Result<(), CliError> {
    let mut out = String::from("ip,t0,fmp\n");
    for (ip, t0, score) in rows {
        out.push_str(&format!("{ip},{},{score}\n", format_ts(*t0)));
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub fn read_scores(path: &Path) -> Result<ScoreFile, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::io(format!("opening {}: {e}", path.display())))?;
    let reader = std::io::BufReader::new(file);
    let mut t0 = None;
    let mut category = None;
    let mut header: Option<bool> = None; // Some(true) when rows carry a t0 column
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(e.to_string()))?;
        let trimmed = line.trim();
        let bad = |msg: &str| CliError::data(format!("{}:{}: {msg}", path.display(), i + 1));
        if trimmed.is_empty() {
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('#') {
            for part in meta.split_whitespace() {
                if let Some(v) = part.strip_prefix("t0=") {
                    t0 = Some(parse_ts(v).map_err(|_| bad("bad t0 in comment"))?);
                } else if let Some(v) = part.strip_prefix("category=") {
                    category =
                        Some(v.parse::<Category>().map_err(|_| bad("bad category in comment"))?);
                }
            }
            continue;
        }
        match header {
            None => {
                header = match trimmed {
                    "ip,fmp" => Some(false),
                    "ip,t0,fmp" => Some(true),
                    _ => return Err(bad("expected header ip,fmp or ip,t0,fmp")),
                };
            }
            Some(with_t0) => {
                let fields: Vec<&str> = trimmed.split(',').collect();
                if fields.len() != if with_t0 { 3 } else { 2 } {
                    return Err(bad("wrong column count"));
                }
                let ip: Ipv4Addr = fields[0].parse().map_err(|_| bad("bad ip"))?;
                let row_t0 = if with_t0 {
                    Some(parse_ts(fields[1]).map_err(|_| bad("bad t0"))?)
                } else {
                    None
                };
                let score: f64 =
                    fields.last().unwrap().parse().map_err(|_| bad("bad score"))?;
                rows.push((ip, row_t0, score));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{}: no score rows", path.display())));
    }
    Ok(ScoreFile { t0, category, rows })
}

/// JSON sidecar written next to every blacklist text file.
#[derive(serde::Serialize, serde::Deserialize)]
pub struct BlacklistSidecar {
    pub t0: String,
    pub category: Category,
    #[serde(flatten)]
    pub policy: Policy,
    pub entries: Vec<BlacklistEntry>,
}

pub fn write_blacklist(path: &Path, bl: &Blacklist) -> Result<(), CliError> {
    std::fs::write(path, bl.to_text())
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
    let sidecar = BlacklistSidecar {
        t0: format_ts(bl.generated_at),
        category: bl.category,
        policy: bl.policy.clone(),
        entries: bl.entries.clone(),
    };
    let body = serde_json::to_vec_pretty(&sidecar)
        .map_err(|e| CliError::internal(e.to_string()))?;
    let sidecar_path = sidecar_path(path);
    std::fs::write(&sidecar_path, body)
        .map_err(|e| CliError::io(format!("writing {}: {e}", sidecar_path.display())))?;
    Ok(())
}

pub fn sidecar_path(list_path: &Path) -> std::path::PathBuf {
    let mut name = list_path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    list_path.with_file_name(name)
}

pub fn read_blacklist_sidecar(list_path: &Path) -> Option<BlacklistSidecar> {
    let bytes = std::fs::read(sidecar_path(list_path)).ok()?;
    serde_json::from_slice(&bytes).ok()
}

/// Read a file of RFC 3339 prediction times, one per line, `#` comments.
pub fn read_t0_list(path: &Path) -> Result<Vec<Timestamp>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
    let mut times = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let t = parse_ts(trimmed)
            .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        times.push(t);
    }
    if times.is_empty() {
        return Err(CliError::data(format!("{}: no prediction times", path.display())));
    }
    Ok(times)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::io(format!("creating {}: {e}", path.display())))
}
