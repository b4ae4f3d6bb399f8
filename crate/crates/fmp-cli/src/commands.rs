//! Implementations of the subcommands. Each one ends by printing a single
//! JSON summary line to stdout and writing a manifest next to its primary
//! output.

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde_json::json;

use fmp::alerts::{format_ts, parse_ts, read_alerts, Category, Timestamp, WindowConfig};
use fmp::blacklist::{evaluate_blacklist, fmp_blacklist, gwol, Blacklist, Policy};
use fmp::dataset::{self, Dataset};
use fmp::eval::{brier, calibration_curve, roc, CalibrationReport, RocReport};
use fmp::features::{
    assemble_vector_with, ContextActivity, EwmaParams, FeatureParams,
};
use fmp::model::{
    load_model, save_model, train_gbdt, train_logreg, GbdtConfig, TrainedModel,
};
use fmp::simgen::{generate_to_files, ScenarioConfig};
use fmp::store::{AlertStore, ContextMaps};

use crate::io;
use crate::manifest::Manifest;
use crate::{CliError, Command};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Ingest { alerts, snapshot } => ingest(&alerts, &snapshot),
        Command::Enrich { snapshot, enrichment, maps } => {
            enrich(&snapshot, enrichment.as_deref(), maps.as_deref())
        }
        Command::Dataset { snapshot, category, t0_list, out, w_h, w_p, alpha } => {
            build_dataset(&snapshot, category, &t0_list, &out, w_h, w_p, alpha)
        }
        Command::Train {
            dataset,
            model,
            out,
            test_fraction,
            test_out,
            subsample_ratio,
            no_subsample,
            seed,
            trees,
            depth,
            learning_rate,
            lambda,
            min_leaf,
            epochs,
        } => train(TrainArgs {
            dataset,
            model,
            out,
            test_fraction,
            test_out,
            subsample_ratio,
            no_subsample,
            seed,
            trees,
            depth,
            learning_rate,
            lambda,
            min_leaf,
            epochs,
        }),
        Command::Score { model, snapshot, t0, dataset, out } => {
            score(&model, snapshot.as_deref(), t0.as_deref(), dataset.as_deref(), &out)
        }
        Command::Blacklist { scores, topn, threshold, t0, category, out } => {
            blacklist(&scores, topn, threshold, t0.as_deref(), category, &out)
        }
        Command::Gwol { snapshot, t0, window, n, category, out } => {
            gwol_command(&snapshot, &t0, window, n, category, &out)
        }
        Command::Eval { pred, labels, report, n_bins, min_count } => {
            eval(&pred, &labels, &report, n_bins, min_count)
        }
        Command::EvalBlacklist { list, snapshot, t0, category, report } => {
            eval_blacklist(&list, &snapshot, t0.as_deref(), category, report.as_deref())
        }
    }
}

fn load_snapshot(path: &Path) -> Result<AlertStore, CliError> {
    Ok(AlertStore::snapshot_load(path)?)
}

fn parse_t0(s: &str) -> Result<Timestamp, CliError> {
    parse_ts(s).map_err(|e| CliError::config(format!("bad --t0: {e}")))
}

fn simulate(config_path: &Path, out: &Path) -> Result<(), CliError> {
    let config_bytes = std::fs::read(config_path)
        .map_err(|e| CliError::io(format!("reading {}: {e}", config_path.display())))?;
    let config: ScenarioConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| CliError::data(format!("{}: {e}", config_path.display())))?;
    io::create_dir(out)?;
    let alerts_path = out.join("alerts.jsonl");
    let truth_path = out.join("truth.csv");
    let count = generate_to_files(&config, &alerts_path, &truth_path)?;

    let mut manifest = Manifest::new(
        "simulate",
        json!({"config": config_path.display().to_string(), "out": out.display().to_string()}),
    );
    manifest.input(config_path)?;
    manifest.output(&alerts_path);
    manifest.output(&truth_path);
    manifest.write(out)?;
    println!(
        "{}",
        json!({"alerts": count, "out": out.display().to_string(), "seed": config.seed})
    );
    Ok(())
}

fn ingest(alerts_path: &Path, snapshot_path: &Path) -> Result<(), CliError> {
    let mut manifest = Manifest::new(
        "ingest",
        json!({
            "alerts": alerts_path.display().to_string(),
            "snapshot": snapshot_path.display().to_string(),
        }),
    );
    manifest.input(alerts_path)?;
    let mut store = if snapshot_path.exists() {
        manifest.input(snapshot_path)?;
        load_snapshot(snapshot_path)?
    } else {
        AlertStore::new()
    };
    let file = std::fs::File::open(alerts_path)
        .map_err(|e| CliError::io(format!("opening {}: {e}", alerts_path.display())))?;
    let alerts = read_alerts(std::io::BufReader::new(file))?;
    let summary = store.ingest(alerts);
    store.snapshot_save(snapshot_path)?;
    manifest.output(snapshot_path);
    manifest.write(snapshot_path)?;
    println!(
        "{}",
        json!({
            "scan": summary.scan,
            "access": summary.access,
            "duplicates": summary.duplicates,
            "entities": store.entity_count(),
        })
    );
    Ok(())
}

fn enrich(
    snapshot_path: &Path,
    enrichment: Option<&Path>,
    maps: Option<&Path>,
) -> Result<(), CliError> {
    if enrichment.is_none() && maps.is_none() {
        return Err(CliError::config("pass --enrichment and/or --maps"));
    }
    let mut manifest = Manifest::new(
        "enrich",
        json!({
            "snapshot": snapshot_path.display().to_string(),
            "enrichment": enrichment.map(|p| p.display().to_string()),
            "maps": maps.map(|p| p.display().to_string()),
        }),
    );
    manifest.input(snapshot_path)?;
    let mut store = load_snapshot(snapshot_path)?;
    let mut applied = 0;
    let mut skipped = 0;
    if let Some(path) = enrichment {
        manifest.input(path)?;
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::io(format!("opening {}: {e}", path.display())))?;
        let summary = store
            .attach_enrichment(std::io::BufReader::new(file))
            .map_err(|e| CliError::io(e.to_string()))?;
        applied = summary.applied;
        skipped = summary.skipped;
    }
    if let Some(dir) = maps {
        manifest.input_dir(dir)?;
        store.set_context(ContextMaps::load_dir(dir)?);
    }
    store.snapshot_save(snapshot_path)?;
    manifest.output(snapshot_path);
    manifest.write(snapshot_path)?;
    println!("{}", json!({"applied": applied, "skipped": skipped}));
    Ok(())
}

fn build_dataset(
    snapshot_path: &Path,
    category: Category,
    t0_list: &Path,
    out: &Path,
    w_h: u32,
    w_p: u32,
    alpha: f64,
) -> Result<(), CliError> {
    let params = FeatureParams {
        ewma: EwmaParams::new(alpha).map_err(|e| CliError::config(e.to_string()))?,
        ..FeatureParams::default()
    };
    let mut manifest = Manifest::new(
        "dataset",
        json!({
            "snapshot": snapshot_path.display().to_string(),
            "category": category.as_str(),
            "t0_list": t0_list.display().to_string(),
            "out": out.display().to_string(),
            "w_h": w_h,
            "w_p": w_p,
            "alpha": alpha,
        }),
    );
    manifest.input(snapshot_path)?;
    manifest.input(t0_list)?;
    let store = load_snapshot(snapshot_path)?;
    let times = io::read_t0_list(t0_list)?;
    let ds = dataset::build(&store, &times, category, w_h, w_p, &params)?;
    dataset::write_dir(&ds, out)?;
    manifest.output(&out.join("features.csv"));
    manifest.output(&out.join("dataset.json"));
    manifest.write(out)?;
    println!(
        "{}",
        json!({
            "samples": ds.len(),
            "positives": ds.n_pos,
            "negatives": ds.n_neg,
            "positive_fraction": ds.positive_fraction(),
            "beta": ds.beta,
        })
    );
    Ok(())
}

struct TrainArgs {
    dataset: PathBuf,
    model: String,
    out: PathBuf,
    test_fraction: f64,
    test_out: Option<PathBuf>,
    subsample_ratio: f64,
    no_subsample: bool,
    seed: u64,
    trees: usize,
    depth: usize,
    learning_rate: Option<f64>,
    lambda: f64,
    min_leaf: usize,
    epochs: usize,
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new(
        "train",
        json!({
            "dataset": args.dataset.display().to_string(),
            "model": args.model,
            "out": args.out.display().to_string(),
            "test_fraction": args.test_fraction,
            "subsample_ratio": args.subsample_ratio,
            "no_subsample": args.no_subsample,
            "seed": args.seed,
            "trees": args.trees,
            "depth": args.depth,
            "learning_rate": args.learning_rate,
            "lambda": args.lambda,
            "min_leaf": args.min_leaf,
            "epochs": args.epochs,
        }),
    );
    manifest.input_dir(&args.dataset)?;
    let pool = dataset::read_dir(&args.dataset)?;

    let (train_pool, test) = if args.test_fraction == 0.0 {
        (pool, None)
    } else {
        let (train_pool, test) = dataset::split(&pool, args.test_fraction, args.seed)?;
        (train_pool, Some(test))
    };
    if let Some(test) = &test {
        let test_dir = args.test_out.clone().unwrap_or_else(|| args.dataset.join("test"));
        dataset::write_dir(test, &test_dir)?;
        manifest.output(&test_dir.join("features.csv"));
        manifest.output(&test_dir.join("dataset.json"));
    }
    let train_set = if args.no_subsample {
        train_pool
    } else {
        dataset::subsample_majority(&train_pool, args.subsample_ratio, args.seed + 1)?
    };

    let model: TrainedModel = match args.model.as_str() {
        "gbdt" => {
            let config = GbdtConfig {
                n_trees: args.trees,
                max_depth: args.depth,
                learning_rate: args.learning_rate.unwrap_or(0.1),
                l2_lambda: args.lambda,
                min_samples_leaf: args.min_leaf,
            };
            train_gbdt(&train_set, &config, args.seed + 2)?
        }
        "logreg" => train_logreg(
            &train_set,
            args.epochs,
            args.learning_rate.unwrap_or(0.3),
            args.seed + 2,
        )?,
        other => {
            return Err(CliError::config(format!(
                "unknown model kind {other:?} (expected gbdt or logreg)"
            )))
        }
    };
    save_model(&model, &args.out)?;
    manifest.output(&args.out);
    manifest.write(&args.out)?;
    println!(
        "{}",
        json!({
            "model": args.model,
            "train_samples": train_set.len(),
            "test_samples": test.as_ref().map(|t| t.len()),
            "beta": model.beta,
            "final_train_loss": model.metadata.train_loss.last(),
        })
    );
    Ok(())
}

fn score(
    model_path: &Path,
    snapshot: Option<&Path>,
    t0: Option<&str>,
    dataset_dir: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let mut manifest = Manifest::new(
        "score",
        json!({
            "model": model_path.display().to_string(),
            "snapshot": snapshot.map(|p| p.display().to_string()),
            "t0": t0,
            "dataset": dataset_dir.map(|p| p.display().to_string()),
            "out": out.display().to_string(),
        }),
    );
    manifest.input(model_path)?;
    let scored = match (snapshot, dataset_dir) {
        (Some(snapshot_path), None) => {
            let t0 = parse_t0(t0.ok_or_else(|| CliError::config("--snapshot needs --t0"))?)?;
            manifest.input(snapshot_path)?;
            let store = load_snapshot(snapshot_path)?;
            let window =
                WindowConfig { t0, w_h: model.metadata.w_h, w_p: model.metadata.w_p };
            let params = FeatureParams {
                ewma: EwmaParams::new(model.metadata.alpha)
                    .map_err(|e| CliError::data(e.to_string()))?,
                ..FeatureParams::default()
            };
            let history = window.history();
            let category = model.metadata.target_category;
            let activity = ContextActivity::compute(&store, &window);
            let mut rows: Vec<(Ipv4Addr, f64)> = Vec::new();
            for ip in store.ips() {
                let record = store.entity(ip).expect("listed ip");
                if !record.has_category_in(history, category) {
                    continue;
                }
                let x = assemble_vector_with(&store, ip, &window, &params, &activity);
                rows.push((ip, model.fmp_score(&x)?));
            }
            if rows.is_empty() {
                return Err(CliError::data("no eligible IPs at the given t0"));
            }
            io::write_scores_single(out, t0, category, &rows)?;
            rows.len()
        }
        (None, Some(dir)) => {
            manifest.input_dir(dir)?;
            let ds = dataset::read_dir(dir)?;
            let mut rows: Vec<(Ipv4Addr, Timestamp, f64)> = Vec::with_capacity(ds.len());
            for s in &ds.samples {
                rows.push((s.ip, s.t0, model.fmp_score(&s.x)?));
            }
            io::write_scores_per_sample(out, &rows)?;
            rows.len()
        }
        _ => {
            return Err(CliError::config(
                "pass either --snapshot with --t0, or --dataset",
            ))
        }
    };
    manifest.output(out);
    manifest.write(out)?;
    println!("{}", json!({"scored": scored, "out": out.display().to_string()}));
    Ok(())
}

fn blacklist(
    scores_path: &Path,
    topn: Option<usize>,
    threshold: Option<f64>,
    t0_flag: Option<&str>,
    category_flag: Option<Category>,
    out: &Path,
) -> Result<(), CliError> {
    let policy = match (topn, threshold) {
        (Some(n), None) => Policy::FmpTopN { n },
        (None, Some(t)) => Policy::FmpThreshold { t },
        _ => return Err(CliError::config("pass exactly one of --topn or --threshold")),
    };
    let mut manifest = Manifest::new(
        "blacklist",
        json!({
            "scores": scores_path.display().to_string(),
            "policy": policy.to_string(),
            "t0": t0_flag,
            "category": category_flag.map(|c| c.as_str()),
            "out": out.display().to_string(),
        }),
    );
    manifest.input(scores_path)?;
    let file = io::read_scores(scores_path)?;
    let t0 = match t0_flag {
        Some(s) => parse_t0(s)?,
        None => file.t0.ok_or_else(|| {
            CliError::config("score file carries no t0; pass --t0")
        })?,
    };
    let category = category_flag.or(file.category).ok_or_else(|| {
        CliError::config("score file carries no category; pass --category")
    })?;
    let scored: Vec<(Ipv4Addr, f64)> =
        file.rows.iter().map(|(ip, _, score)| (*ip, *score)).collect();
    let bl = fmp_blacklist(&scored, policy, category, t0)?;
    io::write_blacklist(out, &bl)?;
    manifest.output(out);
    manifest.output(&io::sidecar_path(out));
    manifest.write(out)?;
    println!("{}", json!({"entries": bl.len(), "out": out.display().to_string()}));
    Ok(())
}

fn gwol_command(
    snapshot_path: &Path,
    t0: &str,
    window: u32,
    n: usize,
    category: Category,
    out: &Path,
) -> Result<(), CliError> {
    let t0 = parse_t0(t0)?;
    let mut manifest = Manifest::new(
        "gwol",
        json!({
            "snapshot": snapshot_path.display().to_string(),
            "t0": format_ts(t0),
            "window": window,
            "n": n,
            "category": category.as_str(),
            "out": out.display().to_string(),
        }),
    );
    manifest.input(snapshot_path)?;
    let store = load_snapshot(snapshot_path)?;
    let bl = gwol(&store, t0, window, n, category)?;
    io::write_blacklist(out, &bl)?;
    manifest.output(out);
    manifest.output(&io::sidecar_path(out));
    manifest.write(out)?;
    println!("{}", json!({"entries": bl.len(), "out": out.display().to_string()}));
    Ok(())
}

#[derive(serde::Serialize)]
struct EvalReport {
    n: usize,
    brier: f64,
    auc: f64,
    roc: RocReport,
    calibration: CalibrationReport,
}

fn eval(
    pred_path: &Path,
    labels_dir: &Path,
    report_path: &Path,
    n_bins: usize,
    min_count: u64,
) -> Result<(), CliError> {
    let mut manifest = Manifest::new(
        "eval",
        json!({
            "pred": pred_path.display().to_string(),
            "labels": labels_dir.display().to_string(),
            "report": report_path.display().to_string(),
            "n_bins": n_bins,
            "min_count": min_count,
        }),
    );
    manifest.input(pred_path)?;
    manifest.input_dir(labels_dir)?;
    let scores = io::read_scores(pred_path)?;
    let ds = dataset::read_dir(labels_dir)?;

    let with_t0 = scores.rows.first().map(|(_, t0, _)| t0.is_some()).unwrap_or(false);
    let mut pred = Vec::with_capacity(scores.rows.len());
    let mut y = Vec::with_capacity(scores.rows.len());
    if with_t0 {
        let by_key: std::collections::BTreeMap<(Ipv4Addr, Timestamp), bool> =
            ds.samples.iter().map(|s| ((s.ip, s.t0), s.y)).collect();
        for (ip, t0, score) in &scores.rows {
            let key = (*ip, t0.expect("per-sample form"));
            let label = by_key.get(&key).ok_or_else(|| {
                CliError::data(format!("no labeled sample for {ip} at {}", format_ts(key.1)))
            })?;
            pred.push(*score);
            y.push(*label);
        }
    } else {
        let mut by_ip: std::collections::BTreeMap<Ipv4Addr, Vec<bool>> = Default::default();
        for s in &ds.samples {
            by_ip.entry(s.ip).or_default().push(s.y);
        }
        for (ip, _, score) in &scores.rows {
            let labels = by_ip
                .get(ip)
                .ok_or_else(|| CliError::data(format!("no labeled sample for {ip}")))?;
            if labels.len() > 1 {
                return Err(CliError::data(format!(
                    "{ip} is labeled at several prediction times; score with --dataset \
                     to keep the t0 column"
                )));
            }
            pred.push(*score);
            y.push(labels[0]);
        }
    }

    let brier_score = brier(&pred, &y).map_err(|e| CliError::data(e.to_string()))?;
    let roc_report = roc(&pred, &y).map_err(|e| CliError::data(e.to_string()))?;
    let calibration = calibration_curve(&pred, &y, n_bins, min_count)
        .map_err(|e| CliError::data(e.to_string()))?;
    let report = EvalReport {
        n: pred.len(),
        brier: brier_score,
        auc: roc_report.auc,
        roc: roc_report,
        calibration,
    };
    let body =
        serde_json::to_vec_pretty(&report).map_err(|e| CliError::internal(e.to_string()))?;
    std::fs::write(report_path, body)
        .map_err(|e| CliError::io(format!("writing {}: {e}", report_path.display())))?;
    // gnuplot-ready point lists next to the report
    let roc_csv = report_path.with_extension("roc.csv");
    io::write_text(&roc_csv, &report.roc.to_csv())?;
    let cal_csv = report_path.with_extension("calibration.csv");
    io::write_text(&cal_csv, &report.calibration.to_csv())?;
    manifest.output(report_path);
    manifest.output(&roc_csv);
    manifest.output(&cal_csv);
    manifest.write(report_path)?;
    println!(
        "{}",
        json!({
            "n": report.n,
            "brier": report.brier,
            "auc": report.auc,
            "calibration_max_gap": report.calibration.max_gap,
        })
    );
    Ok(())
}

fn eval_blacklist(
    list_path: &Path,
    snapshot_path: &Path,
    t0_flag: Option<&str>,
    category_flag: Option<Category>,
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let sidecar = io::read_blacklist_sidecar(list_path);
    let t0 = match (t0_flag, &sidecar) {
        (Some(s), _) => parse_t0(s)?,
        (None, Some(sc)) => parse_ts(&sc.t0)
            .map_err(|e| CliError::data(format!("sidecar t0: {e}")))?,
        (None, None) => {
            return Err(CliError::config("no sidecar next to the list; pass --t0"))
        }
    };
    let category = match (category_flag, &sidecar) {
        (Some(c), _) => c,
        (None, Some(sc)) => sc.category,
        (None, None) => {
            return Err(CliError::config("no sidecar next to the list; pass --category"))
        }
    };
    let store = load_snapshot(snapshot_path)?;
    let file = std::fs::File::open(list_path)
        .map_err(|e| CliError::io(format!("opening {}: {e}", list_path.display())))?;
    let name = list_path.display().to_string();
    let bl: Blacklist = fmp::blacklist::read_plain_list(
        std::io::BufReader::new(file),
        &name,
        category,
        t0,
    )?;
    let report = evaluate_blacklist(&bl, &store, category);
    let body =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::internal(e.to_string()))?;
    println!("{body}");
    if let Some(path) = report_path {
        std::fs::write(path, &body)
            .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))?;
        let mut manifest = Manifest::new(
            "eval-blacklist",
            json!({
                "list": name,
                "snapshot": snapshot_path.display().to_string(),
                "t0": format_ts(t0),
                "category": category.as_str(),
                "report": path.display().to_string(),
            }),
        );
        manifest.input(list_path)?;
        manifest.input(snapshot_path)?;
        manifest.output(path);
        manifest.write(path)?;
    }
    Ok(())
}
