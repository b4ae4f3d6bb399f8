//! Dump the built-in scenario presets as JSON files, ready to edit and feed
//! to `fmp simulate --config`.
//!
//! ```text
//! cargo run -p fmp --example export_scenarios -- <output-dir> [seed]
//! ```

use fmp::simgen::presets;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| {
        eprintln!("usage: export_scenarios <output-dir> [seed]");
        std::process::exit(1);
    }));
    let seed: u64 = args.next().map(|s| s.parse().expect("numeric seed")).unwrap_or(42);
    std::fs::create_dir_all(&dir).expect("create output dir");
    let all = [
        ("small", presets::small(seed)),
        ("calibration", presets::calibration(seed)),
        ("standard", presets::standard(seed)),
        ("gwol_contrast", presets::gwol_contrast(seed)),
        ("bad_neighborhood", presets::bad_neighborhood(seed)),
    ];
    for (name, config) in all {
        let path = dir.join(format!("{name}.json"));
        let body = serde_json::to_vec_pretty(&config).expect("serialize");
        std::fs::write(&path, body).expect("write scenario");
        println!("wrote {}", path.display());
    }
}
