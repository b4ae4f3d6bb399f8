//! Future Maliciousness Probability (FMP) scoring of IPv4 addresses.
//!
//! This crate turns streams of security alerts into per-IP probability
//! estimates of being reported malicious again within the next day(s), and
//! into predictive blacklists built from those estimates. The pipeline:
//!
//! 1. [`alerts`] — parse the line-delimited alert interchange format;
//! 2. [`store`] — time-indexed per-IP storage with /24 prefix index,
//!    enrichment and snapshots;
//! 3. [`features`] — the fixed 58-dimensional feature vector per
//!    (IP, prediction time);
//! 4. [`dataset`] — labeled samples over many prediction times, train/test
//!    splitting and majority-class subsampling;
//! 5. [`model`] — logistic regression and gradient boosted trees, plus the
//!    closed-form recalibration that removes subsampling bias;
//! 6. [`eval`] — Brier score, calibration curves, ROC/AUC;
//! 7. [`blacklist`] — top-N / threshold blacklists, worst-offender
//!    baselines, hit-rate evaluation;
//! 8. [`simgen`] — a seeded synthetic alert generator with closed-form
//!    ground-truth probabilities, used to verify the whole chain.
//!
//! See the book under `book/` for a guided tour with runnable examples.

pub mod alerts;
pub mod blacklist;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod model;
pub mod simgen;
pub mod store;

pub use alerts::{Alert, Category, TimeRange, Timestamp, WindowConfig};
pub use features::{FeatureVector, FEATURE_COUNT};
pub use store::AlertStore;
