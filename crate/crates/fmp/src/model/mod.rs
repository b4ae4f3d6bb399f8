//! Binary class-probability estimators and FMP scoring.
//!
//! Two estimators are provided: full-batch logistic regression
//! ([`logreg`]) and gradient boosted decision trees trained with Newton
//! steps on the logistic loss ([`gbdt`]). Both produce a raw probability
//! `σ(F(x))`; the trait-free enum keeps model files self-describing.
//!
//! Training runs on subsampled (class-balanced) data, but the scores must
//! estimate probabilities under the *original* class distribution. With
//! β = N⁺/N⁻ of the original pool, the skew introduced by keeping only a
//! β-fraction of the negatives has a closed-form correction:
//!
//! ```text
//! ŷ = β·ŷ_s / (β·ŷ_s − ŷ_s + 1)
//! ```
//!
//! [`recalibrate`] applies it. The map is a strictly increasing bijection of
//! [0, 1] for every β > 0, so rankings — and therefore top-N lists and ROC
//! curves — are identical before and after recalibration. The recalibrated
//! output is the FMP score.

pub mod gbdt;
pub mod logreg;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alerts::Category;
use crate::features::{FeatureVector, FEATURE_COUNT};

pub use gbdt::{train_gbdt, GbdtConfig, GbdtParams, Node, Tree};
pub use logreg::{train_logreg, LogregParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("training diverged to a non-finite loss; lower the learning rate")]
    NonFinite,
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("feature schema mismatch: model built for {model}, current is {current}")]
    SchemaMismatch { model: String, current: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("model i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported model file version {found}")]
    VersionMismatch { found: u8 },
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
}

/// Everything needed to reproduce and safely apply a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub alpha: f64,
    pub schema_hash: String,
    pub target_category: Category,
    pub w_h: u32,
    pub w_p: u32,
    /// Whether the training pool had been majority-subsampled; scores of
    /// such models are recalibrated.
    pub subsampled: bool,
    /// Mean training log-loss after each epoch (logreg) or tree (gbdt).
    pub train_loss: Vec<f64>,
}

/// Estimator-specific parameters, tagged by kind in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum EstimatorParams {
    Logreg(LogregParams),
    Gbdt(GbdtParams),
}

/// A fitted class-probability estimator with its recalibration parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    #[serde(flatten)]
    pub estimator: EstimatorParams,
    /// Original-pool class ratio N⁺/N⁻ of the training data.
    pub beta: f64,
    pub metadata: ModelMetadata,
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Undo the probability skew of majority-class subsampling.
///
/// `beta` is the original-pool N⁺/N⁻ ratio. β = 1 is the identity; the
/// endpoints 0 and 1 are fixed for every β.
pub fn recalibrate(y_s: f64, beta: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&y_s) {
        return Err(ModelError::Domain(format!("score {y_s} outside [0, 1]")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(ModelError::Domain(format!("beta {beta} must be positive and finite")));
    }
    // denominator β·ŷ − ŷ + 1 rewritten as β·ŷ + (1 − ŷ): no cancellation,
    // and the endpoints 0 and 1 map exactly
    Ok(beta * y_s / (beta * y_s + (1.0 - y_s)))
}

impl TrainedModel {
    fn check_schema(&self) -> Result<(), ModelError> {
        let current = crate::features::schema_hash();
        if self.metadata.schema_hash != current {
            return Err(ModelError::SchemaMismatch {
                model: self.metadata.schema_hash.clone(),
                current: current.to_string(),
            });
        }
        Ok(())
    }

    /// Raw estimated probability of the positive class, `σ(F(x))`.
    ///
    /// When the model was trained on subsampled data this is ŷ_s, the
    /// estimate under the balanced distribution.
    pub fn predict_raw(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        self.check_schema()?;
        let raw = match &self.estimator {
            EstimatorParams::Logreg(p) => p.raw_score(x.as_slice()),
            EstimatorParams::Gbdt(p) => p.raw_score(x.as_slice()),
        };
        debug_assert!(raw.is_finite());
        Ok(sigmoid(raw))
    }

    /// The FMP score: the raw prediction, recalibrated when the model was
    /// trained on subsampled data.
    pub fn fmp_score(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        let y_s = self.predict_raw(x)?;
        if self.metadata.subsampled {
            recalibrate(y_s, self.beta)
        } else {
            Ok(y_s)
        }
    }

    /// Structural validation applied after deserialization.
    fn validate(&self) -> Result<(), ModelError> {
        match &self.estimator {
            EstimatorParams::Logreg(p) => {
                if p.weights.len() != FEATURE_COUNT {
                    return Err(ModelError::CorruptModel(format!(
                        "expected {FEATURE_COUNT} weights, found {}",
                        p.weights.len()
                    )));
                }
                if !p.bias.is_finite() || p.weights.iter().any(|w| !w.is_finite()) {
                    return Err(ModelError::CorruptModel("non-finite parameters".into()));
                }
            }
            EstimatorParams::Gbdt(p) => p.validate().map_err(ModelError::CorruptModel)?,
        }
        Ok(())
    }
}

const MODEL_MAGIC: &[u8; 6] = b"FMPMDL";
const MODEL_VERSION: u8 = 1;

/// Write a model file: magic, version byte, payload length, JSON payload,
/// SHA-256 checksum of the payload. Round-trips are exact to the bit.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    let payload =
        serde_json::to_vec(model).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
    let digest = Sha256::digest(&payload);
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MODEL_MAGIC)?;
    file.write_all(&[MODEL_VERSION])?;
    file.write_all(&(payload.len() as u64).to_le_bytes())?;
    file.write_all(&payload)?;
    file.write_all(&digest)?;
    file.flush()?;
    Ok(())
}

/// Load and validate a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<TrainedModel, ModelError> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 7];
    read_exact(&mut file, &mut header)?;
    if &header[..6] != MODEL_MAGIC {
        return Err(ModelError::CorruptModel("bad magic".into()));
    }
    if header[6] != MODEL_VERSION {
        return Err(ModelError::VersionMismatch { found: header[6] });
    }
    let mut len_bytes = [0u8; 8];
    read_exact(&mut file, &mut len_bytes)?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    let mut payload = vec![0u8; len];
    read_exact(&mut file, &mut payload)?;
    let mut checksum = [0u8; 32];
    read_exact(&mut file, &mut checksum)?;
    if Sha256::digest(&payload).as_slice() != checksum {
        return Err(ModelError::CorruptModel("checksum mismatch".into()));
    }
    let model: TrainedModel =
        serde_json::from_slice(&payload).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), ModelError> {
    r.read_exact(buf).map_err(|_| ModelError::CorruptModel("truncated model file".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, Sample};
    use crate::features::schema_hash;
    use std::net::Ipv4Addr;

    pub(crate) fn toy_dataset(n_pos: usize, n_neg: usize, separation: f64) -> Dataset {
        // feature 0 separates the classes by `separation`, feature 1 is noise
        let samples: Vec<Sample> = (0..n_pos + n_neg)
            .map(|i| {
                let y = i < n_pos;
                let mut x = FeatureVector::zeros();
                let jitter = (i as f64 * 0.7919).fract() - 0.5;
                x.0[0] = if y { separation } else { 0.0 } + jitter * 0.2;
                x.0[1] = ((i as f64 * 0.3571).fract() - 0.5) * 2.0;
                Sample { ip: Ipv4Addr::from(0x0a00_0000 + i as u32), t0: 0, x, y }
            })
            .collect();
        Dataset::from_samples(Category::Scan, samples, 0.25, 7, 1)
    }

    #[test]
    fn recalibrate_identity_at_beta_one() {
        for i in 0..=100 {
            let y = i as f64 / 100.0;
            assert!((recalibrate(y, 1.0).unwrap() - y).abs() < 1e-15);
        }
    }

    #[test]
    fn recalibrate_endpoints_fixed() {
        for beta in [0.01, 0.1, 1.0, 10.0] {
            assert_eq!(recalibrate(0.0, beta).unwrap(), 0.0);
            assert_eq!(recalibrate(1.0, beta).unwrap(), 1.0);
        }
    }

    #[test]
    fn recalibrate_derived_value() {
        // 0.2·0.6 / (0.2·0.6 − 0.6 + 1) = 0.12 / 0.52
        let got = recalibrate(0.6, 0.2).unwrap();
        assert!((got - 0.23076923076923075).abs() < 1e-15);
    }

    #[test]
    fn recalibrate_is_strictly_increasing_and_bounded() {
        for beta in [0.01, 0.11, 0.5, 2.0, 25.0] {
            let mut prev = -1.0;
            for i in 0..=1000 {
                let y = i as f64 / 1000.0;
                let v = recalibrate(y, beta).unwrap();
                assert!((0.0..=1.0).contains(&v));
                assert!(v > prev, "not increasing at y={y}, beta={beta}");
                prev = v;
            }
        }
    }

    #[test]
    fn recalibrate_rejects_bad_domain() {
        assert!(recalibrate(-0.1, 1.0).is_err());
        assert!(recalibrate(1.1, 1.0).is_err());
        assert!(recalibrate(0.5, 0.0).is_err());
        assert!(recalibrate(0.5, -2.0).is_err());
        assert!(recalibrate(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn zero_weight_logreg_predicts_half() {
        let model = TrainedModel {
            estimator: EstimatorParams::Logreg(LogregParams {
                weights: vec![0.0; FEATURE_COUNT],
                bias: 0.0,
                epochs: 0,
                learning_rate: 0.1,
            }),
            beta: 1.0,
            metadata: ModelMetadata {
                seed: 0,
                alpha: 0.25,
                schema_hash: schema_hash().to_string(),
                target_category: Category::Scan,
                w_h: 7,
                w_p: 1,
                subsampled: false,
                train_loss: vec![],
            },
        };
        let x = FeatureVector::zeros();
        assert_eq!(model.predict_raw(&x).unwrap(), 0.5);
        assert_eq!(model.fmp_score(&x).unwrap(), 0.5);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let model = TrainedModel {
            estimator: EstimatorParams::Logreg(LogregParams {
                weights: vec![0.0; FEATURE_COUNT],
                bias: 0.0,
                epochs: 0,
                learning_rate: 0.1,
            }),
            beta: 1.0,
            metadata: ModelMetadata {
                seed: 0,
                alpha: 0.25,
                schema_hash: "0000000000000000".into(),
                target_category: Category::Scan,
                w_h: 7,
                w_p: 1,
                subsampled: false,
                train_loss: vec![],
            },
        };
        assert!(matches!(
            model.predict_raw(&FeatureVector::zeros()),
            Err(ModelError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let ds = toy_dataset(60, 60, 2.0);
        let model = train_logreg(&ds, 50, 0.5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        for s in &ds.samples {
            assert_eq!(
                model.predict_raw(&s.x).unwrap().to_bits(),
                loaded.predict_raw(&s.x).unwrap().to_bits(),
                "prediction must round-trip to the bit"
            );
        }
    }

    #[test]
    fn wrong_version_byte_is_detected() {
        let ds = toy_dataset(30, 30, 2.0);
        let model = train_logreg(&ds, 10, 0.5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[6] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::VersionMismatch { found: 99 })));
    }

    #[test]
    fn corrupted_model_file_is_detected() {
        let ds = toy_dataset(30, 30, 2.0);
        let model = train_logreg(&ds, 10, 0.5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x55;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::CorruptModel(_))));
    }
}
