//! Logistic regression trained by full-batch gradient descent on the mean
//! log-loss. A simple, convex reference estimator.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::features::{schema_hash, FEATURE_COUNT};

use super::{
    sigmoid, softplus, EstimatorParams, ModelError, ModelMetadata, TrainedModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl LogregParams {
    pub(crate) fn raw_score(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Mean log-loss and its gradient with respect to the weights and bias.
///
/// Exposed so tests can compare the analytic gradient against central
/// finite differences of the loss alone.
pub fn loss_and_gradient(
    weights: &[f64],
    bias: f64,
    samples: &[Sample],
) -> (f64, Vec<f64>, f64) {
    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for s in samples {
        let z = bias + weights.iter().zip(s.x.as_slice()).map(|(w, v)| w * v).sum::<f64>();
        // log-loss: softplus(-z) for positives, softplus(z) for negatives
        loss += if s.y { softplus(-z) } else { softplus(z) };
        let residual = sigmoid(z) - f64::from(s.y);
        for (g, v) in grad_w.iter_mut().zip(s.x.as_slice()) {
            *g += residual * v;
        }
        grad_b += residual;
    }
    (loss / n, grad_w.iter().map(|g| g / n).collect(), grad_b / n)
}

/// Train by full-batch gradient descent from a zero initialization.
/// Deterministic; the seed is only recorded in the metadata.
pub fn train_logreg(
    train: &Dataset,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    if train.is_empty() || train.n_pos == 0 || train.n_neg == 0 {
        return Err(ModelError::DegenerateData(
            "training data must contain both classes".into(),
        ));
    }
    if !(learning_rate > 0.0) {
        return Err(ModelError::Config(format!("learning rate {learning_rate} must be positive")));
    }
    let mut weights = vec![0.0; FEATURE_COUNT];
    let mut bias = 0.0;
    let mut train_loss = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, grad_w, grad_b) = loss_and_gradient(&weights, bias, &train.samples);
        if !loss.is_finite() {
            return Err(ModelError::NonFinite);
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= learning_rate * g;
        }
        bias -= learning_rate * grad_b;
        train_loss.push(loss);
    }
    let (final_loss, _, _) = loss_and_gradient(&weights, bias, &train.samples);
    if !final_loss.is_finite() || weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(ModelError::NonFinite);
    }
    train_loss.push(final_loss);
    Ok(TrainedModel {
        estimator: EstimatorParams::Logreg(LogregParams {
            weights,
            bias,
            epochs,
            learning_rate,
        }),
        beta: train.beta,
        metadata: ModelMetadata {
            seed,
            alpha: train.alpha,
            schema_hash: schema_hash().to_string(),
            target_category: train.target_category,
            w_h: train.w_h,
            w_p: train.w_p,
            subsampled: train.subsampled,
            train_loss,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::toy_dataset;
    use super::*;
    use crate::features::FeatureVector;

    #[test]
    fn loss_decreases_monotonically_on_separable_data() {
        let ds = toy_dataset(80, 80, 3.0);
        let model = train_logreg(&ds, 60, 0.3, 1).unwrap();
        let losses = &model.metadata.train_loss;
        assert!(losses.len() == 61);
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
        assert!(losses.last().unwrap() < &losses[0]);
    }

    #[test]
    fn identical_features_with_even_labels_predict_half() {
        // 50/50 labels on all-identical features: symmetry pins p at 0.5
        let mut ds = toy_dataset(50, 50, 0.0);
        for s in ds.samples.iter_mut() {
            s.x = FeatureVector::zeros();
        }
        let model = train_logreg(&ds, 100, 0.5, 1).unwrap();
        let p = model.predict_raw(&FeatureVector::zeros()).unwrap();
        assert!((p - 0.5).abs() < 1e-9, "got {p}");
    }

    #[test]
    fn rejects_single_class_data() {
        let mut ds = toy_dataset(10, 10, 1.0);
        ds.samples.retain(|s| s.y);
        ds.n_neg = 0;
        assert!(matches!(
            train_logreg(&ds, 10, 0.1, 1),
            Err(ModelError::DegenerateData(_))
        ));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let ds = toy_dataset(40, 60, 1.5);
        // a non-trivial point in parameter space
        let mut weights = vec![0.0; FEATURE_COUNT];
        for (i, w) in weights.iter_mut().enumerate() {
            *w = ((i as f64 * 0.619).fract() - 0.5) * 0.8;
        }
        let bias = 0.17;
        let (_, grad_w, grad_b) = loss_and_gradient(&weights, bias, &ds.samples);
        let eps = 1e-6;
        for i in [0usize, 1, 7, 30, 57] {
            let mut plus = weights.clone();
            plus[i] += eps;
            let mut minus = weights.clone();
            minus[i] -= eps;
            let (lp, _, _) = loss_and_gradient(&plus, bias, &ds.samples);
            let (lm, _, _) = loss_and_gradient(&minus, bias, &ds.samples);
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = numeric.abs().max(grad_w[i].abs()).max(1e-12);
            assert!(
                ((numeric - grad_w[i]) / denom).abs() < 1e-4,
                "weight {i}: analytic {} vs numeric {numeric}",
                grad_w[i]
            );
        }
        let (lp, _, _) = loss_and_gradient(&weights, bias + eps, &ds.samples);
        let (lm, _, _) = loss_and_gradient(&weights, bias - eps, &ds.samples);
        let numeric = (lp - lm) / (2.0 * eps);
        assert!(((numeric - grad_b) / numeric.abs().max(1e-12)).abs() < 1e-4);
    }

    #[test]
    fn positive_weight_direction_increases_score() {
        let ds = toy_dataset(80, 80, 3.0);
        let model = train_logreg(&ds, 80, 0.3, 1).unwrap();
        let mut low = FeatureVector::zeros();
        low.0[0] = 0.0;
        let mut high = FeatureVector::zeros();
        high.0[0] = 3.0;
        assert!(model.predict_raw(&high).unwrap() > model.predict_raw(&low).unwrap());
    }
}
