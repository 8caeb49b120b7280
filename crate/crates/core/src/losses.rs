//! Twice-differentiable losses and evaluation metrics.
//!
//! Losses are evaluated on raw margins `f`. Classification labels are in
//! `{-1, +1}` at this level; callers holding `{0, 1}` labels go through
//! [`LossFunction::prepare_labels`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossFunction {
    /// `l(y, f) = (y - f)^2 / 2`
    SquaredError,
    /// `l(y, f) = log(1 + exp(-y f)) + lambda f^2 / 2`
    LogisticL2 { lambda: f64 },
}

/// Per-example first and second derivatives, already multiplied by the sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl GradHess {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }
}

/// Curvature bounds: `mu <= l''(y, f) <= smoothness` for every `y, f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mu: f64,
    pub smoothness: f64,
}

impl Constants {
    pub fn strongly_convex(&self) -> bool {
        self.mu > 0.0
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-t))` without overflow.
#[inline]
fn log1p_exp_neg(t: f64) -> f64 {
    (-t).max(0.0) + (-t.abs()).exp().ln_1p()
}

impl LossFunction {
    /// Looks a loss up by objective name (`mse` or `logloss`).
    pub fn from_name(name: &str, lambda: f64) -> Result<Self> {
        match name {
            "mse" | "squared_error" => Ok(LossFunction::SquaredError),
            "logloss" | "logistic" => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidParam(format!(
                        "logistic lambda must be finite and >= 0, got {lambda}"
                    )));
                }
                Ok(LossFunction::LogisticL2 { lambda })
            }
            other => Err(Error::InvalidParam(format!(
                "unknown objective '{other}' (expected 'mse' or 'logloss')"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossFunction::SquaredError => "mse",
            LossFunction::LogisticL2 { .. } => "logloss",
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, LossFunction::LogisticL2 { .. })
    }

    pub fn constants(&self) -> Constants {
        match *self {
            LossFunction::SquaredError => Constants {
                mu: 1.0,
                smoothness: 1.0,
            },
            // sigma(t) sigma(-t) peaks at 1/4 for t = 0 and tends to 0.
            LossFunction::LogisticL2 { lambda } => Constants {
                mu: lambda,
                smoothness: 0.25 + lambda,
            },
        }
    }

    pub fn metric_kind(&self) -> MetricKind {
        match self {
            LossFunction::SquaredError => MetricKind::Rmse,
            LossFunction::LogisticL2 { .. } => MetricKind::WeightedLogloss,
        }
    }

    /// Maps external labels to the internal encoding. Logistic accepts
    /// `{0, 1}` or `{-1, +1}` and returns `{-1, +1}`.
    pub fn prepare_labels(&self, labels: &[f64]) -> Result<Vec<f64>> {
        match self {
            LossFunction::SquaredError => Ok(labels.to_vec()),
            LossFunction::LogisticL2 { .. } => labels
                .iter()
                .enumerate()
                .map(|(i, &y)| match y {
                    1.0 => Ok(1.0),
                    y if y == 0.0 || y == -1.0 => Ok(-1.0),
                    _ => Err(Error::InvalidData(format!(
                        "row {i}: label {y} is not a binary class label"
                    ))),
                })
                .collect(),
        }
    }

    #[inline]
    pub fn loss(&self, y: f64, f: f64) -> f64 {
        match *self {
            LossFunction::SquaredError => 0.5 * (y - f) * (y - f),
            LossFunction::LogisticL2 { lambda } => log1p_exp_neg(y * f) + 0.5 * lambda * f * f,
        }
    }

    #[inline]
    pub fn derivative(&self, y: f64, f: f64) -> f64 {
        match *self {
            LossFunction::SquaredError => f - y,
            LossFunction::LogisticL2 { lambda } => -y * sigmoid(-y * f) + lambda * f,
        }
    }

    #[inline]
    pub fn second_derivative(&self, y: f64, f: f64) -> f64 {
        match *self {
            LossFunction::SquaredError => 1.0,
            LossFunction::LogisticL2 { lambda } => sigmoid(y * f) * sigmoid(-y * f) + lambda,
        }
    }

    /// Weighted total loss `sum_i w_i l(y_i, f_i)`.
    pub fn value(&self, y: &[f64], f: &[f64], weights: Option<&[f64]>) -> Result<f64> {
        check_lengths(y, f, weights)?;
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite margin at row {i}")));
        }
        Ok(y.iter()
            .zip(f)
            .enumerate()
            .map(|(i, (&yi, &fi))| weight_at(weights, i) * self.loss(yi, fi))
            .sum())
    }

    pub fn grad_hess(&self, y: &[f64], f: &[f64], weights: Option<&[f64]>) -> Result<GradHess> {
        check_lengths(y, f, weights)?;
        let mut g = Vec::with_capacity(y.len());
        let mut h = Vec::with_capacity(y.len());
        for (i, (&yi, &fi)) in y.iter().zip(f).enumerate() {
            let w = weight_at(weights, i);
            g.push(w * self.derivative(yi, fi));
            h.push(w * self.second_derivative(yi, fi));
        }
        Ok(GradHess { g, h })
    }
}

#[inline]
fn weight_at(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn check_lengths(y: &[f64], f: &[f64], weights: Option<&[f64]>) -> Result<()> {
    if y.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: f.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: w.len(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Rmse,
    WeightedLogloss,
}

impl MetricKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rmse" => Ok(MetricKind::Rmse),
            "logloss" | "weighted_logloss" => Ok(MetricKind::WeightedLogloss),
            other => Err(Error::InvalidParam(format!("unknown metric '{other}'"))),
        }
    }
}

const PROB_CLIP: f64 = 1e-15;

/// Weighted RMSE or weighted log-loss. For log-loss, `y` is in `{0, 1}`
/// and `predictions` are probabilities.
pub fn metric(
    kind: MetricKind,
    y: &[f64],
    predictions: &[f64],
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_lengths(y, predictions, weights)?;
    let total_weight: f64 = match weights {
        Some(w) => w.iter().sum(),
        None => y.len() as f64,
    };
    if total_weight <= 0.0 {
        return Err(Error::InvalidData("metric weights sum to zero".into()));
    }
    let acc: f64 = y
        .iter()
        .zip(predictions)
        .enumerate()
        .map(|(i, (&yi, &pi))| {
            let w = weight_at(weights, i);
            match kind {
                MetricKind::Rmse => w * (yi - pi) * (yi - pi),
                MetricKind::WeightedLogloss => {
                    let p = pi.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                    -w * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
                }
            }
        })
        .sum();
    Ok(match kind {
        MetricKind::Rmse => (acc / total_weight).sqrt(),
        MetricKind::WeightedLogloss => acc / total_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    const LOGISTIC: LossFunction = LossFunction::LogisticL2 { lambda: 0.1 };

    #[test]
    fn value_examples() {
        let sq = LossFunction::SquaredError;
        assert_eq!(sq.value(&[1.0], &[1.0], None).unwrap(), 0.0);
        let lg0 = LossFunction::LogisticL2 { lambda: 0.0 };
        assert!((lg0.value(&[1.0], &[0.0], None).unwrap() - 2f64.ln()).abs() < 1e-15);
        let v = LOGISTIC.value(&[1.0], &[2.0], None).unwrap();
        let expected = (1.0 + (-2f64).exp()).ln() + 0.05 * 4.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.326_928).abs() < 1e-6);
    }

    #[test]
    fn value_rejects_non_finite_margin() {
        assert!(LossFunction::SquaredError
            .value(&[1.0], &[f64::NAN], None)
            .is_err());
    }

    #[test]
    fn grad_hess_examples() {
        let gh = LossFunction::SquaredError
            .grad_hess(&[3.0], &[5.0], Some(&[1.0]))
            .unwrap();
        assert_eq!((gh.g[0], gh.h[0]), (2.0, 1.0));
        let gh = LossFunction::LogisticL2 { lambda: 0.0 }
            .grad_hess(&[1.0], &[0.0], None)
            .unwrap();
        assert_eq!((gh.g[0], gh.h[0]), (-0.5, 0.25));
    }

    #[test]
    fn weights_scale_derivatives() {
        let gh = LOGISTIC.grad_hess(&[1.0], &[0.3], Some(&[2.5])).unwrap();
        assert!((gh.g[0] - 2.5 * LOGISTIC.derivative(1.0, 0.3)).abs() < 1e-15);
        assert!((gh.h[0] - 2.5 * LOGISTIC.second_derivative(1.0, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn constants_examples() {
        let c = LossFunction::SquaredError.constants();
        assert_eq!((c.mu, c.smoothness), (1.0, 1.0));
        let c = LOGISTIC.constants();
        assert!((c.mu - 0.1).abs() < 1e-15 && (c.smoothness - 0.35).abs() < 1e-15);
        let c = LossFunction::LogisticL2 { lambda: 0.0 }.constants();
        assert_eq!((c.mu, c.smoothness), (0.0, 0.25));
        assert!(!c.strongly_convex());
    }

    #[test]
    fn metric_examples() {
        let r = metric(
            MetricKind::Rmse,
            &[1.0, 4.0],
            &[1.0, 2.0],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let l = metric(MetricKind::WeightedLogloss, &[1.0], &[1.0], None).unwrap();
        assert!(l.is_finite() && l > 0.0 && l < 1e-14);
        let l = metric(
            MetricKind::WeightedLogloss,
            &[0.0, 1.0],
            &[0.5, 0.5],
            Some(&[1.0, 1.0]),
        )
        .unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!(metric(MetricKind::Rmse, &[1.0], &[1.0], Some(&[0.0])).is_err());
    }

    #[test]
    fn prepare_labels_maps_zero_one() {
        assert_eq!(
            LOGISTIC.prepare_labels(&[0.0, 1.0, -1.0]).unwrap(),
            vec![-1.0, 1.0, -1.0]
        );
        assert!(LOGISTIC.prepare_labels(&[0.5]).is_err());
    }

    fn random_point(rng: &mut impl rand::Rng, loss: &LossFunction) -> (f64, f64) {
        let y = if loss.is_classification() {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        } else {
            rng.random_range(-5.0..5.0)
        };
        (y, rng.random_range(-6.0..6.0))
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = crate::rng::from_seed(17);
        for loss in [
            LossFunction::SquaredError,
            LOGISTIC,
            LossFunction::LogisticL2 { lambda: 0.0 },
        ] {
            for _ in 0..100 {
                let (y, f) = random_point(&mut rng, &loss);
                let step = 1e-5;
                let fd_g = (loss.loss(y, f + step) - loss.loss(y, f - step)) / (2.0 * step);
                let fd_h =
                    (loss.derivative(y, f + step) - loss.derivative(y, f - step)) / (2.0 * step);
                let g = loss.derivative(y, f);
                let h = loss.second_derivative(y, f);
                assert!(
                    (g - fd_g).abs() <= 1e-6 * g.abs().max(1.0),
                    "{loss:?} g {g} fd {fd_g}"
                );
                assert!(
                    (h - fd_h).abs() <= 1e-6 * h.abs().max(1.0),
                    "{loss:?} h {h} fd {fd_h}"
                );
            }
        }
    }

    #[test]
    fn curvature_within_constants() {
        let mut rng = crate::rng::from_seed(5);
        for loss in [LossFunction::SquaredError, LOGISTIC] {
            let c = loss.constants();
            for _ in 0..1000 {
                let (y, f) = random_point(&mut rng, &loss);
                let w = rng.random_range(0.1..3.0);
                let gh = loss.grad_hess(&[y], &[f], Some(&[w])).unwrap();
                let h = gh.h[0] / w;
                assert!(h >= c.mu - 1e-15 && h <= c.smoothness + 1e-15);
            }
        }
    }

    #[test]
    fn convex_midpoint() {
        let mut rng = crate::rng::from_seed(23);
        for loss in [LossFunction::SquaredError, LOGISTIC] {
            for _ in 0..1000 {
                let (y, a) = random_point(&mut rng, &loss);
                let b = rng.random_range(-6.0..6.0);
                let mid = loss.loss(y, 0.5 * (a + b));
                assert!(mid <= 0.5 * (loss.loss(y, a) + loss.loss(y, b)) + 1e-12);
            }
        }
    }

    #[test]
    fn stable_for_large_margins() {
        assert!(LOGISTIC.loss(1.0, 800.0).is_finite());
        assert!(LOGISTIC.loss(-1.0, 800.0).is_finite());
        assert!((LossFunction::LogisticL2 { lambda: 0.0 }.loss(-1.0, 800.0) - 800.0).abs() < 1e-9);
    }
}
