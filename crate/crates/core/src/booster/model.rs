//! Trained ensembles, prediction and the on-disk model format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{metric, sigmoid, LossFunction};
use crate::rff::{RffProjection, RidgeModel};
use crate::tree::Tree;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Tree(Tree),
    Rff(RidgeModel),
}

impl Learner {
    pub fn is_tree(&self) -> bool {
        matches!(self, Learner::Tree(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Margin,
    Probability,
}

/// `f(x) = base_score + learning_rate * sum_m b_m(x)`, learners in training order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub format_version: u32,
    pub objective: LossFunction,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rff_projection: Option<RffProjection>,
    pub learners: Vec<Learner>,
}

impl Ensemble {
    pub fn constant(
        objective: LossFunction,
        base_score: f64,
        learning_rate: f64,
        n_features: usize,
    ) -> Self {
        Ensemble {
            format_version: FORMAT_VERSION,
            objective,
            base_score,
            learning_rate,
            n_features,
            rff_projection: None,
            learners: Vec::new(),
        }
    }

    pub fn n_trees(&self) -> usize {
        self.learners.iter().filter(|l| l.is_tree()).count()
    }

    pub fn n_rff(&self) -> usize {
        self.learners.len() - self.n_trees()
    }

    /// Minimum number of input columns the ensemble reads.
    pub fn required_columns(&self) -> usize {
        let trees = self
            .learners
            .iter()
            .filter_map(|l| match l {
                Learner::Tree(t) => t.max_feature().map(|f| f + 1),
                Learner::Rff(_) => None,
            })
            .max()
            .unwrap_or(0);
        let rff = match (&self.rff_projection, self.n_rff()) {
            (Some(p), n) if n > 0 => p.n_features,
            _ => 0,
        };
        trees.max(rff)
    }

    /// Raw margin of one example. Learners are accumulated one at a time in
    /// training order, matching the margin updates made during training.
    pub fn predict_margin(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let mut margin = self.base_score;
        for learner in &self.learners {
            let out = match learner {
                Learner::Tree(t) => t.predict(x),
                Learner::Rff(m) => {
                    let p = self
                        .rff_projection
                        .as_ref()
                        .expect("validated: rff learners have a projection");
                    scratch.resize(p.n_components, 0.0);
                    p.project_row(x, scratch);
                    m.predict_projected(scratch)
                }
            };
            margin += self.learning_rate * out;
        }
        margin
    }

    /// Predicts every row of a row-major matrix with `n_cols` columns.
    pub fn predict(&self, x: &[f64], n_cols: usize, output: OutputKind) -> Result<Vec<f64>> {
        if output == OutputKind::Probability && !self.objective.is_classification() {
            return Err(Error::Unsupported(
                "probabilities are only defined for the logloss objective".into(),
            ));
        }
        let need = self.required_columns();
        if n_cols < need || (n_cols == 0 && !x.is_empty()) {
            return Err(Error::DimensionMismatch {
                expected: need,
                got: n_cols,
            });
        }
        if n_cols == 0 {
            return Ok(Vec::new());
        }
        if !x.len().is_multiple_of(n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: x.len(),
            });
        }
        use rayon::prelude::*;
        Ok(x.par_chunks(n_cols)
            .map_init(Vec::new, |scratch, row| {
                let m = self.predict_margin(row, scratch);
                match output {
                    OutputKind::Margin => m,
                    OutputKind::Probability => sigmoid(m),
                }
            })
            .collect())
    }

    /// Objective metric (RMSE or weighted logloss) of the ensemble on a dataset.
    pub fn evaluate(&self, ds: &Dataset) -> Result<f64> {
        let margins = self.predict(ds.features(), ds.n_cols(), OutputKind::Margin)?;
        let labels = self.objective.prepare_labels(ds.labels())?;
        let kind = self.objective.metric_kind();
        if self.objective.is_classification() {
            let y01: Vec<f64> = labels
                .iter()
                .map(|&y| if y > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let p: Vec<f64> = margins.iter().map(|&m| sigmoid(m)).collect();
            metric(kind, &y01, &p, ds.weights())
        } else {
            metric(kind, &labels, &margins, ds.weights())
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Malformed(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Malformed("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch {
                found: version as u32,
                expected: FORMAT_VERSION,
            });
        }
        let ensemble: Ensemble =
            serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
        ensemble.validate()?;
        Ok(ensemble)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::Malformed(
                "non-finite base_score or learning_rate".into(),
            ));
        }
        if let Some(p) = &self.rff_projection {
            p.validate()?;
        }
        for (m, learner) in self.learners.iter().enumerate() {
            match learner {
                Learner::Tree(t) => t
                    .validate()
                    .map_err(|e| Error::Malformed(format!("learner {m}: {e}")))?,
                Learner::Rff(r) => {
                    let p = self.rff_projection.as_ref().ok_or_else(|| {
                        Error::Malformed(format!("learner {m}: rff learner without projection"))
                    })?;
                    if r.coefficients.len() != p.n_components {
                        return Err(Error::Malformed(format!(
                            "learner {m}: {} coefficients for {} components",
                            r.coefficients.len(),
                            p.n_components
                        )));
                    }
                    if !r.intercept.is_finite() || r.coefficients.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Malformed(format!(
                            "learner {m}: non-finite coefficient"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
