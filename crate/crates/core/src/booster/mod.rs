//! The boosting loop.
//!
//! Every round computes `(g, h)` at the current margins, draws a subclass from
//! the mixture, fits that learner to the targets `-g/h` with weights `h` on a
//! row subsample, and adds it scaled by the learning rate.

mod model;
mod pmf;

pub use model::{Ensemble, Learner, OutputKind, FORMAT_VERSION};
pub use pmf::{MixturePmf, Subclass};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{sample_indices, Dataset};
use crate::error::{Error, Result};
use crate::losses::{metric, sigmoid, GradHess, LossFunction};
use crate::rff::{fit_ridge, RffProjection, RidgeOptions, DEFAULT_MAX_COMPONENTS};
use crate::rng::{self, Purpose};
use crate::tree::{build_histograms, fit_tree, presort, HistogramLayout, TreeParams};

/// Floor applied to hessians when the loss is not strongly convex.
const MIN_HESSIAN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub num_round: usize,
    pub learning_rate: f64,
    pub objective: LossFunction,
    /// Initial margin; `None` picks the weighted mean label (mse) or the
    /// log-odds of the weighted positive rate (logloss).
    pub base_score: Option<f64>,
    pub lambda_l2: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub tree_probability: f64,
    pub min_max_depth: usize,
    pub max_max_depth: usize,
    pub hist_nbins: usize,
    pub alpha: f64,
    pub fit_intercept: bool,
    pub gamma: f64,
    pub n_components: usize,
    pub early_stopping_rounds: Option<usize>,
    pub random_state: u64,
    /// Compute threads; `None` uses the ambient rayon pool.
    pub n_threads: Option<usize>,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            num_round: 100,
            learning_rate: 0.1,
            objective: LossFunction::SquaredError,
            base_score: None,
            lambda_l2: 0.01,
            subsample: 1.0,
            colsample: 1.0,
            tree_probability: 0.9,
            min_max_depth: 1,
            max_max_depth: 6,
            hist_nbins: 256,
            alpha: 1e-3,
            fit_intercept: false,
            gamma: 1.0,
            n_components: 10,
            early_stopping_rounds: None,
            random_state: 0,
            n_threads: None,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.num_round == 0 {
            return bad("num_round must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.lambda_l2 >= 0.0 && self.lambda_l2.is_finite()) {
            return bad(format!("lambda_l2 must be >= 0, got {}", self.lambda_l2));
        }
        for (name, v) in [("subsample", self.subsample), ("colsample", self.colsample)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} must be in (0,1], got {v}"));
            }
        }
        MixturePmf::new(
            self.tree_probability,
            self.min_max_depth,
            self.max_max_depth,
        )?;
        if !(2..=crate::tree::MAX_BINS).contains(&self.hist_nbins) {
            return bad(format!(
                "hist_nbins must be in [2,256], got {}",
                self.hist_nbins
            ));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(1..=DEFAULT_MAX_COMPONENTS).contains(&self.n_components) {
            return bad(format!(
                "n_components must be in [1,{DEFAULT_MAX_COMPONENTS}], got {}",
                self.n_components
            ));
        }
        if self.early_stopping_rounds == Some(0) {
            return bad("early_stopping_rounds must be >= 1".into());
        }
        if self.n_threads == Some(0) {
            return bad("n_threads must be >= 1".into());
        }
        if let Some(b) = self.base_score {
            if !b.is_finite() {
                return bad("base_score must be finite".into());
            }
        }
        if let LossFunction::LogisticL2 { lambda } = self.objective {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return bad(format!("logistic lambda must be >= 0, got {lambda}"));
            }
        }
        Ok(())
    }

    pub fn mixture(&self) -> Result<MixturePmf> {
        MixturePmf::new(
            self.tree_probability,
            self.min_max_depth,
            self.max_max_depth,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub subclass: Subclass,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub ensemble: Ensemble,
    pub trace: Vec<RoundRecord>,
    /// Number of learners kept; differs from the trace length after early stopping.
    pub best_iteration: usize,
    /// Training margins of the returned ensemble, as tracked during boosting.
    pub train_margins: Vec<f64>,
}

/// Default initial margin for the objective.
pub fn default_base_score(
    objective: &LossFunction,
    labels: &[f64],
    weights: Option<&[f64]>,
) -> f64 {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..labels.len()).map(w).sum();
    match objective {
        LossFunction::SquaredError => {
            (0..labels.len()).map(|i| w(i) * labels[i]).sum::<f64>() / total
        }
        LossFunction::LogisticL2 { .. } => {
            let pos: f64 = (0..labels.len()).filter(|&i| labels[i] > 0.0).map(w).sum();
            let p = (pos / total).clamp(1e-15, 1.0 - 1e-15);
            (p / (1.0 - p)).ln()
        }
    }
}

/// Trains an ensemble. With `params.n_threads` set, all parallel work runs on
/// a private pool of that size; results do not depend on the thread count.
pub fn train(
    train_set: &Dataset,
    valid_set: Option<&Dataset>,
    params: &BoostParams,
) -> Result<TrainOutput> {
    params.validate()?;
    match params.n_threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
            pool.install(|| Trainer::new(train_set, valid_set, params)?.run())
        }
        None => Trainer::new(train_set, valid_set, params)?.run(),
    }
}

/// Per-dataset state carried through the rounds.
struct Side<'a> {
    ds: &'a Dataset,
    /// Labels in the loss encoding (`{-1,+1}` for logistic).
    labels: Vec<f64>,
    margins: Vec<f64>,
    projected: Option<Vec<f64>>,
}

impl<'a> Side<'a> {
    fn new(ds: &'a Dataset, objective: &LossFunction, base: f64) -> Result<Self> {
        Ok(Side {
            ds,
            labels: objective.prepare_labels(ds.labels())?,
            margins: vec![base; ds.n_rows()],
            projected: None,
        })
    }

    fn metric(&self, objective: &LossFunction) -> Result<f64> {
        let kind = objective.metric_kind();
        if objective.is_classification() {
            let y01: Vec<f64> = self
                .labels
                .iter()
                .map(|&y| if y > 0.0 { 1.0 } else { 0.0 })
                .collect();
            let p: Vec<f64> = self.margins.iter().map(|&m| sigmoid(m)).collect();
            metric(kind, &y01, &p, self.ds.weights())
        } else {
            metric(kind, &self.labels, &self.margins, self.ds.weights())
        }
    }

    fn apply(
        &mut self,
        learner: &Learner,
        projection: Option<&RffProjection>,
        rate: f64,
        round: usize,
    ) -> Result<()> {
        match learner {
            Learner::Tree(t) => {
                for (i, m) in self.margins.iter_mut().enumerate() {
                    *m += rate * t.predict(self.ds.row(i));
                }
            }
            Learner::Rff(r) => {
                let p = projection.expect("projection exists once an rff learner was fitted");
                if self.projected.is_none() {
                    self.projected = Some(p.project(self.ds.features(), self.ds.n_cols())?);
                }
                let z = self.projected.as_deref().unwrap_or_default();
                let c = p.n_components;
                for (i, m) in self.margins.iter_mut().enumerate() {
                    *m += rate * r.predict_projected(&z[i * c..(i + 1) * c]);
                }
            }
        }
        if self.margins.iter().any(|m| !m.is_finite()) {
            return Err(Error::Diverged { round });
        }
        Ok(())
    }
}

struct Trainer<'a> {
    params: &'a BoostParams,
    pmf: MixturePmf,
    train: Side<'a>,
    valid: Option<Side<'a>>,
    layout: Option<HistogramLayout>,
    projection: Option<RffProjection>,
    ensemble: Ensemble,
}

impl<'a> Trainer<'a> {
    fn new(
        train_set: &'a Dataset,
        valid_set: Option<&'a Dataset>,
        params: &'a BoostParams,
    ) -> Result<Self> {
        if params.early_stopping_rounds.is_some() && valid_set.is_none() {
            return Err(Error::InvalidParam(
                "early_stopping_rounds needs a validation set".into(),
            ));
        }
        if let Some(v) = valid_set {
            if v.n_cols() != train_set.n_cols() {
                return Err(Error::DimensionMismatch {
                    expected: train_set.n_cols(),
                    got: v.n_cols(),
                });
            }
        }
        let objective = params.objective;
        if let LossFunction::LogisticL2 { lambda } = objective {
            if lambda == 0.0 {
                warn!("logistic loss with lambda = 0 is not strongly convex; hessians are floored at {MIN_HESSIAN}");
            }
        }
        let prepared = objective.prepare_labels(train_set.labels())?;
        let base = params
            .base_score
            .unwrap_or_else(|| default_base_score(&objective, &prepared, train_set.weights()));
        let train = Side::new(train_set, &objective, base)?;
        let valid = valid_set
            .map(|v| Side::new(v, &objective, base))
            .transpose()?;
        let layout = if params.tree_probability > 0.0 {
            Some(build_histograms(
                train_set,
                &presort(train_set),
                params.hist_nbins,
            )?)
        } else {
            None
        };
        Ok(Trainer {
            params,
            pmf: params.mixture()?,
            train,
            valid,
            layout,
            projection: None,
            ensemble: Ensemble::constant(objective, base, params.learning_rate, train_set.n_cols()),
        })
    }

    fn grad_hess(&self) -> Result<GradHess> {
        let mut gh = self.params.objective.grad_hess(
            &self.train.labels,
            &self.train.margins,
            self.train.ds.weights(),
        )?;
        if !self.params.objective.constants().strongly_convex() {
            let weights = self.train.ds.weights();
            for (i, h) in gh.h.iter_mut().enumerate() {
                if weights.is_none_or(|w| w[i] > 0.0) {
                    *h = h.max(MIN_HESSIAN);
                }
            }
        }
        Ok(gh)
    }

    fn fit_learner(&mut self, round: usize, subclass: Subclass, gh: &GradHess) -> Result<Learner> {
        let p = self.params;
        let seed = p.random_state;
        let n = self.train.ds.n_rows();
        let rows = sample_indices(
            n,
            p.subsample,
            &mut rng::stream(seed, round as u64, Purpose::RowSample),
        );
        match subclass {
            Subclass::Tree { depth } => {
                let d = self.train.ds.n_cols();
                let cols = sample_indices(
                    d,
                    p.colsample,
                    &mut rng::stream(seed, round as u64, Purpose::ColSample),
                );
                let layout = self
                    .layout
                    .as_ref()
                    .expect("layout built when trees are possible");
                let tree = fit_tree(
                    layout,
                    gh,
                    &TreeParams {
                        max_depth: depth,
                        lambda_l2: p.lambda_l2,
                    },
                    &rows,
                    &cols,
                )?;
                Ok(Learner::Tree(tree))
            }
            Subclass::Rff => {
                if self.projection.is_none() {
                    let mut r = rng::stream(seed, 0, Purpose::Projection);
                    self.projection = Some(RffProjection::generate(
                        self.train.ds.n_cols(),
                        p.n_components,
                        p.gamma,
                        &mut r,
                    )?);
                }
                let projection = self.projection.as_ref().expect("just set");
                if self.train.projected.is_none() {
                    self.train.projected =
                        Some(projection.project(self.train.ds.features(), self.train.ds.n_cols())?);
                }
                let targets: Vec<f64> =
                    gh.g.iter()
                        .zip(&gh.h)
                        .map(|(&g, &h)| if h > 0.0 { -g / h } else { 0.0 })
                        .collect();
                let model = fit_ridge(
                    self.train.projected.as_deref().unwrap_or_default(),
                    projection.n_components,
                    &rows,
                    &targets,
                    &gh.h,
                    &RidgeOptions {
                        alpha: p.alpha,
                        fit_intercept: p.fit_intercept,
                        max_components: DEFAULT_MAX_COMPONENTS,
                    },
                )?;
                Ok(Learner::Rff(model))
            }
        }
    }

    fn run(mut self) -> Result<TrainOutput> {
        let p = self.params;
        let objective = p.objective;
        let mut trace = Vec::with_capacity(p.num_round);

        // Early-stopping bookkeeping starts from the constant model.
        let mut best_metric = match &self.valid {
            Some(v) => v.metric(&objective)?,
            None => f64::INFINITY,
        };
        let mut best_count = 0usize;
        let mut best_margins = self.train.margins.clone();

        for m in 0..p.num_round {
            let round = m + 1;
            let gh = self.grad_hess()?;
            let subclass = self.pmf.sample(&mut rng::stream(
                p.random_state,
                m as u64,
                Purpose::Subclass,
            ));
            let learner = self.fit_learner(m, subclass, &gh)?;

            self.train
                .apply(&learner, self.projection.as_ref(), p.learning_rate, round)?;
            if let Some(v) = self.valid.as_mut() {
                v.apply(&learner, self.projection.as_ref(), p.learning_rate, round)?;
            }
            self.ensemble.learners.push(learner);

            let train_loss = self.train.metric(&objective)?;
            let valid_loss = self
                .valid
                .as_ref()
                .map(|v| v.metric(&objective))
                .transpose()?;
            trace.push(RoundRecord {
                round,
                subclass,
                train_loss,
                valid_loss,
            });

            if let (Some(patience), Some(vl)) = (p.early_stopping_rounds, valid_loss) {
                if vl < best_metric {
                    best_metric = vl;
                    best_count = round;
                    best_margins.clone_from(&self.train.margins);
                } else if round - best_count >= patience {
                    break;
                }
            }
        }

        let (best_iteration, train_margins) = if p.early_stopping_rounds.is_some() {
            self.ensemble.learners.truncate(best_count);
            (best_count, best_margins)
        } else {
            (self.ensemble.learners.len(), self.train.margins)
        };
        if self.ensemble.n_rff() > 0 {
            self.ensemble.rff_projection = self.projection;
        }
        Ok(TrainOutput {
            ensemble: self.ensemble,
            trace,
            best_iteration,
            train_margins,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump_data() -> Dataset {
        Dataset::from_rows(&[vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap()
    }

    fn stump_params(rate: f64, rounds: usize) -> BoostParams {
        BoostParams {
            num_round: rounds,
            learning_rate: rate,
            base_score: Some(0.0),
            lambda_l2: 0.0,
            tree_probability: 1.0,
            min_max_depth: 1,
            max_max_depth: 1,
            ..BoostParams::default()
        }
    }

    #[test]
    fn hand_stump_single_round() {
        let ds = stump_data();
        let out = train(&ds, None, &stump_params(1.0, 1)).unwrap();
        let pred = out
            .ensemble
            .predict(ds.features(), 1, OutputKind::Margin)
            .unwrap();
        assert_eq!(pred, vec![0.0, 1.0]);
        assert_eq!(out.trace[0].train_loss, 0.0);
        match &out.ensemble.learners[0] {
            Learner::Tree(t) => {
                let thr = t.nodes[0].threshold.unwrap();
                assert!((0.0..1.0).contains(&thr));
            }
            other => panic!("expected tree, got {other:?}"),
        }
    }

    #[test]
    fn half_rate_two_rounds() {
        let ds = stump_data();
        let out = train(&ds, None, &stump_params(0.5, 2)).unwrap();
        let pred = out
            .ensemble
            .predict(ds.features(), 1, OutputKind::Margin)
            .unwrap();
        assert_eq!(pred, vec![0.0, 0.75]);
        assert!(out.trace[1].train_loss < out.trace[0].train_loss);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(train(&stump_data(), None, &stump_params(1.0, 0)).is_err());
    }

    #[test]
    fn fixed_point_when_labels_equal_base() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], vec![0.4; 3]).unwrap();
        let params = BoostParams {
            base_score: Some(0.4),
            ..stump_params(1.0, 1)
        };
        let out = train(&ds, None, &params).unwrap();
        let pred = out
            .ensemble
            .predict(ds.features(), 1, OutputKind::Margin)
            .unwrap();
        assert!(pred.iter().all(|&p| p == 0.4));
    }

    #[test]
    fn early_stopping_requires_validation() {
        let params = BoostParams {
            early_stopping_rounds: Some(3),
            ..stump_params(1.0, 5)
        };
        assert!(train(&stump_data(), None, &params).is_err());
    }

    #[test]
    fn default_base_scores() {
        let y = [1.0, 2.0, 6.0];
        assert_eq!(
            default_base_score(&LossFunction::SquaredError, &y, None),
            3.0
        );
        let y = [1.0, -1.0, -1.0, -1.0];
        let b = default_base_score(&LossFunction::LogisticL2 { lambda: 0.0 }, &y, None);
        assert!((b - (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let ds = stump_data();
        let params = BoostParams {
            learning_rate: 1e308,
            ..stump_params(1.0, 3)
        };
        let err = train(&ds, None, &params).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
