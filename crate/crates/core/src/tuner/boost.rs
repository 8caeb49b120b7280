use crate::booster::{train, BoostParams};
use crate::data::Dataset;
use crate::error::{Error, Result};

use super::{Config, ParamValue, TrialContext};

fn as_count(name: &str, v: &ParamValue) -> Result<usize> {
    let x = v.as_f64();
    if x < 0.0 || x.fract() != 0.0 {
        return Err(Error::InvalidParam(format!(
            "{name} must be a non-negative integer, got {x}"
        )));
    }
    Ok(x as usize)
}

/// Overrides the fields of `base` named in `config`. A sampled depth range
/// with `min_max_depth > max_max_depth` is swapped.
pub fn apply_config(base: &BoostParams, config: &Config) -> Result<BoostParams> {
    let mut p = base.clone();
    for (name, v) in config {
        match name.as_str() {
            "num_round" => p.num_round = as_count(name, v)?,
            "learning_rate" => p.learning_rate = v.as_f64(),
            "subsample" => p.subsample = v.as_f64(),
            "colsample" => p.colsample = v.as_f64(),
            "lambda_l2" => p.lambda_l2 = v.as_f64(),
            "tree_probability" => p.tree_probability = v.as_f64(),
            "min_max_depth" => p.min_max_depth = as_count(name, v)?,
            "max_max_depth" => p.max_max_depth = as_count(name, v)?,
            "hist_nbins" => p.hist_nbins = as_count(name, v)?,
            "alpha" => p.alpha = v.as_f64(),
            "fit_intercept" => p.fit_intercept = v.as_f64() != 0.0,
            "gamma" => p.gamma = v.as_f64(),
            "n_components" => p.n_components = as_count(name, v)?,
            "early_stopping_rounds" => p.early_stopping_rounds = Some(as_count(name, v)?),
            "random_state" => p.random_state = as_count(name, v)? as u64,
            "base_score" => p.base_score = Some(v.as_f64()),
            other => {
                return Err(Error::InvalidParam(format!(
                    "unknown hyper-parameter {other:?}"
                )))
            }
        }
    }
    if p.min_max_depth > p.max_max_depth {
        std::mem::swap(&mut p.min_max_depth, &mut p.max_max_depth);
    }
    p.validate()?;
    Ok(p)
}

/// Trial callback that trains the booster on the trial's rows and returns the
/// objective metric on the validation part.
#[derive(Debug, Clone)]
pub struct BoostTrainer<'a> {
    pub train: &'a Dataset,
    /// Holdout validation set; unused when the context supplies fold rows.
    pub valid: Option<&'a Dataset>,
    pub base: BoostParams,
}

impl BoostTrainer<'_> {
    pub fn evaluate(&self, config: &Config, ctx: &TrialContext) -> Result<f64> {
        let mut params = apply_config(&self.base, config)?;
        params.n_threads = Some(ctx.threads.max(1));
        let train_part = self.train.select_rows(&ctx.train_rows)?;
        let fold_valid;
        let valid = match &ctx.valid_rows {
            Some(rows) => {
                fold_valid = self.train.select_rows(rows)?;
                &fold_valid
            }
            None => self.valid.ok_or_else(|| {
                Error::InvalidParam("holdout tuning needs a validation set".into())
            })?,
        };
        let es = params.early_stopping_rounds.is_some();
        let out = train(&train_part, es.then_some(valid), &params)?;
        out.ensemble.evaluate(valid)
    }
}
