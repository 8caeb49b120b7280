//! Successive-halving hyper-parameter search.
//!
//! Stage `i` trains the surviving configurations on a fraction `r_i` of the
//! training rows and keeps the best `n_{i+1}` for the next stage. Row subsets
//! are prefixes of a single seeded permutation, so a stage's subset contains
//! every smaller one.

mod boost;
mod space;

pub use boost::{apply_config, BoostTrainer};
pub use space::{sample_configs, Config, ParamSpec, ParamType, ParamValue, Scale, SearchSpace};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::sample_size;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SHConfig {
    pub n0: usize,
    pub eta: f64,
    pub r_min: f64,
    pub num_cores: usize,
    pub seed: u64,
}

impl SHConfig {
    pub fn s_max(&self) -> usize {
        (-self.r_min.ln() / self.eta.ln() + 1e-9).floor().max(0.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "eta must be > 1, got {}",
                self.eta
            )));
        }
        if !(self.r_min > 0.0 && self.r_min <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "r_min must be in (0,1], got {}",
                self.r_min
            )));
        }
        if self.num_cores == 0 {
            return Err(Error::InvalidParam("num_cores must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stage {
    pub index: usize,
    pub n_configs: usize,
    pub resource: f64,
}

/// Stages `i = 0..=s_max` with `n_i = floor(n0 eta^-i)` and `r_i = eta^(i - s_max)`.
pub fn schedule(sh: &SHConfig) -> Result<Vec<Stage>> {
    sh.validate()?;
    let s_max = sh.s_max();
    let required = sh.eta.powi(s_max as i32);
    if (sh.n0 as f64) < required - 1e-9 || sh.n0 == 0 {
        return Err(Error::TooFewConfigs {
            n0: sh.n0,
            required: (required - 1e-9).ceil().max(1.0) as usize,
        });
    }
    Ok((0..=s_max)
        .map(|i| Stage {
            index: i,
            n_configs: (sh.n0 as f64 / sh.eta.powi(i as i32) + 1e-9).floor() as usize,
            resource: sh.eta.powi(i as i32 - s_max as i32),
        })
        .collect())
}

/// What a trial is allowed to use.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub config_id: usize,
    pub stage: usize,
    pub resource: f64,
    /// Training rows for this trial, sorted.
    pub train_rows: Vec<usize>,
    /// Held-out rows of the inner fold in cross-validated mode.
    pub valid_rows: Option<Vec<usize>>,
    pub fold: Option<usize>,
    /// Compute threads granted to this trial.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

/// One evaluation of one configuration in one stage. In cross-validated mode
/// `loss` is the mean over folds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub config_id: usize,
    pub stage: usize,
    pub resource: f64,
    pub loss: f64,
    pub fold_losses: Vec<f64>,
    pub wall_time: f64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub best_config_id: usize,
    pub best_config: Config,
    pub best_loss: f64,
    pub stages: Vec<Stage>,
    pub configs: Vec<Config>,
    pub trials: Vec<TrialRecord>,
}

impl TuneResult {
    pub fn write_log_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(out, "config_id,stage,resource,loss,wall_time_s,status").map_err(io)?;
        for t in &self.trials {
            let status = match &t.status {
                TrialStatus::Ok => "ok".to_string(),
                TrialStatus::Failed(msg) => format!("\"failed: {}\"", msg.replace('"', "'")),
            };
            writeln!(
                out,
                "{},{},{},{},{:.6},{}",
                t.config_id, t.stage, t.resource, t.loss, t.wall_time, status
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Where each trial's data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    /// The trainer scores against its own validation set.
    Holdout,
    /// Rows are split into this many folds; each fold serves once as the
    /// validation part and the trial loss is the mean.
    CrossValidated { folds: usize },
}

/// Runs successive halving over `n0` configurations sampled from `space`.
/// `trainer` returns the validation loss of a configuration; errors and
/// non-finite losses mark the trial as failed with loss `+inf`.
pub fn run<F>(
    sh: &SHConfig,
    space: &SearchSpace,
    n_rows: usize,
    validation: Validation,
    trainer: F,
) -> Result<TuneResult>
where
    F: Fn(&Config, &TrialContext) -> Result<f64> + Sync,
{
    space.validate()?;
    let stages = schedule(sh)?;
    let configs = sample_configs(space, sh.n0, sh.seed);
    run_configs(sh, &stages, configs, n_rows, validation, trainer)
}

fn run_configs<F>(
    sh: &SHConfig,
    stages: &[Stage],
    configs: Vec<Config>,
    n_rows: usize,
    validation: Validation,
    trainer: F,
) -> Result<TuneResult>
where
    F: Fn(&Config, &TrialContext) -> Result<f64> + Sync,
{
    if n_rows == 0 {
        return Err(Error::InvalidData(
            "tuning needs at least one training row".into(),
        ));
    }
    let folds = match validation {
        Validation::Holdout => None,
        Validation::CrossValidated { folds } => {
            if folds < 2 || folds > n_rows {
                return Err(Error::InvalidParam(format!(
                    "need 2 <= folds <= {n_rows}, got {folds}"
                )));
            }
            Some(folds)
        }
    };

    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng::stream(sh.seed, 0, Purpose::RowSample));
    let fold_of: Vec<usize> = match folds {
        Some(k) => {
            let mut perm: Vec<usize> = (0..n_rows).collect();
            perm.shuffle(&mut rng::stream(sh.seed, 1, Purpose::RowSample));
            let mut f = vec![0; n_rows];
            for (pos, &row) in perm.iter().enumerate() {
                f[row] = pos % k;
            }
            f
        }
        None => Vec::new(),
    };

    let mut alive: Vec<usize> = (0..configs.len()).collect();
    let mut trials = Vec::new();
    let mut last: Vec<(usize, f64)> = Vec::new();

    for (s, stage) in stages.iter().enumerate() {
        let mut subset: Vec<usize> = order[..sample_size(stage.resource, n_rows)].to_vec();
        subset.sort_unstable();

        let workers = sh.num_cores.min(alive.len()).max(1);
        let threads = (sh.num_cores / workers).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;

        let evaluate = |id: usize| -> TrialRecord {
            let start = Instant::now();
            let mut fold_losses = Vec::new();
            let mut failure = None;
            let parts: Vec<Option<usize>> = match folds {
                Some(k) => (0..k).map(Some).collect(),
                None => vec![None],
            };
            for fold in parts {
                let (train_rows, valid_rows) = match fold {
                    Some(f) => (
                        subset
                            .iter()
                            .copied()
                            .filter(|&r| fold_of[r] != f)
                            .collect(),
                        Some((0..n_rows).filter(|&r| fold_of[r] == f).collect()),
                    ),
                    None => (subset.clone(), None),
                };
                let ctx = TrialContext {
                    config_id: id,
                    stage: s,
                    resource: stage.resource,
                    train_rows,
                    valid_rows,
                    fold,
                    threads,
                };
                match trainer(&configs[id], &ctx) {
                    Ok(v) if v.is_finite() => fold_losses.push(v),
                    Ok(v) => {
                        failure = Some(format!("non-finite loss {v}"));
                        break;
                    }
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            let (loss, status) = match failure {
                Some(msg) => (f64::INFINITY, TrialStatus::Failed(msg)),
                None => (
                    fold_losses.iter().sum::<f64>() / fold_losses.len() as f64,
                    TrialStatus::Ok,
                ),
            };
            TrialRecord {
                config_id: id,
                stage: s,
                resource: stage.resource,
                loss,
                fold_losses,
                wall_time: start.elapsed().as_secs_f64(),
                status,
            }
        };
        let records: Vec<TrialRecord> =
            pool.install(|| alive.par_iter().map(|&id| evaluate(id)).collect());

        let mut ranked: Vec<(usize, f64)> = records.iter().map(|t| (t.config_id, t.loss)).collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        trials.extend(records);

        if let Some(next) = stages.get(s + 1) {
            alive = ranked
                .iter()
                .take(next.n_configs)
                .map(|&(id, _)| id)
                .collect();
            alive.sort_unstable();
        }
        last = ranked;
    }

    let (best_config_id, best_loss) = last[0];
    Ok(TuneResult {
        best_config_id,
        best_config: configs[best_config_id].clone(),
        best_loss,
        stages: stages.to_vec(),
        configs,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sh(n0: usize, eta: f64, r_min: f64) -> SHConfig {
        SHConfig {
            n0,
            eta,
            r_min,
            num_cores: 1,
            seed: 0,
        }
    }

    fn pairs(s: &[Stage]) -> Vec<(usize, f64)> {
        s.iter().map(|st| (st.n_configs, st.resource)).collect()
    }

    #[test]
    fn schedules() {
        assert_eq!(
            pairs(&schedule(&sh(512, 4.0, 0.25)).unwrap()),
            vec![(512, 0.25), (128, 1.0)]
        );
        assert_eq!(
            pairs(&schedule(&sh(256, 4.0, 1.0 / 16.0)).unwrap()),
            vec![(256, 0.0625), (64, 0.25), (16, 1.0)]
        );
        assert_eq!(pairs(&schedule(&sh(7, 3.0, 1.0)).unwrap()), vec![(7, 1.0)]);
    }

    #[test]
    fn too_few_configs() {
        let err = schedule(&sh(8, 4.0, 1.0 / 16.0)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::TooFewConfigs {
                    n0: 8,
                    required: 16
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn single_stage_argmin() {
        let stages = schedule(&sh(4, 4.0, 1.0)).unwrap();
        let configs: Vec<Config> = (0..4)
            .map(|i| {
                [("i".to_string(), ParamValue::Int(i))]
                    .into_iter()
                    .collect()
            })
            .collect();
        let losses = [0.3, 0.2, 0.5, 0.4];
        let r = run_configs(
            &sh(4, 4.0, 1.0),
            &stages,
            configs,
            10,
            Validation::Holdout,
            |c, _| Ok(losses[c["i"].as_f64() as usize]),
        )
        .unwrap();
        assert_eq!(r.best_config_id, 1);
        assert_eq!(r.best_loss, 0.2);
    }

    #[test]
    fn failures_score_infinity_and_counts_match() {
        let space = SearchSpace::default_boosting();
        let r = run(
            &sh(16, 4.0, 0.25),
            &space,
            40,
            Validation::Holdout,
            |_, ctx| {
                if ctx.config_id % 3 == 0 {
                    Err(Error::InvalidParam("boom".into()))
                } else {
                    Ok(ctx.config_id as f64)
                }
            },
        )
        .unwrap();
        assert_eq!(r.trials.iter().filter(|t| t.stage == 0).count(), 16);
        assert_eq!(r.trials.iter().filter(|t| t.stage == 1).count(), 4);
        assert!(r
            .trials
            .iter()
            .filter(|t| t.config_id % 3 == 0)
            .all(|t| t.loss == f64::INFINITY));
        assert_eq!(r.best_config_id, 1);
    }

    #[test]
    fn nested_subsets_and_folds() {
        let space = SearchSpace::default_boosting();
        let seen = std::sync::Mutex::new(Vec::new());
        run(
            &sh(16, 4.0, 1.0 / 16.0),
            &space,
            100,
            Validation::CrossValidated { folds: 3 },
            |_, ctx| {
                let valid = ctx.valid_rows.as_ref().unwrap();
                assert!(ctx
                    .train_rows
                    .iter()
                    .all(|r| valid.binary_search(r).is_err()));
                seen.lock()
                    .unwrap()
                    .push((ctx.stage, ctx.fold.unwrap(), ctx.train_rows.clone()));
                Ok(0.0)
            },
        )
        .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), (16 + 4 + 1) * 3);
        let rows = |stage: usize| {
            seen.iter()
                .find(|(s, f, _)| *s == stage && *f == 0)
                .unwrap()
                .2
                .clone()
        };
        let (a, b) = (rows(0), rows(1));
        assert!(a.iter().all(|r| b.contains(r)) && a.len() < b.len());
    }
}
