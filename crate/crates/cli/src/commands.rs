use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hnbm::data::{load_csv_with, load_features, CsvOptions};
use hnbm::synth::{generate, Generator, SynthSpec, Task};
use hnbm::theory::{self, AngleMethod, TheoryInstance};
use hnbm::tuner::{self, apply_config, BoostTrainer, SHConfig, SearchSpace, Validation};
use hnbm::{BoostParams, Dataset, Ensemble, LabelColumn, LossFunction, OutputKind, Subclass};

use crate::{
    BoostArgs, DataArgs, Failure, ObjectiveArgs, PredictArgs, SynthArgs, TrainArgs, TuneArgs,
    VerifyArgs,
};

type CmdResult = Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::User(format!("{}: {e}", path.display()))
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> CmdResult {
    let file = File::create(path).map_err(|e| io_failure(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|()| out.flush())
        .map_err(|e| io_failure(path, e))
}

fn load(path: &Path, data: &DataArgs) -> Result<Dataset, Failure> {
    let opts = CsvOptions {
        label: LabelColumn::parse(&data.label),
        has_header: !data.no_header,
        weight: data.weight.as_deref().map(LabelColumn::parse),
    };
    Ok(load_csv_with(path, &opts)?)
}

fn boost_params(
    objective: &ObjectiveArgs,
    b: &BoostArgs,
    threads: Option<usize>,
) -> Result<BoostParams, Failure> {
    let params = BoostParams {
        num_round: b.num_round,
        learning_rate: b.learning_rate,
        objective: LossFunction::from_name(&objective.objective, objective.logloss_lambda)?,
        base_score: b.base_score,
        lambda_l2: b.lambda_l2,
        subsample: b.subsample,
        colsample: b.colsample,
        tree_probability: b.tree_probability,
        min_max_depth: b.min_max_depth,
        max_max_depth: b.max_max_depth,
        hist_nbins: b.hist_nbins,
        alpha: b.alpha,
        fit_intercept: b.fit_intercept,
        gamma: b.gamma,
        n_components: b.n_components,
        early_stopping_rounds: b.early_stopping_rounds,
        random_state: b.random_state,
        n_threads: threads,
    };
    params.validate()?;
    Ok(params)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn train(a: TrainArgs) -> CmdResult {
    let params = boost_params(&a.objective, &a.boost, a.num_cores)?;
    let train_set = load(&a.train, &a.data)?;
    let valid_set = a.valid.as_deref().map(|p| load(p, &a.data)).transpose()?;
    let out = hnbm::train(&train_set, valid_set.as_ref(), &params)?;
    out.ensemble.save(&a.model)?;
    if let Some(path) = &a.trace {
        write_file(path, |w| {
            writeln!(w, "round,subclass,train_loss,valid_loss")?;
            for r in &out.trace {
                let kind = match r.subclass {
                    Subclass::Tree { depth } => format!("tree{depth}"),
                    Subclass::Rff => "rff".to_string(),
                };
                writeln!(
                    w,
                    "{},{},{},{}",
                    r.round,
                    kind,
                    r.train_loss,
                    fmt_opt(r.valid_loss)
                )?;
            }
            Ok(())
        })?;
    }
    log::info!(
        "trained {} learners ({} trees, {} rff)",
        out.ensemble.learners.len(),
        out.ensemble.n_trees(),
        out.ensemble.n_rff()
    );
    Ok(())
}

pub fn predict(a: PredictArgs) -> CmdResult {
    let ensemble = Ensemble::load(&a.model)?;
    let drop = a.drop.as_deref().map(LabelColumn::parse);
    let (x, n, d) = load_features(&a.data, !a.no_header, drop.as_ref())?;
    let run = || -> hnbm::Result<(Vec<f64>, Option<Vec<f64>>)> {
        if n > 0 && d < ensemble.required_columns() {
            return Err(hnbm::Error::DimensionMismatch {
                expected: ensemble.required_columns(),
                got: d,
            });
        }
        let margins = ensemble.predict(&x, d, OutputKind::Margin)?;
        let probs = if a.probability {
            Some(ensemble.predict(&x, d, OutputKind::Probability)?)
        } else {
            None
        };
        Ok((margins, probs))
    };
    let (margins, probs) = match a.num_cores {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Failure::User(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    write_file(&a.output, |w| {
        match &probs {
            Some(p) => {
                writeln!(w, "margin,probability")?;
                for (m, p) in margins.iter().zip(p) {
                    writeln!(w, "{m},{p}")?;
                }
            }
            None => {
                writeln!(w, "margin")?;
                for m in &margins {
                    writeln!(w, "{m}")?;
                }
            }
        }
        Ok(())
    })
}

pub fn tune(a: TuneArgs) -> CmdResult {
    let base = boost_params(&a.objective, &a.boost, None)?;
    let space = match &a.space {
        Some(p) => SearchSpace::load(p)?,
        None => SearchSpace::default_boosting(),
    };
    let sh = SHConfig {
        n0: a.n0,
        eta: a.eta,
        r_min: a.r_min,
        num_cores: a.num_cores,
        seed: a.seed,
    };
    tuner::schedule(&sh)?;
    let validation = match (a.cv_folds, &a.valid) {
        (Some(folds), None) => Validation::CrossValidated { folds },
        (None, Some(_)) => Validation::Holdout,
        (Some(_), Some(_)) => {
            return Err(Failure::User(
                "use either --valid or --cv-folds, not both".into(),
            ))
        }
        (None, None) => return Err(Failure::User("tuning needs --valid or --cv-folds".into())),
    };
    let train_set = load(&a.train, &a.data)?;
    let valid_set = a.valid.as_deref().map(|p| load(p, &a.data)).transpose()?;
    let trainer = BoostTrainer {
        train: &train_set,
        valid: valid_set.as_ref(),
        base: base.clone(),
    };
    let result = tuner::run(&sh, &space, train_set.n_rows(), validation, |c, ctx| {
        trainer.evaluate(c, ctx)
    })?;
    if !result.best_loss.is_finite() {
        return Err(Failure::User(
            "every trial failed; see the trial log".into(),
        ));
    }
    let resolved = apply_config(&base, &result.best_config)?;
    let doc = serde_json::json!({
        "config_id": result.best_config_id,
        "validation_loss": result.best_loss,
        "config": result.best_config,
        "params": resolved,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Internal(e.to_string()))?;
    write_file(&a.best, |w| writeln!(w, "{text}"))?;
    if let Some(path) = &a.log {
        result.write_log_csv(path)?;
    }
    println!(
        "best config {} with validation loss {} ({} trials)",
        result.best_config_id,
        result.best_loss,
        result.trials.len()
    );
    Ok(())
}

pub fn verify(a: VerifyArgs) -> CmdResult {
    let inst = match (&a.instance, &a.builtin) {
        (Some(p), None) => TheoryInstance::load(p)?,
        (None, Some(name)) => theory::builtin(name)?,
        _ => {
            return Err(Failure::User(
                "give exactly one of --instance or --builtin".into(),
            ))
        }
    };
    let run = || verify_instance(&inst, &a);
    match a.num_cores {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Failure::User(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

fn verify_instance(inst: &TheoryInstance, a: &VerifyArgs) -> CmdResult {
    let theta = match a.angle.as_str() {
        "analytic" => theory::min_cosine_angle(inst, AngleMethod::AnalyticOrthonormal)?,
        "grid" => theory::min_cosine_angle(inst, AngleMethod::Grid)?,
        "auto" => theory::min_cosine_angle(inst, AngleMethod::AnalyticOrthonormal)
            .or_else(|_| theory::min_cosine_angle(inst, AngleMethod::Grid))?,
        other => return Err(Failure::User(format!("unknown angle method {other:?}"))),
    };
    let lemma = theory::verify_lemma1(inst, &vec![0.0; inst.n_hypotheses()])?;
    let report = theory::verify_theorem1(inst, a.iterations, a.trials, theta.lower(), a.seed)?;

    println!(
        "instance: {} examples, {} hypotheses, {} subclasses",
        inst.n_rows(),
        inst.n_hypotheses(),
        inst.n_subclasses()
    );
    println!(
        "lemma: lhs={} rhs={} {}",
        lemma.lhs,
        lemma.rhs,
        verdict(lemma.holds)
    );
    println!("theta: {} (error bar {})", theta.value, theta.error_bar);
    println!(
        "epsilon={} contraction={} L*={} slack={}",
        report.epsilon,
        report.contraction,
        report.optimal_loss,
        report.slack()
    );
    println!("m,empirical_gap,bound");
    for row in &report.rows {
        println!("{},{:e},{:e}", row.m, row.mean_gap, row.bound);
    }
    let ok = lemma.holds && report.holds;
    println!("overall: {}", verdict(ok));
    if ok {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        generator: Generator::from_name(&a.generator)?,
        task: Task::from_name(&a.task)?,
        n_rows: a.n,
        n_cols: a.d,
        noise: a.noise,
        seed: a.seed,
    };
    let ds = generate(&spec)?;
    hnbm::data::write_csv(&ds, &a.output)?;
    Ok(())
}
