use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hnbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnbm"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hnbm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn column(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn synth(&self, name: &str, generator: &str, task: &str, n: usize, seed: u64) -> PathBuf {
        let path = self.path(name);
        ok(&[
            "synth",
            "--generator",
            generator,
            "--task",
            task,
            "--n",
            &n.to_string(),
            "--d",
            "4",
            "--seed",
            &seed.to_string(),
            "--output",
            p(&path),
        ]);
        path
    }
}

const STUMP_FLAGS: &[&str] = &[
    "--num_round",
    "1",
    "--learning_rate",
    "1",
    "--tree_probability",
    "1",
    "--min_max_depth",
    "1",
    "--max_max_depth",
    "1",
    "--lambda_l2",
    "0",
    "--base_score",
    "0",
];

#[test]
fn stump_train_then_predict() {
    let fx = Fixture::new();
    let data = fx.file("stump.csv", "x,y\n0,0\n1,1\n");
    let model = fx.path("m.json");
    let trace = fx.path("trace.csv");
    let mut args = vec![
        "train",
        "--train",
        p(&data),
        "--label",
        "y",
        "--model",
        p(&model),
        "--trace",
        p(&trace),
    ];
    args.extend_from_slice(STUMP_FLAGS);
    ok(&args);
    let preds = fx.path("p.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--drop",
        "y",
        "--output",
        p(&preds),
    ]);
    assert_eq!(column(&preds), vec![0.0, 1.0]);
    let trace = fs::read_to_string(trace).unwrap();
    assert_eq!(trace.lines().nth(1).unwrap(), "1,tree1,0,");
}

#[test]
fn missing_input_names_path() {
    let fx = Fixture::new();
    let out = hnbm(&[
        "train",
        "--train",
        "/no/such/file.csv",
        "--model",
        p(&fx.path("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.csv"));
}

#[test]
fn unknown_flag_rejected() {
    let out = hnbm(&[
        "train",
        "--train",
        "a.csv",
        "--model",
        "m.json",
        "--max_depth",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_params_rejected_before_reading_data() {
    let out = hnbm(&[
        "train",
        "--train",
        "/no/such.csv",
        "--model",
        "m.json",
        "--num_round",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_round"));
}

#[test]
fn training_is_deterministic_across_runs_and_threads() {
    let fx = Fixture::new();
    let data = fx.synth("d.csv", "rbf", "regression", 300, 3);
    let mut models = Vec::new();
    for (i, cores) in ["1", "1", "4"].iter().enumerate() {
        let model = fx.path(&format!("m{i}.json"));
        ok(&[
            "train",
            "--train",
            p(&data),
            "--label",
            "y",
            "--model",
            p(&model),
            "--num_round",
            "30",
            "--tree_probability",
            "0.6",
            "--subsample",
            "0.8",
            "--colsample",
            "0.7",
            "--random_state",
            "9",
            "--num-cores",
            cores,
        ]);
        models.push(fs::read(model).unwrap());
    }
    assert_eq!(models[0], models[1]);
    assert_eq!(models[0], models[2]);
}

#[test]
fn predict_constant_and_hand_stump() {
    let fx = Fixture::new();
    let empty = fx.file(
        "empty.json",
        r#"{"format_version":1,"objective":{"kind":"squared_error"},"base_score":0.25,"learning_rate":0.1,"n_features":1,"learners":[]}"#,
    );
    let x = fx.file("x.csv", "a\n2\n3\n");
    let out = fx.path("o.csv");
    ok(&[
        "predict",
        "--model",
        p(&empty),
        "--data",
        p(&x),
        "--output",
        p(&out),
    ]);
    assert_eq!(column(&out), vec![0.25, 0.25]);

    let stump = fx.file(
        "stump.json",
        r#"{"format_version":1,"objective":{"kind":"squared_error"},"base_score":0.0,"learning_rate":1.0,"n_features":1,
        "learners":[{"kind":"tree","max_depth":1,"features":[0],"nodes":[
            {"feature":0,"threshold":2.5,"left":1,"right":2,"value":0.0},
            {"feature":null,"threshold":null,"left":null,"right":null,"value":1.0},
            {"feature":null,"threshold":null,"left":null,"right":null,"value":-1.0}]}]}"#,
    );
    ok(&[
        "predict",
        "--model",
        p(&stump),
        "--data",
        p(&x),
        "--output",
        p(&out),
    ]);
    assert_eq!(column(&out), vec![1.0, -1.0]);
    let first = fs::read(&out).unwrap();
    ok(&[
        "predict",
        "--model",
        p(&stump),
        "--data",
        p(&x),
        "--output",
        p(&out),
    ]);
    assert_eq!(fs::read(&out).unwrap(), first);

    let wide = fx.file("w.csv", "a,b\n2,0\n");
    let narrow_model = fx.file(
        "needs2.json",
        &fs::read_to_string(&stump)
            .unwrap()
            .replace("\"feature\":0", "\"feature\":1")
            .replace("\"features\":[0]", "\"features\":[1]"),
    );
    ok(&[
        "predict",
        "--model",
        p(&narrow_model),
        "--data",
        p(&wide),
        "--output",
        p(&out),
    ]);
    let err = hnbm(&[
        "predict",
        "--model",
        p(&narrow_model),
        "--data",
        p(&x),
        "--output",
        p(&out),
    ]);
    assert_eq!(err.status.code(), Some(1));
}

#[test]
fn probability_column_for_logloss_only() {
    let fx = Fixture::new();
    let data = fx.synth("c.csv", "linear", "classification", 200, 1);
    let model = fx.path("m.json");
    ok(&[
        "train",
        "--train",
        p(&data),
        "--label",
        "y",
        "--objective",
        "logloss",
        "--logloss_lambda",
        "0.01",
        "--model",
        p(&model),
        "--num_round",
        "10",
    ]);
    let out = fx.path("p.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--drop",
        "y",
        "--output",
        p(&out),
        "--probability",
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("margin,probability\n"));
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((0.0..=1.0).contains(&v[1]));
    }

    let reg = fx.synth("r.csv", "linear", "regression", 50, 1);
    ok(&[
        "train",
        "--train",
        p(&reg),
        "--label",
        "y",
        "--model",
        p(&model),
        "--num_round",
        "2",
    ]);
    let err = hnbm(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&reg),
        "--drop",
        "y",
        "--output",
        p(&out),
        "--probability",
    ]);
    assert_eq!(err.status.code(), Some(1));
}

#[test]
fn corrupt_model_is_a_user_error() {
    let fx = Fixture::new();
    let model = fx.file("bad.json", "{\"format_version\": 1, \"objective\"");
    let x = fx.file("x.csv", "a\n1\n");
    let out = hnbm(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&x),
        "--output",
        p(&fx.path("o.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed"));
}

fn tune(fx: &Fixture, space: Option<&Path>, cores: &str, tag: &str) -> (String, String) {
    let train = fx.synth("tr.csv", "rbf", "regression", 200, 5);
    let valid = fx.synth("va.csv", "rbf", "regression", 100, 6);
    let best = fx.path(&format!("best{tag}.json"));
    let log = fx.path(&format!("log{tag}.csv"));
    let mut args = vec![
        "tune",
        "--train",
        p(&train),
        "--valid",
        p(&valid),
        "--label",
        "y",
        "--n0",
        "16",
        "--eta",
        "4",
        "--r-min",
        "0.25",
        "--seed",
        "3",
        "--num-cores",
        cores,
        "--best",
        p(&best),
        "--log",
        p(&log),
    ];
    if let Some(s) = space {
        args.extend_from_slice(&["--space", p(s)]);
    }
    ok(&args);
    (
        fs::read_to_string(best).unwrap(),
        fs::read_to_string(log).unwrap(),
    )
}

const SMALL_SPACE: &str = r#"{"params":[
  {"name":"num_round","min":5,"max":20,"scale":"linear","type":"int"},
  {"name":"learning_rate","min":-2,"max":-0.5,"scale":"log10","type":"real"},
  {"name":"tree_probability","min":0.5,"max":1.0,"scale":"linear","type":"real"},
  {"name":"max_max_depth","min":1,"max":4,"scale":"linear","type":"int"}
]}"#;

#[test]
fn tune_trial_counts_and_core_invariance() {
    let fx = Fixture::new();
    let space = fx.file("space.json", SMALL_SPACE);
    let (best1, log1) = tune(&fx, Some(&space), "1", "a");
    let (best4, log4) = tune(&fx, Some(&space), "4", "b");
    assert_eq!(log1.lines().count(), 1 + 16 + 4);
    assert_eq!(log4.lines().count(), 1 + 16 + 4);
    let strip = |s: &str| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("params");
        v
    };
    assert_eq!(strip(&best1), strip(&best4));
}

#[test]
fn tune_point_space_returns_the_point() {
    let fx = Fixture::new();
    let space = fx.file(
        "point.json",
        r#"{"params":[{"name":"num_round","min":7,"max":7,"scale":"linear","type":"int"},
                      {"name":"lambda_l2","min":-2,"max":-2,"scale":"log10","type":"real"}]}"#,
    );
    let (best, _) = tune(&fx, Some(&space), "2", "p");
    let v: serde_json::Value = serde_json::from_str(&best).unwrap();
    assert_eq!(v["config"]["num_round"], 7);
    assert_eq!(v["config"]["lambda_l2"], 0.01);
}

#[test]
fn tune_rejects_small_n0_before_training() {
    let out = hnbm(&[
        "tune",
        "--train",
        "/no/such.csv",
        "--valid",
        "/no/such.csv",
        "--n0",
        "8",
        "--eta",
        "4",
        "--r-min",
        "0.0625",
        "--best",
        "b.json",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n0 >= 16"));
}

#[test]
fn verify_builtins() {
    let out = ok(&[
        "verify",
        "--builtin",
        "identity2-uniform",
        "--trials",
        "500",
        "--iterations",
        "20",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("theta: 0.5 "));
    assert!(text.contains("overall: PASS"));

    let out = ok(&[
        "verify",
        "--builtin",
        "perfect-fit",
        "--trials",
        "10",
        "--iterations",
        "3",
    ]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("theta: 1 "));
    let row1 = text.lines().find(|l| l.starts_with("1,")).unwrap();
    let gap: f64 = row1.split(',').nth(1).unwrap().parse().unwrap();
    assert!(gap.abs() < 1e-20);
}

#[test]
fn verify_rejects_non_unit_columns() {
    let fx = Fixture::new();
    let inst = fx.file(
        "inst.json",
        r#"{"b":[[1.0,0.0],[1.0,1.0]],"groups":[[0],[1]],"phi":[0.5,0.5],"loss":{"kind":"squared_error"},"y":[1,2]}"#,
    );
    let out = hnbm(&["verify", "--instance", p(&inst)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unit norm"));

    let garbage = fx.file("g.json", "{\"b\": ");
    assert_eq!(
        hnbm(&["verify", "--instance", p(&garbage)]).status.code(),
        Some(1)
    );
}

#[test]
fn synth_is_reproducible() {
    let fx = Fixture::new();
    let a = fx.synth("a.csv", "linear", "regression", 100, 42);
    let b = fx.synth("b.csv", "linear", "regression", 100, 42);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn axis_aligned_data_is_fit_by_depth_two_trees() {
    let fx = Fixture::new();
    let data = fx.path("ax.csv");
    ok(&[
        "synth",
        "--generator",
        "axis-aligned",
        "--n",
        "400",
        "--d",
        "3",
        "--noise",
        "0",
        "--seed",
        "8",
        "--output",
        p(&data),
    ]);
    let trace = fx.path("t.csv");
    ok(&[
        "train",
        "--train",
        p(&data),
        "--label",
        "y",
        "--model",
        p(&fx.path("m.json")),
        "--trace",
        p(&trace),
        "--tree_probability",
        "1",
        "--min_max_depth",
        "2",
        "--max_max_depth",
        "2",
        "--learning_rate",
        "1",
        "--lambda_l2",
        "0",
        "--num_round",
        "3",
    ]);
    let last = fs::read_to_string(trace)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .to_string();
    let rmse: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert!(rmse < 1e-9, "final rmse {rmse}");
}
