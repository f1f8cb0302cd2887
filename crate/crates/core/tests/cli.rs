use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hybrid_ode::neuralnet::FeedForwardNet;
use hybrid_ode::problems::{analytic_decay_forced, linear_decay_forced};
use hybrid_ode::solvers::{integrate, Method, StepConfig};
use hybrid_ode::training::validate;

/// `compare --problem heat --reference analytic` of the ES seed-42 heat model.
const HEAT_ES_PILOT_MAX_ERROR: f64 = 7.623_984_973_563_734;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybrid-ode"))
        .args(args)
        .output()
        .expect("spawn hybrid-ode")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV, skipping comments and the header.
fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn summary(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with("# summary")).unwrap();
    let field = line
        .trim_start_matches("# summary ")
        .split(", ")
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap();
    field.parse().unwrap()
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let model = path(dir, name);
    let mut args = vec!["train", "--out", s(&model)];
    args.extend_from_slice(extra);
    let o = bin(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    model
}

#[test]
fn solve_decay_euler_table() {
    let o = bin(&["solve", "--problem", "decay", "--method", "euler", "--dt", "0.05"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# seed=0, dt=0.05, method=euler, version=0.1.0, problem=decay");
    assert_eq!(lines.next().unwrap(), "t,y_1");
    assert_eq!(lines.next().unwrap(), "0,1");
    assert_eq!(rows(&text).len(), 21);
}

#[test]
fn solve_heat_beyond_cfl_fails() {
    let o = bin(&["solve", "--problem", "heat", "--method", "euler", "--dt", "0.06"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("CFL"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn solve_heat_unchecked_writes_all_nodes() {
    let o = bin(&[
        "solve", "--problem", "heat", "--dt", "0.06", "--horizon", "1.2", "--no-cfl-check",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 21);
    assert_eq!(r[0].len(), 100);
    let end = r[20][1..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(end > 1.0);
}

#[test]
fn coarser_solve_has_larger_endpoint_error() {
    let exact = analytic_decay_forced(1.0);
    let end = |dt: &str| {
        let r = rows(&stdout(&bin(&["solve", "--dt", dt])));
        (r.last().unwrap()[1] - exact).abs()
    };
    assert!(end("0.2") > end("0.05"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(bin(&["solve", "--method", "rk4"]).status.code(), Some(2));
    assert_eq!(bin(&["solve", "--dt", "0.03"]).status.code(), Some(2));
    assert_eq!(bin(&["explode"]).status.code(), Some(2));
    let o = bin(&["solve", "--problem", "heat", "--dx", "0.3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dx"));
}

#[test]
fn io_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["rollout", "--model", s(&path(dir.path(), "missing"))]).status.code(), Some(4));
    let garbage = path(dir.path(), "garbage.txt");
    std::fs::write(&garbage, "not a model\n").unwrap();
    assert_eq!(bin(&["hybrid", "--model", s(&garbage)]).status.code(), Some(4));
    let unwritable = path(dir.path(), "no/such/dir/out.csv");
    assert_eq!(bin(&["solve", "--out", s(&unwritable)]).status.code(), Some(4));
}

#[test]
fn sgd_divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let model = path(dir.path(), "m.txt");
    let o = bin(&["train", "--trainer", "sgd", "--lr", "1000", "--epochs", "5", "--out", s(&model)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn es_training_is_byte_identical_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let a = train(dir.path(), "a.txt", &["--trainer", "es", "--seed", "42"]);
    let b = train(dir.path(), "b.txt", &["--trainer", "es", "--seed", "42"]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let hist = std::fs::read_to_string(path(dir.path(), "a.txt.history.csv")).unwrap();
    assert!(hist.lines().nth(1).unwrap() == "iteration,best_mse");
    let r = rows(&hist);
    assert_eq!(r.len(), 100);
    assert!(r.windows(2).all(|w| w[1][1] <= w[0][1]));

    let net = FeedForwardNet::from_text(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(net.layer_dims(), &[2, 10, 1]);
}

#[test]
fn analytic_training_source_validates_better() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--dt", "0.2", "--seed", "42"];
    let ana = train(dir.path(), "ana.txt", &[&common[..], &["--train-source", "analytic"]].concat());
    let eul = train(dir.path(), "eul.txt", &[&common[..], &["--train-source", "euler"]].concat());
    let score = |m: &Path| {
        let o = bin(&[&["compare", "--model", s(m), "--reference", "analytic"][..], &common[..]].concat());
        assert!(o.status.success(), "{}", stderr(&o));
        summary(&stdout(&o), "mse")
    };
    assert!(score(&ana) <= score(&eul));
}

#[test]
fn self_compare_has_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "m.txt", &["--iters", "5", "--seed", "1"]);
    for mode in ["net", "hybrid"] {
        let o = bin(&["compare", "--model", s(&model), "--reference", "self", "--mode", mode]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(rows(&text).iter().all(|r| *r.last().unwrap() == 0.0));
        assert_eq!(summary(&text, "mse"), 0.0);
        assert_eq!(summary(&text, "max_error"), 0.0);
    }
}

#[test]
fn compare_summary_equals_library_validate() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "m.txt", &["--iters", "10", "--seed", "3"]);
    let o = bin(&["compare", "--model", s(&model), "--reference", "euler", "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);

    let net = FeedForwardNet::from_text(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let p = linear_decay_forced();
    let reference = integrate(&p, &StepConfig::new(Method::Euler, 0.05)).unwrap();
    let u = p.input_fn();
    let report = validate(&net, &reference, &*u).unwrap();
    assert_eq!(summary(&text, "mse"), report.mse);
    assert_eq!(summary(&text, "max_error"), report.max_error);
    assert_eq!(rows(&text).len(), 21);
}

#[test]
fn compare_names_both_shapes_on_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "m.txt", &["--iters", "2"]);
    let o = bin(&["compare", "--problem", "heat", "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("2 -> 1") && err.contains("99 -> 99"), "{err}");
}

#[test]
fn heat_es_surrogate_stays_below_pinned_bound() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(dir.path(), "heat.txt", &["--problem", "heat", "--seed", "42"]);
    let o = bin(&["compare", "--problem", "heat", "--model", s(&model), "--reference", "analytic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let max_error = summary(&stdout(&o), "max_error");
    assert!(max_error <= 1.2 * HEAT_ES_PILOT_MAX_ERROR, "{max_error}");
}

#[test]
fn residual_model_improves_hybrid_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let model = train(
        dir.path(),
        "r.txt",
        &["--target", "residual", "--train-source", "analytic", "--seed", "42"],
    );
    let o = bin(&["hybrid", "--model", s(&model)]);
    assert!(o.status.success());
    let end = rows(&stdout(&o)).last().unwrap()[1];
    let zero_net_error = (analytic_decay_forced(1.0) - (-0.1f64).exp()).abs();
    let err = (end - analytic_decay_forced(1.0)).abs();
    assert!(err < 0.1 * zero_net_error, "{err} vs {zero_net_error}");
}

#[test]
fn em_ensemble_columns() {
    let o = bin(&["solve", "--method", "em", "--dt", "0.01", "--paths", "500", "--seed", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().nth(1).unwrap(), "t,mean_1,std_1");
    let r = rows(&text);
    assert_eq!(r.len(), 101);
    assert_eq!(r[0], vec![0.0, 1.0, 0.0]);
    assert!(r[100][2] > 0.05 && r[100][2] < 0.15);
}
