use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn shfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shfm"))
        .args(args)
        .env("SHFM_THREADS", "1")
        .output()
        .unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn one_line_stderr(o: &Output) -> String {
    let e = String::from_utf8_lossy(&o.stderr).to_string();
    assert_eq!(e.lines().count(), 1, "stderr: {e}");
    e
}

fn synth(dir: &Path) -> (String, String) {
    let (tr, te) = (p(dir, "train.svm"), p(dir, "test.svm"));
    let o = shfm(&["synth", "--out-train", &tr, "--out-test", &te, "--dim", "100", "--samples", "600", "--test-samples", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (tr, te)
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = TempDir::new().unwrap();
    let (tr, te) = synth(dir.path());
    let model = p(dir.path(), "m.txt");
    let trace = p(dir.path(), "trace.csv");
    let o = shfm(&["train", "--train", &tr, "--test", &te, "--epochs", "2", "--out", &model, "--trace", &trace]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("epoch,step,train_loss,test_loss,rmse,mae,sparsity"));
    assert_eq!(csv.lines().count(), 3);

    let o = shfm(&["evaluate", "--model", &model, "--data", &te]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("rmse"));

    let pred1 = p(dir.path(), "p1.txt");
    let pred2 = p(dir.path(), "p2.txt");
    assert!(shfm(&["predict", "--model", &model, "--data", &te, "--out", &pred1]).status.success());
    let model2 = p(dir.path(), "m2.txt");
    assert!(shfm(&["train", "--train", &tr, "--test", &te, "--epochs", "2", "--out", &model2]).status.success());
    assert!(shfm(&["predict", "--model", &model2, "--data", &te, "--out", &pred2]).status.success());
    let a = fs::read(&pred1).unwrap();
    assert_eq!(a, fs::read(&pred2).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 200);
}

#[test]
fn saved_state_round_trips_bytes() {
    let dir = TempDir::new().unwrap();
    let (tr, _) = synth(dir.path());
    let model = p(dir.path(), "m.txt");
    let o = shfm(&["train", "--train", &tr, "--epochs", "1", "--model", "sha2", "--k", "3", "--out", &model, "--save-state"]);
    assert!(o.status.success());
    let text = fs::read_to_string(&model).unwrap();
    assert!(text.lines().any(|l| l.starts_with("z ")));
    let (m, st) = shfm_kit::read_model(&text).unwrap();
    assert_eq!(shfm_kit::write_model(&m, st.as_ref()), text);
}

#[test]
fn classification_predictions_list_class_and_scores() {
    let dir = TempDir::new().unwrap();
    let (tr, te) = (p(dir.path(), "tr.svm"), p(dir.path(), "te.svm"));
    let o = shfm(&["synth", "--task", "classification", "--classes", "3", "--out-train", &tr, "--out-test", &te, "--dim", "80", "--samples", "400", "--test-samples", "100"]);
    assert!(o.status.success());
    let model = p(dir.path(), "m.txt");
    assert!(shfm(&["train", "--task", "classification", "--train", &tr, "--epochs", "1", "--out", &model]).status.success());
    let o = shfm(&["predict", "--model", &model, "--data", &te]);
    let out = String::from_utf8(o.stdout).unwrap();
    let first: Vec<&str> = out.lines().next().unwrap().split(' ').collect();
    assert_eq!(first.len(), 4);
    assert!(first[0].parse::<usize>().unwrap() < 3);
}

#[test]
fn evaluate_with_wrong_dimension_exits_2() {
    let dir = TempDir::new().unwrap();
    let (tr, _) = synth(dir.path());
    let model = p(dir.path(), "m.txt");
    assert!(shfm(&["train", "--train", &tr, "--epochs", "1", "--out", &model]).status.success());
    let wide = p(dir.path(), "wide.svm");
    fs::write(&wide, "1.0 5000:1\n").unwrap();
    let o = shfm(&["evaluate", "--model", &model, "--data", &wide]);
    assert_eq!(o.status.code(), Some(2));
    one_line_stderr(&o);
}

#[test]
fn audit_rejects_flat_models() {
    let dir = TempDir::new().unwrap();
    let (tr, _) = synth(dir.path());
    let model = p(dir.path(), "fm.txt");
    assert!(shfm(&["train", "--train", &tr, "--epochs", "1", "--model", "fm", "--out", &model]).status.success());
    let o = shfm(&["audit", "--model", &model]);
    assert_eq!(o.status.code(), Some(1));
    assert!(one_line_stderr(&o).contains("hierarchical model required"));

    let hier = p(dir.path(), "shfm.txt");
    assert!(shfm(&["train", "--train", &tr, "--epochs", "1", "--out", &hier]).status.success());
    let o = shfm(&["audit", "--model", &hier, "--exhaustive"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("violating_pairs="));
}

#[test]
fn usage_errors_exit_1() {
    let o = shfm(&["train", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    one_line_stderr(&o);
    assert_eq!(shfm(&["frobnicate"]).status.code(), Some(1));
    let o = shfm(&["train", "--train", "x", "--out", "y", "--epochs", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_data_exits_2() {
    let dir = TempDir::new().unwrap();
    let bad = p(dir.path(), "bad.svm");
    fs::write(&bad, "1.0 3:1 2:1\n").unwrap();
    let o = shfm(&["train", "--train", &bad, "--out", &p(dir.path(), "m")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(one_line_stderr(&o).contains("line 1"));
    let o = shfm(&["evaluate", "--model", &p(dir.path(), "missing"), "--data", &bad]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_finite_training_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = p(dir.path(), "huge.svm");
    fs::write(&data, "1e300 1:1\n1e300 1:1\n").unwrap();
    let o = shfm(&["train", "--train", &data, "--model", "linear", "--out", &p(dir.path(), "m")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(one_line_stderr(&o).contains("batch 0"));
}

#[test]
fn grid_search_writes_traces_and_ranking() {
    let dir = TempDir::new().unwrap();
    let (tr, te) = synth(dir.path());
    let cfg = p(dir.path(), "grid.cfg");
    fs::write(&cfg, "# two points\nl1=1e-4,1e-2\nk=4\nepochs=1\n").unwrap();
    let out = dir.path().join("grid");
    let best = p(dir.path(), "best.txt");
    let o = shfm(&["grid-search", "--train", &tr, "--test", &te, "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--out", &best]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let traces = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("trace_")).count();
    assert_eq!(traces, 2);
    let ranking = String::from_utf8(o.stdout).unwrap();
    let rmse: Vec<f64> = ranking
        .lines()
        .map(|l| l.split(' ').find_map(|t| t.strip_prefix("rmse=")).unwrap().parse().unwrap())
        .collect();
    assert!(rmse[0] <= rmse[1]);
    assert!(Path::new(&best).exists());

    fs::write(&cfg, "l1=\n").unwrap();
    let o = shfm(&["grid-search", "--train", &tr, "--test", &te, "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    fs::write(&cfg, "eta=1\n").unwrap();
    assert_eq!(shfm(&["grid-search", "--train", &tr, "--test", &te, "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn encode_turns_fields_into_libsvm() {
    let dir = TempDir::new().unwrap();
    let csv = p(dir.path(), "f.csv");
    fs::write(&csv, "label,user,count\n1,a,3\n0,b,\n1,a,2\n").unwrap();
    let out = p(dir.path(), "f.svm");
    let o = shfm(&["encode", "--csv", &csv, "--label", "label", "--numeric", "count", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().next().unwrap(), "1 1:1 3:3");
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_shfm"))
        .args(["audit", "--model", "x"])
        .env("SHFM_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
