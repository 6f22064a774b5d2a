use std::path::Path;
use std::process::{Command, Output};

use bignn::harness::results::{deterministic_csv, load_results};
use bignn::{GaussianClassModel, RngStream};

fn bignn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bignn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_SIM1: &str = r#"{"n_grid": [300, 600], "gamma_grid": [0.0, 0.2], "replications": 4, "test_size": {"fixed": 200}}"#;

#[test]
fn sim1_writes_deterministic_results_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL_SIM1);
    for out in ["a.csv", "b.csv"] {
        let res = bignn(&["sim1", "--config", &cfg, "--seed", "11", "--out", out, "--threads", "2"], dir.path());
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let stdout = String::from_utf8_lossy(&res.stdout);
        assert!(stdout.starts_with("value_kind,slope,stderr,correlation,intercepts"));
    }
    let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(text.starts_with("method,N,gamma,theta,I,k,rep,risk,regret,cis,train_ms,predict_ms,seed\n"));
    let a = load_results(&dir.path().join("a.csv")).unwrap();
    let b = load_results(&dir.path().join("b.csv")).unwrap();
    assert_eq!(a.len(), 2 * 2 * 4);
    assert_eq!(deterministic_csv(&a).unwrap(), deterministic_csv(&b).unwrap());
    assert!(a.iter().all(|r| r.seed == 11));

    let fit = bignn(&["fit-rate", "a.csv", "--out", "fit.csv"], dir.path());
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    let fit = std::fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    let lines: Vec<&str> = fit.lines().collect();
    assert_eq!(lines[0], "value_kind,slope,stderr,correlation,intercepts");
    assert!(lines[1].starts_with("regret,") && lines[2].starts_with("cis,"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write(dir.path(), "bad.json", r#"{"replicatons": 3}"#);
    let bad_gamma = write(dir.path(), "gamma.json", r#"{"gamma_grid": [1.5]}"#);
    let too_big_k = write(dir.path(), "k.json", r#"{"n_grid": [100], "gamma_grid": [0.9], "k": 5}"#);
    let wrong_kind = write(dir.path(), "kind.json", r#"{"preset": "sim3-desk"}"#);
    let sim2_gamma = write(dir.path(), "s2.json", r#"{"gamma_grid": [0.1, 0.3], "alpha": 0.1}"#);
    let small = write(dir.path(), "small.json", SMALL_SIM1);
    for args in [
        vec!["sim1", "--config", bad_key.as_str()],
        vec!["sim1", "--config", bad_gamma.as_str()],
        vec!["sim2", "--config", too_big_k.as_str()],
        vec!["sim1", "--config", wrong_kind.as_str()],
        vec!["sim2", "--config", sim2_gamma.as_str()],
        vec!["sim1", "--config", "does-not-exist.json"],
        vec!["sim1", "--preset", "nope"],
        vec!["sim1", "--threads", "0", "--config", small.as_str()],
        vec!["sim1", "--bogus-flag"],
    ] {
        let res = bignn(&args, dir.path());
        assert_eq!(code(&res), 2, "{args:?}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert!(!dir.path().join("sim1_results.csv").exists());
}

fn labeled_csv(dir: &Path, n: usize) -> String {
    let data = GaussianClassModel::sim1(3)
        .sample(n, &mut RngStream::new(5, "cli", 0))
        .unwrap();
    let mut text = String::from("x1,x2,x3,y\n");
    for i in 0..data.len() {
        let f = data.features(i);
        text.push_str(&format!("{},{},{},{}\n", f[0], f[1], f[2], data.label(i)));
    }
    write(dir, "data.csv", &text)
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = labeled_csv(dir.path(), 400);
    let res = bignn(&["train", &data, "--gamma", "0.3", "--k", "3", "--theta", "0.8", "--out", "model.json"], dir.path());
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let saved = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    assert!(saved.contains("\"bignn-model\"") && saved.contains("\"denoised\""));

    write(dir.path(), "q.csv", "a,b,c\n0,0,0\n1,1,1\n0.5,0.5,0.5\n");
    let res = bignn(&["predict", "--model", "model.json", "q.csv", "--out", "p.csv"], dir.path());
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let preds = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let lines: Vec<&str> = preds.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "label");
    assert!(lines[1..].iter().all(|l| *l == "0" || *l == "1"));
    // the class means sit deep inside their own class
    assert_eq!(lines[1], "0");
    assert_eq!(lines[2], "1");

    write(dir.path(), "bad.csv", "0,0,0\n1,x,1\n");
    let res = bignn(&["predict", "--model", "model.json", "bad.csv"], dir.path());
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
    write(dir.path(), "narrow.csv", "0,0\n");
    assert_eq!(code(&bignn(&["predict", "--model", "model.json", "narrow.csv"], dir.path())), 3);
    assert_eq!(code(&bignn(&["predict", "--model", "missing.json", "q.csv"], dir.path())), 3);
    write(dir.path(), "junk.json", "{\"format\": \"other\"}");
    assert_eq!(code(&bignn(&["predict", "--model", "junk.json", "q.csv"], dir.path())), 3);
}

#[test]
fn real_run_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = labeled_csv(dir.path(), 600);
    let cfg = write(
        dir.path(),
        "real.json",
        r#"{"replications": 2, "k_grid": [1, 3, 5, 7], "gamma_grid": [0.1, 0.3]}"#,
    );
    let res = bignn(&["real", "--config", &cfg, "--data", &data, "--out", "r.csv", "--seed", "2"], dir.path());
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.starts_with("gamma,oracle_risk,bignn_risk,oracle_cis,bignn_cis,speedup"));
    assert_eq!(stdout.lines().count(), 3);
    let rows = load_results(&dir.path().join("r.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 3);
    // test split min(1000, 600/5) = 120 leaves 480 training points; s = round(480^0.3) = 6
    let oracle_k = rows.iter().find(|r| r.method == "oracle_knn" && r.rep == 0).unwrap().k;
    let local_k = rows.iter().find(|r| r.method == "bignn" && r.rep == 0 && r.gamma == 0.3).unwrap().k;
    assert_eq!(local_k, ((oracle_k as f64 / 6.0).round() as usize).max(1));

    let missing = bignn(&["real", "--config", &cfg, "--data", "nope.csv"], dir.path());
    assert_eq!(code(&missing), 3);
    let bad = write(dir.path(), "bad.csv", "1,2,0\n3,oops,1\n");
    let res = bignn(&["real", "--config", &cfg, "--data", &bad], dir.path());
    assert_eq!(code(&res), 3);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("line 2") && stderr.contains("column 2"), "{stderr}");
    let nonbinary = write(dir.path(), "labels.csv", "1,2,0\n3,4,2\n");
    assert_eq!(code(&bignn(&["real", "--config", &cfg, "--data", &nonbinary], dir.path())), 3);

    let tiny = write(dir.path(), "tiny.csv", "1,2,0\n3,4,1\n5,6,0\n7,8,1\n");
    let res = bignn(&["real", "--config", &cfg, "--data", &tiny], dir.path());
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
}
