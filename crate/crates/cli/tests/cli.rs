use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sfda::classifier::classify_batch;
use sfda::{fit, FitParams, Kappa, LabeledDataset, Variant};

fn sfda_cmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfda"))
        .args(args)
        .env_remove("SFDA_THREADS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_simulation(dir: &Path) -> PathBuf {
    let out = dir.join("sim");
    let o = sfda_cmd(&[
        "simulate",
        "--model",
        "sim1",
        "--sigma2",
        "1",
        "--seed",
        "11",
        "--p",
        "40",
        "--n-total",
        "300",
        "--n-train",
        "90",
        "--out-dir",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read_predictions(path: &Path) -> Vec<usize> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,predicted"));
    lines
        .enumerate()
        .map(|(i, l)| {
            let (row, label) = l.split_once(',').unwrap();
            assert_eq!(row.parse::<usize>().unwrap(), i);
            label.parse().unwrap()
        })
        .collect()
}

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = sfda_cmd(&[
            "simulate",
            "--model",
            "sim2",
            "--sigma2",
            "2",
            "--seed",
            "3",
            "--out-dir",
            s(d),
        ]);
        assert!(o.status.success());
    }
    for name in ["train.csv", "test.csv", "truth.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn fit_predict_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_simulation(dir.path());
    let model = dir.path().join("model.json");
    let preds = dir.path().join("pred.csv");
    let o = sfda_cmd(&[
        "fit",
        "--train",
        s(&sim.join("train.csv")),
        "--out",
        s(&model),
        "--tau",
        "0.5",
        "--lambda",
        "0.3",
        "--kappa",
        "0.05",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = sfda_cmd(&[
        "predict",
        "--model",
        s(&model),
        "--input",
        s(&sim.join("train.csv")),
        "--out",
        s(&preds),
    ]);
    assert!(o.status.success());

    let train = LabeledDataset::read_csv_path(sim.join("train.csv")).unwrap();
    let params = FitParams::new(0.5, 0.3, Kappa::Relative(0.05), Variant::Thresholded).unwrap();
    let expected = classify_batch(&fit(&train, &params).unwrap(), train.observations()).unwrap();
    assert_eq!(read_predictions(&preds), expected);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_simulation(dir.path());
    let train = sim.join("train.csv");
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let table = dir.path().join(format!("cv{threads}.csv"));
        let model = dir.path().join(format!("model{threads}.json"));
        let preds = dir.path().join(format!("pred{threads}.csv"));
        let o = sfda_cmd(&[
            "--threads",
            threads,
            "cv",
            "--train",
            s(&train),
            "--out",
            s(&table),
            "--seed",
            "2",
            "--taus",
            "0.1,1",
            "--lambdas",
            "0.1,0.5",
            "--kappas",
            "0,0.05",
            "--model-out",
            s(&model),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = sfda_cmd(&[
            "--threads",
            threads,
            "predict",
            "--model",
            s(&model),
            "--input",
            s(&sim.join("test.csv")),
            "--out",
            s(&preds),
        ]);
        assert!(o.status.success());
        tables.push((fs::read(&table).unwrap(), fs::read(&preds).unwrap()));
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(String::from_utf8_lossy(&tables[0].0).lines().count(), 9);
}

#[test]
fn exit_codes_and_cleanup() {
    let dir = tempfile::tempdir().unwrap();
    let sim = small_simulation(dir.path());
    let model = dir.path().join("m.json");

    let o = sfda_cmd(&[
        "fit",
        "--train",
        s(&sim.join("train.csv")),
        "--out",
        s(&model),
        "--tau",
        "-1",
        "--lambda",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[invalid_parameter]"));
    assert!(!model.exists());

    let o = sfda_cmd(&[
        "fit",
        "--train",
        s(&dir.path().join("missing.csv")),
        "--out",
        s(&model),
        "--tau",
        "1",
        "--lambda",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[io_error]"));

    let train = sim.join("train.csv");
    let o = sfda_cmd(&[
        "fit",
        "--train",
        s(&train),
        "--out",
        s(&train),
        "--tau",
        "1",
        "--lambda",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(train.exists());

    // The second record is malformed, so the partially written output must go.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,1,2,3,4\n2,1,nan,3,4\n").unwrap();
    let feats = dir.path().join("feats.csv");
    let o = sfda_cmd(&[
        "featurize",
        "--input",
        s(&bad),
        "--channels",
        "2",
        "--coeffs",
        "2",
        "--out",
        s(&feats),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[non_finite]"));
    assert!(!feats.exists());
}

#[test]
fn featurize_sample_file() {
    let dir = tempfile::tempdir().unwrap();
    let sample =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples/multichannel_sample.csv");
    let out = dir.path().join("features.csv");
    let o = sfda_cmd(&[
        "featurize",
        "--input",
        s(&sample),
        "--channels",
        "3",
        "--coeffs",
        "16",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = LabeledDataset::read_csv_path(&out).unwrap();
    assert_eq!((data.n(), data.p(), data.k()), (8, 48, 2));
}

#[test]
fn diagnose_reports_identities_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trend.csv");
    let o = sfda_cmd(&[
        "diagnose",
        "--seed",
        "1",
        "--p",
        "20",
        "--n",
        "90,360",
        "--reps",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("metric_residual="));
    let table = fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("n,tau,s_n,lambda_p"));
}
