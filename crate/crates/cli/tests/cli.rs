use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scm"))
        .args(args)
        .output()
        .expect("run scm")
}

fn ok(args: &[&str]) -> String {
    let out = scm(args);
    assert!(
        out.status.success(),
        "scm {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn value<'a>(report: &'a str, key: &str) -> &'a str {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{report}"))
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn gen_data_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let db1 = dir.path().join("db1");
    ok(&["gen-data", "db1", "--seed", "4", "--out", p(&db1)]);
    assert_eq!(
        line_count(&db1.join("train.csv")) + line_count(&db1.join("test.csv")),
        1300 + 2
    );
    assert!(fs::read_to_string(db1.join("manifest.txt"))
        .unwrap()
        .contains("rows=1300\n"));

    let db2 = dir.path().join("db2");
    ok(&["gen-data", "db2", "--scale", "0.1", "--out", p(&db2)]);
    assert_eq!(line_count(&db2.join("train.csv")), 4000 + 1);
    assert_eq!(line_count(&db2.join("test.csv")), 67 * 67 + 1);
}

#[test]
fn train_eval_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "db1", "--seed", "2", "--out", p(&data)]);
    let model = dir.path().join("m.scmb");
    let log = dir.path().join("train.log");
    let summary = ok(&[
        "train",
        "--data",
        p(&data.join("train.csv")),
        "--encoding",
        "s2v2",
        "--nodes",
        "60",
        "--act",
        "step",
        "--t-max",
        "200",
        "--seed",
        "2",
        "--out",
        p(&model),
        "--log",
        p(&log),
    ]);
    let nodes: usize = value(&summary, "nodes").parse().unwrap();
    assert!((1..=60).contains(&nodes));
    let log_text = fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("layer=0 node=0 "));

    let samples = dir.path().join("samples.csv");
    let eval = ok(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data.join("test.csv")),
        "--out",
        p(&samples),
    ]);
    assert_eq!(value(&eval, "rows"), "300");
    assert_eq!(value(&eval, "within_bound"), "true");
    let diff: f64 = value(&eval, "rmse_difference").parse().unwrap();
    assert!(diff < 1e-4);
    let text = fs::read_to_string(&samples).unwrap();
    assert_eq!(text.lines().next().unwrap(), "row,y,y_pc,y_fpga,y_fpga_raw");
    assert_eq!(text.lines().count(), 301);

    let pc_only = ok(&[
        "eval",
        "--model",
        p(&model),
        "--data",
        p(&data.join("test.csv")),
        "--mode",
        "pc",
    ]);
    assert!(pc_only.contains("rmse_pc=") && !pc_only.contains("rmse_fpga="));

    let report = ok(&["report", "--model", p(&model)]);
    assert_eq!(value(&report, "cycles"), "9");
    assert_eq!(value(&report, "time_ns"), "90");
    assert_eq!(value(&report, "input_reduction_pct"), "60.9375");
    assert_eq!(value(&report, "output_weight_reduction_pct"), "50");
    let fast = ok(&["report", "--model", p(&model), "--clock-mhz", "200"]);
    assert_eq!(value(&fast, "time_ns"), "45");
}

#[test]
fn deep_and_mechanism_only_models() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "db1", "--seed", "6", "--out", p(&data)]);
    let train_csv = data.join("train.csv");
    let deep = dir.path().join("deep.scmb");
    let summary = ok(&[
        "train",
        "--data",
        p(&train_csv),
        "--layers",
        "40,40,40",
        "--act",
        "sign,sign,sign",
        "--t-max",
        "100",
        "--out",
        p(&deep),
    ]);
    assert!(value(&summary, "layers").parse::<usize>().unwrap() >= 1);

    let mech = dir.path().join("mech.scmb");
    let summary = ok(&[
        "train",
        "--data",
        p(&train_csv),
        "--nodes",
        "0",
        "--out",
        p(&mech),
    ]);
    assert_eq!(value(&summary, "layers"), "0");
    let eval = ok(&[
        "eval",
        "--model",
        p(&mech),
        "--data",
        p(&data.join("test.csv")),
    ]);
    let delta: f64 = value(&eval, "max_abs_delta").parse().unwrap();
    assert!(delta <= 26.0 * 2f64.powi(-25));
}

#[test]
fn external_mechanism_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "db1", "--seed", "1", "--out", p(&data)]);
    let mech_csv = dir.path().join("mech.csv");
    let mut text = String::from("y\n");
    for i in 0..25 {
        text.push_str(&format!("{}\n", 0.001 * i as f64));
    }
    text.push_str("0.05\n");
    fs::write(&mech_csv, text).unwrap();
    let model = dir.path().join("m.scmb");
    ok(&[
        "train",
        "--data",
        p(&data.join("train.csv")),
        "--mechanism",
        p(&mech_csv),
        "--nodes",
        "5",
        "--t-max",
        "50",
        "--out",
        p(&model),
    ]);
    let exported = ok(&["export", "--model", p(&model)]);
    assert!(exported.contains("\nsource external\n"));

    fs::write(&mech_csv, "y\n0.1\n").unwrap();
    let out = scm(&[
        "train",
        "--data",
        p(&data.join("train.csv")),
        "--mechanism",
        p(&mech_csv),
        "--out",
        p(&model),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen-data", "db1", "--out", p(&data)]);
    let train_csv = data.join("train.csv");
    let model = dir.path().join("m.scmb");

    assert_eq!(scm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        scm(&["train", "--data", p(&train_csv)]).status.code(),
        Some(2)
    );
    let bad_r = scm(&[
        "train",
        "--data",
        p(&train_csv),
        "--r",
        "0.99,0.9",
        "--out",
        p(&model),
    ]);
    assert_eq!(bad_r.status.code(), Some(2));
    let bad_act = scm(&[
        "train",
        "--data",
        p(&train_csv),
        "--layers",
        "3,3,3",
        "--act",
        "sign,step",
        "--out",
        p(&model),
    ]);
    assert_eq!(bad_act.status.code(), Some(2));

    let missing = scm(&[
        "train",
        "--data",
        p(&dir.path().join("nope.csv")),
        "--out",
        p(&model),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let no_target = scm(&[
        "train",
        "--data",
        p(&train_csv),
        "--target",
        "z",
        "--out",
        p(&model),
    ]);
    assert_eq!(no_target.status.code(), Some(3));

    // A constant target leaves nothing for hidden nodes to learn.
    let flat = dir.path().join("flat.csv");
    fs::write(&flat, "x,y\n0.1,1\n0.5,1\n0.9,1\n0.3,1\n0.7,1\n").unwrap();
    let out = scm(&[
        "train",
        "--data",
        p(&flat),
        "--val-fraction",
        "0",
        "--out",
        p(&model),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    ok(&[
        "train",
        "--data",
        p(&train_csv),
        "--nodes",
        "3",
        "--t-max",
        "20",
        "--out",
        p(&model),
    ]);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x,y\n").unwrap();
    assert_eq!(
        scm(&["eval", "--model", p(&model), "--data", p(&empty)])
            .status
            .code(),
        Some(3)
    );

    let wide = dir.path().join("wide.csv");
    fs::write(&wide, "a,b,y\n0.1,0.2,1\n").unwrap();
    let mismatch = scm(&["eval", "--model", p(&model), "--data", p(&wide)]);
    assert_eq!(mismatch.status.code(), Some(3));

    let mut bytes = fs::read(&model).unwrap();
    bytes.truncate(bytes.len() - 3);
    let broken = dir.path().join("broken.scmb");
    fs::write(&broken, bytes).unwrap();
    let out = scm(&["report", "--model", p(&broken)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}
