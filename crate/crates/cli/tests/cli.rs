use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOY: &[&str] = &[
    "--set",
    "dataset.kind=toy",
    "--set",
    "dataset.features=2",
    "--set",
    "dataset.relevant=1",
    "--set",
    "dataset.classes=2",
    "--set",
    "dataset.instances=2000",
    "--set",
    "model.hidden=[16]",
    "--set",
    "train.epochs=20",
    "--set",
    "train.learning_rate=0.01",
];

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxent-ig"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("MAXENT_IG_OUT")
        .output()
        .expect("binary runs")
}

fn toy(cmd: &str, extra: &[&str], out: &Path) -> Output {
    let mut args = vec![cmd];
    args.extend_from_slice(TOY);
    args.extend_from_slice(extra);
    run(&args, out)
}

#[test]
fn toy_training_is_perfect_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = toy("train", &[], &dir.path().join("a"));
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let stdout = String::from_utf8(a.stdout).unwrap();
    assert!(stdout.contains("test accuracy: 1.0000"), "{stdout}");
    let b = toy("train", &[], &dir.path().join("b"));
    assert!(b.status.success());
    let model = |d: &str| fs::read(dir.path().join(d).join("train/model.bin")).unwrap();
    assert_eq!(model("a"), model("b"));
}

#[test]
fn archived_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out = toy(
        "sweep",
        &["--set", "sweep.grid=21", "--set", "sweep.instances=4", "--set", "explainer.ig_steps=20"],
        &first,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let archived = first.join("sweep/config.toml");
    let second = dir.path().join("second");
    let again = run(&["sweep", "--config", archived.to_str().unwrap()], &second);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    for f in ["loss_curve.csv", "entropy_curve.csv", "histogram.csv", "argmins.csv"] {
        let a = fs::read(first.join("sweep").join(f)).unwrap();
        let b = fs::read(second.join("sweep").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn zero_baseline_dump_is_all_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let out = toy("baseline", &["--set", "baselines.kinds=[\"zero\", \"max_entropy_full\"]"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let raw = fs::read(dir.path().join("baseline/dumps/zero.f64")).unwrap();
    assert_eq!(raw.len(), 2 * 8);
    assert!(raw.iter().all(|&b| b == 0));
    let table = fs::read_to_string(dir.path().join("baseline/entropy.csv")).unwrap();
    let entropy: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(entropy[1] >= entropy[0]);
    assert!(entropy.iter().all(|&h| h <= 2f64.ln() + 1e-12));
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = toy("train", &["--seed", "1"], &dir.path().join("a"));
    let b = toy("train", &["--seed", "2"], &dir.path().join("b"));
    assert!(a.status.success() && b.status.success());
    let model = |d: &str| fs::read(dir.path().join(d).join("train/model.bin")).unwrap();
    assert_ne!(model("a"), model("b"));
    let cfg = fs::read_to_string(dir.path().join("a/train/config.toml")).unwrap();
    assert!(cfg.contains("seed = 1"), "{cfg}");
}

#[test]
fn exit_codes_separate_config_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(
        &[
            "train",
            "--set",
            "dataset.kind=idx",
            "--set",
            "dataset.train_images=/nonexistent/a",
            "--set",
            "dataset.train_labels=/nonexistent/b",
            "--set",
            "dataset.test_images=/nonexistent/c",
            "--set",
            "dataset.test_labels=/nonexistent/d",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));

    let unknown = run(&["train", "--set", "model.depth=3"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));

    let junk = dir.path().join("junk.idx");
    fs::write(&junk, b"not an idx file").unwrap();
    let j = junk.to_str().unwrap();
    let set = |k: &str| format!("dataset.{k}={j}");
    let (a, b, c, d) = (set("train_images"), set("train_labels"), set("test_images"), set("test_labels"));
    let corrupt = run(
        &["train", "--set", "dataset.kind=idx", "--set", &a, "--set", &b, "--set", &c, "--set", &d],
        dir.path(),
    );
    assert_eq!(corrupt.status.code(), Some(3), "{}", String::from_utf8_lossy(&corrupt.stderr));
}

#[test]
fn evaluate_writes_summary_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = toy(
        "evaluate",
        &[
            "--set",
            "evaluate.instances=20",
            "--set",
            "evaluate.methods=[\"random\", \"vanilla\", \"ig:zero\"]",
            "--set",
            "baselines.params.ascent_steps=100",
            "--jobs",
            "1",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("evaluate/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("statistic,random,vanilla,ig:zero"));
    assert_eq!(lines.map(|l| l.split(',').next().unwrap()).collect::<Vec<_>>(), ["mean", "median", "variance"]);
    let cell = fs::read_to_string(dir.path().join("evaluate/cell_ig_zero.csv")).unwrap();
    assert_eq!(cell.lines().count(), 21);
}
