use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_nisac");

fn nisac(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn nisac")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn checksum(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn gen(&self, tag: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
        let (tr, te) = (
            self.path(&format!("{tag}.train.nisd")),
            self.path(&format!("{tag}.test.nisd")),
        );
        let mut args = vec![
            "gen",
            "--n-train",
            "64",
            "--n-test",
            "32",
            "--L",
            "20",
            "--seed",
            "0",
            "--out-train",
            s(&tr),
            "--out-test",
            s(&te),
        ];
        args.extend_from_slice(extra);
        let out = nisac(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (tr, te)
    }

    fn train(&self, data: &Path, model: &Path, log: &Path, extra: &[&str]) -> Output {
        let mut args = vec![
            "train",
            "--train",
            s(data),
            "--model-out",
            s(model),
            "--log",
            s(log),
            "--epochs",
            "2",
            "--hidden",
            "4",
        ];
        args.extend_from_slice(extra);
        nisac(&args)
    }
}

#[test]
fn gen_writes_two_files_and_summary() {
    let f = Fixture::new();
    let (tr, te) = f.gen("a", &[]);
    assert!(tr.exists() && te.exists());
    let out = nisac(&[
        "gen",
        "--n-train",
        "8",
        "--n-test",
        "4",
        "--L",
        "20",
        "--Lb",
        "2",
        "--out-train",
        s(&f.path("x")),
        "--out-test",
        s(&f.path("y")),
    ]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    assert!(
        stdout.contains("8 examples") && stdout.contains("L_b=2"),
        "{stdout}"
    );
}

#[test]
fn gen_is_reproducible() {
    let f = Fixture::new();
    let (a_tr, a_te) = f.gen("a", &[]);
    let (b_tr, b_te) = f.gen("b", &[]);
    assert_eq!(checksum(&a_tr), checksum(&b_tr));
    assert_eq!(checksum(&a_te), checksum(&b_te));
    assert_ne!(checksum(&a_tr), checksum(&a_te));
}

#[test]
fn gen_usage_errors() {
    let f = Fixture::new();
    let missing = nisac(&["gen", "--n-train", "4", "--out-train", s(&f.path("t"))]);
    assert_eq!(code(&missing), 2);
    assert_eq!(code(&nisac(&["gen", "--Lb", "zero"])), 2);
    assert_eq!(code(&nisac(&["bogus"])), 2);
    let bad_mode = nisac(&[
        "gen",
        "--mode",
        "ssac",
        "--alpha",
        "1.5",
        "--out-train",
        s(&f.path("t")),
        "--out-test",
        s(&f.path("u")),
    ]);
    assert_eq!(code(&bad_mode), 2);
}

#[test]
fn gen_unwritable_output_is_io_error() {
    let f = Fixture::new();
    let out = nisac(&[
        "gen",
        "--n-train",
        "4",
        "--n-test",
        "4",
        "--L",
        "4",
        "--out-train",
        "/nonexistent/dir/t.nisd",
        "--out-test",
        s(&f.path("u")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn train_log_and_eval_row() {
    let f = Fixture::new();
    let (tr, te) = f.gen("a", &[]);
    let (model, log) = (f.path("m.nism"), f.path("log.csv"));
    let out = f.train(&tr, &model, &log, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let rows = csv_rows(&log);
    assert_eq!(
        rows[0],
        [
            "seed",
            "mode",
            "network",
            "epoch",
            "comm_loss",
            "sense_loss",
            "total_loss",
            "train_throughput",
            "train_det_error"
        ]
    );
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][3], "2");

    let eval = |out: &Path| {
        let o = nisac(&[
            "eval",
            "--model",
            s(&model),
            "--data",
            s(&te),
            "--out",
            s(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        csv_rows(out)
    };
    let first = eval(&f.path("e1.csv"));
    assert_eq!(first.len(), 2);
    let header = &first[0];
    assert_eq!(
        &header[header.len() - 3..],
        ["throughput", "detection_error", "mean_spike_count"]
    );
    assert_eq!(header[0], "seed");
    let metrics: Vec<f64> = first[1][header.len() - 3..]
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((0.0..=1.0).contains(&metrics[0]) && (0.0..=1.0).contains(&metrics[1]));
    assert_eq!(checksum(&f.path("e1.csv")), {
        eval(&f.path("e2.csv"));
        checksum(&f.path("e2.csv"))
    });
}

#[test]
fn train_rejects_bad_beta_and_missing_data() {
    let f = Fixture::new();
    let (tr, _) = f.gen("a", &[]);
    let out = f.train(&tr, &f.path("m"), &f.path("l"), &["--beta", "1.2"]);
    assert_eq!(code(&out), 2);
    assert!(!f.path("m").exists());
    let out = f.train(&f.path("missing.nisd"), &f.path("m"), &f.path("l"), &[]);
    assert_eq!(code(&out), 3);
}

#[test]
fn train_rejects_split_mismatch() {
    let f = Fixture::new();
    let (tr, _) = f.gen("a", &[]);
    let out = f.train(&tr, &f.path("m"), &f.path("l"), &["--mode", "ssac"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ssac_writes_two_models() {
    let f = Fixture::new();
    let (tr, te) = f.gen("s", &["--mode", "ssac", "--alpha", "0.5"]);
    let model = f.path("m.nism");
    let log = f.path("log.csv");
    let out = f.train(&tr, &model, &log, &["--mode", "ssac", "--alpha", "0.5"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let sense = f.path("m.sense.nism");
    assert!(model.exists() && sense.exists());
    assert_ne!(checksum(&model), checksum(&sense));
    let networks: Vec<String> = csv_rows(&log)[1..].iter().map(|r| r[2].clone()).collect();
    assert_eq!(networks, ["comm", "comm", "sense", "sense"]);

    let e = f.path("e.csv");
    let o = nisac(&[
        "eval",
        "--model",
        s(&model),
        "--sense-model",
        s(&sense),
        "--data",
        s(&te),
        "--out",
        s(&e),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&e);
    assert_eq!(rows[1][1], "ssac");
    let throughput: f64 = rows[1][rows[0].len() - 3].parse().unwrap();
    assert!(throughput <= 0.5);
}

#[test]
fn eval_rejects_bandwidth_mismatch() {
    let f = Fixture::new();
    let (tr, _) = f.gen("a", &[]);
    let (_, te4) = f.gen("b", &["--Lb", "4"]);
    let model = f.path("m.nism");
    assert_eq!(code(&f.train(&tr, &model, &f.path("l"), &[])), 0);
    let out = nisac(&["eval", "--model", s(&model), "--data", s(&te4)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("L_b"));
}

#[test]
fn eval_rejects_corrupt_model() {
    let f = Fixture::new();
    let (_, te) = f.gen("a", &[]);
    let bad = f.path("bad.nism");
    std::fs::write(&bad, b"NOPE").unwrap();
    assert_eq!(
        code(&nisac(&["eval", "--model", s(&bad), "--data", s(&te)])),
        3
    );
}

#[test]
fn sweep_rows_per_grid_point() {
    let f = Fixture::new();
    let out_path = f.path("sweep.csv");
    let base = [
        "sweep",
        "--n-train",
        "32",
        "--n-test",
        "16",
        "--L",
        "10",
        "--epochs",
        "1",
        "--hidden",
        "3",
    ];
    let mut args = base.to_vec();
    args.extend([
        "--param",
        "beta",
        "--values",
        "0.1,0.5,0.9",
        "--out",
        s(&out_path),
    ]);
    let o = nisac(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out_path);
    assert_eq!(rows.len(), 4);
    let beta_col = rows[0].iter().position(|c| c == "beta").unwrap();
    let betas: Vec<&str> = rows[1..].iter().map(|r| r[beta_col].as_str()).collect();
    assert_eq!(betas, ["0.1", "0.5", "0.9"]);

    let lb_path = f.path("lb.csv");
    let mut args = base.to_vec();
    args.extend([
        "--param",
        "lb",
        "--values",
        "1,2",
        "--modes",
        "isac,ssac",
        "--out",
        s(&lb_path),
    ]);
    let o = nisac(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&lb_path);
    assert_eq!(rows.len(), 5);
    let mode_col = rows[0].iter().position(|c| c == "mode").unwrap();
    let modes: Vec<&str> = rows[1..].iter().map(|r| r[mode_col].as_str()).collect();
    assert_eq!(modes, ["isac", "ssac", "isac", "ssac"]);
}

#[test]
fn sweep_empty_grid_is_usage_error() {
    assert_eq!(
        code(&nisac(&["sweep", "--param", "beta", "--values", ""])),
        2
    );
    assert_eq!(code(&nisac(&["sweep", "--param", "beta"])), 2);
    assert_eq!(
        code(&nisac(&["sweep", "--param", "lb", "--values", "1.5"])),
        2
    );
}

#[test]
fn trace_pattern_shapes() {
    let f = Fixture::new();
    let (tr, _) = f.gen("a", &[]);
    let model = f.path("m.nism");
    assert_eq!(code(&f.train(&tr, &model, &f.path("l"), &[])), 0);

    let run = |extra: &[&str], name: &str| {
        let out = f.path(name);
        let mut args = vec!["trace", "--model", s(&model), "--out", s(&out)];
        args.extend_from_slice(extra);
        let o = nisac(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        csv_rows(&out)
    };
    let rows = run(&[], "t.csv");
    assert_eq!(
        rows[0],
        [
            "seed",
            "slot",
            "segment",
            "spike_count",
            "hidden_spike_count"
        ]
    );
    assert_eq!(rows.len(), 1 + 180);
    let segments: Vec<&str> = rows[1..].iter().map(|r| r[2].as_str()).collect();
    assert!(segments[..80].iter().all(|&s| s == "active"));
    assert!(segments[80..100].iter().all(|&s| s == "idle"));
    assert!(segments[100..].iter().all(|&s| s == "active"));

    let rows = run(&["--idle-slots", "0"], "t0.csv");
    assert_eq!(rows.len(), 1 + 160);
    assert!(rows[1..].iter().all(|r| r[2] == "active"));
    assert_eq!(checksum(&f.path("t.csv")), {
        run(&[], "t2.csv");
        checksum(&f.path("t2.csv"))
    });
}

#[test]
fn trace_of_zero_model_is_silent() {
    let f = Fixture::new();
    let model = f.path("zero.nism");
    let zero = nisac_core::snn::SnnModel::zeros(4, 4, nisac_core::snn::NeuronParams::default());
    nisac_core::snn::save_model(&zero, &model).unwrap();
    let out = f.path("t.csv");
    let o = nisac(&["trace", "--model", s(&model), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(csv_rows(&out)[1..]
        .iter()
        .all(|r| r[3] == "0" && r[4] == "0"));
}

#[test]
fn config_file_feeds_commands() {
    let f = Fixture::new();
    let cfg = f.path("exp.toml");
    std::fs::write(
        &cfg,
        "slots = 12\nlb = 3\nn_train = 5\nn_test = 3\nseed = 4\n",
    )
    .unwrap();
    let o = nisac(&[
        "gen",
        "--config",
        s(&cfg),
        "--n-test",
        "2",
        "--out-train",
        s(&f.path("t")),
        "--out-test",
        s(&f.path("u")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("5 examples, L=12 L_b=3"), "{stdout}");
    assert!(stdout.contains("2 examples"), "{stdout}");

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = nisac(&[
        "gen",
        "--config",
        s(&cfg),
        "--out-train",
        "t",
        "--out-test",
        "u",
    ]);
    assert_eq!(code(&o), 2);
}
