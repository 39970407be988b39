//! End-to-end runs of the `sar` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sar"))
        .current_dir(dir)
        .env("SAR_THREADS", "2")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A small synthetic corpus in `dir/data`.
fn synth(dir: &Path, seed: &str) {
    let out = sar(
        dir,
        &[
            "synth-gen",
            "--seed",
            seed,
            "--labeled",
            "10",
            "--unlabeled",
            "40",
            "--test",
            "60",
            "--features",
            "60",
            "--active",
            "5",
            "--out",
            "data",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn help_documents_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = sar(tmp.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(
        text.contains("Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure")
    );
    for sub in [
        "train-supervised",
        "train-sar",
        "agree0-eval",
        "eval",
        "synth-gen",
        "split-views",
        "collapse-labels",
        "loss-surface",
    ] {
        assert!(text.contains(sub), "missing {sub}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = sar(dir, &["synth-gen", "--out", "x"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--seed"));
    assert_eq!(code(&sar(dir, &["no-such-command"])), 1);
    synth(dir, "1");
    let out = sar(
        dir,
        &[
            "train-sar",
            "--train",
            "data/train.flat",
            "--c",
            "-1",
            "--out",
            "m",
        ],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("c must be a nonnegative number"));
    let out = sar(dir, &["loss-surface", "--step", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn data_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = sar(
        dir,
        &["train-supervised", "--train", "missing.flat", "--out", "m"],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing.flat"));
    fs::write(dir.join("bad.flat"), "a\tx\ty\nb\tx:oops\ty\n").unwrap();
    let out = sar(
        dir,
        &["train-supervised", "--train", "bad.flat", "--out", "m"],
    );
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.flat:2:"), "{}", stderr(&out));
}

#[test]
fn monotonicity_failure_exits_3() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir, "2");
    let out = sar(
        dir,
        &[
            "train-sar",
            "--train",
            "data/train.flat",
            "--c",
            "2",
            "--monotonicity-tolerance=-1",
            "--out",
            "m",
        ],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn synth_gen_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    synth(a.path(), "7");
    synth(b.path(), "7");
    for f in ["train.flat", "test.flat"] {
        let x = fs::read(a.path().join("data").join(f)).unwrap();
        let y = fs::read(b.path().join("data").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
    let train = fs::read_to_string(a.path().join("data/train.flat")).unwrap();
    assert_eq!(train.lines().count(), 50);
    assert_eq!(train.lines().filter(|l| l.starts_with("?\t")).count(), 40);
}

#[test]
fn config_file_sets_flags_and_command_line_overrides() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("gen.conf"),
        "# generator settings\nseed = 4\nlabeled = 6\nunlabeled = 3\ntest = 5\nfeatures = 40\nout = fromfile\n",
    )
    .unwrap();
    let out = sar(dir, &["synth-gen", "--config", "gen.conf"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let train = fs::read_to_string(dir.join("fromfile/train.flat")).unwrap();
    assert_eq!(train.lines().count(), 9);

    let out = sar(
        dir,
        &[
            "synth-gen",
            "--config",
            "gen.conf",
            "--labeled",
            "2",
            "--out",
            "flag",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let train = fs::read_to_string(dir.join("flag/train.flat")).unwrap();
    assert_eq!(train.lines().count(), 5);

    fs::write(dir.join("bad.conf"), "no_such_flag = 1\n").unwrap();
    let out = sar(
        dir,
        &[
            "synth-gen",
            "--config",
            "bad.conf",
            "--seed",
            "1",
            "--out",
            "z",
        ],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn train_evaluate_and_report() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    synth(dir, "3");
    let out = sar(
        dir,
        &[
            "train-sar",
            "--train",
            "data/train.flat",
            "--test",
            "data/test.flat",
            "--c",
            "2",
            "--iterations",
            "3",
            "--seed",
            "3",
            "--out",
            "m",
            "--report",
            "r.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "view1.model",
        "view2.model",
        "view1.features",
        "view2.features",
        "trace.csv",
    ] {
        assert!(dir.join("m").join(f).exists(), "{f}");
    }
    let trace = fs::read_to_string(dir.join("m/trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,L1,L2,klterm,total"));
    let totals: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 4);
    for w in totals.windows(2) {
        assert!(w[1] <= w[0] + 1e-4, "{totals:?}");
    }

    let report = fs::read_to_string(dir.join("r.csv")).unwrap();
    assert!(report.starts_with("run,model,metric,label,value\n"));
    assert!(report.lines().any(|l| l.starts_with("m,agree,accuracy,,")));

    let out = sar(
        dir,
        &[
            "eval",
            "--model-dir",
            "m",
            "--test",
            "data/test.flat",
            "--predict",
            "view1",
            "--baseline-acc",
            "50",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("view1: accuracy"), "{text}");
    assert!(text.contains("relative error reduction vs 50"), "{text}");

    let out = sar(
        dir,
        &[
            "agree0-eval",
            "--model-dir",
            "m",
            "--test",
            "data/test.flat",
            "--report",
            "a.csv",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(dir.join("a.csv")).unwrap();
    for model in ["view1", "view2", "agree"] {
        assert!(
            report
                .lines()
                .any(|l| l.starts_with(&format!("m,{model},accuracy,,"))),
            "{model}"
        );
    }
}

#[test]
fn supervised_training_on_conll() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let corpus = "The DT B-NP\ncat NN I-NP\nsat VBD B-VP\n\n\
                  A DT B-NP\ndog NN I-NP\nran VBD B-VP\n\n\
                  The DT B-NP\ndog NN I-NP\nsat VBD B-VP\n";
    fs::write(dir.join("train.txt"), corpus).unwrap();
    let out = sar(
        dir,
        &[
            "train-supervised",
            "--format",
            "conll",
            "--train",
            "train.txt",
            "--test",
            "train.txt",
            "--out",
            "m",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = sar(
        dir,
        &[
            "eval",
            "--model-dir",
            "m",
            "--test",
            "train.txt",
            "--predict",
            "view1",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("chunk"), "{}", stdout(&out));
}

#[test]
fn corpus_tools() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("single.txt"),
        "a\tf1 f2 f3:2 f4\nb\tf2 f5 f6\n?\tf1 f6\n",
    )
    .unwrap();
    let split = |out: &str| {
        let o = sar(
            dir,
            &[
                "split-views",
                "--seed",
                "9",
                "--input",
                "single.txt",
                "--output",
                out,
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read_to_string(dir.join(out)).unwrap()
    };
    let first = split("s1.flat");
    assert_eq!(first, split("s2.flat"));
    assert_eq!(first.lines().count(), 3);
    for line in first.lines() {
        assert_eq!(line.split('\t').count(), 3);
    }
    assert!(first.contains("f3:2"));

    fs::write(
        dir.join("fine.flat"),
        "a\tx\ty\nb\tx\ty\nc\tx\ty\n?\tx\ty\n",
    )
    .unwrap();
    fs::write(dir.join("map.tsv"), "a\tA\nb\tBC\nc\tBC\n").unwrap();
    let o = sar(
        dir,
        &[
            "collapse-labels",
            "--input",
            "fine.flat",
            "--mapping",
            "map.tsv",
            "--output",
            "coarse.flat",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(dir.join("coarse.flat")).unwrap(),
        "A\tx\ty\nBC\tx\ty\nBC\tx\ty\n?\tx\ty\n"
    );
    fs::write(dir.join("short.tsv"), "a\tA\n").unwrap();
    let o = sar(
        dir,
        &[
            "collapse-labels",
            "--input",
            "fine.flat",
            "--mapping",
            "short.tsv",
            "--output",
            "z.flat",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn loss_surface_to_stdout_and_file() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let o = sar(dir, &["loss-surface", "--extent", "1", "--step", "0.5"]);
    assert_eq!(code(&o), 0);
    let csv = stdout(&o);
    assert!(csv.starts_with("s1,s2,penalty\n-1,-1,0\n"), "{csv}");
    assert_eq!(csv.lines().count(), 26);
    let o = sar(
        dir,
        &[
            "loss-surface",
            "--extent",
            "1",
            "--step",
            "0.5",
            "--output",
            "s.csv",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.join("s.csv")).unwrap(), csv);
}
