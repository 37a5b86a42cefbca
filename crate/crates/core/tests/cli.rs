use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use scampsim::pnm::encode_pbm;
use scampsim::BitImage;

fn scampsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scampsim"))
        .current_dir(dir)
        .args(args)
        .env_remove("SCAMPSIM_LOG")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = scampsim(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bench_reports_calibrated_default() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ok(tmp.path(), &["bench"]), "latency_us=121.0 fps=8264\n");
}

#[test]
fn bench_with_custom_table() {
    let tmp = tempfile::tempdir().unwrap();
    let table = tmp.path().join("t.json");
    let mut entries: Vec<String> = scampsim::Opcode::ALL
        .iter()
        .map(|op| format!("\"{op}\": 0.0"))
        .collect();
    entries.push("\"overhead_us\": 250.0".into());
    fs::write(&table, format!("{{{}}}", entries.join(","))).unwrap();
    let out = ok(tmp.path(), &["bench", "--cost-table", "t.json"]);
    assert_eq!(out, "latency_us=250.0 fps=4000\n");
}

#[test]
fn infer_black_image_is_rock_and_check_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("black.pbm"), encode_pbm(&BitImage::zeros(64, 64))).unwrap();
    let out = ok(tmp.path(), &["infer", "black.pbm", "--check", "100"]);
    let mut lines = out.lines();
    assert_eq!(
        lines.next().unwrap(),
        "black.pbm sums=0,0,0 predicted=rock reference=rock agree=yes"
    );
    assert_eq!(lines.next().unwrap(), "check: 100/100 agree");
}

#[test]
fn commands_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for run in ["a", "b"] {
        let ds = format!("{run}/ds");
        ok(d, &["gen", "--seed", "4", "--train-per-class", "6", "--test-per-class", "3", "--out", &ds]);
        ok(d, &["train", "--dataset", &ds, "--epochs", "2", "--out", &format!("{run}/model")]);
        let w = format!("{run}/model/weights.json");
        ok(d, &["lower", "--weights", &w, "--out", &format!("{run}/lower")]);
        ok(d, &["loop", "--weights", &w, "--dataset", &ds, "--duration-us", "50000", "--out", &format!("{run}/loop")]);
        ok(d, &["dump", "--weights", &w, &format!("{ds}/test/paper/0000.pgm"), "--out", &format!("{run}/dump")]);
    }
    let a = files(&d.join("a"));
    assert!(a.iter().any(|(n, _)| n.ends_with("timeline.csv")));
    assert!(a.len() > 30);
    assert_eq!(a, files(&d.join("b")));
}

#[test]
fn dump_writes_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let img = BitImage::from_fn(64, 64, |r, c| (r / 8 + c / 8) % 2 == 0);
    fs::write(tmp.path().join("in.pbm"), encode_pbm(&img)).unwrap();
    let out = ok(tmp.path(), &["dump", "in.pbm", "--out", "d"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("rock=") && lines[3].starts_with("predicted="));
    assert_eq!(fs::read_to_string(tmp.path().join("d/sums.txt")).unwrap(), out);
    let names: Vec<String> = files(&tmp.path().join("d")).into_iter().map(|(n, _)| n).collect();
    for want in [
        "input.pbm",
        "pix.pgm",
        "post_replicate.pgm",
        "post_conv.pgm",
        "post_relu.pgm",
        "relu_keep.pbm",
        "post_pool.pgm",
        "class_0_rock.pgm",
        "class_1_paper.pgm",
        "class_2_scissors.pgm",
        "sums.txt",
    ] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
}

#[test]
fn errors_are_single_line_and_leave_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), "{\"version\": 1}").unwrap();
    let out = scampsim(d, &["lower", "--weights", "bad.json", "--out", "low"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: json: "), "{err}");
    assert!(!d.join("low").exists());

    let out = scampsim(d, &["bench", "--weights", "missing.json"]);
    assert_eq!(String::from_utf8(out.stderr).unwrap(), "error: input: weights file missing.json not found\n");

    // Gen into a fresh directory with an unreadable config leaves no directory.
    let out = scampsim(d, &["gen", "--config", "nope.json", "--out", "ds"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("ds").exists());

    let out = scampsim(d, &["loop", "--servos", "6", "--duration-us", "1000", "--out", "lp"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: servo: "), "{err}");
    assert!(!d.join("lp").exists());

    let out = scampsim(d, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: usage: "));
}

#[test]
fn help_lists_global_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let help = ok(tmp.path(), &["--help"]);
    for flag in ["--weights", "--dataset", "--cost-table", "--seed", "--noise-sigma", "--mode", "--out", "SCAMPSIM_LOG"] {
        assert!(help.contains(flag), "{flag} not in help");
    }
}
