//! Runs the `faceage` binary.

use std::path::Path;
use std::process::{Command, Output};

pub fn faceage(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faceage"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs and returns the exit code, printing stderr when it is not `want`.
pub fn code(cwd: &Path, args: &[&str], want: i32) -> i32 {
    let out = faceage(cwd, args);
    let got = out.status.code().unwrap_or(-1);
    if got != want {
        eprintln!("faceage {args:?} exited {got}\nstdout:\n{}\nstderr:\n{}",
            String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    }
    got
}

/// synth → prepare → split → train both tasks → evaluate both, with
/// cwd-relative paths and fixed seeds. Returns the first failing step.
pub fn run_pipeline(cwd: &Path, epochs: usize) -> Result<(), String> {
    let e = epochs.to_string();
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--out-dir", "images", "--n", "14", "--seed", "5"],
        vec!["prepare", "--input-dir", "images", "--out", "prepared.json", "--seed", "5"],
        vec!["split", "--manifest", "prepared.json", "--train-frac", "0.7", "--seed", "5",
             "--out-train", "train.json", "--out-test", "test.json"],
        vec!["train", "--task", "gender", "--train", "train.json", "--val", "test.json",
             "--out", "gender.ckpt", "--epochs", &e, "--lr", "0.001", "--batch-size", "4", "--seed", "5", "--threads", "1"],
        vec!["train", "--task", "age", "--train", "train.json", "--val", "test.json",
             "--out", "age.ckpt", "--epochs", &e, "--lr", "0.001", "--batch-size", "4", "--seed", "5", "--threads", "1"],
        vec!["evaluate", "--task", "gender", "--checkpoint", "gender.ckpt", "--manifest", "test.json",
             "--report", "gender_report.json"],
        vec!["evaluate", "--task", "age", "--checkpoint", "age.ckpt", "--manifest", "test.json",
             "--report", "age_report.json"],
    ];
    for args in steps {
        if code(cwd, &args, 0) != 0 {
            return Err(format!("{args:?} failed"));
        }
    }
    Ok(())
}
