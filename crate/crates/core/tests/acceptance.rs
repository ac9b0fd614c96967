//! One pass/fail line per acceptance criterion, with its runtime budget.
//!
//! Runs without the libtest harness so the lines are always printed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mvkit::selftest::{self, CheckOutcome, Scale};

struct Line {
    id: u32,
    name: String,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn timed(budget_secs: u64, f: impl FnOnce() -> CheckOutcome) -> Line {
    let start = Instant::now();
    let c = f();
    Line {
        id: c.id,
        name: c.name.to_string(),
        passed: c.passed,
        detail: c.detail,
        elapsed: start.elapsed(),
        budget: Duration::from_secs(budget_secs),
    }
}

fn run_cli(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mvkit"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut files: Vec<(String, Vec<u8>)> = entries
        .map(|e| {
            let p = e.expect("entry").path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).expect("readable"))
        })
        .collect();
    files.sort();
    files
}

/// Every command twice with the same seed; all output files byte-identical.
fn cli_determinism() -> CheckOutcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let config = tmp.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "mood": { "train": { "epochs": 20 } },
  "selftest": { "scale": "quick" }
}"#,
    )
    .expect("config written");
    let cfg = config.to_str().unwrap();
    let mut identical = Vec::new();
    let mut problems = Vec::new();
    for cmd in ["mvfs", "mine", "bne", "mood", "selftest"] {
        let mut runs = Vec::new();
        for r in 0..2 {
            let out = tmp.path().join(format!("{cmd}-{r}"));
            let o = run_cli(&[cmd, "--config", cfg, "--seed", "7", "--out", out.to_str().unwrap()], tmp.path());
            if !o.status.success() {
                problems.push(format!("{cmd} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
            }
            runs.push(read_tree(&out));
        }
        if runs[0] == runs[1] && !runs[0].is_empty() {
            identical.push(cmd);
        } else {
            problems.push(format!("{cmd} outputs differ"));
        }
    }
    CheckOutcome {
        id: 11,
        name: "command-line determinism",
        passed: problems.is_empty(),
        detail: format!("byte-identical: {}{}", identical.join(", "), if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }),
    }
}

type Check = Box<dyn FnOnce() -> CheckOutcome>;

fn main() {
    let checks: Vec<(u64, Check)> = vec![
        (1, Box::new(|| selftest::tensor_identities(Scale::Full))),
        (5, Box::new(|| selftest::factorized_ranking(Scale::Full))),
        (60, Box::new(|| selftest::planted_feature_recovery(Scale::Full))),
        (30, Box::new(|| selftest::bound_soundness(Scale::Full))),
        (120, Box::new(|| selftest::pruning_equivalence(Scale::Full))),
        (120, Box::new(|| selftest::gspan_completeness(Scale::Full))),
        (60, Box::new(|| selftest::planted_tensor_recovery(Scale::Full))),
        (30, Box::new(|| selftest::bne_stationarity(Scale::Full))),
        (5, Box::new(|| selftest::fusion_oracles(Scale::Full))),
        (180, Box::new(|| selftest::mood_gradients_and_overfit(Scale::Full))),
        (60, Box::new(cli_determinism)),
    ];
    let mut failed = Vec::new();
    for (budget, check) in checks {
        let l = timed(budget, check);
        let ok = l.passed && l.elapsed <= l.budget;
        println!(
            "criterion {:>2} {} {} ({:.2}s of {}s): {}",
            l.id,
            if ok { "PASS" } else { "FAIL" },
            l.name,
            l.elapsed.as_secs_f64(),
            l.budget.as_secs(),
            l.detail
        );
        if !ok {
            failed.push(l.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
