use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn capdis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capdis"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn capdis")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = capdis(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// A fixture with transcripts coded and the panel built.
fn prepared() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--seed", "7", "--out", "."]);
    ok(dir.path(), &["code-transcripts", "-c", "capdis.conf"]);
    ok(dir.path(), &["build-panel", "-c", "capdis.conf"]);
    dir
}

fn error_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(out.stderr.trim_ascii()).expect("stderr is one JSON record")
}

#[test]
fn simulate_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["simulate", "--seed", "7", "--out", "."]);
    ok(b.path(), &["simulate", "--seed", "7", "--out", "."]);
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(ta.len() > 10);
    assert_eq!(ta, tb);
    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["simulate", "--seed", "8", "--out", "."]);
    assert_ne!(ta, tree(c.path()));
}

#[test]
fn estimate_reports_table_near_truth() {
    let dir = prepared();
    let text = ok(dir.path(), &["estimate", "-c", "capdis.conf", "--treatment", "main"]);
    for row in [
        "Capacity Discipline",
        "Talk Eligible",
        "Monopoly",
        "MissingReport",
        "Talk Eligible x MissingReport",
        "Monopoly x MissingReport",
    ] {
        assert!(text.lines().any(|l| l.starts_with(row)), "missing {row}:\n{text}");
    }
    let lines: Vec<&str> = text.lines().collect();
    let at = lines.iter().position(|l| l.starts_with("Capacity Discipline")).unwrap();
    assert!(lines[at + 1].trim().starts_with('(') && lines[at + 1].trim().ends_with(')'));
    assert!(lines[at + 2].trim().starts_with('[') && lines[at + 2].trim().ends_with("%]"));

    let truth = std::fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    let beta: f64 = truth
        .lines()
        .find_map(|l| l.strip_prefix("Capacity Discipline,"))
        .and_then(|r| r.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    let csv = std::fs::read_to_string(dir.path().join("out/estimates.csv")).unwrap();
    let row: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("(1),coef,Capacity Discipline,"))
        .unwrap()
        .split(',')
        .collect();
    let (b, se): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
    assert!((b - beta).abs() < 3.0 * se, "estimate {b} (se {se}) vs truth {beta}");
}

#[test]
fn lead_diagnostic_only() {
    let dir = prepared();
    let text = ok(dir.path(), &["diagnostics", "-c", "capdis.conf", "--lead"]);
    assert!(text.lines().any(|l| l.starts_with("Capacity Discipline (lead)")), "{text}");
    assert!(dir.path().join("out/lead_test.csv").exists());
    assert!(!dir.path().join("out/twfe_weights.csv").exists());
    let both = ok(dir.path(), &["diagnostics", "-c", "capdis.conf"]);
    assert!(both.contains("share negative"));
    assert!(dir.path().join("out/twfe_weights.csv").exists());
}

#[test]
fn every_command_runs_on_the_fixture() {
    let dir = prepared();
    let base = ["-c", "capdis.conf", "--bootstrap", "10", "--dims", "24", "--min-count", "2", "--epochs", "2"];
    let expect = [
        ("estimate", "estimates.csv"),
        ("poisson", "poisson.csv"),
        ("crowding", "crowding_panel.csv"),
        ("prices", "prices.csv"),
        ("hubs", "hubs.csv"),
        ("control-function", "instruments.csv"),
        ("train-embedding", "embedding.bin"),
        ("screen-tokens", "screened_tokens.csv"),
    ];
    for (cmd, file) in expect {
        let mut args = vec![cmd];
        args.extend(base);
        let text = ok(dir.path(), &args);
        assert!(!text.is_empty(), "{cmd} printed nothing");
        assert!(dir.path().join("out").join(file).exists(), "{cmd} did not write {file}");
    }
    let cf = std::fs::read_to_string(dir.path().join("out/control_function.csv")).unwrap();
    assert!(cf.contains("First stage,stat,F (instruments),"));
}

#[test]
fn run_all_is_deterministic_across_thread_counts() {
    let dir = prepared();
    let args = |out: &'static str, threads: &'static str| {
        vec!["run-all", "-c", "capdis.conf", "--out", out, "--threads", threads, "--bootstrap", "8", "--dims", "16", "--min-count", "2"]
    };
    ok(dir.path(), &args("a", "1"));
    ok(dir.path(), &args("b", "3"));
    let (a, b) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(a.len() >= 15, "{:?}", a.keys().collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn schema_error_has_row_and_column() {
    let dir = prepared();
    let seg = std::fs::read_to_string(dir.path().join("segments.csv")).unwrap();
    let mut lines: Vec<String> = seg.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[2].split(',').map(str::to_string).collect();
    cells[5] = "-3".into();
    lines[2] = cells.join(",");
    std::fs::write(dir.path().join("bad.csv"), lines.join("\n")).unwrap();
    let out = capdis(dir.path(), &["build-panel", "-c", "capdis.conf", "--segments", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"], "schema");
    assert_eq!(e["column"], "seats");
    assert_eq!(e["row"], 3);
    assert!(e["path"].as_str().unwrap().ends_with("bad.csv"));
}

#[test]
fn config_errors_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = capdis(dir.path(), &["estimate", "--panel", "missing.csv"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"], "config");

    std::fs::write(dir.path().join("x.conf"), "segments = a.csv\ncolour = red\n").unwrap();
    let out = capdis(dir.path(), &["estimate", "-c", "x.conf"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("line 2"));

    let out = capdis(dir.path(), &["estimate", "--treatment", "bogus"]);
    assert_eq!(out.status.code(), Some(4));
    let out = capdis(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn numerical_failure_exits_three() {
    let dir = prepared();
    let out = capdis(dir.path(), &["estimate", "-c", "capdis.conf", "--max-iter", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"], "numerical");
}
