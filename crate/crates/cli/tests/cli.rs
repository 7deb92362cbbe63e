//! End-to-end checks of the binary: deterministic reports, honest exit
//! codes, and file outputs.

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ncchern"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

/// Minimal quote-aware CSV field split, enough for the report format.
fn fields(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

/// Report lines with the trailing runtime column removed; the runtime is
/// the only field allowed to differ between identical runs.
fn strip_runtime(report: &str) -> String {
    report
        .lines()
        .map(|l| {
            if l.starts_with('#') || l.starts_with("model_id") {
                l.to_string()
            } else {
                l.rsplit_once(',')
                    .map(|(head, _)| head.to_string())
                    .unwrap_or_else(|| l.to_string())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn dimer_bulk_row_is_exact_and_deterministic() {
    let args = [
        "bulk", "--model", "ssh", "--params", "1.0,0.0", "--size", "12", "--seeds", "2",
    ];
    let a = run(&args);
    assert!(a.status.success());
    let text = stdout(&a);
    let row = fields(text.lines().nth(1).expect("one data row"));
    assert_eq!(row[0], "ssh(t1=1,t2=0)");
    assert_eq!(row[3], "odd_chern");
    assert_eq!(row[7], "0.000000000000e0");
    assert_eq!(row[8], "0");
    assert_eq!(row[11], "0");

    let b = run(&args);
    assert_eq!(strip_runtime(&stdout(&a)), strip_runtime(&stdout(&b)));
}

#[test]
fn sweep_reports_are_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        r#"
base_seed = 9
[model]
builtin = "qwz"
params = [1.0, 0.5]
[sweep]
parameter = "param:0"
grid = [1.0, 3.0]
sizes = [10]
seeds = 3
invariants = ["even_chern"]
[evaluation]
margin = 2
"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    let serial = run(&["sweep", "--config", cfg, "--threads", "1"]);
    let parallel = run(&["sweep", "--config", cfg, "--threads", "2"]);
    assert!(serial.status.success());
    assert!(parallel.status.success());
    let s = strip_runtime(&stdout(&serial));
    let p = strip_runtime(&stdout(&parallel));
    assert_eq!(s, p);
    // header plus one row per grid point
    assert_eq!(s.lines().count(), 3);

    // --out writes the same report to a file
    let out_path = dir.path().join("rows.csv");
    let to_file = run(&[
        "sweep", "--config", cfg, "--threads", "1", "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    let file_text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(strip_runtime(&file_text), s);
}

#[test]
fn config_errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(
        &config,
        r#"
[model]
builtin = "qwz"
[sweep]
sizes = [8]
seeds = 0
invariants = ["even_chern"]
"#,
    )
    .unwrap();
    let out = run(&["sweep", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("seeds"), "stderr: {err}");

    // missing file is an i/o error, not a panic
    let out = run(&["sweep", "--config", "/does/not/exist.toml"]);
    assert!(!out.status.success());

    // unknown invariant name is rejected up front
    let out = run(&[
        "bulk", "--model", "qwz", "--params", "1.0", "--size", "8", "--invariant", "bogus",
    ]);
    assert!(!out.status.success());

    // boundary kind on the bulk subcommand is a usage error
    let out = run(&[
        "bulk", "--model", "qwz", "--params", "1.0", "--size", "8", "--invariant",
        "boundary_odd_chern",
    ]);
    assert!(!out.status.success());
}

#[test]
fn failed_rows_still_exit_zero() {
    // no chiral grading: every row comes back flagged NaN, but the run
    // itself succeeded
    let out = run(&[
        "bulk", "--model", "atomic", "--params", "-1.0,1.0,0.0", "--size", "8",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = fields(text.lines().nth(1).unwrap());
    assert_eq!(row[7], "NaN");
    assert_eq!(row[11], "1");
}

#[test]
fn calibrate_store_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("calibration.json");
    let first = run(&["calibrate", "--store", store.to_str().unwrap()]);
    assert!(first.status.success());
    assert!(store.exists());
    let second = run(&["calibrate", "--store", store.to_str().unwrap()]);
    assert!(second.status.success());
    // the stored record is returned verbatim on the second run
    assert_eq!(stdout(&first), stdout(&second));
    let text = stdout(&first);
    assert!(text.contains("\"sign\": -1"));

    // stamped reports carry the record id in a comment line
    let stamped = run(&[
        "bulk", "--model", "ssh", "--params", "1.0,0.0", "--size", "8", "--calibration",
        store.to_str().unwrap(),
    ]);
    assert!(stamped.status.success());
    let id: serde_json::Value = serde_json::from_str(&text).unwrap();
    let header = format!("# calibration {}", id["id"].as_str().unwrap());
    assert!(stdout(&stamped).starts_with(&header));
}

#[test]
fn localize_writes_fit_table_and_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let profiles = dir.path().join("profiles.csv");
    let out = run(&[
        "localize", "--model", "anderson", "--params", "4.0", "--size", "48,64", "--seeds",
        "4", "--base-seed", "11", "--out", profiles.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("L,rate,rate_stderr,quality"));
    assert!(text.contains("# verdict "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let ptext = std::fs::read_to_string(&profiles).unwrap();
    assert!(ptext.starts_with("L,distance,mean_moment,stderr"));
    assert!(ptext.lines().count() > 20);
}

#[test]
fn model_file_flag_loads_json_models() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    // topological dimerized chain, winding -1
    let model = ncchern::models::by_name::<f64>("ssh", &[0.2, 1.0, 0.0]).unwrap();
    std::fs::write(&path, serde_json::to_string(&model).unwrap()).unwrap();
    let out = run(&[
        "bulk", "--model-file", path.to_str().unwrap(), "--size", "16",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let row = fields(text.lines().nth(1).unwrap());
    assert_eq!(row[8], "-1");
}
