use std::path::Path;
use std::process::{Command, Output};

use qmimo_cli::output::{read_json, CSV_HEADER};

const SMALL: &str = r#"
Nt = 6
Nr = 4
Ns = 2
snr_db = [0, 20]
b = 2
b_max = 3
varsigma = [0.75, 1.0]
channels = 3
seed = 4
schemes = ["WF", "AltMinBF", "GPOS"]
sim_samples = 4000
"#;

fn qmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmimo")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_into(config: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config, "--output-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qmimo(&args)
}

#[test]
fn run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = run_into(&cfg, &out, &["--dump-quantizers"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 2 SNRs x 2 budgets x 3 schemes
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.len() == CSV_HEADER.len()));
    assert!(rows.iter().all(|r| r[6].parse::<f64>().is_ok()), "simulated SE present");

    let json = read_json(&out.join("results.json")).unwrap();
    assert_eq!(json.points.len(), 4);
    assert_eq!(json.carrier_frequency_hz, 28e9);
    for (p, chunk) in json.points.iter().zip(rows.chunks(3)) {
        for (s, row) in p.result.schemes.iter().zip(chunk) {
            assert_eq!(row[3], s.scheme.label());
            assert_eq!(row[4].parse::<f64>().unwrap(), s.mean_se_apx);
            assert_eq!(s.records.len(), 3);
        }
    }

    let dump: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("quantizers.json")).unwrap()).unwrap();
    assert_eq!(dump.as_array().unwrap().len(), 24);
}

#[test]
fn identical_runs_produce_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_into(&cfg, &a, &[]).status.success());
    assert!(run_into(&cfg, &b, &[]).status.success());
    for file in ["results.csv", "results.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let c = dir.path().join("c");
    assert!(run_into(&cfg, &c, &["--seed", "5"]).status.success());
    assert_ne!(std::fs::read(a.join("results.csv")).unwrap(), std::fs::read(c.join("results.csv")).unwrap());
}

#[test]
fn oracle_flag_adds_exhaustive_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("snr_db = [0, 20]", "snr_db = 10").replace("varsigma = [0.75, 1.0]", "varsigma = 0.75");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    assert!(run_into(&cfg, &out, &["--oracle", "--channels", "2"]).status.success());
    let json = read_json(&out.join("results.json")).unwrap();
    let labels: Vec<&str> = json.points[0].result.schemes.iter().map(|s| s.scheme.label()).collect();
    assert_eq!(labels, ["WF", "AltMinBF", "GPOS", "ES"]);
    assert_eq!(json.points[0].result.num_channels, 2);
    let gpos = json.points[0].result.schemes[2].mean_se_apx;
    let es = json.points[0].result.schemes[3].mean_se_apx;
    assert!(gpos <= es + 1e-12);
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        SMALL.replace("b = 2", "b = 2\nbogus = 1"),
        SMALL.replace("Ns = 2", "Ns = 9"),
        SMALL.replace("varsigma = [0.75, 1.0]", "varsigma = 0.1"),
        "Nt = 4\n".to_string(),
        "this is not toml".to_string(),
    ];
    for text in cases {
        let cfg = write_config(dir.path(), &text);
        let res = run_into(&cfg, &out, &[]);
        assert_eq!(res.status.code(), Some(2), "{text}");
        assert!(!res.stderr.is_empty());
    }
    let missing = dir.path().join("absent.toml");
    assert_eq!(run_into(missing.to_str().unwrap(), &out, &[]).status.code(), Some(2));
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run_into(&cfg, &out, &["--channels", "0"]).status.code(), Some(2));
    assert!(!out.join("results.csv").exists());
}

#[test]
fn unwritable_output_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let res = run_into(&cfg, &blocker.join("out"), &[]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn failed_point_keeps_completed_output() {
    // the second SNR point asks for more simulated resolution than is tabulated
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("b = 2", "b = [2, 13]").replace("b_max = 3", "b_max = 13").replace("snr_db = [0, 20]", "snr_db = 0").replace(
        "varsigma = [0.75, 1.0]",
        "varsigma = 1.0",
    );
    let text = text.replace(r#"schemes = ["WF", "AltMinBF", "GPOS"]"#, r#"schemes = ["WF"]"#);
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let res = run_into(&cfg, &out, &[]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let json = read_json(&out.join("results.json")).unwrap();
    assert_eq!(json.points.len(), 2);
    assert!(json.points[0].result.schemes[0].failures.is_empty());
    assert_eq!(json.points[1].result.schemes[0].failures.len(), 3);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
