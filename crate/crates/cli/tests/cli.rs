use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multichan"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn jsonl(text: &str) -> Vec<(String, serde_json::Value)> {
    text.lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["key"].as_str().unwrap().to_string(), v["value"].clone())
        })
        .collect()
}

fn lookup<'a>(records: &'a [(String, serde_json::Value)], key: &str) -> &'a serde_json::Value {
    &records.iter().find(|(k, _)| k == key).unwrap().1
}

#[test]
fn optimal_on_reference_spec() {
    let spec = configs().join("reference_spec.toml");
    let o = run(&["optimal", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("k*=(1,1)"));
    assert!(text.contains("v*=1.6"));
}

#[test]
fn optimal_reads_the_spec_of_a_full_config() {
    let cfg = configs().join("reference_rla.toml");
    let o = run(&["optimal", "--json", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&stdout(&o));
    assert_eq!(lookup(&records, "k_star"), &serde_json::json!([1, 1]));
    assert_eq!(lookup(&records, "v_star"), &serde_json::json!(1.6));
}

#[test]
fn pne_lists_equilibria_as_csv() {
    let spec = configs().join("reference_spec.toml");
    let o = run(&["pne", spec.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("profile,occupancy,potential,is_optimum"));
    // (2,0) has potential 1.7 and beats (1,1) at 1.6 for the sharing user
    assert_eq!(
        lines.collect::<Vec<_>>(),
        vec!["\"(1,1)\",\"(2,0)\",1.7,false"]
    );
}

#[test]
fn simulate_writes_outputs_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("reference_rla.toml");
    let o = run(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
        "--seed",
        "9",
        "--horizon",
        "500",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&stdout(&o));
    assert_eq!(lookup(&records, "horizon"), &serde_json::json!(500));
    assert_eq!(lookup(&records, "seeds"), &serde_json::json!([4, 9]));
    let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(curve.starts_with("t,regret_expected,regret_expected_std,"));
    assert_eq!(curve.lines().count(), 501);
    assert!(dir.path().join("seeds/seed_9.csv").exists());
    assert!(dir.path().join("summary.jsonl").exists());
}

#[test]
fn simulate_is_reproducible() {
    let cfg = configs().join("constant_rs.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.path().join("curve.csv")).unwrap(),
        fs::read(b.path().join("curve.csv")).unwrap()
    );
}

#[test]
fn missing_config_names_the_path() {
    let o = run(&["simulate", "/no/such/dir/experiment.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/such/dir/experiment.toml"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "case = \"C2\"\nhorizon = \"ten\"\n").unwrap();
    let o = run(&["simulate", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.toml"));
}

#[test]
fn unknown_subcommand_fails() {
    let o = run(&["frobnicate"]);
    assert!(!o.status.success());
}

#[test]
fn bounds_rejects_gamma_prime_not_below_gamma() {
    let o = run(&[
        "bounds",
        "--users",
        "2",
        "--channels",
        "2",
        "--gamma",
        "0.02",
        "--gamma-prime",
        "0.02",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn bounds_reports_exact_weights() {
    let o = run(&[
        "bounds",
        "--users",
        "2",
        "--channels",
        "2",
        "--samples",
        "1000",
        "--n",
        "10,100",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&stdout(&o));
    let weights = lookup(&records, "occupancy_weights").as_array().unwrap();
    for w in weights {
        assert_eq!(w["numerator"], 1);
        assert_eq!(w["denominator"], 3);
    }
    let settle = lookup(&records, "settle_expectation").as_array().unwrap();
    assert_eq!(settle[1]["expected_rounds"], 2);
    assert!(lookup(&records, "tau").is_string() || lookup(&records, "tau").is_u64());
    assert_eq!(
        lookup(&records, "exploration_sums")
            .as_array()
            .unwrap()
            .len(),
        2
    );
}

#[test]
fn replicator_classifies_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let spec = configs().join("reference_spec.toml");
    let o = run(&[
        "replicator",
        spec.to_str().unwrap(),
        "--start",
        "0.6,0.4;0.3,0.7",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = jsonl(&stdout(&o));
    assert_eq!(lookup(&records, "limit_kind"), "pure-pne");
    assert_eq!(lookup(&records, "stability"), "stable");
    let text = fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("step,time,potential\n"));
    let phis: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(phis.windows(2).all(|w| w[1] >= w[0] - 1e-12));
}

#[test]
fn replicator_rejects_bad_start() {
    let spec = configs().join("reference_spec.toml");
    let o = run(&["replicator", spec.to_str().unwrap(), "--start", "0.5,0.5"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("rows"));
}
