use std::path::Path;
use std::process::{Command, Output};

fn edgeplan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeplan")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value printed under the `T,congested` header.
fn total(report: &str) -> (f64, bool) {
    let mut lines = report.lines().skip_while(|l| *l != "T,congested").skip(1);
    let (t, c) = lines.next().unwrap().split_once(',').unwrap();
    (t.parse().unwrap(), c.parse().unwrap())
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = edgeplan(dir.path(), &["gen", "--preset", "oracle", "--seed", "4"]);
    let b = edgeplan(dir.path(), &["gen", "--preset", "oracle", "--seed", "4"]);
    let c = edgeplan(dir.path(), &["gen", "--preset", "oracle", "--seed", "5"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn optimize_lands_within_five_percent_of_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(edgeplan(d, &["gen", "--preset", "oracle", "--seed", "0", "--out", "s.json"]).status.success());
    let oracle = edgeplan(d, &["oracle", "--scenario", "s.json", "--out", "best.json"]);
    assert!(oracle.status.success(), "{}", String::from_utf8_lossy(&oracle.stderr));
    let opt = edgeplan(d, &["optimize", "--scenario", "s.json", "--seed", "0", "--out", "ga.json", "--trace", "trace.csv"]);
    assert!(opt.status.success(), "{}", String::from_utf8_lossy(&opt.stderr));
    let (best, _) = total(&stdout(&oracle));
    let (found, _) = total(&stdout(&opt));
    assert!(best <= found && found <= best * 1.05, "{found} vs {best}");

    let trace = std::fs::read_to_string(d.join("trace.csv")).unwrap();
    let ts: Vec<f64> = trace.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[1] <= w[0]));

    let again = edgeplan(d, &["evaluate", "--scenario", "s.json", "--deployment", "ga.json"]);
    assert_eq!(total(&stdout(&again)).0, found);
}

#[test]
fn saturated_scenario_reports_congestion() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = edgeplan(d, &["gen", "--preset", "desk", "--seed", "1"]);
    let mut scenario: serde_json::Value = serde_json::from_slice(&base.stdout).unwrap();
    let links = scenario["links"].as_array_mut().unwrap();
    for l in links {
        l["bandwidth_mbps"] = serde_json::json!(0.01);
    }
    std::fs::write(d.join("s.json"), scenario.to_string()).unwrap();
    let out = edgeplan(d, &["baseline", "--scheme", "greedy", "--scenario", "s.json", "--out", "g.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (t, congested) = total(&stdout(&out));
    assert!(congested && t >= 1e6);
}

#[test]
fn exit_codes_separate_usage_and_domain_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(edgeplan(d, &["--help"]).status.code(), Some(0));
    assert_eq!(edgeplan(d, &["optimize"]).status.code(), Some(1));
    assert_eq!(edgeplan(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(edgeplan(d, &["evaluate", "--scenario", "missing.json", "--deployment", "x.json"]).status.code(), Some(2));
    std::fs::write(d.join("bad.json"), "{\"format_version\": 1}").unwrap();
    assert_eq!(edgeplan(d, &["lfl", "--scenario", "bad.json"]).status.code(), Some(2));
    assert!(edgeplan(d, &["gen", "--preset", "oracle", "--out", "s.json"]).status.success());
    let guarded = edgeplan(d, &["oracle", "--scenario", "s.json", "--guard", "10", "--out", "o.json"]);
    assert_eq!(guarded.status.code(), Some(2));
}

#[test]
fn lfl_average_matches_listed_loads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(edgeplan(d, &["gen", "--preset", "desk", "--seed", "2", "--out", "s.json"]).status.success());
    let text = stdout(&edgeplan(d, &["lfl", "--scenario", "s.json"]));
    let (rows, avg) = text.split_once("\n\n").unwrap();
    let loads: Vec<f64> = rows.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let avg: f64 = avg.lines().nth(1).unwrap().parse().unwrap();
    let mean = loads.iter().sum::<f64>() / loads.len() as f64;
    assert!((mean - avg).abs() < 1e-9 * avg, "{mean} vs {avg}");
    assert!((avg - 18.0).abs() <= 1.8);
}
