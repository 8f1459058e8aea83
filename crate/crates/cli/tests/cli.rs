use std::path::PathBuf;
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persuade")).args(args).output().expect("binary runs")
}

fn run_on(file: &str, args: &[&str]) -> Output {
    let p = problem(file);
    let mut all = vec!["--problem", p.to_str().unwrap()];
    all.extend_from_slice(args);
    run(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn temp_problem(tag: &str, text: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("persuade-cli-{}-{tag}.json", std::process::id()));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_example1() {
    let o = run_on("example1.json", &["solve"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("1285/1536"), "{s}");
    assert!(s.contains("[1/6, 1/2]"), "{s}");
    assert!(s.lines().any(|l| l.starts_with("t_delta") && l.ends_with(" 4")), "{s}");
}

#[test]
fn json_rationals_round_trip() {
    let o = run_on("example1.json", &["solve", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let value = v["value"]["exact"].as_str().unwrap();
    assert_eq!(value, "1285/1536");
    let x = persuade_core::scalar::parse_scalar(value).unwrap();
    assert_eq!(x, persuade_core::scalar::rat(1285, 1536));
    assert_eq!(v["Q1"][1]["exact"], "1/2");
}

#[test]
fn malformed_rational_is_a_parse_error() {
    let text = std::fs::read_to_string(problem("example1.json")).unwrap().replace("\"1/3\"", "\"3/0\"");
    let path = temp_problem("zero-den", &text);
    let o = run(&["--problem", path.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse"));
}

#[test]
fn invalid_instance_is_a_validation_error() {
    let text = std::fs::read_to_string(problem("example1.json")).unwrap().replace("\"discount\": \"1/2\"", "\"discount\": 1");
    let path = temp_problem("discount", &text);
    let o = run(&["--problem", path.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_file_exits_one() {
    assert_eq!(run(&["--problem", "/nonexistent/p.json", "solve"]).status.code(), Some(1));
    assert_eq!(run(&["solve"]).status.code(), Some(1));
}

#[test]
fn trivial_instance_prints_notice() {
    let o = run_on("trivial.json", &["solve"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("recommend it forever"), "{s}");
    // v(a*, 1/4) = 3/4·2 + 1/4·1.
    assert!(s.contains("7/4"), "{s}");
}

#[test]
fn compare_table() {
    let o = run_on("example1.json", &["compare", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let rows: Vec<Vec<String>> = s.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect();
    let principal = |name: &str| rows.iter().find(|r| r[0] == name).unwrap()[1].clone();
    assert_eq!(principal("optimal"), "1285/1536");
    assert_eq!(principal("kg"), "0");
    assert_eq!(principal("random"), "4/5");
    assert_eq!(principal("delayed"), "3/4");
    assert_eq!(principal("first-best"), "8/9");
}

#[test]
fn trace_ladder_csv() {
    let o = run_on("example1.json", &["trace", "--ladder", "--format", "csv"]);
    assert_eq!(stdout(&o), "k,q_lo,q_hi\n1,1/6,1/2\n2,9/34,11/26\n3,61/186,13/38\n");
}

#[test]
fn trace_policy_chain() {
    let o = run_on("example1.json", &["trace", "--format", "csv"]);
    let s = stdout(&o);
    assert!(s.contains("2,1/3,5/6,W2,0,11/12,3/11,21/22,a*"), "{s}");
    assert!(s.contains("4,7/39,89/78,W4,0,113/156,0,1,a0"), "{s}");
}

#[test]
fn verify_with_oracle_passes() {
    let o = run_on("example1.json", &["verify", "--oracle", "--p-points", "33", "--w-points", "17"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("verified"));
}

#[test]
fn verify_fails_at_a_suboptimal_cutoff() {
    let o = run_on("example1.json", &["verify", "--q", "1/2", "--p-points", "33", "--w-points", "17"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}

#[test]
fn simulate_rejects_zero_paths() {
    assert_eq!(run_on("example1.json", &["simulate", "--paths", "0"]).status.code(), Some(1));
}

#[test]
fn simulate_rejects_short_horizon() {
    assert_eq!(run_on("example1.json", &["simulate", "--horizon", "3"]).status.code(), Some(1));
}

#[test]
fn simulate_csv_is_reproducible() {
    let args = ["--seed", "11", "simulate", "--paths", "300", "--out", "-"];
    let a = run_on("example1.json", &args);
    let b = run_on("example1.json", &args);
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let c = run_on("example1.json", &["--seed", "12", "simulate", "--paths", "300", "--out", "-"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn simulate_summary_json() {
    let o = run_on("example1.json", &["--format", "json", "--seed", "5", "simulate", "--paths", "20000"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = v["principal_mean"].as_f64().unwrap();
    let se = v["principal_stderr"].as_f64().unwrap();
    assert!((mean - 1285.0 / 1536.0).abs() <= 4.0 * se, "{mean} {se}");
    assert_eq!(v["max_absorption_period"], 5);
}

#[test]
fn simulate_tree_dump() {
    let o = run_on("example1.json", &["simulate", "--tree-depth", "6"]);
    let s = stdout(&o);
    assert!(s.starts_with("node,parent,period,signal,prob,reach,belief,promised_w,action,next\n"));
    assert!(s.contains(",2,0,11/12,11/12,3/11,21/22,a*,split"), "{s}");
    assert!(s.contains(",5,1,1/6,1/64,1,2,a1,stay"), "{s}");
}

#[test]
fn baseline_policies_simulate() {
    for p in ["kg", "random", "delayed"] {
        let o = run_on("example1.json", &["simulate", "--policy", p, "--paths", "2000"]);
        assert_eq!(o.status.code(), Some(0), "{p}");
    }
}
