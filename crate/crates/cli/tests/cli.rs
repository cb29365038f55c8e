use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sopf_core::economics::parse_csv_table;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn sopf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sopf")).args(args).env_remove("SOPF_OUT_DIR").output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    all.extend(["--out-dir", dir.to_str().unwrap()]);
    sopf(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn objective(dir: &Path, stem: &str) -> f64 {
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}_dispatch.json"))).unwrap()).unwrap();
    v["objective"].as_f64().unwrap()
}

fn lmps(dir: &Path, stem: &str) -> Vec<f64> {
    let text = fs::read_to_string(dir.join(format!("{stem}_lmp.csv"))).unwrap();
    text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
}

#[test]
fn r_solve_prices_uniformly() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["solve", "--case", data("toy4.json").to_str().unwrap(), "--model", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let p = lmps(dir.path(), "R_SOPF");
    assert_eq!(p.len(), 4);
    assert!(p.iter().all(|v| (v - p[0]).abs() < 1e-6), "{p:?}");
    for f in ["R_SOPF_dispatch.json", "R_SOPF_violations.csv", "R_SOPF_solution.txt", "run.log"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn two_bus_congestion_prices() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("two_bus.json");
    let o = run_in(dir.path(), &["solve", "--case", case.to_str().unwrap(), "--model", "n", "--enable-reserve", "false"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(lmps(dir.path(), "N_SOPF"), vec![10.0, 50.0]);
    assert_eq!(objective(dir.path(), "N_SOPF"), 2600.0);
}

#[test]
fn zero_budget_switching_equals_fixed_topology() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["solve", "--case", data("toy4.json").to_str().unwrap(), "--model", "e,enr", "--z-max", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let (e, enr) = (objective(dir.path(), "E_SOPF"), objective(dir.path(), "E_SOPF_NR"));
    assert!((e - enr).abs() <= 1e-9 * e.abs(), "{e} vs {enr}");
    assert!(!stdout(&o).contains("open"));
}

#[test]
fn switching_decisions_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["solve", "--case", data("toy4.json").to_str().unwrap(), "--model", "enr"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().filter(|l| l.contains("outage of branch 2: open")).collect();
    assert_eq!(lines.len(), 2, "{out}");
    assert!((objective(dir.path(), "E_SOPF_NR") - 700.0).abs() < 1e-6);
}

#[test]
fn compare_writes_tables_and_checks_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["compare", "--case", data("toy4.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("E-SOPF: pass"));
    let (header, rows) = parse_csv_table(&fs::read_to_string(dir.path().join("costs.csv")).unwrap()).unwrap();
    assert_eq!(header.len(), 5, "{header:?}");
    let tc = &rows.iter().find(|(n, _)| n == "TC").unwrap().1;
    assert_eq!(tc.iter().map(|v| v.unwrap()).collect::<Vec<_>>(), vec![700.0, 700.0, 3825.0, 700.0]);
    let market = fs::read_to_string(dir.path().join("market.csv")).unwrap();
    assert!(market.contains("CongRvn"));
    assert_eq!(fs::read_to_string(dir.path().join("lmps.csv")).unwrap().lines().count(), 1 + 4 * 4);

    let o = run_in(dir.path(), &["compare", "--case", data("toy4.json").to_str().unwrap(), "--format", "text"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(dir.path().join("costs.txt")).unwrap().starts_with(' '));
}

#[test]
fn export_writes_four_programs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["export-mps", "--case", data("toy4.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for m in ["R_SOPF", "N_SOPF", "E_SOPF", "E_SOPF_NR"] {
        let text = fs::read_to_string(dir.path().join(format!("{m}.mps"))).unwrap();
        assert!(text.starts_with("NAME") && text.trim_end().ends_with("ENDATA"), "{m}");
    }
}

#[test]
fn verify_accepts_own_solution_and_rejects_a_corrupted_one() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("toy4.json");
    let case = case.to_str().unwrap();
    assert_eq!(run_in(dir.path(), &["solve", "--case", case, "--model", "enr"]).status.code(), Some(0));
    let sol = dir.path().join("E_SOPF_NR_solution.txt");
    let verify = |p: &Path| run_in(dir.path(), &["verify", "--case", case, "--model", "enr", "--solution", p.to_str().unwrap()]);
    assert_eq!(verify(&sol).status.code(), Some(0));

    let text = fs::read_to_string(&sol).unwrap();
    let first = text.lines().next().unwrap();
    let name = first.split_whitespace().next().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, text.replacen(first, &format!("{name} 0.9"), 1)).unwrap();
    let o = verify(&bad);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("eq03"));
    let csv = fs::read_to_string(dir.path().join("E_SOPF_NR_violations.csv")).unwrap();
    assert!(csv.lines().count() > 1);

    fs::write(&bad, format!("{text}nonsense 1\n")).unwrap();
    assert_eq!(verify(&bad).status.code(), Some(4));
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let case = data("toy4.json");
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, format!(r#"{{"case": {:?}, "model": ["e"], "out-dir": "from_config", "z-max": 0}}"#, case.to_str().unwrap()))
        .unwrap();
    let o = sopf(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    // relative to the config file
    assert!(dir.path().join("from_config/E_SOPF_dispatch.json").exists());

    let cli_dir = dir.path().join("from_cli");
    let o = sopf(&["solve", "--config", cfg.to_str().unwrap(), "--model", "r", "--out-dir", cli_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(cli_dir.join("R_SOPF_dispatch.json").exists());
    assert!(!cli_dir.join("E_SOPF_dispatch.json").exists());

    fs::write(&cfg, r#"{"model": ["e"], "unknown-flag": 1}"#).unwrap();
    assert_eq!(sopf(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn environment_names_the_default_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_sopf"))
        .args(["solve", "--case", data("toy4.json").to_str().unwrap(), "--model", "n"])
        .env("SOPF_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("N_SOPF_dispatch.json").exists());
}

#[test]
fn exit_codes_separate_usage_input_and_solve_failures() {
    assert_eq!(sopf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(sopf(&["solve", "--case", "/nonexistent/case.json", "--model", "r"]).status.code(), Some(4));
    assert_eq!(sopf(&["solve", "--case", data("toy4.json").to_str().unwrap(), "--model", "x"]).status.code(), Some(4));
    assert_eq!(sopf(&["solve", "--case", data("toy4.json").to_str().unwrap(), "--model", "r", "--big-m", "huge"]).status.code(), Some(4));
    let dir = tempfile::tempdir().unwrap();
    // a reserve requirement the fleet cannot cover
    let mut case: Value = serde_json::from_str(&fs::read_to_string(data("two_bus.json")).unwrap()).unwrap();
    case["buses"][1]["load"] = Value::from(390.0);
    let path = dir.path().join("short.json");
    fs::write(&path, case.to_string()).unwrap();
    let o = run_in(dir.path(), &["solve", "--case", path.to_str().unwrap(), "--model", "r"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
}
