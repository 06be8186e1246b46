use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn kimmel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kimmel")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn classify_from_means() {
    let out = kimmel(&["classify", "--m0", "2", "--m1", "2"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().next(), Some("D5"));
    let out = kimmel(&["classify", "--m0", "0.5", "--m1", "0.5"]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().next(), Some("D2"));
    assert_eq!(code(&kimmel(&["classify", "--m0", "2"])), 2);
}

#[test]
fn classify_config_echoes_regime() {
    let dir = tempfile::tempdir().unwrap();
    let out = kimmel(&["classify", "--config", &config("law_c.json"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("D3"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("classify.json")).unwrap()).unwrap();
    assert_eq!(json["label"], "D3");
    assert_eq!(json["config"]["law"]["family"], "linear_fractional_independent");
}

#[test]
fn degenerate_law_is_refused_with_the_condition() {
    let out = kimmel(&["compare", "--config", &config("degenerate.json")]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("non-degeneracy condition P((Z0,Z1)=(1,1)) < 1"), "{err}");
}

#[test]
fn schema_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"family": "binomial_split", "z_pmf": [[0, 0.5], [2, 0.5]]}"#).unwrap();
    let out = kimmel(&["yaglom", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"p\""));
    assert_eq!(code(&kimmel(&["simulate", "--config", &config("law_c.json"), "--condition", "sometimes"])), 2);
    assert_eq!(code(&kimmel(&["yaglom"])), 2);
}

#[test]
fn yaglom_report_for_law_c() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&["yaglom", "--config", &config("law_c.json"), "--out", d, "--assert"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("yaglom.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,prob"));
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    assert!((first[1].parse::<f64>().unwrap() - 0.475).abs() < 1e-10);
    assert!(csv.ends_with("\n") && !csv.contains('\r'));
    assert!(csv.lines().last().unwrap().starts_with("overflow,"));
}

#[test]
fn yaglom_refuses_d5() {
    let out = kimmel(&["yaglom", "--config", &config("d5.json")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("D5"));
}

#[test]
fn simulate_law_b_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&["simulate", "--config", &config("law_b.json"), "--horizon", "3", "--replicates", "5", "--out", d]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("n_contaminated.csv")).unwrap();
    assert!(csv.starts_with("generation,statistic,value,stderr\n"));
    let means: Vec<f64> = csv
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("mean"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(means, vec![1.0, 2.0, 4.0, 8.0]);
}

#[test]
fn infeasible_conditioning_writes_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out =
        kimmel(&["simulate", "--config", &config("law_e.json"), "--horizon", "20", "--condition", "horizon", "--out", d]);
    assert_eq!(code(&out), 4);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("simulate.json")).unwrap()).unwrap();
    assert_eq!(json["accepted_count"], 0);
    assert_eq!(json["config"]["simulation"]["horizon"], 20);
}

#[test]
fn exhausted_budget_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&[
        "simulate", "--config", &config("law_d.json"), "--horizon", "8", "--condition", "horizon",
        "--max-attempts", "300", "--replicates", "100", "--out", d,
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn unwritable_output_exits_10() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = kimmel(&["yaglom", "--config", &config("law_c.json"), "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&out), 10);
}

#[test]
fn failed_assertion_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = ["compare", "--config", &config("law_c.json"), "--horizon", "6", "--replicates", "50", "--out", d];
    let out = kimmel(&[&args[..], &["--l1-max", "0.000001", "--assert"]].concat());
    assert_eq!(code(&out), 1);
    // Without --assert the same comparison only reports.
    assert_eq!(code(&kimmel(&[&args[..], &["--l1-max", "0.000001"]].concat())), 0);
}

#[test]
fn compare_reports_both_laws_and_the_distance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&["compare", "--config", &config("law_c.json"), "--horizon", "8", "--replicates", "500", "--out", d]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert!(csv.starts_with("k,empirical,stderr,solver,abs_diff\n"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("compare.json")).unwrap()).unwrap();
    assert!(json["l1"].as_f64().unwrap() > 0.0);
    assert_eq!(json["version"], concat!("kimmel-cli/", env!("CARGO_PKG_VERSION")));
    assert_eq!(json["seed"], 0);
}

#[test]
fn csv_only_format_still_echoes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&["yaglom", "--config", &config("law_d.json"), "--format", "csv", "--out", d]);
    assert_eq!(code(&out), 0);
    let names: Vec<String> = read_dir_sorted(dir.path()).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, vec!["yaglom.config.json", "yaglom.csv"]);
}

#[test]
fn identity_check_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = kimmel(&[
            "identity-check", "--config", &config("law_d.json"), "--horizon", "4", "--seed", "7",
            "--replicates", "2000", "--out", dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
    }
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()));
}

#[test]
fn margin_sweep_lists_each_margin() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&[
        "compare", "--config", &config("law_c.json"), "--horizon", "6", "--replicates", "200",
        "--sweep-margins", "2,6,10", "--out", d,
    ]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("margin_sweep.csv")).unwrap();
    let margins: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(margins, vec!["2", "6", "10"]);
}

#[test]
fn d4_explore_is_labelled_exploratory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kimmel(&["d4-explore", "--config", &config("d4.json"), "--replicates", "200", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("d4-explore.json")).unwrap()).unwrap();
    assert!(json["status"].as_str().unwrap().starts_with("exploratory"));
    let rate = json["survival_decay_fit"]["rate"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&rate), "{rate}");
}
