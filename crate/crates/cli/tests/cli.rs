use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_CONFIG: &str = r#"
[ground_truth]
imbalance = 4.0
length_n = 3000
seed = 3

[[profiles]]
category_id = "expert"
shift_bound = 0.0
sigma = 0.05
count = 4

[[profiles]]
category_id = "over"
shift_bound = 0.3
sigma = 0.1
count = 2

[bootstrap]
n_iterations = 200
block_length_samples = 300
"#;

fn annoteval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annoteval"))
        .args(args)
        .env_remove("ANNOTEVAL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Sim {
    dir: TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn simulate(config: &str) -> Sim {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("sim");
    let o = annoteval(&["simulate", "--config", s(&cfg), "--out", s(&out), "--format", "csv,json"]);
    assert_eq!(code(&o), 0, "simulate failed: {}", stderr(&o));
    Sim { dir, config: cfg, out }
}

#[test]
fn simulate_is_deterministic_and_records_a_manifest() {
    let a = simulate(SMALL_CONFIG);
    let b = simulate(SMALL_CONFIG);
    let csv = fs::read(a.out.join("annotations.csv")).unwrap();
    assert_eq!(csv, fs::read(b.out.join("annotations.csv")).unwrap());
    assert!(a.out.join("annotations.json").exists());
    assert!(a.out.join("ground_truth.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["path"].as_str().unwrap())
        .collect();
    assert!(outputs.contains(&"annotations.csv"));
    assert!(outputs.contains(&"config.toml"));
}

#[test]
fn seed_override_changes_the_data() {
    let sim = simulate(SMALL_CONFIG);
    let other = sim.dir.path().join("seeded");
    let o = annoteval(&["simulate", "--config", s(&sim.config), "--seed", "77", "--out", s(&other)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_ne!(
        fs::read(sim.out.join("annotations.csv")).unwrap(),
        fs::read(other.join("annotations.csv")).unwrap()
    );
}

#[test]
fn rerun_reproduces_outputs_byte_for_byte() {
    let sim = simulate(SMALL_CONFIG);
    let again = sim.dir.path().join("again");
    let o = annoteval(&["rerun", s(&sim.out.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["annotations.csv", "annotations.json", "ground_truth.csv"] {
        assert_eq!(fs::read(sim.out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let o = annoteval(&["rerun", s(&sim.out.join("manifest.json")), "--out", s(&sim.out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_config_reports_the_field_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, SMALL_CONFIG.replace("sigma = 0.1", "sigma = -0.1")).unwrap();
    let o = annoteval(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("profiles[1].sigma"), "{}", stderr(&o));

    fs::write(&cfg, "[ground_truth]\nlength = 5\n").unwrap();
    let o = annoteval(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn evaluate_needs_a_reference() {
    let sim = simulate(SMALL_CONFIG);
    let ann = sim.out.join("annotations.csv");
    let o = annoteval(&["evaluate", "--annotations", s(&ann), "--out", s(&sim.dir.path().join("e"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn evaluate_of_a_rater_against_itself_is_perfect() {
    let dir = TempDir::new().unwrap();
    let ann = dir.path().join("pair.csv");
    let mut text = String::from("record_id,rater_id,sample_index,label\n");
    let bits = [0, 0, 1, 1, 0, 1, 0, 0, 1, 0];
    for rater in ["a", "b"] {
        for (i, b) in bits.iter().enumerate() {
            text.push_str(&format!("r1,{rater},{i},{b}\n"));
        }
    }
    fs::write(&ann, text).unwrap();
    let out = dir.path().join("e");
    let o = annoteval(&[
        "evaluate",
        "--annotations",
        s(&ann),
        "--reference",
        "a",
        "--metrics",
        "mcc,auc,sensitivity",
        "--format",
        "json",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let metrics = reports[0]["metrics"].as_array().unwrap();
    assert_eq!(metrics.len(), 3);
    for m in metrics {
        assert_eq!(m["value"].as_f64(), Some(1.0), "{m}");
    }
}

#[test]
fn fleiss_on_missing_labels_is_refused() {
    let dir = TempDir::new().unwrap();
    let ann = dir.path().join("gappy.csv");
    fs::write(
        &ann,
        "record_id,rater_id,sample_index,label\nr1,a,0,1\nr1,a,1,\nr1,a,2,0\nr1,b,0,1\nr1,b,1,0\nr1,b,2,0\nr1,c,0,1\nr1,c,1,0\nr1,c,2,1\n",
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = annoteval(&["agreement", "--annotations", s(&ann), "--coefficient", "fleiss_kappa", "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("krippendorff"), "{}", stderr(&o));
    let o = annoteval(&[
        "agreement",
        "--annotations",
        s(&ann),
        "--coefficient",
        "krippendorff_alpha",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("agreement.csv").exists());
}

#[test]
fn copied_expert_is_equivalent() {
    let sim = simulate(SMALL_CONFIG);
    let ann = sim.out.join("annotations.csv");
    let mut text = fs::read_to_string(&ann).unwrap();
    let copy: String = text
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("expert_01"))
        .map(|l| format!("{}\n", l.replacen("expert_01", "ai", 1)))
        .collect();
    text.push_str(&copy);
    let with_ai = sim.dir.path().join("with_ai.csv");
    fs::write(&with_ai, text).unwrap();
    let out = sim.dir.path().join("eq");
    let o = annoteval(&[
        "equivalence",
        "--annotations",
        s(&with_ai),
        "--ai",
        "ai",
        "--humans",
        "expert_02,expert_03,expert_04,over_01",
        "--tests",
        "turing_average_kappa,turing_majority",
        "--config",
        s(&sim.config),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = stdout(&o);
    assert!(v.contains("turing_average_kappa: PASS"), "{v}");
    assert!(v.contains("turing_majority: PASS"), "{v}");
    assert!(out.join("verdicts.json").exists());
}

#[test]
fn too_few_humans_fail_per_test() {
    let sim = simulate(SMALL_CONFIG);
    let ann = sim.out.join("annotations.csv");
    let o = annoteval(&[
        "equivalence",
        "--annotations",
        s(&ann),
        "--ai",
        "over_02",
        "--humans",
        "expert_01,expert_02",
        "--tests",
        "all",
        "--iterations",
        "100",
        "--out",
        s(&sim.dir.path().join("eq")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let verdicts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sim.dir.path().join("eq/verdicts.json")).unwrap()).unwrap();
    assert_eq!(verdicts.as_array().unwrap().len(), 9);
}

#[test]
fn unknown_study_lists_the_choices() {
    let o = annoteval(&["experiment", "table9"]);
    assert_ne!(code(&o), 0);
    let err = stderr(&o);
    assert!(err.contains("expert-sweep") && err.contains("fig3"), "{err}");
}

#[test]
fn imbalance_experiment_writes_its_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("fig3");
    let o = annoteval(&["experiment", "fig3", "--seed", "4", "--out", s(&out), "--format", "csv,svg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("fig3.csv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let auc = header.iter().position(|&h| h == "auc").unwrap();
    let rows: Vec<f64> = lines.map(|l| l.split(',').nth(auc).unwrap().parse().unwrap()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|a| (a - 0.9).abs() < 0.01), "{rows:?}");
    assert!(fs::read_to_string(out.join("fig3.svg")).unwrap().starts_with("<svg"));
}
