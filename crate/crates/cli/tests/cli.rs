use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// A private copy of the shipped data; outputs land in `<tmp>/out`.
struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        std::fs::create_dir(&data).unwrap();
        for entry in std::fs::read_dir(data_dir()).unwrap() {
            let path = entry.unwrap().path();
            if path.is_file() {
                std::fs::copy(&path, data.join(path.file_name().unwrap())).unwrap();
            }
        }
        Self { dir }
    }

    fn data(&self, name: &str) -> PathBuf {
        self.dir.path().join("data").join(name)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }

    fn edit_json(&self, name: &str, edit: impl FnOnce(&mut serde_json::Value)) {
        let path = self.data(name);
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        edit(&mut v);
        std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_imprag"))
            .arg("--config")
            .arg(self.data("config.json"))
            .args(args)
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_index_writes_both_indexes() {
    let s = Sandbox::new();
    let o = s.run(&["build-index"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "scenarios: 9, grippers: 9");
    let idx = read_json(&s.out("scenario_index.json"));
    assert_eq!(idx["dimension"], 384);
    assert_eq!(idx["entries"].as_array().unwrap().len(), 9);
    assert!(s.out("gripper_index.json").is_file());
}

#[test]
fn missing_knowledge_base_exits_two() {
    let s = Sandbox::new();
    std::fs::remove_file(s.data("impedance.json")).unwrap();
    let o = s.run(&["build-index"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("impedance_db"), "{}", stderr(&o));
}

#[test]
fn corrupt_json_exits_two_with_location() {
    let s = Sandbox::new();
    std::fs::write(s.data("gripper.json"), "{\n  \"schema_version\": 1,\n  \"grippers\": [\n").unwrap();
    let o = s.run(&["build-index"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gripper.json:4"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_imprag"))
        .args(["--config", "/nonexistent/config.json", "build-index"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn retrieve_prints_gains_for_a_fixture() {
    let s = Sandbox::new();
    let o = s.run(&["retrieve", "images/apply_pressure_01.png"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["task_id"], "apply_pressure");
    let p = &v["parameters"][0];
    assert_eq!(p["impedance"]["stiffness"], serde_json::json!([5.0, 5.0, 5.0]));
    assert_eq!(p["impedance"]["damping"], serde_json::json!([3.0, 3.0, 3.0]));
    assert_eq!(p["gripper"]["object_class"], "massage_ball");
    assert!(stderr(&o).is_empty(), "{}", stderr(&o));
}

#[test]
fn retrieve_bimanual_returns_both_arms() {
    let s = Sandbox::new();
    let o = s.run(&["retrieve", "images/dual_placement_egg_01.png"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let arms: Vec<_> = v["parameters"].as_array().unwrap().iter().map(|p| p["arm"].clone()).collect();
    assert_eq!(arms, [serde_json::json!("right"), serde_json::json!("left")]);
}

#[test]
fn retrieve_unknown_image_exits_three() {
    let s = Sandbox::new();
    let o = s.run(&["retrieve", "images/nope.png"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("perception"), "{}", stderr(&o));
}

#[test]
fn occluded_fixture_warns_about_low_confidence() {
    let s = Sandbox::new();
    let o = s.run(&["retrieve", "images/grasp_from_table_occluded.png"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning: low confidence"), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["task_id"], "handover");
}

#[test]
fn eval_retrieval_reports_thirteen_of_fourteen() {
    let s = Sandbox::new();
    let o = s.run(&["eval-retrieval"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "accuracy: 0.9286 (13/14)");
    assert!(stderr(&o).contains("miss: images/grasp_from_table_occluded.png"));
    let report = read_json(&s.out("retrieval_report.json"));
    assert_eq!(report["correct"], 13);
    assert_eq!(report["total"], 14);
    assert_eq!(
        std::fs::read_to_string(s.out("retrieval_summary.csv")).unwrap(),
        "category,count\ncorrect,13\nincorrect,1\n"
    );
}

#[test]
fn eval_below_threshold_exits_one() {
    let s = Sandbox::new();
    let o = s.run(&["eval-retrieval", "--min-accuracy", "1.0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = s.run(&["--sequential", "eval-retrieval"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn empty_fixture_suite_exits_two() {
    let s = Sandbox::new();
    let empty = s.data("empty.json");
    std::fs::write(&empty, r#"{"fixtures": []}"#).unwrap();
    let o = s.run(&["eval-retrieval", "--fixtures", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulate_writes_trace_metrics_and_manifest() {
    let s = Sandbox::new();
    let o = s.run(&["simulate", "apply_pressure"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let row: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(row["K_z"], 5.0);
    let trace = std::fs::read_to_string(s.out("apply_pressure_right_trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert!(lines.next().unwrap().starts_with("t,x_ref_x"));
    let times: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| (w[1] - w[0] - 0.02).abs() < 1e-9));
    let metrics = read_json(&s.out("apply_pressure_right_metrics.json"));
    let keys: Vec<_> = metrics.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys.len(), 3);
    for k in ["mean_abs_e_z", "max_abs_e_z", "max_abs_F_virt_z"] {
        assert!(metrics[k].as_f64().unwrap().is_finite(), "{k}");
    }
    let manifest = read_json(&s.out("apply_pressure_right_manifest.json"));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["records"].as_u64().unwrap() as usize, times.len());
}

#[test]
fn simulate_all_prints_six_rows() {
    let s = Sandbox::new();
    let o = s.run(&["simulate", "--all"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "task_id,arm,K_z,D_z,mean_abs_e_z,max_abs_e_z,max_abs_F_virt_z");
    assert_eq!(lines.count(), 6);
    assert_eq!(std::fs::read_to_string(s.out("summary.csv")).unwrap(), out);
}

#[test]
fn simulate_unknown_task_exits_two() {
    let s = Sandbox::new();
    let o = s.run(&["simulate", "juggle"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_filter_exits_four_with_partial_trace() {
    let s = Sandbox::new();
    s.edit_json("impedance.json", |v| {
        v["scenarios"][1]["stiffness"] = serde_json::json!([1e6, 1e6, 1e6]);
    });
    let o = s.run(&["simulate", "apply_pressure", "--dt", "10"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"), "{}", stderr(&o));
    let manifest = read_json(&s.out("apply_pressure_right_manifest.json"));
    assert!(manifest["aborted"].is_string());
    assert!(s.out("apply_pressure_right_trace.csv").is_file());
}
