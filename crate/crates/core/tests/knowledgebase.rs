mod common;

use imprag::impedance::ArmId;
use imprag::knowledgebase::*;
use nalgebra::Vector3;

fn shipped_json() -> (String, String) {
    let d = common::data_dir();
    (
        std::fs::read_to_string(d.join("impedance.json")).unwrap(),
        std::fs::read_to_string(d.join("gripper.json")).unwrap(),
    )
}

fn with_scenarios(edit: impl FnOnce(&mut serde_json::Value)) -> Result<KnowledgeBase, KbError> {
    let (imp, grip) = shipped_json();
    let mut v: serde_json::Value = serde_json::from_str(&imp).unwrap();
    edit(&mut v);
    KnowledgeBase::from_json_strs(&v.to_string(), &grip, ("imp", "grip"))
}

fn with_grippers(edit: impl FnOnce(&mut serde_json::Value)) -> Result<KnowledgeBase, KbError> {
    let (imp, grip) = shipped_json();
    let mut v: serde_json::Value = serde_json::from_str(&grip).unwrap();
    edit(&mut v);
    KnowledgeBase::from_json_strs(&imp, &v.to_string(), ("imp", "grip"))
}

fn rule(err: KbError) -> String {
    match err {
        KbError::Validation { rule, .. } => rule,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn shipped_databases_have_nine_entries_each() {
    let kb = common::kb();
    assert_eq!(kb.scenarios().len(), 9);
    assert_eq!(kb.grippers().len(), 9);
    for task in imprag::simulation::KNOWN_TASKS {
        kb.lookup_scenario(task).unwrap();
    }
}

#[test]
fn table_rows_are_reproduced_exactly() {
    let kb = common::kb();
    for (task, k, d) in common::TABLE_ROWS {
        let s = kb.lookup_scenario(task).unwrap();
        assert_eq!(s.stiffness, Vector3::repeat(k), "{task}");
        assert_eq!(s.damping, Vector3::repeat(d), "{task}");
        assert_eq!(s.provenance, Provenance::Paper, "{task}");
    }
    assert_eq!(kb.lookup_scenario("dual_placement_bottle").unwrap().arm, ArmId::Left);
    let placeholders = kb
        .scenarios()
        .iter()
        .filter(|s| s.provenance == Provenance::Placeholder)
        .count();
    assert_eq!(placeholders, 3);
}

#[test]
fn serialization_reproduces_the_shipped_files() {
    let (imp, grip) = shipped_json();
    let kb = common::kb();
    let (imp2, grip2) = kb.to_json_strings();
    assert_eq!(imp2.trim_end(), imp.trim_end());
    assert_eq!(grip2.trim_end(), grip.trim_end());
    let back = KnowledgeBase::from_json_strs(&imp2, &grip2, ("a", "b")).unwrap();
    assert_eq!(back, kb);
}

#[test]
fn gripper_angles_follow_fragility() {
    let kb = common::kb();
    for g in kb.grippers() {
        assert!(g.angle_open > g.angle_close);
    }
    let close = |c: &str| kb.lookup_gripper(c).unwrap().angle_close;
    assert!(close("egg") > close("sauce_bottle"));
}

#[test]
fn lookups_fail_for_unknown_keys() {
    let kb = common::kb();
    assert_eq!(kb.lookup_scenario("juggle"), Err(KbError::UnknownTask("juggle".into())));
    assert_eq!(kb.lookup_gripper("anvil"), Err(KbError::UnknownObjectClass("anvil".into())));
    assert!(kb.check_object_classes(["egg", "anvil"]).is_err());
    kb.check_object_classes(["egg", "sauce_bottle"]).unwrap();
}

#[test]
fn validation_rejects_bad_scenarios() {
    let r = rule(with_scenarios(|v| v["scenarios"][0]["stiffness"][2] = 0.0.into()).unwrap_err());
    assert!(r.contains("stiffness"), "{r}");
    let r = rule(with_scenarios(|v| v["scenarios"][1]["damping"][0] = (-1.0).into()).unwrap_err());
    assert!(r.contains("damping"), "{r}");
    let r = rule(with_scenarios(|v| v["scenarios"][1]["task_id"] = "follow_surface".into()).unwrap_err());
    assert!(r.contains("unique"), "{r}");
    let r = rule(with_scenarios(|v| v["scenarios"][2]["description"] = " ".into()).unwrap_err());
    assert!(r.contains("description"), "{r}");
    let r = rule(with_scenarios(|v| {
        v["scenarios"].as_array_mut().unwrap().pop();
    })
    .unwrap_err());
    assert!(r.contains("expected 9"), "{r}");
    let r = rule(with_scenarios(|v| v["schema_version"] = 2.into()).unwrap_err());
    assert!(r.contains("schema_version"), "{r}");
}

#[test]
fn validation_rejects_bad_grippers() {
    let r = rule(with_grippers(|v| v["grippers"][0]["angle_close"] = 1.5.into()).unwrap_err());
    assert!(r.contains("angle_open"), "{r}");
    let r = rule(with_grippers(|v| v["grippers"][0]["angle_close"] = (-0.1).into()).unwrap_err());
    assert!(r.contains("non-negative"), "{r}");
    let r = rule(with_grippers(|v| v["grippers"][3]["object_class"] = "egg".into()).unwrap_err());
    assert!(r.contains("unique"), "{r}");
}

#[test]
fn parse_errors_carry_a_location() {
    let (_, grip) = shipped_json();
    let err = KnowledgeBase::from_json_strs("{\n  \"schema_version\": 1,\n  oops", &grip, ("imp.json", "grip.json"))
        .unwrap_err();
    match err {
        KbError::Parse { location, .. } => assert!(location.starts_with("imp.json:3:"), "{location}"),
        other => panic!("{other}"),
    }
    let err = with_scenarios(|v| v["scenarios"][0]["extra"] = 1.into()).unwrap_err();
    assert!(matches!(err, KbError::Parse { .. }));
    let err = load_knowledge_base(
        &common::data_dir().join("missing.json"),
        &common::data_dir().join("gripper.json"),
    )
    .unwrap_err();
    assert!(matches!(err, KbError::Io { .. }));
}
