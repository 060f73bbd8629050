#![allow(dead_code)]

use std::path::PathBuf;

use imprag::kinematics::KinematicChain;
use imprag::knowledgebase::{load_knowledge_base, KnowledgeBase};
use imprag::perception::{load_fixtures, DecisionTree, Fixture};
use imprag::retrieval::{Pipeline, RetrievalConfig};
use imprag::simulation::{ArmChains, Heightfield};
use imprag::vecindex::HashingEmbedder;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn kb() -> KnowledgeBase {
    let d = data_dir();
    load_knowledge_base(&d.join("impedance.json"), &d.join("gripper.json")).unwrap()
}

pub fn tree(kb: &KnowledgeBase) -> DecisionTree {
    DecisionTree::load(
        &data_dir().join("decision_tree.json"),
        kb.scenarios().iter().map(|s| s.task_id.as_str()),
    )
    .unwrap()
}

pub fn fixtures() -> Vec<Fixture> {
    load_fixtures(&data_dir().join("fixtures.json")).unwrap()
}

pub fn pipeline() -> Pipeline {
    let kb = kb();
    let tree = tree(&kb);
    Pipeline::build(kb, tree, Box::new(HashingEmbedder::default()), RetrievalConfig::default()).unwrap()
}

pub fn chains() -> ArmChains {
    let d = data_dir();
    ArmChains {
        right: KinematicChain::load(&d.join("chain_right.json")).unwrap(),
        left: KinematicChain::load(&d.join("chain_left.json")).unwrap(),
    }
}

pub fn heightfield() -> Heightfield {
    Heightfield::load(&data_dir().join("heightfield.csv")).unwrap()
}

/// `(task, K_z, D_z)` rows with published gains.
pub const TABLE_ROWS: [(&str, f64, f64); 6] = [
    ("follow_surface", 3.0, 2.0),
    ("apply_pressure", 5.0, 3.0),
    ("dual_placement_egg", 2.0, 1.0),
    ("dual_placement_bottle", 6.0, 1.5),
    ("tool_interaction", 2.0, 1.5),
    ("grasp_from_table", 4.0, 1.5),
];
