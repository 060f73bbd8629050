//! The two JSON databases: impedance scenarios and gripper configurations.
//!
//! Files are validated on load and rejected rather than repaired. Schemas:
//!
//! ```text
//! impedance: {"schema_version": 1, "scenarios": [{"task_id", "description", "arm",
//!             "stiffness": [x,y,z], "damping": [x,y,z], "provenance"}]}
//! gripper:   {"schema_version": 1, "grippers": [{"object_class", "description",
//!             "fragility", "angle_open", "angle_close"}]}
//! ```

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::impedance::{ArmId, ImpedanceError, ImpedanceParams};
use crate::serde_util;

pub const SCHEMA_VERSION: u32 = 1;
pub const EXPECTED_SCENARIOS: usize = 9;
pub const EXPECTED_GRIPPERS: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KbError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("validation error in {entry}: {rule}")]
    Validation { entry: String, rule: String },
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown object class {0:?}")]
    UnknownObjectClass(String),
}

fn invalid(entry: impl Into<String>, rule: impl Into<String>) -> KbError {
    KbError::Validation {
        entry: entry.into(),
        rule: rule.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Paper,
    Placeholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fragility {
    Rigid,
    Soft,
    Deformable,
    Fragile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub task_id: String,
    pub description: String,
    pub arm: ArmId,
    #[serde(with = "serde_util::vec3")]
    pub stiffness: Vector3<f64>,
    #[serde(with = "serde_util::vec3")]
    pub damping: Vector3<f64>,
    pub provenance: Provenance,
}

impl ScenarioEntry {
    /// `K` and `D` from the entry with the given virtual mass.
    pub fn impedance(&self, mass: Vector3<f64>) -> Result<ImpedanceParams, ImpedanceError> {
        ImpedanceParams::new(mass, self.damping, self.stiffness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperEntry {
    pub object_class: String,
    pub description: String,
    pub fragility: Fragility,
    /// Joint target for the open action, rad.
    pub angle_open: f64,
    /// Joint target for the close action (the preferred grasp angle), rad.
    pub angle_close: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImpedanceFile {
    schema_version: u32,
    scenarios: Vec<ScenarioEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GripperFile {
    schema_version: u32,
    grippers: Vec<GripperEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    scenarios: Vec<ScenarioEntry>,
    grippers: Vec<GripperEntry>,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, KbError> {
    serde_json::from_str(text).map_err(|e| KbError::Parse {
        location: format!("{origin}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String, KbError> {
    std::fs::read_to_string(path).map_err(|e| KbError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn check_version(v: u32, origin: &str) -> Result<(), KbError> {
    if v != SCHEMA_VERSION {
        return Err(invalid(origin, format!("schema_version must be {SCHEMA_VERSION}, got {v}")));
    }
    Ok(())
}

fn validate_scenarios(scenarios: &[ScenarioEntry]) -> Result<(), KbError> {
    if scenarios.len() != EXPECTED_SCENARIOS {
        return Err(invalid(
            "scenarios",
            format!("expected {EXPECTED_SCENARIOS} scenarios, found {}", scenarios.len()),
        ));
    }
    let mut seen = HashSet::new();
    for (i, s) in scenarios.iter().enumerate() {
        let entry = format!("scenarios[{i}] ({})", s.task_id);
        if s.task_id.trim().is_empty() {
            return Err(invalid(entry, "task_id must be non-empty"));
        }
        if !seen.insert(s.task_id.as_str()) {
            return Err(invalid(entry, "task_id must be unique"));
        }
        if s.description.trim().is_empty() {
            return Err(invalid(entry, "description must be non-empty"));
        }
        if !s.stiffness.iter().all(|k| k.is_finite() && *k > 0.0) {
            return Err(invalid(entry, "stiffness must be strictly positive"));
        }
        if !s.damping.iter().all(|d| d.is_finite() && *d > 0.0) {
            return Err(invalid(entry, "damping must be strictly positive"));
        }
    }
    Ok(())
}

fn validate_grippers(grippers: &[GripperEntry]) -> Result<(), KbError> {
    if grippers.len() != EXPECTED_GRIPPERS {
        return Err(invalid(
            "grippers",
            format!("expected {EXPECTED_GRIPPERS} grippers, found {}", grippers.len()),
        ));
    }
    let mut seen = HashSet::new();
    for (i, g) in grippers.iter().enumerate() {
        let entry = format!("grippers[{i}] ({})", g.object_class);
        if g.object_class.trim().is_empty() {
            return Err(invalid(entry, "object_class must be non-empty"));
        }
        if !seen.insert(g.object_class.as_str()) {
            return Err(invalid(entry, "object_class must be unique"));
        }
        if g.description.trim().is_empty() {
            return Err(invalid(entry, "description must be non-empty"));
        }
        if !(g.angle_open.is_finite() && g.angle_close.is_finite()) {
            return Err(invalid(entry, "angles must be finite"));
        }
        if g.angle_close < 0.0 {
            return Err(invalid(entry, "angle_close must be non-negative"));
        }
        if g.angle_open <= g.angle_close {
            return Err(invalid(entry, "angle_open must exceed angle_close"));
        }
    }
    Ok(())
}

impl KnowledgeBase {
    pub fn new(scenarios: Vec<ScenarioEntry>, grippers: Vec<GripperEntry>) -> Result<Self, KbError> {
        validate_scenarios(&scenarios)?;
        validate_grippers(&grippers)?;
        Ok(Self { scenarios, grippers })
    }

    /// Parses and validates both databases from in-memory JSON. `origins`
    /// name the sources in error locations.
    pub fn from_json_strs(
        impedance_json: &str,
        gripper_json: &str,
        origins: (&str, &str),
    ) -> Result<Self, KbError> {
        let imp: ImpedanceFile = parse(impedance_json, origins.0)?;
        check_version(imp.schema_version, origins.0)?;
        let grip: GripperFile = parse(gripper_json, origins.1)?;
        check_version(grip.schema_version, origins.1)?;
        Self::new(imp.scenarios, grip.grippers)
    }

    pub fn scenarios(&self) -> &[ScenarioEntry] {
        &self.scenarios
    }

    pub fn grippers(&self) -> &[GripperEntry] {
        &self.grippers
    }

    pub fn lookup_scenario(&self, task_id: &str) -> Result<&ScenarioEntry, KbError> {
        self.scenarios
            .iter()
            .find(|s| s.task_id == task_id)
            .ok_or_else(|| KbError::UnknownTask(task_id.to_string()))
    }

    pub fn lookup_gripper(&self, object_class: &str) -> Result<&GripperEntry, KbError> {
        self.grippers
            .iter()
            .find(|g| g.object_class == object_class)
            .ok_or_else(|| KbError::UnknownObjectClass(object_class.to_string()))
    }

    /// Cross-reference check: every named object class must exist in the
    /// gripper table.
    pub fn check_object_classes<'a>(&self, classes: impl IntoIterator<Item = &'a str>) -> Result<(), KbError> {
        for c in classes {
            if self.lookup_gripper(c).is_err() {
                return Err(invalid(
                    format!("object class {c:?}"),
                    "referenced object class missing from gripper table",
                ));
            }
        }
        Ok(())
    }

    /// `(impedance_json, gripper_json)`, pretty-printed.
    pub fn to_json_strings(&self) -> (String, String) {
        let imp = ImpedanceFile {
            schema_version: SCHEMA_VERSION,
            scenarios: self.scenarios.clone(),
        };
        let grip = GripperFile {
            schema_version: SCHEMA_VERSION,
            grippers: self.grippers.clone(),
        };
        (
            serde_json::to_string_pretty(&imp).expect("impedance db serializes"),
            serde_json::to_string_pretty(&grip).expect("gripper db serializes"),
        )
    }
}

pub fn load_knowledge_base(impedance_path: &Path, gripper_path: &Path) -> Result<KnowledgeBase, KbError> {
    let imp = read(impedance_path)?;
    let grip = read(gripper_path)?;
    KnowledgeBase::from_json_strs(
        &imp,
        &grip,
        (&impedance_path.display().to_string(), &gripper_path.display().to_string()),
    )
}
