//! Two-stage retrieval from a task label to a full control-parameter bundle.
//!
//! Stage 1 embeds the label text and takes the nearest impedance scenario.
//! Stage 2 embeds `scenario.description + " " + label text` and takes the
//! nearest gripper entry. Both stages accept the top hit unconditionally;
//! scores under `min_score` only produce a warning.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::impedance::{ArmId, ImpedanceError, ImpedanceParams, DEFAULT_VIRTUAL_MASS};
use crate::knowledgebase::{GripperEntry, KbError, KnowledgeBase, ScenarioEntry};
use crate::perception::{infer_task, DecisionTree, Fixture, ImageRef, PerceptionError, TaskLabel, VlmClient};
use crate::vecindex::{embed_text, EmbedError, EmbeddingProvider, FlatIndex, IndexError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GripperAction {
    Open,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Perception,
    ImpedanceRetrieval,
    GripperRetrieval,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Perception => "perception",
            Stage::ImpedanceRetrieval => "impedance retrieval",
            Stage::GripperRetrieval => "gripper retrieval",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Impedance(#[from] ImpedanceError),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {cause}")]
pub struct PipelineError {
    pub stage: Stage,
    pub cause: RetrievalError,
}

impl PipelineError {
    fn at(stage: Stage) -> impl FnOnce(RetrievalError) -> PipelineError {
        move |cause| PipelineError { stage, cause }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_min_score")]
    pub min_score: f64,
    #[serde(default = "default_virtual_mass")]
    pub virtual_mass: [f64; 3],
    /// Task id → discrete gripper action.
    pub gripper_actions: BTreeMap<String, GripperAction>,
    /// Scenario pairs executed together, one per arm.
    #[serde(default)]
    pub bimanual_pairs: Vec<[String; 2]>,
}

fn default_top_k() -> usize {
    1
}

fn default_min_score() -> f64 {
    0.2
}

fn default_virtual_mass() -> [f64; 3] {
    DEFAULT_VIRTUAL_MASS
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        use GripperAction::*;
        let gripper_actions = [
            ("follow_surface", Close),
            ("apply_pressure", Close),
            ("dual_placement_egg", Open),
            ("dual_placement_bottle", Open),
            ("tool_interaction", Close),
            ("grasp_from_table", Close),
            ("press_button", Close),
            ("wipe_surface", Close),
            ("handover", Open),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            top_k: default_top_k(),
            min_score: default_min_score(),
            virtual_mass: DEFAULT_VIRTUAL_MASS,
            gripper_actions,
            bimanual_pairs: vec![["dual_placement_egg".into(), "dual_placement_bottle".into()]],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Indexes {
    pub scenarios: FlatIndex,
    pub grippers: FlatIndex,
}

/// One vector per scenario description (id = task_id) and per gripper
/// description (id = object_class).
pub fn build_indexes(kb: &KnowledgeBase, provider: &dyn EmbeddingProvider) -> Result<Indexes, RetrievalError> {
    let mut scenarios = FlatIndex::new(provider.dimension())?;
    for s in kb.scenarios() {
        scenarios.add(s.task_id.clone(), embed_text(provider, &s.description)?)?;
    }
    let mut grippers = FlatIndex::new(provider.dimension())?;
    for g in kb.grippers() {
        grippers.add(g.object_class.clone(), embed_text(provider, &g.description)?)?;
    }
    Ok(Indexes { scenarios, grippers })
}

fn top1(index: &FlatIndex, provider: &dyn EmbeddingProvider, text: &str, k: usize) -> Result<(String, f64), RetrievalError> {
    let query = embed_text(provider, text)?;
    let hit = index
        .search(&query, k.max(1))?
        .into_iter()
        .next()
        .ok_or(IndexError::EmptyIndex)?;
    Ok((hit.id, hit.score))
}

/// Stage 1: label text → nearest impedance scenario.
pub fn retrieve_impedance<'kb>(
    label: &TaskLabel,
    scenario_index: &FlatIndex,
    kb: &'kb KnowledgeBase,
    provider: &dyn EmbeddingProvider,
) -> Result<(&'kb ScenarioEntry, f64), RetrievalError> {
    let (id, score) = top1(scenario_index, provider, &label.text, 1)?;
    Ok((kb.lookup_scenario(&id)?, score))
}

/// The stage-2 query: scenario description first, then the label text.
pub fn stage2_query(scenario: &ScenarioEntry, label: &TaskLabel) -> String {
    format!("{} {}", scenario.description, label.text)
}

/// Stage 2: scenario description ⊕ label text → nearest gripper entry.
pub fn retrieve_gripper<'kb>(
    scenario: &ScenarioEntry,
    label: &TaskLabel,
    gripper_index: &FlatIndex,
    kb: &'kb KnowledgeBase,
    provider: &dyn EmbeddingProvider,
) -> Result<(&'kb GripperEntry, f64), RetrievalError> {
    let (id, score) = top1(gripper_index, provider, &stage2_query(scenario, label), 1)?;
    Ok((kb.lookup_gripper(&id)?, score))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlParameters {
    pub arm: ArmId,
    pub impedance: ImpedanceParams,
    pub scenario: ScenarioEntry,
    pub gripper: GripperEntry,
    pub gripper_action: GripperAction,
    /// Joint target realizing `gripper_action` for this object, rad.
    pub gripper_angle: f64,
    /// `[stage 1 cosine, stage 2 cosine]`.
    pub scores: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub image_uri: String,
    pub label: TaskLabel,
    /// One entry per arm; bimanual tasks yield two.
    pub parameters: Vec<ControlParameters>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// Knowledge base, decision tree, both indexes and the embedder, assembled
/// once and then shared read-only.
pub struct Pipeline {
    kb: KnowledgeBase,
    tree: DecisionTree,
    indexes: Indexes,
    provider: Box<dyn EmbeddingProvider>,
    config: RetrievalConfig,
}

impl Pipeline {
    pub fn build(
        kb: KnowledgeBase,
        tree: DecisionTree,
        provider: Box<dyn EmbeddingProvider>,
        config: RetrievalConfig,
    ) -> Result<Self, RetrievalError> {
        if config.top_k == 0 {
            return Err(RetrievalError::Config("top_k must be positive".into()));
        }
        for s in kb.scenarios() {
            if !config.gripper_actions.contains_key(&s.task_id) {
                return Err(RetrievalError::Config(format!("no gripper action for task {:?}", s.task_id)));
            }
        }
        for [a, b] in &config.bimanual_pairs {
            let (sa, sb) = (kb.lookup_scenario(a)?, kb.lookup_scenario(b)?);
            if sa.arm == sb.arm {
                return Err(RetrievalError::Config(format!(
                    "bimanual pair ({a}, {b}) must use different arms"
                )));
            }
        }
        let indexes = build_indexes(&kb, provider.as_ref())?;
        Ok(Self {
            kb,
            tree,
            indexes,
            provider,
            config,
        })
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn tree(&self) -> &DecisionTree {
        &self.tree
    }

    pub fn indexes(&self) -> &Indexes {
        &self.indexes
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.provider.as_ref()
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    fn partner_of(&self, task_id: &str) -> Option<&str> {
        self.config.bimanual_pairs.iter().find_map(|[a, b]| {
            if a == task_id {
                Some(b.as_str())
            } else if b == task_id {
                Some(a.as_str())
            } else {
                None
            }
        })
    }

    /// Both retrieval stages for one label.
    pub fn retrieve(&self, label: &TaskLabel, warnings: &mut Vec<String>) -> Result<ControlParameters, PipelineError> {
        let k = self.config.top_k;
        let (scenario_id, s1) = top1(&self.indexes.scenarios, self.provider(), &label.text, k)
            .map_err(PipelineError::at(Stage::ImpedanceRetrieval))?;
        let scenario = self
            .kb
            .lookup_scenario(&scenario_id)
            .map_err(|e| PipelineError::at(Stage::ImpedanceRetrieval)(e.into()))?;
        let (object_class, s2) = top1(&self.indexes.grippers, self.provider(), &stage2_query(scenario, label), k)
            .map_err(PipelineError::at(Stage::GripperRetrieval))?;
        let gripper = self
            .kb
            .lookup_gripper(&object_class)
            .map_err(|e| PipelineError::at(Stage::GripperRetrieval)(e.into()))?;

        for (stage, score, id) in [(1, s1, &scenario_id), (2, s2, &object_class)] {
            if score < self.config.min_score {
                warnings.push(format!(
                    "low similarity at stage {stage} ({id}): {score:.3} < {:.3}",
                    self.config.min_score
                ));
            }
        }

        let impedance = scenario
            .impedance(Vector3::from(self.config.virtual_mass))
            .map_err(|e| PipelineError::at(Stage::ImpedanceRetrieval)(e.into()))?;
        let action = self.config.gripper_actions[&scenario.task_id];
        Ok(ControlParameters {
            arm: scenario.arm,
            impedance,
            scenario: scenario.clone(),
            gripper: gripper.clone(),
            gripper_action: action,
            gripper_angle: match action {
                GripperAction::Open => gripper.angle_open,
                GripperAction::Close => gripper.angle_close,
            },
            scores: [s1, s2],
        })
    }

    /// Parameters for a known label, including the partner arm of a
    /// bimanual task.
    pub fn parameters_for_label(&self, label: &TaskLabel) -> Result<(Vec<ControlParameters>, Vec<String>), PipelineError> {
        let mut warnings = Vec::new();
        let primary = self.retrieve(label, &mut warnings)?;
        let mut params = vec![primary];
        if let Some(partner) = self.partner_of(&params[0].scenario.task_id) {
            let partner_label = TaskLabel {
                task_id: partner.to_string(),
                text: self
                    .tree
                    .label_text(partner)
                    .unwrap_or_else(|| partner.replace('_', " ")),
                query_trace: label.query_trace.clone(),
            };
            let second = self.retrieve(&partner_label, &mut warnings)?;
            if second.arm == params[0].arm {
                return Err(PipelineError {
                    stage: Stage::ImpedanceRetrieval,
                    cause: RetrievalError::Config(format!(
                        "bimanual partner {} resolved to the same arm",
                        second.scenario.task_id
                    )),
                });
            }
            params.push(second);
        }
        Ok((params, warnings))
    }

    /// Perception → stage 1 → stage 2.
    pub fn run<C: VlmClient + ?Sized>(&self, client: &C, image: &ImageRef) -> Result<PipelineOutput, PipelineError> {
        let label = infer_task(client, image, &self.tree).map_err(|e| PipelineError::at(Stage::Perception)(e.into()))?;
        let (parameters, warnings) = self.parameters_for_label(&label)?;
        Ok(PipelineOutput {
            image_uri: image.uri().to_string(),
            label,
            parameters,
            warnings,
        })
    }

    /// Runs every fixture and scores it; records come back sorted by image
    /// URI so the report does not depend on execution order.
    pub fn evaluate<C: VlmClient + Sync + ?Sized>(
        &self,
        client: &C,
        fixtures: &[Fixture],
        exec: Execution,
    ) -> Result<RetrievalReport, PerceptionError> {
        if fixtures.is_empty() {
            return Err(PerceptionError::Parse {
                location: "fixtures".into(),
                message: "no fixtures".into(),
            });
        }
        let records = exec.map(fixtures, |f| self.evaluate_one(client, f));
        Ok(RetrievalReport::from_records(records))
    }

    fn evaluate_one<C: VlmClient + ?Sized>(&self, client: &C, f: &Fixture) -> FixtureRecord {
        let mut record = FixtureRecord {
            image_uri: f.image_uri.clone(),
            expected_task_id: f.expected_task_id.clone(),
            expected_object_class: f.expected_object_class.clone(),
            inferred_task: None,
            retrieved_scenario: None,
            retrieved_gripper: None,
            correct: false,
            error: None,
        };
        let image = match ImageRef::new(f.image_uri.clone()) {
            Ok(i) => i,
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        };
        match self.run(client, &image) {
            Ok(out) => {
                record.inferred_task = Some(out.label.task_id.clone());
                record.retrieved_scenario = Some(out.parameters[0].scenario.task_id.clone());
                record.retrieved_gripper = Some(out.parameters[0].gripper.object_class.clone());
                record.correct = record.is_correct();
            }
            Err(e) => {
                if let Ok(label) = infer_task(client, &image, &self.tree) {
                    record.inferred_task = Some(label.task_id);
                }
                record.error = Some(e.to_string());
            }
        }
        record
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub image_uri: String,
    pub expected_task_id: String,
    pub expected_object_class: String,
    pub inferred_task: Option<String>,
    pub retrieved_scenario: Option<String>,
    pub retrieved_gripper: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FixtureRecord {
    /// Correct only if the task label, the impedance scenario and the
    /// gripper entry all match.
    pub fn is_correct(&self) -> bool {
        let task_ok = self.inferred_task.as_deref() == Some(self.expected_task_id.as_str());
        let scenario_ok = self.retrieved_scenario.as_deref() == Some(self.expected_task_id.as_str());
        let gripper_ok = self.retrieved_gripper.as_deref() == Some(self.expected_object_class.as_str());
        task_ok && scenario_ok && gripper_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub records: Vec<FixtureRecord>,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl RetrievalReport {
    pub fn from_records(mut records: Vec<FixtureRecord>) -> Self {
        records.sort_by(|a, b| a.image_uri.cmp(&b.image_uri));
        let correct = records.iter().filter(|r| r.correct).count();
        let total = records.len();
        Self {
            records,
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `category,count` with one row for correct and one for incorrect.
    pub fn to_csv(&self) -> String {
        format!(
            "category,count\ncorrect,{}\nincorrect,{}\n",
            self.correct,
            self.total - self.correct
        )
    }

    pub fn summary_line(&self) -> String {
        format!("accuracy: {:.4} ({}/{})", self.accuracy, self.correct, self.total)
    }
}
