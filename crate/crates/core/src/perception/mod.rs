//! Task inference from an image by walking a yes/no decision tree whose
//! questions are answered by a vision-language client.

mod fixtures;
#[cfg(feature = "http")]
mod remote;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fixtures::{load_fixtures, parse_fixtures, scripted_vlm_from_fixture, Fixture, ScriptedVlm};
#[cfg(feature = "http")]
pub use remote::HttpVlmClient;
pub use tree::{DecisionTree, Node, MAX_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
    Unsure,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(String);

impl ImageRef {
    pub fn new(uri: impl Into<String>) -> Result<Self, PerceptionError> {
        let uri = uri.into();
        if uri.trim().is_empty() {
            return Err(PerceptionError::EmptyImageRef);
        }
        Ok(Self(uri))
    }

    pub fn uri(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ImageRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VlmError {
    #[error("fixture not found: {0}")]
    FixtureNotFound(String),
    #[error("vlm service unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("image reference must be non-empty")]
    EmptyImageRef,
    #[error("client answered \"unsure\" to {question:?}")]
    UnsureAnswer { question: String },
    #[error(transparent)]
    Client(#[from] VlmError),
    #[error("invalid decision tree: {0}")]
    InvalidTree(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
}

/// One yes/no/unsure visual query. Answers must be deterministic for a fixed
/// `(image, question)` pair within a run.
pub trait VlmClient {
    fn ask(&self, image: &ImageRef, question: &str) -> Result<Answer, VlmError>;
}

impl<C: VlmClient + ?Sized> VlmClient for &C {
    fn ask(&self, image: &ImageRef, question: &str) -> Result<Answer, VlmError> {
        (**self).ask(image, question)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLabel {
    pub task_id: String,
    /// Natural-language form of the label, used as the stage-1 query text.
    pub text: String,
    pub query_trace: Vec<(String, Answer)>,
}

/// Walks from the root: yes → `yes` subtree, no → `no` subtree, until a leaf.
pub fn infer_task<C: VlmClient + ?Sized>(
    client: &C,
    image: &ImageRef,
    tree: &DecisionTree,
) -> Result<TaskLabel, PerceptionError> {
    let mut node = tree.root();
    let mut trace = Vec::new();
    loop {
        match node {
            Node::Leaf { task_id, .. } => {
                return Ok(TaskLabel {
                    task_id: task_id.clone(),
                    text: tree.label_text(task_id).unwrap_or_else(|| task_id.replace('_', " ")),
                    query_trace: trace,
                })
            }
            Node::Question { question, yes, no } => {
                let answer = client.ask(image, question)?;
                trace.push((question.clone(), answer));
                node = match answer {
                    Answer::Yes => yes,
                    Answer::No => no,
                    Answer::Unsure => {
                        return Err(PerceptionError::UnsureAnswer {
                            question: question.clone(),
                        })
                    }
                };
            }
        }
    }
}
