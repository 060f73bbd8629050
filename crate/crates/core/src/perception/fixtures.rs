use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Answer, ImageRef, PerceptionError, VlmClient, VlmError};

/// One scripted evaluation image: the answers a VLM gives for it and the
/// expected retrieval outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub image_uri: String,
    pub answers: HashMap<String, Answer>,
    pub expected_task_id: String,
    pub expected_object_class: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureFile {
    fixtures: Vec<Fixture>,
}

pub fn parse_fixtures(text: &str, origin: &str) -> Result<Vec<Fixture>, PerceptionError> {
    let file: FixtureFile = serde_json::from_str(text).map_err(|e| PerceptionError::Parse {
        location: format!("{origin}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.fixtures.is_empty() {
        return Err(PerceptionError::Parse {
            location: origin.to_string(),
            message: "no fixtures".into(),
        });
    }
    let mut seen = std::collections::HashSet::new();
    for f in &file.fixtures {
        if f.image_uri.trim().is_empty() {
            return Err(PerceptionError::Parse {
                location: origin.to_string(),
                message: "fixture with empty image_uri".into(),
            });
        }
        if !seen.insert(f.image_uri.as_str()) {
            return Err(PerceptionError::Parse {
                location: origin.to_string(),
                message: format!("duplicate image_uri {:?}", f.image_uri),
            });
        }
    }
    Ok(file.fixtures)
}

pub fn load_fixtures(path: &Path) -> Result<Vec<Fixture>, PerceptionError> {
    let text = std::fs::read_to_string(path).map_err(|e| PerceptionError::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_fixtures(&text, &path.display().to_string())
}

/// Answers from a fixed `image → question → answer` table. Questions missing
/// from an image's table answer `unsure`; unknown images are an error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedVlm {
    answers: HashMap<String, HashMap<String, Answer>>,
}

impl ScriptedVlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fixtures(fixtures: &[Fixture]) -> Self {
        Self {
            answers: fixtures
                .iter()
                .map(|f| (f.image_uri.clone(), f.answers.clone()))
                .collect(),
        }
    }

    pub fn insert(&mut self, image_uri: impl Into<String>, answers: HashMap<String, Answer>) {
        self.answers.insert(image_uri.into(), answers);
    }

    /// Builds a client that replays a recorded query trace for one image.
    pub fn replay(image: &ImageRef, trace: &[(String, Answer)]) -> Self {
        let mut s = Self::new();
        s.insert(image.uri(), trace.iter().cloned().collect());
        s
    }
}

impl VlmClient for ScriptedVlm {
    fn ask(&self, image: &ImageRef, question: &str) -> Result<Answer, VlmError> {
        let table = self
            .answers
            .get(image.uri())
            .ok_or_else(|| VlmError::FixtureNotFound(image.uri().to_string()))?;
        Ok(table.get(question).copied().unwrap_or(Answer::Unsure))
    }
}

pub fn scripted_vlm_from_fixture(path: &Path) -> Result<ScriptedVlm, PerceptionError> {
    Ok(ScriptedVlm::from_fixtures(&load_fixtures(path)?))
}
