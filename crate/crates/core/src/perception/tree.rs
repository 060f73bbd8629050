use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Answer, PerceptionError};

/// Longest allowed root-to-leaf question path.
pub const MAX_DEPTH: usize = 5;
pub const EXPECTED_LEAVES: usize = 9;

/// JSON form: `{"question": "...", "yes": <node>, "no": <node>}` for internal
/// nodes and `{"task_id": "...", "label": "..."}` for leaves (`label` is
/// optional).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Question {
        question: String,
        yes: Box<Node>,
        no: Box<Node>,
    },
    Leaf {
        task_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    root: Node,
    labels: HashMap<String, Option<String>>,
}

fn err(msg: impl Into<String>) -> PerceptionError {
    PerceptionError::InvalidTree(msg.into())
}

impl DecisionTree {
    /// Validates the tree against the knowledge-base task ids: exactly nine
    /// leaves, in bijection with `task_ids`, and no path deeper than
    /// [`MAX_DEPTH`] questions.
    pub fn new<'a>(root: Node, task_ids: impl IntoIterator<Item = &'a str>) -> Result<Self, PerceptionError> {
        let mut leaves = Vec::new();
        collect(&root, 0, &mut leaves)?;
        if leaves.len() != EXPECTED_LEAVES {
            return Err(err(format!("expected {EXPECTED_LEAVES} leaves, found {}", leaves.len())));
        }
        let mut labels = HashMap::new();
        for (id, label, _) in &leaves {
            if labels.insert(id.to_string(), label.map(str::to_string)).is_some() {
                return Err(err(format!("task {id:?} appears on more than one leaf")));
            }
        }
        let tree_ids: BTreeSet<&str> = labels.keys().map(String::as_str).collect();
        let kb_ids: BTreeSet<&str> = task_ids.into_iter().collect();
        if tree_ids != kb_ids {
            let missing: Vec<_> = kb_ids.difference(&tree_ids).collect();
            let extra: Vec<_> = tree_ids.difference(&kb_ids).collect();
            return Err(err(format!(
                "leaves must match knowledge-base tasks (missing {missing:?}, unknown {extra:?})"
            )));
        }
        Ok(Self { root, labels })
    }

    pub fn from_json_str<'a>(
        s: &str,
        origin: &str,
        task_ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, PerceptionError> {
        let root: Node = serde_json::from_str(s).map_err(|e| PerceptionError::Parse {
            location: format!("{origin}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::new(root, task_ids)
    }

    pub fn load<'a>(path: &Path, task_ids: impl IntoIterator<Item = &'a str>) -> Result<Self, PerceptionError> {
        let text = std::fs::read_to_string(path).map_err(|e| PerceptionError::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string(), task_ids)
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn task_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn label_text(&self, task_id: &str) -> Option<String> {
        self.labels.get(task_id).cloned().flatten()
    }

    pub fn depth(&self) -> usize {
        fn go(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Question { yes, no, .. } => 1 + go(yes).max(go(no)),
            }
        }
        go(&self.root)
    }

    /// The answers that lead from the root to `task_id`'s leaf.
    pub fn path_to(&self, task_id: &str) -> Option<Vec<(String, Answer)>> {
        fn go(n: &Node, target: &str, path: &mut Vec<(String, Answer)>) -> bool {
            match n {
                Node::Leaf { task_id, .. } => task_id == target,
                Node::Question { question, yes, no } => {
                    for (answer, child) in [(Answer::Yes, yes), (Answer::No, no)] {
                        path.push((question.clone(), answer));
                        if go(child, target, path) {
                            return true;
                        }
                        path.pop();
                    }
                    false
                }
            }
        }
        let mut path = Vec::new();
        go(&self.root, task_id, &mut path).then_some(path)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.root).expect("tree serializes")
    }
}

fn collect<'a>(
    node: &'a Node,
    depth: usize,
    out: &mut Vec<(&'a str, Option<&'a str>, usize)>,
) -> Result<(), PerceptionError> {
    match node {
        Node::Leaf { task_id, label } => {
            if task_id.trim().is_empty() {
                return Err(err("leaf task_id must be non-empty"));
            }
            if depth > MAX_DEPTH {
                return Err(err(format!("leaf {task_id:?} is {depth} questions deep (max {MAX_DEPTH})")));
            }
            if label.as_deref().is_some_and(|l| l.trim().is_empty()) {
                return Err(err(format!("leaf {task_id:?} has an empty label")));
            }
            out.push((task_id, label.as_deref(), depth));
            Ok(())
        }
        Node::Question { question, yes, no } => {
            if question.trim().is_empty() {
                return Err(err("question text must be non-empty"));
            }
            collect(yes, depth + 1, out)?;
            collect(no, depth + 1, out)
        }
    }
}
