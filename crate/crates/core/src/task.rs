//! Control tasks and their prompt templates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::errors::{Error, Result};

/// What attribute a run steers toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ToxicityMitigation,
    SentimentToPositive,
    SentimentToNegative,
}

impl Task {
    pub const ALL: [Task; 3] = [
        Task::ToxicityMitigation,
        Task::SentimentToPositive,
        Task::SentimentToNegative,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::ToxicityMitigation => "toxicity_mitigation",
            Task::SentimentToPositive => "sentiment_to_positive",
            Task::SentimentToNegative => "sentiment_to_negative",
        }
    }

    /// Whether the headline attribute column reports `1 - score` under a
    /// lower-is-better heading ("Toxicity") instead of a success rate.
    pub fn reports_inverted_attribute(&self) -> bool {
        matches!(self, Task::ToxicityMitigation)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-task prompt strings for the INJECTION baseline and the PREADD prefix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskPrompts {
    pub injection: String,
    pub preadd_prefix: String,
}

/// Template table keyed by task. The bundled defaults ship in
/// `assets/task_prompts.toml`; a config may point at an override file with
/// the same layout.
#[derive(Debug, Clone)]
pub struct TaskTemplates {
    prompts: BTreeMap<Task, TaskPrompts>,
}

impl TaskTemplates {
    pub fn bundled() -> Self {
        Self::from_toml_str(include_str!("../assets/task_prompts.toml"))
            .expect("bundled task templates parse")
    }

    pub fn from_toml_str(raw: &str) -> Result<Self> {
        let parsed: BTreeMap<String, TaskPrompts> = toml::from_str(raw)
            .map_err(|e| Error::invalid_input(format!("task templates: {e}")))?;
        let mut prompts = BTreeMap::new();
        for (key, value) in parsed {
            let task = Task::ALL
                .iter()
                .find(|t| t.as_str() == key)
                .copied()
                .ok_or_else(|| Error::invalid_input(format!("unknown task {key:?}")))?;
            prompts.insert(task, value);
        }
        for task in Task::ALL {
            if !prompts.contains_key(&task) {
                return Err(Error::invalid_input(format!(
                    "task templates missing entry for {task}"
                )));
            }
        }
        Ok(Self { prompts })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn for_task(&self, task: Task) -> &TaskPrompts {
        &self.prompts[&task]
    }
}
