use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::kg::{EntityId, KnowledgeGraph};
use crate::walk::{ReasoningPath, Structure};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholder {
    pub label: String,
    pub entity: EntityId,
    /// Surface name hidden behind the label.
    pub name: String,
}

/// A path rendered as `A --rel--> entity_1 --rel--> B` with intermediates hidden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedPath {
    pub text: String,
    pub placeholders: Vec<Placeholder>,
    pub topic_names: Vec<String>,
    pub answer_name: String,
    pub signature: String,
}

impl MaskedPath {
    /// The first placeholder name found in `text`, compared case-insensitively.
    pub fn leaked_name(&self, text: &str) -> Option<&str> {
        let lower = text.to_lowercase();
        self.placeholders
            .iter()
            .map(|p| p.name.trim())
            .filter(|n| !n.is_empty())
            .find(|n| lower.contains(&n.to_lowercase()))
    }
}

pub(crate) fn display_name(kg: &dyn KnowledgeGraph, id: &EntityId) -> Result<String, SynthError> {
    Ok(kg.entity(id)?.display_name().to_string())
}

/// Placeholders are numbered left to right, branch by branch for 2I paths.
pub fn mask_path(kg: &dyn KnowledgeGraph, path: &ReasoningPath) -> Result<MaskedPath, SynthError> {
    let mut placeholders: Vec<Placeholder> = Vec::new();
    let mut lines = Vec::with_capacity(path.branches.len());
    for branch in &path.branches {
        let mut line = display_name(kg, &branch[0].head)?;
        for (i, step) in branch.iter().enumerate() {
            let last = i + 1 == branch.len();
            let label = if last {
                display_name(kg, &step.tail)?
            } else if let Some(p) = placeholders.iter().find(|p| p.entity == step.tail) {
                p.label.clone()
            } else {
                let label = format!("entity_{}", placeholders.len() + 1);
                placeholders.push(Placeholder {
                    label: label.clone(),
                    entity: step.tail.clone(),
                    name: display_name(kg, &step.tail)?,
                });
                label
            };
            line.push_str(&format!(" --{}--> {label}", step.relation));
        }
        lines.push(line);
    }
    let text = if path.structure == Structure::Conj2I {
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| format!("branch {}: {l}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        lines.join("\n")
    };
    Ok(MaskedPath {
        text,
        placeholders,
        topic_names: path
            .topic_entities
            .iter()
            .map(|e| display_name(kg, e))
            .collect::<Result<_, _>>()?,
        answer_name: display_name(kg, &path.answer)?,
        signature: path.signature.clone(),
    })
}
