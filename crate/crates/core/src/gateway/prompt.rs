//! Prompt templates.
//!
//! Each purpose has one template file: a `# version: N` header followed by
//! `[system]` / `[user]` / `[assistant]` sections. `{{slot}}` placeholders
//! are filled from a slot map; an unbound slot is an error.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{GatewayError, Message, Purpose, Role};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub version: u32,
    pub sections: Vec<(Role, String)>,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let version = header
            .strip_prefix("# version:")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| GatewayError::Template(format!("missing `# version: N` header, got {header:?}")))?;
        let mut sections: Vec<(Role, String)> = Vec::new();
        for line in lines {
            let role = match line.trim() {
                "[system]" => Some(Role::System),
                "[user]" => Some(Role::User),
                "[assistant]" => Some(Role::Assistant),
                _ => None,
            };
            match (role, sections.last_mut()) {
                (Some(role), _) => sections.push((role, String::new())),
                (None, Some((_, body))) => {
                    if !body.is_empty() {
                        body.push('\n');
                    }
                    body.push_str(line);
                }
                (None, None) if line.trim().is_empty() => {}
                (None, None) => {
                    return Err(GatewayError::Template(format!("text before first section: {line:?}")))
                }
            }
        }
        if sections.is_empty() {
            return Err(GatewayError::Template("template has no sections".into()));
        }
        Ok(Self { version, sections })
    }

    /// Placeholder names used anywhere in the template.
    pub fn slots(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, body) in &self.sections {
            let mut rest = body.as_str();
            while let Some(start) = rest.find("{{") {
                let after = &rest[start + 2..];
                match after.find("}}") {
                    Some(end) => {
                        out.insert(after[..end].trim().to_string());
                        rest = &after[end + 2..];
                    }
                    None => break,
                }
            }
        }
        out
    }

    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<Vec<Message>, GatewayError> {
        self.sections
            .iter()
            .map(|(role, body)| Ok(Message::new(*role, fill(body, slots)?)))
            .collect()
    }
}

/// Single left-to-right pass, so slot values containing braces are never re-expanded.
fn fill(body: &str, slots: &BTreeMap<String, String>) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(body.len());
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = after[..end].trim();
        let value = slots
            .get(name)
            .ok_or_else(|| GatewayError::Template(format!("unbound slot `{name}`")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<Purpose, PromptTemplate>,
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        let sources = [
            (Purpose::QuestionGen, include_str!("../../prompts/question_gen.txt")),
            (Purpose::QualityScore, include_str!("../../prompts/quality_score.txt")),
            (Purpose::ThoughtGen, include_str!("../../prompts/thought_gen.txt")),
            (Purpose::Rerank, include_str!("../../prompts/rerank.txt")),
            (Purpose::Policy, include_str!("../../prompts/policy.txt")),
        ];
        let templates = sources
            .into_iter()
            .map(|(p, text)| (p, PromptTemplate::parse(text).expect("bundled prompt template parses")))
            .collect();
        Self { templates }
    }

    /// Builtins overridden by `<purpose>.txt` files found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, GatewayError> {
        let mut lib = Self::builtin();
        for purpose in Purpose::ALL {
            let path = dir.join(format!("{}.txt", purpose.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| GatewayError::Template(format!("{}: {e}", path.display())))?;
                let tpl = PromptTemplate::parse(&text)
                    .map_err(|e| GatewayError::Template(format!("{}: {e}", path.display())))?;
                lib.templates.insert(purpose, tpl);
            }
        }
        Ok(lib)
    }

    pub fn template(&self, purpose: Purpose) -> &PromptTemplate {
        &self.templates[&purpose]
    }

    pub fn render(&self, purpose: Purpose, slots: &BTreeMap<String, String>) -> Result<Vec<Message>, GatewayError> {
        self.template(purpose).render(slots)
    }
}

/// Renders a bundled template.
pub fn render_prompt(purpose: Purpose, slots: &BTreeMap<String, String>) -> Result<Vec<Message>, GatewayError> {
    PromptLibrary::builtin().render(purpose, slots)
}
