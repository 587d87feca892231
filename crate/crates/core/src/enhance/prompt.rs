//! Prompt catalog: templated system + user messages with one `[content]`
//! slot per referenced paper. Arity-1 templates drive automatic enhancement;
//! the arity-2 comparative template is reserved for explicit pairwise runs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONTENT_SLOT: &str = "[content]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub system_message: String,
    pub body: String,
    pub arity: usize,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptCatalog {
    pub templates: Vec<PromptTemplate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

impl PromptCatalog {
    /// The catalog bundled with the engine.
    pub fn builtin() -> Self {
        let catalog: Self = serde_json::from_str(include_str!("../../data/prompt_catalog.json"))
            .expect("bundled catalog is valid");
        catalog.validate().expect("bundled catalog passes validation");
        catalog
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let catalog: Self = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::Validation("prompt catalog has no templates".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Validation(format!("duplicate template id `{}`", t.id)));
            }
            if !(1..=2).contains(&t.arity) {
                return Err(Error::Validation(format!(
                    "template `{}` has arity {}, expected 1 or 2",
                    t.id, t.arity
                )));
            }
            let slots = t.body.matches(CONTENT_SLOT).count();
            if slots != t.arity {
                return Err(Error::Validation(format!(
                    "template `{}` has {slots} content slot(s) but arity {}",
                    t.id, t.arity
                )));
            }
        }
        if self.unary_templates().is_empty() {
            return Err(Error::Validation(
                "prompt catalog needs at least one arity-1 template".into(),
            ));
        }
        Ok(())
    }

    /// Templates eligible for the automatic per-node draw.
    pub fn unary_templates(&self) -> Vec<&PromptTemplate> {
        self.templates.iter().filter(|t| t.arity == 1).collect()
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }
}

/// Substitutes `texts` into the template's content slots in order and
/// returns the `[system, user]` message pair.
pub fn render_prompt(template: &PromptTemplate, texts: &[&str]) -> Result<Vec<ChatMessage>> {
    if texts.len() != template.arity {
        return Err(Error::Argument(format!(
            "template `{}` expects {} text(s), got {}",
            template.id,
            template.arity,
            texts.len()
        )));
    }
    let parts: Vec<&str> = template.body.split(CONTENT_SLOT).collect();
    debug_assert_eq!(parts.len(), template.arity + 1, "validated at load time");
    let mut user = String::new();
    for (i, part) in parts.iter().enumerate() {
        user.push_str(part);
        if let Some(text) = texts.get(i) {
            user.push_str(text);
        }
    }
    Ok(vec![
        ChatMessage::system(&template.system_message),
        ChatMessage::user(user),
    ])
}
