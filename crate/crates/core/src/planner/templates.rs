//! Prompt templates for the three planning requests.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const USER_CONSTRAINT: &str = "User Constraint";
pub const INPUT: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Objects,
    Anchors,
    Relations,
}

impl TemplateId {
    pub fn document(self) -> &'static str {
        match self {
            Self::Objects => "objects",
            Self::Anchors => "anchors",
            Self::Relations => "relations",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template {template:?}: unresolved placeholder {{{name}}}")]
    Unresolved { template: TemplateId, name: String },
    #[error("template {template:?}: placeholder {{{name}}} appears {count} times")]
    Repeated {
        template: TemplateId,
        name: String,
        count: usize,
    },
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([A-Za-z][A-Za-z ]*)\}").expect("valid pattern"));

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
}

impl PromptTemplate {
    /// Checks that every placeholder is known and appears exactly once.
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, TemplateError> {
        let t = Self { id, body: body.into() };
        for name in t.placeholders() {
            if name != USER_CONSTRAINT && name != INPUT {
                return Err(TemplateError::Unresolved { template: id, name });
            }
            let count = PLACEHOLDER
                .captures_iter(&t.body)
                .filter(|c| c[1] == name)
                .count();
            if count != 1 {
                return Err(TemplateError::Repeated {
                    template: id,
                    name,
                    count,
                });
            }
        }
        Ok(t)
    }

    pub fn builtin(id: TemplateId) -> Self {
        let body = match id {
            TemplateId::Objects => OBJECTS,
            TemplateId::Anchors => ANCHORS,
            TemplateId::Relations => RELATIONS,
        };
        Self::new(id, body).expect("built-in templates are valid")
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        PLACEHOLDER
            .captures_iter(&self.body)
            .map(|c| c[1].to_string())
            .filter(|n| seen.insert(n.clone()))
            .collect()
    }
}

/// Substitutes both placeholders verbatim.
pub fn render_prompt(
    template: &PromptTemplate,
    user_constraint: &str,
    input: &str,
) -> Result<String, TemplateError> {
    let mut bad = None;
    let out = PLACEHOLDER.replace_all(&template.body, |c: &regex::Captures| match &c[1] {
        USER_CONSTRAINT => user_constraint.to_string(),
        INPUT => input.to_string(),
        other => {
            bad.get_or_insert_with(|| other.to_string());
            c[0].to_string()
        }
    });
    match bad {
        Some(name) => Err(TemplateError::Unresolved {
            template: template.id,
            name,
        }),
        None => Ok(out.into_owned()),
    }
}

const OBJECTS: &str = r#"You are a professional scene designer. Based on the user requirements {User Constraint} and your domain knowledge, your task is to generate a list of objects commonly found in the described scene.  For each object, please include its frequency of appearance, typical dimensions ([x, y, z] in meters), and a brief description starting with "A DSLR photo of". Ensure that the object descriptions are consistent with the scene's style and reflect common human understanding. Output should be formatted as follows in JSON:
Input:
a living room
Output:
{"sofa": {"number":2, "size":[2.0,1.0,0.8], "description":"A DSLR photo of a plush, grey sectional sofa, featuring deep cushions and soft fabric."}, "coffee table":{"number":1, "size":[1.5,1.0,0.5], "description": "A DSLR photo of a round, glass-top coffee table with a modern design and a sturdy metal base."},
"TV":{"number":1, "size":[1.4, 0.8, 0.1], "description": "A DSLR photo of a large flat-screen TV, featuring a wide, slim display on the TV stand."},
"TV stand": {"number":1, "size":[1.0, 0.4, 0.5], "description": "A DSLR photo of a sleek, modern TV stand featuring open shelving and a minimalist design."},
"potted plant": {"number":2, "size":[0.5, 0.5, 1.0], "description": "A DSLR photo of a vibrant, lush plant with broad green leaves in a decorative pot."} }
Now, let's design the scene: {input}"#;

const ANCHORS: &str = r#"You are a scene placement expert. Based on the user requirements {User Constraint} and your domain knowledge, your task is to determine the spatial relationship between an object and its environment based on the object's name and common human understanding. There are four relationships to choose from: 1. CENTER, the object is in the center of the scene 2. SIDE, the object is at the boundary of the scene 3. CORNER, the object is in the corner of the scene 4. OTHERS, the object is in other places. When dealing with multiple similar objects, arrange their positions reasonably to prevent conflicts. Please return in the following example format in JSON format.
Input:
{"scene_type":"indoor scene", "scene_text":"a living room", "objects_list":["sofa1", "sofa2", "coffee table1", "TV1","TV stand1", "potted plant1", "potted plant2"]}
Output:
{"sofa1": SIDE, "sofa2": SIDE, "coffee table1": CENTER, "TV1": SIDE, "TV stand1": SIDE, "potted plant1": CORNER, "potted plant2": CORNER}
Now, I need select for {input}"#;

const RELATIONS: &str = r#"You are an expert in scene arrangement. Based on the user requirements {User Constraint}, the given environment, and your domain knowledge, your task is to select objects from the provided list that are relevant to the current object based on common human usage, and describe their spatial or functional relationships. The possible relationships include: 1.LEFT, indicating the current object is at the left of the selected object. 2.RIGHT, indicating the current object is at the right of the selected object. 3.FRONT, indicating the current object is at the front of the selected object. 4.BEHIND, indicating the current object is at the behind of the selected object. 5.OVER, indicating the current object is above the selected object. 6.UNDER, indicating the current object is below the selected object. 7.NEXT, indicating the current object is near the selected object. 8.OPPOSITE, indicating the current object is opposite the selected object. Output the selected object and their relationship in JSON format. For example:
Input:
{"scene_type": "indoor scene", "scene_text": "a living room","current_object": "sofa1", "objects_list": ["sofa2","coffee table1","TV1", "TV stand1", "potted plant1", "potted plant2"]}
Output:
{"sofa2": NEXT, "coffee table1": FRONT, "TV1": OPPOSITE, "TV stand1": OPPOSITE}
Now, I need design for {input}"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objects_prompt_starts_and_ends_as_expected() {
        let t = PromptTemplate::builtin(TemplateId::Objects);
        let out = render_prompt(&t, "a cozy style", "a living room").unwrap();
        assert!(out.starts_with("You are a professional scene designer"));
        assert!(out.ends_with("a living room"));
        assert!(out.contains("requirements a cozy style and"));
        assert!(PLACEHOLDER.find(&out).is_none());
    }

    #[test]
    fn empty_constraint_substitutes_empty() {
        let t = PromptTemplate::builtin(TemplateId::Anchors);
        let out = render_prompt(&t, "", "X").unwrap();
        assert!(out.contains("requirements  and your domain"));
        assert_eq!(out, t.body.replace("{User Constraint}", "").replace("{input}", "X"));
    }

    #[test]
    fn undeclared_placeholder_is_rejected() {
        assert!(matches!(
            PromptTemplate::new(TemplateId::Objects, "Hi {User Constraint} {style} {input}"),
            Err(TemplateError::Unresolved { .. })
        ));
        assert!(matches!(
            PromptTemplate::new(TemplateId::Objects, "{input} {input}"),
            Err(TemplateError::Repeated { count: 2, .. })
        ));
        let raw = PromptTemplate {
            id: TemplateId::Relations,
            body: "{mood} {input}".into(),
        };
        assert_eq!(
            render_prompt(&raw, "", "x"),
            Err(TemplateError::Unresolved {
                template: TemplateId::Relations,
                name: "mood".into()
            })
        );
    }

    #[test]
    fn builtins_declare_both_placeholders() {
        for id in [TemplateId::Objects, TemplateId::Anchors, TemplateId::Relations] {
            assert_eq!(PromptTemplate::builtin(id).placeholders(), vec![USER_CONSTRAINT, INPUT]);
        }
    }
}
