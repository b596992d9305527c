//! Produces the objects / anchors / relations documents, either from a
//! recorded fixture directory or from a chat-completion endpoint.

pub mod templates;

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::spec::{self, json_text, SceneDims, SpecError};
pub use templates::{render_prompt, PromptTemplate, TemplateError, TemplateId};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("network: {0}")]
    Network(String),
    #[error("credential environment variable `{0}` is not set")]
    MissingCredential(String),
    #[error("{document}: gave up after {attempts} attempt(s): {cause}")]
    RetriesExhausted {
        document: &'static str,
        attempts: u32,
        cause: String,
    },
    #[error("{document}: response is not a chat completion: {cause}")]
    InvalidJson { document: &'static str, cause: String },
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerMode {
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub mode: PlannerMode,
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key. No auth header
    /// is sent when unset.
    pub api_key_env: Option<String>,
    /// Header carrying the key; `Authorization` values get a `Bearer ` prefix.
    pub api_key_header: String,
    pub max_retries: u32,
    pub fixture_path: PathBuf,
    /// Optional recorded dialogue prepended to the user constraint.
    pub dialogue_path: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub timeout_secs: u64,
    /// Scene extent used to validate live replies.
    pub scene: SceneDims,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mode: PlannerMode::Fixture,
            endpoint_url: String::new(),
            api_key_env: None,
            api_key_header: "Authorization".into(),
            max_retries: 2,
            fixture_path: PathBuf::new(),
            dialogue_path: None,
            model: None,
            temperature: None,
            timeout_secs: 60,
            scene: SceneDims::Indoor {
                width: 6.0,
                length: 5.0,
                height: 3.0,
            },
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.mode == PlannerMode::Live && self.endpoint_url.trim().is_empty() {
            return Err(PlannerError::Config("live mode needs an endpoint url".into()));
        }
        self.scene.validated()?;
        Ok(())
    }
}

/// The three planning documents as raw JSON text.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDocuments {
    pub objects: String,
    pub anchors: String,
    pub relations: String,
    /// Scene extent recorded next to a fixture, if any.
    pub scene: Option<SceneDims>,
}

impl PlanDocuments {
    pub fn graph(&self, fallback_scene: SceneDims) -> Result<spec::ConstraintGraph, SpecError> {
        spec::parse_scene_spec(
            &self.objects,
            &self.anchors,
            &self.relations,
            self.scene.unwrap_or(fallback_scene),
        )
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// One JSON POST. Implemented over HTTP and by test doubles.
pub trait Transport {
    fn post(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<Value, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for HttpTransport {
    fn post(&self, url: &str, headers: &[(String, String)], body: &Value) -> Result<Value, TransportError> {
        let mut req = self.agent.post(url);
        for (k, v) in headers {
            req = req.header(k, v);
        }
        let mut resp = req.send_json(body).map_err(|e| TransportError(e.to_string()))?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| TransportError(format!("reading response: {e}")))
    }
}

/// Reads `objects.json`, `anchors.json`, `relations.json` and, when
/// present, `scene.json` from a fixture directory.
pub fn load_fixture(dir: &Path) -> Result<PlanDocuments, PlannerError> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name))
            .map_err(|e| PlannerError::Fixture(format!("{}: {e}", dir.join(name).display())))
    };
    let scene_path = dir.join("scene.json");
    let scene = if scene_path.exists() {
        Some(SceneDims::from_json(&read("scene.json")?)?)
    } else {
        None
    };
    Ok(PlanDocuments {
        objects: read("objects.json")?,
        anchors: read("anchors.json")?,
        relations: read("relations.json")?,
        scene,
    })
}

/// Plans a scene over HTTP in live mode; fixture mode never touches the network.
pub fn plan_scene(scene_text: &str, user_constraint: &str, config: &PlannerConfig) -> Result<PlanDocuments, PlannerError> {
    let http = HttpTransport::new(Duration::from_secs(config.timeout_secs.max(1)));
    plan_scene_with(scene_text, user_constraint, config, &http)
}

pub fn plan_scene_with(
    scene_text: &str,
    user_constraint: &str,
    config: &PlannerConfig,
    transport: &dyn Transport,
) -> Result<PlanDocuments, PlannerError> {
    config.validate()?;
    match config.mode {
        PlannerMode::Fixture => load_fixture(&config.fixture_path),
        PlannerMode::Live => LiveSession::new(config, transport, scene_text, user_constraint)?.run(),
    }
}

struct LiveSession<'a> {
    config: &'a PlannerConfig,
    transport: &'a dyn Transport,
    headers: Vec<(String, String)>,
    scene_text: &'a str,
    constraint: String,
}

impl<'a> LiveSession<'a> {
    fn new(
        config: &'a PlannerConfig,
        transport: &'a dyn Transport,
        scene_text: &'a str,
        user_constraint: &str,
    ) -> Result<Self, PlannerError> {
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(var) = &config.api_key_env {
            let key = std::env::var(var).map_err(|_| PlannerError::MissingCredential(var.clone()))?;
            let value = if config.api_key_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key
            };
            headers.push((config.api_key_header.clone(), value));
        }
        let mut constraint = user_constraint.to_string();
        if let Some(path) = &config.dialogue_path {
            let dialogue = std::fs::read_to_string(path)
                .map_err(|e| PlannerError::Fixture(format!("{}: {e}", path.display())))?;
            constraint = join_nonempty(dialogue.trim_end(), &constraint);
        }
        Ok(Self {
            config,
            transport,
            headers,
            scene_text,
            constraint,
        })
    }

    fn run(&self) -> Result<PlanDocuments, PlannerError> {
        let scene = self.config.scene;
        let objects = self.ask(TemplateId::Objects, self.scene_text, |doc| {
            spec::parse_objects(doc).map(|_| ())
        })?;
        let ids = spec::expand_instances(&spec::parse_objects(&objects)?)?;

        let anchors_input = json!({
            "scene_type": scene.type_label(),
            "scene_text": self.scene_text,
            "objects_list": ids,
        })
        .to_string();
        let anchors = self.ask(TemplateId::Anchors, &anchors_input, |doc| {
            spec::parse_anchors(doc, &ids, &scene).map(|_| ())
        })?;

        // One request per current object; replies are keyed by the other objects.
        let mut relations = Map::new();
        for current in &ids {
            let others: Vec<&String> = ids.iter().filter(|o| *o != current).collect();
            let input = json!({
                "scene_type": scene.type_label(),
                "scene_text": self.scene_text,
                "current_object": current,
                "objects_list": others,
            })
            .to_string();
            let reply = self.ask(TemplateId::Relations, &input, |doc| {
                let wrapped = json!({ current.as_str(): serde_json::from_str::<Value>(doc).unwrap_or(Value::Null) });
                spec::parse_relations(&wrapped.to_string(), &ids).map(|_| ())
            })?;
            let map: Value = serde_json::from_str(&reply).expect("validated above");
            if map.as_object().is_some_and(|m| !m.is_empty()) {
                relations.insert(current.clone(), map);
            }
        }
        let relations = Value::Object(relations).to_string();
        spec::parse_relations(&relations, &ids)?;
        Ok(PlanDocuments {
            objects,
            anchors,
            relations,
            scene: Some(scene),
        })
    }

    /// Sends one templated request, retrying until `validate` accepts the
    /// first JSON object of the reply. Returns that object as strict JSON.
    fn ask(
        &self,
        id: TemplateId,
        input: &str,
        validate: impl Fn(&str) -> Result<(), SpecError>,
    ) -> Result<String, PlannerError> {
        let template = PromptTemplate::builtin(id);
        let prompt = render_prompt(&template, &self.constraint, input)?;
        let mut body = json!({
            "messages": [
                {"role": "system", "content": "Answer with a single JSON object and nothing else."},
                {"role": "user", "content": prompt},
            ]
        });
        if let Some(m) = &self.config.model {
            body["model"] = json!(m);
        }
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        let attempts = self.config.max_retries + 1;
        let mut cause = String::new();
        for attempt in 1..=attempts {
            let resp = self
                .transport
                .post(&self.config.endpoint_url, &self.headers, &body)
                .map_err(|e| PlannerError::Network(e.0))?;
            let text = reply_text(&resp).ok_or_else(|| PlannerError::InvalidJson {
                document: id.document(),
                cause: "no choices[0].message.content".into(),
            })?;
            match json_text::normalize_reply(text) {
                None => cause = "reply contains no JSON object".into(),
                Some(doc) => match serde_json::from_str::<Value>(&doc) {
                    Err(e) => cause = format!("malformed JSON: {e}"),
                    Ok(_) => match validate(&doc) {
                        Ok(()) => return Ok(doc),
                        Err(e) => cause = e.to_string(),
                    },
                },
            }
            log::warn!("{}: attempt {attempt}/{attempts} rejected: {cause}", id.document());
        }
        Err(PlannerError::RetriesExhausted {
            document: id.document(),
            attempts,
            cause,
        })
    }
}

fn join_nonempty(a: &str, b: &str) -> String {
    match (a.is_empty(), b.is_empty()) {
        (true, _) => b.to_string(),
        (_, true) => a.to_string(),
        _ => format!("{a}\n{b}"),
    }
}

/// Text of the first choice, in either chat or completion shape.
fn reply_text(resp: &Value) -> Option<&str> {
    let choice = resp.get("choices")?.get(0)?;
    choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .or_else(|| choice.get("text").and_then(Value::as_str))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_shapes() {
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "{}"}}]});
        assert_eq!(reply_text(&chat), Some("{}"));
        let completion = json!({"choices": [{"text": "x"}]});
        assert_eq!(reply_text(&completion), Some("x"));
        assert_eq!(reply_text(&json!({"error": "no"})), None);
    }

    #[test]
    fn live_needs_endpoint() {
        let cfg = PlannerConfig {
            mode: PlannerMode::Live,
            ..PlannerConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(PlannerError::Config(_))));
    }
}
