//! Scene planning documents and the hybrid constraint graph built from them.
//!
//! Three JSON documents describe a scene: the object list (category, count,
//! real-world size, description), the anchor region of every instance, and
//! per-object pairwise relations. An edge `(A, B, FRONT)` reads "A is at the
//! front of B".

pub mod json_text;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("{document}: schema violation at `{path}`: {message}")]
    Schema {
        document: &'static str,
        path: String,
        message: String,
    },
    #[error("relations: unknown relation `{name}` between `{subject}` and `{object}`")]
    UnknownRelation {
        subject: String,
        object: String,
        name: String,
    },
    #[error("anchors: unknown anchor region `{name}` for `{instance}`")]
    UnknownAnchor { instance: String, name: String },
    #[error("anchors: CORNER is not available in an outdoor scene (instance `{instance}`)")]
    CornerOutdoor { instance: String },
    #[error("duplicate instance id `{0}`")]
    DuplicateInstance(String),
    #[error("{document}: unknown instance `{id}`")]
    UnknownInstance { document: &'static str, id: String },
    #[error("anchors: instance `{0}` has no anchor region")]
    MissingAnchor(String),
    #[error("relations: `{0}` cannot relate to itself")]
    SelfEdge(String),
    #[error("relations: `{subject}` is both {first} and {second} of `{object}`")]
    Contradiction {
        subject: String,
        object: String,
        first: Relation,
        second: Relation,
    },
    #[error("object `{name}`: count must be at least 1")]
    ZeroCount { name: String },
    #[error("scene: {0}")]
    BadScene(String),
}

fn schema(document: &'static str, path: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Schema {
        document,
        path: path.into(),
        message: message.into(),
    }
}

/// One object category proposed by the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub name: String,
    pub count: u32,
    /// x/y/z extents in meters.
    pub size: [f64; 3],
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AnchorRegion {
    Center,
    Side,
    Corner,
    Others,
}

impl AnchorRegion {
    pub const ALL: [AnchorRegion; 4] = [Self::Center, Self::Side, Self::Corner, Self::Others];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Center => "CENTER",
            Self::Side => "SIDE",
            Self::Corner => "CORNER",
            Self::Others => "OTHERS",
        }
    }
}

impl fmt::Display for AnchorRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnchorRegion {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "CENTER" | "CENTRE" => Self::Center,
            "SIDE" => Self::Side,
            "CORNER" => Self::Corner,
            "OTHERS" | "OTHER" => Self::Others,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Relation {
    Left,
    Right,
    Front,
    Behind,
    Over,
    Under,
    Next,
    Opposite,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Self::Left,
        Self::Right,
        Self::Front,
        Self::Behind,
        Self::Over,
        Self::Under,
        Self::Next,
        Self::Opposite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "LEFT",
            Self::Right => "RIGHT",
            Self::Front => "FRONT",
            Self::Behind => "BEHIND",
            Self::Over => "OVER",
            Self::Under => "UNDER",
            Self::Next => "NEXT",
            Self::Opposite => "OPPOSITE",
        }
    }

    /// NEXT and OPPOSITE read the same in both directions.
    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::Next | Self::Opposite)
    }

    pub fn is_vertical(self) -> bool {
        matches!(self, Self::Over | Self::Under)
    }

    /// The relation that cannot hold together with `self` for the same ordered pair.
    pub fn contrary(self) -> Option<Relation> {
        Some(match self {
            Self::Left => Self::Right,
            Self::Right => Self::Left,
            Self::Front => Self::Behind,
            Self::Behind => Self::Front,
            Self::Over => Self::Under,
            Self::Under => Self::Over,
            Self::Next | Self::Opposite => return None,
        })
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "LEFT" => Self::Left,
            "RIGHT" => Self::Right,
            "FRONT" => Self::Front,
            "BEHIND" | "BACK" => Self::Behind,
            "OVER" => Self::Over,
            "UNDER" => Self::Under,
            "NEXT" => Self::Next,
            "OPPOSITE" => Self::Opposite,
            _ => return Err(()),
        })
    }
}

/// Scene extent. Indoor scenes are a `width × length × height` box centered
/// on the origin with the floor at z = 0; outdoor scenes are a disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneDims {
    Indoor { width: f64, length: f64, height: f64 },
    Outdoor { radius: f64 },
}

impl SceneDims {
    pub fn indoor(width: f64, length: f64, height: f64) -> Result<Self, SpecError> {
        Self::Indoor {
            width,
            length,
            height,
        }
        .validated()
    }

    pub fn outdoor(radius: f64) -> Result<Self, SpecError> {
        Self::Outdoor { radius }.validated()
    }

    pub fn validated(self) -> Result<Self, SpecError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let valid = match self {
            Self::Indoor {
                width,
                length,
                height,
            } => ok(width) && ok(length) && ok(height),
            Self::Outdoor { radius } => ok(radius),
        };
        if valid {
            Ok(self)
        } else {
            Err(SpecError::BadScene(format!("all dimensions must be > 0, got {self:?}")))
        }
    }

    pub fn is_outdoor(&self) -> bool {
        matches!(self, Self::Outdoor { .. })
    }

    pub fn type_label(&self) -> &'static str {
        match self {
            Self::Indoor { .. } => "indoor scene",
            Self::Outdoor { .. } => "outdoor scene",
        }
    }

    /// Half the scene diameter: half the floor diagonal indoors, the radius outdoors.
    pub fn radius(&self) -> f64 {
        match *self {
            Self::Indoor { width, length, .. } => 0.5 * width.hypot(length),
            Self::Outdoor { radius } => radius,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| schema("scene", "$", e.to_string()))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self, SpecError> {
        let dims: SceneDims = serde_json::from_value(value.clone())
            .map_err(|e| schema("scene", "$", e.to_string()))?;
        dims.validated()
    }
}

/// One placed-to-be object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: String,
    pub category: String,
    pub size: [f64; 3],
    pub description: String,
    pub anchor: AnchorRegion,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub subject: String,
    pub object: String,
    pub relation: Relation,
}

/// Objects, their anchor regions and the pairwise relations between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintGraph {
    pub scene: SceneDims,
    pub nodes: Vec<ObjectNode>,
    pub edges: Vec<Edge>,
}

/// Lookup key for instance ids: matching is case-insensitive.
pub fn id_key(id: &str) -> String {
    normalize_name(id).to_ascii_lowercase()
}

/// Trims and collapses internal whitespace; case is preserved.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_objects(text: &str) -> Result<Vec<ObjectSpec>, SpecError> {
    const DOC: &str = "objects";
    let root = parse_document(DOC, text)?;
    let mut out = Vec::with_capacity(root.len());
    for (raw_name, entry) in &root {
        let name = normalize_name(raw_name);
        if name.is_empty() {
            return Err(schema(DOC, "$", "empty object name"));
        }
        let obj = entry
            .as_object()
            .ok_or_else(|| schema(DOC, name.clone(), "expected an object"))?;
        let count = match obj.get("number") {
            Some(Value::Number(n)) => n
                .as_u64()
                .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
                .ok_or_else(|| schema(DOC, format!("{name}.number"), "expected a non-negative integer"))?,
            Some(_) => return Err(schema(DOC, format!("{name}.number"), "expected an integer")),
            None => return Err(schema(DOC, format!("{name}.number"), "missing field")),
        };
        if count == 0 {
            return Err(SpecError::ZeroCount { name });
        }
        let size = match obj.get("size") {
            Some(Value::Array(a)) if a.len() == 3 => {
                let mut s = [0.0; 3];
                for (i, v) in a.iter().enumerate() {
                    s[i] = v
                        .as_f64()
                        .filter(|x| *x > 0.0 && x.is_finite())
                        .ok_or_else(|| schema(DOC, format!("{name}.size[{i}]"), "expected a positive number"))?;
                }
                s
            }
            Some(_) => return Err(schema(DOC, format!("{name}.size"), "expected [x, y, z]")),
            None => return Err(schema(DOC, format!("{name}.size"), "missing field")),
        };
        let description = match obj.get("description") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            Some(_) => return Err(schema(DOC, format!("{name}.description"), "expected non-empty text")),
            None => return Err(schema(DOC, format!("{name}.description"), "missing field")),
        };
        out.push(ObjectSpec {
            name,
            count: u32::try_from(count).map_err(|_| schema(DOC, format!("{raw_name}.number"), "too large"))?,
            size,
            description,
        });
    }
    Ok(out)
}

/// `name + ordinal` for every replica, ordinals starting at 1.
pub fn expand_instances(objects: &[ObjectSpec]) -> Result<Vec<String>, SpecError> {
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    for o in objects {
        if o.count < 1 {
            return Err(SpecError::ZeroCount { name: o.name.clone() });
        }
        for k in 1..=o.count {
            let id = format!("{}{}", normalize_name(&o.name), k);
            if !seen.insert(id_key(&id)) {
                return Err(SpecError::DuplicateInstance(id));
            }
            ids.push(id);
        }
    }
    Ok(ids)
}

fn parse_document(document: &'static str, text: &str) -> Result<Map<String, Value>, SpecError> {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(first) => {
            let fixed = json_text::normalize_reply(text)
                .ok_or_else(|| schema(document, "$", first.to_string()))?;
            serde_json::from_str(&fixed).map_err(|e| schema(document, "$", e.to_string()))?
        }
    };
    match value {
        Value::Object(m) => Ok(m),
        _ => Err(schema(document, "$", "expected a JSON object")),
    }
}

/// Resolves instance names case-insensitively against the known ids.
struct IdIndex<'a> {
    by_key: HashMap<String, &'a str>,
}

impl<'a> IdIndex<'a> {
    fn new(ids: &'a [String]) -> Self {
        Self {
            by_key: ids.iter().map(|id| (id_key(id), id.as_str())).collect(),
        }
    }

    fn resolve(&self, document: &'static str, raw: &str) -> Result<&'a str, SpecError> {
        self.by_key
            .get(&id_key(raw))
            .copied()
            .ok_or_else(|| SpecError::UnknownInstance {
                document,
                id: raw.to_string(),
            })
    }
}

pub fn parse_anchors(
    text: &str,
    ids: &[String],
    scene: &SceneDims,
) -> Result<HashMap<String, AnchorRegion>, SpecError> {
    const DOC: &str = "anchors";
    let root = parse_document(DOC, text)?;
    let index = IdIndex::new(ids);
    let mut out = HashMap::new();
    for (raw, v) in &root {
        let id = index.resolve(DOC, raw)?;
        let name = v
            .as_str()
            .ok_or_else(|| schema(DOC, raw.clone(), "expected a region name"))?;
        let region: AnchorRegion = name.parse().map_err(|_| SpecError::UnknownAnchor {
            instance: id.to_string(),
            name: name.to_string(),
        })?;
        if region == AnchorRegion::Corner && scene.is_outdoor() {
            return Err(SpecError::CornerOutdoor {
                instance: id.to_string(),
            });
        }
        if out.insert(id.to_string(), region).is_some() {
            return Err(SpecError::DuplicateInstance(id.to_string()));
        }
    }
    if let Some(missing) = ids.iter().find(|id| !out.contains_key(id.as_str())) {
        return Err(SpecError::MissingAnchor(missing.clone()));
    }
    Ok(out)
}

/// Parses `{subject: {object: RELATION}}` into deduplicated edges.
pub fn parse_relations(text: &str, ids: &[String]) -> Result<Vec<Edge>, SpecError> {
    const DOC: &str = "relations";
    let root = parse_document(DOC, text)?;
    let index = IdIndex::new(ids);
    let mut edges = Vec::new();
    for (raw_subject, inner) in &root {
        let subject = index.resolve(DOC, raw_subject)?;
        let inner = inner
            .as_object()
            .ok_or_else(|| schema(DOC, raw_subject.clone(), "expected an object of relations"))?;
        for (raw_object, rel) in inner {
            let object = index.resolve(DOC, raw_object)?;
            let name = rel
                .as_str()
                .ok_or_else(|| schema(DOC, format!("{raw_subject}.{raw_object}"), "expected a relation name"))?;
            let relation: Relation = name.parse().map_err(|_| SpecError::UnknownRelation {
                subject: subject.to_string(),
                object: object.to_string(),
                name: name.to_string(),
            })?;
            edges.push(Edge {
                subject: subject.to_string(),
                object: object.to_string(),
                relation,
            });
        }
    }
    dedupe_edges(edges)
}

/// Drops repeated and mirrored symmetric edges; rejects self-edges and
/// contradictory pairs.
pub fn dedupe_edges(edges: Vec<Edge>) -> Result<Vec<Edge>, SpecError> {
    let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
    let mut seen: HashSet<(String, String, Relation)> = HashSet::new();
    for e in edges {
        if id_key(&e.subject) == id_key(&e.object) {
            return Err(SpecError::SelfEdge(e.subject));
        }
        let (s, o) = (id_key(&e.subject), id_key(&e.object));
        if seen.contains(&(s.clone(), o.clone(), e.relation)) {
            continue;
        }
        if e.relation.is_symmetric() && seen.contains(&(o.clone(), s.clone(), e.relation)) {
            continue;
        }
        if let Some(c) = e.relation.contrary() {
            if seen.contains(&(s.clone(), o.clone(), c)) {
                return Err(SpecError::Contradiction {
                    subject: e.subject,
                    object: e.object,
                    first: c,
                    second: e.relation,
                });
            }
        }
        // "A over B" with "B over A" cannot both hold either.
        if e.relation.is_vertical() && seen.contains(&(o.clone(), s.clone(), e.relation)) {
            return Err(SpecError::Contradiction {
                subject: e.subject,
                object: e.object,
                first: e.relation,
                second: e.relation,
            });
        }
        seen.insert((s, o, e.relation));
        out.push(e);
    }
    Ok(out)
}

pub fn parse_scene_spec(
    objects_json: &str,
    anchors_json: &str,
    relations_json: &str,
    scene: SceneDims,
) -> Result<ConstraintGraph, SpecError> {
    let scene = scene.validated()?;
    let objects = parse_objects(objects_json)?;
    let ids = expand_instances(&objects)?;
    let anchors = parse_anchors(anchors_json, &ids, &scene)?;
    let edges = parse_relations(relations_json, &ids)?;
    let mut nodes = Vec::with_capacity(ids.len());
    let mut ids_iter = ids.iter();
    for o in &objects {
        for _ in 0..o.count {
            let id = ids_iter.next().expect("one id per replica");
            nodes.push(ObjectNode {
                id: id.clone(),
                category: o.name.clone(),
                size: o.size,
                description: o.description.clone(),
                anchor: anchors[id.as_str()],
            });
        }
    }
    Ok(ConstraintGraph { scene, nodes, edges })
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown instance `{0}`")]
    UnknownNode(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

impl ConstraintGraph {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        let key = id_key(id);
        self.nodes.iter().position(|n| id_key(&n.id) == key)
    }

    pub fn node(&self, id: &str) -> Option<&ObjectNode> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    /// Edges touching `id`, in either direction.
    pub fn incident<'a>(&'a self, id: &str) -> impl Iterator<Item = &'a Edge> + 'a {
        let key = id_key(id);
        self.edges
            .iter()
            .filter(move |e| id_key(&e.subject) == key || id_key(&e.object) == key)
    }

    pub fn degree(&self, id: &str) -> Result<usize, GraphError> {
        self.node_index(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        Ok(self.incident(id).count())
    }

    /// Neighbor ids of `id` (deduplicated, in edge order).
    pub fn neighbors(&self, id: &str) -> Vec<String> {
        let key = id_key(id);
        let mut out: Vec<String> = Vec::new();
        for e in self.incident(id) {
            let other = if id_key(&e.subject) == key { &e.object } else { &e.subject };
            if !out.iter().any(|o| o == other) {
                out.push(other.clone());
            }
        }
        out
    }

    pub fn add_node(&mut self, node: ObjectNode) -> Result<(), GraphError> {
        if self.node_index(&node.id).is_some() {
            return Err(SpecError::DuplicateInstance(node.id).into());
        }
        if node.anchor == AnchorRegion::Corner && self.scene.is_outdoor() {
            return Err(SpecError::CornerOutdoor { instance: node.id }.into());
        }
        self.nodes.push(node);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        for id in [&edge.subject, &edge.object] {
            if self.node_index(id).is_none() {
                return Err(GraphError::UnknownNode(id.clone()));
            }
        }
        let mut edges = std::mem::take(&mut self.edges);
        edges.push(edge);
        match dedupe_edges(edges.clone()) {
            Ok(deduped) => {
                self.edges = deduped;
                Ok(())
            }
            Err(e) => {
                edges.pop();
                self.edges = edges;
                Err(e.into())
            }
        }
    }

    /// Removes a node and every edge touching it.
    pub fn remove_node(&mut self, id: &str) -> Result<ObjectNode, GraphError> {
        let idx = self
            .node_index(id)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        let node = self.nodes.remove(idx);
        let key = id_key(&node.id);
        self.edges
            .retain(|e| id_key(&e.subject) != key && id_key(&e.object) != key);
        Ok(node)
    }

    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let g: ConstraintGraph =
            serde_json::from_str(text).map_err(|e| schema("graph", "$", e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        self.scene.validated()?;
        let mut keys = HashSet::new();
        for n in &self.nodes {
            if !keys.insert(id_key(&n.id)) {
                return Err(SpecError::DuplicateInstance(n.id.clone()));
            }
            if n.anchor == AnchorRegion::Corner && self.scene.is_outdoor() {
                return Err(SpecError::CornerOutdoor {
                    instance: n.id.clone(),
                });
            }
        }
        for e in &self.edges {
            for id in [&e.subject, &e.object] {
                if !keys.contains(&id_key(id)) {
                    return Err(SpecError::UnknownInstance {
                        document: "graph",
                        id: id.clone(),
                    });
                }
            }
        }
        let deduped = dedupe_edges(self.edges.clone())?;
        if deduped.len() != self.edges.len() {
            return Err(schema("graph", "edges", "duplicate edges"));
        }
        Ok(())
    }
}
