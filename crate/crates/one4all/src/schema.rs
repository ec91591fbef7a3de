//! Robot capability schemas: the action pools that constrain plan generation.
//!
//! Each robot ships one schema document declaring its atomic actions, their
//! typed parameters, and the outcome labels a conditional may branch on. The
//! loaded [`ActionPool`] is immutable and doubles as LLM context via
//! [`render_context`].
//!
//! Canonical document format:
//!
//! ```xml
//! <actionpool robot="husky" version="1">
//!   <action name="goto_gps" doc="Drive to a GPS coordinate.">
//!     <param name="lat" kind="float" required="true" min="-90" max="90"/>
//!     <outcome>success</outcome>
//!     <outcome>failure</outcome>
//!   </action>
//! </actionpool>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

pub const OUTCOME_SUCCESS: &str = "success";
pub const OUTCOME_FAILURE: &str = "failure";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    String,
    Int,
    Float,
    Bool,
    Enum,
    GpsPoint,
    Pose6d,
}

impl ParamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Int => "int",
            ParamKind::Float => "float",
            ParamKind::Bool => "bool",
            ParamKind::Enum => "enum",
            ParamKind::GpsPoint => "gps_point",
            ParamKind::Pose6d => "pose6d",
        }
    }

    pub fn parse(s: &str) -> Option<ParamKind> {
        Some(match s {
            "string" => ParamKind::String,
            "int" => ParamKind::Int,
            "float" => ParamKind::Float,
            "bool" => ParamKind::Bool,
            "enum" => ParamKind::Enum,
            "gps_point" => ParamKind::GpsPoint,
            "pose6d" => ParamKind::Pose6d,
            _ => return None,
        })
    }

    /// Numeric bounds are only meaningful for int and float parameters.
    pub fn supports_bounds(&self) -> bool {
        matches!(self, ParamKind::Int | ParamKind::Float)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub required: bool,
    /// Allowed values; non-empty exactly when `kind == Enum`.
    pub allowed_values: Vec<String>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub outcomes: BTreeSet<String>,
    pub doc: String,
}

impl ActionSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// One robot's complete capability set.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPool {
    pub robot_id: String,
    pub actions: BTreeMap<String, ActionSpec>,
    pub schema_version: String,
}

impl ActionPool {
    /// Look up an action spec by name.
    pub fn lookup(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.get(name)
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("schema semantic error: {0}")]
    Semantic(String),
}

fn syntax_err(doc_err: roxmltree::Error) -> SchemaError {
    let pos = doc_err.pos();
    SchemaError::Syntax { line: pos.row, col: pos.col, message: doc_err.to_string() }
}

fn node_pos(doc: &roxmltree::Document, node: roxmltree::Node) -> (u32, u32) {
    let pos = doc.text_pos_at(node.range().start);
    (pos.row, pos.col)
}

fn strict_options() -> roxmltree::ParsingOptions {
    // DTDs (and with them entity declarations) are rejected outright.
    roxmltree::ParsingOptions { allow_dtd: false, ..Default::default() }
}

/// Parse a canonical schema document into an [`ActionPool`].
///
/// Malformed input never yields a partial pool: the first structural problem
/// aborts the load.
pub fn load_pool(source: &str) -> Result<ActionPool, SchemaError> {
    let doc = roxmltree::Document::parse_with_options(source, strict_options())
        .map_err(syntax_err)?;
    let root = doc.root_element();
    if root.tag_name().name() != "actionpool" {
        let (line, col) = node_pos(&doc, root);
        return Err(SchemaError::Syntax {
            line,
            col,
            message: format!("expected root element <actionpool>, found <{}>", root.tag_name().name()),
        });
    }
    let robot_id = root.attribute("robot").unwrap_or("").to_string();
    if robot_id.is_empty() {
        return Err(SchemaError::Semantic("actionpool is missing a non-empty robot attribute".into()));
    }
    let schema_version = root.attribute("version").unwrap_or("1").to_string();

    let mut actions: BTreeMap<String, ActionSpec> = BTreeMap::new();
    for action_node in root.children().filter(|n| n.is_element()) {
        if action_node.tag_name().name() != "action" {
            let (line, col) = node_pos(&doc, action_node);
            return Err(SchemaError::Syntax {
                line,
                col,
                message: format!("unexpected element <{}> in actionpool", action_node.tag_name().name()),
            });
        }
        let spec = parse_action(&doc, action_node)?;
        if actions.contains_key(&spec.name) {
            return Err(SchemaError::Semantic(format!("duplicate action {:?}", spec.name)));
        }
        actions.insert(spec.name.clone(), spec);
    }
    Ok(ActionPool { robot_id, actions, schema_version })
}

fn parse_action(doc: &roxmltree::Document, node: roxmltree::Node) -> Result<ActionSpec, SchemaError> {
    let name = node.attribute("name").unwrap_or("").to_string();
    if name.is_empty() {
        return Err(SchemaError::Semantic("action is missing a non-empty name attribute".into()));
    }
    let doc_line = node.attribute("doc").unwrap_or("").to_string();

    let mut params = Vec::new();
    let mut outcomes = BTreeSet::new();
    for child in node.children().filter(|n| n.is_element()) {
        match child.tag_name().name() {
            "param" => {
                let p = parse_param(&name, child)?;
                if params.iter().any(|q: &ParamSpec| q.name == p.name) {
                    return Err(SchemaError::Semantic(format!(
                        "action {:?} declares parameter {:?} twice",
                        name, p.name
                    )));
                }
                params.push(p);
            }
            "outcome" => {
                let label = child.text().unwrap_or("").trim().to_string();
                if label.is_empty() {
                    return Err(SchemaError::Semantic(format!(
                        "action {:?} has an empty outcome label",
                        name
                    )));
                }
                if label.chars().any(|c| c.is_whitespace() || c.is_ascii_uppercase()) {
                    return Err(SchemaError::Semantic(format!(
                        "outcome label {:?} must be a lower-case identifier",
                        label
                    )));
                }
                outcomes.insert(label);
            }
            other => {
                let (line, col) = node_pos(doc, child);
                return Err(SchemaError::Syntax {
                    line,
                    col,
                    message: format!("unexpected element <{}> in action {:?}", other, name),
                });
            }
        }
    }
    if !outcomes.contains(OUTCOME_SUCCESS) || !outcomes.contains(OUTCOME_FAILURE) {
        return Err(SchemaError::Semantic(format!(
            "action {:?} must declare both success and failure outcomes",
            name
        )));
    }
    Ok(ActionSpec { name, params, outcomes, doc: doc_line })
}

fn parse_param(action: &str, node: roxmltree::Node) -> Result<ParamSpec, SchemaError> {
    let name = node.attribute("name").unwrap_or("").to_string();
    if name.is_empty() {
        return Err(SchemaError::Semantic(format!(
            "action {:?} has a parameter with no name",
            action
        )));
    }
    let kind_str = node.attribute("kind").unwrap_or("");
    let kind = ParamKind::parse(kind_str).ok_or_else(|| {
        SchemaError::Semantic(format!(
            "parameter {:?} of action {:?} has unknown kind {:?}",
            name, action, kind_str
        ))
    })?;
    let required = match node.attribute("required").unwrap_or("false") {
        "true" => true,
        "false" => false,
        other => {
            return Err(SchemaError::Semantic(format!(
                "parameter {:?}: required must be true or false, got {:?}",
                name, other
            )))
        }
    };
    let allowed_values: Vec<String> = node
        .attribute("values")
        .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default();
    if (kind == ParamKind::Enum) != !allowed_values.is_empty() {
        return Err(SchemaError::Semantic(format!(
            "parameter {:?}: values list must be present exactly for enum parameters",
            name
        )));
    }
    let parse_bound = |attr: &str| -> Result<Option<f64>, SchemaError> {
        match node.attribute(attr) {
            None => Ok(None),
            Some(raw) => raw.parse::<f64>().map(Some).map_err(|_| {
                SchemaError::Semantic(format!("parameter {:?}: {} is not a number", name, attr))
            }),
        }
    };
    let min = parse_bound("min")?;
    let max = parse_bound("max")?;
    if (min.is_some() || max.is_some()) && !kind.supports_bounds() {
        return Err(SchemaError::Semantic(format!(
            "parameter {:?}: bounds are only allowed on int/float parameters",
            name
        )));
    }
    if let (Some(lo), Some(hi)) = (min, max) {
        if lo > hi {
            return Err(SchemaError::Semantic(format!(
                "parameter {:?}: min {} exceeds max {}",
                name, lo, hi
            )));
        }
    }
    Ok(ParamSpec { name, kind, required, allowed_values, min, max })
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn fmt_bound(v: f64) -> String {
    // Keep integral bounds readable in the emitted document.
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{}", v)
    }
}

/// Emit the canonical document for a pool. `load_pool(serialize_pool(p)) == p`.
pub fn serialize_pool(pool: &ActionPool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<actionpool robot=\"{}\" version=\"{}\">",
        escape_xml(&pool.robot_id),
        escape_xml(&pool.schema_version)
    );
    for spec in pool.actions.values() {
        let _ = write!(out, "  <action name=\"{}\"", escape_xml(&spec.name));
        if !spec.doc.is_empty() {
            let _ = write!(out, " doc=\"{}\"", escape_xml(&spec.doc));
        }
        let _ = writeln!(out, ">");
        for p in &spec.params {
            let _ = write!(
                out,
                "    <param name=\"{}\" kind=\"{}\" required=\"{}\"",
                escape_xml(&p.name),
                p.kind.as_str(),
                p.required
            );
            if !p.allowed_values.is_empty() {
                let _ = write!(out, " values=\"{}\"", escape_xml(&p.allowed_values.join(",")));
            }
            if let Some(lo) = p.min {
                let _ = write!(out, " min=\"{}\"", fmt_bound(lo));
            }
            if let Some(hi) = p.max {
                let _ = write!(out, " max=\"{}\"", fmt_bound(hi));
            }
            let _ = writeln!(out, "/>");
        }
        for o in &spec.outcomes {
            let _ = writeln!(out, "    <outcome>{}</outcome>", escape_xml(o));
        }
        let _ = writeln!(out, "  </action>");
    }
    out.push_str("</actionpool>\n");
    out
}

/// Render pools as a deterministic plain-text context block for the planner
/// prompt. Robots and actions are emitted in lexicographic order, so equal
/// pool sets produce byte-identical output regardless of input order.
pub fn render_context(pools: &[ActionPool]) -> String {
    assert!(!pools.is_empty(), "render_context requires at least one pool");
    let mut sorted: Vec<&ActionPool> = pools.iter().collect();
    sorted.sort_by(|a, b| a.robot_id.cmp(&b.robot_id));
    let mut out = String::new();
    for pool in sorted {
        let _ = writeln!(
            out,
            "ROBOT {} (schema version {}) provides {} actions:",
            pool.robot_id,
            pool.schema_version,
            pool.actions.len()
        );
        for spec in pool.actions.values() {
            let _ = write!(out, "  - {}(", spec.name);
            let mut first = true;
            for p in &spec.params {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                let _ = write!(out, "{}: {}", p.name, p.kind.as_str());
                if !p.required {
                    out.push_str(" [optional]");
                }
                if !p.allowed_values.is_empty() {
                    let _ = write!(out, " one of {{{}}}", p.allowed_values.join("|"));
                }
                match (p.min, p.max) {
                    (Some(lo), Some(hi)) => {
                        let _ = write!(out, " in [{}, {}]", fmt_bound(lo), fmt_bound(hi));
                    }
                    (Some(lo), None) => {
                        let _ = write!(out, " >= {}", fmt_bound(lo));
                    }
                    (None, Some(hi)) => {
                        let _ = write!(out, " <= {}", fmt_bound(hi));
                    }
                    (None, None) => {}
                }
            }
            out.push(')');
            let labels: Vec<&str> = spec.outcomes.iter().map(String::as_str).collect();
            let _ = write!(out, " -> {{{}}}", labels.join("|"));
            if !spec.doc.is_empty() {
                let _ = write!(out, " -- {}", spec.doc);
            }
            out.push('\n');
        }
    }
    out
}
