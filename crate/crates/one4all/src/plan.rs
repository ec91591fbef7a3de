//! Mission plans as behavior trees, plus the XML wire form they travel in.
//!
//! A plan document looks like:
//!
//! ```xml
//! <mission id="m1" robot="kortex" query="Find pistachio and take NBV">
//!   <sequence>
//!     <task id="find" action="detect_object">
//!       <param name="class_name">pistachio</param>
//!     </task>
//!     <conditional on="find">
//!       <branch outcome="success">
//!         <task id="scan" action="nbv">
//!           <param name="target_object">pistachio</param>
//!         </task>
//!       </branch>
//!       <else><sequence/></else>
//!     </conditional>
//!   </sequence>
//! </mission>
//! ```
//!
//! Conditionals branch on the recorded outcome of a named prior task, so a
//! well-formed tree can be checked without executing anything.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: String,
    pub action: String,
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalNode {
    /// Id of the earlier task whose outcome selects the branch.
    pub on: String,
    /// Outcome-labelled branches in document order; labels are distinct.
    pub branches: Vec<(String, BTNode)>,
    pub else_branch: Option<Box<BTNode>>,
}

impl ConditionalNode {
    pub fn branch_for(&self, label: &str) -> Option<&BTNode> {
        self.branches
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, n)| n)
            .or(self.else_branch.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BTNode {
    Sequence(Vec<BTNode>),
    Task(TaskNode),
    Conditional(ConditionalNode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub mission_id: String,
    pub robot_id: String,
    pub root: BTNode,
    /// The natural-language query this plan answers, carried for audit.
    pub source_query: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeCount {
    pub tasks: usize,
    pub conditionals: usize,
}

impl NodeCount {
    pub fn total(&self) -> usize {
        self.tasks + self.conditionals
    }
}

/// Count Task and Conditional nodes over the whole tree.
pub fn count_nodes(plan: &MissionPlan) -> NodeCount {
    let mut count = NodeCount { tasks: 0, conditionals: 0 };
    for node in pre_order(plan) {
        match node {
            BTNode::Task(_) => count.tasks += 1,
            BTNode::Conditional(_) => count.conditionals += 1,
            BTNode::Sequence(_) => {}
        }
    }
    count
}

/// Depth-first, left-to-right traversal. Conditional children are visited
/// branch-by-branch in document order, else-branch last.
pub fn pre_order(plan: &MissionPlan) -> Vec<&BTNode> {
    let mut out = Vec::new();
    visit(&plan.root, &mut out);
    out
}

fn visit<'a>(node: &'a BTNode, out: &mut Vec<&'a BTNode>) {
    out.push(node);
    match node {
        BTNode::Sequence(children) => {
            for c in children {
                visit(c, out);
            }
        }
        BTNode::Task(_) => {}
        BTNode::Conditional(c) => {
            for (_, b) in &c.branches {
                visit(b, out);
            }
            if let Some(e) = &c.else_branch {
                visit(e, out);
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanParseError {
    #[error("xml syntax error at {line}:{col}: {message}")]
    XmlSyntax { line: u32, col: u32, message: String },
    #[error("{kind} at {path}: {message}")]
    TreeShape { kind: ShapeViolationKind, path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeViolationKind {
    /// Document does not follow the plan grammar (unknown element, missing
    /// attribute, malformed branch structure).
    Grammar,
    DuplicateTaskId,
    ForwardReference,
}

impl std::fmt::Display for ShapeViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ShapeViolationKind::Grammar => "grammar violation",
            ShapeViolationKind::DuplicateTaskId => "duplicate task id",
            ShapeViolationKind::ForwardReference => "forward reference",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct ShapeViolation {
    pub kind: ShapeViolationKind,
    pub path: String,
    pub message: String,
}

/// Result of structural parsing, before any capability checks.
///
/// `root` is present whenever every node converted; duplicate-id and
/// forward-reference violations do not prevent construction, grammar
/// violations do. The validator walks this so it can report every problem in
/// one pass instead of stopping at the first.
#[derive(Debug)]
pub struct RawParse {
    pub mission_id: String,
    pub robot_id: String,
    pub source_query: String,
    pub root: Option<BTNode>,
    pub violations: Vec<ShapeViolation>,
}

fn strict_options() -> roxmltree::ParsingOptions {
    roxmltree::ParsingOptions { allow_dtd: false, ..Default::default() }
}

/// Structural parse with full violation collection. See [`RawParse`].
pub fn parse_raw(xml: &str) -> Result<RawParse, PlanParseError> {
    let doc = roxmltree::Document::parse_with_options(xml, strict_options()).map_err(|e| {
        let pos = e.pos();
        PlanParseError::XmlSyntax { line: pos.row, col: pos.col, message: e.to_string() }
    })?;

    let mut cx = ParseCx { violations: Vec::new(), seen_ids: HashSet::new(), complete: true };
    let root_el = doc.root_element();
    if root_el.tag_name().name() != "mission" {
        cx.grammar(
            "/",
            format!("expected root element <mission>, found <{}>", root_el.tag_name().name()),
        );
        return Ok(RawParse {
            mission_id: String::new(),
            robot_id: String::new(),
            source_query: String::new(),
            root: None,
            violations: cx.violations,
        });
    }

    let mission_id = root_el.attribute("id").unwrap_or("").to_string();
    let robot_id = root_el.attribute("robot").unwrap_or("").to_string();
    let source_query = root_el.attribute("query").unwrap_or("").to_string();
    if mission_id.is_empty() {
        cx.grammar("/mission", "mission is missing a non-empty id attribute".to_string());
    }
    if robot_id.is_empty() {
        cx.grammar("/mission", "mission is missing a non-empty robot attribute".to_string());
    }

    let children: Vec<roxmltree::Node> = root_el.children().filter(|n| n.is_element()).collect();
    let root = if children.len() != 1 {
        cx.grammar(
            "/mission",
            format!("mission must contain exactly one root node, found {}", children.len()),
        );
        None
    } else {
        cx.convert(children[0], "/mission")
    };

    let root = if cx.complete { root } else { None };
    Ok(RawParse { mission_id, robot_id, source_query, root, violations: cx.violations })
}

struct ParseCx {
    violations: Vec<ShapeViolation>,
    seen_ids: HashSet<String>,
    complete: bool,
}

impl ParseCx {
    fn grammar(&mut self, path: &str, message: String) {
        self.violations.push(ShapeViolation {
            kind: ShapeViolationKind::Grammar,
            path: path.to_string(),
            message,
        });
    }

    fn push(&mut self, kind: ShapeViolationKind, path: &str, message: String) {
        self.violations.push(ShapeViolation { kind, path: path.to_string(), message });
    }

    /// Paths carry a 1-based index only when the element name repeats among
    /// its siblings, matching common XPath usage: /mission/sequence/task[2].
    fn child_steps<'a, 'input>(
        parent: roxmltree::Node<'a, 'input>,
    ) -> Vec<(roxmltree::Node<'a, 'input>, String)> {
        let elements: Vec<roxmltree::Node> = parent.children().filter(|n| n.is_element()).collect();
        let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
        for el in &elements {
            *totals.entry(el.tag_name().name()).or_insert(0) += 1;
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        elements
            .into_iter()
            .map(|el| {
                let name = el.tag_name().name();
                let idx = seen.entry(name).or_insert(0);
                *idx += 1;
                let step = if totals[name] > 1 {
                    format!("{}[{}]", name, idx)
                } else {
                    name.to_string()
                };
                (el, step)
            })
            .collect()
    }

    fn convert(&mut self, node: roxmltree::Node, parent_path: &str) -> Option<BTNode> {
        let name = node.tag_name().name();
        // The caller computed this node's step already when iterating the
        // parent, except for the mission root; recompute uniformly here.
        let step = Self::child_steps(node.parent().unwrap())
            .into_iter()
            .find(|(el, _)| *el == node)
            .map(|(_, s)| s)
            .unwrap_or_else(|| name.to_string());
        let path = format!("{}/{}", parent_path, step);
        match name {
            "sequence" => {
                let mut children = Vec::new();
                let mut ok = true;
                for (el, _) in Self::child_steps(node) {
                    match self.convert(el, &path) {
                        Some(n) => children.push(n),
                        None => ok = false,
                    }
                }
                if !ok {
                    self.complete = false;
                }
                Some(BTNode::Sequence(children))
            }
            "task" => self.convert_task(node, &path),
            "conditional" => self.convert_conditional(node, &path),
            other => {
                self.grammar(&path, format!("unknown element <{}>", other));
                self.complete = false;
                None
            }
        }
    }

    fn convert_task(&mut self, node: roxmltree::Node, path: &str) -> Option<BTNode> {
        let id = node.attribute("id").unwrap_or("").to_string();
        let action = node.attribute("action").unwrap_or("").to_string();
        let mut ok = true;
        if id.is_empty() {
            self.grammar(path, "task is missing a non-empty id attribute".to_string());
            ok = false;
        }
        if action.is_empty() {
            self.grammar(path, "task is missing a non-empty action attribute".to_string());
            ok = false;
        }
        if !id.is_empty() && !self.seen_ids.insert(id.clone()) {
            self.push(
                ShapeViolationKind::DuplicateTaskId,
                path,
                format!("task id {:?} is already used by an earlier task", id),
            );
        }
        let mut params = BTreeMap::new();
        for child in node.children().filter(|n| n.is_element()) {
            if child.tag_name().name() != "param" {
                self.grammar(
                    path,
                    format!("unknown element <{}> inside task", child.tag_name().name()),
                );
                ok = false;
                continue;
            }
            let pname = child.attribute("name").unwrap_or("").to_string();
            if pname.is_empty() {
                self.grammar(path, "param is missing a non-empty name attribute".to_string());
                ok = false;
                continue;
            }
            let value: String = child
                .children()
                .filter_map(|n| if n.is_text() { n.text() } else { None })
                .collect();
            if params.insert(pname.clone(), value).is_some() {
                self.grammar(path, format!("param {:?} given more than once", pname));
                ok = false;
            }
        }
        if !ok {
            self.complete = false;
            return None;
        }
        Some(BTNode::Task(TaskNode { id, action, params }))
    }

    fn convert_conditional(&mut self, node: roxmltree::Node, path: &str) -> Option<BTNode> {
        let on = node.attribute("on").unwrap_or("").to_string();
        let mut ok = true;
        if on.is_empty() {
            self.grammar(path, "conditional is missing a non-empty on attribute".to_string());
            ok = false;
        } else if !self.seen_ids.contains(&on) {
            self.push(
                ShapeViolationKind::ForwardReference,
                path,
                format!("conditional references task {:?} which has not occurred yet", on),
            );
        }

        let mut branches: Vec<(String, BTNode)> = Vec::new();
        let mut else_branch: Option<Box<BTNode>> = None;
        for (el, step) in Self::child_steps(node) {
            let child_path = format!("{}/{}", path, step);
            match el.tag_name().name() {
                "branch" => {
                    let label = el.attribute("outcome").unwrap_or("").to_string();
                    if label.is_empty() {
                        self.grammar(
                            &child_path,
                            "branch is missing a non-empty outcome attribute".to_string(),
                        );
                        ok = false;
                        continue;
                    }
                    if branches.iter().any(|(l, _)| *l == label) {
                        self.grammar(
                            &child_path,
                            format!("branch outcome {:?} appears more than once", label),
                        );
                        ok = false;
                        continue;
                    }
                    match self.convert_only_child(el, &child_path) {
                        Some(n) => branches.push((label, n)),
                        None => ok = false,
                    }
                }
                "else" => {
                    if else_branch.is_some() {
                        self.grammar(&child_path, "conditional has more than one else".to_string());
                        ok = false;
                        continue;
                    }
                    match self.convert_only_child(el, &child_path) {
                        Some(n) => else_branch = Some(Box::new(n)),
                        None => ok = false,
                    }
                }
                other => {
                    self.grammar(
                        &child_path,
                        format!("unknown element <{}> inside conditional", other),
                    );
                    ok = false;
                }
            }
        }
        if branches.is_empty() && else_branch.is_none() {
            self.grammar(path, "conditional must have at least one branch or an else".to_string());
            ok = false;
        }
        if !ok {
            self.complete = false;
            return None;
        }
        Some(BTNode::Conditional(ConditionalNode { on, branches, else_branch }))
    }

    fn convert_only_child(&mut self, node: roxmltree::Node, path: &str) -> Option<BTNode> {
        let children: Vec<roxmltree::Node> = node.children().filter(|n| n.is_element()).collect();
        if children.len() != 1 {
            self.grammar(
                path,
                format!("expected exactly one node inside, found {}", children.len()),
            );
            return None;
        }
        self.convert(children[0], path)
    }
}

/// Parse a plan document; any structural problem is an error and no partial
/// tree escapes.
pub fn parse_plan(xml: &str) -> Result<MissionPlan, PlanParseError> {
    let raw = parse_raw(xml)?;
    if let Some(v) = raw.violations.into_iter().next() {
        return Err(PlanParseError::TreeShape { kind: v.kind, path: v.path, message: v.message });
    }
    let root = raw.root.ok_or_else(|| PlanParseError::TreeShape {
        kind: ShapeViolationKind::Grammar,
        path: "/mission".to_string(),
        message: "mission has no root node".to_string(),
    })?;
    Ok(MissionPlan {
        mission_id: raw.mission_id,
        robot_id: raw.robot_id,
        root,
        source_query: raw.source_query,
    })
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

/// Canonical XML for a plan; `parse_plan(serialize_plan(p))` is structurally
/// equal to `p`.
pub fn serialize_plan(plan: &MissionPlan) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "<mission id=\"{}\" robot=\"{}\"",
        escape_attr(&plan.mission_id),
        escape_attr(&plan.robot_id)
    );
    if !plan.source_query.is_empty() {
        let _ = write!(out, " query=\"{}\"", escape_attr(&plan.source_query));
    }
    out.push_str(">\n");
    write_node(&plan.root, 1, &mut out);
    out.push_str("</mission>\n");
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn write_node(node: &BTNode, depth: usize, out: &mut String) {
    match node {
        BTNode::Sequence(children) => {
            indent(depth, out);
            if children.is_empty() {
                out.push_str("<sequence/>\n");
            } else {
                out.push_str("<sequence>\n");
                for c in children {
                    write_node(c, depth + 1, out);
                }
                indent(depth, out);
                out.push_str("</sequence>\n");
            }
        }
        BTNode::Task(t) => {
            indent(depth, out);
            let _ = write!(out, "<task id=\"{}\" action=\"{}\"", escape_attr(&t.id), escape_attr(&t.action));
            if t.params.is_empty() {
                out.push_str("/>\n");
            } else {
                out.push_str(">\n");
                for (name, value) in &t.params {
                    indent(depth + 1, out);
                    let _ = writeln!(
                        out,
                        "<param name=\"{}\">{}</param>",
                        escape_attr(name),
                        escape_text(value)
                    );
                }
                indent(depth, out);
                out.push_str("</task>\n");
            }
        }
        BTNode::Conditional(c) => {
            indent(depth, out);
            let _ = writeln!(out, "<conditional on=\"{}\">", escape_attr(&c.on));
            for (label, body) in &c.branches {
                indent(depth + 1, out);
                let _ = writeln!(out, "<branch outcome=\"{}\">", escape_attr(label));
                write_node(body, depth + 2, out);
                indent(depth + 1, out);
                out.push_str("</branch>\n");
            }
            if let Some(e) = &c.else_branch {
                indent(depth + 1, out);
                out.push_str("<else>\n");
                write_node(e, depth + 2, out);
                indent(depth + 1, out);
                out.push_str("</else>\n");
            }
            indent(depth, out);
            out.push_str("</conditional>\n");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, action: &str) -> BTNode {
        BTNode::Task(TaskNode { id: id.into(), action: action.into(), params: BTreeMap::new() })
    }

    #[test]
    fn parses_empty_sequence_mission() {
        let plan = parse_plan(r#"<mission id="m" robot="husky"><sequence/></mission>"#).unwrap();
        let count = count_nodes(&plan);
        assert_eq!(count.tasks, 0);
        assert_eq!(count.conditionals, 0);
        assert_eq!(plan.robot_id, "husky");
    }

    #[test]
    fn rejects_forward_conditional_reference() {
        let xml = r#"<mission id="m" robot="r">
          <sequence>
            <conditional on="later"><branch outcome="success"><sequence/></branch></conditional>
            <task id="later" action="a"/>
          </sequence>
        </mission>"#;
        match parse_plan(xml) {
            Err(PlanParseError::TreeShape { kind, path, .. }) => {
                assert_eq!(kind, ShapeViolationKind::ForwardReference);
                assert_eq!(path, "/mission/sequence/conditional");
            }
            other => panic!("expected forward-reference error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_duplicate_task_id() {
        let xml = r#"<mission id="m" robot="r">
          <sequence>
            <task id="t" action="a"/>
            <task id="t" action="b"/>
          </sequence>
        </mission>"#;
        match parse_plan(xml) {
            Err(PlanParseError::TreeShape { kind, path, .. }) => {
                assert_eq!(kind, ShapeViolationKind::DuplicateTaskId);
                assert_eq!(path, "/mission/sequence/task[2]");
            }
            other => panic!("expected duplicate-id error, got {:?}", other),
        }
    }

    #[test]
    fn rejects_unknown_element() {
        let xml = r#"<mission id="m" robot="r"><parallel/></mission>"#;
        assert!(matches!(
            parse_plan(xml),
            Err(PlanParseError::TreeShape { kind: ShapeViolationKind::Grammar, .. })
        ));
    }

    #[test]
    fn syntax_error_carries_position() {
        match parse_plan("<mission id='m' robot='r'><sequence>") {
            Err(PlanParseError::XmlSyntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected xml syntax error, got {:?}", other),
        }
    }

    #[test]
    fn unicode_param_value_round_trips_exactly() {
        let mut params = BTreeMap::new();
        params.insert("species".to_string(), "piñon".to_string());
        let plan = MissionPlan {
            mission_id: "m".into(),
            robot_id: "r".into(),
            root: BTNode::Sequence(vec![BTNode::Task(TaskNode {
                id: "t".into(),
                action: "a".into(),
                params,
            })]),
            source_query: String::new(),
        };
        let xml = serialize_plan(&plan);
        let again = parse_plan(&xml).unwrap();
        assert_eq!(plan, again);
        match &again.root {
            BTNode::Sequence(c) => match &c[0] {
                BTNode::Task(t) => assert_eq!(t.params["species"], "piñon"),
                other => panic!("unexpected node {:?}", other),
            },
            other => panic!("unexpected root {:?}", other),
        }
    }

    #[test]
    fn pre_order_visits_sequence_then_children() {
        let plan = MissionPlan {
            mission_id: "m".into(),
            robot_id: "r".into(),
            root: BTNode::Sequence(vec![
                task("a", "x"),
                BTNode::Conditional(ConditionalNode {
                    on: "a".into(),
                    branches: vec![("success".into(), task("b", "y"))],
                    else_branch: None,
                }),
            ]),
            source_query: String::new(),
        };
        let order = pre_order(&plan);
        assert_eq!(order.len(), 4);
        assert!(matches!(order[0], BTNode::Sequence(_)));
        assert!(matches!(order[1], BTNode::Task(t) if t.id == "a"));
        assert!(matches!(order[2], BTNode::Conditional(_)));
        assert!(matches!(order[3], BTNode::Task(t) if t.id == "b"));
    }

    #[test]
    fn count_totals_match_pre_order_filter() {
        let plan = MissionPlan {
            mission_id: "m".into(),
            robot_id: "r".into(),
            root: BTNode::Sequence(vec![
                task("a", "x"),
                task("b", "x"),
                BTNode::Conditional(ConditionalNode {
                    on: "a".into(),
                    branches: vec![("failure".into(), task("c", "y"))],
                    else_branch: Some(Box::new(BTNode::Sequence(vec![]))),
                }),
            ]),
            source_query: String::new(),
        };
        let count = count_nodes(&plan);
        let by_filter = pre_order(&plan)
            .iter()
            .filter(|n| !matches!(n, BTNode::Sequence(_)))
            .count();
        assert_eq!(count.total(), by_filter);
        assert_eq!(count.tasks, 3);
        assert_eq!(count.conditionals, 1);
    }

    #[test]
    fn dtd_rejected_in_plans() {
        let xml = "<!DOCTYPE mission [<!ENTITY e \"v\">]><mission id=\"m\" robot=\"r\"><sequence/></mission>";
        assert!(matches!(parse_plan(xml), Err(PlanParseError::XmlSyntax { .. })));
    }

    #[test]
    fn raw_parse_collects_multiple_violations() {
        let xml = r#"<mission id="m" robot="r">
          <sequence>
            <task id="t" action="a"/>
            <task id="t" action="b"/>
            <conditional on="nowhere"><branch outcome="success"><sequence/></branch></conditional>
          </sequence>
        </mission>"#;
        let raw = parse_raw(xml).unwrap();
        assert_eq!(raw.violations.len(), 2);
        assert_eq!(raw.violations[0].kind, ShapeViolationKind::DuplicateTaskId);
        assert_eq!(raw.violations[1].kind, ShapeViolationKind::ForwardReference);
        assert!(raw.root.is_some(), "tree still constructs with these violations");
    }
}
