//! Plan approval: checks a candidate XML plan against the target robot's
//! action pool and the tree-shape rules, reporting every problem it finds in
//! document order.
//!
//! Nothing here throws on bad plans; all failures become report entries so
//! the whole report can go back to the LLM as a rewrite request.

use std::collections::BTreeMap;
use std::fmt;

use crate::plan::{
    parse_raw, BTNode, ConditionalNode, MissionPlan, PlanParseError, ShapeViolationKind, TaskNode,
};
use crate::schema::{ActionPool, ActionSpec, ParamKind};
use crate::sim::geom::{Pose6d, UNIT_QUAT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    UnknownRobot,
    UnknownAction,
    MissingParam,
    UnknownParam,
    BadParamType,
    ParamOutOfRange,
    UnknownOutcome,
    ForwardReference,
    DuplicateTaskId,
    XmlSyntax,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::UnknownRobot => "UNKNOWN_ROBOT",
            ErrorCode::UnknownAction => "UNKNOWN_ACTION",
            ErrorCode::MissingParam => "MISSING_PARAM",
            ErrorCode::UnknownParam => "UNKNOWN_PARAM",
            ErrorCode::BadParamType => "BAD_PARAM_TYPE",
            ErrorCode::ParamOutOfRange => "PARAM_OUT_OF_RANGE",
            ErrorCode::UnknownOutcome => "UNKNOWN_OUTCOME",
            ErrorCode::ForwardReference => "FORWARD_REFERENCE",
            ErrorCode::DuplicateTaskId => "DUPLICATE_TASK_ID",
            ErrorCode::XmlSyntax => "XML_SYNTAX",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    /// Node path such as `/mission/sequence/task[2]`; may be empty only for
    /// XML_SYNTAX and UNKNOWN_ROBOT.
    pub path: String,
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<ValidationError>,
}

impl ValidationReport {
    pub fn approved(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_code(&self, code: ErrorCode) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }
}

/// Render the report as the error log handed back to the LLM: one line per
/// error, document order, `<code> at <path>: <message>`.
pub fn render_error_log(report: &ValidationReport) -> String {
    assert!(!report.approved(), "render_error_log requires a non-approved report");
    let mut out = String::new();
    for e in &report.errors {
        if e.path.is_empty() {
            out.push_str(&format!("{}: {}\n", e.code, e.message));
        } else {
            out.push_str(&format!("{} at {}: {}\n", e.code, e.path, e.message));
        }
    }
    out
}

/// Validate a candidate plan document against the given pools.
///
/// The plan is returned exactly when the report is approved. The `robot`
/// attribute must match exactly one pool; selection happens at generation
/// time, never here.
pub fn validate(xml: &str, pools: &[ActionPool]) -> (Option<MissionPlan>, ValidationReport) {
    assert!(!pools.is_empty(), "validate requires at least one pool");
    let mut report = ValidationReport::default();

    let raw = match parse_raw(xml) {
        Ok(raw) => raw,
        Err(PlanParseError::XmlSyntax { line, col, message }) => {
            report.errors.push(ValidationError {
                path: String::new(),
                code: ErrorCode::XmlSyntax,
                message: format!("{} (line {}, column {})", message, line, col),
            });
            return (None, report);
        }
        Err(PlanParseError::TreeShape { .. }) => unreachable!("parse_raw reports shape problems as violations"),
    };

    // Robot selection before tree errors: the attribute precedes the children
    // in document order.
    let mut pool = None;
    if !raw.robot_id.is_empty() {
        let matches: Vec<&ActionPool> =
            pools.iter().filter(|p| p.robot_id == raw.robot_id).collect();
        match matches.len() {
            1 => pool = Some(matches[0]),
            0 => report.errors.push(ValidationError {
                path: String::new(),
                code: ErrorCode::UnknownRobot,
                message: format!(
                    "no schema for robot {:?}; known robots: {}",
                    raw.robot_id,
                    known_robots(pools)
                ),
            }),
            _ => report.errors.push(ValidationError {
                path: String::new(),
                code: ErrorCode::UnknownRobot,
                message: format!("robot {:?} matches more than one schema", raw.robot_id),
            }),
        }
    }

    let grammar_broken =
        raw.violations.iter().any(|v| v.kind == ShapeViolationKind::Grammar) || raw.root.is_none();
    if grammar_broken {
        // The tree may be incomplete; report what the structural pass found
        // and skip capability checks, which would point at shifted paths.
        for v in &raw.violations {
            report.errors.push(ValidationError {
                path: v.path.clone(),
                code: match v.kind {
                    ShapeViolationKind::Grammar => ErrorCode::XmlSyntax,
                    ShapeViolationKind::DuplicateTaskId => ErrorCode::DuplicateTaskId,
                    ShapeViolationKind::ForwardReference => ErrorCode::ForwardReference,
                },
                message: v.message.clone(),
            });
        }
        return (None, report);
    }

    // Complete tree: run shape and capability checks together in one
    // document-order walk (parse_raw's duplicate/forward findings are
    // rediscovered here at the same paths, properly interleaved).
    let root = raw.root.as_ref().expect("complete parse has a root");
    let mut walk = Walk { pool, seen: Vec::new(), report: &mut report };
    walk.node(root, &format!("/mission/{}", node_name(root)));

    if report.approved() {
        (
            Some(MissionPlan {
                mission_id: raw.mission_id,
                robot_id: raw.robot_id,
                root: raw.root.expect("checked above"),
                source_query: raw.source_query,
            }),
            report,
        )
    } else {
        (None, report)
    }
}

fn known_robots(pools: &[ActionPool]) -> String {
    let mut ids: Vec<&str> = pools.iter().map(|p| p.robot_id.as_str()).collect();
    ids.sort_unstable();
    ids.join(", ")
}

struct Walk<'a> {
    pool: Option<&'a ActionPool>,
    /// Task ids in pre-order, with the resolved spec when the action exists.
    seen: Vec<(String, Option<&'a ActionSpec>)>,
    report: &'a mut ValidationReport,
}

impl<'a> Walk<'a> {
    /// `path` is the node's own path, ending in its own step.
    fn node(&mut self, node: &BTNode, path: &str) {
        match node {
            BTNode::Sequence(children) => {
                for (child, step) in steps(children) {
                    self.node(child, &format!("{}/{}", path, step));
                }
            }
            BTNode::Task(t) => self.task(t, path),
            BTNode::Conditional(c) => self.conditional(c, path),
        }
    }

    fn task(&mut self, t: &TaskNode, path: &str) {
        if self.seen.iter().any(|(id, _)| id == &t.id) {
            self.push(path, ErrorCode::DuplicateTaskId, format!("task id {:?} is already used by an earlier task", t.id));
        }
        let mut resolved = None;
        if let Some(pool) = self.pool {
            match pool.lookup(&t.action) {
                Some(spec) => {
                    resolved = Some(spec);
                    self.params(t, spec, path);
                }
                None => self.push(
                    path,
                    ErrorCode::UnknownAction,
                    format!(
                        "robot {:?} has no action {:?}; available: {}",
                        pool.robot_id,
                        t.action,
                        pool.actions.keys().cloned().collect::<Vec<_>>().join(", ")
                    ),
                ),
            }
        }
        self.seen.push((t.id.clone(), resolved));
    }

    fn params(&mut self, t: &TaskNode, spec: &ActionSpec, path: &str) {
        for p in &spec.params {
            if p.required && !t.params.contains_key(&p.name) {
                self.push(
                    path,
                    ErrorCode::MissingParam,
                    format!("action {:?} requires parameter {:?}", spec.name, p.name),
                );
            }
        }
        for (name, value) in &t.params {
            match spec.param(name) {
                None => self.push(
                    path,
                    ErrorCode::UnknownParam,
                    format!("action {:?} does not declare parameter {:?}", spec.name, name),
                ),
                Some(p) => self.param_value(p, name, value, path),
            }
        }
    }

    fn param_value(&mut self, p: &crate::schema::ParamSpec, name: &str, value: &str, path: &str) {
        match p.kind {
            ParamKind::String => {}
            ParamKind::Bool => {
                if value != "true" && value != "false" {
                    self.push(
                        path,
                        ErrorCode::BadParamType,
                        format!("parameter {:?} must be true or false, got {:?}", name, value),
                    );
                }
            }
            ParamKind::Int => match value.trim().parse::<i64>() {
                Ok(n) => self.check_bounds(p, name, n as f64, path),
                Err(_) => self.push(
                    path,
                    ErrorCode::BadParamType,
                    format!("parameter {:?} must be an integer, got {:?}", name, value),
                ),
            },
            ParamKind::Float => match value.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => self.check_bounds(p, name, x, path),
                _ => self.push(
                    path,
                    ErrorCode::BadParamType,
                    format!("parameter {:?} must be a number, got {:?}", name, value),
                ),
            },
            ParamKind::Enum => {
                if !p.allowed_values.iter().any(|v| v == value) {
                    self.push(
                        path,
                        ErrorCode::ParamOutOfRange,
                        format!(
                            "parameter {:?} must be one of {{{}}}, got {:?}",
                            name,
                            p.allowed_values.join("|"),
                            value
                        ),
                    );
                }
            }
            ParamKind::GpsPoint => {
                let parts: Vec<Result<f64, _>> =
                    value.split(',').map(|s| s.trim().parse::<f64>()).collect();
                if parts.len() != 2 || parts.iter().any(|r| r.is_err()) {
                    self.push(
                        path,
                        ErrorCode::BadParamType,
                        format!("parameter {:?} must be \"lat,lon\", got {:?}", name, value),
                    );
                    return;
                }
                let lat = *parts[0].as_ref().unwrap();
                let lon = *parts[1].as_ref().unwrap();
                if !(-90.0..=90.0).contains(&lat) {
                    self.push(
                        path,
                        ErrorCode::ParamOutOfRange,
                        format!("parameter {:?}: latitude {} outside [-90, 90]", name, lat),
                    );
                }
                if !(-180.0..=180.0).contains(&lon) {
                    self.push(
                        path,
                        ErrorCode::ParamOutOfRange,
                        format!("parameter {:?}: longitude {} outside [-180, 180]", name, lon),
                    );
                }
            }
            ParamKind::Pose6d => match Pose6d::parse(value) {
                Ok(pose) => {
                    if (pose.orientation.norm() - 1.0).abs() > UNIT_QUAT_TOL {
                        self.push(
                            path,
                            ErrorCode::ParamOutOfRange,
                            format!(
                                "parameter {:?}: quaternion norm {} is not within {} of 1",
                                name,
                                pose.orientation.norm(),
                                UNIT_QUAT_TOL
                            ),
                        );
                    }
                }
                Err(msg) => self.push(
                    path,
                    ErrorCode::BadParamType,
                    format!("parameter {:?} must be \"x,y,z,qw,qx,qy,qz\": {}", name, msg),
                ),
            },
        }
    }

    fn check_bounds(&mut self, p: &crate::schema::ParamSpec, name: &str, v: f64, path: &str) {
        let below = p.min.map(|lo| v < lo).unwrap_or(false);
        let above = p.max.map(|hi| v > hi).unwrap_or(false);
        if below || above {
            self.push(
                path,
                ErrorCode::ParamOutOfRange,
                format!(
                    "parameter {:?} value {} outside [{}, {}]",
                    name,
                    v,
                    p.min.map(|x| x.to_string()).unwrap_or_else(|| "-inf".into()),
                    p.max.map(|x| x.to_string()).unwrap_or_else(|| "+inf".into()),
                ),
            );
        }
    }

    fn conditional(&mut self, c: &ConditionalNode, path: &str) {
        let referenced = self.seen.iter().find(|(id, _)| id == &c.on).map(|(_, s)| *s);
        match referenced {
            None => self.push(
                path,
                ErrorCode::ForwardReference,
                format!("conditional references task {:?} which has not occurred yet", c.on),
            ),
            Some(spec) => {
                if let Some(spec) = spec {
                    for (i, (label, _)) in c.branches.iter().enumerate() {
                        if !spec.outcomes.contains(label) {
                            let bpath = branch_step(path, c, i);
                            self.push(
                                &bpath,
                                ErrorCode::UnknownOutcome,
                                format!(
                                    "action {:?} never returns outcome {:?}; declared: {}",
                                    spec.name,
                                    label,
                                    spec.outcomes.iter().cloned().collect::<Vec<_>>().join(", ")
                                ),
                            );
                        }
                    }
                }
            }
        }
        for (i, (_, body)) in c.branches.iter().enumerate() {
            let bpath = branch_step(path, c, i);
            self.node(body, &format!("{}/{}", bpath, node_name(body)));
        }
        if let Some(e) = &c.else_branch {
            self.node(e, &format!("{}/else/{}", path, node_name(e)));
        }
    }

    fn push(&mut self, path: &str, code: ErrorCode, message: String) {
        self.report.errors.push(ValidationError { path: path.to_string(), code, message });
    }
}

fn node_name(n: &BTNode) -> &'static str {
    match n {
        BTNode::Sequence(_) => "sequence",
        BTNode::Task(_) => "task",
        BTNode::Conditional(_) => "conditional",
    }
}

/// Path steps for sequence children, indexing same-named siblings 1-based
/// when the name repeats — mirrors the structural parser's paths.
fn steps(children: &[BTNode]) -> Vec<(&BTNode, String)> {
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for c in children {
        *totals.entry(node_name(c)).or_insert(0) += 1;
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    children
        .iter()
        .map(|c| {
            let name = node_name(c);
            let idx = seen.entry(name).or_insert(0);
            *idx += 1;
            let step =
                if totals[name] > 1 { format!("{}[{}]", name, idx) } else { name.to_string() };
            (c, step)
        })
        .collect()
}

fn branch_step(cond_path: &str, c: &ConditionalNode, i: usize) -> String {
    if c.branches.len() > 1 {
        format!("{}/branch[{}]", cond_path, i + 1)
    } else {
        format!("{}/branch", cond_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::load_pool;

    fn pools() -> Vec<ActionPool> {
        let husky = load_pool(
            r#"<actionpool robot="husky" version="1">
              <action name="goto_gps">
                <param name="lat" kind="float" required="true" min="-90" max="90"/>
                <param name="lon" kind="float" required="true" min="-180" max="180"/>
                <outcome>success</outcome><outcome>failure</outcome>
              </action>
              <action name="read_temperature">
                <outcome>success</outcome><outcome>failure</outcome><outcome>low</outcome>
              </action>
            </actionpool>"#,
        )
        .unwrap();
        let kortex = load_pool(
            r#"<actionpool robot="kortex" version="1">
              <action name="move_pose">
                <param name="pose" kind="pose6d" required="true"/>
                <param name="mode" kind="enum" required="true" values="absolute,relative"/>
                <outcome>success</outcome><outcome>failure</outcome>
              </action>
              <action name="detect_object">
                <param name="class_name" kind="string" required="true"/>
                <param name="color" kind="string" required="false"/>
                <outcome>success</outcome><outcome>failure</outcome>
              </action>
            </actionpool>"#,
        )
        .unwrap();
        vec![husky, kortex]
    }

    #[test]
    fn empty_sequence_plan_is_approved() {
        let (plan, report) = validate(r#"<mission id="m" robot="husky"><sequence/></mission>"#, &pools());
        assert!(report.approved(), "unexpected errors: {:?}", report.errors);
        assert_eq!(plan.unwrap().robot_id, "husky");
    }

    #[test]
    fn unknown_action_reported_at_task_path() {
        let xml = r#"<mission id="m" robot="husky">
          <sequence>
            <task id="t1" action="read_temperature"/>
            <task id="t2" action="fly"/>
          </sequence>
        </mission>"#;
        let (plan, report) = validate(xml, &pools());
        assert!(plan.is_none());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::UnknownAction);
        assert_eq!(report.errors[0].path, "/mission/sequence/task[2]");
    }

    #[test]
    fn missing_and_unknown_params() {
        let xml = r#"<mission id="m" robot="husky">
          <sequence>
            <task id="t" action="goto_gps"><param name="lat">10</param><param name="altitude">5</param></task>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        assert!(report.has_code(ErrorCode::MissingParam), "{:?}", report.errors);
        assert!(report.has_code(ErrorCode::UnknownParam), "{:?}", report.errors);
    }

    #[test]
    fn numeric_range_and_type_checks() {
        let xml = r#"<mission id="m" robot="husky">
          <sequence>
            <task id="a" action="goto_gps"><param name="lat">91</param><param name="lon">0</param></task>
            <task id="b" action="goto_gps"><param name="lat">abc</param><param name="lon">0</param></task>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        assert_eq!(report.errors.len(), 2);
        assert_eq!(report.errors[0].code, ErrorCode::ParamOutOfRange);
        assert_eq!(report.errors[1].code, ErrorCode::BadParamType);
    }

    #[test]
    fn pose_quaternion_norm_checked() {
        let xml = r#"<mission id="m" robot="kortex">
          <sequence>
            <task id="t" action="move_pose">
              <param name="pose">0,0,0,0.9,0,0,0.9</param>
              <param name="mode">relative</param>
            </task>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::ParamOutOfRange);
    }

    #[test]
    fn enum_value_checked() {
        let xml = r#"<mission id="m" robot="kortex">
          <sequence>
            <task id="t" action="move_pose">
              <param name="pose">0,0,0,1,0,0,0</param>
              <param name="mode">sideways</param>
            </task>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::ParamOutOfRange);
    }

    #[test]
    fn unknown_outcome_label_on_branch() {
        let xml = r#"<mission id="m" robot="kortex">
          <sequence>
            <task id="find" action="detect_object"><param name="class_name">cup</param></task>
            <conditional on="find">
              <branch outcome="exploded"><sequence/></branch>
            </conditional>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::UnknownOutcome);
        assert_eq!(report.errors[0].path, "/mission/sequence/conditional/branch");
    }

    #[test]
    fn unknown_robot_has_empty_path() {
        let (plan, report) = validate(r#"<mission id="m" robot="drone"><sequence/></mission>"#, &pools());
        assert!(plan.is_none());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::UnknownRobot);
        assert!(report.errors[0].path.is_empty());
    }

    #[test]
    fn xml_syntax_failure_reports_one_entry() {
        let (plan, report) = validate("not xml at all", &pools());
        assert!(plan.is_none());
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, ErrorCode::XmlSyntax);
    }

    #[test]
    fn errors_come_in_document_order() {
        let xml = r#"<mission id="m" robot="husky">
          <sequence>
            <task id="a" action="fly"/>
            <task id="a" action="read_temperature"/>
            <task id="c" action="swim"/>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        let codes: Vec<ErrorCode> = report.errors.iter().map(|e| e.code).collect();
        assert_eq!(
            codes,
            vec![ErrorCode::UnknownAction, ErrorCode::DuplicateTaskId, ErrorCode::UnknownAction]
        );
    }

    #[test]
    fn validate_is_deterministic() {
        let xml = r#"<mission id="m" robot="husky">
          <sequence><task id="t" action="fly"/></sequence>
        </mission>"#;
        let (_, a) = validate(xml, &pools());
        let (_, b) = validate(xml, &pools());
        assert_eq!(a, b);
    }

    #[test]
    fn error_log_one_line_per_error() {
        let xml = r#"<mission id="m" robot="husky">
          <sequence>
            <task id="t" action="goto_gps"/>
          </sequence>
        </mission>"#;
        let (_, report) = validate(xml, &pools());
        assert_eq!(report.errors.len(), 2, "{:?}", report.errors);
        let log = render_error_log(&report);
        assert_eq!(log.lines().count(), 2);
        assert!(log.lines().all(|l| l.contains("MISSING_PARAM")));
    }

    #[test]
    #[should_panic(expected = "non-approved")]
    fn error_log_rejects_approved_report() {
        render_error_log(&ValidationReport::default());
    }
}
