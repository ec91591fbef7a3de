//! Behavior-tree execution: interpret an approved plan, dispatch atomic
//! actions to a robot backend, branch on recorded outcomes, and persist an
//! append-only trace.
//!
//! Semantics, in full:
//! - Sequence runs children left to right and fails at the first failed child.
//! - Task dispatches its action and records the outcome. A `failure` label
//!   fails the task unless some conditional in the tree references the task,
//!   in which case the failure is considered consumed and flow continues to
//!   the conditional that will branch on it.
//! - Conditional reads the referenced task's recorded outcome and runs the
//!   matching branch, or the else branch, or vacuously succeeds when neither
//!   exists. Its status is the executed branch's status.
//!
//! Trees are finite and acyclic and each node is visited once, so execution
//! always terminates. Nothing here can reach back into plan generation.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::plan::{BTNode, ConditionalNode, MissionPlan, TaskNode};
use crate::schema::{ActionPool, OUTCOME_FAILURE};
use crate::sim::SimWorld;

/// Default per-task budget in simulated seconds; exceeding it coerces the
/// outcome to `failure`.
pub const DEFAULT_TASK_TIMEOUT_S: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    pub duration_s: f64,
}

impl TaskOutcome {
    pub fn new(task_id: impl Into<String>, label: impl Into<String>, duration_s: f64) -> Self {
        TaskOutcome { task_id: task_id.into(), label: label.into(), value: None, duration_s }
    }

    pub fn with_value(mut self, value: Value) -> Self {
        self.value = Some(value);
        self
    }

    pub fn is_failure(&self) -> bool {
        self.label == OUTCOME_FAILURE
    }
}

/// A robot that can execute the actions its pool declares.
///
/// Implementations must only return outcome labels declared by the action's
/// spec, and advance the world clock by the simulated duration.
pub trait RobotBackend {
    fn robot_id(&self) -> &str;
    fn pool(&self) -> &ActionPool;
    fn execute(
        &mut self,
        task_id: &str,
        action: &str,
        params: &BTreeMap<String, String>,
        world: &mut SimWorld,
    ) -> TaskOutcome;
    /// Robot state snapshot recorded after each dispatched task.
    fn snapshot(&self, world: &SimWorld) -> Value;
}

/// Dispatch boundary used by the interpreter; `run` adapts a
/// [`RobotBackend`] to it, tests can substitute scripted dispatchers.
pub trait TaskDispatcher {
    fn dispatch(&mut self, task: &TaskNode, path: &str) -> Result<TaskOutcome, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Succeeded,
    Failed,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecFault {
    #[error("backend fault in task {task_id:?}: {message}")]
    Backend { task_id: String, message: String },
    #[error("conditional references task {on:?} with no recorded outcome")]
    MissingOutcome { on: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissionStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub path: String,
    pub action: String,
    pub params: BTreeMap<String, String>,
    pub outcome: TaskOutcome,
    pub state: Value,
    /// Virtual-clock seconds at task completion.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub mission_id: String,
    pub robot_id: String,
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    pub final_status: MissionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

impl ExecutionTrace {
    pub fn dispatched_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.outcome.task_id.as_str()).collect()
    }
}

/// Task ids consumed by some conditional anywhere in the tree.
pub fn consumed_ids(root: &BTNode) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_consumed(root, &mut out);
    out
}

fn collect_consumed(node: &BTNode, out: &mut BTreeSet<String>) {
    match node {
        BTNode::Sequence(children) => children.iter().for_each(|c| collect_consumed(c, out)),
        BTNode::Task(_) => {}
        BTNode::Conditional(c) => {
            out.insert(c.on.clone());
            for (_, b) in &c.branches {
                collect_consumed(b, out);
            }
            if let Some(e) = &c.else_branch {
                collect_consumed(e, out);
            }
        }
    }
}

struct Interp<'a> {
    dispatcher: &'a mut dyn TaskDispatcher,
    consumed: BTreeSet<String>,
    outcomes: BTreeMap<String, String>,
}

impl<'a> Interp<'a> {
    fn node(&mut self, node: &BTNode, path: &str) -> Result<NodeStatus, ExecFault> {
        match node {
            BTNode::Sequence(children) => {
                for (child, step) in steps(children) {
                    let st = self.node(child, &format!("{}/{}", path, step))?;
                    if st == NodeStatus::Failed {
                        return Ok(NodeStatus::Failed);
                    }
                }
                Ok(NodeStatus::Succeeded)
            }
            BTNode::Task(t) => self.task(t, path),
            BTNode::Conditional(c) => self.conditional(c, path),
        }
    }

    fn task(&mut self, t: &TaskNode, path: &str) -> Result<NodeStatus, ExecFault> {
        let outcome = self
            .dispatcher
            .dispatch(t, path)
            .map_err(|message| ExecFault::Backend { task_id: t.id.clone(), message })?;
        self.outcomes.insert(t.id.clone(), outcome.label.clone());
        if outcome.label == OUTCOME_FAILURE && !self.consumed.contains(&t.id) {
            Ok(NodeStatus::Failed)
        } else {
            Ok(NodeStatus::Succeeded)
        }
    }

    fn conditional(&mut self, c: &ConditionalNode, path: &str) -> Result<NodeStatus, ExecFault> {
        let label = self
            .outcomes
            .get(&c.on)
            .cloned()
            .ok_or_else(|| ExecFault::MissingOutcome { on: c.on.clone() })?;
        let chosen = c
            .branches
            .iter()
            .position(|(l, _)| *l == label)
            .map(|i| (branch_path(path, c, i), &c.branches[i].1))
            .or_else(|| c.else_branch.as_deref().map(|e| (format!("{}/else", path), e)));
        match chosen {
            None => Ok(NodeStatus::Succeeded),
            Some((bpath, body)) => {
                self.node(body, &format!("{}/{}", bpath, node_name(body)))
            }
        }
    }
}

fn node_name(n: &BTNode) -> &'static str {
    match n {
        BTNode::Sequence(_) => "sequence",
        BTNode::Task(_) => "task",
        BTNode::Conditional(_) => "conditional",
    }
}

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

fn branch_path(cond_path: &str, c: &ConditionalNode, i: usize) -> String {
    if c.branches.len() > 1 {
        format!("{}/branch[{}]", cond_path, i + 1)
    } else {
        format!("{}/branch", cond_path)
    }
}

/// Interpret a tree against an arbitrary dispatcher. The consumed set is
/// derived from the same tree that is executed.
pub fn interpret(
    root: &BTNode,
    dispatcher: &mut dyn TaskDispatcher,
) -> Result<NodeStatus, ExecFault> {
    let mut interp =
        Interp { dispatcher, consumed: consumed_ids(root), outcomes: BTreeMap::new() };
    interp.node(root, &format!("/mission/{}", node_name(root)))
}

#[derive(Debug, Clone, Copy)]
pub struct RunnerConfig {
    pub task_timeout_s: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        RunnerConfig { task_timeout_s: DEFAULT_TASK_TIMEOUT_S }
    }
}

struct TracingDispatcher<'a, B: RobotBackend + ?Sized> {
    backend: &'a mut B,
    world: &'a mut SimWorld,
    timeout_s: f64,
    entries: Vec<TraceEntry>,
}

impl<'a, B: RobotBackend + ?Sized> TaskDispatcher for TracingDispatcher<'a, B> {
    fn dispatch(&mut self, task: &TaskNode, path: &str) -> Result<TaskOutcome, String> {
        let backend = &mut *self.backend;
        let world = &mut *self.world;
        let mut outcome =
            catch_unwind(AssertUnwindSafe(|| {
                backend.execute(&task.id, &task.action, &task.params, world)
            }))
            .map_err(|payload| {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "handler panicked".to_string());
                format!("handler for {:?} crashed: {}", task.action, msg)
            })?;
        if outcome.duration_s > self.timeout_s {
            outcome.label = OUTCOME_FAILURE.to_string();
            let note = serde_json::json!({
                "timeout_s": self.timeout_s,
                "elapsed_s": outcome.duration_s,
            });
            outcome.value = Some(match outcome.value.take() {
                Some(Value::Object(mut m)) => {
                    m.insert("timed_out".into(), note);
                    Value::Object(m)
                }
                _ => serde_json::json!({ "timed_out": note }),
            });
        }
        self.entries.push(TraceEntry {
            path: path.to_string(),
            action: task.action.clone(),
            params: task.params.clone(),
            outcome: outcome.clone(),
            state: self.backend.snapshot(self.world),
            t: self.world.now(),
        });
        Ok(outcome)
    }
}

/// Execute an approved plan to completion and return the trace.
///
/// Ordinary task failures never abort the call; backend crashes and
/// missing-outcome conditionals end the mission as `failed` with the fault
/// recorded on the trace.
pub fn run<B: RobotBackend + ?Sized>(
    plan: &MissionPlan,
    backend: &mut B,
    world: &mut SimWorld,
    config: &RunnerConfig,
) -> ExecutionTrace {
    debug_assert_eq!(backend.robot_id(), plan.robot_id, "plan bound to a different robot");
    let seed = world.seed;
    let mut dispatcher = TracingDispatcher {
        backend,
        world,
        timeout_s: config.task_timeout_s,
        entries: Vec::new(),
    };
    let consumed = consumed_ids(&plan.root);
    let mut interp =
        Interp { dispatcher: &mut dispatcher, consumed, outcomes: BTreeMap::new() };
    let result = interp.node(&plan.root, &format!("/mission/{}", node_name(&plan.root)));
    let (final_status, fault) = match result {
        Ok(NodeStatus::Succeeded) => (MissionStatus::Completed, None),
        Ok(NodeStatus::Failed) => (MissionStatus::Failed, None),
        Err(f) => (MissionStatus::Failed, Some(f.to_string())),
    };
    ExecutionTrace {
        mission_id: plan.mission_id.clone(),
        robot_id: plan.robot_id.clone(),
        seed,
        entries: dispatcher.entries,
        final_status,
        fault,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceRecord {
    Header { mission_id: String, robot_id: String, seed: u64 },
    Task(TraceEntry),
    Status { final_status: MissionStatus, #[serde(default, skip_serializing_if = "Option::is_none")] fault: Option<String> },
}

/// Newline-delimited JSON form: header, one record per entry, status last.
pub fn trace_to_ndjson(trace: &ExecutionTrace) -> String {
    let mut out = String::new();
    let header = TraceRecord::Header {
        mission_id: trace.mission_id.clone(),
        robot_id: trace.robot_id.clone(),
        seed: trace.seed,
    };
    out.push_str(&serde_json::to_string(&header).expect("trace header serializes"));
    out.push('\n');
    for e in &trace.entries {
        let rec = TraceRecord::Task(e.clone());
        out.push_str(&serde_json::to_string(&rec).expect("trace entry serializes"));
        out.push('\n');
    }
    let status =
        TraceRecord::Status { final_status: trace.final_status, fault: trace.fault.clone() };
    out.push_str(&serde_json::to_string(&status).expect("trace status serializes"));
    out.push('\n');
    out
}

/// Parse the NDJSON form back into a trace.
pub fn trace_from_ndjson(text: &str) -> Result<ExecutionTrace, String> {
    let mut mission_id = None;
    let mut robot_id = None;
    let mut seed = 0;
    let mut entries = Vec::new();
    let mut status = None;
    let mut fault = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(line)
            .map_err(|e| format!("trace line {}: {}", i + 1, e))?;
        match rec {
            TraceRecord::Header { mission_id: m, robot_id: r, seed: s } => {
                mission_id = Some(m);
                robot_id = Some(r);
                seed = s;
            }
            TraceRecord::Task(e) => entries.push(e),
            TraceRecord::Status { final_status, fault: f } => {
                status = Some(final_status);
                fault = f;
            }
        }
    }
    Ok(ExecutionTrace {
        mission_id: mission_id.ok_or("trace has no header record")?,
        robot_id: robot_id.ok_or("trace has no header record")?,
        seed,
        entries,
        final_status: status.ok_or("trace has no status record")?,
        fault,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str) -> BTNode {
        BTNode::Task(TaskNode { id: id.into(), action: "act".into(), params: BTreeMap::new() })
    }

    /// Maps task id -> outcome label; records dispatch order.
    struct Scripted {
        labels: BTreeMap<String, String>,
        dispatched: Vec<String>,
    }

    impl Scripted {
        fn new(pairs: &[(&str, &str)]) -> Self {
            Scripted {
                labels: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                dispatched: Vec::new(),
            }
        }
    }

    impl TaskDispatcher for Scripted {
        fn dispatch(&mut self, t: &TaskNode, _path: &str) -> Result<TaskOutcome, String> {
            self.dispatched.push(t.id.clone());
            let label = self.labels.get(&t.id).cloned().unwrap_or_else(|| "success".into());
            Ok(TaskOutcome::new(&t.id, label, 1.0))
        }
    }

    #[test]
    fn sequence_of_successes_succeeds() {
        let root = BTNode::Sequence(vec![task("a"), task("b")]);
        let mut d = Scripted::new(&[("a", "success"), ("b", "success")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Succeeded);
        assert_eq!(d.dispatched, vec!["a", "b"]);
    }

    #[test]
    fn unconsumed_failure_stops_the_sequence() {
        let root = BTNode::Sequence(vec![task("a"), task("b")]);
        let mut d = Scripted::new(&[("a", "failure"), ("b", "success")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Failed);
        assert_eq!(d.dispatched, vec!["a"], "no dispatch after mission failure");
    }

    #[test]
    fn consumed_failure_flows_to_the_conditional() {
        let root = BTNode::Sequence(vec![
            task("a"),
            BTNode::Conditional(ConditionalNode {
                on: "a".into(),
                branches: vec![("failure".into(), task("recover"))],
                else_branch: None,
            }),
            task("b"),
        ]);
        let mut d = Scripted::new(&[("a", "failure")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Succeeded);
        assert_eq!(d.dispatched, vec!["a", "recover", "b"]);
    }

    #[test]
    fn conditional_without_matching_branch_or_else_is_vacuous() {
        let root = BTNode::Sequence(vec![
            task("a"),
            BTNode::Conditional(ConditionalNode {
                on: "a".into(),
                branches: vec![("success".into(), task("then"))],
                else_branch: None,
            }),
        ]);
        let mut d = Scripted::new(&[("a", "failure")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Succeeded);
        assert_eq!(d.dispatched, vec!["a"], "branch not run");
    }

    #[test]
    fn else_branch_taken_when_no_label_matches() {
        let root = BTNode::Sequence(vec![
            task("a"),
            BTNode::Conditional(ConditionalNode {
                on: "a".into(),
                branches: vec![("success".into(), task("then"))],
                else_branch: Some(Box::new(task("otherwise"))),
            }),
        ]);
        let mut d = Scripted::new(&[("a", "low")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Succeeded);
        assert_eq!(d.dispatched, vec!["a", "otherwise"]);
    }

    #[test]
    fn non_failure_labels_do_not_fail_tasks() {
        let root = BTNode::Sequence(vec![task("a"), task("b")]);
        let mut d = Scripted::new(&[("a", "low")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Succeeded);
        assert_eq!(d.dispatched, vec!["a", "b"]);
    }

    #[test]
    fn conditional_on_undispatched_task_is_a_fault() {
        // "a" fails and is consumed by the first conditional whose branch
        // holds "inner"; the second conditional references "inner", which
        // never ran.
        let root = BTNode::Sequence(vec![
            task("a"),
            BTNode::Conditional(ConditionalNode {
                on: "a".into(),
                branches: vec![("success".into(), task("inner"))],
                else_branch: None,
            }),
            BTNode::Conditional(ConditionalNode {
                on: "inner".into(),
                branches: vec![("success".into(), task("later"))],
                else_branch: None,
            }),
        ]);
        let mut d = Scripted::new(&[("a", "failure")]);
        match interpret(&root, &mut d) {
            Err(ExecFault::MissingOutcome { on }) => assert_eq!(on, "inner"),
            other => panic!("expected missing-outcome fault, got {:?}", other),
        }
    }

    #[test]
    fn branch_status_propagates_through_conditional() {
        let root = BTNode::Sequence(vec![
            task("a"),
            BTNode::Conditional(ConditionalNode {
                on: "a".into(),
                branches: vec![("success".into(), task("doomed"))],
                else_branch: None,
            }),
            task("never"),
        ]);
        let mut d = Scripted::new(&[("doomed", "failure")]);
        assert_eq!(interpret(&root, &mut d).unwrap(), NodeStatus::Failed);
        assert_eq!(d.dispatched, vec!["a", "doomed"]);
    }

    #[test]
    fn trace_ndjson_round_trip() {
        let trace = ExecutionTrace {
            mission_id: "m1".into(),
            robot_id: "husky".into(),
            seed: 9,
            entries: vec![TraceEntry {
                path: "/mission/sequence/task".into(),
                action: "read_temperature".into(),
                params: BTreeMap::new(),
                outcome: TaskOutcome::new("t1", "success", 1.0)
                    .with_value(serde_json::json!({"temperature_c": 31.5})),
                state: serde_json::json!({"position": {"lat": 37.3, "lon": -120.48}}),
                t: 1.0,
            }],
            final_status: MissionStatus::Completed,
            fault: None,
        };
        let text = trace_to_ndjson(&trace);
        assert_eq!(text.lines().count(), 3);
        let again = trace_from_ndjson(&text).unwrap();
        assert_eq!(trace, again);
    }
}
