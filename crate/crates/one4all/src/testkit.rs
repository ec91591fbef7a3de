//! Test and demo support: scripted backends, seeded plan/message generators,
//! plan mutation operators, and trace replay.
//!
//! Everything here is deterministic under a fixed seed. The generators are
//! shared by the property tests and the acceptance suite; the mutation
//! operators drive the validator completeness checks.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::executor::{RobotBackend, TaskDispatcher, TaskOutcome, TraceEntry};
use crate::plan::{BTNode, ConditionalNode, MissionPlan, TaskNode};
use crate::schema::{ActionPool, ParamKind, OUTCOME_FAILURE, OUTCOME_SUCCESS};
use crate::sim::SimWorld;
use crate::validator::ErrorCode;
use crate::wire::Message;

/// Repository corpus directory (schemas, plans, worlds).
pub fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Backend whose outcomes come from a table instead of a simulation.
/// Unlisted tasks succeed. Optionally sleeps wall-clock time per task, for
/// exercising in-flight report states.
pub struct ScriptedBackend {
    robot_id: String,
    pool: ActionPool,
    labels: BTreeMap<String, String>,
    wall_delay: Option<std::time::Duration>,
    pub dispatched: Vec<String>,
}

impl ScriptedBackend {
    pub fn new(pool: ActionPool, labels: &[(&str, &str)]) -> Self {
        ScriptedBackend {
            robot_id: pool.robot_id.clone(),
            pool,
            labels: labels.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            wall_delay: None,
            dispatched: Vec::new(),
        }
    }

    pub fn with_wall_delay(mut self, delay: std::time::Duration) -> Self {
        self.wall_delay = Some(delay);
        self
    }
}

impl RobotBackend for ScriptedBackend {
    fn robot_id(&self) -> &str {
        &self.robot_id
    }

    fn pool(&self) -> &ActionPool {
        &self.pool
    }

    fn execute(
        &mut self,
        task_id: &str,
        _action: &str,
        _params: &BTreeMap<String, String>,
        world: &mut SimWorld,
    ) -> TaskOutcome {
        if let Some(d) = self.wall_delay {
            std::thread::sleep(d);
        }
        self.dispatched.push(task_id.to_string());
        let label =
            self.labels.get(task_id).cloned().unwrap_or_else(|| OUTCOME_SUCCESS.to_string());
        world.advance_clock(1.0);
        TaskOutcome::new(task_id, label, 1.0)
    }

    fn snapshot(&self, _world: &SimWorld) -> serde_json::Value {
        serde_json::json!({"scripted": true})
    }
}

/// Dispatcher that answers from a task-id -> label table and records order;
/// the plain harness for interpreter tests.
#[derive(Debug, Default)]
pub struct TableDispatcher {
    pub labels: BTreeMap<String, String>,
    pub dispatched: Vec<String>,
}

impl TableDispatcher {
    pub fn new(labels: BTreeMap<String, String>) -> Self {
        TableDispatcher { labels, dispatched: Vec::new() }
    }
}

impl TaskDispatcher for TableDispatcher {
    fn dispatch(&mut self, task: &TaskNode, _path: &str) -> Result<TaskOutcome, String> {
        self.dispatched.push(task.id.clone());
        let label =
            self.labels.get(&task.id).cloned().unwrap_or_else(|| OUTCOME_SUCCESS.to_string());
        Ok(TaskOutcome::new(&task.id, label, 1.0))
    }
}

/// Replays a recorded trace: each dispatch must match the next entry's task
/// and returns its recorded outcome. Panics on divergence.
pub struct ReplayDispatcher {
    remaining: VecDeque<TraceEntry>,
    pub dispatched: Vec<String>,
}

impl ReplayDispatcher {
    pub fn new(entries: Vec<TraceEntry>) -> Self {
        ReplayDispatcher { remaining: entries.into(), dispatched: Vec::new() }
    }

    pub fn fully_consumed(&self) -> bool {
        self.remaining.is_empty()
    }
}

impl TaskDispatcher for ReplayDispatcher {
    fn dispatch(&mut self, task: &TaskNode, _path: &str) -> Result<TaskOutcome, String> {
        let entry = self
            .remaining
            .pop_front()
            .unwrap_or_else(|| panic!("replay ran past the trace at task {:?}", task.id));
        assert_eq!(entry.outcome.task_id, task.id, "replay diverged from the trace");
        assert_eq!(entry.action, task.action, "replay diverged from the trace");
        self.dispatched.push(task.id.clone());
        Ok(entry.outcome)
    }
}

/// Knobs for [`gen_plan`].
#[derive(Debug, Clone)]
pub struct PlanGenConfig {
    pub max_tasks: usize,
    pub max_conditionals: usize,
    pub max_depth: usize,
    /// When set, conditionals only reference tasks that are guaranteed to
    /// have been dispatched by the time the conditional runs, so generated
    /// trees never trip a missing-outcome fault.
    pub runtime_safe: bool,
    /// Generate unicode-flavored parameter values (for round-trip tests).
    pub fancy_params: bool,
}

impl Default for PlanGenConfig {
    fn default() -> Self {
        PlanGenConfig {
            max_tasks: 6,
            max_conditionals: 3,
            max_depth: 3,
            runtime_safe: true,
            fancy_params: false,
        }
    }
}

pub struct GeneratedPlan {
    pub plan: MissionPlan,
    /// Task ids in pre-order.
    pub task_ids: Vec<String>,
}

struct PlanGen<'a> {
    rng: &'a mut ChaCha8Rng,
    config: &'a PlanGenConfig,
    tasks_left: usize,
    conds_left: usize,
    next_task: usize,
    task_ids: Vec<String>,
}

const PARAM_VALUES: &[&str] =
    &["pistachio", "leaf", "red", "0.5", "37.305", "-120.48", "piñon", "走行", "a b\tc", "x&<>\"'y"];

impl<'a> PlanGen<'a> {
    fn param_value(&mut self) -> String {
        if self.config.fancy_params {
            PARAM_VALUES[self.rng.gen_range(0..PARAM_VALUES.len())].to_string()
        } else {
            format!("v{}", self.rng.gen_range(0..100))
        }
    }

    fn task(&mut self) -> BTNode {
        let id = format!("t{}", self.next_task);
        self.next_task += 1;
        self.tasks_left -= 1;
        self.task_ids.push(id.clone());
        let mut params = BTreeMap::new();
        for i in 0..self.rng.gen_range(0..3) {
            params.insert(format!("p{}", i), self.param_value());
        }
        BTNode::Task(TaskNode {
            id,
            action: format!("act{}", self.rng.gen_range(0..4)),
            params,
        })
    }

    /// `available` holds task ids a conditional here may reference.
    /// In runtime-safe mode that is the definitely-dispatched set; otherwise
    /// it is every pre-order-prior task.
    fn sequence(&mut self, depth: usize, available: &mut Vec<String>) -> BTNode {
        let n = self.rng.gen_range(0..4);
        let mut children = Vec::new();
        for _ in 0..n {
            if self.tasks_left == 0 && self.conds_left == 0 {
                break;
            }
            children.push(self.node(depth, available));
        }
        BTNode::Sequence(children)
    }

    fn node(&mut self, depth: usize, available: &mut Vec<String>) -> BTNode {
        let can_task = self.tasks_left > 0;
        let can_cond = self.conds_left > 0 && !available.is_empty();
        let can_seq = depth < self.config.max_depth;
        let choice = self.rng.gen_range(0..10);
        if can_cond && choice < 3 {
            return self.conditional(depth, available);
        }
        if can_seq && choice < 5 && can_task {
            return self.sequence(depth + 1, available);
        }
        if can_task {
            let t = self.task();
            if let BTNode::Task(tn) = &t {
                available.push(tn.id.clone());
            }
            return t;
        }
        if can_cond {
            return self.conditional(depth, available);
        }
        BTNode::Sequence(vec![])
    }

    fn conditional(&mut self, depth: usize, available: &mut Vec<String>) -> BTNode {
        self.conds_left -= 1;
        let on = available[self.rng.gen_range(0..available.len())].clone();
        let mut branches = Vec::new();
        let mut labels = vec![OUTCOME_SUCCESS, OUTCOME_FAILURE];
        let n_branches = self.rng.gen_range(1..=2);
        for _ in 0..n_branches {
            let label = labels.remove(self.rng.gen_range(0..labels.len()));
            // Branch bodies may not run; their tasks leave the available set
            // afterwards in runtime-safe mode.
            let mut inner = available.clone();
            let body = self.sequence(depth + 1, &mut inner);
            if !self.config.runtime_safe {
                for t in inner {
                    if !available.contains(&t) {
                        available.push(t);
                    }
                }
            }
            branches.push((label.to_string(), body));
        }
        let else_branch = if self.rng.gen_bool(0.4) {
            let mut inner = available.clone();
            Some(Box::new(self.sequence(depth + 1, &mut inner)))
        } else {
            None
        };
        BTNode::Conditional(ConditionalNode { on, branches, else_branch })
    }
}

/// Generate a structurally valid plan from the seeded generator.
pub fn gen_plan(rng: &mut ChaCha8Rng, config: &PlanGenConfig) -> GeneratedPlan {
    let mut g = PlanGen {
        rng,
        config,
        tasks_left: config.max_tasks,
        conds_left: config.max_conditionals,
        next_task: 0,
        task_ids: Vec::new(),
    };
    let mut available = Vec::new();
    let mut children = Vec::new();
    // Lead with a task when possible so conditionals have something to bind.
    if g.tasks_left > 0 && g.rng.gen_bool(0.9) {
        let t = g.task();
        if let BTNode::Task(tn) = &t {
            available.push(tn.id.clone());
        }
        children.push(t);
    }
    while (g.tasks_left > 0 || g.conds_left > 0) && children.len() < 12 {
        if g.rng.gen_bool(0.3) {
            break;
        }
        children.push(g.node(0, &mut available));
    }
    let plan = MissionPlan {
        mission_id: format!("gen_{}", g.rng.gen_range(0..1_000_000)),
        robot_id: "genbot".to_string(),
        root: BTNode::Sequence(children),
        source_query: if config.fancy_params { "find the piñon".to_string() } else { String::new() },
    };
    let task_ids = g.task_ids;
    GeneratedPlan { plan, task_ids }
}

/// Generate a random valid action pool: unique action names, typed params
/// (enum values and numeric bounds kept consistent), success/failure always
/// declared.
pub fn gen_pool(rng: &mut ChaCha8Rng) -> ActionPool {
    use crate::schema::{ActionSpec, ParamSpec};

    let kinds = [
        ParamKind::String,
        ParamKind::Int,
        ParamKind::Float,
        ParamKind::Bool,
        ParamKind::Enum,
        ParamKind::GpsPoint,
        ParamKind::Pose6d,
    ];
    let extra_labels = ["low", "high", "done", "partial"];

    let mut actions = std::collections::BTreeMap::new();
    for i in 0..rng.gen_range(1..6) {
        let name = format!("a{}", i);
        let mut params = Vec::new();
        for j in 0..rng.gen_range(0..4) {
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let allowed_values = if kind == ParamKind::Enum {
                (0..rng.gen_range(1..4)).map(|v| format!("v{}", v)).collect()
            } else {
                Vec::new()
            };
            let (min, max) = if kind.supports_bounds() && rng.gen_bool(0.6) {
                let lo = rng.gen_range(-100..100) as f64;
                let hi = lo + rng.gen_range(0..50) as f64;
                (Some(lo), Some(hi))
            } else {
                (None, None)
            };
            params.push(ParamSpec {
                name: format!("p{}", j),
                kind,
                required: rng.gen_bool(0.5),
                allowed_values,
                min,
                max,
            });
        }
        let mut outcomes: BTreeSet<String> =
            [OUTCOME_SUCCESS.to_string(), OUTCOME_FAILURE.to_string()].into();
        for label in extra_labels {
            if rng.gen_bool(0.25) {
                outcomes.insert(label.to_string());
            }
        }
        let doc = if rng.gen_bool(0.5) { format!("does thing {}", i) } else { String::new() };
        actions.insert(name.clone(), ActionSpec { name, params, outcomes, doc });
    }
    ActionPool {
        robot_id: format!("bot{}", rng.gen_range(0..100)),
        actions,
        schema_version: format!("{}", rng.gen_range(1..9)),
    }
}

/// Generate a random wire message (checksums valid by construction).
pub fn gen_message(rng: &mut ChaCha8Rng) -> Message {
    match rng.gen_range(0..4) {
        0 => Message::submit_plan(
            format!("m{}", rng.gen_range(0..1000)),
            format!("<mission id=\"m\" robot=\"r{}\"><sequence/></mission>", rng.gen_range(0..50)),
        ),
        1 => Message::Ack {
            mission_id: format!("m{}", rng.gen_range(0..1000)),
            accepted: rng.gen_bool(0.5),
            reason: if rng.gen_bool(0.5) { Some("UNKNOWN_ROBOT: nope".to_string()) } else { None },
        },
        2 => Message::FetchReport { mission_id: format!("m{}", rng.gen_range(0..1000)) },
        _ => Message::Report {
            mission_id: format!("m{}", rng.gen_range(0..1000)),
            status: match rng.gen_range(0..3) {
                0 => crate::wire::ReportStatus::Completed,
                1 => crate::wire::ReportStatus::Failed,
                _ => crate::wire::ReportStatus::Unknown,
            },
            trace: if rng.gen_bool(0.5) {
                "{\"type\":\"header\",\"mission_id\":\"m\",\"robot_id\":\"r\",\"seed\":1}\n".to_string()
            } else {
                String::new()
            },
        },
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One mutated plan document and the validation code it must trigger.
#[derive(Debug, Clone)]
pub struct Mutant {
    pub operator: &'static str,
    pub description: String,
    pub xml: String,
    pub expected: ErrorCode,
}

/// Apply all five mutation operators to a valid plan, one mutant per
/// applicable site: drop a required parameter, rename an action, move a
/// conditional before the task it references, clone a task (duplicating its
/// id), and corrupt a numeric literal.
pub fn mutants(plan: &MissionPlan, pool: &ActionPool) -> Vec<Mutant> {
    let mut out = Vec::new();
    drop_required_param_mutants(plan, pool, &mut out);
    rename_action_mutants(plan, &mut out);
    reorder_conditional_mutants(plan, &mut out);
    clone_task_mutants(plan, &mut out);
    corrupt_numeric_mutants(plan, pool, &mut out);
    out
}

fn for_each_task_mut(node: &mut BTNode, f: &mut dyn FnMut(&mut TaskNode)) {
    match node {
        BTNode::Sequence(children) => {
            children.iter_mut().for_each(|c| for_each_task_mut(c, f))
        }
        BTNode::Task(t) => f(t),
        BTNode::Conditional(c) => {
            for (_, b) in c.branches.iter_mut() {
                for_each_task_mut(b, f);
            }
            if let Some(e) = c.else_branch.as_mut() {
                for_each_task_mut(e, f);
            }
        }
    }
}

fn task_list(node: &BTNode, out: &mut Vec<TaskNode>) {
    match node {
        BTNode::Sequence(children) => children.iter().for_each(|c| task_list(c, out)),
        BTNode::Task(t) => out.push(t.clone()),
        BTNode::Conditional(c) => {
            for (_, b) in &c.branches {
                task_list(b, out);
            }
            if let Some(e) = &c.else_branch {
                task_list(e, out);
            }
        }
    }
}

fn emit(plan: &MissionPlan, root: BTNode, operator: &'static str, description: String, expected: ErrorCode, out: &mut Vec<Mutant>) {
    let mutated = MissionPlan { root, ..plan.clone() };
    out.push(Mutant { operator, description, xml: crate::plan::serialize_plan(&mutated), expected });
}

fn drop_required_param_mutants(plan: &MissionPlan, pool: &ActionPool, out: &mut Vec<Mutant>) {
    let mut tasks = Vec::new();
    task_list(&plan.root, &mut tasks);
    for task in &tasks {
        let Some(spec) = pool.lookup(&task.action) else { continue };
        for p in spec.params.iter().filter(|p| p.required && task.params.contains_key(&p.name)) {
            let mut root = plan.root.clone();
            let (tid, pname) = (task.id.clone(), p.name.clone());
            for_each_task_mut(&mut root, &mut |t| {
                if t.id == tid {
                    t.params.remove(&pname);
                }
            });
            emit(
                plan,
                root,
                "drop_required_param",
                format!("drop {}.{}", task.id, p.name),
                ErrorCode::MissingParam,
                out,
            );
        }
    }
}

fn rename_action_mutants(plan: &MissionPlan, out: &mut Vec<Mutant>) {
    let mut tasks = Vec::new();
    task_list(&plan.root, &mut tasks);
    for task in &tasks {
        let mut root = plan.root.clone();
        let tid = task.id.clone();
        for_each_task_mut(&mut root, &mut |t| {
            if t.id == tid {
                t.action = format!("{}_zz", t.action);
            }
        });
        emit(
            plan,
            root,
            "rename_action",
            format!("rename action of {}", task.id),
            ErrorCode::UnknownAction,
            out,
        );
    }
}

fn reorder_conditional_mutants(plan: &MissionPlan, out: &mut Vec<Mutant>) {
    // Only handles conditionals whose referenced task is a sibling in the
    // same sequence; replace that sequence within the full tree.
    fn walk(plan: &MissionPlan, node: &BTNode, path: Vec<usize>, out: &mut Vec<Mutant>) {
        if let BTNode::Sequence(children) = node {
            for i in 0..children.len() {
                if let BTNode::Conditional(c) = &children[i] {
                    if let Some(j) = children[..i]
                        .iter()
                        .position(|n| matches!(n, BTNode::Task(t) if t.id == c.on))
                    {
                        let mut reordered = children.clone();
                        let cond = reordered.remove(i);
                        reordered.insert(j, cond);
                        let mut root = plan.root.clone();
                        replace_sequence(&mut root, &path, reordered);
                        emit(
                            plan,
                            root,
                            "reorder_conditional",
                            format!("move conditional on {:?} before its task", c.on),
                            ErrorCode::ForwardReference,
                            out,
                        );
                    }
                }
                let mut sub = path.clone();
                sub.push(i);
                walk(plan, &children[i], sub, out);
            }
        } else if let BTNode::Conditional(c) = node {
            for (k, (_, b)) in c.branches.iter().enumerate() {
                let mut sub = path.clone();
                sub.push(1000 + k);
                walk(plan, b, sub, out);
            }
            if let Some(e) = &c.else_branch {
                let mut sub = path;
                sub.push(2000);
                walk(plan, e, sub, out);
            }
        }
    }

    fn replace_sequence(node: &mut BTNode, path: &[usize], replacement: Vec<BTNode>) {
        if path.is_empty() {
            if let BTNode::Sequence(children) = node {
                *children = replacement;
            }
            return;
        }
        let (head, rest) = (path[0], &path[1..]);
        match node {
            BTNode::Sequence(children) => replace_sequence(&mut children[head], rest, replacement),
            BTNode::Conditional(c) => {
                if head >= 2000 {
                    if let Some(e) = c.else_branch.as_mut() {
                        replace_sequence(e, rest, replacement);
                    }
                } else {
                    replace_sequence(&mut c.branches[head - 1000].1, rest, replacement);
                }
            }
            BTNode::Task(_) => {}
        }
    }

    walk(plan, &plan.root, Vec::new(), out);
}

fn clone_task_mutants(plan: &MissionPlan, out: &mut Vec<Mutant>) {
    // Clone each task that sits directly in a sequence, as its next sibling.
    fn walk(plan: &MissionPlan, node: &BTNode, path: Vec<usize>, out: &mut Vec<Mutant>) {
        if let BTNode::Sequence(children) = node {
            for (i, child) in children.iter().enumerate() {
                if let BTNode::Task(t) = child {
                    let mut with_clone = children.clone();
                    with_clone.insert(i + 1, child.clone());
                    let mut root = plan.root.clone();
                    replace_at(&mut root, &path, with_clone.clone());
                    emit(
                        plan,
                        root,
                        "duplicate_task_id",
                        format!("clone task {:?}", t.id),
                        ErrorCode::DuplicateTaskId,
                        out,
                    );
                }
                let mut sub = path.clone();
                sub.push(i);
                walk(plan, child, sub, out);
            }
        } else if let BTNode::Conditional(c) = node {
            for (k, (_, b)) in c.branches.iter().enumerate() {
                let mut sub = path.clone();
                sub.push(1000 + k);
                walk(plan, b, sub, out);
            }
            if let Some(e) = &c.else_branch {
                let mut sub = path;
                sub.push(2000);
                walk(plan, e, sub, out);
            }
        }
    }

    fn replace_at(node: &mut BTNode, path: &[usize], replacement: Vec<BTNode>) {
        if path.is_empty() {
            if let BTNode::Sequence(children) = node {
                *children = replacement;
            }
            return;
        }
        let (head, rest) = (path[0], &path[1..]);
        match node {
            BTNode::Sequence(children) => replace_at(&mut children[head], rest, replacement),
            BTNode::Conditional(c) => {
                if head >= 2000 {
                    if let Some(e) = c.else_branch.as_mut() {
                        replace_at(e, rest, replacement);
                    }
                } else {
                    replace_at(&mut c.branches[head - 1000].1, rest, replacement);
                }
            }
            BTNode::Task(_) => {}
        }
    }

    walk(plan, &plan.root, Vec::new(), out);
}

fn corrupt_numeric_mutants(plan: &MissionPlan, pool: &ActionPool, out: &mut Vec<Mutant>) {
    let numeric = |k: ParamKind| {
        matches!(k, ParamKind::Int | ParamKind::Float | ParamKind::GpsPoint | ParamKind::Pose6d)
    };
    let mut tasks = Vec::new();
    task_list(&plan.root, &mut tasks);
    for task in &tasks {
        let Some(spec) = pool.lookup(&task.action) else { continue };
        for p in spec.params.iter().filter(|p| numeric(p.kind) && task.params.contains_key(&p.name)) {
            let mut root = plan.root.clone();
            let (tid, pname) = (task.id.clone(), p.name.clone());
            for_each_task_mut(&mut root, &mut |t| {
                if t.id == tid {
                    if let Some(v) = t.params.get_mut(&pname) {
                        v.push('x');
                    }
                }
            });
            emit(
                plan,
                root,
                "corrupt_numeric",
                format!("corrupt {}.{}", task.id, p.name),
                ErrorCode::BadParamType,
                out,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{count_nodes, parse_plan, serialize_plan};

    #[test]
    fn generated_plans_parse_back() {
        let mut rng = seeded_rng(1);
        for _ in 0..50 {
            let config = PlanGenConfig { fancy_params: true, ..PlanGenConfig::default() };
            let generated = gen_plan(&mut rng, &config);
            let xml = serialize_plan(&generated.plan);
            let parsed = parse_plan(&xml)
                .unwrap_or_else(|e| panic!("generated plan failed to parse: {}\n{}", e, xml));
            assert_eq!(parsed, generated.plan);
            assert_eq!(count_nodes(&parsed).tasks, generated.task_ids.len());
        }
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let a = gen_plan(&mut seeded_rng(7), &PlanGenConfig::default());
        let b = gen_plan(&mut seeded_rng(7), &PlanGenConfig::default());
        assert_eq!(a.plan, b.plan);
    }
}
