//! Command implementations behind the `one4all` binary.
//!
//! Every command is a plain function over a [`RunConfig`] and two writers,
//! returning its exit code, so tests drive them without spawning processes.
//!
//! Exit codes: 0 success, 1 config/IO error, 2 query refused, 3 rewrite
//! attempts exhausted, 4 validation failed, 5 mission failed, 6 transport
//! error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::executor::{run, MissionStatus, RobotBackend, RunnerConfig};
use crate::gateway::{LiveGateway, LlmGateway, MockGateway};
use crate::plan::{count_nodes, serialize_plan, MissionPlan};
use crate::planner::{build_prompt, plan as plan_mission, ContextBundle, GatewayConfig, PlanningOutcome, PlanningResult};
use crate::schema::{load_pool, ActionPool};
use crate::service::{serve, RobotHost, ServiceConfig};
use crate::sim::arm::KortexBackend;
use crate::sim::farm::{load_farm, FarmModel};
use crate::sim::rover::HuskyBackend;
use crate::sim::scene::load_scene;
use crate::sim::SimWorld;
use crate::validator::{render_error_log, validate};
use crate::wire::{Message, ReportStatus, WireClient, DEFAULT_TIMEOUT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_EXHAUSTED: i32 = 3;
pub const EXIT_INVALID: i32 = 4;
pub const EXIT_MISSION_FAILED: i32 = 5;
pub const EXIT_TRANSPORT: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Mock,
    Live,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Directory holding `schemas/`, `plans/`, and `worlds/`.
    pub context_dir: PathBuf,
    pub gateway_mode: GatewayMode,
    /// Mock-gateway script; without it the mock answers from the plan corpus.
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_attempts: u32,
    pub seed: u64,
    pub addr: String,
    pub output_dir: PathBuf,
    pub task_timeout_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let g = GatewayConfig::default();
        RunConfig {
            context_dir: PathBuf::from("corpus"),
            gateway_mode: GatewayMode::Mock,
            script: None,
            endpoint: None,
            model: g.model,
            temperature: g.temperature,
            max_tokens: g.max_tokens,
            max_attempts: g.max_attempts,
            seed: 0,
            addr: format!("127.0.0.1:{}", crate::wire::DEFAULT_PORT),
            output_dir: PathBuf::from("out"),
            task_timeout_s: crate::executor::DEFAULT_TASK_TIMEOUT_S,
        }
    }
}

/// Optional TOML config file; any present key overrides the default and is in
/// turn overridden by a command-line flag.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub context: Option<PathBuf>,
    pub gateway: Option<String>,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub max_attempts: Option<u32>,
    pub seed: Option<u64>,
    pub addr: Option<String>,
    pub output: Option<PathBuf>,
    pub task_timeout_s: Option<f64>,
}

pub fn parse_gateway_mode(s: &str) -> Result<GatewayMode, String> {
    match s {
        "mock" => Ok(GatewayMode::Mock),
        "live" => Ok(GatewayMode::Live),
        other => Err(format!("gateway must be mock or live, got {:?}", other)),
    }
}

impl RunConfig {
    pub fn with_file(mut self, path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {}", path.display(), e))?;
        let file: FileConfig =
            toml::from_str(&text).map_err(|e| format!("bad config {}: {}", path.display(), e))?;
        if let Some(v) = file.context {
            self.context_dir = v;
        }
        if let Some(v) = file.gateway {
            self.gateway_mode = parse_gateway_mode(&v)?;
        }
        if let Some(v) = file.script {
            self.script = Some(v);
        }
        if let Some(v) = file.endpoint {
            self.endpoint = Some(v);
        }
        if let Some(v) = file.model {
            self.model = v;
        }
        if let Some(v) = file.temperature {
            self.temperature = v;
        }
        if let Some(v) = file.max_tokens {
            self.max_tokens = v;
        }
        if let Some(v) = file.max_attempts {
            self.max_attempts = v;
        }
        if let Some(v) = file.seed {
            self.seed = v;
        }
        if let Some(v) = file.addr {
            self.addr = v;
        }
        if let Some(v) = file.output {
            self.output_dir = v;
        }
        if let Some(v) = file.task_timeout_s {
            self.task_timeout_s = v;
        }
        Ok(self)
    }

    fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            max_attempts: self.max_attempts,
            endpoint: self.endpoint.clone(),
        }
    }

    fn schemas_dir(&self) -> PathBuf {
        self.context_dir.join("schemas")
    }

    fn plans_dir(&self) -> PathBuf {
        self.context_dir.join("plans")
    }

    fn worlds_dir(&self) -> PathBuf {
        self.context_dir.join("worlds")
    }
}

fn load_pools(config: &RunConfig) -> Result<Vec<ActionPool>, String> {
    let dir = config.schemas_dir();
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| format!("cannot read schema dir {}: {}", dir.display(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "xml").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("no schema files in {}", dir.display()));
    }
    let mut pools = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f)
            .map_err(|e| format!("cannot read schema {}: {}", f.display(), e))?;
        let pool =
            load_pool(&text).map_err(|e| format!("bad schema {}: {}", f.display(), e))?;
        pools.push(pool);
    }
    Ok(pools)
}

fn first_with_ext(dir: &Path, ext: &str) -> Option<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == ext).unwrap_or(false))
        .collect();
    files.sort();
    files.into_iter().next()
}

fn load_farm_model(config: &RunConfig) -> Result<Option<FarmModel>, String> {
    match first_with_ext(&config.worlds_dir(), "geojson") {
        None => Ok(None),
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read farm {}: {}", path.display(), e))?;
            load_farm(&text).map(Some).map_err(|e| format!("bad farm {}: {}", path.display(), e))
        }
    }
}

fn load_world(config: &RunConfig) -> Result<SimWorld, String> {
    let farm = load_farm_model(config)?.unwrap_or_default();
    let scene = match first_with_ext(&config.worlds_dir(), "json") {
        None => Vec::new(),
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("cannot read scene {}: {}", path.display(), e))?;
            load_scene(&text).map_err(|e| format!("bad scene {}: {}", path.display(), e))?
        }
    };
    Ok(SimWorld::new(farm, scene, config.seed))
}

fn build_bundle(config: &RunConfig) -> Result<ContextBundle, String> {
    let pools = load_pools(config)?;
    let mut bundle = ContextBundle::new(pools);
    if let Some(farm) = load_farm_model(config)? {
        bundle = bundle.with_farm(farm);
    }
    Ok(bundle)
}

fn build_gateway(config: &RunConfig) -> Result<Box<dyn LlmGateway>, String> {
    match config.gateway_mode {
        GatewayMode::Mock => match &config.script {
            Some(path) => Ok(Box::new(MockGateway::from_script_file(path)?)),
            None => {
                let dir = config.plans_dir();
                let mock = MockGateway::from_corpus_dir(&dir)
                    .map_err(|e| format!("cannot load plan corpus {}: {}", dir.display(), e))?;
                Ok(Box::new(mock))
            }
        },
        GatewayMode::Live => {
            let gw = LiveGateway::new(&config.gateway_config()).map_err(|e| e.to_string())?;
            Ok(Box::new(gw))
        }
    }
}

fn backend_for(pool: &ActionPool, world: &SimWorld) -> Result<Box<dyn RobotBackend + Send>, String> {
    match pool.robot_id.as_str() {
        "husky" => Ok(Box::new(HuskyBackend::new(pool.clone(), world))),
        "kortex" => Ok(Box::new(KortexBackend::new(pool.clone()))),
        other => Err(format!("no simulated backend for robot {:?}", other)),
    }
}

fn write_transcript(config: &RunConfig, result: &PlanningResult) -> Result<(), String> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| format!("cannot create output dir: {}", e))?;
    let entries: Vec<serde_json::Value> = result
        .transcript
        .iter()
        .map(|t| serde_json::json!({"prompt": t.prompt, "response": t.response}))
        .collect();
    let path = config.output_dir.join("transcript.json");
    let text = serde_json::to_string_pretty(&entries).expect("transcript serializes");
    std::fs::write(&path, text).map_err(|e| format!("cannot write transcript: {}", e))
}

fn run_planner(
    query: &str,
    config: &RunConfig,
) -> Result<(PlanningResult, Vec<ActionPool>), String> {
    if query.trim().is_empty() {
        return Err("query must not be empty".to_string());
    }
    let bundle = build_bundle(config)?;
    let mut gateway = build_gateway(config)?;
    let result = plan_mission(&bundle, query, gateway.as_mut(), &config.gateway_config())
        .map_err(|e| e.to_string())?;
    Ok((result, bundle.pools))
}

/// `plan QUERY`: run the approval loop and print the approved plan XML.
pub fn cmd_plan(query: &str, config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (result, _) = match run_planner(query, config) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = write_transcript(config, &result) {
        let _ = writeln!(err, "error: {}", e);
        return EXIT_CONFIG;
    }
    match &result.outcome {
        PlanningOutcome::Approved { plan, attempts_used } => {
            let _ = write!(out, "{}", serialize_plan(plan));
            let _ = writeln!(err, "approved after {} attempt(s)", attempts_used);
            EXIT_OK
        }
        PlanningOutcome::Refused { explanation } => {
            let _ = writeln!(err, "refused: {}", explanation);
            EXIT_REFUSED
        }
        PlanningOutcome::Exhausted { last_report } => {
            let _ = writeln!(err, "exhausted rewrite attempts; last error log:");
            let _ = write!(err, "{}", render_error_log(last_report));
            EXIT_EXHAUSTED
        }
    }
}

/// `validate PLAN_FILE`: exit 0 when approved, else print the error log.
pub fn cmd_validate(
    plan_file: &Path,
    config: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let xml = match std::fs::read_to_string(plan_file) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {}", plan_file.display(), e);
            return EXIT_CONFIG;
        }
    };
    let pools = match load_pools(config) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let (plan, report) = validate(&xml, &pools);
    match plan {
        Some(plan) => {
            let count = count_nodes(&plan);
            let _ = writeln!(
                out,
                "approved {} (robot {}, {} tasks, {} conditionals)",
                plan.mission_id, plan.robot_id, count.tasks, count.conditionals
            );
            EXIT_OK
        }
        None => {
            let _ = write!(out, "{}", render_error_log(&report));
            EXIT_INVALID
        }
    }
}

fn summarize_trace(trace: &crate::executor::ExecutionTrace, out: &mut dyn Write) {
    let branches = trace
        .entries
        .iter()
        .filter(|e| e.path.contains("/branch") || e.path.contains("/else"))
        .count();
    let _ = writeln!(
        out,
        "mission {}: {} ({} tasks run, {} inside branches, {:.1} sim-seconds)",
        trace.mission_id,
        match trace.final_status {
            MissionStatus::Completed => "completed",
            MissionStatus::Failed => "failed",
        },
        trace.entries.len(),
        branches,
        trace.entries.last().map(|e| e.t).unwrap_or(0.0),
    );
    for e in &trace.entries {
        let _ = writeln!(out, "  [{:>7.1}s] {} {} -> {}", e.t, e.outcome.task_id, e.action, e.outcome.label);
    }
    if let Some(f) = &trace.fault {
        let _ = writeln!(out, "  fault: {}", f);
    }
}

fn write_trace_file(config: &RunConfig, trace_name: &str, ndjson: &str) -> Result<PathBuf, String> {
    let dir = config.output_dir.join("traces");
    std::fs::create_dir_all(&dir).map_err(|e| format!("cannot create trace dir: {}", e))?;
    let path = dir.join(format!("{}.ndjson", trace_name));
    std::fs::write(&path, ndjson).map_err(|e| format!("cannot write trace: {}", e))?;
    Ok(path)
}

/// `execute PLAN_FILE`: validate, run against the local simulated world,
/// write the trace, print a summary.
pub fn cmd_execute(
    plan_file: &Path,
    config: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let xml = match std::fs::read_to_string(plan_file) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {}", plan_file.display(), e);
            return EXIT_CONFIG;
        }
    };
    let pools = match load_pools(config) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let (plan, report) = validate(&xml, &pools);
    let Some(plan) = plan else {
        let _ = write!(out, "{}", render_error_log(&report));
        return EXIT_INVALID;
    };
    execute_local(&plan, &pools, config, out, err)
}

fn execute_local(
    plan: &MissionPlan,
    pools: &[ActionPool],
    config: &RunConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let mut world = match load_world(config) {
        Ok(w) => w,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let pool = pools.iter().find(|p| p.robot_id == plan.robot_id).expect("validated robot");
    let mut backend = match backend_for(pool, &world) {
        Ok(b) => b,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let runner = RunnerConfig { task_timeout_s: config.task_timeout_s };
    let trace = run(plan, backend.as_mut(), &mut world, &runner);
    let ndjson = crate::executor::trace_to_ndjson(&trace);
    if let Err(e) = write_trace_file(config, &trace.mission_id, &ndjson) {
        let _ = writeln!(err, "error: {}", e);
        return EXIT_CONFIG;
    }
    summarize_trace(&trace, out);
    match trace.final_status {
        MissionStatus::Completed => EXIT_OK,
        MissionStatus::Failed => EXIT_MISSION_FAILED,
    }
}

fn build_hosts(config: &RunConfig) -> Result<Vec<RobotHost>, String> {
    let pools = load_pools(config)?;
    let world = load_world(config)?;
    let mut hosts = Vec::new();
    for pool in pools {
        // Only robots with a simulated backend are hosted.
        if backend_for(&pool, &world).is_err() {
            continue;
        }
        hosts.push(RobotHost {
            pool,
            world: world.clone(),
            make_backend: Box::new(|pool, world| {
                backend_for(pool, world).expect("host construction checked the backend")
            }),
        });
    }
    if hosts.is_empty() {
        return Err("no robot in the schema dir has a simulated backend".to_string());
    }
    Ok(hosts)
}

fn service_config(config: &RunConfig) -> ServiceConfig {
    ServiceConfig {
        seed: config.seed,
        trace_dir: Some(config.output_dir.join("traces")),
        runner: RunnerConfig { task_timeout_s: config.task_timeout_s },
    }
}

/// `serve`: host the executor service until the process is stopped.
pub fn cmd_serve(config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let hosts = match build_hosts(config) {
        Ok(h) => h,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let handle = match serve(config.addr.as_str(), hosts, service_config(config)) {
        Ok(h) => h,
        Err(e) => {
            let _ = writeln!(err, "error: cannot bind {}: {}", config.addr, e);
            return EXIT_CONFIG;
        }
    };
    let _ = writeln!(out, "executor service listening on {}", handle.local_addr());
    handle.join();
    EXIT_OK
}

/// `e2e QUERY`: plan, hand off over TCP to an in-process service, poll for
/// the report, print it.
pub fn cmd_e2e(query: &str, config: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let hosts = match build_hosts(config) {
        Ok(h) => h,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    let handle = match serve(config.addr.as_str(), hosts, service_config(config)) {
        Ok(h) => h,
        Err(e) => {
            let _ = writeln!(err, "error: cannot bind {}: {}", config.addr, e);
            return EXIT_CONFIG;
        }
    };
    let code = e2e_inner(query, config, handle.local_addr(), out, err);
    handle.stop();
    code
}

fn e2e_inner(
    query: &str,
    config: &RunConfig,
    addr: std::net::SocketAddr,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let (result, _) = match run_planner(query, config) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = write_transcript(config, &result) {
        let _ = writeln!(err, "error: {}", e);
        return EXIT_CONFIG;
    }
    let plan = match &result.outcome {
        PlanningOutcome::Approved { plan, attempts_used } => {
            let _ = writeln!(err, "approved after {} attempt(s)", attempts_used);
            plan
        }
        PlanningOutcome::Refused { explanation } => {
            let _ = writeln!(err, "refused: {}", explanation);
            return EXIT_REFUSED;
        }
        PlanningOutcome::Exhausted { last_report } => {
            let _ = writeln!(err, "exhausted rewrite attempts; last error log:");
            let _ = write!(err, "{}", render_error_log(last_report));
            return EXIT_EXHAUSTED;
        }
    };

    let mut client = match WireClient::connect(addr, DEFAULT_TIMEOUT) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "transport error: {}", e);
            return EXIT_TRANSPORT;
        }
    };
    match client.submit(plan) {
        Ok(Message::Ack { accepted: true, .. }) => {}
        Ok(Message::Ack { reason, .. }) => {
            let _ = writeln!(err, "plan rejected by executor: {}", reason.unwrap_or_default());
            return EXIT_MISSION_FAILED;
        }
        Ok(_) => unreachable!("submit only returns acks"),
        Err(e) => {
            let _ = writeln!(err, "transport error: {}", e);
            return EXIT_TRANSPORT;
        }
    }

    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        match client.fetch_report(&plan.mission_id) {
            Ok(Message::Report { status, trace, .. }) => match status {
                ReportStatus::Unknown => {
                    if Instant::now() > deadline {
                        let _ = writeln!(err, "transport error: report never became available");
                        return EXIT_TRANSPORT;
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
                ReportStatus::Completed | ReportStatus::Failed => {
                    match crate::executor::trace_from_ndjson(&trace) {
                        Ok(parsed) => {
                            if let Err(e) = write_trace_file(config, &parsed.mission_id, &trace) {
                                let _ = writeln!(err, "error: {}", e);
                                return EXIT_CONFIG;
                            }
                            summarize_trace(&parsed, out);
                        }
                        Err(e) => {
                            let _ = writeln!(err, "error: bad trace in report: {}", e);
                            return EXIT_TRANSPORT;
                        }
                    }
                    return if status == ReportStatus::Completed {
                        EXIT_OK
                    } else {
                        EXIT_MISSION_FAILED
                    };
                }
            },
            Ok(_) => unreachable!("fetch_report only returns reports"),
            Err(e) => {
                let _ = writeln!(err, "transport error: {}", e);
                return EXIT_TRANSPORT;
            }
        }
    }
}

/// Rendered prompt preview used by examples and docs; same bytes the planner
/// sends.
pub fn preview_prompt(query: &str, config: &RunConfig) -> Result<String, String> {
    let bundle = build_bundle(config)?;
    Ok(build_prompt(&bundle, query, None))
}
