//! One-shot natural-language mission planning for heterogeneous farm robots.
//!
//! The pipeline turns a plain-English request into a validated behavior tree
//! and executes it without any further model involvement:
//!
//! 1. [`schema`] loads each robot's capability pool and renders it as
//!    planner context.
//! 2. [`planner`] assembles the prompt, calls an LLM gateway (a deterministic
//!    mock or a live HTTP endpoint), and runs the approval loop: invalid
//!    plans go back to the model together with the validation error log.
//! 3. [`validator`] is that approval step: every problem in the candidate
//!    XML, in document order.
//! 4. [`wire`] hands the approved plan to the executor host over TCP as
//!    length-prefixed, checksummed JSON frames; [`service`] is the receiving
//!    side with per-robot serial mission queues.
//! 5. [`executor`] interprets the behavior tree against a robot backend and
//!    records an append-only trace; [`sim`] provides the simulated orchard,
//!    a wheeled rover, and a 6-DOF manipulator.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run -p one4all --example load_schemas
//! cargo run -p one4all --example mock_planning
//! cargo run -p one4all --example execute_mission
//! cargo run -p one4all --example e2e_loopback
//! ```
//!
//! The `one4all` binary exposes the same pipeline as subcommands
//! (`plan`, `validate`, `execute`, `serve`, `e2e`).

pub mod cli;
pub mod executor;
pub mod gateway;
pub mod plan;
pub mod planner;
pub mod schema;
pub mod service;
pub mod sim;
pub mod testkit;
pub mod validator;
pub mod wire;

pub use executor::{run, ExecutionTrace, MissionStatus, RobotBackend, TaskOutcome};
pub use plan::{count_nodes, parse_plan, serialize_plan, BTNode, MissionPlan};
pub use schema::{load_pool, render_context, ActionPool, ActionSpec};
pub use validator::{render_error_log, validate, ValidationReport};
