//! Plan generation: context assembly, the gateway call, and the approval
//! loop that feeds validation errors back to the model for a rewrite.
//!
//! Planning is strictly one-shot: once a plan is approved the loop ends and
//! nothing downstream ever calls back into this module.

use thiserror::Error;

use crate::gateway::{GatewayError, LlmGateway};
use crate::plan::MissionPlan;
use crate::schema::{render_context, ActionPool};
use crate::sim::farm::FarmModel;
use crate::validator::{render_error_log, validate, ValidationReport};

/// Prompt skeleton, versioned in-repo so prompt bytes are reproducible.
const PROMPT_TEMPLATE: &str = include_str!("../templates/mission_prompt.txt");

/// Everything the planner may show the model.
#[derive(Debug, Clone)]
pub struct ContextBundle {
    pub pools: Vec<ActionPool>,
    pub farm: Option<FarmModel>,
    /// Extra named documents appended verbatim to the context block.
    pub extra_docs: Vec<(String, String)>,
}

impl ContextBundle {
    pub fn new(pools: Vec<ActionPool>) -> Self {
        assert!(!pools.is_empty(), "a context bundle needs at least one pool");
        ContextBundle { pools, farm: None, extra_docs: Vec::new() }
    }

    pub fn with_farm(mut self, farm: FarmModel) -> Self {
        self.farm = Some(farm);
        self
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_attempts: u32,
    /// Chat-completions URL; live mode only.
    pub endpoint: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model: "gpt-4o-2024-11-20".to_string(),
            temperature: 0.2,
            max_tokens: 4096,
            max_attempts: 3,
            endpoint: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("temperature {0} outside [0, 2]")]
    Temperature(f64),
    #[error("max_tokens must be at least 1")]
    MaxTokens,
    #[error("max_attempts must be at least 1")]
    MaxAttempts,
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.max_tokens < 1 {
            return Err(ConfigError::MaxTokens);
        }
        if self.max_attempts < 1 {
            return Err(ConfigError::MaxAttempts);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug)]
pub enum PlanningOutcome {
    Approved { plan: MissionPlan, attempts_used: u32 },
    Refused { explanation: String },
    Exhausted { last_report: ValidationReport },
}

#[derive(Debug)]
pub struct PlanningResult {
    pub outcome: PlanningOutcome,
    /// One (prompt, response) pair per attempt, in order.
    pub transcript: Vec<TranscriptEntry>,
}

impl PlanningResult {
    pub fn approved_plan(&self) -> Option<&MissionPlan> {
        match &self.outcome {
            PlanningOutcome::Approved { plan, .. } => Some(plan),
            _ => None,
        }
    }
}

/// Assemble the prompt: rendered pools, farm summary when present, extra
/// docs, the plan grammar, the query verbatim, and — on a rewrite — the
/// previous attempt's error log quoted in full. Deterministic.
pub fn build_prompt(bundle: &ContextBundle, query: &str, prior_error_log: Option<&str>) -> String {
    assert!(!query.is_empty(), "build_prompt requires a non-empty query");
    let mut context = render_context(&bundle.pools);
    if let Some(farm) = &bundle.farm {
        context.push_str(&farm.summary());
    }
    for (name, text) in &bundle.extra_docs {
        context.push_str(&format!("--- {} ---\n{}\n", name, text));
    }
    let rewrite = match prior_error_log {
        None => String::new(),
        Some(log) => format!(
            "\n=== REWRITE REQUEST ===\nYour previous plan failed validation. Fix every error \
             listed below and reply with the corrected XML document only.\n{}\n",
            log
        ),
    };
    PROMPT_TEMPLATE
        .replace("{{context}}", &context)
        .replace("{{rewrite}}", &rewrite)
        .replace("{{query}}", query)
}

/// A gateway response whose root element is `<no_mission>` means the model
/// declined to plan; the body is the explanation shown to the user.
fn refusal_explanation(response: &str) -> Option<String> {
    let doc = roxmltree::Document::parse_with_options(
        response,
        roxmltree::ParsingOptions { allow_dtd: false, ..Default::default() },
    )
    .ok()?;
    let root = doc.root_element();
    if root.tag_name().name() != "no_mission" {
        return None;
    }
    let text: String = root
        .children()
        .filter_map(|n| if n.is_text() { n.text() } else { None })
        .collect::<String>()
        .trim()
        .to_string();
    Some(if text.is_empty() { "the model gave no explanation".to_string() } else { text })
}

/// Run the approval loop: prompt, complete, validate, and on failure request
/// a rewrite carrying the error log — at most `max_attempts` times.
///
/// Gateway transport problems abort with an error; invalid plan *content*
/// never does, it just consumes an attempt.
pub fn plan(
    bundle: &ContextBundle,
    query: &str,
    gateway: &mut dyn LlmGateway,
    config: &GatewayConfig,
) -> Result<PlanningResult, GatewayError> {
    config.validate().map_err(|e| GatewayError::Unavailable(e.to_string()))?;
    let mut transcript = Vec::new();
    let mut prior_log: Option<String> = None;
    let mut last_report = ValidationReport::default();

    for attempt in 1..=config.max_attempts {
        let prompt = build_prompt(bundle, query, prior_log.as_deref());
        let response = gateway.complete(&prompt)?;
        transcript.push(TranscriptEntry { prompt, response: response.clone() });

        if let Some(explanation) = refusal_explanation(&response) {
            return Ok(PlanningResult {
                outcome: PlanningOutcome::Refused { explanation },
                transcript,
            });
        }

        let (maybe_plan, report) = validate(&response, &bundle.pools);
        if let Some(mut plan) = maybe_plan {
            plan.source_query = query.to_string();
            return Ok(PlanningResult {
                outcome: PlanningOutcome::Approved { plan, attempts_used: attempt },
                transcript,
            });
        }
        prior_log = Some(render_error_log(&report));
        last_report = report;
    }

    Ok(PlanningResult { outcome: PlanningOutcome::Exhausted { last_report }, transcript })
}
