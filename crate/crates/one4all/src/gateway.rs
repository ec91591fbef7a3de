//! The LLM boundary: one `complete(prompt) -> text` call.
//!
//! Two implementations. [`MockGateway`] answers deterministically from a
//! query-keyed response table or a scripted step list, which is how the whole
//! pipeline is tested without a model. [`LiveGateway`] posts a chat
//! completion to an HTTP endpoint.
//!
//! Every completion call, mock or live, bumps a process-wide counter so tests
//! can assert that execution paths never consult a model.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Deserialize;
use thiserror::Error;

use crate::planner::GatewayConfig;

/// Environment variable holding the live-gateway credential.
pub const API_KEY_ENV: &str = "ONE4ALL_API_KEY";

static GATEWAY_CALLS: AtomicU64 = AtomicU64::new(0);

/// Total completion calls made by any gateway in this process.
pub fn total_gateway_calls() -> u64 {
    GATEWAY_CALLS.load(Ordering::SeqCst)
}

fn count_call() {
    GATEWAY_CALLS.fetch_add(1, Ordering::SeqCst);
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("mock script exhausted after {0} steps")]
    ScriptExhausted(usize),
    #[error("mock script step {step}: expected prompt to contain {expected:?}")]
    ScriptMismatch { step: usize, expected: String },
    #[error("gateway unavailable: {0}")]
    Unavailable(String),
    #[error("gateway auth error: {0}")]
    Auth(String),
}

pub trait LlmGateway {
    fn complete(&mut self, prompt: &str) -> Result<String, GatewayError>;
}

/// Canned response the mock returns when no table key matches: the pipeline's
/// "I do not understand" path.
pub fn refusal_response(reason: &str) -> String {
    format!("<no_mission>{}</no_mission>", reason)
}

/// Scripted faults a mock step can inject instead of a real response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultTag {
    /// Unterminated XML, tripping the syntax check.
    MalformedXml,
    /// A plan using an action no robot declares.
    UnknownAction,
    /// The refusal sentinel.
    Refuse,
    /// An empty response body.
    Empty,
}

impl FaultTag {
    pub fn parse(s: &str) -> Option<FaultTag> {
        Some(match s {
            "malformed_xml" => FaultTag::MalformedXml,
            "unknown_action" => FaultTag::UnknownAction,
            "refuse" => FaultTag::Refuse,
            "empty" => FaultTag::Empty,
            _ => return None,
        })
    }

    pub fn response(&self) -> String {
        match self {
            FaultTag::MalformedXml => "<mission id=\"broken\" robot=\"kortex\"><sequence>".to_string(),
            FaultTag::UnknownAction => concat!(
                "<mission id=\"fault_unknown_action\" robot=\"kortex\"><sequence>",
                "<task id=\"t1\" action=\"teleport\"/>",
                "</sequence></mission>"
            )
            .to_string(),
            FaultTag::Refuse => refusal_response("I do not understand the request."),
            FaultTag::Empty => String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptStep {
    /// Substring the prompt must contain for this step to apply.
    pub match_contains: Option<String>,
    pub response: String,
}

#[derive(Debug, Default)]
pub struct MockGateway {
    /// (query key, response) pairs; the most specific (longest) key contained
    /// in the prompt wins.
    table: Vec<(String, String)>,
    script: Option<VecDeque<ScriptStep>>,
    script_len: usize,
    steps_taken: usize,
    calls: u64,
}

impl MockGateway {
    pub fn new() -> Self {
        MockGateway::default()
    }

    /// Table-driven mock: responses keyed by the verbatim query substring
    /// inside the prompt. Unmatched prompts get a refusal.
    pub fn with_table(pairs: Vec<(String, String)>) -> Self {
        let mut table = pairs;
        table.sort_by(|(a, _), (b, _)| b.len().cmp(&a.len()).then(a.cmp(b)));
        MockGateway { table, ..MockGateway::default() }
    }

    /// Script-driven mock: each call consumes the next step in order; calls
    /// past the end return [`GatewayError::ScriptExhausted`].
    pub fn with_script(steps: Vec<ScriptStep>) -> Self {
        let len = steps.len();
        MockGateway {
            script: Some(steps.into()),
            script_len: len,
            ..MockGateway::default()
        }
    }

    /// Build a table from every plan in a corpus directory, keyed by each
    /// plan's `query` attribute.
    pub fn from_corpus_dir(dir: &Path) -> std::io::Result<Self> {
        let mut pairs = Vec::new();
        let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|x| x == "xml").unwrap_or(false))
            .collect();
        names.sort();
        for path in names {
            let text = std::fs::read_to_string(&path)?;
            if let Ok(raw) = crate::plan::parse_raw(&text) {
                if !raw.source_query.is_empty() {
                    pairs.push((raw.source_query, text));
                }
            }
        }
        Ok(MockGateway::with_table(pairs))
    }

    /// Load a script file: a TOML list of steps, each either a canned
    /// response, a response file, or a fault tag.
    ///
    /// ```toml
    /// [[step]]
    /// match = "Find pistachio"
    /// respond_file = "plans/find_pistachio.xml"
    ///
    /// [[step]]
    /// fault = "malformed_xml"
    /// ```
    ///
    /// Relative `respond_file` paths resolve against the script's directory.
    pub fn from_script_file(path: &Path) -> Result<Self, String> {
        #[derive(Deserialize)]
        struct RawScript {
            #[serde(default)]
            step: Vec<RawStep>,
        }
        #[derive(Deserialize)]
        struct RawStep {
            #[serde(rename = "match")]
            match_contains: Option<String>,
            respond: Option<String>,
            respond_file: Option<String>,
            fault: Option<String>,
        }

        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read script {}: {}", path.display(), e))?;
        let raw: RawScript =
            toml::from_str(&text).map_err(|e| format!("bad script {}: {}", path.display(), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut steps = Vec::new();
        for (i, s) in raw.step.into_iter().enumerate() {
            let sources = [s.respond.is_some(), s.respond_file.is_some(), s.fault.is_some()];
            if sources.iter().filter(|x| **x).count() != 1 {
                return Err(format!(
                    "script step {}: exactly one of respond, respond_file, fault required",
                    i + 1
                ));
            }
            let response = if let Some(text) = s.respond {
                text
            } else if let Some(file) = s.respond_file {
                let p = base.join(file);
                std::fs::read_to_string(&p)
                    .map_err(|e| format!("script step {}: cannot read {}: {}", i + 1, p.display(), e))?
            } else {
                let tag = s.fault.unwrap();
                FaultTag::parse(&tag)
                    .ok_or_else(|| format!("script step {}: unknown fault tag {:?}", i + 1, tag))?
                    .response()
            };
            steps.push(ScriptStep { match_contains: s.match_contains, response });
        }
        Ok(MockGateway::with_script(steps))
    }

    /// Completion calls served by this instance.
    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl LlmGateway for MockGateway {
    fn complete(&mut self, prompt: &str) -> Result<String, GatewayError> {
        self.calls += 1;
        count_call();
        if let Some(script) = &mut self.script {
            let step = script
                .pop_front()
                .ok_or(GatewayError::ScriptExhausted(self.script_len))?;
            self.steps_taken += 1;
            if let Some(expected) = &step.match_contains {
                if !prompt.contains(expected.as_str()) {
                    return Err(GatewayError::ScriptMismatch {
                        step: self.steps_taken,
                        expected: expected.clone(),
                    });
                }
            }
            return Ok(step.response);
        }
        for (key, response) in &self.table {
            if prompt.contains(key.as_str()) {
                return Ok(response.clone());
            }
        }
        Ok(refusal_response(
            "I do not understand the request; please name the robot or the actions you need.",
        ))
    }
}

/// Blocking HTTP chat-completion client.
///
/// The request body follows the common chat-completions shape:
/// `{model, temperature, max_tokens, messages: [{role, content}]}`.
pub struct LiveGateway {
    endpoint: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveGateway {
    /// Fails fast, before any network I/O, when the endpoint or the
    /// credential is missing.
    pub fn new(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::Auth("live mode requires an endpoint".into()))?;
        let api_key = std::env::var(API_KEY_ENV)
            .map_err(|_| GatewayError::Auth(format!("{} is not set", API_KEY_ENV)))?;
        if api_key.is_empty() {
            return Err(GatewayError::Auth(format!("{} is empty", API_KEY_ENV)));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| GatewayError::Unavailable(e.to_string()))?;
        Ok(LiveGateway {
            endpoint,
            model: config.model.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            api_key,
            client,
        })
    }
}

impl LlmGateway for LiveGateway {
    fn complete(&mut self, prompt: &str) -> Result<String, GatewayError> {
        count_call();
        let body = serde_json::json!({
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let send = || -> Result<String, String> {
            let resp = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| e.to_string())?;
            let status = resp.status();
            let text = resp.text().map_err(|e| e.to_string())?;
            if !status.is_success() {
                return Err(format!("http {}: {}", status, text));
            }
            let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            v.pointer("/choices/0/message/content")
                .and_then(|c| c.as_str())
                .map(str::to_string)
                .ok_or_else(|| "response has no choices[0].message.content".to_string())
        };
        // One internal retry on transport failure.
        send().or_else(|first| {
            send().map_err(|second| {
                GatewayError::Unavailable(format!("{} (retry: {})", first, second))
            })
        })
    }
}
