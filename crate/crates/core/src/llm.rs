//! Natural-language structure edits through a chat-completion endpoint.
//! Candidates are validated and scored, never inserted directly.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ga::ScoreContext;
use crate::molgraph::{Molecule, SmilesError};
use crate::scoring::{ScoreReport, ScoringSpec};

pub const MAX_INSTRUCTION_CHARS: usize = 2000;
pub const MAX_CANDIDATES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmError {
    #[error("text-generation endpoint unavailable: {message}")]
    EndpointUnavailable { message: String },
    #[error("text-generation request timed out")]
    Timeout,
    #[error("no valid candidates in the response")]
    NoValidCandidates { rejected: Vec<RejectedCandidate> },
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatResponse, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: u32,
    pub system: String,
    /// `{molecules}`, `{instruction}`, `{n}` and `{operation}` are substituted.
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            version: 1,
            system: "You are a medicinal and materials chemist. You propose small molecules as SMILES strings."
                .to_string(),
            user: "Input molecules (SMILES):\n{molecules}\n\nTask: {operation} the input according to this instruction:\n{instruction}\n\nReturn up to {n} candidate molecules, one SMILES per line, with no numbering, names or other text."
                .to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LlmMode {
    Mutate { key: String },
    Crossover { keys: [String; 2] },
}

impl LlmMode {
    pub fn keys(&self) -> Vec<&str> {
        match self {
            LlmMode::Mutate { key } => vec![key],
            LlmMode::Crossover { keys } => keys.iter().map(String::as_str).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmEditRequest {
    pub mode: LlmMode,
    pub instruction: String,
    pub n_candidates: usize,
}

impl LlmEditRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        let invalid = |message: &str| {
            Err(LlmError::InvalidRequest {
                message: message.to_string(),
            })
        };
        if self.instruction.trim().is_empty() {
            return invalid("instruction must not be empty");
        }
        if self.instruction.chars().count() > MAX_INSTRUCTION_CHARS {
            return invalid("instruction exceeds 2000 characters");
        }
        if !(1..=MAX_CANDIDATES).contains(&self.n_candidates) {
            return invalid("n_candidates must lie in 1..=5");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedCandidate {
    pub molecule: Molecule,
    pub report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEditResult {
    pub accepted: Vec<AcceptedCandidate>,
    pub rejected: Vec<RejectedCandidate>,
    pub raw_response_id: String,
    pub prompt_version: u32,
}

pub fn build_prompt(template: &PromptTemplate, inputs: &[&Molecule], request: &LlmEditRequest) -> Vec<ChatMessage> {
    let molecules: Vec<&str> = inputs.iter().map(|m| m.canonical_key()).collect();
    let operation = match request.mode {
        LlmMode::Mutate { .. } => "modify",
        LlmMode::Crossover { .. } => "combine",
    };
    let user = template
        .user
        .replace("{molecules}", &molecules.join("\n"))
        .replace("{instruction}", request.instruction.trim())
        .replace("{n}", &request.n_candidates.to_string())
        .replace("{operation}", operation);
    vec![ChatMessage::new("system", template.system.clone()), ChatMessage::new("user", user)]
}

/// Candidate lines of a response, with list markers and code fences removed.
pub fn extract_candidates(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .map(|l| {
            let l = l.trim_start_matches(['-', '*', '•']).trim_start();
            let digits = l.chars().take_while(char::is_ascii_digit).count();
            let l = if digits > 0 && l[digits..].starts_with(['.', ')']) {
                l[digits + 1..].trim_start()
            } else {
                l
            };
            l.trim_matches('`').trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Runs one edit request. `is_known` reports keys already in the population
/// or tombstoned; `validate` is the structure validation shared with manual
/// edits.
#[allow(clippy::too_many_arguments)]
pub fn llm_edit(
    request: &LlmEditRequest,
    inputs: &[&Molecule],
    template: &PromptTemplate,
    client: &dyn ChatClient,
    validate: &dyn Fn(&str) -> Result<Molecule, SmilesError>,
    is_known: &dyn Fn(&str) -> bool,
    spec: &ScoringSpec,
    ctx: ScoreContext<'_>,
) -> Result<LlmEditResult, LlmError> {
    request.validate()?;
    let response = client.complete(&build_prompt(template, inputs, request))?;
    let mut accepted: Vec<Molecule> = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = BTreeSet::new();
    for line in extract_candidates(&response.text) {
        let reason = match validate(&line) {
            Err(e) => Some(e.to_string()),
            Ok(mol) => {
                let key = mol.canonical_key().to_string();
                if is_known(&key) {
                    Some("not novel: already in the population or deleted".to_string())
                } else if !seen.insert(key) {
                    Some("duplicate of an earlier candidate".to_string())
                } else if accepted.len() >= request.n_candidates {
                    Some("more candidates than requested".to_string())
                } else {
                    accepted.push(mol);
                    None
                }
            }
        };
        if let Some(reason) = reason {
            rejected.push(RejectedCandidate { text: line, reason });
        }
    }
    if accepted.is_empty() {
        return Err(LlmError::NoValidCandidates { rejected });
    }
    let reports = ctx.score(&accepted, spec);
    Ok(LlmEditResult {
        accepted: accepted
            .into_iter()
            .zip(reports)
            .map(|(molecule, report)| AcceptedCandidate { molecule, report })
            .collect(),
        rejected,
        raw_response_id: response.id,
        prompt_version: template.version,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    #[serde(default)]
    id: Option<String>,
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

/// Chat-completion client: POST `{model, messages}` with a bearer token,
/// reading the first choice's message content.
pub struct HttpChatClient {
    settings: LlmSettings,
    agent: ureq::Agent,
    counter: AtomicUsize,
}

impl HttpChatClient {
    pub const TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(settings: LlmSettings) -> Self {
        Self::with_timeout(settings, Self::TIMEOUT)
    }

    pub fn with_timeout(settings: LlmSettings, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpChatClient {
            settings,
            agent,
            counter: AtomicUsize::new(0),
        }
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatResponse, LlmError> {
        let mut req = self.agent.post(&self.settings.url);
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let body = CompletionRequest {
            model: &self.settings.model,
            messages,
        };
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout,
            other => LlmError::EndpointUnavailable {
                message: other.to_string(),
            },
        })?;
        let parsed: CompletionResponse = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout,
            other => LlmError::EndpointUnavailable {
                message: format!("malformed response: {other}"),
            },
        })?;
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::EndpointUnavailable {
                message: "response has no choices".into(),
            })?;
        Ok(ChatResponse {
            id: parsed.id.unwrap_or_else(|| format!("response-{n}")),
            text,
        })
    }
}

/// Replays scripted responses in order, repeating the last one. Prompts
/// are recorded for inspection.
pub struct ScriptedChatClient {
    responses: Vec<String>,
    next: AtomicUsize,
    prompts: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedChatClient {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedChatClient {
            responses,
            next: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    /// Reads a JSON array of response strings.
    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let responses: Vec<String> =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(responses))
    }

    pub fn prompts(&self) -> Vec<Vec<ChatMessage>> {
        self.prompts.lock().expect("prompt log").clone()
    }
}

impl ChatClient for ScriptedChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<ChatResponse, LlmError> {
        self.prompts.lock().expect("prompt log").push(messages.to_vec());
        let n = self.next.fetch_add(1, Ordering::SeqCst);
        let text = self
            .responses
            .get(n.min(self.responses.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| LlmError::EndpointUnavailable {
                message: "no scripted responses".into(),
            })?;
        Ok(ChatResponse {
            id: format!("scripted-{n}"),
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_extraction() {
        let text = "```\n1. CCO\n2) c1ccccc1\n- CCN\n\n`CC`\n```";
        assert_eq!(extract_candidates(text), vec!["CCO", "c1ccccc1", "CCN", "CC"]);
    }

    #[test]
    fn request_limits() {
        let mut r = LlmEditRequest {
            mode: LlmMode::Mutate { key: "CCO".into() },
            instruction: "add a ring".into(),
            n_candidates: 3,
        };
        assert!(r.validate().is_ok());
        r.n_candidates = 6;
        assert!(r.validate().is_err());
        r.n_candidates = 1;
        r.instruction = "x".repeat(2001);
        assert!(r.validate().is_err());
    }

    #[test]
    fn prompt_contains_inputs_and_contract() {
        let mol = crate::molgraph::parse_single("OCC").unwrap();
        let r = LlmEditRequest {
            mode: LlmMode::Mutate { key: "CCO".into() },
            instruction: "make it an acid".into(),
            n_candidates: 2,
        };
        let msgs = build_prompt(&PromptTemplate::default(), &[&mol], &r);
        assert_eq!(msgs.len(), 2);
        assert!(msgs[1].content.contains("CCO"));
        assert!(msgs[1].content.contains("make it an acid"));
        assert!(msgs[1].content.contains("one SMILES per line"));
    }
}
