//! Natural-language to command translation through a chat-completion model.
//!
//! The model only ever proposes commands: its answer must contain a fenced
//! block that parses line by line, and nothing is applied here. Transports
//! are pluggable so tests run against canned responses.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize, Serializer};

use crate::dsl::{parse_command, Command, Session, GRAMMAR};
use crate::netlist::print_netlist;

fn default_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    pub endpoint_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is read at call time and never stored.
    pub api_key_ref: String,
    /// Total attempts, including the first.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub temperature: f64,
}

impl BridgeConfig {
    pub fn from_json(text: &str) -> Result<BridgeConfig, BridgeError> {
        let config: BridgeConfig = serde_json::from_str(text).map_err(|e| BridgeError::Config(e.to_string()))?;
        if config.max_retries < 1 {
            return Err(BridgeError::Config("max_retries must be at least 1".into()));
        }
        Ok(config)
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_ref).ok().filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: text.into(),
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
#[error("transport: {0}")]
pub struct TransportError(pub String);

/// Sends a conversation and returns the model's reply text.
pub trait Transport: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], config: &BridgeConfig) -> Result<String, TransportError>;
}

/// Replays canned replies in order, recording every conversation it saw.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<String>>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl ScriptedTransport {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedTransport {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Fixture format: a JSON array of reply strings.
    pub fn from_json(text: &str) -> Result<Self, BridgeError> {
        let replies: Vec<String> = serde_json::from_str(text).map_err(|e| BridgeError::Config(e.to_string()))?;
        Ok(Self::new(replies))
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.seen.lock().expect("not poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("not poisoned").len()
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, messages: &[ChatMessage], _config: &BridgeConfig) -> Result<String, TransportError> {
        self.seen.lock().expect("not poisoned").push(messages.to_vec());
        self.replies
            .lock()
            .expect("not poisoned")
            .pop_front()
            .ok_or_else(|| TransportError("scripted replies exhausted".into()))
    }
}

fn commands_as_text<S: Serializer>(commands: &[Command], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(commands.iter().map(ToString::to_string))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub turns: Vec<ChatMessage>,
    #[serde(serialize_with = "commands_as_text")]
    pub extracted_commands: Vec<Command>,
    pub attempts: u32,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq, Serialize)]
pub enum BridgeError {
    #[error("no valid commands after {attempts} attempt(s); last error: {last_error}")]
    TranslationFailed {
        attempts: u32,
        last_error: String,
        transcript: Transcript,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("bad bridge configuration: {0}")]
    Config(String),
}

/// Contents of the first fenced block, if it is closed.
pub fn extract_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // Skip an info string such as ```dsl.
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Parses a reply; the error string is the hint quoted back to the model.
pub fn parse_reply(text: &str) -> Result<Vec<Command>, String> {
    let block = extract_fenced_block(text).ok_or_else(|| "no fenced block of commands found".to_string())?;
    let mut out = Vec::new();
    for (i, line) in block.lines().enumerate() {
        let code = line.split_once('#').map_or(line, |(c, _)| c);
        if code.trim().is_empty() {
            continue;
        }
        let cmd = parse_command(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(cmd);
    }
    if out.is_empty() {
        return Err("the fenced block contains no commands".into());
    }
    Ok(out)
}

/// Prompt sections, in order: grammar, technology, netlist, layout,
/// instruction, output contract.
pub fn build_prompt(session: &Session, instruction: &str) -> String {
    let tech = session.tech();
    let db = session.current();
    let mut p = String::new();
    p.push_str("You edit a grid-based circuit layout by writing commands in a small language.\n\n");
    p.push_str("## Command grammar\n```\n");
    p.push_str(GRAMMAR);
    p.push_str("\n```\n\n## Technology\n");
    let _ = writeln!(p, "name: {}", tech.name);
    for l in &tech.layers {
        let _ = writeln!(p, "layer {} direction {} pitch {} offset {}", l.name, l.direction, l.pitch, l.offset);
    }
    for t in tech.templates.values() {
        let pins: Vec<String> = t
            .pins
            .iter()
            .map(|(name, pts)| {
                let pts: Vec<String> = pts.iter().map(|a| format!("{}({},{})", a.0, a.1, a.2)).collect();
                format!("{name}@{}", pts.join("/"))
            })
            .collect();
        let _ = writeln!(
            p,
            "template {} {:?} {}x{} pins {}",
            t.name,
            t.kind,
            t.width,
            t.height,
            pins.join(" ")
        );
    }
    p.push_str("\n## Netlist\n```\n");
    p.push_str(&print_netlist(session.netlist()));
    p.push_str("```\n\n## Current layout\n");
    if db.instances.is_empty() {
        p.push_str("instances: none\n");
    }
    for i in db.instances.values() {
        let _ = writeln!(
            p,
            "instance {} template {} at ({}, {}) orient {}",
            i.name, i.template, i.origin.0, i.origin.1, i.orient
        );
    }
    let routed: Vec<String> = db.routed_nets().into_iter().collect();
    let _ = writeln!(
        p,
        "routed nets: {}",
        if routed.is_empty() { "none".to_string() } else { routed.join(", ") }
    );
    if let Some((kind, payload)) = session.last_report() {
        let _ = writeln!(p, "last report ({kind:?}): {payload}");
    }
    p.push_str("\n## Instruction\n");
    p.push_str(instruction.trim());
    p.push_str("\n\n## Output\nRespond only with a fenced block of DSL commands, one command per line.\n");
    p
}

/// Asks the model for commands, retrying with the parser's hint on failure.
/// The session is not modified.
pub fn translate(
    session: &Session,
    instruction: &str,
    transport: &dyn Transport,
    config: &BridgeConfig,
) -> Result<(Vec<Command>, Transcript), BridgeError> {
    let max = config.max_retries.max(1);
    let mut turns = vec![ChatMessage::user(build_prompt(session, instruction))];
    let mut last_error = String::new();
    for attempt in 1..=max {
        let reply = transport.complete(&turns, config)?;
        turns.push(ChatMessage::assistant(reply.clone()));
        match parse_reply(&reply) {
            Ok(commands) => {
                let transcript = Transcript {
                    turns,
                    extracted_commands: commands.clone(),
                    attempts: attempt,
                };
                return Ok((commands, transcript));
            }
            Err(hint) => {
                last_error = hint;
                if attempt < max {
                    turns.push(ChatMessage::user(format!(
                        "Your answer was rejected: {last_error}. Respond only with a fenced block of DSL commands."
                    )));
                }
            }
        }
    }
    Err(BridgeError::TranslationFailed {
        attempts: max,
        last_error,
        transcript: Transcript {
            turns,
            extracted_commands: Vec::new(),
            attempts: max,
        },
    })
}

/// Request body for an OpenAI-style chat-completion endpoint.
pub fn chat_request_body(messages: &[ChatMessage], config: &BridgeConfig) -> serde_json::Value {
    serde_json::json!({
        "model": config.model_id,
        "messages": messages,
        "temperature": config.temperature,
    })
}

/// Extracts the reply text from a chat-completion response body.
pub fn parse_chat_response(body: &str) -> Result<String, TransportError> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| TransportError(format!("response is not JSON: {e}")))?;
    if let Some(err) = v.get("error") {
        return Err(TransportError(format!("endpoint error: {err}")));
    }
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| TransportError("response has no choices[0].message.content".into()))
}
