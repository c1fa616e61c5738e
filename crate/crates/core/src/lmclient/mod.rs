//! Completion requests, response schemas and the backends that answer them.
//!
//! Every module talks to a language model through [`LmClient::complete`].
//! The client checks the kind's required context fields, calls the backend,
//! validates the structured payload against the kind's schema (one repair
//! retry), and journals the exchange so the kernel can append it to the
//! event log.

mod http;
mod schema;
mod scripted;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use http::{HttpBackend, HttpConfig};
pub use schema::{required_fields, validate_payload};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    CharInit,
    CharSummary,
    PlanDay,
    PlanRevise,
    InviteSend,
    InviteDecide,
    ActionDescribe,
    EmotionUpdate,
    DialogTopic,
    DialogTurn,
    DialogSummary,
    PartnerSelect,
    MemoryFilter,
    MemoryBlur,
    Insight,
    GrowthState,
    GrowthFeature,
    GrowthConflict,
    GrowthPreference,
    BfiFill,
    ChatReply,
}

impl PromptKind {
    pub const ALL: [PromptKind; 21] = [
        PromptKind::CharInit,
        PromptKind::CharSummary,
        PromptKind::PlanDay,
        PromptKind::PlanRevise,
        PromptKind::InviteSend,
        PromptKind::InviteDecide,
        PromptKind::ActionDescribe,
        PromptKind::EmotionUpdate,
        PromptKind::DialogTopic,
        PromptKind::DialogTurn,
        PromptKind::DialogSummary,
        PromptKind::PartnerSelect,
        PromptKind::MemoryFilter,
        PromptKind::MemoryBlur,
        PromptKind::Insight,
        PromptKind::GrowthState,
        PromptKind::GrowthFeature,
        PromptKind::GrowthConflict,
        PromptKind::GrowthPreference,
        PromptKind::BfiFill,
        PromptKind::ChatReply,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::CharInit => "CHAR_INIT",
            PromptKind::CharSummary => "CHAR_SUMMARY",
            PromptKind::PlanDay => "PLAN_DAY",
            PromptKind::PlanRevise => "PLAN_REVISE",
            PromptKind::InviteSend => "INVITE_SEND",
            PromptKind::InviteDecide => "INVITE_DECIDE",
            PromptKind::ActionDescribe => "ACTION_DESCRIBE",
            PromptKind::EmotionUpdate => "EMOTION_UPDATE",
            PromptKind::DialogTopic => "DIALOG_TOPIC",
            PromptKind::DialogTurn => "DIALOG_TURN",
            PromptKind::DialogSummary => "DIALOG_SUMMARY",
            PromptKind::PartnerSelect => "PARTNER_SELECT",
            PromptKind::MemoryFilter => "MEMORY_FILTER",
            PromptKind::MemoryBlur => "MEMORY_BLUR",
            PromptKind::Insight => "INSIGHT",
            PromptKind::GrowthState => "GROWTH_STATE",
            PromptKind::GrowthFeature => "GROWTH_FEATURE",
            PromptKind::GrowthConflict => "GROWTH_CONFLICT",
            PromptKind::GrowthPreference => "GROWTH_PREFERENCE",
            PromptKind::BfiFill => "BFI_FILL",
            PromptKind::ChatReply => "CHAT_REPLY",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = LmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| LmError::Request(format!("unknown prompt kind {s}")))
    }
}

/// Collapses whitespace runs to single spaces and trims, recursively.
pub fn normalize_value(v: Value) -> Value {
    match v {
        Value::String(s) => Value::String(s.split_whitespace().collect::<Vec<_>>().join(" ")),
        Value::Array(a) => Value::Array(a.into_iter().map(normalize_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, normalize_value(v))).collect()),
        other => other,
    }
}

/// Request context: sorted keys, normalized strings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(Map<String, Value>);

impl Context {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: &str, value: impl Into<Value>) {
        self.0.insert(key.to_owned(), normalize_value(value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn str(&self, key: &str) -> &str {
        self.0.get(key).and_then(Value::as_str).unwrap_or("")
    }

    pub fn int(&self, key: &str) -> i64 {
        self.0.get(key).and_then(Value::as_i64).unwrap_or(0)
    }

    pub fn list(&self, key: &str) -> &[Value] {
        self.0.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn strings(&self, key: &str) -> Vec<&str> {
        self.list(key).iter().filter_map(Value::as_str).collect()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    /// Canonical serialization; identical logical requests give identical bytes.
    pub fn canonical(&self) -> String {
        serde_json::to_string(&self.0).expect("context serializes")
    }

    pub fn as_value(&self) -> Value {
        Value::Object(self.0.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub kind: PromptKind,
    pub context: Context,
    pub agent_id: String,
    pub day: u32,
    pub tick: u32,
}

impl PromptRequest {
    pub fn new(kind: PromptKind, agent_id: &str, context: Context) -> Self {
        Self { kind, context, agent_id: agent_id.to_owned(), day: 0, tick: 0 }
    }

    pub fn at(mut self, day: u32, tick: u32) -> Self {
        self.day = day;
        self.tick = tick;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub kind: PromptKind,
    pub payload: Value,
    pub backend_id: String,
    pub latency_ms: u64,
}

impl CompletionResponse {
    pub fn str(&self, key: &str) -> &str {
        self.payload.get(key).and_then(Value::as_str).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmError {
    #[error("request error: {0}")]
    Request(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("decode error: {0}")]
    Decode(String),
}

/// A completion source. Implementations return the raw JSON text of the
/// structured payload; validation happens in [`LmClient`].
pub trait LanguageModel: Send + Sync {
    fn backend_id(&self) -> &str;
    fn complete_raw(&self, req: &PromptRequest) -> Result<String, LmError>;
    /// Whether latencies should be measured (false keeps scripted logs byte-stable).
    fn timed(&self) -> bool {
        true
    }
}

/// One journaled request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub kind: PromptKind,
    pub agent: String,
    pub day: u32,
    pub tick: u32,
    pub context: Value,
    pub response: Option<Value>,
    pub error: Option<String>,
    pub attempts: u32,
    pub backend_id: String,
    pub latency_ms: u64,
}

#[derive(Clone)]
pub struct LmClient {
    backend: Arc<dyn LanguageModel>,
    journal: Arc<Mutex<Vec<Exchange>>>,
}

impl fmt::Debug for LmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LmClient").field("backend", &self.backend.backend_id()).finish()
    }
}

impl LmClient {
    pub fn new(backend: Arc<dyn LanguageModel>) -> Self {
        Self { backend, journal: Arc::new(Mutex::new(Vec::new())) }
    }

    pub fn scripted(seed: u64) -> Self {
        Self::new(Arc::new(ScriptedBackend::new(seed)))
    }

    pub fn backend_id(&self) -> &str {
        self.backend.backend_id()
    }

    pub fn complete(&self, req: &PromptRequest) -> Result<CompletionResponse, LmError> {
        if let Some(missing) = required_fields(req.kind).iter().find(|f| !req.context.contains(f)) {
            return Err(LmError::Request(format!("{} needs context field {missing:?}", req.kind)));
        }
        let started = Instant::now();
        let mut attempt_req = req.clone();
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.backend.complete_raw(&attempt_req).and_then(|raw| decode(req.kind, &raw)) {
                Ok(payload) => break Ok(payload),
                Err(LmError::Decode(msg)) if attempts == 1 => {
                    attempt_req.context.insert("repair", format!("previous answer was invalid: {msg}"));
                }
                Err(e) => break Err(e),
            }
        };
        let latency_ms = if self.backend.timed() { started.elapsed().as_millis() as u64 } else { 0 };
        let (response, error) = match &outcome {
            Ok(p) => (Some(p.clone()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.journal.lock().expect("journal lock").push(Exchange {
            kind: req.kind,
            agent: req.agent_id.clone(),
            day: req.day,
            tick: req.tick,
            context: req.context.as_value(),
            response,
            error,
            attempts,
            backend_id: self.backend.backend_id().to_owned(),
            latency_ms,
        });
        outcome.map(|payload| CompletionResponse { kind: req.kind, payload, backend_id: self.backend.backend_id().to_owned(), latency_ms })
    }

    /// Takes every exchange recorded since the last drain.
    pub fn drain(&self) -> Vec<Exchange> {
        std::mem::take(&mut *self.journal.lock().expect("journal lock"))
    }
}

fn decode(kind: PromptKind, raw: &str) -> Result<Value, LmError> {
    let v: Value = serde_json::from_str(raw.trim()).map_err(|e| LmError::Decode(format!("not JSON: {e}")))?;
    validate_payload(kind, &v).map_err(LmError::Decode)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn kind_names_roundtrip_through_serde() {
        for k in PromptKind::ALL {
            let s = serde_json::to_string(&k).unwrap();
            assert_eq!(s, format!("\"{}\"", k.as_str()));
            assert_eq!(k.as_str().parse::<PromptKind>().unwrap(), k);
        }
    }

    #[test]
    fn canonical_context_ignores_insertion_order_and_spacing() {
        let a = Context::new().with("b", "x  y").with("a", 1);
        let b = Context::new().with("a", 1).with("b", " x y ");
        assert_eq!(a.canonical(), b.canonical());
        assert_eq!(a.canonical(), r#"{"a":1,"b":"x y"}"#);
    }

    #[test]
    fn missing_field_is_request_error() {
        let c = LmClient::scripted(1);
        let req = PromptRequest::new(PromptKind::PlanDay, "a", Context::new().with("name", "A"));
        assert!(matches!(c.complete(&req), Err(LmError::Request(_))));
    }

    struct Flaky {
        calls: AtomicU32,
        bad: &'static str,
        good: &'static str,
        bad_times: u32,
    }

    impl LanguageModel for Flaky {
        fn backend_id(&self) -> &str {
            "flaky"
        }
        fn complete_raw(&self, _req: &PromptRequest) -> Result<String, LmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(if n < self.bad_times { self.bad } else { self.good }.to_owned())
        }
        fn timed(&self) -> bool {
            false
        }
    }

    fn topic_req() -> PromptRequest {
        PromptRequest::new(
            PromptKind::DialogTopic,
            "a",
            Context::new().with("name", "A").with("partner", "B").with("history", Vec::<String>::new()),
        )
    }

    #[test]
    fn one_repair_retry_then_success() {
        let f = Arc::new(Flaky { calls: AtomicU32::new(0), bad: "{}", good: r#"{"topic":"t"}"#, bad_times: 1 });
        let c = LmClient::new(f.clone());
        let r = c.complete(&topic_req()).unwrap();
        assert_eq!(r.str("topic"), "t");
        let j = c.drain();
        assert_eq!(j.len(), 1);
        assert_eq!(j[0].attempts, 2);
        assert!(c.drain().is_empty());
    }

    #[test]
    fn second_invalid_answer_fails() {
        let f = Arc::new(Flaky { calls: AtomicU32::new(0), bad: "nope", good: "{}", bad_times: 5 });
        let c = LmClient::new(f);
        assert!(matches!(c.complete(&topic_req()), Err(LmError::Decode(_))));
    }
}
