//! The five-dimension character structure, its summary form and validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::lmclient::{Context, LmClient, LmError, PromptKind, PromptRequest};

/// Raw Big-Five sums from a BFI-44 sheet. Ranges follow the item counts
/// (E 8, A 9, C 9, N 8, O 10), each item scored 1..5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BigFiveVector {
    pub openness: u32,
    pub conscientiousness: u32,
    pub extraversion: u32,
    pub agreeableness: u32,
    pub neuroticism: u32,
}

impl BigFiveVector {
    /// (field name, value, item count) in report order EXT, AGR, CON, NEU, OPEN.
    pub fn dimensions(&self) -> [(&'static str, u32, u32); 5] {
        [
            ("extraversion", self.extraversion, 8),
            ("agreeableness", self.agreeableness, 9),
            ("conscientiousness", self.conscientiousness, 9),
            ("neuroticism", self.neuroticism, 8),
            ("openness", self.openness, 10),
        ]
    }

    /// Scores as `f64` in report order.
    pub fn as_array(&self) -> [f64; 5] {
        self.dimensions().map(|(_, v, _)| f64::from(v))
    }

    pub fn violations(&self) -> Vec<String> {
        self.dimensions()
            .iter()
            .filter(|(_, v, n)| *v < *n || *v > 5 * n)
            .map(|(name, v, n)| format!("traits.big_five.{name}: {v} outside {n}..={}", 5 * n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasicInfo {
    pub name: String,
    pub gender: String,
    pub age: String,
    pub profession: String,
}

/// A goal together with the ultimate goal it serves.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoalLink {
    pub goal: String,
    pub derived_from: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreferenceSet {
    pub ultimate_goal: String,
    pub long_term_goal: GoalLink,
    pub short_term_goal: GoalLink,
    pub daily_routine: String,
    pub hobbies: Vec<String>,
    pub venue_preference: Vec<String>,
}

impl PreferenceSet {
    pub fn text(&self) -> String {
        format!(
            "Ultimate goal: {}. Long-term goal: {} (serving: {}). Short-term goal: {} (serving: {}). \
             Daily routine: {} Hobbies: {}. Preferred venues: {}.",
            self.ultimate_goal.trim_end_matches('.'),
            self.long_term_goal.goal.trim_end_matches('.'),
            self.long_term_goal.derived_from.trim_end_matches('.'),
            self.short_term_goal.goal.trim_end_matches('.'),
            self.short_term_goal.derived_from.trim_end_matches('.'),
            self.daily_routine,
            self.hobbies.join(", "),
            self.venue_preference.join(", "),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Traits {
    pub prose: String,
    /// Filled only by questionnaire scoring, never by prompts.
    pub big_five: Option<BigFiveVector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CharacterStructure {
    pub basic_info: BasicInfo,
    pub current_state: String,
    pub traits: Traits,
    pub conflict: String,
    pub preference: PreferenceSet,
    pub revision: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    BasicInfo,
    CurrentState,
    Traits,
    Conflict,
    Preference,
}

impl Dimension {
    pub const ALL: [Dimension; 5] =
        [Dimension::BasicInfo, Dimension::CurrentState, Dimension::Traits, Dimension::Conflict, Dimension::Preference];

    pub fn key(self) -> &'static str {
        match self {
            Dimension::BasicInfo => "basic_info",
            Dimension::CurrentState => "current_state",
            Dimension::Traits => "traits",
            Dimension::Conflict => "conflict",
            Dimension::Preference => "preference",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Dimension::BasicInfo => "Basic information",
            Dimension::CurrentState => "Current state",
            Dimension::Traits => "Traits",
            Dimension::Conflict => "Conflict",
            Dimension::Preference => "Preference",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl CharacterStructure {
    pub fn name(&self) -> &str {
        &self.basic_info.name
    }

    /// Agent id derived from the name.
    pub fn id(&self) -> String {
        self.basic_info.name.to_lowercase()
    }

    pub fn dimension_text(&self, d: Dimension) -> String {
        match d {
            Dimension::BasicInfo => {
                let b = &self.basic_info;
                format!("{}, age {}, {} ({})", b.name, b.age, b.profession, b.gender)
            }
            Dimension::CurrentState => self.current_state.clone(),
            Dimension::Traits => self.traits.prose.clone(),
            Dimension::Conflict => self.conflict.clone(),
            Dimension::Preference => self.preference.text(),
        }
    }

    /// Every dimension in full, one labelled line each.
    pub fn full_text(&self) -> String {
        Dimension::ALL.iter().map(|&d| format!("{}: {}", d.label(), self.dimension_text(d))).collect::<Vec<_>>().join("\n")
    }

    /// Single-paragraph persona used when the structure is ablated away.
    pub fn persona(&self) -> String {
        let b = &self.basic_info;
        let first = self.traits.prose.split(". ").next().unwrap_or_default().trim_end_matches('.');
        format!("{} is a {}-year-old {}. {}.", b.name, b.age, b.profession, first)
    }

    fn dimensions_value(&self) -> Value {
        let mut m = serde_json::Map::new();
        for d in Dimension::ALL {
            m.insert(d.key().into(), json!(self.dimension_text(d)));
        }
        Value::Object(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterSummary {
    pub basic_info: String,
    pub current_state: String,
    pub traits: String,
    pub conflict: String,
    pub preference: String,
    pub source_revision: u32,
}

impl CharacterSummary {
    pub fn get(&self, d: Dimension) -> &str {
        match d {
            Dimension::BasicInfo => &self.basic_info,
            Dimension::CurrentState => &self.current_state,
            Dimension::Traits => &self.traits,
            Dimension::Conflict => &self.conflict,
            Dimension::Preference => &self.preference,
        }
    }

    fn slot(&mut self, d: Dimension) -> &mut String {
        match d {
            Dimension::BasicInfo => &mut self.basic_info,
            Dimension::CurrentState => &mut self.current_state,
            Dimension::Traits => &mut self.traits,
            Dimension::Conflict => &mut self.conflict,
            Dimension::Preference => &mut self.preference,
        }
    }

    pub fn text(&self) -> String {
        Dimension::ALL.iter().map(|&d| format!("{}: {}", d.label(), self.get(d))).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CharacterError {
    #[error("empty character brief")]
    EmptyBrief,
    #[error("initialization failed: {0}")]
    Init(LmError),
    #[error("backend output does not form a character: {0}")]
    Schema(String),
    #[error("summarization failed: {0}")]
    Summary(LmError),
}

fn text_of(v: &Value, key: &str) -> Result<String, CharacterError> {
    v.get(key).and_then(Value::as_str).map(str::to_owned).ok_or_else(|| CharacterError::Schema(format!("missing {key}")))
}

pub(crate) fn preference_from(v: &Value) -> Result<PreferenceSet, CharacterError> {
    serde_json::from_value(v.clone()).map_err(|e| CharacterError::Schema(format!("preference: {e}")))
}

/// Builds a revision-0 structure from a short brief.
pub fn init_character(brief: &str, client: &LmClient) -> Result<CharacterStructure, CharacterError> {
    if brief.trim().is_empty() {
        return Err(CharacterError::EmptyBrief);
    }
    let req = PromptRequest::new(PromptKind::CharInit, "", Context::new().with("brief", brief));
    let resp = client.complete(&req).map_err(|e| match e {
        LmError::Decode(m) => CharacterError::Schema(m),
        other => CharacterError::Init(other),
    })?;
    let p = &resp.payload;
    let basic_info: BasicInfo =
        serde_json::from_value(p["basic_info"].clone()).map_err(|e| CharacterError::Schema(format!("basic_info: {e}")))?;
    let cs = CharacterStructure {
        basic_info,
        current_state: text_of(p, "current_state")?,
        traits: Traits { prose: text_of(p, "traits")?, big_five: None },
        conflict: text_of(p, "conflict")?,
        preference: preference_from(&p["preference"])?,
        revision: 0,
    };
    let report = validate_structure(&cs, None);
    if report.is_empty() {
        Ok(cs)
    } else {
        Err(CharacterError::Schema(report.join("; ")))
    }
}

/// Condenses every dimension to `budget` words, except `emphasis`, which is
/// carried in full.
pub fn summarize_character(
    full: &CharacterStructure,
    emphasis: Option<Dimension>,
    budget: usize,
    client: &LmClient,
) -> Result<CharacterSummary, CharacterError> {
    let ctx = Context::new()
        .with("character", full.dimensions_value())
        .with("budget", budget as u64)
        .with("emphasis", emphasis.map(Dimension::key).unwrap_or(""));
    let req = PromptRequest::new(PromptKind::CharSummary, &full.id(), ctx);
    let resp = client.complete(&req).map_err(CharacterError::Summary)?;
    let cut = |d: Dimension| {
        let t = resp.str(d.key());
        t.split_whitespace().take(budget).collect::<Vec<_>>().join(" ")
    };
    let mut s = CharacterSummary {
        basic_info: cut(Dimension::BasicInfo),
        current_state: cut(Dimension::CurrentState),
        traits: cut(Dimension::Traits),
        conflict: cut(Dimension::Conflict),
        preference: cut(Dimension::Preference),
        source_revision: full.revision,
    };
    if let Some(d) = emphasis {
        *s.slot(d) = full.dimension_text(d);
    }
    Ok(s)
}

/// Every violated invariant, by name; empty iff valid. With `previous`,
/// also checks immutability and revision order against it.
pub fn validate_structure(cs: &CharacterStructure, previous: Option<&CharacterStructure>) -> Vec<String> {
    let mut out = Vec::new();
    let mut need = |field: &str, s: &str| {
        if s.trim().is_empty() {
            out.push(field.to_owned());
        }
    };
    let b = &cs.basic_info;
    need("basic_info.name", &b.name);
    need("basic_info.gender", &b.gender);
    need("basic_info.age", &b.age);
    need("basic_info.profession", &b.profession);
    need("current_state", &cs.current_state);
    need("traits", &cs.traits.prose);
    need("conflict", &cs.conflict);
    let p = &cs.preference;
    need("preference.ultimate_goal", &p.ultimate_goal);
    need("preference.long_term_goal", &p.long_term_goal.goal);
    need("preference.short_term_goal", &p.short_term_goal.goal);
    need("preference.daily_routine", &p.daily_routine);
    if p.hobbies.iter().all(|h| h.trim().is_empty()) {
        out.push("preference.hobbies".into());
    }
    if p.venue_preference.iter().all(|h| h.trim().is_empty()) {
        out.push("preference.venue_preference".into());
    }
    for (name, link) in [("long_term_goal", &p.long_term_goal), ("short_term_goal", &p.short_term_goal)] {
        if link.derived_from != p.ultimate_goal {
            out.push(format!("preference.{name} derivation"));
        }
    }
    if let Some(v) = &cs.traits.big_five {
        out.extend(v.violations());
    }
    if let Some(prev) = previous {
        if prev.basic_info != cs.basic_info {
            out.push("basic_info immutability".into());
        }
        if cs.revision <= prev.revision {
            out.push("revision order".into());
        }
    }
    out
}
