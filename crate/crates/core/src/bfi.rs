//! The 44-item Big Five Inventory: item texts, scoring key and administration.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::character::BigFiveVector;
use crate::lmclient::{Context, LmClient, LmError, PromptKind, PromptRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BfiDimension {
    Extraversion,
    Agreeableness,
    Conscientiousness,
    Neuroticism,
    Openness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BfiItem {
    pub text: &'static str,
    pub dimension: BfiDimension,
    pub reversed: bool,
}

const fn item(text: &'static str, dimension: BfiDimension, reversed: bool) -> BfiItem {
    BfiItem { text, dimension, reversed }
}

use BfiDimension::{Agreeableness as A, Conscientiousness as C, Extraversion as E, Neuroticism as N, Openness as O};

/// Items in questionnaire order; each completes "I see myself as someone who...".
pub const ITEMS: [BfiItem; 44] = [
    item("Is talkative", E, false),
    item("Tends to find fault with others", A, true),
    item("Does a thorough job", C, false),
    item("Is depressed, blue", N, false),
    item("Is original, comes up with new ideas", O, false),
    item("Is reserved", E, true),
    item("Is helpful and unselfish with others", A, false),
    item("Can be somewhat careless", C, true),
    item("Is relaxed, handles stress well", N, true),
    item("Is curious about many different things", O, false),
    item("Is full of energy", E, false),
    item("Starts quarrels with others", A, true),
    item("Is a reliable worker", C, false),
    item("Can be tense", N, false),
    item("Is ingenious, a deep thinker", O, false),
    item("Generates a lot of enthusiasm", E, false),
    item("Has a forgiving nature", A, false),
    item("Tends to be disorganized", C, true),
    item("Worries a lot", N, false),
    item("Has an active imagination", O, false),
    item("Tends to be quiet", E, true),
    item("Is generally trusting", A, false),
    item("Tends to be lazy", C, true),
    item("Is emotionally stable, not easily upset", N, true),
    item("Is inventive", O, false),
    item("Has an assertive personality", E, false),
    item("Can be cold and aloof", A, true),
    item("Perseveres until the task is finished", C, false),
    item("Can be moody", N, false),
    item("Values artistic, aesthetic experiences", O, false),
    item("Is sometimes shy, inhibited", E, true),
    item("Is considerate and kind to almost everyone", A, false),
    item("Does things efficiently", C, false),
    item("Remains calm in tense situations", N, true),
    item("Prefers work that is routine", O, true),
    item("Is outgoing, sociable", E, false),
    item("Is sometimes rude to others", A, true),
    item("Makes plans and follows through with them", C, false),
    item("Gets nervous easily", N, false),
    item("Likes to reflect, play with ideas", O, false),
    item("Has few artistic interests", O, true),
    item("Likes to cooperate with others", A, false),
    item("Is easily distracted", C, true),
    item("Is sophisticated in art, music, or literature", O, false),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfiAnswerSheet {
    pub agent: String,
    pub day: u32,
    pub answers: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfiScores {
    pub day: u32,
    pub scores: BigFiveVector,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BfiError {
    #[error("no structures to assess")]
    NoDays,
    #[error("assessment failed: {0}")]
    Backend(LmError),
    #[error("sheet: {0}")]
    Sheet(String),
}

impl BfiAnswerSheet {
    pub fn validate(&self) -> Result<(), BfiError> {
        if self.answers.len() != ITEMS.len() {
            return Err(BfiError::Sheet(format!("{} answers, expected 44", self.answers.len())));
        }
        match self.answers.iter().position(|a| !(1..=5).contains(a)) {
            Some(i) => Err(BfiError::Sheet(format!("answer {} out of 1..5", i + 1))),
            None => Ok(()),
        }
    }
}

/// Reverse-keys (x to 6 - x) and sums per dimension.
pub fn score_bfi(sheet: &BfiAnswerSheet) -> BfiScores {
    let mut s = BigFiveVector { openness: 0, conscientiousness: 0, extraversion: 0, agreeableness: 0, neuroticism: 0 };
    for (item, &a) in ITEMS.iter().zip(&sheet.answers) {
        let v = u32::from(if item.reversed { 6 - a } else { a });
        match item.dimension {
            E => s.extraversion += v,
            A => s.agreeableness += v,
            C => s.conscientiousness += v,
            N => s.neuroticism += v,
            O => s.openness += v,
        }
    }
    BfiScores { day: sheet.day, scores: s }
}

/// Fills one sheet per (day, structure text) in a single request.
pub fn administer_bfi(client: &LmClient, agent: &str, name: &str, structures: &[(u32, String)]) -> Result<Vec<BfiAnswerSheet>, BfiError> {
    if structures.is_empty() {
        return Err(BfiError::NoDays);
    }
    let items: Vec<&str> = ITEMS.iter().map(|i| i.text).collect();
    let days: Vec<Value> = structures.iter().map(|(d, t)| serde_json::json!({"day": d, "text": t})).collect();
    let ctx = Context::new().with("name", name).with("items", items).with("structures", days);
    let resp = client.complete(&PromptRequest::new(PromptKind::BfiFill, agent, ctx)).map_err(BfiError::Backend)?;
    let sheets: Vec<BfiAnswerSheet> = resp.payload["sheets"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|s| BfiAnswerSheet {
            agent: agent.to_owned(),
            day: s["day"].as_u64().unwrap_or(0) as u32,
            answers: s["answers"].as_array().into_iter().flatten().map(|a| a.as_u64().unwrap_or(0) as u8).collect(),
        })
        .collect();
    if sheets.len() != structures.len() {
        return Err(BfiError::Sheet(format!("{} sheets for {} days", sheets.len(), structures.len())));
    }
    for (s, (d, _)) in sheets.iter().zip(structures) {
        s.validate()?;
        if s.day != *d {
            return Err(BfiError::Sheet(format!("sheet for day {} where {d} was expected", s.day)));
        }
    }
    Ok(sheets)
}
