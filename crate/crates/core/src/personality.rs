//! Emotion, memory, insight and the character-growth chain.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::character::{preference_from, CharacterStructure, Dimension};
use crate::goal::GoalTag;
use crate::lmclient::{Context, LmClient, LmError, PromptKind, PromptRequest};

pub const EMOTION_LABELS: [&str; 7] = ["Despairing", "Fearful", "Anxious", "Calm", "Content", "Happy", "Excited"];

/// Span between consecutive categories that sends an agent back to its plan.
pub const REPLAN_SPAN: u8 = 3;

pub fn emotion_label(category: u8) -> &'static str {
    EMOTION_LABELS[usize::from(category.clamp(1, 7) - 1)]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionState {
    /// 1 (most negative) ..= 7 (most positive).
    pub category: u8,
    pub feeling: String,
    pub day: u32,
    pub tick: u32,
}

impl EmotionState {
    /// Where every agent starts.
    pub fn neutral() -> Self {
        Self { category: 4, feeling: "I feel calm.".into(), day: 0, tick: 0 }
    }

    pub fn label(&self) -> &'static str {
        emotion_label(self.category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortTermRecord {
    pub day: u32,
    pub tick: u32,
    pub action: String,
    pub goal: Option<GoalTag>,
    pub emotion: EmotionState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongTermRecord {
    pub day: u32,
    /// Last day covered; equals `day` unless blurred.
    pub day_end: u32,
    pub summary: String,
    pub salience: String,
    pub blurred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightRecord {
    pub day: u32,
    pub reflection: String,
    /// Goal the reflection centres on; steers the growth stages.
    pub theme: String,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff<T> {
    pub old: T,
    pub new: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthDelta {
    pub day: u32,
    pub current_state: FieldDiff<String>,
    pub traits: FieldDiff<String>,
    pub conflict: FieldDiff<String>,
    pub preference: FieldDiff<Value>,
    pub old_revision: u32,
    pub new_revision: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrowthError {
    #[error("{stage} failed: {source}")]
    Stage { stage: PromptKind, source: LmError },
    #[error("{0} produced an invalid structure: {1}")]
    Invalid(PromptKind, String),
}

/// Result of one emotion perception.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionUpdate {
    pub state: EmotionState,
    pub warning: Option<String>,
}

/// Perceives the emotion after `action`. With `feelings` off the category is
/// still recorded but the first-person text is replaced by the bare label.
#[allow(clippy::too_many_arguments)]
pub fn update_emotion(
    agent: &str,
    name: &str,
    action: &str,
    goal: Option<GoalTag>,
    character: &str,
    previous: &EmotionState,
    feelings: bool,
    client: &LmClient,
    day: u32,
    tick: u32,
) -> EmotionUpdate {
    let ctx = Context::new()
        .with("name", name)
        .with("character", character)
        .with("action", action)
        .with("goal", goal.map(GoalTag::name).unwrap_or("Social"))
        .with("previous", json!({"category": previous.category, "label": previous.label()}));
    let req = PromptRequest::new(PromptKind::EmotionUpdate, agent, ctx).at(day, tick);
    let (category, feeling, warning) = match client.complete(&req) {
        Ok(r) => {
            let raw = r.payload["category"].as_i64().unwrap_or(4);
            let c = raw.clamp(1, 7) as u8;
            let w = (i64::from(c) != raw).then(|| format!("emotion category {raw} clamped to {c}"));
            (c, r.str("feeling").to_owned(), w)
        }
        Err(e) => (previous.category, String::new(), Some(format!("emotion unavailable, keeping previous: {e}"))),
    };
    let feeling =
        if feelings && !feeling.trim().is_empty() { feeling } else { format!("I feel {}.", emotion_label(category).to_lowercase()) };
    EmotionUpdate { state: EmotionState { category, feeling, day, tick }, warning }
}

pub fn check_replan_trigger(prev: &EmotionState, next: &EmotionState) -> bool {
    prev.category.abs_diff(next.category) >= REPLAN_SPAN
}

/// Outcome of an end-of-day memory step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryOutcome {
    pub records: Vec<LongTermRecord>,
    pub degraded: Option<String>,
}

/// Keeps the day's experiences that matter to this character, as
/// first-person summaries.
pub fn filter_memories(
    agent: &str,
    name: &str,
    day: u32,
    short_term: &[ShortTermRecord],
    character: &str,
    client: &LmClient,
) -> MemoryOutcome {
    if short_term.is_empty() {
        return MemoryOutcome { records: Vec::new(), degraded: None };
    }
    let records: Vec<Value> = short_term
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "index": i,
                "action": r.action,
                "category": r.emotion.category,
                "goal": r.goal.map(GoalTag::name).unwrap_or("Social"),
            })
        })
        .collect();
    let ctx = Context::new().with("name", name).with("character", character).with("records", records);
    let raw = |reason: String| MemoryOutcome {
        records: short_term
            .iter()
            .map(|r| LongTermRecord { day, day_end: day, summary: r.action.clone(), salience: "unfiltered".into(), blurred: false })
            .collect(),
        degraded: Some(reason),
    };
    match client.complete(&PromptRequest::new(PromptKind::MemoryFilter, agent, ctx).at(day, 0)) {
        Ok(r) => {
            let mut kept: Vec<(i64, LongTermRecord)> = r.payload["records"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|x| {
                    let idx = x["index"].as_i64()?;
                    (0..short_term.len() as i64).contains(&idx).then(|| {
                        let salience = x["salience"].as_str().unwrap_or_default();
                        (
                            idx,
                            LongTermRecord {
                                day,
                                day_end: day,
                                summary: x["summary"].as_str().unwrap_or_default().to_owned(),
                                salience: if salience.is_empty() { "character".into() } else { salience.to_owned() },
                                blurred: false,
                            },
                        )
                    })
                })
                .collect();
            kept.sort_by_key(|k| k.0);
            kept.dedup_by_key(|k| k.0);
            MemoryOutcome { records: kept.into_iter().map(|k| k.1).collect(), degraded: None }
        }
        Err(e) => raw(format!("memory filter unavailable, kept raw records: {e}")),
    }
}

/// Condenses the oldest `batch` records into one blurred record until the
/// store holds at most `capacity`.
pub fn decay_memories(
    agent: &str,
    name: &str,
    store: &mut Vec<LongTermRecord>,
    capacity: usize,
    batch: usize,
    client: &LmClient,
    day: u32,
) -> Option<String> {
    assert!(batch >= 2, "a blur batch must merge at least two records");
    let mut degraded = None;
    while store.len() > capacity {
        let take = batch.min(store.len());
        let oldest: Vec<LongTermRecord> = store.drain(..take).collect();
        let recs: Vec<Value> = oldest.iter().map(|r| json!({"day": r.day, "summary": r.summary})).collect();
        let ctx = Context::new().with("name", name).with("records", recs);
        match client.complete(&PromptRequest::new(PromptKind::MemoryBlur, agent, ctx).at(day, 0)) {
            Ok(r) => {
                let blurred = LongTermRecord {
                    day: oldest.iter().map(|r| r.day).min().unwrap_or(day),
                    day_end: oldest.iter().map(|r| r.day_end).max().unwrap_or(day),
                    summary: r.str("summary").to_owned(),
                    salience: "blurred".into(),
                    blurred: true,
                };
                store.insert(0, blurred);
            }
            Err(e) => {
                // put them back and truncate instead
                let mut restored = oldest;
                restored.append(store);
                *store = restored;
                let excess = store.len() - capacity;
                store.drain(..excess);
                degraded = Some(format!("blur unavailable, dropped {excess} oldest records: {e}"));
            }
        }
    }
    degraded
}

/// One day's event as the insight prompt sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayEvent {
    pub goal: Option<GoalTag>,
    pub text: String,
    pub category: u8,
}

pub const UNEVENTFUL: &str = "uneventful day";

pub fn generate_insight(
    agent: &str,
    name: &str,
    day: u32,
    events: &[DayEvent],
    long_term: &[LongTermRecord],
    character: &str,
    client: &LmClient,
) -> InsightRecord {
    let evs: Vec<Value> = events
        .iter()
        .map(|e| json!({"goal": e.goal.map(GoalTag::name).unwrap_or("Social"), "text": e.text, "category": e.category}))
        .collect();
    let mems: Vec<&str> = long_term.iter().map(|m| m.summary.as_str()).collect();
    let ctx = Context::new()
        .with("name", name)
        .with("character", character)
        .with("events", evs)
        .with("memories", mems)
        .with("day", u64::from(day));
    match client.complete(&PromptRequest::new(PromptKind::Insight, agent, ctx).at(day, 0)) {
        Ok(r) => InsightRecord { day, reflection: r.str("reflection").to_owned(), theme: r.str("theme").to_owned(), degraded: false },
        Err(_) => InsightRecord { day, reflection: UNEVENTFUL.into(), theme: String::new(), degraded: true },
    }
}

pub const GROWTH_STAGES: [PromptKind; 4] =
    [PromptKind::GrowthState, PromptKind::GrowthFeature, PromptKind::GrowthConflict, PromptKind::GrowthPreference];

/// Runs the four growth stages in order, each seeing the structure as
/// updated by the stages before it. Any failure leaves `cs` untouched.
pub fn grow_character(
    agent: &str,
    insight: &InsightRecord,
    day_summary: &str,
    cs: &CharacterStructure,
    client: &LmClient,
) -> Result<(CharacterStructure, GrowthDelta), GrowthError> {
    let mut next = cs.clone();
    for stage in GROWTH_STAGES {
        let current = match stage {
            PromptKind::GrowthState => json!(next.current_state),
            PromptKind::GrowthFeature => json!(next.traits.prose),
            PromptKind::GrowthConflict => json!(next.conflict),
            _ => serde_json::to_value(&next.preference).expect("preference serializes"),
        };
        let ctx = Context::new()
            .with("name", next.name())
            .with("character", next.full_text())
            .with("insight", insight.reflection.as_str())
            .with("theme", insight.theme.as_str())
            .with("day_summary", day_summary)
            .with("day", u64::from(insight.day))
            .with("current", current);
        let r = client
            .complete(&PromptRequest::new(stage, agent, ctx).at(insight.day, 0))
            .map_err(|source| GrowthError::Stage { stage, source })?;
        match stage {
            PromptKind::GrowthState => next.current_state = r.str("current_state").to_owned(),
            PromptKind::GrowthFeature => next.traits.prose = r.str("traits").to_owned(),
            PromptKind::GrowthConflict => next.conflict = r.str("conflict").to_owned(),
            _ => next.preference = preference_from(&r.payload["preference"]).map_err(|e| GrowthError::Invalid(stage, e.to_string()))?,
        }
    }
    next.basic_info = cs.basic_info.clone();
    next.revision = cs.revision + 1;
    let problems = crate::character::validate_structure(&next, Some(cs));
    if !problems.is_empty() {
        return Err(GrowthError::Invalid(PromptKind::GrowthPreference, problems.join("; ")));
    }
    let delta = GrowthDelta {
        day: insight.day,
        current_state: FieldDiff { old: cs.current_state.clone(), new: next.current_state.clone() },
        traits: FieldDiff { old: cs.traits.prose.clone(), new: next.traits.prose.clone() },
        conflict: FieldDiff { old: cs.conflict.clone(), new: next.conflict.clone() },
        preference: FieldDiff {
            old: serde_json::to_value(&cs.preference).expect("preference serializes"),
            new: serde_json::to_value(&next.preference).expect("preference serializes"),
        },
        old_revision: cs.revision,
        new_revision: next.revision,
    };
    Ok((next, delta))
}

/// Emphasis used when the emotion prompt asks for a character summary.
pub const EMOTION_EMPHASIS: Dimension = Dimension::Conflict;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::character::{init_character, summarize_character};
    use crate::lmclient::{LanguageModel, PromptRequest};
    use std::sync::Arc;

    fn st(cat: u8) -> EmotionState {
        EmotionState { category: cat, feeling: "x".into(), day: 1, tick: 0 }
    }

    #[test]
    fn trigger_rule() {
        assert!(check_replan_trigger(&st(7), &st(4)));
        assert!(!check_replan_trigger(&st(5), &st(4)));
        assert!(check_replan_trigger(&st(2), &st(6)));
        assert!(!check_replan_trigger(&st(3), &st(5)));
    }

    #[test]
    fn emotion_is_deterministic_and_in_range() {
        let c = LmClient::scripted(5);
        let cs = init_character("ambitious creative writer Sophia", &c).unwrap();
        let sum = summarize_character(&cs, Some(EMOTION_EMPHASIS), 40, &c).unwrap();
        let run = |feel| {
            update_emotion(
                "sophia",
                "Sophia",
                "Sophia writes her novel",
                Some(GoalTag::Creative),
                &sum.text(),
                &EmotionState::neutral(),
                feel,
                &c,
                1,
                3,
            )
        };
        let a = run(true);
        assert_eq!(a, run(true));
        assert!((1..=7).contains(&a.state.category));
        assert!(!a.state.feeling.is_empty());
        let b = run(false);
        assert_eq!(b.state.category, a.state.category);
        assert_eq!(b.state.feeling, format!("I feel {}.", a.state.label().to_lowercase()));
    }

    struct Fixed(Value);

    impl LanguageModel for Fixed {
        fn backend_id(&self) -> &str {
            "fixed"
        }
        fn complete_raw(&self, _: &PromptRequest) -> Result<String, LmError> {
            Ok(self.0.to_string())
        }
    }

    struct Down;

    impl LanguageModel for Down {
        fn backend_id(&self) -> &str {
            "down"
        }
        fn complete_raw(&self, _: &PromptRequest) -> Result<String, LmError> {
            Err(LmError::Backend("offline".into()))
        }
    }

    fn summary() -> String {
        let c = LmClient::scripted(1);
        let cs = init_character("shy CS student Benjamin", &c).unwrap();
        summarize_character(&cs, None, 20, &c).unwrap().text()
    }

    #[test]
    fn out_of_range_category_clamped_with_warning() {
        let c = LmClient::new(Arc::new(Fixed(json!({"category": 9, "feeling": "wow"}))));
        let u = update_emotion("b", "B", "reads", None, &summary(), &st(4), true, &c, 1, 1);
        assert_eq!(u.state.category, 7);
        assert!(u.warning.unwrap().contains("clamped"));
        let down = LmClient::new(Arc::new(Down));
        let u = update_emotion("b", "B", "reads", None, &summary(), &st(2), true, &down, 1, 1);
        assert_eq!(u.state.category, 2);
        assert!(u.warning.is_some());
    }

    fn lt(day: u32) -> LongTermRecord {
        LongTermRecord { day, day_end: day, summary: format!("memory of day {day}"), salience: "character".into(), blurred: false }
    }

    #[test]
    fn decay_condenses_oldest_batch() {
        let c = LmClient::scripted(2);
        let mut store: Vec<LongTermRecord> = (1..=35).map(|i| lt(1 + i / 5)).collect();
        let days: Vec<u32> = store[..10].iter().map(|r| r.day).collect();
        assert!(decay_memories("a", "A", &mut store, 30, 10, &c, 8).is_none());
        assert_eq!(store.len(), 26);
        assert!(store[0].blurred);
        assert_eq!((store[0].day, store[0].day_end), (*days.iter().min().unwrap(), *days.iter().max().unwrap()));
        assert!(store[1..].iter().all(|r| !r.blurred));
        assert!(store.windows(2).all(|w| w[0].day <= w[1].day));

        let mut exact: Vec<LongTermRecord> = (0..30).map(lt).collect();
        let before = exact.clone();
        decay_memories("a", "A", &mut exact, 30, 10, &c, 8);
        assert_eq!(exact, before);

        let down = LmClient::new(Arc::new(Down));
        let mut big: Vec<LongTermRecord> = (0..35).map(lt).collect();
        assert!(decay_memories("a", "A", &mut big, 30, 10, &down, 8).is_some());
        assert_eq!(big.len(), 30);
        assert_eq!(big[0].day, 5);
    }

    #[test]
    fn filter_keeps_character_matches() {
        let c = LmClient::scripted(3);
        let cs = init_character("shy CS student Benjamin", &c).unwrap();
        let ch = format!("{} {} {}", cs.traits.prose, cs.conflict, cs.preference.text());
        assert!(filter_memories("benjamin", "Benjamin", 1, &[], &ch, &c).records.is_empty());
        let recs: Vec<ShortTermRecord> = [
            ("Benjamin reads a literature book in the library", GoalTag::Learning, 6),
            ("Benjamin eats lunch", GoalTag::Meal, 4),
            ("Benjamin codes an algorithm project", GoalTag::Work, 5),
        ]
        .iter()
        .enumerate()
        .map(|(i, (a, g, cat))| ShortTermRecord { day: 1, tick: i as u32, action: (*a).into(), goal: Some(*g), emotion: st(*cat) })
        .collect();
        let out = filter_memories("benjamin", "Benjamin", 1, &recs, &ch, &c);
        assert!(out.degraded.is_none());
        assert!(out.records.len() <= recs.len());
        assert!(out.records.iter().any(|r| r.summary.contains("literature")), "{:?}", out.records);
        let down = filter_memories("benjamin", "Benjamin", 1, &recs, &ch, &LmClient::new(Arc::new(Down)));
        assert_eq!(down.records.len(), 3);
        assert!(down.degraded.is_some());
    }

    #[test]
    fn insight_fallback_and_determinism() {
        let c = LmClient::scripted(4);
        let cs = init_character("shy CS student Benjamin", &c).unwrap();
        let ev = vec![DayEvent { goal: Some(GoalTag::Social), text: "talked with Zoe about health".into(), category: 6 }];
        let a = generate_insight("benjamin", "Benjamin", 1, &ev, &[], &cs.full_text(), &c);
        assert_eq!(a, generate_insight("benjamin", "Benjamin", 1, &ev, &[], &cs.full_text(), &c));
        assert!(!a.degraded);
        assert!(a.theme.parse::<GoalTag>().is_ok());
        let d = generate_insight("benjamin", "Benjamin", 1, &ev, &[], &cs.full_text(), &LmClient::new(Arc::new(Down)));
        assert_eq!(d.reflection, UNEVENTFUL);
        assert!(d.degraded);
    }

    #[test]
    fn growth_is_ordered_and_atomic() {
        let c = LmClient::scripted(6);
        let cs = init_character("shy CS student Benjamin", &c).unwrap();
        c.drain();
        let ins = InsightRecord { day: 1, reflection: "Health matters too.".into(), theme: "Exercise".into(), degraded: false };
        let (next, delta) = grow_character("benjamin", &ins, "a long day", &cs, &c).unwrap();
        assert_eq!(next.basic_info, cs.basic_info);
        assert_eq!((delta.old_revision, delta.new_revision), (0, 1));
        assert_ne!(next.current_state, cs.current_state);
        let kinds: Vec<PromptKind> = c.drain().iter().map(|x| x.kind).collect();
        assert_eq!(kinds, GROWTH_STAGES);
        let (again, _) = grow_character("benjamin", &InsightRecord { day: 2, ..ins.clone() }, "s", &next, &c).unwrap();
        assert_eq!(again.revision, 2);
        assert!(grow_character("benjamin", &ins, "s", &cs, &LmClient::new(Arc::new(Down))).is_err());
    }
}
