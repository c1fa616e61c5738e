//! Per-kind required context fields and response schemas.

use serde_json::Value;

use super::PromptKind;
use crate::goal::GoalTag;

pub fn required_fields(kind: PromptKind) -> &'static [&'static str] {
    use PromptKind::*;
    match kind {
        CharInit => &["brief"],
        CharSummary => &["character", "budget"],
        PlanDay => &["name", "character", "places", "home", "day"],
        PlanRevise => &["name", "character", "places", "remaining", "reason"],
        InviteSend => &["name", "partner", "place", "start"],
        InviteDecide => &["name", "character", "inviter", "place", "start", "end", "topic"],
        ActionDescribe => &["name", "goal", "place", "plan"],
        EmotionUpdate => &["name", "character", "action", "goal", "previous"],
        DialogTopic => &["name", "partner", "history"],
        DialogTurn => &["speaker", "listener", "topic", "turns"],
        DialogSummary => &["name", "partner", "topic", "turns"],
        PartnerSelect => &["name", "character", "candidates"],
        MemoryFilter => &["name", "character", "records"],
        MemoryBlur => &["name", "records"],
        Insight => &["name", "character", "events", "memories"],
        GrowthState | GrowthFeature | GrowthConflict | GrowthPreference => &["name", "character", "insight", "day_summary"],
        BfiFill => &["name", "items", "structures"],
        ChatReply => &["name", "character", "text", "history"],
    }
}

#[derive(Clone, Copy)]
enum Ty {
    Text,
    NonEmpty,
    Int,
    Num,
    Bool,
    List,
    Obj,
}

fn check(v: &Value, field: &str, ty: Ty) -> Result<(), String> {
    let x = v.get(field).ok_or_else(|| format!("missing field {field:?}"))?;
    let ok = match ty {
        Ty::Text => x.is_string(),
        Ty::NonEmpty => x.as_str().is_some_and(|s| !s.trim().is_empty()),
        Ty::Int => x.is_i64() || x.is_u64(),
        Ty::Num => x.is_number(),
        Ty::Bool => x.is_boolean(),
        Ty::List => x.is_array(),
        Ty::Obj => x.is_object(),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("field {field:?} has the wrong type"))
    }
}

fn all(v: &Value, fields: &[(&str, Ty)]) -> Result<(), String> {
    fields.iter().try_for_each(|(f, t)| check(v, f, *t))
}

fn plan_entries(v: &Value) -> Result<(), String> {
    check(v, "entries", Ty::List)?;
    for (i, e) in v["entries"].as_array().into_iter().flatten().enumerate() {
        all(
            e,
            &[
                ("start", Ty::NonEmpty),
                ("end", Ty::NonEmpty),
                ("goal", Ty::NonEmpty),
                ("place", Ty::NonEmpty),
                ("description", Ty::NonEmpty),
                ("motivation", Ty::NonEmpty),
            ],
        )
        .map_err(|m| format!("entry {i}: {m}"))?;
        if e["goal"].as_str().is_some_and(|g| g.parse::<GoalTag>().is_err()) {
            return Err(format!("entry {i}: unknown goal"));
        }
    }
    Ok(())
}

fn preference(v: &Value) -> Result<(), String> {
    all(
        v,
        &[
            ("ultimate_goal", Ty::NonEmpty),
            ("long_term_goal", Ty::Obj),
            ("short_term_goal", Ty::Obj),
            ("daily_routine", Ty::NonEmpty),
            ("hobbies", Ty::List),
            ("venue_preference", Ty::List),
        ],
    )
}

fn bfi_sheets(v: &Value) -> Result<(), String> {
    check(v, "sheets", Ty::List)?;
    for (i, s) in v["sheets"].as_array().into_iter().flatten().enumerate() {
        all(s, &[("day", Ty::Int), ("answers", Ty::List)]).map_err(|m| format!("sheet {i}: {m}"))?;
        let answers = s["answers"].as_array().expect("checked");
        if answers.len() != 44 {
            return Err(format!("sheet {i}: {} answers, expected 44", answers.len()));
        }
        if let Some(bad) = answers.iter().position(|a| !a.as_u64().is_some_and(|x| (1..=5).contains(&x))) {
            return Err(format!("sheet {i}: answer {} out of 1..5", bad + 1));
        }
    }
    Ok(())
}

/// Checks a decoded payload against the kind's schema.
pub fn validate_payload(kind: PromptKind, v: &Value) -> Result<(), String> {
    use PromptKind::*;
    if !v.is_object() {
        return Err("payload is not a JSON object".into());
    }
    match kind {
        CharInit => {
            all(
                v,
                &[
                    ("basic_info", Ty::Obj),
                    ("current_state", Ty::NonEmpty),
                    ("traits", Ty::NonEmpty),
                    ("conflict", Ty::NonEmpty),
                    ("preference", Ty::Obj),
                ],
            )?;
            for k in ["name", "gender", "age", "profession"] {
                check(&v["basic_info"], k, Ty::NonEmpty).map_err(|m| format!("basic_info: {m}"))?;
            }
            preference(&v["preference"])
        }
        CharSummary => all(
            v,
            &[
                ("basic_info", Ty::NonEmpty),
                ("current_state", Ty::NonEmpty),
                ("traits", Ty::NonEmpty),
                ("conflict", Ty::NonEmpty),
                ("preference", Ty::NonEmpty),
            ],
        ),
        PlanDay | PlanRevise => plan_entries(v),
        InviteSend => all(v, &[("topic", Ty::NonEmpty), ("message", Ty::NonEmpty)]),
        InviteDecide => all(v, &[("accept", Ty::Bool), ("reason", Ty::NonEmpty), ("benefit_new", Ty::Num)]),
        ActionDescribe => check(v, "description", Ty::NonEmpty),
        EmotionUpdate => all(v, &[("category", Ty::Int), ("feeling", Ty::NonEmpty)]),
        DialogTopic => check(v, "topic", Ty::NonEmpty),
        DialogTurn => all(v, &[("utterance", Ty::NonEmpty), ("end", Ty::Bool)]),
        DialogSummary | MemoryBlur => check(v, "summary", Ty::NonEmpty),
        PartnerSelect => all(v, &[("partner", Ty::NonEmpty), ("reason", Ty::NonEmpty)]),
        MemoryFilter => {
            check(v, "records", Ty::List)?;
            for r in v["records"].as_array().expect("checked") {
                all(r, &[("index", Ty::Int), ("summary", Ty::NonEmpty), ("salience", Ty::Text)])?;
            }
            Ok(())
        }
        Insight => all(v, &[("reflection", Ty::NonEmpty), ("theme", Ty::NonEmpty)]),
        GrowthState => check(v, "current_state", Ty::NonEmpty),
        GrowthFeature => check(v, "traits", Ty::NonEmpty),
        GrowthConflict => check(v, "conflict", Ty::NonEmpty),
        GrowthPreference => {
            check(v, "preference", Ty::Obj)?;
            preference(&v["preference"])
        }
        BfiFill => bfi_sheets(v),
        ChatReply => all(v, &[("reply", Ty::NonEmpty), ("summary", Ty::NonEmpty)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn emotion_schema() {
        assert!(validate_payload(PromptKind::EmotionUpdate, &json!({"category": 5, "feeling": "I feel fine"})).is_ok());
        assert!(validate_payload(PromptKind::EmotionUpdate, &json!({"category": "5", "feeling": "x"})).is_err());
        assert!(validate_payload(PromptKind::EmotionUpdate, &json!({"category": 5, "feeling": "  "})).is_err());
    }

    #[test]
    fn bfi_answer_out_of_range_rejected() {
        let mut answers = vec![3; 44];
        assert!(validate_payload(PromptKind::BfiFill, &json!({"sheets": [{"day": 1, "answers": answers}]})).is_ok());
        answers[7] = 6;
        let err = validate_payload(PromptKind::BfiFill, &json!({"sheets": [{"day": 1, "answers": answers}]})).unwrap_err();
        assert!(err.contains("answer 8"), "{err}");
        assert!(validate_payload(PromptKind::BfiFill, &json!({"sheets": [{"day": 1, "answers": [3, 3]}]})).is_err());
    }

    #[test]
    fn plan_entry_goal_must_be_known() {
        let e = json!({"start": "07:00", "end": "08:00", "goal": "Nap", "place": "A/B",
                       "description": "d", "motivation": "m"});
        assert!(validate_payload(PromptKind::PlanDay, &json!({"entries": [e]})).is_err());
    }

    #[test]
    fn non_object_rejected() {
        for k in PromptKind::ALL {
            assert!(validate_payload(k, &json!([1, 2])).is_err());
        }
    }
}
