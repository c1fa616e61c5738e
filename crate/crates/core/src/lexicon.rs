//! Keyword tables used by the scripted backend and by the few heuristics
//! that read character prose (the dialogue trigger's extraversion factor).
//!
//! Matching is on lowercase word prefixes, so "writ" hits "writer" and
//! "writing".

use crate::goal::GoalTag;

pub fn goal_keywords(g: GoalTag) -> &'static [&'static str] {
    match g {
        GoalTag::Learning => &["study", "learn", "research", "read", "book", "knowledge", "curio", "lectur", "librar"],
        GoalTag::Work => &["work", "career", "project", "code", "coding", "program", "deadline", "job", "algorithm"],
        GoalTag::Exercise => &["exercis", "gym", "fitness", "health", "running", "sport", "body", "jog"],
        GoalTag::Relaxation => &["relax", "calm", "peace", "nature", "square", "park", "stroll", "quiet"],
        GoalTag::Social => &["social", "friend", "people", "party", "communit", "conversation", "outgoing", "lively"],
        GoalTag::Appointment => &["meet", "together", "connect", "collaborat", "partner", "share", "cafe"],
        GoalTag::Meal => &["meal", "food", "cook", "lunch", "dinner", "breakfast", "canteen"],
        GoalTag::Rest => &["rest", "sleep", "nap", "recover", "dorm", "alone"],
        GoalTag::Creative => &["writ", "novel", "art", "creativ", "imagin", "music", "film", "paint", "poem", "story"],
        GoalTag::Errand => &["errand", "shop", "organiz", "chore", "groceri", "store"],
    }
}

/// Words that raise or lower the perceived extraversion of a description.
pub const EXTRAVERT_UP: &[&str] = &["outgoing", "enthusias", "sociabl", "talkativ", "lively", "energetic", "open", "extravert", "bold"];
pub const EXTRAVERT_DOWN: &[&str] = &["shy", "introvert", "reserved", "quiet", "withdrawn", "timid", "alone", "solitary"];

pub const AGREEABLE_UP: &[&str] = &["kind", "warm", "help", "trust", "empath", "care", "caring", "cooperat", "gentle"];
pub const AGREEABLE_DOWN: &[&str] = &["cold", "critical", "blunt", "stubborn", "aloof", "rude"];
pub const CONSCIENTIOUS_UP: &[&str] = &["disciplin", "organiz", "diligent", "careful", "reliabl", "plan", "thorough", "focus"];
pub const CONSCIENTIOUS_DOWN: &[&str] = &["careless", "lazy", "distract", "messy", "procrastinat", "spontaneous"];
pub const NEUROTIC_UP: &[&str] = &["anxious", "worr", "tense", "insecur", "self-doubt", "nervous", "moody", "stress", "pressure"];
pub const NEUROTIC_DOWN: &[&str] = &["stable", "calm", "relaxed", "secure", "peaceful", "confident", "resilien"];
pub const OPEN_UP: &[&str] = &["curio", "imagin", "creativ", "art", "novel", "ideas", "open", "explor", "humanit", "philosoph"];
pub const OPEN_DOWN: &[&str] = &["routine", "convention", "practical", "narrow", "familiar"];

/// Lowercased words of `text` with surrounding punctuation stripped.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| c.is_whitespace() || c == '/' || c == ',')
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '-').to_lowercase())
        .filter(|w| !w.is_empty())
}

/// Number of words in `text` that start with any of `keys`.
pub fn count_hits(text: &str, keys: &[&str]) -> usize {
    words(text).filter(|w| keys.iter().any(|k| w.starts_with(k))).count()
}

/// Score in `[0, 1]` from the balance of up/down markers; 0.5 when neither occurs.
pub fn polarity(text: &str, up: &[&str], down: &[&str]) -> f64 {
    let u = count_hits(text, up) as f64;
    let d = count_hits(text, down) as f64;
    (u + 1.0) / (u + d + 2.0)
}

pub fn extraversion_level(text: &str) -> f64 {
    polarity(text, EXTRAVERT_UP, EXTRAVERT_DOWN)
}

/// Dialogue-trigger multiplier in `[0.5, 1.5]`.
pub fn extraversion_factor(text: &str) -> f64 {
    0.5 + extraversion_level(text)
}

/// Goal whose keywords occur most often in `text`, ties broken by axis order.
pub fn dominant_goal(text: &str) -> Option<GoalTag> {
    let mut best: Option<(usize, GoalTag)> = None;
    for g in GoalTag::ALL {
        let n = count_hits(text, goal_keywords(g));
        if n > 0 && best.is_none_or(|(b, _)| n > b) {
            best = Some((n, g));
        }
    }
    best.map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_matching() {
        assert_eq!(count_hits("A writer, writing stories.", &["writ"]), 2);
        assert_eq!(count_hits("Shy; quiet.", EXTRAVERT_DOWN), 2);
    }

    #[test]
    fn extraversion_orders_descriptions() {
        let shy = extraversion_level("a shy and reserved student who prefers to be alone");
        let open = extraversion_level("an enthusiastic, outgoing and talkative host");
        assert!(shy < 0.5 && open > 0.5);
        assert_eq!(extraversion_level("no markers here"), 0.5);
        let f = extraversion_factor("shy shy shy shy shy shy shy shy");
        assert!((0.5..=1.5).contains(&f));
    }

    #[test]
    fn dominant_goal_picks_most_frequent() {
        assert_eq!(dominant_goal("novel writing and art"), Some(GoalTag::Creative));
        assert_eq!(dominant_goal("zzz"), None);
    }
}
