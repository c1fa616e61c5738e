//! The fixed goal taxonomy. Declaration order is the canonical axis order
//! for per-day goal-count vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GoalTag {
    Learning,
    Work,
    Exercise,
    Relaxation,
    Social,
    Appointment,
    Meal,
    Rest,
    Creative,
    Errand,
}

impl GoalTag {
    pub const ALL: [GoalTag; 10] = [
        GoalTag::Learning,
        GoalTag::Work,
        GoalTag::Exercise,
        GoalTag::Relaxation,
        GoalTag::Social,
        GoalTag::Appointment,
        GoalTag::Meal,
        GoalTag::Rest,
        GoalTag::Creative,
        GoalTag::Errand,
    ];

    /// Position on the canonical axis.
    pub fn axis(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GoalTag::Learning => "Learning",
            GoalTag::Work => "Work",
            GoalTag::Exercise => "Exercise",
            GoalTag::Relaxation => "Relaxation",
            GoalTag::Social => "Social",
            GoalTag::Appointment => "Appointment",
            GoalTag::Meal => "Meal",
            GoalTag::Rest => "Rest",
            GoalTag::Creative => "Creative",
            GoalTag::Errand => "Errand",
        }
    }

    /// Goals that involve another person.
    pub fn is_social(self) -> bool {
        matches!(self, GoalTag::Social | GoalTag::Appointment)
    }
}

impl fmt::Display for GoalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown goal tag {0:?}")]
pub struct UnknownGoal(pub String);

impl FromStr for GoalTag {
    type Err = UnknownGoal;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        GoalTag::ALL.into_iter().find(|g| g.name().eq_ignore_ascii_case(t)).ok_or_else(|| UnknownGoal(t.to_owned()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_matches_declaration_order() {
        for (i, g) in GoalTag::ALL.iter().enumerate() {
            assert_eq!(g.axis(), i);
        }
    }

    #[test]
    fn parse_roundtrip() {
        for g in GoalTag::ALL {
            assert_eq!(g.name().parse::<GoalTag>().unwrap(), g);
            assert_eq!(g.name().to_lowercase().parse::<GoalTag>().unwrap(), g);
        }
        assert!("Nap".parse::<GoalTag>().is_err());
    }
}
