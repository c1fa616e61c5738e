//! Rebuilds agent state from an event log alone.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AgentRuntime, LogRecord};
use crate::behavior::{AgentId, DailyPlan, DialogMemory, DialogRecord, InviteEvent};
use crate::character::CharacterStructure;
use crate::personality::{EmotionState, InsightRecord, LongTermRecord};

/// The per-agent state a log must be able to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub structure: CharacterStructure,
    pub emotion: EmotionState,
    pub long_term: Vec<LongTermRecord>,
    pub insights: Vec<InsightRecord>,
    pub dialog: DialogMemory,
    pub plan: DailyPlan,
    pub position: String,
}

impl AgentView {
    pub fn of(a: &AgentRuntime) -> Self {
        Self {
            structure: a.structure.clone(),
            emotion: a.emotion.clone(),
            long_term: a.long_term.clone(),
            insights: a.insights.clone(),
            dialog: a.dialog.clone(),
            plan: a.plan.clone(),
            position: a.position.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayView {
    /// The day the next record would belong to.
    pub day: u32,
    pub agents: BTreeMap<AgentId, AgentView>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("record {seq} ({kind}): {message}")]
pub struct ReplayError {
    pub seq: u64,
    pub kind: String,
    pub message: String,
}

struct Folder {
    view: ReplayView,
    homes: BTreeMap<AgentId, String>,
}

impl Folder {
    fn agent(&mut self, r: &LogRecord, id: &str) -> Result<&mut AgentView, ReplayError> {
        self.view.agents.get_mut(id).ok_or_else(|| err(r, format!("unknown agent {id:?}")))
    }

    fn apply(&mut self, r: &LogRecord) -> Result<(), ReplayError> {
        let p = &r.payload;
        match r.kind.as_str() {
            "init" => {
                let structure: CharacterStructure = field(r, "structure")?;
                let home: String = field(r, "home")?;
                let view = AgentView {
                    plan: DailyPlan { agent: r.agent.clone(), day: 0, entries: Vec::new() },
                    structure,
                    emotion: EmotionState::neutral(),
                    long_term: Vec::new(),
                    insights: Vec::new(),
                    dialog: DialogMemory::default(),
                    position: home.clone(),
                };
                self.homes.insert(r.agent.clone(), home);
                self.view.agents.insert(r.agent.clone(), view);
            }
            "plan" => {
                let plan: DailyPlan = field(r, "plan")?;
                let home = self.homes.get(&r.agent).cloned().unwrap_or_default();
                let a = self.agent(r, &r.agent.clone())?;
                a.plan = plan;
                a.position = home;
            }
            "invite" => {
                let ev: InviteEvent = serde_json::from_value(p.clone()).map_err(|e| err(r, e.to_string()))?;
                for plan in ev.plans {
                    let id = plan.agent.clone();
                    self.agent(r, &id)?.plan = plan;
                }
            }
            "action" => {
                let plan: DailyPlan = field(r, "plan")?;
                let place = p.pointer("/record/place").and_then(Value::as_str).map(str::to_owned);
                let a = self.agent(r, &r.agent.clone())?;
                a.plan = plan;
                if let Some(place) = place {
                    a.position = place;
                }
            }
            "replan" => {
                let plan: DailyPlan = field(r, "plan")?;
                self.agent(r, &r.agent.clone())?.plan = plan;
            }
            "emotion" => {
                let state: EmotionState = field(r, "state")?;
                self.agent(r, &r.agent.clone())?.emotion = state;
            }
            "dialog" => {
                let partner: String = field(r, "partner")?;
                let topic: String = field(r, "topic")?;
                let day = r.day;
                if partner == "user" {
                    let summary: String = field(r, "summary")?;
                    self.agent(r, &r.agent.clone())?.dialog.push("user", DialogRecord { day, topic, summary });
                } else {
                    let sums: BTreeMap<String, String> = field(r, "summaries")?;
                    for (me, other) in [(r.agent.clone(), partner.clone()), (partner.clone(), r.agent.clone())] {
                        let summary = sums.get(&me).cloned().ok_or_else(|| err(r, format!("no summary for {me}")))?;
                        self.agent(r, &me)?.dialog.push(&other, DialogRecord { day, topic: topic.clone(), summary });
                    }
                }
            }
            "memory" => {
                let store: Vec<LongTermRecord> = field(r, "store")?;
                self.agent(r, &r.agent.clone())?.long_term = store;
            }
            "insight" => {
                let ins: InsightRecord = field(r, "insight")?;
                self.agent(r, &r.agent.clone())?.insights.push(ins);
            }
            "growth" => {
                if p.get("applied").and_then(Value::as_bool) == Some(true) {
                    let cs: CharacterStructure = field(r, "structure")?;
                    self.agent(r, &r.agent.clone())?.structure = cs;
                }
            }
            "day_end" => {
                let day: u32 = field(r, "day")?;
                self.view.day = day + 1;
            }
            _ => {}
        }
        Ok(())
    }
}

fn err(r: &LogRecord, message: String) -> ReplayError {
    ReplayError { seq: r.seq, kind: r.kind.clone(), message }
}

fn field<T: DeserializeOwned>(r: &LogRecord, key: &str) -> Result<T, ReplayError> {
    let v = r.payload.get(key).ok_or_else(|| err(r, format!("missing {key}")))?;
    serde_json::from_value(v.clone()).map_err(|e| err(r, format!("{key}: {e}")))
}

/// Folds a complete log (from its `run` record on) into agent state.
pub fn replay(records: &[LogRecord]) -> Result<ReplayView, ReplayError> {
    let mut f = Folder { view: ReplayView { day: 1, agents: BTreeMap::new() }, homes: BTreeMap::new() };
    for r in records {
        f.apply(r)?;
    }
    Ok(f.view)
}
