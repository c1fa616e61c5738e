//! Log analysis: personality-change and behavioral-activity metrics, run
//! comparison, evaluator rankings and mechanism invariant checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use evolvesim_metrics::{
    activity_level, delta_overall, distance_matrix, dunn_posthoc_holm, kruskal_wallis, trueskill_rank, GoalCountVector64, MetricsError,
    PairwiseResult64, RatingResult64, ScoreSeries64, StatTestResult64, TrueSkillConfig64,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::behavior::{AgentId, DailyPlan, EntryStatus, InvitationStatus, InviteEvent};
use crate::bfi::{administer_bfi, score_bfi, BfiError, BfiScores};
use crate::character::CharacterStructure;
use crate::environment::{load_world_with, WorldMap};
use crate::goal::GoalTag;
use crate::lmclient::{LmClient, PromptKind};
use crate::personality::{check_replan_trigger, EmotionState};
use crate::simkernel::{ConfigError, LogRecord, RunConfig};

pub const DIMENSIONS: [&str; 5] = ["extraversion", "agreeableness", "conscientiousness", "neuroticism", "openness"];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("log has no run header")]
    NoHeader,
    #[error("no plan for {agent} on day {day}")]
    MissingDay { agent: String, day: u32 },
    #[error("record {seq}: {message}")]
    Record { seq: u64, message: String },
    #[error("agent sets differ: {left:?} vs {right:?}")]
    AgentMismatch { left: Vec<String>, right: Vec<String> },
    #[error("ratings line {line}: {message}")]
    Ratings { line: usize, message: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("assessment: {0}")]
    Bfi(#[from] BfiError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn bad(r: &LogRecord, message: impl Into<String>) -> EvalError {
    EvalError::Record { seq: r.seq, message: message.into() }
}

fn decode<T: serde::de::DeserializeOwned>(r: &LogRecord, v: &Value) -> Result<T, EvalError> {
    serde_json::from_value(v.clone()).map_err(|e| bad(r, e.to_string()))
}

/// Agents in id order, from the `init` records.
pub fn agents(records: &[LogRecord]) -> Vec<AgentId> {
    let set: BTreeSet<&str> = records.iter().filter(|r| r.kind == "init").map(|r| r.agent.as_str()).collect();
    set.into_iter().map(str::to_owned).collect()
}

/// Days with a `day_end` record.
pub fn completed_days(records: &[LogRecord]) -> Vec<u32> {
    records.iter().filter(|r| r.kind == "day_end").map(|r| r.day).collect()
}

pub fn run_config(records: &[LogRecord]) -> Result<RunConfig, EvalError> {
    let r = records.iter().find(|r| r.kind == "run").ok_or(EvalError::NoHeader)?;
    decode(r, &r.payload["config"])
}

/// The plan an agent held for `day` after appointment negotiation and
/// before any tick ran.
pub fn plan_of_record(records: &[LogRecord], agent: &str, day: u32) -> Result<DailyPlan, EvalError> {
    let mut plan = None;
    for r in records.iter().filter(|r| r.day == day) {
        match r.kind.as_str() {
            "plan" if r.agent == agent => plan = Some(decode::<DailyPlan>(r, &r.payload["plan"])?),
            "invite" => {
                let ev: InviteEvent = decode(r, &r.payload)?;
                if let Some(p) = ev.plans.into_iter().find(|p| p.agent == agent) {
                    plan = Some(p);
                }
            }
            "action" | "dialog" | "emotion" | "day_end" => break,
            _ => {}
        }
    }
    plan.ok_or_else(|| EvalError::MissingDay { agent: agent.to_owned(), day })
}

/// Live entries per goal tag for one agent-day; unused tags count 0.
pub fn goal_counts(records: &[LogRecord], agent: &str, day: u32) -> Result<GoalCountVector64, EvalError> {
    let plan = plan_of_record(records, agent, day)?;
    let mut v = GoalCountVector64::zeros(GoalTag::ALL.len());
    for e in plan.entries.iter().filter(|e| e.status.is_live()) {
        v.increment(e.goal.axis());
    }
    Ok(v)
}

/// Questionnaire scores per day, from the agent's `bfi` record.
pub fn bfi_series(records: &[LogRecord], agent: &str) -> Result<Vec<BfiScores>, EvalError> {
    let Some(r) = records.iter().rev().find(|r| r.kind == "bfi" && r.agent == agent) else {
        return Ok(Vec::new());
    };
    let mut s: Vec<BfiScores> = decode(r, &r.payload["scores"])?;
    s.sort_by_key(|x| x.day);
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent: AgentId,
    /// Questionnaire sums per day, in [`DIMENSIONS`] order.
    pub bfi: Vec<[f64; 5]>,
    pub delta_overall: Option<f64>,
    pub goal_counts: Vec<Vec<f64>>,
    pub distances: Vec<Vec<f64>>,
    pub activity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub days: Vec<u32>,
    pub agents: Vec<AgentMetrics>,
}

pub fn agent_metrics(records: &[LogRecord], agent: &str) -> Result<AgentMetrics, EvalError> {
    let bfi: Vec<[f64; 5]> = bfi_series(records, agent)?.iter().map(|s| s.scores.as_array()).collect();
    let delta = if bfi.len() >= 2 { Some(delta_overall(&ScoreSeries64::from_days(&bfi)?)?) } else { None };
    let days = completed_days(records);
    let counts = days.iter().map(|&d| goal_counts(records, agent, d)).collect::<Result<Vec<_>, _>>()?;
    let (distances, activity) = if counts.len() >= 2 {
        let m = distance_matrix(&counts)?;
        (m.rows(), Some(activity_level(&m)?))
    } else {
        (Vec::new(), None)
    };
    Ok(AgentMetrics {
        agent: agent.to_owned(),
        bfi,
        delta_overall: delta,
        goal_counts: counts.iter().map(|c| c.counts().to_vec()).collect(),
        distances,
        activity,
    })
}

pub fn metrics_report(records: &[LogRecord]) -> Result<MetricsReport, EvalError> {
    let agents = agents(records).iter().map(|a| agent_metrics(records, a)).collect::<Result<_, _>>()?;
    Ok(MetricsReport { days: completed_days(records), agents })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

impl MetricsReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>10} {:>10}", "agent", "delta", "activity");
        for a in &self.agents {
            let _ = writeln!(s, "{:<14} {:>10} {:>10}", a.agent, opt(a.delta_overall), opt(a.activity));
        }
        for a in &self.agents {
            let _ = writeln!(s, "\n{} goal counts ({})", a.agent, GoalTag::ALL.map(GoalTag::name).join(" "));
            for (d, c) in self.days.iter().zip(&a.goal_counts) {
                let cells: Vec<String> = c.iter().map(|x| format!("{x:>2}")).collect();
                let _ = writeln!(s, "  day {d:<3} {}", cells.join(" "));
            }
            if !a.bfi.is_empty() {
                let _ = writeln!(s, "{} bfi (EXT AGR CON NEU OPEN)", a.agent);
                for (i, b) in a.bfi.iter().enumerate() {
                    let _ = writeln!(s, "  day {:<3} {:>3} {:>3} {:>3} {:>3} {:>3}", i + 1, b[0], b[1], b[2], b[3], b[4]);
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub agent: AgentId,
    pub delta_a: Option<f64>,
    pub delta_b: Option<f64>,
    pub delta_diff: Option<f64>,
    pub activity_a: Option<f64>,
    pub activity_b: Option<f64>,
    pub activity_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Side-by-side metrics of two runs over the same agents.
pub fn compare(a: &MetricsReport, b: &MetricsReport) -> Result<Comparison, EvalError> {
    let ids = |r: &MetricsReport| r.agents.iter().map(|x| x.agent.clone()).collect::<Vec<_>>();
    if ids(a) != ids(b) {
        return Err(EvalError::AgentMismatch { left: ids(a), right: ids(b) });
    }
    let rows = a
        .agents
        .iter()
        .zip(&b.agents)
        .map(|(x, y)| ComparisonRow {
            agent: x.agent.clone(),
            delta_a: x.delta_overall,
            delta_b: y.delta_overall,
            delta_diff: diff(x.delta_overall, y.delta_overall),
            activity_a: x.activity,
            activity_b: y.activity,
            activity_diff: diff(x.activity, y.activity),
        })
        .collect();
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "agent", "delta A", "delta B", "diff", "act A", "act B", "diff"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
                r.agent,
                opt(r.delta_a),
                opt(r.delta_b),
                opt(r.delta_diff),
                opt(r.activity_a),
                opt(r.activity_b),
                opt(r.activity_diff)
            );
        }
        s
    }
}

// ---- evaluator rankings ---------------------------------------------------------------------

/// One evaluator's ordering of groups, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub evaluator: String,
    pub order: Vec<String>,
}

/// Reads `evaluator_id,group,group,...` rows. A first row whose id cell is
/// `evaluator_id` (or `evaluator`) is treated as a header.
pub fn read_rankings(reader: impl Read) -> Result<Vec<Ranking>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 1;
        let row = row.map_err(|e| EvalError::Ratings { line, message: e.to_string() })?;
        let cells: Vec<&str> = row.iter().collect();
        if line == 1 && matches!(cells.first().copied(), Some("evaluator_id" | "evaluator")) {
            continue;
        }
        if cells.len() < 3 || cells.iter().any(|c| c.is_empty()) {
            return Err(EvalError::Ratings { line, message: "need an evaluator id and at least two groups".into() });
        }
        out.push(Ranking { evaluator: cells[0].to_owned(), order: cells[1..].iter().map(|c| (*c).to_owned()).collect() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub groups: Vec<String>,
    pub ratings: Vec<RatingResult64>,
    /// Rank positions (1 = best) per group.
    pub positions: Vec<Vec<f64>>,
    pub kruskal: Option<StatTestResult64>,
    pub dunn: Vec<PairwiseResult64>,
}

/// TrueSkill ratings, then a Kruskal-Wallis test and Holm-adjusted Dunn
/// comparisons over each group's rank positions.
pub fn ranking_report(rankings: &[Ranking]) -> Result<RankingReport, EvalError> {
    let orders: Vec<Vec<String>> = rankings.iter().map(|r| r.order.clone()).collect();
    let ratings = trueskill_rank(&orders, &TrueSkillConfig64::default())?;
    let groups: Vec<String> = ratings.iter().map(|r| r.group.clone()).collect();
    let positions: Vec<Vec<f64>> =
        groups.iter().map(|g| orders.iter().map(|o| (o.iter().position(|x| x == g).unwrap_or(0) + 1) as f64).collect()).collect();
    let (kruskal, dunn) =
        if orders.len() >= 2 { (Some(kruskal_wallis(&positions)?), dunn_posthoc_holm(&positions)?) } else { (None, Vec::new()) };
    Ok(RankingReport { groups, ratings, positions, kruskal, dunn })
}

impl RankingReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>8} {:>8}", "group", "mu", "sigma");
        for r in &self.ratings {
            let _ = writeln!(s, "{:<16} {:>8.3} {:>8.3}", r.group, r.mu, r.sigma);
        }
        if let Some(k) = &self.kruskal {
            let _ = writeln!(s, "\nKruskal-Wallis H = {:.4}, p = {}", k.statistic, k.p_value.map_or("-".into(), |p| format!("{p:.4}")));
        }
        for d in &self.dunn {
            let _ = writeln!(
                s,
                "  {} vs {}: z = {:.4}, p = {:.4}, p_holm = {:.4}",
                self.groups[d.a],
                self.groups[d.b],
                d.result.statistic,
                d.result.p_value.unwrap_or(f64::NAN),
                d.result.p_adjusted.unwrap_or(f64::NAN)
            );
        }
        s
    }
}

// ---- mechanism invariants ---------------------------------------------------------------------

/// Violations found per mechanism; all empty for a healthy log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// Emotion-driven replans match emotion spans of at least the trigger width.
    pub emotion_replan: Vec<String>,
    /// Long-term store never above capacity.
    pub memory_bound: Vec<String>,
    /// Accepted invitations appear in both plans.
    pub appointments: Vec<String>,
    /// Agents present at a place never exceed its capacity.
    pub occupancy: Vec<String>,
    /// One growth per agent-day with stages in order.
    pub growth: Vec<String>,
}

impl InvariantReport {
    pub fn is_clean(&self) -> bool {
        self.sections().iter().all(|(_, v)| v.is_empty())
    }

    pub fn sections(&self) -> [(&'static str, &Vec<String>); 5] {
        [
            ("emotion_replan", &self.emotion_replan),
            ("memory_bound", &self.memory_bound),
            ("appointments", &self.appointments),
            ("occupancy", &self.occupancy),
            ("growth", &self.growth),
        ]
    }
}

pub fn check_log_invariants(records: &[LogRecord]) -> Result<InvariantReport, EvalError> {
    let config = run_config(records)?;
    let mut rep = InvariantReport::default();
    emotion_replan(records, &mut rep.emotion_replan)?;
    for r in records.iter().filter(|r| r.kind == "memory") {
        let n = r.payload["store"].as_array().map_or(0, Vec::len);
        if n > config.memory_capacity {
            rep.memory_bound.push(format!("{} day {}: {n} records > {}", r.agent, r.day, config.memory_capacity));
        }
    }
    appointments(records, &mut rep.appointments)?;
    occupancy(records, &config, &mut rep.occupancy)?;
    if !config.ablation.disable_growth {
        growth(records, &mut rep.growth)?;
    } else if let Some(r) = records.iter().find(|r| r.kind == "growth") {
        rep.growth.push(format!("growth record {} in a run with growth disabled", r.seq));
    }
    Ok(rep)
}

// Recomputes spans from the chain of emotion states, independently of the
// logged trigger flag, and pairs every span with exactly one emotion replan.
fn emotion_replan(records: &[LogRecord], out: &mut Vec<String>) -> Result<(), EvalError> {
    let mut last: BTreeMap<&str, u8> = BTreeMap::new();
    let mut waiting: BTreeMap<&str, u64> = BTreeMap::new();
    for r in records {
        match r.kind.as_str() {
            "emotion" => {
                if let Some(seq) = waiting.remove(r.agent.as_str()) {
                    out.push(format!("{}: emotion span at record {seq} has no replan", r.agent));
                }
                let state: EmotionState = decode(r, &r.payload["state"])?;
                let prev = last.get(r.agent.as_str()).copied().unwrap_or(EmotionState::neutral().category);
                if r.payload["previous"].as_u64() != Some(u64::from(prev)) {
                    out.push(format!("record {}: previous category does not continue the chain", r.seq));
                }
                if (i16::from(state.category) - i16::from(prev)).abs() >= 3 {
                    waiting.insert(&r.agent, r.seq);
                }
                last.insert(&r.agent, state.category);
            }
            "replan" if r.payload["reason"] == "emotion" && waiting.remove(r.agent.as_str()).is_none() => {
                out.push(format!("record {}: emotion replan without a wide span", r.seq));
            }
            _ => {}
        }
    }
    for (agent, seq) in waiting {
        out.push(format!("{agent}: emotion span at record {seq} has no replan"));
    }
    Ok(())
}

fn appointments(records: &[LogRecord], out: &mut Vec<String>) -> Result<(), EvalError> {
    let config_agents = agents(records);
    for day in completed_days(records) {
        let mut latest: BTreeMap<u64, crate::behavior::Invitation> = BTreeMap::new();
        for r in records.iter().filter(|r| r.day == day && r.kind == "invite") {
            let ev: InviteEvent = decode(r, &r.payload)?;
            if let Some(s) = ev.superseded {
                latest.insert(s.id, s);
            }
            latest.insert(ev.invitation.id, ev.invitation);
        }
        let plans: BTreeMap<&str, DailyPlan> =
            config_agents.iter().map(|a| plan_of_record(records, a, day).map(|p| (a.as_str(), p))).collect::<Result<_, _>>()?;
        for inv in latest.values().filter(|i| i.status == InvitationStatus::Accepted) {
            for (me, other) in [(&inv.from, &inv.to), (&inv.to, &inv.from)] {
                let ok = plans.get(me.as_str()).is_some_and(|p| {
                    p.entries.iter().any(|e| {
                        e.status.is_live()
                            && e.goal == GoalTag::Appointment
                            && e.invitation == Some(inv.id)
                            && e.partner.as_deref() == Some(other.as_str())
                            && (e.start, e.end, e.place.as_str()) == (inv.start, inv.end, inv.place.as_str())
                    })
                });
                if !ok {
                    out.push(format!("day {day}: invitation {} missing from {me}'s plan", inv.id));
                }
            }
        }
    }
    Ok(())
}

// Counts agents physically at each place from action start/end records.
fn occupancy(records: &[LogRecord], config: &RunConfig, out: &mut Vec<String>) -> Result<(), EvalError> {
    let mut world: Option<WorldMap> = None;
    let mut at: BTreeMap<String, String> = BTreeMap::new();
    let load = |r: &LogRecord, key: &str| -> Result<WorldMap, EvalError> {
        let csv = r.payload[key].as_str().unwrap_or_default();
        load_world_with(csv.as_bytes(), config.grid()).map_err(|e| bad(r, format!("world: {e:?}")))
    };
    for r in records {
        match r.kind.as_str() {
            "run" => world = Some(load(r, "world")?),
            "world" => world = Some(load(r, "csv")?),
            "plan" => {
                at.remove(&r.agent);
            }
            "action" if r.payload["phase"] == "start" => {
                let place = r.payload["record"]["place"].as_str().unwrap_or_default().to_owned();
                at.insert(r.agent.clone(), place.clone());
                let here = at.values().filter(|p| **p == place).count();
                let cap = world.as_ref().and_then(|w| w.place(&place)).map(|p| p.capacity);
                match cap {
                    None => out.push(format!("record {}: unknown place {place}", r.seq)),
                    Some(c) if here as u32 > c => out.push(format!("record {}: {here} agents at {place} (capacity {c})", r.seq)),
                    _ => {}
                }
            }
            "action" if r.payload["phase"] == "end" => {
                at.remove(&r.agent);
            }
            _ => {}
        }
    }
    Ok(())
}

const STAGE_ORDER: [PromptKind; 4] =
    [PromptKind::GrowthState, PromptKind::GrowthFeature, PromptKind::GrowthConflict, PromptKind::GrowthPreference];

fn growth(records: &[LogRecord], out: &mut Vec<String>) -> Result<(), EvalError> {
    let ids = agents(records);
    let mut revision: BTreeMap<&str, u32> = BTreeMap::new();
    for r in records.iter().filter(|r| r.kind == "init") {
        let cs: CharacterStructure = decode(r, &r.payload["structure"])?;
        revision.insert(&r.agent, cs.revision);
    }
    for day in completed_days(records) {
        for id in &ids {
            let day_recs: Vec<&LogRecord> = records.iter().filter(|r| r.day == day && r.agent == *id).collect();
            let growths: Vec<&&LogRecord> = day_recs.iter().filter(|r| r.kind == "growth").collect();
            if growths.len() != 1 {
                out.push(format!("{id} day {day}: {} growth records", growths.len()));
                continue;
            }
            let g = growths[0];
            let stages: Vec<PromptKind> = day_recs
                .iter()
                .filter(|r| r.kind == "lm" && r.seq < g.seq)
                .filter_map(|r| serde_json::from_value::<PromptKind>(r.payload["kind"].clone()).ok())
                .filter(|k| STAGE_ORDER.contains(k))
                .collect();
            let applied = g.payload["applied"].as_bool() == Some(true);
            let expected: &[PromptKind] = if applied { &STAGE_ORDER } else { &STAGE_ORDER[..stages.len().min(4)] };
            if stages != expected {
                out.push(format!("{id} day {day}: stage order {stages:?}"));
            }
            if applied {
                let cs: CharacterStructure = decode(g, &g.payload["structure"])?;
                let prev = revision.get(id.as_str()).copied().unwrap_or(0);
                if cs.revision != prev + 1 {
                    out.push(format!("{id} day {day}: revision {prev} -> {}", cs.revision));
                }
                revision.insert(id, cs.revision);
            }
        }
    }
    Ok(())
}

/// The `structure` of every agent at the end of the log, folded from `init`
/// and applied `growth` records.
pub fn final_structures(records: &[LogRecord]) -> Result<BTreeMap<AgentId, CharacterStructure>, EvalError> {
    let mut out = BTreeMap::new();
    for r in records {
        let take = r.kind == "init" || (r.kind == "growth" && r.payload["applied"].as_bool() == Some(true));
        if take {
            out.insert(r.agent.clone(), decode(r, &r.payload["structure"])?);
        }
    }
    Ok(out)
}

/// The structure `agent` ended each completed day with, as the kernel
/// assessed it.
pub fn day_structures(records: &[LogRecord], agent: &str) -> Result<Vec<(u32, CharacterStructure)>, EvalError> {
    let mut current: Option<CharacterStructure> = None;
    let mut out = Vec::new();
    for r in records {
        match r.kind.as_str() {
            "init" if r.agent == agent => current = Some(decode(r, &r.payload["structure"])?),
            "growth" if r.agent == agent && r.payload["applied"].as_bool() == Some(true) => {
                current = Some(decode(r, &r.payload["structure"])?)
            }
            "day_end" => {
                if let Some(cs) = &current {
                    out.push((r.day, cs.clone()));
                }
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Administers the questionnaire again over a log's end-of-day structures.
pub fn reassess_bfi(records: &[LogRecord], client: &LmClient) -> Result<BTreeMap<AgentId, Vec<BfiScores>>, EvalError> {
    let simple = run_config(records)?.ablation.simple_character;
    let mut out = BTreeMap::new();
    for id in agents(records) {
        let days = day_structures(records, &id)?;
        let Some((_, first)) = days.first() else { continue };
        let name = first.name().to_owned();
        let texts: Vec<(u32, String)> = days.iter().map(|(d, cs)| (*d, if simple { cs.persona() } else { cs.full_text() })).collect();
        let sheets = administer_bfi(client, &id, &name, &texts)?;
        out.insert(id, sheets.iter().map(score_bfi).collect());
    }
    Ok(out)
}

/// Initial structures from the `init` records.
pub fn initial_structures(records: &[LogRecord]) -> Result<BTreeMap<AgentId, CharacterStructure>, EvalError> {
    records.iter().filter(|r| r.kind == "init").map(|r| Ok((r.agent.clone(), decode(r, &r.payload["structure"])?))).collect()
}

/// Whether any logged emotion pair should have fired a replan.
pub fn any_wide_span(records: &[LogRecord], agent: &str) -> bool {
    let mut prev = EmotionState::neutral();
    for r in records.iter().filter(|r| r.kind == "emotion" && r.agent == agent) {
        let Ok(s) = serde_json::from_value::<EmotionState>(r.payload["state"].clone()) else { continue };
        if check_replan_trigger(&prev, &s) {
            return true;
        }
        prev = s;
    }
    false
}

/// Entries that were revised in place by any mechanism.
pub fn replanned_entries(plan: &DailyPlan) -> usize {
    plan.entries.iter().filter(|e| e.status == EntryStatus::Replanned).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::{EventLog, Kernel};

    fn run(days: u32, ablate: &str) -> Vec<LogRecord> {
        let mut c = RunConfig::default_scenario();
        c.days = days;
        c.ablation = crate::simkernel::Ablation::parse(ablate).unwrap();
        let mut k = Kernel::new(c, EventLog::in_memory()).unwrap();
        k.run().unwrap();
        k.log().records().to_vec()
    }

    #[test]
    fn goal_counts_match_plan_entries() {
        let recs = run(1, "");
        for a in agents(&recs) {
            let plan = plan_of_record(&recs, &a, 1).unwrap();
            let v = goal_counts(&recs, &a, 1).unwrap();
            assert_eq!(v.counts().len(), 10);
            let total: f64 = v.counts().iter().sum();
            assert_eq!(total as usize, plan.entries.iter().filter(|e| e.status.is_live()).count());
        }
        assert!(matches!(goal_counts(&recs, "nobody", 1), Err(EvalError::MissingDay { .. })));
    }

    #[test]
    fn reassessment_reproduces_logged_scores() {
        for ablate in ["", "simple-character"] {
            let recs = run(2, ablate);
            let client = run_config(&recs).unwrap().client().unwrap();
            let again = reassess_bfi(&recs, &client).unwrap();
            assert_eq!(again.len(), 3);
            for (id, scores) in again {
                assert_eq!(scores, bfi_series(&recs, &id).unwrap());
            }
        }
    }

    #[test]
    fn two_day_metrics_and_invariants() {
        let recs = run(2, "");
        let rep = metrics_report(&recs).unwrap();
        assert_eq!(rep.days, [1, 2]);
        for a in &rep.agents {
            assert_eq!(a.bfi.len(), 2);
            assert!(a.delta_overall.is_some() && a.activity.is_some());
            assert_eq!(a.distances.len(), 2);
        }
        assert!(rep.table().contains("activity"));
        let inv = check_log_invariants(&recs).unwrap();
        assert!(inv.is_clean(), "{inv:?}");
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let recs = run(2, "growth,insight,feelings");
        let rep = metrics_report(&recs).unwrap();
        let c = compare(&rep, &rep).unwrap();
        assert!(c.rows.iter().all(|r| r.delta_diff == Some(0.0) && r.activity_diff == Some(0.0)));
        let mut other = rep.clone();
        other.agents.pop();
        assert!(matches!(compare(&rep, &other), Err(EvalError::AgentMismatch { .. })));
    }

    #[test]
    fn rankings_csv() {
        let csv = "evaluator_id,g1,g2,g3\ne1,full,plain,simple\ne2,full,simple,plain\ne3,full,plain,simple\n";
        let r = read_rankings(csv.as_bytes()).unwrap();
        assert_eq!(r.len(), 3);
        let rep = ranking_report(&r).unwrap();
        let best = rep.ratings.iter().max_by(|a, b| a.mu.total_cmp(&b.mu)).unwrap();
        assert_eq!(best.group, "full");
        assert!(rep.kruskal.is_some());
        assert_eq!(rep.dunn.len(), 3);
        assert!(matches!(read_rankings("e1,only\n".as_bytes()), Err(EvalError::Ratings { line: 1, .. })));
    }

    #[test]
    fn tampered_logs_are_flagged() {
        let mut recs = run(1, "");
        let i = recs.iter().position(|r| r.kind == "growth").unwrap();
        recs.remove(i);
        let rep = check_log_invariants(&recs).unwrap();
        assert!(!rep.growth.is_empty());

        let mut recs = run(1, "");
        let i = recs.iter().position(|r| r.kind == "memory").unwrap();
        let store = recs[i].payload["store"].as_array().cloned().unwrap_or_default();
        let big: Vec<Value> = std::iter::repeat_n(store.first().cloned().unwrap_or(Value::Null), 31).collect();
        recs[i].payload["store"] = Value::Array(big);
        assert!(!check_log_invariants(&recs).unwrap().memory_bound.is_empty());
    }
}
