//! Daily planning, appointment negotiation, action execution and dialogue.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::clock::{format_hhmm, parse_hhmm, DayWindow, Minute};
use crate::environment::{ClaimResult, LedgerError, OccupancyLedger, WindowCard, WorldMap};
use crate::goal::GoalTag;
use crate::lmclient::{Context, LmClient, PromptKind, PromptRequest};

pub type AgentId = String;

pub const MIN_ENTRIES: usize = 5;
pub const MAX_ENTRIES: usize = 9;

mod hhmm {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &u32, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::clock::format_hhmm(*m))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
        let s = String::deserialize(d)?;
        crate::clock::parse_hhmm(&s).ok_or_else(|| serde::de::Error::custom(format!("bad time {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Pending,
    Active,
    Done,
    Cancelled,
    Replanned,
}

impl EntryStatus {
    /// Whether the entry still belongs to the schedule.
    pub fn is_live(self) -> bool {
        matches!(self, EntryStatus::Pending | EntryStatus::Active | EntryStatus::Done)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    #[serde(with = "hhmm")]
    pub start: Minute,
    #[serde(with = "hhmm")]
    pub end: Minute,
    pub goal: GoalTag,
    pub place: String,
    pub description: String,
    pub motivation: String,
    pub status: EntryStatus,
    /// Confirmed appointment partner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invitation: Option<u64>,
    /// Partner proposed by the planner, before negotiation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_partner: Option<AgentId>,
}

impl PlanEntry {
    pub fn overlaps(&self, start: Minute, end: Minute) -> bool {
        self.start < end && start < self.end
    }

    fn to_prompt(&self) -> Value {
        let mut v = json!({
            "start": format_hhmm(self.start),
            "end": format_hhmm(self.end),
            "goal": self.goal.name(),
            "place": self.place,
            "description": self.description,
            "motivation": self.motivation,
        });
        if let Some(p) = self.partner.as_ref().or(self.proposed_partner.as_ref()) {
            v["partner"] = json!(p);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyPlan {
    pub agent: AgentId,
    pub day: u32,
    pub entries: Vec<PlanEntry>,
}

impl DailyPlan {
    pub fn live(&self) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(|e| e.status.is_live())
    }

    /// Per-goal counts of live entries on the canonical axis.
    pub fn goal_counts(&self) -> [u32; 10] {
        let mut c = [0; 10];
        for e in self.live() {
            c[e.goal.axis()] += 1;
        }
        c
    }

    fn sort(&mut self) {
        self.entries.sort_by_key(|e| (e.start, !e.status.is_live()));
    }
}

fn window_card(w: &DayWindow, world: &WorldMap) -> WindowCard {
    WindowCard { start: format_hhmm(w.start), end: format_hhmm(w.end), tick: w.tick_minutes, speed: world.grid.move_speed }
}

/// Why `e` cannot follow `prev` (or start the day from `home`), if anything.
fn placement_problem(e: &PlanEntry, prev: Option<&PlanEntry>, world: &WorldMap, home: &str, w: &DayWindow) -> Option<String> {
    if e.start >= e.end {
        return Some("empty time slot".into());
    }
    if !w.contains(e.start, e.end) {
        return Some("outside the day window".into());
    }
    let Some(place) = world.place(&e.place) else { return Some(format!("unknown place {}", e.place)) };
    if !(place.affords(e.goal) || (e.goal == GoalTag::Rest && e.place == home)) {
        return Some(format!("{} does not afford {}", e.place, e.goal));
    }
    if !place.is_open(e.start, e.end) {
        return Some(format!("{} is closed at that time", e.place));
    }
    let (from, ready) = match prev {
        Some(p) => (p.place.as_str(), p.end),
        None => (home, w.start),
    };
    let travel = world.travel_minutes(from, &e.place).unwrap_or(u32::MAX / 2);
    if ready + travel > e.start {
        return Some(format!("cannot reach {} in time", e.place));
    }
    None
}

/// Structural problems with the live entries of a plan; empty iff sound.
pub fn check_plan(plan: &DailyPlan, world: &WorldMap, home: &str, w: &DayWindow) -> Vec<String> {
    let mut out = Vec::new();
    let mut prev: Option<&PlanEntry> = None;
    for (i, e) in plan.live().enumerate() {
        if let Some(p) = prev {
            if e.start < p.end {
                out.push(format!("entry {i} overlaps the previous entry"));
                prev = Some(e);
                continue;
            }
        }
        if let Some(msg) = placement_problem(e, prev, world, home, w) {
            out.push(format!("entry {i}: {msg}"));
        }
        prev = Some(e);
    }
    out
}

/// What a planner sees about an agent.
#[derive(Debug, Clone)]
pub struct PlanInputs<'a> {
    pub agent: &'a str,
    pub name: &'a str,
    /// Summary with the preference dimension in full, or a persona paragraph.
    pub character: &'a str,
    pub aims: &'a str,
    pub home: &'a str,
    pub memories: &'a str,
    pub insight: &'a str,
    /// (id, name) of everyone else.
    pub others: &'a [(AgentId, String)],
    pub day: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan: DailyPlan,
    /// Proposed entries that were discarded, with reasons.
    pub dropped: Vec<String>,
    /// Set when a fallback replaced the backend's plan.
    pub degraded: Option<String>,
}

fn parse_entry(v: &Value) -> Result<PlanEntry, String> {
    let time = |k: &str| v.get(k).and_then(Value::as_str).and_then(parse_hhmm).ok_or(format!("bad {k}"));
    let text = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_owned();
    Ok(PlanEntry {
        start: time("start")?,
        end: time("end")?,
        goal: text("goal").parse().map_err(|e| format!("{e}"))?,
        place: text("place"),
        description: text("description"),
        motivation: text("motivation"),
        status: EntryStatus::Pending,
        partner: None,
        invitation: None,
        proposed_partner: v.get("partner").and_then(Value::as_str).map(str::to_owned),
    })
}

/// Keeps the longest sound prefix-compatible subset of proposed entries.
fn normalize(raw: &[Value], inputs: &PlanInputs<'_>, world: &WorldMap, w: &DayWindow) -> (Vec<PlanEntry>, Vec<String>) {
    let mut parsed: Vec<PlanEntry> = Vec::new();
    let mut dropped = Vec::new();
    for (i, v) in raw.iter().enumerate() {
        match parse_entry(v) {
            Ok(mut e) => {
                if e.goal == GoalTag::Appointment {
                    let known = e.proposed_partner.as_ref().is_some_and(|p| inputs.others.iter().any(|(id, _)| id == p));
                    if !known {
                        e.proposed_partner = None;
                    }
                } else {
                    e.proposed_partner = None;
                }
                parsed.push(e);
            }
            Err(m) => dropped.push(format!("entry {i}: {m}")),
        }
    }
    parsed.sort_by_key(|e| e.start);
    let mut kept: Vec<PlanEntry> = Vec::new();
    for e in parsed {
        if kept.len() == MAX_ENTRIES {
            dropped.push(format!("{} {}: more than {MAX_ENTRIES} entries", format_hhmm(e.start), e.goal));
            continue;
        }
        let prev = kept.last();
        if prev.is_some_and(|p| e.start < p.end) {
            dropped.push(format!("{} {}: overlaps", format_hhmm(e.start), e.goal));
            continue;
        }
        match placement_problem(&e, prev, world, inputs.home, w) {
            None => kept.push(e),
            Some(m) => dropped.push(format!("{} {}: {m}", format_hhmm(e.start), e.goal)),
        }
    }
    (kept, dropped)
}

fn rest_entry(start: Minute, end: Minute, home: &str) -> PlanEntry {
    PlanEntry {
        start,
        end,
        goal: GoalTag::Rest,
        place: home.to_owned(),
        description: "Rest in my room".into(),
        motivation: "Because I need to recharge.".into(),
        status: EntryStatus::Pending,
        partner: None,
        invitation: None,
        proposed_partner: None,
    }
}

/// Adds one-hour Rest blocks at home into free gaps until `MIN_ENTRIES` is reached.
fn top_up(entries: &mut Vec<PlanEntry>, world: &WorldMap, home: &str, w: &DayWindow) {
    let mut t = w.start;
    while entries.len() < MIN_ENTRIES && t + 60 <= w.end {
        let cand = rest_entry(t, t + 60, home);
        let mut trial = entries.clone();
        trial.push(cand);
        trial.sort_by_key(|e| e.start);
        let probe = DailyPlan { agent: String::new(), day: 0, entries: trial.clone() };
        if check_plan(&probe, world, home, w).is_empty() {
            *entries = trial;
        }
        t += w.tick_minutes * 4;
    }
}

fn fallback_plan(inputs: &PlanInputs<'_>, previous: Option<&DailyPlan>, world: &WorldMap, w: &DayWindow) -> Vec<PlanEntry> {
    if let Some(prev) = previous {
        let mut entries: Vec<PlanEntry> = prev
            .live()
            .cloned()
            .map(|mut e| {
                e.status = EntryStatus::Pending;
                e.partner = None;
                e.invitation = None;
                e.proposed_partner = None;
                if e.goal == GoalTag::Appointment {
                    e.goal = GoalTag::Social;
                }
                e
            })
            .collect();
        let probe = DailyPlan { agent: String::new(), day: 0, entries: entries.clone() };
        if check_plan(&probe, world, inputs.home, w).is_empty() && entries.len() >= MIN_ENTRIES {
            entries.sort_by_key(|e| e.start);
            return entries;
        }
    }
    let mut entries = Vec::new();
    top_up(&mut entries, world, inputs.home, w);
    entries
}

/// Asks for a day plan and repairs it into a sound one.
pub fn generate_daily_plan(
    inputs: &PlanInputs<'_>,
    world: &WorldMap,
    w: &DayWindow,
    client: &LmClient,
    previous: Option<&DailyPlan>,
) -> PlanOutcome {
    let others: Vec<Value> = inputs.others.iter().map(|(id, name)| json!({"id": id, "name": name})).collect();
    let ctx = Context::new()
        .with("name", inputs.name)
        .with("character", inputs.character)
        .with("aims", inputs.aims)
        .with("home", inputs.home)
        .with("memories", inputs.memories)
        .with("insight", inputs.insight)
        .with("others", others)
        .with("places", serde_json::to_value(world.cards()).expect("cards serialize"))
        .with("window", serde_json::to_value(window_card(w, world)).expect("window serializes"))
        .with("day", inputs.day);
    let req = PromptRequest::new(PromptKind::PlanDay, inputs.agent, ctx).at(inputs.day, 0);
    let mk = |entries| DailyPlan { agent: inputs.agent.to_owned(), day: inputs.day, entries };
    match client.complete(&req) {
        Ok(resp) => {
            let raw = resp.payload["entries"].as_array().cloned().unwrap_or_default();
            let (mut entries, dropped) = normalize(&raw, inputs, world, w);
            let degraded = if entries.len() < MIN_ENTRIES {
                top_up(&mut entries, world, inputs.home, w);
                Some(format!("plan topped up with rest blocks to {} entries", entries.len()))
            } else {
                None
            };
            PlanOutcome { plan: mk(entries), dropped, degraded }
        }
        Err(e) => PlanOutcome {
            plan: mk(fallback_plan(inputs, previous, world, w)),
            dropped: Vec::new(),
            degraded: Some(format!("plan fallback: {e}")),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvitationStatus {
    Pending,
    Accepted,
    Rejected,
    Superseded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invitation {
    pub id: u64,
    pub from: AgentId,
    pub to: AgentId,
    #[serde(with = "hhmm")]
    pub start: Minute,
    #[serde(with = "hhmm")]
    pub end: Minute,
    pub place: String,
    pub topic: String,
    pub message: String,
    pub status: InvitationStatus,
    pub reason: String,
    pub benefit: f64,
}

/// What negotiation needs to know about an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBrief {
    pub id: AgentId,
    pub name: String,
    pub character: String,
    pub traits: String,
    pub home: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvitationResponse {
    pub accept: bool,
    pub reason: String,
    pub benefit: f64,
    pub degraded: bool,
}

/// The invitee's decision.
pub fn respond_invitation(
    invitee: &AgentBrief,
    inviter: &AgentBrief,
    inv: &Invitation,
    plan: &DailyPlan,
    w: &DayWindow,
    client: &LmClient,
) -> InvitationResponse {
    let reject = |reason: &str, degraded| InvitationResponse { accept: false, reason: reason.into(), benefit: 0.0, degraded };
    if inv.start >= inv.end || !w.contains(inv.start, inv.end) {
        return reject("out of hours", false);
    }
    let existing = plan.live().find(|e| e.goal == GoalTag::Appointment && e.partner.is_some() && e.overlaps(inv.start, inv.end));
    let ctx = Context::new()
        .with("name", invitee.name.as_str())
        .with("character", invitee.character.as_str())
        .with("inviter", inviter.name.as_str())
        .with("inviter_traits", inviter.traits.as_str())
        .with("place", inv.place.as_str())
        .with("start", format_hhmm(inv.start))
        .with("end", format_hhmm(inv.end))
        .with("topic", inv.topic.as_str())
        .with("existing", existing.map(|e| e.description.as_str()).unwrap_or(""))
        .with("existing_with", existing.and_then(|e| e.partner.as_deref()).unwrap_or(""));
    let req = PromptRequest::new(PromptKind::InviteDecide, &invitee.id, ctx).at(plan.day, 0);
    match client.complete(&req) {
        Ok(r) => InvitationResponse {
            accept: r.payload["accept"].as_bool().unwrap_or(false),
            reason: r.str("reason").to_owned(),
            benefit: r.payload["benefit_new"].as_f64().unwrap_or(0.0),
            degraded: false,
        },
        Err(_) => reject("unavailable", true),
    }
}

/// One negotiation, with both parties' plans afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InviteEvent {
    pub invitation: Invitation,
    /// An earlier accepted invitation this one displaced.
    pub superseded: Option<Invitation>,
    /// (agent, entry) pairs taken out of a plan by this negotiation.
    pub removed: Vec<(AgentId, PlanEntry)>,
    pub plans: Vec<DailyPlan>,
}

fn remove_where(plan: &mut DailyPlan, mut pred: impl FnMut(&PlanEntry) -> bool, out: &mut Vec<(AgentId, PlanEntry)>) {
    for e in plan.entries.iter_mut().filter(|e| e.status.is_live()) {
        if pred(e) {
            e.status = EntryStatus::Replanned;
            out.push((plan.agent.clone(), e.clone()));
        }
    }
}

/// Inserts the appointment into a copy of `plan`, dropping entries it
/// displaces. Fails if that would displace another confirmed appointment.
fn fit_appointment(
    plan: &DailyPlan,
    entry: PlanEntry,
    world: &WorldMap,
    home: &str,
    w: &DayWindow,
    keep_invitation: Option<u64>,
) -> Result<(DailyPlan, Vec<(AgentId, PlanEntry)>), String> {
    let mut p = plan.clone();
    let mut removed = Vec::new();
    let protected = |e: &PlanEntry| e.invitation.is_some() && e.partner.is_some() && e.invitation != keep_invitation;
    if p.live().any(|e| e.overlaps(entry.start, entry.end) && protected(e)) {
        return Err("schedule conflict".into());
    }
    remove_where(&mut p, |e| e.overlaps(entry.start, entry.end), &mut removed);
    p.entries.push(entry);
    p.sort();
    // drop neighbours that can no longer be reached in time
    loop {
        let live: Vec<usize> = (0..p.entries.len()).filter(|&i| p.entries[i].status.is_live()).collect();
        let mut bad = None;
        for (k, &i) in live.iter().enumerate() {
            let prev = k.checked_sub(1).map(|j| &p.entries[live[j]]);
            if placement_problem(&p.entries[i], prev, world, home, w).is_some() {
                // blame whichever of the pair is not the new appointment
                let culprit = if p.entries[i].invitation.is_some() && k > 0 { live[k - 1] } else { i };
                bad = Some(culprit);
                break;
            }
        }
        match bad {
            None => break,
            Some(i) if protected(&p.entries[i]) || p.entries[i].invitation.is_some() => {
                return Err("schedule conflict".into());
            }
            Some(i) => {
                p.entries[i].status = EntryStatus::Replanned;
                removed.push((p.agent.clone(), p.entries[i].clone()));
            }
        }
    }
    Ok((p, removed))
}

/// Sends an invitation for every proposed appointment, in agent-id order,
/// and rewrites both parties' plans for each acceptance.
#[allow(clippy::too_many_arguments)]
pub fn post_process_appointments(
    plans: &mut BTreeMap<AgentId, DailyPlan>,
    briefs: &BTreeMap<AgentId, AgentBrief>,
    world: &WorldMap,
    w: &DayWindow,
    client: &LmClient,
    next_id: &mut u64,
) -> Vec<InviteEvent> {
    let mut events = Vec::new();
    let mut accepted: BTreeMap<u64, Invitation> = BTreeMap::new();
    loop {
        let next = plans.iter().find_map(|(id, p)| {
            p.entries
                .iter()
                .position(|e| {
                    e.status.is_live() && e.goal == GoalTag::Appointment && e.proposed_partner.is_some() && e.invitation.is_none()
                })
                .map(|i| (id.clone(), i))
        });
        let Some((from, idx)) = next else { break };
        let entry = plans[&from].entries[idx].clone();
        let to = entry.proposed_partner.clone().expect("filtered");
        let id = *next_id;
        *next_id += 1;
        plans.get_mut(&from).expect("present").entries[idx].invitation = Some(id);

        let (Some(inviter), Some(invitee)) = (briefs.get(&from), briefs.get(&to)) else { continue };
        let ctx = Context::new()
            .with("name", inviter.name.as_str())
            .with("partner", invitee.name.as_str())
            .with("partner_traits", invitee.traits.as_str())
            .with("interests", inviter.character.as_str())
            .with("place", entry.place.as_str())
            .with("start", format_hhmm(entry.start));
        let day = plans[&from].day;
        let (topic, message) = match client.complete(&PromptRequest::new(PromptKind::InviteSend, &from, ctx).at(day, 0)) {
            Ok(r) => (r.str("topic").to_owned(), r.str("message").to_owned()),
            Err(_) => ("catching up".to_owned(), format!("Would you like to meet at {}?", entry.place)),
        };
        let mut inv = Invitation {
            id,
            from: from.clone(),
            to: to.clone(),
            start: entry.start,
            end: entry.end,
            place: entry.place.clone(),
            topic,
            message,
            status: InvitationStatus::Pending,
            reason: String::new(),
            benefit: 0.0,
        };

        let venue_ok = world.place(&entry.place).is_some_and(|p| p.capacity >= 2);
        let resp = if venue_ok {
            respond_invitation(invitee, inviter, &inv, &plans[&to], w, client)
        } else {
            InvitationResponse { accept: false, reason: "venue".into(), benefit: 0.0, degraded: false }
        };
        inv.reason = resp.reason.clone();
        inv.benefit = resp.benefit;

        let mut removed = Vec::new();
        let mut superseded = None;
        let mut outcome = Err(resp.reason.clone());
        if resp.accept {
            let displaced = plans[&to]
                .live()
                .find(|e| e.invitation.is_some() && e.partner.is_some() && e.overlaps(inv.start, inv.end))
                .and_then(|e| e.invitation);
            let new_entry = PlanEntry {
                description: format!("Meet {} at {}: {}", inviter.name, entry.place, inv.topic),
                motivation: resp.reason.clone(),
                partner: Some(from.clone()),
                invitation: Some(id),
                proposed_partner: None,
                ..entry.clone()
            };
            outcome = fit_appointment(&plans[&to], new_entry, world, &invitee.home, w, displaced).map(|r| (r, displaced));
        }
        match outcome {
            Ok(((new_plan, mut rm), displaced)) => {
                if let Some(old_id) = displaced {
                    if let Some(mut old) = accepted.remove(&old_id) {
                        old.status = InvitationStatus::Superseded;
                        let other = if old.from == to { old.to.clone() } else { old.from.clone() };
                        if let Some(p) = plans.get_mut(&other) {
                            remove_where(p, |e| e.invitation == Some(old_id), &mut rm);
                        }
                        superseded = Some(old);
                    }
                }
                plans.insert(to.clone(), new_plan);
                removed.append(&mut rm);
                let e = &mut plans.get_mut(&from).expect("present").entries[idx];
                e.partner = Some(to.clone());
                e.description = format!("Meet {} at {}: {}", invitee.name, entry.place, inv.topic);
                inv.status = InvitationStatus::Accepted;
                accepted.insert(id, inv.clone());
            }
            Err(reason) => {
                inv.status = InvitationStatus::Rejected;
                if inv.reason.is_empty() || resp.accept {
                    inv.reason = reason;
                }
            }
        }
        let mut touched = vec![from.clone(), to.clone()];
        if let Some(s) = &superseded {
            touched.extend([s.from.clone(), s.to.clone()]);
        }
        touched.sort();
        touched.dedup();
        events.push(InviteEvent {
            invitation: inv,
            superseded,
            removed,
            plans: touched.iter().filter_map(|a| plans.get(a).cloned()).collect(),
        });
    }
    events
}

/// How an entry's start went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub entry: PlanEntry,
    pub description: String,
    pub place: String,
    pub claim: ClaimResult,
    pub companions: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub old: PlanEntry,
    pub new: Option<PlanEntry>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub started: Option<ActionRecord>,
    pub revisions: Vec<Revision>,
    pub cancelled: Option<PlanEntry>,
    /// Index of the entry that ended up active, if any.
    pub index: Option<usize>,
}

/// Who is acting.
#[derive(Debug, Clone, Copy)]
pub struct Actor<'a> {
    pub id: &'a str,
    pub name: &'a str,
    pub character: &'a str,
    pub home: &'a str,
}

const MAX_REVISIONS: usize = 3;

fn prev_live(plan: &DailyPlan, idx: usize) -> Option<&PlanEntry> {
    plan.entries[..idx].iter().rev().find(|e| e.status.is_live())
}

fn next_live(plan: &DailyPlan, idx: usize) -> Option<&PlanEntry> {
    plan.entries[idx + 1..].iter().find(|e| e.status.is_live())
}

/// Starts entry `idx`: claims a spot (with the partner's for appointments),
/// revising the entry through the planner while the venue is full.
#[allow(clippy::too_many_arguments)]
pub fn execute_action(
    actor: Actor<'_>,
    plan: &mut DailyPlan,
    idx: usize,
    world: &WorldMap,
    ledger: &mut OccupancyLedger,
    w: &DayWindow,
    client: &LmClient,
    tick: u32,
) -> ActionOutcome {
    let mut out = ActionOutcome { started: None, revisions: Vec::new(), cancelled: None, index: None };
    let mut idx = idx;
    let mut exclude: Vec<String> = Vec::new();
    loop {
        let e = plan.entries[idx].clone();
        let companions: Vec<&str> = if e.goal == GoalTag::Appointment { e.partner.as_deref().into_iter().collect() } else { Vec::new() };
        let claim = match ledger.claim_spot(&e.place, actor.id, &companions) {
            Err(LedgerError::AlreadyHolding(_)) => {
                ledger.release_spot(actor.id);
                ledger.claim_spot(&e.place, actor.id, &companions)
            }
            other => other,
        };
        match claim {
            Ok(c @ (ClaimResult::Claimed | ClaimResult::Joined)) => {
                let partner_name = e.partner.clone().unwrap_or_default();
                let ctx = Context::new()
                    .with("name", actor.name)
                    .with("goal", e.goal.name())
                    .with("place", e.place.as_str())
                    .with("plan", e.description.as_str())
                    .with("partner", partner_name);
                let req = PromptRequest::new(PromptKind::ActionDescribe, actor.id, ctx).at(plan.day, tick);
                let description = client
                    .complete(&req)
                    .map(|r| r.str("description").to_owned())
                    .unwrap_or_else(|_| format!("{} does this at {}: {}.", actor.name, e.place, e.description));
                plan.entries[idx].status = EntryStatus::Active;
                out.started = Some(ActionRecord {
                    entry: plan.entries[idx].clone(),
                    description,
                    place: e.place.clone(),
                    claim: c,
                    companions: if c == ClaimResult::Claimed { companions.iter().map(|s| s.to_string()).collect() } else { Vec::new() },
                });
                out.index = Some(idx);
                return out;
            }
            Ok(ClaimResult::Occupied) | Err(_) => {
                exclude.push(e.place.clone());
                let replacement = if out.revisions.len() < MAX_REVISIONS {
                    revise_for_occupancy(actor, plan, idx, &exclude, world, w, client, tick)
                } else {
                    None
                };
                match replacement {
                    Some(new) => {
                        plan.entries[idx].status = EntryStatus::Replanned;
                        out.revisions.push(Revision { old: e, new: Some(new.clone()), reason: "occupied".into() });
                        plan.entries.insert(idx + 1, new);
                        idx += 1;
                    }
                    None => {
                        plan.entries[idx].status = EntryStatus::Cancelled;
                        out.revisions.push(Revision { old: e.clone(), new: None, reason: "occupied".into() });
                        out.cancelled = Some(plan.entries[idx].clone());
                        return out;
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn revise_for_occupancy(
    actor: Actor<'_>,
    plan: &DailyPlan,
    idx: usize,
    exclude: &[String],
    world: &WorldMap,
    w: &DayWindow,
    client: &LmClient,
    tick: u32,
) -> Option<PlanEntry> {
    let e = &plan.entries[idx];
    let ctx = Context::new()
        .with("name", actor.name)
        .with("character", actor.character)
        .with("home", actor.home)
        .with("places", serde_json::to_value(world.cards()).expect("cards serialize"))
        .with("window", serde_json::to_value(window_card(w, world)).expect("window serializes"))
        .with("remaining", vec![e.to_prompt()])
        .with("reason", "occupied")
        .with("exclude", exclude.to_vec());
    let resp = client.complete(&PromptRequest::new(PromptKind::PlanRevise, actor.id, ctx).at(plan.day, tick)).ok()?;
    let cand = parse_entry(resp.payload["entries"].as_array()?.first()?).ok()?;
    let cand = PlanEntry { start: e.start, end: e.end, partner: None, invitation: None, proposed_partner: None, ..cand };
    if exclude.contains(&cand.place) {
        return None;
    }
    if placement_problem(&cand, prev_live(plan, idx), world, actor.home, w).is_some() {
        return None;
    }
    // the following entry must stay reachable
    match next_live(plan, idx) {
        Some(next) if placement_problem(next, Some(&cand), world, actor.home, w).is_some() => None,
        _ => Some(cand),
    }
}

/// Replaces the pending entries after `now` with a revised tail, if the
/// result is still a sound plan.
#[allow(clippy::too_many_arguments)]
pub fn revise_tail(
    actor: Actor<'_>,
    plan: &mut DailyPlan,
    now: Minute,
    emotion: (u8, u8),
    world: &WorldMap,
    w: &DayWindow,
    client: &LmClient,
    tick: u32,
) -> Result<Vec<Revision>, String> {
    let pending: Vec<usize> =
        (0..plan.entries.len()).filter(|&i| plan.entries[i].status == EntryStatus::Pending && plan.entries[i].start >= now).collect();
    if pending.is_empty() {
        return Ok(Vec::new());
    }
    let remaining: Vec<Value> = pending.iter().map(|&i| plan.entries[i].to_prompt()).collect();
    let ctx = Context::new()
        .with("name", actor.name)
        .with("character", actor.character)
        .with("home", actor.home)
        .with("places", serde_json::to_value(world.cards()).expect("cards serialize"))
        .with("window", serde_json::to_value(window_card(w, world)).expect("window serializes"))
        .with("remaining", remaining)
        .with("reason", "emotion")
        .with("emotion", json!({"from": emotion.0, "to": emotion.1}))
        .with("exclude", Vec::<String>::new());
    let resp = client
        .complete(&PromptRequest::new(PromptKind::PlanRevise, actor.id, ctx).at(plan.day, tick))
        .map_err(|e| format!("revision unavailable: {e}"))?;
    let mut tail = Vec::new();
    for v in resp.payload["entries"].as_array().into_iter().flatten() {
        let mut e = parse_entry(v)?;
        if e.start < now {
            return Err("revision touches the past".into());
        }
        // appointments survive only unchanged
        let original = pending.iter().map(|&i| &plan.entries[i]).find(|o| o.start == e.start && o.goal == e.goal && o.place == e.place);
        match original {
            Some(o) if o.goal == GoalTag::Appointment => e = o.clone(),
            _ if e.goal == GoalTag::Appointment => return Err("revision invents an appointment".into()),
            _ => e.proposed_partner = None,
        }
        tail.push(e);
    }
    let mut trial = plan.clone();
    let mut revisions = Vec::new();
    for &i in &pending {
        let old = &trial.entries[i];
        if !tail.contains(old) {
            if old.partner.is_some() {
                return Err("revision drops a confirmed appointment".into());
            }
            revisions.push(Revision { old: old.clone(), new: None, reason: "emotion".into() });
        }
    }
    let mut added = Vec::new();
    for e in &tail {
        if !pending.iter().any(|&i| &trial.entries[i] == e) {
            added.push(e.clone());
        }
    }
    for r in &revisions {
        if let Some(x) = trial.entries.iter_mut().find(|x| **x == r.old && x.status == EntryStatus::Pending) {
            x.status = EntryStatus::Replanned;
        }
    }
    trial.entries.extend(added.iter().cloned());
    trial.sort();
    let problems = check_plan(&trial, world, actor.home, w);
    if !problems.is_empty() {
        return Err(format!("revised plan unsound: {}", problems.join("; ")));
    }
    // pair removed entries with the additions that took their slot
    for r in revisions.iter_mut() {
        r.new = added.iter().find(|a| a.overlaps(r.old.start, r.old.end)).cloned();
    }
    *plan = trial;
    Ok(revisions)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogRecord {
    pub day: u32,
    pub topic: String,
    pub summary: String,
}

/// Per-partner conversation summaries, append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogMemory {
    pub by_partner: BTreeMap<AgentId, Vec<DialogRecord>>,
}

impl DialogMemory {
    pub fn with(&self, partner: &str) -> &[DialogRecord] {
        self.by_partner.get(partner).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn push(&mut self, partner: &str, rec: DialogRecord) {
        self.by_partner.entry(partner.to_owned()).or_default().push(rec);
    }

    pub fn len(&self) -> usize {
        self.by_partner.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: AgentId,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub participants: [AgentId; 2],
    pub topic: String,
    pub turns: Vec<Turn>,
    pub start_tick: u32,
    pub end_tick: u32,
    pub truncated: bool,
}

/// The part of a topic after its last `": "`, the thread a follow-up refers to.
pub fn topic_core(topic: &str) -> &str {
    topic.rsplit_once("\": ").map(|(_, c)| c).or_else(|| topic.rsplit_once(": ").map(|(_, c)| c)).unwrap_or(topic)
}

/// Whether two agents start talking this tick.
pub fn maybe_start_conversation<R: Rng>(distance: u32, radius: u32, base: f64, factor: f64, forced: bool, rng: &mut R) -> bool {
    if distance > radius {
        return false;
    }
    // draw regardless so the stream does not depend on the forced flag
    let u: f64 = rng.random();
    forced || u < (base * factor).clamp(0.0, 1.0)
}

/// A participant as dialogue prompts see it.
#[derive(Debug, Clone, Copy)]
pub struct Speaker<'a> {
    pub id: &'a str,
    pub name: &'a str,
    pub character: &'a str,
    pub traits: &'a str,
}

/// Next topic with `partner`: new, and following up on the latest one.
pub fn choose_topic(a: Speaker<'_>, partner: Speaker<'_>, memory: &DialogMemory, client: &LmClient, day: u32, tick: u32) -> (String, bool) {
    let prior: Vec<&str> = memory.with(partner.id).iter().map(|r| r.topic.as_str()).collect();
    let ctx = Context::new()
        .with("name", a.name)
        .with("partner", partner.name)
        .with("partner_traits", partner.traits)
        .with("interests", a.character)
        .with("history", prior.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let (mut topic, degraded) = match client.complete(&PromptRequest::new(PromptKind::DialogTopic, a.id, ctx).at(day, tick)) {
        Ok(r) => {
            let mut t = r.str("topic").to_owned();
            if let Some(latest) = prior.last() {
                let core = topic_core(latest);
                if !t.contains(core) {
                    t = format!("following up on \"{core}\": {t}");
                }
            }
            (t, false)
        }
        Err(_) => ("catching up".to_owned(), true),
    };
    let base = topic.clone();
    let mut n = 2;
    while prior.contains(&topic.as_str()) {
        topic = format!("{base} ({n})");
        n += 1;
    }
    (topic, degraded)
}

/// Alternating turns up to `max_turns`, then a summary for each side.
#[allow(clippy::too_many_arguments)]
pub fn run_dialogue(
    a: Speaker<'_>,
    b: Speaker<'_>,
    topic: &str,
    max_turns: usize,
    client: &LmClient,
    day: u32,
    tick: u32,
) -> (Conversation, [String; 2]) {
    let mut turns: Vec<Turn> = Vec::new();
    let mut truncated = false;
    for k in 0..max_turns {
        let (sp, li) = if k % 2 == 0 { (a, b) } else { (b, a) };
        let said: Vec<String> = turns.iter().map(|t| t.utterance.clone()).collect();
        let ctx = Context::new()
            .with("speaker", sp.name)
            .with("listener", li.name)
            .with("speaker_character", sp.character)
            .with("topic", topic)
            .with("turns", said);
        match client.complete(&PromptRequest::new(PromptKind::DialogTurn, sp.id, ctx).at(day, tick)) {
            Ok(r) => {
                turns.push(Turn { speaker: sp.id.to_owned(), utterance: r.str("utterance").to_owned() });
                if r.payload["end"].as_bool().unwrap_or(false) && turns.len() >= 2 {
                    break;
                }
            }
            Err(_) => {
                truncated = true;
                break;
            }
        }
    }
    let said: Vec<String> = turns.iter().map(|t| format!("{}: {}", t.speaker, t.utterance)).collect();
    let summarize = |me: Speaker<'_>, other: Speaker<'_>| {
        let ctx = Context::new().with("name", me.name).with("partner", other.name).with("topic", topic).with("turns", said.clone());
        client
            .complete(&PromptRequest::new(PromptKind::DialogSummary, me.id, ctx).at(day, tick))
            .map(|r| r.str("summary").to_owned())
            .unwrap_or_else(|_| format!("I talked with {} about {topic} ({} turns).", other.name, turns.len()))
    };
    let summaries = [summarize(a, b), summarize(b, a)];
    let n = turns.len() as u32;
    (
        Conversation {
            participants: [a.id.to_owned(), b.id.to_owned()],
            topic: topic.to_owned(),
            turns,
            start_tick: tick,
            end_tick: tick + n.div_ceil(2).max(1),
            truncated,
        },
        summaries,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BehaviorError {
    #[error("no conversation partner available")]
    NoCandidates,
}

/// Picks a conversation partner among `candidates` with a reason.
pub fn select_partner(
    a: Speaker<'_>,
    candidates: &[Speaker<'_>],
    client: &LmClient,
    day: u32,
    tick: u32,
) -> Result<(AgentId, String), BehaviorError> {
    let first = candidates.first().ok_or(BehaviorError::NoCandidates)?;
    if candidates.len() == 1 {
        return Ok((first.id.to_owned(), format!("{} is the one nearby.", first.name)));
    }
    let list: Vec<Value> = candidates.iter().map(|c| json!({"id": c.id, "name": c.name, "traits": c.traits})).collect();
    let ctx = Context::new().with("name", a.name).with("character", a.character).with("candidates", list);
    match client.complete(&PromptRequest::new(PromptKind::PartnerSelect, a.id, ctx).at(day, tick)) {
        Ok(r) if candidates.iter().any(|c| c.id == r.str("partner")) => Ok((r.str("partner").to_owned(), r.str("reason").to_owned())),
        _ => Ok((first.id.to_owned(), format!("{} is the first one nearby.", first.name))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::load_world;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CSV: &str = "building,place,x,y,capacity,affordances,description,open,close\n\
Dormitory,Room A,0,0,1,Rest,Room,00:00,24:00\n\
Dormitory,Room B,1,0,1,Rest,Room,00:00,24:00\n\
Library,Reading Room,4,0,6,Learning;Relaxation,Quiet,07:00,22:00\n\
Cafe,Counter,6,2,4,Meal;Appointment;Social,Coffee,07:00,21:00\n\
Cafe,Booth,6,3,2,Appointment;Social,Booth,07:00,21:00\n\
Square,Fountain,8,8,10,Relaxation;Social;Exercise,Open,00:00,24:00\n\
Studio,Desk,2,6,2,Creative;Work,Desk,07:00,22:00\n";

    fn world() -> WorldMap {
        load_world(CSV.as_bytes()).unwrap()
    }

    fn entry(start: &str, end: &str, goal: GoalTag, place: &str) -> PlanEntry {
        PlanEntry {
            start: parse_hhmm(start).unwrap(),
            end: parse_hhmm(end).unwrap(),
            goal,
            place: place.into(),
            description: "d".into(),
            motivation: "m".into(),
            status: EntryStatus::Pending,
            partner: None,
            invitation: None,
            proposed_partner: None,
        }
    }

    #[test]
    fn plan_checker_flags_problems() {
        let w = world();
        let win = DayWindow::default();
        let ok = DailyPlan {
            agent: "a".into(),
            day: 1,
            entries: vec![
                entry("08:00", "09:00", GoalTag::Learning, "Library/Reading Room"),
                entry("10:00", "11:00", GoalTag::Relaxation, "Square/Fountain"),
            ],
        };
        assert_eq!(check_plan(&ok, &w, "Dormitory/Room A", &win), Vec::<String>::new());
        let mut tight = ok.clone();
        tight.entries[1].start = parse_hhmm("09:15").unwrap();
        assert!(!check_plan(&tight, &w, "Dormitory/Room A", &win).is_empty());
        let mut wrong = ok.clone();
        wrong.entries[0].goal = GoalTag::Exercise;
        assert!(check_plan(&wrong, &w, "Dormitory/Room A", &win)[0].contains("afford"));
        let mut closed = ok;
        closed.entries[0].start = parse_hhmm("06:30").unwrap();
        assert!(check_plan(&closed, &w, "Dormitory/Room A", &win)[0].contains("closed"));
    }

    #[test]
    fn normalization_drops_unsound_entries_and_tops_up() {
        let w = world();
        let win = DayWindow::default();
        let raw = vec![
            json!({"start":"08:00","end":"09:00","goal":"Exercise","place":"Library/Reading Room","description":"x","motivation":"y"}),
            json!({"start":"10:00","end":"11:00","goal":"Learning","place":"Library/Reading Room","description":"x","motivation":"y"}),
            json!({"start":"10:30","end":"11:30","goal":"Learning","place":"Library/Reading Room","description":"x","motivation":"y"}),
        ];
        let others = vec![];
        let inputs = PlanInputs {
            agent: "a",
            name: "A",
            character: "",
            aims: "",
            home: "Dormitory/Room A",
            memories: "",
            insight: "",
            others: &others,
            day: 1,
        };
        let (mut kept, dropped) = normalize(&raw, &inputs, &w, &win);
        assert_eq!(kept.len(), 1);
        assert_eq!(dropped.len(), 2);
        top_up(&mut kept, &w, "Dormitory/Room A", &win);
        assert_eq!(kept.len(), MIN_ENTRIES);
        let p = DailyPlan { agent: "a".into(), day: 1, entries: kept };
        assert!(check_plan(&p, &w, "Dormitory/Room A", &win).is_empty());
    }

    #[test]
    fn release_order_claims_for_companion() {
        let w = world();
        let mut ledger = OccupancyLedger::new(&w);
        let win = DayWindow::default();
        let c = LmClient::scripted(1);
        let mut e = entry("16:00", "17:00", GoalTag::Appointment, "Cafe/Booth");
        e.partner = Some("b".into());
        let mut plan = DailyPlan { agent: "a".into(), day: 1, entries: vec![e] };
        let actor = Actor { id: "a", name: "A", character: "", home: "Dormitory/Room A" };
        let out = execute_action(actor, &mut plan, 0, &w, &mut ledger, &win, &c, 40);
        assert_eq!(out.started.as_ref().unwrap().claim, ClaimResult::Claimed);
        assert_eq!(ledger.claimed("Cafe/Booth"), 2);
        assert_eq!(plan.entries[0].status, EntryStatus::Active);
        assert!(out.started.unwrap().description.contains("Cafe/Booth"));
    }

    #[test]
    fn occupied_venue_is_revised_or_cancelled() {
        let w = world();
        let win = DayWindow::default();
        let c = LmClient::scripted(2);
        let mut ledger = OccupancyLedger::new(&w);
        ledger.claim_spot("Cafe/Booth", "x", &["y"]).unwrap();
        let mut plan = DailyPlan { agent: "a".into(), day: 1, entries: vec![entry("16:00", "17:00", GoalTag::Social, "Cafe/Booth")] };
        let actor = Actor { id: "a", name: "A", character: "likes friends", home: "Dormitory/Room A" };
        let out = execute_action(actor, &mut plan, 0, &w, &mut ledger, &win, &c, 40);
        assert_eq!(out.revisions.len(), 1);
        let started = out.started.expect("an alternative social venue exists");
        assert_ne!(started.place, "Cafe/Booth");
        assert!(w.place(&started.place).unwrap().affords(GoalTag::Social));
        assert_eq!(plan.entries[0].status, EntryStatus::Replanned);
        assert!(ledger.overfull().is_empty());

        // nothing else affords Creative: cancelled, never dropped silently
        let mut l2 = OccupancyLedger::new(&w);
        l2.claim_spot("Studio/Desk", "x", &["y"]).unwrap();
        let mut plan2 = DailyPlan { agent: "a".into(), day: 1, entries: vec![entry("10:00", "11:00", GoalTag::Creative, "Studio/Desk")] };
        let out2 = execute_action(actor, &mut plan2, 0, &w, &mut l2, &win, &c, 16);
        assert!(out2.started.is_none());
        assert_eq!(out2.cancelled.unwrap().status, EntryStatus::Cancelled);
    }

    fn briefs() -> BTreeMap<AgentId, AgentBrief> {
        let mk = |id: &str, name: &str, character: &str, home: &str| {
            (
                id.to_owned(),
                AgentBrief { id: id.into(), name: name.into(), character: character.into(), traits: character.into(), home: home.into() },
            )
        };
        BTreeMap::from([
            mk("isabella", "Isabella", "enthusiastic outgoing lively, loves friends and conversation", "Dormitory/Room A"),
            mk("sophia", "Sophia", "creative writer, imaginative, outgoing", "Dormitory/Room B"),
        ])
    }

    #[test]
    fn accepted_invitation_is_bilateral() {
        let w = world();
        let win = DayWindow::default();
        let c = LmClient::scripted(9);
        let mut inv_entry = entry("16:00", "17:00", GoalTag::Appointment, "Cafe/Counter");
        inv_entry.proposed_partner = Some("isabella".into());
        let mut plans = BTreeMap::from([
            ("sophia".to_owned(), DailyPlan { agent: "sophia".into(), day: 1, entries: vec![inv_entry] }),
            (
                "isabella".to_owned(),
                DailyPlan {
                    agent: "isabella".into(),
                    day: 1,
                    entries: vec![entry("08:00", "09:00", GoalTag::Learning, "Library/Reading Room")],
                },
            ),
        ]);
        let mut next = 1;
        let mut accepted_any = false;
        for seed in 0..20u64 {
            let c2 = LmClient::scripted(seed);
            let mut p = plans.clone();
            let ev = post_process_appointments(&mut p, &briefs(), &w, &win, &c2, &mut next);
            assert_eq!(ev.len(), 1);
            if ev[0].invitation.status == InvitationStatus::Accepted {
                accepted_any = true;
                let a: Vec<_> = p["sophia"].live().filter(|e| e.invitation == Some(ev[0].invitation.id)).collect();
                let b: Vec<_> = p["isabella"].live().filter(|e| e.invitation == Some(ev[0].invitation.id)).collect();
                assert_eq!((a.len(), b.len()), (1, 1));
                assert_eq!((a[0].start, a[0].end, &a[0].place), (b[0].start, b[0].end, &b[0].place));
                assert_eq!(a[0].partner.as_deref(), Some("isabella"));
                assert_eq!(b[0].partner.as_deref(), Some("sophia"));
            } else {
                assert!(!ev[0].invitation.reason.is_empty());
                assert!(p["sophia"].entries[0].partner.is_none());
            }
            for pl in p.values() {
                assert!(check_plan(pl, &w, &briefs()[&pl.agent].home, &win).is_empty());
            }
        }
        assert!(accepted_any);
        let _ = c;
        // no appointment entries: plans unchanged
        plans.get_mut("sophia").unwrap().entries[0].proposed_partner = None;
        let before = plans.clone();
        assert!(post_process_appointments(&mut plans, &briefs(), &w, &win, &LmClient::scripted(1), &mut next).is_empty());
        assert_eq!(plans, before);
    }

    #[test]
    fn small_venue_and_night_invitations_rejected() {
        let w = load_world(format!("{}Cafe,Stool,6,2,1,Appointment,Tiny,07:00,21:00\n", CSV).as_bytes()).unwrap();
        let win = DayWindow::default();
        let mut e = entry("16:00", "17:00", GoalTag::Appointment, "Cafe/Stool");
        e.proposed_partner = Some("isabella".into());
        let mut plans = BTreeMap::from([
            ("sophia".to_owned(), DailyPlan { agent: "sophia".into(), day: 1, entries: vec![e] }),
            ("isabella".to_owned(), DailyPlan { agent: "isabella".into(), day: 1, entries: vec![] }),
        ]);
        let ev = post_process_appointments(&mut plans, &briefs(), &w, &win, &LmClient::scripted(1), &mut 1);
        assert_eq!(ev[0].invitation.status, InvitationStatus::Rejected);
        assert_eq!(ev[0].invitation.reason, "venue");

        let b = briefs();
        let inv = Invitation {
            id: 1,
            from: "sophia".into(),
            to: "isabella".into(),
            start: 2 * 60,
            end: 3 * 60,
            place: "Cafe/Counter".into(),
            topic: "t".into(),
            message: "m".into(),
            status: InvitationStatus::Pending,
            reason: String::new(),
            benefit: 0.0,
        };
        let r = respond_invitation(&b["isabella"], &b["sophia"], &inv, &plans["isabella"], &win, &LmClient::scripted(1));
        assert!(!r.accept);
        assert_eq!(r.reason, "out of hours");
    }

    #[test]
    fn trigger_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| !maybe_start_conversation(10, 2, 0.3, 1.5, true, &mut rng)));
        assert!((0..100).all(|_| maybe_start_conversation(0, 2, 0.3, 0.5, true, &mut rng)));
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| maybe_start_conversation(1, 2, 0.3, 1.0, false, &mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        let hits = draw(5).iter().filter(|b| **b).count();
        assert!(hits > 3 && hits < 30, "{hits}");
    }

    #[test]
    fn topics_deepen_and_stay_distinct() {
        let c = LmClient::scripted(3);
        let a = Speaker { id: "sophia", name: "Sophia", character: "writer, creative", traits: "creative" };
        let b = Speaker { id: "isabella", name: "Isabella", character: "outgoing friend", traits: "outgoing" };
        let mut mem = DialogMemory::default();
        let (t0, _) = choose_topic(a, b, &mem, &c, 1, 0);
        assert!(t0.starts_with("getting to know"), "{t0}");
        mem.push("isabella", DialogRecord { day: 1, topic: "creativity under pressure".into(), summary: "s".into() });
        let (t1, _) = choose_topic(a, b, &mem, &c, 1, 1);
        assert!(t1.contains("creativity under pressure"), "{t1}");
        let mut topics = vec![];
        let mut m2 = DialogMemory::default();
        for k in 0..3 {
            let (t, _) = choose_topic(a, b, &m2, &c, 1, k);
            m2.push("isabella", DialogRecord { day: 1, topic: t.clone(), summary: "s".into() });
            topics.push(t);
        }
        topics.sort();
        topics.dedup();
        assert_eq!(topics.len(), 3);
    }

    #[test]
    fn dialogue_bounds_and_summaries() {
        let c = LmClient::scripted(8);
        let a = Speaker { id: "a", name: "A", character: "x", traits: "x" };
        let b = Speaker { id: "b", name: "B", character: "y", traits: "y" };
        for max in [2, 4, 6] {
            let (conv, sums) = run_dialogue(a, b, "books", max, &c, 1, 3);
            assert!(conv.turns.len() >= 2 && conv.turns.len() <= max);
            assert_eq!(conv.turns[0].speaker, "a");
            assert_eq!(conv.turns[1].speaker, "b");
            assert!(sums.iter().all(|s| !s.is_empty()));
        }
    }

    #[test]
    fn partner_selection() {
        let c = LmClient::scripted(1);
        let me = Speaker { id: "isabella", name: "Isabella", character: "loves film, art and friends", traits: "" };
        assert_eq!(select_partner(me, &[], &c, 1, 0), Err(BehaviorError::NoCandidates));
        let s = Speaker { id: "sophia", name: "Sophia", character: "", traits: "writer of novels" };
        let i = Speaker { id: "isla", name: "Isla", character: "", traits: "filmmaker, loves film and art" };
        assert_eq!(select_partner(me, &[s], &c, 1, 0).unwrap().0, "sophia");
        let (who, why) = select_partner(me, &[s, i], &c, 1, 0).unwrap();
        assert_eq!(who, "isla");
        assert!(why.contains("Isla"));
        assert_eq!(select_partner(me, &[s, i], &c, 1, 0).unwrap().0, who);
    }
}
