//! Day/tick scheduler, run configuration, persistence and replay.
//!
//! A day runs in four phases: every agent plans, appointments are
//! negotiated, the ticks play out (actions, emotions, replans, dialogue),
//! and the end-of-day pipeline filters and decays memories, reflects and
//! grows each character. Agents are always visited in ascending id order and
//! the only randomness outside the backend is the dialogue trigger stream,
//! so a run is a pure function of its config and command transcript.

pub mod log;
mod replay;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::behavior::{
    check_plan, choose_topic, execute_action, generate_daily_plan, maybe_start_conversation, post_process_appointments, revise_tail,
    run_dialogue, select_partner, Actor, AgentBrief, AgentId, DailyPlan, DialogMemory, DialogRecord, EntryStatus, PlanInputs, Speaker,
};
use crate::bfi::{administer_bfi, score_bfi};
use crate::character::{init_character, summarize_character, CharacterError, CharacterStructure, CharacterSummary, Dimension};
use crate::clock::{format_hhmm, parse_hhmm, DayWindow, SimClock};
use crate::environment::{load_world_with, GridSpec, OccupancyLedger, RowError, WorldDiff, WorldMap};
use crate::goal::GoalTag;
use crate::lexicon::extraversion_factor;
use crate::lmclient::{Context, HttpBackend, HttpConfig, LmClient, LmError, PromptKind, PromptRequest};
use crate::personality::{
    check_replan_trigger, decay_memories, filter_memories, generate_insight, grow_character, update_emotion, DayEvent, EmotionState,
    InsightRecord, LongTermRecord, ShortTermRecord, GROWTH_STAGES,
};

pub use log::{content_hash, parse_log, read_log, records_hash, EventLog, LogError, LogRecord};
pub use replay::{replay, AgentView, ReplayError, ReplayView};

pub const DEFAULT_WORLD: &str = include_str!("../../scenario/campus.csv");
pub const DEFAULT_CONFIG: &str = include_str!("../../scenario/default.json");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub disable_cognitive_feelings: bool,
    pub disable_insight: bool,
    pub disable_growth: bool,
    pub simple_character: bool,
}

impl Ablation {
    /// Parses a comma list of `growth`, `insight`, `feelings`, `simple-character`.
    pub fn parse(list: &str) -> Result<Self, ConfigError> {
        let mut a = Self::default();
        for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "growth" => a.disable_growth = true,
                "insight" => a.disable_insight = true,
                "feelings" => a.disable_cognitive_feelings = true,
                "simple-character" => a.simple_character = true,
                other => return Err(ConfigError(format!("unknown ablation {other:?}"))),
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    pub base_probability: f64,
    /// Grid cells.
    pub radius: u32,
    pub max_turns: usize,
    /// Ticks before the same pair may talk again.
    pub cooldown_ticks: u32,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self { base_probability: 0.3, radius: 2, max_turns: 6, cooldown_ticks: 8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Scripted,
    Http,
}

/// An agent to create: from a brief, or from a saved structure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentSeed {
    pub brief: Option<String>,
    pub structure: Option<CharacterStructure>,
    /// Place ref; defaults to the n-th place affording Rest.
    pub home: Option<String>,
}

fn d_tick() -> u32 {
    15
}
fn d_start() -> String {
    "06:00".into()
}
fn d_end() -> String {
    "23:00".into()
}
fn d_k() -> usize {
    30
}
fn d_b() -> usize {
    10
}
fn d_budget() -> usize {
    60
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub days: u32,
    pub agents: Vec<AgentSeed>,
    /// World CSV; the built-in campus when absent.
    #[serde(default)]
    pub world: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default = "d_tick")]
    pub tick_minutes: u32,
    #[serde(default = "d_start")]
    pub day_start: String,
    #[serde(default = "d_end")]
    pub day_end: String,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default = "d_k")]
    pub memory_capacity: usize,
    #[serde(default = "d_b")]
    pub blur_batch: usize,
    #[serde(default)]
    pub dialogue: DialogueConfig,
    /// Word budget per dimension in character summaries.
    #[serde(default = "d_budget")]
    pub summary_budget: usize,
    #[serde(default = "d_true")]
    pub bfi: bool,
    /// Keep full prompt contexts in `lm` records.
    #[serde(default)]
    pub log_prompts: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// The bundled three-agent, seven-day scenario.
    pub fn default_scenario() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("bundled config is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.to_owned()));
        if self.days == 0 {
            return bad("days must be at least 1");
        }
        if self.agents.is_empty() {
            return bad("at least one agent is required");
        }
        if self.agents.iter().any(|a| a.brief.as_deref().is_none_or(|b| b.trim().is_empty()) && a.structure.is_none()) {
            return bad("every agent needs a brief or a structure");
        }
        let (Some(s), Some(e)) = (parse_hhmm(&self.day_start), parse_hhmm(&self.day_end)) else {
            return bad("day_start and day_end must be HH:MM");
        };
        if self.tick_minutes == 0 || s >= e || (e - s) % self.tick_minutes != 0 {
            return bad("the day window must be a positive whole number of ticks");
        }
        if self.memory_capacity == 0 || self.blur_batch < 2 {
            return bad("memory_capacity must be positive and blur_batch at least 2");
        }
        if !(0.0..=1.0).contains(&self.dialogue.base_probability) || self.dialogue.max_turns < 2 {
            return bad("dialogue needs base_probability in [0, 1] and max_turns >= 2");
        }
        Ok(())
    }

    pub fn window(&self) -> DayWindow {
        DayWindow {
            start: parse_hhmm(&self.day_start).unwrap_or(360),
            end: parse_hhmm(&self.day_end).unwrap_or(1380),
            tick_minutes: self.tick_minutes,
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { tick_minutes: self.tick_minutes, ..GridSpec::default() }
    }

    pub fn world_csv(&self) -> Result<String, ConfigError> {
        match &self.world {
            None => Ok(DEFAULT_WORLD.to_owned()),
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("world {}: {e}", p.display()))),
        }
    }

    pub fn client(&self) -> Result<LmClient, ConfigError> {
        match self.backend {
            BackendChoice::Scripted => Ok(LmClient::scripted(self.seed)),
            BackendChoice::Http => {
                let cfg = HttpConfig::from_env().map_err(|e| ConfigError(e.to_string()))?;
                let b = HttpBackend::new(cfg).map_err(|e| ConfigError(e.to_string()))?;
                Ok(LmClient::new(Arc::new(b)))
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("world rejected: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    World(Vec<RowError>),
    #[error("character: {0}")]
    Character(#[from] CharacterError),
    #[error("log: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("{0} is in a conversation")]
    Busy(String),
    #[error("chat text is empty")]
    EmptyText,
    #[error("backend: {0}")]
    Backend(#[from] LmError),
    #[error("the run is finished")]
    Finished,
    #[error("save file: {0}")]
    Save(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRuntime {
    pub id: AgentId,
    pub home: String,
    pub structure: CharacterStructure,
    pub plan: DailyPlan,
    pub emotion: EmotionState,
    pub short_term: Vec<ShortTermRecord>,
    pub long_term: Vec<LongTermRecord>,
    pub insights: Vec<InsightRecord>,
    pub dialog: DialogMemory,
    /// Place ref where the agent currently is.
    pub position: String,
    /// First tick at which the agent is free to talk again.
    pub busy_until: u32,
    pub day_events: Vec<DayEvent>,
    /// End-of-day assessment texts, one per finished day.
    pub day_texts: Vec<(u32, String)>,
    /// Summary cache keyed by `revision:emphasis`.
    pub summaries: BTreeMap<String, CharacterSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayPhase {
    /// Before planning.
    Morning,
    Ticking,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedWorld {
    pub csv: String,
    pub diff: WorldDiff,
    pub effective_day: u32,
}

/// Everything a save file needs to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelState {
    pub config: RunConfig,
    pub world: WorldMap,
    pub world_csv: String,
    pub staged: Option<StagedWorld>,
    pub clock: SimClock,
    pub phase: DayPhase,
    pub agents: BTreeMap<AgentId, AgentRuntime>,
    pub ledger: OccupancyLedger,
    pub rng: ChaCha8Rng,
    pub next_invitation: u64,
    /// `a|b` (sorted) to the first tick the pair may talk again.
    pub cooldowns: BTreeMap<String, u32>,
    pub paused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaveFile {
    pub version: u32,
    pub next_seq: u64,
    pub state: KernelState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub day: u32,
    pub tick: u32,
    pub day_ended: bool,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub agent: AgentId,
    pub text: String,
    pub reply: String,
    pub day: u32,
    pub tick: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Step,
    RunDay,
    Pause,
    Resume,
    Chat { agent: AgentId, text: String },
    EnvUpdate { csv: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CommandOutcome {
    Stepped(StepReport),
    Chat(ChatMessage),
    Staged(StagedWorld),
    Paused,
    Resumed,
}

#[derive(Debug)]
pub struct Kernel {
    state: KernelState,
    client: LmClient,
    log: EventLog,
}

fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("state serializes")
}

impl Kernel {
    /// Builds agents and logs the run header and their initial structures.
    pub fn new(config: RunConfig, log: EventLog) -> Result<Self, KernelError> {
        config.validate()?;
        let client = config.client()?;
        Self::with_client(config, client, log)
    }

    pub fn with_client(config: RunConfig, client: LmClient, log: EventLog) -> Result<Self, KernelError> {
        config.validate()?;
        let world_csv = config.world_csv()?;
        let world = load_world_with(world_csv.as_bytes(), config.grid()).map_err(KernelError::World)?;
        let state = KernelState {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            ledger: OccupancyLedger::new(&world),
            config,
            world,
            world_csv,
            staged: None,
            clock: SimClock::start(),
            phase: DayPhase::Morning,
            agents: BTreeMap::new(),
            next_invitation: 1,
            cooldowns: BTreeMap::new(),
            paused: true,
        };
        let mut k = Self { state, client, log };
        k.emit("", "run", json!({"config": k.state.config, "world": k.state.world_csv, "backend": k.client.backend_id()}))?;
        k.init_agents()?;
        Ok(k)
    }

    /// Continues a saved run, appending to `log`.
    pub fn resume(save: SaveFile, client: LmClient, log: EventLog) -> Result<Self, KernelError> {
        if log.next_seq() != save.next_seq {
            return Err(KernelError::Save(format!("log continues at {}, save expects {}", log.next_seq(), save.next_seq)));
        }
        Ok(Self { state: save.state, client, log })
    }

    pub fn save_file(&self) -> SaveFile {
        SaveFile { version: 1, next_seq: self.log.next_seq(), state: self.state.clone() }
    }

    /// Writes the save file atomically.
    pub fn save(&self, path: &Path) -> Result<(), KernelError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&self.save_file()).expect("state serializes"))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_save(path: &Path) -> Result<SaveFile, KernelError> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| KernelError::Save(e.to_string()))
    }

    pub fn state(&self) -> &KernelState {
        &self.state
    }

    /// Makes every record written so far visible to readers of the log file.
    pub fn flush_log(&mut self) -> Result<(), KernelError> {
        Ok(self.log.flush()?)
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn window(&self) -> DayWindow {
        self.state.config.window()
    }

    pub fn is_finished(&self) -> bool {
        self.state.phase == DayPhase::Finished
    }

    fn init_agents(&mut self) -> Result<(), KernelError> {
        let mut built: Vec<(CharacterStructure, Option<String>)> = Vec::new();
        for seed in self.state.config.agents.clone() {
            let cs = match (&seed.structure, &seed.brief) {
                (Some(cs), _) => cs.clone(),
                (None, Some(brief)) => init_character(brief, &self.client)?,
                (None, None) => return Err(ConfigError("agent without brief or structure".into()).into()),
            };
            built.push((cs, seed.home.clone()));
        }
        built.sort_by_key(|(cs, _)| cs.id());
        if let Some(w) = built.windows(2).find(|w| w[0].0.id() == w[1].0.id()) {
            return Err(ConfigError(format!("duplicate agent id {:?}", w[0].0.id())).into());
        }
        let explicit: Vec<String> = built.iter().filter_map(|(_, h)| h.clone()).collect();
        let mut free = self
            .state
            .world
            .places
            .iter()
            .filter(|p| p.affords(GoalTag::Rest) && !explicit.contains(&p.place_ref()))
            .map(|p| p.place_ref());
        for (cs, home) in built {
            let home = match home {
                Some(h) => h,
                None => free.next().ok_or_else(|| ConfigError(format!("no free home for {}", cs.name())))?,
            };
            if !self.state.world.place(&home).is_some_and(|p| p.affords(GoalTag::Rest)) {
                return Err(ConfigError(format!("home {home:?} of {} does not afford Rest", cs.name())).into());
            }
            let id = cs.id();
            let rt = AgentRuntime {
                id: id.clone(),
                position: home.clone(),
                home,
                plan: DailyPlan { agent: id.clone(), day: 0, entries: Vec::new() },
                structure: cs,
                emotion: EmotionState::neutral(),
                short_term: Vec::new(),
                long_term: Vec::new(),
                insights: Vec::new(),
                dialog: DialogMemory::default(),
                busy_until: 0,
                day_events: Vec::new(),
                day_texts: Vec::new(),
                summaries: BTreeMap::new(),
            };
            self.state.agents.insert(id, rt);
        }
        for id in self.ids() {
            let a = &self.state.agents[&id];
            let payload = json!({"structure": a.structure, "home": a.home});
            self.emit(&id, "init", payload)?;
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<AgentId> {
        self.state.agents.keys().cloned().collect()
    }

    // ---- logging -------------------------------------------------------------

    fn flush_lm(&mut self) -> Result<(), KernelError> {
        let SimClock { day, tick } = self.state.clock;
        for ex in self.client.drain() {
            let mut p = json!({
                "kind": ex.kind,
                "attempts": ex.attempts,
                "backend": ex.backend_id,
                "latency_ms": ex.latency_ms,
                "context_hash": content_hash(ex.context.to_string().as_bytes()),
                "response": ex.response,
                "error": ex.error,
            });
            if self.state.config.log_prompts {
                p["context"] = ex.context;
            }
            self.log.push(day, tick, &ex.agent, "lm", p)?;
        }
        Ok(())
    }

    fn emit(&mut self, agent: &str, kind: &str, payload: Value) -> Result<(), KernelError> {
        self.flush_lm()?;
        let SimClock { day, tick } = self.state.clock;
        self.log.push(day, tick, agent, kind, payload)?;
        Ok(())
    }

    // ---- character views -----------------------------------------------------

    fn simple(&self) -> bool {
        self.state.config.ablation.simple_character
    }

    /// Character text for a prompt: the persona paragraph under the simple
    /// ablation, otherwise a (cached) summary with `emphasis` kept verbatim.
    fn character_text(&mut self, id: &str, emphasis: Option<Dimension>) -> String {
        let a = &self.state.agents[id];
        if self.simple() {
            return a.structure.persona();
        }
        let key = format!("{}:{}", a.structure.revision, emphasis.map(Dimension::key).unwrap_or("none"));
        if let Some(s) = a.summaries.get(&key) {
            return s.text();
        }
        let cs = a.structure.clone();
        match summarize_character(&cs, emphasis, self.state.config.summary_budget, &self.client) {
            Ok(s) => {
                let t = s.text();
                self.state.agents.get_mut(id).expect("known agent").summaries.insert(key, s);
                t
            }
            Err(_) => cs.full_text(),
        }
    }

    fn full_text(&self, id: &str) -> String {
        let cs = &self.state.agents[id].structure;
        if self.simple() {
            cs.persona()
        } else {
            cs.full_text()
        }
    }

    fn traits_text(&self, id: &str) -> String {
        let cs = &self.state.agents[id].structure;
        if self.simple() {
            cs.persona()
        } else {
            cs.traits.prose.clone()
        }
    }

    fn aims(&self, id: &str) -> String {
        if self.simple() {
            return String::new();
        }
        let p = &self.state.agents[id].structure.preference;
        format!("Long-term: {} Short-term: {}", p.long_term_goal.goal, p.short_term_goal.goal)
    }

    fn name(&self, id: &str) -> String {
        self.state.agents[id].structure.name().to_owned()
    }

    // ---- driving -------------------------------------------------------------

    /// Executes one tick, planning first if the day has not begun and running
    /// the end-of-day pipeline after the last tick.
    pub fn step(&mut self) -> Result<StepReport, KernelError> {
        match self.state.phase {
            DayPhase::Finished => return Err(KernelError::Finished),
            DayPhase::Morning => self.begin_day()?,
            DayPhase::Ticking => {}
        }
        let t = self.state.clock.tick;
        let day = self.state.clock.day;
        self.run_tick(t)?;
        let mut day_ended = false;
        if t + 1 >= self.window().ticks_per_day() {
            self.end_day()?;
            day_ended = true;
        } else {
            self.state.clock.tick = t + 1;
        }
        Ok(StepReport { day, tick: t, day_ended, finished: self.is_finished() })
    }

    /// Steps until the current day is over.
    pub fn run_day(&mut self) -> Result<StepReport, KernelError> {
        loop {
            let r = self.step()?;
            if r.day_ended {
                return Ok(r);
            }
        }
    }

    /// Runs every remaining day.
    pub fn run(&mut self) -> Result<(), KernelError> {
        while !self.is_finished() {
            self.run_day()?;
        }
        Ok(())
    }

    /// Applies an external command at the current tick boundary and logs it.
    pub fn apply(&mut self, cmd: Command) -> Result<CommandOutcome, KernelError> {
        match cmd {
            Command::Step => {
                self.ensure_running()?;
                self.emit("", "command", json!({"kind": "step"}))?;
                Ok(CommandOutcome::Stepped(self.step()?))
            }
            Command::RunDay => {
                self.ensure_running()?;
                self.emit("", "command", json!({"kind": "run_day"}))?;
                Ok(CommandOutcome::Stepped(self.run_day()?))
            }
            Command::Pause => {
                self.state.paused = true;
                self.emit("", "command", json!({"kind": "pause"}))?;
                Ok(CommandOutcome::Paused)
            }
            Command::Resume => {
                self.ensure_running()?;
                self.state.paused = false;
                self.emit("", "command", json!({"kind": "resume"}))?;
                Ok(CommandOutcome::Resumed)
            }
            Command::Chat { agent, text } => Ok(CommandOutcome::Chat(self.chat(&agent, &text)?)),
            Command::EnvUpdate { csv } => match self.stage_world(&csv) {
                Ok(s) => Ok(CommandOutcome::Staged(s)),
                Err(rows) => Err(KernelError::World(rows)),
            },
        }
    }

    fn ensure_running(&self) -> Result<(), KernelError> {
        if self.is_finished() {
            Err(KernelError::Finished)
        } else {
            Ok(())
        }
    }

    // ---- day start -------------------------------------------------------------

    fn begin_day(&mut self) -> Result<(), KernelError> {
        let day = self.state.clock.day;
        self.state.clock.tick = 0;
        if let Some(staged) = self.state.staged.clone().filter(|s| s.effective_day <= day) {
            let world = load_world_with(staged.csv.as_bytes(), self.state.config.grid()).map_err(KernelError::World)?;
            self.state.world = world;
            self.state.world_csv = staged.csv.clone();
            self.state.staged = None;
            self.emit("", "world", json!({"diff": staged.diff, "csv": staged.csv}))?;
        }
        self.state.ledger = OccupancyLedger::new(&self.state.world);
        self.state.cooldowns.clear();
        for a in self.state.agents.values_mut() {
            a.position = a.home.clone();
            a.busy_until = 0;
            a.day_events.clear();
        }

        let w = self.window();
        let everyone: Vec<(AgentId, String)> = self.ids().into_iter().map(|id| (id.clone(), self.name(&id))).collect();
        let mut plans = BTreeMap::new();
        for id in self.ids() {
            let character = self.character_text(&id, Some(Dimension::Preference));
            let aims = self.aims(&id);
            let a = &self.state.agents[&id];
            let memories: Vec<&str> = a.long_term.iter().rev().take(10).rev().map(|m| m.summary.as_str()).collect();
            let memories = memories.join(" ");
            let insight = a.insights.last().map(|i| i.reflection.clone()).unwrap_or_default();
            let others: Vec<(AgentId, String)> = everyone.iter().filter(|(o, _)| *o != id).cloned().collect();
            let name = self.name(&id);
            let inputs = PlanInputs {
                agent: &id,
                name: &name,
                character: &character,
                aims: &aims,
                home: &a.home,
                memories: &memories,
                insight: &insight,
                others: &others,
                day,
            };
            let previous = (a.plan.day > 0).then(|| a.plan.clone());
            let out = generate_daily_plan(&inputs, &self.state.world, &w, &self.client, previous.as_ref());
            self.emit(&id, "plan", json!({"plan": out.plan, "dropped": out.dropped, "degraded": out.degraded}))?;
            plans.insert(id.clone(), out.plan);
        }

        let mut briefs = BTreeMap::new();
        for id in self.ids() {
            let character = self.character_text(&id, Some(Dimension::Preference));
            let a = &self.state.agents[&id];
            briefs.insert(
                id.clone(),
                AgentBrief { id: id.clone(), name: self.name(&id), character, traits: self.traits_text(&id), home: a.home.clone() },
            );
        }
        let mut next = self.state.next_invitation;
        let events = post_process_appointments(&mut plans, &briefs, &self.state.world, &w, &self.client, &mut next);
        self.state.next_invitation = next;
        for ev in events {
            let from = ev.invitation.from.clone();
            self.emit(&from, "invite", to_value(&ev))?;
        }
        for (id, p) in plans {
            self.state.agents.get_mut(&id).expect("known agent").plan = p;
        }
        self.state.phase = DayPhase::Ticking;
        Ok(())
    }

    // ---- ticks -----------------------------------------------------------------

    fn run_tick(&mut self, t: u32) -> Result<(), KernelError> {
        let w = self.window();
        let m = w.minute_of(t);
        let m_end = m + w.tick_minutes;
        for id in self.ids() {
            self.finish_entries(&id, Some(m))?;
            loop {
                let a = &self.state.agents[&id];
                let Some(i) = a.plan.entries.iter().position(|e| e.status == EntryStatus::Pending && e.start < m_end) else {
                    break;
                };
                if a.plan.entries[i].end <= m {
                    let old = a.plan.entries[i].clone();
                    let ag = self.state.agents.get_mut(&id).expect("known agent");
                    ag.plan.entries[i].status = EntryStatus::Cancelled;
                    let plan = ag.plan.clone();
                    self.emit(&id, "replan", json!({"reason": "missed", "old": old, "new": null, "applied": true, "plan": plan}))?;
                    continue;
                }
                self.start_entry(&id, i, t)?;
            }
        }
        self.dialogue_phase(t)
    }

    /// Marks active entries ending by `now` (all of them when `None`) as done.
    fn finish_entries(&mut self, id: &str, now: Option<u32>) -> Result<(), KernelError> {
        loop {
            let a = &self.state.agents[id];
            let Some(i) = a.plan.entries.iter().position(|e| e.status == EntryStatus::Active && now.is_none_or(|m| e.end <= m)) else {
                return Ok(());
            };
            let ag = self.state.agents.get_mut(id).expect("known agent");
            ag.plan.entries[i].status = EntryStatus::Done;
            self.state.ledger.release_spot(id);
            let entry = ag.plan.entries[i].clone();
            let plan = ag.plan.clone();
            self.emit(id, "action", json!({"phase": "end", "index": i, "entry": entry, "plan": plan}))?;
        }
    }

    fn start_entry(&mut self, id: &str, i: usize, t: u32) -> Result<(), KernelError> {
        let w = self.window();
        let name = self.name(id);
        let character = self.character_text(id, Some(Dimension::Preference));
        let KernelState { agents, world, ledger, .. } = &mut self.state;
        let a = agents.get_mut(id).expect("known agent");
        let actor = Actor { id, name: &name, character: &character, home: &a.home };
        let out = execute_action(actor, &mut a.plan, i, world, ledger, &w, &self.client, t);
        let plan = a.plan.clone();
        for r in &out.revisions {
            self.emit(id, "replan", json!({"reason": r.reason, "old": r.old, "new": r.new, "applied": true, "plan": plan}))?;
        }
        if let Some(rec) = out.started {
            self.state.agents.get_mut(id).expect("known agent").position = rec.place.clone();
            self.emit(id, "action", json!({"phase": "start", "index": out.index, "record": rec, "plan": plan}))?;
            self.perceive(id, &rec.description, Some(rec.entry.goal), t)?;
        }
        Ok(())
    }

    /// Emotion after an action or conversation, and the replan it may trigger.
    fn perceive(&mut self, id: &str, action: &str, goal: Option<GoalTag>, t: u32) -> Result<(), KernelError> {
        let day = self.state.clock.day;
        let name = self.name(id);
        let character = self.character_text(id, Some(Dimension::Conflict));
        let feelings = !self.state.config.ablation.disable_cognitive_feelings;
        let prev = self.state.agents[id].emotion.clone();
        let u = update_emotion(id, &name, action, goal, &character, &prev, feelings, &self.client, day, t);
        if let Some(w) = &u.warning {
            self.emit(id, "warn", json!({"message": w}))?;
        }
        let next = u.state;
        let trigger = check_replan_trigger(&prev, &next);
        {
            let a = self.state.agents.get_mut(id).expect("known agent");
            a.emotion = next.clone();
            a.short_term.push(ShortTermRecord { day, tick: t, action: action.to_owned(), goal, emotion: next.clone() });
            a.day_events.push(DayEvent { goal, text: action.to_owned(), category: next.category });
        }
        self.emit(id, "emotion", json!({"state": next, "previous": prev.category, "action": action, "trigger": trigger}))?;
        if !trigger {
            return Ok(());
        }
        let pair = json!({"from": prev.category, "to": next.category});
        if !feelings {
            let plan = self.state.agents[id].plan.clone();
            return self.emit(id, "replan", json!({"reason": "emotion", "emotion": pair, "applied": false, "ablated": true, "plan": plan}));
        }
        let w = self.window();
        let now = w.minute_of(t);
        let plan_character = self.character_text(id, Some(Dimension::Preference));
        let KernelState { agents, world, .. } = &mut self.state;
        let a = agents.get_mut(id).expect("known agent");
        let actor = Actor { id, name: &name, character: &plan_character, home: &a.home };
        let res = revise_tail(actor, &mut a.plan, now, (prev.category, next.category), world, &w, &self.client, t);
        let plan = a.plan.clone();
        let payload = match res {
            Ok(revs) => json!({"reason": "emotion", "emotion": pair, "applied": true, "revisions": revs, "plan": plan}),
            Err(e) => json!({"reason": "emotion", "emotion": pair, "applied": false, "error": e, "plan": plan}),
        };
        self.emit(id, "replan", payload)
    }

    fn speaker_texts(&mut self, id: &str) -> (String, String, String) {
        (self.name(id), self.character_text(id, None), self.traits_text(id))
    }

    fn dialogue_phase(&mut self, t: u32) -> Result<(), KernelError> {
        let dc = self.state.config.dialogue;
        let ids = self.ids();
        for a in &ids {
            if self.state.agents[a].busy_until > t {
                continue;
            }
            let factor = extraversion_factor(&self.traits_text(a));
            let mut hits = Vec::new();
            for b in ids.iter().filter(|b| *b != a) {
                let (ra, rb) = (&self.state.agents[a], &self.state.agents[b]);
                if rb.busy_until > t || self.state.cooldowns.get(&pair_key(a, b)).is_some_and(|c| *c > t) {
                    continue;
                }
                let dist = self.state.world.distance(&ra.position, &rb.position).unwrap_or(u32::MAX);
                let meeting = |x: &AgentRuntime, y: &str| {
                    x.plan
                        .entries
                        .iter()
                        .any(|e| e.status == EntryStatus::Active && e.goal == GoalTag::Appointment && e.partner.as_deref() == Some(y))
                };
                let forced = meeting(ra, b) || meeting(rb, a);
                if maybe_start_conversation(dist, dc.radius, dc.base_probability, factor, forced, &mut self.state.rng) {
                    hits.push(b.clone());
                }
            }
            let partner = match hits.len() {
                0 => continue,
                1 => hits.remove(0),
                _ => {
                    let me = self.speaker_texts(a);
                    let cands: Vec<(String, (String, String, String))> = hits.iter().map(|h| (h.clone(), self.speaker_texts(h))).collect();
                    let sp: Vec<Speaker<'_>> =
                        cands.iter().map(|(id, (n, c, tr))| Speaker { id, name: n, character: c, traits: tr }).collect();
                    let meq = Speaker { id: a, name: &me.0, character: &me.1, traits: &me.2 };
                    let day = self.state.clock.day;
                    select_partner(meq, &sp, &self.client, day, t).map(|p| p.0).unwrap_or_else(|_| hits[0].clone())
                }
            };
            self.converse(a, &partner, t)?;
        }
        Ok(())
    }

    fn converse(&mut self, a: &str, b: &str, t: u32) -> Result<(), KernelError> {
        let day = self.state.clock.day;
        let dc = self.state.config.dialogue;
        let (sa, sb) = (self.speaker_texts(a), self.speaker_texts(b));
        let spa = Speaker { id: a, name: &sa.0, character: &sa.1, traits: &sa.2 };
        let spb = Speaker { id: b, name: &sb.0, character: &sb.1, traits: &sb.2 };
        let (topic, degraded) = choose_topic(spa, spb, &self.state.agents[a].dialog, &self.client, day, t);
        let (conv, sums) = run_dialogue(spa, spb, &topic, dc.max_turns, &self.client, day, t);
        for (me, other, s) in [(a, b, &sums[0]), (b, a, &sums[1])] {
            let rt = self.state.agents.get_mut(me).expect("known agent");
            rt.dialog.push(other, DialogRecord { day, topic: topic.clone(), summary: s.clone() });
            rt.busy_until = conv.end_tick;
        }
        self.state.cooldowns.insert(pair_key(a, b), t + dc.cooldown_ticks);
        let summaries = json!({ a: sums[0], b: sums[1] });
        self.emit(a, "dialog", json!({"partner": b, "topic": topic, "conversation": conv, "summaries": summaries, "degraded": degraded}))?;
        let (na, nb) = (sa.0.clone(), sb.0.clone());
        self.perceive(a, &format!("{na} talked with {nb} about {topic}"), Some(GoalTag::Social), t)?;
        self.perceive(b, &format!("{nb} talked with {na} about {topic}"), Some(GoalTag::Social), t)
    }

    // ---- steering ----------------------------------------------------------------

    /// A user message to an idle agent. The exchange goes into the agent's
    /// dialog memory under partner `user` and occupies the agent for one tick.
    pub fn chat(&mut self, agent: &str, text: &str) -> Result<ChatMessage, KernelError> {
        self.ensure_running()?;
        let rt = self.state.agents.get(agent).ok_or_else(|| KernelError::UnknownAgent(agent.to_owned()))?;
        if text.trim().is_empty() {
            return Err(KernelError::EmptyText);
        }
        let SimClock { day, tick } = self.state.clock;
        if rt.busy_until > tick {
            return Err(KernelError::Busy(agent.to_owned()));
        }
        let history: Vec<String> = rt.dialog.with("user").iter().map(|r| r.summary.clone()).collect();
        let name = self.name(agent);
        let character = self.character_text(agent, None);
        let ctx = Context::new().with("name", name.as_str()).with("character", character).with("text", text).with("history", history);
        let r = self.client.complete(&PromptRequest::new(PromptKind::ChatReply, agent, ctx).at(day, tick))?;
        let reply = r.str("reply").to_owned();
        let summary = r.str("summary").to_owned();
        let topic: String = text.split_whitespace().take(8).collect::<Vec<_>>().join(" ");
        {
            let a = self.state.agents.get_mut(agent).expect("checked");
            a.dialog.push("user", DialogRecord { day, topic: topic.clone(), summary: summary.clone() });
            a.busy_until = a.busy_until.max(tick + 1);
        }
        self.emit("", "command", json!({"kind": "chat", "agent": agent, "text": text}))?;
        self.emit(agent, "dialog", json!({"partner": "user", "topic": topic, "text": text, "reply": reply, "summary": summary}))?;
        self.perceive(agent, &format!("{name} chatted with a visitor about {topic}"), Some(GoalTag::Social), tick)?;
        Ok(ChatMessage { agent: agent.to_owned(), text: text.to_owned(), reply, day, tick })
    }

    /// Validates a world CSV and stages it for the next day boundary.
    pub fn stage_world(&mut self, csv: &str) -> Result<StagedWorld, Vec<RowError>> {
        if self.is_finished() {
            return Err(vec![RowError { row: 0, message: "the run is finished".into() }]);
        }
        let next = load_world_with(csv.as_bytes(), self.state.config.grid())?;
        let homeless: Vec<RowError> = self
            .state
            .agents
            .values()
            .filter(|a| !next.place(&a.home).is_some_and(|p| p.affords(GoalTag::Rest)))
            .map(|a| RowError { row: 0, message: format!("home {} of {} is missing or cannot Rest", a.home, a.id) })
            .collect();
        if !homeless.is_empty() {
            return Err(homeless);
        }
        let SimClock { day, .. } = self.state.clock;
        let effective_day = if self.state.phase == DayPhase::Morning { day } else { day + 1 };
        let staged = StagedWorld { csv: csv.to_owned(), diff: self.state.world.diff(&next), effective_day };
        self.state.staged = Some(staged.clone());
        let _ = self.emit("", "command", json!({"kind": "env_update", "csv": csv, "diff": staged.diff, "effective_day": effective_day}));
        Ok(staged)
    }

    // ---- day end ---------------------------------------------------------------------

    fn end_day(&mut self) -> Result<(), KernelError> {
        let day = self.state.clock.day;
        let cfg = self.state.config.clone();
        for id in self.ids() {
            self.finish_entries(&id, None)?;
            let name = self.name(&id);

            let filter_text = if self.simple() {
                self.full_text(&id)
            } else {
                let cs = &self.state.agents[&id].structure;
                format!("{} {} {}", cs.traits.prose, cs.conflict, cs.preference.text())
            };
            let short = std::mem::take(&mut self.state.agents.get_mut(&id).expect("known agent").short_term);
            let out = filter_memories(&id, &name, day, &short, &filter_text, &self.client);
            let a = self.state.agents.get_mut(&id).expect("known agent");
            a.long_term.extend(out.records.iter().cloned());
            let decay = decay_memories(&id, &name, &mut a.long_term, cfg.memory_capacity, cfg.blur_batch, &self.client, day);
            let store = a.long_term.clone();
            self.emit(&id, "memory", json!({"new": out.records, "store": store, "degraded": out.degraded.or(decay)}))?;

            if !cfg.ablation.disable_insight {
                let a = &self.state.agents[&id];
                let (events, lt) = (a.day_events.clone(), a.long_term.clone());
                let full = self.full_text(&id);
                let ins = generate_insight(&id, &name, day, &events, &lt, &full, &self.client);
                self.state.agents.get_mut(&id).expect("known agent").insights.push(ins.clone());
                self.emit(&id, "insight", json!({"insight": ins}))?;
            }

            if !cfg.ablation.disable_growth {
                let a = &self.state.agents[&id];
                let insight = a.insights.last().filter(|i| i.day == day).cloned().unwrap_or(InsightRecord {
                    day,
                    reflection: String::new(),
                    theme: String::new(),
                    degraded: true,
                });
                let summary: Vec<&str> = a.day_events.iter().take(12).map(|e| e.text.as_str()).collect();
                let summary = summary.join("; ");
                let cs = a.structure.clone();
                let stages: Vec<PromptKind> = GROWTH_STAGES.to_vec();
                match grow_character(&id, &insight, &summary, &cs, &self.client) {
                    Ok((next, delta)) => {
                        let a = self.state.agents.get_mut(&id).expect("known agent");
                        a.structure = next.clone();
                        a.summaries.clear();
                        self.emit(&id, "growth", json!({"applied": true, "stages": stages, "delta": delta, "structure": next}))?;
                    }
                    Err(e) => {
                        self.emit(&id, "growth", json!({"applied": false, "stages": stages, "error": e.to_string(), "structure": cs}))?;
                    }
                }
            }
            let text = self.full_text(&id);
            self.state.agents.get_mut(&id).expect("known agent").day_texts.push((day, text));
        }

        let last = day >= cfg.days;
        if last && cfg.bfi {
            for id in self.ids() {
                let name = self.name(&id);
                let texts = self.state.agents[&id].day_texts.clone();
                match administer_bfi(&self.client, &id, &name, &texts) {
                    Ok(sheets) => {
                        let scores: Vec<_> = sheets.iter().map(score_bfi).collect();
                        self.emit(&id, "bfi", json!({"sheets": sheets, "scores": scores}))?;
                    }
                    Err(e) => self.emit(&id, "warn", json!({"message": format!("assessment failed: {e}")}))?,
                }
            }
        }
        let overfull = self.state.ledger.overfull();
        self.emit("", "day_end", json!({"day": day, "overfull": overfull}))?;
        self.log.sync()?;
        self.state.clock = SimClock { day: day + 1, tick: 0 };
        self.state.phase = if last { DayPhase::Finished } else { DayPhase::Morning };
        Ok(())
    }

    // ---- views -------------------------------------------------------------------------

    /// Run-wide snapshot: clock, positions and status.
    pub fn snapshot(&self) -> Value {
        let w = self.window();
        let s = &self.state;
        let agents: BTreeMap<&str, Value> = s
            .agents
            .iter()
            .map(|(id, a)| {
                let place = s.world.place(&a.position);
                let current = a.plan.entries.iter().find(|e| e.status == EntryStatus::Active);
                (
                    id.as_str(),
                    json!({
                        "name": a.structure.name(),
                        "position": a.position,
                        "x": place.map(|p| p.x),
                        "y": place.map(|p| p.y),
                        "busy": a.busy_until > s.clock.tick,
                        "emotion": a.emotion,
                        "activity": current,
                        "revision": a.structure.revision,
                    }),
                )
            })
            .collect();
        json!({
            "clock": {"day": s.clock.day, "tick": s.clock.tick, "time": format_hhmm(w.minute_of(s.clock.tick.min(w.ticks_per_day())))},
            "phase": s.phase,
            "paused": s.paused,
            "days": s.config.days,
            "seq": self.log.next_seq(),
            "grid": s.world.grid,
            "places": s.world.places,
            "agents": agents,
            "staged": s.staged.as_ref().map(|x| json!({"diff": x.diff, "effective_day": x.effective_day})),
        })
    }

    /// Inspector payload for one agent.
    pub fn agent_view(&self, id: &str) -> Option<Value> {
        self.state.agents.get(id).map(to_value)
    }

    /// The state replay must reproduce.
    pub fn replay_view(&self) -> ReplayView {
        ReplayView { day: self.state.clock.day, agents: self.state.agents.iter().map(|(id, a)| (id.clone(), AgentView::of(a))).collect() }
    }

    /// Invariant violations in the current state (empty when healthy).
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = self.state.ledger.overfull();
        let w = self.window();
        for (id, a) in &self.state.agents {
            if self.state.phase != DayPhase::Morning && a.plan.day == self.state.clock.day {
                out.extend(check_plan(&a.plan, &self.state.world, &a.home, &w).into_iter().map(|p| format!("{id}: {p}")));
            }
            if a.long_term.len() > self.state.config.memory_capacity {
                out.push(format!("{id}: long-term store over capacity"));
            }
        }
        out
    }
}

/// A command as recorded in the log, with the clock it was applied at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub day: u32,
    pub tick: u32,
    pub command: Command,
}

/// The accepted commands of a log, in order.
pub fn transcript(records: &[LogRecord]) -> Result<Vec<TranscriptEntry>, ReplayError> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.kind == "command") {
        let p = &r.payload;
        let s = |k: &str| p[k].as_str().unwrap_or_default().to_owned();
        let command = match p["kind"].as_str().unwrap_or_default() {
            "step" => Command::Step,
            "run_day" => Command::RunDay,
            "pause" => Command::Pause,
            "resume" => Command::Resume,
            "chat" => Command::Chat { agent: s("agent"), text: s("text") },
            "env_update" => Command::EnvUpdate { csv: s("csv") },
            other => return Err(ReplayError { seq: r.seq, kind: r.kind.clone(), message: format!("unknown command {other:?}") }),
        };
        out.push(TranscriptEntry { day: r.day, tick: r.tick, command });
    }
    Ok(out)
}

/// Re-drives a fresh kernel through a command transcript. Between commands
/// the kernel steps on its own, as a running server does; it stops once it
/// has written `until` records (or the run ends).
pub fn replay_transcript(mut kernel: Kernel, entries: &[TranscriptEntry], until: u64) -> Result<Kernel, KernelError> {
    for e in entries {
        while (kernel.state.clock.day, kernel.state.clock.tick) != (e.day, e.tick) {
            if kernel.is_finished() {
                return Err(KernelError::Save(format!("transcript command at day {} tick {} is never reached", e.day, e.tick)));
            }
            kernel.step()?;
        }
        kernel.apply(e.command.clone())?;
    }
    while kernel.log.next_seq() < until && !kernel.is_finished() {
        kernel.step()?;
    }
    Ok(kernel)
}

/// Result of a CLI-style run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub log_path: PathBuf,
    pub hash: String,
    pub records: u64,
}

/// Runs `config` to completion, writing the log to `log_path`.
pub fn run_simulation(config: RunConfig, log_path: &Path) -> Result<RunSummary, KernelError> {
    let mut k = Kernel::new(config, EventLog::create(log_path)?)?;
    k.run()?;
    let bytes = std::fs::read(log_path)?;
    Ok(RunSummary { log_path: log_path.to_owned(), hash: content_hash(&bytes), records: k.log().next_seq() })
}

#[cfg(test)]
mod tests;
