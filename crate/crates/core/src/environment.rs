//! Building / place / goal world model, CSV ingestion, spot occupancy and
//! grid travel times.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clock::{format_hhmm, parse_hhmm, Minute};
use crate::goal::GoalTag;

pub const HEADER: [&str; 9] = ["building", "place", "x", "y", "capacity", "affordances", "description", "open", "close"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Building {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Place {
    pub building: String,
    pub name: String,
    pub x: u32,
    pub y: u32,
    pub capacity: u32,
    pub affordances: Vec<GoalTag>,
    pub description: String,
    pub open: Minute,
    pub close: Minute,
}

impl Place {
    /// `building/place`, the identifier plans and the ledger use.
    pub fn place_ref(&self) -> String {
        format!("{}/{}", self.building, self.name)
    }

    pub fn affords(&self, g: GoalTag) -> bool {
        self.affordances.contains(&g)
    }

    pub fn is_open(&self, start: Minute, end: Minute) -> bool {
        self.open <= start && end <= self.close
    }
}

/// Prompt-facing view of a place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceCard {
    #[serde(rename = "ref")]
    pub place_ref: String,
    pub x: u32,
    pub y: u32,
    pub capacity: u32,
    pub goals: Vec<String>,
    pub open: String,
    pub close: String,
}

/// Prompt-facing view of the day window and movement rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowCard {
    pub start: String,
    pub end: String,
    pub tick: u32,
    pub speed: u32,
}

impl Default for WindowCard {
    fn default() -> Self {
        Self { start: "06:00".into(), end: "23:00".into(), tick: 15, speed: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("row {row}: {message}")]
pub struct RowError {
    /// 1-based, header is row 1.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("{0}")]
    Row(RowError),
    #[error("unknown place {0:?}")]
    UnknownPlace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: u32,
    pub height: u32,
    pub tick_minutes: u32,
    pub move_speed: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { width: 64, height: 64, tick_minutes: 15, move_speed: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldMap {
    pub buildings: Vec<Building>,
    /// CSV row order.
    pub places: Vec<Place>,
    pub grid: GridSpec,
}

/// Parses and validates a world CSV, stopping at the first bad row.
pub fn load_world(csv_bytes: &[u8]) -> Result<WorldMap, WorldError> {
    load_world_with(csv_bytes, GridSpec::default()).map_err(|mut errs| WorldError::Row(errs.remove(0)))
}

/// Parses a world CSV and reports every bad row.
pub fn load_world_with(csv_bytes: &[u8], grid: GridSpec) -> Result<WorldMap, Vec<RowError>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(csv_bytes);
    let mut errors = Vec::new();
    let mut places: Vec<Place> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut saw_header = false;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError { row, message: format!("unreadable row: {e}") });
                continue;
            }
        };
        if row == 1 {
            saw_header = true;
            if let Some(bad) = rec.iter().map(str::trim).find(|c| !HEADER.contains(c)) {
                errors.push(RowError { row, message: format!("unknown column {bad:?}") });
                return Err(errors);
            }
            let cols: Vec<&str> = rec.iter().map(str::trim).collect();
            if cols != HEADER {
                errors.push(RowError { row, message: format!("header must be {}", HEADER.join(",")) });
                return Err(errors);
            }
            continue;
        }
        match parse_row(&rec, grid) {
            Ok(p) => {
                if !seen.insert((p.building.clone(), p.name.clone())) {
                    errors.push(RowError { row, message: format!("duplicate place {:?} in building {:?}", p.name, p.building) });
                } else {
                    places.push(p);
                }
            }
            Err(message) => errors.push(RowError { row, message }),
        }
    }
    if !saw_header {
        errors.push(RowError { row: 1, message: "missing header".into() });
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut buildings: Vec<Building> = Vec::new();
    for p in &places {
        if !buildings.iter().any(|b| b.name == p.building) {
            let n = places.iter().filter(|q| q.building == p.building).count();
            buildings.push(Building { name: p.building.clone(), description: format!("{} ({n} places)", p.building) });
        }
    }
    Ok(WorldMap { buildings, places, grid })
}

fn parse_row(rec: &csv::StringRecord, grid: GridSpec) -> Result<Place, String> {
    if rec.len() != HEADER.len() {
        return Err(format!("expected {} fields, found {}", HEADER.len(), rec.len()));
    }
    let f = |i: usize| rec.get(i).unwrap_or_default().trim();
    let building = f(0);
    let name = f(1);
    if building.is_empty() {
        return Err("empty building".into());
    }
    if name.is_empty() {
        return Err("empty place".into());
    }
    if building.contains('/') || name.contains('/') {
        return Err("names may not contain '/'".into());
    }
    let coord = |s: &str, max: u32| s.parse::<u32>().ok().filter(|v| *v < max);
    let x = coord(f(2), grid.width).ok_or_else(|| format!("bad coordinate x {:?}", f(2)))?;
    let y = coord(f(3), grid.height).ok_or_else(|| format!("bad coordinate y {:?}", f(3)))?;
    let capacity: i64 = f(4).parse().map_err(|_| format!("bad capacity {:?}", f(4)))?;
    if capacity < 1 {
        return Err("capacity < 1".into());
    }
    let mut affordances = Vec::new();
    for a in f(5).split(';').map(str::trim).filter(|a| !a.is_empty()) {
        let g: GoalTag = a.parse().map_err(|e| format!("{e}"))?;
        if !affordances.contains(&g) {
            affordances.push(g);
        }
    }
    let open = parse_hhmm(f(7)).ok_or_else(|| format!("bad open time {:?}", f(7)))?;
    let close = parse_hhmm(f(8)).ok_or_else(|| format!("bad close time {:?}", f(8)))?;
    if open >= close {
        return Err("open must be before close".into());
    }
    Ok(Place {
        building: building.into(),
        name: name.into(),
        x,
        y,
        capacity: capacity as u32,
        affordances,
        description: f(6).into(),
        open,
        close,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldDiff {
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub changed: Vec<String>,
}

impl WorldDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed.is_empty()
    }
}

impl WorldMap {
    pub fn place(&self, place_ref: &str) -> Option<&Place> {
        self.places.iter().find(|p| p.place_ref() == place_ref)
    }

    fn lookup(&self, place_ref: &str) -> Result<&Place, WorldError> {
        self.place(place_ref).ok_or_else(|| WorldError::UnknownPlace(place_ref.into()))
    }

    /// Places affording `goal`, in CSV order.
    pub fn places_for_goal(&self, goal: GoalTag) -> Vec<&Place> {
        self.places.iter().filter(|p| p.affords(goal)).collect()
    }

    pub fn distance(&self, from: &str, to: &str) -> Result<u32, WorldError> {
        let a = self.lookup(from)?;
        let b = self.lookup(to)?;
        Ok(a.x.abs_diff(b.x) + a.y.abs_diff(b.y))
    }

    /// Ticks to walk between two places.
    pub fn travel_time(&self, from: &str, to: &str) -> Result<u32, WorldError> {
        Ok(self.distance(from, to)?.div_ceil(self.grid.move_speed.max(1)))
    }

    pub fn travel_minutes(&self, from: &str, to: &str) -> Result<Minute, WorldError> {
        Ok(self.travel_time(from, to)? * self.grid.tick_minutes)
    }

    pub fn cards(&self) -> Vec<PlaceCard> {
        self.places
            .iter()
            .map(|p| PlaceCard {
                place_ref: p.place_ref(),
                x: p.x,
                y: p.y,
                capacity: p.capacity,
                goals: p.affordances.iter().map(|g| g.name().to_owned()).collect(),
                open: format_hhmm(p.open),
                close: format_hhmm(p.close),
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for p in &self.places {
            let aff: Vec<&str> = p.affordances.iter().map(|g| g.name()).collect();
            w.write_record([
                p.building.as_str(),
                p.name.as_str(),
                &p.x.to_string(),
                &p.y.to_string(),
                &p.capacity.to_string(),
                &aff.join(";"),
                p.description.as_str(),
                &format_hhmm(p.open),
                &format_hhmm(p.close),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Places added, removed or changed going from `self` to `next`.
    pub fn diff(&self, next: &WorldMap) -> WorldDiff {
        let old: BTreeMap<String, &Place> = self.places.iter().map(|p| (p.place_ref(), p)).collect();
        let new: BTreeMap<String, &Place> = next.places.iter().map(|p| (p.place_ref(), p)).collect();
        WorldDiff {
            added: new.keys().filter(|k| !old.contains_key(*k)).cloned().collect(),
            removed: old.keys().filter(|k| !new.contains_key(*k)).cloned().collect(),
            changed: new.iter().filter(|(k, p)| old.get(*k).is_some_and(|o| o != *p)).map(|(k, _)| k.clone()).collect(),
        }
    }
}

/// One interaction spot. `holder` is the agent that claimed it; for a
/// companion reservation the occupant differs from the holder until the
/// companion arrives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spot {
    pub occupant: String,
    pub holder: String,
    pub arrived: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimResult {
    /// Took 1 + companions spots.
    Claimed,
    /// Took up a spot reserved earlier by a companion.
    Joined,
    /// Not enough free spots; nothing changed.
    Occupied,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("unknown place {0:?}")]
    UnknownPlace(String),
    #[error("agent {0:?} already holds a spot")]
    AlreadyHolding(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyLedger {
    capacity: BTreeMap<String, u32>,
    spots: BTreeMap<String, Vec<Spot>>,
}

impl OccupancyLedger {
    pub fn new(world: &WorldMap) -> Self {
        Self { capacity: world.places.iter().map(|p| (p.place_ref(), p.capacity)).collect(), spots: BTreeMap::new() }
    }

    pub fn claimed(&self, place: &str) -> usize {
        self.spots.get(place).map_or(0, Vec::len)
    }

    pub fn capacity(&self, place: &str) -> Option<u32> {
        self.capacity.get(place).copied()
    }

    pub fn spots(&self, place: &str) -> &[Spot] {
        self.spots.get(place).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_spots(&self) -> &BTreeMap<String, Vec<Spot>> {
        &self.spots
    }

    /// Place where `agent` currently occupies a spot it has arrived at.
    pub fn holding(&self, agent: &str) -> Option<&str> {
        self.spots.iter().find(|(_, v)| v.iter().any(|s| s.occupant == agent && s.arrived)).map(|(k, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.spots.values().all(Vec::is_empty)
    }

    /// Claims a spot for `agent` plus one per companion, all or nothing.
    pub fn claim_spot(&mut self, place: &str, agent: &str, companions: &[&str]) -> Result<ClaimResult, LedgerError> {
        let cap = *self.capacity.get(place).ok_or_else(|| LedgerError::UnknownPlace(place.into()))? as usize;
        if self.holding(agent).is_some() {
            return Err(LedgerError::AlreadyHolding(agent.into()));
        }
        let spots = self.spots.entry(place.into()).or_default();
        if let Some(s) = spots.iter_mut().find(|s| s.occupant == agent && !s.arrived) {
            s.arrived = true;
            return Ok(ClaimResult::Joined);
        }
        let companions: Vec<&str> = companions.iter().copied().filter(|c| *c != agent && !spots.iter().any(|s| s.occupant == *c)).collect();
        if spots.len() + 1 + companions.len() > cap {
            if spots.is_empty() {
                self.spots.remove(place);
            }
            return Ok(ClaimResult::Occupied);
        }
        spots.push(Spot { occupant: agent.into(), holder: agent.into(), arrived: true });
        for c in companions {
            spots.push(Spot { occupant: c.into(), holder: agent.into(), arrived: false });
        }
        Ok(ClaimResult::Claimed)
    }

    /// Frees the agent's own spot and every spot it reserved. Idempotent.
    pub fn release_spot(&mut self, agent: &str) {
        for v in self.spots.values_mut() {
            v.retain(|s| s.occupant != agent && s.holder != agent);
        }
        self.spots.retain(|_, v| !v.is_empty());
    }

    /// Places over capacity (should always be empty).
    pub fn overfull(&self) -> Vec<String> {
        self.spots.iter().filter(|(k, v)| v.len() as u32 > self.capacity.get(*k).copied().unwrap_or(0)).map(|(k, _)| k.clone()).collect()
    }
}
