//! Agents that plan, act, talk, feel, remember, reflect and grow inside a
//! deterministic tick-based sandbox, plus the log analysis used to measure
//! how much they change.

pub mod behavior;
pub mod bfi;
pub mod character;
pub mod clock;
pub mod environment;
pub mod evaluation;
pub mod goal;
pub mod lexicon;
pub mod lmclient;
pub mod personality;
pub mod simkernel;
