//! Deterministic two-fighter platform duel: physics, rendering, a scripted
//! demonstrator and leveled CPU opponents.

pub mod action;
pub mod constants;
pub mod expert;
pub mod matches;
pub mod render;
pub mod state;

pub use action::{ActionClass, ACTION_COUNT};
pub use constants::ArenaConstants;
pub use expert::{
    cpu_policy, expert_policy, expert_rules, Constant, Controller, CpuDecision, CpuLevel,
    CpuPlayer, Expert,
};
pub use matches::{run_match, run_match_observed, KoRecord, MatchResult};
pub use render::{render, Frame, NATIVE_HEIGHT, NATIVE_WIDTH, PALETTES};
pub use state::{ArenaEvent, FighterState, GameState, Move};
