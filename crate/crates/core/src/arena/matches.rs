use serde::{Deserialize, Serialize};

use crate::arena::action::ActionClass;
use crate::arena::constants::ArenaConstants;
use crate::arena::expert::Controller;
use crate::arena::state::{ArenaEvent, GameState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KoRecord {
    pub tick: u64,
    pub fighter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Damage credited to each side, cumulative across the opponent's stocks.
    pub damage_dealt: [f32; 2],
    pub stocks_lost: [u32; 2],
    pub ko_log: Vec<KoRecord>,
    pub ticks: u64,
}

/// Plays a match to completion, calling `observe` with every state and the
/// actions chosen in it before the state is advanced.
pub fn run_match_observed<F>(
    p1: &mut dyn Controller,
    p2: &mut dyn Controller,
    constants: ArenaConstants,
    tick_limit: u64,
    seed: u64,
    mut observe: F,
) -> MatchResult
where
    F: FnMut(&GameState, [ActionClass; 2]),
{
    let mut state = GameState::new(constants, tick_limit.max(1), seed);
    let mut result = MatchResult {
        damage_dealt: [0.0; 2],
        stocks_lost: [0; 2],
        ko_log: Vec::new(),
        ticks: 0,
    };
    while !state.match_over {
        let actions = [p1.act(&state, 0), p2.act(&state, 1)];
        observe(&state, actions);
        state.advance(actions[0], actions[1]).expect("match not over");
        for e in &state.events {
            match *e {
                ArenaEvent::Hit { attacker, damage, .. } => result.damage_dealt[attacker] += damage,
                ArenaEvent::Ko { fighter, .. } => {
                    result.stocks_lost[fighter] += 1;
                    result.ko_log.push(KoRecord {
                        tick: state.tick,
                        fighter,
                    });
                }
            }
        }
    }
    result.ticks = state.tick;
    result
}

pub fn run_match(
    p1: &mut dyn Controller,
    p2: &mut dyn Controller,
    constants: ArenaConstants,
    tick_limit: u64,
    seed: u64,
) -> MatchResult {
    run_match_observed(p1, p2, constants, tick_limit, seed, |_, _| {})
}
