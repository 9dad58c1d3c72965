//! Scripted demonstrator and the leveled CPU opponents built on it.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arena::action::{ActionClass, ACTION_COUNT};
use crate::arena::state::GameState;
use crate::error::{arg_err, Result};

/// Distance from the ledge at which the expert stops walking outwards.
const EDGE_MARGIN: f32 = 8.0;
/// No jumping this close to the ledge.
const JUMP_MARGIN: f32 = 20.0;

/// Priority rules for fighter `me`, with the attack range scaled by
/// `range_scale`. `rng` is drawn only when the rules reach the approach case.
pub fn expert_rules<R: Rng + ?Sized>(
    state: &GameState,
    me: usize,
    range_scale: f32,
    rng: &mut R,
) -> ActionClass {
    let c = &state.constants;
    let s = &state.fighters[me];
    let o = &state.fighters[1 - me];
    if !s.active() {
        return ActionClass::None;
    }
    // R1: recover when off the stage.
    if s.off_stage(c) {
        if s.recovery_available && s.vy <= 0.0 {
            return ActionClass::UpSpecial;
        }
        return ActionClass::moving(-(s.x.signum() as i32), false);
    }
    // Nothing to chase while the opponent is away or falling.
    if !o.active() || o.off_stage(c) {
        return ActionClass::None;
    }
    let dx = o.x - s.x;
    let dy = o.y - s.y;
    // R2: strike when in range.
    if dx.abs() <= c.attack_range * range_scale {
        if dy > c.h_above && dy <= c.down_special_reach {
            return ActionClass::DownSpecial;
        }
        if dy.abs() <= c.attack_reach_y {
            return ActionClass::Attack;
        }
    } else if dy > c.attack_reach_y && dx.abs() <= c.special_range {
        return ActionClass::Special;
    }
    // R3: close the distance, jumping when the opponent is higher.
    let close = dx.abs() <= c.attack_range * range_scale;
    let mut dir = if close { 0 } else { dx.signum() as i32 };
    if (s.x + dir as f32 * EDGE_MARGIN).abs() > c.stage_half_width {
        dir = 0;
    }
    let jump = dy > c.attack_reach_y && s.x.abs() < c.stage_half_width - JUMP_MARGIN;
    let action = ActionClass::moving(dir, jump);
    // R4: hesitate.
    if rng.random::<f64>() < c.p_idle {
        ActionClass::None
    } else {
        action
    }
}

pub fn expert_policy<R: Rng + ?Sized>(state: &GameState, me: usize, rng: &mut R) -> ActionClass {
    expert_rules(state, me, 1.0, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpuLevel {
    pub level: u8,
    pub reaction_delay: usize,
    pub action_noise: f64,
    pub aggression: f32,
}

impl CpuLevel {
    pub fn new(level: u8) -> Result<Self> {
        let (reaction_delay, action_noise, aggression) = match level {
            3 => (12, 0.3, 0.8),
            6 => (6, 0.15, 0.9),
            9 => (2, 0.05, 1.0),
            _ => return Err(arg_err!("cpu level must be 3, 6 or 9, got {level}")),
        };
        Ok(Self {
            level,
            reaction_delay,
            action_noise,
            aggression,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CpuDecision {
    pub action: ActionClass,
    /// Whether the noise draw replaced the rule-based action.
    pub random: bool,
}

/// One CPU decision from an already delayed snapshot.
pub fn cpu_policy<R: Rng + ?Sized>(
    snapshot: &GameState,
    level: &CpuLevel,
    me: usize,
    rng: &mut R,
) -> CpuDecision {
    if rng.random::<f64>() < level.action_noise {
        let action = ActionClass::ALL[rng.random_range(0..ACTION_COUNT)];
        return CpuDecision { action, random: true };
    }
    CpuDecision {
        action: expert_rules(snapshot, me, level.aggression, rng),
        random: false,
    }
}

/// Anything that can pick an action for one fighter each tick.
pub trait Controller {
    fn act(&mut self, state: &GameState, me: usize) -> ActionClass;
}

pub struct Expert {
    rng: ChaCha8Rng,
}

impl Expert {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for Expert {
    fn act(&mut self, state: &GameState, me: usize) -> ActionClass {
        expert_policy(state, me, &mut self.rng)
    }
}

/// Leveled opponent that reacts to the world as it was `reaction_delay`
/// ticks ago.
pub struct CpuPlayer {
    level: CpuLevel,
    rng: ChaCha8Rng,
    history: VecDeque<GameState>,
}

impl CpuPlayer {
    pub fn new(level: CpuLevel, seed: u64) -> Self {
        Self {
            level,
            rng: ChaCha8Rng::seed_from_u64(seed),
            history: VecDeque::with_capacity(level.reaction_delay + 1),
        }
    }

    pub fn decide(&mut self, state: &GameState, me: usize) -> CpuDecision {
        self.history.push_back(state.clone());
        while self.history.len() > self.level.reaction_delay + 1 {
            self.history.pop_front();
        }
        let snapshot = self.history.front().expect("just pushed");
        cpu_policy(snapshot, &self.level, me, &mut self.rng)
    }
}

impl Controller for CpuPlayer {
    fn act(&mut self, state: &GameState, me: usize) -> ActionClass {
        self.decide(state, me).action
    }
}

/// Always presses the same thing.
pub struct Constant(pub ActionClass);

impl Controller for Constant {
    fn act(&mut self, _: &GameState, _: usize) -> ActionClass {
        self.0
    }
}

impl<F: FnMut(&GameState, usize) -> ActionClass> Controller for F {
    fn act(&mut self, state: &GameState, me: usize) -> ActionClass {
        self(state, me)
    }
}
