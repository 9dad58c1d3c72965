//! Velocity probe dataset. Player one stands still while the opponent hops
//! and wanders; each frame is labeled ATTACK while the opponent is rising
//! and NONE otherwise. A single frame shows where the opponent is but not
//! which way it is moving, so only models that see several frames can
//! separate the two labels in the air.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arena::{render, ActionClass, ArenaConstants, Controller, GameState, NATIVE_HEIGHT, NATIVE_WIDTH};
use crate::datapipe::episode::Episode;
use crate::datapipe::manifest::DatasetManifest;
use crate::datapipe::record::{derive_seed, write_dataset, RecordConfig};
use crate::error::{arg_err, Result};

/// Probability of jumping on any grounded tick.
pub const HOP_PROBABILITY: f64 = 0.08;
/// Probability of picking a new horizontal drift on any tick.
const DRIFT_CHANGE: f64 = 0.04;

/// Opponent that hops at random moments and drifts sideways, keeping away
/// from the ledges.
pub struct Hopper {
    rng: ChaCha8Rng,
    drift: i32,
}

impl Hopper {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            drift: 0,
        }
    }
}

impl Controller for Hopper {
    fn act(&mut self, state: &GameState, me: usize) -> ActionClass {
        let f = &state.fighters[me];
        if self.rng.random_bool(DRIFT_CHANGE) {
            self.drift = self.rng.random_range(-1..=1);
        }
        let margin = state.constants.stage_half_width - 20.0;
        if f.x > margin {
            self.drift = -1;
        } else if f.x < -margin {
            self.drift = 1;
        }
        let jump = !f.airborne && self.rng.random_bool(HOP_PROBABILITY);
        ActionClass::moving(self.drift, jump)
    }
}

/// ATTACK while the opponent of player one is rising, NONE otherwise.
pub fn probe_label(state: &GameState) -> ActionClass {
    let opp = &state.fighters[1];
    if opp.active() && opp.airborne && opp.vy > 0.0 {
        ActionClass::Attack
    } else {
        ActionClass::None
    }
}

pub fn record_probe_episode(constants: &ArenaConstants, seed: u64, tick_limit: u64) -> Result<Episode> {
    if tick_limit == 0 {
        return Err(arg_err!("tick limit must be positive"));
    }
    let mut hopper = Hopper::new(derive_seed(seed, 1, 0));
    let mut ep = Episode::new(NATIVE_WIDTH, NATIVE_HEIGHT, constants.tick_rate);
    let mut state = GameState::new(constants.clone(), tick_limit, seed);
    while !state.match_over {
        let a2 = hopper.act(&state, 1);
        let frame = render(&state, NATIVE_WIDTH, NATIVE_HEIGHT);
        ep.push(state.tick as u32, &frame, probe_label(&state))?;
        state.advance(ActionClass::None, a2)?;
    }
    Ok(ep)
}

/// Probe counterpart of `build_dataset`; `cfg.cpu_levels` is ignored.
pub fn build_probe_dataset(dir: &Path, cfg: &RecordConfig) -> Result<DatasetManifest> {
    write_dataset(dir, cfg, |i| {
        record_probe_episode(&cfg.constants, derive_seed(cfg.seed, 0, i as u64), cfg.tick_limit)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_vertical_motion() {
        let ep = record_probe_episode(&ArenaConstants::default(), 3, 400).unwrap();
        assert_eq!(ep.len(), 400);
        let rising = ep.labels.iter().filter(|&&l| l == ActionClass::Attack).count();
        // Hops are frequent enough that both labels are well represented.
        assert!(rising > 40 && rising < 200, "{rising}");
        assert!(ep.labels.iter().all(|&l| l == ActionClass::Attack || l == ActionClass::None));
    }

    #[test]
    fn deterministic() {
        let c = ArenaConstants::default();
        assert_eq!(record_probe_episode(&c, 9, 200).unwrap(), record_probe_episode(&c, 9, 200).unwrap());
    }
}
