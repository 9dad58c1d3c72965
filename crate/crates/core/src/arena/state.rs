use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arena::action::ActionClass;
use crate::arena::constants::ArenaConstants;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Attack,
    Special,
    DownSpecial,
}

impl Move {
    fn of(action: ActionClass) -> Option<Move> {
        match action {
            ActionClass::Attack => Some(Move::Attack),
            ActionClass::Special => Some(Move::Special),
            ActionClass::DownSpecial => Some(Move::DownSpecial),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FighterState {
    pub x: f32,
    pub y: f32,
    pub vx: f32,
    pub vy: f32,
    /// -1 faces left, 1 faces right.
    pub facing: i32,
    pub damage_percent: f32,
    pub stocks: u32,
    pub airborne: bool,
    pub attack_cooldown: u32,
    pub recovery_available: bool,
    pub palette_id: usize,
    pub hitstun: u32,
    /// Ticks left before a KO'd fighter reappears. Hidden and inert while > 0.
    pub respawn: u32,
    /// Move shown on screen and the ticks it stays visible.
    pub flash: Option<(Move, u32)>,
}

impl FighterState {
    fn spawn(x: f32, facing: i32, stocks: u32, palette_id: usize) -> Self {
        Self {
            x,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            facing,
            damage_percent: 0.0,
            stocks,
            airborne: false,
            attack_cooldown: 0,
            recovery_available: true,
            palette_id,
            hitstun: 0,
            respawn: 0,
            flash: None,
        }
    }

    pub fn active(&self) -> bool {
        self.respawn == 0 && self.stocks > 0
    }

    pub fn off_stage(&self, c: &ArenaConstants) -> bool {
        self.x.abs() > c.stage_half_width || self.y < 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArenaEvent {
    Hit {
        attacker: usize,
        kind: Move,
        damage: f32,
        /// Launch speed before gravity and drag act on it.
        knockback: f32,
    },
    Ko {
        fighter: usize,
        stocks_left: u32,
    },
}

#[derive(Clone, Debug)]
pub struct GameState {
    pub tick: u64,
    pub tick_limit: u64,
    pub fighters: [FighterState; 2],
    pub constants: Arc<ArenaConstants>,
    pub match_over: bool,
    /// Events produced by the most recent step.
    pub events: Vec<ArenaEvent>,
    rng: ChaCha8Rng,
}

impl PartialEq for GameState {
    fn eq(&self, other: &Self) -> bool {
        self.tick == other.tick
            && self.tick_limit == other.tick_limit
            && self.fighters == other.fighters
            && self.match_over == other.match_over
            && self.events == other.events
            && self.rng == other.rng
            && *self.constants == *other.constants
    }
}

fn approach(v: f32, target: f32, rate: f32) -> f32 {
    if (v - target).abs() <= rate {
        target
    } else {
        v + rate * (target - v).signum()
    }
}

impl GameState {
    pub fn new(constants: ArenaConstants, tick_limit: u64, seed: u64) -> Self {
        let c = Arc::new(constants);
        let fighters = [
            FighterState::spawn(c.spawn_x[0], 1, c.stocks, 0),
            FighterState::spawn(c.spawn_x[1], -1, c.stocks, 1),
        ];
        Self {
            tick: 0,
            tick_limit,
            fighters,
            constants: c,
            match_over: false,
            events: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn step(&self, a1: ActionClass, a2: ActionClass) -> Result<GameState> {
        let mut next = self.clone();
        next.advance(a1, a2)?;
        Ok(next)
    }

    /// In-place variant of [`GameState::step`].
    pub fn advance(&mut self, a1: ActionClass, a2: ActionClass) -> Result<()> {
        if self.match_over {
            return Err(Error::State("match is over".into()));
        }
        let c = Arc::clone(&self.constants);
        let actions = [a1, a2];
        self.tick += 1;
        self.events.clear();

        for i in 0..2 {
            let f = &mut self.fighters[i];
            if f.stocks == 0 {
                continue;
            }
            if f.respawn > 0 {
                f.respawn -= 1;
                if f.respawn == 0 {
                    *f = FighterState::spawn(0.0, 1, f.stocks, f.palette_id);
                }
                continue;
            }
            f.attack_cooldown = f.attack_cooldown.saturating_sub(1);
            f.hitstun = f.hitstun.saturating_sub(1);
            f.flash = f.flash.and_then(|(m, t)| (t > 1).then_some((m, t - 1)));
        }
        let acting = [0, 1].map(|i| self.fighters[i].active() && self.fighters[i].hitstun == 0);
        let active = [0, 1].map(|i| self.fighters[i].active());

        // Both attacks resolve against pre-move positions, so trades are symmetric.
        let mut hits = Vec::new();
        for i in 0..2 {
            let Some(kind) = Move::of(actions[i]) else { continue };
            let me = &self.fighters[i];
            if !acting[i] || me.attack_cooldown > 0 {
                continue;
            }
            let (cooldown, flash) = match kind {
                Move::Attack => (c.attack_cooldown, c.flash_ticks),
                Move::Special => (c.special_cooldown, c.flash_ticks),
                Move::DownSpecial => (c.down_special_cooldown, c.flash_ticks),
            };
            let opp = &self.fighters[1 - i];
            let dx = opp.x - me.x;
            let dy = opp.y - me.y;
            let landed = active[1 - i]
                && match kind {
                    Move::Attack => dx.abs() <= c.attack_range && dy.abs() <= c.attack_reach_y,
                    Move::Special => {
                        dx.abs() <= c.special_range
                            && dy >= -c.attack_reach_y
                            && dy <= c.special_reach_up
                    }
                    Move::DownSpecial => {
                        dx.abs() <= c.down_special_width && dy > 0.0 && dy <= c.down_special_reach
                    }
                };
            let dir = if dx != 0.0 { dx.signum() } else { me.facing as f32 };
            self.fighters[i].attack_cooldown = cooldown;
            self.fighters[i].flash = Some((kind, flash));
            if landed {
                hits.push((i, kind, dir));
            }
        }
        for (attacker, kind, dir) in hits {
            let (damage, base) = match kind {
                Move::Attack => (c.attack_damage, c.attack_knockback),
                Move::Special => (c.special_damage, c.special_knockback),
                Move::DownSpecial => (c.down_special_damage, c.down_special_knockback),
            };
            let v = &mut self.fighters[1 - attacker];
            let knockback = base * (1.0 + v.damage_percent / 100.0);
            v.damage_percent += damage;
            match kind {
                Move::DownSpecial => {
                    v.vx = dir * 0.3 * knockback;
                    v.vy = knockback;
                }
                _ => {
                    v.vx = dir * knockback;
                    v.vy = c.knockback_lift * knockback;
                }
            }
            v.airborne = true;
            v.hitstun = c.hitstun_base + (v.damage_percent / 10.0) as u32;
            self.events.push(ArenaEvent::Hit {
                attacker,
                kind,
                damage,
                knockback,
            });
        }

        for i in 0..2 {
            if !active[i] {
                continue;
            }
            let f = &mut self.fighters[i];
            let action = actions[i];
            let dir = if f.hitstun == 0 { action.direction() } else { 0 };
            if dir != 0 {
                f.facing = dir;
                f.vx = if f.airborne {
                    approach(f.vx, dir as f32 * c.walk_speed, c.air_accel)
                } else {
                    dir as f32 * c.walk_speed
                };
            } else if f.airborne {
                f.vx *= c.air_drag;
            } else {
                f.vx = approach(f.vx, 0.0, c.ground_friction);
            }
            if f.hitstun == 0 {
                if action.jumps() && !f.airborne {
                    f.vy = c.jump_speed;
                    f.airborne = true;
                } else if action == ActionClass::UpSpecial && f.recovery_available {
                    f.vy = c.recovery_speed;
                    f.airborne = true;
                    f.recovery_available = false;
                }
            }

            let prev_y = f.y;
            f.x += f.vx;
            if f.airborne {
                f.vy -= c.gravity;
                f.y += f.vy;
                if f.vy <= 0.0 && prev_y >= 0.0 && f.y <= 0.0 && f.x.abs() <= c.stage_half_width {
                    f.y = 0.0;
                    f.vy = 0.0;
                    f.airborne = false;
                    f.recovery_available = true;
                }
            } else if f.x.abs() > c.stage_half_width {
                f.airborne = true;
            }

            if f.y < c.y_kill || f.x.abs() > c.x_kill || f.y > c.y_ceiling {
                f.stocks -= 1;
                f.damage_percent = 0.0;
                f.vx = 0.0;
                f.vy = 0.0;
                f.hitstun = 0;
                f.attack_cooldown = 0;
                f.flash = None;
                f.respawn = c.respawn_ticks + self.rng.random_range(0..=c.respawn_jitter);
                self.events.push(ArenaEvent::Ko {
                    fighter: i,
                    stocks_left: f.stocks,
                });
            }
        }

        self.match_over =
            self.fighters.iter().any(|f| f.stocks == 0) || self.tick >= self.tick_limit;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh() -> GameState {
        GameState::new(ArenaConstants::default(), 1000, 7)
    }

    #[test]
    fn idle_grounded_fighters_stay_put() {
        let s = fresh();
        let n = s.step(ActionClass::None, ActionClass::None).unwrap();
        assert_eq!(n.tick, 1);
        for i in 0..2 {
            assert_eq!(n.fighters[i].x, s.fighters[i].x);
            assert_eq!(n.fighters[i].y, s.fighters[i].y);
        }
    }

    #[test]
    fn gravity_is_exact_per_tick() {
        let mut s = fresh();
        s.fighters[0].airborne = true;
        s.fighters[0].y = 80.0;
        s.fighters[0].vy = 1.5;
        let g = s.constants.gravity;
        let mut vy = 1.5f32;
        for _ in 0..10 {
            s.advance(ActionClass::None, ActionClass::None).unwrap();
            vy -= g;
            assert_eq!(s.fighters[0].vy, vy);
        }
    }

    fn knockback_at(damage: f32) -> f32 {
        let mut s = fresh();
        s.fighters[0].x = 0.0;
        s.fighters[1].x = 10.0;
        s.fighters[1].damage_percent = damage;
        s.advance(ActionClass::Attack, ActionClass::None).unwrap();
        match s.events[0] {
            ArenaEvent::Hit { knockback, .. } => knockback,
            _ => panic!("no hit"),
        }
    }

    #[test]
    fn knockback_doubles_at_hundred_percent() {
        assert_eq!(knockback_at(100.0), 2.0 * knockback_at(0.0));
    }

    #[test]
    fn down_special_only_hits_above() {
        let mut s = fresh();
        s.fighters[0].x = 0.0;
        s.fighters[1].x = 4.0;
        let level = s.step(ActionClass::DownSpecial, ActionClass::None).unwrap();
        assert!(level.events.is_empty());
        s.fighters[1].y = 20.0;
        s.fighters[1].airborne = true;
        let above = s.step(ActionClass::DownSpecial, ActionClass::None).unwrap();
        assert!(matches!(above.events[0], ArenaEvent::Hit { kind: Move::DownSpecial, .. }));
    }

    #[test]
    fn falling_off_costs_a_stock_and_resets_damage() {
        let mut s = fresh();
        s.fighters[0].x = -80.0;
        s.fighters[0].airborne = true;
        s.fighters[0].damage_percent = 42.0;
        let mut ticks = 0;
        while s.fighters[0].stocks == 3 {
            s.advance(ActionClass::None, ActionClass::None).unwrap();
            ticks += 1;
            assert!(ticks < 100);
        }
        let f = &s.fighters[0];
        assert_eq!(f.stocks, 2);
        assert_eq!(f.damage_percent, 0.0);
        assert!(f.respawn >= 30 && f.respawn <= 35);
        while s.fighters[0].respawn > 0 {
            s.advance(ActionClass::None, ActionClass::None).unwrap();
        }
        assert_eq!((s.fighters[0].x, s.fighters[0].y), (0.0, 0.0));
    }

    #[test]
    fn up_special_is_single_use_until_landing() {
        let mut s = fresh();
        s.advance(ActionClass::UpSpecial, ActionClass::None).unwrap();
        assert_eq!(s.fighters[0].vy, 8.0 - 0.4);
        assert!(!s.fighters[0].recovery_available);
        let vy = s.fighters[0].vy;
        s.advance(ActionClass::UpSpecial, ActionClass::None).unwrap();
        assert_eq!(s.fighters[0].vy, vy - 0.4);
    }

    #[test]
    fn finished_match_rejects_steps() {
        let mut s = GameState::new(ArenaConstants::default(), 2, 0);
        s.advance(ActionClass::None, ActionClass::None).unwrap();
        s.advance(ActionClass::None, ActionClass::None).unwrap();
        assert!(s.match_over);
        assert!(matches!(s.step(ActionClass::None, ActionClass::None), Err(Error::State(_))));
    }
}
