use serde::{Deserialize, Serialize};

/// Every tunable of the duel environment. World units are native render
/// pixels; the stage top sits at `y = 0` with `y` pointing up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConstants {
    pub gravity: f32,
    pub walk_speed: f32,
    pub ground_friction: f32,
    pub air_accel: f32,
    pub air_drag: f32,
    pub jump_speed: f32,
    pub recovery_speed: f32,
    pub stage_half_width: f32,
    pub y_kill: f32,
    pub x_kill: f32,
    pub y_ceiling: f32,
    pub spawn_x: [f32; 2],
    pub stocks: u32,
    pub fighter_width: f32,
    pub fighter_height: f32,

    pub attack_damage: f32,
    pub attack_range: f32,
    pub attack_reach_y: f32,
    pub attack_cooldown: u32,
    pub attack_knockback: f32,
    pub special_damage: f32,
    pub special_range: f32,
    pub special_reach_up: f32,
    pub special_cooldown: u32,
    pub special_knockback: f32,
    pub down_special_damage: f32,
    pub down_special_width: f32,
    pub down_special_reach: f32,
    pub down_special_cooldown: u32,
    pub down_special_knockback: f32,
    /// Vertical share of a hit's knockback speed.
    pub knockback_lift: f32,
    pub hitstun_base: u32,
    pub flash_ticks: u32,

    pub respawn_ticks: u32,
    /// Respawn delays get an extra uniform draw from `0..=respawn_jitter`.
    pub respawn_jitter: u32,

    pub p_idle: f64,
    /// Opponent height above which the expert switches to a down-special.
    pub h_above: f32,
    pub tick_rate: u32,
}

impl Default for ArenaConstants {
    fn default() -> Self {
        Self {
            gravity: 0.4,
            walk_speed: 2.0,
            ground_friction: 1.0,
            air_accel: 0.5,
            air_drag: 0.98,
            jump_speed: 6.0,
            recovery_speed: 8.0,
            stage_half_width: 60.0,
            y_kill: -40.0,
            x_kill: 110.0,
            y_ceiling: 170.0,
            spawn_x: [-30.0, 30.0],
            stocks: 3,
            fighter_width: 12.0,
            fighter_height: 16.0,

            attack_damage: 8.0,
            attack_range: 18.0,
            attack_reach_y: 14.0,
            attack_cooldown: 12,
            attack_knockback: 3.5,
            special_damage: 4.0,
            special_range: 44.0,
            special_reach_up: 60.0,
            special_cooldown: 20,
            special_knockback: 2.0,
            down_special_damage: 6.0,
            down_special_width: 14.0,
            down_special_reach: 40.0,
            down_special_cooldown: 16,
            down_special_knockback: 3.0,
            knockback_lift: 0.6,
            hitstun_base: 8,
            flash_ticks: 4,

            respawn_ticks: 30,
            respawn_jitter: 5,

            p_idle: 0.35,
            h_above: 10.0,
            tick_rate: 30,
        }
    }
}
