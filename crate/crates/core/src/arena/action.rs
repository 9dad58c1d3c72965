use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error};

/// Combined input commands. Ids are dense and stable; files store the id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum ActionClass {
    None = 0,
    Left,
    Right,
    Jump,
    LeftJump,
    RightJump,
    Attack,
    Special,
    DownSpecial,
    UpSpecial,
}

pub const ACTION_COUNT: usize = 10;

impl ActionClass {
    pub const ALL: [ActionClass; ACTION_COUNT] = [
        ActionClass::None,
        ActionClass::Left,
        ActionClass::Right,
        ActionClass::Jump,
        ActionClass::LeftJump,
        ActionClass::RightJump,
        ActionClass::Attack,
        ActionClass::Special,
        ActionClass::DownSpecial,
        ActionClass::UpSpecial,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionClass::None => "NONE",
            ActionClass::Left => "LEFT",
            ActionClass::Right => "RIGHT",
            ActionClass::Jump => "JUMP",
            ActionClass::LeftJump => "LEFT_JUMP",
            ActionClass::RightJump => "RIGHT_JUMP",
            ActionClass::Attack => "ATTACK",
            ActionClass::Special => "SPECIAL",
            ActionClass::DownSpecial => "DOWN_SPECIAL",
            ActionClass::UpSpecial => "UP_SPECIAL",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|a| a.name()).collect()
    }

    /// Horizontal input direction: -1, 0 or 1.
    pub fn direction(self) -> i32 {
        match self {
            ActionClass::Left | ActionClass::LeftJump => -1,
            ActionClass::Right | ActionClass::RightJump => 1,
            _ => 0,
        }
    }

    pub fn jumps(self) -> bool {
        matches!(self, ActionClass::Jump | ActionClass::LeftJump | ActionClass::RightJump)
    }

    /// Movement with the given direction, optionally jumping.
    pub fn moving(dir: i32, jump: bool) -> Self {
        match (dir.signum(), jump) {
            (-1, false) => ActionClass::Left,
            (1, false) => ActionClass::Right,
            (-1, true) => ActionClass::LeftJump,
            (1, true) => ActionClass::RightJump,
            (_, true) => ActionClass::Jump,
            _ => ActionClass::None,
        }
    }
}

impl From<ActionClass> for u8 {
    fn from(a: ActionClass) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for ActionClass {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self, Error> {
        ActionClass::from_id(v as usize).ok_or_else(|| arg_err!("action id {v} out of range"))
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .iter()
            .copied()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| arg_err!("unknown action class {s:?}"))
    }
}
