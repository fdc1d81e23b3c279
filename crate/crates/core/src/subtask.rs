use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Phase of the collaborative drilling task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Subtask {
    /// Operator has not grabbed the handle yet.
    Idle = 1,
    /// Robot guided through free space.
    Driving = 2,
    /// Drill bit in the workpiece.
    Contact = 3,
}

impl Subtask {
    pub const ALL: [Subtask; 3] = [Subtask::Idle, Subtask::Driving, Subtask::Contact];

    pub fn id(self) -> u8 {
        self as u8
    }

    /// Zero-based class index used by the classifier.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Subtask::Idle),
            2 => Some(Subtask::Driving),
            3 => Some(Subtask::Contact),
            _ => None,
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Subtask::Idle => "Idle",
            Subtask::Driving => "Driving",
            Subtask::Contact => "Contact",
        };
        f.write_str(name)
    }
}

impl FromStr for Subtask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(Subtask::from_id)
            .ok_or_else(|| Error::Data(format!("bad subtask label {s:?}")))
    }
}
