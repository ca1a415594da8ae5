use super::{Side, CHANNELS, FRAME_INTERVAL_S, MAP_PX};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnitInstance {
    pub type_id: usize,
    pub owner: Side,
    pub x: u32,
    pub y: u32,
}

impl UnitInstance {
    pub fn validate(&self, index: usize) -> Result<()> {
        let fail = |reason: String| Err(Error::InvalidFrame { unit: index, reason });
        if self.type_id >= CHANNELS {
            return fail(format!("type {} outside 0..{CHANNELS}", self.type_id));
        }
        if Side::of_type(self.type_id) != self.owner {
            return fail(format!("type {} cannot be owned by side {}", self.type_id, self.owner));
        }
        if self.x >= MAP_PX || self.y >= MAP_PX {
            return fail(format!("position ({}, {}) outside the {MAP_PX}px map", self.x, self.y));
        }
        Ok(())
    }
}

/// One snapshot of a replay.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub replay_id: String,
    pub t_seconds: u32,
    pub units: Vec<UnitInstance>,
    pub winner: Side,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if self.t_seconds % FRAME_INTERVAL_S != 0 {
            return Err(Error::invalid(format!(
                "frame time {} is not a multiple of {FRAME_INTERVAL_S}s",
                self.t_seconds
            )));
        }
        self.units.iter().enumerate().try_for_each(|(i, u)| u.validate(i))
    }

    pub fn units_of(&self, side: Side) -> impl Iterator<Item = &UnitInstance> {
        self.units.iter().filter(move |u| u.owner == side)
    }
}
