use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{CHANNELS, SIDE_A_TYPES};
use crate::error::{Error, Result};

/// A player. `A` is the observer; `B` is the opponent hidden by fog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

impl Side {
    /// Class index used by the winner classifier (A wins = 0).
    pub fn index(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Side> {
        match i {
            0 => Some(Side::A),
            1 => Some(Side::B),
            _ => None,
        }
    }

    pub fn of_type(type_id: usize) -> Side {
        if type_id < SIDE_A_TYPES {
            Side::A
        } else {
            Side::B
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Side> {
        match s {
            "A" => Ok(Side::A),
            "B" => Ok(Side::B),
            other => Err(Error::invalid(format!("side must be \"A\" or \"B\", got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitType {
    pub type_id: usize,
    pub race: Side,
    pub name: String,
    pub sight_range_px: f64,
    pub combat_value: f64,
    pub is_combat: bool,
}

#[derive(Deserialize)]
struct Row {
    type_id: usize,
    race: String,
    name: String,
    sight_range_px: f64,
    combat_value: f64,
    is_combat: bool,
}

const BUILTIN: &str = include_str!("../../data/unit_types.csv");

/// The 66 unit types, indexed by feature-map channel.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitTypeTable {
    types: Vec<UnitType>,
}

impl UnitTypeTable {
    /// The registry shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_csv(BUILTIN.as_bytes()).expect("bundled registry is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv(file)
    }

    /// Parses `type_id,race,name,sight_range_px,combat_value,is_combat` rows.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let expected = ["type_id", "race", "name", "sight_range_px", "combat_value", "is_combat"];
        let headers = rdr.headers().map_err(|e| Error::Registry(e.to_string()))?;
        if headers.iter().ne(expected) {
            return Err(Error::Registry(format!(
                "header must be `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut types = Vec::with_capacity(CHANNELS);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Registry(format!("row {}: {e}", i + 1)))?;
            if row.type_id != i {
                return Err(Error::Registry(format!(
                    "row {}: type_id {} breaks the contiguous range 0..{CHANNELS}",
                    i + 1,
                    row.type_id
                )));
            }
            let race: Side = row.race.parse().map_err(|e| Error::Registry(format!("row {}: {e}", i + 1)))?;
            if race != Side::of_type(i) {
                return Err(Error::Registry(format!(
                    "row {}: type {i} must belong to side {}",
                    i + 1,
                    Side::of_type(i)
                )));
            }
            if !(row.combat_value >= 0.0) || !(row.sight_range_px >= 0.0) {
                return Err(Error::Registry(format!(
                    "row {}: sight range and combat value must be non-negative",
                    i + 1
                )));
            }
            types.push(UnitType {
                type_id: row.type_id,
                race,
                name: row.name,
                sight_range_px: row.sight_range_px,
                combat_value: row.combat_value,
                is_combat: row.is_combat,
            });
        }
        if types.len() != CHANNELS {
            return Err(Error::Registry(format!("expected {CHANNELS} unit types, got {}", types.len())));
        }
        Ok(UnitTypeTable { types })
    }

    pub fn get(&self, type_id: usize) -> Option<&UnitType> {
        self.types.get(type_id)
    }

    pub fn types(&self) -> &[UnitType] {
        &self.types
    }

    pub fn by_name(&self, name: &str) -> Option<&UnitType> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn combat_values(&self) -> Vec<f64> {
        self.types.iter().map(|t| t.combat_value).collect()
    }

    /// Same registry with every combat value multiplied by `factor`.
    pub fn scaled_combat_values(&self, factor: f64) -> Self {
        let mut t = self.clone();
        t.types.iter_mut().for_each(|u| u.combat_value *= factor);
        t
    }
}
