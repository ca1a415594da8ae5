//! Line-delimited JSON frame logs.
//!
//! ```text
//! {"replay_id":"g01","t":42,"winner":"A","units":[{"type":1,"owner":"A","x":10,"y":20}]}
//! ```

use std::io::{BufRead, Write};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::gamestate::{Frame, Side, UnitInstance, CHANNELS, FRAME_INTERVAL_S, MAP_PX};

const FRAME_FIELDS: [&str; 4] = ["replay_id", "t", "winner", "units"];
const UNIT_FIELDS: [&str; 4] = ["type", "owner", "x", "y"];

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn invalid(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_fields(obj: &Map<String, Value>, allowed: &[&str], line: usize) -> Result<()> {
    if let Some(unknown) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(parse_err(line, unknown, "unknown field"));
    }
    Ok(())
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| parse_err(line, name, "missing field"))
}

fn uint(obj: &Map<String, Value>, name: &str, line: usize) -> Result<u64> {
    field(obj, name, line)?
        .as_u64()
        .ok_or_else(|| parse_err(line, name, "expected a non-negative integer"))
}

fn side(obj: &Map<String, Value>, name: &str, line: usize) -> Result<Side> {
    match field(obj, name, line)?.as_str() {
        Some("A") => Ok(Side::A),
        Some("B") => Ok(Side::B),
        _ => Err(parse_err(line, name, "expected \"A\" or \"B\"")),
    }
}

/// Parses and validates one record; `line` is 1-based.
pub fn parse_frame_line(text: &str, line: usize) -> Result<Frame> {
    let value: Value = serde_json::from_str(text).map_err(|e| parse_err(line, "<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err(line, "<record>", "expected a JSON object"))?;
    check_fields(obj, &FRAME_FIELDS, line)?;

    let replay_id = field(obj, "replay_id", line)?
        .as_str()
        .ok_or_else(|| parse_err(line, "replay_id", "expected a string"))?
        .to_string();
    let t = uint(obj, "t", line)?;
    if t > u32::MAX as u64 {
        return Err(invalid(line, "t", format!("{t} does not fit in 32 bits")));
    }
    if t % FRAME_INTERVAL_S as u64 != 0 {
        return Err(invalid(line, "t", format!("{t} is not a multiple of {FRAME_INTERVAL_S}")));
    }
    let winner = side(obj, "winner", line)?;
    let raw_units = field(obj, "units", line)?
        .as_array()
        .ok_or_else(|| parse_err(line, "units", "expected an array"))?;

    let mut units = Vec::with_capacity(raw_units.len());
    for (k, raw) in raw_units.iter().enumerate() {
        let u = raw
            .as_object()
            .ok_or_else(|| parse_err(line, "units", format!("unit {k} is not an object")))?;
        check_fields(u, &UNIT_FIELDS, line)?;
        let type_id = uint(u, "type", line)?;
        if type_id >= CHANNELS as u64 {
            return Err(invalid(line, "type", format!("unit {k}: {type_id} outside 0..{CHANNELS}")));
        }
        let owner = side(u, "owner", line)?;
        if Side::of_type(type_id as usize) != owner {
            return Err(invalid(
                line,
                "owner",
                format!("unit {k}: type {type_id} does not belong to side {owner}"),
            ));
        }
        let coord = |name: &str| -> Result<u32> {
            let v = uint(u, name, line)?;
            if v >= MAP_PX as u64 {
                return Err(invalid(line, name, format!("unit {k}: {v} outside 0..{}", MAP_PX - 1)));
            }
            Ok(v as u32)
        };
        let x = coord("x")?;
        let y = coord("y")?;
        units.push(UnitInstance {
            type_id: type_id as usize,
            owner,
            x,
            y,
        });
    }
    Ok(Frame {
        replay_id,
        t_seconds: t as u32,
        units,
        winner,
    })
}

/// One frame per non-blank line.
pub fn parse_frame_log<R: BufRead>(reader: R) -> Result<Vec<Frame>> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        frames.push(parse_frame_line(&line, i + 1)?);
    }
    Ok(frames)
}

#[derive(Serialize)]
struct UnitRecord<'a> {
    #[serde(rename = "type")]
    type_id: usize,
    owner: &'a str,
    x: u32,
    y: u32,
}

#[derive(Serialize)]
struct FrameRecord<'a> {
    replay_id: &'a str,
    t: u32,
    winner: &'a str,
    units: Vec<UnitRecord<'a>>,
}

/// Serializes one frame as a single-line record.
pub fn format_frame(frame: &Frame) -> String {
    let rec = FrameRecord {
        replay_id: &frame.replay_id,
        t: frame.t_seconds,
        winner: frame.winner.as_str(),
        units: frame
            .units
            .iter()
            .map(|u| UnitRecord {
                type_id: u.type_id,
                owner: u.owner.as_str(),
                x: u.x,
                y: u.y,
            })
            .collect(),
    };
    serde_json::to_string(&rec).expect("frame records always serialize")
}

pub fn write_frame_log<W: Write>(frames: &[Frame], mut writer: W) -> Result<()> {
    for f in frames {
        writeln!(writer, "{}", format_frame(f))?;
    }
    Ok(())
}
