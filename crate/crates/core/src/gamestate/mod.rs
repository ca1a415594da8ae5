//! Unit registry, frames, and the 66x32x32 feature-map encoding.

mod features;
mod frame;
mod units;

pub use features::{apply_fog, compute_visibility, downsample_sum_8x8, encode_frame, FeatureMap, VisibilityMask};
pub use frame::{Frame, UnitInstance};
pub use units::{Side, UnitType, UnitTypeTable};

/// Map width and height in pixels.
pub const MAP_PX: u32 = 4096;
/// Feature-map grid extent.
pub const GRID: usize = 32;
/// Pixels per grid cell (4096 / 32).
pub const CELL_PX: u32 = MAP_PX / GRID as u32;
/// Unit types of the observing side (channels `0..34`).
pub const SIDE_A_TYPES: usize = 34;
/// Unit types of the opponent (channels `34..66`).
pub const SIDE_B_TYPES: usize = 32;
pub const CHANNELS: usize = SIDE_A_TYPES + SIDE_B_TYPES;
/// Values in one feature map.
pub const MAP_LEN: usize = CHANNELS * GRID * GRID;
/// Frame-log sampling interval.
pub const FRAME_INTERVAL_S: u32 = 3;
