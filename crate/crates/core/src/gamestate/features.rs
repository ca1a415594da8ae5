use super::{Frame, Side, UnitTypeTable, CELL_PX, CHANNELS, GRID, MAP_LEN, SIDE_A_TYPES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-cell unit counts, channel-major `(66, 32, 32)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    values: Vec<f32>,
}

impl Default for FeatureMap {
    fn default() -> Self {
        Self::zeros()
    }
}

impl FeatureMap {
    pub fn zeros() -> Self {
        FeatureMap {
            values: vec![0.0; MAP_LEN],
        }
    }

    pub fn from_vec(values: Vec<f32>) -> Result<Self> {
        if values.len() != MAP_LEN {
            return Err(Error::invalid(format!(
                "feature map needs {MAP_LEN} values, got {}",
                values.len()
            )));
        }
        Ok(FeatureMap { values })
    }

    pub fn index(channel: usize, i: usize, j: usize) -> usize {
        (channel * GRID + i) * GRID + j
    }

    pub fn get(&self, channel: usize, i: usize, j: usize) -> f32 {
        self.values[Self::index(channel, i, j)]
    }

    pub fn set(&mut self, channel: usize, i: usize, j: usize, v: f32) {
        self.values[Self::index(channel, i, j)] = v;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.values[c * GRID * GRID..(c + 1) * GRID * GRID]
    }

    pub fn channel_sum(&self, c: usize) -> f64 {
        self.channel(c).iter().map(|&v| v as f64).sum()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    /// Stacks maps into an `(n, 66, 32, 32)` batch.
    pub fn batch(maps: &[&FeatureMap]) -> Tensor<f32> {
        let slices: Vec<&[f32]> = maps.iter().map(|m| m.as_slice()).collect();
        Tensor::stack(&slices, &[CHANNELS, GRID, GRID]).expect("maps have fixed size")
    }

    /// Splits an `(n, 66, 32, 32)` batch back into maps.
    pub fn unbatch(t: &Tensor<f32>) -> Result<Vec<FeatureMap>> {
        let [n, c, h, w] = t.dims4()?;
        if (c, h, w) != (CHANNELS, GRID, GRID) {
            return Err(Error::invalid(format!("expected (n, 66, 32, 32), got {:?}", t.shape())));
        }
        Ok((0..n).map(|b| FeatureMap { values: t.sample(b).to_vec() }).collect())
    }
}

/// Cells visible to side A.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VisibilityMask {
    cells: Vec<bool>,
}

impl VisibilityMask {
    pub fn all(visible: bool) -> Self {
        VisibilityMask {
            cells: vec![visible; GRID * GRID],
        }
    }

    pub fn from_cells(cells: Vec<bool>) -> Result<Self> {
        if cells.len() != GRID * GRID {
            return Err(Error::invalid(format!("mask needs {} cells, got {}", GRID * GRID, cells.len())));
        }
        Ok(VisibilityMask { cells })
    }

    pub fn is_visible(&self, i: usize, j: usize) -> bool {
        self.cells[i * GRID + j]
    }

    pub fn set(&mut self, i: usize, j: usize, visible: bool) {
        self.cells[i * GRID + j] = visible;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn visible_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }
}

/// Grid cell `(row, col)` of a pixel position.
pub(crate) fn cell_of(x: u32, y: u32) -> (usize, usize) {
    ((y / CELL_PX) as usize, (x / CELL_PX) as usize)
}

/// Counts each unit into `(type, floor(y/128), floor(x/128))`.
pub fn encode_frame(frame: &Frame, table: &UnitTypeTable) -> Result<FeatureMap> {
    let mut map = FeatureMap::zeros();
    for (idx, unit) in frame.units.iter().enumerate() {
        unit.validate(idx)?;
        if table.get(unit.type_id).is_none() {
            return Err(Error::InvalidFrame {
                unit: idx,
                reason: format!("type {} missing from registry", unit.type_id),
            });
        }
        let (i, j) = cell_of(unit.x, unit.y);
        map.values[FeatureMap::index(unit.type_id, i, j)] += 1.0;
    }
    Ok(map)
}

/// Union of sight disks of side-A units, tested at cell centers.
pub fn compute_visibility(frame: &Frame, table: &UnitTypeTable) -> VisibilityMask {
    let mut mask = VisibilityMask::all(false);
    let half = CELL_PX as f64 / 2.0;
    for unit in frame.units_of(Side::A) {
        let Some(kind) = table.get(unit.type_id) else { continue };
        let r = kind.sight_range_px;
        let (ux, uy) = (unit.x as f64, unit.y as f64);
        // Only cells whose centers can fall inside the disk.
        let lo = |p: f64| (((p - r - half) / CELL_PX as f64).floor().max(0.0)) as usize;
        let hi = |p: f64| ((((p + r - half) / CELL_PX as f64).ceil()) as usize).min(GRID - 1);
        for i in lo(uy)..=hi(uy) {
            for j in lo(ux)..=hi(ux) {
                let cx = (j as f64 + 0.5) * CELL_PX as f64;
                let cy = (i as f64 + 0.5) * CELL_PX as f64;
                if (cx - ux).powi(2) + (cy - uy).powi(2) <= r * r {
                    mask.set(i, j, true);
                }
            }
        }
    }
    mask
}

/// Keeps friendly channels; hides opponent counts in invisible cells.
pub fn apply_fog(clean: &FeatureMap, mask: &VisibilityMask) -> FeatureMap {
    let mut out = clean.clone();
    for c in SIDE_A_TYPES..CHANNELS {
        let plane = &mut out.values[c * GRID * GRID..(c + 1) * GRID * GRID];
        for (v, &visible) in plane.iter_mut().zip(&mask.cells) {
            if !visible {
                *v = 0.0;
            }
        }
    }
    out
}

/// Sums each 4x4 block of one channel into an 8x8 grid.
pub fn downsample_sum_8x8(map: &FeatureMap, channel: usize) -> Result<[[f32; 8]; 8]> {
    if channel >= CHANNELS {
        return Err(Error::invalid(format!("channel {channel} outside 0..{CHANNELS}")));
    }
    let block = GRID / 8;
    let mut out = [[0.0f32; 8]; 8];
    for i in 0..GRID {
        for j in 0..GRID {
            out[i / block][j / block] += map.get(channel, i, j);
        }
    }
    Ok(out)
}
