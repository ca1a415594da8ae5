//! Grayscale heatmaps of one feature-map channel.

use std::fmt::Write as _;

use fogclear_core::gamestate::{downsample_sum_8x8, FeatureMap, CHANNELS, GRID};
use fogclear_core::{Error, Result};

use crate::args::RenderMode;

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Row-major grid values.
    pub values: Vec<f32>,
}

impl Heatmap {
    /// Pixels scaled linearly so the grid maximum is 255; an all-zero grid
    /// stays black.
    pub fn pixels(&self) -> Vec<u8> {
        let max = self.values.iter().copied().fold(0.0f32, f32::max);
        if max <= 0.0 {
            return vec![0; self.values.len()];
        }
        self.values
            .iter()
            .map(|&v| (v.max(0.0) / max * 255.0).round() as u8)
            .collect()
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels());
        out
    }

    /// One comma-separated line per grid row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(s, "{}", line.join(",")).expect("writing to a String");
        }
        s
    }
}

pub fn render_heatmap(map: &FeatureMap, channel: usize, mode: RenderMode) -> Result<Heatmap> {
    if channel >= CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} outside 0..{CHANNELS}"
        )));
    }
    Ok(match mode {
        RenderMode::Raw32 => Heatmap {
            width: GRID,
            height: GRID,
            values: map.channel(channel).to_vec(),
        },
        RenderMode::Sum8 => Heatmap {
            width: 8,
            height: 8,
            values: downsample_sum_8x8(map, channel)?.iter().flatten().copied().collect(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_channel_is_black() {
        let h = render_heatmap(&FeatureMap::zeros(), 4, RenderMode::Raw32).unwrap();
        assert!(h.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn maximum_maps_to_white() {
        let mut m = FeatureMap::zeros();
        m.set(2, 5, 7, 3.0);
        m.set(2, 0, 0, 1.5);
        let h = render_heatmap(&m, 2, RenderMode::Raw32).unwrap();
        let px = h.pixels();
        assert_eq!(px[5 * 32 + 7], 255);
        assert_eq!(px[0], 128);
        let pgm = h.to_pgm();
        assert!(pgm.starts_with(b"P5\n32 32\n255\n"));
        assert_eq!(pgm.len(), 13 + 1024);
    }

    #[test]
    fn bad_channel_rejected() {
        assert!(render_heatmap(&FeatureMap::zeros(), 66, RenderMode::Sum8).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut m = FeatureMap::zeros();
        m.set(0, 0, 0, 2.0);
        let csv = render_heatmap(&m, 0, RenderMode::Sum8).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.starts_with("2,0,0,0,0,0,0,0\n"));
    }
}
