//! RGB-polarization filter-array geometry: channel identities, the 4x4
//! superpixel layout, and the per-channel sampling masks.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Color filter of a sensor cell.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Color {
    R,
    G,
    B,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::R, Color::G, Color::B];

    pub fn index(self) -> usize {
        match self {
            Color::R => 0,
            Color::G => 1,
            Color::B => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::R => 'r',
            Color::G => 'g',
            Color::B => 'b',
        }
    }
}

/// Linear polarizer orientation of a sensor cell.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Angle {
    A0,
    A45,
    A90,
    A135,
}

impl Angle {
    pub const ALL: [Angle; 4] = [Angle::A0, Angle::A45, Angle::A90, Angle::A135];

    pub fn index(self) -> usize {
        match self {
            Angle::A0 => 0,
            Angle::A45 => 1,
            Angle::A90 => 2,
            Angle::A135 => 3,
        }
    }

    pub fn degrees(self) -> f64 {
        match self {
            Angle::A0 => 0.0,
            Angle::A45 => 45.0,
            Angle::A90 => 90.0,
            Angle::A135 => 135.0,
        }
    }

    /// Zero-padded label used in file names: "000", "045", "090", "135".
    pub fn label(self) -> &'static str {
        match self {
            Angle::A0 => "000",
            Angle::A45 => "045",
            Angle::A90 => "090",
            Angle::A135 => "135",
        }
    }
}

/// One of the twelve (color, angle) channels.
///
/// The total ordering is color-major, angle-minor:
/// `(R,0) (R,45) (R,90) (R,135) (G,0) ... (B,135)`, with `index()` in `0..12`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct ChannelId {
    pub color: Color,
    pub angle: Angle,
}

pub const CHANNEL_COUNT: usize = 12;

impl ChannelId {
    pub const fn new(color: Color, angle: Angle) -> Self {
        ChannelId { color, angle }
    }

    pub fn index(self) -> usize {
        self.color.index() * 4 + self.angle.index()
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < CHANNEL_COUNT);
        ChannelId::new(Color::ALL[i / 4], Angle::ALL[i % 4])
    }

    pub fn all() -> impl Iterator<Item = ChannelId> {
        (0..CHANNEL_COUNT).map(ChannelId::from_index)
    }

    /// File-name label, e.g. "090_r".
    pub fn label(self) -> String {
        format!("{}_{}", self.angle.label(), self.color.letter())
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?},{}°)", self.color, self.angle.degrees())
    }
}

/// The repeating 4x4 superpixel of an RGB-polarization sensor.
///
/// The superpixel is an RGGB Bayer mosaic at 2x2 macro-pixel scale; each
/// macro-pixel carries all four polarizer orientations. Pattern lookup at
/// pixel `(row, col)` is `layout[row % 4][col % 4]`.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PcfaPattern {
    pub name: String,
    pub layout: [[ChannelId; 4]; 4],
}

impl PcfaPattern {
    /// Builds a pattern and checks the superpixel census: each (R, angle) and
    /// (B, angle) cell exactly once, each (G, angle) cell exactly twice.
    pub fn new(name: impl Into<String>, layout: [[ChannelId; 4]; 4]) -> Result<Self> {
        let mut counts = [0usize; CHANNEL_COUNT];
        for row in &layout {
            for ch in row {
                counts[ch.index()] += 1;
            }
        }
        for ch in ChannelId::all() {
            let want = if ch.color == Color::G { 2 } else { 1 };
            if counts[ch.index()] != want {
                return Err(Error::InvalidParameter(format!(
                    "superpixel holds {} {} cells, expected {}",
                    counts[ch.index()],
                    ch,
                    want
                )));
            }
        }
        Ok(PcfaPattern { name: name.into(), layout })
    }

    /// Channel sampled at pixel `(row, col)` under period-4 tiling.
    pub fn channel_at(&self, row: usize, col: usize) -> ChannelId {
        self.layout[row % 4][col % 4]
    }
}

/// The canonical layout: RGGB at macro-pixel scale with the IMX250MYR-style
/// (90°, 45° / 135°, 0°) orientation unit inside each macro-pixel.
///
/// ```text
/// R90  R45  | G90  G45
/// R135 R0   | G135 G0
/// ----------+----------
/// G90  G45  | B90  B45
/// G135 G0   | B135 B0
/// ```
pub fn default_pattern() -> PcfaPattern {
    use Angle::*;
    use Color::*;
    let unit = [[A90, A45], [A135, A0]];
    let bayer = [[R, G], [G, B]];
    let mut layout = [[ChannelId::new(R, A0); 4]; 4];
    for (r, row) in layout.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = ChannelId::new(bayer[r / 2][c / 2], unit[r % 2][c % 2]);
        }
    }
    PcfaPattern::new("imx250myr", layout).expect("canonical layout is valid")
}

/// Per-pixel channel assignment for a whole image: the twelve binary masks of
/// the forward model, stored as one channel-index map (the masks partition the
/// image, so exactly one mask is set per pixel by construction).
#[derive(Clone, Debug)]
pub struct ChannelMasks {
    width: usize,
    height: usize,
    index: Vec<u8>,
}

impl ChannelMasks {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Channel observed at `(row, col)`.
    pub fn channel_at(&self, row: usize, col: usize) -> ChannelId {
        ChannelId::from_index(self.index[row * self.width + col] as usize)
    }

    /// Flat channel-index map, row-major.
    pub fn index_map(&self) -> &[u8] {
        &self.index
    }

    /// Materializes one binary mask.
    pub fn mask(&self, ch: ChannelId) -> Vec<bool> {
        let want = ch.index() as u8;
        self.index.iter().map(|&i| i == want).collect()
    }

    pub fn popcount(&self, ch: ChannelId) -> usize {
        let want = ch.index() as u8;
        self.index.iter().filter(|&&i| i == want).count()
    }
}

/// Builds the twelve down-sampling masks for a `width` x `height` image.
///
/// Rejects dimensions that are not whole multiples of the 4x4 superpixel.
pub fn build_masks(pattern: &PcfaPattern, width: usize, height: usize) -> Result<ChannelMasks> {
    if width == 0 || height == 0 || width % 4 != 0 || height % 4 != 0 {
        return Err(Error::DimensionNotMultipleOf4 { width, height });
    }
    let mut index = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            index.push(pattern.channel_at(r, c).index() as u8);
        }
    }
    Ok(ChannelMasks { width, height, index })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_ordering_is_color_major() {
        let ids: Vec<ChannelId> = ChannelId::all().collect();
        assert_eq!(ids.len(), 12);
        assert_eq!(ids[0], ChannelId::new(Color::R, Angle::A0));
        assert_eq!(ids[3], ChannelId::new(Color::R, Angle::A135));
        assert_eq!(ids[4], ChannelId::new(Color::G, Angle::A0));
        assert_eq!(ids[11], ChannelId::new(Color::B, Angle::A135));
        for (i, ch) in ids.iter().enumerate() {
            assert_eq!(ch.index(), i);
            assert_eq!(ChannelId::from_index(i), *ch);
        }
    }

    #[test]
    fn default_pattern_top_left_macro_pixel() {
        let p = default_pattern();
        assert_eq!(p.channel_at(0, 0), ChannelId::new(Color::R, Angle::A90));
        assert_eq!(p.channel_at(0, 1), ChannelId::new(Color::R, Angle::A45));
        assert_eq!(p.channel_at(1, 0), ChannelId::new(Color::R, Angle::A135));
        assert_eq!(p.channel_at(1, 1), ChannelId::new(Color::R, Angle::A0));
    }

    #[test]
    fn default_pattern_counts_rggb() {
        let p = default_pattern();
        let mut per_color = [0usize; 3];
        for r in 0..4 {
            for c in 0..4 {
                per_color[p.layout[r][c].color.index()] += 1;
            }
        }
        assert_eq!(per_color, [4, 8, 4]);
    }

    #[test]
    fn pattern_lookup_tiles_with_period_4() {
        let p = default_pattern();
        assert_eq!(p.channel_at(5, 6), p.layout[1][2]);
        assert_eq!(p.channel_at(4, 4), p.channel_at(0, 0));
    }

    #[test]
    fn exhaustive_scan_matches_census() {
        let p = default_pattern();
        let mut counts = [0usize; CHANNEL_COUNT];
        for r in 0..4 {
            for c in 0..4 {
                counts[p.channel_at(r, c).index()] += 1;
            }
        }
        for ch in ChannelId::all() {
            let want = if ch.color == Color::G { 2 } else { 1 };
            assert_eq!(counts[ch.index()], want, "{ch}");
        }
    }

    #[test]
    fn invalid_layout_rejected() {
        let mut layout = default_pattern().layout;
        layout[0][0] = layout[0][1]; // duplicate a cell
        assert!(PcfaPattern::new("broken", layout).is_err());
    }

    #[test]
    fn masks_partition_and_counts() {
        let p = default_pattern();
        let m = build_masks(&p, 8, 8).unwrap();
        assert_eq!(m.popcount(ChannelId::new(Color::R, Angle::A0)), 4);
        assert_eq!(m.popcount(ChannelId::new(Color::G, Angle::A45)), 8);

        let m4 = build_masks(&p, 4, 4).unwrap();
        let mut sum = vec![0u32; 16];
        for ch in ChannelId::all() {
            for (i, bit) in m4.mask(ch).iter().enumerate() {
                sum[i] += *bit as u32;
            }
        }
        assert!(sum.iter().all(|&s| s == 1));
    }

    #[test]
    fn masks_reject_non_multiple_of_4() {
        let p = default_pattern();
        assert!(matches!(
            build_masks(&p, 6, 8),
            Err(Error::DimensionNotMultipleOf4 { .. })
        ));
        assert!(build_masks(&p, 8, 0).is_err());
    }

    #[test]
    fn masks_tile_with_period_4() {
        let p = default_pattern();
        let m = build_masks(&p, 12, 12).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(m.channel_at(r, c), m.channel_at(r + 4, c + 4));
            }
        }
    }
}
