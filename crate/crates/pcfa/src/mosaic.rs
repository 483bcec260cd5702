//! Forward model and its partial inverses: full stack -> mosaic, mosaic ->
//! per-channel scatter, and the sparse-aware bicubic initialization.

use crate::baselines;
use crate::error::{Error, Result};
use crate::image::{ImageStack, MosaicImage, Plane, StackKind};
use crate::pattern::{build_masks, ChannelId, PcfaPattern, CHANNEL_COUNT};

/// Samples a 12-channel stack through the pattern: `I(p) = Y(p, channel_at(p))`.
pub fn mosaic(stack: &ImageStack, pattern: &PcfaPattern) -> Result<MosaicImage> {
    if stack.kind() != StackKind::Chromatic {
        return Err(Error::ChannelCount { expected: CHANNEL_COUNT, got: stack.planes().len() });
    }
    let (w, h) = (stack.width(), stack.height());
    if w % 4 != 0 || h % 4 != 0 || w == 0 || h == 0 {
        return Err(Error::DimensionNotMultipleOf4 { width: w, height: h });
    }
    let plane = Plane::from_fn(w, h, |r, c| stack.channel(pattern.channel_at(r, c)).get(r, c));
    MosaicImage::new(plane, pattern.clone())
}

/// Twelve planes holding values only where the corresponding mask samples.
#[derive(Clone, Debug)]
pub struct SparseChannelStack {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
    valid: Vec<Vec<bool>>,
}

impl SparseChannelStack {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn plane(&self, ch: ChannelId) -> &Plane {
        &self.planes[ch.index()]
    }

    pub fn valid(&self, ch: ChannelId) -> &[bool] {
        &self.valid[ch.index()]
    }

    pub fn valid_count(&self, ch: ChannelId) -> usize {
        self.valid[ch.index()].iter().filter(|&&b| b).count()
    }
}

/// Reorganizes the mosaic into 12 sparse channels; plane values outside the
/// channel's mask support are zero and flagged invalid.
pub fn scatter(mosaic: &MosaicImage) -> SparseChannelStack {
    let (w, h) = (mosaic.width(), mosaic.height());
    let masks = build_masks(mosaic.pattern(), w, h).expect("mosaic dimensions validated");
    let mut planes: Vec<Plane> = (0..CHANNEL_COUNT).map(|_| Plane::new_fill(w, h, 0.0)).collect();
    let mut valid = vec![vec![false; w * h]; CHANNEL_COUNT];
    for r in 0..h {
        for c in 0..w {
            let ch = masks.channel_at(r, c).index();
            planes[ch].set(r, c, mosaic.get(r, c));
            valid[ch][r * w + c] = true;
        }
    }
    SparseChannelStack { width: w, height: h, planes, valid }
}

/// Dense 12-channel starting point: scattered samples pass through exactly,
/// missing pixels come from the sparse-aware bicubic fill. Identical to
/// [`baselines::bicubic_demosaic`] by construction.
pub fn initialize(mosaic: &MosaicImage) -> ImageStack {
    baselines::bicubic_demosaic(mosaic)
}

/// Four-channel polarimetric starting point: samples grouped by angle.
pub fn initialize_polar(mosaic: &MosaicImage) -> ImageStack {
    baselines::bicubic_demosaic_polar(mosaic)
}
