//! Image containers: single planes, multi-channel stacks, and the raw mosaic.

use crate::error::{Error, Result};
use crate::pattern::{Angle, ChannelId, Color, PcfaPattern, CHANNEL_COUNT};

/// A single-channel floating-point image plane, row-major.
#[derive(Clone, PartialEq, Debug)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new_fill(width: usize, height: usize, value: f64) -> Self {
        Plane { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "plane data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Plane { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Maximum absolute difference to another plane of the same shape.
    pub fn max_abs_diff(&self, other: &Plane) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Which channel list an [`ImageStack`] carries.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StackKind {
    /// Twelve (color, angle) planes in [`ChannelId`] order.
    Chromatic,
    /// Four angle planes in [`Angle::ALL`] order.
    Polar,
}

impl StackKind {
    pub fn channel_count(self) -> usize {
        match self {
            StackKind::Chromatic => CHANNEL_COUNT,
            StackKind::Polar => 4,
        }
    }
}

/// A full-resolution multi-channel image cube.
#[derive(Clone, PartialEq, Debug)]
pub struct ImageStack {
    width: usize,
    height: usize,
    kind: StackKind,
    planes: Vec<Plane>,
}

impl ImageStack {
    pub fn new(kind: StackKind, planes: Vec<Plane>) -> Result<Self> {
        if planes.len() != kind.channel_count() {
            return Err(Error::ChannelCount { expected: kind.channel_count(), got: planes.len() });
        }
        let (w, h) = (planes[0].width(), planes[0].height());
        for p in &planes {
            if (p.width(), p.height()) != (w, h) {
                return Err(Error::ShapeMismatch("stack planes differ in size".into()));
            }
        }
        Ok(ImageStack { width: w, height: h, kind, planes })
    }

    pub fn chromatic(planes: Vec<Plane>) -> Result<Self> {
        ImageStack::new(StackKind::Chromatic, planes)
    }

    pub fn polar(planes: Vec<Plane>) -> Result<Self> {
        ImageStack::new(StackKind::Polar, planes)
    }

    pub fn new_fill(kind: StackKind, width: usize, height: usize, value: f64) -> Self {
        let planes = (0..kind.channel_count()).map(|_| Plane::new_fill(width, height, value)).collect();
        ImageStack { width, height, kind, planes }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> StackKind {
        self.kind
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn planes_mut(&mut self) -> &mut [Plane] {
        &mut self.planes
    }

    pub fn plane(&self, i: usize) -> &Plane {
        &self.planes[i]
    }

    /// Plane of a chromatic channel.
    pub fn channel(&self, ch: ChannelId) -> &Plane {
        assert_eq!(self.kind, StackKind::Chromatic);
        &self.planes[ch.index()]
    }

    /// Plane of an angle channel in a polar stack.
    pub fn angle(&self, a: Angle) -> &Plane {
        assert_eq!(self.kind, StackKind::Polar);
        &self.planes[a.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(Plane::is_finite)
    }

    pub fn clamp01(&mut self) {
        for p in &mut self.planes {
            p.clamp01();
        }
    }

    /// Collapses a chromatic stack to four angle planes with per-color
    /// weights (must sum to 1).
    pub fn angle_collapse(&self, weights: [f64; 3]) -> ImageStack {
        assert_eq!(self.kind, StackKind::Chromatic);
        let planes = Angle::ALL
            .iter()
            .map(|&a| {
                let chans: Vec<&Plane> =
                    Color::ALL.iter().map(|&c| self.channel(ChannelId::new(c, a))).collect();
                Plane::from_fn(self.width, self.height, |r, col| {
                    weights[0] * chans[0].get(r, col)
                        + weights[1] * chans[1].get(r, col)
                        + weights[2] * chans[2].get(r, col)
                })
            })
            .collect();
        ImageStack { width: self.width, height: self.height, kind: StackKind::Polar, planes }
    }

    /// Collapses a chromatic stack to four angle planes by averaging the three
    /// colors of each angle (the metric-space convention).
    pub fn angle_average(&self) -> ImageStack {
        self.angle_collapse([1.0 / 3.0; 3])
    }

    /// RGGB-census collapse `(R + 2G + B) / 4`: the color mixture an angle
    /// plane of the mosaic actually carries, used by the polarimetric
    /// training path and the cross-branch coupling.
    pub fn angle_average_bayer(&self) -> ImageStack {
        self.angle_collapse([0.25, 0.5, 0.25])
    }

    /// Reindexes a chromatic stack into four RGB images, one per angle.
    /// Purely a view change: `result[angle][color] == channel((color, angle))`.
    pub fn angle_images(&self) -> [[&Plane; 3]; 4] {
        assert_eq!(self.kind, StackKind::Chromatic);
        let mut out: [[&Plane; 3]; 4] = [[&self.planes[0]; 3]; 4];
        for (ai, &a) in Angle::ALL.iter().enumerate() {
            for (ci, &c) in Color::ALL.iter().enumerate() {
                out[ai][ci] = self.channel(ChannelId::new(c, a));
            }
        }
        out
    }

    /// Elementwise combination of two stacks of identical shape.
    pub fn zip_map(&self, other: &ImageStack, mut f: impl FnMut(f64, f64) -> f64) -> ImageStack {
        assert_eq!(self.kind, other.kind);
        assert_eq!((self.width, self.height), (other.width, other.height));
        let planes = self
            .planes
            .iter()
            .zip(&other.planes)
            .map(|(a, b)| {
                let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
                Plane::from_vec(self.width, self.height, data).unwrap()
            })
            .collect();
        ImageStack { width: self.width, height: self.height, kind: self.kind, planes }
    }

    /// Frobenius norm of the elementwise difference, summed sequentially in a
    /// fixed order so results do not depend on thread count.
    pub fn frobenius_diff(&self, other: &ImageStack) -> f64 {
        assert_eq!(self.kind, other.kind);
        let mut acc = 0.0;
        for (a, b) in self.planes.iter().zip(&other.planes) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                let d = x - y;
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

/// The one-channel raw sensor readout together with its sampling pattern.
#[derive(Clone, Debug)]
pub struct MosaicImage {
    data: Plane,
    pattern: PcfaPattern,
}

impl MosaicImage {
    pub fn new(data: Plane, pattern: PcfaPattern) -> Result<Self> {
        let (w, h) = (data.width(), data.height());
        if w == 0 || h == 0 || w % 4 != 0 || h % 4 != 0 {
            return Err(Error::DimensionNotMultipleOf4 { width: w, height: h });
        }
        if !data.is_finite() {
            return Err(Error::NonFinite("mosaic construction"));
        }
        Ok(MosaicImage { data, pattern })
    }

    pub fn width(&self) -> usize {
        self.data.width()
    }

    pub fn height(&self) -> usize {
        self.data.height()
    }

    pub fn plane(&self) -> &Plane {
        &self.data
    }

    pub fn pattern(&self) -> &PcfaPattern {
        &self.pattern
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data.get(row, col)
    }

    pub fn channel_at(&self, row: usize, col: usize) -> ChannelId {
        self.pattern.channel_at(row, col)
    }
}
