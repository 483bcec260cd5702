//! Signal matrices: column vectors of lexicographically flattened 4x4
//! multi-channel patches, plus the patch extraction / aggregation machinery
//! shared by dictionary training and the reconstruction loop.

use crate::error::{Error, Result};
use crate::image::{ImageStack, Plane, StackKind};
use crate::pattern::ChannelId;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const PATCH: usize = 4;

/// What a signal column represents; fixes the row count.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// 4x4 patch over 4 angle planes: 64 rows.
    Pol,
    /// 4x4 patch over 12 chromatic planes: 192 rows.
    Rgb,
    /// 4x4 patch of a single plane: 16 rows.
    Mono,
}

impl SignalKind {
    pub fn rows(self) -> usize {
        match self {
            SignalKind::Pol => 64,
            SignalKind::Rgb => 192,
            SignalKind::Mono => 16,
        }
    }
}

/// Column-major matrix of patch vectors.
#[derive(Clone, PartialEq, Debug)]
pub struct SignalMatrix {
    kind: SignalKind,
    data: DMatrix<f64>,
}

impl SignalMatrix {
    pub fn new(kind: SignalKind, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != kind.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} signals need {} rows, got {}",
                kind,
                kind.rows(),
                data.nrows()
            )));
        }
        Ok(SignalMatrix { kind, data })
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Removes per-column means in place and returns them.
    pub fn center(&mut self) -> Vec<f64> {
        let rows = self.data.nrows();
        let mut means = Vec::with_capacity(self.data.ncols());
        for mut col in self.data.column_iter_mut() {
            let mean = col.iter().sum::<f64>() / rows as f64;
            for v in col.iter_mut() {
                *v -= mean;
            }
            means.push(mean);
        }
        means
    }
}

/// Flattening order of a patch vector: channel-major, then row, then column.
/// Row index = `ch * 16 + dr * 4 + dc`.
#[inline]
fn patch_row(ch: usize, dr: usize, dc: usize) -> usize {
    ch * PATCH * PATCH + dr * PATCH + dc
}

fn stack_for_kind(stack: &ImageStack, kind: SignalKind) -> String {
    format!("{:?} extraction from {:?} stack", kind, stack.kind())
}

/// Copies the patch with top-left corner `(r, c)` into `out`.
fn read_patch(planes: &[Plane], r: usize, c: usize, out: &mut [f64]) {
    for (ch, plane) in planes.iter().enumerate() {
        for dr in 0..PATCH {
            for dc in 0..PATCH {
                out[patch_row(ch, dr, dc)] = plane.get(r + dr, c + dc);
            }
        }
    }
}

/// Randomly samples `samples` patch vectors from ground-truth stacks.
///
/// `kind == Pol` first collapses each stack to four angle planes with the
/// RGGB-census weights `(R + 2G + B)/4`, matching the color mixture the
/// mosaic's angle samples carry; `kind == Rgb` reads all twelve planes.
/// Positions are drawn uniformly with replacement over (stack, row, column),
/// so any sample count is valid once a single patch fits. Deterministic
/// given `seed`.
pub fn extract_signals(
    stacks: &[ImageStack],
    kind: SignalKind,
    samples: usize,
    seed: u64,
) -> Result<SignalMatrix> {
    if stacks.is_empty() {
        return Err(Error::InvalidParameter("no stacks to sample".into()));
    }
    let prepared: Vec<ImageStack> = match kind {
        SignalKind::Pol => stacks
            .iter()
            .map(|s| {
                if s.kind() != StackKind::Chromatic {
                    return Err(Error::InvalidParameter(stack_for_kind(s, kind)));
                }
                Ok(s.angle_average_bayer())
            })
            .collect::<Result<_>>()?,
        SignalKind::Rgb => {
            for s in stacks {
                if s.kind() != StackKind::Chromatic {
                    return Err(Error::InvalidParameter(stack_for_kind(s, kind)));
                }
            }
            stacks.to_vec()
        }
        SignalKind::Mono => {
            return Err(Error::InvalidParameter(
                "mono signals come from extract_mono_signals".into(),
            ))
        }
    };
    for s in &prepared {
        if s.width() < PATCH || s.height() < PATCH {
            return Err(Error::ShapeMismatch(format!(
                "stack {}x{} smaller than the {PATCH}x{PATCH} patch",
                s.width(),
                s.height()
            )));
        }
    }

    let rows = kind.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(rows, samples);
    let mut buf = vec![0.0; rows];
    for j in 0..samples {
        let s = &prepared[rng.random_range(0..prepared.len())];
        let r = rng.random_range(0..=s.height() - PATCH);
        let c = rng.random_range(0..=s.width() - PATCH);
        read_patch(s.planes(), r, c, &mut buf);
        data.column_mut(j).copy_from_slice(&buf);
    }
    SignalMatrix::new(kind, data)
}

/// Samples 16-row single-plane patches of one chromatic channel; feeds the
/// per-channel dictionary ablation.
pub fn extract_mono_signals(
    stacks: &[ImageStack],
    channel: ChannelId,
    samples: usize,
    seed: u64,
) -> Result<SignalMatrix> {
    if stacks.is_empty() {
        return Err(Error::InvalidParameter("no stacks to sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(16, samples);
    for j in 0..samples {
        let s = &stacks[rng.random_range(0..stacks.len())];
        if s.kind() != StackKind::Chromatic {
            return Err(Error::InvalidParameter(stack_for_kind(s, SignalKind::Mono)));
        }
        let plane = s.channel(channel);
        let r = rng.random_range(0..=s.height() - PATCH);
        let c = rng.random_range(0..=s.width() - PATCH);
        for dr in 0..PATCH {
            for dc in 0..PATCH {
                data[(dr * PATCH + dc, j)] = plane.get(r + dr, c + dc);
            }
        }
    }
    SignalMatrix::new(SignalKind::Mono, data)
}

/// Dense overlapping-patch extraction at a fixed stride, scanning the patch
/// grid row-major. Column `i` covers top-left `(grid_row * stride, grid_col *
/// stride)`.
pub fn extract_dense_patches(planes: &[Plane], stride: usize) -> DMatrix<f64> {
    let (w, h) = (planes[0].width(), planes[0].height());
    assert!(w >= PATCH && h >= PATCH);
    assert!((h - PATCH) % stride == 0 && (w - PATCH) % stride == 0);
    let rows = planes.len() * PATCH * PATCH;
    let grid_h = (h - PATCH) / stride + 1;
    let grid_w = (w - PATCH) / stride + 1;
    let mut data = DMatrix::zeros(rows, grid_h * grid_w);
    let mut buf = vec![0.0; rows];
    let mut j = 0;
    for gr in 0..grid_h {
        for gc in 0..grid_w {
            read_patch(planes, gr * stride, gc * stride, &mut buf);
            data.column_mut(j).copy_from_slice(&buf);
            j += 1;
        }
    }
    data
}

/// Inverse of [`extract_dense_patches`]: overlapping patches are averaged
/// with uniform weights, accumulated in patch-index order.
pub fn aggregate_dense_patches(
    patches: &DMatrix<f64>,
    channels: usize,
    width: usize,
    height: usize,
    stride: usize,
) -> Vec<Plane> {
    assert_eq!(patches.nrows(), channels * PATCH * PATCH);
    let grid_h = (height - PATCH) / stride + 1;
    let grid_w = (width - PATCH) / stride + 1;
    assert_eq!(patches.ncols(), grid_h * grid_w);

    let mut sums = vec![vec![0.0; width * height]; channels];
    let mut counts = vec![0.0; width * height];
    let mut j = 0;
    for gr in 0..grid_h {
        for gc in 0..grid_w {
            let (r0, c0) = (gr * stride, gc * stride);
            let col = patches.column(j);
            for dr in 0..PATCH {
                for dc in 0..PATCH {
                    let i = (r0 + dr) * width + (c0 + dc);
                    for (ch, sum) in sums.iter_mut().enumerate() {
                        sum[i] += col[patch_row(ch, dr, dc)];
                    }
                    counts[i] += 1.0;
                }
            }
            j += 1;
        }
    }
    sums.into_iter()
        .map(|mut sum| {
            for (v, n) in sum.iter_mut().zip(&counts) {
                *v /= n;
            }
            Plane::from_vec(width, height, sum).unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::StackKind;

    #[test]
    fn constant_stack_yields_constant_pol_signals() {
        let stack = ImageStack::new_fill(StackKind::Chromatic, 8, 8, 0.3);
        let sig = extract_signals(&[stack], SignalKind::Pol, 10, 5).unwrap();
        assert_eq!((sig.rows(), sig.cols()), (64, 10));
        assert!(sig.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn rgb_signals_have_192_rows() {
        let stack = ImageStack::new_fill(StackKind::Chromatic, 8, 8, 0.1);
        let sig = extract_signals(&[stack], SignalKind::Rgb, 3, 0).unwrap();
        assert_eq!(sig.rows(), 192);
    }

    #[test]
    fn extraction_is_deterministic() {
        let stack = ImageStack::new_fill(StackKind::Chromatic, 8, 8, 0.0);
        let stacks = vec![stack];
        let a = extract_signals(&stacks, SignalKind::Rgb, 50, 9).unwrap();
        let b = extract_signals(&stacks, SignalKind::Rgb, 50, 9).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn empty_input_and_small_images_rejected() {
        assert!(extract_signals(&[], SignalKind::Pol, 5, 0).is_err());
    }

    #[test]
    fn dense_patches_round_trip_through_aggregation() {
        let planes: Vec<Plane> = (0..4)
            .map(|ch| Plane::from_fn(12, 8, |r, c| (ch * 100 + r * 12 + c) as f64))
            .collect();
        for stride in [1, 2, 4] {
            let patches = extract_dense_patches(&planes, stride);
            let back = aggregate_dense_patches(&patches, 4, 12, 8, stride);
            for (a, b) in planes.iter().zip(&back) {
                assert!(a.max_abs_diff(b) < 1e-12, "stride {stride}");
            }
        }
    }

    #[test]
    fn centering_removes_column_means() {
        let stack = ImageStack::new_fill(StackKind::Chromatic, 8, 8, 0.7);
        let mut sig = extract_signals(&[stack], SignalKind::Pol, 4, 1).unwrap();
        let means = sig.center();
        assert!(means.iter().all(|&m| (m - 0.7).abs() < 1e-15));
        assert!(sig.data().iter().all(|&v| v.abs() < 1e-15));
    }
}
