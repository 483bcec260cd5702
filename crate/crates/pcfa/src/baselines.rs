//! Reference interpolation demosaicers. These fill each channel independently
//! by normalized convolution and double as the initializer of the joint
//! optimizer (one shared code path).

use crate::image::{ImageStack, MosaicImage, StackKind};
use crate::interp::{fill_sparse, Kernel};
use crate::pattern::{build_masks, Angle, ChannelId};

fn per_channel_fill(mosaic: &MosaicImage, kernel: Kernel, clamp01: bool) -> ImageStack {
    let masks = build_masks(mosaic.pattern(), mosaic.width(), mosaic.height())
        .expect("mosaic dimensions validated at construction");
    let planes = ChannelId::all()
        .map(|ch| fill_sparse(mosaic.plane(), &masks.mask(ch), 4, kernel, clamp01))
        .collect();
    ImageStack::chromatic(planes).expect("12 planes of mosaic size")
}

/// Per-channel bilinear fill of the scattered samples. Exact at sampled
/// positions and on affine images in the interior of uniformly sampled
/// channels.
pub fn bilinear_demosaic(mosaic: &MosaicImage) -> ImageStack {
    per_channel_fill(mosaic, Kernel::Bilinear, false)
}

/// Per-channel Catmull-Rom fill of the scattered samples, clamped to [0, 1].
/// This is also the initializer used by the joint optimizer.
pub fn bicubic_demosaic(mosaic: &MosaicImage) -> ImageStack {
    per_channel_fill(mosaic, Kernel::CatmullRom, true)
}

/// Four-channel polarimetric fill: samples grouped by angle regardless of
/// color (each angle occupies a uniform period-2 lattice), Catmull-Rom kernel.
pub fn bicubic_demosaic_polar(mosaic: &MosaicImage) -> ImageStack {
    let (w, h) = (mosaic.width(), mosaic.height());
    let planes = Angle::ALL
        .iter()
        .map(|&a| {
            let mut valid = vec![false; w * h];
            for r in 0..h {
                for c in 0..w {
                    valid[r * w + c] = mosaic.channel_at(r, c).angle == a;
                }
            }
            fill_sparse(mosaic.plane(), &valid, 2, Kernel::CatmullRom, true)
        })
        .collect();
    ImageStack::new(StackKind::Polar, planes).expect("4 planes of mosaic size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Plane;
    use crate::mosaic::mosaic;
    use crate::pattern::{default_pattern, Color};

    fn constant_mosaic(c: f64) -> MosaicImage {
        MosaicImage::new(Plane::new_fill(16, 16, c), default_pattern()).unwrap()
    }

    #[test]
    fn constant_mosaic_gives_constant_stack() {
        for demosaic in [bilinear_demosaic, bicubic_demosaic] {
            let out = demosaic(&constant_mosaic(0.5));
            for p in out.planes() {
                assert!(p.as_slice().iter().all(|&v| v == 0.5));
            }
        }
        let pol = bicubic_demosaic_polar(&constant_mosaic(0.5));
        for p in pol.planes() {
            assert!(p.as_slice().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn exact_at_sampled_positions() {
        let pattern = default_pattern();
        let plane = Plane::from_fn(16, 16, |r, c| ((r * 37 + c * 11) % 89) as f64 / 89.0);
        let m = MosaicImage::new(plane, pattern).unwrap();
        for demosaic in [bilinear_demosaic, bicubic_demosaic] {
            let out = demosaic(&m);
            for r in 0..16 {
                for c in 0..16 {
                    assert_eq!(out.channel(m.channel_at(r, c)).get(r, c), m.get(r, c));
                }
            }
        }
    }

    #[test]
    fn bilinear_recovers_ramp_on_uniform_channels() {
        // Ground truth identical in all channels; R/B channels sample a
        // uniform period-4 lattice, so the interior fill must be exact.
        let w = 32;
        let ramp = Plane::from_fn(w, w, |r, c| 0.05 + 0.009 * r as f64 + 0.013 * c as f64);
        let truth = ImageStack::chromatic(vec![ramp.clone(); 12]).unwrap();
        let m = mosaic(&truth, &default_pattern()).unwrap();
        let out = bilinear_demosaic(&m);
        for ch in ChannelId::all().filter(|ch| ch.color != Color::G) {
            for r in 8..w - 8 {
                for c in 8..w - 8 {
                    assert!(
                        (out.channel(ch).get(r, c) - ramp.get(r, c)).abs() < 1e-6,
                        "{ch} ({r},{c})"
                    );
                }
            }
        }
    }

    #[test]
    fn bicubic_recovers_ramp_on_uniform_channels() {
        let w = 32;
        let ramp = Plane::from_fn(w, w, |r, c| 0.05 + 0.009 * r as f64 + 0.013 * c as f64);
        let truth = ImageStack::chromatic(vec![ramp.clone(); 12]).unwrap();
        let m = mosaic(&truth, &default_pattern()).unwrap();
        let out = bicubic_demosaic(&m);
        for ch in ChannelId::all().filter(|ch| ch.color != Color::G) {
            for r in 8..w - 8 {
                for c in 8..w - 8 {
                    assert!(
                        (out.channel(ch).get(r, c) - ramp.get(r, c)).abs() < 1e-6,
                        "{ch} ({r},{c})"
                    );
                }
            }
        }
        // Angle planes live on a period-2 lattice: exact for every angle.
        let pol = bicubic_demosaic_polar(&m);
        for a in Angle::ALL {
            for r in 4..w - 4 {
                for c in 4..w - 4 {
                    assert!((pol.angle(a).get(r, c) - ramp.get(r, c)).abs() < 1e-6);
                }
            }
        }
    }
}
