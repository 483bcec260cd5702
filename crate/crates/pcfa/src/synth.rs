//! Synthetic polarized-scene generation. Every scene is defined by per-pixel
//! intensity / degree-of-polarization / angle-of-polarization fields; channel
//! planes follow the Malus modulation
//! `I_c(theta) = chroma_c * S0(p)/2 * (1 + DoLP(p) * cos(2*theta - 2*AoP(p)))`.

use crate::error::{Error, Result};
use crate::image::{ImageStack, Plane};
use crate::pattern::ChannelId;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Constant,
    Gradient,
    PolarizedDisc,
    BirefringentTexture,
    Noise,
}

impl SceneKind {
    pub fn parse(s: &str) -> Option<SceneKind> {
        match s {
            "constant" => Some(SceneKind::Constant),
            "gradient" => Some(SceneKind::Gradient),
            "polarized-disc" => Some(SceneKind::PolarizedDisc),
            "birefringent-texture" => Some(SceneKind::BirefringentTexture),
            "noise" => Some(SceneKind::Noise),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Constant => "constant",
            SceneKind::Gradient => "gradient",
            SceneKind::PolarizedDisc => "polarized-disc",
            SceneKind::BirefringentTexture => "birefringent-texture",
            SceneKind::Noise => "noise",
        }
    }
}

/// Parameters of a synthetic scene. Dimensions must be multiples of 4,
/// `dolp` must lie in [0, 1], `aop_deg` is taken modulo 180.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub width: usize,
    pub height: usize,
    /// Peak unpolarized intensity S0 in [0, 1].
    pub intensity: f64,
    /// Degree of linear polarization in [0, 1].
    pub dolp: f64,
    /// Angle of polarization in degrees, [0, 180).
    pub aop_deg: f64,
    /// Per-color intensity weights in [0, 1].
    pub chroma: [f64; 3],
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width % 4 != 0 || self.height % 4 != 0 || self.width == 0 || self.height == 0 {
            return Err(Error::DimensionNotMultipleOf4 { width: self.width, height: self.height });
        }
        if !(0.0..=1.0).contains(&self.dolp) {
            return Err(Error::InvalidParameter(format!("dolp {} outside [0, 1]", self.dolp)));
        }
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::InvalidParameter(format!(
                "intensity {} outside [0, 1]",
                self.intensity
            )));
        }
        if self.chroma.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidParameter("chroma weights outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Disc geometry used by the polarized-disc kind: center and radius in
    /// pixels. Exposed so evaluations can locate the disc interior.
    pub fn disc_geometry(&self) -> (f64, f64, f64) {
        let cy = (self.height as f64 - 1.0) / 2.0;
        let cx = (self.width as f64 - 1.0) / 2.0;
        let radius = 0.35 * self.width.min(self.height) as f64;
        (cy, cx, radius)
    }
}

/// Per-pixel polarization state; `aop_color_offset_deg` is nonzero only for
/// birefringent content, where the polarization angle depends on color.
struct PixelState {
    s0: f64,
    dolp: f64,
    aop_deg: f64,
    aop_color_offset_deg: [f64; 3],
}

/// Texture field: a seeded sum of oriented sinusoids normalized to [0, 1].
/// Frequencies span roughly 6 to 30 pixel periods at the default sizes, so
/// the field carries energy well above what period-4 sampling resolves
/// trivially.
struct TextureField {
    terms: Vec<(f64, f64, f64)>, // (fy, fx, phase)
}

impl TextureField {
    fn new(rng: &mut ChaCha8Rng, waves: usize) -> Self {
        let terms = (0..waves)
            .map(|_| {
                let freq = rng.random_range(2.0..10.0);
                let dir = rng.random_range(0.0..std::f64::consts::TAU);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (freq * dir.sin(), freq * dir.cos(), phase)
            })
            .collect();
        TextureField { terms }
    }

    /// Value in [0, 1] at normalized coordinates.
    fn at(&self, y: f64, x: f64) -> f64 {
        let s: f64 = self
            .terms
            .iter()
            .map(|&(fy, fx, ph)| (std::f64::consts::TAU * (fy * y + fx * x) + ph).sin())
            .sum();
        (0.5 + 0.7 * s / (self.terms.len() as f64).sqrt()).clamp(0.0, 1.0)
    }
}

/// A circular feature of a polarized-disc scene.
struct Disc {
    cy: f64,
    cx: f64,
    radius: f64,
    s0: f64,
    dolp: f64,
    aop_deg: f64,
}

impl Disc {
    fn contains(&self, r: f64, c: f64) -> Option<f64> {
        let d = ((r - self.cy).powi(2) + (c - self.cx).powi(2)).sqrt();
        (d <= self.radius).then(|| d / self.radius)
    }
}

/// Generates the 12-channel ground-truth stack for a scene. Deterministic
/// given the spec (including its seed).
pub fn synthesize_scene(spec: &SceneSpec) -> Result<ImageStack> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Materialize the per-pixel state first so channel order cannot perturb
    // the random stream.
    let states: Vec<PixelState> = match spec.kind {
        SceneKind::Constant => (0..w * h)
            .map(|_| PixelState {
                s0: spec.intensity,
                dolp: spec.dolp,
                aop_deg: spec.aop_deg,
                aop_color_offset_deg: [0.0; 3],
            })
            .collect(),
        SceneKind::Gradient => (0..w * h)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let t = (r + c) as f64 / (w + h - 2) as f64;
                PixelState {
                    s0: spec.intensity * (0.08 + 0.9 * t),
                    dolp: spec.dolp,
                    aop_deg: spec.aop_deg,
                    aop_color_offset_deg: [0.0; 3],
                }
            })
            .collect(),
        SceneKind::PolarizedDisc => {
            // Seeded satellite discs enrich the scene with edges; the main
            // disc is drawn last, so its documented geometry and interior
            // polarization always hold.
            let min_dim = w.min(h) as f64;
            let mut discs: Vec<Disc> = (0..5)
                .map(|_| Disc {
                    cy: rng.random_range(0.0..h as f64),
                    cx: rng.random_range(0.0..w as f64),
                    radius: rng.random_range(0.06..0.16) * min_dim,
                    s0: spec.intensity * rng.random_range(0.55..1.0),
                    dolp: spec.dolp * rng.random_range(0.3..1.0),
                    aop_deg: rng.random_range(0.0..180.0),
                })
                .collect();
            let (cy, cx, radius) = spec.disc_geometry();
            discs.push(Disc {
                cy,
                cx,
                radius,
                s0: spec.intensity,
                dolp: spec.dolp,
                aop_deg: spec.aop_deg,
            });
            (0..w * h)
                .map(|i| {
                    let (r, c) = (i / w, i % w);
                    let (rf, cf) = (r as f64, c as f64);
                    for disc in discs.iter().rev() {
                        if let Some(t) = disc.contains(rf, cf) {
                            return PixelState {
                                s0: disc.s0 * (1.0 - 0.15 * t * t),
                                dolp: disc.dolp,
                                aop_deg: disc.aop_deg,
                                aop_color_offset_deg: [0.0; 3],
                            };
                        }
                    }
                    // background: dim diagonal shading, unpolarized
                    let t = (r + c) as f64 / (w + h - 2) as f64;
                    PixelState {
                        s0: spec.intensity * (0.25 + 0.2 * t),
                        dolp: 0.0,
                        aop_deg: 0.0,
                        aop_color_offset_deg: [0.0; 3],
                    }
                })
                .collect()
        }
        SceneKind::BirefringentTexture => {
            let t_intensity = TextureField::new(&mut rng, 6);
            let t_dolp = TextureField::new(&mut rng, 4);
            let t_aop = TextureField::new(&mut rng, 4);
            (0..w * h)
                .map(|i| {
                    let (r, c) = (i / w, i % w);
                    let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
                    PixelState {
                        s0: spec.intensity * (0.12 + 0.88 * t_intensity.at(y, x)),
                        dolp: spec.dolp * (0.4 + 0.6 * t_dolp.at(y, x)),
                        aop_deg: spec.aop_deg + 90.0 * t_aop.at(y, x),
                        aop_color_offset_deg: [0.0, 15.0, 30.0],
                    }
                })
                .collect()
        }
        SceneKind::Noise => (0..w * h)
            .map(|_| PixelState {
                s0: spec.intensity * rng.random_range(0.05..=1.0),
                dolp: spec.dolp * rng.random::<f64>(),
                aop_deg: rng.random_range(0.0..180.0),
                aop_color_offset_deg: [0.0; 3],
            })
            .collect(),
    };

    let planes = ChannelId::all()
        .map(|ch| {
            let chroma = spec.chroma[ch.color.index()];
            let theta = 2.0 * ch.angle.degrees().to_radians();
            let data = states
                .iter()
                .map(|st| {
                    let aop =
                        2.0 * (st.aop_deg + st.aop_color_offset_deg[ch.color.index()]).to_radians();
                    chroma * st.s0 / 2.0 * (1.0 + st.dolp * (theta - aop).cos())
                })
                .collect();
            Plane::from_vec(w, h, data).unwrap()
        })
        .collect();
    ImageStack::chromatic(planes)
}

/// True whether a scene's polarization content is negligible; used to tag
/// dataset groups.
pub fn is_unpolarized(spec: &SceneSpec) -> bool {
    spec.dolp == 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::{Angle, Color};

    fn base_spec(kind: SceneKind) -> SceneSpec {
        SceneSpec {
            kind,
            width: 16,
            height: 16,
            intensity: 1.0,
            dolp: 0.0,
            aop_deg: 0.0,
            chroma: [1.0, 1.0, 1.0],
            seed: 1,
        }
    }

    #[test]
    fn unpolarized_constant_has_equal_angle_planes() {
        let spec = base_spec(SceneKind::Constant);
        let stack = synthesize_scene(&spec).unwrap();
        for color in Color::ALL {
            let a0 = stack.channel(ChannelId::new(color, Angle::A0));
            for a in [Angle::A45, Angle::A90, Angle::A135] {
                assert_eq!(stack.channel(ChannelId::new(color, a)), a0);
            }
        }
        assert_eq!(stack.channel(ChannelId::new(Color::R, Angle::A0)).get(0, 0), 0.5);
    }

    #[test]
    fn malus_law_at_full_polarization() {
        let mut spec = base_spec(SceneKind::Constant);
        spec.dolp = 1.0;
        spec.aop_deg = 0.0;
        let stack = synthesize_scene(&spec).unwrap();
        let at = |a| stack.channel(ChannelId::new(Color::G, a)).get(3, 5);
        assert!((at(Angle::A0) - 1.0).abs() < 1e-12);
        assert!(at(Angle::A90).abs() < 1e-12);
        assert!((at(Angle::A45) - 0.5).abs() < 1e-12);
        assert!((at(Angle::A135) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        for kind in [SceneKind::PolarizedDisc, SceneKind::BirefringentTexture, SceneKind::Noise] {
            let mut spec = base_spec(kind);
            spec.dolp = 0.7;
            spec.seed = 42;
            assert_eq!(synthesize_scene(&spec).unwrap(), synthesize_scene(&spec).unwrap());
        }
    }

    #[test]
    fn dolp_out_of_range_rejected() {
        let mut spec = base_spec(SceneKind::Constant);
        spec.dolp = 1.5;
        assert!(synthesize_scene(&spec).is_err());
    }

    #[test]
    fn values_stay_in_unit_range() {
        for kind in
            [SceneKind::Gradient, SceneKind::PolarizedDisc, SceneKind::BirefringentTexture, SceneKind::Noise]
        {
            let mut spec = base_spec(kind);
            spec.dolp = 1.0;
            spec.chroma = [1.0, 0.8, 0.6];
            let stack = synthesize_scene(&spec).unwrap();
            for p in stack.planes() {
                assert!(p.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn disc_interior_carries_spec_polarization() {
        let mut spec = base_spec(SceneKind::PolarizedDisc);
        spec.width = 32;
        spec.height = 32;
        spec.dolp = 0.8;
        spec.aop_deg = 30.0;
        let stack = synthesize_scene(&spec).unwrap();
        let (cy, cx, _) = spec.disc_geometry();
        let (r, c) = (cy as usize, cx as usize);
        // Recover DoLP from the four G-channel intensities at the center.
        let i = |a| stack.channel(ChannelId::new(Color::G, a)).get(r, c);
        let s0 = (i(Angle::A0) + i(Angle::A45) + i(Angle::A90) + i(Angle::A135)) / 2.0;
        let s1 = i(Angle::A0) - i(Angle::A90);
        let s2 = i(Angle::A45) - i(Angle::A135);
        assert!(((s1 * s1 + s2 * s2).sqrt() / s0 - 0.8).abs() < 1e-9);
        let aop = 0.5 * s2.atan2(s1).to_degrees();
        assert!((aop - 30.0).abs() < 1e-9);
    }
}
