//! Quantitative evaluation: PSNR, SSIM, chromaticity accuracy, and the
//! polarimetric parameter maps (Stokes S0/S1/S2, DoLP, AoP).
//!
//! Conventions, tagged in every report:
//! - Stokes from four angle planes: `S0 = (I0+I45+I90+I135)/2`,
//!   `S1 = I0 - I90`, `S2 = I45 - I135` (two-detector normalization, so an
//!   unpolarized scene of intensity c has S0 = 2c * ... matching the Malus
//!   model used by the scene generator).
//! - AoP errors are wrapped to [-90, 90) degrees before squaring and scored
//!   against a 90 degree peak.
//! - "CA" is a labeled substitute: PSNR over per-pixel (r, g) chromaticity
//!   coordinates, scale-invariant by construction.

use crate::error::{Error, Result};
use crate::image::{ImageStack, Plane, StackKind};
use crate::pattern::Angle;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const EPS_DIV: f64 = 1e-8;

const STOKES_CONVENTION: &str = "S0=(I0+I45+I90+I135)/2; S1=I0-I90; S2=I45-I135";
const CA_DEFINITION: &str =
    "CA-substitute: PSNR of (r,g)=(R,G)/(R+G+B) chromaticity, averaged over angles";

fn check_same_shape(a: &Plane, b: &Plane) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB; `f64::INFINITY` when the planes agree
/// exactly.
pub fn psnr(reference: &Plane, test: &Plane, peak: f64) -> Result<f64> {
    check_same_shape(reference, test)?;
    let mse = mse(reference.as_slice(), test.as_slice());
    Ok(psnr_from_mse(mse, peak))
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    let acc: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    acc / a.len() as f64
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Mean local SSIM over 11x11 Gaussian windows (sigma = 1.5, K1 = 0.01,
/// K2 = 0.03), valid-window borders. `peak` is the dynamic range; 1.0 for
/// normalized data gives scores identical to the 8-bit convention with 255.
pub fn ssim_with_peak(reference: &Plane, test: &Plane, peak: f64) -> Result<f64> {
    check_same_shape(reference, test)?;
    const WIN: usize = 11;
    let (w, h) = (reference.width(), reference.height());
    if w < WIN || h < WIN {
        return Err(Error::ShapeMismatch(format!("{w}x{h} smaller than the {WIN}x{WIN} window")));
    }
    let kernel = gaussian_kernel(WIN, 1.5);
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);

    let x = reference.as_slice();
    let y = test.as_slice();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(x, w, h, &kernel);
    let mu_y = filter_valid(y, w, h, &kernel);
    let s_xx = filter_valid(&xx, w, h, &kernel);
    let s_yy = filter_valid(&yy, w, h, &kernel);
    let s_xy = filter_valid(&xy, w, h, &kernel);

    let mut acc = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = s_xx[i] - mx * mx;
        let vy = s_yy[i] - my * my;
        let cxy = s_xy[i] - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(acc / mu_x.len() as f64)
}

/// SSIM with the normalized-data dynamic range of 1.0.
pub fn ssim(reference: &Plane, test: &Plane) -> Result<f64> {
    ssim_with_peak(reference, test, 1.0)
}

fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    let half = (len / 2) as f64;
    let mut k: Vec<f64> = (0..len)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable valid-mode filtering; output is (w-len+1) x (h-len+1).
fn filter_valid(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let len = kernel.len();
    let ow = w - len + 1;
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * src[r * w + c + k];
            }
            rows[r * ow + c] = acc;
        }
    }
    let oh = h - len + 1;
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * rows[(r + k) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Per-pixel Stokes parameter maps derived from four angle planes.
#[derive(Clone, Debug)]
pub struct StokesMap {
    pub s0: Plane,
    pub s1: Plane,
    pub s2: Plane,
    pub convention: &'static str,
}

/// Computes linear Stokes parameters from a polar stack (0, 45, 90, 135).
pub fn stokes(angles: &ImageStack) -> Result<StokesMap> {
    if angles.kind() != StackKind::Polar {
        return Err(Error::ChannelCount { expected: 4, got: angles.planes().len() });
    }
    let (i0, i45, i90, i135) = (
        angles.angle(Angle::A0),
        angles.angle(Angle::A45),
        angles.angle(Angle::A90),
        angles.angle(Angle::A135),
    );
    let (w, h) = (angles.width(), angles.height());
    let s0 = Plane::from_fn(w, h, |r, c| {
        (i0.get(r, c) + i45.get(r, c) + i90.get(r, c) + i135.get(r, c)) / 2.0
    });
    let s1 = Plane::from_fn(w, h, |r, c| i0.get(r, c) - i90.get(r, c));
    let s2 = Plane::from_fn(w, h, |r, c| i45.get(r, c) - i135.get(r, c));
    Ok(StokesMap { s0, s1, s2, convention: STOKES_CONVENTION })
}

/// Degree of linear polarization, clamped to [0, 1]; division guarded.
pub fn dolp(s: &StokesMap) -> Plane {
    Plane::from_fn(s.s0.width(), s.s0.height(), |r, c| {
        let m = (s.s1.get(r, c).powi(2) + s.s2.get(r, c).powi(2)).sqrt();
        (m / s.s0.get(r, c).max(EPS_DIV)).clamp(0.0, 1.0)
    })
}

/// Angle of polarization in degrees, with degenerate (unpolarized) pixels
/// flagged and reported as 0.
#[derive(Clone, Debug)]
pub struct AopMap {
    pub degrees: Plane,
    pub degenerate: Vec<bool>,
}

pub fn aop(s: &StokesMap) -> AopMap {
    let (w, h) = (s.s0.width(), s.s0.height());
    let mut degenerate = vec![false; w * h];
    let degrees = Plane::from_fn(w, h, |r, c| {
        let (s1, s2) = (s.s1.get(r, c), s.s2.get(r, c));
        if s1.abs() < 1e-12 && s2.abs() < 1e-12 {
            degenerate[r * w + c] = true;
            return 0.0;
        }
        let a = 0.5 * s2.atan2(s1).to_degrees();
        if a < 0.0 {
            a + 180.0
        } else {
            a
        }
    });
    AopMap { degrees, degenerate }
}

/// Difference of polarization angles wrapped to [-90, 90) degrees.
pub fn wrap_aop_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(180.0);
    if d >= 90.0 {
        d -= 180.0;
    }
    d
}

fn chromaticity(rgb: [&Plane; 3], r: usize, c: usize) -> (f64, f64) {
    let (red, green, blue) = (rgb[0].get(r, c), rgb[1].get(r, c), rgb[2].get(r, c));
    let sum = red + green + blue;
    if sum > EPS_DIV {
        (red / sum, green / sum)
    } else {
        (1.0 / 3.0, 1.0 / 3.0)
    }
}

/// Labeled CA substitute: PSNR over (r, g) chromaticity coordinates pooled
/// across the four angle images. Invariant to uniform brightness scaling.
pub fn color_accuracy(reference: &ImageStack, test: &ImageStack) -> Result<f64> {
    if reference.kind() != StackKind::Chromatic || test.kind() != StackKind::Chromatic {
        return Err(Error::ChannelCount { expected: 12, got: 4 });
    }
    check_same_shape(reference.plane(0), test.plane(0))?;
    let (w, h) = (reference.width(), reference.height());
    let mut acc = 0.0;
    let mut count = 0usize;
    for (ref_rgb, test_rgb) in reference.angle_images().iter().zip(test.angle_images()) {
        for r in 0..h {
            for c in 0..w {
                let (rr, rg) = chromaticity(*ref_rgb, r, c);
                let (tr, tg) = chromaticity(test_rgb, r, c);
                acc += (rr - tr) * (rr - tr) + (rg - tg) * (rg - tg);
                count += 2;
            }
        }
    }
    Ok(psnr_from_mse(acc / count as f64, 1.0))
}

/// dB value that serializes infinity as the string `"inf"` (JSON has no
/// infinity literal and the identity case must round-trip).
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Db(pub f64);

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            serializer.serialize_f64(self.0)
        } else {
            serializer.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Db(v)),
            Raw::Text(s) if s == "inf" => Ok(Db(f64::INFINITY)),
            Raw::Text(s) => Err(D::Error::custom(format!("bad dB value {s:?}"))),
        }
    }
}

/// Per-angle-image metric detail carried in the report metadata.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct AngleMetrics {
    pub angle: String,
    pub psnr: Db,
    pub ssim: f64,
    pub ca_substitute: Db,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub method: String,
    pub config_hash: String,
    pub stokes_convention: String,
    pub ca_definition: String,
    pub per_angle: Vec<AngleMetrics>,
}

/// The full evaluation of a reconstructed stack against ground truth.
/// Top-level metric values are means over the four reconstructed angle
/// images; polarimetric scores compare parameter maps derived from the
/// per-angle color averages.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr: Db,
    pub ssim: f64,
    pub ca_substitute: Db,
    pub s0_psnr: Db,
    pub dolp_psnr: Db,
    pub aop_psnr: Db,
    pub metadata: ReportMetadata,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("report parse: {e}")))
    }

    /// Stable CSV header matching [`MetricsReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "method,lambda,psnr,ssim,ca_substitute,s0_psnr,dolp_psnr,aop_psnr"
    }

    pub fn csv_row(&self, method: &str, lambda: Option<f64>) -> String {
        let lambda = lambda.map(|l| l.to_string()).unwrap_or_default();
        format!(
            "{method},{lambda},{},{},{},{},{},{}",
            self.psnr.0, self.ssim, self.ca_substitute.0, self.s0_psnr.0, self.dolp_psnr.0, self.aop_psnr.0
        )
    }
}

/// Computes every metric family for a reconstructed 12-channel stack.
pub fn evaluate(reference: &ImageStack, test: &ImageStack, method: &str) -> Result<MetricsReport> {
    evaluate_with_hash(reference, test, method, "")
}

pub fn evaluate_with_hash(
    reference: &ImageStack,
    test: &ImageStack,
    method: &str,
    config_hash: &str,
) -> Result<MetricsReport> {
    if reference.kind() != StackKind::Chromatic || test.kind() != StackKind::Chromatic {
        return Err(Error::ChannelCount { expected: 12, got: 4 });
    }
    check_same_shape(reference.plane(0), test.plane(0))?;

    let mut per_angle = Vec::with_capacity(4);
    for (ai, (ref_rgb, test_rgb)) in
        reference.angle_images().iter().zip(test.angle_images()).enumerate()
    {
        // PSNR pools the MSE of the three color planes of this angle image.
        let mut acc = 0.0;
        let mut n = 0usize;
        let mut ssim_acc = 0.0;
        let mut ca_acc = 0.0;
        let mut ca_n = 0usize;
        for c in 0..3 {
            acc += mse(ref_rgb[c].as_slice(), test_rgb[c].as_slice())
                * ref_rgb[c].as_slice().len() as f64;
            n += ref_rgb[c].as_slice().len();
            ssim_acc += ssim(ref_rgb[c], test_rgb[c])?;
        }
        let (w, h) = (reference.width(), reference.height());
        for r in 0..h {
            for c in 0..w {
                let (rr, rg) = chromaticity(*ref_rgb, r, c);
                let (tr, tg) = chromaticity(test_rgb, r, c);
                ca_acc += (rr - tr) * (rr - tr) + (rg - tg) * (rg - tg);
                ca_n += 2;
            }
        }
        per_angle.push(AngleMetrics {
            angle: Angle::ALL[ai].label().to_string(),
            psnr: Db(psnr_from_mse(acc / n as f64, 1.0)),
            ssim: ssim_acc / 3.0,
            ca_substitute: Db(psnr_from_mse(ca_acc / ca_n as f64, 1.0)),
        });
    }

    let mean_psnr = per_angle.iter().map(|a| a.psnr.0).sum::<f64>() / 4.0;
    let mean_ssim = per_angle.iter().map(|a| a.ssim).sum::<f64>() / 4.0;
    let mean_ca = per_angle.iter().map(|a| a.ca_substitute.0).sum::<f64>() / 4.0;

    let ref_stokes = stokes(&reference.angle_average())?;
    let test_stokes = stokes(&test.angle_average())?;
    let s0_psnr = psnr(&ref_stokes.s0, &test_stokes.s0, 1.0)?;
    let dolp_psnr = psnr(&dolp(&ref_stokes), &dolp(&test_stokes), 1.0)?;

    let ref_aop = aop(&ref_stokes);
    let test_aop = aop(&test_stokes);
    let aop_mse = ref_aop
        .degrees
        .as_slice()
        .iter()
        .zip(test_aop.degrees.as_slice())
        .map(|(&a, &b)| wrap_aop_diff(a, b).powi(2))
        .sum::<f64>()
        / (reference.width() * reference.height()) as f64;
    let aop_psnr = psnr_from_mse(aop_mse, 90.0);

    Ok(MetricsReport {
        psnr: Db(mean_psnr),
        ssim: mean_ssim,
        ca_substitute: Db(mean_ca),
        s0_psnr: Db(s0_psnr),
        dolp_psnr: Db(dolp_psnr),
        aop_psnr: Db(aop_psnr),
        metadata: ReportMetadata {
            method: method.to_string(),
            config_hash: config_hash.to_string(),
            stokes_convention: STOKES_CONVENTION.to_string(),
            ca_definition: CA_DEFINITION.to_string(),
            per_angle,
        },
    })
}
