//! The joint demosaicing optimizer.
//!
//! Scaled-multiplier ADMM over the split objective
//!
//! ```text
//! 1/2 ||I - A_pol(RP)||^2 + 1/2 ||I - A_rgb(RC)||^2 + f(P) + g(C)
//!   s.t. RP = P, RC = C
//! ```
//!
//! where `A_pol` / `A_rgb` sample each pixel's observed angle / channel and
//! the priors f, g are realized by sparse coding overlapping patches against
//! the learned dictionaries. Per iteration: (1) P and C absorb the coded
//! reconstruction of `R* + y*` through a proximal blend, (2) RP and RC solve
//! the per-pixel scalar quadratics of the fidelity + penalty terms, (3) the
//! multipliers accumulate the primal gaps, and the loop stops when
//! `||dS_pol|| + ||dS_rgb|| < eps` or the iteration cap is reached.

use crate::alm::{alm_encode_with, AlmOptions};
use crate::baselines;
use crate::dictionary::{DictKind, Dictionary};
use crate::error::{Error, Result};
use crate::image::{ImageStack, MosaicImage, Plane, StackKind};
use crate::omp::{center_columns, encode_columns};
use crate::pattern::{build_masks, Angle, ChannelMasks, Color, CHANNEL_COUNT};
use crate::signal::{aggregate_dense_patches, extract_dense_patches};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coder {
    Omp,
    /// OMP warm start refined by the low-rank + sparse-noise ALM pass each
    /// iteration; substantially slower, the noise term is discarded from the
    /// reconstruction.
    OmpAlm,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryMode {
    /// Separate polarimetric and chromatic dictionaries (the joint method).
    JointTwoDics,
    /// One 192-row dictionary over 12-channel patches; no polarimetric branch.
    SingleDic,
    /// Twelve 16-row per-channel dictionaries; no cross-channel coupling.
    PerChannel12Dics,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho_pol: f64,
    pub rho_rgb: f64,
    pub lambda: f64,
    pub max_iter: usize,
    pub eps: f64,
    pub coder: Coder,
    pub patch_stride: usize,
    pub dictionary_mode: DictionaryMode,
    /// OMP atoms per patch.
    pub sparsity: usize,
    /// OMP residual stop on normalized data.
    pub residual_tol: f64,
    /// Weight of the coded prior in the proximal blend
    /// `(rho * target + 2 * gamma * prior) / (rho + 2 * gamma)`.
    pub prior_weight: f64,
    /// Weight of the data term at observed pixel-channels. At the ADMM fixed
    /// point the sampled-position error is `(2 * prior_weight /
    /// fidelity_weight) * |RC - g|`, so this bounds how far the coded prior
    /// may pull the reconstruction off the measurements.
    pub fidelity_weight: f64,
    /// Weight of the polarimetric constraint on the chromatic
    /// reconstruction: per pixel the RC update additionally minimizes
    /// `kappa/2 * || pi((R + 2G + B)/4 - P) ||^2` over the four angles,
    /// where `pi` removes the angle mean. The constraint transfers the
    /// angular modulation (the polarimetric content) of P onto RC while
    /// leaving absolute luminance and chromaticity untouched. Joint mode
    /// only.
    pub pol_consistency: f64,
    /// Inner budget of the per-iteration ALM refinement (OmpAlm coder only).
    pub alm_inner_iter: usize,
    pub alm_tol: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho_pol: 1.05,
            rho_rgb: 1.05,
            lambda: 1e-4,
            max_iter: 50,
            eps: 1e-3,
            coder: Coder::Omp,
            patch_stride: 2,
            dictionary_mode: DictionaryMode::JointTwoDics,
            sparsity: 8,
            residual_tol: 1e-6,
            prior_weight: 1.0,
            fidelity_weight: 16.0,
            pol_consistency: 2.0,
            alm_inner_iter: 25,
            alm_tol: 1e-6,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rho_pol <= 0.0 || self.rho_rgb <= 0.0 {
            return Err(Error::InvalidParameter("penalty parameters must be positive".into()));
        }
        if self.eps <= 0.0 {
            return Err(Error::InvalidParameter("eps must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !matches!(self.patch_stride, 1 | 2 | 4) {
            return Err(Error::InvalidParameter("patch stride must be 1, 2 or 4".into()));
        }
        if self.sparsity == 0 {
            return Err(Error::InvalidParameter("sparsity must be at least 1".into()));
        }
        if self.prior_weight <= 0.0 {
            return Err(Error::InvalidParameter("prior weight must be positive".into()));
        }
        if self.fidelity_weight <= 0.0 {
            return Err(Error::InvalidParameter("fidelity weight must be positive".into()));
        }
        if self.pol_consistency < 0.0 {
            return Err(Error::InvalidParameter("pol consistency weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// The dictionaries a run codes against; must match the configured mode.
pub enum DictionarySet<'a> {
    Joint { pol: &'a Dictionary, rgb: &'a Dictionary },
    Single { rgb: &'a Dictionary },
    PerChannel { dics: &'a [Dictionary] },
}

impl DictionarySet<'_> {
    fn validate_for(&self, mode: DictionaryMode) -> Result<()> {
        match (self, mode) {
            (DictionarySet::Joint { pol, rgb }, DictionaryMode::JointTwoDics) => {
                if pol.kind() != DictKind::Pol {
                    return Err(Error::KindMismatch { expected: DictKind::Pol, got: pol.kind() });
                }
                if rgb.kind() != DictKind::Rgb {
                    return Err(Error::KindMismatch { expected: DictKind::Rgb, got: rgb.kind() });
                }
                Ok(())
            }
            (DictionarySet::Single { rgb }, DictionaryMode::SingleDic) => {
                if rgb.kind() != DictKind::Rgb {
                    return Err(Error::KindMismatch { expected: DictKind::Rgb, got: rgb.kind() });
                }
                Ok(())
            }
            (DictionarySet::PerChannel { dics }, DictionaryMode::PerChannel12Dics) => {
                if dics.len() != 12 {
                    return Err(Error::ChannelCount { expected: 12, got: dics.len() });
                }
                for d in *dics {
                    if d.kind() != DictKind::Mono {
                        return Err(Error::KindMismatch {
                            expected: DictKind::Mono,
                            got: d.kind(),
                        });
                    }
                }
                Ok(())
            }
            _ => Err(Error::InvalidParameter(
                "dictionary set does not match the configured mode".into(),
            )),
        }
    }
}

/// One completed iteration: multiplier-change norms and the quadratic energy.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub delta_s_pol: f64,
    pub delta_s_rgb: f64,
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct DemosaicResult {
    /// Primary output: the twelve reconstructed channels, clamped to [0, 1].
    pub rc: ImageStack,
    /// Polarimetric constraint byproduct (joint mode only), clamped.
    pub rp: Option<ImageStack>,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<IterRecord>,
    pub config: AdmmConfig,
}

/// CSV emission of the residual trace: `iteration,delta_s_pol,delta_s_rgb,energy`.
pub fn residual_trace_csv(result: &DemosaicResult) -> String {
    let mut out = String::from("iteration,delta_s_pol,delta_s_rgb,energy\n");
    for rec in &result.trace {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rec.iteration, rec.delta_s_pol, rec.delta_s_rgb, rec.energy
        ));
    }
    out
}

/// Joint demosaicing with the two separately learned dictionaries.
pub fn demosaic(
    mosaic: &MosaicImage,
    d_pol: &Dictionary,
    d_rgb: &Dictionary,
    cfg: &AdmmConfig,
) -> Result<DemosaicResult> {
    if cfg.dictionary_mode != DictionaryMode::JointTwoDics {
        return Err(Error::InvalidParameter(
            "demosaic runs joint-two-dics; use demosaic_variant for ablations".into(),
        ));
    }
    demosaic_variant(mosaic, &DictionarySet::Joint { pol: d_pol, rgb: d_rgb }, cfg)
}

struct Branch<'a> {
    dict: &'a Dictionary,
    gram: DMatrix<f64>,
}

impl<'a> Branch<'a> {
    fn new(dict: &'a Dictionary) -> Self {
        Branch { dict, gram: dict.gram() }
    }

    /// Sparse-codes the overlapping patches of `planes` and aggregates the
    /// reconstruction back into per-pixel planes ("denoised" prior estimate).
    fn code_planes(&self, planes: &[Plane], cfg: &AdmmConfig) -> Result<Vec<Plane>> {
        let (w, h) = (planes[0].width(), planes[0].height());
        let mut work = extract_dense_patches(planes, cfg.patch_stride);
        let means = center_columns(&mut work);
        let picks =
            encode_columns(&work, self.dict.atoms(), &self.gram, cfg.sparsity, cfg.residual_tol);

        let mut rec = DMatrix::zeros(work.nrows(), work.ncols());
        match cfg.coder {
            Coder::Omp => {
                for (j, (support, coeffs)) in picks.iter().enumerate() {
                    let mut col = rec.column_mut(j);
                    for (&a, &x) in support.iter().zip(coeffs) {
                        col.axpy(x, &self.dict.atoms().column(a), 1.0);
                    }
                }
            }
            Coder::OmpAlm => {
                let mut warm = DMatrix::zeros(self.dict.atom_count(), work.ncols());
                for (j, (support, coeffs)) in picks.iter().enumerate() {
                    for (&a, &x) in support.iter().zip(coeffs) {
                        warm[(a, j)] = x;
                    }
                }
                let signals =
                    crate::signal::SignalMatrix::new(self.dict.kind().signal_kind(), work.clone())?;
                let opts = AlmOptions {
                    max_iter: cfg.alm_inner_iter,
                    tol: cfg.alm_tol,
                    ..AlmOptions::new(cfg.lambda.max(1e-12))
                };
                let sol = alm_encode_with(&signals, self.dict, &opts, Some(&warm))?;
                rec = self.dict.atoms() * &sol.x; // noise term E discarded
            }
        }
        for (j, mut col) in rec.column_iter_mut().enumerate() {
            col.add_scalar_mut(means[j]);
        }
        Ok(aggregate_dense_patches(&rec, planes.len(), w, h, cfg.patch_stride))
    }
}

/// Proximal blend `target + 2g/(rho + 2g) * (prior - target)`; the increment
/// form keeps exact fixed points exact.
fn blend(target: &ImageStack, prior: &[Plane], rho: f64, gamma: f64) -> ImageStack {
    let w = 2.0 * gamma / (rho + 2.0 * gamma);
    let planes = target
        .planes()
        .iter()
        .zip(prior)
        .map(|(t, f)| {
            let data = t
                .as_slice()
                .iter()
                .zip(f.as_slice())
                .map(|(&tv, &fv)| tv + w * (fv - tv))
                .collect();
            Plane::from_vec(t.width(), t.height(), data).unwrap()
        })
        .collect();
    ImageStack::new(target.kind(), planes).unwrap()
}

/// `target + scale * other`, elementwise.
fn add_scaled(target: &ImageStack, other: &ImageStack, scale: f64) -> ImageStack {
    target.zip_map(other, |a, b| a + scale * b)
}

/// RGGB census weights of the polarimetric collapse.
const CENSUS: [f64; 3] = [0.25, 0.5, 0.25];

/// Exact minimizer of `beta/2 (I(p) - v)^2 + rho/2 (v - t)^2` at observed
/// pixel-channels, `v = t` elsewhere; `t = P - y` is the proximal target.
/// The increment form `t + beta * (I - t)/(beta + rho)` is exact at `I == t`.
pub(crate) fn fidelity_update_polar(
    mosaic: &MosaicImage,
    masks: &ChannelMasks,
    aux: &ImageStack,
    multiplier: &ImageStack,
    rho: f64,
    beta: f64,
) -> ImageStack {
    debug_assert_eq!(aux.kind(), StackKind::Polar);
    let (w, h) = (mosaic.width(), mosaic.height());
    let planes: Vec<Plane> = aux
        .planes()
        .iter()
        .zip(multiplier.planes())
        .enumerate()
        .map(|(idx, (p, s))| {
            Plane::from_fn(w, h, |r, c| {
                let t = p.get(r, c) - s.get(r, c) / rho;
                if masks.channel_at(r, c).angle.index() == idx {
                    t + beta * (mosaic.get(r, c) - t) / (beta + rho)
                } else {
                    t
                }
            })
        })
        .collect();
    ImageStack::new(StackKind::Polar, planes).unwrap()
}

/// The chromatic counterpart. Per pixel, the twelve channels solve
///
/// ```text
/// min_x sum_{c,a} rho/2 (x_ca - t_ca)^2 + [observed] beta/2 (I - x_obs)^2
///       + kappa/2 || pi( census(x) - P(p, .) ) ||^2
/// ```
///
/// jointly, where `census(x)_a = sum_c q_c x_ca` and `pi = I - (1/4) 1 1^T`
/// removes the angle mean, so only the angular modulation of P is
/// transferred. With the uncoupled per-channel solutions `u_ca` (weights
/// `D_ca = rho + beta [observed]`), the optimality system reduces to a
/// 4-vector `g` solving `(I + kappa pi diag(H)) g = pi (census(u) - P)`
/// with `H_a = sum_c q_c^2 / D_ca`; Sherman-Morrison gives `g` in closed
/// form, and `x_ca = u_ca - kappa q_c g_a / D_ca`.
pub(crate) fn fidelity_update_chromatic(
    mosaic: &MosaicImage,
    masks: &ChannelMasks,
    aux: &ImageStack,
    multiplier: &ImageStack,
    rho: f64,
    beta: f64,
    pol: Option<(&ImageStack, f64)>,
) -> ImageStack {
    debug_assert_eq!(aux.kind(), StackKind::Chromatic);
    let (w, h) = (mosaic.width(), mosaic.height());
    let mut planes: Vec<Plane> =
        (0..CHANNEL_COUNT).map(|_| Plane::new_fill(w, h, 0.0)).collect();
    let coupling = pol.filter(|(_, kappa)| *kappa > 0.0);
    for r in 0..h {
        for col in 0..w {
            let observed = masks.channel_at(r, col);
            let i_val = mosaic.get(r, col);
            let mut u = [[0.0; 3]; 4]; // uncoupled solutions, [angle][color]
            let mut d = [[rho; 3]; 4];
            for (ai, angle) in Angle::ALL.into_iter().enumerate() {
                for (ci, color) in Color::ALL.into_iter().enumerate() {
                    let ch = crate::pattern::ChannelId::new(color, angle).index();
                    let t = aux.plane(ch).get(r, col)
                        - multiplier.plane(ch).get(r, col) / rho;
                    u[ai][ci] = if observed.index() == ch {
                        d[ai][ci] = rho + beta;
                        t + beta * (i_val - t) / (beta + rho)
                    } else {
                        t
                    };
                }
            }

            let mut g = [0.0; 4];
            if let Some((p_stack, kappa)) = coupling {
                let mut v = [0.0; 4];
                let mut hh = [0.0; 4];
                for ai in 0..4 {
                    let census: f64 =
                        (0..3).map(|ci| CENSUS[ci] * u[ai][ci]).sum();
                    v[ai] = census - p_stack.plane(ai).get(r, col);
                    hh[ai] = (0..3).map(|ci| CENSUS[ci] * CENSUS[ci] / d[ai][ci]).sum();
                }
                let v_mean = (v[0] + v[1] + v[2] + v[3]) / 4.0;
                // w = M^-1 pi(v) with M = I + kappa diag(H); Sherman-Morrison
                // absorbs the rank-1 mean-removal part of the system matrix.
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                let mut wv = [0.0; 4];
                for ai in 0..4 {
                    wv[ai] = (v[ai] - v_mean) / (1.0 + kappa * hh[ai]);
                    s1 += hh[ai] * wv[ai];
                    s2 += hh[ai] / (1.0 + kappa * hh[ai]);
                }
                let boost = (kappa / 4.0) * s1 / (1.0 - (kappa / 4.0) * s2);
                for ai in 0..4 {
                    g[ai] = wv[ai] + boost / (1.0 + kappa * hh[ai]);
                }
            }

            let kappa = coupling.map(|(_, k)| k).unwrap_or(0.0);
            for (ai, angle) in Angle::ALL.into_iter().enumerate() {
                for (ci, color) in Color::ALL.into_iter().enumerate() {
                    let ch = crate::pattern::ChannelId::new(color, angle).index();
                    let value = if g[ai] == 0.0 {
                        u[ai][ci]
                    } else {
                        u[ai][ci] - kappa * CENSUS[ci] * g[ai] / d[ai][ci]
                    };
                    planes[ch].set(r, col, value);
                }
            }
        }
    }
    ImageStack::chromatic(planes).unwrap()
}

/// Value of the scaled quadratic (fidelity, both penalty terms, and the
/// polarimetric consistency term) for the given iterates; the polarimetric
/// pieces are skipped in ablation modes.
#[allow(clippy::too_many_arguments)]
pub(crate) fn quadratic_energy(
    mosaic: &MosaicImage,
    masks: &ChannelMasks,
    rp: Option<&ImageStack>,
    rc: &ImageStack,
    p: Option<&ImageStack>,
    c: &ImageStack,
    s_pol: Option<&ImageStack>,
    s_rgb: &ImageStack,
    cfg: &AdmmConfig,
) -> f64 {
    let (w, h) = (mosaic.width(), mosaic.height());
    let beta = cfg.fidelity_weight;
    let mut energy = 0.0;
    for r in 0..h {
        for col in 0..w {
            let ch = masks.channel_at(r, col);
            let i = mosaic.get(r, col);
            if let Some(rp) = rp {
                let d = i - rp.plane(ch.angle.index()).get(r, col);
                energy += 0.5 * beta * d * d;
            }
            let d = i - rc.plane(ch.index()).get(r, col);
            energy += 0.5 * beta * d * d;
        }
    }
    if let Some(p_stack) = p {
        // angular-modulation consistency: per pixel, the mean-removed gap
        // between census(RC) and P over the four angles
        let census = rc.angle_average_bayer();
        let mut acc = 0.0;
        for r in 0..h {
            for col in 0..w {
                let gaps: Vec<f64> = (0..4)
                    .map(|ai| census.plane(ai).get(r, col) - p_stack.plane(ai).get(r, col))
                    .collect();
                let mean = gaps.iter().sum::<f64>() / 4.0;
                acc += gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>();
            }
        }
        energy += 0.5 * cfg.pol_consistency * acc;
    }
    if let (Some(rp), Some(p), Some(s_pol)) = (rp, p, s_pol) {
        let mut acc = 0.0;
        for ((rpp, pp), sp) in rp.planes().iter().zip(p.planes()).zip(s_pol.planes()) {
            for ((&a, &b), &s) in
                rpp.as_slice().iter().zip(pp.as_slice()).zip(sp.as_slice())
            {
                let d = a - (b - s / cfg.rho_pol);
                acc += d * d;
            }
        }
        energy += 0.5 * cfg.rho_pol * acc;
    }
    let mut acc = 0.0;
    for ((rcp, cp), sp) in rc.planes().iter().zip(c.planes()).zip(s_rgb.planes()) {
        for ((&a, &b), &s) in rcp.as_slice().iter().zip(cp.as_slice()).zip(sp.as_slice()) {
            let d = a - (b - s / cfg.rho_rgb);
            acc += d * d;
        }
    }
    energy + 0.5 * cfg.rho_rgb * acc
}

/// Runs the loop in the configured dictionary mode.
pub fn demosaic_variant(
    mosaic: &MosaicImage,
    dictionaries: &DictionarySet<'_>,
    cfg: &AdmmConfig,
) -> Result<DemosaicResult> {
    cfg.validate()?;
    dictionaries.validate_for(cfg.dictionary_mode)?;
    let (w, h) = (mosaic.width(), mosaic.height());
    let masks = build_masks(mosaic.pattern(), w, h)?;

    let pol_branch = match dictionaries {
        DictionarySet::Joint { pol, .. } => Some(Branch::new(pol)),
        _ => None,
    };
    let rgb_branch = match dictionaries {
        DictionarySet::Joint { rgb, .. } | DictionarySet::Single { rgb } => {
            Some(Branch::new(rgb))
        }
        DictionarySet::PerChannel { .. } => None,
    };
    let mono_branches: Option<Vec<Branch>> = match dictionaries {
        DictionarySet::PerChannel { dics } => Some(dics.iter().map(Branch::new).collect()),
        _ => None,
    };

    let mut rc = crate::mosaic::initialize(mosaic);
    let mut s_rgb = ImageStack::new_fill(StackKind::Chromatic, w, h, 0.0);
    let mut c; // assigned by the coding step of every iteration

    let joint = pol_branch.is_some();
    let mut rp = joint.then(|| baselines::bicubic_demosaic_polar(mosaic));
    let mut p: Option<ImageStack> = None;
    let mut s_pol = joint.then(|| ImageStack::new_fill(StackKind::Polar, w, h, 0.0));

    let mut trace: Vec<IterRecord> = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.max_iter {
        // (1) P and C: code the shifted iterates, then the proximal blend.
        if let (Some(branch), Some(rp_k), Some(s)) = (&pol_branch, &rp, &s_pol) {
            let tp = add_scaled(rp_k, s, 1.0 / cfg.rho_pol);
            let fp = branch.code_planes(tp.planes(), cfg)?;
            p = Some(blend(&tp, &fp, cfg.rho_pol, cfg.prior_weight));
        }
        let tc = add_scaled(&rc, &s_rgb, 1.0 / cfg.rho_rgb);
        let gc: Vec<Plane> = if let Some(branch) = &rgb_branch {
            branch.code_planes(tc.planes(), cfg)?
        } else {
            let branches = mono_branches.as_ref().expect("per-channel mode");
            let mut planes = Vec::with_capacity(12);
            for (idx, branch) in branches.iter().enumerate() {
                let coded =
                    branch.code_planes(std::slice::from_ref(&tc.planes()[idx]), cfg)?;
                planes.extend(coded);
            }
            planes
        };
        c = blend(&tc, &gc, cfg.rho_rgb, cfg.prior_weight);

        // (2) RP and RC: exact per-pixel fidelity solves; the fresh P
        // carries the polarimetric constraint into the RC update.
        if let (Some(p_k), Some(s)) = (&p, &s_pol) {
            rp = Some(fidelity_update_polar(
                mosaic,
                &masks,
                p_k,
                s,
                cfg.rho_pol,
                cfg.fidelity_weight,
            ));
        }
        let pol_constraint =
            p.as_ref().map(|p_stack| (p_stack, cfg.pol_consistency));
        rc = fidelity_update_chromatic(
            mosaic,
            &masks,
            &c,
            &s_rgb,
            cfg.rho_rgb,
            cfg.fidelity_weight,
            pol_constraint,
        );

        // (3) multipliers accumulate the primal gaps (S += R - aux).
        let mut delta_s_pol = 0.0;
        if let (Some(rp_k), Some(p_k), Some(s)) = (&rp, &p, &mut s_pol) {
            delta_s_pol = rp_k.frobenius_diff(p_k);
            *s = s.zip_map(&rp_k.zip_map(p_k, |a, b| a - b), |acc, d| acc + d);
        }
        let delta_s_rgb = rc.frobenius_diff(&c);
        s_rgb = s_rgb.zip_map(&rc.zip_map(&c, |a, b| a - b), |acc, d| acc + d);

        let energy = quadratic_energy(
            mosaic,
            &masks,
            rp.as_ref(),
            &rc,
            p.as_ref(),
            &c,
            s_pol.as_ref(),
            &s_rgb,
            cfg,
        );
        if !delta_s_pol.is_finite() || !delta_s_rgb.is_finite() || !energy.is_finite() {
            return Err(Error::NonFinite("ADMM iteration"));
        }
        trace.push(IterRecord { iteration: k, delta_s_pol, delta_s_rgb, energy });

        if delta_s_pol + delta_s_rgb < cfg.eps {
            converged = true;
            break;
        }
    }

    let iterations = trace.len();
    let mut rc_out = rc;
    rc_out.clamp01();
    let rp_out = rp.map(|mut stack| {
        stack.clamp01();
        stack
    });
    Ok(DemosaicResult {
        rc: rc_out,
        rp: rp_out,
        converged,
        iterations,
        trace,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictionaryMeta;
    use crate::image::Plane;
    use crate::pattern::default_pattern;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dictionary(kind: DictKind, natoms: usize, seed: u64) -> Dictionary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = kind.rows();
        let mut m = DMatrix::from_fn(rows, natoms, |_, _| rng.random::<f64>() - 0.5);
        // a DC-free atom set plus one flat atom approximates trained shape
        for mut col in m.column_iter_mut() {
            let mean = col.iter().sum::<f64>() / rows as f64;
            col.add_scalar_mut(-mean);
            let n = col.norm();
            col /= n;
        }
        m.set_column(0, &DVector::from_element(rows, 1.0 / (rows as f64).sqrt()));
        Dictionary::new(kind, m, DictionaryMeta::default()).unwrap()
    }

    fn constant_mosaic(c: f64, size: usize) -> MosaicImage {
        MosaicImage::new(Plane::new_fill(size, size, c), default_pattern()).unwrap()
    }

    #[test]
    fn constant_mosaic_is_an_exact_fixed_point() {
        let d_pol = random_dictionary(DictKind::Pol, 24, 1);
        let d_rgb = random_dictionary(DictKind::Rgb, 32, 2);
        let cfg = AdmmConfig::default();
        let result = demosaic(&constant_mosaic(0.5, 16), &d_pol, &d_rgb, &cfg).unwrap();
        assert!(result.converged);
        assert!(result.iterations <= 3, "took {} iterations", result.iterations);
        for plane in result.rc.planes() {
            assert!(plane.as_slice().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn all_modes_agree_exactly_on_constant_mosaics() {
        let cfg_joint = AdmmConfig::default();
        let d_pol = random_dictionary(DictKind::Pol, 24, 3);
        let d_rgb = random_dictionary(DictKind::Rgb, 32, 4);
        let m = constant_mosaic(0.5, 16);
        let joint = demosaic(&m, &d_pol, &d_rgb, &cfg_joint).unwrap();

        let cfg_single =
            AdmmConfig { dictionary_mode: DictionaryMode::SingleDic, ..AdmmConfig::default() };
        let single =
            demosaic_variant(&m, &DictionarySet::Single { rgb: &d_rgb }, &cfg_single).unwrap();

        let monos: Vec<Dictionary> =
            (0..12).map(|i| random_dictionary(DictKind::Mono, 12, 10 + i)).collect();
        let cfg_mono = AdmmConfig {
            dictionary_mode: DictionaryMode::PerChannel12Dics,
            ..AdmmConfig::default()
        };
        let mono =
            demosaic_variant(&m, &DictionarySet::PerChannel { dics: &monos }, &cfg_mono).unwrap();

        for (a, b) in joint.rc.planes().iter().zip(single.rc.planes()) {
            assert_eq!(a, b);
        }
        for (a, b) in joint.rc.planes().iter().zip(mono.rc.planes()) {
            assert_eq!(a, b);
        }
        assert!(single.rp.is_none() && mono.rp.is_none());
    }

    #[test]
    fn stopping_rule_honored_and_trace_shaped() {
        let d_pol = random_dictionary(DictKind::Pol, 24, 5);
        let d_rgb = random_dictionary(DictKind::Rgb, 32, 6);
        let cfg = AdmmConfig { max_iter: 7, ..AdmmConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let plane = Plane::from_fn(16, 16, |_, _| rng.random::<f64>());
        let m = MosaicImage::new(plane, default_pattern()).unwrap();
        let result = demosaic(&m, &d_pol, &d_rgb, &cfg).unwrap();
        assert_eq!(result.trace.len(), result.iterations);
        for (i, rec) in result.trace.iter().enumerate() {
            assert_eq!(rec.iteration, i + 1);
            let total = rec.delta_s_pol + rec.delta_s_rgb;
            if i + 1 < result.iterations {
                assert!(total >= cfg.eps, "premature stop at {}", rec.iteration);
            }
        }
        if result.converged {
            let last = result.trace.last().unwrap();
            assert!(last.delta_s_pol + last.delta_s_rgb < cfg.eps);
        } else {
            assert_eq!(result.iterations, cfg.max_iter);
        }
    }

    #[test]
    fn rp_rc_update_never_increases_the_quadratic() {
        let m = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let plane = Plane::from_fn(8, 8, |_, _| rng.random::<f64>());
            MosaicImage::new(plane, default_pattern()).unwrap()
        };
        let masks = build_masks(m.pattern(), 8, 8).unwrap();
        let cfg = AdmmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut random_stack = |kind: StackKind| {
            let planes = (0..kind.channel_count())
                .map(|_| Plane::from_fn(8, 8, |_, _| rng.random::<f64>()))
                .collect();
            ImageStack::new(kind, planes).unwrap()
        };
        let rp0 = random_stack(StackKind::Polar);
        let rc0 = random_stack(StackKind::Chromatic);
        let p = random_stack(StackKind::Polar);
        let c = random_stack(StackKind::Chromatic);
        let s_pol = random_stack(StackKind::Polar);
        let s_rgb = random_stack(StackKind::Chromatic);

        let before = quadratic_energy(
            &m, &masks, Some(&rp0), &rc0, Some(&p), &c, Some(&s_pol), &s_rgb, &cfg,
        );
        let rp1 =
            fidelity_update_polar(&m, &masks, &p, &s_pol, cfg.rho_pol, cfg.fidelity_weight);
        let rc1 = fidelity_update_chromatic(
            &m,
            &masks,
            &c,
            &s_rgb,
            cfg.rho_rgb,
            cfg.fidelity_weight,
            Some((&p, cfg.pol_consistency)),
        );
        let after = quadratic_energy(
            &m, &masks, Some(&rp1), &rc1, Some(&p), &c, Some(&s_pol), &s_rgb, &cfg,
        );
        assert!(after <= before + 1e-12, "{after} > {before}");
    }

    #[test]
    fn dictionary_mode_mismatch_rejected() {
        let d_rgb = random_dictionary(DictKind::Rgb, 16, 11);
        let cfg = AdmmConfig::default(); // joint mode
        let m = constant_mosaic(0.3, 8);
        assert!(demosaic_variant(&m, &DictionarySet::Single { rgb: &d_rgb }, &cfg).is_err());

        let d_pol = random_dictionary(DictKind::Pol, 16, 12);
        // pol dictionary in the rgb slot
        assert!(matches!(
            demosaic_variant(
                &m,
                &DictionarySet::Joint { pol: &d_pol, rgb: &d_pol },
                &cfg
            ),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn output_arrangement_is_a_pure_reindexing() {
        let d_pol = random_dictionary(DictKind::Pol, 24, 13);
        let d_rgb = random_dictionary(DictKind::Rgb, 32, 14);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let plane = Plane::from_fn(8, 8, |_, _| rng.random::<f64>());
        let m = MosaicImage::new(plane, default_pattern()).unwrap();
        let cfg = AdmmConfig { max_iter: 2, ..AdmmConfig::default() };
        let result = demosaic(&m, &d_pol, &d_rgb, &cfg).unwrap();
        let images = result.rc.angle_images();
        for (ai, angle) in crate::pattern::Angle::ALL.iter().enumerate() {
            for (ci, color) in crate::pattern::Color::ALL.iter().enumerate() {
                let ch = crate::pattern::ChannelId::new(*color, *angle);
                assert_eq!(images[ai][ci], result.rc.channel(ch));
            }
        }
    }
}
