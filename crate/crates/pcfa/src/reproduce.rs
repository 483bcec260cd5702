//! The controlled-experiment suite: generates a deterministic synthetic
//! dataset, trains desk-scale dictionaries, runs every method variant
//! (baselines, the joint method across the lambda sweep, and the
//! single-dictionary / per-channel ablations), and emits a table plus the
//! ordering checks that gate a run.

use crate::admm::{demosaic_variant, AdmmConfig, DictionaryMode, DictionarySet};
use crate::baselines::{bicubic_demosaic, bilinear_demosaic};
use crate::dictionary::Dictionary;
use crate::error::Result;
use crate::image::ImageStack;
use crate::ksvd::{ksvd_train, KsvdOptions};
use crate::metrics::{evaluate, MetricsReport};
use crate::mosaic::mosaic;
use crate::pattern::{default_pattern, ChannelId};
use crate::signal::{extract_mono_signals, extract_signals, SignalKind};
use crate::synth::{synthesize_scene, SceneKind, SceneSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub scene_width: usize,
    pub scene_height: usize,
    pub train_scenes: usize,
    pub train_samples: usize,
    pub train_sweeps: usize,
    pub atoms: usize,
    /// Atom count of the 16-row per-channel dictionaries.
    pub mono_atoms: usize,
    pub sparsity: usize,
    /// The lambda sweep; the joint method is retrained and rerun per value.
    pub lambdas: Vec<f64>,
    pub admm: AdmmConfig,
}

pub const DEFAULT_LAMBDA: f64 = 1e-4;

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            scene_width: 64,
            scene_height: 64,
            train_scenes: 8,
            train_samples: 12_000,
            train_sweeps: 15,
            atoms: 256,
            mono_atoms: 64,
            sparsity: 8,
            lambdas: vec![0.1, 0.01, 0.001, DEFAULT_LAMBDA, 0.0],
            admm: AdmmConfig::default(),
        }
    }
}

/// A deterministic mixture of scene kinds: discs give hard edges, gradients
/// smooth shading, birefringent textures couple color and polarization.
pub fn training_scene_specs(cfg: &SuiteConfig) -> Vec<SceneSpec> {
    let base = |kind, dolp: f64, aop: f64, chroma, seed_off: u64| SceneSpec {
        kind,
        width: cfg.scene_width,
        height: cfg.scene_height,
        intensity: 0.95,
        dolp,
        aop_deg: aop,
        chroma,
        seed: cfg.seed.wrapping_add(100 + seed_off),
    };
    let all = vec![
        base(SceneKind::PolarizedDisc, 0.5, 20.0, [0.9, 0.6, 0.4], 0),
        base(SceneKind::PolarizedDisc, 0.7, 75.0, [0.5, 0.8, 0.9], 1),
        base(SceneKind::PolarizedDisc, 0.9, 130.0, [0.8, 0.8, 0.8], 2),
        base(SceneKind::Gradient, 0.0, 0.0, [0.9, 0.7, 0.5], 3),
        base(SceneKind::Gradient, 0.4, 55.0, [0.6, 0.9, 0.7], 4),
        base(SceneKind::BirefringentTexture, 0.5, 10.0, [0.9, 0.8, 0.6], 5),
        base(SceneKind::BirefringentTexture, 0.7, 100.0, [0.7, 0.7, 0.9], 6),
        base(SceneKind::BirefringentTexture, 0.9, 160.0, [0.8, 0.9, 0.8], 7),
    ];
    all.into_iter().cycle().take(cfg.train_scenes).collect()
}

/// Five unpolarized and five polarized/birefringent evaluation scenes.
pub fn test_scene_specs(cfg: &SuiteConfig) -> Vec<(String, SceneSpec)> {
    let base = |kind, dolp: f64, aop: f64, chroma, seed_off: u64| SceneSpec {
        kind,
        width: cfg.scene_width,
        height: cfg.scene_height,
        intensity: 0.9,
        dolp,
        aop_deg: aop,
        chroma,
        seed: cfg.seed.wrapping_add(200 + seed_off),
    };
    vec![
        ("unpol-gradient-1".into(), base(SceneKind::Gradient, 0.0, 0.0, [0.85, 0.7, 0.55], 0)),
        ("unpol-gradient-2".into(), base(SceneKind::Gradient, 0.0, 0.0, [0.5, 0.75, 0.9], 1)),
        ("unpol-disc-1".into(), base(SceneKind::PolarizedDisc, 0.0, 0.0, [0.9, 0.8, 0.5], 2)),
        ("unpol-disc-2".into(), base(SceneKind::PolarizedDisc, 0.0, 0.0, [0.6, 0.9, 0.8], 3)),
        (
            "unpol-texture".into(),
            base(SceneKind::BirefringentTexture, 0.0, 0.0, [0.8, 0.8, 0.7], 4),
        ),
        ("pol-disc-1".into(), base(SceneKind::PolarizedDisc, 0.6, 20.0, [0.9, 0.7, 0.5], 5)),
        ("pol-disc-2".into(), base(SceneKind::PolarizedDisc, 0.75, 60.0, [0.6, 0.85, 0.9], 6)),
        ("pol-disc-3".into(), base(SceneKind::PolarizedDisc, 0.9, 120.0, [0.8, 0.8, 0.8], 7)),
        (
            "pol-texture-1".into(),
            base(SceneKind::BirefringentTexture, 0.6, 40.0, [0.9, 0.8, 0.6], 8),
        ),
        (
            "pol-texture-2".into(),
            base(SceneKind::BirefringentTexture, 0.8, 140.0, [0.7, 0.8, 0.9], 9),
        ),
    ]
}

/// Trained artifacts of one suite run.
pub struct SuiteDictionaries {
    /// (lambda, pol, rgb) per sweep value.
    pub per_lambda: Vec<(f64, Dictionary, Dictionary)>,
    /// Twelve per-channel dictionaries at the default lambda.
    pub mono: Vec<Dictionary>,
}

/// Trains the polarimetric + chromatic pair for every lambda in the sweep
/// (signals extracted once) plus the per-channel ablation set.
pub fn train_suite_dictionaries(
    train_stacks: &[ImageStack],
    cfg: &SuiteConfig,
) -> Result<SuiteDictionaries> {
    let pol_signals =
        extract_signals(train_stacks, SignalKind::Pol, cfg.train_samples, cfg.seed.wrapping_add(1))?;
    let rgb_signals =
        extract_signals(train_stacks, SignalKind::Rgb, cfg.train_samples, cfg.seed.wrapping_add(2))?;

    let mut per_lambda = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let opts = KsvdOptions {
            atoms: cfg.atoms,
            sparsity: cfg.sparsity,
            sweeps: cfg.train_sweeps,
            lambda,
            seed: cfg.seed.wrapping_add(3),
        };
        let pol = ksvd_train(&pol_signals, &opts)?.dictionary;
        let rgb = ksvd_train(&rgb_signals, &opts)?.dictionary;
        per_lambda.push((lambda, pol, rgb));
    }

    let mut mono = Vec::with_capacity(12);
    for ch in ChannelId::all() {
        let signals = extract_mono_signals(
            train_stacks,
            ch,
            cfg.train_samples / 2,
            cfg.seed.wrapping_add(10 + ch.index() as u64),
        )?;
        let opts = KsvdOptions {
            atoms: cfg.mono_atoms,
            sparsity: cfg.sparsity.min(6),
            sweeps: cfg.train_sweeps,
            lambda: DEFAULT_LAMBDA,
            seed: cfg.seed.wrapping_add(4),
        };
        mono.push(ksvd_train(&signals, &opts)?.dictionary);
    }
    Ok(SuiteDictionaries { per_lambda, mono })
}

/// Mean metric values of one method over the suite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteRow {
    pub method: String,
    pub lambda: Option<f64>,
    pub psnr: f64,
    pub ssim: f64,
    pub ca_substitute: f64,
    pub s0_psnr: f64,
    pub dolp_psnr: f64,
    pub aop_psnr: f64,
}

impl SuiteRow {
    fn from_reports(method: &str, lambda: Option<f64>, reports: &[MetricsReport]) -> SuiteRow {
        let n = reports.len() as f64;
        SuiteRow {
            method: method.to_string(),
            lambda,
            psnr: reports.iter().map(|r| r.psnr.0).sum::<f64>() / n,
            ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
            ca_substitute: reports.iter().map(|r| r.ca_substitute.0).sum::<f64>() / n,
            s0_psnr: reports.iter().map(|r| r.s0_psnr.0).sum::<f64>() / n,
            dolp_psnr: reports.iter().map(|r| r.dolp_psnr.0).sum::<f64>() / n,
            aop_psnr: reports.iter().map(|r| r.aop_psnr.0).sum::<f64>() / n,
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.lambda.map(|l| l.to_string()).unwrap_or_default(),
            self.psnr,
            self.ssim,
            self.ca_substitute,
            self.s0_psnr,
            self.dolp_psnr,
            self.aop_psnr
        )
    }
}

/// The comparisons a healthy run must satisfy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrderingChecks {
    pub joint_minus_bicubic_db: f64,
    pub joint_minus_bilinear_db: f64,
    pub joint_s0_minus_bicubic_s0_db: f64,
    pub bicubic_minus_bilinear_db: f64,
    pub joint_minus_single_db: f64,
    pub joint_minus_per_channel_db: f64,
    pub single_minus_per_channel_db: f64,
    pub best_lambda: f64,
    /// Best-lambda PSNR minus the default-lambda PSNR.
    pub default_lambda_gap_db: f64,
    pub pass: bool,
}

impl OrderingChecks {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.joint_minus_bicubic_db < 1.0 {
            out.push(format!("joint beats bicubic by {:.3} dB < 1.0", self.joint_minus_bicubic_db));
        }
        if self.joint_minus_bilinear_db < 1.0 {
            out.push(format!(
                "joint beats bilinear by {:.3} dB < 1.0",
                self.joint_minus_bilinear_db
            ));
        }
        if self.joint_s0_minus_bicubic_s0_db < 0.0 {
            out.push("joint S0-PSNR below bicubic".into());
        }
        if self.bicubic_minus_bilinear_db < 0.0 {
            out.push("bicubic below bilinear".into());
        }
        if self.joint_minus_single_db <= 0.0 {
            out.push("joint does not beat the single dictionary".into());
        }
        if self.joint_minus_per_channel_db <= 0.0 {
            out.push("joint does not beat the per-channel dictionaries".into());
        }
        if self.single_minus_per_channel_db <= 0.0 {
            out.push("per-channel dictionaries are not the worst mode".into());
        }
        if self.default_lambda_gap_db > 0.2 {
            out.push(format!(
                "default lambda trails the best ({}) by {:.3} dB > 0.2",
                self.best_lambda, self.default_lambda_gap_db
            ));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub rows: Vec<SuiteRow>,
    pub checks: OrderingChecks,
    pub csv: String,
}

/// Runs the full suite. Deterministic: equal configs produce byte-identical
/// CSV tables.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let pattern = default_pattern();
    let train_stacks: Vec<ImageStack> = training_scene_specs(cfg)
        .iter()
        .map(synthesize_scene)
        .collect::<Result<_>>()?;
    let dictionaries = train_suite_dictionaries(&train_stacks, cfg)?;

    let scenes: Vec<(String, ImageStack)> = test_scene_specs(cfg)
        .into_iter()
        .map(|(name, spec)| Ok((name, synthesize_scene(&spec)?)))
        .collect::<Result<_>>()?;

    let mut bilinear_reports = Vec::new();
    let mut bicubic_reports = Vec::new();
    let mut single_reports = Vec::new();
    let mut mono_reports = Vec::new();
    let mut joint_reports: Vec<Vec<MetricsReport>> =
        (0..dictionaries.per_lambda.len()).map(|_| Vec::new()).collect();

    let default_pair = dictionaries
        .per_lambda
        .iter()
        .find(|(l, _, _)| *l == DEFAULT_LAMBDA)
        .or(dictionaries.per_lambda.first())
        .expect("at least one lambda");

    for (_, truth) in &scenes {
        let m = mosaic(truth, &pattern)?;
        bilinear_reports.push(evaluate(truth, &bilinear_demosaic(&m), "bilinear")?);
        bicubic_reports.push(evaluate(truth, &bicubic_demosaic(&m), "bicubic")?);

        for (i, (lambda, pol, rgb)) in dictionaries.per_lambda.iter().enumerate() {
            let admm = AdmmConfig { lambda: *lambda, ..cfg.admm.clone() };
            let result = demosaic_variant(&m, &DictionarySet::Joint { pol, rgb }, &admm)?;
            joint_reports[i].push(evaluate(truth, &result.rc, "joint")?);
        }

        let single_cfg = AdmmConfig {
            dictionary_mode: DictionaryMode::SingleDic,
            lambda: DEFAULT_LAMBDA,
            ..cfg.admm.clone()
        };
        let single =
            demosaic_variant(&m, &DictionarySet::Single { rgb: &default_pair.2 }, &single_cfg)?;
        single_reports.push(evaluate(truth, &single.rc, "1-dic")?);

        let mono_cfg = AdmmConfig {
            dictionary_mode: DictionaryMode::PerChannel12Dics,
            lambda: DEFAULT_LAMBDA,
            ..cfg.admm.clone()
        };
        let mono =
            demosaic_variant(&m, &DictionarySet::PerChannel { dics: &dictionaries.mono }, &mono_cfg)?;
        mono_reports.push(evaluate(truth, &mono.rc, "12-dic")?);
    }

    let mut rows = vec![
        SuiteRow::from_reports("bilinear", None, &bilinear_reports),
        SuiteRow::from_reports("bicubic", None, &bicubic_reports),
        SuiteRow::from_reports("1-dic", Some(DEFAULT_LAMBDA), &single_reports),
        SuiteRow::from_reports("12-dic", Some(DEFAULT_LAMBDA), &mono_reports),
    ];
    for (i, (lambda, _, _)) in dictionaries.per_lambda.iter().enumerate() {
        rows.push(SuiteRow::from_reports("joint", Some(*lambda), &joint_reports[i]));
    }

    let row = |m: &str, l: Option<f64>| {
        rows.iter().find(|r| r.method == m && r.lambda == l).expect("row exists").clone()
    };
    let joint_default = row("joint", Some(default_pair.0));
    let bicubic_row = row("bicubic", None);
    let bilinear_row = row("bilinear", None);
    let single_row = row("1-dic", Some(DEFAULT_LAMBDA));
    let mono_row = row("12-dic", Some(DEFAULT_LAMBDA));

    let joint_rows: Vec<&SuiteRow> = rows.iter().filter(|r| r.method == "joint").collect();
    let best = joint_rows
        .iter()
        .max_by(|a, b| a.psnr.partial_cmp(&b.psnr).unwrap())
        .expect("joint rows exist");

    let mut checks = OrderingChecks {
        joint_minus_bicubic_db: joint_default.psnr - bicubic_row.psnr,
        joint_minus_bilinear_db: joint_default.psnr - bilinear_row.psnr,
        joint_s0_minus_bicubic_s0_db: joint_default.s0_psnr - bicubic_row.s0_psnr,
        bicubic_minus_bilinear_db: bicubic_row.psnr - bilinear_row.psnr,
        joint_minus_single_db: joint_default.psnr - single_row.psnr,
        joint_minus_per_channel_db: joint_default.psnr - mono_row.psnr,
        single_minus_per_channel_db: single_row.psnr - mono_row.psnr,
        best_lambda: best.lambda.unwrap_or(DEFAULT_LAMBDA),
        default_lambda_gap_db: best.psnr - joint_default.psnr,
        pass: false,
    };
    checks.pass = checks.failures().is_empty();

    let mut csv = String::from(MetricsReport::csv_header());
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }

    Ok(SuiteReport { config: cfg.clone(), rows, checks, csv })
}
