//! Probes the per-scene contract quantities: sampled-position fidelity of
//! the joint reconstruction, DoLP/AoP closure on the disc interior, and the
//! single-threaded wall time of a 128x128 run.

use pcfa::admm::{demosaic, AdmmConfig};
use pcfa::metrics::{aop, dolp, stokes, wrap_aop_diff};
use pcfa::mosaic::mosaic;
use pcfa::pattern::default_pattern;
use pcfa::reproduce::{test_scene_specs, train_suite_dictionaries, training_scene_specs, SuiteConfig};
use pcfa::synth::{synthesize_scene, SceneKind, SceneSpec};
use std::time::Instant;

fn main() {
    let cfg = SuiteConfig::default();
    let pattern = default_pattern();
    let train: Vec<_> =
        training_scene_specs(&cfg).iter().map(|s| synthesize_scene(s).unwrap()).collect();
    let t0 = Instant::now();
    let dicts = train_suite_dictionaries(&train, &cfg).unwrap();
    println!("training: {:.1}s", t0.elapsed().as_secs_f64());
    let (_, d_pol, d_rgb) = &dicts.per_lambda[3]; // lambda = 1e-4

    let admm = AdmmConfig::default();
    for (name, spec) in test_scene_specs(&cfg) {
        let truth = synthesize_scene(&spec).unwrap();
        let m = mosaic(&truth, &pattern).unwrap();
        let t = Instant::now();
        let result = demosaic(&m, d_pol, d_rgb, &admm).unwrap();
        let mut max_err: f64 = 0.0;
        for r in 0..m.height() {
            for c in 0..m.width() {
                let ch = m.channel_at(r, c);
                max_err = max_err.max((result.rc.channel(ch).get(r, c) - m.get(r, c)).abs());
            }
        }
        let last = result.trace.last().unwrap();
        println!(
            "{name}: fidelity {:.5}, iters {}, conv {}, dS {:.4}, {:.1}s",
            max_err,
            result.iterations,
            result.converged,
            last.delta_s_pol + last.delta_s_rgb,
            t.elapsed().as_secs_f64()
        );

        if spec.kind == SceneKind::PolarizedDisc && spec.dolp > 0.0 {
            let s = stokes(&result.rc.angle_average()).unwrap();
            let d = dolp(&s);
            let a = aop(&s);
            let (cy, cx, radius) = spec.disc_geometry();
            let mut dolp_err = 0.0;
            let mut aop_err = 0.0;
            let mut n = 0.0;
            for r in 0..m.height() {
                for c in 0..m.width() {
                    let dist = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
                    if dist <= 0.8 * radius {
                        dolp_err += (d.get(r, c) - spec.dolp).abs();
                        aop_err += wrap_aop_diff(a.degrees.get(r, c), spec.aop_deg).abs();
                        n += 1.0;
                    }
                }
            }
            println!("  closure: dolp {:.4}, aop {:.3} deg (n={n})", dolp_err / n, aop_err / n);
        }
    }

    // 128x128 timing, default config.
    let spec128 = SceneSpec {
        kind: SceneKind::PolarizedDisc,
        width: 128,
        height: 128,
        intensity: 0.9,
        dolp: 0.7,
        aop_deg: 40.0,
        chroma: [0.9, 0.7, 0.5],
        seed: 99,
    };
    let truth = synthesize_scene(&spec128).unwrap();
    let m = mosaic(&truth, &pattern).unwrap();
    let t = Instant::now();
    let result = demosaic(&m, d_pol, d_rgb, &admm).unwrap();
    println!("128x128: {} iters in {:.1}s", result.iterations, t.elapsed().as_secs_f64());
}
