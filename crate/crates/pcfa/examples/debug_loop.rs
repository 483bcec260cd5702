//! Per-iteration diagnostics of one joint run: multiplier deltas, energy,
//! iterate ranges, and PSNR against ground truth.

use pcfa::admm::{demosaic, AdmmConfig};
use pcfa::metrics::evaluate;
use pcfa::mosaic::mosaic;
use pcfa::pattern::default_pattern;
use pcfa::reproduce::{test_scene_specs, train_suite_dictionaries, training_scene_specs, SuiteConfig};
use pcfa::synth::synthesize_scene;

fn main() {
    let cfg = SuiteConfig::default();
    let train: Vec<_> =
        training_scene_specs(&cfg).iter().map(|s| synthesize_scene(s).unwrap()).collect();
    let dicts = train_suite_dictionaries(&train, &cfg).unwrap();
    let (_, d_pol, d_rgb) = &dicts.per_lambda[3];

    let (_, spec) = &test_scene_specs(&cfg)[6]; // pol-disc-2
    let truth = synthesize_scene(spec).unwrap();
    let m = mosaic(&truth, &default_pattern()).unwrap();

    for iters in [1, 2, 4, 8, 16, 32, 50] {
        let admm = AdmmConfig { max_iter: iters, ..AdmmConfig::default() };
        let result = demosaic(&m, d_pol, d_rgb, &admm).unwrap();
        let report = evaluate(&truth, &result.rc, "joint").unwrap();
        let last = result.trace.last().unwrap();
        println!(
            "iters {iters:2}: psnr {:7.3}, dS_pol {:9.4}, dS_rgb {:9.4}, energy {:12.4}",
            report.psnr.0, last.delta_s_pol, last.delta_s_rgb, last.energy
        );
    }
}
