use std::path::PathBuf;

use cvfusion::harness::config::{CameraConfig, PoolPolicy};
use cvfusion::harness::{candidate_masks, parse_scene_config, run_ablation, run_render, Ablation, SceneConfig};
use cvfusion::{ConfigError, Error, FusionMode, MaskMode};

fn scene(name: &str) -> SceneConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenes", name].iter().collect();
    parse_scene_config(path).unwrap()
}

/// Coarser sampling keeps debug-build runtimes short.
fn light(mut c: SceneConfig) -> SceneConfig {
    c.render.samples = 64;
    c.volumes.resolution = [24, 24, 40];
    c
}

#[test]
fn disjoint_volumes_cover_more_together() {
    let mut config = light(scene("disjoint.toml"));
    let both = run_render(&config, FusionMode::Combined3d).unwrap();
    config.render.support = 1;
    let one = run_render(&config, FusionMode::Combined3d).unwrap();
    let (v2, v1) = (both.result.rows[0].valid_fraction, one.result.rows[0].valid_fraction);
    let mut chosen = both.supports[0].clone();
    chosen.sort();
    assert_eq!(chosen, [vec![0, 1, 2], vec![3, 4, 5]]);
    assert!(v2 > 0.99, "combined coverage {v2}");
    assert!(v1 < 0.8 && v2 > v1, "single {v1} vs combined {v2}");
}

#[test]
fn smooth_scene_baseline_is_accurate() {
    let mut config = scene("smooth.toml");
    config.volumes.resolution = [48, 48, 48];
    config.render.samples = 128;
    let out = run_render(&config, FusionMode::Baseline).unwrap();
    for row in &out.result.rows {
        assert!(row.psnr >= 40.0, "view {} PSNR {}", row.view, row.psnr);
        assert_eq!(row.valid_fraction, 1.0);
    }
}

#[test]
fn k_sweep_caps_at_pool_size() {
    let config = scene("minimal.toml");
    let result = run_ablation(&config, Ablation::KSweep).unwrap();
    assert_eq!(result.rows.len(), 5 * config.novel_views.len());
    // Three cameras with three members each form a single candidate.
    assert!(result.rows.iter().all(|r| r.k == 1));
    assert!(result.rows.iter().all(|r| r.psnr == result.rows[0].psnr));
}

#[test]
fn selection_ablation_reports_each_strategy() {
    let result = run_ablation(&light(scene("overlap.toml")), Ablation::Selection).unwrap();
    let modes: Vec<&str> = result.rows.iter().map(|r| r.mode.as_str()).collect();
    assert_eq!(modes, ["greedy", "max-visibility", "nearest-pose"]);
    assert!(result.rows.iter().all(|r| r.k == 2));
}

#[test]
fn fusion_ablation_covers_all_modes() {
    let result = run_ablation(&light(scene("disjoint.toml")), Ablation::Fusion).unwrap();
    assert_eq!(result.rows.len(), 4);
    let combined = result.mean_psnr("combined-3d").unwrap();
    assert!(result.rows.iter().all(|r| r.psnr.is_finite()));
    assert!(combined >= result.mean_psnr("baseline").unwrap());
}

#[test]
fn sparse_views_subsample_inputs() {
    let mut config = scene("minimal.toml");
    let template = config.cameras[0];
    config.cameras = (0..12)
        .map(|i| CameraConfig {
            eye: [-0.55 + 0.1 * i as f64, 0.0, 0.0],
            ..template
        })
        .collect();
    config.volumes.nearest = 12;
    config.volumes.policy = PoolPolicy::Sliding;
    config.render.support = 2;
    config.validate().unwrap();
    let result = run_ablation(&config, Ablation::SparseViews).unwrap();
    let k_of = |mode: &str| result.rows_for(mode).next().map(|r| r.k);
    assert_eq!(k_of("combined-x1"), Some(2));
    // Every fourth camera leaves three inputs: exactly one volume.
    assert_eq!(k_of("combined-x4"), Some(1));
    assert_eq!(k_of("single-x4"), Some(1));
}

#[test]
fn sparse_views_rejects_explicit_pools() {
    let err = run_ablation(&scene("disjoint.toml"), Ablation::SparseViews).unwrap_err();
    assert!(!err.is_config());
    let chain = format!("{err} {}", std::error::Error::source(&err).map(|s| s.to_string()).unwrap_or_default());
    assert!(chain.contains("sparse-views"), "{chain}");
}

#[test]
fn mask_mode_ablation_writes_delta() {
    let result = run_ablation(&light(scene("disjoint.toml")), Ablation::MaskMode).unwrap();
    let c = result.mean_psnr("continuous").unwrap();
    let b = result.mean_psnr("binary").unwrap();
    let d = result.mean_psnr("continuous-minus-binary").unwrap();
    assert!((c - b - d).abs() < 1e-9);
}

#[test]
fn csv_layout_and_determinism() {
    let config = scene("minimal.toml");
    let a = run_render(&config, FusionMode::Combined3d).unwrap().result.to_csv_string().unwrap();
    let b = run_render(&config, FusionMode::Combined3d).unwrap().result.to_csv_string().unwrap();
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("experiment,view,mode,K,J,psnr,ssim,mse,valid_fraction,seed"));
    assert!(lines.next().unwrap().starts_with("render,0,combined-3d,1,256,"));
}

#[test]
fn render_output_writes_artifacts() {
    let config = scene("minimal.toml");
    let dir = tempfile::tempdir().unwrap();
    run_render(&config, FusionMode::Combined3d).unwrap().write(dir.path()).unwrap();
    for name in ["view_000.ppm", "view_000_gt.ppm", "results.csv", "config.toml"] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    let echoed = parse_scene_config(dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed, config);
}

#[test]
fn masks_match_pool_and_reject_bad_views() {
    let config = scene("disjoint.toml");
    let masks = candidate_masks(&config, 0, MaskMode::Binary).unwrap();
    assert_eq!(masks.len(), 2);
    assert!(masks.iter().all(|m| m.values().iter().all(|v| (0.0..=1.0).contains(v))));
    // The two halves of the view are covered by different candidates.
    let (w, h) = (masks[0].width(), masks[0].height());
    let row = h / 2;
    assert!(masks[0].get(0, row) + masks[1].get(w - 1, row) < masks[0].get(w - 1, row) + masks[1].get(0, row));
    assert!(matches!(candidate_masks(&config, 5, MaskMode::Binary), Err(Error::InvalidArgument(_))));
}

#[test]
fn too_few_views_for_members_is_rejected() {
    let mut config = scene("minimal.toml");
    config.volumes.members = 4;
    config.volumes.quorum = 4;
    let err = config.validate().unwrap_err();
    assert!(matches!(err, ConfigError::Range { ref field, .. } if field == "volumes.members"), "{err}");
}
