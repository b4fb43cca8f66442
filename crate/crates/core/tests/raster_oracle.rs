use skelsplat_core::geometry::Vec3;
use skelsplat_core::raster::{rasterize, Channels, RasterConfig};
use skelsplat_oracle::{random_scene, render, Payload};

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn tiled_matches_brute_force() {
    let mut cfg = RasterConfig::default();
    for seed in 0..12u64 {
        cfg.background = if seed % 2 == 0 { Vec3::ZERO } else { Vec3::new(0.2, 0.5, 1.0) };
        cfg.tile_size = [16, 7, 32][seed as usize % 3];
        let (cloud, cam) = random_scene(seed, 40 + 37 * seed as usize, 64, 3);
        let fast = rasterize(&cloud, &cam, &Channels::ALL_DENSE, &cfg).unwrap();
        let slow = render(&cloud, &cam, Payload { color: true, features: true, classes: None }, &cfg);
        assert!(max_dev(&fast.color, &slow.color) < 1e-9, "seed {seed}");
        assert!(max_dev(&fast.features, &slow.features) < 1e-9);
        assert!(max_dev(&fast.alpha, &slow.alpha) < 1e-9);
    }
}

#[test]
fn segmentation_scores_match_brute_force() {
    let cfg = RasterConfig::default();
    let (cloud, cam) = random_scene(7, 150, 48, 0);
    let labels: Vec<u32> = (0..cloud.len() as u32).map(|k| k % 3).collect();
    let fast = rasterize(&cloud, &cam, &Channels::segmentation(&labels, 3), &cfg).unwrap();
    let slow = render(&cloud, &cam, Payload { color: false, features: false, classes: Some((&labels, 3)) }, &cfg);
    assert!(max_dev(&fast.segmentation, &slow.classes) < 1e-9);
}
