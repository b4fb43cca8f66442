//! Times forward renders of the 4000-splat sample cloud at 512×512.
//!
//! `cargo run --release -p skelsplat-oracle --example render_timing [RUNS]`

use std::time::Instant;

use skelsplat_core::fit::FitConfig;
use skelsplat_core::raster::{rasterize, Channels, RasterConfig};
use skelsplat_oracle::fixtures::{colored_sample_cloud, orbit_camera};

fn main() {
    let runs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cloud = colored_sample_cloud(&FitConfig::default());
    let cam = orbit_camera(0.4, 3.0, 512);
    let cfg = RasterConfig::default();
    let mut ms: Vec<f64> = (0..runs)
        .map(|_| {
            let t = Instant::now();
            rasterize(&cloud, &cam, &Channels::COLOR, &cfg).expect("sample cloud renders");
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    ms.sort_by(f64::total_cmp);
    println!("{} splats, {runs} renders: min {:.2} ms, median {:.2} ms", cloud.len(), ms[0], ms[runs / 2]);
}
