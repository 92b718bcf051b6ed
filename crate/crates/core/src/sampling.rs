//! Deterministic stratified depth sampling along rays.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::Ray;

/// Number of depth samples per ray and the seed their jitter derives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrature {
    pub samples: usize,
    pub seed: u64,
}

/// One quadrature point: ray parameter `t` and the segment length `delta` to the
/// next point (or to the far bound for the last one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    pub t: f64,
    pub delta: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for pixel `(x, y)`; depends only on the base seed and the pixel.
pub fn pixel_seed(seed: u64, x: u32, y: u32) -> u64 {
    splitmix64(seed ^ splitmix64(((x as u64) << 32) | y as u64))
}

impl Quadrature {
    pub fn new(samples: usize, seed: u64) -> Self {
        Quadrature { samples, seed }
    }

    /// One jittered sample per uniform bin of `[ray.near, ray.far]`.
    pub fn stratified(&self, ray: &Ray, x: u32, y: u32) -> Vec<DepthSample> {
        let n = self.samples.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(pixel_seed(self.seed, x, y));
        let span = ray.far - ray.near;
        let bin = span / n as f64;
        let ts: Vec<f64> = (0..n)
            .map(|j| ray.near + (j as f64 + rng.random::<f64>()) * bin)
            .collect();
        ts.iter()
            .enumerate()
            .map(|(j, &t)| {
                let next = ts.get(j + 1).copied().unwrap_or(ray.far);
                DepthSample { t, delta: next - t }
            })
            .collect()
    }
}
