#![allow(dead_code)]

#[path = "../../src/oracles.rs"]
mod oracles;

pub use oracles::*;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpnkit::nn::Parameters;
use tpnkit::BBox;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(
        rng.random_range(0.0..480.0),
        rng.random_range(0.0..270.0),
        rng.random_range(4.0..300.0),
        rng.random_range(4.0..300.0),
    )
    .unwrap()
}

/// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` over
/// all parameters, with the numeric gradient from central differences.
pub fn central_difference_error<P, F>(params: &P, analytic: &P, eps: f64, loss: F) -> f64
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let base = params.to_flat();
    let a = analytic.to_flat();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut flat = base.clone();
        flat[k] = base[k] + eps;
        probe.load_flat(&flat).unwrap();
        let plus = loss(&probe);
        flat[k] = base[k] - eps;
        probe.load_flat(&flat).unwrap();
        let minus = loss(&probe);
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max((a[k] - numeric).abs() / a[k].abs().max(numeric.abs()).max(1e-8));
    }
    worst
}
