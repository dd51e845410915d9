//! Seeded random streams and the samplers shared by the experiment builders.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Identifier of the generator, recorded next to experiment results.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng::seed_from_u64(base_seed + run_index) [rand_chacha 0.9]";

pub type RunRng = ChaCha8Rng;

/// Independent stream for run `index` of a batch seeded with `base_seed`.
pub fn run_rng(base_seed: u64, index: usize) -> RunRng {
    ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index as u64))
}

pub fn uniform_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> DVector<f64> {
    let dist = Uniform::new_inclusive(lo, hi).expect("lo <= hi");
    DVector::from_iterator(dim, (0..dim).map(|_| dist.sample(rng)))
}

/// Uniform on the unit sphere.
pub fn unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Uniform in the ball of the given radius around `center`.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let dim = center.len();
    let dir = unit_vector(rng, dim);
    let u: f64 = rng.random();
    center + dir * (radius * u.powf(1.0 / dim as f64))
}
