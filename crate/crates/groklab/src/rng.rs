//! Seeded random streams. Every run derives its generator from a master
//! seed and a run id so concurrent workers never share state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numkit::Mat;

pub type Stream = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, id)`.
pub fn stream(seed: u64, id: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed) ^ id.wrapping_mul(0xD1B5_4A32_D192_ED03)))
}

pub fn normal_vec(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn normal_mat(rng: &mut Stream, rows: usize, cols: usize, std: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

pub fn uniform(rng: &mut Stream) -> f64 {
    rng.random::<f64>()
}
