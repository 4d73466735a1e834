#![allow(dead_code)]

use gnesel::harness::{generate_instance, ExperimentConfig};
use gnesel::{GameInstance, JointPoint, SelectionSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Small random instance of the default family.
pub fn small_instance(seed: u64, n_agents: usize, dim: usize) -> (GameInstance, SelectionSpec) {
    let cfg = ExperimentConfig {
        n_agents,
        n_i: dim,
        m: dim,
        ..Default::default()
    };
    generate_instance(seed, &cfg).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_point(game: &GameInstance, rng: &mut ChaCha8Rng, scale: f64) -> JointPoint {
    let mut w = game.zero_point();
    w.iter_mut().for_each(|v| *v = scale * rng.sample::<f64, _>(StandardNormal));
    w
}
