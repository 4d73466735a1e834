//! Benchmark fixtures shared by the criterion benches.

use gnesel::harness::{generate_instance, ExperimentConfig};
use gnesel::{GameInstance, PreconditionerConfig, PreconditionerOptions, Result, SelectionSpec};

pub struct Fixture {
    pub cfg: ExperimentConfig,
    pub game: GameInstance,
    pub spec: SelectionSpec,
    pub pre: PreconditionerConfig,
}

/// Default-size instance for `seed` with `n_agents` agents.
pub fn fixture(seed: u64, n_agents: usize) -> Result<Fixture> {
    let cfg = ExperimentConfig {
        n_agents,
        ..Default::default()
    };
    let (game, spec) = generate_instance(seed, &cfg)?;
    let pre = PreconditionerConfig::build(&game, &spec, cfg.alpha, cfg.gamma0, &PreconditionerOptions::default())?;
    Ok(Fixture { cfg, game, spec, pre })
}
