mod common;

use common::small_instance;
use gnesel::baselines::{fbf_solve, hsdm_fbf_solve, BaselineOptions, HsdmParams};
use gnesel::harness::{generate_instance, ExperimentConfig};
use gnesel::tikhonov::{solve_observed, InnerObserver};
use gnesel::{JointPoint, PreconditionerConfig, PreconditionerOptions, SolveOptions, SplitOperators};

#[derive(Default)]
struct Extent {
    max_norm: f64,
    max_lambda: f64,
}

impl InnerObserver for Extent {
    fn on_step(&mut self, _: usize, _: usize, _: &JointPoint, _: f64, _: &JointPoint, y: &JointPoint, _: f64) {
        self.max_norm = self.max_norm.max(y.norm());
        self.max_lambda = self.max_lambda.max(y.lambda.iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    }
}

#[test]
fn default_runs_are_bounded_and_make_progress() {
    let cfg = ExperimentConfig::default();
    for seed in 0..3 {
        let (game, spec) = generate_instance(seed, &cfg).unwrap();
        let pre = PreconditionerConfig::build(&game, &spec, cfg.alpha, cfg.gamma0, &PreconditionerOptions::default()).unwrap();
        let opts = SolveOptions {
            budget: Some(cfg.budget),
            ..Default::default()
        };
        let mut extent = Extent::default();
        let out = solve_observed(&game, &spec, &cfg.schedule(cfg.xi, cfg.zeta), &pre, &opts, &mut extent).unwrap();
        assert!(extent.max_norm < 1e6);
        assert!(extent.max_lambda < 1e3);
        assert_eq!(out.cum_inner, out.inner_counts.iter().sum::<usize>());
        assert_eq!(out.cum_inner, cfg.budget);

        let rows = &out.trace.rows;
        assert!(rows.windows(2).all(|w| w[0].cum_t < w[1].cum_t));
        let tenth = rows.len() / 10;
        let best = |r: &[gnesel::TraceRow]| r.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
        assert!(best(&rows[rows.len() - tenth..]) < best(&rows[..tenth]));
    }
}

#[test]
fn fbf_residual_infimum_decreases() {
    let cfg = ExperimentConfig::default();
    let (game, _) = generate_instance(1, &cfg).unwrap();
    let opts = BaselineOptions {
        stride: 100,
        ..Default::default()
    };
    let out = fbf_solve(&game, None, 1e-6, 200_000, &opts).unwrap();
    let rows = &out.trace.rows;
    assert!(rows.iter().all(|r| r.residual.is_finite()));
    assert!(out.final_residual <= 1e-6);
    assert!(out.final_residual < rows[0].residual * 1e-3);
}

#[test]
fn hsdm_is_deterministic_and_checks_schedule() {
    let (game, spec) = small_instance(6, 4, 2);
    let hsdm = HsdmParams::new(1e-3, 0.6, 3000).unwrap();
    let a = hsdm_fbf_solve(&game, &spec, &hsdm, &BaselineOptions::default()).unwrap();
    let b = hsdm_fbf_solve(&game, &spec, &hsdm, &BaselineOptions::default()).unwrap();
    assert_eq!(a.omega, b.omega);
    assert_eq!(a.trace.to_csv_string(), b.trace.to_csv_string());
    assert!(HsdmParams::new(1e-3, 0.5, 10).is_err());
    assert!(HsdmParams::new(1e-3, 1.2, 10).is_err());
    assert!(HsdmParams::new(1e-3, 1.0, 10).is_ok());
    assert!(SplitOperators::new(&game).kkt_residual(&a.omega).is_finite());
}
