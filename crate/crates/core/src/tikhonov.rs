//! Tikhonov-regularized pFB for optimal GNE selection.
//!
//! The outer loop anchors a strongly monotone regularized problem
//! `0 ∈ (𝒜 + ℬ + 𝒞 + γ_k∇φ + α(Id − ω^{(k)}))(ω)` at the current iterate; the
//! inner loop runs the pFB map from the anchor until
//! `‖y^{t+1} − y^t‖_Φ ≤ (1 − c)ε_k`, where `c` is the contraction factor used
//! by the stop rule. The accepted iterate becomes the next anchor.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{validate_game, GameInstance, JointPoint, SelectionSpec};
use crate::operators::{project_omega, PfbScratch, SplitOperators};
use crate::precond::PreconditionerConfig;
use crate::trace::{fmt_f64, SolverTrace, TraceRow};

/// Which contraction factor enters the inner stopping threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopRule {
    /// `(1 − β)ε_k`, treating β itself as the contraction factor.
    Paper,
    /// `(1 − √β)ε_k`; `√β` is the proven norm contraction factor.
    #[default]
    Conservative,
}

impl StopRule {
    pub fn factor(self, cfg: &PreconditionerConfig) -> f64 {
        match self {
            StopRule::Paper => 1.0 - cfg.beta,
            StopRule::Conservative => 1.0 - cfg.sqrt_beta(),
        }
    }
}

impl std::str::FromStr for StopRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(StopRule::Paper),
            "conservative" => Ok(StopRule::Conservative),
            other => Err(Error::InvalidParameter(format!("unknown stop rule {other:?}"))),
        }
    }
}

impl std::fmt::Display for StopRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopRule::Paper => "paper",
            StopRule::Conservative => "conservative",
        })
    }
}

/// `γ_k = γ₀ k^{−ξ}`, `ε_k = γ₀ k^{−ξζ}` (zero below the floor).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gamma0: f64,
    pub xi: f64,
    pub zeta: f64,
    pub eps_floor: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            gamma0: 1e-3,
            xi: 0.6,
            zeta: 2.0,
            eps_floor: f64::EPSILON,
            max_outer: 1_000_000,
            max_inner: 1_000_000,
        }
    }
}

impl ScheduleParams {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma0 > 0.0) || !(self.xi > 0.0) || !(self.zeta >= 1.0) || !(self.eps_floor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "schedule needs gamma0 > 0, xi > 0, zeta >= 1, eps_floor >= 0 (got {self:?})"
            )));
        }
        if self.max_inner == 0 {
            return Err(Error::InvalidParameter("max_inner must be positive".into()));
        }
        Ok(())
    }

    pub fn gamma(&self, k: usize) -> Result<f64> {
        gamma_schedule(self, k)
    }

    pub fn epsilon(&self, k: usize) -> Result<f64> {
        epsilon_schedule(self, k)
    }
}

pub fn gamma_schedule(p: &ScheduleParams, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("schedules are indexed from k = 1".into()));
    }
    Ok(p.gamma0 * (k as f64).powf(-p.xi))
}

pub fn epsilon_schedule(p: &ScheduleParams, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("schedules are indexed from k = 1".into()));
    }
    let e = p.gamma0 * (k as f64).powf(-p.xi * p.zeta);
    Ok(if e >= p.eps_floor { e } else { 0.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Starting point; projected onto `Ω`. Defaults to box centers and zero duals.
    pub start: Option<JointPoint>,
    pub stop_rule: StopRule,
    /// Record a trace row whenever `cum_t` is a multiple of the stride.
    pub stride: usize,
    /// Cap on the cumulative number of inner iterations.
    pub budget: Option<usize>,
    /// Stop once `γ_k < 1e-8` and the residual is below this target.
    pub residual_target: Option<f64>,
    pub record_wall_clock: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            start: None,
            stop_rule: StopRule::Conservative,
            stride: 1,
            budget: None,
            residual_target: None,
            record_wall_clock: false,
        }
    }
}

/// Callback invoked after every inner iteration.
pub trait InnerObserver {
    #[allow(clippy::too_many_arguments)]
    fn on_step(&mut self, k: usize, t: usize, anchor: &JointPoint, gamma: f64, y: &JointPoint, y_next: &JointPoint, dstep: f64);
}

impl InnerObserver for () {
    fn on_step(&mut self, _: usize, _: usize, _: &JointPoint, _: f64, _: &JointPoint, _: &JointPoint, _: f64) {}
}

/// Bookkeeping shared across inner solves of one run.
#[derive(Debug)]
pub struct RunState {
    pub trace: SolverTrace,
    pub cum_t: usize,
    started: Instant,
}

impl RunState {
    pub fn new() -> Self {
        Self {
            trace: SolverTrace::new(),
            cum_t: 0,
            started: Instant::now(),
        }
    }
}

impl Default for RunState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Clone, Debug)]
pub struct InnerOutcome {
    pub omega: JointPoint,
    pub t_used: usize,
    /// `‖y^{t} − y^{t−1}‖_Φ` at the accepted iterate.
    pub last_step: f64,
    /// The stopping inequality held.
    pub stopped: bool,
    /// The cumulative budget ran out first.
    pub truncated: bool,
}

/// Runs the inner pFB loop of outer step `k` from `y⁰ = anchor`.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve(
    game: &GameInstance,
    spec: &SelectionSpec,
    cfg: &PreconditionerConfig,
    params: &ScheduleParams,
    opts: &SolveOptions,
    k: usize,
    anchor: &JointPoint,
    state: &mut RunState,
    observer: &mut dyn InnerObserver,
) -> Result<InnerOutcome> {
    let gamma = params.gamma(k)?;
    let eps = params.epsilon(k)?;
    if gamma > cfg.gamma_bar * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!("gamma_k = {gamma} exceeds gamma_bar = {}", cfg.gamma_bar)));
    }
    let ops = SplitOperators::new(game);
    let phi = cfg.phi(game);
    let factor = opts.stop_rule.factor(cfg);
    let threshold = if eps > 0.0 { factor * eps } else { factor * params.eps_floor };
    let stride = opts.stride.max(1);

    let mut y = anchor.clone();
    let mut next = game.zero_point();
    let mut scratch = PfbScratch::new(game);
    let mut last_step = f64::INFINITY;
    for t in 0..params.max_inner {
        if let Some(b) = opts.budget {
            if state.cum_t >= b {
                return Ok(InnerOutcome {
                    omega: y,
                    t_used: t,
                    last_step,
                    stopped: false,
                    truncated: true,
                });
            }
        }
        ops.pfb_step_with(spec, cfg, anchor, gamma, &y, &mut next, &mut scratch);
        last_step = phi.distance(&next, &y);
        observer.on_step(k, t, anchor, gamma, &y, &next, last_step);
        state.cum_t += 1;
        if state.cum_t.is_multiple_of(stride) {
            state.trace.rows.push(TraceRow {
                k,
                t: t + 1,
                cum_t: state.cum_t,
                residual: ops.kkt_residual(&next),
                phi: spec.value_unchecked(&next),
                dstep: last_step,
                gamma,
                eps,
                wall_s: if opts.record_wall_clock {
                    state.started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
        std::mem::swap(&mut y, &mut next);
        if last_step <= threshold {
            return Ok(InnerOutcome {
                omega: y,
                t_used: t + 1,
                last_step,
                stopped: true,
                truncated: false,
            });
        }
    }
    if eps > 0.0 {
        return Err(Error::InnerCapReached {
            k,
            cap: params.max_inner,
            eps,
        });
    }
    warn!(
        "outer step {k}: inner cap {} reached in the eps_k = 0 phase (last step {last_step:e})",
        params.max_inner
    );
    Ok(InnerOutcome {
        omega: y,
        t_used: params.max_inner,
        last_step,
        stopped: false,
        truncated: false,
    })
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub omega: JointPoint,
    pub trace: SolverTrace,
    /// Inner iterations used by each completed or truncated outer step.
    pub inner_counts: Vec<usize>,
    pub cum_inner: usize,
    pub outer_iterations: usize,
}

/// Writes the resolved configuration into a trace header.
pub fn echo_config(trace: &mut SolverTrace, cfg: &PreconditionerConfig) {
    let list = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
    trace.set("alpha", fmt_f64(cfg.alpha));
    trace.set("gamma_bar", fmt_f64(cfg.gamma_bar));
    trace.set("L_G", fmt_f64(cfg.l_g));
    trace.set("delta", fmt_f64(cfg.delta));
    trace.set("rho", list(&cfg.steps.rho));
    trace.set("tau", list(&cfg.steps.tau));
    trace.set("sigma", list(&cfg.steps.sigma));
    trace.set("phi_norm", fmt_f64(cfg.phi_norm));
    trace.set("phi_norm_source", format!("{:?}", cfg.phi_norm_source).to_lowercase());
    trace.set("beta", fmt_f64(cfg.beta));
}

fn echo_schedule(trace: &mut SolverTrace, params: &ScheduleParams, opts: &SolveOptions) {
    trace.set("gamma0", fmt_f64(params.gamma0));
    trace.set("xi", fmt_f64(params.xi));
    trace.set("zeta", fmt_f64(params.zeta));
    trace.set("eps_floor", fmt_f64(params.eps_floor));
    trace.set("stop_rule", opts.stop_rule);
    trace.set("stride", opts.stride.max(1));
    if let Some(b) = opts.budget {
        trace.set("budget", b);
    }
}

/// Outer Tikhonov loop over inner pFB solves.
pub fn solve(
    game: &GameInstance,
    spec: &SelectionSpec,
    params: &ScheduleParams,
    cfg: &PreconditionerConfig,
    opts: &SolveOptions,
) -> Result<SolveOutput> {
    solve_observed(game, spec, params, cfg, opts, &mut ())
}

pub fn solve_observed(
    game: &GameInstance,
    spec: &SelectionSpec,
    params: &ScheduleParams,
    cfg: &PreconditionerConfig,
    opts: &SolveOptions,
    observer: &mut dyn InnerObserver,
) -> Result<SolveOutput> {
    validate_game(game).into_result()?;
    params.check()?;
    cfg.check()?;
    let mut omega = match &opts.start {
        Some(s) => {
            game.check_point(s)?;
            project_omega(game, s)
        }
        None => game.initial_point(),
    };
    let mut state = RunState::new();
    echo_config(&mut state.trace, cfg);
    echo_schedule(&mut state.trace, params, opts);
    let ops = SplitOperators::new(game);
    let mut inner_counts = Vec::new();
    let mut outer = 0;
    for k in 1..=params.max_outer {
        let out = inner_solve(game, spec, cfg, params, opts, k, &omega, &mut state, observer)?;
        omega = out.omega;
        if out.t_used > 0 {
            inner_counts.push(out.t_used);
            outer = k;
        }
        if out.truncated {
            break;
        }
        if let Some(target) = opts.residual_target {
            if params.gamma(k)? < 1e-8 && ops.kkt_residual(&omega) <= target {
                break;
            }
        }
    }
    Ok(SolveOutput {
        omega,
        trace: state.trace,
        cum_inner: state.cum_t,
        inner_counts,
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AgentSpec, BoxSet, Pseudogradient};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn schedules() {
        let p = ScheduleParams::default();
        assert_relative_eq!(p.gamma(1).unwrap(), 1e-3);
        let q = ScheduleParams { xi: 1.0, ..p.clone() };
        assert_relative_eq!(q.gamma(10).unwrap(), 1e-4, max_relative = 1e-14);
        assert!(p.gamma(0).is_err());
        assert!(p.epsilon(0).is_err());
        // ε_k/γ_k = k^{−ξ(ζ−1)} = k^{−0.6}
        for k in [1usize, 10, 100, 1000] {
            let ratio = p.epsilon(k).unwrap() / p.gamma(k).unwrap();
            assert_relative_eq!(ratio, (k as f64).powf(-0.6), max_relative = 1e-12);
        }
        let floor = ScheduleParams { eps_floor: 1e-6, ..p };
        assert_eq!(floor.epsilon(10_000).unwrap(), 0.0);
        assert!(floor.epsilon(2).unwrap() > 0.0);
    }

    #[test]
    fn stop_rule_parses() {
        assert_eq!("paper".parse::<StopRule>().unwrap(), StopRule::Paper);
        assert!("other".parse::<StopRule>().is_err());
    }

    fn min_norm_game() -> (GameInstance, SelectionSpec) {
        let agents = vec![
            AgentSpec::new(BoxSet::symmetric(2, 1.0), DMatrix::identity(2, 2), vec![1]).unwrap(),
            AgentSpec::new(BoxSet::symmetric(2, 1.0), DMatrix::identity(2, 2), vec![0]).unwrap(),
        ];
        let g = GameInstance::new(
            agents,
            vec![1.0; 2],
            Pseudogradient::Linear {
                q: DMatrix::zeros(4, 4),
                c: vec![0.0; 4],
            },
        )
        .unwrap();
        let s = SelectionSpec::quadratic(DMatrix::identity(4, 4), vec![0.0; 4], 1e-3).unwrap();
        (g, s)
    }

    #[test]
    fn anchor_at_solution_stops_after_one_step() {
        let (g, s) = min_norm_game();
        let params = ScheduleParams::default();
        let cfg = PreconditionerConfig::build(&g, &s, 1.0, params.gamma0, &Default::default()).unwrap();
        // ω = 0 solves the regularized problem anchored at 0: x = 0 interior,
        // λ = 0 with slack b̄ > 0, ν = 0.
        let anchor = g.zero_point();
        let mut st = RunState::new();
        let out = inner_solve(&g, &s, &cfg, &params, &SolveOptions::default(), 1, &anchor, &mut st, &mut ()).unwrap();
        assert_eq!(out.t_used, 1);
        assert!(out.last_step < 1e-15);
    }

    #[test]
    fn zero_pseudogradient_selects_min_norm_point() {
        let (g, s) = min_norm_game();
        let params = ScheduleParams {
            max_outer: 500,
            ..Default::default()
        };
        let cfg = PreconditionerConfig::build(&g, &s, 1.0, params.gamma0, &Default::default()).unwrap();
        let opts = SolveOptions {
            start: Some(JointPoint {
                x: vec![0.9, -0.8, 0.3, 0.5],
                lambda: vec![0.0; 4],
                nu: vec![0.0; 4],
            }),
            stride: 10,
            ..Default::default()
        };
        let out = solve(&g, &s, &params, &cfg, &opts).unwrap();
        let xn = out.omega.x.iter().map(|v| v * v).sum::<f64>().sqrt();
        // the proximal pull towards 0 is γ_k-weighted, so this needs the full 500 steps
        assert!(xn < 1e-4 || out.outer_iterations == 500, "{xn}");
        assert_eq!(out.cum_inner, out.inner_counts.iter().sum::<usize>());
        let cums: Vec<usize> = out.trace.rows.iter().map(|r| r.cum_t).collect();
        assert!(cums.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn budget_truncates() {
        let (g, s) = min_norm_game();
        let params = ScheduleParams::default();
        let cfg = PreconditionerConfig::build(&g, &s, 1.0, params.gamma0, &Default::default()).unwrap();
        let opts = SolveOptions {
            budget: Some(37),
            start: Some(JointPoint {
                x: vec![0.9, -0.8, 0.3, 0.5],
                lambda: vec![0.0; 4],
                nu: vec![0.0; 4],
            }),
            ..Default::default()
        };
        let out = solve(&g, &s, &params, &cfg, &opts).unwrap();
        assert_eq!(out.cum_inner, 37);
        assert_eq!(out.trace.rows.len(), 37);
    }

    #[test]
    fn cap_with_positive_eps_is_an_error() {
        let (g, s) = min_norm_game();
        let params = ScheduleParams {
            max_inner: 2,
            ..Default::default()
        };
        let cfg = PreconditionerConfig::build(&g, &s, 1.0, params.gamma0, &Default::default()).unwrap();
        let mut anchor = g.zero_point();
        anchor.x = vec![0.9, -0.8, 0.3, 0.5];
        anchor.nu = vec![5.0, 0.0, -5.0, 1.0];
        let mut st = RunState::new();
        let r = inner_solve(&g, &s, &cfg, &params, &SolveOptions::default(), 1, &anchor, &mut st, &mut ());
        assert!(matches!(r, Err(Error::InnerCapReached { .. })));
    }
}
