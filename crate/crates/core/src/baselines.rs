//! Reference methods: plain FBF equilibrium seeking and HSDM paired with FBF.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{validate_game, GameInstance, JointPoint, SelectionSpec};
use crate::linalg::power_iteration;
use crate::operators::{project_omega, project_omega_in_place, SplitOperators};
use crate::trace::{fmt_f64, SolverTrace, TraceRow};

/// Schedule `γ_k = gamma0_h · k^{−η}` for HSDM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HsdmParams {
    pub gamma0_h: f64,
    pub eta: f64,
    pub max_iter: usize,
}

impl HsdmParams {
    /// Rejects `η ∉ (0.5, 1]`, for which `γ_k` is not square-summable or summable.
    pub fn new(gamma0_h: f64, eta: f64, max_iter: usize) -> Result<Self> {
        let p = Self { gamma0_h, eta, max_iter };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eta > 0.5 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("HSDM exponent eta = {} outside (0.5, 1]", self.eta)));
        }
        if !(self.gamma0_h >= 0.0) || !self.gamma0_h.is_finite() {
            return Err(Error::InvalidParameter(format!("HSDM gamma0 = {} must be finite and >= 0", self.gamma0_h)));
        }
        Ok(())
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.gamma0_h * (k.max(1) as f64).powf(-self.eta)
    }
}

impl Default for HsdmParams {
    fn default() -> Self {
        Self {
            gamma0_h: 1e-3,
            eta: 0.6,
            max_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineOptions {
    pub start: Option<JointPoint>,
    /// Overrides the `0.9/L` step.
    pub step: Option<f64>,
    pub stride: usize,
    pub record_wall_clock: bool,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self {
            start: None,
            step: None,
            stride: 1,
            record_wall_clock: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineOutput {
    pub omega: JointPoint,
    pub trace: SolverTrace,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub step: f64,
}

/// Norm of the skew linear part of `𝒞`, by power iteration on its Gram operator.
pub fn coupling_norm(game: &GameInstance) -> f64 {
    let ops = SplitOperators::new(game);
    let (n, d) = (game.n(), game.dual_dim());
    let est = power_iteration(
        n + 2 * d,
        |v, out| {
            let w = JointPoint::from_flat(v, n, d).expect("dimensions fixed");
            let mw = ops.apply_c_linear(&w).expect("dimensions fixed");
            let mmw = ops.apply_c_linear(&mw).expect("dimensions fixed");
            // the operator is skew, so its Gram operator is minus its square
            for (o, e) in out.iter_mut().zip(mmw.iter()) {
                *o = -e;
            }
        },
        500,
        1e-10,
    );
    est.value.max(0.0).sqrt()
}

/// Lipschitz estimate `max(L_F, 2·maxdeg) + 1.01·‖S‖` of `ℬ + 𝒞`.
pub fn fbf_lipschitz(game: &GameInstance) -> f64 {
    game.lipschitz_f().max(2.0 * game.max_degree() as f64) + 1.01 * coupling_norm(game)
}

struct FbfPass<'a> {
    ops: SplitOperators<'a>,
    step: f64,
    bc_z: JointPoint,
    bc_bar: JointPoint,
    bar: JointPoint,
}

impl<'a> FbfPass<'a> {
    fn new(game: &'a GameInstance, step: f64) -> Self {
        Self {
            ops: SplitOperators::new(game),
            step,
            bc_z: game.zero_point(),
            bc_bar: game.zero_point(),
            bar: game.zero_point(),
        }
    }

    /// `z̄ = proj_Ω(z − s(ℬ+𝒞)z)`, `z⁺ = z̄ − s((ℬ+𝒞)z̄ − (ℬ+𝒞)z)`.
    fn apply(&mut self, z: &JointPoint, out: &mut JointPoint) {
        let s = self.step;
        self.ops.apply_bc_into(z, &mut self.bc_z);
        self.bar.clone_from(z);
        self.bar.axpy(-s, &self.bc_z);
        project_omega_in_place(self.ops.game(), &mut self.bar);
        self.ops.apply_bc_into(&self.bar, &mut self.bc_bar);
        out.clone_from(&self.bar);
        out.axpy(-s, &self.bc_bar);
        out.axpy(s, &self.bc_z);
    }
}

fn resolve_start(game: &GameInstance, start: &Option<JointPoint>) -> Result<JointPoint> {
    match start {
        Some(s) => {
            game.check_point(s)?;
            Ok(project_omega(game, s))
        }
        None => Ok(game.initial_point()),
    }
}

fn resolve_step(game: &GameInstance, step: Option<f64>) -> Result<(f64, f64)> {
    let l = fbf_lipschitz(game);
    let s = step.unwrap_or(0.9 / l);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("FBF step {s} must be positive")));
    }
    Ok((s, l))
}

/// Tseng's forward-backward-forward iteration on `0 ∈ (𝒜 + ℬ + 𝒞)(ω)`.
///
/// Stops once the KKT residual drops to `tol`. When `max_iter` runs out the
/// iterate with the smallest residual is returned.
pub fn fbf_solve(
    game: &GameInstance,
    selection: Option<&SelectionSpec>,
    tol: f64,
    max_iter: usize,
    opts: &BaselineOptions,
) -> Result<BaselineOutput> {
    validate_game(game).into_result()?;
    let (step, l) = resolve_step(game, opts.step)?;
    let mut z = resolve_start(game, &opts.start)?;
    let mut next = game.zero_point();
    let mut pass = FbfPass::new(game, step);
    let mut trace = SolverTrace::new();
    trace.set("method", "fbf");
    trace.set("L_BC", fmt_f64(l));
    trace.set("step", fmt_f64(step));
    trace.set("tol", fmt_f64(tol));
    let stride = opts.stride.max(1);
    let started = Instant::now();

    let mut residual = pass.ops.kkt_residual(&z);
    let mut best = (residual, z.clone());
    let mut iterations = 0;
    while residual > tol && iterations < max_iter {
        pass.apply(&z, &mut next);
        std::mem::swap(&mut z, &mut next);
        iterations += 1;
        residual = pass.ops.kkt_residual(&z);
        if !residual.is_finite() {
            return Err(Error::InvalidConfig(format!("FBF diverged at iteration {iterations}")));
        }
        if residual < best.0 {
            best = (residual, z.clone());
        }
        if iterations % stride == 0 {
            trace.rows.push(TraceRow {
                k: iterations,
                t: 0,
                cum_t: iterations,
                residual,
                phi: selection.map_or(f64::NAN, |s| s.value_unchecked(&z)),
                dstep: 0.0,
                gamma: 0.0,
                eps: 0.0,
                wall_s: if opts.record_wall_clock {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
    }
    let converged = residual <= tol;
    if !converged {
        warn!("FBF hit max_iter = {max_iter}; best residual {:e}", best.0);
        z = best.1;
        residual = best.0;
    }
    Ok(BaselineOutput {
        omega: z,
        trace,
        iterations,
        final_residual: residual,
        converged,
        step,
    })
}

/// HSDM with one FBF pass as the quasi-shrinking map:
/// `v = 𝒯(z^k)`, `z^{k+1} = v − γ_k∇φ(v)`.
///
/// Trace rows record the residual and `φ` at `v`.
pub fn hsdm_fbf_solve(
    game: &GameInstance,
    spec: &SelectionSpec,
    hsdm: &HsdmParams,
    opts: &BaselineOptions,
) -> Result<BaselineOutput> {
    validate_game(game).into_result()?;
    hsdm.check()?;
    let (step, l) = resolve_step(game, opts.step)?;
    let mut z = resolve_start(game, &opts.start)?;
    let mut v = game.zero_point();
    let mut grad = game.zero_point();
    let mut pass = FbfPass::new(game, step);
    let mut trace = SolverTrace::new();
    trace.set("method", "hsdm-fbf");
    trace.set("L_BC", fmt_f64(l));
    trace.set("step", fmt_f64(step));
    trace.set("gamma0_h", fmt_f64(hsdm.gamma0_h));
    trace.set("eta", fmt_f64(hsdm.eta));
    let stride = opts.stride.max(1);
    let started = Instant::now();
    let mut residual = pass.ops.kkt_residual(&z);

    for k in 1..=hsdm.max_iter {
        pass.apply(&z, &mut v);
        residual = pass.ops.kkt_residual(&v);
        if !residual.is_finite() {
            return Err(Error::InvalidConfig(format!("HSDM-FBF diverged at iteration {k}")));
        }
        let gamma = hsdm.gamma(k);
        if k % stride == 0 {
            trace.rows.push(TraceRow {
                k,
                t: 0,
                cum_t: k,
                residual,
                phi: spec.value_unchecked(&v),
                dstep: 0.0,
                gamma,
                eps: 0.0,
                wall_s: if opts.record_wall_clock {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
        z.clone_from(&v);
        if gamma != 0.0 {
            spec.gradient_into(&v, &mut grad);
            z.axpy(-gamma, &grad);
        }
    }
    Ok(BaselineOutput {
        omega: if hsdm.max_iter > 0 { v } else { z },
        trace,
        iterations: hsdm.max_iter,
        final_residual: residual,
        converged: false,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AgentSpec, BoxSet, Pseudogradient};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn game(q: DMatrix<f64>, c: Vec<f64>, b: f64) -> GameInstance {
        let agents = (0..3)
            .map(|i| {
                AgentSpec::new(BoxSet::symmetric(2, 1.0), DMatrix::identity(2, 2), vec![(i + 1) % 3, (i + 2) % 3]).unwrap()
            })
            .collect();
        GameInstance::new(agents, vec![b; 2], Pseudogradient::Linear { q, c }).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(HsdmParams::new(1e-3, 0.5, 10).is_err());
        assert!(HsdmParams::new(1e-3, 1.2, 10).is_err());
        assert!(HsdmParams::new(1e-3, 1.0, 10).is_ok());
        assert_relative_eq!(HsdmParams::default().gamma(1), 1e-3);
    }

    #[test]
    fn coupling_norm_matches_dense_svd() {
        let g = game(DMatrix::identity(6, 6), vec![0.0; 6], 1.0);
        let ops = SplitOperators::new(&g);
        let dim = g.n() + 2 * g.dual_dim();
        let mut dense = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            let col = ops
                .apply_c_linear(&JointPoint::from_flat(&e, g.n(), g.dual_dim()).unwrap())
                .unwrap()
                .to_flat();
            for i in 0..dim {
                dense[(i, j)] = col[i];
            }
        }
        assert_relative_eq!(coupling_norm(&g), crate::linalg::spectral_norm(&dense), max_relative = 1e-6);
    }

    #[test]
    fn fbf_reaches_tolerance_and_is_feasible_for_zero_f() {
        let g = game(DMatrix::zeros(6, 6), vec![0.0; 6], 0.5);
        let opts = BaselineOptions {
            start: Some(JointPoint {
                x: vec![1.0, 1.0, 0.9, 0.8, 1.0, 0.7],
                lambda: vec![0.0; 6],
                nu: vec![0.0; 6],
            }),
            ..Default::default()
        };
        let out = fbf_solve(&g, None, 1e-8, 200_000, &opts).unwrap();
        assert!(out.converged, "residual {}", out.final_residual);
        let w = &out.omega;
        let ax = g.coupling_sum(&w.x);
        assert!(ax.iter().all(|v| *v <= 0.5 + 1e-6), "{ax:?}");
        let mut ll = vec![0.0; 6];
        g.laplacian_apply(&w.lambda, &mut ll);
        assert!(crate::linalg::norm(&ll) <= 1e-6);
    }

    #[test]
    fn strongly_monotone_game_has_known_solution() {
        // F(x) = x − 2·1 with inactive coupling: unique solution x = 1 (box edge).
        let g = game(DMatrix::identity(6, 6), vec![-2.0; 6], 10.0);
        let out = fbf_solve(&g, None, 1e-10, 100_000, &BaselineOptions::default()).unwrap();
        for v in &out.omega.x {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn zero_schedule_reduces_to_fbf() {
        let g = game(DMatrix::identity(6, 6) * 0.3, vec![0.2; 6], 0.5);
        let spec = SelectionSpec::quadratic(DMatrix::identity(6, 6), vec![0.0; 6], 1e-3).unwrap();
        let h = HsdmParams::new(0.0, 0.6, 300).unwrap();
        let a = hsdm_fbf_solve(&g, &spec, &h, &BaselineOptions::default()).unwrap();
        let b = fbf_solve(&g, Some(&spec), 0.0, 300, &BaselineOptions::default()).unwrap();
        assert_eq!(a.trace.rows.len(), b.trace.rows.len());
        for (ra, rb) in a.trace.rows.iter().zip(&b.trace.rows) {
            assert_eq!(ra.residual.to_bits(), rb.residual.to_bits());
        }
    }
}
