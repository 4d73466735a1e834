//! Step sizes and the preconditioning matrix `Φ = Ψ + [[0, −Aᵀ, 0], [−A, 0, −L̄], [0, −L̄, 0]]`.
//!
//! `Ψ = diag(ρ⁻¹, τ⁻¹, σ⁻¹)` is chosen inside the Gershgorin intervals so that
//! `Φ ≽ δI` and `‖Φ‖ ≤ 2δ`. The contraction constant of the preconditioned
//! forward-backward map in the `Φ`-norm is `√β` with
//! `β = 1 + L_G²/δ² − 2α/‖Φ‖`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{GameInstance, JointPoint, SelectionSpec};
use crate::linalg::{self, power_iteration};

/// Gershgorin radii of agent `i`'s primal, dual and auxiliary rows of `Φ − Ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Radii {
    pub x: f64,
    pub lambda: f64,
    pub nu: f64,
}

impl Radii {
    pub fn max(&self) -> f64 {
        self.x.max(self.lambda).max(self.nu)
    }
}

/// Per-agent radii.
///
/// `r^x_i` is the largest absolute column sum of `A_i` (one column per decision
/// coordinate), `r^λ_i` the largest absolute row sum plus `2|N_i|`, and
/// `r^ν_i = 2|N_i|`. For `A_i = I` both sums equal one.
pub fn compute_radii(game: &GameInstance) -> Vec<Radii> {
    game.agents()
        .iter()
        .map(|a| {
            let col = a
                .coupling
                .column_iter()
                .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0_f64, f64::max);
            let row = a
                .coupling
                .row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0_f64, f64::max);
            let deg = 2.0 * a.neighbors.len() as f64;
            Radii {
                x: col,
                lambda: row + deg,
                nu: deg,
            }
        })
        .collect()
}

/// `L_G = max(L_F, 2·maxdeg) + γ̄·L_∇φ + α`.
pub fn compute_l_g(game: &GameInstance, spec: &SelectionSpec, gamma_bar: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(gamma_bar >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma_bar must be nonnegative, got {gamma_bar}")));
    }
    let lap = 2.0 * game.max_degree() as f64;
    Ok(game.lipschitz_f().max(lap) + gamma_bar * spec.lipschitz_gradient() + alpha)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    #[default]
    Midpoint,
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepSizes {
    pub rho: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn interval(delta: f64, r: f64) -> Result<(f64, f64)> {
    let lo = 1.0 / (2.0 * delta - r);
    let hi = 1.0 / (delta + r);
    if !(2.0 * delta - r > 0.0) || lo > hi * (1.0 + 1e-15) {
        return Err(Error::InvalidConfig(format!(
            "empty step-size interval for delta = {delta}, radius = {r}"
        )));
    }
    Ok((lo, hi.max(lo)))
}

fn pick(policy: StepPolicy, (lo, hi): (f64, f64)) -> f64 {
    match policy {
        StepPolicy::Midpoint => 0.5 * (lo + hi),
        StepPolicy::Lower => lo,
        StepPolicy::Upper => hi,
    }
}

/// Step sizes inside `[(2δ − r)⁻¹, (δ + r)⁻¹]` for each radius.
pub fn choose_stepsizes(radii: &[Radii], delta: f64, policy: StepPolicy) -> Result<StepSizes> {
    let mut s = StepSizes {
        rho: Vec::with_capacity(radii.len()),
        tau: Vec::with_capacity(radii.len()),
        sigma: Vec::with_capacity(radii.len()),
    };
    for r in radii {
        s.rho.push(pick(policy, interval(delta, r.x)?));
        s.tau.push(pick(policy, interval(delta, r.lambda)?));
        s.sigma.push(pick(policy, interval(delta, r.nu)?));
    }
    Ok(s)
}

/// `β = 1 + L_G²/δ² − 2α/‖Φ‖`, rejected unless `0 < β < 1`.
pub fn compute_beta(l_g: f64, delta: f64, alpha: f64, phi_norm: f64) -> Result<f64> {
    let beta = 1.0 + l_g * l_g / (delta * delta) - 2.0 * alpha / phi_norm;
    if beta > 0.0 && beta < 1.0 {
        Ok(beta)
    } else {
        Err(Error::InvalidConfig(format!(
            "contraction constant beta = {beta} outside (0, 1) (L_G = {l_g}, delta = {delta}, alpha = {alpha}, ||Phi|| = {phi_norm})"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreconditionerOptions {
    /// `δ = margin · max(L_G²/α, 2r)` unless `delta` is given.
    pub delta_margin: f64,
    pub delta: Option<f64>,
    pub policy: StepPolicy,
    pub power_max_iter: usize,
    pub power_rel_tol: f64,
    /// Largest dimension of `Φ` for which `‖Φ‖` is computed by a dense
    /// eigendecomposition instead of power iteration.
    pub dense_norm_limit: usize,
}

impl Default for PreconditionerOptions {
    fn default() -> Self {
        Self {
            delta_margin: 1.01,
            delta: None,
            policy: StepPolicy::Midpoint,
            power_max_iter: 200,
            power_rel_tol: 1e-8,
            dense_norm_limit: 1500,
        }
    }
}

/// How `‖Φ‖` was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormSource {
    /// Dense symmetric eigendecomposition.
    Dense,
    /// Converged power iteration.
    Power,
    /// The certified bound `2δ`.
    Bound,
}

/// Resolved step sizes and constants for the inner preconditioned loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreconditionerConfig {
    pub alpha: f64,
    pub gamma_bar: f64,
    pub l_g: f64,
    pub radii: Vec<Radii>,
    pub delta: f64,
    pub steps: StepSizes,
    pub phi_norm: f64,
    pub phi_norm_source: NormSource,
    pub beta: f64,
}

impl PreconditionerConfig {
    pub fn build(
        game: &GameInstance,
        spec: &SelectionSpec,
        alpha: f64,
        gamma_bar: f64,
        opts: &PreconditionerOptions,
    ) -> Result<Self> {
        let l_g = compute_l_g(game, spec, gamma_bar, alpha)?;
        let radii = compute_radii(game);
        let r = radii.iter().map(Radii::max).fold(0.0_f64, f64::max);
        let bound = (l_g * l_g / alpha).max(2.0 * r);
        let delta = match opts.delta {
            Some(d) if d > bound => d,
            Some(d) => {
                return Err(Error::InvalidConfig(format!(
                    "delta = {d} must exceed max(L_G^2/alpha, 2r) = {bound}"
                )))
            }
            None => {
                if !(opts.delta_margin > 1.0) {
                    return Err(Error::InvalidConfig("delta margin must exceed 1".into()));
                }
                opts.delta_margin * bound
            }
        };
        let steps = choose_stepsizes(&radii, delta, opts.policy)?;
        let phi = Phi { game, steps: &steps };
        let (phi_norm, phi_norm_source) = if phi.dim() <= opts.dense_norm_limit {
            (phi.extremes_dense().1.min(2.0 * delta), NormSource::Dense)
        } else {
            let est = phi.norm_power(opts.power_max_iter, opts.power_rel_tol);
            if est.converged && est.value <= 2.0 * delta {
                (est.value, NormSource::Power)
            } else {
                (2.0 * delta, NormSource::Bound)
            }
        };
        let beta = compute_beta(l_g, delta, alpha, phi_norm)?;
        Ok(Self {
            alpha,
            gamma_bar,
            l_g,
            radii,
            delta,
            steps,
            phi_norm,
            phi_norm_source,
            beta,
        })
    }

    pub fn phi<'a>(&'a self, game: &'a GameInstance) -> Phi<'a> {
        Phi {
            game,
            steps: &self.steps,
        }
    }

    /// Norm contraction factor `√β`.
    pub fn sqrt_beta(&self) -> f64 {
        self.beta.sqrt()
    }

    /// Re-checks the step-size intervals and the bound on `δ`.
    pub fn check(&self) -> Result<()> {
        let r = self.radii.iter().map(Radii::max).fold(0.0_f64, f64::max);
        if !(self.delta > (self.l_g * self.l_g / self.alpha).max(2.0 * r)) {
            return Err(Error::InvalidConfig("delta below its lower bound".into()));
        }
        let tol = 1e-12;
        let inside = |s: f64, radius: f64| {
            s >= (1.0 - tol) / (2.0 * self.delta - radius) && s <= (1.0 + tol) / (self.delta + radius)
        };
        for (i, r) in self.radii.iter().enumerate() {
            if !inside(self.steps.rho[i], r.x) || !inside(self.steps.tau[i], r.lambda) || !inside(self.steps.sigma[i], r.nu)
            {
                return Err(Error::InvalidConfig(format!("step sizes of agent {i} outside their intervals")));
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!("beta = {} outside (0, 1)", self.beta)));
        }
        Ok(())
    }
}

/// Matrix-free view of `Φ`.
#[derive(Clone, Copy)]
pub struct Phi<'a> {
    game: &'a GameInstance,
    steps: &'a StepSizes,
}

impl<'a> Phi<'a> {
    pub fn new(game: &'a GameInstance, steps: &'a StepSizes) -> Self {
        Self { game, steps }
    }

    pub fn dim(&self) -> usize {
        self.game.n() + 2 * self.game.dual_dim()
    }

    pub fn apply_into(&self, z: &JointPoint, out: &mut JointPoint) {
        let g = self.game;
        // x: ρ⁻¹ z_x − Aᵀ z_λ
        g.coupling_t_apply(&z.lambda, &mut out.x);
        for i in 0..g.num_agents() {
            let inv = 1.0 / self.steps.rho[i];
            for j in g.primal_range(i) {
                out.x[j] = inv * z.x[j] - out.x[j];
            }
        }
        // λ: −A z_x + τ⁻¹ z_λ − L̄ z_ν
        let mut az = vec![0.0; g.dual_dim()];
        g.coupling_apply(&z.x, &mut az);
        g.laplacian_apply(&z.nu, &mut out.lambda);
        for i in 0..g.num_agents() {
            let inv = 1.0 / self.steps.tau[i];
            for l in g.dual_range(i) {
                out.lambda[l] = inv * z.lambda[l] - az[l] - out.lambda[l];
            }
        }
        // ν: −L̄ z_λ + σ⁻¹ z_ν
        g.laplacian_apply(&z.lambda, &mut out.nu);
        for i in 0..g.num_agents() {
            let inv = 1.0 / self.steps.sigma[i];
            for l in g.dual_range(i) {
                out.nu[l] = inv * z.nu[l] - out.nu[l];
            }
        }
    }

    pub fn apply(&self, z: &JointPoint) -> JointPoint {
        let mut out = JointPoint::zeros(z.x.len(), z.lambda.len());
        self.apply_into(z, &mut out);
        out
    }

    /// `⟨z, Φ z′⟩`
    pub fn inner(&self, z: &JointPoint, z2: &JointPoint) -> f64 {
        z.dot(&self.apply(z2))
    }

    /// `‖z‖_Φ`
    pub fn norm(&self, z: &JointPoint) -> f64 {
        self.inner(z, z).max(0.0).sqrt()
    }

    pub fn distance(&self, a: &JointPoint, b: &JointPoint) -> f64 {
        self.norm(&a.sub(b))
    }

    fn apply_flat(&self, v: &[f64], out: &mut [f64]) {
        let (n, d) = (self.game.n(), self.game.dual_dim());
        let z = JointPoint::from_flat(v, n, d).expect("dimension checked by caller");
        let r = self.apply(&z);
        out.copy_from_slice(&r.to_flat());
    }

    /// Power-iteration estimate of `‖Φ‖ = λ_max(Φ)`.
    pub fn norm_power(&self, max_iter: usize, rel_tol: f64) -> linalg::PowerEstimate {
        power_iteration(self.dim(), |v, out| self.apply_flat(v, out), max_iter, rel_tol)
    }

    /// Power-iteration estimates of `(λ_min, λ_max)`; the minimum comes from
    /// the shifted operator `cI − Φ` with `c` the Gershgorin upper bound.
    pub fn extremes_power(&self, max_iter: usize, rel_tol: f64) -> (f64, f64) {
        let top = self.norm_power(max_iter, rel_tol).value;
        let shift = self.gershgorin_upper();
        let low = power_iteration(
            self.dim(),
            |v, out| {
                self.apply_flat(v, out);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = shift * vi - *o;
                }
            },
            max_iter,
            rel_tol,
        );
        (shift - low.value, top)
    }

    /// Gershgorin upper bound on the spectrum.
    pub fn gershgorin_upper(&self) -> f64 {
        let radii = compute_radii(self.game);
        radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (r.x + 1.0 / self.steps.rho[i])
                    .max(r.lambda + 1.0 / self.steps.tau[i])
                    .max(r.nu + 1.0 / self.steps.sigma[i])
            })
            .fold(0.0_f64, f64::max)
    }

    /// Dense copy, for certification on small instances.
    pub fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            self.apply_flat(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }

    /// Exact `(λ_min, λ_max)` from a dense symmetric eigendecomposition.
    pub fn extremes_dense(&self) -> (f64, f64) {
        let ev = linalg::sym_eigenvalues(&self.dense());
        (ev[0], ev[ev.len() - 1])
    }
}
