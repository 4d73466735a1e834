//! Splitting of the extended KKT operator `𝒜 + ℬ + 𝒞` and the preconditioned
//! forward-backward step built on it.
//!
//! With `ω = (x, λ, ν)` and `L̄ = L ⊗ I_m`:
//!
//! ```text
//! 𝒜(ω) = N_𝒳(x) × N_{≥0}(λ) × {0}
//! ℬ(ω) = (F(x), L̄λ, 0)
//! 𝒞(ω) = (Aᵀλ, b̄ − Ax − L̄ν, L̄λ)
//! ```
//!
//! `ℬ` carries `+L̄λ` so that `ℬ + 𝒞` is monotone (`L̄ ≽ 0`, the linear part of
//! `𝒞` is skew). `b̄` stacks the per-agent shares `b_i = b/N`.

use crate::error::{check_len, Error, Result};
use crate::game::{GameInstance, JointPoint, LocalSet, SelectionSpec};
use crate::linalg::axpy;
use crate::precond::{PreconditionerConfig, PreconditionerOptions};

/// Operators of the KKT splitting for one game.
#[derive(Clone, Copy)]
pub struct SplitOperators<'a> {
    game: &'a GameInstance,
}

/// Reusable buffers for [`SplitOperators::pfb_step_with`].
#[derive(Clone, Debug)]
pub struct PfbScratch {
    grad: JointPoint,
    fx: Vec<f64>,
    lap_lambda: Vec<f64>,
    reflect: Vec<f64>,
    lap_reflect: Vec<f64>,
    ax: Vec<f64>,
    atl: Vec<f64>,
}

impl PfbScratch {
    pub fn new(game: &GameInstance) -> Self {
        let (n, d) = (game.n(), game.dual_dim());
        Self {
            grad: JointPoint::zeros(n, d),
            fx: vec![0.0; n],
            lap_lambda: vec![0.0; d],
            reflect: vec![0.0; d],
            lap_reflect: vec![0.0; d],
            ax: vec![0.0; d],
            atl: vec![0.0; n],
        }
    }
}

/// Projection onto `Ω = 𝒳 × ℝ^{Nm}_{≥0} × ℝ^{Nm}`.
pub fn project_omega(game: &GameInstance, w: &JointPoint) -> JointPoint {
    let mut p = w.clone();
    project_omega_in_place(game, &mut p);
    p
}

pub fn project_omega_in_place(game: &GameInstance, w: &mut JointPoint) {
    game.project_primal(&mut w.x);
    w.lambda.iter_mut().for_each(|l| *l = l.max(0.0));
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResolventOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1_000_000,
        }
    }
}

impl<'a> SplitOperators<'a> {
    pub fn new(game: &'a GameInstance) -> Self {
        Self { game }
    }

    pub fn game(&self) -> &'a GameInstance {
        self.game
    }

    fn zeros(&self) -> JointPoint {
        self.game.zero_point()
    }

    fn apply_b_into(&self, w: &JointPoint, out: &mut JointPoint) {
        self.game.pseudogradient_into(&w.x, &mut out.x);
        self.game.laplacian_apply(&w.lambda, &mut out.lambda);
        out.nu.fill(0.0);
    }

    fn apply_c_into(&self, w: &JointPoint, out: &mut JointPoint) {
        let g = self.game;
        g.coupling_t_apply(&w.lambda, &mut out.x);
        let mut ax = vec![0.0; g.dual_dim()];
        g.coupling_apply(&w.x, &mut ax);
        g.laplacian_apply(&w.nu, &mut out.lambda);
        for ((o, b), a) in out.lambda.iter_mut().zip(g.b_split()).zip(&ax) {
            *o = b - a - *o;
        }
        g.laplacian_apply(&w.lambda, &mut out.nu);
    }

    /// `ℬ(ω) = (F(x), L̄λ, 0)`
    pub fn apply_b(&self, w: &JointPoint) -> Result<JointPoint> {
        self.game.check_point(w)?;
        let mut out = self.zeros();
        self.apply_b_into(w, &mut out);
        Ok(out)
    }

    /// `𝒞(ω) = (Aᵀλ, b̄ − Ax − L̄ν, L̄λ)`
    pub fn apply_c(&self, w: &JointPoint) -> Result<JointPoint> {
        self.game.check_point(w)?;
        let mut out = self.zeros();
        self.apply_c_into(w, &mut out);
        Ok(out)
    }

    /// Linear part of `𝒞` (without the `b̄` offset); skew-symmetric.
    pub fn apply_c_linear(&self, w: &JointPoint) -> Result<JointPoint> {
        let mut out = self.apply_c(w)?;
        axpy(-1.0, self.game.b_split(), &mut out.lambda);
        Ok(out)
    }

    pub fn apply_bc_into(&self, w: &JointPoint, out: &mut JointPoint) {
        let mut c = self.zeros();
        self.apply_b_into(w, out);
        self.apply_c_into(w, &mut c);
        out.axpy(1.0, &c);
    }

    /// `(ℬ + 𝒞)(ω)`
    pub fn apply_bc(&self, w: &JointPoint) -> Result<JointPoint> {
        self.game.check_point(w)?;
        let mut out = self.zeros();
        self.apply_bc_into(w, &mut out);
        Ok(out)
    }

    pub fn project_omega(&self, w: &JointPoint) -> JointPoint {
        project_omega(self.game, w)
    }

    /// `‖ω − proj_Ω(ω − (ℬ + 𝒞)(ω))‖`; zero exactly on `zer(𝒜 + ℬ + 𝒞)`.
    pub fn kkt_residual(&self, w: &JointPoint) -> f64 {
        let mut t = self.zeros();
        self.apply_bc_into(w, &mut t);
        t.scale(-1.0);
        t.axpy(1.0, w);
        project_omega_in_place(self.game, &mut t);
        w.distance(&t)
    }

    /// `G(y) = ℬ(y) + γ∇φ(y) + α(y − ω_anchor)`
    pub fn forward_operator_g(
        &self,
        spec: &SelectionSpec,
        anchor: &JointPoint,
        gamma: f64,
        alpha: f64,
        y: &JointPoint,
    ) -> Result<JointPoint> {
        if !(gamma > 0.0) || !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma and alpha must be positive (gamma = {gamma}, alpha = {alpha})"
            )));
        }
        self.game.check_point(y)?;
        self.game.check_point(anchor)?;
        Ok(self.g_unchecked(spec, anchor, gamma, alpha, y))
    }

    fn g_unchecked(&self, spec: &SelectionSpec, anchor: &JointPoint, gamma: f64, alpha: f64, y: &JointPoint) -> JointPoint {
        let mut out = self.zeros();
        self.apply_b_into(y, &mut out);
        if gamma != 0.0 {
            let mut grad = self.zeros();
            spec.gradient_into(y, &mut grad);
            out.axpy(gamma, &grad);
        }
        out.axpy(alpha, y);
        out.axpy(-alpha, anchor);
        out
    }

    fn check_step_inputs(&self, cfg: &PreconditionerConfig, gamma: f64, anchor: &JointPoint, y: &JointPoint) -> Result<()> {
        self.game.check_point(y)?;
        self.game.check_point(anchor)?;
        check_len("step sizes", self.game.num_agents(), cfg.steps.rho.len())?;
        if !(gamma >= 0.0) || gamma > cfg.gamma_bar * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "gamma = {gamma} outside [0, gamma_bar = {}]",
                cfg.gamma_bar
            )));
        }
        Ok(())
    }

    /// One preconditioned forward-backward iteration
    /// `y⁺ = (Id + Φ⁻¹(𝒜 + 𝒞))⁻¹ (Id − Φ⁻¹ G)(y)`, expanded per agent.
    pub fn pfb_step(
        &self,
        spec: &SelectionSpec,
        cfg: &PreconditionerConfig,
        anchor: &JointPoint,
        gamma: f64,
        y: &JointPoint,
    ) -> Result<JointPoint> {
        self.check_step_inputs(cfg, gamma, anchor, y)?;
        let mut out = self.zeros();
        let mut scratch = PfbScratch::new(self.game);
        self.pfb_step_with(spec, cfg, anchor, gamma, y, &mut out, &mut scratch);
        Ok(out)
    }

    /// Unchecked variant of [`Self::pfb_step`] writing into `out`.
    #[allow(clippy::too_many_arguments)]
    pub fn pfb_step_with(
        &self,
        spec: &SelectionSpec,
        cfg: &PreconditionerConfig,
        anchor: &JointPoint,
        gamma: f64,
        y: &JointPoint,
        out: &mut JointPoint,
        s: &mut PfbScratch,
    ) {
        let g = self.game;
        let alpha = cfg.alpha;
        if gamma != 0.0 {
            spec.gradient_into(y, &mut s.grad);
        } else {
            s.grad.iter_mut().for_each(|v| *v = 0.0);
        }
        g.pseudogradient_into(&y.x, &mut s.fx);
        g.laplacian_apply(&y.lambda, &mut s.lap_lambda);
        g.coupling_t_apply(&y.lambda, &mut s.atl);

        // Primal and auxiliary updates only read the current iterate.
        for (i, agent) in g.agents().iter().enumerate() {
            let rho = cfg.steps.rho[i];
            let xr = g.primal_range(i);
            for j in xr.clone() {
                let fwd = s.fx[j] + s.atl[j] + gamma * s.grad.x[j] + alpha * (y.x[j] - anchor.x[j]);
                out.x[j] = y.x[j] - rho * fwd;
            }
            agent.local_set.project(&mut out.x[xr]);

            let sigma = cfg.steps.sigma[i];
            for l in g.dual_range(i) {
                let fwd = s.lap_lambda[l] + gamma * s.grad.nu[l] + alpha * (y.nu[l] - anchor.nu[l]);
                out.nu[l] = y.nu[l] - sigma * fwd;
            }
        }

        // Dual update needs every neighbor's ν⁺: reflected terms 2x⁺ − x, 2ν⁺ − ν.
        for (r, (nn, no)) in s.reflect.iter_mut().zip(out.nu.iter().zip(&y.nu)) {
            *r = 2.0 * nn - no;
        }
        g.laplacian_apply(&s.reflect, &mut s.lap_reflect);
        let reflect_x: Vec<f64> = out.x.iter().zip(&y.x).map(|(a, b)| 2.0 * a - b).collect();
        g.coupling_apply(&reflect_x, &mut s.ax);
        let b = g.b_split();
        for i in 0..g.num_agents() {
            let tau = cfg.steps.tau[i];
            for l in g.dual_range(i) {
                let dir = s.ax[l] + s.lap_reflect[l]
                    - b[l]
                    - s.lap_lambda[l]
                    - gamma * s.grad.lambda[l]
                    - alpha * (y.lambda[l] - anchor.lambda[l]);
                out.lambda[l] = (y.lambda[l] + tau * dir).max(0.0);
            }
        }
    }

    /// Largest violation of `Φ(y − y⁺) − G(y) ∈ (𝒜 + 𝒞)(y⁺)`, evaluated blockwise
    /// against the normal cones of the box and the orthant at `y⁺`.
    pub fn verify_pfb_inclusion(
        &self,
        spec: &SelectionSpec,
        cfg: &PreconditionerConfig,
        anchor: &JointPoint,
        gamma: f64,
        y: &JointPoint,
        y_next: &JointPoint,
    ) -> f64 {
        let g = self.game;
        let phi = cfg.phi(g);
        let mut r = phi.apply(&y.sub(y_next));
        r.axpy(-1.0, &self.g_unchecked(spec, anchor, gamma, cfg.alpha, y));
        let mut c = self.zeros();
        self.apply_c_into(y_next, &mut c);
        r.axpy(-1.0, &c);

        let mut worst = 0.0_f64;
        for (i, agent) in g.agents().iter().enumerate() {
            let xr = g.primal_range(i);
            worst = worst.max(agent.local_set.normal_cone_violation(&y_next.x[xr.clone()], &r.x[xr]));
        }
        for (l, ri) in y_next.lambda.iter().zip(&r.lambda) {
            let v = if *l > 0.0 {
                ri.abs()
            } else if *l == 0.0 {
                ri.max(0.0)
            } else {
                f64::INFINITY
            };
            worst = worst.max(v);
        }
        for ri in &r.nu {
            worst = worst.max(ri.abs());
        }
        worst
    }

    /// Iterates the pFB map with anchor `anchor` until the `Φ`-norm error bound
    /// `‖Δy‖_Φ/(1 − √β)` drops below `opts.tol`.
    fn resolve(
        &self,
        spec: &SelectionSpec,
        cfg: &PreconditionerConfig,
        anchor: &JointPoint,
        gamma: f64,
        opts: ResolventOptions,
    ) -> Result<JointPoint> {
        let phi = cfg.phi(self.game);
        let factor = 1.0 - cfg.sqrt_beta();
        let mut y = project_omega(self.game, anchor);
        let mut next = self.zeros();
        let mut scratch = PfbScratch::new(self.game);
        for _ in 0..opts.max_iter {
            self.pfb_step_with(spec, cfg, anchor, gamma, &y, &mut next, &mut scratch);
            let step = phi.distance(&next, &y);
            std::mem::swap(&mut y, &mut next);
            if step <= opts.tol * factor {
                return Ok(y);
            }
        }
        Err(Error::ResolventNotConverged {
            tol: opts.tol,
            cap: opts.max_iter,
        })
    }

    /// `𝒯^Tik(ω) = J_{(1/α)(𝒜 + ℬ + 𝒞 + γ∇φ)}(ω)`: the solution of the
    /// regularized problem anchored at `ω`.
    pub fn tik_operator(
        &self,
        spec: &SelectionSpec,
        cfg: &PreconditionerConfig,
        gamma: f64,
        w: &JointPoint,
        opts: ResolventOptions,
    ) -> Result<JointPoint> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        self.check_step_inputs(cfg, gamma, w, w)?;
        self.resolve(spec, cfg, w, gamma, opts)
    }

    /// `𝒯^HSDM(v) = J_{𝒜 + ℬ + 𝒞}(v − γ∇φ(v))`, evaluated by solving
    /// `0 ∈ (𝒜 + ℬ + 𝒞 + Id − z)` with the pFB machinery at `γ = 0, α = 1`.
    pub fn hsdm_operator(
        &self,
        spec: &SelectionSpec,
        gamma: f64,
        v: &JointPoint,
        opts: ResolventOptions,
    ) -> Result<JointPoint> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {gamma}")));
        }
        self.game.check_point(v)?;
        let unit = PreconditionerConfig::build(self.game, spec, 1.0, 0.0, &PreconditionerOptions::default())?;
        let mut z = v.clone();
        if gamma != 0.0 {
            z.axpy(-gamma, &spec.gradient(v)?);
        }
        self.resolve(spec, &unit, &z, 0.0, opts)
    }
}
