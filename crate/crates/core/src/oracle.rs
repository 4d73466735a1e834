//! Brute-force reference answers on instances where selection reduces to a
//! convex quadratic program.
//!
//! With `F ≡ 0` every feasible point is an equilibrium, so the selected point
//! is `argmin φ_x` over the coupled feasible set. With `F = ∇P` for a convex
//! quadratic potential `P` the equilibria are the minimizers of `P`, which form
//! the affine slice `{x ∈ Γ : U_rᵀx = U_rᵀx_P, c_Fᵀx = c_Fᵀx_P}` (all
//! minimizers of a convex quadratic share `Qx` and hence `cᵀx`), so selection
//! is again a QP.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::game::{AgentSpec, BoxSet, GameInstance, JointPoint, Pseudogradient, SelectionSpec};
use crate::linalg::{dot, matvec, norm, spectral_norm, sym_eigenvalues};
use crate::precond::{PreconditionerConfig, PreconditionerOptions};
use crate::tikhonov::{self, ScheduleParams, SolveOptions};

/// `min xᵀQx + cᵀx` over `lower ≤ x ≤ upper`, `A x ≤ b`, `E x = d`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleProblem {
    pub q: DMatrix<f64>,
    pub c: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub e: DMatrix<f64>,
    pub d: Vec<f64>,
}

impl OracleProblem {
    pub fn new(q: DMatrix<f64>, c: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let n = c.len();
        let p = Self {
            q,
            c,
            lower,
            upper,
            a,
            b,
            e: DMatrix::zeros(0, n),
            d: Vec::new(),
        };
        p.check()?;
        Ok(p)
    }

    pub fn with_equalities(mut self, e: DMatrix<f64>, d: Vec<f64>) -> Result<Self> {
        self.e = e;
        self.d = d;
        self.check()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        check_len("Q rows", n, self.q.nrows())?;
        check_len("Q columns", n, self.q.ncols())?;
        check_len("lower", n, self.lower.len())?;
        check_len("upper", n, self.upper.len())?;
        check_len("A columns", n, self.a.ncols())?;
        check_len("b", self.a.nrows(), self.b.len())?;
        check_len("E columns", n, self.e.ncols())?;
        check_len("d", self.e.nrows(), self.d.len())?;
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::InvalidParameter("oracle boxes must be finite and nonempty".into()));
        }
        let scale = spectral_norm(&self.q).max(1.0);
        if (&self.q - self.q.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("oracle Q is not symmetric".into()));
        }
        if sym_eigenvalues(&self.q).first().is_some_and(|&v| v < -1e-10 * scale) {
            return Err(Error::InvalidParameter("oracle Q is not positive semi-definite".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; x.len()];
        matvec(&self.q, x, &mut qx);
        dot(x, &qx) + dot(&self.c, x)
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Largest violation of `Ax ≤ b` and `Ex = d`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let (ax, ex) = self.constraint_values(x);
        let ineq = ax.iter().zip(&self.b).map(|(v, b)| (v - b).max(0.0)).fold(0.0, f64::max);
        let eq = ex.iter().zip(&self.d).map(|(v, d)| (v - d).abs()).fold(0.0, f64::max);
        ineq.max(eq)
    }

    fn constraint_values(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ax = vec![0.0; self.a.nrows()];
        let mut ex = vec![0.0; self.e.nrows()];
        matvec(&self.a, x, &mut ax);
        matvec(&self.e, x, &mut ex);
        (ax, ex)
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Max-norm KKT residual: stationarity as a projected-gradient fixed-point
/// gap, primal violation, and complementarity.
pub fn qp_kkt_residual(p: &OracleProblem, x: &[f64], mu: &[f64], eta: &[f64]) -> f64 {
    let n = p.dim();
    let mut g = vec![0.0; n];
    matvec(&p.q, x, &mut g);
    for (gi, ci) in g.iter_mut().zip(&p.c) {
        *gi = 2.0 * *gi + ci;
    }
    add_transpose(&p.a, mu, &mut g);
    add_transpose(&p.e, eta, &mut g);
    let mut t: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
    p.project(&mut t);
    let stat = x.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (ax, _) = p.constraint_values(x);
    let comp = ax
        .iter()
        .zip(&p.b)
        .zip(mu)
        .map(|((v, b), m)| (m * (v - b)).abs())
        .fold(0.0, f64::max);
    let dual = mu.iter().map(|m| (-m).max(0.0)).fold(0.0, f64::max);
    stat.max(p.violation(x)).max(comp).max(dual)
}

fn add_transpose(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (j, col) in m.column_iter().enumerate() {
        out[j] += col.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

const MAX_TOTAL_ITER: usize = 10_000_000;
const MAX_PENALTY: f64 = 1e10;

/// Augmented-Lagrangian solve; inner problems are box-constrained and solved
/// by accelerated projected gradient with restarts.
///
/// Returns a point with `qp_kkt_residual ≤ tol`.
pub fn qp_solve(p: &OracleProblem, tol: f64) -> Result<QpSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("oracle tolerance must be positive, got {tol}")));
    }
    let n = p.dim();
    let q_norm = spectral_norm(&p.q);
    let a_sq = spectral_norm(&p.a).powi(2);
    let e_sq = spectral_norm(&p.e).powi(2);
    let mut x: Vec<f64> = p.lower.iter().zip(&p.upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let mut mu = vec![0.0; p.a.nrows()];
    let mut eta = vec![0.0; p.e.nrows()];
    let mut rho = 10.0;
    let mut inner_tol = 1e-2;
    let mut last_violation = f64::INFINITY;
    let mut total = 0usize;
    let mut grad = vec![0.0; n];

    loop {
        let lip = 2.0 * q_norm + rho * (a_sq + e_sq) + 1e-12;
        // ∇ψ(x) = 2Qx + c + Aᵀ max(0, μ + ρ(Ax − b)) + Eᵀ(η + ρ(Ex − d))
        let grad_at = |x: &[f64], g: &mut [f64]| {
            matvec(&p.q, x, g);
            for (gi, ci) in g.iter_mut().zip(&p.c) {
                *gi = 2.0 * *gi + ci;
            }
            let (ax, ex) = p.constraint_values(x);
            let shifted: Vec<f64> = ax.iter().zip(&p.b).zip(&mu).map(|((v, b), m)| (m + rho * (v - b)).max(0.0)).collect();
            let eq: Vec<f64> = ex.iter().zip(&p.d).zip(&eta).map(|((v, d), e)| e + rho * (v - d)).collect();
            add_transpose(&p.a, &shifted, g);
            add_transpose(&p.e, &eq, g);
        };

        let mut y = x.clone();
        let mut x_prev = x.clone();
        let mut t = 1.0_f64;
        loop {
            grad_at(&y, &mut grad);
            let mut next: Vec<f64> = y.iter().zip(&grad).map(|(v, g)| v - g / lip).collect();
            p.project(&mut next);
            total += 1;
            // gradient mapping at y
            let gm = lip * y.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let restart = y
                .iter()
                .zip(&next)
                .zip(&x_prev)
                .map(|((yv, nv), pv)| (yv - nv) * (nv - pv))
                .sum::<f64>()
                > 0.0;
            let t_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let mom = if restart { 0.0 } else { (t - 1.0) / t_next };
            y = next.iter().zip(&x_prev).map(|(nv, pv)| nv + mom * (nv - pv)).collect();
            x_prev.clone_from(&next);
            t = t_next;
            if gm <= inner_tol {
                x = next;
                break;
            }
            if total >= MAX_TOTAL_ITER {
                return Err(Error::OracleNotConverged(format!(
                    "inner solve exceeded {MAX_TOTAL_ITER} iterations (gradient mapping {gm:e})"
                )));
            }
        }

        let (ax, ex) = p.constraint_values(&x);
        for ((m, v), b) in mu.iter_mut().zip(&ax).zip(&p.b) {
            *m = (*m + rho * (v - b)).max(0.0);
        }
        for ((e, v), d) in eta.iter_mut().zip(&ex).zip(&p.d) {
            *e += rho * (v - d);
        }
        let violation = p.violation(&x);
        let kkt = qp_kkt_residual(p, &x, &mu, &eta);
        if kkt <= tol && violation <= 0.1 * tol {
            return Ok(QpSolution {
                x,
                mu,
                eta,
                kkt_residual: kkt,
                iterations: total,
            });
        }
        if violation > 0.25 * last_violation {
            if rho >= MAX_PENALTY {
                return Err(Error::Infeasible(format!(
                    "constraint violation stalls at {violation:e} with penalty {rho:e}"
                )));
            }
            rho *= 10.0;
        }
        last_violation = violation;
        inner_tol = (0.1 * inner_tol).max(0.1 * tol);
    }
}

/// Outcome of one oracle comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub scenario: String,
    pub seed: u64,
    pub rel_error: f64,
    pub oracle_value: f64,
    pub solver_value: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub oracle_x: Vec<f64>,
    /// `‖x_solver − x_oracle‖ / max(‖x_oracle‖, 1)`
    pub rel_error: f64,
    /// `φ_x` at the oracle point.
    pub oracle_value: f64,
    /// `φ_x` at the solver point.
    pub solver_value: f64,
}

const ORACLE_TOL: f64 = 1e-10;

fn quadratic_parts(spec: &SelectionSpec) -> Result<(&DMatrix<f64>, &[f64])> {
    match spec {
        SelectionSpec::Quadratic(s) => Ok((s.q(), s.c())),
        SelectionSpec::Oracle(_) => Err(Error::InvalidParameter("oracle checks need a quadratic selection".into())),
    }
}

fn linear_parts(game: &GameInstance) -> Result<(&DMatrix<f64>, &[f64])> {
    match game.pseudogradient_spec() {
        Pseudogradient::Linear { q, c } => Ok((q, c)),
        Pseudogradient::Oracle(_) => Err(Error::InvalidParameter("oracle checks need a linear pseudogradient".into())),
    }
}

/// Joint feasible set `Γ` as box bounds and the stacked coupling rows.
fn feasible_set(game: &GameInstance) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let mut lower = Vec::with_capacity(game.n());
    let mut upper = Vec::with_capacity(game.n());
    let mut a = DMatrix::zeros(game.m(), game.n());
    for (i, agent) in game.agents().iter().enumerate() {
        lower.extend_from_slice(&agent.local_set.lower);
        upper.extend_from_slice(&agent.local_set.upper);
        a.columns_mut(game.primal_range(i).start, agent.dim()).copy_from(&agent.coupling);
    }
    (lower, upper, a)
}

fn compare(spec: &SelectionSpec, oracle_x: Vec<f64>, solver_x: &[f64]) -> Result<Comparison> {
    let (q, c) = quadratic_parts(spec)?;
    let sel = OracleProblem::new(q.clone(), c.to_vec(), vec![0.0; c.len()], vec![0.0; c.len()], DMatrix::zeros(0, c.len()), vec![])?;
    let diff: Vec<f64> = solver_x.iter().zip(&oracle_x).map(|(a, b)| a - b).collect();
    Ok(Comparison {
        rel_error: norm(&diff) / norm(&oracle_x).max(1.0),
        oracle_value: sel.objective(&oracle_x),
        solver_value: sel.objective(solver_x),
        oracle_x,
    })
}

/// Compares `solver_x` against `argmin φ_x` over `Γ` for a game with `F ≡ 0`.
pub fn check_zero_pseudogradient_selection(game: &GameInstance, spec: &SelectionSpec, solver_x: &[f64]) -> Result<Comparison> {
    check_len("solver x", game.n(), solver_x.len())?;
    let (qf, cf) = linear_parts(game)?;
    if qf.amax() != 0.0 || cf.iter().any(|v| *v != 0.0) {
        return Err(Error::InvalidParameter("pseudogradient is not identically zero".into()));
    }
    let (q, c) = quadratic_parts(spec)?;
    let (lower, upper, a) = feasible_set(game);
    let p = OracleProblem::new(q.clone(), c.to_vec(), lower, upper, a, game.b().to_vec())?;
    compare(spec, qp_solve(&p, ORACLE_TOL)?.x, solver_x)
}

/// Two-stage check for `F(x) = Q_F x + c_F` with `Q_F` symmetric PSD.
pub fn check_potential_game_selection(game: &GameInstance, spec: &SelectionSpec, solver_x: &[f64]) -> Result<Comparison> {
    check_len("solver x", game.n(), solver_x.len())?;
    let (qf, cf) = linear_parts(game)?;
    let (q, c) = quadratic_parts(spec)?;
    let (lower, upper, a) = feasible_set(game);
    // stage 1: minimize P(x) = ½xᵀQ_Fx + c_Fᵀx over Γ
    let stage1 = OracleProblem::new(qf * 0.5, cf.to_vec(), lower.clone(), upper.clone(), a.clone(), game.b().to_vec())?;
    let x_p = qp_solve(&stage1, ORACLE_TOL)?.x;

    // stage 2: the minimizer set is Γ ∩ {U_rᵀx = U_rᵀx_P, c_Fᵀx = c_Fᵀx_P}
    let eig = nalgebra::SymmetricEigen::new((qf + qf.transpose()) * 0.5);
    let scale = eig.eigenvalues.amax().max(1e-300);
    let range: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&j| eig.eigenvalues[j] > 1e-9 * scale).collect();
    let n = game.n();
    let mut e = DMatrix::zeros(range.len() + 1, n);
    for (r, &j) in range.iter().enumerate() {
        e.row_mut(r).copy_from(&eig.eigenvectors.column(j).transpose());
    }
    for (j, v) in cf.iter().enumerate() {
        e[(range.len(), j)] = *v;
    }
    let mut d = vec![0.0; e.nrows()];
    matvec(&e, &x_p, &mut d);
    let stage2 = OracleProblem::new(q.clone(), c.to_vec(), lower, upper, a, game.b().to_vec())?.with_equalities(e, d)?;
    compare(spec, qp_solve(&stage2, ORACLE_TOL)?.x, solver_x)
}

/// Kinds of randomized oracle scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ZeroPseudogradient,
    PotentialGame,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ZeroPseudogradient => "zero-pseudogradient",
            Scenario::PotentialGame => "potential-game",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Scenario::ZeroPseudogradient => 1e-3,
            Scenario::PotentialGame => 1e-2,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-pseudogradient" => Ok(Scenario::ZeroPseudogradient),
            "potential-game" => Ok(Scenario::PotentialGame),
            other => Err(Error::InvalidParameter(format!("unknown oracle scenario {other:?}"))),
        }
    }
}

const SCENARIO_AGENTS: usize = 3;
const SCENARIO_NI: usize = 2;
const SCENARIO_M: usize = 2;
const SCENARIO_THETA: f64 = 1e-6;

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Small random instance (3 agents, `n_i = m = 2`, complete graph) for the
/// given scenario. Coupling rows are random with `0` strictly feasible.
pub fn scenario_instance(kind: Scenario, seed: u64) -> Result<(GameInstance, SelectionSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SCENARIO_AGENTS * SCENARIO_NI;
    let agents = (0..SCENARIO_AGENTS)
        .map(|i| {
            let a = normal_matrix(&mut rng, SCENARIO_M, SCENARIO_NI) * (1.0 / (SCENARIO_NI as f64).sqrt());
            let nb = (0..SCENARIO_AGENTS).filter(|&j| j != i).collect();
            AgentSpec::new(BoxSet::symmetric(SCENARIO_NI, 1.0), a, nb)
        })
        .collect::<Result<Vec<_>>>()?;
    let b: Vec<f64> = (0..SCENARIO_M).map(|_| rng.random_range(0.2..0.6)).collect();

    let s = normal_matrix(&mut rng, n, n);
    let q_phi = s.transpose() * &s * (1.0 / n as f64) + DMatrix::identity(n, n);
    // a shifted target outside Γ makes coupling rows active
    let c_phi: Vec<f64> = normal_vec(&mut rng, n).iter().map(|v| 2.0 * v).collect();

    let pseudogradient = match kind {
        Scenario::ZeroPseudogradient => Pseudogradient::Linear {
            q: DMatrix::zeros(n, n),
            c: vec![0.0; n],
        },
        Scenario::PotentialGame => {
            let rank = n / 2;
            let u = normal_matrix(&mut rng, n, n).qr().q();
            let diag: Vec<f64> = (0..n).map(|j| if j < rank { rng.random_range(0.5..2.0) } else { 0.0 }).collect();
            let q = &u * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) * u.transpose();
            let q = (&q + q.transpose()) * 0.5;
            // minimizers of P form −w + ker Q_F, which passes near the origin
            let w: Vec<f64> = normal_vec(&mut rng, n).iter().map(|v| 0.2 * v).collect();
            let mut c = vec![0.0; n];
            matvec(&q, &w, &mut c);
            Pseudogradient::Linear { q, c }
        }
    };
    let game = GameInstance::new(agents, b, pseudogradient)?;
    let spec = SelectionSpec::quadratic(q_phi, c_phi, SCENARIO_THETA)?;
    Ok((game, spec))
}

/// Solver settings used for oracle scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSolverSettings {
    pub alpha: f64,
    pub schedule: ScheduleParams,
}

impl ScenarioSolverSettings {
    /// Settings for which the Tikhonov bias `O(γ_K)` stays well below the
    /// scenario tolerance. Potential games need a smaller final `γ_K` since
    /// the bias scales with the inverse of the smallest nonzero eigenvalue of `Q_F`.
    pub fn for_scenario(kind: Scenario) -> Self {
        let (xi, max_outer) = match kind {
            Scenario::ZeroPseudogradient => (0.75, 3000),
            Scenario::PotentialGame => (0.9, 20_000),
        };
        Self {
            alpha: 4.0,
            schedule: ScheduleParams {
                gamma0: 1.0,
                xi,
                zeta: 2.0,
                eps_floor: f64::EPSILON,
                max_outer,
                max_inner: 1_000_000,
            },
        }
    }
}

/// Runs the Tikhonov solver on a scenario instance and checks it against the oracle.
pub fn run_scenario(kind: Scenario, seed: u64, settings: &ScenarioSolverSettings) -> Result<(OracleReport, JointPoint)> {
    let (game, spec) = scenario_instance(kind, seed)?;
    let cfg = PreconditionerConfig::build(
        &game,
        &spec,
        settings.alpha,
        settings.schedule.gamma0,
        &PreconditionerOptions::default(),
    )?;
    let opts = SolveOptions {
        stride: usize::MAX,
        ..Default::default()
    };
    let out = tikhonov::solve(&game, &spec, &settings.schedule, &cfg, &opts)?;
    let cmp = match kind {
        Scenario::ZeroPseudogradient => check_zero_pseudogradient_selection(&game, &spec, &out.omega.x)?,
        Scenario::PotentialGame => check_potential_game_selection(&game, &spec, &out.omega.x)?,
    };
    Ok((
        OracleReport {
            scenario: kind.name().into(),
            seed,
            rel_error: cmp.rel_error,
            oracle_value: cmp.oracle_value,
            solver_value: cmp.solver_value,
        },
        out.omega,
    ))
}
