//! Generalized games with linear coupling constraints, selection functions and
//! the stacked primal-dual variable space.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, dot, matvec};

/// A local feasible set with a cheap Euclidean projection.
pub trait LocalSet {
    fn dim(&self) -> usize;

    fn project(&self, x: &mut [f64]);

    /// Distance from `r` to the normal cone of the set at `x`, coordinatewise max.
    fn normal_cone_violation(&self, x: &[f64], r: &[f64]) -> f64;
}

/// Axis-aligned box; bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box upper bound", lower.len(), upper.len())?;
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidGame(format!(
                    "box coordinate {j} has empty interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]^dim`
    pub fn symmetric(dim: usize, radius: f64) -> Self {
        Self {
            lower: vec![-radius; dim],
            upper: vec![radius; dim],
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// Midpoint for finite boxes; for half-infinite coordinates the finite bound
    /// (or zero if it lies inside).
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                _ => 0.0_f64.clamp(lo, hi),
            })
            .collect()
    }
}

impl LocalSet for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }

    fn normal_cone_violation(&self, x: &[f64], r: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (((xi, ri), lo), hi) in x.iter().zip(r).zip(&self.lower).zip(&self.upper) {
            let v = if lo == hi {
                0.0
            } else if xi == hi {
                (-ri).max(0.0)
            } else if xi == lo {
                ri.max(0.0)
            } else if xi > hi || xi < lo {
                f64::INFINITY
            } else {
                ri.abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// One agent: decision dimension, local box, coupling block and neighbors.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub local_set: BoxSet,
    /// `A_i`, shape `m × n_i`.
    pub coupling: DMatrix<f64>,
    /// Neighbor indices (0-based), kept sorted ascending.
    pub neighbors: Vec<usize>,
}

impl AgentSpec {
    pub fn new(local_set: BoxSet, coupling: DMatrix<f64>, mut neighbors: Vec<usize>) -> Result<Self> {
        check_len("coupling columns", local_set.dim(), coupling.ncols())?;
        if local_set.dim() == 0 {
            return Err(Error::InvalidGame("agent with zero decision dimension".into()));
        }
        neighbors.sort_unstable();
        neighbors.dedup();
        Ok(Self {
            local_set,
            coupling,
            neighbors,
        })
    }

    pub fn dim(&self) -> usize {
        self.local_set.dim()
    }
}

/// Black-box pseudogradient with a declared Lipschitz constant.
pub trait PseudogradientOracle: Send + Sync {
    fn eval(&self, x: &[f64], out: &mut [f64]);
    fn lipschitz(&self) -> f64;
}

#[derive(Clone)]
pub enum Pseudogradient {
    /// `F(x) = Q x + c`
    Linear { q: DMatrix<f64>, c: Vec<f64> },
    Oracle(Arc<dyn PseudogradientOracle>),
}

impl fmt::Debug for Pseudogradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pseudogradient::Linear { q, .. } => write!(f, "Linear({}x{})", q.nrows(), q.ncols()),
            Pseudogradient::Oracle(o) => write!(f, "Oracle(L = {})", o.lipschitz()),
        }
    }
}

/// A generalized game `min_{x_i ∈ X_i} J_i(x)` subject to `Σ A_i x_i ≤ b`,
/// represented through its pseudogradient.
#[derive(Clone, Debug)]
pub struct GameInstance {
    agents: Vec<AgentSpec>,
    b: Vec<f64>,
    pseudogradient: Pseudogradient,
    m: usize,
    offsets: Vec<usize>,
    n: usize,
    lipschitz_f: f64,
    b_split: Vec<f64>,
}

impl GameInstance {
    pub fn new(agents: Vec<AgentSpec>, b: Vec<f64>, pseudogradient: Pseudogradient) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidGame("a game needs at least one agent".into()));
        }
        let m = b.len();
        let count = agents.len();
        let mut offsets = Vec::with_capacity(count + 1);
        offsets.push(0);
        for (i, a) in agents.iter().enumerate() {
            check_len("coupling rows", m, a.coupling.nrows())?;
            for &j in &a.neighbors {
                if j == i {
                    return Err(Error::InvalidGame(format!("agent {i} lists itself as neighbor")));
                }
                if j >= count {
                    return Err(Error::InvalidGame(format!("agent {i} has unknown neighbor {j}")));
                }
                if agents[j].neighbors.binary_search(&i).is_err() {
                    return Err(Error::InvalidGame(format!(
                        "neighbor relation is not symmetric: {i} -> {j}"
                    )));
                }
            }
            offsets.push(offsets[i] + a.dim());
        }
        let n = offsets[count];
        let lipschitz_f = match &pseudogradient {
            Pseudogradient::Linear { q, c } => {
                check_len("Q_F rows", n, q.nrows())?;
                check_len("Q_F columns", n, q.ncols())?;
                check_len("c_F", n, c.len())?;
                linalg::spectral_norm(q)
            }
            Pseudogradient::Oracle(o) => o.lipschitz(),
        };
        // b_i = b / N
        let share = 1.0 / count as f64;
        let b_split = (0..count).flat_map(|_| b.iter().map(move |v| v * share)).collect();
        Ok(Self {
            agents,
            b,
            pseudogradient,
            m,
            offsets,
            n,
            lipschitz_f,
            b_split,
        })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Total primal dimension `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of coupling constraints `m`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Dimension of each of the stacked dual blocks, `N·m`.
    pub fn dual_dim(&self) -> usize {
        self.m * self.agents.len()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Stacked per-agent shares `b_i = b/N`.
    pub fn b_split(&self) -> &[f64] {
        &self.b_split
    }

    pub fn pseudogradient_spec(&self) -> &Pseudogradient {
        &self.pseudogradient
    }

    pub fn lipschitz_f(&self) -> f64 {
        self.lipschitz_f
    }

    /// Primal index range of agent `i`.
    pub fn primal_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Dual (and auxiliary) index range of agent `i`.
    pub fn dual_range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.m..(i + 1) * self.m
    }

    pub fn max_degree(&self) -> usize {
        self.agents.iter().map(|a| a.neighbors.len()).max().unwrap_or(0)
    }

    /// Dense graph Laplacian `D − Adj`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let count = self.agents.len();
        let mut l = DMatrix::zeros(count, count);
        for (i, a) in self.agents.iter().enumerate() {
            l[(i, i)] = a.neighbors.len() as f64;
            for &j in &a.neighbors {
                l[(i, j)] = -1.0;
            }
        }
        l
    }

    /// `out = (L ⊗ I_m) v`, neighbor sums taken in ascending id order.
    pub fn laplacian_apply(&self, v: &[f64], out: &mut [f64]) {
        let m = self.m;
        for (i, a) in self.agents.iter().enumerate() {
            let vi = &v[i * m..(i + 1) * m];
            let oi = &mut out[i * m..(i + 1) * m];
            oi.fill(0.0);
            for &j in &a.neighbors {
                let vj = &v[j * m..(j + 1) * m];
                for ((o, a_), b_) in oi.iter_mut().zip(vi).zip(vj) {
                    *o += a_ - b_;
                }
            }
        }
    }

    /// `out = A x` stacked per agent (`A = blkdiag(A_i)`), length `N·m`.
    pub fn coupling_apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, a) in self.agents.iter().enumerate() {
            matvec(&a.coupling, &x[self.primal_range(i)], &mut out[self.dual_range(i)]);
        }
    }

    /// `out = Aᵀ λ`, length `n`.
    pub fn coupling_t_apply(&self, lambda: &[f64], out: &mut [f64]) {
        for (i, a) in self.agents.iter().enumerate() {
            let oi = &mut out[self.primal_range(i)];
            oi.fill(0.0);
            linalg::matvec_t_add(&a.coupling, &lambda[self.dual_range(i)], oi);
        }
    }

    /// Aggregate constraint value `Σ_i A_i x_i`.
    pub fn coupling_sum(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.m];
        let mut part = vec![0.0; self.m];
        for (i, a) in self.agents.iter().enumerate() {
            matvec(&a.coupling, &x[self.primal_range(i)], &mut part);
            linalg::axpy(1.0, &part, &mut total);
        }
        total
    }

    pub fn pseudogradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.pseudogradient {
            Pseudogradient::Linear { q, c } => {
                matvec(q, x, out);
                linalg::axpy(1.0, c, out);
            }
            Pseudogradient::Oracle(o) => o.eval(x, out),
        }
    }

    /// `F(x)`.
    pub fn pseudogradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("x", self.n, x.len())?;
        let mut out = vec![0.0; self.n];
        self.pseudogradient_into(x, &mut out);
        Ok(out)
    }

    pub fn project_primal(&self, x: &mut [f64]) {
        for (i, a) in self.agents.iter().enumerate() {
            a.local_set.project(&mut x[self.offsets[i]..self.offsets[i + 1]]);
        }
    }

    /// Default starting point: box centers, zero duals.
    pub fn initial_point(&self) -> JointPoint {
        let mut x = Vec::with_capacity(self.n);
        for a in &self.agents {
            x.extend(a.local_set.center());
        }
        JointPoint {
            x,
            lambda: vec![0.0; self.dual_dim()],
            nu: vec![0.0; self.dual_dim()],
        }
    }

    pub fn zero_point(&self) -> JointPoint {
        JointPoint::zeros(self.n, self.dual_dim())
    }

    pub fn check_point(&self, w: &JointPoint) -> Result<()> {
        check_len("x", self.n, w.x.len())?;
        check_len("lambda", self.dual_dim(), w.lambda.len())?;
        check_len("nu", self.dual_dim(), w.nu.len())
    }

    /// Returns a copy with agents relabeled: new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let count = self.agents.len();
        check_len("permutation", count, perm.len())?;
        let mut inverse = vec![usize::MAX; count];
        for (new, &old) in perm.iter().enumerate() {
            if old >= count || inverse[old] != usize::MAX {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let agents = perm
            .iter()
            .map(|&old| {
                let a = &self.agents[old];
                AgentSpec::new(
                    a.local_set.clone(),
                    a.coupling.clone(),
                    a.neighbors.iter().map(|&j| inverse[j]).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let index = self.primal_permutation(perm);
        let pseudogradient = match &self.pseudogradient {
            Pseudogradient::Linear { q, c } => Pseudogradient::Linear {
                q: DMatrix::from_fn(self.n, self.n, |r, s| q[(index[r], index[s])]),
                c: index.iter().map(|&r| c[r]).collect(),
            },
            Pseudogradient::Oracle(_) => {
                return Err(Error::InvalidParameter("cannot permute an opaque pseudogradient".into()))
            }
        };
        GameInstance::new(agents, self.b.clone(), pseudogradient)
    }

    /// For each new primal coordinate, the old coordinate it came from.
    pub fn primal_permutation(&self, perm: &[usize]) -> Vec<usize> {
        perm.iter().flat_map(|&old| self.primal_range(old)).collect()
    }

    /// For each new dual coordinate, the old coordinate it came from.
    pub fn dual_permutation(&self, perm: &[usize]) -> Vec<usize> {
        perm.iter().flat_map(|&old| self.dual_range(old)).collect()
    }
}

/// Stacked variable `ω = (x, λ, ν)`; also used for stacked operator outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPoint {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
}

impl JointPoint {
    pub fn zeros(n: usize, dual_dim: usize) -> Self {
        Self {
            x: vec![0.0; n],
            lambda: vec![0.0; dual_dim],
            nu: vec![0.0; dual_dim],
        }
    }

    pub fn from_flat(flat: &[f64], n: usize, dual_dim: usize) -> Result<Self> {
        check_len("flat point", n + 2 * dual_dim, flat.len())?;
        Ok(Self {
            x: flat[..n].to_vec(),
            lambda: flat[n..n + dual_dim].to_vec(),
            nu: flat[n + dual_dim..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.lambda.len() + self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.x.iter().chain(&self.lambda).chain(&self.nu)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.x.iter_mut().chain(self.lambda.iter_mut()).chain(self.nu.iter_mut())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.x, &other.x) + dot(&self.lambda, &other.lambda) + dot(&self.nu, &other.nu)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        linalg::axpy(a, &other.x, &mut self.x);
        linalg::axpy(a, &other.lambda, &mut self.lambda);
        linalg::axpy(a, &other.nu, &mut self.nu);
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d
    }

    pub fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|v| *v *= a);
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Black-box selection function.
pub trait SelectionOracle: Send + Sync {
    fn value(&self, w: &JointPoint) -> f64;
    fn gradient(&self, w: &JointPoint, out: &mut JointPoint);
    fn lipschitz_gradient(&self) -> f64;
    fn is_coercive(&self) -> bool;
}

/// `φ(ω) = xᵀQx + cᵀx + θ(‖λ‖² + ‖ν‖²)`
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSelection {
    q: DMatrix<f64>,
    c: Vec<f64>,
    theta: f64,
    lipschitz: f64,
}

impl QuadraticSelection {
    pub fn new(q: DMatrix<f64>, c: Vec<f64>, theta: f64) -> Result<Self> {
        check_len("Q_phi columns", q.nrows(), q.ncols())?;
        check_len("c_phi", q.nrows(), c.len())?;
        if !(theta >= 0.0) {
            return Err(Error::InvalidParameter(format!("theta must be nonnegative, got {theta}")));
        }
        let scale = q.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        let asym = (&q - q.transpose()).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if asym > 1e-12 * scale {
            return Err(Error::InvalidParameter("Q_phi is not symmetric".into()));
        }
        if let Some(&min) = linalg::sym_eigenvalues(&q).first() {
            if min < -1e-10 * scale {
                return Err(Error::InvalidParameter(format!(
                    "Q_phi is not positive semi-definite (min eigenvalue {min:e})"
                )));
            }
        }
        let lipschitz = (2.0 * linalg::spectral_norm(&q)).max(2.0 * theta);
        Ok(Self { q, c, theta, lipschitz })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Value of the primal part `xᵀQx + cᵀx`.
    pub fn primal_value(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; x.len()];
        matvec(&self.q, x, &mut qx);
        dot(x, &qx) + dot(&self.c, x)
    }
}

#[derive(Clone)]
pub enum SelectionSpec {
    Quadratic(QuadraticSelection),
    Oracle(Arc<dyn SelectionOracle>),
}

impl fmt::Debug for SelectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionSpec::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            SelectionSpec::Oracle(o) => write!(f, "Oracle(L = {})", o.lipschitz_gradient()),
        }
    }
}

impl SelectionSpec {
    pub fn quadratic(q: DMatrix<f64>, c: Vec<f64>, theta: f64) -> Result<Self> {
        QuadraticSelection::new(q, c, theta).map(SelectionSpec::Quadratic)
    }

    pub fn lipschitz_gradient(&self) -> f64 {
        match self {
            SelectionSpec::Quadratic(q) => q.lipschitz,
            SelectionSpec::Oracle(o) => o.lipschitz_gradient(),
        }
    }

    pub fn is_coercive(&self) -> bool {
        match self {
            SelectionSpec::Quadratic(q) => q.theta > 0.0,
            SelectionSpec::Oracle(o) => o.is_coercive(),
        }
    }

    pub fn value_unchecked(&self, w: &JointPoint) -> f64 {
        match self {
            SelectionSpec::Quadratic(s) => {
                s.primal_value(&w.x) + s.theta * (dot(&w.lambda, &w.lambda) + dot(&w.nu, &w.nu))
            }
            SelectionSpec::Oracle(o) => o.value(w),
        }
    }

    pub fn gradient_into(&self, w: &JointPoint, out: &mut JointPoint) {
        match self {
            SelectionSpec::Quadratic(s) => {
                matvec(&s.q, &w.x, &mut out.x);
                for (o, c) in out.x.iter_mut().zip(&s.c) {
                    *o = 2.0 * *o + c;
                }
                for (o, l) in out.lambda.iter_mut().zip(&w.lambda) {
                    *o = 2.0 * s.theta * l;
                }
                for (o, v) in out.nu.iter_mut().zip(&w.nu) {
                    *o = 2.0 * s.theta * v;
                }
            }
            SelectionSpec::Oracle(o) => o.gradient(w, out),
        }
    }

    fn check(&self, w: &JointPoint) -> Result<()> {
        if let SelectionSpec::Quadratic(s) = self {
            check_len("x", s.c.len(), w.x.len())?;
            check_len("nu", w.lambda.len(), w.nu.len())?;
        }
        Ok(())
    }

    /// `φ(ω)`
    pub fn value(&self, w: &JointPoint) -> Result<f64> {
        self.check(w)?;
        Ok(self.value_unchecked(w))
    }

    /// `∇φ(ω)`
    pub fn gradient(&self, w: &JointPoint) -> Result<JointPoint> {
        self.check(w)?;
        let mut out = JointPoint::zeros(w.x.len(), w.lambda.len());
        self.gradient_into(w, &mut out);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Unverified,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

/// Outcome of [`validate_game`]; `Fail` entries are fatal for solvers.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn is_ok(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Validation(
                self.failures().map(|c| format!("{} check failed: {}", c.name, c.detail)).collect(),
            ))
        }
    }
}

pub const MONOTONICITY_TOL: f64 = -1e-10;
const STRICT_MARGIN: f64 = 1e-9;

/// Checks connectivity, monotonicity, strict feasibility and bound finiteness.
pub fn validate_game(game: &GameInstance) -> ValidationReport {
    let mut checks = Vec::with_capacity(4);

    let count = game.num_agents();
    let connectivity = if count == 1 {
        CheckResult {
            name: "connectivity",
            status: CheckStatus::Pass,
            detail: "single agent".into(),
        }
    } else {
        let ev = linalg::sym_eigenvalues(&game.laplacian());
        let fiedler = ev[1];
        CheckResult {
            name: "connectivity",
            status: if fiedler > 1e-10 { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: format!("Fiedler value {fiedler:.6e}"),
        }
    };
    checks.push(connectivity);

    checks.push(match game.pseudogradient_spec() {
        Pseudogradient::Linear { q, .. } => {
            let min = linalg::sym_eigenvalues(q).first().copied().unwrap_or(0.0);
            CheckResult {
                name: "monotonicity",
                status: if min >= MONOTONICITY_TOL { CheckStatus::Pass } else { CheckStatus::Fail },
                detail: format!("min eigenvalue of symmetric part {min:.6e}"),
            }
        }
        Pseudogradient::Oracle(_) => sampled_monotonicity(game),
    });

    checks.push(strict_feasibility(game));

    let bounded = game.agents().iter().all(|a| a.local_set.is_bounded());
    checks.push(CheckResult {
        name: "bounded",
        status: if bounded { CheckStatus::Pass } else { CheckStatus::Unverified },
        detail: if bounded {
            "all local boxes are compact".into()
        } else {
            "some local boxes are unbounded".into()
        },
    });

    ValidationReport { checks }
}

fn sampled_monotonicity(game: &GameInstance) -> CheckResult {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6d6f6e6f);
    let n = game.n();
    let mut worst = f64::INFINITY;
    let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..200 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        game.pseudogradient_into(&x, &mut fx);
        game.pseudogradient_into(&y, &mut fy);
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let g: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        worst = worst.min(dot(&g, &d) / dot(&d, &d).max(f64::MIN_POSITIVE));
    }
    CheckResult {
        name: "monotonicity",
        status: if worst >= MONOTONICITY_TOL { CheckStatus::Unverified } else { CheckStatus::Fail },
        detail: format!("sampled monotonicity modulus {worst:.6e} (oracle pseudogradient)"),
    }
}

fn strict_feasibility(game: &GameInstance) -> CheckResult {
    let name = "strict_feasibility";
    let m = game.m();
    let b = game.b();

    // A row that cannot be strictly satisfied anywhere in the box is a certificate.
    let mut row_min = vec![0.0; m];
    for a in game.agents() {
        for (l, rm) in row_min.iter_mut().enumerate() {
            for (j, (lo, hi)) in a.local_set.lower.iter().zip(&a.local_set.upper).enumerate() {
                let c = a.coupling[(l, j)];
                if c != 0.0 {
                    *rm += (c * lo).min(c * hi);
                }
            }
        }
    }
    if let Some(l) = (0..m).find(|&l| row_min[l] >= b[l]) {
        return CheckResult {
            name,
            status: CheckStatus::Fail,
            detail: format!("row {l}: min over boxes {:.6e} >= b {:.6e}", row_min[l], b[l]),
        };
    }

    let center = game.initial_point().x;
    let slack_of = |x: &[f64]| {
        let s = game.coupling_sum(x);
        s.iter().zip(b).map(|(v, bl)| bl - v).fold(f64::INFINITY, f64::min)
    };
    let slack = slack_of(&center);
    if slack > STRICT_MARGIN || m == 0 {
        return CheckResult {
            name,
            status: CheckStatus::Pass,
            detail: format!("box center has slack {slack:.6e}"),
        };
    }

    match feasibility_search(game) {
        Some(s) => CheckResult {
            name,
            status: CheckStatus::Pass,
            detail: format!("search found interior point with slack {s:.6e}"),
        },
        None => CheckResult {
            name,
            status: CheckStatus::Unverified,
            detail: "no strictly feasible interior point found".into(),
        },
    }
}

/// Projected-gradient search for an interior point of the shrunken boxes with
/// `Σ A_i x_i ≤ b − margin`. Returns the achieved slack on success.
fn feasibility_search(game: &GameInstance) -> Option<f64> {
    let n = game.n();
    let m = game.m();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for a in game.agents() {
        for (lo, hi) in a.local_set.lower.iter().zip(&a.local_set.upper) {
            let w = if lo.is_finite() && hi.is_finite() { 0.01 * (hi - lo) } else { 0.0 };
            lower.push(lo + w);
            upper.push(hi - w);
        }
    }
    let inner = BoxSet { lower, upper };
    let margin = 1e-6 * (1.0 + game.b().iter().fold(0.0_f64, |a, v| a.max(v.abs())));
    let frob: f64 = game.agents().iter().map(|a| a.coupling.norm_squared()).sum();
    if frob == 0.0 {
        return None;
    }
    let step = 0.5 / frob;
    let mut x = game.initial_point().x;
    inner.project(&mut x);
    let mut viol = vec![0.0; game.dual_dim()];
    let mut grad = vec![0.0; n];
    let mut per_agent = vec![0.0; game.dual_dim()];
    for _ in 0..5000 {
        let s = game.coupling_sum(&x);
        let excess: Vec<f64> = s.iter().zip(game.b()).map(|(v, bl)| (v - bl + 2.0 * margin).max(0.0)).collect();
        if excess.iter().all(|e| *e == 0.0) {
            let slack = s.iter().zip(game.b()).map(|(v, bl)| bl - v).fold(f64::INFINITY, f64::min);
            return Some(slack);
        }
        for i in 0..game.num_agents() {
            viol[i * m..(i + 1) * m].copy_from_slice(&excess);
        }
        per_agent.copy_from_slice(&viol);
        game.coupling_t_apply(&per_agent, &mut grad);
        linalg::axpy(-2.0 * step, &grad, &mut x);
        inner.project(&mut x);
    }
    None
}
