//! Random instances, parameter sweeps and the HSDM comparison.
//!
//! Output layout under the chosen directory:
//! `runs/<sweep>/<value>/<seed>.csv` for single runs and
//! `aggregate/<sweep>.csv` for mean curves over instances. Every file starts
//! with a `# key=value` header block.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{fbf_solve, hsdm_fbf_solve, BaselineOptions, HsdmParams};
use crate::document::GameDocument;
use crate::error::{Error, Result};
use crate::game::{AgentSpec, BoxSet, GameInstance, Pseudogradient, SelectionSpec};
use crate::operators::SplitOperators;
use crate::precond::{PreconditionerConfig, PreconditionerOptions};
use crate::tikhonov::{self, ScheduleParams, SolveOptions, StopRule};
use crate::trace::{fmt_f64, SolverTrace};

pub const RNG_NAME: &str = "ChaCha8Rng";

/// Scaling applied to `Q_F = RᵀR`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QfScaling {
    /// `RᵀR / n`
    #[default]
    Normalized,
    /// `RᵀR`
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_instances: usize,
    pub n_agents: usize,
    pub n_i: usize,
    pub m: usize,
    /// Random chords added to the ring; `None` means `⌊N/2⌋`.
    pub extra_edges: Option<usize>,
    pub qf_scaling: QfScaling,
    pub xi_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub zeta_values: Vec<f64>,
    pub xi: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub gamma0: f64,
    pub theta: f64,
    pub eps_floor: f64,
    /// Cumulative inner iterations per run.
    pub budget: usize,
    pub stride: usize,
    pub stop_rule: StopRule,
    pub fbf_tol: f64,
    pub fbf_max_iter: usize,
    pub hsdm_gamma0: f64,
    pub hsdm_eta: f64,
    pub seed: u64,
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_instances: 100,
            n_agents: 10,
            n_i: 5,
            m: 5,
            extra_edges: None,
            qf_scaling: QfScaling::Normalized,
            xi_values: vec![0.4, 0.6, 0.8],
            alpha_values: vec![0.5, 1.0, 2.0],
            zeta_values: vec![1.0, 2.0, 3.0],
            xi: 0.6,
            zeta: 2.0,
            alpha: 1.0,
            gamma0: 1e-3,
            theta: 1e-3,
            eps_floor: f64::EPSILON,
            budget: 20_000,
            stride: 100,
            stop_rule: StopRule::Conservative,
            fbf_tol: 1e-6,
            fbf_max_iter: 200_000,
            hsdm_gamma0: 1e-3,
            hsdm_eta: 0.6,
            seed: 0,
            jobs: None,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_agents == 0 || self.n_i == 0 || self.m == 0 {
            return bad("n_agents, n_i and m must be positive".into());
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        let sweeps = self.xi_values.iter().chain(&self.alpha_values).chain(&self.zeta_values);
        if let Some(v) = sweeps.into_iter().find(|v| !(**v > 0.0)) {
            return bad(format!("sweep values must be positive, got {v}"));
        }
        for (name, v) in [("xi", self.xi), ("zeta", self.zeta), ("alpha", self.alpha), ("gamma0", self.gamma0)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.theta >= 0.0) {
            return bad(format!("theta must be nonnegative, got {}", self.theta));
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn schedule(&self, xi: f64, zeta: f64) -> ScheduleParams {
        ScheduleParams {
            gamma0: self.gamma0,
            xi,
            zeta,
            eps_floor: self.eps_floor,
            max_outer: usize::MAX,
            max_inner: 1_000_000,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_instances as u64).map(move |j| self.seed.wrapping_add(j))
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Ring over the agents plus random chords, as sorted neighbor lists.
pub fn ring_with_chords(n_agents: usize, extra: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut adj = vec![std::collections::BTreeSet::new(); n_agents];
    if n_agents >= 2 {
        for i in 0..n_agents {
            let j = (i + 1) % n_agents;
            if i != j {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    let max_edges = n_agents * n_agents.saturating_sub(1) / 2;
    let mut edges: usize = adj.iter().map(|s| s.len()).sum::<usize>() / 2;
    let mut added = 0;
    while added < extra && edges < max_edges {
        let i = rng.random_range(0..n_agents);
        let j = rng.random_range(0..n_agents);
        if i != j && adj[i].insert(j) {
            adj[j].insert(i);
            edges += 1;
            added += 1;
        }
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// A random instance of the experimental protocol, deterministic in `seed`.
pub fn generate_instance(seed: u64, cfg: &ExperimentConfig) -> Result<(GameInstance, SelectionSpec)> {
    if cfg.n_i != cfg.m {
        return Err(Error::InvalidConfig(format!(
            "identity coupling needs n_i = m (got n_i = {}, m = {})",
            cfg.n_i, cfg.m
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_agents * cfg.n_i;
    let corank = (n / 10).max(1);
    let r = normal_matrix(&mut rng, n.saturating_sub(corank), n);
    let mut q_f = r.transpose() * &r;
    if cfg.qf_scaling == QfScaling::Normalized {
        q_f /= n as f64;
    }
    let mut c_f: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let c_norm = crate::linalg::norm(&c_f);
    c_f.iter_mut().for_each(|v| *v /= c_norm);
    let s = normal_matrix(&mut rng, n, n);
    let q_phi = s.transpose() * &s / n as f64;
    let c_phi: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let neighbors = ring_with_chords(cfg.n_agents, cfg.extra_edges.unwrap_or(cfg.n_agents / 2), &mut rng);

    let agents = neighbors
        .into_iter()
        .map(|nb| AgentSpec::new(BoxSet::symmetric(cfg.n_i, 1.0), DMatrix::identity(cfg.m, cfg.n_i), nb))
        .collect::<Result<Vec<_>>>()?;
    let game = GameInstance::new(agents, vec![2.0; cfg.m], Pseudogradient::Linear { q: q_f, c: c_f })?;
    let spec = SelectionSpec::quadratic(q_phi, c_phi, cfg.theta)?;
    Ok((game, spec))
}

/// SHA-256 of the instance's JSON document, as lowercase hex.
pub fn instance_hash(game: &GameInstance, spec: &SelectionSpec) -> Result<String> {
    let json = GameDocument::from_parts(game, spec)?.to_json()?;
    Ok(Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Xi,
    Alpha,
    Zeta,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Xi => "xi",
            SweepKind::Alpha => "alpha",
            SweepKind::Zeta => "zeta",
        }
    }

    pub fn values(self, cfg: &ExperimentConfig) -> &[f64] {
        match self {
            SweepKind::Xi => &cfg.xi_values,
            SweepKind::Alpha => &cfg.alpha_values,
            SweepKind::Zeta => &cfg.zeta_values,
        }
    }

    /// `(ξ, ζ, α)` for one sweep value, others at their defaults.
    pub fn point(self, cfg: &ExperimentConfig, value: f64) -> (f64, f64, f64) {
        match self {
            SweepKind::Xi => (value, cfg.zeta, cfg.alpha),
            SweepKind::Alpha => (cfg.xi, cfg.zeta, value),
            SweepKind::Zeta => (cfg.xi, value, cfg.alpha),
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xi" => Ok(SweepKind::Xi),
            "alpha" => Ok(SweepKind::Alpha),
            "zeta" => Ok(SweepKind::Zeta),
            other => Err(Error::InvalidParameter(format!("unknown sweep {other:?}"))),
        }
    }
}

/// Final metrics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub final_residual: f64,
    pub final_phi: f64,
    pub phi_fbf: f64,
    pub cum_inner: usize,
    pub trace: SolverTrace,
}

/// Outcome of the Tikhonov solver on one instance at one parameter point.
#[allow(clippy::too_many_arguments)]
pub fn run_tikhonov(
    game: &GameInstance,
    spec: &SelectionSpec,
    cfg: &ExperimentConfig,
    xi: f64,
    zeta: f64,
    alpha: f64,
) -> Result<tikhonov::SolveOutput> {
    let schedule = cfg.schedule(xi, zeta);
    let pre = PreconditionerConfig::build(game, spec, alpha, schedule.gamma0, &PreconditionerOptions::default())?;
    let opts = SolveOptions {
        stop_rule: cfg.stop_rule,
        stride: cfg.stride,
        budget: Some(cfg.budget),
        ..Default::default()
    };
    tikhonov::solve(game, spec, &schedule, &pre, &opts)
}

/// `φ` at the plain FBF equilibrium.
pub fn fbf_reference(game: &GameInstance, spec: &SelectionSpec, cfg: &ExperimentConfig) -> Result<f64> {
    let out = fbf_solve(game, None, cfg.fbf_tol, cfg.fbf_max_iter, &BaselineOptions::default())?;
    Ok(spec.value_unchecked(&out.omega))
}

struct Instance {
    seed: u64,
    game: GameInstance,
    spec: SelectionSpec,
    hash: String,
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    cfg.seeds()
        .map(|seed| {
            let (game, spec) = generate_instance(seed, cfg)?;
            let hash = instance_hash(&game, &spec)?;
            Ok(Instance { seed, game, spec, hash })
        })
        .collect()
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    let pool = b.build().map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn run_header(trace: &mut SolverTrace, inst: &Instance, cfg: &ExperimentConfig) {
    trace.set("seed", inst.seed);
    trace.set("instance_hash", &inst.hash);
    trace.set("rng", RNG_NAME);
    trace.set("qf_scaling", format!("{:?}", cfg.qf_scaling).to_lowercase());
    trace.set("n_agents", cfg.n_agents);
    trace.set("n_i", cfg.n_i);
    trace.set("m", cfg.m);
}

fn write_trace(path: &Path, trace: &SolverTrace) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    trace.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Label used for a sweep value in paths and CSVs.
pub fn value_label(v: f64) -> String {
    format!("{v}")
}

/// Mean curve over runs at each recorded `cum_t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeanCurve {
    /// `cum_t → (Σ residual, Σ φ, Σ (φ − φ_FBF), count)`
    points: BTreeMap<usize, (f64, f64, f64, usize)>,
}

impl MeanCurve {
    pub fn add(&mut self, trace: &SolverTrace, phi_ref: f64) {
        for r in &trace.rows {
            let e = self.points.entry(r.cum_t).or_insert((0.0, 0.0, 0.0, 0));
            e.0 += r.residual;
            e.1 += r.phi;
            e.2 += r.phi - phi_ref;
            e.3 += 1;
        }
    }

    /// `(cum_t, mean residual, mean φ, mean φ gap, runs)`
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64, f64, usize)> + '_ {
        self.points
            .iter()
            .map(|(t, (r, p, g, c))| (*t, r / *c as f64, p / *c as f64, g / *c as f64, *c))
    }
}

pub const AGGREGATE_COLUMNS: &str = "series,cum_t,mean_residual,mean_phi,mean_phi_gap,runs";

fn write_aggregate(path: &Path, header: &[(String, String)], curves: &[(String, MeanCurve)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "{AGGREGATE_COLUMNS}")?;
    for (series, curve) in curves {
        for (t, r, p, g, c) in curve.rows() {
            writeln!(w, "{series},{t},{},{},{},{c}", fmt_f64(r), fmt_f64(p), fmt_f64(g))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn config_header(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    vec![
        ("rng".into(), RNG_NAME.into()),
        ("seed".into(), cfg.seed.to_string()),
        ("n_instances".into(), cfg.n_instances.to_string()),
        ("n_agents".into(), cfg.n_agents.to_string()),
        ("n_i".into(), cfg.n_i.to_string()),
        ("m".into(), cfg.m.to_string()),
        ("qf_scaling".into(), format!("{:?}", cfg.qf_scaling).to_lowercase()),
        ("gamma0".into(), fmt_f64(cfg.gamma0)),
        ("theta".into(), fmt_f64(cfg.theta)),
        ("budget".into(), cfg.budget.to_string()),
        ("stride".into(), cfg.stride.to_string()),
        ("stop_rule".into(), cfg.stop_rule.to_string()),
    ]
}

/// Mean final metrics at one sweep value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_final_residual: f64,
    pub mean_final_phi: f64,
    pub mean_phi_fbf: f64,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub sweep: String,
    pub points: Vec<SweepPoint>,
    pub aggregate: PathBuf,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Runs the Tikhonov solver at every sweep value on every instance.
pub fn run_sweep(cfg: &ExperimentConfig, sweep: SweepKind, out_dir: &Path) -> Result<SweepSummary> {
    cfg.check()?;
    let insts = instances(cfg)?;
    let values = sweep.values(cfg).to_vec();
    info!("{} sweep over {:?} on {} instances", sweep.name(), values, insts.len());

    let results: Vec<Vec<Result<RunResult>>> = with_pool(cfg.jobs, || {
        let phi_fbf: Vec<Result<f64>> = insts.par_iter().map(|i| fbf_reference(&i.game, &i.spec, cfg)).collect();
        values
            .iter()
            .map(|&value| {
                let (xi, zeta, alpha) = sweep.point(cfg, value);
                insts
                    .par_iter()
                    .zip(&phi_fbf)
                    .map(|(inst, fbf)| {
                        let phi_fbf = fbf.as_ref().map_err(|e| Error::InvalidConfig(format!("FBF reference: {e}")))?;
                        let out = run_tikhonov(&inst.game, &inst.spec, cfg, xi, zeta, alpha)?;
                        let ops = SplitOperators::new(&inst.game);
                        let mut trace = out.trace;
                        run_header(&mut trace, inst, cfg);
                        trace.set("sweep", sweep.name());
                        trace.set("value", value_label(value));
                        trace.set("phi_fbf", fmt_f64(*phi_fbf));
                        trace.set("status", "ok");
                        Ok(RunResult {
                            seed: inst.seed,
                            final_residual: ops.kkt_residual(&out.omega),
                            final_phi: inst.spec.value_unchecked(&out.omega),
                            phi_fbf: *phi_fbf,
                            cum_inner: out.cum_inner,
                            trace,
                        })
                    })
                    .collect()
            })
            .collect()
    })?;

    let mut points = Vec::new();
    let mut curves = Vec::new();
    for (value, runs) in values.iter().zip(&results) {
        let dir = out_dir.join("runs").join(sweep.name()).join(value_label(*value));
        let mut curve = MeanCurve::default();
        let mut ok = Vec::new();
        for (inst, run) in insts.iter().zip(runs) {
            let path = dir.join(format!("{}.csv", inst.seed));
            match run {
                Ok(r) => {
                    write_trace(&path, &r.trace)?;
                    curve.add(&r.trace, r.phi_fbf);
                    ok.push(r);
                }
                Err(e) => {
                    warn!("{} = {value}, seed {}: {e}", sweep.name(), inst.seed);
                    let mut t = SolverTrace::new();
                    run_header(&mut t, inst, cfg);
                    t.set("sweep", sweep.name());
                    t.set("value", value_label(*value));
                    t.set("status", format!("failed: {e}").replace('\n', " "));
                    write_trace(&path, &t)?;
                }
            }
        }
        points.push(SweepPoint {
            value: *value,
            mean_final_residual: mean(ok.iter().map(|r| r.final_residual)),
            mean_final_phi: mean(ok.iter().map(|r| r.final_phi)),
            mean_phi_fbf: mean(ok.iter().map(|r| r.phi_fbf)),
            runs: ok.len(),
            failed: runs.len() - ok.len(),
        });
        curves.push((value_label(*value), curve));
    }

    let mut header = config_header(cfg);
    header.push(("sweep".into(), sweep.name().into()));
    let (xi, zeta, alpha) = sweep.point(cfg, f64::NAN);
    for (k, v) in [("xi", xi), ("zeta", zeta), ("alpha", alpha)] {
        if !v.is_nan() {
            header.push((k.into(), fmt_f64(v)));
        }
    }
    for p in &points {
        header.push((
            format!("final[{}]", value_label(p.value)),
            format!(
                "residual={};phi={};phi_fbf={};runs={};failed={}",
                fmt_f64(p.mean_final_residual),
                fmt_f64(p.mean_final_phi),
                fmt_f64(p.mean_phi_fbf),
                p.runs,
                p.failed
            ),
        ));
    }
    let aggregate = out_dir.join("aggregate").join(format!("{}.csv", sweep.name()));
    write_aggregate(&aggregate, &header, &curves)?;
    Ok(SweepSummary {
        sweep: sweep.name().into(),
        points,
        aggregate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub tikhonov_final_residual: f64,
    pub hsdm_final_residual: f64,
    pub tikhonov_final_phi: f64,
    pub hsdm_final_phi: f64,
    pub runs: usize,
    pub failed: usize,
    pub aggregate: PathBuf,
}

/// The Tikhonov solver at the default point against HSDM-FBF on a shared
/// cumulative-iteration axis with equal budgets.
pub fn run_comparison(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ComparisonSummary> {
    cfg.check()?;
    let insts = instances(cfg)?;
    let hsdm = HsdmParams::new(cfg.hsdm_gamma0, cfg.hsdm_eta, cfg.budget)?;
    type Pair = (RunResult, RunResult);
    let results: Vec<Result<Pair>> = with_pool(cfg.jobs, || {
        insts
            .par_iter()
            .map(|inst| -> Result<Pair> {
                let ops = SplitOperators::new(&inst.game);
                let tik = run_tikhonov(&inst.game, &inst.spec, cfg, cfg.xi, cfg.zeta, cfg.alpha)?;
                let mut t_trace = tik.trace;
                run_header(&mut t_trace, inst, cfg);
                t_trace.set("method", "tikhonov-pfb");
                let opts = BaselineOptions {
                    stride: cfg.stride,
                    ..Default::default()
                };
                let h = hsdm_fbf_solve(&inst.game, &inst.spec, &hsdm, &opts)?;
                let mut h_trace = h.trace;
                run_header(&mut h_trace, inst, cfg);
                Ok((
                    RunResult {
                        seed: inst.seed,
                        final_residual: ops.kkt_residual(&tik.omega),
                        final_phi: inst.spec.value_unchecked(&tik.omega),
                        phi_fbf: 0.0,
                        cum_inner: tik.cum_inner,
                        trace: t_trace,
                    },
                    RunResult {
                        seed: inst.seed,
                        final_residual: h.final_residual,
                        final_phi: inst.spec.value_unchecked(&h.omega),
                        phi_fbf: 0.0,
                        cum_inner: h.iterations,
                        trace: h_trace,
                    },
                ))
            })
            .collect()
    })?;

    let dir = out_dir.join("runs").join("compare");
    let (mut tc, mut hc) = (MeanCurve::default(), MeanCurve::default());
    let mut ok = Vec::new();
    for (inst, r) in insts.iter().zip(&results) {
        match r {
            Ok((t, h)) => {
                write_trace(&dir.join("tikhonov").join(format!("{}.csv", inst.seed)), &t.trace)?;
                write_trace(&dir.join("hsdm").join(format!("{}.csv", inst.seed)), &h.trace)?;
                tc.add(&t.trace, 0.0);
                hc.add(&h.trace, 0.0);
                ok.push((t, h));
            }
            Err(e) => warn!("comparison, seed {}: {e}", inst.seed),
        }
    }
    let summary_vals = (
        mean(ok.iter().map(|(t, _)| t.final_residual)),
        mean(ok.iter().map(|(_, h)| h.final_residual)),
        mean(ok.iter().map(|(t, _)| t.final_phi)),
        mean(ok.iter().map(|(_, h)| h.final_phi)),
    );
    let mut header = config_header(cfg);
    header.push(("sweep".into(), "compare".into()));
    header.push(("xi".into(), fmt_f64(cfg.xi)));
    header.push(("zeta".into(), fmt_f64(cfg.zeta)));
    header.push(("alpha".into(), fmt_f64(cfg.alpha)));
    header.push(("hsdm_gamma0".into(), fmt_f64(cfg.hsdm_gamma0)));
    header.push(("hsdm_eta".into(), fmt_f64(cfg.hsdm_eta)));
    header.push((
        "final[tikhonov]".into(),
        format!("residual={};phi={}", fmt_f64(summary_vals.0), fmt_f64(summary_vals.2)),
    ));
    header.push((
        "final[hsdm]".into(),
        format!("residual={};phi={}", fmt_f64(summary_vals.1), fmt_f64(summary_vals.3)),
    ));
    let aggregate = out_dir.join("aggregate").join("compare.csv");
    write_aggregate(&aggregate, &header, &[("tikhonov".into(), tc), ("hsdm".into(), hc)])?;
    Ok(ComparisonSummary {
        tikhonov_final_residual: summary_vals.0,
        hsdm_final_residual: summary_vals.1,
        tikhonov_final_phi: summary_vals.2,
        hsdm_final_phi: summary_vals.3,
        runs: ok.len(),
        failed: results.len() - ok.len(),
        aggregate,
    })
}
