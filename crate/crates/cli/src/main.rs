use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gnesel::baselines::{fbf_solve, hsdm_fbf_solve, BaselineOptions, HsdmParams};
use gnesel::harness::{self, ExperimentConfig, SweepKind};
use gnesel::oracle::{self, Scenario, ScenarioSolverSettings};
use gnesel::tikhonov;
use gnesel::{
    validate_game, CheckStatus, Error, GameDocument, PreconditionerConfig, PreconditionerOptions, ScheduleParams,
    SolveOptions, SplitOperators, StepPolicy, StopRule,
};

#[derive(Parser)]
#[command(name = "gnesel", version, about = "Optimal equilibrium selection for monotone games with coupling constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check connectivity, monotonicity, strict feasibility and boundedness.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the Tikhonov-regularized pFB solver.
    Solve(SolveArgs),
    /// Run plain FBF equilibrium seeking.
    Fbf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run HSDM paired with FBF.
    Hsdm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        #[arg(long, default_value_t = 1e-3)]
        hsdm_gamma0: f64,
        #[arg(long, default_value_t = 0.6)]
        eta: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Parameter sweep over random instances.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// xi, alpha, zeta or all.
        #[arg(long, default_value = "all")]
        sweep: String,
    },
    /// Tikhonov solver against HSDM-FBF on random instances.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Compare the solver against the QP oracle on a random small instance.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// zero-pseudogradient or potential-game.
        #[arg(long, default_value = "zero-pseudogradient")]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random instance as a game document.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Experiment configuration for the instance shape.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Record elapsed seconds in traces (makes output non-reproducible).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    xi: f64,
    #[arg(long, default_value_t = 2.0)]
    zeta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-3)]
    gamma0: f64,
    /// Cap on cumulative inner iterations.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    max_outer: usize,
    #[arg(long, default_value_t = 1_000_000)]
    max_inner: usize,
    #[arg(long, default_value = "conservative")]
    stop_rule: String,
    /// midpoint, lower or upper.
    #[arg(long, default_value = "midpoint")]
    step_policy: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    stop_rule: Option<String>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> gnesel::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::read(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.instances {
            cfg.n_instances = v;
        }
        if let Some(v) = self.xi {
            cfg.xi = v;
        }
        if let Some(v) = self.zeta {
            cfg.zeta = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.gamma0 {
            cfg.gamma0 = v;
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = &self.stop_rule {
            cfg.stop_rule = v.parse()?;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

/// 1 for invalid input, 2 for solver failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DimensionMismatch { .. }
        | Error::InvalidGame(_)
        | Error::Validation(_)
        | Error::Io(_)
        | Error::Json(_) => 1,
        _ => 2,
    }
}

fn parse_policy(s: &str) -> gnesel::Result<StepPolicy> {
    match s {
        "midpoint" => Ok(StepPolicy::Midpoint),
        "lower" => Ok(StepPolicy::Lower),
        "upper" => Ok(StepPolicy::Upper),
        other => Err(Error::InvalidParameter(format!("unknown step policy {other:?}"))),
    }
}

fn write_trace(dir: &Path, name: &str, trace: &gnesel::SolverTrace) -> gnesel::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    trace.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    Ok(path)
}

fn validate(config: &Path) -> gnesel::Result<()> {
    let (game, _) = GameDocument::read(config)?.into_parts()?;
    let report = validate_game(&game);
    for c in &report.checks {
        let tag = match c.status {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Unverified => "unverified",
        };
        println!("{}: {tag} ({})", c.name, c.detail);
    }
    report.into_result().map(|_| ())
}

fn solve(a: &SolveArgs) -> gnesel::Result<()> {
    let (game, spec) = GameDocument::read(&a.config)?.into_parts()?;
    let params = ScheduleParams {
        gamma0: a.gamma0,
        xi: a.xi,
        zeta: a.zeta,
        max_outer: a.max_outer,
        max_inner: a.max_inner,
        ..Default::default()
    };
    let popts = PreconditionerOptions {
        policy: parse_policy(&a.step_policy)?,
        ..Default::default()
    };
    let cfg = PreconditionerConfig::build(&game, &spec, a.alpha, a.gamma0, &popts)?;
    let opts = SolveOptions {
        stop_rule: a.stop_rule.parse::<StopRule>()?,
        stride: a.out.stride,
        budget: a.budget,
        record_wall_clock: a.out.wall_clock,
        ..Default::default()
    };
    let out = tikhonov::solve(&game, &spec, &params, &cfg, &opts)?;
    let path = write_trace(&a.out.out, "solve.csv", &out.trace)?;
    let residual = SplitOperators::new(&game).kkt_residual(&out.omega);
    println!(
        "residual={residual:.6e} phi={:.6e} outer={} inner={} trace={}",
        spec.value_unchecked(&out.omega),
        out.outer_iterations,
        out.cum_inner,
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> gnesel::Result<()> {
    match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Solve(a) => solve(&a),
        Command::Fbf {
            config,
            tol,
            max_iter,
            out,
        } => {
            let (game, spec) = GameDocument::read(&config)?.into_parts()?;
            let opts = BaselineOptions {
                stride: out.stride,
                record_wall_clock: out.wall_clock,
                ..Default::default()
            };
            let r = fbf_solve(&game, Some(&spec), tol, max_iter, &opts)?;
            let path = write_trace(&out.out, "fbf.csv", &r.trace)?;
            println!(
                "residual={:.6e} phi={:.6e} iterations={} converged={} trace={}",
                r.final_residual,
                spec.value_unchecked(&r.omega),
                r.iterations,
                r.converged,
                path.display()
            );
            Ok(())
        }
        Command::Hsdm {
            config,
            budget,
            hsdm_gamma0,
            eta,
            out,
        } => {
            let (game, spec) = GameDocument::read(&config)?.into_parts()?;
            let params = HsdmParams::new(hsdm_gamma0, eta, budget)?;
            let opts = BaselineOptions {
                stride: out.stride,
                record_wall_clock: out.wall_clock,
                ..Default::default()
            };
            let r = hsdm_fbf_solve(&game, &spec, &params, &opts)?;
            let path = write_trace(&out.out, "hsdm.csv", &r.trace)?;
            println!(
                "residual={:.6e} phi={:.6e} iterations={} trace={}",
                r.final_residual,
                spec.value_unchecked(&r.omega),
                r.iterations,
                path.display()
            );
            Ok(())
        }
        Command::Sweep { exp, sweep } => {
            let cfg = exp.resolve()?;
            let kinds = if sweep == "all" {
                vec![SweepKind::Xi, SweepKind::Alpha, SweepKind::Zeta]
            } else {
                vec![sweep.parse()?]
            };
            for kind in kinds {
                let s = harness::run_sweep(&cfg, kind, &exp.out)?;
                let finals: Vec<String> = s
                    .points
                    .iter()
                    .map(|p| format!("{}:{:.4e}/{:.4e}", p.value, p.mean_final_residual, p.mean_final_phi))
                    .collect();
                let failed: usize = s.points.iter().map(|p| p.failed).sum();
                println!(
                    "sweep={} residual/phi={} failed={failed} aggregate={}",
                    s.sweep,
                    finals.join(","),
                    s.aggregate.display()
                );
            }
            Ok(())
        }
        Command::Compare { exp } => {
            let cfg = exp.resolve()?;
            let s = harness::run_comparison(&cfg, &exp.out)?;
            println!(
                "tikhonov_residual={:.6e} hsdm_residual={:.6e} tikhonov_phi={:.6e} hsdm_phi={:.6e} failed={} aggregate={}",
                s.tikhonov_final_residual,
                s.hsdm_final_residual,
                s.tikhonov_final_phi,
                s.hsdm_final_phi,
                s.failed,
                s.aggregate.display()
            );
            Ok(())
        }
        Command::OracleCheck { seed, scenario, out } => {
            let kind: Scenario = scenario.parse()?;
            let (report, _) = oracle::run_scenario(kind, seed, &ScenarioSolverSettings::for_scenario(kind))?;
            let json = serde_json::to_string(&report)?;
            if let Some(path) = out {
                std::fs::write(path, &json)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::Generate { seed, config, out } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::read(p)?,
                None => ExperimentConfig::default(),
            };
            let (game, spec) = harness::generate_instance(seed, &cfg)?;
            GameDocument::from_parts(&game, &spec)?.write(&out)?;
            println!("instance_hash={} out={}", harness::instance_hash(&game, &spec)?, out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
