use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use logts::design::{lower_bound_samples, optimal_allocation, reciprocal_or_infinity};
use logts::experiment::{run_experiment, run_sweep, write_csv, Algo, ExperimentConfig, InstanceSource, Summary};
use logts::verify::{run_all, run_suite, Perturbation, SuiteReport, SUITES};
use logts::{generate, BCheckMode, Family, FwConfig, GeneratorConfig, Instance, LogTsError, ProblemSpec};

mod plot;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "logts", version, about = "Pure exploration experiments for logistic bandits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials of one or both algorithms and aggregate them.
    Run(RunArgs),
    /// Print the optimal allocation and characteristic time of an instance.
    Design(DesignArgs),
    /// Run the oracle suites.
    Verify(VerifyArgs),
    /// Emit a generated instance as JSON.
    Gen(InstanceArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    HardBai,
    HardTbp,
    SphereBai,
    SphereTbp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BCheckArg {
    Exact,
    Empirical,
}

#[derive(Args, Clone, Debug)]
struct InstanceArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "family")]
    instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Number of arms (sphere families).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Dimension; a comma list or a range `a..b` runs a sweep.
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Threshold of sphere TBP instances.
    #[arg(long)]
    rho: Option<f64>,
    /// Replaces the problem by top-m identification.
    #[arg(long)]
    m: Option<usize>,
    /// Instance seed for sphere families and master seed for trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Radius S of the parameter ball.
    #[arg(long = "S")]
    radius: Option<f64>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Experiment configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    /// `logts`, `random` or `both`.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long = "lambda-c")]
    lambda_c: Option<f64>,
    #[arg(long = "b-check", value_enum)]
    b_check: Option<BCheckArg>,
    #[arg(long = "fw-iters")]
    fw_iters: Option<usize>,
    #[arg(long = "lazy-stride")]
    lazy_stride: Option<u64>,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
    /// SVG plot of a dimension sweep.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long = "fw-iters")]
    fw_iters: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite to run; all suites when omitted.
    suite: Option<String>,
    #[arg(long)]
    json: bool,
    /// Relative perturbation of the closed forms (mutation check).
    #[arg(long, hide = true)]
    perturb: Option<f64>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<LogTsError> for Failure {
    fn from(e: LogTsError) -> Self {
        match e {
            LogTsError::RunPanicked(_)
            | LogTsError::Io(_)
            | LogTsError::Csv(_)
            | LogTsError::NotPositiveDefinite
            | LogTsError::EmptyHistory => Failure::Runtime(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

fn runtime(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Design(a) => cmd_design(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || usage(format!("invalid dimension list {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| bad())?;
        let hi: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect()
}

impl InstanceArgs {
    fn dims(&self) -> Result<Vec<usize>, Failure> {
        match &self.d {
            Some(s) => parse_dims(s),
            None => Ok(vec![2]),
        }
    }

    /// Generator configuration from the family flags, at dimension `d`.
    fn generator(&self, d: usize) -> Result<GeneratorConfig<f64>, Failure> {
        let family = self
            .family
            .ok_or_else(|| usage("either --instance or --family is required"))?;
        let alpha = self.alpha.unwrap_or(0.3);
        let seed = self.seed.unwrap_or(0);
        let mut g = match family {
            FamilyArg::HardBai => GeneratorConfig::hard_bai(d, alpha),
            FamilyArg::HardTbp => GeneratorConfig::hard_tbp(d, alpha, self.p.unwrap_or(0.7)),
            FamilyArg::SphereBai => GeneratorConfig::sphere_bai(self.k.unwrap_or(100), seed),
            FamilyArg::SphereTbp => GeneratorConfig::sphere_tbp(self.k.unwrap_or(20), seed),
        };
        match &mut g.family {
            Family::SphereBai { d: gd, .. } => *gd = d,
            Family::SphereTbp { d: gd, rho, .. } => {
                *gd = d;
                if let Some(r) = self.rho {
                    *rho = r;
                }
            }
            _ => {}
        }
        g.radius = self.radius;
        g.validate()?;
        Ok(g)
    }

    /// Loads or generates a single instance and applies `--m`.
    fn instance(&self) -> Result<Instance<f64>, Failure> {
        let inst = match &self.instance {
            Some(p) => Instance::load(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => {
                let dims = self.dims()?;
                if dims.len() != 1 {
                    return Err(usage("this command takes a single dimension"));
                }
                generate(&self.generator(dims[0])?)?
            }
        };
        let inst = match (self.instance.is_some(), self.radius) {
            (true, Some(s)) => Instance::new(
                inst.label(),
                inst.arms().clone(),
                inst.theta_star().clone(),
                s,
                inst.spec().clone(),
            )?,
            _ => inst,
        };
        match self.m {
            Some(m) => Ok(Instance::new(
                format!("{}_top{m}", inst.label()),
                inst.arms().clone(),
                inst.theta_star().clone(),
                inst.radius(),
                ProblemSpec::Topm { m },
            )?),
            None => Ok(inst),
        }
    }
}

fn parse_algos(s: &str) -> Result<Vec<Algo>, Failure> {
    if s == "both" || s == "all" {
        return Ok(Algo::ALL.to_vec());
    }
    s.split(',')
        .map(|a| a.trim().parse::<Algo>().map_err(Failure::from))
        .collect()
}

fn build_config(a: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let i = &a.inst;
    if let Some(p) = &i.instance {
        cfg.instance = InstanceSource::File(p.clone());
    } else if i.family.is_some() {
        cfg.instance = InstanceSource::Generator(i.generator(i.dims()?[0])?);
    } else if a.config.is_none() {
        return Err(usage("either --instance, --family or --config is required"));
    }
    if i.m.is_some() {
        return Err(usage(
            "--m applies to design and gen; write a top-m instance file for run",
        ));
    }
    if let Some(s) = i.seed {
        cfg.master_seed = s;
    }
    if i.instance.is_some() {
        cfg.radius = i.radius.or(cfg.radius);
    }
    macro_rules! set {
        ($field:ident, $value:expr) => {
            if let Some(v) = $value {
                cfg.$field = v;
            }
        };
    }
    set!(delta, a.delta);
    set!(trials, a.trials);
    set!(budget, a.budget);
    set!(fw_iters, a.fw_iters);
    set!(lazy_stride, a.lazy_stride);
    set!(parallel, a.parallel);
    if let Some(s) = &a.algo {
        cfg.algos = parse_algos(s)?;
    }
    if a.lambda_c.is_some() {
        cfg.lambda_c = a.lambda_c;
    }
    if let Some(b) = a.b_check {
        cfg.b_check = match b {
            BCheckArg::Exact => BCheckMode::ExactKappa0,
            BCheckArg::Empirical => BCheckMode::EmpiricalHessian,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(runtime)?;
    }
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn print_summary(s: &Summary) {
    println!(
        "{} ({}, K={}, d={}, delta={}): T*^-1 = {:.6e}, lower bound = {:.1}",
        s.instance, s.family, s.k, s.d, s.delta, s.t_star_inv, s.lower_bound_samples
    );
    for (algo, a) in &s.algos {
        println!(
            "  {:<6} tau = {:.2}k ({:.2}k) over {} runs, errors {} ({:.3}), budget stops {}",
            algo.name(),
            a.mean_tau_k,
            a.std_tau_k,
            a.runs,
            a.errors,
            a.error_rate,
            a.budget_stops
        );
    }
}

fn cmd_run(a: RunArgs) -> Result<ExitCode, Failure> {
    let cfg = build_config(&a)?;
    let dims = a.inst.dims()?;
    let sweep = a.inst.d.is_some() && dims.len() > 1;
    if a.plot.is_some() && !sweep {
        return Err(usage("--plot needs a dimension sweep (--d with several values)"));
    }
    let (rows, summaries, points) = if sweep {
        if a.inst.family.is_none() {
            return Err(usage("a dimension sweep needs --family"));
        }
        let (outputs, points) = run_sweep(&cfg, &dims)?;
        let rows: Vec<_> = outputs.iter().flat_map(|o| o.rows.iter().cloned()).collect();
        let summaries = outputs.into_iter().map(|o| o.summary).collect::<Vec<_>>();
        (rows, summaries, Some(points))
    } else {
        let out = run_experiment(&cfg)?;
        (out.rows, vec![out.summary], None)
    };

    if let Some(dir) = &a.inst.out {
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf)?;
        write_file(&dir.join("results.csv"), &buf)?;
        let summary_json = if sweep {
            json!({ "summaries": summaries, "sweep": points })
        } else {
            serde_json::to_value(&summaries[0]).map_err(|e| runtime(e.into()))?
        };
        let text = serde_json::to_string_pretty(&summary_json).map_err(|e| runtime(e.into()))?;
        write_file(&dir.join("summary.json"), (text + "\n").as_bytes())?;
    }
    if let (Some(path), Some(points)) = (&a.plot, &points) {
        write_file(path, plot::sweep_svg(points, &summaries[0].family).as_bytes())?;
    }
    if a.json {
        let v = if sweep {
            json!({ "summaries": summaries, "sweep": points })
        } else {
            serde_json::to_value(&summaries[0]).map_err(|e| runtime(e.into()))?
        };
        println!("{}", serde_json::to_string_pretty(&v).map_err(|e| runtime(e.into()))?);
    } else {
        for s in &summaries {
            print_summary(s);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_design(a: DesignArgs) -> Result<ExitCode, Failure> {
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(usage(format!("delta must lie in (0,1), got {}", a.delta)));
    }
    let inst = a.inst.instance()?;
    let fw = FwConfig {
        max_iters: a.fw_iters.unwrap_or(FwConfig::<f64>::default().max_iters),
        ..FwConfig::default()
    };
    let r = optimal_allocation(inst.spec(), inst.arms(), inst.theta_star(), &fw)?;
    let t_star = reciprocal_or_infinity(r.value);
    let lower = lower_bound_samples(a.delta, t_star);
    if a.json {
        let v = json!({
            "instance": inst.label(),
            "t_star_inv": r.value,
            "t_star": t_star,
            "w_star": r.allocation.to_vec(),
            "active_arm": r.active_arm,
            "iterations": r.iterations,
            "delta": a.delta,
            "lower_bound_samples": lower,
        });
        println!("{}", serde_json::to_string_pretty(&v).map_err(|e| runtime(e.into()))?);
    } else {
        println!("instance: {}", inst.label());
        println!("T*^-1 = {:.12e}", r.value);
        println!("T* = {:.6e}", t_star);
        let w: Vec<String> = r.allocation.iter().map(|v| format!("{v:.6}")).collect();
        println!("w* = [{}]", w.join(", "));
        println!("active arm = {}", r.active_arm);
        println!("log(1/(2.4 delta)) T* = {:.6e} (delta = {})", lower, a.delta);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_report(r: &SuiteReport) {
    let tag = if r.passed { "PASS" } else { "FAIL" };
    println!(
        "{tag} {}: {} cases, max error {:.3e} (tolerance {:.1e})",
        r.name, r.cases, r.max_error, r.tolerance
    );
    for f in &r.failures {
        println!("    {f}");
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, Failure> {
    let perturb = Perturbation {
        rel: a.perturb.unwrap_or(0.0),
    };
    let reports = match &a.suite {
        Some(name) => vec![run_suite(name, perturb)
            .ok_or_else(|| usage(format!("unknown suite {name:?}; available: {}", SUITES.join(", "))))??],
        None => run_all(perturb)?,
    };
    if a.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&reports).map_err(|e| runtime(e.into()))?
        );
    } else {
        reports.iter().for_each(print_report);
    }
    Ok(if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_gen(a: InstanceArgs) -> Result<ExitCode, Failure> {
    if a.instance.is_some() {
        return Err(usage("gen takes family flags, not --instance"));
    }
    let inst = a.instance()?;
    let text = inst.to_json()? + "\n";
    match &a.out {
        Some(p) => write_file(p, text.as_bytes())?,
        None => {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| runtime(e.into()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
