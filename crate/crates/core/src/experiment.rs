//! Trial execution and aggregation: per-trial seeds, CSV rows and summaries.
//!
//! Experiments run in `f64`. Trial `i` of algorithm `j` draws its rewards from
//! a ChaCha8 stream seeded with [`derive_seed`]`(master, i, j)`, so results do
//! not depend on how trials are scheduled across threads.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::BCheckMode;
use crate::design::{lower_bound_samples, optimal_allocation, reciprocal_or_infinity, FwConfig};
use crate::envsim::Instance;
use crate::error::{LogTsError, Result};
use crate::instances::{generate, Family, GeneratorConfig};
use crate::sampler::{run_log_ts, run_random_baseline, RunConfig, RunResult, DEFAULT_BUDGET};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Logts,
    Random,
}

impl Algo {
    pub const ALL: [Algo; 2] = [Algo::Logts, Algo::Random];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Logts => "logts",
            Algo::Random => "random",
        }
    }

    fn index(self) -> u64 {
        match self {
            Algo::Logts => 0,
            Algo::Random => 1,
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = LogTsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logts" => Ok(Algo::Logts),
            "random" => Ok(Algo::Random),
            other => Err(LogTsError::config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    File(PathBuf),
    Generator(GeneratorConfig<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSource,
    pub algos: Vec<Algo>,
    pub delta: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub budget: u64,
    /// Coefficient `c` of `λ(t) = c·log t`; `None` keeps `c = d`.
    pub lambda_c: Option<f64>,
    pub b_check: BCheckMode,
    /// Overrides the instance radius S.
    pub radius: Option<f64>,
    pub fw_iters: usize,
    pub lazy_stride: u64,
    /// Worker threads; 0 uses every available core.
    pub parallel: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSource::Generator(GeneratorConfig::hard_bai(2, 0.3)),
            algos: Algo::ALL.to_vec(),
            delta: 0.1,
            trials: 10,
            master_seed: 0,
            budget: DEFAULT_BUDGET,
            lambda_c: None,
            b_check: BCheckMode::EmpiricalHessian,
            radius: None,
            fw_iters: 200,
            lazy_stride: 1,
            parallel: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(LogTsError::config("trials must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(LogTsError::config(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if self.algos.is_empty() {
            return Err(LogTsError::config("at least one algorithm is required"));
        }
        if self.budget == 0 || self.fw_iters == 0 || self.lazy_stride == 0 {
            return Err(LogTsError::config(
                "budget, FW iterations and lazy stride must be positive",
            ));
        }
        if let Some(c) = self.lambda_c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(LogTsError::config("lambda coefficient must be positive"));
            }
        }
        match &self.instance {
            InstanceSource::File(p) if !p.exists() => Err(LogTsError::config(format!(
                "instance file {} does not exist",
                p.display()
            ))),
            InstanceSource::File(_) => Ok(()),
            InstanceSource::Generator(g) => g.validate(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads or generates the instance, applying the radius override.
    pub fn load_instance(&self) -> Result<Instance<f64>> {
        let inst = match &self.instance {
            InstanceSource::File(p) => Instance::load(p)?,
            InstanceSource::Generator(g) => generate(g)?,
        };
        match self.radius {
            Some(s) => Instance::new(
                inst.label(),
                inst.arms().clone(),
                inst.theta_star().clone(),
                s,
                inst.spec().clone(),
            ),
            None => Ok(inst),
        }
    }

    pub fn fw_config(&self) -> FwConfig<f64> {
        FwConfig {
            max_iters: self.fw_iters,
            lazy_stride: self.lazy_stride,
            ..FwConfig::default()
        }
    }

    pub fn run_config(&self, inst: &Instance<f64>) -> Result<RunConfig<f64>> {
        let mut cfg = RunConfig::for_instance(inst, self.delta)?;
        cfg.budget = self.budget;
        cfg.fw = self.fw_config();
        cfg.threshold.b_check_mode = self.b_check;
        if let Some(c) = self.lambda_c {
            cfg.threshold.lambda_coef = c;
        }
        Ok(cfg)
    }

    fn family_name(&self, inst: &Instance<f64>) -> String {
        match &self.instance {
            InstanceSource::Generator(g) => match g.family {
                Family::HardBai { .. } => "hard_bai",
                Family::HardTbp { .. } => "hard_tbp",
                Family::SphereBai { .. } => "sphere_bai",
                Family::SphereTbp { .. } => "sphere_tbp",
            }
            .to_string(),
            InstanceSource::File(_) => inst.label().to_string(),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(master ⊕ splitmix64(trial)) ⊕ (algo + 1))`.
pub fn derive_seed(master: u64, trial: usize, algo: Algo) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(trial as u64)) ^ (algo.index() + 1))
}

/// One CSV row; the field order is the column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub algo: Algo,
    pub family: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub delta: f64,
    pub seed: u64,
    pub tau: u64,
    pub correct: bool,
    pub stopped_by_budget: bool,
    pub t_star_inv: f64,
    pub lower_bound_samples: f64,
}

pub const CSV_HEADER: &str =
    "trial,algo,family,K,d,delta,seed,tau,correct,stopped_by_budget,t_star_inv,lower_bound_samples";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgoSummary {
    pub runs: usize,
    /// Mean stopping time in thousands of samples.
    pub mean_tau_k: f64,
    /// Sample standard deviation in thousands (0 for a single run).
    pub std_tau_k: f64,
    pub mean_log_tau: f64,
    pub errors: usize,
    pub error_rate: f64,
    pub budget_stops: usize,
    /// Mean τ is at least the lower bound.
    pub lower_bound_respected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub instance: String,
    pub family: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub delta: f64,
    pub trials: usize,
    pub t_star_inv: f64,
    pub lower_bound_samples: f64,
    pub algos: BTreeMap<Algo, AlgoSummary>,
    pub runtime_s: f64,
}

impl Summary {
    pub fn algo(&self, a: Algo) -> Option<&AlgoSummary> {
        self.algos.get(&a)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates rows of one instance; `runtime_s` is recorded as given.
pub fn summarize(rows: &[TrialRow], instance: &str, runtime_s: f64) -> Result<Summary> {
    let first = rows.first().ok_or_else(|| LogTsError::config("no rows to summarize"))?;
    let mut algos = BTreeMap::new();
    let mut trials = 0;
    for a in Algo::ALL {
        let sel: Vec<&TrialRow> = rows.iter().filter(|r| r.algo == a).collect();
        if sel.is_empty() {
            continue;
        }
        trials = trials.max(sel.len());
        let taus: Vec<f64> = sel.iter().map(|r| r.tau as f64).collect();
        let (mean, std) = mean_std(&taus);
        let logs: Vec<f64> = taus.iter().map(|t| t.max(1.0).ln()).collect();
        let errors = sel.iter().filter(|r| !r.correct).count();
        algos.insert(
            a,
            AlgoSummary {
                runs: sel.len(),
                mean_tau_k: mean / 1000.0,
                std_tau_k: std / 1000.0,
                mean_log_tau: mean_std(&logs).0,
                errors,
                error_rate: errors as f64 / sel.len() as f64,
                budget_stops: sel.iter().filter(|r| r.stopped_by_budget).count(),
                lower_bound_respected: mean >= first.lower_bound_samples,
            },
        );
    }
    Ok(Summary {
        instance: instance.to_string(),
        family: first.family.clone(),
        k: first.k,
        d: first.d,
        delta: first.delta,
        trials,
        t_star_inv: first.t_star_inv,
        lower_bound_samples: first.lower_bound_samples,
        algos,
        runtime_s,
    })
}

fn run_one(inst: &Instance<f64>, cfg: &RunConfig<f64>, algo: Algo, seed: u64) -> Result<RunResult<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match catch_unwind(AssertUnwindSafe(|| match algo {
        Algo::Logts => run_log_ts(inst, cfg, &mut rng),
        Algo::Random => run_random_baseline(inst, cfg, &mut rng),
    })) {
        Ok(r) => r,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(LogTsError::RunPanicked(msg))
        }
    }
}

/// Runs every (trial, algorithm) pair and returns rows sorted by (trial, algo).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let inst = cfg.load_instance()?;
    let run_cfg = cfg.run_config(&inst)?;
    run_cfg.validate(&inst)?;
    let design = optimal_allocation(inst.spec(), inst.arms(), inst.theta_star(), &FwConfig::default())?;
    let t_star_inv = design.value;
    let lower = lower_bound_samples(cfg.delta, reciprocal_or_infinity(t_star_inv));
    let family = cfg.family_name(&inst);

    let jobs: Vec<(usize, Algo)> = (0..cfg.trials)
        .flat_map(|i| cfg.algos.iter().map(move |a| (i, *a)))
        .collect();
    let exec = |&(trial, algo): &(usize, Algo)| -> Result<TrialRow> {
        let seed = derive_seed(cfg.master_seed, trial, algo);
        let r = run_one(&inst, &run_cfg, algo, seed)?;
        Ok(TrialRow {
            trial,
            algo,
            family: family.clone(),
            k: inst.num_arms(),
            d: inst.dim(),
            delta: cfg.delta,
            seed,
            tau: r.tau,
            correct: r.correct,
            stopped_by_budget: r.stopped_by_budget,
            t_star_inv,
            lower_bound_samples: lower,
        })
    };
    let mut rows = if cfg.parallel == 1 {
        jobs.iter().map(exec).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallel)
            .build()
            .map_err(|e| LogTsError::config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(exec).collect::<Result<Vec<_>>>())?
    };
    rows.sort_by_key(|r| (r.trial, r.algo));
    let summary = summarize(&rows, inst.label(), start.elapsed().as_secs_f64())?;
    Ok(ExperimentOutput { rows, summary })
}

pub fn write_csv<W: Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(LogTsError::config(format!(
            "unexpected CSV header {:?}",
            header.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(LogTsError::from)).collect()
}

/// Mean log τ of one algorithm at one dimension of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d: usize,
    pub algo: Algo,
    pub mean_log_tau: f64,
    pub mean_tau_k: f64,
    pub errors: usize,
    pub budget_stops: usize,
}

/// Repeats a hard-family experiment for each dimension in `dims`.
pub fn run_sweep(base: &ExperimentConfig, dims: &[usize]) -> Result<(Vec<ExperimentOutput>, Vec<SweepPoint>)> {
    let InstanceSource::Generator(g) = &base.instance else {
        return Err(LogTsError::config("dimension sweeps need a generated instance"));
    };
    let mut outputs = Vec::new();
    let mut points = Vec::new();
    for &d in dims {
        let mut gen = g.clone();
        match &mut gen.family {
            Family::HardBai { d: gd, .. } | Family::HardTbp { d: gd, .. } => *gd = d,
            Family::SphereBai { d: gd, .. } | Family::SphereTbp { d: gd, .. } => *gd = d,
        }
        let cfg = ExperimentConfig {
            instance: InstanceSource::Generator(gen),
            ..base.clone()
        };
        let out = run_experiment(&cfg)?;
        for (algo, s) in &out.summary.algos {
            points.push(SweepPoint {
                d,
                algo: *algo,
                mean_log_tau: s.mean_log_tau,
                mean_tau_k: s.mean_tau_k,
                errors: s.errors,
                budget_stops: s.budget_stops,
            });
        }
        outputs.push(out);
    }
    Ok((outputs, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        ExperimentConfig {
            instance: InstanceSource::Generator(GeneratorConfig {
                norm_theta: 2.0,
                ..GeneratorConfig::hard_bai(2, 0.6)
            }),
            trials: 2,
            master_seed: 11,
            delta: 0.1,
            fw_iters: 100,
            // plumbing only: most runs end at the budget
            budget: 20_000,
            lazy_stride: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..100 {
            for a in Algo::ALL {
                assert!(seen.insert(derive_seed(5, i, a)));
            }
        }
        assert_eq!(derive_seed(5, 3, Algo::Random), derive_seed(5, 3, Algo::Random));
        assert_ne!(derive_seed(5, 3, Algo::Random), derive_seed(6, 3, Algo::Random));
        // reference values of the splitmix64 finalizer
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(1), 0x910A_2DEC_8902_5CC1);
    }

    #[test]
    fn config_validation() {
        assert!(quick().validate().is_ok());
        let bad = ExperimentConfig { trials: 0, ..quick() };
        assert!(matches!(bad.validate(), Err(LogTsError::InvalidConfig(_))));
        let bad = ExperimentConfig { delta: 1.0, ..quick() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            instance: InstanceSource::File("/nonexistent/instance.json".into()),
            ..quick()
        };
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"trials": 3, "bogus": 1}"#).is_err());
        let parsed = ExperimentConfig::from_json(r#"{"trials": 3, "algos": ["logts"]}"#).unwrap();
        assert_eq!(parsed.trials, 3);
        assert_eq!(parsed.algos, vec![Algo::Logts]);
    }

    #[test]
    fn summary_recomputes_from_rows() {
        let row = |trial, algo, tau, correct| TrialRow {
            trial,
            algo,
            family: "f".into(),
            k: 3,
            d: 2,
            delta: 0.1,
            seed: 0,
            tau,
            correct,
            stopped_by_budget: false,
            t_star_inv: 0.01,
            lower_bound_samples: 100.0,
        };
        let rows = vec![
            row(0, Algo::Logts, 1000, true),
            row(1, Algo::Logts, 3000, false),
            row(0, Algo::Random, 5000, true),
        ];
        let s = summarize(&rows, "x", 0.0).unwrap();
        let l = s.algo(Algo::Logts).unwrap();
        assert_eq!(l.mean_tau_k, 2.0);
        assert!((l.std_tau_k - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(l.error_rate, 0.5);
        assert!(l.lower_bound_respected);
        assert_eq!(s.algo(Algo::Random).unwrap().std_tau_k, 0.0);
        assert_eq!(s.trials, 2);
    }

    #[test]
    fn parallel_and_serial_rows_agree() {
        let serial = run_experiment(&quick()).unwrap();
        let parallel = run_experiment(&ExperimentConfig { parallel: 2, ..quick() }).unwrap();
        assert_eq!(serial.rows, parallel.rows);
        assert_eq!(serial.rows.len(), 4);
        let mut buf = Vec::new();
        write_csv(&serial.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), serial.rows);
    }
}
