//! Experiment runner: a declarative TOML config names a catalog, a workload,
//! a churn model and a list of policy arms; every arm is simulated once per
//! seed and the results are written as plain-text tables.
//!
//! For a given seed all arms see the same workload and, for grid arms, the same
//! availability schedules. Random streams are derived from the seed with
//! [`derive_seed`], so a workload produced by `gen-workload --seed s` is
//! identical to the one generated inside an experiment run with seed `s`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AvailabilitySchedule, GrvParams, JobRecord, ResourceRecord, SimTime, WeightVector, SECONDS_PER_HOUR,
};
use crate::metrics::{aggregate, compute_report, ComparisonTable, MetricsError, MetricsReport};
use crate::schedulers::{
    ClusterPolicy, ClusterQueue, EstimateModel, FcfsPolicy, GrvPolicy, PolicyKind, SchedError, SchedulerPolicy,
};
use crate::seed::{derive_seed, stream};
use crate::simulator::{
    apply_schedules, generate_churn, run_observed, ChurnModel, ResultParseError, ScheduleMode, SimConfig, SimError,
    SimResult,
};
use crate::traces::{
    check_classes, generate_catalog, generate_workload, load_catalog, load_workload, CatalogSpec, TraceError,
    WorkloadSpec,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("arm {arm}, seed {seed}: {source}")]
    Sim { arm: String, seed: u64, source: SimError },
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no results found in {0}")]
    NoResults(PathBuf),
    #[error("{path}: {source}")]
    ResultParse { path: PathBuf, source: ResultParseError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_owned(), source }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub horizon_h: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Run scheduling passes on a fixed period instead of after every event.
    #[serde(default)]
    pub sweep_interval_h: Option<f64>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Exactly one of `path` or `generate`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSource {
    pub path: Option<PathBuf>,
    pub generate: Option<CatalogSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSource {
    pub path: Option<PathBuf>,
    pub generate: Option<WorkloadSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueConfig {
    pub name: String,
    pub runtime_limit_h: f64,
    pub priority: i64,
}

fn default_cluster_class() -> String {
    "CLUSTER".into()
}

/// Dedicated homogeneous pool used by cluster arms instead of the grid catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: usize,
    pub nflops: f64,
    pub ncores: u32,
    #[serde(default = "default_cluster_class")]
    pub class: String,
    #[serde(default)]
    pub estimate: EstimateModel,
    pub queues: Vec<QueueConfig>,
}

impl ClusterConfig {
    pub fn pool(&self, horizon: SimTime) -> Vec<ResourceRecord> {
        let width = self.nodes.saturating_sub(1).to_string().len().max(4);
        (0..self.nodes)
            .map(|i| {
                ResourceRecord::new(format!("node-{i:0width$}"), &self.class, self.nflops, self.ncores)
                    .dedicated(true)
                    .with_availability(AvailabilitySchedule::always(horizon))
            })
            .collect()
    }

    pub fn queues(&self) -> Vec<ClusterQueue> {
        self.queues
            .iter()
            .map(|q| ClusterQueue::new(&q.name, q.runtime_limit_h * SECONDS_PER_HOUR, q.priority))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub label: String,
    pub policy: PolicyKind,
    #[serde(default)]
    pub weights: Option<WeightVector>,
    #[serde(default)]
    pub grv: Option<GrvParams>,
    #[serde(default)]
    pub cluster: Option<ClusterConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub catalog: CatalogSource,
    pub workload: WorkloadSource,
    #[serde(default)]
    pub churn: ChurnModel,
    #[serde(default, rename = "arm")]
    pub arms: Vec<ArmConfig>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ExperimentError> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|source| ExperimentError::Toml { path: PathBuf::from("<config>"), source })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|source| ExperimentError::Toml { path: path.to_owned(), source })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn horizon(&self) -> SimTime {
        self.experiment.horizon_h * SECONDS_PER_HOUR
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let e = &self.experiment;
        if !(e.horizon_h > 0.0 && e.horizon_h.is_finite()) {
            return Err(config_err("experiment.horizon_h must be positive"));
        }
        if e.seeds.is_empty() {
            return Err(config_err("experiment.seeds must list at least one seed"));
        }
        if matches!(e.sweep_interval_h, Some(i) if !(i > 0.0)) {
            return Err(config_err("experiment.sweep_interval_h must be positive"));
        }
        if self.arms.is_empty() {
            return Err(config_err("at least one [[arm]] is required"));
        }
        if self.catalog.path.is_some() == self.catalog.generate.is_some() {
            return Err(config_err("[catalog] needs exactly one of path or generate"));
        }
        if self.workload.path.is_some() == self.workload.generate.is_some() {
            return Err(config_err("[workload] needs exactly one of path or generate"));
        }
        if let Some(spec) = &self.workload.generate {
            spec.validate().map_err(config_err)?;
        }
        self.churn.validate().map_err(config_err)?;
        let mut labels = Vec::new();
        for arm in &self.arms {
            if arm.label.is_empty() || !arm.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(config_err(format!("arm label {:?} must be alphanumeric, '-' or '_'", arm.label)));
            }
            if labels.contains(&&arm.label) {
                return Err(config_err(format!("duplicate arm label {}", arm.label)));
            }
            labels.push(&arm.label);
            if let Some(w) = &arm.weights {
                w.validate().map_err(|e| config_err(format!("arm {}: {e}", arm.label)))?;
            }
            if let Some(p) = &arm.grv {
                p.validate().map_err(|e| config_err(format!("arm {}: {e}", arm.label)))?;
            }
            match (arm.policy, &arm.cluster) {
                (PolicyKind::Cluster, None) => {
                    return Err(config_err(format!("arm {}: cluster policy needs [arm.cluster]", arm.label)))
                }
                (PolicyKind::Cluster, Some(c)) => {
                    if c.nodes == 0 || !(c.nflops > 0.0) || c.ncores == 0 {
                        return Err(config_err(format!("arm {}: cluster pool must be non-empty", arm.label)));
                    }
                    ClusterPolicy::new(c.queues(), c.nflops * f64::from(c.ncores), c.estimate, 0)?;
                }
                (_, Some(_)) => {
                    return Err(config_err(format!("arm {}: [arm.cluster] only applies to cluster arms", arm.label)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn catalog_for(&self, seed: u64) -> Result<Vec<ResourceRecord>, ExperimentError> {
        match (&self.catalog.path, &self.catalog.generate) {
            (Some(p), _) => Ok(load_catalog(self.resolve(p))?),
            (None, Some(spec)) => Ok(generate_catalog(spec, derive_seed(seed, stream::CATALOG))?),
            (None, None) => unreachable!("validated"),
        }
    }

    fn workload_for(&self, seed: u64) -> Result<Vec<JobRecord>, ExperimentError> {
        match (&self.workload.path, &self.workload.generate) {
            (Some(p), _) => Ok(load_workload(self.resolve(p))?),
            (None, Some(spec)) => Ok(generate_workload(spec, workload_seed(seed))),
            (None, None) => unreachable!("validated"),
        }
    }

    fn sim_config(&self) -> SimConfig {
        let mode = match self.experiment.sweep_interval_h {
            Some(h) => ScheduleMode::Periodic { interval: h * SECONDS_PER_HOUR },
            None => ScheduleMode::EventDriven,
        };
        SimConfig { horizon: self.horizon(), mode }
    }
}

/// Seed the experiment runner uses to generate a workload for `seed`.
pub fn workload_seed(seed: u64) -> u64 {
    derive_seed(seed, stream::WORKLOAD)
}

/// Fully prepared inputs for one seed, shared by every arm.
#[derive(Clone, Debug)]
pub struct SeedInputs {
    pub seed: u64,
    /// Grid catalog with availability schedules installed.
    pub catalog: Vec<ResourceRecord>,
    pub workload: Vec<JobRecord>,
}

pub fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedInputs, ExperimentError> {
    let mut catalog = cfg.catalog_for(seed)?;
    let workload = cfg.workload_for(seed)?;
    check_classes(&workload, &catalog)?;
    let schedules = generate_churn(&catalog, &cfg.churn, cfg.horizon(), derive_seed(seed, stream::CHURN));
    apply_schedules(&mut catalog, schedules);
    Ok(SeedInputs { seed, catalog, workload })
}

/// Builds the policy and the machine set for one arm.
pub fn build_arm(
    arm: &ArmConfig,
    inputs: &SeedInputs,
    horizon: SimTime,
) -> Result<(Box<dyn SchedulerPolicy>, Vec<ResourceRecord>), ExperimentError> {
    Ok(match arm.policy {
        PolicyKind::Grv => {
            let catalog = inputs.catalog.clone();
            let policy = GrvPolicy::new(&catalog, arm.grv.unwrap_or_default(), arm.weights.unwrap_or_default());
            (Box::new(policy), catalog)
        }
        PolicyKind::Fcfs => (Box::new(FcfsPolicy::new()), inputs.catalog.clone()),
        PolicyKind::Cluster => {
            let c = arm.cluster.as_ref().expect("validated");
            let policy = ClusterPolicy::new(
                c.queues(),
                c.nflops * f64::from(c.ncores),
                c.estimate,
                derive_seed(inputs.seed, stream::ESTIMATES),
            )?;
            (Box::new(policy), c.pool(horizon))
        }
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub arm: usize,
    pub label: String,
    pub seed: u64,
    pub result: SimResult,
    pub report: MetricsReport,
    pub wall: Duration,
    /// Job conservation held after every processed event.
    pub conserved: bool,
}

impl RunOutput {
    pub fn stem(&self) -> String {
        format!("{}_seed{}", self.label, self.seed)
    }
}

pub fn run_arm(cfg: &ExperimentConfig, arm_idx: usize, inputs: &SeedInputs) -> Result<RunOutput, ExperimentError> {
    let arm = &cfg.arms[arm_idx];
    let (mut policy, machines) = build_arm(arm, inputs, cfg.horizon())?;
    let started = Instant::now();
    let mut conserved = true;
    let mut result = run_observed(machines, inputs.workload.clone(), policy.as_mut(), cfg.sim_config(), &mut |_, c| {
        conserved &= c.conserved()
    })
    .map_err(|source| ExperimentError::Sim { arm: arm.label.clone(), seed: inputs.seed, source })?;
    let wall = started.elapsed();
    result.label = arm.label.clone();
    result.meta.insert("arm".into(), arm_idx.to_string());
    result.meta.insert("seed".into(), inputs.seed.to_string());
    result.meta.insert("experiment".into(), cfg.experiment.name.clone());
    let report = compute_report(&result, &arm.label);
    Ok(RunOutput { arm: arm_idx, label: arm.label.clone(), seed: inputs.seed, result, report, wall, conserved })
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    /// Skip writing files.
    pub dry_run: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub runs: Vec<RunOutput>,
    pub comparison: ComparisonTable,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Simulates every (arm, seed) pair, in parallel, then writes one result file
/// and one report per pair plus `aggregate.csv` and `comparison.txt`. Nothing
/// is left behind on failure.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput, ExperimentError> {
    let seeds = opts.seeds.clone().unwrap_or_else(|| cfg.experiment.seeds.clone());
    if seeds.is_empty() {
        return Err(config_err("no seeds"));
    }
    let inputs: Vec<SeedInputs> = seeds.par_iter().map(|&s| prepare_seed(cfg, s)).collect::<Result<_, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..cfg.arms.len()).flat_map(|a| (0..inputs.len()).map(move |s| (a, s))).collect();
    let runs: Vec<RunOutput> = pairs.par_iter().map(|&(a, s)| run_arm(cfg, a, &inputs[s])).collect::<Result<_, _>>()?;

    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report.clone()).collect();
    let comparison = ComparisonTable::from_rows(aggregate(&reports))?;
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.resolve(&cfg.experiment.out_dir));
    let mut files = Vec::new();
    if !opts.dry_run {
        if let Err(e) = write_outputs(&out_dir, &runs, &comparison, &mut files) {
            for f in &files {
                let _ = fs::remove_file(f);
            }
            return Err(e);
        }
    }
    Ok(ExperimentOutput { runs, comparison, out_dir, files })
}

fn write_file(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    fs::write(&path, text).map_err(io_err(&path))?;
    files.push(path);
    Ok(())
}

fn write_outputs(
    dir: &Path,
    runs: &[RunOutput],
    comparison: &ComparisonTable,
    files: &mut Vec<PathBuf>,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for run in runs {
        write_file(dir.join(format!("{}.simresult", run.stem())), &run.result.to_text(), files)?;
        write_file(dir.join(format!("{}.report.csv", run.stem())), &run.report.to_csv(), files)?;
    }
    write_file(dir.join("aggregate.csv"), &comparison.to_csv(), files)?;
    write_file(dir.join("comparison.txt"), &comparison.to_string(), files)?;
    Ok(())
}

/// Reads every `*.simresult` under `dir` in (arm, seed) order.
pub fn load_results(dir: &Path) -> Result<Vec<SimResult>, ExperimentError> {
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut results = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "simresult") {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let res = SimResult::from_text(&text).map_err(|source| ExperimentError::ResultParse { path, source })?;
            results.push(res);
        }
    }
    if results.is_empty() {
        return Err(ExperimentError::NoResults(dir.to_owned()));
    }
    let key = |r: &SimResult, k: &str| r.meta.get(k).and_then(|v| v.parse::<u64>().ok()).unwrap_or(u64::MAX);
    results.sort_by(|a, b| (key(a, "arm"), key(a, "seed"), &a.label).cmp(&(key(b, "arm"), key(b, "seed"), &b.label)));
    Ok(results)
}

/// Recomputes reports from stored results without re-simulating.
pub fn report_results(dir: &Path) -> Result<(Vec<MetricsReport>, ComparisonTable), ExperimentError> {
    let reports: Vec<MetricsReport> = load_results(dir)?.iter().map(|r| compute_report(r, &r.label)).collect();
    let table = ComparisonTable::from_rows(aggregate(&reports))?;
    Ok((reports, table))
}
