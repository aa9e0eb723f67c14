//! Resource catalogs and job workloads: file formats, loaders and synthetic
//! generators.
//!
//! Both formats are comma-separated text behind a versioned first line:
//!
//! ```text
//! #gridsim-catalog v1
//! id,class,nflops,ncores,dedicated
//! lnx-000,INTEL/LINUX,4800000000,2,0
//! ```
//!
//! ```text
//! #gridsim-workload v1
//! # synthetic: lognormal work, batch arrivals
//! id,submit_time_s,work_flops,required_class,runtime_estimate_s
//! job-0001,0,80000000000000,,
//! ```
//!
//! Further lines starting with `#` are comments. Numbers are written in their
//! shortest round-trip form, so saving and reloading is lossless.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    is_plain_label, validate_catalog, CatalogViolation, JobRecord, ResourceClass, ResourceRecord, SimTime,
    SECONDS_PER_HOUR,
};

pub const CATALOG_MAGIC: &str = "#gridsim-catalog v1";
pub const WORKLOAD_MAGIC: &str = "#gridsim-workload v1";
const CATALOG_COLUMNS: [&str; 5] = ["id", "class", "nflops", "ncores", "dedicated"];
const WORKLOAD_COLUMNS: [&str; 5] = ["id", "submit_time_s", "work_flops", "required_class", "runtime_estimate_s"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line 1: expected header {expected:?}")]
    Header { expected: &'static str },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("catalog validation failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<CatalogViolation>),
    #[error("job {job}: required class {class} is not in the catalog")]
    UnknownClass { job: String, class: String },
}

fn parse_err(line: u64, message: impl Into<String>) -> TraceError {
    TraceError::Parse { line, message: message.into() }
}

fn read(path: &Path) -> Result<String, TraceError> {
    fs::read_to_string(path).map_err(|source| TraceError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<(), TraceError> {
    fs::write(path, text).map_err(|source| TraceError::Io { path: path.to_owned(), source })
}

/// Checks the version line and returns CSV rows with their 1-based file line.
fn rows(text: &str, magic: &'static str, columns: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, TraceError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != magic {
        return Err(TraceError::Header { expected: magic });
    }
    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(false).from_reader(rest.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(2, e.to_string()))?.clone();
    if header.is_empty() && rest.trim().is_empty() {
        return Ok(Vec::new());
    }
    if header.iter().collect::<Vec<_>>() != columns {
        return Err(parse_err(2, format!("expected columns {}", columns.join(","))));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() + 1).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() + 1).unwrap_or(0);
        out.push((line, rec));
    }
    Ok(out)
}

fn number(line: u64, field: &str, s: &str) -> Result<f64, TraceError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("{field}: not a number: {s:?}")))
}

pub fn parse_catalog(text: &str) -> Result<Vec<ResourceRecord>, TraceError> {
    let mut out = Vec::new();
    for (line, rec) in rows(text, CATALOG_MAGIC, &CATALOG_COLUMNS)? {
        let nflops = number(line, "nflops", &rec[2])?;
        if nflops <= 0.0 {
            return Err(parse_err(line, format!("nflops must be positive, got {nflops}")));
        }
        let ncores: u32 =
            rec[3].parse().map_err(|_| parse_err(line, format!("ncores: not an integer: {:?}", &rec[3])))?;
        if ncores == 0 {
            return Err(parse_err(line, "ncores must be at least 1"));
        }
        let dedicated = match &rec[4] {
            "0" | "false" => false,
            "1" | "true" => true,
            s => return Err(parse_err(line, format!("dedicated: expected 0 or 1, got {s:?}"))),
        };
        out.push(ResourceRecord::new(&rec[0], &rec[1], nflops, ncores).dedicated(dedicated));
    }
    validate_catalog(&out).map_err(TraceError::Invalid)?;
    Ok(out)
}

/// Loads a catalog; file order becomes the canonical catalog order.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<ResourceRecord>, TraceError> {
    parse_catalog(&read(path.as_ref())?)
}

pub fn format_catalog(resources: &[ResourceRecord]) -> String {
    let mut out = format!("{CATALOG_MAGIC}\n{}\n", CATALOG_COLUMNS.join(","));
    for r in resources {
        out.push_str(&format!("{},{},{},{},{}\n", r.id, r.class, r.nflops, r.ncores, u8::from(r.dedicated)));
    }
    out
}

pub fn save_catalog(path: impl AsRef<Path>, resources: &[ResourceRecord]) -> Result<(), TraceError> {
    write(path.as_ref(), &format_catalog(resources))
}

pub fn parse_workload(text: &str) -> Result<Vec<JobRecord>, TraceError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in rows(text, WORKLOAD_MAGIC, &WORKLOAD_COLUMNS)? {
        let id = &rec[0];
        if !is_plain_label(id) {
            return Err(parse_err(line, format!("bad job id {id:?}")));
        }
        if !seen.insert(id.to_owned()) {
            return Err(parse_err(line, format!("duplicate job id {id}")));
        }
        let submit = number(line, "submit_time_s", &rec[1])?;
        if submit < 0.0 {
            return Err(parse_err(line, "submit_time_s must be non-negative"));
        }
        let work = number(line, "work_flops", &rec[2])?;
        if work <= 0.0 {
            return Err(parse_err(line, "work_flops must be positive"));
        }
        let mut job = JobRecord::new(id, submit, work);
        if !rec[3].is_empty() {
            job.required_class = Some(ResourceClass::new(&rec[3]));
        }
        if !rec[4].is_empty() {
            let est = number(line, "runtime_estimate_s", &rec[4])?;
            if est <= 0.0 {
                return Err(parse_err(line, "runtime_estimate_s must be positive"));
            }
            job.runtime_estimate = Some(est);
        }
        out.push(job);
    }
    // stable: equal submit times keep file order
    out.sort_by(|a, b| a.submit_time.total_cmp(&b.submit_time));
    Ok(out)
}

/// Loads a workload sorted by submit time.
pub fn load_workload(path: impl AsRef<Path>) -> Result<Vec<JobRecord>, TraceError> {
    parse_workload(&read(path.as_ref())?)
}

/// Rejects jobs that require a class absent from `catalog`.
pub fn check_classes(jobs: &[JobRecord], catalog: &[ResourceRecord]) -> Result<(), TraceError> {
    let known: BTreeSet<&ResourceClass> = catalog.iter().map(|r| &r.class).collect();
    for job in jobs {
        if let Some(c) = &job.required_class {
            if !known.contains(c) {
                return Err(TraceError::UnknownClass { job: job.id.to_string(), class: c.to_string() });
            }
        }
    }
    Ok(())
}

/// `note` lines are written as comments under the version line.
pub fn format_workload(jobs: &[JobRecord], note: Option<&str>) -> String {
    let mut out = format!("{WORKLOAD_MAGIC}\n");
    if let Some(note) = note {
        for l in note.lines() {
            out.push_str(&format!("# {l}\n"));
        }
    }
    out.push_str(&WORKLOAD_COLUMNS.join(","));
    out.push('\n');
    for j in jobs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            j.id,
            j.submit_time,
            j.work,
            j.required_class.as_ref().map(|c| c.as_str()).unwrap_or(""),
            j.runtime_estimate.map(|e| e.to_string()).unwrap_or_default()
        ));
    }
    out
}

pub fn save_workload(path: impl AsRef<Path>, jobs: &[JobRecord], note: Option<&str>) -> Result<(), TraceError> {
    write(path.as_ref(), &format_workload(jobs, note))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum Arrival {
    /// Sweeps of `wave_size` jobs submitted together, one sweep every
    /// `wave_interval_h` hours. Without a wave size every job arrives at t = 0.
    Batch {
        #[serde(default)]
        wave_size: Option<usize>,
        #[serde(default)]
        wave_interval_h: f64,
    },
    Poisson {
        rate_per_h: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum WorkDist {
    Lognormal { median_flops: f64, sigma: f64 },
    Uniform { min_flops: f64, max_flops: f64 },
    Fixed { flops: f64 },
}

impl WorkDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            WorkDist::Lognormal { median_flops, sigma } => {
                LogNormal::new(median_flops.ln(), sigma).unwrap().sample(rng)
            }
            WorkDist::Uniform { min_flops, max_flops } => rng.random_range(min_flops..=max_flops),
            WorkDist::Fixed { flops } => flops,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            WorkDist::Lognormal { median_flops, sigma } => median_flops > 0.0 && sigma >= 0.0,
            WorkDist::Uniform { min_flops, max_flops } => min_flops > 0.0 && max_flops >= min_flops,
            WorkDist::Fixed { flops } => flops > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid work distribution {self:?}"))
        }
    }
}

fn default_prefix() -> String {
    "job".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub n_jobs: usize,
    pub arrival: Arrival,
    pub work: WorkDist,
    #[serde(default)]
    pub required_class: Option<String>,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), String> {
        self.work.validate()?;
        let problem = match self.arrival {
            Arrival::Batch { wave_size: Some(0), .. } => Some("wave_size must be positive"),
            Arrival::Batch { wave_interval_h, .. } if !(wave_interval_h >= 0.0) => {
                Some("wave_interval_h must be non-negative")
            }
            Arrival::Poisson { rate_per_h } if !(rate_per_h > 0.0) => Some("rate_per_h must be positive"),
            _ => None,
        };
        if let Some(p) = problem {
            return Err(p.into());
        }
        if !is_plain_label(&self.id_prefix) {
            return Err("id_prefix must be a plain label".into());
        }
        Ok(())
    }

    /// Time of the last submission.
    pub fn last_submit(&self, jobs: &[JobRecord]) -> SimTime {
        jobs.last().map(|j| j.submit_time).unwrap_or(0.0)
    }
}

/// Synthetic workload, sorted by submit time and deterministic under `seed`.
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Vec<JobRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = spec.n_jobs.saturating_sub(1).to_string().len().max(4);
    let mut t = 0.0;
    (0..spec.n_jobs)
        .map(|i| {
            let submit = match spec.arrival {
                Arrival::Batch { wave_size: None, .. } => 0.0,
                Arrival::Batch { wave_size: Some(size), wave_interval_h } => {
                    (i / size) as f64 * wave_interval_h * SECONDS_PER_HOUR
                }
                Arrival::Poisson { rate_per_h } => {
                    t += Exp::new(rate_per_h).unwrap().sample(&mut rng) * SECONDS_PER_HOUR;
                    t
                }
            };
            let work = spec.work.sample(&mut rng);
            let mut job = JobRecord::new(format!("{}-{:0width$}", spec.id_prefix, i), submit, work);
            job.required_class = spec.required_class.as_deref().map(ResourceClass::new);
            job
        })
        .collect()
}

/// Per-core flop rate: a fixed value or a uniform `[min, max]` range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlopsSpec {
    Fixed(f64),
    Range([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: String,
    pub count: usize,
    pub id_prefix: String,
    pub nflops: FlopsSpec,
    /// Core counts drawn uniformly.
    pub ncores: Vec<u32>,
    #[serde(default)]
    pub dedicated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
}

/// Synthetic catalog, classes in spec order.
pub fn generate_catalog(spec: &CatalogSpec, seed: u64) -> Result<Vec<ResourceRecord>, TraceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in &spec.classes {
        if class.ncores.is_empty() {
            return Err(parse_err(0, format!("class {}: ncores list is empty", class.label)));
        }
        let width = class.count.saturating_sub(1).to_string().len().max(3);
        for i in 0..class.count {
            let nflops = match class.nflops {
                FlopsSpec::Fixed(v) => v,
                FlopsSpec::Range([lo, hi]) => (rng.random_range(lo..=hi) / 1e6).round() * 1e6,
            };
            let ncores = class.ncores[rng.random_range(0..class.ncores.len())];
            out.push(
                ResourceRecord::new(format!("{}-{:0width$}", class.id_prefix, i), &class.label, nflops, ncores)
                    .dedicated(class.dedicated),
            );
        }
    }
    validate_catalog(&out).map_err(TraceError::Invalid)?;
    Ok(out)
}
