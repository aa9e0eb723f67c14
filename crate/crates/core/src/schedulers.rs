//! Dispatch policies: GRV ranking, first-come-first-served, and the
//! dedicated-cluster queue model.
//!
//! The engine owns job records and resource occupancy; a policy owns its wait
//! queue(s) and, for GRV, the [`GrvTable`]. A scheduling pass never dispatches
//! to an occupied, offline or class-mismatched resource, and a resource picked
//! for one job in a pass is unavailable to later jobs in the same pass.

use std::collections::{HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{GrvParams, JobId, JobRecord, ResourceClass, ResourceId, ResourceRecord, SimTime, WeightVector};
use crate::grv::{normalize_context, score, GrvTable, Outcome};

#[derive(Debug, Error, PartialEq)]
pub enum SchedError {
    #[error("job {0} is not currently dispatched")]
    NotDispatched(JobId),
    #[error("cluster policy needs at least one queue")]
    NoQueues,
    #[error("queue {0}: runtime limit must be positive")]
    BadLimit(String),
    #[error("queue priorities must be distinct (duplicate {0})")]
    DuplicatePriority(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Grv,
    Fcfs,
    Cluster,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Grv => "grv",
            PolicyKind::Fcfs => "fcfs",
            PolicyKind::Cluster => "cluster",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "grv" => Some(PolicyKind::Grv),
            "fcfs" => Some(PolicyKind::Fcfs),
            "cluster" => Some(PolicyKind::Cluster),
            _ => None,
        }
    }
}

/// Read-only view of the machines at a decision point.
#[derive(Clone, Copy, Debug)]
pub struct GridView<'a> {
    pub resources: &'a [ResourceRecord],
    pub online: &'a [bool],
}

impl<'a> GridView<'a> {
    pub fn new(resources: &'a [ResourceRecord], online: &'a [bool]) -> Self {
        debug_assert_eq!(resources.len(), online.len());
        Self { resources, online }
    }

    pub fn is_free(&self, idx: usize) -> bool {
        self.online[idx] && self.resources[idx].occupied_by.is_none()
    }

    /// Free machines in catalog order.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.resources.len()).filter(|&i| self.is_free(i)).collect()
    }
}

/// The part of a job a wait queue needs to remember.
#[derive(Clone, Debug, PartialEq)]
pub struct QueuedJob {
    pub id: JobId,
    pub required_class: Option<ResourceClass>,
}

impl QueuedJob {
    pub fn matches(&self, class: &ResourceClass) -> bool {
        self.required_class.as_ref().is_none_or(|c| c == class)
    }
}

impl From<&JobRecord> for QueuedJob {
    fn from(job: &JobRecord) -> Self {
        Self { id: job.id.clone(), required_class: job.required_class.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch {
    pub job: JobId,
    pub resource: ResourceId,
    pub time: SimTime,
    /// Wall-clock limit after which the run is checkpoint-terminated.
    pub run_limit: Option<SimTime>,
}

/// Walks `queued` in order, offering each job the not-yet-taken free machines
/// that match it; `pick` chooses among them (in catalog order) or declines.
fn pass<F>(queued: &[QueuedJob], grid: &GridView, now: SimTime, mut pick: F) -> Vec<Dispatch>
where
    F: FnMut(&[usize]) -> usize,
{
    let mut free = grid.free_indices();
    let mut out = Vec::new();
    // requirements already known to have no candidate left in this pass
    let mut exhausted: Vec<&Option<ResourceClass>> = Vec::new();
    let mut candidates = Vec::new();
    for job in queued {
        if free.is_empty() {
            break;
        }
        if exhausted.contains(&&job.required_class) {
            continue;
        }
        candidates.clear();
        candidates.extend(free.iter().copied().filter(|&i| job.matches(&grid.resources[i].class)));
        if candidates.is_empty() {
            exhausted.push(&job.required_class);
            continue;
        }
        let chosen = candidates[pick(&candidates)];
        free.retain(|&i| i != chosen);
        out.push(Dispatch {
            job: job.id.clone(),
            resource: grid.resources[chosen].id.clone(),
            time: now,
            run_limit: None,
        });
    }
    out
}

/// One GRV scheduling pass: each queued job goes to the highest-scoring
/// candidate, with scores normalised over that job's candidate set. Equal
/// scores resolve to the lowest catalog index.
pub fn grv_select(queued: &[QueuedJob], grid: &GridView, table: &mut GrvTable, now: SimTime) -> Vec<Dispatch> {
    let weights = *table.weights();
    let mut states = Vec::new();
    pass(queued, grid, now, |candidates| {
        states.clear();
        states.extend(candidates.iter().map(|&i| *table.refresh(i, now)));
        let norm = normalize_context(&states).expect("candidate set is non-empty");
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, s) in states.iter().enumerate() {
            let v = score(s, &weights, &norm);
            if v > best_score {
                best = k;
                best_score = v;
            }
        }
        best
    })
}

/// First-come-first-served: each job takes the first matching free machine in
/// catalog order.
pub fn fcfs_select(queued: &[QueuedJob], grid: &GridView, now: SimTime) -> Vec<Dispatch> {
    pass(queued, grid, now, |_| 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterQueue {
    pub name: String,
    /// Seconds a job may run before it is checkpoint-terminated.
    pub runtime_limit: SimTime,
    /// Service rank; 0 is served first. Shorter limits get lower ranks.
    pub priority: i64,
}

impl ClusterQueue {
    pub fn new(name: impl Into<String>, runtime_limit: SimTime, priority: i64) -> Self {
        Self { name: name.into(), runtime_limit, priority }
    }
}

#[derive(Clone, Debug)]
pub struct QueueLine {
    pub queue: ClusterQueue,
    pub waiting: VecDeque<QueuedJob>,
}

/// Serves `lines` in the order given (callers keep them sorted by priority),
/// FIFO within a line, onto any free matching node.
pub fn cluster_select(lines: &[QueueLine], grid: &GridView, now: SimTime) -> Vec<Dispatch> {
    let mut free = grid.free_indices();
    let mut out = Vec::new();
    for line in lines {
        for job in &line.waiting {
            if free.is_empty() {
                return out;
            }
            let Some(pos) = free.iter().position(|&i| job.matches(&grid.resources[i].class)) else {
                continue;
            };
            let node = free.remove(pos);
            out.push(Dispatch {
                job: job.id.clone(),
                resource: grid.resources[node].id.clone(),
                time: now,
                run_limit: Some(line.queue.runtime_limit),
            });
        }
    }
    out
}

/// How the cluster learns a job's runtime when picking its queue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EstimateModel {
    /// Only the estimate carried by the job; jobs without one go to the
    /// longest queue.
    Declared,
    /// The carried estimate if present, else the true runtime on a node times
    /// a log-normal error factor with median 1.
    Derived { error_sigma: f64 },
}

impl Default for EstimateModel {
    fn default() -> Self {
        EstimateModel::Derived { error_sigma: 0.0 }
    }
}

/// Common surface of the three policies, driven by the simulation engine.
pub trait SchedulerPolicy: Send {
    fn kind(&self) -> PolicyKind;

    /// Adds a newly submitted job to the wait queue.
    fn enqueue(&mut self, job: &JobRecord, now: SimTime);

    /// Runs one scheduling pass and removes dispatched jobs from the queue.
    fn select(&mut self, grid: &GridView, now: SimTime) -> Vec<Dispatch>;

    /// Feedback on a dispatched job's exit. Interrupted jobs go back into the
    /// wait queue. `resource` is the catalog index of the hosting machine.
    fn record_outcome(
        &mut self,
        job: &JobRecord,
        resource: usize,
        outcome: Outcome,
        now: SimTime,
    ) -> Result<(), SchedError>;

    /// A machine came (back) online.
    fn resource_joined(&mut self, _resource: usize, _now: SimTime) {}

    fn queued(&self) -> usize;

    fn grv_table(&self) -> Option<&GrvTable> {
        None
    }

    fn on_job_arrival(&mut self, job: &JobRecord, grid: &GridView, now: SimTime) -> Vec<Dispatch> {
        self.enqueue(job, now);
        self.select(grid, now)
    }

    fn on_resource_free(&mut self, grid: &GridView, now: SimTime) -> Vec<Dispatch> {
        self.select(grid, now)
    }

    fn on_job_outcome(
        &mut self,
        job: &JobRecord,
        resource: usize,
        outcome: Outcome,
        grid: &GridView,
        now: SimTime,
    ) -> Result<Vec<Dispatch>, SchedError> {
        self.record_outcome(job, resource, outcome, now)?;
        Ok(self.select(grid, now))
    }
}

fn remove_dispatched(queue: &mut VecDeque<QueuedJob>, dispatched: &[Dispatch]) {
    if dispatched.is_empty() {
        return;
    }
    let mut gone: Vec<&JobId> = dispatched.iter().map(|d| &d.job).collect();
    queue.retain(|q| match gone.iter().position(|id| **id == q.id) {
        Some(p) => {
            gone.swap_remove(p);
            false
        }
        None => true,
    });
}

fn check_dispatched(job: &JobRecord) -> Result<(), SchedError> {
    if job.is_dispatched() {
        Ok(())
    } else {
        Err(SchedError::NotDispatched(job.id.clone()))
    }
}

#[derive(Clone, Debug)]
pub struct GrvPolicy {
    table: GrvTable,
    queue: VecDeque<QueuedJob>,
}

impl GrvPolicy {
    pub fn new(catalog: &[ResourceRecord], params: GrvParams, weights: WeightVector) -> Self {
        Self { table: GrvTable::new(catalog, params, weights, 0.0), queue: VecDeque::new() }
    }

    pub fn table(&self) -> &GrvTable {
        &self.table
    }
}

impl SchedulerPolicy for GrvPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Grv
    }

    fn enqueue(&mut self, job: &JobRecord, _now: SimTime) {
        self.queue.push_back(job.into());
    }

    fn select(&mut self, grid: &GridView, now: SimTime) -> Vec<Dispatch> {
        let out = grv_select(self.queue.make_contiguous(), grid, &mut self.table, now);
        remove_dispatched(&mut self.queue, &out);
        out
    }

    fn record_outcome(
        &mut self,
        job: &JobRecord,
        resource: usize,
        outcome: Outcome,
        _now: SimTime,
    ) -> Result<(), SchedError> {
        check_dispatched(job)?;
        self.table.apply(resource, outcome);
        if !outcome.is_success() {
            self.queue.push_back(job.into());
        }
        Ok(())
    }

    fn resource_joined(&mut self, resource: usize, now: SimTime) {
        self.table.rejoin(resource, now);
    }

    fn queued(&self) -> usize {
        self.queue.len()
    }

    fn grv_table(&self) -> Option<&GrvTable> {
        Some(&self.table)
    }
}

#[derive(Clone, Debug, Default)]
pub struct FcfsPolicy {
    queue: VecDeque<QueuedJob>,
}

impl FcfsPolicy {
    pub fn new() -> Self {
        Self::default()
    }
}

impl SchedulerPolicy for FcfsPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Fcfs
    }

    fn enqueue(&mut self, job: &JobRecord, _now: SimTime) {
        self.queue.push_back(job.into());
    }

    fn select(&mut self, grid: &GridView, now: SimTime) -> Vec<Dispatch> {
        let out = fcfs_select(self.queue.make_contiguous(), grid, now);
        remove_dispatched(&mut self.queue, &out);
        out
    }

    fn record_outcome(
        &mut self,
        job: &JobRecord,
        _resource: usize,
        outcome: Outcome,
        _now: SimTime,
    ) -> Result<(), SchedError> {
        check_dispatched(job)?;
        if !outcome.is_success() {
            self.queue.push_back(job.into());
        }
        Ok(())
    }

    fn queued(&self) -> usize {
        self.queue.len()
    }
}

/// Dedicated homogeneous cluster with runtime-limited priority queues.
#[derive(Clone, Debug)]
pub struct ClusterPolicy {
    lines: Vec<QueueLine>,
    node_speed: f64,
    estimates: EstimateModel,
    rng: ChaCha8Rng,
    line_of: HashMap<JobId, usize>,
}

impl ClusterPolicy {
    /// `node_speed` is the aggregate flop rate of one node, used to turn a
    /// job's work into a runtime estimate.
    pub fn new(
        queues: Vec<ClusterQueue>,
        node_speed: f64,
        estimates: EstimateModel,
        seed: u64,
    ) -> Result<Self, SchedError> {
        if queues.is_empty() {
            return Err(SchedError::NoQueues);
        }
        let mut lines: Vec<QueueLine> = Vec::with_capacity(queues.len());
        for q in queues {
            if !(q.runtime_limit > 0.0) {
                return Err(SchedError::BadLimit(q.name));
            }
            if lines.iter().any(|l| l.queue.priority == q.priority) {
                return Err(SchedError::DuplicatePriority(q.priority));
            }
            lines.push(QueueLine { queue: q, waiting: VecDeque::new() });
        }
        lines.sort_by_key(|l| l.queue.priority);
        Ok(Self { lines, node_speed, estimates, rng: ChaCha8Rng::seed_from_u64(seed), line_of: HashMap::new() })
    }

    pub fn lines(&self) -> &[QueueLine] {
        &self.lines
    }

    /// Lowest-limit queue that fits `estimate`; the longest queue otherwise.
    pub fn queue_for(&self, estimate: Option<SimTime>) -> usize {
        let longest = (0..self.lines.len())
            .max_by(|&a, &b| self.lines[a].queue.runtime_limit.total_cmp(&self.lines[b].queue.runtime_limit))
            .expect("at least one queue");
        let Some(est) = estimate else { return longest };
        (0..self.lines.len())
            .filter(|&i| self.lines[i].queue.runtime_limit >= est)
            .min_by(|&a, &b| self.lines[a].queue.runtime_limit.total_cmp(&self.lines[b].queue.runtime_limit))
            .unwrap_or(longest)
    }

    fn estimate(&mut self, job: &JobRecord) -> Option<SimTime> {
        match self.estimates {
            EstimateModel::Declared => job.runtime_estimate,
            EstimateModel::Derived { error_sigma } => {
                if job.runtime_estimate.is_some() {
                    return job.runtime_estimate;
                }
                let z: f64 = StandardNormal.sample(&mut self.rng);
                Some(job.work / self.node_speed * (error_sigma * z).exp())
            }
        }
    }
}

impl SchedulerPolicy for ClusterPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Cluster
    }

    fn enqueue(&mut self, job: &JobRecord, _now: SimTime) {
        let estimate = self.estimate(job);
        let line = self.queue_for(estimate);
        self.line_of.insert(job.id.clone(), line);
        self.lines[line].waiting.push_back(job.into());
    }

    fn select(&mut self, grid: &GridView, now: SimTime) -> Vec<Dispatch> {
        let out = cluster_select(&self.lines, grid, now);
        for d in &out {
            let line = self.line_of[&d.job];
            let waiting = &mut self.lines[line].waiting;
            if let Some(p) = waiting.iter().position(|q| q.id == d.job) {
                waiting.remove(p);
            }
        }
        out
    }

    fn record_outcome(
        &mut self,
        job: &JobRecord,
        _resource: usize,
        outcome: Outcome,
        _now: SimTime,
    ) -> Result<(), SchedError> {
        check_dispatched(job)?;
        if outcome.is_success() {
            self.line_of.remove(&job.id);
        } else {
            let line = self.line_of[&job.id];
            self.lines[line].waiting.push_front(job.into());
        }
        Ok(())
    }

    fn queued(&self) -> usize {
        self.lines.iter().map(|l| l.waiting.len()).sum()
    }
}
