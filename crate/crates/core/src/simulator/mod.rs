//! Deterministic discrete-event engine.
//!
//! Events are processed in `(time, kind rank, seq)` order. At equal timestamps
//! a resource leaving beats a job completing, which beats a submission, which
//! beats a resource joining, which beats a periodic sweep. A machine that
//! vanishes at the instant its job would finish therefore counts as an
//! eviction, and arrivals are scheduled before machines that join at the same
//! instant.
//!
//! Evicted jobs restart from scratch; cluster jobs stopped at a queue's runtime
//! limit keep their progress.

mod churn;
mod result;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};

use thiserror::Error;

pub use churn::{apply_schedules, generate_churn, ChurnModel, ClassChurn, DurationDist};
pub use result::{ResultParseError, SimResult};

use crate::domain::{
    validate_catalog, CatalogViolation, DomainError, Interruption, JobId, JobRecord, JobStatus, ResourceId,
    ResourceRecord, SimTime,
};
use crate::grv::Outcome;
use crate::schedulers::{Dispatch, GridView, SchedError, SchedulerPolicy};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid catalog: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidCatalog(Vec<CatalogViolation>),
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("job {0} is submitted after the horizon")]
    SubmitAfterHorizon(JobId),
    #[error("duplicate job id {0}")]
    DuplicateJob(JobId),
    #[error("job {0} has non-positive work")]
    BadWork(JobId),
    #[error("event at {event} scheduled before current time {now}")]
    EventInPast { now: SimTime, event: SimTime },
    #[error("unsafe dispatch of job {job} to {resource}: {reason}")]
    UnsafeDispatch { job: JobId, resource: ResourceId, reason: &'static str },
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    JobSubmit { job: usize },
    JobComplete { job: usize, resource: usize, epoch: u32 },
    ResourceJoin { resource: usize },
    ResourceLeave { resource: usize },
    QueueLimitHit { job: usize, resource: usize, epoch: u32 },
    SchedulerSweep,
}

impl EventKind {
    /// Tiebreak rank at equal timestamps.
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::ResourceLeave { .. } => 0,
            EventKind::JobComplete { .. } | EventKind::QueueLimitHit { .. } => 1,
            EventKind::JobSubmit { .. } => 2,
            EventKind::ResourceJoin { .. } => 3,
            EventKind::SchedulerSweep => 4,
        }
    }
}

/// A timestamped engine event. Job and resource fields are workload and
/// catalog positions.
#[derive(Clone, Copy, Debug)]
pub struct SimEvent {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.kind.rank().cmp(&other.kind.rank())).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleMode {
    /// A scheduling pass after every event.
    EventDriven,
    /// Passes only at multiples of `interval` seconds.
    Periodic { interval: SimTime },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub horizon: SimTime,
    pub mode: ScheduleMode,
}

impl SimConfig {
    pub fn new(horizon: SimTime) -> Self {
        Self { horizon, mode: ScheduleMode::EventDriven }
    }
}

/// Job counts after an event has been fully processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Census {
    pub submitted: usize,
    pub completed: usize,
    pub running: usize,
    pub queued: usize,
    pub abandoned: usize,
}

impl Census {
    pub fn conserved(&self) -> bool {
        self.completed + self.running + self.queued + self.abandoned == self.submitted
    }
}

struct Engine<'p> {
    resources: Vec<ResourceRecord>,
    online: Vec<bool>,
    resource_index: HashMap<ResourceId, usize>,
    jobs: Vec<JobRecord>,
    job_index: HashMap<JobId, usize>,
    remaining: Vec<f64>,
    started: Vec<SimTime>,
    epoch: Vec<u32>,
    policy: &'p mut dyn SchedulerPolicy,
    heap: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
    now: SimTime,
    cfg: SimConfig,
    census: Census,
    event_count: u64,
}

impl<'p> Engine<'p> {
    fn push(&mut self, time: SimTime, kind: EventKind) -> Result<(), SimError> {
        if time < self.now {
            return Err(SimError::EventInPast { now: self.now, event: time });
        }
        self.heap.push(Reverse(SimEvent { time, seq: self.seq, kind }));
        self.seq += 1;
        Ok(())
    }

    fn apply(&mut self, d: Dispatch) -> Result<(), SimError> {
        let unsafe_dispatch =
            |reason| SimError::UnsafeDispatch { job: d.job.clone(), resource: d.resource.clone(), reason };
        let r = *self.resource_index.get(&d.resource).ok_or_else(|| unsafe_dispatch("unknown resource"))?;
        let j = *self.job_index.get(&d.job).ok_or_else(|| unsafe_dispatch("unknown job"))?;
        if !self.online[r] {
            return Err(unsafe_dispatch("resource offline"));
        }
        if self.resources[r].occupied_by.is_some() {
            return Err(unsafe_dispatch("resource occupied"));
        }
        if !self.jobs[j].matches(&self.resources[r].class) {
            return Err(unsafe_dispatch("class mismatch"));
        }
        self.jobs[j].record_dispatch(d.resource.clone(), self.now)?;
        self.resources[r].occupied_by = Some(d.job.clone());
        self.epoch[j] += 1;
        self.started[j] = self.now;
        self.census.running += 1;
        let runtime = self.resources[r].runtime_for(self.remaining[j]);
        let epoch = self.epoch[j];
        match d.run_limit {
            Some(limit) if runtime > limit => {
                self.push(self.now + limit, EventKind::QueueLimitHit { job: j, resource: r, epoch })
            }
            _ => self.push(self.now + runtime, EventKind::JobComplete { job: j, resource: r, epoch }),
        }
    }

    /// Stops the job on `r`, feeds the outcome back and frees the machine.
    fn finish(&mut self, j: usize, r: usize, outcome: Outcome) -> Result<(), SimError> {
        self.policy.record_outcome(&self.jobs[j], r, outcome, self.now)?;
        match outcome {
            Outcome::Completed => {
                self.jobs[j].record_completion(self.now)?;
                self.remaining[j] = 0.0;
                self.census.completed += 1;
            }
            Outcome::Checkpointed => {
                self.jobs[j].record_eviction(self.now, Interruption::RuntimeLimit)?;
                let done = (self.now - self.started[j]) * self.resources[r].speed();
                self.remaining[j] -= done;
            }
            Outcome::Evicted | Outcome::Requeued => {
                self.jobs[j].record_eviction(self.now, Interruption::ResourceLeft)?;
                self.remaining[j] = self.jobs[j].work;
            }
        }
        self.resources[r].occupied_by = None;
        self.epoch[j] += 1;
        self.census.running -= 1;
        Ok(())
    }

    fn is_stale(&self, job: usize, epoch: u32) -> bool {
        self.epoch[job] != epoch
    }

    fn step(&mut self, ev: SimEvent) -> Result<bool, SimError> {
        match ev.kind {
            EventKind::JobComplete { job, epoch, .. } | EventKind::QueueLimitHit { job, epoch, .. }
                if self.is_stale(job, epoch) =>
            {
                return Ok(false);
            }
            _ => {}
        }
        if ev.time < self.now {
            return Err(SimError::EventInPast { now: self.now, event: ev.time });
        }
        self.now = ev.time;
        self.event_count += 1;
        let mut sweep = false;
        match ev.kind {
            EventKind::JobSubmit { job } => {
                self.policy.enqueue(&self.jobs[job], self.now);
                self.census.submitted += 1;
            }
            EventKind::JobComplete { job, resource, .. } => self.finish(job, resource, Outcome::Completed)?,
            EventKind::QueueLimitHit { job, resource, .. } => self.finish(job, resource, Outcome::Checkpointed)?,
            EventKind::ResourceLeave { resource } => {
                self.online[resource] = false;
                if let Some(id) = self.resources[resource].occupied_by.clone() {
                    self.finish(self.job_index[&id], resource, Outcome::Evicted)?;
                }
            }
            EventKind::ResourceJoin { resource } => {
                self.online[resource] = true;
                self.policy.resource_joined(resource, self.now);
            }
            EventKind::SchedulerSweep => {
                sweep = true;
                if let ScheduleMode::Periodic { interval } = self.cfg.mode {
                    let next = self.now + interval;
                    if next <= self.cfg.horizon {
                        self.push(next, EventKind::SchedulerSweep)?;
                    }
                }
            }
        }
        if sweep || self.cfg.mode == ScheduleMode::EventDriven {
            let grid = GridView::new(&self.resources, &self.online);
            let dispatches = self.policy.select(&grid, self.now);
            for d in dispatches {
                self.apply(d)?;
            }
        }
        self.census.queued = self.policy.queued();
        Ok(true)
    }
}

/// Runs the workload on a catalog whose availability schedules are already
/// installed. `observer` sees the job census after every processed event.
pub fn run_observed(
    catalog: Vec<ResourceRecord>,
    workload: Vec<JobRecord>,
    policy: &mut dyn SchedulerPolicy,
    cfg: SimConfig,
    observer: &mut dyn FnMut(SimTime, &Census),
) -> Result<SimResult, SimError> {
    validate_catalog(&catalog).map_err(SimError::InvalidCatalog)?;
    if !(cfg.horizon > 0.0) {
        return Err(SimError::BadHorizon);
    }
    let mut seen = HashSet::new();
    for job in &workload {
        if !seen.insert(&job.id) {
            return Err(SimError::DuplicateJob(job.id.clone()));
        }
        if job.submit_time > cfg.horizon {
            return Err(SimError::SubmitAfterHorizon(job.id.clone()));
        }
        if !(job.work > 0.0) {
            return Err(SimError::BadWork(job.id.clone()));
        }
    }

    let n_jobs = workload.len();
    let online = catalog.iter().map(|r| r.availability.intervals().first().is_some_and(|iv| iv.start <= 0.0)).collect();
    let mut engine = Engine {
        resource_index: catalog.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect(),
        job_index: workload.iter().enumerate().map(|(i, j)| (j.id.clone(), i)).collect(),
        remaining: workload.iter().map(|j| j.work).collect(),
        started: vec![0.0; n_jobs],
        epoch: vec![0; n_jobs],
        online,
        resources: catalog,
        jobs: workload,
        policy,
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0.0,
        cfg,
        census: Census { submitted: 0, completed: 0, running: 0, queued: 0, abandoned: 0 },
        event_count: 0,
    };
    for r in &mut engine.resources {
        r.occupied_by = None;
    }

    for j in 0..n_jobs {
        let t = engine.jobs[j].submit_time;
        engine.push(t, EventKind::JobSubmit { job: j })?;
    }
    for r in 0..engine.resources.len() {
        let intervals = engine.resources[r].availability.intervals().to_vec();
        for iv in intervals {
            if iv.start > 0.0 && iv.start < cfg.horizon {
                engine.push(iv.start, EventKind::ResourceJoin { resource: r })?;
            }
            if iv.end < cfg.horizon {
                engine.push(iv.end, EventKind::ResourceLeave { resource: r })?;
            }
        }
    }
    if let ScheduleMode::Periodic { interval } = cfg.mode {
        if !(interval > 0.0) {
            return Err(SimError::BadHorizon);
        }
        engine.push(0.0, EventKind::SchedulerSweep)?;
    }

    while let Some(Reverse(ev)) = engine.heap.pop() {
        if ev.time > cfg.horizon {
            break;
        }
        if engine.step(ev)? {
            observer(engine.now, &engine.census);
        }
    }

    let statuses = engine
        .jobs
        .iter()
        .map(|job| match job.status() {
            JobStatus::Running => JobStatus::Abandoned,
            s => s,
        })
        .collect();
    let grv = engine.policy.grv_table().map(|t| t.entries().map(|(id, s)| (id.clone(), *s)).collect());
    Ok(SimResult::new(engine.policy.kind(), engine.jobs, statuses, grv, engine.event_count, engine.now))
}

pub fn run_scheduled(
    catalog: Vec<ResourceRecord>,
    workload: Vec<JobRecord>,
    policy: &mut dyn SchedulerPolicy,
    cfg: SimConfig,
) -> Result<SimResult, SimError> {
    run_observed(catalog, workload, policy, cfg, &mut |_, _| {})
}

/// Generates churn for `catalog` and runs the workload event-driven up to
/// `horizon`.
pub fn run(
    mut catalog: Vec<ResourceRecord>,
    workload: Vec<JobRecord>,
    policy: &mut dyn SchedulerPolicy,
    churn: &ChurnModel,
    horizon: SimTime,
    seed: u64,
) -> Result<SimResult, SimError> {
    let schedules = generate_churn(&catalog, churn, horizon, seed);
    apply_schedules(&mut catalog, schedules);
    run_scheduled(catalog, workload, policy, SimConfig::new(horizon))
}
