//! Value types shared by every part of the simulator.
//!
//! Time is expressed in simulated seconds ([`SimTime`]). Job size is a service
//! demand in floating-point operations, so the wall-clock runtime of a job on a
//! resource is `work / (nflops * ncores)`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in seconds.
pub type SimTime = f64;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

macro_rules! label_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(label: impl Into<String>) -> Self {
                Self(label.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

label_newtype!(
    /// Machine category label such as `INTEL/WINNT5`.
    ResourceClass
);
label_newtype!(ResourceId);
label_newtype!(JobId);

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("interval [{start}, {end}) is empty or reversed")]
    EmptyInterval { start: SimTime, end: SimTime },
    #[error("interval starting at {start} overlaps or precedes the previous one ending at {prev_end}")]
    UnorderedIntervals { prev_end: SimTime, start: SimTime },
    #[error("weights must be finite, non-negative and sum to a positive value")]
    InvalidWeights,
    #[error("invalid GRV parameters: {0}")]
    InvalidParams(&'static str),
    #[error("job {job}: {what}")]
    Lifecycle { job: JobId, what: &'static str },
}

/// Half-open interval `[start, end)` in simulated seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: SimTime,
    pub end: SimTime,
}

impl Interval {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn len(&self) -> SimTime {
        self.end - self.start
    }
}

/// Periods during which a resource accepts grid work. Intervals are disjoint,
/// sorted and non-empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AvailabilitySchedule {
    intervals: Vec<Interval>,
}

impl AvailabilitySchedule {
    pub fn new(intervals: Vec<Interval>) -> Result<Self, DomainError> {
        let mut prev_end = f64::NEG_INFINITY;
        for iv in &intervals {
            if !(iv.end > iv.start) || iv.start.is_nan() {
                return Err(DomainError::EmptyInterval { start: iv.start, end: iv.end });
            }
            if iv.start < prev_end {
                return Err(DomainError::UnorderedIntervals { prev_end, start: iv.start });
            }
            prev_end = iv.end;
        }
        Ok(Self { intervals })
    }

    /// A single interval covering `[0, horizon)`.
    pub fn always(horizon: SimTime) -> Self {
        Self { intervals: vec![Interval::new(0.0, horizon)] }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_available(&self, t: SimTime) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.end <= t);
        self.intervals.get(idx).is_some_and(|iv| iv.contains(t))
    }
}

/// One machine of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceRecord {
    pub id: ResourceId,
    pub class: ResourceClass,
    /// Floating-point operations per second per core.
    pub nflops: f64,
    pub ncores: u32,
    /// Dedicated cluster nodes never churn.
    pub dedicated: bool,
    pub availability: AvailabilitySchedule,
    pub occupied_by: Option<JobId>,
}

impl ResourceRecord {
    pub fn new(id: impl Into<String>, class: impl Into<String>, nflops: f64, ncores: u32) -> Self {
        Self {
            id: ResourceId::new(id),
            class: ResourceClass::new(class),
            nflops,
            ncores,
            dedicated: false,
            availability: AvailabilitySchedule::default(),
            occupied_by: None,
        }
    }

    pub fn with_availability(mut self, availability: AvailabilitySchedule) -> Self {
        self.availability = availability;
        self
    }

    pub fn dedicated(mut self, dedicated: bool) -> Self {
        self.dedicated = dedicated;
        self
    }

    /// Aggregate speed in flops: `nflops * ncores`.
    pub fn speed(&self) -> f64 {
        self.nflops * f64::from(self.ncores)
    }

    /// Seconds needed to execute `work` flops on this machine.
    pub fn runtime_for(&self, work: f64) -> SimTime {
        work / self.speed()
    }
}

/// Ids and labels are stored in delimited text files; they may not contain
/// whitespace or the delimiters those files use.
pub fn is_plain_label(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || matches!(c, ',' | ';' | '@'))
}

/// A failed catalog invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogViolation {
    pub resource: ResourceId,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for CatalogViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "resource {}: {}: {}", self.resource, self.field, self.message)
    }
}

/// Checks every [`ResourceRecord`] invariant plus id uniqueness. Violations are
/// returned as data; an empty catalog is valid.
pub fn validate_catalog(resources: &[ResourceRecord]) -> Result<(), Vec<CatalogViolation>> {
    let mut violations = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |r: &ResourceRecord, field, message: String| {
        violations.push(CatalogViolation { resource: r.id.clone(), field, message });
    };
    for r in resources {
        if r.id.as_str().is_empty() {
            push(r, "id", "empty id".into());
        } else if !is_plain_label(r.id.as_str()) {
            push(r, "id", "contains whitespace or a reserved character (, ; @)".into());
        }
        if !seen.insert(&r.id) {
            push(r, "id", "duplicate id".into());
        }
        if !is_plain_label(r.class.as_str()) {
            push(r, "class", "empty label or reserved character".into());
        }
        if !(r.nflops > 0.0 && r.nflops.is_finite()) {
            push(r, "nflops", format!("must be a positive finite number, got {}", r.nflops));
        }
        if r.ncores < 1 {
            push(r, "ncores", "must be at least 1".into());
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Why a running job was stopped before finishing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Interruption {
    /// The machine left the grid (owner reclaimed it).
    ResourceLeft,
    /// A cluster queue's runtime limit was reached.
    RuntimeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LifecycleEvent {
    Dispatched { resource: ResourceId, time: SimTime },
    Evicted { time: SimTime, cause: Interruption },
    Completed { time: SimTime },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JobStatus {
    Queued,
    Running,
    Completed,
    /// Still running when the simulation horizon was reached.
    Abandoned,
}

impl JobStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Queued => "queued",
            JobStatus::Running => "running",
            JobStatus::Completed => "completed",
            JobStatus::Abandoned => "abandoned",
        }
    }
}

/// One independent, monolithic job.
#[derive(Clone, Debug, PartialEq)]
pub struct JobRecord {
    pub id: JobId,
    pub submit_time: SimTime,
    /// Service demand in flops.
    pub work: f64,
    pub required_class: Option<ResourceClass>,
    /// User-declared runtime in seconds, used only for cluster queue selection.
    pub runtime_estimate: Option<SimTime>,
    history: Vec<LifecycleEvent>,
    restarts: u32,
}

impl JobRecord {
    pub fn new(id: impl Into<String>, submit_time: SimTime, work: f64) -> Self {
        Self {
            id: JobId::new(id),
            submit_time,
            work,
            required_class: None,
            runtime_estimate: None,
            history: Vec::new(),
            restarts: 0,
        }
    }

    pub fn requiring(mut self, class: impl Into<String>) -> Self {
        self.required_class = Some(ResourceClass::new(class));
        self
    }

    pub fn with_estimate(mut self, seconds: SimTime) -> Self {
        self.runtime_estimate = Some(seconds);
        self
    }

    pub fn history(&self) -> &[LifecycleEvent] {
        &self.history
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    /// True when the job may run on a machine of `class`.
    pub fn matches(&self, class: &ResourceClass) -> bool {
        self.required_class.as_ref().is_none_or(|c| c == class)
    }

    pub fn is_dispatched(&self) -> bool {
        matches!(self.history.last(), Some(LifecycleEvent::Dispatched { .. }))
    }

    pub fn is_completed(&self) -> bool {
        matches!(self.history.last(), Some(LifecycleEvent::Completed { .. }))
    }

    /// Status derived from the lifecycle history alone.
    pub fn status(&self) -> JobStatus {
        match self.history.last() {
            Some(LifecycleEvent::Dispatched { .. }) => JobStatus::Running,
            Some(LifecycleEvent::Completed { .. }) => JobStatus::Completed,
            _ => JobStatus::Queued,
        }
    }

    /// The machine currently hosting the job, if any.
    pub fn host(&self) -> Option<&ResourceId> {
        match self.history.last() {
            Some(LifecycleEvent::Dispatched { resource, .. }) => Some(resource),
            _ => None,
        }
    }

    fn lifecycle_err(&self, what: &'static str) -> DomainError {
        DomainError::Lifecycle { job: self.id.clone(), what }
    }

    pub fn record_dispatch(&mut self, resource: ResourceId, time: SimTime) -> Result<(), DomainError> {
        match self.history.last() {
            Some(LifecycleEvent::Dispatched { .. }) => Err(self.lifecycle_err("already running")),
            Some(LifecycleEvent::Completed { .. }) => Err(self.lifecycle_err("already completed")),
            _ => {
                self.history.push(LifecycleEvent::Dispatched { resource, time });
                Ok(())
            }
        }
    }

    pub fn record_eviction(&mut self, time: SimTime, cause: Interruption) -> Result<(), DomainError> {
        if !self.is_dispatched() {
            return Err(self.lifecycle_err("evicted while not running"));
        }
        self.history.push(LifecycleEvent::Evicted { time, cause });
        self.restarts += 1;
        Ok(())
    }

    pub fn record_completion(&mut self, time: SimTime) -> Result<(), DomainError> {
        if !self.is_dispatched() {
            return Err(self.lifecycle_err("completed while not running"));
        }
        self.history.push(LifecycleEvent::Completed { time });
        Ok(())
    }

    /// Rebuilds a record from a stored history, re-deriving the restart count.
    pub fn with_history(mut self, history: Vec<LifecycleEvent>) -> Result<Self, DomainError> {
        if let Some(pos) = history.iter().position(|e| matches!(e, LifecycleEvent::Completed { .. })) {
            if pos + 1 != history.len() {
                return Err(self.lifecycle_err("completion is not the last history entry"));
            }
        }
        self.restarts = history.iter().filter(|e| matches!(e, LifecycleEvent::Evicted { .. })).count() as u32;
        self.history = history;
        Ok(self)
    }
}

/// Per-resource Grid Resource Vector components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrvState {
    /// Resource availability score, within `[rbase, ra_max]`.
    pub ra: f64,
    /// Job success score.
    pub js: f64,
    /// Custom attribute: `nflops * ncores`.
    pub ca: f64,
    /// Start of the current continuous-availability stretch.
    pub uptime_anchor: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl WeightVector {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self, DomainError> {
        let w = Self { w1, w2, w3 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let ws = [self.w1, self.w2, self.w3];
        if ws.iter().all(|w| w.is_finite() && *w >= 0.0) && ws.iter().sum::<f64>() > 0.0 {
            Ok(())
        } else {
            Err(DomainError::InvalidWeights)
        }
    }

    pub fn equal() -> Self {
        Self { w1: 0.33, w2: 0.33, w3: 0.33 }
    }
}

impl Default for WeightVector {
    fn default() -> Self {
        Self::equal()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrvParams {
    pub rbase: f64,
    pub ra_max: f64,
    /// RA growth per hour of continuous uptime.
    pub ra_rate: f64,
    pub js_init: f64,
    pub reward: f64,
    pub penalty: f64,
    pub js_min: f64,
    pub js_max: f64,
}

impl Default for GrvParams {
    fn default() -> Self {
        Self {
            rbase: 1.0,
            ra_max: 10.0,
            ra_rate: 0.1,
            js_init: 0.0,
            reward: 1.0,
            penalty: 1.0,
            js_min: -100.0,
            js_max: 100.0,
        }
    }
}

impl GrvParams {
    /// Same parameters with the JS clamp removed.
    pub fn unclamped(self) -> Self {
        Self { js_min: f64::NEG_INFINITY, js_max: f64::INFINITY, ..self }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if !(self.rbase.is_finite() && self.ra_max.is_finite() && self.rbase <= self.ra_max) {
            return Err(DomainError::InvalidParams("rbase must not exceed ra_max"));
        }
        if !(self.ra_rate >= 0.0 && self.ra_rate.is_finite()) {
            return Err(DomainError::InvalidParams("ra_rate must be non-negative"));
        }
        if !(self.reward > 0.0 && self.penalty > 0.0) {
            return Err(DomainError::InvalidParams("reward and penalty must be positive"));
        }
        if !(self.js_min <= self.js_init && self.js_init <= self.js_max) {
            return Err(DomainError::InvalidParams("js_init must lie within [js_min, js_max]"));
        }
        Ok(())
    }
}
