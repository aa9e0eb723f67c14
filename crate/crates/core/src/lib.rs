//! Trace-driven simulation of a heterogeneous campus grid under three
//! dispatch policies: Grid Resource Vector (GRV) ranking, first-come-first-served
//! matching, and a dedicated cluster with runtime-limited queues.
//!
//! The crate is organised bottom-up: [`domain`] value types, [`grv`] scoring,
//! [`schedulers`] policies, the [`simulator`] event engine, [`traces`] file
//! formats and generators, [`metrics`] throughput reports, and [`experiment`]
//! which ties them together for the command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod experiment;
pub mod grv;
pub mod metrics;
pub mod schedulers;
pub mod seed;
pub mod simulator;
pub mod traces;

pub use domain::{
    validate_catalog, AvailabilitySchedule, GrvParams, GrvState, Interval, JobId, JobRecord, JobStatus, LifecycleEvent,
    ResourceClass, ResourceId, ResourceRecord, SimTime, WeightVector,
};
pub use grv::{GrvTable, Outcome};
pub use metrics::{compare, compute_report, ComparisonTable, MetricsReport};
pub use schedulers::{ClusterPolicy, ClusterQueue, Dispatch, FcfsPolicy, GrvPolicy, PolicyKind, SchedulerPolicy};
pub use simulator::{run, ChurnModel, SimConfig, SimResult};
