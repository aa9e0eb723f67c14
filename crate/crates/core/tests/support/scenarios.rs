//! Small scripted instances, run through both the engine and the reference
//! interpreter.

use gridsim_core::domain::{AvailabilitySchedule, Interval, LifecycleEvent};
use gridsim_core::schedulers::{ClusterQueue, EstimateModel};
use gridsim_core::simulator::{run_scheduled, ScheduleMode, SimConfig};
use gridsim_core::{
    ClusterPolicy, FcfsPolicy, GrvParams, GrvPolicy, JobRecord, JobStatus, ResourceRecord, SchedulerPolicy, SimResult,
    WeightVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::{self, End, RefGrv, RefJob, RefMachine, RefOutcome, RefPolicy, Step};

#[derive(Clone, Debug)]
pub struct Instance {
    pub machines: Vec<RefMachine>,
    pub jobs: Vec<RefJob>,
    pub horizon: f64,
    pub sweep: Option<f64>,
}

pub const CLASSES: [&str; 2] = ["A", "B"];

/// Random instance with integer times: ≤ 4 machines, ≤ 6 jobs.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 60.0;
    let n_m = rng.random_range(1..=4);
    let machines = (0..n_m)
        .map(|i| {
            let mut up = Vec::new();
            let mut t: f64 = if rng.random_bool(0.7) { 0.0 } else { rng.random_range(1..=6) as f64 };
            let always = rng.random_bool(0.2);
            while t < horizon + 10.0 {
                let len = if always { horizon + 20.0 } else { rng.random_range(1..=14) as f64 };
                up.push((t, t + len));
                // touching intervals exercise leave-then-join at one instant
                t += len + rng.random_range(0..=6) as f64;
            }
            RefMachine {
                id: format!("m{i}"),
                class: CLASSES[rng.random_range(0..2)].to_owned(),
                nflops: [1.0, 2.0, 4.0][rng.random_range(0..3)],
                ncores: rng.random_range(1..=2),
                up,
            }
        })
        .collect();
    let n_j = rng.random_range(1..=6);
    let mut jobs: Vec<RefJob> = (0..n_j)
        .map(|i| RefJob {
            id: format!("j{i}"),
            submit: rng.random_range(0..=20) as f64,
            work: rng.random_range(1..=24) as f64 * 2.0,
            class: rng.random_bool(0.25).then(|| CLASSES[rng.random_range(0..2)].to_owned()),
            estimate: rng.random_bool(0.3).then(|| rng.random_range(1..=30) as f64),
        })
        .collect();
    jobs.sort_by(|a, b| a.submit.total_cmp(&b.submit));
    let sweep = rng.random_bool(0.15).then(|| rng.random_range(1..=5) as f64);
    Instance { machines, jobs, horizon, sweep }
}

pub fn grv_settings(seed: u64) -> RefGrv {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let w = match rng.random_range(0..5) {
        0 => [1.0, 0.0, 0.0],
        1 => [0.0, 1.0, 0.0],
        2 => [0.0, 0.0, 1.0],
        3 => [0.33, 0.33, 0.33],
        _ => [0.5, 0.3, 0.2],
    };
    RefGrv {
        rbase: 1.0,
        ra_max: 10.0,
        // one RA point per second of up-time, so the cap is reachable within an instance
        ra_rate: 3600.0,
        js_init: 0.0,
        reward: 1.0,
        penalty: 1.0,
        js_min: -2.0,
        js_max: 3.0,
        w,
    }
}

pub fn cluster_queues(seed: u64) -> Vec<(f64, i64)> {
    if seed.is_multiple_of(2) {
        vec![(4.0, 0), (12.0, 1)]
    } else {
        vec![(30.0, 2), (3.0, 0), (8.0, 1)]
    }
}

pub const NODE_SPEED: f64 = 2.0;

pub fn catalog(inst: &Instance) -> Vec<ResourceRecord> {
    inst.machines
        .iter()
        .map(|m| {
            let ivs = m.up.iter().map(|&(a, b)| Interval::new(a, b)).collect();
            ResourceRecord::new(m.id.as_str(), m.class.as_str(), m.nflops, m.ncores)
                .with_availability(AvailabilitySchedule::new(ivs).unwrap())
        })
        .collect()
}

pub fn workload(inst: &Instance) -> Vec<JobRecord> {
    inst.jobs
        .iter()
        .map(|j| {
            let mut rec = JobRecord::new(j.id.as_str(), j.submit, j.work);
            if let Some(c) = &j.class {
                rec = rec.requiring(c.as_str());
            }
            if let Some(e) = j.estimate {
                rec = rec.with_estimate(e);
            }
            rec
        })
        .collect()
}

pub fn engine_policy(policy: &RefPolicy, catalog: &[ResourceRecord]) -> Box<dyn SchedulerPolicy> {
    match policy {
        RefPolicy::Fcfs => Box::new(FcfsPolicy::new()),
        RefPolicy::Grv(g) => {
            let params = GrvParams {
                rbase: g.rbase,
                ra_max: g.ra_max,
                ra_rate: g.ra_rate,
                js_init: g.js_init,
                reward: g.reward,
                penalty: g.penalty,
                js_min: g.js_min,
                js_max: g.js_max,
            };
            let weights = WeightVector::new(g.w[0], g.w[1], g.w[2]).unwrap();
            Box::new(GrvPolicy::new(catalog, params, weights))
        }
        RefPolicy::Cluster { queues, node_speed } => {
            let qs = queues.iter().enumerate().map(|(i, &(l, p))| ClusterQueue::new(format!("q{i}"), l, p)).collect();
            Box::new(ClusterPolicy::new(qs, *node_speed, EstimateModel::Derived { error_sigma: 0.0 }, 7).unwrap())
        }
    }
}

pub fn run_engine(inst: &Instance, policy: &RefPolicy) -> SimResult {
    let catalog = catalog(inst);
    let mut p = engine_policy(policy, &catalog);
    let mode = match inst.sweep {
        Some(interval) => ScheduleMode::Periodic { interval },
        None => ScheduleMode::EventDriven,
    };
    run_scheduled(catalog, workload(inst), p.as_mut(), SimConfig { horizon: inst.horizon, mode }).unwrap()
}

pub fn run_reference(inst: &Instance, policy: &RefPolicy) -> RefOutcome {
    reference::simulate(&inst.machines, &inst.jobs, policy, inst.horizon, inst.sweep)
}

/// Engine result in the reference interpreter's vocabulary.
pub fn translate(res: &SimResult) -> RefOutcome {
    let histories = res
        .jobs
        .iter()
        .map(|j| {
            j.history()
                .iter()
                .map(|e| match e {
                    LifecycleEvent::Dispatched { resource, time } => Step::Dispatched(resource.to_string(), *time),
                    LifecycleEvent::Evicted { time, cause } => match cause {
                        gridsim_core::domain::Interruption::ResourceLeft => Step::Evicted(*time),
                        gridsim_core::domain::Interruption::RuntimeLimit => Step::LimitHit(*time),
                    },
                    LifecycleEvent::Completed { time } => Step::Completed(*time),
                })
                .collect()
        })
        .collect();
    let ends = res
        .statuses
        .iter()
        .map(|s| match s {
            JobStatus::Queued => End::Queued,
            JobStatus::Completed => End::Completed,
            JobStatus::Abandoned | JobStatus::Running => End::Abandoned,
        })
        .collect();
    let grv = res.grv.as_ref().map(|g| g.iter().map(|(_, s)| (s.js, s.uptime_anchor)).collect());
    RefOutcome { histories, ends, grv, events: res.event_count }
}

pub fn policies(seed: u64) -> [RefPolicy; 3] {
    [
        RefPolicy::Grv(grv_settings(seed)),
        RefPolicy::Fcfs,
        RefPolicy::Cluster { queues: cluster_queues(seed), node_speed: NODE_SPEED },
    ]
}
