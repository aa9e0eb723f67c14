//! The three scripted cluster scenarios, run end to end through the engine.

use gridsim_core::domain::{AvailabilitySchedule, Interruption, Interval, LifecycleEvent, SECONDS_PER_HOUR};
use gridsim_core::schedulers::{ClusterQueue, EstimateModel};
use gridsim_core::simulator::{run_scheduled, SimConfig};
use gridsim_core::{ClusterPolicy, JobRecord, ResourceId, ResourceRecord, SimResult};

const H: f64 = SECONDS_PER_HOUR;
const SPEED: f64 = 1e9;

fn node(id: &str, from_h: f64) -> ResourceRecord {
    let sched = AvailabilitySchedule::new(vec![Interval::new(from_h * H, 1000.0 * H)]).unwrap();
    ResourceRecord::new(id, "CLUSTER", SPEED, 1).dedicated(true).with_availability(sched)
}

fn job(id: &str, submit_h: f64, runtime_h: f64, estimate_h: f64) -> JobRecord {
    JobRecord::new(id, submit_h * H, runtime_h * H * SPEED).with_estimate(estimate_h * H)
}

fn simulate(nodes: Vec<ResourceRecord>, jobs: Vec<JobRecord>) -> SimResult {
    let queues = vec![ClusterQueue::new("q48", 48.0 * H, 0), ClusterQueue::new("q120", 120.0 * H, 1)];
    let mut policy = ClusterPolicy::new(queues, SPEED, EstimateModel::Declared, 0).unwrap();
    run_scheduled(nodes, jobs, &mut policy, SimConfig::new(1000.0 * H)).unwrap()
}

fn dispatched(r: &str, h: f64) -> LifecycleEvent {
    LifecycleEvent::Dispatched { resource: ResourceId::new(r), time: h * H }
}

fn expect(what: &str, got: &[LifecycleEvent], want: &[LifecycleEvent]) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, want {want:?}"))
    }
}

/// One free node and one job waiting in each of the 48 h and 120 h queues:
/// the 48 h job runs first even though it was submitted later.
pub fn priority_by_limit() -> Result<(), String> {
    let res = simulate(vec![node("n0", 1.0)], vec![job("long", 0.0, 10.0, 100.0), job("short", 0.0, 10.0, 10.0)]);
    expect("short job", res.jobs[1].history(), &[dispatched("n0", 1.0), LifecycleEvent::Completed { time: 11.0 * H }])?;
    expect("long job", res.jobs[0].history(), &[dispatched("n0", 11.0), LifecycleEvent::Completed { time: 21.0 * H }])
}

/// A job needing 50 h in the 48 h queue runs 48 h, is checkpoint-terminated,
/// returns to the head of its queue and finishes 2 h later with one restart.
pub fn checkpoint_at_limit() -> Result<(), String> {
    let res = simulate(vec![node("n0", 0.0)], vec![job("j", 0.0, 50.0, 40.0)]);
    let j = &res.jobs[0];
    expect(
        "50 h job",
        j.history(),
        &[
            dispatched("n0", 0.0),
            LifecycleEvent::Evicted { time: 48.0 * H, cause: Interruption::RuntimeLimit },
            dispatched("n0", 48.0),
            LifecycleEvent::Completed { time: 50.0 * H },
        ],
    )?;
    if j.restarts() != 1 {
        return Err(format!("restarts = {}, want 1", j.restarts()));
    }
    Ok(())
}

/// The checkpointed job goes back ahead of a job that has been waiting in the
/// same queue since hour 1.
pub fn head_of_queue_requeue() -> Result<(), String> {
    let res = simulate(vec![node("n0", 0.0)], vec![job("x", 0.0, 50.0, 40.0), job("y", 1.0, 5.0, 5.0)]);
    expect(
        "requeued job",
        res.jobs[0].history(),
        &[
            dispatched("n0", 0.0),
            LifecycleEvent::Evicted { time: 48.0 * H, cause: Interruption::RuntimeLimit },
            dispatched("n0", 48.0),
            LifecycleEvent::Completed { time: 50.0 * H },
        ],
    )?;
    expect(
        "waiting job",
        res.jobs[1].history(),
        &[dispatched("n0", 50.0), LifecycleEvent::Completed { time: 55.0 * H }],
    )
}
