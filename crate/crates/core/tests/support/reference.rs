//! Straight-line reference interpreter for small instances.
//!
//! Shares no code with the engine. There is no event heap and no epochs: at
//! every step the interpreter scans all machines and jobs for the next thing
//! that happens, applies it, and runs a scheduling pass. It is slow and only
//! meant for a handful of machines and jobs.

#[derive(Clone, Debug)]
pub struct RefMachine {
    pub id: String,
    pub class: String,
    pub nflops: f64,
    pub ncores: u32,
    /// Half-open `[start, end)` up intervals, sorted.
    pub up: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct RefJob {
    pub id: String,
    pub submit: f64,
    pub work: f64,
    pub class: Option<String>,
    pub estimate: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct RefGrv {
    pub rbase: f64,
    pub ra_max: f64,
    pub ra_rate: f64,
    pub js_init: f64,
    pub reward: f64,
    pub penalty: f64,
    pub js_min: f64,
    pub js_max: f64,
    pub w: [f64; 3],
}

#[derive(Clone, Debug)]
pub enum RefPolicy {
    Grv(RefGrv),
    Fcfs,
    /// `(runtime_limit, priority)` per queue; estimates for jobs without one
    /// are `work / node_speed`.
    Cluster {
        queues: Vec<(f64, i64)>,
        node_speed: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Dispatched(String, f64),
    Evicted(f64),
    LimitHit(f64),
    Completed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Queued,
    Completed,
    Abandoned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefOutcome {
    pub histories: Vec<Vec<Step>>,
    pub ends: Vec<End>,
    /// Final `(js, uptime_anchor)` per machine under GRV.
    pub grv: Option<Vec<(f64, f64)>>,
    pub events: u64,
}

#[derive(Clone, Copy, Debug)]
struct Running {
    machine: usize,
    started: f64,
    /// Absolute time the run ends and whether that end is a queue limit.
    ends_at: f64,
    limit_hit: bool,
    serial: u64,
}

/// `sweep`: scheduling passes only at multiples of this period instead of
/// after every event.
pub fn simulate(
    machines: &[RefMachine],
    jobs: &[RefJob],
    policy: &RefPolicy,
    horizon: f64,
    sweep: Option<f64>,
) -> RefOutcome {
    let nm = machines.len();
    let nj = jobs.len();
    let speed: Vec<f64> = machines.iter().map(|m| m.nflops * m.ncores as f64).collect();

    let mut online: Vec<bool> = machines.iter().map(|m| m.up.first().is_some_and(|iv| iv.0 <= 0.0)).collect();
    // index of the interval a machine is in (if online) or waits for (if offline)
    let mut cursor: Vec<usize> = vec![0; nm];
    let mut host: Vec<Option<usize>> = vec![None; nm];
    let mut running: Vec<Option<Running>> = vec![None; nj];
    let mut submitted = vec![false; nj];
    let mut remaining: Vec<f64> = jobs.iter().map(|j| j.work).collect();
    let mut histories: Vec<Vec<Step>> = vec![Vec::new(); nj];
    let mut completed = vec![false; nj];
    let mut serial = 0u64;
    let mut events = 0u64;
    let mut now = 0.0f64;
    let mut next_sweep = sweep.map(|_| 0.0);

    // GRV state: js and anchor per machine; ra is derived on demand.
    let mut js: Vec<f64> = Vec::new();
    let mut anchor: Vec<f64> = vec![0.0; nm];
    if let RefPolicy::Grv(g) = policy {
        js = vec![g.js_init; nm];
    }

    // FIFO for grid policies; one line per queue for the cluster, in priority order.
    let mut fifo: Vec<usize> = Vec::new();
    let mut lines: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut line_of: Vec<usize> = vec![usize::MAX; nj];
    if let RefPolicy::Cluster { queues, .. } = policy {
        let mut qs = queues.clone();
        qs.sort_by_key(|q| q.1);
        lines = qs.into_iter().map(|(limit, _)| (limit, Vec::new())).collect();
    }

    loop {
        // Next happening: (time, rank, tiebreak, what).
        #[derive(Clone, Copy)]
        enum What {
            Leave(usize),
            End(usize),
            Submit(usize),
            Join(usize),
            Sweep,
        }
        let mut best: Option<(f64, u8, u64, What)> = None;
        let mut offer = |c: (f64, u8, u64, What)| {
            let better = match &best {
                None => true,
                Some(b) => c.0 < b.0 || (c.0 == b.0 && (c.1 < b.1 || (c.1 == b.1 && c.2 < b.2))),
            };
            if better {
                best = Some(c);
            }
        };
        for m in 0..nm {
            if online[m] {
                let end = machines[m].up[cursor[m]].1;
                if end < horizon {
                    offer((end, 0, m as u64, What::Leave(m)));
                }
            } else {
                let c = cursor[m];
                if let Some(&(start, _)) = machines[m].up.get(c) {
                    if start > 0.0 && start < horizon {
                        offer((start, 3, m as u64, What::Join(m)));
                    }
                }
            }
        }
        for j in 0..nj {
            if let Some(r) = running[j] {
                offer((r.ends_at, 1, r.serial, What::End(j)));
            }
            if !submitted[j] {
                offer((jobs[j].submit, 2, j as u64, What::Submit(j)));
            }
        }
        if let Some(t) = next_sweep {
            offer((t, 4, 0, What::Sweep));
        }
        let Some((t, _, _, what)) = best else { break };
        if t > horizon {
            break;
        }
        assert!(t >= now, "reference clock went backwards");
        now = t;
        events += 1;
        let mut pass_now = sweep.is_none();

        let mut stop =
            |j: usize, m: usize, kind: u8, host: &mut Vec<Option<usize>>, running: &mut Vec<Option<Running>>| {
                // kind: 0 completed, 1 evicted, 2 limit
                let r = running[j].take().unwrap();
                if let RefPolicy::Grv(g) = policy {
                    let v = if kind == 0 { js[m] + g.reward } else { js[m] - g.penalty };
                    js[m] = v.clamp(g.js_min, g.js_max);
                }
                match kind {
                    0 => {
                        histories[j].push(Step::Completed(now));
                        completed[j] = true;
                        remaining[j] = 0.0;
                    }
                    1 => {
                        histories[j].push(Step::Evicted(now));
                        remaining[j] = jobs[j].work;
                    }
                    _ => {
                        histories[j].push(Step::LimitHit(now));
                        remaining[j] -= (now - r.started) * speed[m];
                    }
                }
                host[m] = None;
                if kind != 0 {
                    match policy {
                        RefPolicy::Cluster { .. } => lines[line_of[j]].1.insert(0, j),
                        _ => fifo.push(j),
                    }
                }
            };

        match what {
            What::Leave(m) => {
                online[m] = false;
                cursor[m] += 1;
                if let Some(j) = host[m] {
                    stop(j, m, 1, &mut host, &mut running);
                }
            }
            What::End(j) => {
                let r = running[j].unwrap();
                stop(j, r.machine, if r.limit_hit { 2 } else { 0 }, &mut host, &mut running);
            }
            What::Submit(j) => {
                submitted[j] = true;
                match policy {
                    RefPolicy::Cluster { node_speed, .. } => {
                        let est = jobs[j].estimate.unwrap_or(jobs[j].work / node_speed);
                        let mut pick: Option<usize> = None;
                        for (i, (limit, _)) in lines.iter().enumerate() {
                            if *limit >= est && pick.is_none_or(|p| *limit < lines[p].0) {
                                pick = Some(i);
                            }
                        }
                        let longest =
                            (0..lines.len()).fold(0, |acc, i| if lines[i].0 > lines[acc].0 { i } else { acc });
                        let line = pick.unwrap_or(longest);
                        line_of[j] = line;
                        lines[line].1.push(j);
                    }
                    _ => fifo.push(j),
                }
            }
            What::Join(m) => {
                online[m] = true;
                anchor[m] = now;
            }
            What::Sweep => {
                pass_now = true;
                let next = now + sweep.unwrap();
                next_sweep = if next <= horizon { Some(next) } else { None };
            }
        }

        if !pass_now {
            continue;
        }
        // Scheduling pass.
        let mut taken = vec![false; nm];
        let free = |m: usize, taken: &[bool], host: &[Option<usize>]| online[m] && host[m].is_none() && !taken[m];
        let fits = |j: usize, m: usize| jobs[j].class.as_ref().is_none_or(|c| *c == machines[m].class);
        let mut start = |j: usize, m: usize, limit: Option<f64>, host: &mut Vec<Option<usize>>| {
            histories[j].push(Step::Dispatched(machines[m].id.clone(), now));
            host[m] = Some(j);
            let runtime = remaining[j] / speed[m];
            let (ends_at, limit_hit) = match limit {
                Some(l) if runtime > l => (now + l, true),
                _ => (now + runtime, false),
            };
            running[j] = Some(Running { machine: m, started: now, ends_at, limit_hit, serial });
            serial += 1;
        };
        match policy {
            RefPolicy::Fcfs => {
                let mut left = Vec::new();
                for &j in &fifo {
                    match (0..nm).find(|&m| free(m, &taken, &host) && fits(j, m)) {
                        Some(m) => {
                            taken[m] = true;
                            start(j, m, None, &mut host);
                        }
                        None => left.push(j),
                    }
                }
                fifo = left;
            }
            RefPolicy::Grv(g) => {
                let mut left = Vec::new();
                for &j in &fifo {
                    let cands: Vec<usize> = (0..nm).filter(|&m| free(m, &taken, &host) && fits(j, m)).collect();
                    if cands.is_empty() {
                        left.push(j);
                        continue;
                    }
                    let ra = |m: usize| (g.rbase + g.ra_rate * ((now - anchor[m]) / 3600.0)).min(g.ra_max);
                    let ca = |m: usize| machines[m].nflops * machines[m].ncores as f64;
                    let attrs: Vec<[f64; 3]> = cands.iter().map(|&m| [ra(m), js[m], ca(m)]).collect();
                    let mut lo = attrs[0];
                    let mut hi = attrs[0];
                    for a in &attrs {
                        for k in 0..3 {
                            lo[k] = lo[k].min(a[k]);
                            hi[k] = hi[k].max(a[k]);
                        }
                    }
                    let norm = |k: usize, v: f64| if hi[k] > lo[k] { (v - lo[k]) / (hi[k] - lo[k]) } else { 0.0 };
                    let mut chosen = cands[0];
                    let mut top = f64::NEG_INFINITY;
                    for (i, &m) in cands.iter().enumerate() {
                        let a = attrs[i];
                        let s = g.w[0] * norm(0, a[0]) + g.w[1] * norm(1, a[1]) + g.w[2] * norm(2, a[2]);
                        if s > top {
                            top = s;
                            chosen = m;
                        }
                    }
                    taken[chosen] = true;
                    start(j, chosen, None, &mut host);
                }
                fifo = left;
            }
            RefPolicy::Cluster { .. } => {
                for line in lines.iter_mut() {
                    let limit = line.0;
                    let mut left = Vec::new();
                    for &j in &line.1 {
                        match (0..nm).find(|&m| free(m, &taken, &host) && fits(j, m)) {
                            Some(m) => {
                                taken[m] = true;
                                start(j, m, Some(limit), &mut host);
                            }
                            None => left.push(j),
                        }
                    }
                    line.1 = left;
                }
            }
        }
    }

    let ends = (0..nj)
        .map(|j| {
            if completed[j] {
                End::Completed
            } else if running[j].is_some() {
                End::Abandoned
            } else {
                End::Queued
            }
        })
        .collect();
    let grv = matches!(policy, RefPolicy::Grv(_)).then(|| js.iter().copied().zip(anchor.iter().copied()).collect());
    RefOutcome { histories, ends, grv, events }
}
