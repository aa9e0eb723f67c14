use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::{GrvState, Interruption, JobRecord, JobStatus, LifecycleEvent, ResourceClass, ResourceId, SimTime};
use crate::schedulers::PolicyKind;

const MAGIC: &str = "#gridsim-simresult v1";

/// Final state of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub label: String,
    pub policy: PolicyKind,
    /// Free-form annotations (seed, arm index) carried through serialization.
    pub meta: BTreeMap<String, String>,
    pub jobs: Vec<JobRecord>,
    pub statuses: Vec<JobStatus>,
    pub grv: Option<Vec<(ResourceId, GrvState)>>,
    pub event_count: u64,
    /// Simulated time of the last processed event.
    pub elapsed: SimTime,
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ResultParseError {
    pub line: usize,
    pub message: String,
}

fn perr(line: usize, message: impl Into<String>) -> ResultParseError {
    ResultParseError { line, message: message.into() }
}

impl SimResult {
    pub fn new(
        policy: PolicyKind,
        jobs: Vec<JobRecord>,
        statuses: Vec<JobStatus>,
        grv: Option<Vec<(ResourceId, GrvState)>>,
        event_count: u64,
        elapsed: SimTime,
    ) -> Self {
        Self {
            label: policy.as_str().to_owned(),
            policy,
            meta: BTreeMap::new(),
            jobs,
            statuses,
            grv,
            event_count,
            elapsed,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn count(&self, status: JobStatus) -> usize {
        self.statuses.iter().filter(|s| **s == status).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let _ = writeln!(out, "label\t{}", self.label);
        let _ = writeln!(out, "policy\t{}", self.policy.as_str());
        let _ = writeln!(out, "events\t{}", self.event_count);
        let _ = writeln!(out, "elapsed_s\t{}", self.elapsed);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta.{k}\t{v}");
        }
        out.push_str("[jobs]\nid\tsubmit_s\twork\trequired_class\testimate_s\tstatus\thistory\n");
        for (job, status) in self.jobs.iter().zip(&self.statuses) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                job.id,
                job.submit_time,
                job.work,
                job.required_class.as_ref().map(|c| c.as_str()).unwrap_or(""),
                job.runtime_estimate.map(|e| e.to_string()).unwrap_or_default(),
                status.as_str(),
                encode_history(job.history()),
            );
        }
        if let Some(grv) = &self.grv {
            out.push_str("[grv]\nid\tra\tjs\tca\tuptime_anchor\n");
            for (id, s) in grv {
                let _ = writeln!(out, "{id}\t{}\t{}\t{}\t{}", s.ra, s.js, s.ca, s.uptime_anchor);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ResultParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(perr(1, format!("expected header {MAGIC:?}"))),
        }
        let mut label = None;
        let mut policy = None;
        let mut events = None;
        let mut elapsed = None;
        let mut meta = BTreeMap::new();
        let mut jobs = Vec::new();
        let mut statuses = Vec::new();
        let mut grv: Option<Vec<(ResourceId, GrvState)>> = None;
        let mut section = "";
        while let Some((n, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if line == "[jobs]" || line == "[grv]" {
                section = if line == "[jobs]" { "jobs" } else { "grv" };
                if section == "grv" {
                    grv = Some(Vec::new());
                }
                lines.next(); // column header
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match section {
                "" => {
                    let [key, value] = cols[..] else { return Err(perr(n, "expected key<TAB>value")) };
                    match key {
                        "label" => label = Some(value.to_owned()),
                        "policy" => policy = Some(PolicyKind::parse(value).ok_or_else(|| perr(n, "unknown policy"))?),
                        "events" => events = Some(value.parse().map_err(|_| perr(n, "bad event count"))?),
                        "elapsed_s" => elapsed = Some(num(n, value)?),
                        k => match k.strip_prefix("meta.") {
                            Some(k) => {
                                meta.insert(k.to_owned(), value.to_owned());
                            }
                            None => return Err(perr(n, format!("unknown key {k:?}"))),
                        },
                    }
                }
                "jobs" => {
                    let [id, submit, work, class, estimate, status, history] = cols[..] else {
                        return Err(perr(n, "expected 7 job columns"));
                    };
                    let mut job = JobRecord::new(id, num(n, submit)?, num(n, work)?);
                    if !class.is_empty() {
                        job.required_class = Some(ResourceClass::new(class));
                    }
                    if !estimate.is_empty() {
                        job.runtime_estimate = Some(num(n, estimate)?);
                    }
                    let job = job.with_history(decode_history(n, history)?).map_err(|e| perr(n, e.to_string()))?;
                    statuses.push(parse_status(n, status)?);
                    jobs.push(job);
                }
                _ => {
                    let [id, ra, js, ca, anchor] = cols[..] else { return Err(perr(n, "expected 5 grv columns")) };
                    let state =
                        GrvState { ra: num(n, ra)?, js: num(n, js)?, ca: num(n, ca)?, uptime_anchor: num(n, anchor)? };
                    grv.as_mut().expect("grv section").push((ResourceId::new(id), state));
                }
            }
        }
        Ok(Self {
            label: label.ok_or_else(|| perr(0, "missing label"))?,
            policy: policy.ok_or_else(|| perr(0, "missing policy"))?,
            meta,
            jobs,
            statuses,
            grv,
            event_count: events.ok_or_else(|| perr(0, "missing events"))?,
            elapsed: elapsed.ok_or_else(|| perr(0, "missing elapsed_s"))?,
        })
    }
}

fn num(line: usize, s: &str) -> Result<f64, ResultParseError> {
    s.parse().map_err(|_| perr(line, format!("bad number {s:?}")))
}

fn parse_status(line: usize, s: &str) -> Result<JobStatus, ResultParseError> {
    Ok(match s {
        "queued" => JobStatus::Queued,
        "running" => JobStatus::Running,
        "completed" => JobStatus::Completed,
        "abandoned" => JobStatus::Abandoned,
        _ => return Err(perr(line, format!("bad status {s:?}"))),
    })
}

fn encode_history(history: &[LifecycleEvent]) -> String {
    if history.is_empty() {
        return "-".into();
    }
    let parts: Vec<String> = history
        .iter()
        .map(|e| match e {
            LifecycleEvent::Dispatched { resource, time } => format!("D:{resource}@{time}"),
            LifecycleEvent::Evicted { time, cause: Interruption::ResourceLeft } => format!("E:leave@{time}"),
            LifecycleEvent::Evicted { time, cause: Interruption::RuntimeLimit } => format!("E:limit@{time}"),
            LifecycleEvent::Completed { time } => format!("C@{time}"),
        })
        .collect();
    parts.join(";")
}

fn decode_history(line: usize, s: &str) -> Result<Vec<LifecycleEvent>, ResultParseError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|part| {
            let (tag, time) = part.rsplit_once('@').ok_or_else(|| perr(line, format!("bad history entry {part:?}")))?;
            let time = num(line, time)?;
            Ok(match tag {
                "C" => LifecycleEvent::Completed { time },
                "E:leave" => LifecycleEvent::Evicted { time, cause: Interruption::ResourceLeft },
                "E:limit" => LifecycleEvent::Evicted { time, cause: Interruption::RuntimeLimit },
                t => match t.strip_prefix("D:") {
                    Some(r) => LifecycleEvent::Dispatched { resource: ResourceId::new(r), time },
                    None => return Err(perr(line, format!("bad history tag {t:?}"))),
                },
            })
        })
        .collect()
}
