//! Grid Resource Vector bookkeeping and scoring.
//!
//! Each resource carries three attributes: availability (RA), which grows with
//! continuous uptime up to a ceiling; job success (JS), which moves by a reward
//! or a penalty on every job outcome; and a custom attribute (CA), the
//! machine's aggregate flop rate. Attributes are min-max normalised over the
//! candidate set before the weighted sum, so the weights stay meaningful even
//! though CA is measured in flops.

use std::collections::HashMap;

use thiserror::Error;

use crate::domain::{GrvParams, GrvState, ResourceId, ResourceRecord, SimTime, WeightVector, SECONDS_PER_HOUR};

#[derive(Debug, Error, PartialEq)]
pub enum GrvError {
    #[error("clock regression: now = {now} precedes uptime anchor {anchor}")]
    ClockRegression { now: SimTime, anchor: SimTime },
    #[error("normalization context needs at least one candidate")]
    EmptyCandidates,
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
}

/// Job exit status reported back to the metascheduler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Completed,
    Evicted,
    Requeued,
    Checkpointed,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::Completed)
    }
}

pub fn init_entry(resource: &ResourceRecord, params: &GrvParams, now: SimTime) -> GrvState {
    GrvState {
        ra: params.rbase,
        js: params.js_init,
        ca: resource.nflops * f64::from(resource.ncores),
        uptime_anchor: now,
    }
}

/// State of a resource that has just (re)joined the grid: RA restarts from the
/// base value, JS is kept.
pub fn rejoin(state: &GrvState, params: &GrvParams, now: SimTime) -> GrvState {
    GrvState { ra: params.rbase, uptime_anchor: now, ..*state }
}

pub fn refresh_ra(state: &GrvState, params: &GrvParams, now: SimTime) -> Result<GrvState, GrvError> {
    if now < state.uptime_anchor {
        return Err(GrvError::ClockRegression { now, anchor: state.uptime_anchor });
    }
    let hours = (now - state.uptime_anchor) / SECONDS_PER_HOUR;
    let ra = (params.rbase + params.ra_rate * hours).min(params.ra_max);
    Ok(GrvState { ra, ..*state })
}

pub fn apply_outcome(state: &GrvState, outcome: Outcome, params: &GrvParams) -> GrvState {
    let js = if outcome.is_success() { state.js + params.reward } else { state.js - params.penalty };
    GrvState { js: js.clamp(params.js_min, params.js_max), ..*state }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    fn point(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn widen(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    /// Min-max normalisation; a constant attribute maps to 0.
    pub fn normalize(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }
}

/// Per-attribute ranges over one candidate set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationContext {
    pub ra: Span,
    pub js: Span,
    pub ca: Span,
}

pub fn normalize_context<'a, I>(candidates: I) -> Result<NormalizationContext, GrvError>
where
    I: IntoIterator<Item = &'a GrvState>,
{
    let mut iter = candidates.into_iter();
    let first = iter.next().ok_or(GrvError::EmptyCandidates)?;
    let mut ctx =
        NormalizationContext { ra: Span::point(first.ra), js: Span::point(first.js), ca: Span::point(first.ca) };
    for s in iter {
        ctx.ra.widen(s.ra);
        ctx.js.widen(s.js);
        ctx.ca.widen(s.ca);
    }
    Ok(ctx)
}

pub fn score(state: &GrvState, weights: &WeightVector, norm: &NormalizationContext) -> f64 {
    weights.w1 * norm.ra.normalize(state.ra)
        + weights.w2 * norm.js.normalize(state.js)
        + weights.w3 * norm.ca.normalize(state.ca)
}

/// GRV state for every resource in a catalog, indexed by catalog position.
#[derive(Clone, Debug)]
pub struct GrvTable {
    ids: Vec<ResourceId>,
    entries: Vec<GrvState>,
    index: HashMap<ResourceId, usize>,
    params: GrvParams,
    weights: WeightVector,
}

impl GrvTable {
    pub fn new(catalog: &[ResourceRecord], params: GrvParams, weights: WeightVector, now: SimTime) -> Self {
        let ids: Vec<_> = catalog.iter().map(|r| r.id.clone()).collect();
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let entries = catalog.iter().map(|r| init_entry(r, &params, now)).collect();
        Self { ids, entries, index, params, weights }
    }

    pub fn params(&self) -> &GrvParams {
        &self.params
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, id: &ResourceId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, idx: usize) -> &GrvState {
        &self.entries[idx]
    }

    pub fn by_id(&self, id: &ResourceId) -> Result<&GrvState, GrvError> {
        self.position(id).map(|i| &self.entries[i]).ok_or_else(|| GrvError::UnknownResource(id.clone()))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ResourceId, &GrvState)> {
        self.ids.iter().zip(&self.entries)
    }

    pub fn set(&mut self, idx: usize, state: GrvState) {
        self.entries[idx] = state;
    }

    pub fn rejoin(&mut self, idx: usize, now: SimTime) {
        self.entries[idx] = rejoin(&self.entries[idx], &self.params, now);
    }

    /// Brings RA up to date at `now`. The engine never moves the clock
    /// backwards, so a regression here is a bug.
    pub fn refresh(&mut self, idx: usize, now: SimTime) -> &GrvState {
        let refreshed = refresh_ra(&self.entries[idx], &self.params, now).expect("GRV clock regression");
        self.entries[idx] = refreshed;
        &self.entries[idx]
    }

    pub fn apply(&mut self, idx: usize, outcome: Outcome) {
        self.entries[idx] = apply_outcome(&self.entries[idx], outcome, &self.params);
    }
}
