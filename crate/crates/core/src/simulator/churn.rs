//! Synthetic availability churn for cycle-scavenged machines.
//!
//! Each resource alternates between available and unavailable periods drawn
//! from per-class duration distributions. An optional per-resource spread
//! scales the mean up-time by a log-normal factor with mean 1, which makes some
//! desktops persistently more reliable than others. Dedicated resources are
//! always available.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::domain::{AvailabilitySchedule, Interval, ResourceRecord, SimTime, SECONDS_PER_HOUR};
use crate::seed::derive_seed;

/// Duration distribution, parameterised by its mean in hours.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DurationDist {
    Exponential {
        mean_h: f64,
    },
    /// Shape below 1 gives a decreasing hazard: the longer a machine has been
    /// up, the longer it is likely to stay up.
    Weibull {
        mean_h: f64,
        shape: f64,
    },
    Lognormal {
        mean_h: f64,
        sigma: f64,
    },
    Fixed {
        hours: f64,
    },
}

impl DurationDist {
    pub fn mean_h(&self) -> f64 {
        match *self {
            DurationDist::Exponential { mean_h }
            | DurationDist::Weibull { mean_h, .. }
            | DurationDist::Lognormal { mean_h, .. } => mean_h,
            DurationDist::Fixed { hours } => hours,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            DurationDist::Exponential { mean_h } => mean_h > 0.0,
            DurationDist::Weibull { mean_h, shape } => mean_h > 0.0 && shape > 0.0,
            DurationDist::Lognormal { mean_h, sigma } => mean_h > 0.0 && sigma >= 0.0,
            DurationDist::Fixed { hours } => hours >= 0.0,
        };
        if ok && self.mean_h().is_finite() {
            Ok(())
        } else {
            Err(format!("invalid duration distribution {self:?}"))
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, DurationDist::Fixed { hours } if *hours == 0.0)
    }

    /// Draws a duration in seconds with the mean scaled by `scale`.
    fn sample<R: Rng>(&self, rng: &mut R, scale: f64) -> SimTime {
        let hours = match *self {
            DurationDist::Exponential { mean_h } => Exp::new(1.0 / (mean_h * scale)).unwrap().sample(rng),
            DurationDist::Weibull { mean_h, shape } => {
                let lambda = mean_h * scale / gamma(1.0 + 1.0 / shape);
                Weibull::new(lambda, shape).unwrap().sample(rng)
            }
            DurationDist::Lognormal { mean_h, sigma } => {
                let mu = (mean_h * scale).ln() - sigma * sigma / 2.0;
                LogNormal::new(mu, sigma).unwrap().sample(rng)
            }
            DurationDist::Fixed { hours } => hours * scale,
        };
        (hours * SECONDS_PER_HOUR).max(1e-6)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassChurn {
    pub up: DurationDist,
    pub down: DurationDist,
    /// Log-normal sigma of the per-resource up-time multiplier; 0 disables it.
    #[serde(default)]
    pub up_spread: f64,
}

impl ClassChurn {
    pub fn always_up() -> Self {
        Self { up: DurationDist::Fixed { hours: f64::MAX }, down: DurationDist::Fixed { hours: 0.0 }, up_spread: 0.0 }
    }

    pub fn exponential(mean_up_h: f64, mean_down_h: f64) -> Self {
        Self {
            up: DurationDist::Exponential { mean_h: mean_up_h },
            down: DurationDist::Exponential { mean_h: mean_down_h },
            up_spread: 0.0,
        }
    }
}

/// Churn parameters per resource class, with a fallback for unlisted classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChurnModel {
    #[serde(default = "fallback_churn")]
    pub default: ClassChurn,
    #[serde(default)]
    pub classes: BTreeMap<String, ClassChurn>,
}

fn fallback_churn() -> ClassChurn {
    ClassChurn::exponential(24.0, 1.0)
}

impl Default for ChurnModel {
    /// Synthetic defaults: desktops are reclaimed every couple of hours, Linux
    /// hosts stay up for days.
    fn default() -> Self {
        let mut classes = BTreeMap::new();
        classes.insert("INTEL/WINNT5".to_owned(), ClassChurn::exponential(2.0, 1.0));
        classes.insert("INTEL/LINUX".to_owned(), ClassChurn::exponential(72.0, 2.0));
        classes.insert("X86_64/LINUX".to_owned(), ClassChurn::exponential(72.0, 2.0));
        Self { default: fallback_churn(), classes }
    }
}

impl ChurnModel {
    /// Every resource always available.
    pub fn none() -> Self {
        Self { default: ClassChurn::always_up(), classes: BTreeMap::new() }
    }

    pub fn for_class(&self, class: &str) -> &ClassChurn {
        self.classes.get(class).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<(), String> {
        for c in std::iter::once(&self.default).chain(self.classes.values()) {
            c.up.validate()?;
            c.down.validate()?;
            if !(c.up_spread >= 0.0 && c.up_spread.is_finite()) {
                return Err("up_spread must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// One availability schedule per catalog entry, truncated at `horizon`.
pub fn generate_churn(
    catalog: &[ResourceRecord],
    model: &ChurnModel,
    horizon: SimTime,
    seed: u64,
) -> Vec<AvailabilitySchedule> {
    catalog
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.dedicated {
                return AvailabilitySchedule::always(horizon);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            resource_schedule(model.for_class(r.class.as_str()), horizon, &mut rng)
        })
        .collect()
}

fn resource_schedule(churn: &ClassChurn, horizon: SimTime, rng: &mut ChaCha8Rng) -> AvailabilitySchedule {
    if churn.down.is_zero() {
        return AvailabilitySchedule::always(horizon);
    }
    let scale = if churn.up_spread > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        (churn.up_spread * z - churn.up_spread * churn.up_spread / 2.0).exp()
    } else {
        1.0
    };
    let mean_up = churn.up.mean_h() * scale;
    let p_up = mean_up / (mean_up + churn.down.mean_h());
    let mut up = rng.random::<f64>() < p_up;
    let mut t = 0.0;
    let mut intervals = Vec::new();
    while t < horizon {
        if up {
            let d = churn.up.sample(rng, scale);
            intervals.push(Interval::new(t, (t + d).min(horizon)));
            t += d;
        } else {
            t += churn.down.sample(rng, 1.0);
        }
        up = !up;
    }
    AvailabilitySchedule::new(intervals).expect("generated intervals are ordered and non-empty")
}

/// Installs generated schedules on the catalog.
pub fn apply_schedules(catalog: &mut [ResourceRecord], schedules: Vec<AvailabilitySchedule>) {
    for (r, s) in catalog.iter_mut().zip(schedules) {
        r.availability = s;
    }
}
