//! Arrival generation: independent per-lane Bernoulli streams on the 0.2 s
//! grid with a hard 1.0 s minimum headway.
//!
//! After an arrival the next trial slot is the first step whose gap to the
//! previous arrival exceeds the minimum headway, so with success probability
//! p = step * lambda / (1 - lambda) the mean headway is exactly
//! min_headway + step / p = 1 / lambda.

use crate::{splitmix64, STEP};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Demand alternates low/high factors in fixed blocks, starting low.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fluctuation {
    pub period: f64,
    pub low: f64,
    pub high: f64,
}

impl Fluctuation {
    pub fn factor(&self, t: f64) -> f64 {
        let block = (t / self.period).floor() as u64;
        if block % 2 == 0 {
            self.low
        } else {
            self.high
        }
    }
}

/// Per-lane demand: base rate, per-lane ratios, optional fluctuation.
#[derive(Clone, Debug)]
pub struct DemandSpec {
    pub lambda0: f64,
    /// lane id -> fraction of lambda0 generated on that lane
    pub ratios: BTreeMap<u32, f64>,
    pub fluctuation: Option<Fluctuation>,
    pub min_headway: f64,
    pub duration: f64,
}

#[derive(Debug, PartialEq)]
pub enum DemandError {
    /// per-step rate must stay below one vehicle per second
    RateTooHigh { lane: u32, lambda: f64 },
}

impl std::fmt::Display for DemandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DemandError::RateTooHigh { lane, lambda } => {
                write!(f, "lane {lane}: rate {lambda} veh/s is not below 1.0")
            }
        }
    }
}

impl std::error::Error for DemandError {}

impl DemandSpec {
    /// Instantaneous rate for a lane at time `t`, veh/s.
    pub fn lane_rate(&self, lane: u32, t: f64) -> f64 {
        let r = self.ratios.get(&lane).copied().unwrap_or(0.0);
        let factor = self.fluctuation.map_or(1.0, |f| f.factor(t));
        self.lambda0 * r * factor
    }

    /// Highest instantaneous rate any lane reaches.
    pub fn peak_rate(&self) -> f64 {
        let factor = self.fluctuation.map_or(1.0, |f| f.low.max(f.high));
        self.ratios
            .values()
            .fold(0.0, |m: f64, r| m.max(self.lambda0 * r * factor))
    }

    pub fn validate(&self) -> Result<(), DemandError> {
        for (&lane, &r) in &self.ratios {
            let factor = self.fluctuation.map_or(1.0, |f| f.low.max(f.high));
            let lambda = self.lambda0 * r * factor;
            if step_probability(lambda).is_err() {
                return Err(DemandError::RateTooHigh { lane, lambda });
            }
        }
        Ok(())
    }
}

/// Per-step Bernoulli success probability for rate `lambda`, veh/s.
pub fn step_probability(lambda: f64) -> Result<f64, DemandError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(DemandError::RateTooHigh { lane: 0, lambda });
    }
    Ok(STEP * lambda / (1.0 - lambda))
}

/// Arrival step indices per lane (time = index * STEP).
#[derive(Clone, Debug, Default)]
pub struct ArrivalSequence {
    pub per_lane: BTreeMap<u32, Vec<u64>>,
}

impl ArrivalSequence {
    pub fn total(&self) -> usize {
        self.per_lane.values().map(Vec::len).sum()
    }
}

/// Generate arrivals for all lanes over `spec.duration` seconds. Each lane
/// draws from its own ChaCha8 stream derived from `seed`, so sequences are
/// reproducible and independent of lane iteration order.
pub fn generate_arrivals(spec: &DemandSpec, seed: u64) -> ArrivalSequence {
    spec.validate().expect("demand spec out of range");
    let n_steps = (spec.duration / STEP).round() as u64;
    let headway_steps = (spec.min_headway / STEP).round() as u64;
    let mut out = ArrivalSequence::default();
    for (&lane, _) in &spec.ratios {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(
            seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(u64::from(lane) + 1),
        ));
        let mut arrivals = Vec::new();
        let mut next_eligible = 0u64;
        for step in 0..n_steps {
            if step < next_eligible {
                continue;
            }
            let t = step as f64 * STEP;
            let p = step_probability(spec.lane_rate(lane, t)).expect("validated above");
            if rng.gen::<f64>() < p {
                arrivals.push(step);
                // next trial at the first gap strictly above the minimum headway
                next_eligible = step + headway_steps + 1;
            }
        }
        out.per_lane.insert(lane, arrivals);
    }
    out
}
