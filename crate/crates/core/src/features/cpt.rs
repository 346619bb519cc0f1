//! Prospect-theory value and probability-weighting functions.

use serde::{Deserialize, Serialize};

use crate::problem::OutcomeDistribution;

/// Parameters of the value function (`alpha`, `beta`, `lambda`) and of the
/// probability-weighting function (`gamma` for gains, `delta` for losses).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CptParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
}

impl Default for CptParams {
    fn default() -> Self {
        CptParams {
            alpha: 0.77,
            beta: 0.9,
            gamma: 0.79,
            delta: 0.87,
            lambda: 1.0023,
        }
    }
}

impl CptParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("lambda", self.lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("CPT parameter {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Which branch of the weighting function applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Outcome >= 0.
    Gain,
    Loss,
}

impl Domain {
    pub fn of(outcome: f64) -> Domain {
        if outcome >= 0.0 {
            Domain::Gain
        } else {
            Domain::Loss
        }
    }
}

pub fn cpt_value(outcome: f64, params: &CptParams) -> f64 {
    if outcome >= 0.0 {
        outcome.powf(params.alpha)
    } else {
        -params.lambda * (-outcome).powf(params.beta)
    }
}

/// Inverse-S weighting `p^c / (p^c + (1-p)^c)^(1/c)`.
pub fn cpt_weight(p: f64, domain: Domain, params: &CptParams) -> f64 {
    let c = match domain {
        Domain::Gain => params.gamma,
        Domain::Loss => params.delta,
    };
    let p = p.clamp(0.0, 1.0);
    let pc = p.powf(c);
    let denom = (pc + (1.0 - p).powf(c)).powf(1.0 / c);
    pc / denom
}

/// Separable prospect value: each outcome's value times the weight of its
/// own probability (no cumulation).
pub fn cpt_ev(d: &OutcomeDistribution, params: &CptParams) -> f64 {
    d.entries()
        .iter()
        .map(|&(o, p)| cpt_value(o, params) * cpt_weight(p, Domain::of(o), params))
        .sum()
}

/// Rank-dependent (cumulative) prospect value: gains are weighted through
/// the decumulative distribution, losses through the cumulative one.
pub fn cumulative_prospect_value(d: &OutcomeDistribution, params: &CptParams) -> f64 {
    let entries = d.entries();
    let mut total = 0.0;

    // losses, ascending: w(P(X <= x)) - w(P(X < x))
    let mut below = 0.0;
    for &(o, p) in entries.iter().take_while(|e| e.0 < 0.0) {
        let w = cpt_weight(below + p, Domain::Loss, params) - cpt_weight(below, Domain::Loss, params);
        total += cpt_value(o, params) * w;
        below += p;
    }

    // gains, descending: w(P(X >= x)) - w(P(X > x))
    let mut above = 0.0;
    for &(o, p) in entries.iter().rev().take_while(|e| e.0 > 0.0) {
        let w = cpt_weight(above + p, Domain::Gain, params) - cpt_weight(above, Domain::Gain, params);
        total += cpt_value(o, params) * w;
        above += p;
    }
    total
}

/// Probability of choosing B under a logistic choice rule on the gap of
/// cumulative prospect values, `1 / (1 + exp(-(U_B - U_A) / theta))`.
pub fn scpt_probability(a: &OutcomeDistribution, b: &OutcomeDistribution, params: &CptParams, theta: f64) -> f64 {
    let gap = cumulative_prospect_value(b, params) - cumulative_prospect_value(a, params);
    logistic(gap / theta)
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
