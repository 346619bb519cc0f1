//! Behavioral feature extraction.
//!
//! Every block sees the problem in its *effective* form: rare probabilities
//! shrink and near-certain ones grow as feedback accumulates. The sixteen
//! behavioral features are computed on that effective problem, and
//! [`scaler`] assembles them together with the raw parameters and prior
//! block B-rates into the standardized vector fed to each block's model.

pub mod cpt;
pub mod scaler;

use serde::{Deserialize, Serialize};

use crate::problem::{dist_a, dist_b, Block, OutcomeDistribution, Problem};
pub use cpt::{cpt_ev, cpt_value, cpt_weight, cumulative_prospect_value, scpt_probability, CptParams, Domain};
pub use scaler::{
    assemble_vector, fit_scaler, raw_vector, RawFeatureVector, Scaler, ScalerError, ScalerSet, StandardizedVector,
    RAW_ENTRY_NAMES,
};

/// Number of behavioral features.
pub const FEATURE_COUNT: usize = 16;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "IsGain",
    "IsLoss",
    "EvA",
    "BevB",
    "BevA_pt",
    "BevB_pt",
    "SignMax",
    "RatioMin",
    "BevBminA",
    "BevBminA_pt",
    "BevBminA_unif",
    "BevBminA_sign",
    "BisBetter",
    "SCPT",
    "VarBminA",
    "EntBestMinA",
];

/// Mass share above which a problem counts as a gain (or loss) problem.
const GAIN_LOSS_PORTION: f64 = 0.65;

/// Weights of the pessimistic estimate of B's value under ambiguity:
/// uniform mean of B's outcomes, A's expected value, B's worst outcome.
const AMBIGUOUS_WEIGHTS: (f64, f64, f64) = (0.48, 0.48, 0.04);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub cpt: CptParams,
    /// Noise scale of the logistic choice rule behind the SCPT feature.
    pub scpt_theta: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            cpt: CptParams::default(),
            scpt_theta: 1.0,
        }
    }
}

/// Block-`i` effective probability.
pub fn effective_probability(p: f64, block: Block) -> f64 {
    let i = block.index() as f64;
    if p <= 0.02 {
        p / i
    } else if p >= 0.98 {
        p + (1.0 - 1.0 / i) * (1.0 - p)
    } else {
        p
    }
}

pub fn effective_problem(p: &Problem, block: Block) -> Problem {
    p.with_probabilities(effective_probability(p.pha, block), effective_probability(p.phb, block))
}

fn ambiguous_first_block(p: &Problem, block: Block) -> bool {
    p.ambiguous && block == Block::FIRST
}

fn bev_b_from(b: &OutcomeDistribution, ev_a: f64, ambiguous_first: bool) -> f64 {
    if ambiguous_first {
        let (w_unif, w_a, w_min) = AMBIGUOUS_WEIGHTS;
        w_unif * b.uniform_mean() + w_a * ev_a + w_min * b.min_outcome()
    } else {
        b.mean()
    }
}

/// Best estimate of option B's expected value. Ambiguous problems in the
/// first block get a pessimistic estimate; otherwise it is B's true mean.
pub fn bev_b(p_eff: &Problem, block: Block, ev_a: f64) -> f64 {
    bev_b_from(&dist_b(p_eff), ev_a, ambiguous_first_block(p_eff, block))
}

/// Probabilities over B's outcomes implied by an ambiguous-block estimate
/// `bev_b`: the worst outcome takes the mass that makes the mean equal
/// `bev_b` and the rest is spread evenly over the other outcomes.
pub fn ambiguous_dist_b(p_eff: &Problem, bev_b: f64) -> OutcomeDistribution {
    reweight_for_mean(&dist_b(p_eff), bev_b)
}

fn reweight_for_mean(b: &OutcomeDistribution, target: f64) -> OutcomeDistribution {
    let outcomes: Vec<f64> = b.outcomes().collect();
    let s = outcomes.len();
    if s < 2 {
        return b.clone();
    }
    let worst = outcomes[0];
    let rest_mean = outcomes[1..].iter().sum::<f64>() / (s - 1) as f64;
    let denom = worst - rest_mean;
    if denom.abs() < 1e-12 {
        let u = 1.0 / s as f64;
        return OutcomeDistribution::new(outcomes.iter().map(|&o| (o, u)))
            .expect("uniform weights form a distribution");
    }
    let p1 = ((target - rest_mean) / denom).clamp(0.0, 1.0);
    let rest = (1.0 - p1) / (s - 1) as f64;
    let entries = std::iter::once((worst, p1)).chain(outcomes[1..].iter().map(|&o| (o, rest)));
    OutcomeDistribution::new(entries).expect("clamped weights form a distribution")
}

/// SCPT probability of choosing B for the (effective) problem.
pub fn scpt_choice(p_eff: &Problem, params: &CptParams, theta: f64) -> f64 {
    scpt_probability(&dist_a(p_eff), &dist_b(p_eff), params, theta)
}

/// The sixteen behavioral features of one effective problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub is_gain: f64,
    pub is_loss: f64,
    pub ev_a: f64,
    pub bev_b: f64,
    pub bev_a_pt: f64,
    pub bev_b_pt: f64,
    pub sign_max: f64,
    pub ratio_min: f64,
    pub bev_b_min_a: f64,
    pub bev_b_min_a_pt: f64,
    pub bev_b_min_a_unif: f64,
    pub bev_b_min_a_sign: f64,
    pub b_is_better: f64,
    pub scpt: f64,
    pub var_b_min_a: f64,
    pub ent_b_min_a: f64,
}

impl Features {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.is_gain,
            self.is_loss,
            self.ev_a,
            self.bev_b,
            self.bev_a_pt,
            self.bev_b_pt,
            self.sign_max,
            self.ratio_min,
            self.bev_b_min_a,
            self.bev_b_min_a_pt,
            self.bev_b_min_a_unif,
            self.bev_b_min_a_sign,
            self.b_is_better,
            self.scpt,
            self.var_b_min_a,
            self.ent_b_min_a,
        ]
    }
}

/// Behavioral features of `p_eff` (already in its block-`block` effective
/// form).
pub fn compute_features(p_eff: &Problem, block: Block, config: &FeatureConfig) -> Features {
    features_from_distributions(
        &dist_a(p_eff),
        &dist_b(p_eff),
        ambiguous_first_block(p_eff, block),
        config,
    )
}

/// Feature computation on explicit distributions. `ambiguous_first` selects
/// the first-block ambiguity treatment of option B.
pub fn features_from_distributions(
    a: &OutcomeDistribution,
    b: &OutcomeDistribution,
    ambiguous_first: bool,
    config: &FeatureConfig,
) -> Features {
    let cpt = &config.cpt;

    let nonneg = 0.5 * (a.mass_where(|o| o >= 0.0) + b.mass_where(|o| o >= 0.0));
    let nonpos = 0.5 * (a.mass_where(|o| o <= 0.0) + b.mass_where(|o| o <= 0.0));
    let any_pos = a.max_outcome() > 0.0 || b.max_outcome() > 0.0;
    let any_neg = a.min_outcome() < 0.0 || b.min_outcome() < 0.0;
    let is_gain = indicator(nonneg > GAIN_LOSS_PORTION && any_pos);
    let is_loss = indicator(nonpos > GAIN_LOSS_PORTION && any_neg);

    let ev_a = a.mean();
    let bev_b = bev_b_from(b, ev_a, ambiguous_first);
    // B as the decision maker perceives it
    let b_seen = if ambiguous_first {
        reweight_for_mean(b, bev_b)
    } else {
        b.clone()
    };

    let bev_a_pt = cpt_ev(a, cpt);
    let bev_b_pt = cpt_ev(&b_seen, cpt);

    let max = a.max_outcome().max(b.max_outcome());
    let min = a.min_outcome().min(b.min_outcome());
    let sign_max = sign(max);
    let ratio_min = ratio_of_minima(a.min_outcome(), b.min_outcome());

    let range = max - min;
    let signed = |d: &OutcomeDistribution| -> f64 { d.entries().iter().map(|&(o, p)| range * sign(o) * p).sum() };

    Features {
        is_gain,
        is_loss,
        ev_a,
        bev_b,
        bev_a_pt,
        bev_b_pt,
        sign_max,
        ratio_min,
        bev_b_min_a: bev_b - ev_a,
        bev_b_min_a_pt: bev_b_pt - bev_a_pt,
        bev_b_min_a_unif: b.uniform_mean() - a.uniform_mean(),
        bev_b_min_a_sign: signed(b) - signed(a),
        b_is_better: prob_b_better(a, b),
        scpt: scpt_probability(a, b, cpt, config.scpt_theta),
        var_b_min_a: b_seen.variance() - a.variance(),
        ent_b_min_a: b.entropy() - a.entropy(),
    }
}

/// P(B > A) for independent draws.
pub fn prob_b_better(a: &OutcomeDistribution, b: &OutcomeDistribution) -> f64 {
    b.entries()
        .iter()
        .map(|&(ob, pb)| pb * a.mass_where(|oa| oa < ob))
        .sum()
}

fn ratio_of_minima(min_a: f64, min_b: f64) -> f64 {
    if sign(min_a) != sign(min_b) {
        return 0.0;
    }
    let (x, y) = (min_a.abs(), min_b.abs());
    let hi = x.max(y);
    if hi == 0.0 {
        1.0
    } else {
        x.min(y) / hi
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Corr, LotShape};

    fn block(i: usize) -> Block {
        Block::new(i).unwrap()
    }

    fn two_outcome(ha: f64, pha: f64, la: f64, hb: f64, phb: f64, lb: f64, amb: bool) -> Problem {
        Problem::new(ha, pha, la, hb, phb, lb, 1, LotShape::Degenerate, Corr::Zero, amb).unwrap()
    }

    #[test]
    fn effective_probability_examples() {
        assert_eq!(effective_probability(0.01, block(2)), 0.005);
        assert_eq!(effective_probability(0.5, block(4)), 0.5);
        assert_eq!(effective_probability(1.0, block(5)), 1.0);
        assert_eq!(effective_probability(0.02, block(2)), 0.01);
        assert!((effective_probability(0.99, block(2)) - 0.995).abs() < 1e-15);
    }

    #[test]
    fn effective_problem_examples() {
        let p = two_outcome(10.0, 0.01, 0.0, 5.0, 0.99, 1.0, false);
        assert_eq!(effective_problem(&p, block(1)), p);
        let e = effective_problem(&p, block(2));
        assert_eq!(e.pha, 0.005);
        assert!((e.phb - 0.995).abs() < 1e-15);
        assert_eq!(e.ha, p.ha);
        let q = two_outcome(10.0, 0.3, 0.0, 5.0, 0.6, 1.0, false);
        assert_eq!(effective_problem(&q, block(5)), q);
    }

    #[test]
    fn bev_b_branches() {
        let p = two_outcome(4.0, 1.0, 4.0, 10.0, 0.5, 0.0, false);
        assert_eq!(bev_b(&p, block(1), 4.0), 5.0);
        let amb = two_outcome(4.0, 1.0, 4.0, 10.0, 0.3, 0.0, true);
        assert_eq!(bev_b(&amb, block(3), 4.0), 3.0);
        let v = bev_b(&amb, block(1), 4.0);
        assert!((v - 4.32).abs() < 1e-12);
    }

    #[test]
    fn ambiguous_distribution_examples() {
        let p = two_outcome(4.0, 1.0, 4.0, 10.0, 0.5, 0.0, true);
        let d = ambiguous_dist_b(&p, 5.0);
        assert_eq!(d.entries(), &[(0.0, 0.5), (10.0, 0.5)]);
        let d = ambiguous_dist_b(&p, 10.0);
        assert_eq!(d.entries(), &[(10.0, 1.0)]);
        // below the worst outcome: all mass on the worst outcome
        let d = ambiguous_dist_b(&p, -3.0);
        assert_eq!(d.entries(), &[(0.0, 1.0)]);
    }

    #[test]
    fn ambiguous_distribution_preserves_estimate() {
        let p = Problem::new(0.0, 1.0, 0.0, 10.0, 0.6, -5.0, 5, LotShape::Symm, Corr::Zero, true).unwrap();
        for target in [-4.0, 0.0, 2.5, 7.0] {
            let d = ambiguous_dist_b(&p, target);
            let mass: f64 = d.entries().iter().map(|e| e.1).sum();
            assert!((mass - 1.0).abs() < 1e-12);
            assert!((d.mean() - target).abs() < 1e-9, "target {target}");
        }
    }

    #[test]
    fn identical_sure_options() {
        let p = two_outcome(5.0, 1.0, 5.0, 5.0, 1.0, 5.0, false);
        let f = compute_features(&p, block(1), &FeatureConfig::default());
        assert_eq!(f.is_gain, 1.0);
        assert_eq!(f.is_loss, 0.0);
        assert_eq!(f.bev_b_min_a, 0.0);
        assert_eq!(f.b_is_better, 0.0);
        assert_eq!(f.var_b_min_a, 0.0);
        assert_eq!(f.ent_b_min_a, 0.0);
        assert_eq!(f.ratio_min, 1.0);
        assert_eq!(f.scpt, 0.5);
    }

    #[test]
    fn sure_zero_against_coin_flip() {
        let a = OutcomeDistribution::certain(0.0);
        let b = OutcomeDistribution::new([(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let f = features_from_distributions(&a, &b, false, &FeatureConfig::default());
        assert_eq!(f.b_is_better, 0.5);
        assert_eq!(f.ev_a, 0.0);
        assert_eq!(f.bev_b, 0.0);
        assert_eq!(f.sign_max, 1.0);
        assert_eq!(f.var_b_min_a, 1.0);
        assert!((f.ent_b_min_a - std::f64::consts::LN_2).abs() < 1e-15);
        // range 2: B gives +2/-2 with equal mass, A gives 0
        assert_eq!(f.bev_b_min_a_sign, 0.0);
        // RatioMin: 0 and -1 have different signs
        assert_eq!(f.ratio_min, 0.0);
    }

    #[test]
    fn loss_problem() {
        let a = OutcomeDistribution::certain(-2.0);
        let b = OutcomeDistribution::new([(-4.0, 0.5), (-1.0, 0.5)]).unwrap();
        let f = features_from_distributions(&a, &b, false, &FeatureConfig::default());
        assert_eq!(f.is_loss, 1.0);
        assert_eq!(f.is_gain, 0.0);
        assert_eq!(f.ratio_min, 0.5);
        assert_eq!(f.sign_max, -1.0);
        assert_eq!(f.b_is_better, 0.5);
    }

    #[test]
    fn ratio_min_zero_guard() {
        assert_eq!(ratio_of_minima(0.0, 0.0), 1.0);
        assert_eq!(ratio_of_minima(0.0, 3.0), 0.0);
        assert_eq!(ratio_of_minima(2.0, 8.0), 0.25);
    }

    #[test]
    fn ambiguous_first_block_uses_substitution() {
        let p = two_outcome(6.0, 0.5, 0.0, 10.0, 0.5, 0.0, true);
        let cfg = FeatureConfig::default();
        let f1 = compute_features(&p, block(1), &cfg);
        let f2 = compute_features(&p, block(2), &cfg);
        // block 1: 0.48*5 + 0.48*3 + 0.04*0
        assert!((f1.bev_b - 3.84).abs() < 1e-12);
        assert_eq!(f2.bev_b, 5.0);
        let sub = ambiguous_dist_b(&p, 3.84);
        assert!((f1.bev_b_pt - cpt_ev(&sub, &cfg.cpt)).abs() < 1e-15);
        assert!((f1.var_b_min_a - (sub.variance() - 9.0)).abs() < 1e-12);
        assert!((f2.bev_b_pt - cpt_ev(&dist_b(&p), &cfg.cpt)).abs() < 1e-15);
    }

    #[test]
    fn difference_features_are_exact() {
        let p = Problem::new(
            20.0,
            0.3,
            -5.0,
            8.0,
            0.7,
            1.0,
            4,
            LotShape::RSkew,
            Corr::Positive,
            false,
        )
        .unwrap();
        let f = compute_features(&p, block(2), &FeatureConfig::default());
        assert_eq!(f.bev_b_min_a, f.bev_b - f.ev_a);
        assert_eq!(f.bev_b_min_a_pt, f.bev_b_pt - f.bev_a_pt);
    }
}
