//! Two-gamble decision problems and their explicit outcome distributions.
//!
//! A [`Problem`] is the compact 10-parameter encoding of a choice between
//! option A (a two-outcome gamble) and option B (a gamble whose high branch
//! is itself a lottery). [`dist_a`] and [`dist_b`] expand the encoding into
//! sorted [`OutcomeDistribution`]s, [`dominates`] tests first-order
//! stochastic dominance between two distributions, and [`sample_problem`]
//! draws random problems for fitting feature scalers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

/// Outcomes closer than this are treated as the same outcome and merged.
const MERGE_TOL: f64 = 1e-9;
/// Allowed deviation of a distribution's total mass from 1.
const MASS_TOL: f64 = 1e-9;
/// CDF differences below this are treated as equal by [`dominates`].
const CDF_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("probability {name}={value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("high outcome Ha={ha} is below low outcome La={la}")]
    OutcomeOrder { la: f64, ha: f64 },
    #[error("LotNum must be at least 1, got {0}")]
    LotNum(u32),
    #[error("LotShape {shape} is inconsistent with LotNum={lot_num}")]
    LotShapeMismatch { shape: LotShape, lot_num: u32 },
    #[error("non-finite parameter {0}")]
    NonFinite(&'static str),
    #[error("unknown LotShape token {0:?} (expected -, Symm, R-skew or L-skew)")]
    LotShapeToken(String),
    #[error("Corr must be -1, 0 or 1, got {0}")]
    Corr(f64),
    #[error("Amb must be 0 or 1, got {0}")]
    Amb(f64),
    #[error("block index must be in 1..=5, got {0}")]
    Block(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("distribution has no entries with positive probability")]
    Empty,
    #[error("invalid entry (outcome {outcome}, probability {prob})")]
    Entry { outcome: f64, prob: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    Mass(f64),
}

/// Shape of option B's lottery around its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LotShape {
    /// Only legal with a single-outcome lottery (`-` in CSV files).
    Degenerate,
    Symm,
    RSkew,
    LSkew,
}

impl LotShape {
    pub const SKEWED: [LotShape; 3] = [LotShape::Symm, LotShape::RSkew, LotShape::LSkew];

    pub fn token(self) -> &'static str {
        match self {
            LotShape::Degenerate => "-",
            LotShape::Symm => "Symm",
            LotShape::RSkew => "R-skew",
            LotShape::LSkew => "L-skew",
        }
    }
}

impl fmt::Display for LotShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LotShape {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "-" => Ok(LotShape::Degenerate),
            "Symm" => Ok(LotShape::Symm),
            "R-skew" => Ok(LotShape::RSkew),
            "L-skew" => Ok(LotShape::LSkew),
            other => Err(ProblemError::LotShapeToken(other.to_string())),
        }
    }
}

/// Sign of the correlation between the payoffs of the two options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Corr {
    Negative,
    Zero,
    Positive,
}

impl Corr {
    pub const ALL: [Corr; 3] = [Corr::Negative, Corr::Zero, Corr::Positive];

    pub fn value(self) -> f64 {
        match self {
            Corr::Negative => -1.0,
            Corr::Zero => 0.0,
            Corr::Positive => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Result<Self, ProblemError> {
        if v == -1.0 {
            Ok(Corr::Negative)
        } else if v == 0.0 {
            Ok(Corr::Zero)
        } else if v == 1.0 {
            Ok(Corr::Positive)
        } else {
            Err(ProblemError::Corr(v))
        }
    }
}

/// One of the five blocks of five consecutive trials.
///
/// Block 1 is played from description only; blocks 2 to 5 come with full
/// feedback on obtained and forgone payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block(u8);

impl Block {
    pub const COUNT: usize = 5;
    pub const FIRST: Block = Block(1);

    pub fn new(index: usize) -> Result<Self, ProblemError> {
        if (1..=Self::COUNT).contains(&index) {
            Ok(Block(index as u8))
        } else {
            Err(ProblemError::Block(index))
        }
    }

    pub fn all() -> impl Iterator<Item = Block> {
        (1..=Self::COUNT as u8).map(Block)
    }

    /// 1-based block index.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn has_feedback(self) -> bool {
        self.0 > 1
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A choice task between gamble A and gamble B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub ha: f64,
    pub pha: f64,
    pub la: f64,
    /// Mean of option B's lottery.
    pub hb: f64,
    pub phb: f64,
    pub lb: f64,
    pub lot_num: u32,
    pub lot_shape: LotShape,
    pub corr: Corr,
    pub ambiguous: bool,
}

impl Problem {
    /// Validates the parameters and builds a problem.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ha: f64,
        pha: f64,
        la: f64,
        hb: f64,
        phb: f64,
        lb: f64,
        lot_num: u32,
        lot_shape: LotShape,
        corr: Corr,
        ambiguous: bool,
    ) -> Result<Self, ProblemError> {
        let p = Problem {
            ha,
            pha,
            la,
            hb,
            phb,
            lb,
            lot_num,
            lot_shape,
            corr,
            ambiguous,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        for (name, v) in [
            ("Ha", self.ha),
            ("pHa", self.pha),
            ("La", self.la),
            ("Hb", self.hb),
            ("pHb", self.phb),
            ("Lb", self.lb),
        ] {
            if !v.is_finite() {
                return Err(ProblemError::NonFinite(name));
            }
        }
        for (name, value) in [("pHa", self.pha), ("pHb", self.phb)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProblemError::Probability { name, value });
            }
        }
        if self.ha < self.la {
            return Err(ProblemError::OutcomeOrder {
                la: self.la,
                ha: self.ha,
            });
        }
        if self.lot_num == 0 {
            return Err(ProblemError::LotNum(0));
        }
        if (self.lot_num == 1) != (self.lot_shape == LotShape::Degenerate) {
            return Err(ProblemError::LotShapeMismatch {
                shape: self.lot_shape,
                lot_num: self.lot_num,
            });
        }
        Ok(())
    }

    /// The problem with the two probabilities replaced.
    pub fn with_probabilities(&self, pha: f64, phb: f64) -> Problem {
        Problem { pha, phb, ..*self }
    }
}

/// Sorted list of `(outcome, probability)` pairs with strictly increasing
/// outcomes and strictly positive probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    entries: Vec<(f64, f64)>,
}

impl OutcomeDistribution {
    /// Sorts the entries, merges duplicate outcomes and drops zero-mass
    /// entries. Fails on negative or non-finite entries or if the total
    /// mass is not one.
    pub fn new(entries: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, DistError> {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (outcome, prob) in entries {
            if !outcome.is_finite() || !prob.is_finite() || prob < 0.0 {
                return Err(DistError::Entry { outcome, prob });
            }
            if prob > 0.0 {
                raw.push((outcome, prob));
            }
        }
        if raw.is_empty() {
            return Err(DistError::Empty);
        }
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (o, p) in raw {
            match merged.last_mut() {
                Some(last) if (o - last.0).abs() <= MERGE_TOL * last.0.abs().max(1.0) => {
                    last.1 += p;
                }
                _ => merged.push((o, p)),
            }
        }
        let total: f64 = merged.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(DistError::Mass(total));
        }
        Ok(OutcomeDistribution { entries: merged })
    }

    /// Point mass at `outcome`.
    pub fn certain(outcome: f64) -> Self {
        OutcomeDistribution {
            entries: vec![(outcome, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn min_outcome(&self) -> f64 {
        self.entries[0].0
    }

    pub fn max_outcome(&self) -> f64 {
        self.entries[self.entries.len() - 1].0
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|(o, p)| o * p).sum()
    }

    /// Mean of the support, each distinct outcome weighted equally.
    pub fn uniform_mean(&self) -> f64 {
        self.outcomes().sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.entries.iter().map(|(o, p)| p * (o - m).powi(2)).sum()
    }

    /// Third central moment.
    pub fn third_moment(&self) -> f64 {
        let m = self.mean();
        self.entries.iter().map(|(o, p)| p * (o - m).powi(3)).sum()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .entries
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|(_, p)| p * p.ln())
            .sum::<f64>()
    }

    /// P(X <= t).
    pub fn cdf(&self, t: f64) -> f64 {
        self.entries.iter().take_while(|e| e.0 <= t).map(|e| e.1).sum()
    }

    /// Probability mass on outcomes satisfying `pred`.
    pub fn mass_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        self.entries.iter().filter(|e| pred(e.0)).map(|e| e.1).sum()
    }

    /// Draws one outcome by inverse CDF from a uniform `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for &(o, p) in &self.entries {
            acc += p;
            if u < acc {
                return o;
            }
        }
        self.max_outcome()
    }
}

/// Option A: `ha` with probability `pha`, otherwise `la`.
pub fn dist_a(p: &Problem) -> OutcomeDistribution {
    OutcomeDistribution::new([(p.la, 1.0 - p.pha), (p.ha, p.pha)]).expect("valid problem yields a valid option A")
}

/// Option B: a draw from the lottery around `hb` with probability `phb`,
/// otherwise `lb`.
pub fn dist_b(p: &Problem) -> OutcomeDistribution {
    let lottery = build_lottery(p.hb, p.lot_num, p.lot_shape).expect("valid problem yields a valid lottery");
    let mixed = lottery
        .entries()
        .iter()
        .map(|&(o, q)| (o, p.phb * q))
        .chain(std::iter::once((p.lb, 1.0 - p.phb)));
    OutcomeDistribution::new(mixed).expect("mixture of valid distributions is valid")
}

/// Expands option B's lottery into `lot_num` outcomes with mean `hb`.
///
/// * `Symm`: offsets `j - (n-1)/2` for `j = 0..n`, Binomial(n-1, 1/2) weights.
/// * `RSkew`: support `j = 1..=n`, weights proportional to `2^-j`, outcomes
///   `hb + j - E[j]`.
/// * `LSkew`: the reflection of `RSkew` about `hb`.
pub fn build_lottery(hb: f64, lot_num: u32, lot_shape: LotShape) -> Result<OutcomeDistribution, ProblemError> {
    if lot_num == 0 {
        return Err(ProblemError::LotNum(0));
    }
    if lot_num == 1 {
        return Ok(OutcomeDistribution::certain(hb));
    }
    let n = lot_num as usize;
    let entries: Vec<(f64, f64)> = match lot_shape {
        LotShape::Degenerate => {
            return Err(ProblemError::LotShapeMismatch {
                shape: lot_shape,
                lot_num,
            })
        }
        LotShape::Symm => {
            let weights = binomial_half_weights(n - 1);
            let center = (n - 1) as f64 / 2.0;
            weights
                .into_iter()
                .enumerate()
                .map(|(j, w)| (hb + j as f64 - center, w))
                .collect()
        }
        LotShape::RSkew | LotShape::LSkew => {
            let raw: Vec<f64> = (1..=n).map(|j| 0.5f64.powi(j as i32)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let mean_j: f64 = weights.iter().enumerate().map(|(k, w)| (k + 1) as f64 * w).sum();
            let dir = if lot_shape == LotShape::RSkew { 1.0 } else { -1.0 };
            weights
                .into_iter()
                .enumerate()
                .map(|(k, w)| (hb + dir * ((k + 1) as f64 - mean_j), w))
                .collect()
        }
    };
    Ok(OutcomeDistribution::new(entries).expect("lottery weights sum to one"))
}

/// Binomial(n, 1/2) probability mass function as a vector of length n+1.
fn binomial_half_weights(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![0.5 * row[0]];
        for w in row.windows(2) {
            next.push(0.5 * (w[0] + w[1]));
        }
        next.push(0.5 * row[row.len() - 1]);
        row = next;
    }
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    ADominates,
    BDominates,
    Neither,
}

/// First-order stochastic dominance: X dominates Y iff `CDF_X(t) <= CDF_Y(t)`
/// everywhere with strict inequality somewhere.
pub fn dominates(a: &OutcomeDistribution, b: &OutcomeDistribution) -> Dominance {
    let mut support: Vec<f64> = a.outcomes().chain(b.outcomes()).collect();
    support.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));

    let mut a_below = false;
    let mut b_below = false;
    for t in support {
        let diff = a.cdf(t) - b.cdf(t);
        if diff < -CDF_TOL {
            a_below = true;
        } else if diff > CDF_TOL {
            b_below = true;
        }
    }
    match (a_below, b_below) {
        (true, false) => Dominance::ADominates,
        (false, true) => Dominance::BDominates,
        _ => Dominance::Neither,
    }
}

/// Probability grid used by the sampler.
pub const SAMPLER_PROBS: [f64; 22] = [
    0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95,
    0.99, 1.0,
];
pub const SAMPLER_OUTCOME_RANGE: (i32, i32) = (-50, 100);
pub const SAMPLER_MAX_LOT_NUM: u32 = 9;
pub const SAMPLER_AMB_RATE: f64 = 0.2;

/// Draws one random problem from the documented sampling scheme.
pub fn sample_problem<R: Rng + ?Sized>(rng: &mut R) -> Problem {
    let (lo, hi) = SAMPLER_OUTCOME_RANGE;
    let outcome = |rng: &mut R| rng.gen_range(lo..=hi) as f64;
    let x = outcome(rng);
    let y = outcome(rng);
    let (la, ha) = if x <= y { (x, y) } else { (y, x) };
    let pha = SAMPLER_PROBS[rng.gen_range(0..SAMPLER_PROBS.len())];
    let hb = outcome(rng);
    let lb = outcome(rng);
    let phb = SAMPLER_PROBS[rng.gen_range(0..SAMPLER_PROBS.len())];
    let lot_num = rng.gen_range(1..=SAMPLER_MAX_LOT_NUM);
    let lot_shape = if lot_num == 1 {
        LotShape::Degenerate
    } else {
        LotShape::SKEWED[rng.gen_range(0..3)]
    };
    let ambiguous = rng.gen_bool(SAMPLER_AMB_RATE);
    let corr = Corr::ALL[rng.gen_range(0..3)];
    Problem {
        ha,
        pha,
        la,
        hb,
        phb,
        lb,
        lot_num,
        lot_shape,
        corr,
        ambiguous,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem_a(la: f64, ha: f64, pha: f64) -> Problem {
        Problem::new(ha, pha, la, 0.0, 1.0, 0.0, 1, LotShape::Degenerate, Corr::Zero, false).unwrap()
    }

    fn problem_b(lb: f64, hb: f64, phb: f64, lot_num: u32, shape: LotShape) -> Problem {
        Problem::new(0.0, 1.0, 0.0, hb, phb, lb, lot_num, shape, Corr::Zero, false).unwrap()
    }

    fn close(a: &OutcomeDistribution, expected: &[(f64, f64)]) -> bool {
        a.len() == expected.len()
            && a.entries()
                .iter()
                .zip(expected)
                .all(|(x, y)| (x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12)
    }

    #[test]
    fn dist_a_examples() {
        assert!(close(&dist_a(&problem_a(0.0, 10.0, 0.5)), &[(0.0, 0.5), (10.0, 0.5)]));
        assert!(close(&dist_a(&problem_a(0.0, 10.0, 1.0)), &[(10.0, 1.0)]));
        assert!(close(&dist_a(&problem_a(3.0, 3.0, 0.4)), &[(3.0, 1.0)]));
    }

    #[test]
    fn dist_b_examples() {
        let d = dist_b(&problem_b(0.0, 20.0, 0.1, 1, LotShape::Degenerate));
        assert!(close(&d, &[(0.0, 0.9), (20.0, 0.1)]));
        let d = dist_b(&problem_b(0.0, 4.0, 1.0, 3, LotShape::Symm));
        assert!(close(&d, &[(3.0, 0.25), (4.0, 0.5), (5.0, 0.25)]));
    }

    #[test]
    fn lottery_examples() {
        assert!(close(&build_lottery(7.0, 1, LotShape::Symm).unwrap(), &[(7.0, 1.0)]));
        assert!(close(
            &build_lottery(0.0, 3, LotShape::Symm).unwrap(),
            &[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]
        ));
        let r = build_lottery(0.0, 2, LotShape::RSkew).unwrap();
        assert!(r.mean().abs() < 1e-12);
        assert!(r.third_moment() > 0.0);
        let l = build_lottery(0.0, 2, LotShape::LSkew).unwrap();
        assert!(l.third_moment() < 0.0);
        assert_eq!(
            build_lottery(0.0, 4, LotShape::Degenerate),
            Err(ProblemError::LotShapeMismatch {
                shape: LotShape::Degenerate,
                lot_num: 4
            })
        );
    }

    #[test]
    fn binomial_weights_by_enumeration() {
        // enumerate all 2^n coin sequences
        for n in 0..8usize {
            let mut counts = vec![0u32; n + 1];
            for mask in 0u32..(1 << n) {
                counts[mask.count_ones() as usize] += 1;
            }
            let w = binomial_half_weights(n);
            for (k, c) in counts.iter().enumerate() {
                assert!((w[k] - *c as f64 / (1u32 << n) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dominance_examples() {
        let a = OutcomeDistribution::certain(1.0);
        let b = OutcomeDistribution::certain(0.0);
        assert_eq!(dominates(&a, &b), Dominance::ADominates);
        assert_eq!(dominates(&b, &a), Dominance::BDominates);

        let x = OutcomeDistribution::new([(0.0, 0.5), (10.0, 0.5)]).unwrap();
        assert_eq!(dominates(&x, &x.clone()), Dominance::Neither);

        let a = OutcomeDistribution::new([(0.0, 0.5), (5.0, 0.5)]).unwrap();
        let b = OutcomeDistribution::new([(0.0, 0.4), (5.0, 0.6)]).unwrap();
        assert_eq!(dominates(&a, &b), Dominance::BDominates);

        // crossing CDFs
        let a = OutcomeDistribution::new([(0.0, 0.5), (10.0, 0.5)]).unwrap();
        let b = OutcomeDistribution::certain(5.0);
        assert_eq!(dominates(&a, &b), Dominance::Neither);
    }

    #[test]
    fn distribution_rejects_bad_mass() {
        assert!(matches!(
            OutcomeDistribution::new([(0.0, 0.5), (1.0, 0.4)]),
            Err(DistError::Mass(_))
        ));
        assert_eq!(OutcomeDistribution::new([(0.0, 0.0)]), Err(DistError::Empty));
        assert!(OutcomeDistribution::new([(0.0, -0.1), (1.0, 1.1)]).is_err());
    }

    #[test]
    fn lot_shape_tokens() {
        for s in [LotShape::Degenerate, LotShape::Symm, LotShape::RSkew, LotShape::LSkew] {
            assert_eq!(s.token().parse::<LotShape>().unwrap(), s);
        }
        assert!("Rskew".parse::<LotShape>().is_err());
    }

    #[test]
    fn problem_validation() {
        let ok = Problem::new(
            10.0,
            0.5,
            0.0,
            5.0,
            0.5,
            0.0,
            1,
            LotShape::Degenerate,
            Corr::Zero,
            false,
        );
        assert!(ok.is_ok());
        assert!(matches!(
            Problem::new(0.0, 0.5, 1.0, 5.0, 0.5, 0.0, 1, LotShape::Degenerate, Corr::Zero, false),
            Err(ProblemError::OutcomeOrder { .. })
        ));
        assert!(matches!(
            Problem::new(1.0, 1.5, 0.0, 5.0, 0.5, 0.0, 1, LotShape::Degenerate, Corr::Zero, false),
            Err(ProblemError::Probability { name: "pHa", .. })
        ));
        assert!(matches!(
            Problem::new(1.0, 0.5, 0.0, 5.0, 0.5, 0.0, 1, LotShape::Symm, Corr::Zero, false),
            Err(ProblemError::LotShapeMismatch { .. })
        ));
    }

    #[test]
    fn sampler_is_deterministic_and_covers_space() {
        let mut r1 = ChaCha8Rng::seed_from_u64(17);
        let mut r2 = ChaCha8Rng::seed_from_u64(17);
        assert_eq!(sample_problem(&mut r1), sample_problem(&mut r2));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut shapes = std::collections::HashSet::new();
        let mut amb = [false; 2];
        for _ in 0..10_000 {
            let p = sample_problem(&mut rng);
            p.validate().unwrap();
            shapes.insert(p.lot_shape);
            amb[p.ambiguous as usize] = true;
        }
        assert_eq!(shapes.len(), 4);
        assert!(amb[0] && amb[1]);
    }
}
