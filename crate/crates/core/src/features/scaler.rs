//! Per-block feature vectors and their standardization.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use super::{compute_features, effective_problem, FeatureConfig, FEATURE_COUNT, FEATURE_NAMES};
use crate::problem::{Block, Problem};

/// Number of entries before the prior B-rates.
pub const BASE_LEN: usize = 8 + FEATURE_COUNT;

pub const RAW_ENTRY_NAMES: [&str; BASE_LEN] = [
    "Ha",
    "pHa",
    "La",
    "Hb",
    "pHb",
    "Lb",
    "Amb",
    "Corr",
    FEATURE_NAMES[0],
    FEATURE_NAMES[1],
    FEATURE_NAMES[2],
    FEATURE_NAMES[3],
    FEATURE_NAMES[4],
    FEATURE_NAMES[5],
    FEATURE_NAMES[6],
    FEATURE_NAMES[7],
    FEATURE_NAMES[8],
    FEATURE_NAMES[9],
    FEATURE_NAMES[10],
    FEATURE_NAMES[11],
    FEATURE_NAMES[12],
    FEATURE_NAMES[13],
    FEATURE_NAMES[14],
    FEATURE_NAMES[15],
];

const SCALER_MAGIC: &str = "hybrid-choice-scaler";
pub const SCALER_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalerError {
    #[error("block {block} expects {expected} prior B-rates, got {got}")]
    PriorLength { block: Block, expected: usize, got: usize },
    #[error("scaler for block {scaler} applied to a block {vector} vector")]
    BlockMismatch { scaler: Block, vector: Block },
    #[error("column {column} has zero variance (block {block})")]
    ZeroVariance { column: String, block: Block },
    #[error("cannot fit a scaler on an empty {0} sample")]
    Empty(&'static str),
    #[error("scaler set must hold 5 blocks in order")]
    Incomplete,
    #[error("unsupported scaler format version {0}")]
    Version(String),
    #[error("malformed scaler file at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// Unstandardized block vector: 8 raw parameters, 16 features of the
/// effective problem, then the prior B-rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatureVector {
    block: Block,
    values: Vec<f64>,
}

impl RawFeatureVector {
    pub fn block(&self) -> Block {
        self.block
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A vector that has been standardized exactly once. Only a [`Scaler`]
/// can produce one, and it consumes the raw vector in doing so.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedVector {
    block: Block,
    values: Vec<f64>,
}

impl StandardizedVector {
    pub fn block(&self) -> Block {
        self.block
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Expected vector length for a block: `23 + i`.
pub fn vector_len(block: Block) -> usize {
    BASE_LEN + block.index() - 1
}

fn base_entries(p: &Problem, block: Block, config: &FeatureConfig) -> [f64; BASE_LEN] {
    let features = compute_features(&effective_problem(p, block), block, config).to_array();
    let mut out = [0.0; BASE_LEN];
    out[..8].copy_from_slice(&[
        p.ha,
        p.pha,
        p.la,
        p.hb,
        p.phb,
        p.lb,
        if p.ambiguous { 1.0 } else { 0.0 },
        p.corr.value(),
    ]);
    out[8..].copy_from_slice(&features);
    out
}

pub fn raw_vector(
    p: &Problem,
    block: Block,
    prior_b: &[f64],
    config: &FeatureConfig,
) -> Result<RawFeatureVector, ScalerError> {
    let expected = block.index() - 1;
    if prior_b.len() != expected {
        return Err(ScalerError::PriorLength {
            block,
            expected,
            got: prior_b.len(),
        });
    }
    let mut values = base_entries(p, block, config).to_vec();
    values.extend_from_slice(prior_b);
    Ok(RawFeatureVector { block, values })
}

/// Builds the standardized block vector for `p`.
pub fn assemble_vector(
    p: &Problem,
    block: Block,
    prior_b: &[f64],
    scalers: &ScalerSet,
    config: &FeatureConfig,
) -> Result<StandardizedVector, ScalerError> {
    scalers.get(block).standardize(raw_vector(p, block, prior_b, config)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    block: Block,
    means: [f64; BASE_LEN],
    stds: [f64; BASE_LEN],
    b_mean: f64,
    b_std: f64,
}

impl Scaler {
    pub fn block(&self) -> Block {
        self.block
    }

    pub fn means(&self) -> &[f64; BASE_LEN] {
        &self.means
    }

    pub fn stds(&self) -> &[f64; BASE_LEN] {
        &self.stds
    }

    pub fn b_rate_moments(&self) -> (f64, f64) {
        (self.b_mean, self.b_std)
    }

    pub fn standardize(&self, raw: RawFeatureVector) -> Result<StandardizedVector, ScalerError> {
        if raw.block != self.block {
            return Err(ScalerError::BlockMismatch {
                scaler: self.block,
                vector: raw.block,
            });
        }
        let mut values = raw.values;
        for (k, v) in values.iter_mut().enumerate() {
            *v = if k < BASE_LEN {
                (*v - self.means[k]) / self.stds[k]
            } else {
                (*v - self.b_mean) / self.b_std
            };
        }
        Ok(StandardizedVector {
            block: raw.block,
            values,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{SCALER_MAGIC} {SCALER_VERSION}\nblock {}\n", self.block);
        for k in 0..BASE_LEN {
            writeln!(s, "{} {:?} {:?}", k, self.means[k], self.stds[k]).unwrap();
        }
        writeln!(s, "B {:?} {:?}", self.b_mean, self.b_std).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Scaler, ScalerError> {
        let malformed = |line: usize, msg: &str| ScalerError::Malformed {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));

        let (n, header) = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(SCALER_MAGIC) {
            return Err(malformed(n, "missing scaler header"));
        }
        let version = parts.next().unwrap_or("");
        if version != SCALER_VERSION.to_string() {
            return Err(ScalerError::Version(version.to_string()));
        }

        let (n, block_line) = lines.next().ok_or_else(|| malformed(n + 1, "missing block line"))?;
        let block = block_line
            .strip_prefix("block ")
            .and_then(|b| b.trim().parse::<usize>().ok())
            .and_then(|b| Block::new(b).ok())
            .ok_or_else(|| malformed(n, "bad block line"))?;

        let parse_pair = |n: usize, a: Option<&str>, b: Option<&str>| -> Result<(f64, f64), ScalerError> {
            let m = a.and_then(|x| x.parse::<f64>().ok());
            let s = b.and_then(|x| x.parse::<f64>().ok());
            match (m, s) {
                (Some(m), Some(s)) if s > 0.0 && m.is_finite() => Ok((m, s)),
                _ => Err(malformed(n, "expected finite mean and positive std")),
            }
        };

        let mut means = [0.0; BASE_LEN];
        let mut stds = [0.0; BASE_LEN];
        for k in 0..BASE_LEN {
            let (n, line) = lines.next().ok_or_else(|| malformed(k + 3, "truncated scaler file"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(k.to_string().as_str()) {
                return Err(malformed(n, &format!("expected entry {k}")));
            }
            let (m, s) = parse_pair(n, parts.next(), parts.next())?;
            means[k] = m;
            stds[k] = s;
        }
        let (n, line) = lines
            .next()
            .ok_or_else(|| malformed(BASE_LEN + 3, "missing B-rate line"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("B") {
            return Err(malformed(n, "expected B-rate line"));
        }
        let (b_mean, b_std) = parse_pair(n, parts.next(), parts.next())?;
        Ok(Scaler {
            block,
            means,
            stds,
            b_mean,
            b_std,
        })
    }
}

/// One scaler per block.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerSet {
    scalers: Vec<Scaler>,
}

impl ScalerSet {
    pub fn new(scalers: Vec<Scaler>) -> Result<Self, ScalerError> {
        let in_order = scalers.len() == Block::COUNT && scalers.iter().zip(Block::all()).all(|(s, b)| s.block == b);
        if !in_order {
            return Err(ScalerError::Incomplete);
        }
        Ok(ScalerSet { scalers })
    }

    pub fn get(&self, block: Block) -> &Scaler {
        &self.scalers[block.index() - 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scaler> {
        self.scalers.iter()
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std(&self) -> f64 {
        (self.m2 / self.n).sqrt()
    }
}

/// Fits the five block scalers: entries 1 to 24 from `samples` (features
/// recomputed per block), B-rate entries from the pooled observed B-rates.
pub fn fit_scaler(
    samples: &[Problem],
    observed_b_rates: &[f64],
    config: &FeatureConfig,
) -> Result<ScalerSet, ScalerError> {
    if samples.is_empty() {
        return Err(ScalerError::Empty("problem"));
    }
    if observed_b_rates.is_empty() {
        return Err(ScalerError::Empty("B-rate"));
    }
    let mut b = Moments::default();
    for &x in observed_b_rates {
        b.push(x);
    }
    let b_std = b.std();
    if !(b_std > 0.0) {
        return Err(ScalerError::ZeroVariance {
            column: "B-rate".to_string(),
            block: Block::FIRST,
        });
    }

    let blocks: Vec<Block> = Block::all().collect();
    let scalers = blocks
        .par_iter()
        .map(|&block| {
            let mut cols = [Moments::default(); BASE_LEN];
            for p in samples {
                for (c, x) in cols.iter_mut().zip(base_entries(p, block, config)) {
                    c.push(x);
                }
            }
            let mut means = [0.0; BASE_LEN];
            let mut stds = [0.0; BASE_LEN];
            for (k, c) in cols.iter().enumerate() {
                let s = c.std();
                if !(s > 1e-12) {
                    return Err(ScalerError::ZeroVariance {
                        column: RAW_ENTRY_NAMES[k].to_string(),
                        block,
                    });
                }
                means[k] = c.mean;
                stds[k] = s;
            }
            Ok(Scaler {
                block,
                means,
                stds,
                b_mean: b.mean,
                b_std,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    ScalerSet::new(scalers)
}
