//! Scoring and the choice-anomaly suite.

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::data::{read_problems_from, LabeledProblem, PROBLEM_COLUMNS};
use crate::pipeline::{predict_problem, BlockPrediction, ModelBundle, PipelineError};
use crate::problem::{Block, Problem};

/// Checks shipped with the crate.
pub const DEFAULT_CHECKS: &str = include_str!("../data/anomaly_checks.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("observed and predicted lengths differ ({obs} vs {pred})")]
    LengthMismatch { obs: usize, pred: usize },
    #[error("cannot score an empty set")]
    Empty,
    #[error("anomaly check file: {0}")]
    Parse(String),
    #[error("anomaly check {name:?}: {msg}")]
    Check { name: String, msg: String },
}

/// Mean squared deviation scaled by 100.
pub fn msd(obs: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    if obs.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            obs: obs.len(),
            pred: pred.len(),
        });
    }
    if obs.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = obs.iter().zip(pred).map(|(o, p)| (o - p).powi(2)).sum();
    Ok(100.0 * sum / obs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub problem_id: String,
    pub block: Block,
    pub observed: f64,
    pub predicted: f64,
    pub squared_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub block_msd: [f64; Block::COUNT],
    /// Mean of the five block MSDs.
    pub overall: f64,
}

impl EvalReport {
    pub fn from_predictions(
        problems: &[LabeledProblem],
        predictions: &[BlockPrediction],
    ) -> Result<EvalReport, EvalError> {
        if problems.len() != predictions.len() {
            return Err(EvalError::LengthMismatch {
                obs: problems.len(),
                pred: predictions.len(),
            });
        }
        let mut rows = Vec::with_capacity(problems.len() * Block::COUNT);
        for (lp, pred) in problems.iter().zip(predictions) {
            for block in Block::all() {
                let k = block.index() - 1;
                let (o, p) = (lp.observed[k], pred.b_rates[k]);
                rows.push(EvalRow {
                    problem_id: lp.id.clone(),
                    block,
                    observed: o,
                    predicted: p,
                    squared_deviation: (o - p).powi(2),
                });
            }
        }
        let mut block_msd = [0.0; Block::COUNT];
        for (k, slot) in block_msd.iter_mut().enumerate() {
            let obs: Vec<f64> = problems.iter().map(|lp| lp.observed[k]).collect();
            let pred: Vec<f64> = predictions.iter().map(|p| p.b_rates[k]).collect();
            *slot = msd(&obs, &pred)?;
        }
        let overall = block_msd.iter().sum::<f64>() / Block::COUNT as f64;
        Ok(EvalReport {
            rows,
            block_msd,
            overall,
        })
    }

    /// `problem_id,block,observed,predicted,squared_deviation`, 6 decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("problem_id,block,observed,predicted,squared_deviation\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6}",
                r.problem_id, r.block, r.observed, r.predicted, r.squared_deviation
            )
            .unwrap();
        }
        s
    }
}

/// Predicts every labeled problem and scores it.
pub fn evaluate(bundle: &ModelBundle, problems: &[LabeledProblem]) -> Result<EvalReport, PipelineError> {
    let predictions = problems
        .iter()
        .map(|lp| predict_problem(bundle, &lp.problem))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_predictions(problems, &predictions)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Less,
    Greater,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Less => "<",
            Comparator::Greater => ">",
        }
    }
}

/// One side of a check: the mean predicted B-rate of a problem over some
/// blocks, or a constant.
#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Prediction { problem: usize, blocks: Vec<Block> },
    Constant(f64),
}

/// A directional assertion over predicted B-rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyCheck {
    pub name: String,
    pub description: String,
    pub problems: Vec<Problem>,
    pub left: Operand,
    pub comparator: Comparator,
    pub right: Operand,
    pub margin: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckFile {
    check: Vec<RawCheck>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    name: String,
    #[serde(default)]
    description: String,
    problems: Vec<String>,
    left: RawOperand,
    comparator: String,
    right: RawOperand,
    #[serde(default)]
    margin: f64,
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum RawOperand {
    Prediction { problem: usize, blocks: Vec<usize> },
    Constant { value: f64 },
}

/// Parses a TOML list of `[[check]]` tables.
pub fn parse_checks(text: &str) -> Result<Vec<AnomalyCheck>, EvalError> {
    let file: CheckFile = toml::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))?;
    file.check.into_iter().map(build_check).collect()
}

pub fn default_checks() -> Vec<AnomalyCheck> {
    parse_checks(DEFAULT_CHECKS).expect("shipped anomaly checks are well-formed")
}

fn build_check(raw: RawCheck) -> Result<AnomalyCheck, EvalError> {
    let name = raw.name.clone();
    let err = |msg: String| EvalError::Check {
        name: name.clone(),
        msg,
    };
    if raw.problems.is_empty() {
        return Err(err("no problems listed".into()));
    }
    let csv = format!("{}\n{}\n", PROBLEM_COLUMNS.join(","), raw.problems.join("\n"));
    let problems: Vec<Problem> = read_problems_from(csv.as_bytes(), &format!("check {}", raw.name))
        .map_err(|e| err(e.to_string()))?
        .into_iter()
        .map(|r| r.problem)
        .collect();

    let operand = |o: RawOperand| -> Result<Operand, EvalError> {
        match o {
            RawOperand::Constant { value } if value.is_finite() => Ok(Operand::Constant(value)),
            RawOperand::Constant { value } => Err(err(format!("non-finite constant {value}"))),
            RawOperand::Prediction { problem, blocks } => {
                if problem == 0 || problem > problems.len() {
                    return Err(err(format!(
                        "problem index {problem} out of range 1..={}",
                        problems.len()
                    )));
                }
                if blocks.is_empty() {
                    return Err(err("operand lists no blocks".into()));
                }
                let blocks = blocks
                    .into_iter()
                    .map(|b| Block::new(b).map_err(|e| err(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Operand::Prediction { problem, blocks })
            }
        }
    };
    let comparator = match raw.comparator.trim() {
        "<" => Comparator::Less,
        ">" => Comparator::Greater,
        other => return Err(err(format!("comparator must be < or >, got {other:?}"))),
    };
    if !(raw.margin >= 0.0) {
        return Err(err(format!("margin must be non-negative, got {}", raw.margin)));
    }
    let left = operand(raw.left)?;
    let right = operand(raw.right)?;
    Ok(AnomalyCheck {
        name: raw.name,
        description: raw.description,
        problems,
        left,
        comparator,
        right,
        margin: raw.margin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyOutcome {
    pub name: String,
    pub left: f64,
    pub right: f64,
    pub comparator: Comparator,
    pub margin: f64,
    pub passed: bool,
    pub predictions: Vec<BlockPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub outcomes: Vec<AnomalyOutcome>,
}

impl AnomalyReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.passed).count()
    }

    pub fn outcome(&self, name: &str) -> Option<&AnomalyOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            writeln!(
                s,
                "{} {}: {:.6} {} {:.6} (margin {:.6})",
                if o.passed { "PASS" } else { "FAIL" },
                o.name,
                o.left,
                o.comparator.symbol(),
                o.right,
                o.margin
            )
            .unwrap();
        }
        writeln!(s, "{}/{} checks passed", self.passed(), self.outcomes.len()).unwrap();
        s
    }
}

fn operand_value(op: &Operand, predictions: &[BlockPrediction]) -> f64 {
    match op {
        Operand::Constant(v) => *v,
        Operand::Prediction { problem, blocks } => {
            let p = &predictions[problem - 1];
            blocks.iter().map(|b| p.get(*b)).sum::<f64>() / blocks.len() as f64
        }
    }
}

/// Evaluates every check on the bundle's predictions.
pub fn run_anomaly_suite(bundle: &ModelBundle, checks: &[AnomalyCheck]) -> Result<AnomalyReport, PipelineError> {
    let outcomes = checks
        .iter()
        .map(|check| {
            let predictions = check
                .problems
                .iter()
                .map(|p| predict_problem(bundle, p))
                .collect::<Result<Vec<_>, _>>()?;
            let left = operand_value(&check.left, &predictions);
            let right = operand_value(&check.right, &predictions);
            let passed = match check.comparator {
                Comparator::Greater => left > right + check.margin,
                Comparator::Less => left < right - check.margin,
            };
            Ok(AnomalyOutcome {
                name: check.name.clone(),
                left,
                right,
                comparator: check.comparator,
                margin: check.margin,
                passed,
                predictions,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(AnomalyReport { outcomes })
}
