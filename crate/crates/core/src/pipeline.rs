//! Five block models, sequential prediction, and cross-validation.
//!
//! Training is teacher-forced: the block-`i` model sees the observed
//! B-rates of blocks `1..i`. Prediction is autoregressive: block `i`
//! receives the adjusted predictions of the earlier blocks.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledProblem;
use crate::evaluation::{msd, EvalError};
use crate::features::{
    assemble_vector, compute_features, effective_problem, fit_scaler, FeatureConfig, Features, Scaler, ScalerError,
    ScalerSet,
};
use crate::io_util::write_atomic;
use crate::problem::{dist_a, dist_b, dominates, sample_problem, Block, Dominance, Problem};
use crate::svr::{self, KernelSpec, SvrError, SvrModel, SvrParams};

pub const BUNDLE_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "bundle.toml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scaler(#[from] ScalerError),
    #[error(transparent)]
    Svr(#[from] SvrError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{folds} folds need at least {folds} problems, got {problems}")]
    TooFewProblems { folds: usize, problems: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Bundle { path: String, msg: String },
}

/// Polynomial kernel settings; a missing `scale` means `1 / input_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub degree: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub offset: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            degree: 3,
            scale: None,
            offset: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn resolve(&self, dim: usize) -> Result<KernelSpec, SvrError> {
        KernelSpec::poly(self.degree, self.scale.unwrap_or(1.0 / dim.max(1) as f64), self.offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjustConfig {
    /// Average with the trivial choice when one option dominates.
    pub dominance: bool,
    /// Pull unclear block-1 predictions toward the SCPT feature.
    pub scpt_blend: bool,
    /// Block-1 predictions closer than this to 0.5 are unclear.
    pub near_half_band: f64,
    pub model_weight: f64,
    pub scpt_weight: f64,
    /// Tolerance for treating BevB and EvA as equal.
    pub tie_tol: f64,
}

impl Default for AdjustConfig {
    fn default() -> Self {
        AdjustConfig {
            dominance: true,
            scpt_blend: true,
            near_half_band: 0.025,
            model_weight: 0.7,
            scpt_weight: 0.3,
            tie_tol: 1e-9,
        }
    }
}

impl AdjustConfig {
    pub fn disabled() -> Self {
        AdjustConfig {
            dominance: false,
            scpt_blend: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub svr: SvrParams,
    pub kernel: KernelConfig,
    pub features: FeatureConfig,
    pub adjust: AdjustConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.svr.validate()?;
        self.kernel.resolve(1)?;
        self.features.cpt.validate().map_err(PipelineError::Config)?;
        if !(self.features.scpt_theta > 0.0) {
            return Err(PipelineError::Config("scpt theta must be positive".into()));
        }
        let a = &self.adjust;
        if !(a.near_half_band >= 0.0 && a.tie_tol >= 0.0) {
            return Err(PipelineError::Config(
                "adjustment thresholds must be non-negative".into(),
            ));
        }
        if (a.model_weight + a.scpt_weight - 1.0).abs() > 1e-12 {
            return Err(PipelineError::Config("blend weights must sum to 1".into()));
        }
        Ok(())
    }
}

/// Predicted B-rates for the five blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPrediction {
    pub b_rates: [f64; Block::COUNT],
}

impl BlockPrediction {
    pub fn get(&self, block: Block) -> f64 {
        self.b_rates[block.index() - 1]
    }
}

/// Trained models, their scalers and the configuration they were built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    models: Vec<SvrModel>,
    scalers: ScalerSet,
    pub config: PipelineConfig,
    pub seed: u64,
}

/// Solver status of each block model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub converged: [bool; Block::COUNT],
    pub iterations: [usize; Block::COUNT],
    pub support_vectors: [usize; Block::COUNT],
}

impl TrainSummary {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }
}

impl ModelBundle {
    pub fn new(
        models: Vec<SvrModel>,
        scalers: ScalerSet,
        config: PipelineConfig,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        if models.len() != Block::COUNT {
            return Err(PipelineError::Config(format!(
                "a bundle needs {} block models, got {}",
                Block::COUNT,
                models.len()
            )));
        }
        for (m, block) in models.iter().zip(Block::all()) {
            let expected = crate::features::scaler::vector_len(block);
            if m.dim != expected {
                return Err(PipelineError::Config(format!(
                    "block {block} model expects {} inputs, vectors have {expected}",
                    m.dim
                )));
            }
        }
        Ok(ModelBundle {
            models,
            scalers,
            config,
            seed,
        })
    }

    pub fn model(&self, block: Block) -> &SvrModel {
        &self.models[block.index() - 1]
    }

    pub fn scalers(&self) -> &ScalerSet {
        &self.scalers
    }

    pub fn with_adjust(&self, adjust: AdjustConfig) -> ModelBundle {
        let mut b = self.clone();
        b.config.adjust = adjust;
        b
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        for (m, block) in self.models.iter().zip(Block::all()) {
            m.save(&dir.join(model_file(block)))?;
        }
        save_scalers(&self.scalers, dir)?;
        let manifest = Manifest {
            format_version: BUNDLE_VERSION,
            seed: self.seed,
            models: Block::all().map(model_file).collect(),
            scalers: Block::all().map(scaler_file).collect(),
            svr: self.config.svr,
            kernel: self.config.kernel,
            features: self.config.features,
            adjust: self.config.adjust,
        };
        let text = toml::to_string(&manifest).map_err(|e| PipelineError::Bundle {
            path: dir.join(MANIFEST_FILE).display().to_string(),
            msg: e.to_string(),
        })?;
        write_file(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<ModelBundle, PipelineError> {
        let path = dir.join(MANIFEST_FILE);
        let text = read_file(&path)?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| PipelineError::Bundle {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        if manifest.format_version != BUNDLE_VERSION {
            return Err(PipelineError::Bundle {
                path: path.display().to_string(),
                msg: format!("unsupported bundle version {}", manifest.format_version),
            });
        }
        let models = manifest
            .models
            .iter()
            .map(|f| {
                SvrModel::load(&dir.join(f)).map_err(|e| PipelineError::Bundle {
                    path: dir.join(f).display().to_string(),
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let scalers = load_scalers(dir)?;
        let config = PipelineConfig {
            svr: manifest.svr,
            kernel: manifest.kernel,
            features: manifest.features,
            adjust: manifest.adjust,
        };
        ModelBundle::new(models, scalers, config, manifest.seed)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    seed: u64,
    models: Vec<String>,
    scalers: Vec<String>,
    svr: SvrParams,
    kernel: KernelConfig,
    features: FeatureConfig,
    adjust: AdjustConfig,
}

pub fn model_file(block: Block) -> String {
    format!("block{block}.svr")
}

pub fn scaler_file(block: Block) -> String {
    format!("scaler{block}.txt")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    write_atomic(path, bytes).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `scaler1.txt`..`scaler5.txt` into `dir`.
pub fn save_scalers(scalers: &ScalerSet, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    scalers
        .iter()
        .map(|s| {
            let path = dir.join(scaler_file(s.block()));
            write_file(&path, s.to_text().as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn load_scalers(dir: &Path) -> Result<ScalerSet, PipelineError> {
    let scalers = Block::all()
        .map(|b| {
            let path = dir.join(scaler_file(b));
            Scaler::from_text(&read_file(&path)?).map_err(|e| PipelineError::Bundle {
                path: path.display().to_string(),
                msg: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScalerSet::new(scalers)?)
}

/// Draws `samples` problems from the problem-space sampler and fits the five
/// block scalers, with B-rate moments pooled over the estimation labels.
pub fn fit_scalers_sampled(
    estimation: &[LabeledProblem],
    samples: usize,
    seed: u64,
    features: &FeatureConfig,
) -> Result<ScalerSet, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problems: Vec<Problem> = (0..samples).map(|_| sample_problem(&mut rng)).collect();
    let b_rates: Vec<f64> = estimation.iter().flat_map(|lp| lp.observed).collect();
    Ok(fit_scaler(&problems, &b_rates, features)?)
}

/// Trains the five block models on labeled problems.
pub fn train_bundle(
    estimation: &[LabeledProblem],
    scalers: &ScalerSet,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(ModelBundle, TrainSummary), PipelineError> {
    config.validate()?;
    let blocks: Vec<Block> = Block::all().collect();
    let outputs = blocks
        .par_iter()
        .map(|&block| {
            let k = block.index() - 1;
            let xs = estimation
                .iter()
                .map(|lp| {
                    assemble_vector(&lp.problem, block, &lp.observed[..k], scalers, &config.features)
                        .map(|v| v.into_values())
                })
                .collect::<Result<Vec<_>, _>>()?;
            let ys: Vec<f64> = estimation.iter().map(|lp| lp.observed[k]).collect();
            let kernel = config.kernel.resolve(crate::features::scaler::vector_len(block))?;
            Ok(svr::train(&xs, &ys, kernel, &config.svr, false)?)
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut summary = TrainSummary {
        converged: [false; Block::COUNT],
        iterations: [0; Block::COUNT],
        support_vectors: [0; Block::COUNT],
    };
    for (k, out) in outputs.iter().enumerate() {
        summary.converged[k] = out.converged;
        summary.iterations[k] = out.iterations;
        summary.support_vectors[k] = out.model.support_vectors.len();
    }
    let models = outputs.into_iter().map(|o| o.model).collect();
    Ok((ModelBundle::new(models, scalers.clone(), *config, seed)?, summary))
}

/// What the adjustment step did to one raw block prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    /// `None` when the dominance test was skipped or disabled.
    pub dominance: Option<Dominance>,
    pub blended: bool,
    pub value: f64,
}

/// Applies the behavioral adjustments to a raw block prediction, then
/// clamps into [0, 1].
///
/// `features` are those of the block's effective problem.
pub fn adjust(b_raw: f64, block: Block, p: &Problem, features: &Features, cfg: &AdjustConfig) -> Adjustment {
    let mut b = b_raw;

    // B's probabilities are hidden in the first ambiguous block
    let dominance = if cfg.dominance && !(p.ambiguous && block == Block::FIRST) {
        let p_eff = effective_problem(p, block);
        let d = dominates(&dist_a(&p_eff), &dist_b(&p_eff));
        match d {
            Dominance::ADominates => b *= 0.5,
            Dominance::BDominates => b = 0.5 * (b + 1.0),
            Dominance::Neither => {}
        }
        Some(d)
    } else {
        None
    };

    let unclear = (b - 0.5).abs() < cfg.near_half_band || (features.bev_b - features.ev_a).abs() <= cfg.tie_tol;
    let blended = cfg.scpt_blend && block == Block::FIRST && unclear;
    if blended {
        b = cfg.model_weight * b + cfg.scpt_weight * features.scpt;
    }
    Adjustment {
        dominance,
        blended,
        value: b.clamp(0.0, 1.0),
    }
}

/// One block of a sequential prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStep {
    pub block: Block,
    pub features: Features,
    pub prior: Vec<f64>,
    pub raw: f64,
    pub adjustment: Adjustment,
}

pub fn predict_trace(bundle: &ModelBundle, p: &Problem) -> Result<Vec<BlockStep>, PipelineError> {
    let cfg = &bundle.config;
    let mut prior: Vec<f64> = Vec::with_capacity(Block::COUNT);
    let mut steps = Vec::with_capacity(Block::COUNT);
    for block in Block::all() {
        let x = assemble_vector(p, block, &prior, &bundle.scalers, &cfg.features)?;
        let raw = bundle.model(block).predict(x.values())?;
        let features = compute_features(&effective_problem(p, block), block, &cfg.features);
        let adjustment = adjust(raw, block, p, &features, &cfg.adjust);
        steps.push(BlockStep {
            block,
            features,
            prior: prior.clone(),
            raw,
            adjustment,
        });
        prior.push(adjustment.value);
    }
    Ok(steps)
}

/// Predicts the five B-rates of `p`, each block conditioned on the
/// adjusted predictions of the earlier ones.
pub fn predict_problem(bundle: &ModelBundle, p: &Problem) -> Result<BlockPrediction, PipelineError> {
    let steps = predict_trace(bundle, p)?;
    let mut b_rates = [0.0; Block::COUNT];
    for (k, s) in steps.iter().enumerate() {
        b_rates[k] = s.adjustment.value;
    }
    Ok(BlockPrediction { b_rates })
}

/// Problem-level fold index for each of `n` problems.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        fold[idx] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: usize,
    pub fold_of: Vec<usize>,
    /// Held-out predictions, indexed like the input problems.
    pub predictions: Vec<BlockPrediction>,
    pub fold_msd: Vec<f64>,
    pub mean_msd: f64,
    pub all_converged: bool,
}

/// MSD averaged over the five blocks.
pub fn overall_msd(observed: &[[f64; Block::COUNT]], predicted: &[BlockPrediction]) -> Result<f64, EvalError> {
    let mut total = 0.0;
    for k in 0..Block::COUNT {
        let obs: Vec<f64> = observed.iter().map(|o| o[k]).collect();
        let pred: Vec<f64> = predicted.iter().map(|p| p.b_rates[k]).collect();
        total += msd(&obs, &pred)?;
    }
    Ok(total / Block::COUNT as f64)
}

/// K-fold cross-validation at the problem level.
pub fn cross_validate(
    estimation: &[LabeledProblem],
    scalers: &ScalerSet,
    config: &PipelineConfig,
    folds: usize,
    seed: u64,
) -> Result<CvReport, PipelineError> {
    if folds < 2 || estimation.len() < folds {
        return Err(PipelineError::TooFewProblems {
            folds,
            problems: estimation.len(),
        });
    }
    let fold_of = fold_assignment(estimation.len(), folds, seed);
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<LabeledProblem> = estimation
                .iter()
                .zip(&fold_of)
                .filter(|(_, &k)| k != f)
                .map(|(lp, _)| lp.clone())
                .collect();
            let (bundle, summary) = train_bundle(&train, scalers, config, seed)?;
            let held: Vec<(usize, BlockPrediction)> = estimation
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_of[*i] == f)
                .map(|(i, lp)| predict_problem(&bundle, &lp.problem).map(|p| (i, p)))
                .collect::<Result<_, _>>()?;
            let obs: Vec<[f64; Block::COUNT]> = held.iter().map(|(i, _)| estimation[*i].observed).collect();
            let pred: Vec<BlockPrediction> = held.iter().map(|(_, p)| *p).collect();
            let score = overall_msd(&obs, &pred)?;
            Ok((held, score, summary.all_converged()))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut predictions = vec![
        BlockPrediction {
            b_rates: [0.0; Block::COUNT]
        };
        estimation.len()
    ];
    let mut fold_msd = Vec::with_capacity(folds);
    let mut all_converged = true;
    for (held, score, conv) in per_fold {
        for (i, p) in held {
            predictions[i] = p;
        }
        fold_msd.push(score);
        all_converged &= conv;
    }
    let mean_msd = fold_msd.iter().sum::<f64>() / folds as f64;
    Ok(CvReport {
        folds,
        fold_of,
        predictions,
        fold_msd,
        mean_msd,
        all_converged,
    })
}

/// Candidate values for the CV grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub c: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            c: vec![0.3, 1.0, 3.0],
            epsilon: vec![0.02, 0.05, 0.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub c: f64,
    pub epsilon: f64,
    pub cv: CvReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub entries: Vec<GridEntry>,
    pub best: usize,
}

impl GridReport {
    pub fn best(&self) -> &GridEntry {
        &self.entries[self.best]
    }
}

/// Cross-validates every `(C, epsilon)` pair and picks the lowest mean MSD;
/// ties go to the smaller C, then the smaller epsilon.
pub fn grid_search(
    estimation: &[LabeledProblem],
    scalers: &ScalerSet,
    base: &PipelineConfig,
    grid: &Grid,
    folds: usize,
    seed: u64,
) -> Result<GridReport, PipelineError> {
    let mut cs = grid.c.clone();
    let mut eps = grid.epsilon.clone();
    if cs.is_empty() || eps.is_empty() {
        return Err(PipelineError::Config("hyperparameter grid is empty".into()));
    }
    cs.sort_by(f64::total_cmp);
    eps.sort_by(f64::total_cmp);
    let mut entries = Vec::with_capacity(cs.len() * eps.len());
    for &c in &cs {
        for &e in &eps {
            let mut config = *base;
            config.svr.c = c;
            config.svr.epsilon = e;
            let cv = cross_validate(estimation, scalers, &config, folds, seed)?;
            entries.push(GridEntry { c, epsilon: e, cv });
        }
    }
    let mut best = 0;
    for (k, e) in entries.iter().enumerate() {
        if e.cv.mean_msd < entries[best].cv.mean_msd {
            best = k;
        }
    }
    Ok(GridReport { entries, best })
}
