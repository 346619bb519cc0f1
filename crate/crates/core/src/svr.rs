//! Epsilon-insensitive support-vector regression with a polynomial kernel.
//!
//! Training solves the dual in its doubled form: for `n` samples there are
//! `2n` multipliers `a_t` in `[0, C]` with signs `y_t = +1` for the first
//! `n` and `-1` for the rest, and we minimise
//!
//! ```text
//! f(a) = 1/2 a'Qa + p'a   s.t.  y'a = 0,  0 <= a_t <= C
//! Q_ts = y_t y_s K(x_t, x_s),   p_t = eps - z_t (t < n),  eps + z_t (t >= n)
//! ```
//!
//! by pairwise (SMO) updates. The pair is the maximal KKT violator plus
//! the partner with the best second-order decrease. The regression
//! coefficient of sample `k` is `beta_k = a_k - a_{k+n}`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io_util::write_atomic;

const MODEL_MAGIC: &str = "hybrid-choice-svr";
pub const MODEL_VERSION: u32 = 1;
const TAU: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{0} and targets differ in length")]
    LengthMismatch(&'static str),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid hyperparameter: {0}")]
    InvalidParam(String),
    #[error("unsupported model version {0}")]
    Version(String),
    #[error("malformed model file at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Polynomial kernel `(scale * <x, z> + offset)^degree`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub degree: u32,
    pub scale: f64,
    pub offset: f64,
}

impl KernelSpec {
    pub fn poly(degree: u32, scale: f64, offset: f64) -> Result<Self, SvrError> {
        let k = KernelSpec { degree, scale, offset };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), SvrError> {
        if self.degree < 1 {
            return Err(SvrError::InvalidParam("kernel degree must be >= 1".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(SvrError::InvalidParam("kernel scale must be positive".into()));
        }
        if !self.offset.is_finite() {
            return Err(SvrError::InvalidParam("kernel offset must be finite".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64, SvrError> {
        if x.len() != z.len() {
            return Err(SvrError::DimensionMismatch {
                expected: x.len(),
                got: z.len(),
            });
        }
        Ok(self.eval_unchecked(x, z))
    }

    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
        (self.scale * dot + self.offset).powi(self.degree as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrParams {
    /// Box constraint.
    pub c: f64,
    /// Half-width of the insensitive tube.
    pub epsilon: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
    /// Iteration budget, in units of `2n` pair updates.
    pub max_passes: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.05,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<(), SvrError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvrError::InvalidParam(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SvrError::InvalidParam(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(SvrError::InvalidParam("tol must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(SvrError::InvalidParam("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// A trained regressor: `f(x) = sum_k coef_k K(sv_k, x) + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub epsilon: f64,
    pub dim: usize,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, SvrError> {
        if x.len() != self.dim {
            return Err(SvrError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, c)| c * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias)
    }

    pub fn to_text(&self) -> String {
        let k = &self.kernel;
        let mut s = format!(
            "{MODEL_MAGIC} version={MODEL_VERSION} kernel=poly degree={} scale={:?} offset={:?} C={:?} epsilon={:?} dim={} nsv={}\n",
            k.degree,
            k.scale,
            k.offset,
            self.c,
            self.epsilon,
            self.dim,
            self.support_vectors.len()
        );
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            write!(s, "{coef:?}").unwrap();
            for x in sv {
                write!(s, " {x:?}").unwrap();
            }
            s.push('\n');
        }
        writeln!(s, "bias {:?}", self.bias).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<SvrModel, SvrError> {
        let malformed = |line: usize, msg: &str| SvrError::Malformed {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        let (_, header) = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some(MODEL_MAGIC) {
            return Err(malformed(1, "missing model header"));
        }
        let mut fields = std::collections::HashMap::new();
        for t in tokens {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| malformed(1, &format!("bad header token {t:?}")))?;
            fields.insert(k, v);
        }
        let version = fields.get("version").copied().unwrap_or("");
        if version != MODEL_VERSION.to_string() {
            return Err(SvrError::Version(version.to_string()));
        }
        if fields.get("kernel").copied() != Some("poly") {
            return Err(malformed(1, "unsupported kernel"));
        }
        fn get<T: std::str::FromStr>(fields: &std::collections::HashMap<&str, &str>, key: &str) -> Result<T, SvrError> {
            fields
                .get(key)
                .and_then(|v| v.parse::<T>().ok())
                .ok_or_else(|| SvrError::Malformed {
                    line: 1,
                    msg: format!("missing or invalid {key}"),
                })
        }
        let kernel = KernelSpec {
            degree: get(&fields, "degree")?,
            scale: get(&fields, "scale")?,
            offset: get(&fields, "offset")?,
        };
        kernel.validate()?;
        let c: f64 = get(&fields, "C")?;
        let epsilon: f64 = get(&fields, "epsilon")?;
        let dim: usize = get(&fields, "dim")?;
        let nsv: usize = get(&fields, "nsv")?;

        let mut support_vectors = Vec::with_capacity(nsv);
        let mut dual_coefs = Vec::with_capacity(nsv);
        for k in 0..nsv {
            let (n, line) = lines.next().ok_or_else(|| malformed(k + 2, "truncated model file"))?;
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| malformed(n, "bad number"))?;
            if values.len() != dim + 1 {
                return Err(malformed(n, &format!("expected {} values", dim + 1)));
            }
            dual_coefs.push(values[0]);
            support_vectors.push(values[1..].to_vec());
        }
        let (n, line) = lines.next().ok_or_else(|| malformed(nsv + 2, "missing bias line"))?;
        let bias = line
            .strip_prefix("bias ")
            .and_then(|b| b.trim().parse::<f64>().ok())
            .ok_or_else(|| malformed(n, "bad bias line"))?;
        Ok(SvrModel {
            support_vectors,
            dual_coefs,
            bias,
            kernel,
            c,
            epsilon,
            dim,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SvrError> {
        write_atomic(path, self.to_text().as_bytes()).map_err(|source| SvrError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<SvrModel, SvrError> {
        let text = std::fs::read_to_string(path).map_err(|source| SvrError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SvrModel::from_text(&text)
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: SvrModel,
    /// `beta_k` for every training sample, zeros included.
    pub coefs: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub final_gap: f64,
    /// Dual objective (the maximised form) after each update, if recorded.
    pub objective_trace: Vec<f64>,
}

impl TrainOutput {
    /// Largest violation of the epsilon-insensitive optimality conditions
    /// over the training set, measured on the returned model.
    pub fn max_kkt_residual(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let c = self.model.c;
        let eps = self.model.epsilon;
        let bound_tol = 1e-12 * c.max(1.0);
        xs.iter()
            .zip(ys)
            .zip(&self.coefs)
            .map(|((x, &y), &beta)| {
                let e = y - self.model.predict(x).expect("training dimension");
                if beta.abs() <= bound_tol {
                    (e.abs() - eps).max(0.0)
                } else if beta >= c - bound_tol {
                    (eps - e).max(0.0)
                } else if beta <= -c + bound_tol {
                    (e + eps).max(0.0)
                } else if beta > 0.0 {
                    (e - eps).abs()
                } else {
                    (e + eps).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Trains an epsilon-SVR on `(xs, ys)`.
pub fn train(
    xs: &[Vec<f64>],
    ys: &[f64],
    kernel: KernelSpec,
    params: &SvrParams,
    record_trace: bool,
) -> Result<TrainOutput, SvrError> {
    kernel.validate()?;
    params.validate()?;
    let n = xs.len();
    if n < 2 {
        return Err(SvrError::TooFewSamples(n));
    }
    if ys.len() != n {
        return Err(SvrError::LengthMismatch("samples"));
    }
    let dim = xs[0].len();
    for x in xs {
        if x.len() != dim {
            return Err(SvrError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvrError::NonFinite);
        }
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(SvrError::NonFinite);
    }

    let gram: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| xs.iter().map(|z| kernel.eval_unchecked(x, z)).collect())
        .collect();

    let mut solver = Solver::new(&gram, ys, params.c, params.epsilon);
    let max_iter = params.max_passes.saturating_mul(2 * n);
    let mut trace = Vec::new();
    if record_trace {
        trace.push(-solver.objective());
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    loop {
        let (pair, g) = solver.select_pair();
        gap = g;
        if gap < params.tol {
            converged = true;
            break;
        }
        let Some((i, j)) = pair else {
            converged = true;
            break;
        };
        if iterations >= max_iter {
            break;
        }
        solver.update(i, j);
        iterations += 1;
        if record_trace {
            trace.push(-solver.objective());
        }
    }

    let bias = -solver.rho();
    let coefs: Vec<f64> = (0..n).map(|k| solver.alpha[k] - solver.alpha[k + n]).collect();
    let (support_vectors, dual_coefs): (Vec<Vec<f64>>, Vec<f64>) = coefs
        .iter()
        .zip(xs)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, x)| (x.clone(), *c))
        .unzip();

    Ok(TrainOutput {
        model: SvrModel {
            support_vectors,
            dual_coefs,
            bias,
            kernel,
            c: params.c,
            epsilon: params.epsilon,
            dim,
        },
        coefs,
        converged,
        iterations,
        final_gap: gap,
        objective_trace: trace,
    })
}

struct Solver<'a> {
    gram: &'a [Vec<f64>],
    n: usize,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    linear: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(gram: &'a [Vec<f64>], ys: &[f64], c: f64, eps: f64) -> Self {
        let n = ys.len();
        let linear: Vec<f64> = ys.iter().map(|y| eps - y).chain(ys.iter().map(|y| eps + y)).collect();
        Solver {
            gram,
            n,
            c,
            alpha: vec![0.0; 2 * n],
            grad: linear.clone(),
            linear,
        }
    }

    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.gram[s % self.n][t % self.n]
    }

    fn at_upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn at_lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    fn objective(&self) -> f64 {
        self.alpha
            .iter()
            .zip(self.grad.iter().zip(&self.linear))
            .map(|(a, (g, p))| 0.5 * a * (g + p))
            .sum()
    }

    /// Returns the working pair (if any) and the current maximal violation.
    fn select_pair(&self) -> (Option<(usize, usize)>, f64) {
        let total = 2 * self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..total {
            let y = self.sign(t);
            let movable = if y > 0.0 { !self.at_upper(t) } else { !self.at_lower(t) };
            if movable && -y * self.grad[t] > gmax {
                gmax = -y * self.grad[t];
                i = Some(t);
            }
        }
        let Some(i) = i else {
            return (None, 0.0);
        };

        let yi = self.sign(i);
        let qii = self.q(i, i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut best = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..total {
            let y = self.sign(t);
            let movable = if y > 0.0 { !self.at_lower(t) } else { !self.at_upper(t) };
            if !movable {
                continue;
            }
            let yg = y * self.grad[t];
            gmax2 = gmax2.max(yg);
            let grad_diff = gmax + yg;
            if grad_diff > 0.0 {
                let quad = qii + self.q(t, t) - 2.0 * yi * y * self.q(i, t);
                let obj = -(grad_diff * grad_diff) / quad.max(TAU);
                if obj < best_obj {
                    best_obj = obj;
                    best = Some(t);
                }
            }
        }
        let gap = gmax + gmax2;
        (best.map(|j| (i, j)), gap)
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let qij = self.q(i, j);
        let qii = self.q(i, i);
        let qjj = self.q(j, j);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);

        if self.sign(i) != self.sign(j) {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// Offset of the decision function, averaged over free multipliers.
    fn rho(&self) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut sum_free = 0.0;
        let mut n_free = 0usize;
        for t in 0..2 * self.n {
            let y = self.sign(t);
            let yg = y * self.grad[t];
            if self.at_upper(t) {
                if y < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.at_lower(t) {
                if y > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free += yg;
            }
        }
        if n_free > 0 {
            sum_free / n_free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}
