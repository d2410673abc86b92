//! Gaussian-process regression surrogate: ARD squared-exponential kernel,
//! exact fit via Cholesky factorization, posterior prediction, log marginal
//! likelihood, and grid-based hyperparameter selection.
//!
//! Matrices are dense row-major `Vec<f64>`; training sizes stay in the low
//! hundreds so O(n^3) refits are fine.

use crate::space::UnitPoint;
use thiserror::Error;

const STD_FLOOR: f64 = 1e-12;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error("Gram matrix not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("every hyperparameter candidate failed to factorize")]
    AllCandidatesFailed,
    #[error("need at least {need} training points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("input size mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelHyper {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyper {
    pub fn isotropic(signal_variance: f64, length_scale: f64, noise_variance: f64, d: usize) -> Self {
        KernelHyper {
            signal_variance,
            length_scales: vec![length_scale; d],
            noise_variance,
        }
    }
}

/// ARD squared-exponential covariance between two unit-cube points.
pub fn kernel_eval(x1: &[f64], x2: &[f64], hyper: &KernelHyper) -> f64 {
    debug_assert_eq!(x1.len(), x2.len());
    debug_assert_eq!(x1.len(), hyper.length_scales.len());
    let s: f64 = x1
        .iter()
        .zip(x2)
        .zip(&hyper.length_scales)
        .map(|((a, b), l)| {
            let r = (a - b) / l;
            r * r
        })
        .sum();
    hyper.signal_variance * (-0.5 * s).exp()
}

/// Trained GP surrogate. Immutable after [`fit`].
#[derive(Debug, Clone)]
pub struct GpModel {
    train_inputs: Vec<Vec<f64>>,
    train_targets: Vec<f64>,
    target_mean: f64,
    target_std: f64,
    hyper: KernelHyper,
    chol_factor: Vec<Vec<f64>>,
    dual_weights: Vec<f64>,
}

impl GpModel {
    /// Prior model with no observations: mean 0, variance `signal_variance`.
    pub fn prior(hyper: KernelHyper) -> Self {
        GpModel {
            train_inputs: Vec::new(),
            train_targets: Vec::new(),
            target_mean: 0.0,
            target_std: 1.0,
            hyper,
            chol_factor: Vec::new(),
            dual_weights: Vec::new(),
        }
    }

    pub fn n_train(&self) -> usize {
        self.train_inputs.len()
    }

    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.train_inputs
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    /// Observed targets in original (de-standardized) units.
    pub fn raw_targets(&self) -> Vec<f64> {
        self.train_targets
            .iter()
            .map(|ys| ys * self.target_std + self.target_mean)
            .collect()
    }

    pub fn chol_factor(&self) -> &[Vec<f64>] {
        &self.chol_factor
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.dual_weights
    }

    pub fn target_moments(&self) -> (f64, f64) {
        (self.target_mean, self.target_std)
    }
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let std = if std < STD_FLOOR { 1.0 } else { std };
    let ys = y.iter().map(|v| (v - mean) / std).collect();
    (ys, mean, std)
}

/// Lower Cholesky of a symmetric matrix, or None if a pivot goes non-positive.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn solve_lower(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn solve_upper_t(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    // solves L^T x = b given lower L
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

fn gram(inputs: &[Vec<f64>], hyper: &KernelHyper) -> Vec<Vec<f64>> {
    let n = inputs.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel_eval(&inputs[i], &inputs[j], hyper);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Cholesky of K + noise*I with an escalating jitter ladder. Jitter starts at
/// 1e-10 * mean(diag) and grows x10 until 1e-4 * mean(diag), then errors.
fn chol_with_jitter(k: &[Vec<f64>], noise: f64) -> Result<Vec<Vec<f64>>, GpError> {
    let n = k.len();
    let mean_diag = k.iter().enumerate().map(|(i, r)| r[i]).sum::<f64>() / n as f64;
    let mut jitter = JITTER_START;
    loop {
        let mut a: Vec<Vec<f64>> = k.to_vec();
        for i in 0..n {
            a[i][i] += noise + jitter * mean_diag;
        }
        if let Some(l) = cholesky(&a) {
            return Ok(l);
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX {
            return Err(GpError::NotPositiveDefinite);
        }
    }
}

/// Fits an exact GP on unit-cube inputs. Targets are standardized internally.
pub fn fit(inputs: &[Vec<f64>], targets: &[f64], hyper: KernelHyper) -> Result<GpModel, GpError> {
    let n = inputs.len();
    if n == 0 {
        return Err(GpError::TooFewPoints { need: 1, got: 0 });
    }
    if targets.len() != n {
        return Err(GpError::ShapeMismatch(format!(
            "{} inputs vs {} targets",
            n,
            targets.len()
        )));
    }
    let (ys, mean, std) = standardize(targets);
    let k = gram(inputs, &hyper);
    let l = chol_with_jitter(&k, hyper.noise_variance)?;
    let z = solve_lower(&l, &ys);
    let alpha = solve_upper_t(&l, &z);
    Ok(GpModel {
        train_inputs: inputs.to_vec(),
        train_targets: ys,
        target_mean: mean,
        target_std: std,
        hyper,
        chol_factor: l,
        dual_weights: alpha,
    })
}

/// Posterior mean and variance at a unit-cube query point.
pub fn predict(model: &GpModel, x: &UnitPoint) -> (f64, f64) {
    let n = model.train_inputs.len();
    if n == 0 {
        return (0.0, model.hyper.signal_variance);
    }
    let kstar: Vec<f64> = model
        .train_inputs
        .iter()
        .map(|xi| kernel_eval(xi, &x.0, &model.hyper))
        .collect();
    let mean_s: f64 = kstar.iter().zip(&model.dual_weights).map(|(a, b)| a * b).sum();
    let v = solve_lower(&model.chol_factor, &kstar);
    let var_s = model.hyper.signal_variance - v.iter().map(|a| a * a).sum::<f64>();
    let mean = mean_s * model.target_std + model.target_mean;
    let var = (var_s * model.target_std * model.target_std).max(0.0);
    (mean, var)
}

/// Log marginal likelihood of the standardized targets under `hyper`.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    hyper: &KernelHyper,
) -> Result<f64, GpError> {
    let n = inputs.len();
    if n == 0 {
        return Err(GpError::TooFewPoints { need: 1, got: 0 });
    }
    let (ys, _, _) = standardize(targets);
    let k = gram(inputs, hyper);
    let l = chol_with_jitter(&k, hyper.noise_variance)?;
    let z = solve_lower(&l, &ys);
    let alpha = solve_upper_t(&l, &z);
    let fit_term: f64 = ys.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let log_det: f64 = (0..n).map(|i| l[i][i].ln()).sum();
    Ok(-0.5 * fit_term - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln())
}

const SIGNAL_GRID: [f64; 3] = [0.25, 1.0, 4.0];
const LENGTH_GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.8, 1.6];
const NOISE_GRID: [f64; 3] = [1e-8, 1e-4, 1e-2];

/// Exhaustive log-space grid search over 54 candidates, maximizing the log
/// marginal likelihood. Ties keep the first candidate in enumeration order.
pub fn select_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    space_dim: usize,
) -> Result<KernelHyper, GpError> {
    if inputs.len() < 2 {
        return Err(GpError::TooFewPoints {
            need: 2,
            got: inputs.len(),
        });
    }
    let mut best: Option<(f64, KernelHyper)> = None;
    for &sv in &SIGNAL_GRID {
        for &ls in &LENGTH_GRID {
            for &nv in &NOISE_GRID {
                let cand = KernelHyper::isotropic(sv, ls, nv, space_dim);
                if let Ok(lml) = log_marginal_likelihood(inputs, targets, &cand) {
                    let better = match &best {
                        Some((b, _)) => lml > *b,
                        None => true,
                    };
                    if better {
                        best = Some((lml, cand));
                    }
                }
            }
        }
    }
    best.map(|(_, h)| h).ok_or(GpError::AllCandidatesFailed)
}
