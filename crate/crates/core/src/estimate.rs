//! Minimum density power divergence estimation for the interval-monitored
//! step-stress model.
//!
//! The DPD between the empirical cell frequencies `p_hat` and the model cell
//! probabilities `pi(theta)` is, for tuning parameter `beta > 0`,
//!
//! ```text
//! sum_j [ pi_j^{beta+1} - (1 + 1/beta) pi_j^beta p_hat_j + (1/beta) p_hat_j^{beta+1} ]
//! ```
//!
//! and the Kullback-Leibler divergence `sum_j p_hat_j log(p_hat_j / pi_j)` at
//! `beta = 0`, so the estimator family contains the MLE as its most efficient
//! member. The minimizer annuls the beta-score `W^T D^{beta-1} (p_hat - pi)`
//! where `W` is the cell-probability Jacobian and `D = diag(pi)`; the score
//! is the MLE score with each cell residual down-weighted by `pi_j^beta`.
//!
//! Estimation runs on the log-reparameterized space (all baseline
//! coefficients and the stress slope are positive), with analytic gradients
//! and deterministic multistarts. Asymptotic covariances use the sandwich
//! `J^{-1} K J^{-1}` with `J = W^T D^{beta-1} W` and
//! `K = W^T (D^{2beta-1} - pi^beta (pi^beta)^T) W`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{
    BaselineKind, CellProbabilities, Evaluator, GroupedCounts, ModelParams, StepStressDesign,
};
use crate::solver::{self, SolveOptions};

/// DPD tuning parameter `beta >= 0`; `beta = 0` is the MLE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TuningParam(f64);

impl TuningParam {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tuning parameter beta must be finite and >= 0, got {beta}"
            )));
        }
        Ok(Self(beta))
    }

    /// The Kullback-Leibler / maximum-likelihood member.
    pub fn mle() -> Self {
        Self(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_mle(self) -> bool {
        self.0 == 0.0
    }
}

/// Empirical cell frequencies `n_j / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalProbs {
    probs: Vec<f64>,
    n: u64,
}

impl EmpiricalProbs {
    #[cfg(test)]
    pub(crate) fn from_raw_for_tests(probs: Vec<f64>, n: u64) -> Self {
        Self { probs, n }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Relative frequencies of a grouped sample (counts are already guaranteed
/// nonempty with a positive total).
pub fn empirical_probs(counts: &GroupedCounts) -> EmpiricalProbs {
    let n = counts.total();
    EmpiricalProbs {
        probs: counts.counts().iter().map(|&c| c as f64 / n as f64).collect(),
        n,
    }
}

/// Density power divergence between empirical and model cell probabilities.
pub fn dpd_loss(
    p_hat: &EmpiricalProbs,
    pi: &CellProbabilities,
    beta: TuningParam,
) -> Result<f64> {
    if p_hat.len() != pi.len() {
        return Err(Error::InvalidData(format!(
            "cell count mismatch: {} empirical vs {} model cells",
            p_hat.len(),
            pi.len()
        )));
    }
    let b = beta.value();
    let mut loss = 0.0;
    for (j, (&p, &q)) in p_hat.probs().iter().zip(pi.values()).enumerate() {
        if q <= 0.0 {
            return Err(Error::DegenerateCell {
                index: j + 1,
                value: q,
            });
        }
        if b == 0.0 {
            if p > 0.0 {
                loss += p * (p / q).ln();
            }
        } else {
            loss += q.powf(b + 1.0) - (1.0 + 1.0 / b) * q.powf(b) * p + p.powf(b + 1.0) / b;
        }
    }
    Ok(loss)
}

/// The beta-score `U_beta = W^T D^{beta-1} (p_hat - pi)`, whose zero defines
/// the MDPDE. The constant factor `beta + 1` relating it to the loss gradient
/// is dropped (it does not move the zero set); `dpd_loss_gradient` carries it.
pub fn beta_score(
    params: &ModelParams,
    p_hat: &EmpiricalProbs,
    design: &StepStressDesign,
    beta: TuningParam,
) -> Result<DVector<f64>> {
    let ev = Evaluator::new(params, design)?;
    let pi = ev.cell_probabilities()?;
    let w = ev.jacobian();
    score_from_parts(&w, &pi, p_hat, beta.value()).map(|(score, _)| score)
}

/// Gradient of `dpd_loss` with respect to theta: `-(beta + 1) U_beta`.
pub fn dpd_loss_gradient(
    params: &ModelParams,
    p_hat: &EmpiricalProbs,
    design: &StepStressDesign,
    beta: TuningParam,
) -> Result<DVector<f64>> {
    let score = beta_score(params, p_hat, design, beta)?;
    Ok(score * -(beta.value() + 1.0))
}

fn score_from_parts(
    w: &DMatrix<f64>,
    pi: &CellProbabilities,
    p_hat: &EmpiricalProbs,
    b: f64,
) -> Result<(DVector<f64>, f64)> {
    if p_hat.len() != pi.len() {
        return Err(Error::InvalidData(format!(
            "cell count mismatch: {} empirical vs {} model cells",
            p_hat.len(),
            pi.len()
        )));
    }
    let p = w.ncols();
    let mut score = DVector::zeros(p);
    for j in 0..pi.len() {
        let weight = pi[j].powf(b - 1.0) * (p_hat.probs()[j] - pi[j]);
        for c in 0..p {
            score[c] += weight * w[(j, c)];
        }
    }
    let norm = score.amax();
    Ok((score, norm))
}

/// Solver and reporting knobs for [`fit_mdpde`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Sup-norm tolerance on the log-space gradient.
    pub grad_tol: f64,
    /// Step-norm tolerance declaring convergence.
    pub step_tol: f64,
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Number of deterministic starting points.
    pub multistarts: usize,
    /// Back-transformed baseline coefficients below this are reported as zero.
    pub zero_threshold: f64,
    /// Confidence level for the per-parameter Wald intervals.
    pub level: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            step_tol: 1e-10,
            max_iters: 500,
            multistarts: 5,
            zero_threshold: 1e-7,
            level: 0.95,
        }
    }
}

/// Sandwich covariance evaluated at the estimate, with derived marginal
/// standard errors and truncated Wald intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct FitCovariance {
    /// Asymptotic covariance of `sqrt(N) (theta_hat - theta)`.
    pub sigma: DMatrix<f64>,
    /// Finite-sample covariance `sigma / N`.
    pub sigma_scaled: DMatrix<f64>,
    /// Standard errors `sqrt(diag(sigma / N))`.
    pub std_errors: Vec<f64>,
    /// Per-parameter Wald intervals truncated at zero.
    pub intervals: Vec<(f64, f64)>,
    /// Confidence level of the intervals.
    pub level: f64,
}

/// Result of one MDPDE fit at a fixed tuning parameter.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Estimated parameters, with sub-threshold baseline coefficients
    /// snapped to zero (see `zero_flags`).
    pub params: ModelParams,
    pub beta: TuningParam,
    /// DPD loss at the estimate.
    pub loss: f64,
    /// Sup-norm of the log-space loss gradient at the estimate.
    pub score_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// True when the Nelder-Mead rescue was needed.
    pub used_fallback: bool,
    /// Which parameters were reported as zero.
    pub zero_flags: Vec<bool>,
    /// Final loss reached from each starting point.
    pub multistart_losses: Vec<f64>,
    /// Sandwich covariance at the estimate; `None` when the information
    /// matrix is too ill-conditioned, with the reason alongside.
    pub covariance: Option<FitCovariance>,
    pub covariance_message: Option<String>,
}

/// Minimize the DPD loss over the log-reparameterized parameter space.
pub fn fit_mdpde(
    counts: &GroupedCounts,
    design: &StepStressDesign,
    kind: BaselineKind,
    beta: TuningParam,
    opts: &FitOptions,
) -> Result<FitResult> {
    counts.validate_for(design)?;
    let p_hat = empirical_probs(counts);
    fit_mdpde_from_probs(&p_hat, design, kind, beta, opts)
}

/// As [`fit_mdpde`] but starting from precomputed relative frequencies.
pub fn fit_mdpde_from_probs(
    p_hat: &EmpiricalProbs,
    design: &StepStressDesign,
    kind: BaselineKind,
    beta: TuningParam,
    opts: &FitOptions,
) -> Result<FitResult> {
    if p_hat.len() != design.n_cells() {
        return Err(Error::InvalidData(format!(
            "empirical vector has {} cells but the design has {}",
            p_hat.len(),
            design.n_cells()
        )));
    }
    let b = beta.value();
    let dim = kind.n_params();
    let loss_at = |eta: &DVector<f64>| -> f64 {
        let theta: Vec<f64> = eta.iter().map(|&e| e.exp()).collect();
        let Ok(params) = ModelParams::from_vec(kind, &theta) else {
            return f64::INFINITY;
        };
        let Ok(ev) = Evaluator::new(&params, design) else {
            return f64::INFINITY;
        };
        let Ok(pi) = ev.cell_probabilities() else {
            return f64::INFINITY;
        };
        dpd_loss(p_hat, &pi, TuningParam(b)).unwrap_or(f64::INFINITY)
    };
    let grad_at = |eta: &DVector<f64>| -> DVector<f64> {
        let theta: Vec<f64> = eta.iter().map(|&e| e.exp()).collect();
        let grad = ModelParams::from_vec(kind, &theta)
            .and_then(|params| dpd_loss_gradient(&params, p_hat, design, TuningParam(b)));
        match grad {
            // Chain rule through theta = exp(eta).
            Ok(g) => DVector::from_iterator(dim, g.iter().zip(&theta).map(|(gi, ti)| gi * ti)),
            Err(_) => DVector::from_element(dim, f64::NAN),
        }
    };

    let solve_opts = SolveOptions {
        grad_tol: opts.grad_tol,
        step_tol: opts.step_tol,
        max_iters: opts.max_iters,
    };
    let starts = multistart_seeds(p_hat, design, kind, opts.multistarts.max(1));
    let mut best: Option<solver::Solution> = None;
    let mut multistart_losses = Vec::with_capacity(starts.len());
    for eta0 in starts {
        let sol = solver::minimize(&loss_at, &grad_at, eta0, &solve_opts);
        multistart_losses.push(sol.value);
        let better = match &best {
            None => true,
            Some(cur) => {
                sol.value < cur.value - 1e-15
                    || ((sol.value - cur.value).abs() <= 1e-15 && sol.converged && !cur.converged)
            }
        };
        if better {
            best = Some(sol);
        }
    }
    let sol = best.ok_or_else(|| Error::Fit("no starting point produced a fit".to_string()))?;
    if !sol.value.is_finite() {
        return Err(Error::Fit(
            "loss is not finite at every starting point".to_string(),
        ));
    }

    // Back-transform and snap sub-threshold baseline coefficients to zero.
    let raw: Vec<f64> = sol.x.iter().map(|&e| e.exp()).collect();
    let mut theta = raw.clone();
    let mut zero_flags = vec![false; dim];
    for i in 0..dim - 1 {
        if theta[i] < opts.zero_threshold {
            theta[i] = 0.0;
            zero_flags[i] = true;
        }
    }
    if theta[..dim - 1].iter().all(|&g| g == 0.0) {
        // Keep the largest coefficient so the baseline stays a hazard.
        let (argmax, _) = raw[..dim - 1]
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("dim >= 2");
        theta[argmax] = raw[argmax];
        zero_flags[argmax] = false;
    }
    let params = ModelParams::from_vec(kind, &theta)?;

    let (covariance, covariance_message) =
        match fit_covariance(&params, design, TuningParam(b), p_hat.n(), opts.level) {
            Ok(cov) => (Some(cov), None),
            Err(e) => (None, Some(e.to_string())),
        };

    Ok(FitResult {
        params,
        beta: TuningParam(b),
        loss: sol.value,
        score_norm: sol.grad_norm,
        converged: sol.converged,
        iterations: sol.iterations,
        used_fallback: sol.used_fallback,
        zero_flags,
        multistart_losses,
        covariance,
        covariance_message,
    })
}

fn fit_covariance(
    params: &ModelParams,
    design: &StepStressDesign,
    beta: TuningParam,
    n: u64,
    level: f64,
) -> Result<FitCovariance> {
    let cov = asymptotic_covariance(params, design, beta, n)?;
    let theta = params.to_vec();
    let std_errors: Vec<f64> = (0..theta.len())
        .map(|i| cov.sigma_scaled[(i, i)].max(0.0).sqrt())
        .collect();
    let intervals = theta
        .iter()
        .zip(&std_errors)
        .map(|(&est, &se)| wald_ci(est, se, level, Some(0.0), None))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitCovariance {
        sigma: cov.sigma,
        sigma_scaled: cov.sigma_scaled,
        std_errors,
        intervals,
        level,
    })
}

/// Deterministic starting points: a hazard-moment seed assuming a constant
/// baseline (empirical cumulative hazards at tau and at termination identify
/// `exp(a1 x1) g0` and `exp(a1 x2) g0`), then reallocations of the hazard
/// mass across the polynomial coefficients.
fn multistart_seeds(
    p_hat: &EmpiricalProbs,
    design: &StepStressDesign,
    kind: BaselineKind,
    n_starts: usize,
) -> Vec<DVector<f64>> {
    let times = design.inspection_times();
    let l = times.len();
    let k = design.change_index();
    let tau = design.tau();
    let t_end = design.termination_time();

    let mut survival = 1.0;
    let mut surv_at = Vec::with_capacity(l);
    for j in 0..l {
        survival -= p_hat.probs()[j];
        surv_at.push(survival.clamp(1e-9, 1.0));
    }
    let h_tau = (-surv_at[k - 1].ln()).max(1e-6);
    let h_end = (-surv_at[l - 1].ln()).max(h_tau + 1e-6);
    let rate1 = h_tau / tau;
    let rate2 = (h_end - h_tau) / (t_end - tau);
    let mut a1 = (rate2 / rate1).ln() / (design.x2() - design.x1());
    if !a1.is_finite() || a1 <= 0.0 {
        a1 = std::f64::consts::LN_2 / (design.x2() - design.x1());
    }
    let accel1 = (a1 * design.x1()).exp().max(f64::MIN_POSITIVE);
    let g0 = (rate1 / accel1).max(1e-300);
    // Coefficients that would explain the first-phase hazard mass alone.
    let g1_full = (2.0 * h_tau / (accel1 * tau * tau)).max(1e-300);
    let g2_full = (3.0 * h_tau / (accel1 * tau * tau * tau)).max(1e-300);

    let bases: Vec<Vec<f64>> = match kind {
        BaselineKind::Linear => vec![
            vec![g0, g1_full / 100.0, a1],
            vec![g0 / 2.0, g1_full / 2.0, a1],
            vec![g0 / 100.0, g1_full, a1],
            vec![3.0 * g0, g1_full / 3.0, 0.7 * a1],
            vec![0.3 * g0, 0.7 * g1_full, 1.3 * a1],
        ],
        BaselineKind::Quadratic => vec![
            vec![g0, g1_full / 100.0, g2_full / 100.0, a1],
            vec![g0 / 2.0, g1_full / 4.0, g2_full / 4.0, a1],
            vec![g0 / 100.0, g1_full, g2_full / 100.0, a1],
            vec![g0 / 100.0, g1_full / 100.0, g2_full, a1],
            vec![0.3 * g0, 0.3 * g1_full, 0.3 * g2_full, 1.3 * a1],
        ],
    };
    (0..n_starts)
        .map(|i| {
            let base = &bases[i % bases.len()];
            // Extra starts beyond the base set get progressively scaled.
            let scale = 1.0 + 0.5 * (i / bases.len()) as f64;
            DVector::from_iterator(base.len(), base.iter().map(|&v| (v * scale).ln()))
        })
        .collect()
}

/// Asymptotic covariance of the MDPDE.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticCovariance {
    /// Covariance of `sqrt(N) (theta_hat - theta)`.
    pub sigma: DMatrix<f64>,
    /// Finite-sample covariance `sigma / N`.
    pub sigma_scaled: DMatrix<f64>,
}

/// Sandwich covariance `J^{-1} K J^{-1}` at `theta`; errors when the inner
/// information matrix `J` is singular or ill-conditioned.
pub fn asymptotic_covariance(
    params: &ModelParams,
    design: &StepStressDesign,
    beta: TuningParam,
    n: u64,
) -> Result<AsymptoticCovariance> {
    if n == 0 {
        return Err(Error::InvalidData("sample size must be positive".to_string()));
    }
    let b = beta.value();
    let ev = Evaluator::new(params, design)?;
    let pi = ev.cell_probabilities()?;
    let w = ev.jacobian();
    let p = w.ncols();
    let cells = pi.len();

    let mut j_mat: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut k_mat: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut wpib: DVector<f64> = DVector::zeros(p);
    for j in 0..cells {
        let row = w.row(j);
        let wb1 = pi[j].powf(b - 1.0);
        let wb2 = pi[j].powf(2.0 * b - 1.0);
        let pib = pi[j].powf(b);
        for r in 0..p {
            wpib[r] += pib * row[r];
            for c in 0..p {
                j_mat[(r, c)] += wb1 * row[r] * row[c];
                k_mat[(r, c)] += wb2 * row[r] * row[c];
            }
        }
    }
    k_mat -= &wpib * wpib.transpose();

    let svd = j_mat.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cond = s_max / s_min;
    if !cond.is_finite() || cond > 1e12 {
        // Name the parameter dominating the deficient direction.
        let names = params.kind().param_names();
        let v_t = svd.v_t.as_ref().expect("computed");
        let weakest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let dir = v_t.row(weakest);
        let dominant = (0..p)
            .max_by(|&a, &c| dir[a].abs().total_cmp(&dir[c].abs()))
            .unwrap_or(0);
        return Err(Error::Covariance(format!(
            "information matrix is singular or ill-conditioned (cond = {cond:.3e}); \
             weakest direction loads on {}",
            names[dominant]
        )));
    }
    let j_inv = j_mat
        .try_inverse()
        .ok_or_else(|| Error::Covariance("information matrix inversion failed".to_string()))?;
    let mut sigma = &j_inv * k_mat * &j_inv;
    // Enforce exact symmetry lost to rounding.
    let sigma_t = sigma.transpose();
    sigma = (sigma + sigma_t) * 0.5;
    let sigma_scaled = &sigma / n as f64;
    Ok(AsymptoticCovariance {
        sigma,
        sigma_scaled,
    })
}

/// Two-sided Wald interval `estimate +/- z_{alpha/2} se`, clipped to the
/// parameter's natural range when bounds are supplied.
pub fn wald_ci(
    estimate: f64,
    std_error: f64,
    level: f64,
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if !(std_error >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "standard error must be >= 0, got {std_error}"
        )));
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let mut lo = estimate - z * std_error;
    let mut hi = estimate + z * std_error;
    if let Some(b) = lower_bound {
        lo = lo.max(b);
        hi = hi.max(b);
    }
    if let Some(b) = upper_bound {
        hi = hi.min(b);
        lo = lo.min(b);
    }
    Ok((lo, hi))
}

/// Standard normal quantile.
pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
