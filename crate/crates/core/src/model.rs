//! Step-stress proportional-hazards model with polynomial baseline.
//!
//! The lifetime hazard under constant stress `x` factors as
//! `h(t, x) = h0(t) * exp(a1 * x)` where the baseline `h0` is a degree-1 or
//! degree-2 polynomial with nonnegative coefficients. A simple step-stress
//! plan switches the stress from `x1` to `x2` at a fixed time `tau`; the
//! cumulative-exposure assumption splices the two constant-stress cumulative
//! hazards together continuously at `tau` through a nonpositive shifting time
//! `s` solving `P(tau + s) = exp(a1 (x1 - x2)) * P(tau)` with
//! `P(t) = g0 t + g1 t^2/2 + g2 t^3/3`.
//!
//! With inspections at `t_1 < ... < t_L` (one of them equal to `tau`), the
//! observable data are the failure counts per interval plus survivors, a
//! multinomial with cell probabilities `pi_j = R(t_{j-1}) - R(t_j)` and
//! `pi_{L+1} = R(t_L)`. This module evaluates those probabilities and their
//! analytic Jacobian with respect to the model parameters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest exponent for which `exp` stays comfortably finite; beyond this the
/// acceleration factor and polynomial are combined in log space.
const MAX_EXPONENT: f64 = 700.0;

/// Degree of the baseline hazard polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Linear,
    Quadratic,
}

impl BaselineKind {
    /// Number of baseline coefficients (2 linear, 3 quadratic).
    pub fn n_coefficients(self) -> usize {
        match self {
            BaselineKind::Linear => 2,
            BaselineKind::Quadratic => 3,
        }
    }

    /// Dimension of the full parameter vector (baseline plus stress slope).
    pub fn n_params(self) -> usize {
        self.n_coefficients() + 1
    }

    /// Parameter names in estimation order.
    pub fn param_names(self) -> Vec<&'static str> {
        match self {
            BaselineKind::Linear => vec!["gamma0", "gamma1", "a1"],
            BaselineKind::Quadratic => vec!["gamma0", "gamma1", "gamma2", "a1"],
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaselineKind::Linear => write!(f, "linear"),
            BaselineKind::Quadratic => write!(f, "quadratic"),
        }
    }
}

/// Polynomial baseline hazard `h0(t) = g0 + g1 t (+ g2 t^2)` with nonnegative
/// coefficients, at least one strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHazard {
    kind: BaselineKind,
    gamma: Vec<f64>,
}

impl BaselineHazard {
    pub fn linear(gamma0: f64, gamma1: f64) -> Result<Self> {
        Self::from_coefficients(BaselineKind::Linear, &[gamma0, gamma1])
    }

    pub fn quadratic(gamma0: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::from_coefficients(BaselineKind::Quadratic, &[gamma0, gamma1, gamma2])
    }

    pub fn from_coefficients(kind: BaselineKind, gamma: &[f64]) -> Result<Self> {
        if gamma.len() != kind.n_coefficients() {
            return Err(Error::InvalidParameter(format!(
                "{kind} baseline needs {} coefficients, got {}",
                kind.n_coefficients(),
                gamma.len()
            )));
        }
        for (i, &g) in gamma.iter().enumerate() {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "baseline coefficient gamma{i} must be finite and >= 0, got {g}"
                )));
            }
        }
        if gamma.iter().all(|&g| g == 0.0) {
            return Err(Error::InvalidParameter(
                "baseline hazard is identically zero".to_string(),
            ));
        }
        Ok(Self {
            kind,
            gamma: gamma.to_vec(),
        })
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.gamma
    }

    /// Coefficient `gamma_i`, zero beyond the polynomial degree.
    pub fn gamma(&self, i: usize) -> f64 {
        self.gamma.get(i).copied().unwrap_or(0.0)
    }

    /// Baseline hazard `h0(t)`, checked for `t >= 0`.
    pub fn hazard(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.rate(t))
    }

    /// `h0(t) = g0 + g1 t + g2 t^2` (unchecked).
    pub(crate) fn rate(&self, t: f64) -> f64 {
        self.gamma(0) + t * (self.gamma(1) + t * self.gamma(2))
    }

    /// `P(t) = integral of h0 over [0, t] = g0 t + g1 t^2/2 + g2 t^3/3`.
    pub(crate) fn cumulative(&self, t: f64) -> f64 {
        t * self.mean_rate(t)
    }

    /// `P(t)/t = g0 + g1 t/2 + g2 t^2/3`, the average hazard over `[0, t]`.
    pub(crate) fn mean_rate(&self, t: f64) -> f64 {
        self.gamma(0) + t * (self.gamma(1) / 2.0 + t * self.gamma(2) / 3.0)
    }
}

/// Full model parameter: baseline coefficients plus the log-linear stress
/// coefficient `a1 > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    baseline: BaselineHazard,
    a1: f64,
}

impl ModelParams {
    pub fn new(baseline: BaselineHazard, a1: f64) -> Result<Self> {
        if !a1.is_finite() || a1 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "stress coefficient a1 must be finite and > 0, got {a1}"
            )));
        }
        Ok(Self { baseline, a1 })
    }

    /// Build from a flat vector `[gamma..., a1]` in estimation order.
    pub fn from_vec(kind: BaselineKind, theta: &[f64]) -> Result<Self> {
        if theta.len() != kind.n_params() {
            return Err(Error::InvalidParameter(format!(
                "{kind} model needs {} parameters, got {}",
                kind.n_params(),
                theta.len()
            )));
        }
        let (gamma, a1) = theta.split_at(kind.n_coefficients());
        Self::new(BaselineHazard::from_coefficients(kind, gamma)?, a1[0])
    }

    /// Flatten to `[gamma..., a1]` in estimation order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.baseline.gamma.clone();
        v.push(self.a1);
        v
    }

    pub fn baseline(&self) -> &BaselineHazard {
        &self.baseline
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn kind(&self) -> BaselineKind {
        self.baseline.kind
    }

    pub fn dim(&self) -> usize {
        self.baseline.kind.n_params()
    }
}

/// Stress-acceleration factor `exp(a1 * x)`.
pub fn acceleration_factor(x: f64, a1: f64) -> Result<f64> {
    if !x.is_finite() || !a1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "acceleration factor needs finite x and a1, got x={x}, a1={a1}"
        )));
    }
    let exponent = a1 * x;
    let value = exponent.exp();
    if !value.is_finite() {
        return Err(Error::ExpOverflow { exponent });
    }
    Ok(value)
}

/// `exp(log_factor) * poly` for `poly >= 0`, evaluated in log space when the
/// exponent is too large in magnitude for a direct product.
fn scaled_poly(log_factor: f64, poly: f64) -> f64 {
    if poly == 0.0 {
        return 0.0;
    }
    if log_factor.abs() <= MAX_EXPONENT {
        log_factor.exp() * poly
    } else {
        (log_factor + poly.ln()).exp()
    }
}

/// Simple step-stress plan: two stress levels switched at `tau`, inspections
/// at strictly increasing times with `tau` among them, `N` devices on test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStressDesign {
    x1: f64,
    x2: f64,
    tau: f64,
    inspection_times: Vec<f64>,
    n_units: u64,
    /// 1-based index k with t_k = tau.
    change_index: usize,
}

impl StepStressDesign {
    pub fn new(
        x1: f64,
        x2: f64,
        tau: f64,
        inspection_times: Vec<f64>,
        n_units: u64,
    ) -> Result<Self> {
        if !x1.is_finite() || !x2.is_finite() {
            return Err(Error::InvalidDesign(format!(
                "stress levels must be finite, got x1={x1}, x2={x2}"
            )));
        }
        if x1 >= x2 {
            return Err(Error::InvalidDesign(format!(
                "stress must increase at the change time: x1={x1} must be < x2={x2}"
            )));
        }
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::InvalidDesign(format!(
                "stress-change time tau must be finite and > 0, got {tau}"
            )));
        }
        let l = inspection_times.len();
        if l < 2 {
            return Err(Error::InvalidDesign(format!(
                "need at least 2 inspection times, got {l}"
            )));
        }
        let mut prev = 0.0;
        for (i, &t) in inspection_times.iter().enumerate() {
            if !t.is_finite() || t <= prev {
                return Err(Error::InvalidDesign(format!(
                    "inspection times must be finite, positive and strictly increasing; \
                     offending entry {i}: {t}"
                )));
            }
            prev = t;
        }
        let tol = 1e-12 * tau.abs().max(1.0);
        let change_index = inspection_times
            .iter()
            .position(|&t| (t - tau).abs() <= tol)
            .map(|i| i + 1)
            .ok_or_else(|| {
                Error::InvalidDesign(format!(
                    "tau={tau} must equal one of the inspection times {inspection_times:?}"
                ))
            })?;
        if change_index >= l {
            return Err(Error::InvalidDesign(format!(
                "tau={tau} must change the stress strictly before the termination time t_L={}",
                inspection_times[l - 1]
            )));
        }
        if n_units == 0 {
            return Err(Error::InvalidDesign("sample size N must be positive".to_string()));
        }
        Ok(Self {
            x1,
            x2,
            tau,
            inspection_times,
            n_units,
            change_index,
        })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn inspection_times(&self) -> &[f64] {
        &self.inspection_times
    }

    /// 1-based index k with t_k = tau.
    pub fn change_index(&self) -> usize {
        self.change_index
    }

    /// Number of inspection intervals L.
    pub fn n_intervals(&self) -> usize {
        self.inspection_times.len()
    }

    /// Number of multinomial cells, L + 1 (intervals plus survivors).
    pub fn n_cells(&self) -> usize {
        self.inspection_times.len() + 1
    }

    pub fn n_units(&self) -> u64 {
        self.n_units
    }

    /// Termination time `t_L`.
    pub fn termination_time(&self) -> f64 {
        *self.inspection_times.last().expect("nonempty by construction")
    }

    /// Same plan with a different number of devices.
    pub fn with_n_units(&self, n_units: u64) -> Result<Self> {
        Self::new(
            self.x1,
            self.x2,
            self.tau,
            self.inspection_times.clone(),
            n_units,
        )
    }
}

/// Failure counts per inspection interval plus survivors (length L + 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupedCounts {
    counts: Vec<u64>,
}

impl GroupedCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 3 {
            return Err(Error::InvalidData(format!(
                "counts must cover at least 2 intervals plus survivors, got {} cells",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidData("counts sum to zero".to_string()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Check cell count and total against a design.
    pub fn validate_for(&self, design: &StepStressDesign) -> Result<()> {
        if self.counts.len() != design.n_cells() {
            return Err(Error::InvalidData(format!(
                "counts have {} cells but the design has {}",
                self.counts.len(),
                design.n_cells()
            )));
        }
        if self.total() != design.n_units() {
            return Err(Error::InvalidData(format!(
                "counts sum to {} but the design has N={}",
                self.total(),
                design.n_units()
            )));
        }
        Ok(())
    }
}

/// Multinomial cell probabilities (length L + 1, positive, summing to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProbabilities {
    values: Vec<f64>,
}

impl CellProbabilities {
    #[cfg(test)]
    pub(crate) fn from_raw_for_tests(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for CellProbabilities {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Shared state for evaluating one parameter point on one design: the
/// acceleration exponents and the shifting time are computed once.
pub(crate) struct Evaluator<'d> {
    params: &'d ModelParams,
    design: &'d StepStressDesign,
    /// Shifting time s <= 0.
    shift: f64,
    /// Shifting-time partial derivatives, estimation order (a1 last).
    shift_grad: Vec<f64>,
}

impl<'d> Evaluator<'d> {
    pub(crate) fn new(params: &'d ModelParams, design: &'d StepStressDesign) -> Result<Self> {
        let shifted_change = solve_shifted_change(params, design)?;
        let shift = shifted_change - design.tau;
        let shift_grad = shift_gradient(params, design, shifted_change);
        Ok(Self {
            params,
            design,
            shift,
            shift_grad,
        })
    }

    pub(crate) fn shift(&self) -> f64 {
        self.shift
    }

    fn log_accel(&self, first_stress: bool) -> f64 {
        let x = if first_stress { self.design.x1 } else { self.design.x2 };
        self.params.a1 * x
    }

    /// Cumulative hazard H(t) of the step-stress lifetime, t >= 0.
    pub(crate) fn cumulative_hazard(&self, t: f64) -> f64 {
        let b = self.params.baseline();
        if t <= self.design.tau {
            scaled_poly(self.log_accel(true), b.cumulative(t))
        } else {
            scaled_poly(self.log_accel(false), b.cumulative(t + self.shift))
        }
    }

    /// Reliability R(t) = exp(-H(t)).
    pub(crate) fn reliability(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// Cell probabilities pi_1..pi_{L+1}. The interval masses use
    /// `R(t_{j-1}) * (1 - exp(-dH))` so small cells keep relative accuracy.
    pub(crate) fn cell_probabilities(&self) -> Result<CellProbabilities> {
        let times = self.design.inspection_times();
        let mut values = Vec::with_capacity(times.len() + 1);
        let mut h_prev: f64 = 0.0;
        for (j, &t) in times.iter().enumerate() {
            let h = self.cumulative_hazard(t);
            let pi = (-h_prev).exp() * (-(-(h - h_prev)).exp_m1());
            if !(pi > 0.0) {
                return Err(Error::DegenerateCell {
                    index: j + 1,
                    value: pi,
                });
            }
            values.push(pi);
            h_prev = h;
        }
        let survivor = (-h_prev).exp();
        if !(survivor > 0.0) {
            return Err(Error::DegenerateCell {
                index: times.len() + 1,
                value: survivor,
            });
        }
        values.push(survivor);
        Ok(CellProbabilities { values })
    }

    /// Gradient of R(t) with respect to theta (estimation order).
    ///
    /// First stress phase (`t <= tau`): dR/dgamma_i = -R A1 t^{i+1}/(i+1) and
    /// dR/da1 = -R A1 P(t) x1. Second phase: the shifting time carries the
    /// parameter dependence of the accumulated damage, so each component picks
    /// up `h0(t+s) * ds/dtheta`.
    pub(crate) fn reliability_grad(&self, t: f64) -> Vec<f64> {
        let b = self.params.baseline();
        let p = self.params.dim();
        let n_gamma = p - 1;
        let mut grad = vec![0.0; p];
        if t <= self.design.tau {
            let neg_r_accel = -scaled_poly(self.log_accel(true) - self.cumulative_hazard(t), 1.0);
            let mut power = t;
            for (i, g) in grad.iter_mut().take(n_gamma).enumerate() {
                *g = neg_r_accel * power / (i as f64 + 1.0);
                power *= t;
            }
            grad[n_gamma] = neg_r_accel * b.cumulative(t) * self.design.x1;
        } else {
            let u = t + self.shift;
            let neg_r_accel = -scaled_poly(self.log_accel(false) - self.cumulative_hazard(t), 1.0);
            let rate_u = b.rate(u);
            let mut power = u;
            for (i, g) in grad.iter_mut().take(n_gamma).enumerate() {
                *g = neg_r_accel * (power / (i as f64 + 1.0) + rate_u * self.shift_grad[i]);
                power *= u;
            }
            grad[n_gamma] =
                neg_r_accel * (b.cumulative(u) * self.design.x2 + rate_u * self.shift_grad[n_gamma]);
        }
        grad
    }

    /// Jacobian of the cell probabilities: row j is d pi_j / d theta^T,
    /// shape (L+1) x p. Columns sum to zero because the probabilities sum
    /// to one identically.
    pub(crate) fn jacobian(&self) -> DMatrix<f64> {
        let times = self.design.inspection_times();
        let p = self.params.dim();
        let mut w = DMatrix::zeros(times.len() + 1, p);
        // grad R(t_0) = grad R(0) = 0.
        let mut prev = vec![0.0; p];
        for (j, &t) in times.iter().enumerate() {
            let cur = self.reliability_grad(t);
            for c in 0..p {
                w[(j, c)] = prev[c] - cur[c];
            }
            prev = cur;
        }
        let last = times.len();
        for c in 0..p {
            w[(last, c)] = prev[c];
        }
        w
    }
}

/// Solve `P(u) = exp(a1 (x1 - x2)) P(tau)` for `u = tau + s` in `(0, tau]`.
///
/// `P` is strictly increasing on the positive axis, so the root is unique;
/// choosing it realizes the "greater negative" shifting time. The linear
/// baseline gives a closed-form quadratic root; the quadratic baseline is
/// solved by a bracketed Newton iteration with bisection fallback.
fn solve_shifted_change(params: &ModelParams, design: &StepStressDesign) -> Result<f64> {
    let b = params.baseline();
    let tau = design.tau;
    let p_tau = b.cumulative(tau);
    let target = scaled_poly(params.a1 * (design.x1 - design.x2), p_tau);
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::ShiftingTime(format!(
            "accumulated-damage target {target} is not a positive finite number \
             (a1={}, x1={}, x2={}, P(tau)={p_tau})",
            params.a1, design.x1, design.x2
        )));
    }
    let u = match b.kind() {
        BaselineKind::Linear => {
            // (g1/2) u^2 + g0 u - target = 0, positive root in stable form.
            let g0 = b.gamma(0);
            let g1 = b.gamma(1);
            2.0 * target / (g0 + (g0 * g0 + 2.0 * g1 * target).sqrt())
        }
        BaselineKind::Quadratic => {
            let f = |u: f64| b.cumulative(u) - target;
            let mut lo = 0.0;
            let mut hi = tau;
            let mut u = tau * (target / p_tau).min(1.0);
            if u <= 0.0 || u > tau {
                u = 0.5 * tau;
            }
            let mut converged = false;
            for _ in 0..200 {
                let fu = f(u);
                if fu.abs() <= 1e-13 * target {
                    converged = true;
                    break;
                }
                if fu > 0.0 {
                    hi = u;
                } else {
                    lo = u;
                }
                let step = fu / b.rate(u);
                let mut next = u - step;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - u).abs() <= f64::EPSILON * u.abs() {
                    u = next;
                    converged = true;
                    break;
                }
                u = next;
            }
            if !converged && f(u).abs() > 1e-10 * target {
                return Err(Error::ShiftingTime(format!(
                    "root iteration stalled at u={u} with residual {}",
                    f(u)
                )));
            }
            u
        }
    };
    if !(u > 0.0) || !u.is_finite() || u > tau * (1.0 + 1e-12) {
        return Err(Error::ShiftingTime(format!(
            "no admissible root: got tau + s = {u} for tau = {tau}"
        )));
    }
    Ok(u.min(tau))
}

/// Partial derivatives of the shifting time, obtained by implicit
/// differentiation of the continuity equation. `mean_rate` is `P(t)/t`
/// (written k2 in the estimating-equation literature) and the baseline
/// hazard itself plays the role of k1.
fn shift_gradient(params: &ModelParams, design: &StepStressDesign, shifted_change: f64) -> Vec<f64> {
    let b = params.baseline();
    let tau = design.tau;
    let u = shifted_change;
    let rate_u = b.rate(u);
    let ratio = b.mean_rate(u) / b.mean_rate(tau);
    let n_gamma = params.dim() - 1;
    let mut grad = Vec::with_capacity(n_gamma + 1);
    let mut tau_pow = 1.0;
    let mut u_pow = 1.0;
    for i in 0..n_gamma {
        let denom = (i as f64 + 1.0) * rate_u;
        grad.push(u * (tau_pow * ratio - u_pow) / denom);
        tau_pow *= tau;
        u_pow *= u;
    }
    grad.push(u * b.mean_rate(u) / rate_u * (design.x1 - design.x2));
    grad
}

/// Shifting time `s <= 0` aligning the post-change cumulative hazard with the
/// damage accumulated before the stress change; satisfies `tau + s > 0`.
pub fn shifting_time(params: &ModelParams, design: &StepStressDesign) -> Result<f64> {
    Ok(Evaluator::new(params, design)?.shift())
}

/// Cumulative hazard of the step-stress lifetime at `t >= 0`.
pub fn cumulative_hazard(t: f64, params: &ModelParams, design: &StepStressDesign) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(Evaluator::new(params, design)?.cumulative_hazard(t))
}

/// Reliability of the step-stress lifetime at `t >= 0`.
pub fn step_reliability(t: f64, params: &ModelParams, design: &StepStressDesign) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok(Evaluator::new(params, design)?.reliability(t))
}

/// Multinomial cell probabilities of the interval-monitored experiment.
pub fn cell_probabilities(
    params: &ModelParams,
    design: &StepStressDesign,
) -> Result<CellProbabilities> {
    Evaluator::new(params, design)?.cell_probabilities()
}

/// Jacobian of the cell probabilities, shape (L+1) x p.
pub fn cell_prob_jacobian(
    params: &ModelParams,
    design: &StepStressDesign,
) -> Result<DMatrix<f64>> {
    Ok(Evaluator::new(params, design)?.jacobian())
}
