//! Monte Carlo machinery: interval-censored data generation (clean and
//! contaminated), adjusted residuals, and a seeded RMSE study over a grid of
//! tuning parameters and contamination strengths.
//!
//! Failure counts are drawn sequentially: among the units alive at the last
//! inspection, the number failing in the next interval is binomial with the
//! conditional probability `q_j = pi_j / R(t_{j-1})`. This scheme is
//! equivalent to the multinomial model (so `E[p_hat] = pi`) and lets a single
//! cell be contaminated by inflating its conditional probability to
//! `(1 + eps) q_j`, which depresses the observed counts of every later cell.
//!
//! Replicates get pre-assigned ChaCha streams derived from the master seed,
//! so reports are bit-identical no matter how many threads run the study.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{
    hazard_rate_at, mean_lifetime, quantile, reliability_at, NocQuery,
};
use crate::error::{Error, Result};
use crate::estimate::{
    empirical_probs, fit_mdpde_from_probs, EmpiricalProbs, FitOptions, TuningParam,
};
use crate::model::{Evaluator, GroupedCounts, ModelParams, StepStressDesign};

/// Contaminate one cell by inflating its conditional failure probability by
/// `1 + epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    /// 1-based cell index in `1..=L`. The survivor cell cannot be targeted:
    /// it has no binomial draw of its own in the sequential scheme.
    pub cell_index: usize,
    /// Relative inflation, `>= 0`.
    pub epsilon: f64,
}

impl ContaminationSpec {
    pub fn validate(&self, design: &StepStressDesign) -> Result<()> {
        if self.cell_index == 0 || self.cell_index > design.n_intervals() {
            return Err(Error::InvalidDesign(format!(
                "contaminated cell index must lie in 1..={}, got {}",
                design.n_intervals(),
                self.cell_index
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidDesign(format!(
                "contamination strength must be finite and >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Contaminated cell plus the grid of strengths to sweep in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationPlan {
    pub cell_index: usize,
    pub epsilons: Vec<f64>,
}

/// Full specification of a Monte Carlo RMSE study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Data-generating parameters.
    pub params: ModelParams,
    pub design: StepStressDesign,
    /// Tuning parameters to fit per replicate.
    pub beta_grid: Vec<f64>,
    /// Optional contamination sweep; a clean study runs `epsilon = 0` only.
    pub contamination: Option<ContaminationPlan>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Where to evaluate the lifetime characteristics.
    pub noc: NocQuery,
    pub fit_options: FitOptions,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidDesign(
                "a study needs at least one replicate".to_string(),
            ));
        }
        if self.beta_grid.is_empty() {
            return Err(Error::InvalidDesign("beta grid is empty".to_string()));
        }
        for &b in &self.beta_grid {
            TuningParam::new(b)?;
        }
        if let Some(plan) = &self.contamination {
            for &eps in &plan.epsilons {
                ContaminationSpec {
                    cell_index: plan.cell_index,
                    epsilon: eps,
                }
                .validate(&self.design)?;
            }
        }
        Ok(())
    }
}

/// RMSEs of the four lifetime characteristics at the NOC query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicRmse {
    pub median: f64,
    pub mean: f64,
    pub hazard: f64,
    pub reliability: f64,
}

/// Aggregates for one `(beta, epsilon)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseEntry {
    pub beta: f64,
    pub epsilon: f64,
    /// Per-parameter RMSE over the successful replicates.
    pub param_rmse: Vec<f64>,
    pub characteristic_rmse: CharacteristicRmse,
    /// Fraction of successful replicates whose Wald interval covered the
    /// true parameter, per parameter.
    pub ci_coverage: Vec<f64>,
    pub n_success: usize,
    pub n_failed: usize,
}

/// Mean adjusted residuals per cell under the true parameters; one row per
/// contamination strength (residuals do not depend on the fit's beta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub epsilon: f64,
    pub mean_residuals: Vec<f64>,
    /// Replicates in which the contaminated conditional probability had to
    /// be clamped at one.
    pub n_clamped: usize,
}

/// Output of [`rmse_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub beta_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub n_units: u64,
    /// True parameter vector the data were generated from.
    pub true_params: Vec<f64>,
    /// True characteristic values at the NOC query.
    pub true_characteristics: CharacteristicRmse,
    pub entries: Vec<RmseEntry>,
    pub residuals: Vec<ResidualEntry>,
    /// Set when any grid point lost more than 5% of its replicates.
    pub failure_rate_exceeded: bool,
}

/// Draw one grouped sample from the step-stress model.
pub fn generate_counts(
    params: &ModelParams,
    design: &StepStressDesign,
    contamination: Option<&ContaminationSpec>,
    seed: u64,
) -> Result<GroupedCounts> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    generate_with_rng(params, design, contamination, &mut rng).map(|(counts, _)| counts)
}

/// Generation core; also reports whether the contaminated conditional
/// probability was clamped at one.
pub(crate) fn generate_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    design: &StepStressDesign,
    contamination: Option<&ContaminationSpec>,
    rng: &mut R,
) -> Result<(GroupedCounts, bool)> {
    if let Some(spec) = contamination {
        spec.validate(design)?;
    }
    let pi = Evaluator::new(params, design)?.cell_probabilities()?;
    let l = design.n_intervals();
    // Survivor mass at the left endpoint of each interval, as a tail sum of
    // the same pi vector the conditional draws must stay consistent with.
    let mut tail = vec![0.0f64; l + 2];
    for j in (0..=l).rev() {
        tail[j] = tail[j + 1] + pi[j];
    }
    let mut remaining = design.n_units();
    let mut counts = Vec::with_capacity(l + 1);
    let mut clamped = false;
    for j in 0..l {
        let mut q = (pi[j] / tail[j]).clamp(0.0, 1.0);
        if let Some(spec) = contamination {
            if spec.cell_index == j + 1 {
                q *= 1.0 + spec.epsilon;
                if q > 1.0 {
                    clamped = true;
                    q = 1.0;
                }
            }
        }
        let failures = if remaining == 0 {
            0
        } else {
            Binomial::new(remaining, q)
                .map_err(|e| Error::InvalidData(format!("binomial draw failed: {e}")))?
                .sample(rng)
        };
        counts.push(failures);
        remaining -= failures;
    }
    counts.push(remaining);
    Ok((GroupedCounts::new(counts)?, clamped))
}

/// Standardized cell residuals `sqrt(N) (p_hat_j - pi_j) / sqrt(pi_j (1 - pi_j))`.
pub fn adjusted_residuals(
    counts: &GroupedCounts,
    params: &ModelParams,
    design: &StepStressDesign,
) -> Result<Vec<f64>> {
    if counts.n_cells() != design.n_cells() {
        return Err(Error::InvalidData(format!(
            "counts have {} cells but the design has {}",
            counts.n_cells(),
            design.n_cells()
        )));
    }
    let pi = Evaluator::new(params, design)?.cell_probabilities()?;
    let p_hat = empirical_probs(counts);
    residuals_from_probs(&p_hat, &pi)
}

fn residuals_from_probs(
    p_hat: &EmpiricalProbs,
    pi: &crate::model::CellProbabilities,
) -> Result<Vec<f64>> {
    let n = p_hat.n() as f64;
    p_hat
        .probs()
        .iter()
        .zip(pi.values())
        .enumerate()
        .map(|(j, (&p, &q))| {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::DegenerateCell {
                    index: j + 1,
                    value: q,
                });
            }
            Ok(n.sqrt() * (p - q) / (q * (1.0 - q)).sqrt())
        })
        .collect()
}

/// ChaCha stream for one replicate, derived from the master seed and the
/// grid coordinates so scheduling cannot change any draw.
fn replicate_rng(master_seed: u64, eps_idx: usize, replicate: usize) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(eps_idx as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&(replicate as u64).to_le_bytes());
    seed[24..32].copy_from_slice(&0x73_74_65_70_2d_6d_63_32u64.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

struct ReplicateOutcome {
    residuals: Vec<f64>,
    clamped: bool,
    /// Per beta: parameter estimates, characteristic values and coverage
    /// flags, or `None` when the fit (or a characteristic) failed.
    fits: Vec<Option<ReplicateFit>>,
}

struct ReplicateFit {
    theta: Vec<f64>,
    characteristics: [f64; 4],
    covered: Vec<bool>,
}

/// Run the full Monte Carlo study described by `config`.
///
/// Replicates are fitted in parallel; every aggregate is folded in replicate
/// order, so the report depends only on the configuration and master seed.
pub fn rmse_study(config: &SimulationConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let epsilon_grid: Vec<f64> = match &config.contamination {
        Some(plan) => plan.epsilons.clone(),
        None => vec![0.0],
    };
    let cell_index = config.contamination.as_ref().map(|p| p.cell_index);
    let truth = config.params.to_vec();
    let true_chars = characteristics_at(&config.params, &config.noc)?;
    let betas: Vec<TuningParam> = config
        .beta_grid
        .iter()
        .map(|&b| TuningParam::new(b))
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(epsilon_grid.len() * betas.len());
    let mut residual_rows = Vec::with_capacity(epsilon_grid.len());
    for (eps_idx, &epsilon) in epsilon_grid.iter().enumerate() {
        let contamination = match (cell_index, epsilon) {
            (Some(cell), eps) if eps > 0.0 => Some(ContaminationSpec {
                cell_index: cell,
                epsilon: eps,
            }),
            _ => None,
        };
        let outcomes: Vec<ReplicateOutcome> = (0..config.replicates)
            .into_par_iter()
            .map(|rep| {
                run_replicate(
                    config,
                    &betas,
                    contamination.as_ref(),
                    replicate_rng(config.master_seed, eps_idx, rep),
                )
            })
            .collect();

        // Residual means and clamp counts, folded in replicate order.
        let cells = config.design.n_cells();
        let mut mean_residuals = vec![0.0f64; cells];
        let mut n_clamped = 0usize;
        for outcome in &outcomes {
            for (acc, &r) in mean_residuals.iter_mut().zip(&outcome.residuals) {
                *acc += r;
            }
            n_clamped += outcome.clamped as usize;
        }
        for r in &mut mean_residuals {
            *r /= config.replicates as f64;
        }
        residual_rows.push(ResidualEntry {
            epsilon,
            mean_residuals,
            n_clamped,
        });

        for (b_idx, beta) in betas.iter().enumerate() {
            let dim = truth.len();
            let mut sq_param = vec![0.0f64; dim];
            let mut covered = vec![0usize; dim];
            let mut sq_char = [0.0f64; 4];
            let mut n_success = 0usize;
            for outcome in &outcomes {
                let Some(fit) = &outcome.fits[b_idx] else {
                    continue;
                };
                n_success += 1;
                for i in 0..dim {
                    let d = fit.theta[i] - truth[i];
                    sq_param[i] += d * d;
                    covered[i] += fit.covered[i] as usize;
                }
                let truth_chars = [
                    true_chars.median,
                    true_chars.mean,
                    true_chars.hazard,
                    true_chars.reliability,
                ];
                for (acc, (est, tru)) in sq_char
                    .iter_mut()
                    .zip(fit.characteristics.iter().zip(truth_chars))
                {
                    let d = est - tru;
                    *acc += d * d;
                }
            }
            let denom = n_success.max(1) as f64;
            entries.push(RmseEntry {
                beta: beta.value(),
                epsilon,
                param_rmse: sq_param.iter().map(|s| (s / denom).sqrt()).collect(),
                characteristic_rmse: CharacteristicRmse {
                    median: (sq_char[0] / denom).sqrt(),
                    mean: (sq_char[1] / denom).sqrt(),
                    hazard: (sq_char[2] / denom).sqrt(),
                    reliability: (sq_char[3] / denom).sqrt(),
                },
                ci_coverage: covered.iter().map(|&c| c as f64 / denom).collect(),
                n_success,
                n_failed: config.replicates - n_success,
            });
        }
    }
    let failure_rate_exceeded = entries
        .iter()
        .any(|e| e.n_failed as f64 > 0.05 * config.replicates as f64);
    Ok(MonteCarloReport {
        beta_grid: config.beta_grid.clone(),
        epsilon_grid,
        replicates: config.replicates,
        master_seed: config.master_seed,
        n_units: config.design.n_units(),
        true_params: truth,
        true_characteristics: true_chars,
        entries,
        residuals: residual_rows,
        failure_rate_exceeded,
    })
}

fn run_replicate(
    config: &SimulationConfig,
    betas: &[TuningParam],
    contamination: Option<&ContaminationSpec>,
    mut rng: ChaCha12Rng,
) -> ReplicateOutcome {
    let (counts, clamped) =
        match generate_with_rng(&config.params, &config.design, contamination, &mut rng) {
            Ok(v) => v,
            Err(_) => {
                return ReplicateOutcome {
                    residuals: vec![f64::NAN; config.design.n_cells()],
                    clamped: false,
                    fits: (0..betas.len()).map(|_| None).collect(),
                }
            }
        };
    let residuals = adjusted_residuals(&counts, &config.params, &config.design)
        .unwrap_or_else(|_| vec![f64::NAN; config.design.n_cells()]);
    let p_hat = empirical_probs(&counts);
    let truth = config.params.to_vec();
    let fits = betas
        .iter()
        .map(|&beta| {
            let fit = fit_mdpde_from_probs(
                &p_hat,
                &config.design,
                config.params.kind(),
                beta,
                &config.fit_options,
            )
            .ok()?;
            if !fit.converged {
                return None;
            }
            let chars = characteristics_at(&fit.params, &config.noc).ok()?;
            let covered = match &fit.covariance {
                Some(cov) => cov
                    .intervals
                    .iter()
                    .zip(&truth)
                    .map(|(&(lo, hi), &t)| lo <= t && t <= hi)
                    .collect(),
                None => vec![false; truth.len()],
            };
            Some(ReplicateFit {
                theta: fit.params.to_vec(),
                characteristics: [chars.median, chars.mean, chars.hazard, chars.reliability],
                covered,
            })
        })
        .collect();
    ReplicateOutcome {
        residuals,
        clamped,
        fits,
    }
}

fn characteristics_at(params: &ModelParams, noc: &NocQuery) -> Result<CharacteristicRmse> {
    Ok(CharacteristicRmse {
        median: quantile(params, noc.p, noc.x0)?,
        mean: mean_lifetime(params, noc.x0)?,
        hazard: hazard_rate_at(params, noc.t0, noc.x0)?.value,
        reliability: reliability_at(params, noc.t0, noc.x0)?.value,
    })
}
