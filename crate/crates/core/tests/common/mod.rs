//! Helpers shared by the integration suites: reference scenario settings,
//! random admissible parameter/design draws, and finite-difference gradients.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use stepstress::{BaselineHazard, BaselineKind, ModelParams, StepStressDesign};

/// Linear reference scenario: theta0 = (e^-4, e^-5.3, 0.5), inspections every
/// 2 time units up to 22, stress raised from 0.5 to 2.5 at tau = 14.
pub fn linear_scenario(n: u64) -> (ModelParams, StepStressDesign) {
    let params = ModelParams::new(
        BaselineHazard::linear((-4.0f64).exp(), (-5.3f64).exp()).unwrap(),
        0.5,
    )
    .unwrap();
    let design = StepStressDesign::new(
        0.5,
        2.5,
        14.0,
        (1..=11).map(|i| 2.0 * i as f64).collect(),
        n,
    )
    .unwrap();
    (params, design)
}

/// Quadratic reference scenario: theta0 = (e^-4, 0, e^-6, 0.5), inspections
/// at 1..=12, stress raised from 0.5 to 2.5 at tau = 8.
pub fn quadratic_scenario(n: u64) -> (ModelParams, StepStressDesign) {
    let params = ModelParams::new(
        BaselineHazard::quadratic((-4.0f64).exp(), 0.0, (-6.0f64).exp()).unwrap(),
        0.5,
    )
    .unwrap();
    let design =
        StepStressDesign::new(0.5, 2.5, 8.0, (1..=12).map(|i| i as f64).collect(), n).unwrap();
    (params, design)
}

pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Random admissible parameters of the given kind, in ranges bracketing the
/// reference scenarios.
pub fn random_params<R: Rng>(rng: &mut R, kind: BaselineKind) -> ModelParams {
    let g0 = rng.random_range(2e-3..6e-2);
    let g1 = rng.random_range(2e-4..2e-2);
    let a1 = rng.random_range(0.1..1.0);
    let baseline = match kind {
        BaselineKind::Linear => BaselineHazard::linear(g0, g1).unwrap(),
        BaselineKind::Quadratic => {
            let g2 = rng.random_range(2e-5..3e-3);
            BaselineHazard::quadratic(g0, g1, g2).unwrap()
        }
    };
    ModelParams::new(baseline, a1).unwrap()
}

/// Random design: 6 to 13 strictly increasing inspection times with the
/// stress change somewhere strictly inside.
pub fn random_design<R: Rng>(rng: &mut R, n: u64) -> StepStressDesign {
    let l = rng.random_range(6..=13usize);
    let mut t = 0.0;
    let times: Vec<f64> = (0..l)
        .map(|_| {
            t += rng.random_range(0.8..3.0);
            t
        })
        .collect();
    let k = rng.random_range(2..l);
    let tau = times[k - 1];
    let x1 = rng.random_range(0.2..1.0);
    let x2 = x1 + rng.random_range(0.5..2.2);
    StepStressDesign::new(x1, x2, tau, times, n).unwrap()
}

/// Central finite differences with a second-order one-sided stencil at the
/// nonnegativity boundary.
pub fn fd_gradient(value: &dyn Fn(&ModelParams) -> f64, params: &ModelParams) -> Vec<f64> {
    let theta = params.to_vec();
    let kind = params.kind();
    let at = |v: &[f64]| -> f64 { value(&ModelParams::from_vec(kind, v).unwrap()) };
    (0..theta.len())
        .map(|c| {
            let h = 1e-6 * theta[c].abs().max(1e-3);
            if theta[c] - h >= 0.0 {
                let mut up = theta.clone();
                up[c] += h;
                let mut down = theta.clone();
                down[c] -= h;
                (at(&up) - at(&down)) / (2.0 * h)
            } else {
                let mut up1 = theta.clone();
                up1[c] += h;
                let mut up2 = theta.clone();
                up2[c] += 2.0 * h;
                (4.0 * at(&up1) - 3.0 * at(&theta) - at(&up2)) / (2.0 * h)
            }
        })
        .collect()
}

/// Largest relative disagreement between an analytic gradient and its
/// finite-difference estimate.
pub fn max_rel_gradient_error(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1e-12))
        .fold(0.0, f64::max)
}
