//! Estimation oracles: the DPD fit at beta = 0 against an independent
//! likelihood maximizer, and starting-point invariance on clean reference
//! data.

mod common;

use common::{linear_scenario, random_params, seeded_rng};
use stepstress::estimate::{fit_mdpde, FitOptions, TuningParam};
use stepstress::simulate::generate_counts;
use stepstress::{cell_probabilities, BaselineKind, GroupedCounts, ModelParams, StepStressDesign};

/// Hand-rolled Nelder-Mead over the log-parameters, maximizing the grouped
/// log-likelihood `sum_j n_j log pi_j`. Independent of the production
/// optimizer and of the DPD loss path.
fn maximize_likelihood_nm(
    counts: &GroupedCounts,
    design: &StepStressDesign,
    kind: BaselineKind,
    start: &[f64],
) -> Vec<f64> {
    let neg_loglik = |eta: &[f64]| -> f64 {
        let theta: Vec<f64> = eta.iter().map(|&e| e.exp()).collect();
        let Ok(params) = ModelParams::from_vec(kind, &theta) else {
            return f64::INFINITY;
        };
        let Ok(pi) = cell_probabilities(&params, design) else {
            return f64::INFINITY;
        };
        -counts
            .counts()
            .iter()
            .zip(pi.values())
            .map(|(&n, &p)| n as f64 * p.ln())
            .sum::<f64>()
    };
    let n = start.len();
    let mut best: Vec<f64> = start.iter().map(|&v| v.ln()).collect();
    for round in 0..6 {
        let scale = 0.25 / (1 << round) as f64;
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best.clone(), neg_loglik(&best)));
        for i in 0..n {
            let mut v = best.clone();
            v[i] += scale;
            let fv = neg_loglik(&v);
            simplex.push((v, fv));
        }
        for _ in 0..4000 {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[n].1 - simplex[0].1 < 1e-13 * (1.0 + simplex[0].1.abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..n)
                .map(|i| simplex[..n].iter().map(|(v, _)| v[i]).sum::<f64>() / n as f64)
                .collect();
            let reflect: Vec<f64> = (0..n)
                .map(|i| 2.0 * centroid[i] - simplex[n].0[i])
                .collect();
            let fr = neg_loglik(&reflect);
            if fr < simplex[0].1 {
                let expand: Vec<f64> = (0..n)
                    .map(|i| 3.0 * centroid[i] - 2.0 * simplex[n].0[i])
                    .collect();
                let fe = neg_loglik(&expand);
                simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (reflect, fr);
            } else {
                let contract: Vec<f64> = (0..n)
                    .map(|i| 0.5 * (centroid[i] + simplex[n].0[i]))
                    .collect();
                let fc = neg_loglik(&contract);
                if fc < simplex[n].1 {
                    simplex[n] = (contract, fc);
                } else {
                    let anchor = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        for i in 0..n {
                            entry.0[i] = 0.5 * (anchor[i] + entry.0[i]);
                        }
                        entry.1 = neg_loglik(&entry.0);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        best = simplex[0].0.clone();
    }
    best.iter().map(|&e| e.exp()).collect()
}

#[test]
fn mle_member_equals_direct_likelihood_maximization() {
    // 20 random datasets; per-coordinate agreement within 1e-6.
    let mut rng = seeded_rng(31);
    let (_, design) = linear_scenario(400);
    let opts = FitOptions::default();
    for case in 0..20 {
        let truth = random_params(&mut rng, BaselineKind::Linear);
        let counts = generate_counts(&truth, &design, None, 7000 + case).unwrap();
        let fit = fit_mdpde(&counts, &design, BaselineKind::Linear, TuningParam::mle(), &opts)
            .unwrap();
        assert!(fit.converged, "case {case} did not converge");
        let oracle = maximize_likelihood_nm(
            &counts,
            &design,
            BaselineKind::Linear,
            &truth.to_vec(),
        );
        let est = fit.params.to_vec();
        for i in 0..est.len() {
            assert!(
                (est[i] - oracle[i]).abs() < 1e-6,
                "case {case} coordinate {i}: mdpde {} vs likelihood {}",
                est[i],
                oracle[i]
            );
        }
    }
}

#[test]
fn multistart_reaches_one_minimum_on_clean_reference_data() {
    // Expected counts at theta0 rounded to integers: every start must land
    // in the same basin, with the same loss to 1e-6.
    let (params, design) = linear_scenario(200);
    let pi = cell_probabilities(&params, &design).unwrap();
    let n = design.n_units();
    let mut counts: Vec<u64> = pi.values()[..pi.len() - 1]
        .iter()
        .map(|&p| (p * n as f64).round() as u64)
        .collect();
    let assigned: u64 = counts.iter().sum();
    counts.push(n - assigned);
    let counts = GroupedCounts::new(counts).unwrap();
    for beta in [0.0, 0.4, 1.0] {
        let fit = fit_mdpde(
            &counts,
            &design,
            BaselineKind::Linear,
            TuningParam::new(beta).unwrap(),
            &FitOptions::default(),
        )
        .unwrap();
        let best = fit
            .multistart_losses
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let worst = fit
            .multistart_losses
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            worst - best < 1e-6,
            "beta {beta}: multistart losses spread {best}..{worst}"
        );
    }
}
