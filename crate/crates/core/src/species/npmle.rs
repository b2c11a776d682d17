//! Nonparametric maximum-likelihood mixing distribution for the species
//! problem: the single-node, fixed-scale case of the pooled EM. The scale
//! is pinned at one (only the product scale*rate is identified here) and
//! only the mixing weights move.

use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::mixing::{one_minus_p0, DiscreteMixingDistribution};
use crate::netdegree::em::{run_em, EmOptions, EmState};
use crate::report::EstimateReport;

#[derive(Debug, Clone)]
pub struct NpmleSpeciesFit {
    pub g_hat: DiscreteMixingDistribution,
    pub d_hat: f64,
    pub loglik_trace: Vec<f64>,
    pub report: EstimateReport,
}

/// Geometric default grid spanning two decades below to two decades above
/// the mean multiplicity, with an extra atom at zero.
pub fn default_grid(fof: &FrequencyOfFrequencies, points: usize) -> Vec<f64> {
    let m = fof.mean_multiplicity().max(1.0);
    let (lo, hi) = (0.01 * m, 100.0 * m);
    let mut grid = Vec::with_capacity(points + 1);
    grid.push(0.0);
    for i in 0..points {
        let t = i as f64 / (points - 1).max(1) as f64;
        grid.push(lo * (hi / lo).powf(t));
    }
    grid
}

pub fn fit_npmle_species(
    fof: &FrequencyOfFrequencies,
    grid: &[f64],
    opts: &EmOptions,
) -> Result<NpmleSpeciesFit> {
    if fof.is_empty() {
        return Err(Error::EmptySample("no observed units".into()));
    }
    let mut support: Vec<f64> = grid.to_vec();
    support.sort_by(|a, b| a.partial_cmp(b).unwrap());
    support.dedup();
    if !support.iter().any(|&y| y > 0.0) {
        return Err(Error::InvalidGrid(
            "support needs at least one strictly positive point".into(),
        ));
    }
    let init = EmState {
        betas: vec![1.0],
        mixing: DiscreteMixingDistribution::uniform_on(&support)?,
    };
    let run = run_em(&[fof], init, false, opts)?;

    let g_hat = run.state.mixing;
    let d_tilde = fof.observed_units();
    let d_hat = d_tilde * (1.0 - g_hat.mass_at_zero()) / one_minus_p0(1.0, &g_hat);

    let mut report = EstimateReport::new("species.npmle", d_hat);
    report.diagnostics.iterations = run.iterations;
    report.diagnostics.converged = run.converged;
    report.diagnostics.loglik = run.loglik_trace.last().copied();
    report.diagnostics.warnings = run.warnings;
    if !run.converged {
        report.warn(format!(
            "stopped at the iteration cap ({}); estimate may not be fully converged",
            opts.max_iter
        ));
    }
    Ok(NpmleSpeciesFit {
        g_hat,
        d_hat,
        loglik_trace: run.loglik_trace,
        report,
    })
}

/// Expected frequency table under the fitted mixing distribution, for the
/// fitted-frequency output: `d_hat * P(X = k)` with the zero-atom mass
/// excluded from the per-unit law.
pub fn expected_frequencies(
    g: &DiscreteMixingDistribution,
    d_hat: f64,
    kmax: u64,
) -> Vec<(u64, f64)> {
    use crate::mixing::log_mixture_moment;
    use crate::special::ln_factorial;
    let positive = 1.0 - g.mass_at_zero();
    (1..=kmax)
        .map(|k| {
            let p = (log_mixture_moment(k, 1.0, g) - ln_factorial(k)).exp();
            (k, if positive > 0.0 { d_hat * p / positive } else { 0.0 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Bisection on m(mu) = mu / (1 - exp(-mu)) = target.
    fn zt_mean_inverse(target: f64) -> f64 {
        let f = |mu: f64| mu / (-(-mu).exp_m1()) - target;
        let (mut lo, mut hi) = (1e-9, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    // All units observed exactly twice: the likelihood concentrates at the
    // single rate solving mu/(1-e^-mu) = 2, and the total estimate is
    // observed / (1 - e^-mu).
    #[test]
    fn concentrates_at_zero_truncated_mle() {
        let fof = FrequencyOfFrequencies::from_pairs([(2, 500.0)]).unwrap();
        let grid: Vec<f64> = (1..=240).map(|i| 0.5 + 3.5 * i as f64 / 240.0).collect();
        let fit = fit_npmle_species(
            &fof,
            &grid,
            &EmOptions {
                tol: 1e-12,
                max_iter: 50_000,
            },
        )
        .unwrap();
        let mu = zt_mean_inverse(2.0);
        assert_relative_eq!(mu, 1.5936, epsilon = 5e-4);
        let d_expected = 500.0 / (-(-mu).exp_m1());
        assert!(
            (fit.d_hat - d_expected).abs() < 1.0,
            "d_hat {} vs {}",
            fit.d_hat,
            d_expected
        );
        assert!((fit.g_hat.mean() - mu).abs() < 0.02);
    }

    #[test]
    fn trace_is_monotone() {
        let fof =
            FrequencyOfFrequencies::from_pairs([(1, 120.0), (2, 40.0), (3, 9.0), (5, 1.0)])
                .unwrap();
        let fit = fit_npmle_species(
            &fof,
            &default_grid(&fof, 30),
            &EmOptions {
                tol: 1e-11,
                max_iter: 400,
            },
        )
        .unwrap();
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
        }
        assert!(fit.d_hat >= fof.observed_units());
    }

    #[test]
    fn zero_grid_is_invalid() {
        let fof = FrequencyOfFrequencies::from_pairs([(1, 3.0)]).unwrap();
        assert!(matches!(
            fit_npmle_species(&fof, &[0.0], &EmOptions::default()),
            Err(Error::InvalidGrid(_))
        ));
    }
}
