//! Richness from a least-squares fit of the frequency-ratio recursion.
//!
//! Under a gamma mixture the expected frequencies satisfy, exactly,
//!
//! `n_k = tau1 * (k+1) n_{k+1} + tau2 * k n_k`,
//! with `tau1 = (beta+1)/(alpha beta)` and `tau2 = -1/alpha`.
//!
//! Regressing n_k on the pair of covariates over k = 1..m-1 and adding
//! `max(tau1, 0) * n1` to the observed count gives the estimate. The
//! covariate for the first slot comes in two flavors: `ratio-consistent`
//! uses `(k+1) n_{k+1}` (the recursion above holds exactly, so expected
//! counts give a zero-residual fit), while `next-count` uses the raw
//! `n_{k+1}`. Both are kept because either reading of the recursion appears
//! in practice; ratio-consistent is the default.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::report::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressionVariant {
    /// Covariate (k+1) n_{k+1}: exact for expected gamma-mixture counts.
    #[default]
    RatioConsistent,
    /// Covariate n_{k+1}.
    NextCount,
}

impl fmt::Display for RegressionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegressionVariant::RatioConsistent => "ratio-consistent",
            RegressionVariant::NextCount => "next-count",
        })
    }
}

impl FromStr for RegressionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio-consistent" => Ok(RegressionVariant::RatioConsistent),
            "next-count" => Ok(RegressionVariant::NextCount),
            _ => Err(Error::InvalidInput(format!(
                "unknown regression variant {s:?} (ratio-consistent | next-count)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightScheme {
    #[default]
    Unit,
    /// Weight 1 / max(n_k, 1).
    InverseCount,
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(WeightScheme::Unit),
            "inverse-count" => Ok(WeightScheme::InverseCount),
            _ => Err(Error::InvalidInput(format!(
                "unknown weight scheme {s:?} (unit | inverse-count)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegressionSpeciesFit {
    pub tau1: f64,
    pub tau2: f64,
    pub d_hat: f64,
    pub variant: RegressionVariant,
    pub residual_norm: f64,
    pub report: EstimateReport,
}

/// Default cutoff: the largest multiplicity still backed by at least five
/// units, floored at 4. Small cells destabilize the fit.
pub fn default_cutoff(fof: &FrequencyOfFrequencies) -> u64 {
    fof.iter()
        .filter(|&(_, n)| n >= 5.0)
        .map(|(k, _)| k)
        .max()
        .unwrap_or(0)
        .max(4)
}

pub fn nb_ratio_regression(
    fof: &FrequencyOfFrequencies,
    m: Option<u64>,
    weights: WeightScheme,
    variant: RegressionVariant,
) -> Result<RegressionSpeciesFit> {
    let m = m.unwrap_or_else(|| default_cutoff(fof));
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "cutoff m = {m} leaves fewer regression rows than parameters"
        )));
    }
    let populated = fof.iter().filter(|&(k, n)| k <= m && n > 0.0).count();
    if populated < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 populated multiplicities <= {m}, found {populated}"
        )));
    }

    // Weighted normal equations for response n_k on (c_k, k n_k).
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut rows = Vec::with_capacity((m - 1) as usize);
    for k in 1..m {
        let y = fof.count(k);
        let next = fof.count(k + 1);
        let c1 = match variant {
            RegressionVariant::RatioConsistent => (k as f64 + 1.0) * next,
            RegressionVariant::NextCount => next,
        };
        let c2 = k as f64 * y;
        let w = match weights {
            WeightScheme::Unit => 1.0,
            WeightScheme::InverseCount => 1.0 / y.max(1.0),
        };
        s11 += w * c1 * c1;
        s12 += w * c1 * c2;
        s22 += w * c2 * c2;
        r1 += w * c1 * y;
        r2 += w * c2 * y;
        rows.push((y, c1, c2, w));
    }
    let det = s11 * s22 - s12 * s12;
    let scale = (s11 * s22).max(1.0);
    if !(det.is_finite() && det.abs() > 1e-14 * scale) {
        return Err(Error::SingularDesign(format!(
            "normal equations are singular (det {det:.3e})"
        )));
    }
    let tau1 = (s22 * r1 - s12 * r2) / det;
    let tau2 = (s11 * r2 - s12 * r1) / det;
    let residual_norm = rows
        .iter()
        .map(|&(y, c1, c2, w)| w * (y - tau1 * c1 - tau2 * c2).powi(2))
        .sum::<f64>()
        .sqrt();

    let d_tilde = fof.observed_units();
    let d_hat = d_tilde + tau1.max(0.0) * fof.count(1);
    let mut report = EstimateReport::new("species.nbreg", d_hat);
    if tau1 < 0.0 {
        report.warn("slope estimate negative; clamped to the observed count");
    }
    Ok(RegressionSpeciesFit {
        tau1,
        tau2,
        d_hat,
        variant,
        residual_norm,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::GammaShapeScale;
    use crate::negbin::nb_pmf;
    use approx::assert_relative_eq;

    /// Expected frequencies d * pmf(k), k = 1..=kmax.
    fn expected_counts(alpha: f64, beta: f64, d: f64, kmax: u64) -> FrequencyOfFrequencies {
        let params = GammaShapeScale::new(alpha, beta).unwrap();
        FrequencyOfFrequencies::from_pairs(
            (1..=kmax).map(|k| (k, d * nb_pmf(k, params, false).unwrap())),
        )
        .unwrap()
    }

    // The recursion (k+1) n_{k+1} tau1 + k n_k tau2 = n_k holds exactly for
    // expected counts: pmf(k+1)/pmf(k) = (k+alpha) beta / ((k+1)(1+beta)),
    // so (k+1) n_{k+1} (beta+1)/(alpha beta) - k n_k / alpha = n_k.
    #[test]
    fn exact_counts_zero_residual() {
        let fof = expected_counts(1.0, 1.0, 1000.0, 10);
        let fit = nb_ratio_regression(
            &fof,
            Some(10),
            WeightScheme::Unit,
            RegressionVariant::RatioConsistent,
        )
        .unwrap();
        assert_relative_eq!(fit.tau1, 2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.tau2, -1.0, epsilon = 1e-9);
        assert!(fit.residual_norm < 1e-9);
    }

    #[test]
    fn exact_recovery_across_parameter_grid() {
        for &alpha in &[0.5, 1.0, 2.0] {
            for &beta in &[0.5, 1.0, 2.0] {
                let fof = expected_counts(alpha, beta, 5000.0, 12);
                let fit = nb_ratio_regression(
                    &fof,
                    Some(10),
                    WeightScheme::Unit,
                    RegressionVariant::RatioConsistent,
                )
                .unwrap();
                assert_relative_eq!(fit.tau1, (beta + 1.0) / (alpha * beta), epsilon = 1e-8);
                assert_relative_eq!(fit.tau2, -1.0 / alpha, epsilon = 1e-8);
                assert!(fit.residual_norm < 1e-8, "residual {}", fit.residual_norm);
            }
        }
    }

    #[test]
    fn negative_slope_clamps_to_observed() {
        // Counts chosen so the least-squares slope comes out negative.
        let fof = FrequencyOfFrequencies::from_pairs([
            (1, 10.0),
            (2, 1.0),
            (3, 50.0),
            (4, 2.0),
            (5, 100.0),
        ])
        .unwrap();
        let fit = nb_ratio_regression(
            &fof,
            Some(5),
            WeightScheme::Unit,
            RegressionVariant::RatioConsistent,
        )
        .unwrap();
        assert!(fit.tau1 < 0.0, "tau1 = {}", fit.tau1);
        assert_eq!(fit.d_hat, fof.observed_units());
        assert!(!fit.report.diagnostics.warnings.is_empty());
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let fof = FrequencyOfFrequencies::from_pairs([(1, 5.0), (2, 3.0)]).unwrap();
        assert!(matches!(
            nb_ratio_regression(&fof, Some(2), WeightScheme::Unit, Default::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn default_cutoff_follows_counts() {
        let fof = FrequencyOfFrequencies::from_pairs([
            (1, 100.0),
            (2, 40.0),
            (3, 10.0),
            (4, 6.0),
            (5, 5.0),
            (6, 2.0),
            (9, 1.0),
        ])
        .unwrap();
        assert_eq!(default_cutoff(&fof), 5);
        let sparse = FrequencyOfFrequencies::from_pairs([(1, 2.0), (2, 1.0)]).unwrap();
        assert_eq!(default_cutoff(&sparse), 4);
    }

    #[test]
    fn inverse_count_weights_change_nothing_on_exact_data() {
        let fof = expected_counts(2.0, 0.5, 2000.0, 10);
        let unit = nb_ratio_regression(&fof, Some(9), WeightScheme::Unit, Default::default())
            .unwrap();
        let inv =
            nb_ratio_regression(&fof, Some(9), WeightScheme::InverseCount, Default::default())
                .unwrap();
        assert_relative_eq!(unit.tau1, inv.tau1, epsilon = 1e-7);
        assert_relative_eq!(unit.tau2, inv.tau2, epsilon = 1e-7);
    }
}
