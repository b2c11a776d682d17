//! Gamma-mixture (negative binomial) fit to a frequency-of-frequencies
//! table with the zero class unobserved, plus the asymptotic standard error
//! of the implied total-richness estimate.
//!
//! The stationary system of the zero-truncated likelihood in (shape, scale)
//! is solved by profiling the scale out of the sample-size equation (which
//! is monotone in the scale) and bracketing the remaining one-dimensional
//! shape equation. The result is then cross-checked against a direct
//! simplex maximization of the same likelihood; disagreement beyond
//! tolerance is surfaced in the diagnostics.

use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::mixing::GammaShapeScale;
use crate::negbin::{nb_log_pmf, nb_one_minus_p0, nb_p0, nb_pmf, nb_ratio_from};
use crate::poisson_eb::ci_sum;
use crate::report::EstimateReport;
use crate::series::{expect_truncated, SeriesOpts, Tail};
use crate::special::digamma;

#[derive(Debug, Clone, Copy)]
pub struct GammaMleOptions {
    /// Relative residual demanded of both stationary equations.
    pub residual_tol: f64,
    /// Cap on bracketing refinements of the shape equation.
    pub max_refinements: u32,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    /// Relative per-coordinate disagreement with the direct maximizer that
    /// triggers a warning.
    pub crosscheck_tol: f64,
    pub level: f64,
}

impl Default for GammaMleOptions {
    fn default() -> Self {
        GammaMleOptions {
            residual_tol: 1e-9,
            max_refinements: 500,
            alpha_lo: 1e-8,
            alpha_hi: 1e6,
            crosscheck_tol: 1e-6,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GammaSpeciesFit {
    pub params: GammaShapeScale,
    pub d_hat: f64,
    pub se: f64,
    /// Relative residuals of the two stationary equations at the solution.
    pub residuals: (f64, f64),
    /// Relative per-coordinate disagreement with the direct maximizer.
    pub crosscheck: (f64, f64),
    pub report: EstimateReport,
}

/// Zero-truncated log-likelihood of the frequency table under a
/// gamma(shape, scale) mixture, including the factorial constants so values
/// are comparable across model families.
pub fn zt_loglik(fof: &FrequencyOfFrequencies, params: GammaShapeScale) -> f64 {
    let log_trunc = nb_one_minus_p0(params).ln();
    fof.iter()
        .map(|(k, n)| n * (nb_log_pmf(k, params) - log_trunc))
        .sum()
}

/// Solves the sample-size equation
/// `units * alpha * beta / (1 - (1+beta)^(-alpha)) = total`
/// for the scale at a fixed shape. The left side increases from `units`
/// (scale -> 0) without bound, so a root exists exactly when total > units.
fn scale_given_shape(alpha: f64, units: f64, total: f64) -> Result<f64> {
    let h = |beta: f64| {
        let omp0 = nb_one_minus_p0(GammaShapeScale { alpha, beta });
        units * alpha * beta / omp0 - total
    };
    let mut lo: f64 = 1e-12;
    let mut hi: f64 = 1.0;
    let mut expansions = 0;
    while h(hi) < 0.0 {
        hi *= 8.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NonConvergence(format!(
                "scale equation has no root below {hi:.1e} at shape {alpha:.3e}"
            )));
        }
    }
    // Bisection on the log scale down to relative machine width.
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (llo + lhi);
        if h(mid.exp()) < 0.0 {
            llo = mid;
        } else {
            lhi = mid;
        }
        if lhi - llo < 1e-15 {
            break;
        }
    }
    lo = llo.exp();
    hi = lhi.exp();
    Ok(0.5 * (lo + hi))
}

/// Left-minus-right of the shape equation at (alpha, profiled beta):
/// `sum_k S_k / (alpha + k - 1) - units * log(1+beta) / (1 - (1+beta)^(-alpha))`.
fn shape_residual(alpha: f64, beta: f64, tails: &[f64], units: f64) -> f64 {
    let mut lhs = 0.0;
    for (k, &s) in tails.iter().enumerate().skip(1) {
        // alpha + (k-1) keeps full precision at tiny alpha, where the
        // naive (alpha + k) - 1 wipes out alpha's low bits and the k = 1
        // term dominates the sum.
        lhs += s / (alpha + (k - 1) as f64);
    }
    let omp0 = nb_one_minus_p0(GammaShapeScale { alpha, beta });
    lhs - units * beta.ln_1p() / omp0
}

pub fn fit_gamma_mle(fof: &FrequencyOfFrequencies, opts: &GammaMleOptions) -> Result<GammaSpeciesFit> {
    let units = fof.observed_units();
    let total = fof.sample_size();
    if units <= 0.0 {
        return Err(Error::EmptySample("no observed units".into()));
    }
    let distinct = fof.iter().count();
    if distinct < 2 {
        return Err(Error::BoundarySolution(
            "frequency table needs at least two distinct multiplicities".into(),
        ));
    }
    if total <= units {
        return Err(Error::BoundarySolution(
            "mean multiplicity is 1 (all singletons): the likelihood has no interior maximum"
                .into(),
        ));
    }
    let tails = fof.tail_sums();

    let eval = |alpha: f64| -> Result<(f64, f64)> {
        let beta = scale_given_shape(alpha, units, total)?;
        Ok((shape_residual(alpha, beta, &tails, units), beta))
    };

    // Bracket the shape equation by scanning the allowed range on a log
    // grid, then tighten with the Illinois rule.
    let decades = (opts.alpha_hi / opts.alpha_lo).log10();
    let grid_points = (decades * 4.0).ceil() as usize + 1;
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    let mut prev: Option<(f64, f64)> = None;
    let mut refinements = 0u32;
    for i in 0..grid_points {
        let t = i as f64 / (grid_points - 1) as f64;
        let alpha = opts.alpha_lo * (opts.alpha_hi / opts.alpha_lo).powf(t);
        let (f, _) = eval(alpha)?;
        refinements += 1;
        if let Some((pa, pf)) = prev {
            if pf == 0.0 {
                bracket = Some((pa, pa, pf, pf));
                break;
            }
            if pf.signum() != f.signum() {
                bracket = Some((pa, alpha, pf, f));
                break;
            }
        }
        prev = Some((alpha, f));
    }
    let (mut a_lo, mut a_hi, mut f_lo, mut f_hi) = bracket.ok_or_else(|| {
        Error::BoundarySolution(format!(
            "shape equation has no sign change in [{:.1e}, {:.1e}]",
            opts.alpha_lo, opts.alpha_hi
        ))
    })?;

    let mut alpha = 0.5 * (a_lo + a_hi);
    let mut side = 0i8;
    while refinements < opts.max_refinements {
        refinements += 1;
        alpha = if f_hi != f_lo {
            (a_lo * f_hi - a_hi * f_lo) / (f_hi - f_lo)
        } else {
            0.5 * (a_lo + a_hi)
        };
        if !(alpha > a_lo && alpha < a_hi) {
            alpha = 0.5 * (a_lo + a_hi);
        }
        let (f, _) = eval(alpha)?;
        if f == 0.0 {
            break;
        }
        if f.signum() == f_lo.signum() {
            a_lo = alpha;
            f_lo = f;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            a_hi = alpha;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
        if (a_hi - a_lo) < 1e-14 * alpha.max(1e-12) {
            break;
        }
    }
    if refinements >= opts.max_refinements {
        return Err(Error::NonConvergence(format!(
            "shape equation still open after {} refinements",
            opts.max_refinements
        )));
    }

    let beta = scale_given_shape(alpha, units, total)?;
    let params = GammaShapeScale::new(alpha, beta)?;

    // Relative residuals of both stationary equations at the solution.
    let omp0 = nb_one_minus_p0(params);
    let rhs1 = units * beta.ln_1p() / omp0;
    let res1 = (shape_residual(alpha, beta, &tails, units) / rhs1.max(1.0)).abs();
    let res2 = ((units * alpha * beta / omp0 - total) / total.max(1.0)).abs();
    if res1 > opts.residual_tol || res2 > opts.residual_tol {
        return Err(Error::NonConvergence(format!(
            "stationary residuals ({res1:.2e}, {res2:.2e}) above {:.1e}",
            opts.residual_tol
        )));
    }

    let d_hat = units / omp0;
    let (se, mut warnings) = se_gamma_inner(params, d_hat)?;

    // Cross-check: maximize the truncated likelihood directly from a
    // moment-style start and compare coordinates.
    let start = [0.0f64, (fof.mean_multiplicity() - 1.0).max(0.25).ln()];
    let best = nelder_mead_2d(
        |p| -zt_loglik(fof, GammaShapeScale { alpha: p[0].exp(), beta: p[1].exp() }),
        start,
        0.7,
        600,
        1e-13,
    );
    let (ca, cb) = (best[0].exp(), best[1].exp());
    let crosscheck = (
        (ca - alpha).abs() / alpha.max(1e-12),
        (cb - beta).abs() / beta.max(1e-12),
    );
    if crosscheck.0 > opts.crosscheck_tol || crosscheck.1 > opts.crosscheck_tol {
        warnings.push(format!(
            "direct-maximizer disagreement ({:.2e}, {:.2e}) above {:.1e}",
            crosscheck.0, crosscheck.1, opts.crosscheck_tol
        ));
    }

    let (lo, hi) = ci_sum(d_hat, se, 1, opts.level);
    let mut report =
        EstimateReport::new("species.gamma-mle", d_hat).with_interval(se, [lo, hi], opts.level);
    report.diagnostics.iterations = refinements as u64;
    report.diagnostics.converged = true;
    report.diagnostics.loglik = Some(zt_loglik(fof, params));
    report.diagnostics.warnings = warnings;

    Ok(GammaSpeciesFit {
        params,
        d_hat,
        se,
        residuals: (res1, res2),
        crosscheck,
        report,
    })
}

/// Standard error of the richness estimate: sqrt(d_hat * V) with
/// `V = P(X=0)/P(X>0) + gamma' Cov(conditional score)^{-1} gamma`,
/// all moments by truncated series, the 2x2 matrix inverted in closed form.
pub fn se_gamma(fit: &GammaSpeciesFit) -> Result<f64> {
    if !fit.report.diagnostics.converged {
        return Err(Error::NonConvergence(
            "standard error requires a converged fit".into(),
        ));
    }
    Ok(se_gamma_inner(fit.params, fit.d_hat)?.0)
}

pub(crate) fn se_gamma_inner(
    params: GammaShapeScale,
    d_hat: f64,
) -> Result<(f64, Vec<String>)> {
    let GammaShapeScale { alpha, beta } = params;
    let q0 = nb_p0(params);
    let omp0 = nb_one_minus_p0(params);

    let rho_a = move |x: u64| digamma(x as f64 + alpha) - digamma(alpha) - beta.ln_1p();
    let rho_b = move |x: u64| x as f64 / beta - (x as f64 + alpha) / (1.0 + beta);
    let pmf = move |x: u64| nb_pmf(x, params, false).unwrap_or(0.0);
    let ratio = nb_ratio_from(params);
    let series = |h: &dyn Fn(u64) -> f64, degree: f64| -> Result<f64> {
        Ok(expect_truncated(
            |x| if x == 0 { 0.0 } else { h(x) },
            pmf,
            Tail::Geometric {
                pmf_ratio_from: &ratio,
                h_degree: degree,
            },
            SeriesOpts::default(),
        )?
        .value)
    };

    // Conditional score mean on the observed part.
    let ga = series(&|x| rho_a(x), 1.0)? / omp0;
    let gb = series(&|x| rho_b(x), 1.0)? / omp0;

    // Covariance of the centered, truncated score.
    let c_aa = series(&|x| (rho_a(x) - ga).powi(2), 2.0)?;
    let c_ab = series(&|x| (rho_a(x) - ga) * (rho_b(x) - gb), 2.0)?;
    let c_bb = series(&|x| (rho_b(x) - gb).powi(2), 2.0)?;

    let det = c_aa * c_bb - c_ab * c_ab;
    let trace = c_aa + c_bb;
    let disc = (0.25 * (c_aa - c_bb).powi(2) + c_ab * c_ab).sqrt();
    let eig_min = 0.5 * trace - disc;
    let eig_max = 0.5 * trace + disc;
    if !(det.is_finite() && det > 0.0 && eig_min > 0.0) {
        return Err(Error::SingularInformation(format!(
            "covariance of the truncated score is singular (det {det:.3e})"
        )));
    }
    let mut warnings = Vec::new();
    let cond = eig_max / eig_min;
    if cond > 1e12 {
        warnings.push(format!("score covariance condition number {cond:.3e}"));
    }

    let quad = (c_bb * ga * ga - 2.0 * c_ab * ga * gb + c_aa * gb * gb) / det;
    let v = q0 / omp0 + quad;
    Ok(((d_hat * v).sqrt(), warnings))
}

/// Compact Nelder–Mead in two dimensions. Returns the best vertex.
pub(crate) fn nelder_mead_2d(
    mut f: impl FnMut(&[f64; 2]) -> f64,
    start: [f64; 2],
    scale: f64,
    max_iter: u32,
    ftol: f64,
) -> [f64; 2] {
    let mut simplex = [
        start,
        [start[0] + scale, start[1]],
        [start[0], start[1] + scale],
    ];
    let mut values = [f(&simplex[0]), f(&simplex[1]), f(&simplex[2])];

    for _ in 0..max_iter {
        // Order vertices: best, middle, worst.
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let [b, m, w] = order;
        if (values[w] - values[b]).abs() <= ftol * (1.0 + values[b].abs()) {
            break;
        }
        let centroid = [
            0.5 * (simplex[b][0] + simplex[m][0]),
            0.5 * (simplex[b][1] + simplex[m][1]),
        ];
        let reflect = [
            centroid[0] + (centroid[0] - simplex[w][0]),
            centroid[1] + (centroid[1] - simplex[w][1]),
        ];
        let fr = f(&reflect);
        if fr < values[b] {
            let expand = [
                centroid[0] + 2.0 * (centroid[0] - simplex[w][0]),
                centroid[1] + 2.0 * (centroid[1] - simplex[w][1]),
            ];
            let fe = f(&expand);
            if fe < fr {
                simplex[w] = expand;
                values[w] = fe;
            } else {
                simplex[w] = reflect;
                values[w] = fr;
            }
        } else if fr < values[m] {
            simplex[w] = reflect;
            values[w] = fr;
        } else {
            let contract = [
                centroid[0] + 0.5 * (simplex[w][0] - centroid[0]),
                centroid[1] + 0.5 * (simplex[w][1] - centroid[1]),
            ];
            let fc = f(&contract);
            if fc < values[w] {
                simplex[w] = contract;
                values[w] = fc;
            } else {
                // Shrink towards the best vertex.
                for i in [m, w] {
                    simplex[i] = [
                        simplex[b][0] + 0.5 * (simplex[i][0] - simplex[b][0]),
                        simplex[b][1] + 0.5 * (simplex[i][1] - simplex[b][1]),
                    ];
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if values[i] < values[best] {
            best = i;
        }
    }
    simplex[best]
}

/// Expected frequency table under the fitted model: `d_hat * pmf(k)` for
/// k = 1..=kmax. Used by the fitted-frequency output.
pub fn expected_frequencies(params: GammaShapeScale, d_hat: f64, kmax: u64) -> Vec<(u64, f64)> {
    (1..=kmax)
        .map(|k| (k, d_hat * nb_pmf(k, params, false).unwrap_or(0.0)))
        .collect()
}
