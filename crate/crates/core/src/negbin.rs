//! Gamma-mixed Poisson marginals: a latent rate with gamma(shape alpha,
//! scale beta) law under Poisson observation gives the negative binomial
//! pmf `Gamma(k+a)/(Gamma(a) k!) * b^k / (1+b)^(k+a)`, optionally truncated
//! to the positive counts. Everything runs in log space through log-gamma,
//! so shapes up to 1e3 and counts up to 1e4 stay in range.

use crate::error::{Error, Result};
use crate::mixing::GammaShapeScale;
use crate::special::{ln_factorial, ln_gamma};

pub fn nb_log_pmf(k: u64, params: GammaShapeScale) -> f64 {
    let GammaShapeScale { alpha, beta } = params;
    let kf = k as f64;
    ln_gamma(kf + alpha) - ln_gamma(alpha) - ln_factorial(k) + kf * beta.ln()
        - (kf + alpha) * beta.ln_1p()
}

/// Probability of the count being zero, `(1+beta)^(-alpha)`.
pub fn nb_p0(params: GammaShapeScale) -> f64 {
    (-params.alpha * params.beta.ln_1p()).exp()
}

/// `1 - (1+beta)^(-alpha)` evaluated through expm1 so small shapes and
/// scales keep full relative accuracy.
pub fn nb_one_minus_p0(params: GammaShapeScale) -> f64 {
    -(-params.alpha * params.beta.ln_1p()).exp_m1()
}

/// The pmf, or the zero-truncated pmf when `truncated` is set.
pub fn nb_pmf(k: u64, params: GammaShapeScale, truncated: bool) -> Result<f64> {
    if truncated {
        if k == 0 {
            return Err(Error::InvalidInput(
                "truncated pmf is only defined for k >= 1".into(),
            ));
        }
        Ok((nb_log_pmf(k, params) - nb_one_minus_p0(params).ln()).exp())
    } else {
        Ok(nb_log_pmf(k, params).exp())
    }
}

/// Upper bound on pmf(x'+1)/pmf(x') valid for every x' >= x, for tail
/// control in series evaluation. The exact ratio is
/// `beta/(1+beta) * (x+alpha)/(x+1)`, decreasing in x once alpha <= 1 and
/// bounded by its value at x otherwise.
pub fn nb_ratio_from(params: GammaShapeScale) -> impl Fn(u64) -> f64 {
    let GammaShapeScale { alpha, beta } = params;
    move |x| {
        let x = x as f64;
        (beta / (1.0 + beta)) * ((x + alpha) / (x + 1.0)).max(1.0)
    }
}
