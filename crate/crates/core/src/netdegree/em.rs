//! EM for the pooled zero-truncated Poisson-mixture model: every node
//! shares one mixing distribution over latent link rates, up to a per-node
//! scale. Observed-link counts at node k are Poisson(scale_k * rate) given
//! the rate, conditioned on being positive.
//!
//! One step updates the scales first (treating each node's unseen links as
//! missing data), then reweights the mixing distribution using the new
//! scales. Both halves are conditional maximizations after a fresh E-step,
//! so the conditional log-likelihood never decreases; a damped fallback for
//! the scale move exists as a contingency and is surfaced in diagnostics if
//! it ever fires.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::mixing::{one_minus_p0, DiscreteMixingDistribution};
use crate::special::ln_factorial;

use super::NodeFrequencyTables;

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    /// Relative change of the conditional log-likelihood that counts as
    /// converged.
    pub tol: f64,
    pub max_iter: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Current parameters: one positive scale per populated node (node order)
/// and the shared mixing distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub betas: Vec<f64>,
    pub mixing: DiscreteMixingDistribution,
}

pub(crate) struct EmRun {
    pub state: EmState,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: u64,
    pub warnings: Vec<String>,
}

const UNDERFLOW_FLOOR: f64 = 1e-300;

fn check_tables<'a>(
    state: &EmState,
    tables: &'a NodeFrequencyTables,
) -> Result<Vec<&'a FrequencyOfFrequencies>> {
    let fofs: Vec<&FrequencyOfFrequencies> =
        tables.populated().into_iter().map(|t| &t.fof).collect();
    if fofs.len() != state.betas.len() {
        return Err(Error::InvalidInput(format!(
            "state carries {} scales but {} nodes have observations",
            state.betas.len(),
            fofs.len()
        )));
    }
    if state.mixing.atoms().iter().all(|&(y, _)| y == 0.0) {
        return Err(Error::InvalidGrid(
            "mixing support needs at least one positive point".into(),
        ));
    }
    Ok(fofs)
}

/// One EM sweep over the populated nodes of `tables`.
pub fn em_step(state: &EmState, tables: &NodeFrequencyTables) -> Result<EmState> {
    let fofs = check_tables(state, tables)?;
    step_tables(&fofs, state, true, 1.0)
}

/// Conditional log-likelihood of the populated nodes under `state`,
/// factorial constants included.
pub fn conditional_loglik(state: &EmState, tables: &NodeFrequencyTables) -> Result<f64> {
    let fofs = check_tables(state, tables)?;
    loglik_tables(&fofs, state)
}

/// Per-atom log weights `ln w_g - beta y_g` (the `j = 0` log term) and the
/// log support `ln y_g`; evaluating `log p(j)` for j >= 1 is then one
/// streaming log-sum-exp pass over `pre_g + j ln y_g`.
fn node_log_terms(beta: f64, g: &DiscreteMixingDistribution) -> (Vec<f64>, Vec<f64>) {
    let pre = g.atoms().iter().map(|&(y, w)| w.ln() - beta * y).collect();
    let ln_y = g
        .atoms()
        .iter()
        .map(|&(y, _)| if y > 0.0 { y.ln() } else { f64::NEG_INFINITY })
        .collect();
    (pre, ln_y)
}

/// Streaming log-sum-exp of `pre_g + j ln_y_g`; only valid for j >= 1
/// (atoms at zero drop out through ln y = -inf).
fn log_p(pre: &[f64], ln_y: &[f64], j: u64) -> f64 {
    debug_assert!(j >= 1);
    let jf = j as f64;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0f64;
    for (&p, &ly) in pre.iter().zip(ln_y) {
        let lt = p + jf * ly;
        if lt == f64::NEG_INFINITY {
            continue;
        }
        if lt <= max {
            sum += (lt - max).exp();
        } else {
            sum = sum * (max - lt).exp() + 1.0;
            max = lt;
        }
    }
    if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + sum.ln()
    }
}

pub(crate) fn loglik_tables(
    fofs: &[&FrequencyOfFrequencies],
    state: &EmState,
) -> Result<f64> {
    let g = &state.mixing;
    let per_node: Vec<f64> = fofs
        .iter()
        .zip(&state.betas)
        .map(|(fof, &beta)| {
            let omp0 = one_minus_p0(beta, g);
            if omp0 < UNDERFLOW_FLOOR {
                return Err(Error::NumericalUnderflow(format!(
                    "positive-count mass underflowed at scale {beta:.3e}"
                )));
            }
            let (pre, ln_y) = node_log_terms(beta, g);
            let log_omp0 = omp0.ln();
            let log_beta = beta.ln();
            Ok(fof
                .iter()
                .map(|(j, n)| {
                    n * (log_p(&pre, &ln_y, j) + j as f64 * log_beta
                        - ln_factorial(j)
                        - log_omp0)
                })
                .sum::<f64>())
        })
        .collect::<Result<_>>()?;
    Ok(crate::series::pairwise_sum(&per_node))
}

/// Scale update followed by the mixing reweighting at the new scales.
/// `blend` < 1 damps the scale move towards the previous value.
pub(crate) fn step_tables(
    fofs: &[&FrequencyOfFrequencies],
    state: &EmState,
    update_scales: bool,
    blend: f64,
) -> Result<EmState> {
    let g = &state.mixing;

    let new_betas: Vec<f64> = if update_scales {
        let proposed: Vec<f64> = fofs
            .par_iter()
            .zip(&state.betas)
            .map(|(fof, &beta)| scale_update(fof, beta, g))
            .collect::<Result<_>>()?;
        proposed
            .iter()
            .zip(&state.betas)
            .map(|(&new, &old)| old + blend * (new - old))
            .collect()
    } else {
        state.betas.clone()
    };

    // Posterior-expected atom occupancies, including each node's expected
    // unseen links; accumulated per node, then reduced in node order so the
    // result is independent of the parallelism degree.
    let atoms = g.atoms();
    let per_node: Vec<Vec<f64>> = fofs
        .par_iter()
        .zip(&new_betas)
        .map(|(fof, &beta)| {
            let omp0 = one_minus_p0(beta, g);
            if omp0 < UNDERFLOW_FLOOR {
                return Err(Error::NumericalUnderflow(format!(
                    "positive-count mass underflowed at scale {beta:.3e}"
                )));
            }
            let (pre, ln_y) = node_log_terms(beta, g);
            let mut acc = vec![0.0f64; atoms.len()];
            let degree = fof.observed_units();
            for (j, n) in fof.iter() {
                let lp = log_p(&pre, &ln_y, j);
                let jf = j as f64;
                for (slot, (&p, &ly)) in pre.iter().zip(&ln_y).enumerate() {
                    if ly > f64::NEG_INFINITY {
                        acc[slot] += n * (p + jf * ly - lp).exp();
                    }
                }
            }
            // Expected unseen links share the zero-count posterior.
            for (slot, &p) in pre.iter().enumerate() {
                acc[slot] += degree * p.exp() / omp0;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut weights = vec![0.0f64; atoms.len()];
    for acc in &per_node {
        for (w, &a) in weights.iter_mut().zip(acc) {
            *w += a;
        }
    }
    let mixing = g.with_weights(&weights)?;
    Ok(EmState {
        betas: new_betas,
        mixing,
    })
}

/// Missing-data scale update for one node:
/// total count over (expected rate mass of seen links + expected unseen).
fn scale_update(fof: &FrequencyOfFrequencies, beta: f64, g: &DiscreteMixingDistribution) -> Result<f64> {
    let omp0 = one_minus_p0(beta, g);
    if omp0 < UNDERFLOW_FLOOR {
        return Err(Error::NumericalUnderflow(format!(
            "positive-count mass underflowed at scale {beta:.3e}"
        )));
    }
    let (pre, ln_y) = node_log_terms(beta, g);
    let unseen_rate = log_p(&pre, &ln_y, 1).exp() / omp0;
    let mut denom = 0.0;
    let mut numer = 0.0;
    for (j, n) in fof.iter() {
        let ratio = (log_p(&pre, &ln_y, j + 1) - log_p(&pre, &ln_y, j)).exp();
        denom += n * (ratio + unseen_rate);
        numer += n * j as f64;
    }
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::NumericalUnderflow(
            "scale update denominator vanished".into(),
        ));
    }
    Ok(numer / denom)
}

pub(crate) fn run_em(
    fofs: &[&FrequencyOfFrequencies],
    init: EmState,
    update_scales: bool,
    opts: &EmOptions,
) -> Result<EmRun> {
    let mut state = init;
    let mut trace = vec![loglik_tables(fofs, &state)?];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        let prev = *trace.last().unwrap();
        let mut next = step_tables(fofs, &state, update_scales, 1.0)?;
        let mut ll = loglik_tables(fofs, &next)?;
        if update_scales {
            let mut blend = 1.0;
            let mut halvings = 0;
            while ll < prev - 1e-9 * (1.0 + prev.abs()) && halvings < 20 {
                blend *= 0.5;
                halvings += 1;
                next = step_tables(fofs, &state, true, blend)?;
                ll = loglik_tables(fofs, &next)?;
            }
            if halvings > 0 {
                warnings.push(format!("scale update damped at iteration {iter}"));
            }
        }
        state = next;
        trace.push(ll);
        iterations = iter;
        if (ll - prev).abs() <= opts.tol * (1.0 + ll.abs()) {
            converged = true;
            break;
        }
    }

    Ok(EmRun {
        state,
        loglik_trace: trace,
        converged,
        iterations,
        warnings,
    })
}
