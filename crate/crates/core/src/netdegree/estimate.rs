//! Degree estimation strategies over per-node frequency tables: the pooled
//! mixture fit, the per-node species estimators, and the raw observed
//! degree, all selectable by name.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mixing::{one_minus_p0, DiscreteMixingDistribution};
use crate::report::EstimateReport;
use crate::species;

use super::em::{run_em, EmOptions, EmState};
use super::NodeFrequencyTables;

#[derive(Debug, Clone, Default)]
pub struct PooledOptions {
    pub em: EmOptions,
    /// Explicit support grid; when absent a geometric default is built from
    /// the per-node mean counts (see [`default_grid`]).
    pub grid: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PooledFit {
    /// Nodes that had observations, in node order; scales align with this.
    pub fitted_nodes: Vec<u32>,
    pub betas: Vec<f64>,
    pub g_hat: DiscreteMixingDistribution,
    pub loglik_trace: Vec<f64>,
    /// One entry per node (zero for nodes with no observations).
    pub d_hats: Vec<f64>,
    pub converged: bool,
    pub iterations: u64,
    pub warnings: Vec<String>,
}

/// Geometric grid of `points` support values spanning
/// [0.01 * min node mean, 100 * max node mean], plus an atom at zero for
/// links that are effectively never used.
pub fn default_grid(tables: &NodeFrequencyTables, points: usize) -> Vec<f64> {
    let means: Vec<f64> = tables
        .populated()
        .iter()
        .map(|t| t.fof.mean_multiplicity())
        .collect();
    let q = means.iter().copied().fold(f64::INFINITY, f64::min);
    let qq = means.iter().copied().fold(1.0f64, f64::max);
    let (lo, hi) = if q.is_finite() {
        (0.01 * q, 100.0 * qq)
    } else {
        (0.01, 100.0)
    };
    let mut grid = Vec::with_capacity(points + 1);
    grid.push(0.0);
    for i in 0..points {
        let t = i as f64 / (points - 1).max(1) as f64;
        grid.push(lo * (hi / lo).powf(t));
    }
    grid
}

/// The estimate one node contributes under the pooled model:
/// `observed * (positive-support mass) / (positive-count probability)`.
pub fn degree_estimate_from(
    g: &DiscreteMixingDistribution,
    beta: f64,
    observed_degree: f64,
) -> f64 {
    observed_degree * (1.0 - g.mass_at_zero()) / one_minus_p0(beta, g)
}

pub fn fit_pooled_npmle(tables: &NodeFrequencyTables, opts: &PooledOptions) -> Result<PooledFit> {
    let populated = tables.populated();
    if populated.is_empty() {
        return Err(Error::EmptySample("no node has observed links".into()));
    }
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => default_grid(tables, opts.grid_points.unwrap_or(100)),
    };
    let mut support = grid;
    support.sort_by(|a, b| a.partial_cmp(b).unwrap());
    support.dedup();
    if !support.iter().any(|&y| y > 0.0) {
        return Err(Error::InvalidGrid(
            "support needs at least one strictly positive point".into(),
        ));
    }

    let fofs: Vec<_> = populated.iter().map(|t| &t.fof).collect();
    let init = EmState {
        betas: vec![1.0; fofs.len()],
        mixing: DiscreteMixingDistribution::uniform_on(&support)?,
    };
    let run = run_em(&fofs, init, true, &opts.em)?;
    let mut warnings = run.warnings;
    if !run.converged {
        warnings.push(format!(
            "stopped at the iteration cap ({}); estimates may not be fully converged",
            opts.em.max_iter
        ));
    }

    let mut d_hats = vec![0.0; tables.node_count() as usize];
    let mut fitted_nodes = Vec::with_capacity(populated.len());
    for (slot, table) in populated.iter().enumerate() {
        let beta = run.state.betas[slot];
        d_hats[(table.node - 1) as usize] =
            degree_estimate_from(&run.state.mixing, beta, table.observed_degree());
        fitted_nodes.push(table.node);
    }
    Ok(PooledFit {
        fitted_nodes,
        betas: run.state.betas,
        g_hat: run.state.mixing,
        loglik_trace: run.loglik_trace,
        d_hats,
        converged: run.converged,
        iterations: run.iterations,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegreeMethod {
    Observed,
    Chao,
    PerNodeGamma,
    PooledNpmle,
}

impl fmt::Display for DegreeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DegreeMethod::Observed => "observed",
            DegreeMethod::Chao => "chao",
            DegreeMethod::PerNodeGamma => "per-node-gamma",
            DegreeMethod::PooledNpmle => "pooled-npmle",
        })
    }
}

impl FromStr for DegreeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(DegreeMethod::Observed),
            "chao" => Ok(DegreeMethod::Chao),
            "per-node-gamma" => Ok(DegreeMethod::PerNodeGamma),
            "pooled-npmle" => Ok(DegreeMethod::PooledNpmle),
            _ => Err(Error::InvalidInput(format!(
                "unknown degree method {s:?} (observed | chao | per-node-gamma | pooled-npmle)"
            ))),
        }
    }
}

/// Per-node outcome; estimator failures are collected, not fatal.
#[derive(Debug)]
pub struct NodeEstimate {
    pub node: u32,
    pub observed: f64,
    pub result: Result<EstimateReport>,
}

/// Runs the selected strategy on every node. Per-node failures (e.g. a
/// boundary likelihood on an all-singleton node) land in that node's slot
/// without aborting the batch.
pub fn estimate_degrees(
    tables: &NodeFrequencyTables,
    method: DegreeMethod,
    opts: &PooledOptions,
) -> Vec<NodeEstimate> {
    let label = |mut report: EstimateReport| {
        report.method = format!("netdeg.{method}");
        report
    };
    match method {
        DegreeMethod::Observed => tables
            .tables()
            .iter()
            .map(|t| NodeEstimate {
                node: t.node,
                observed: t.observed_degree(),
                result: Ok(label(EstimateReport::new("", t.observed_degree()))),
            })
            .collect(),
        DegreeMethod::Chao => tables
            .tables()
            .iter()
            .map(|t| NodeEstimate {
                node: t.node,
                observed: t.observed_degree(),
                result: species::chao_lower(&t.fof, false).map(label),
            })
            .collect(),
        DegreeMethod::PerNodeGamma => tables
            .tables()
            .iter()
            .map(|t| NodeEstimate {
                node: t.node,
                observed: t.observed_degree(),
                result: species::fit_gamma_mle(&t.fof, &Default::default())
                    .map(|fit| label(fit.report)),
            })
            .collect(),
        DegreeMethod::PooledNpmle => match fit_pooled_npmle(tables, opts) {
            Ok(fit) => tables
                .tables()
                .iter()
                .map(|t| {
                    let observed = t.observed_degree();
                    let mut report =
                        label(EstimateReport::new("", fit.d_hats[(t.node - 1) as usize]));
                    report.diagnostics.iterations = fit.iterations;
                    report.diagnostics.converged = fit.converged;
                    if observed == 0.0 {
                        report.warn("node has no observed links; no information");
                    }
                    NodeEstimate {
                        node: t.node,
                        observed,
                        result: Ok(report),
                    }
                })
                .collect(),
            Err(e) => {
                let msg = e.to_string();
                tables
                    .tables()
                    .iter()
                    .map(|t| NodeEstimate {
                        node: t.node,
                        observed: t.observed_degree(),
                        result: Err(Error::NonConvergence(msg.clone())),
                    })
                    .collect()
            }
        },
    }
}

/// The `node,observed_degree,estimate,se,method` table. Failed nodes keep
/// their row with empty estimate/se fields.
pub fn estimates_to_csv(estimates: &[NodeEstimate], method: DegreeMethod) -> String {
    let mut out = String::from("node,observed_degree,estimate,se,method\n");
    for e in estimates {
        match &e.result {
            Ok(report) => {
                let se = report.se.map(|s| s.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    e.node, e.observed, report.estimate, se, method
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{},{},,,{}", e.node, e.observed, method);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fof::FrequencyOfFrequencies;
    use crate::netdegree::NodeTable;
    use approx::assert_relative_eq;

    fn tables(fofs: Vec<FrequencyOfFrequencies>) -> NodeFrequencyTables {
        NodeFrequencyTables::from_tables(
            fofs.into_iter()
                .enumerate()
                .map(|(i, fof)| NodeTable {
                    node: i as u32 + 1,
                    fof,
                    unobserved: None,
                })
                .collect(),
        )
    }

    // Direct evaluation of the degree formula on frozen parameters.
    #[test]
    fn degree_formula_direct_value() {
        let g = DiscreteMixingDistribution::new(vec![(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let d = degree_estimate_from(&g, 1.0, 100.0);
        assert_relative_eq!(d, 100.0 * 0.5 / (0.5 * (1.0 - (-2.0f64).exp())), epsilon = 1e-9);
        assert_relative_eq!(d, 115.65176427496657, epsilon = 1e-6);
    }

    #[test]
    fn observed_method_returns_observed_degrees() {
        let t = tables(vec![
            FrequencyOfFrequencies::from_pairs([(1, 3.0), (2, 2.0)]).unwrap(),
            FrequencyOfFrequencies::new(),
        ]);
        let est = estimate_degrees(&t, DegreeMethod::Observed, &Default::default());
        assert_eq!(est[0].result.as_ref().unwrap().estimate, 5.0);
        assert_eq!(est[1].result.as_ref().unwrap().estimate, 0.0);
    }

    #[test]
    fn chao_method_matches_species_example() {
        let t = tables(vec![FrequencyOfFrequencies::from_pairs([
            (1, 10.0),
            (2, 5.0),
            (3, 85.0),
        ])
        .unwrap()]);
        let est = estimate_degrees(&t, DegreeMethod::Chao, &Default::default());
        assert_eq!(est[0].result.as_ref().unwrap().estimate, 110.0);
    }

    // Rescaling the support by c and every scale by 1/c leaves the
    // likelihood and the degree estimates unchanged: the two only enter
    // through their product.
    #[test]
    fn scale_ridge_invariance() {
        let fof1 = FrequencyOfFrequencies::from_pairs([(1, 30.0), (2, 12.0), (3, 4.0)]).unwrap();
        let fof2 = FrequencyOfFrequencies::from_pairs([(1, 18.0), (2, 3.0), (4, 1.0)]).unwrap();
        let t = tables(vec![fof1, fof2]);
        let opts = PooledOptions {
            em: EmOptions {
                tol: 1e-11,
                max_iter: 300,
            },
            grid: Some(vec![0.0, 0.2, 0.5, 1.0, 2.0, 5.0]),
            grid_points: None,
        };
        let fit = fit_pooled_npmle(&t, &opts).unwrap();

        let c = 3.0;
        let fofs: Vec<_> = t.populated().into_iter().map(|n| &n.fof).collect();
        let scaled_state = EmState {
            betas: fit.betas.iter().map(|b| b / c).collect(),
            mixing: fit.g_hat.scaled(c),
        };
        let base_state = EmState {
            betas: fit.betas.clone(),
            mixing: fit.g_hat.clone(),
        };
        let ll_base = super::super::em::loglik_tables(&fofs, &base_state).unwrap();
        let ll_scaled = super::super::em::loglik_tables(&fofs, &scaled_state).unwrap();
        assert_relative_eq!(ll_base, ll_scaled, epsilon = 1e-10);

        for (slot, table) in t.populated().iter().enumerate() {
            let d_base =
                degree_estimate_from(&fit.g_hat, fit.betas[slot], table.observed_degree());
            let d_scaled = degree_estimate_from(
                &scaled_state.mixing,
                scaled_state.betas[slot],
                table.observed_degree(),
            );
            assert_relative_eq!(d_base, d_scaled, epsilon = 1e-10);
        }
    }

    // A single node with a rich grid is exactly the species fit.
    #[test]
    fn single_node_matches_species_npmle() {
        let fof = FrequencyOfFrequencies::from_pairs([(1, 80.0), (2, 30.0), (3, 8.0), (4, 2.0)])
            .unwrap();
        let grid: Vec<f64> = crate::species::npmle::default_grid(&fof, 40);
        let em = EmOptions {
            tol: 1e-11,
            max_iter: 2000,
        };
        let species_fit = crate::species::fit_npmle_species(&fof, &grid, &em).unwrap();
        let t = tables(vec![fof]);
        // Pin the scale at one to mirror the species parameterization.
        let fofs: Vec<_> = t.populated().into_iter().map(|n| &n.fof).collect();
        let run = run_em(
            &fofs,
            EmState {
                betas: vec![1.0],
                mixing: DiscreteMixingDistribution::uniform_on(&{
                    let mut s = grid.clone();
                    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    s.dedup();
                    s
                })
                .unwrap(),
            },
            false,
            &em,
        )
        .unwrap();
        let d = degree_estimate_from(&run.state.mixing, 1.0, 120.0);
        assert_relative_eq!(d, species_fit.d_hat, epsilon = 1e-6);
    }

    #[test]
    fn method_names_parse() {
        for name in ["observed", "chao", "per-node-gamma", "pooled-npmle"] {
            assert_eq!(name.parse::<DegreeMethod>().unwrap().to_string(), name);
        }
        assert!("bogus".parse::<DegreeMethod>().is_err());
    }

    #[test]
    fn csv_has_blank_fields_for_failures() {
        let t = tables(vec![
            FrequencyOfFrequencies::from_pairs([(1, 5.0)]).unwrap(),
            FrequencyOfFrequencies::from_pairs([
                (1, 50.0),
                (2, 25.0),
                (3, 12.0),
                (4, 6.0),
                (5, 3.0),
                (6, 2.0),
            ])
            .unwrap(),
        ]);
        // Per-node gamma fails on the all-singleton node.
        let est = estimate_degrees(&t, DegreeMethod::PerNodeGamma, &Default::default());
        assert!(est[0].result.is_err());
        assert!(est[1].result.is_ok());
        let csv = estimates_to_csv(&est, DegreeMethod::PerNodeGamma);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("1,5,,,per-node-gamma"));
    }
}
