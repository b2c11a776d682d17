//! Seeded replicate execution and the coverage/variance summaries.

use rayon::prelude::*;
use serde::Serialize;

use crate::disclosure::{estimate_global_risk, CellInput, PiFit, RiskUtility};
use crate::error::{Error, Result};
use crate::netdegree::estimate::{estimate_degrees, DegreeMethod, PooledOptions};
use crate::poisson_eb::{plugin_sum, uv_sum, EbSample, TargetKind, UtilityFn};
use crate::report::EstimateReport;
use crate::rng::StreamRng;
use crate::series::{pairwise_mean, pairwise_sum, pairwise_variance};
use crate::special::normal_quantile;
use crate::species;

use super::generators::{gen_disclosure, gen_node_tables, gen_poisson_mixture, gen_species};
use super::{EstimatorSpec, GeneratorSpec, PriorSpec, Scenario, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepRecord {
    pub rep: u32,
    pub estimate: f64,
    pub truth: f64,
    pub se: Option<f64>,
}

/// Aggregated replicate results. All aggregates are computed with pairwise
/// reductions over the records in replicate order, so the summary is
/// bit-identical across runs and parallelism degrees.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateSummary {
    pub scenario: String,
    pub replicates: u32,
    pub failed: u32,
    pub level: f64,
    /// Normalization for the scaled error variance (sample size or latent
    /// unit count of the generator).
    pub scale: f64,
    pub coverage: Option<f64>,
    pub mean_estimate: f64,
    pub mean_truth: f64,
    pub mean_error: f64,
    pub sd_error: f64,
    /// Var((estimate - truth) / sqrt(scale)) across replicates.
    pub variance_scaled: f64,
    pub mean_se: Option<f64>,
    pub sd_estimate: f64,
    pub failure_messages: Vec<String>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

impl ReplicateSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }

    /// The `rep,estimate,truth,se,covered` table; the last two fields stay
    /// empty when the estimator reports no standard error.
    pub fn per_replicate_csv(&self) -> String {
        use std::fmt::Write as _;
        let z = normal_quantile(0.5 * (1.0 + self.level));
        let mut out = String::from("rep,estimate,truth,se,covered\n");
        for r in &self.records {
            match r.se {
                Some(se) => {
                    let covered = (r.estimate - r.truth).abs() <= z * se;
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        r.rep, r.estimate, r.truth, se, covered
                    );
                }
                None => {
                    let _ = writeln!(out, "{},{},{},,", r.rep, r.estimate, r.truth);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoverageReport {
    pub level: f64,
    pub usable: u32,
    pub covered: u32,
    pub coverage: f64,
}

/// Interval coverage at an arbitrary level, recomputed from the per
/// replicate records.
pub fn coverage_report(summary: &ReplicateSummary, level: f64) -> CoverageReport {
    let z = normal_quantile(0.5 * (1.0 + level));
    let mut usable = 0;
    let mut covered = 0;
    for r in &summary.records {
        if let Some(se) = r.se {
            usable += 1;
            if (r.estimate - r.truth).abs() <= z * se {
                covered += 1;
            }
        }
    }
    CoverageReport {
        level,
        usable,
        covered,
        coverage: if usable > 0 {
            covered as f64 / usable as f64
        } else {
            0.0
        },
    }
}

/// Ratio of the empirical scaled error variance to a theoretical variance.
pub fn variance_check(summary: &ReplicateSummary, theoretical_sd: f64) -> f64 {
    assert!(theoretical_sd > 0.0);
    summary.variance_scaled / (theoretical_sd * theoretical_sd)
}

fn estimator_utility(estimator: &EstimatorSpec) -> Result<UtilityFn> {
    match estimator {
        EstimatorSpec::EbPlugin { u, .. } | EstimatorSpec::EbUv { u } => UtilityFn::parse(u),
        _ => Ok(UtilityFn::one()),
    }
}

fn validate(scenario: &Scenario) -> Result<()> {
    let compatible = matches!(
        (&scenario.generator, &scenario.estimator),
        (
            GeneratorSpec::PoissonMixture { .. },
            EstimatorSpec::Oracle | EstimatorSpec::EbPlugin { .. } | EstimatorSpec::EbUv { .. }
        ) | (
            GeneratorSpec::Species { .. },
            EstimatorSpec::Oracle
                | EstimatorSpec::SpeciesGamma
                | EstimatorSpec::SpeciesChao { .. }
                | EstimatorSpec::SpeciesNbreg { .. }
                | EstimatorSpec::SpeciesNpmle { .. }
        ) | (
            GeneratorSpec::Disclosure { .. },
            EstimatorSpec::Oracle | EstimatorSpec::RiskGlobal
        )
    );
    if !compatible {
        return Err(Error::InvalidInput(
            "estimator does not apply to this generator (degree scenarios run through the \
             degree comparison)"
                .into(),
        ));
    }
    estimator_utility(&scenario.estimator)?;
    Ok(())
}

fn generator_scale(generator: &GeneratorSpec) -> f64 {
    match generator {
        GeneratorSpec::PoissonMixture { n, .. } => *n as f64,
        GeneratorSpec::Species { d, .. } => *d as f64,
        GeneratorSpec::Disclosure { cells, .. } => *cells as f64,
        GeneratorSpec::NodeTables { nodes, .. } => *nodes as f64,
        GeneratorSpec::RoutingSample { sample_size, .. } => *sample_size as f64,
    }
}

fn oracle_report(truth: f64) -> EstimateReport {
    let mut report = EstimateReport::new("oracle", truth);
    report.se = Some(0.0);
    report
}

fn one_replicate(scenario: &Scenario, rep: u32) -> Result<RepRecord> {
    let mut rng = StreamRng::new(scenario.seed, rep as u64);
    let (estimate, truth, se) = match &scenario.generator {
        GeneratorSpec::PoissonMixture { n, prior } => {
            let triples = gen_poisson_mixture(*n, prior, &mut rng);
            let u = estimator_utility(&scenario.estimator)?;
            let terms: Vec<f64> = triples
                .iter()
                .map(|t| match scenario.target {
                    TargetSpec::Lambda => t.rate * u.eval(t.x),
                    TargetSpec::NextCount => t.y as f64 * u.eval(t.x),
                })
                .collect();
            let truth = pairwise_sum(&terms);
            let xs: Vec<u64> = triples.iter().map(|t| t.x).collect();
            let data = EbSample::from_xs(&xs);
            let report = match &scenario.estimator {
                EstimatorSpec::Oracle => oracle_report(truth),
                EstimatorSpec::EbPlugin { u, a, b } => {
                    let target = match scenario.target {
                        TargetSpec::Lambda => TargetKind::LambdaWeighted,
                        TargetSpec::NextCount => TargetKind::next_count(),
                    };
                    plugin_sum(&data, &UtilityFn::parse(u)?, *a, *b, &target, scenario.level)?
                }
                EstimatorSpec::EbUv { u } => uv_sum(&data, &UtilityFn::parse(u)?)?,
                _ => unreachable!("validated"),
            };
            (report.estimate, truth, report.se)
        }
        GeneratorSpec::Species { d, prior } => {
            let (fof, _) = gen_species(*d, prior, &mut rng);
            let truth = *d as f64;
            let report = match &scenario.estimator {
                EstimatorSpec::Oracle => oracle_report(truth),
                EstimatorSpec::SpeciesGamma => species::fit_gamma_mle(&fof, &Default::default())?.report,
                EstimatorSpec::SpeciesChao { corrected } => species::chao_lower(&fof, *corrected)?,
                EstimatorSpec::SpeciesNbreg { m } => {
                    species::nb_ratio_regression(&fof, *m, Default::default(), Default::default())?
                        .report
                }
                EstimatorSpec::SpeciesNpmle {
                    grid_points,
                    max_iter,
                } => {
                    let grid = species::npmle::default_grid(&fof, grid_points.unwrap_or(100));
                    let mut em = crate::netdegree::em::EmOptions::default();
                    if let Some(cap) = max_iter {
                        em.max_iter = *cap;
                    }
                    species::fit_npmle_species(&fof, &grid, &em)?.report
                }
                _ => unreachable!("validated"),
            };
            (report.estimate, truth, report.se)
        }
        GeneratorSpec::Disclosure {
            cells,
            p,
            pi,
            model,
        } => {
            let model = model.to_model();
            let (released, _, truth) = gen_disclosure(*cells, pi, *p, &model, &mut rng)?;
            let report = match &scenario.estimator {
                EstimatorSpec::Oracle => oracle_report(truth),
                EstimatorSpec::RiskGlobal => estimate_global_risk(
                    CellInput::Flat(&released),
                    &model,
                    PiFit::Known,
                    &RiskUtility::InverseYAtOne,
                )?,
                _ => unreachable!("validated"),
            };
            (report.estimate, truth, report.se)
        }
        GeneratorSpec::NodeTables { .. } | GeneratorSpec::RoutingSample { .. } => {
            return Err(Error::InvalidInput(
                "degree scenarios run through the degree comparison".into(),
            ))
        }
    };
    Ok(RepRecord {
        rep,
        estimate,
        truth,
        se,
    })
}

/// Executes every replicate of the scenario on its own stream `(seed, r)`.
/// Estimator failures are excluded from the aggregates but counted and
/// sampled into the failure messages; if nothing succeeds the whole run is
/// an error.
pub fn run_replicates(scenario: &Scenario) -> Result<ReplicateSummary> {
    validate(scenario)?;
    let outcomes: Vec<std::result::Result<RepRecord, String>> = (0..scenario.replicates)
        .into_par_iter()
        .map(|rep| one_replicate(scenario, rep).map_err(|e| e.to_string()))
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut failure_messages = Vec::new();
    let mut failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(record) => records.push(record),
            Err(msg) => {
                failed += 1;
                if failure_messages.len() < 5 && !failure_messages.contains(&msg) {
                    failure_messages.push(msg);
                }
            }
        }
    }
    if records.is_empty() {
        return Err(Error::AllReplicatesFailed(
            failure_messages.first().cloned().unwrap_or_default(),
        ));
    }

    let estimates: Vec<f64> = records.iter().map(|r| r.estimate).collect();
    let truths: Vec<f64> = records.iter().map(|r| r.truth).collect();
    let errors: Vec<f64> = records.iter().map(|r| r.estimate - r.truth).collect();
    let scale = generator_scale(&scenario.generator);
    let scaled: Vec<f64> = errors.iter().map(|e| e / scale.sqrt()).collect();
    let ses: Vec<f64> = records.iter().filter_map(|r| r.se).collect();

    let mut summary = ReplicateSummary {
        scenario: scenario.to_json(),
        replicates: scenario.replicates,
        failed,
        level: scenario.level,
        scale,
        coverage: None,
        mean_estimate: pairwise_mean(&estimates),
        mean_truth: pairwise_mean(&truths),
        mean_error: pairwise_mean(&errors),
        sd_error: pairwise_variance(&errors).sqrt(),
        variance_scaled: pairwise_variance(&scaled),
        mean_se: (ses.len() == records.len()).then(|| pairwise_mean(&ses)),
        sd_estimate: pairwise_variance(&estimates).sqrt(),
        failure_messages,
        records,
    };
    if summary.mean_se.is_some() {
        summary.coverage = Some(coverage_report(&summary, summary.level).coverage);
    }
    Ok(summary)
}

/// Scenario for the pooled-versus-observed degree comparison.
#[derive(Debug, Clone)]
pub struct DegreeScenario {
    pub nodes: u32,
    pub degree_lo: u64,
    pub degree_hi: u64,
    pub prior: PriorSpec,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub replicates: u32,
    pub seed: u64,
    pub opts: PooledOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeComparison {
    /// Per replicate: total absolute degree error of the method, and of the
    /// raw observed degrees.
    pub per_replicate: Vec<(f64, f64)>,
    /// Replicates where the method error was no larger than the observed
    /// error.
    pub wins: u32,
    pub failed: u32,
}

impl DegreeComparison {
    pub fn win_fraction(&self) -> f64 {
        if self.per_replicate.is_empty() {
            0.0
        } else {
            self.wins as f64 / self.per_replicate.len() as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("comparison serializes")
    }
}

/// Runs the degree estimator against the observed degrees on synthetic
/// pooled-model data, replicate by replicate. Nodes whose per-node
/// estimator fails fall back to their observed degree inside the error sum.
pub fn degree_comparison(
    scn: &DegreeScenario,
    method: DegreeMethod,
) -> Result<DegreeComparison> {
    let outcomes: Vec<std::result::Result<(f64, f64), String>> = (0..scn.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamRng::new(scn.seed, rep as u64);
            let (tables, truth) = gen_node_tables(
                scn.nodes,
                scn.degree_lo,
                scn.degree_hi,
                &scn.prior,
                scn.scale_lo,
                scn.scale_hi,
                &mut rng,
            );
            let estimates = estimate_degrees(&tables, method, &scn.opts);
            let mut err_method = 0.0;
            let mut err_observed = 0.0;
            for (est, &d) in estimates.iter().zip(&truth) {
                let estimate = match &est.result {
                    Ok(report) => report.estimate,
                    Err(_) => est.observed,
                };
                err_method += (estimate - d as f64).abs();
                err_observed += (est.observed - d as f64).abs();
            }
            Ok((err_method, err_observed))
        })
        .collect();

    let mut per_replicate = Vec::new();
    let mut failure = None;
    let mut failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(pair) => per_replicate.push(pair),
            Err(msg) => {
                failed += 1;
                failure.get_or_insert(msg);
            }
        }
    }
    if per_replicate.is_empty() {
        return Err(Error::AllReplicatesFailed(failure.unwrap_or_default()));
    }
    let wins = per_replicate
        .iter()
        .filter(|(m, o)| m <= o)
        .count() as u32;
    Ok(DegreeComparison {
        per_replicate,
        wins,
        failed,
    })
}
