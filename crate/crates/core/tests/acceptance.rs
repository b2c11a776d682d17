//! Acceptance suite: one test per release criterion, each printing its
//! pass/fail line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Every tolerance is pinned in the assertions below; the Monte Carlo
//! criteria run on fixed seeds and bounded wall-clock budgets.

use std::time::Instant;

use sumlab::fof::FrequencyOfFrequencies;
use sumlab::mixing::{mixture_moment, DiscreteMixingDistribution, GammaShapeScale};
use sumlab::negbin::nb_pmf;
use sumlab::netdegree::em::{conditional_loglik, em_step, EmOptions, EmState};
use sumlab::netdegree::estimate::{
    degree_estimate_from, fit_pooled_npmle, DegreeMethod, PooledOptions,
};
use sumlab::netdegree::{NodeFrequencyTables, NodeTable};
use sumlab::poisson_eb::{asymptotic_sd, TargetKind, UtilityFn};
use sumlab::rng::StreamRng;
use sumlab::simlab::{
    degree_comparison, run_replicates, variance_check, DegreeScenario, EstimatorSpec,
    GeneratorSpec, PriorSpec, Scenario, TargetSpec,
};
use sumlab::species;

fn gate(criterion: &str, ok: bool, detail: &str) {
    println!(
        "acceptance {criterion}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{criterion}: {detail}");
}

fn two_atom_mixture() -> DiscreteMixingDistribution {
    DiscreteMixingDistribution::new(vec![(0.5, 0.4), (2.0, 0.6)]).unwrap()
}

/// Criterion 1: the u,v identity holds exactly in expectation, and the
/// estimator is unbiased for the realized sum in simulation.
#[test]
fn criterion_01_uv_exactness() {
    let start = Instant::now();
    let g = two_atom_mixture();

    // E v(X) with v(x) = x u(x-1), u = 1{x=2}: only x = 3 contributes.
    // P(X = 3) = sum_i w_i e^{-y_i} y_i^3 / 3!, so E v(X) = 3 P(X = 3).
    let e_v = 3.0 * mixture_moment(3, 1.0, &g) / 6.0;
    // E[rate * u(X)] = sum_i w_i y_i e^{-y_i} y_i^2 / 2!.
    let e_rate_u: f64 = g
        .atoms()
        .iter()
        .map(|&(y, w)| w * y * (-y).exp() * y * y / 2.0)
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let identity_gap = (e_v - e_rate_u).abs();

    let scenario = Scenario {
        generator: GeneratorSpec::PoissonMixture {
            n: 100_000,
            prior: PriorSpec::Atoms {
                atoms: vec![(0.5, 0.4), (2.0, 0.6)],
            },
        },
        estimator: EstimatorSpec::EbUv {
            u: "indicator:2".into(),
        },
        replicates: 200,
        seed: 20_260_801,
        level: 0.95,
        target: TargetSpec::Lambda,
    };
    let summary = run_replicates(&scenario).unwrap();
    let n = 100_000.0;
    let per_unit: Vec<f64> = summary
        .records
        .iter()
        .map(|r| (r.estimate - r.truth) / n)
        .collect();
    let mean = per_unit.iter().sum::<f64>() / per_unit.len() as f64;
    let var = per_unit
        .iter()
        .map(|e| (e - mean) * (e - mean))
        .sum::<f64>()
        / (per_unit.len() - 1) as f64;
    let se_mean = (var / per_unit.len() as f64).sqrt();
    let elapsed = start.elapsed().as_secs_f64();

    gate(
        "1 (u,v exactness)",
        identity_gap < 1e-10 && mean.abs() <= 3.0 * se_mean && elapsed < 30.0,
        &format!(
            "identity gap {identity_gap:.2e}, mc mean {mean:.3e} vs 3se {:.3e}, {elapsed:.1}s",
            3.0 * se_mean
        ),
    );
}

/// Criterion 2: 95% interval coverage of the substitution estimator.
#[test]
fn criterion_02_ci_coverage() {
    let start = Instant::now();
    let scenario = Scenario {
        generator: GeneratorSpec::PoissonMixture {
            n: 2000,
            prior: PriorSpec::Exponential { tau: 1.0 },
        },
        estimator: EstimatorSpec::EbPlugin {
            u: "one".into(),
            a: 0.0,
            b: 0.0,
        },
        replicates: 2000,
        seed: 419,
        level: 0.95,
        target: TargetSpec::Lambda,
    };
    let summary = run_replicates(&scenario).unwrap();
    let coverage = summary.coverage.unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    gate(
        "2 (interval coverage)",
        (0.935..=0.965).contains(&coverage) && summary.failed == 0 && elapsed < 60.0,
        &format!("coverage {coverage:.4}, {elapsed:.1}s"),
    );
}

/// Criterion 3: the asymptotic variance formula matches the replicate
/// variance of the scaled estimation error.
#[test]
fn criterion_03_variance_formula() {
    let scenario = Scenario {
        generator: GeneratorSpec::PoissonMixture {
            n: 5000,
            prior: PriorSpec::Exponential { tau: 1.0 },
        },
        estimator: EstimatorSpec::EbPlugin {
            u: "indicator:0".into(),
            a: 0.0,
            b: 0.0,
        },
        replicates: 1000,
        seed: 83,
        level: 0.95,
        target: TargetSpec::Lambda,
    };
    let summary = run_replicates(&scenario).unwrap();
    let (sd_theory, _) =
        asymptotic_sd(1.0, &UtilityFn::indicator(0), &TargetKind::LambdaWeighted).unwrap();
    let ratio = variance_check(&summary, sd_theory);
    gate(
        "3 (variance formula)",
        (0.9..=1.1).contains(&ratio),
        &format!("empirical/theoretical variance ratio {ratio:.4} (sd {sd_theory:.6})"),
    );
}

/// Criterion 4: the likelihood solver reproduces itself on the exact
/// expected-count fixture and satisfies both stationary equations.
#[test]
fn criterion_04_species_mle_self_consistency() {
    let fof = FrequencyOfFrequencies::from_pairs(
        (1..=60).map(|k| (k, 1000.0 * 0.5f64.powi(k as i32 + 1))),
    )
    .unwrap();
    let fit = species::fit_gamma_mle(&fof, &Default::default()).unwrap();
    let ok = (fit.params.alpha - 1.0).abs() < 1e-6
        && (fit.params.beta - 1.0).abs() < 1e-6
        && (fit.d_hat - 1000.0).abs() < 1e-3
        && fit.residuals.0 < 1e-9
        && fit.residuals.1 < 1e-9;
    gate(
        "4 (species likelihood self-consistency)",
        ok,
        &format!(
            "shape {:.9}, scale {:.9}, total {:.6}, residuals ({:.1e}, {:.1e})",
            fit.params.alpha, fit.params.beta, fit.d_hat, fit.residuals.0, fit.residuals.1
        ),
    );
}

/// Criterion 5: interval coverage and standard-error calibration of the
/// richness fit.
#[test]
fn criterion_05_species_interval() {
    let scenario = Scenario {
        generator: GeneratorSpec::Species {
            d: 5000,
            prior: PriorSpec::Gamma {
                alpha: 1.0,
                beta: 1.0,
            },
        },
        estimator: EstimatorSpec::SpeciesGamma,
        replicates: 500,
        seed: 2111,
        level: 0.95,
        target: TargetSpec::Lambda,
    };
    let summary = run_replicates(&scenario).unwrap();
    let coverage = summary.coverage.unwrap();
    let se_ratio = summary.mean_se.unwrap() / summary.sd_estimate;
    gate(
        "5 (species interval)",
        (0.925..=0.975).contains(&coverage)
            && (0.9..=1.1).contains(&se_ratio)
            && summary.failed == 0,
        &format!("coverage {coverage:.4}, se/replicate-sd {se_ratio:.4}, failed {}", summary.failed),
    );
}

/// Criterion 6: the ratio-consistent regression reproduces the recursion
/// coefficients exactly on expected counts across the parameter grid.
#[test]
fn criterion_06_ratio_regression_exactness() {
    let mut worst_tau = 0.0f64;
    let mut worst_res = 0.0f64;
    for &alpha in &[0.5, 1.0, 2.0] {
        for &beta in &[0.5, 1.0, 2.0] {
            let params = GammaShapeScale::new(alpha, beta).unwrap();
            let fof = FrequencyOfFrequencies::from_pairs(
                (1..=12).map(|k| (k, 1000.0 * nb_pmf(k, params, false).unwrap())),
            )
            .unwrap();
            let fit = species::nb_ratio_regression(
                &fof,
                Some(10),
                species::WeightScheme::Unit,
                species::RegressionVariant::RatioConsistent,
            )
            .unwrap();
            worst_tau = worst_tau.max((fit.tau1 - (beta + 1.0) / (alpha * beta)).abs());
            worst_res = worst_res.max(fit.residual_norm);
        }
    }
    gate(
        "6 (ratio regression exactness)",
        worst_tau < 1e-8 && worst_res < 1e-8,
        &format!("worst slope error {worst_tau:.2e}, worst residual {worst_res:.2e}"),
    );
}

fn single_node_tables(fof: FrequencyOfFrequencies) -> NodeFrequencyTables {
    NodeFrequencyTables::from_tables(vec![NodeTable {
        node: 1,
        fof,
        unobserved: None,
    }])
}

/// Criterion 7: EM correctness — the point-mass reduction solves the
/// zero-truncated fixed point, the log-likelihood never decreases, and the
/// scale ridge leaves estimates untouched.
#[test]
fn criterion_07_em_correctness() {
    // (a) Point-mass reduction: mean multiplicity 2.
    let tables = single_node_tables(
        FrequencyOfFrequencies::from_pairs([(1, 50.0), (3, 50.0)]).unwrap(),
    );
    let mut state = EmState {
        betas: vec![1.0],
        mixing: DiscreteMixingDistribution::point_mass(1.0),
    };
    for _ in 0..400 {
        state = em_step(&state, &tables).unwrap();
    }
    let mu = state.betas[0];
    let fixed_point_gap = (mu / (-(-mu).exp_m1()) - 2.0).abs();
    let mu_ok = (mu - 1.5936).abs() < 5e-4;

    // (b) Ascent on 20 seeded random fixtures.
    let mut ascent_ok = true;
    for seed in 0..20u64 {
        let mut rng = StreamRng::new(7000 + seed, 0);
        use rand::Rng as _;
        let mut fof = FrequencyOfFrequencies::new();
        for j in 1..=6u64 {
            let count = rng.random_range(0..25u32);
            if count > 0 {
                fof.add(j, count as f64).unwrap();
            }
        }
        if fof.is_empty() {
            fof.add(1, 5.0).unwrap();
        }
        let tables = single_node_tables(fof);
        let mut state = EmState {
            betas: vec![1.0],
            mixing: DiscreteMixingDistribution::uniform_on(&[0.0, 0.3, 1.0, 2.0, 5.0, 9.0])
                .unwrap(),
        };
        let mut prev = conditional_loglik(&state, &tables).unwrap();
        for _ in 0..80 {
            state = em_step(&state, &tables).unwrap();
            let ll = conditional_loglik(&state, &tables).unwrap();
            if ll < prev - 1e-9 * (1.0 + prev.abs()) {
                ascent_ok = false;
            }
            prev = ll;
        }
    }

    // (c) Scale-ridge invariance on a two-node pooled fit.
    let tables = NodeFrequencyTables::from_tables(vec![
        NodeTable {
            node: 1,
            fof: FrequencyOfFrequencies::from_pairs([(1, 40.0), (2, 14.0), (4, 3.0)]).unwrap(),
            unobserved: None,
        },
        NodeTable {
            node: 2,
            fof: FrequencyOfFrequencies::from_pairs([(1, 25.0), (3, 6.0)]).unwrap(),
            unobserved: None,
        },
    ]);
    let opts = PooledOptions {
        em: EmOptions {
            tol: 1e-11,
            max_iter: 400,
        },
        grid: Some(vec![0.0, 0.25, 0.7, 1.5, 3.0, 6.0]),
        grid_points: None,
    };
    let fit = fit_pooled_npmle(&tables, &opts).unwrap();
    let c = 2.5;
    let scaled = EmState {
        betas: fit.betas.iter().map(|b| b / c).collect(),
        mixing: fit.g_hat.scaled(c),
    };
    let base = EmState {
        betas: fit.betas.clone(),
        mixing: fit.g_hat.clone(),
    };
    let ll_base = conditional_loglik(&base, &tables).unwrap();
    let ll_scaled = conditional_loglik(&scaled, &tables).unwrap();
    let mut ridge_gap: f64 = (ll_base - ll_scaled).abs() / (1.0 + ll_base.abs());
    for (slot, table) in tables.populated().iter().enumerate() {
        let d0 = degree_estimate_from(&fit.g_hat, fit.betas[slot], table.observed_degree());
        let d1 = degree_estimate_from(&scaled.mixing, scaled.betas[slot], table.observed_degree());
        ridge_gap = ridge_gap.max((d0 - d1).abs() / d0.max(1.0));
    }

    gate(
        "7 (EM correctness)",
        fixed_point_gap < 1e-10 && mu_ok && ascent_ok && ridge_gap < 1e-10,
        &format!(
            "fixed-point gap {fixed_point_gap:.2e}, mu {mu:.5}, ascent {ascent_ok}, ridge gap {ridge_gap:.2e}"
        ),
    );
}

fn degree_gain_scenario() -> DegreeScenario {
    DegreeScenario {
        nodes: 200,
        degree_lo: 20,
        degree_hi: 60,
        prior: PriorSpec::Gamma {
            alpha: 1.0,
            beta: 1.0,
        },
        scale_lo: 1.0,
        scale_hi: 1.0,
        replicates: 100,
        seed: 606,
        opts: PooledOptions {
            em: EmOptions {
                tol: 1e-8,
                max_iter: 150,
            },
            grid: None,
            grid_points: Some(40),
        },
    }
}

/// Criterion 8: pooling beats the raw observed degrees on synthetic data
/// from the shared-mixture model.
#[test]
fn criterion_08_degree_estimation_gain() {
    let start = Instant::now();
    let comparison = degree_comparison(&degree_gain_scenario(), DegreeMethod::PooledNpmle).unwrap();
    let fraction = comparison.win_fraction();
    let elapsed = start.elapsed().as_secs_f64();
    gate(
        "8 (degree estimation gain)",
        fraction >= 0.8 && comparison.failed == 0 && elapsed < 300.0,
        &format!(
            "pooled no worse than observed in {:.0}% of {} replicates, {elapsed:.0}s",
            100.0 * fraction,
            comparison.per_replicate.len()
        ),
    );
}

/// Criterion 9: disclosure-risk limits and closed forms.
#[test]
fn criterion_09_disclosure_limits() {
    use std::sync::Arc;
    use sumlab::disclosure::{
        risk_mu_argus, risk_nb_cell, risk_poisson_cell, CellRecord, RiskUtility,
    };

    // Heavy-tail limit of the negative-binomial risk.
    let mut worst_limit = 0.0f64;
    for &p in &[0.01, 0.1, 0.5] {
        let cell = CellRecord::new("c", 1, Some(0.5), p).unwrap();
        let nb = risk_nb_cell(&cell, 1e-6, 1e8).unwrap();
        let argus = risk_mu_argus(&cell).unwrap();
        worst_limit = worst_limit.max((nb - argus).abs());
    }

    // Generic series against the closed form at mu in {0.1, 1, 10}
    // (pi = 0.5, p = 0.5 makes mu = lambda / 4).
    let mut worst_series = 0.0f64;
    for &mu in &[0.1, 1.0, 10.0] {
        let cell = CellRecord::new("c", 1, Some(0.5), 0.5).unwrap();
        let generic = RiskUtility::Generic {
            u: Arc::new(|x, y| if x == 1 && y > 0 { 1.0 / y as f64 } else { 0.0 }),
            degree: 0.0,
        };
        let series = risk_poisson_cell(&cell, mu / 0.25, &generic).unwrap();
        let closed = (-(-mu as f64).exp_m1()) / mu;
        worst_series = worst_series.max((series - closed).abs());
    }

    // Unit shape: the integral collapses to (1 + p b)/(1 + b).
    let mut worst_unit = 0.0f64;
    for &(p, beta) in &[(0.5, 4.0), (0.1, 9.0), (0.25, 0.5)] {
        let cell = CellRecord::new("c", 1, Some(0.5), p).unwrap();
        let got = risk_nb_cell(&cell, 1.0, beta).unwrap();
        worst_unit = worst_unit.max((got - (1.0 + p * beta) / (1.0 + beta)).abs());
    }

    gate(
        "9 (disclosure limits)",
        worst_limit < 1e-4 && worst_series < 1e-10 && worst_unit < 1e-12,
        &format!(
            "heavy-tail gap {worst_limit:.2e}, series gap {worst_series:.2e}, unit-shape gap {worst_unit:.2e}"
        ),
    );
}

/// Criterion 10: every Monte Carlo aggregate above is byte-identical across
/// runs and parallelism degrees.
#[test]
fn criterion_10_determinism() {
    let scenarios = vec![
        Scenario {
            generator: GeneratorSpec::PoissonMixture {
                n: 100_000,
                prior: PriorSpec::Atoms {
                    atoms: vec![(0.5, 0.4), (2.0, 0.6)],
                },
            },
            estimator: EstimatorSpec::EbUv {
                u: "indicator:2".into(),
            },
            replicates: 200,
            seed: 20_260_801,
            level: 0.95,
            target: TargetSpec::Lambda,
        },
        Scenario {
            generator: GeneratorSpec::PoissonMixture {
                n: 2000,
                prior: PriorSpec::Exponential { tau: 1.0 },
            },
            estimator: EstimatorSpec::EbPlugin {
                u: "one".into(),
                a: 0.0,
                b: 0.0,
            },
            replicates: 2000,
            seed: 419,
            level: 0.95,
            target: TargetSpec::Lambda,
        },
        Scenario {
            generator: GeneratorSpec::PoissonMixture {
                n: 5000,
                prior: PriorSpec::Exponential { tau: 1.0 },
            },
            estimator: EstimatorSpec::EbPlugin {
                u: "indicator:0".into(),
                a: 0.0,
                b: 0.0,
            },
            replicates: 1000,
            seed: 83,
            level: 0.95,
            target: TargetSpec::Lambda,
        },
        Scenario {
            generator: GeneratorSpec::Species {
                d: 5000,
                prior: PriorSpec::Gamma {
                    alpha: 1.0,
                    beta: 1.0,
                },
            },
            estimator: EstimatorSpec::SpeciesGamma,
            replicates: 500,
            seed: 2111,
            level: 0.95,
            target: TargetSpec::Lambda,
        },
    ];

    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let threaded = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();

    let mut all_ok = true;
    for (idx, scenario) in scenarios.iter().enumerate() {
        let a = serial.install(|| run_replicates(scenario).unwrap().to_json());
        let b = threaded.install(|| run_replicates(scenario).unwrap().to_json());
        let c = threaded.install(|| run_replicates(scenario).unwrap().to_json());
        if a != b || b != c {
            all_ok = false;
            println!("scenario {idx} differed across runs/pools");
        }
    }

    // The degree comparison as well, across the same pools.
    let scn = degree_gain_scenario();
    let a = serial.install(|| degree_comparison(&scn, DegreeMethod::PooledNpmle).unwrap().to_json());
    let b = threaded.install(|| degree_comparison(&scn, DegreeMethod::PooledNpmle).unwrap().to_json());
    if a != b {
        all_ok = false;
        println!("degree comparison differed across pools");
    }

    gate(
        "10 (determinism)",
        all_ok,
        "aggregate reports byte-identical across runs and thread counts",
    );
}
