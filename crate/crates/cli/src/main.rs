//! Batch front end: parses data files, dispatches to the estimators, and
//! emits JSON/CSV reports with stable exit codes.
//!
//! Exit codes: 0 success, 2 input/validation error, 3 numerical
//! non-convergence (a report is still emitted when one makes sense),
//! 4 internal error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sumlab::disclosure::{
    estimate_global_risk, parse_cells_csv, risk_mu_argus, risk_nb_cell, risk_poisson_cell,
    risks_to_csv, CellInput, CellRecord, PiFit, PopulationModel, RiskUtility, TwoWayTable,
};
use sumlab::error::Error;
use sumlab::fof::FrequencyOfFrequencies;
use sumlab::netdegree::em::EmOptions;
use sumlab::netdegree::estimate::{
    estimate_degrees, estimates_to_csv, DegreeMethod, PooledOptions,
};
use sumlab::netdegree::{simulate_sd_sample, tabulate, LinkCounts, RoutingTable};
use sumlab::poisson_eb::{plugin_sum, uv_sum, EbSample, TargetKind, UtilityFn};
use sumlab::report::EstimateReport;
use sumlab::rng::StreamRng;
use sumlab::simlab::{degree_comparison, run_replicates, DegreeScenario, Scenario};
use sumlab::species;

#[derive(Parser)]
#[command(name = "sumlab", version, about = "Estimators for sums over latent-rate count models", propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count-model sum estimators.
    #[command(subcommand)]
    Eb(EbCommand),
    /// Species-richness estimators on frequency tables.
    #[command(subcommand)]
    Species(SpeciesCommand),
    /// Node-degree simulation and estimation.
    #[command(subcommand)]
    Netdeg(NetdegCommand),
    /// Disclosure-risk estimators on cell tables.
    #[command(subcommand)]
    Risk(RiskCommand),
    /// Monte Carlo scenario runner.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Args)]
struct OutArg {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EbInput {
    /// Raw observations CSV (header `x`, one count per row).
    #[arg(long = "in", value_name = "FILE", conflicts_with = "fof")]
    input: Option<PathBuf>,
    /// Frequency CSV (header `k,count`); implies no zero counts.
    #[arg(long)]
    fof: Option<PathBuf>,
}

impl EbInput {
    fn load(&self) -> Result<EbSample, Error> {
        match (&self.input, &self.fof) {
            (Some(path), None) => EbSample::read_csv(path),
            (None, Some(path)) => Ok(EbSample::from_fof(FrequencyOfFrequencies::read_csv(path)?)),
            _ => Err(Error::InvalidInput(
                "provide exactly one of --in or --fof".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum EbCommand {
    /// Posterior-mean substitution estimator with estimated scale.
    Plugin {
        #[command(flatten)]
        input: EbInput,
        /// Utility: indicator:a, leq:a, identity, one.
        #[arg(long)]
        u: String,
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// lambda (rate-weighted sum) or next-count.
        #[arg(long, default_value = "lambda")]
        target: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// The u,v estimator (v(x) = x u(x-1)).
    Uv {
        #[command(flatten)]
        input: EbInput,
        #[arg(long)]
        u: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum SpeciesCommand {
    /// Gamma-mixture likelihood fit with standard error.
    FitGamma {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Also write the fitted expected frequencies (k,observed,fitted).
        #[arg(long)]
        fitted_out: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Singleton/doubleton lower estimate.
    Chao {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Use n1(n1-1)/(2(n2+1)), defined even without doubletons.
        #[arg(long)]
        corrected: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Frequency-ratio least-squares estimate.
    Nbreg {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Largest multiplicity entering the fit (default: data-driven).
        #[arg(long)]
        m: Option<u64>,
        /// unit or inverse-count.
        #[arg(long, default_value = "unit")]
        weights: String,
        /// ratio-consistent or next-count.
        #[arg(long, default_value = "ratio-consistent")]
        variant: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Nonparametric mixing-distribution fit.
    Npmle {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
        #[arg(long, default_value_t = 10_000)]
        max_iter: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        fitted_out: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum NetdegCommand {
    /// Sample source-destination pairs from a routing table.
    Simulate {
        /// Routing table: one path per line, whitespace-separated node ids.
        #[arg(long)]
        table: PathBuf,
        /// Number of sampled pairs.
        #[arg(long)]
        n: u64,
        #[arg(long, env = "SUMLAB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Per-node frequency tables from link counts.
    Tabulate {
        /// Link counts CSV (k,l,count).
        #[arg(long)]
        links: PathBuf,
        /// Routing table; adds the unobserved-degree column.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Also write node,observed_degree[,unobserved].
        #[arg(long)]
        degrees_out: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate per-node out-degrees from link counts.
    Estimate {
        #[arg(long)]
        links: PathBuf,
        /// observed, chao, per-node-gamma or pooled-npmle.
        #[arg(long)]
        method: String,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        max_iter: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct CellsArg {
    /// Cells CSV (cell_id,x,pi,p; pi may be blank).
    #[arg(long)]
    cells: PathBuf,
    /// Also write per-cell risks (cell_id,risk).
    #[arg(long)]
    per_cell: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RiskCommand {
    /// Per-cell and total risk under the Poisson population model.
    Poisson {
        #[command(flatten)]
        cells: CellsArg,
        /// Population mean (often the known population size).
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Negative-binomial population model (per-cell scale = nb-beta * pi).
    Nb {
        #[command(flatten)]
        cells: CellsArg,
        #[arg(long)]
        nb_alpha: f64,
        #[arg(long)]
        nb_beta: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Heavy-tail limit: p/(1-p) (-log p) at sample uniques.
    Argus {
        #[command(flatten)]
        cells: CellsArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Global risk, optionally fitting cell probabilities from margins.
    Global {
        /// poisson, nb or argus.
        #[arg(long)]
        model: String,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        nb_alpha: Option<f64>,
        #[arg(long)]
        nb_beta: Option<f64>,
        /// Flat cells CSV with known probabilities.
        #[arg(long, conflicts_with = "two_way")]
        cells: Option<PathBuf>,
        /// Two-way CSV (row,col,x,p) for margin fitting.
        #[arg(long)]
        two_way: Option<PathBuf>,
        /// known or two-way-independence.
        #[arg(long, default_value = "known")]
        fit_pi: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand)]
enum SimCommand {
    /// Run a scenario file and print the aggregate summary.
    Run {
        /// Scenario JSON.
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long, env = "SUMLAB_SEED")]
        seed: Option<u64>,
        /// Per-replicate CSV (rep,estimate,truth,se,covered).
        #[arg(long)]
        per_replicate: Option<PathBuf>,
        /// Worker threads for replicate execution.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare a degree estimator against observed degrees on synthetic
    /// pooled-model data.
    DegreeGain {
        #[arg(long, default_value_t = 200)]
        nodes: u32,
        #[arg(long, default_value_t = 20)]
        degree_lo: u64,
        #[arg(long, default_value_t = 60)]
        degree_hi: u64,
        #[arg(long, default_value_t = 1.0)]
        gamma_alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma_beta: f64,
        #[arg(long, default_value_t = 100)]
        replicates: u32,
        #[arg(long, env = "SUMLAB_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "pooled-npmle")]
        method: String,
        #[arg(long, default_value_t = 40)]
        grid_points: usize,
        #[arg(long, default_value_t = 150)]
        max_iter: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

struct Outcome {
    text: String,
    exit: u8,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Outcome { text, exit: 0 }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = std::panic::catch_unwind(|| dispatch(cli));
    match result {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(if err.is_numerical() { 3 } else { 2 })
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            eprintln!("internal error: {msg}");
            ExitCode::from(4)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, Error> {
    let (outcome, out) = match cli.command {
        Command::Eb(cmd) => run_eb(cmd)?,
        Command::Species(cmd) => run_species(cmd)?,
        Command::Netdeg(cmd) => run_netdeg(cmd)?,
        Command::Risk(cmd) => run_risk(cmd)?,
        Command::Sim(cmd) => run_sim(cmd)?,
    };
    match out {
        Some(path) => std::fs::write(&path, outcome.text.as_bytes())?,
        None => print!("{}", outcome.text),
    }
    Ok(outcome.exit)
}

fn emit_report(mut report: EstimateReport, params: BTreeMap<String, f64>) -> Result<Outcome, Error> {
    report.params = params;
    let exit = if report.diagnostics.converged { 0 } else { 3 };
    Ok(Outcome {
        text: format!("{}\n", report.to_json()?),
        exit,
    })
}

fn params(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
    entries
        .iter()
        .map(|&(k, v)| (k.to_string(), v))
        .collect()
}

type Dispatched = (Outcome, Option<PathBuf>);

fn run_eb(cmd: EbCommand) -> Result<Dispatched, Error> {
    match cmd {
        EbCommand::Plugin {
            input,
            u,
            a,
            b,
            target,
            level,
            out,
        } => {
            let data = input.load()?;
            let utility = UtilityFn::parse(&u)?;
            let target = match target.as_str() {
                "lambda" => TargetKind::LambdaWeighted,
                "next-count" => TargetKind::next_count(),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown target {other:?} (lambda | next-count)"
                    )))
                }
            };
            let report = plugin_sum(&data, &utility, a, b, &target, level)?;
            let outcome = emit_report(
                report,
                params(&[("a", a), ("b", b), ("level", level)]),
            )?;
            Ok((outcome, out.out))
        }
        EbCommand::Uv { input, u, out } => {
            let data = input.load()?;
            let report = uv_sum(&data, &UtilityFn::parse(&u)?)?;
            Ok((emit_report(report, BTreeMap::new())?, out.out))
        }
    }
}

fn run_species(cmd: SpeciesCommand) -> Result<Dispatched, Error> {
    match cmd {
        SpeciesCommand::FitGamma {
            input,
            level,
            fitted_out,
            out,
        } => {
            let fof = FrequencyOfFrequencies::read_csv(&input)?;
            let opts = species::GammaMleOptions {
                level,
                ..Default::default()
            };
            match species::fit_gamma_mle(&fof, &opts) {
                Ok(fit) => {
                    if let Some(path) = fitted_out {
                        let fitted = species::gamma::expected_frequencies(
                            fit.params,
                            fit.d_hat,
                            fof.max_multiplicity(),
                        );
                        std::fs::write(&path, fitted_table_csv(&fof, &fitted))?;
                    }
                    let outcome = emit_report(fit.report, params(&[("level", level)]))?;
                    Ok((outcome, out.out))
                }
                // A degenerate likelihood still produces a report: the
                // observed count, flagged as non-converged.
                Err(e) if e.is_numerical() => {
                    let mut report =
                        EstimateReport::new("species.gamma-mle", fof.observed_units());
                    report.diagnostics.converged = false;
                    report.warn(e.to_string());
                    report.params = params(&[("level", level)]);
                    Ok((
                        Outcome {
                            text: format!("{}\n", report.to_json()?),
                            exit: 3,
                        },
                        out.out,
                    ))
                }
                Err(e) => Err(e),
            }
        }
        SpeciesCommand::Chao {
            input,
            corrected,
            out,
        } => {
            let fof = FrequencyOfFrequencies::read_csv(&input)?;
            let report = species::chao_lower(&fof, corrected)?;
            Ok((emit_report(report, BTreeMap::new())?, out.out))
        }
        SpeciesCommand::Nbreg {
            input,
            m,
            weights,
            variant,
            out,
        } => {
            let fof = FrequencyOfFrequencies::read_csv(&input)?;
            let fit = species::nb_ratio_regression(
                &fof,
                m,
                weights.parse()?,
                variant.parse()?,
            )?;
            let mut prm = BTreeMap::new();
            if let Some(m) = m {
                prm.insert("m".into(), m as f64);
            }
            prm.insert("tau1".into(), fit.tau1);
            prm.insert("tau2".into(), fit.tau2);
            prm.insert("residual_norm".into(), fit.residual_norm);
            Ok((emit_report(fit.report, prm)?, out.out))
        }
        SpeciesCommand::Npmle {
            input,
            grid_points,
            max_iter,
            tol,
            fitted_out,
            out,
        } => {
            let fof = FrequencyOfFrequencies::read_csv(&input)?;
            let grid = species::npmle::default_grid(&fof, grid_points);
            let fit = species::fit_npmle_species(&fof, &grid, &EmOptions { tol, max_iter })?;
            if let Some(path) = fitted_out {
                let fitted = species::npmle::expected_frequencies(
                    &fit.g_hat,
                    fit.d_hat,
                    fof.max_multiplicity(),
                );
                std::fs::write(&path, fitted_table_csv(&fof, &fitted))?;
            }
            let outcome = emit_report(
                fit.report,
                params(&[
                    ("grid_points", grid_points as f64),
                    ("max_iter", max_iter as f64),
                    ("tol", tol),
                ]),
            )?;
            Ok((outcome, out.out))
        }
    }
}

fn fitted_table_csv(fof: &FrequencyOfFrequencies, fitted: &[(u64, f64)]) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("k,observed,fitted\n");
    for &(k, expected) in fitted {
        let _ = writeln!(out, "{k},{},{expected}", fof.count(k));
    }
    out
}

fn run_netdeg(cmd: NetdegCommand) -> Result<Dispatched, Error> {
    match cmd {
        NetdegCommand::Simulate {
            table,
            n,
            seed,
            stream,
            out,
        } => {
            let rt = RoutingTable::read(&table)?;
            let counts = simulate_sd_sample(&rt, n, StreamRng::new(seed, stream))?;
            Ok((Outcome::ok(counts.to_csv()), out.out))
        }
        NetdegCommand::Tabulate {
            links,
            table,
            degrees_out,
            out,
        } => {
            let text = read_file(&links)?;
            let counts = LinkCounts::parse_csv(&text, &links.display().to_string())?;
            let rt = table.map(|p| RoutingTable::read(&p)).transpose()?;
            let tables = tabulate(&counts, rt.as_ref());
            use std::fmt::Write as _;
            let mut body = String::from("node,j,count\n");
            for t in tables.tables() {
                for (j, n_kj) in t.fof.iter() {
                    let _ = writeln!(body, "{},{j},{n_kj}", t.node);
                }
            }
            if let Some(path) = degrees_out {
                let mut deg = if rt.is_some() {
                    String::from("node,observed_degree,unobserved\n")
                } else {
                    String::from("node,observed_degree\n")
                };
                for t in tables.tables() {
                    match t.unobserved {
                        Some(s) => {
                            let _ =
                                writeln!(deg, "{},{},{s}", t.node, t.observed_degree());
                        }
                        None => {
                            let _ = writeln!(deg, "{},{}", t.node, t.observed_degree());
                        }
                    }
                }
                std::fs::write(&path, deg)?;
            }
            Ok((Outcome::ok(body), out.out))
        }
        NetdegCommand::Estimate {
            links,
            method,
            grid_points,
            max_iter,
            tol,
            out,
        } => {
            let text = read_file(&links)?;
            let counts = LinkCounts::parse_csv(&text, &links.display().to_string())?;
            let tables = tabulate(&counts, None);
            let method: DegreeMethod = method.parse()?;
            let opts = PooledOptions {
                em: EmOptions { tol, max_iter },
                grid: None,
                grid_points,
            };
            let estimates = estimate_degrees(&tables, method, &opts);
            let any_ok = estimates.iter().any(|e| e.result.is_ok());
            let all_converged = estimates
                .iter()
                .filter_map(|e| e.result.as_ref().ok())
                .all(|r| r.diagnostics.converged);
            let csv = estimates_to_csv(&estimates, method);
            let exit = if !any_ok {
                3
            } else if all_converged {
                0
            } else {
                3
            };
            Ok((Outcome { text: csv, exit }, out.out))
        }
    }
}

fn risk_per_cell(
    cells: &[CellRecord],
    risk: impl Fn(&CellRecord) -> Result<f64, Error>,
) -> Result<Vec<f64>, Error> {
    cells.iter().map(risk).collect()
}

fn run_risk(cmd: RiskCommand) -> Result<Dispatched, Error> {
    match cmd {
        RiskCommand::Poisson { cells, lambda, out } => {
            let records = parse_cells_csv(
                &read_file(&cells.cells)?,
                &cells.cells.display().to_string(),
            )?;
            let risks = risk_per_cell(&records, |c| {
                risk_poisson_cell(c, lambda, &RiskUtility::InverseYAtOne)
            })?;
            if let Some(path) = &cells.per_cell {
                std::fs::write(path, risks_to_csv(&records, &risks))?;
            }
            let report = estimate_global_risk(
                CellInput::Flat(&records),
                &PopulationModel::Poisson { lambda },
                PiFit::Known,
                &RiskUtility::InverseYAtOne,
            )?;
            let outcome = emit_report(report, params(&[("lambda", lambda)]))?;
            Ok((outcome, out.out))
        }
        RiskCommand::Nb {
            cells,
            nb_alpha,
            nb_beta,
            out,
        } => {
            let records = parse_cells_csv(
                &read_file(&cells.cells)?,
                &cells.cells.display().to_string(),
            )?;
            let risks = risk_per_cell(&records, |c| {
                let pi = c.pi.ok_or_else(|| {
                    Error::InvalidInput(format!("cell {} has no cell probability", c.id))
                })?;
                risk_nb_cell(c, nb_alpha, nb_beta * pi)
            })?;
            if let Some(path) = &cells.per_cell {
                std::fs::write(path, risks_to_csv(&records, &risks))?;
            }
            let report = estimate_global_risk(
                CellInput::Flat(&records),
                &PopulationModel::NegBin {
                    alpha: nb_alpha,
                    beta: nb_beta,
                },
                PiFit::Known,
                &RiskUtility::InverseYAtOne,
            )?;
            let outcome = emit_report(
                report,
                params(&[("nb_alpha", nb_alpha), ("nb_beta", nb_beta)]),
            )?;
            Ok((outcome, out.out))
        }
        RiskCommand::Argus { cells, out } => {
            let records = parse_cells_csv(
                &read_file(&cells.cells)?,
                &cells.cells.display().to_string(),
            )?;
            let risks = risk_per_cell(&records, risk_mu_argus)?;
            if let Some(path) = &cells.per_cell {
                std::fs::write(path, risks_to_csv(&records, &risks))?;
            }
            let report = estimate_global_risk(
                CellInput::Flat(&records),
                &PopulationModel::MuArgus,
                PiFit::Known,
                &RiskUtility::InverseYAtOne,
            )?;
            Ok((emit_report(report, BTreeMap::new())?, out.out))
        }
        RiskCommand::Global {
            model,
            lambda,
            nb_alpha,
            nb_beta,
            cells,
            two_way,
            fit_pi,
            out,
        } => {
            let model = match model.as_str() {
                "poisson" => PopulationModel::Poisson {
                    lambda: lambda.ok_or_else(|| {
                        Error::InvalidInput("--lambda is required for the poisson model".into())
                    })?,
                },
                "nb" => PopulationModel::NegBin {
                    alpha: nb_alpha.ok_or_else(|| {
                        Error::InvalidInput("--nb-alpha is required for the nb model".into())
                    })?,
                    beta: nb_beta.ok_or_else(|| {
                        Error::InvalidInput("--nb-beta is required for the nb model".into())
                    })?,
                },
                "argus" => PopulationModel::MuArgus,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown model {other:?} (poisson | nb | argus)"
                    )))
                }
            };
            let fit = match fit_pi.as_str() {
                "known" => PiFit::Known,
                "two-way-independence" => PiFit::TwoWayIndependence,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown fit-pi {other:?} (known | two-way-independence)"
                    )))
                }
            };
            let mut prm = BTreeMap::new();
            if let Some(v) = lambda {
                prm.insert("lambda".into(), v);
            }
            if let Some(v) = nb_alpha {
                prm.insert("nb_alpha".into(), v);
            }
            if let Some(v) = nb_beta {
                prm.insert("nb_beta".into(), v);
            }
            let report = match (cells, two_way) {
                (Some(path), None) => {
                    let records = parse_cells_csv(
                        &read_file(&path)?,
                        &path.display().to_string(),
                    )?;
                    estimate_global_risk(
                        CellInput::Flat(&records),
                        &model,
                        fit,
                        &RiskUtility::InverseYAtOne,
                    )?
                }
                (None, Some(path)) => {
                    let table = TwoWayTable::parse_csv(
                        &read_file(&path)?,
                        &path.display().to_string(),
                    )?;
                    estimate_global_risk(
                        CellInput::TwoWay(&table),
                        &model,
                        fit,
                        &RiskUtility::InverseYAtOne,
                    )?
                }
                _ => {
                    return Err(Error::InvalidInput(
                        "provide exactly one of --cells or --two-way".into(),
                    ))
                }
            };
            Ok((emit_report(report, prm)?, out.out))
        }
    }
}

fn run_sim(cmd: SimCommand) -> Result<Dispatched, Error> {
    match cmd {
        SimCommand::Run {
            scenario,
            seed,
            per_replicate,
            threads,
            out,
        } => {
            let mut scn = Scenario::parse_json(&read_file(&scenario)?)?;
            if let Some(seed) = seed {
                scn.seed = seed;
            }
            let run = || run_replicates(&scn);
            let summary = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
                    .install(run),
                None => run(),
            }?;
            if let Some(path) = per_replicate {
                std::fs::write(&path, summary.per_replicate_csv())?;
            }
            Ok((
                Outcome::ok(format!("{}\n", summary.to_json())),
                out.out,
            ))
        }
        SimCommand::DegreeGain {
            nodes,
            degree_lo,
            degree_hi,
            gamma_alpha,
            gamma_beta,
            replicates,
            seed,
            method,
            grid_points,
            max_iter,
            out,
        } => {
            let scn = DegreeScenario {
                nodes,
                degree_lo,
                degree_hi,
                prior: sumlab::simlab::PriorSpec::Gamma {
                    alpha: gamma_alpha,
                    beta: gamma_beta,
                },
                scale_lo: 1.0,
                scale_hi: 1.0,
                replicates,
                seed,
                opts: PooledOptions {
                    em: EmOptions {
                        tol: 1e-8,
                        max_iter,
                    },
                    grid: None,
                    grid_points: Some(grid_points),
                },
            };
            let comparison = degree_comparison(&scn, method.parse()?)?;
            Ok((
                Outcome::ok(format!("{}\n", comparison.to_json())),
                out.out,
            ))
        }
    }
}

fn read_file(path: &std::path::Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::reading(path, e))
}
