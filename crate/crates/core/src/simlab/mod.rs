//! Monte Carlo verification lab: model-faithful data generators with the
//! latent truth attached, a seeded replicate runner, and coverage/variance
//! summaries that turn asymptotic claims into executable checks.
//!
//! Scenarios are declarative: a generator spec, an estimator spec resolved
//! by name, a replicate count and a seed. Replicate r always runs on the
//! random stream `(seed, r)`, so results are reproducible and independent
//! of execution order and parallelism.

pub mod generators;
pub mod runner;

use serde::{Deserialize, Serialize};

use crate::disclosure::PopulationModel;
use crate::error::{Error, Result};

pub use generators::{
    gen_disclosure, gen_node_tables, gen_poisson_mixture, gen_routing, gen_species, EbTriple,
};
pub use runner::{
    coverage_report, degree_comparison, run_replicates, variance_check, CoverageReport,
    DegreeComparison, DegreeScenario, RepRecord, ReplicateSummary,
};

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub generator: GeneratorSpec,
    pub estimator: EstimatorSpec,
    pub replicates: u32,
    pub seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Which sum the estimate is compared against (count scenarios only).
    #[serde(default)]
    pub target: TargetSpec,
}

impl Scenario {
    pub fn parse_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("scenario: {e}")))?;
        if scenario.replicates < 1 {
            return Err(Error::InvalidInput("replicates must be >= 1".into()));
        }
        if !(scenario.level > 0.0 && scenario.level < 1.0) {
            return Err(Error::InvalidInput("level must lie in (0,1)".into()));
        }
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSpec {
    /// Sum of rate * u(count).
    #[default]
    Lambda,
    /// Sum of companion-count * u(count).
    NextCount,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// Latent rates from `prior`, observed and companion counts Poisson
    /// given the rate.
    PoissonMixture { n: u64, prior: PriorSpec },
    /// `d` latent units, counts Poisson given the unit's rate, zeros
    /// unobserved.
    Species { d: u64, prior: PriorSpec },
    /// Per-node latent link rates from a shared prior up to a per-node
    /// scale; counts Poisson, zeros unobserved.
    NodeTables {
        nodes: u32,
        degree_lo: u64,
        degree_hi: u64,
        prior: PriorSpec,
        #[serde(default = "one")]
        scale_lo: f64,
        #[serde(default = "one")]
        scale_hi: f64,
    },
    /// A synthetic routing table sampled by source-destination pairs.
    RoutingSample { table: RoutingSpec, sample_size: u64 },
    /// Population cells with binomial release sampling.
    Disclosure {
        cells: u64,
        p: f64,
        #[serde(default)]
        pi: PiSpec,
        model: PopulationModelSpec,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    Exponential { tau: f64 },
    Gamma { alpha: f64, beta: f64 },
    PointMass { value: f64 },
    Atoms { atoms: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum RoutingSpec {
    /// Node 1 routes to every other node.
    Star { nodes: u32 },
    /// 1 -> 2 -> ... -> nodes, one path per ordered pair along the line.
    Chain { nodes: u32 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PiSpec {
    #[default]
    Uniform,
    Proportional {
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PopulationModelSpec {
    Poisson { lambda: f64 },
    NegBin { alpha: f64, beta: f64 },
}

impl PopulationModelSpec {
    pub fn to_model(&self) -> PopulationModel {
        match *self {
            PopulationModelSpec::Poisson { lambda } => PopulationModel::Poisson { lambda },
            PopulationModelSpec::NegBin { alpha, beta } => {
                PopulationModel::NegBin { alpha, beta }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", deny_unknown_fields)]
pub enum EstimatorSpec {
    /// Returns the truth with zero standard error; the runner's self-test.
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "eb/plugin")]
    EbPlugin {
        u: String,
        #[serde(default)]
        a: f64,
        #[serde(default)]
        b: f64,
    },
    #[serde(rename = "eb/uv")]
    EbUv { u: String },
    #[serde(rename = "species/gamma-mle")]
    SpeciesGamma,
    #[serde(rename = "species/chao")]
    SpeciesChao {
        #[serde(default)]
        corrected: bool,
    },
    #[serde(rename = "species/nbreg")]
    SpeciesNbreg {
        #[serde(default)]
        m: Option<u64>,
    },
    #[serde(rename = "species/npmle")]
    SpeciesNpmle {
        #[serde(default)]
        grid_points: Option<usize>,
        #[serde(default)]
        max_iter: Option<u64>,
    },
    /// Global disclosure risk with the generator's known cell parameters.
    #[serde(rename = "risk/global")]
    RiskGlobal,
}
