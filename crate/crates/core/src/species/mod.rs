//! Total-richness estimation from a frequency-of-frequencies table.
//!
//! Four interchangeable strategies live behind [`SpeciesEstimator`] and are
//! selectable by name at runtime: the gamma-mixture likelihood fit, the
//! singleton/doubleton lower estimate, the frequency-ratio regression, and
//! the nonparametric mixing-distribution fit.

pub mod chao;
pub mod gamma;
pub mod npmle;
pub mod regression;

pub use chao::chao_lower;
pub use gamma::{fit_gamma_mle, se_gamma, zt_loglik, GammaMleOptions, GammaSpeciesFit};
pub use npmle::{fit_npmle_species, NpmleSpeciesFit};
pub use regression::{
    nb_ratio_regression, RegressionSpeciesFit, RegressionVariant, WeightScheme,
};

use crate::error::Result;
use crate::fof::FrequencyOfFrequencies;
use crate::netdegree::em::EmOptions;
use crate::report::EstimateReport;

/// A richness strategy: frequency table in, report out.
pub trait SpeciesEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, fof: &FrequencyOfFrequencies) -> Result<EstimateReport>;
}

#[derive(Debug, Clone, Default)]
pub struct GammaMleEstimator {
    pub opts: GammaMleOptions,
}

impl SpeciesEstimator for GammaMleEstimator {
    fn name(&self) -> &'static str {
        "gamma-mle"
    }

    fn estimate(&self, fof: &FrequencyOfFrequencies) -> Result<EstimateReport> {
        Ok(fit_gamma_mle(fof, &self.opts)?.report)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ChaoEstimator {
    pub corrected: bool,
}

impl SpeciesEstimator for ChaoEstimator {
    fn name(&self) -> &'static str {
        "chao"
    }

    fn estimate(&self, fof: &FrequencyOfFrequencies) -> Result<EstimateReport> {
        chao_lower(fof, self.corrected)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RatioRegressionEstimator {
    pub m: Option<u64>,
    pub weights: WeightScheme,
    pub variant: RegressionVariant,
}

impl SpeciesEstimator for RatioRegressionEstimator {
    fn name(&self) -> &'static str {
        "nbreg"
    }

    fn estimate(&self, fof: &FrequencyOfFrequencies) -> Result<EstimateReport> {
        Ok(nb_ratio_regression(fof, self.m, self.weights, self.variant)?.report)
    }
}

#[derive(Debug, Clone)]
pub struct NpmleEstimator {
    pub grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub em: EmOptions,
}

impl Default for NpmleEstimator {
    fn default() -> Self {
        NpmleEstimator {
            grid: None,
            grid_points: 100,
            em: EmOptions::default(),
        }
    }
}

impl SpeciesEstimator for NpmleEstimator {
    fn name(&self) -> &'static str {
        "npmle"
    }

    fn estimate(&self, fof: &FrequencyOfFrequencies) -> Result<EstimateReport> {
        let grid = match &self.grid {
            Some(g) => g.clone(),
            None => npmle::default_grid(fof, self.grid_points),
        };
        Ok(fit_npmle_species(fof, &grid, &self.em)?.report)
    }
}

/// Names accepted by [`estimator`], in presentation order.
pub const ESTIMATOR_NAMES: &[&str] = &["gamma-mle", "chao", "nbreg", "npmle"];

/// Default-configured strategy by registry name.
pub fn estimator(name: &str) -> Option<Box<dyn SpeciesEstimator>> {
    match name {
        "gamma-mle" => Some(Box::<GammaMleEstimator>::default()),
        "chao" => Some(Box::<ChaoEstimator>::default()),
        "nbreg" => Some(Box::<RatioRegressionEstimator>::default()),
        "npmle" => Some(Box::<NpmleEstimator>::default()),
        _ => None,
    }
}
