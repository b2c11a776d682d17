//! Estimation of sums of functions of observed counts and their latent
//! rates under empirical-Bayes mixture models, with three application
//! fronts — species richness, network node degrees from sampled paths, and
//! disclosure risk — plus a Monte Carlo lab that checks the asymptotic
//! variance and interval claims by simulation.

pub mod disclosure;
pub mod error;
pub mod fof;
pub mod mixing;
pub mod negbin;
pub mod netdegree;
pub mod poisson_eb;
pub mod report;
pub mod rng;
pub mod series;
pub mod simlab;
pub mod special;
pub mod species;

pub use error::{Error, Result};
pub use fof::FrequencyOfFrequencies;
pub use mixing::{DiscreteMixingDistribution, GammaShapeScale};
pub use report::{Diagnostics, EstimateReport};
pub use rng::StreamRng;
