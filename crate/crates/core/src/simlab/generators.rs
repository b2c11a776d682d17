//! Model-faithful synthetic data with the latent truth attached.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Poisson};

use crate::disclosure::{CellRecord, PopulationModel};
use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::netdegree::{NodeFrequencyTables, NodeTable, RoutingTable};
use crate::rng::StreamRng;

use super::{PiSpec, PriorSpec, RoutingSpec};

/// One generated unit of the count model: the observed count, the latent
/// rate, and the companion count with the same conditional mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbTriple {
    pub x: u64,
    pub rate: f64,
    pub y: u64,
}

pub(crate) fn sample_rate(prior: &PriorSpec, rng: &mut StreamRng) -> f64 {
    match prior {
        PriorSpec::Exponential { tau } => Exp::new(*tau).expect("positive rate").sample(rng),
        PriorSpec::Gamma { alpha, beta } => {
            Gamma::new(*alpha, *beta).expect("valid gamma").sample(rng)
        }
        PriorSpec::PointMass { value } => *value,
        PriorSpec::Atoms { atoms } => {
            let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
            let mut u = rng.random::<f64>() * total;
            for &(y, w) in atoms {
                if u < w {
                    return y;
                }
                u -= w;
            }
            atoms.last().map(|&(y, _)| y).unwrap_or(0.0)
        }
    }
}

pub(crate) fn sample_poisson(mean: f64, rng: &mut StreamRng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

/// Latent rates i.i.d. from the prior; observed and companion counts are
/// conditionally independent Poisson draws at that rate.
pub fn gen_poisson_mixture(n: u64, prior: &PriorSpec, rng: &mut StreamRng) -> Vec<EbTriple> {
    (0..n)
        .map(|_| {
            let rate = sample_rate(prior, rng);
            EbTriple {
                x: sample_poisson(rate, rng),
                rate,
                y: sample_poisson(rate, rng),
            }
        })
        .collect()
}

/// `d` latent units with Poisson counts; only positive counts are observed.
/// Returns the frequency table and the number of units actually seen.
pub fn gen_species(
    d: u64,
    prior: &PriorSpec,
    rng: &mut StreamRng,
) -> (FrequencyOfFrequencies, u64) {
    let mut fof = FrequencyOfFrequencies::new();
    let mut seen = 0;
    for _ in 0..d {
        let rate = sample_rate(prior, rng);
        let x = sample_poisson(rate, rng);
        if x > 0 {
            fof.add(x, 1.0).expect("valid count");
            seen += 1;
        }
    }
    (fof, seen)
}

/// Deterministic synthetic routing tables with known degrees.
pub fn gen_routing(spec: &RoutingSpec) -> Result<RoutingTable> {
    match *spec {
        RoutingSpec::Star { nodes } => {
            if nodes < 2 {
                return Err(Error::InvalidInput("star needs at least 2 nodes".into()));
            }
            let paths = (2..=nodes).map(|leaf| vec![1, leaf]).collect();
            RoutingTable::new(paths, nodes)
        }
        RoutingSpec::Chain { nodes } => {
            if nodes < 2 {
                return Err(Error::InvalidInput("chain needs at least 2 nodes".into()));
            }
            let mut paths = Vec::new();
            for src in 1..nodes {
                for dst in src + 1..=nodes {
                    paths.push((src..=dst).collect());
                }
            }
            RoutingTable::new(paths, nodes)
        }
    }
}

/// Per-node count tables drawn from the pooled model: node k has a true
/// degree in [degree_lo, degree_hi], per-link rates i.i.d. from the shared
/// prior, a per-node scale log-uniform in [scale_lo, scale_hi], and
/// Poisson(scale * rate) link counts with zeros unobserved.
pub fn gen_node_tables(
    nodes: u32,
    degree_lo: u64,
    degree_hi: u64,
    prior: &PriorSpec,
    scale_lo: f64,
    scale_hi: f64,
    rng: &mut StreamRng,
) -> (NodeFrequencyTables, Vec<u64>) {
    let mut tables = Vec::with_capacity(nodes as usize);
    let mut truth = Vec::with_capacity(nodes as usize);
    for node in 1..=nodes {
        let degree = if degree_hi > degree_lo {
            rng.random_range(degree_lo..=degree_hi)
        } else {
            degree_lo
        };
        let scale = if scale_hi > scale_lo {
            (rng.random::<f64>() * (scale_hi.ln() - scale_lo.ln()) + scale_lo.ln()).exp()
        } else {
            scale_lo
        };
        let mut fof = FrequencyOfFrequencies::new();
        for _ in 0..degree {
            let x = sample_poisson(scale * sample_rate(prior, rng), rng);
            if x > 0 {
                fof.add(x, 1.0).expect("valid count");
            }
        }
        truth.push(degree);
        tables.push(NodeTable {
            node,
            fof,
            unobserved: None,
        });
    }
    (NodeFrequencyTables::from_tables(tables), truth)
}

/// Population cells: total size from the population model, multinomial
/// allocation over cells, binomial release sampling. Returns the released
/// cells (with their known probabilities and sampling fraction), the latent
/// population counts, and the realized sample-unique risk
/// `sum_j 1{X_j = 1} / Y_j`.
pub fn gen_disclosure(
    cells: u64,
    pi: &PiSpec,
    p: f64,
    model: &PopulationModel,
    rng: &mut StreamRng,
) -> Result<(Vec<CellRecord>, Vec<u64>, f64)> {
    if cells == 0 {
        return Err(Error::InvalidInput("need at least one cell".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "sampling fraction {p} must lie in [0,1]"
        )));
    }
    let probs: Vec<f64> = match pi {
        PiSpec::Uniform => vec![1.0 / cells as f64; cells as usize],
        PiSpec::Proportional { weights } => {
            if weights.len() != cells as usize {
                return Err(Error::InvalidInput(format!(
                    "{} weights for {cells} cells",
                    weights.len()
                )));
            }
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) || weights.iter().any(|&w| w <= 0.0) {
                return Err(Error::InvalidInput("weights must be positive".into()));
            }
            weights.iter().map(|&w| w / total).collect()
        }
    };

    let population = match *model {
        PopulationModel::Poisson { lambda } => sample_poisson(lambda, rng),
        PopulationModel::NegBin { alpha, beta } => {
            let rate = Gamma::new(alpha, beta).expect("valid gamma").sample(rng);
            sample_poisson(rate, rng)
        }
        PopulationModel::MuArgus => {
            return Err(Error::InvalidInput(
                "the heavy-tail limit is not a generative model".into(),
            ))
        }
    };

    // Multinomial allocation by sequential binomials.
    let mut latent = Vec::with_capacity(cells as usize);
    let mut remaining = population;
    let mut mass_left = 1.0;
    for (idx, &prob) in probs.iter().enumerate() {
        let y = if idx + 1 == cells as usize || mass_left <= 0.0 {
            remaining
        } else {
            let q = (prob / mass_left).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("valid binomial").sample(rng)
        };
        latent.push(y);
        remaining -= y;
        mass_left -= prob;
    }

    let mut released = Vec::with_capacity(cells as usize);
    let mut truth = 0.0;
    for (idx, (&y, &prob)) in latent.iter().zip(&probs).enumerate() {
        let x = if p >= 1.0 {
            y
        } else if p <= 0.0 || y == 0 {
            0
        } else {
            Binomial::new(y, p).expect("valid binomial").sample(rng)
        };
        if x == 1 {
            truth += 1.0 / y as f64;
        }
        released.push(CellRecord::new(
            format!("c{}", idx + 1),
            x,
            Some(prob.min(1.0 - f64::EPSILON)),
            p,
        )?);
    }
    Ok((released, latent, truth))
}
