//! Finite-support mixing distributions over a non-negative latent rate, and
//! the exponentially-tilted moments `sum_i w_i exp(-beta y_i) y_i^j` that
//! drive every mixture computation in the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability distribution with finitely many atoms on [0, inf).
/// Support points are distinct and sorted ascending; weights are positive
/// and sum to one (within 1e-12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct DiscreteMixingDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteMixingDistribution {
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("mixing distribution needs atoms".into()));
        }
        for &(y, w) in &atoms {
            if !y.is_finite() || y < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "support point {y} must be finite and >= 0"
                )));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "weight {w} at support {y} must be finite and > 0"
                )));
            }
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if atoms.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidInput("support points must be distinct".into()));
        }
        let total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(DiscreteMixingDistribution { atoms })
    }

    /// Uniform weights over the given support points.
    pub fn uniform_on(support: &[f64]) -> Result<Self> {
        let w = 1.0 / support.len() as f64;
        let mut atoms: Vec<(f64, f64)> = support.iter().map(|&y| (y, w)).collect();
        // Make the weights sum to exactly 1 regardless of rounding.
        if let Some(last) = atoms.last_mut() {
            last.1 = 1.0 - w * (support.len() as f64 - 1.0);
        }
        Self::new(atoms)
    }

    pub fn point_mass(y: f64) -> Self {
        DiscreteMixingDistribution {
            atoms: vec![(y, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Weight carried by the atom at 0, if present.
    pub fn mass_at_zero(&self) -> f64 {
        match self.atoms.first() {
            Some(&(y, w)) if y == 0.0 => w,
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(y, w)| y * w).sum()
    }

    /// Same distribution with every support point multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        DiscreteMixingDistribution {
            atoms: self.atoms.iter().map(|&(y, w)| (y * c, w)).collect(),
        }
    }

    /// Replaces the weights, renormalizing to total mass one. Weights must be
    /// non-negative; zero weights are kept (the support is fixed).
    pub(crate) fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        assert_eq!(weights.len(), self.atoms.len());
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::NumericalUnderflow(
                "mixing weights summed to zero".into(),
            ));
        }
        let atoms = self
            .atoms
            .iter()
            .zip(weights)
            .map(|(&(y, _), &w)| (y, (w / total).max(f64::MIN_POSITIVE)))
            .collect();
        Ok(DiscreteMixingDistribution { atoms })
    }
}

impl TryFrom<Vec<(f64, f64)>> for DiscreteMixingDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        DiscreteMixingDistribution::new(atoms)
    }
}

impl From<DiscreteMixingDistribution> for Vec<(f64, f64)> {
    fn from(g: DiscreteMixingDistribution) -> Self {
        g.atoms
    }
}

/// Gamma shape/scale pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaShapeScale {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaShapeScale {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0 {
            Ok(GammaShapeScale { alpha, beta })
        } else {
            Err(Error::InvalidInput(format!(
                "gamma shape/scale must be positive and finite, got ({alpha}, {beta})"
            )))
        }
    }
}

/// `sum_i w_i exp(-beta y_i) y_i^j`, with the 0^0 = 1 convention.
///
/// Each term is evaluated as `exp(j ln y - beta y)` so large j cannot
/// overflow intermediate powers. `beta = 0` is permitted (plain moments).
pub fn mixture_moment(j: u64, beta: f64, g: &DiscreteMixingDistribution) -> f64 {
    debug_assert!(beta >= 0.0);
    let mut total = 0.0;
    for &(y, w) in g.atoms() {
        total += w * tilted_power(j, beta, y);
    }
    total
}

/// Natural log of [`mixture_moment`]; -inf when every term vanishes.
/// Evaluated by a streaming log-sum-exp so underflowing sums keep their
/// magnitude without allocating.
pub fn log_mixture_moment(j: u64, beta: f64, g: &DiscreteMixingDistribution) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0f64;
    for &(y, w) in g.atoms() {
        let lt = if y == 0.0 {
            if j == 0 {
                w.ln()
            } else {
                f64::NEG_INFINITY
            }
        } else {
            w.ln() + j as f64 * y.ln() - beta * y
        };
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
        return f64::NEG_INFINITY;
    }
    max + sum.ln()
}

/// `1 - sum_i w_i exp(-beta y_i)`, via expm1 for accuracy at small beta*y.
pub fn one_minus_p0(beta: f64, g: &DiscreteMixingDistribution) -> f64 {
    g.atoms()
        .iter()
        .map(|&(y, w)| w * (-(-beta * y).exp_m1()))
        .sum()
}

fn tilted_power(j: u64, beta: f64, y: f64) -> f64 {
    if y == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if j == 0 {
        return (-beta * y).exp();
    }
    (j as f64 * y.ln() - beta * y).exp()
}
