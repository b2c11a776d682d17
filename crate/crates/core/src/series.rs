//! Truncated evaluation of series of the form `sum_x h(x) * pmf(x)` over the
//! non-negative integers, with an explicit bound on the discarded tail.

use crate::error::{Error, Result};

/// How the tail of `|h| * pmf` beyond the truncation point is bounded.
pub enum Tail<'a> {
    /// `|h| <= h_sup` everywhere; remaining tail <= h_sup * (1 - accumulated mass).
    Bounded { h_sup: f64 },
    /// `h(x) = 0` for every x > last; the sum is exact once `last` is passed.
    Support { last: u64 },
    /// `pmf_ratio_from(x)` bounds pmf(x'+1)/pmf(x') for every x' >= x, and
    /// |h| grows at most like x^h_degree. The tail beyond x is then dominated
    /// by a geometric series with ratio r * ((x+1)/x)^h_degree.
    Geometric {
        pmf_ratio_from: &'a dyn Fn(u64) -> f64,
        h_degree: f64,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct SeriesOpts {
    pub tail_eps: f64,
    /// Never truncate before this many terms (lets callers skip past the
    /// support of an indicator-like factor before tail bounds apply).
    pub min_terms: u64,
    pub max_terms: u64,
}

impl Default for SeriesOpts {
    fn default() -> Self {
        SeriesOpts {
            tail_eps: 1e-12,
            min_terms: 8,
            max_terms: 10_000_000,
        }
    }
}

impl SeriesOpts {
    pub fn with_min_terms(mut self, min_terms: u64) -> Self {
        self.min_terms = min_terms;
        self
    }
}

/// Result of a truncated series evaluation: the value, the truncation point
/// (number of terms evaluated), and the bound on the discarded tail.
#[derive(Debug, Clone, Copy)]
pub struct SeriesEval {
    pub value: f64,
    pub terms: u64,
    pub tail_bound: f64,
}

/// Evaluates `sum_{x>=0} h(x) * pmf(x)`, truncating once the tail bound drops
/// below `opts.tail_eps`.
///
/// The geometric rule asks for the bound to hold on several consecutive terms
/// before stopping, so that isolated zeros of `h` do not truncate the series
/// prematurely.
pub fn expect_truncated(
    h: impl Fn(u64) -> f64,
    pmf: impl Fn(u64) -> f64,
    tail: Tail<'_>,
    opts: SeriesOpts,
) -> Result<SeriesEval> {
    const CONSECUTIVE: u32 = 8;

    let mut value = 0.0f64;
    let mut mass = 0.0f64;
    let mut streak = 0u32;
    let mut x = 0u64;
    let mut bound = f64::INFINITY;

    loop {
        let p = pmf(x);
        let term = h(x) * p;
        value += term;
        mass += p;

        let stop = match tail {
            Tail::Support { last } => {
                bound = 0.0;
                x >= last
            }
            Tail::Bounded { h_sup } => {
                bound = h_sup * (1.0 - mass).max(0.0);
                x + 1 >= opts.min_terms && bound <= opts.tail_eps
            }
            Tail::Geometric {
                pmf_ratio_from,
                h_degree,
            } => {
                if x == 0 {
                    false
                } else {
                    let ratio =
                        pmf_ratio_from(x) * ((x as f64 + 1.0) / x as f64).powf(h_degree);
                    if ratio < 1.0 {
                        bound = term.abs() * ratio / (1.0 - ratio);
                        if bound <= opts.tail_eps {
                            streak += 1;
                        } else {
                            streak = 0;
                        }
                    } else {
                        streak = 0;
                    }
                    x + 1 >= opts.min_terms && streak >= CONSECUTIVE
                }
            }
        };
        if stop {
            return Ok(SeriesEval {
                value,
                terms: x + 1,
                tail_bound: bound,
            });
        }
        x += 1;
        if x >= opts.max_terms {
            return Err(Error::NonConvergentSeries {
                max_terms: opts.max_terms,
                bound,
            });
        }
    }
}

/// Order-stable pairwise summation. Splitting recursively at the midpoint
/// makes the result independent of how the inputs were produced (sequentially
/// or by parallel workers), as long as their order is fixed.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &v in xs {
            s += v;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean via pairwise summation; 0 for an empty slice.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Unbiased sample variance via two-pass pairwise summation.
pub fn pairwise_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = pairwise_mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&v| (v - mean) * (v - mean)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geometric_pmf(q: f64) -> impl Fn(u64) -> f64 {
        // P(X = x) = (1-q) q^x
        move |x| (1.0 - q) * q.powi(x as i32)
    }

    #[test]
    fn normalization_of_proper_pmf() {
        let ratio = |_x: u64| 0.5;
        let ev = expect_truncated(
            |_| 1.0,
            geometric_pmf(0.5),
            Tail::Geometric {
                pmf_ratio_from: &ratio,
                h_degree: 0.0,
            },
            SeriesOpts::default(),
        )
        .unwrap();
        assert_relative_eq!(ev.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bounded_tail_uses_remaining_mass() {
        let ev = expect_truncated(
            |x| if x == 0 { 1.0 } else { 0.0 },
            geometric_pmf(0.5),
            Tail::Bounded { h_sup: 1.0 },
            SeriesOpts::default(),
        )
        .unwrap();
        assert_relative_eq!(ev.value, 0.5, epsilon = 1e-12);
        assert!(ev.tail_bound <= 1e-12);
    }

    #[test]
    fn support_tail_is_exact() {
        let ev = expect_truncated(
            |x| if x == 3 { 2.0 } else { 0.0 },
            geometric_pmf(0.5),
            Tail::Support { last: 3 },
            SeriesOpts::default(),
        )
        .unwrap();
        assert_relative_eq!(ev.value, 2.0 * 0.5f64.powi(4), epsilon = 1e-15);
        assert_eq!(ev.terms, 4);
    }

    #[test]
    fn isolated_zero_of_h_does_not_truncate() {
        // h(x) = x vanishes at 0 but the series must keep going.
        let ratio = |_x: u64| 0.5;
        let ev = expect_truncated(
            |x| x as f64,
            geometric_pmf(0.5),
            Tail::Geometric {
                pmf_ratio_from: &ratio,
                h_degree: 1.0,
            },
            SeriesOpts::default(),
        )
        .unwrap();
        // Mean of geometric(q=1/2) on {0,1,...} is q/(1-q) = 1.
        assert_relative_eq!(ev.value, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cap_turns_hang_into_error() {
        // Improper "pmf" that never lets the bound shrink.
        let ratio = |_x: u64| 1.5;
        let err = expect_truncated(
            |_| 1.0,
            |_| 1e-3,
            Tail::Geometric {
                pmf_ratio_from: &ratio,
                h_degree: 0.0,
            },
            SeriesOpts {
                max_terms: 1000,
                ..SeriesOpts::default()
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NonConvergentSeries { max_terms: 1000, .. }
        ));
    }

    #[test]
    fn pairwise_matches_naive_on_well_scaled_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_relative_eq!(pairwise_sum(&xs), naive, epsilon = 1e-9);
        assert_relative_eq!(
            pairwise_variance(&[1.0, 2.0, 3.0, 4.0]),
            5.0 / 3.0,
            epsilon = 1e-14
        );
    }
}
