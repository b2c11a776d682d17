//! Frequency-of-frequencies tables: for each multiplicity `k >= 1`, the
//! number of units observed exactly `k` times. This is the sufficient summary
//! for species-style problems. Counts are kept as reals so that exact
//! expected-count fixtures can be pushed through the same estimators as
//! integer data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrequencyOfFrequencies {
    entries: BTreeMap<u64, f64>,
}

impl FrequencyOfFrequencies {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (u64, f64)>>(pairs: I) -> Result<Self> {
        let mut fof = Self::new();
        for (k, count) in pairs {
            fof.add(k, count)?;
        }
        Ok(fof)
    }

    /// Tabulates raw per-unit observations, ignoring zeros.
    pub fn from_observations(xs: &[u64]) -> Self {
        let mut fof = Self::new();
        for &x in xs {
            if x >= 1 {
                *fof.entries.entry(x).or_insert(0.0) += 1.0;
            }
        }
        fof
    }

    /// Adds `count` units of multiplicity `k`. Zero counts are dropped.
    pub fn add(&mut self, k: u64, count: f64) -> Result<()> {
        if k < 1 {
            return Err(Error::InvalidInput(
                "frequency table keys must be >= 1".into(),
            ));
        }
        if !count.is_finite() || count < 0.0 {
            return Err(Error::InvalidInput(format!(
                "frequency count for k={k} must be finite and non-negative, got {count}"
            )));
        }
        if count > 0.0 {
            *self.entries.entry(k).or_insert(0.0) += count;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, k: u64) -> f64 {
        self.entries.get(&k).copied().unwrap_or(0.0)
    }

    /// Iterates `(k, n_k)` in increasing k.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().map(|(&k, &n)| (k, n))
    }

    pub fn max_multiplicity(&self) -> u64 {
        self.entries.keys().next_back().copied().unwrap_or(0)
    }

    /// Number of distinct observed units: d-tilde = sum_k n_k.
    pub fn observed_units(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Total sample size N = sum_k k * n_k.
    pub fn sample_size(&self) -> f64 {
        self.iter().map(|(k, n)| k as f64 * n).sum()
    }

    /// Mean multiplicity among observed units, N / d-tilde.
    pub fn mean_multiplicity(&self) -> f64 {
        let d = self.observed_units();
        if d > 0.0 {
            self.sample_size() / d
        } else {
            0.0
        }
    }

    /// Tail sums S_k = sum_{l >= k} n_l for k = 1..=max multiplicity.
    pub fn tail_sums(&self) -> Vec<f64> {
        let kmax = self.max_multiplicity() as usize;
        let mut tails = vec![0.0; kmax + 1];
        for (k, n) in self.iter() {
            tails[k as usize] += n;
        }
        for k in (1..kmax).rev() {
            tails[k] += tails[k + 1];
        }
        tails
    }

    /// Parses the `k,count` CSV format: a header line, then one row per
    /// multiplicity with strictly increasing k.
    pub fn parse_csv(text: &str, file: &str) -> Result<Self> {
        let mut fof = Self::new();
        let mut prev_k: Option<u64> = None;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "k,count" => {}
            Some((_, header)) => {
                return Err(Error::Parse {
                    file: file.into(),
                    line: 1,
                    msg: format!("expected header \"k,count\", got {header:?}"),
                })
            }
            None => {
                return Err(Error::Parse {
                    file: file.into(),
                    line: 1,
                    msg: "empty file".into(),
                })
            }
        }
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let (k_str, count_str) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), None) => (a.trim(), b.trim()),
                _ => {
                    return Err(Error::Parse {
                        file: file.into(),
                        line: line_no,
                        msg: format!("expected two comma-separated fields, got {line:?}"),
                    })
                }
            };
            let k: u64 = k_str.parse().map_err(|_| Error::Parse {
                file: file.into(),
                line: line_no,
                msg: format!("multiplicity {k_str:?} is not a positive integer"),
            })?;
            let count: f64 = count_str.parse().map_err(|_| Error::Parse {
                file: file.into(),
                line: line_no,
                msg: format!("count {count_str:?} is not a number"),
            })?;
            if let Some(prev) = prev_k {
                if k <= prev {
                    return Err(Error::Parse {
                        file: file.into(),
                        line: line_no,
                        msg: format!("multiplicities must be strictly increasing ({prev} then {k})"),
                    });
                }
            }
            prev_k = Some(k);
            fof.add(k, count).map_err(|e| Error::Parse {
                file: file.into(),
                line: line_no,
                msg: e.to_string(),
            })?;
        }
        Ok(fof)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::reading(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,count\n");
        for (k, n) in self.iter() {
            let _ = writeln!(out, "{k},{n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_totals() {
        let fof = FrequencyOfFrequencies::from_pairs([(1, 10.0), (2, 5.0), (3, 85.0)]).unwrap();
        assert_eq!(fof.observed_units(), 100.0);
        assert_eq!(fof.sample_size(), 10.0 + 10.0 + 255.0);
        assert_eq!(fof.max_multiplicity(), 3);
        let tails = fof.tail_sums();
        assert_eq!(&tails[1..], &[100.0, 90.0, 85.0]);
    }

    #[test]
    fn tabulation_ignores_zeros() {
        let fof = FrequencyOfFrequencies::from_observations(&[0, 1, 1, 2, 0]);
        assert_eq!(fof.count(1), 2.0);
        assert_eq!(fof.count(2), 1.0);
        assert_eq!(fof.observed_units(), 3.0);
    }

    #[test]
    fn csv_round_trip() {
        let fof = FrequencyOfFrequencies::from_pairs([(1, 2.0), (4, 0.5)]).unwrap();
        let csv = fof.to_csv();
        let back = FrequencyOfFrequencies::parse_csv(&csv, "mem").unwrap();
        assert_eq!(back, fof);
    }

    #[test]
    fn csv_rejects_bad_inputs() {
        assert!(FrequencyOfFrequencies::parse_csv("x,count\n1,2\n", "f").is_err());
        assert!(FrequencyOfFrequencies::parse_csv("k,count\n2,1\n1,3\n", "f").is_err());
        assert!(FrequencyOfFrequencies::parse_csv("k,count\n0,1\n", "f").is_err());
        assert!(FrequencyOfFrequencies::parse_csv("k,count\n1,-3\n", "f").is_err());
        let err = FrequencyOfFrequencies::parse_csv("k,count\n1,1\nbogus\n", "f").unwrap_err();
        assert!(err.to_string().contains("f:3"));
    }

    #[test]
    fn invalid_keys_rejected() {
        let mut fof = FrequencyOfFrequencies::new();
        assert!(fof.add(0, 1.0).is_err());
        assert!(fof.add(1, f64::NAN).is_err());
        assert!(fof.add(1, -1.0).is_err());
    }
}
