//! Disclosure-risk estimation for frequency tables released from a sample:
//! the expected identifiability of sample-unique records, per cell and
//! globally, under Poisson, negative-binomial and heavy-tailed population
//! models.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::series::{expect_truncated, pairwise_sum, SeriesOpts, Tail};
use crate::special::ln_factorial;

/// One table cell: sample frequency, cell probability (absent when it is to
/// be fitted), and the sampling fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub id: String,
    pub x: u64,
    pub pi: Option<f64>,
    pub p: f64,
}

impl CellRecord {
    pub fn new(id: impl Into<String>, x: u64, pi: Option<f64>, p: f64) -> Result<Self> {
        if let Some(pi) = pi {
            if !(pi > 0.0 && pi < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "cell probability {pi} must lie in (0,1)"
                )));
            }
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "sampling fraction {p} must lie in [0,1]"
            )));
        }
        Ok(CellRecord {
            id: id.into(),
            x,
            pi,
            p,
        })
    }
}

/// Population-size model for the unreleased counts.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationModel {
    Poisson { lambda: f64 },
    NegBin { alpha: f64, beta: f64 },
    MuArgus,
}

/// The loss whose expectation defines the per-cell risk.
#[derive(Clone)]
pub enum RiskUtility {
    /// u(x, y) = 1{x = 1} / y: a sample unique is risky when it is also
    /// population-rare.
    InverseYAtOne,
    /// u(x, y) = 1{x <= a} / y, with u(x, 0) = 0 (an empty cell carries no
    /// risk).
    InverseYAtMost { a: u64 },
    /// Arbitrary u(x, y) with declared polynomial growth in y.
    Generic {
        u: Arc<dyn Fn(u64, u64) -> f64 + Send + Sync>,
        degree: f64,
    },
}

impl std::fmt::Debug for RiskUtility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RiskUtility::InverseYAtOne => f.write_str("InverseYAtOne"),
            RiskUtility::InverseYAtMost { a } => write!(f, "InverseYAtMost({a})"),
            RiskUtility::Generic { degree, .. } => write!(f, "Generic(degree {degree})"),
        }
    }
}

/// `E[1/(x+Z)]`-style expectation closed form for x = 1:
/// `(1 - exp(-mu)) / mu`, continuous at zero.
fn unique_risk_closed_form(mu: f64) -> f64 {
    if mu < 1e-12 {
        1.0
    } else {
        -(-mu).exp_m1() / mu
    }
}

/// Expected loss for one cell when the unseen remainder of the cell is
/// Poisson with mean `mu = (1-p) pi lambda` given the sample count.
pub fn risk_poisson_cell(cell: &CellRecord, lambda: f64, kind: &RiskUtility) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "population mean {lambda} must be positive and finite"
        )));
    }
    let pi = cell.pi.ok_or_else(|| {
        Error::InvalidInput(format!("cell {} has no cell probability", cell.id))
    })?;
    let mu = (1.0 - cell.p) * pi * lambda;
    let x = cell.x;
    match kind {
        RiskUtility::InverseYAtOne => {
            Ok(if x == 1 { unique_risk_closed_form(mu) } else { 0.0 })
        }
        RiskUtility::InverseYAtMost { a } => {
            if x > *a {
                return Ok(0.0);
            }
            let g = move |y: u64| if y == 0 { 0.0 } else { 1.0 / y as f64 };
            poisson_expectation(move |z| g(x + z), mu, 1.0, 0.0)
        }
        RiskUtility::Generic { u, degree } => {
            let u = Arc::clone(u);
            poisson_expectation(move |z| u(x, x + z), mu, f64::INFINITY, *degree)
        }
    }
}

/// `E h(Z)` for Z ~ Poisson(mu). `h_sup` finite selects the bounded tail
/// rule; otherwise the declared polynomial degree bounds the tail.
fn poisson_expectation(
    h: impl Fn(u64) -> f64,
    mu: f64,
    h_sup: f64,
    degree: f64,
) -> Result<f64> {
    if mu < 1e-300 {
        return Ok(h(0));
    }
    let log_mu = mu.ln();
    let pmf = move |z: u64| (-mu + z as f64 * log_mu - ln_factorial(z)).exp();
    let ratio = move |z: u64| mu / (z as f64 + 1.0);
    let tail = if h_sup.is_finite() {
        Tail::Bounded { h_sup }
    } else {
        Tail::Geometric {
            pmf_ratio_from: &ratio,
            h_degree: degree,
        }
    };
    Ok(expect_truncated(h, pmf, tail, SeriesOpts::default())?.value)
}

/// Expected loss for one cell under the negative-binomial population model,
/// where the unseen remainder given a sample unique has a negative-binomial
/// law. Closed form:
///
/// `(1 + p b) / ((1-p) b) * (1 - q^a) / a` at x = 1, `q = (1+p b)/(1+b)`,
///
/// continuous in the shape (small shapes take the `-log q` limit).
pub fn risk_nb_cell(cell: &CellRecord, alpha: f64, beta_j: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite() && beta_j > 0.0 && beta_j.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "shape {alpha} and cell scale {beta_j} must be positive and finite"
        )));
    }
    let p = cell.p;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidSamplingFraction(p));
    }
    if cell.x != 1 {
        return Ok(0.0);
    }
    let prefactor = (1.0 + p * beta_j) / ((1.0 - p) * beta_j);
    // log q = log1p(p b) - log1p(b) < 0.
    let log_q = (p * beta_j).ln_1p() - beta_j.ln_1p();
    let integral = if alpha < 1e-8 {
        -log_q
    } else {
        -(alpha * log_q).exp_m1() / alpha
    };
    Ok(prefactor * integral)
}

/// The heavy-tail limit of the negative-binomial risk:
/// `p (1-p)^{-1} (-log p)` at x = 1.
pub fn risk_mu_argus(cell: &CellRecord) -> Result<f64> {
    let p = cell.p;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidSamplingFraction(p));
    }
    Ok(if cell.x == 1 {
        p / (1.0 - p) * (-p.ln())
    } else {
        0.0
    })
}

fn cell_risk(cell: &CellRecord, model: &PopulationModel, kind: &RiskUtility) -> Result<f64> {
    match model {
        PopulationModel::Poisson { lambda } => risk_poisson_cell(cell, *lambda, kind),
        PopulationModel::NegBin { alpha, beta } => {
            let pi = cell.pi.ok_or_else(|| {
                Error::InvalidInput(format!("cell {} has no cell probability", cell.id))
            })?;
            match kind {
                RiskUtility::InverseYAtOne => risk_nb_cell(cell, *alpha, beta * pi),
                _ => Err(Error::InvalidInput(
                    "the negative-binomial model only supports the sample-unique loss".into(),
                )),
            }
        }
        PopulationModel::MuArgus => match kind {
            RiskUtility::InverseYAtOne => risk_mu_argus(cell),
            _ => Err(Error::InvalidInput(
                "the heavy-tail limit only supports the sample-unique loss".into(),
            )),
        },
    }
}

/// Contingency cells laid out on a rectangular grid, for margin fitting.
#[derive(Debug, Clone)]
pub struct TwoWayTable {
    pub rows: usize,
    pub cols: usize,
    /// Row-major; ids are `row:col` (1-based).
    pub cells: Vec<CellRecord>,
}

impl TwoWayTable {
    pub fn new(rows: usize, cols: usize, cells: Vec<CellRecord>) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{rows}x{cols} table needs {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        Ok(TwoWayTable { rows, cols, cells })
    }

    pub fn sample_total(&self) -> u64 {
        self.cells.iter().map(|c| c.x).sum()
    }

    /// Product-of-margins cell probabilities from the sample counts.
    pub fn fit_independence(&self) -> Result<Vec<CellRecord>> {
        let n = self.sample_total();
        if n == 0 {
            return Err(Error::EmptySample(
                "margin fitting needs a positive sample total".into(),
            ));
        }
        let mut row_m = vec![0.0; self.rows];
        let mut col_m = vec![0.0; self.cols];
        for (idx, cell) in self.cells.iter().enumerate() {
            row_m[idx / self.cols] += cell.x as f64;
            col_m[idx % self.cols] += cell.x as f64;
        }
        let n = n as f64;
        let fitted = self
            .cells
            .iter()
            .enumerate()
            .map(|(idx, cell)| {
                let pi = (row_m[idx / self.cols] / n) * (col_m[idx % self.cols] / n);
                CellRecord {
                    id: cell.id.clone(),
                    x: cell.x,
                    pi: Some(pi.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)),
                    p: cell.p,
                }
            })
            .collect();
        Ok(fitted)
    }

    /// Parses the `row,col,x,p` CSV format into a rectangular table.
    pub fn parse_csv(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "row,col,x,p" => {}
            other => {
                return Err(Error::Parse {
                    file: file.into(),
                    line: 1,
                    msg: format!(
                        "expected header \"row,col,x,p\", got {:?}",
                        other.map(|(_, h)| h).unwrap_or("")
                    ),
                })
            }
        }
        let mut entries = Vec::new();
        let (mut rows, mut cols) = (0usize, 0usize);
        for (idx, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    file: file.into(),
                    line: idx + 1,
                    msg: format!("expected four fields, got {line:?}"),
                });
            }
            let parse_idx = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::Parse {
                        file: file.into(),
                        line: idx + 1,
                        msg: format!("index {s:?} is not a positive integer"),
                    })
            };
            let r = parse_idx(fields[0])?;
            let c = parse_idx(fields[1])?;
            let x: u64 = fields[2].parse().map_err(|_| Error::Parse {
                file: file.into(),
                line: idx + 1,
                msg: format!("count {:?} is not a non-negative integer", fields[2]),
            })?;
            let p: f64 = fields[3].parse().map_err(|_| Error::Parse {
                file: file.into(),
                line: idx + 1,
                msg: format!("sampling fraction {:?} is not a number", fields[3]),
            })?;
            rows = rows.max(r);
            cols = cols.max(c);
            entries.push((r, c, x, p));
        }
        let mut cells: Vec<Option<CellRecord>> = vec![None; rows * cols];
        for (r, c, x, p) in entries {
            let record = CellRecord::new(format!("{r}:{c}"), x, None, p).map_err(|e| {
                Error::Parse {
                    file: file.into(),
                    line: 0,
                    msg: e.to_string(),
                }
            })?;
            cells[(r - 1) * cols + (c - 1)] = Some(record);
        }
        let cells: Vec<CellRecord> = cells
            .into_iter()
            .enumerate()
            .map(|(idx, c)| {
                c.ok_or_else(|| Error::Parse {
                    file: file.into(),
                    line: 0,
                    msg: format!(
                        "cell {}:{} missing from the table",
                        idx / cols + 1,
                        idx % cols + 1
                    ),
                })
            })
            .collect::<Result<_>>()?;
        TwoWayTable::new(rows, cols, cells)
    }
}

/// Input to the global-risk estimator.
pub enum CellInput<'a> {
    Flat(&'a [CellRecord]),
    TwoWay(&'a TwoWayTable),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiFit {
    Known,
    TwoWayIndependence,
}

/// Global risk: the sum of per-cell expected losses, with cell
/// probabilities either supplied or fitted as products of the table
/// margins. The stated sampling design is reported back as a consistency
/// diagnostic (sum of p*pi against sample/population ratio), never
/// enforced.
pub fn estimate_global_risk(
    input: CellInput<'_>,
    model: &PopulationModel,
    fit_pi: PiFit,
    kind: &RiskUtility,
) -> Result<EstimateReport> {
    let cells: Vec<CellRecord> = match (fit_pi, &input) {
        (PiFit::Known, CellInput::Flat(cells)) => cells.to_vec(),
        (PiFit::Known, CellInput::TwoWay(table)) => table.cells.clone(),
        (PiFit::TwoWayIndependence, CellInput::TwoWay(table)) => table.fit_independence()?,
        (PiFit::TwoWayIndependence, CellInput::Flat(_)) => {
            return Err(Error::InvalidInput(
                "margin fitting needs a two-way table".into(),
            ))
        }
    };
    let risks: Vec<f64> = cells
        .iter()
        .map(|cell| cell_risk(cell, model, kind))
        .collect::<Result<_>>()?;
    let mut report = EstimateReport::new("risk.global", pairwise_sum(&risks));
    if let PopulationModel::Poisson { lambda } = model {
        let weighted: f64 = cells
            .iter()
            .filter_map(|c| c.pi.map(|pi| pi * c.p))
            .sum();
        let n: u64 = cells.iter().map(|c| c.x).sum();
        report.warn(format!(
            "design consistency: sum(p*pi) = {weighted:.6}, n/lambda = {:.6}",
            n as f64 / lambda
        ));
    }
    Ok(report)
}

/// Per-cell risks in the `cell_id,risk` CSV format.
pub fn risks_to_csv(cells: &[CellRecord], risks: &[f64]) -> String {
    let mut out = String::from("cell_id,risk\n");
    for (cell, risk) in cells.iter().zip(risks) {
        let _ = writeln!(out, "{},{}", cell.id, risk);
    }
    out
}

/// Parses the `cell_id,x,pi,p` CSV format; an empty pi field means the
/// probability is to be fitted or is not needed.
pub fn parse_cells_csv(text: &str, file: &str) -> Result<Vec<CellRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "cell_id,x,pi,p" => {}
        other => {
            return Err(Error::Parse {
                file: file.into(),
                line: 1,
                msg: format!(
                    "expected header \"cell_id,x,pi,p\", got {:?}",
                    other.map(|(_, h)| h).unwrap_or("")
                ),
            })
        }
    }
    let mut cells = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                file: file.into(),
                line: idx + 1,
                msg: format!("expected four fields, got {line:?}"),
            });
        }
        let x: u64 = fields[1].parse().map_err(|_| Error::Parse {
            file: file.into(),
            line: idx + 1,
            msg: format!("count {:?} is not a non-negative integer", fields[1]),
        })?;
        let pi = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse::<f64>().map_err(|_| Error::Parse {
                file: file.into(),
                line: idx + 1,
                msg: format!("cell probability {:?} is not a number", fields[2]),
            })?)
        };
        let p: f64 = fields[3].parse().map_err(|_| Error::Parse {
            file: file.into(),
            line: idx + 1,
            msg: format!("sampling fraction {:?} is not a number", fields[3]),
        })?;
        cells.push(
            CellRecord::new(fields[0], x, pi, p).map_err(|e| Error::Parse {
                file: file.into(),
                line: idx + 1,
                msg: e.to_string(),
            })?,
        );
    }
    Ok(cells)
}

pub fn read_cells_csv(path: &Path) -> Result<Vec<CellRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::reading(path, e))?;
    parse_cells_csv(&text, &path.display().to_string())
}
