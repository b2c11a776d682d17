//! Node out-degree estimation from sampled directed paths.
//!
//! A routing table lists the paths a probe can take; sampling
//! source-destination pairs reveals only the links that sampled paths
//! happen to use, so observed degrees undercount true degrees. Per-node
//! link-count frequency tables turn this into a family of species-style
//! problems that can be attacked node by node or pooled across nodes.

pub mod em;
pub mod estimate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::fof::FrequencyOfFrequencies;
use crate::rng::StreamRng;

/// Directed paths over nodes 1..=node_count.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    paths: Vec<Vec<u32>>,
    node_count: u32,
}

impl RoutingTable {
    pub fn new(paths: Vec<Vec<u32>>, node_count: u32) -> Result<Self> {
        for (i, path) in paths.iter().enumerate() {
            if path.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "path {} has fewer than two nodes",
                    i + 1
                )));
            }
            for pair in path.windows(2) {
                if pair[0] == pair[1] {
                    return Err(Error::InvalidInput(format!(
                        "path {} repeats node {} consecutively",
                        i + 1,
                        pair[0]
                    )));
                }
            }
            if let Some(&bad) = path.iter().find(|&&v| v == 0 || v > node_count) {
                return Err(Error::InvalidInput(format!(
                    "path {} references node {bad} outside 1..={node_count}",
                    i + 1
                )));
            }
        }
        Ok(RoutingTable { paths, node_count })
    }

    /// Parses the plain-text format: one path per line, whitespace-separated
    /// node ids, `#` starts a comment. The node count is the largest id seen.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut paths = Vec::new();
        let mut max_node = 0u32;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut path = Vec::new();
            for token in line.split_whitespace() {
                let id: u32 = token.parse().map_err(|_| Error::Parse {
                    file: file.into(),
                    line: idx + 1,
                    msg: format!("node id {token:?} is not a positive integer"),
                })?;
                if id == 0 {
                    return Err(Error::Parse {
                        file: file.into(),
                        line: idx + 1,
                        msg: "node ids start at 1".into(),
                    });
                }
                max_node = max_node.max(id);
                path.push(id);
            }
            paths.push(path);
        }
        Self::new(paths, max_node).map_err(|e| Error::Parse {
            file: file.into(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::reading(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for path in &self.paths {
            let ids: Vec<String> = path.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", ids.join(" "));
        }
        out
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    /// Distinct directed links of one path.
    fn links_of(path: &[u32]) -> BTreeSet<(u32, u32)> {
        path.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Number of paths using each link.
    pub fn link_usage(&self) -> BTreeMap<(u32, u32), u64> {
        let mut usage = BTreeMap::new();
        for path in &self.paths {
            for link in Self::links_of(path) {
                *usage.entry(link).or_insert(0) += 1;
            }
        }
        usage
    }
}

/// True node degrees: distinct outgoing (or, transposed, incoming) links
/// used by at least one path.
pub fn true_out_degrees(rt: &RoutingTable, in_degree: bool) -> Vec<u64> {
    let mut degrees = vec![0u64; rt.node_count() as usize];
    for (&(from, to), _) in rt.link_usage().iter() {
        let node = if in_degree { to } else { from };
        degrees[(node - 1) as usize] += 1;
    }
    degrees
}

/// Observed link frequencies from a sample of source-destination pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkCounts {
    counts: BTreeMap<(u32, u32), u64>,
    sample_size: u64,
    node_count: u32,
}

impl LinkCounts {
    pub fn counts(&self) -> &BTreeMap<(u32, u32), u64> {
        &self.counts
    }

    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    /// Parses the `k,l,count` CSV format.
    pub fn parse_csv(text: &str, file: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "k,l,count" => {}
            other => {
                return Err(Error::Parse {
                    file: file.into(),
                    line: 1,
                    msg: format!(
                        "expected header \"k,l,count\", got {:?}",
                        other.map(|(_, h)| h).unwrap_or("")
                    ),
                })
            }
        }
        let mut counts = BTreeMap::new();
        let mut node_count = 0u32;
        let mut sample_size = 0u64;
        for (idx, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    file: file.into(),
                    line: idx + 1,
                    msg: format!("expected three fields, got {line:?}"),
                });
            }
            let parse_node = |s: &str| -> Result<u32> {
                s.parse::<u32>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::Parse {
                        file: file.into(),
                        line: idx + 1,
                        msg: format!("node id {s:?} is not a positive integer"),
                    })
            };
            let from = parse_node(fields[0])?;
            let to = parse_node(fields[1])?;
            let count: u64 = fields[2].parse().map_err(|_| Error::Parse {
                file: file.into(),
                line: idx + 1,
                msg: format!("count {:?} is not a non-negative integer", fields[2]),
            })?;
            node_count = node_count.max(from).max(to);
            sample_size = sample_size.max(count);
            if count > 0 {
                counts.insert((from, to), count);
            }
        }
        Ok(LinkCounts {
            counts,
            sample_size,
            node_count,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,l,count\n");
        for (&(from, to), &count) in &self.counts {
            let _ = writeln!(out, "{from},{to},{count}");
        }
        out
    }
}

/// Draws `n` paths uniformly with replacement and tallies, per link, how
/// many sampled paths used it. Deterministic given the stream.
pub fn simulate_sd_sample(rt: &RoutingTable, n: u64, mut rng: StreamRng) -> Result<LinkCounts> {
    if n > 0 && rt.path_count() == 0 {
        return Err(Error::EmptyTable);
    }
    let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for _ in 0..n {
        let idx = rng.random_range(0..rt.path_count());
        for link in RoutingTable::links_of(&rt.paths[idx]) {
            *counts.entry(link).or_insert(0) += 1;
        }
    }
    Ok(LinkCounts {
        counts,
        sample_size: n,
        node_count: rt.node_count(),
    })
}

/// Per-node summary of the sampled link counts: the frequency table of the
/// positive counts, the observed degree, and (when the routing table is
/// supplied) the number of used-but-unseen links.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub node: u32,
    pub fof: FrequencyOfFrequencies,
    pub unobserved: Option<u64>,
}

impl NodeTable {
    pub fn observed_degree(&self) -> f64 {
        self.fof.observed_units()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFrequencyTables {
    tables: Vec<NodeTable>,
}

impl NodeFrequencyTables {
    pub fn from_tables(tables: Vec<NodeTable>) -> Self {
        NodeFrequencyTables { tables }
    }

    pub fn node_count(&self) -> u32 {
        self.tables.len() as u32
    }

    pub fn tables(&self) -> &[NodeTable] {
        &self.tables
    }

    pub fn observed_degrees(&self) -> Vec<f64> {
        self.tables.iter().map(|t| t.observed_degree()).collect()
    }

    /// Nodes with at least one observed link, in node order.
    pub fn populated(&self) -> Vec<&NodeTable> {
        self.tables
            .iter()
            .filter(|t| t.observed_degree() > 0.0)
            .collect()
    }
}

/// Tabulates link counts into per-node frequency tables and observed
/// degrees. With the routing table available, also reports each node's
/// unobserved degree for oracle use.
pub fn tabulate(counts: &LinkCounts, rt: Option<&RoutingTable>) -> NodeFrequencyTables {
    let node_count = rt.map(|r| r.node_count()).unwrap_or(counts.node_count());
    let mut per_node: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); node_count as usize];
    for (&(from, _to), &count) in counts.counts() {
        if count > 0 {
            *per_node[(from - 1) as usize].entry(count).or_insert(0.0) += 1.0;
        }
    }
    let missing = rt.map(|r| {
        let mut miss = vec![0u64; node_count as usize];
        for (&(from, to), _) in r.link_usage().iter() {
            if counts.counts().get(&(from, to)).copied().unwrap_or(0) == 0 {
                miss[(from - 1) as usize] += 1;
            }
        }
        miss
    });
    let tables = per_node
        .into_iter()
        .enumerate()
        .map(|(i, entries)| NodeTable {
            node: i as u32 + 1,
            fof: FrequencyOfFrequencies::from_pairs(entries).expect("counts are valid"),
            unobserved: missing.as_ref().map(|m| m[i]),
        })
        .collect();
    NodeFrequencyTables { tables }
}
