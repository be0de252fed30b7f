//! Connection matrices `T_ij` between oscillators.
//!
//! An entry `(i, j)` means oscillator `i` receives from (and is coupled
//! to) oscillator `j`. The matrix is stored sparsely as a sorted edge list
//! plus per-row neighbour lists.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

/// Signed communication distances shared by every process, e.g. `{+1, -1}`
/// for next-neighbour exchange or `{+1, -1, -2}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceSet {
    pub distances: Vec<i64>,
    #[serde(default)]
    pub boundary: Boundary,
}

impl DistanceSet {
    pub fn new(distances: impl Into<Vec<i64>>, boundary: Boundary) -> Self {
        Self { distances: distances.into(), boundary }
    }

    pub fn periodic(distances: impl Into<Vec<i64>>) -> Self {
        Self::new(distances, Boundary::Periodic)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.distances.is_empty() {
            return Err(Error::Config("distance set is empty".into()));
        }
        for &d in &self.distances {
            if d == 0 {
                return Err(Error::Config("communication distance 0 is not allowed".into()));
            }
            if d.unsigned_abs() >= n as u64 {
                return Err(Error::Config(format!(
                    "communication distance {d} must satisfy |d| < n = {n}"
                )));
            }
        }
        Ok(())
    }

    /// Sum of |d| over distinct distances.
    pub fn kappa_sum(&self) -> f64 {
        self.unique().iter().map(|d| d.unsigned_abs() as f64).sum()
    }

    /// Largest |d|.
    pub fn kappa_max(&self) -> f64 {
        self.distances.iter().map(|d| d.unsigned_abs()).max().unwrap_or(0) as f64
    }

    fn unique(&self) -> Vec<i64> {
        self.distances.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    n: usize,
    edges: Vec<(usize, usize)>,
    rows: Vec<Vec<usize>>,
    distances: Option<DistanceSet>,
}

impl Topology {
    fn from_edge_set(n: usize, edges: BTreeSet<(usize, usize)>, distances: Option<DistanceSet>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(i, j) in &edges {
            rows[i].push(j);
        }
        Self { n, edges: edges.into_iter().collect(), rows, distances }
    }

    /// `T_ij = 1` iff `j = i + d` for some `d` in the set, wrapping on a
    /// periodic boundary and dropping out-of-range partners on an open one.
    pub fn build_from_distances(n: usize, dset: &DistanceSet) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("topology needs n >= 2, got {n}")));
        }
        dset.validate(n)?;
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for &d in &dset.distances {
                let j = i as i64 + d;
                let j = match dset.boundary {
                    Boundary::Periodic => j.rem_euclid(n as i64),
                    Boundary::Open if (0..n as i64).contains(&j) => j,
                    Boundary::Open => continue,
                };
                edges.insert((i, j as usize));
            }
        }
        if edges.is_empty() {
            return Err(Error::Config("distance set produces no connections".into()));
        }
        Ok(Self::from_edge_set(n, edges, Some(dset.clone())))
    }

    pub fn build_all_to_all(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("topology needs n >= 2, got {n}")));
        }
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        Ok(Self::from_edge_set(n, edges, None))
    }

    /// Builds a topology from explicit edges. Rejects self-loops, indices
    /// out of range and duplicates.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Config(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::Config(format!("self-connection ({i}, {i}) is not allowed")));
            }
            if !set.insert((i, j)) {
                return Err(Error::Config(format!("duplicate edge ({i}, {j})")));
            }
        }
        Ok(Self::from_edge_set(n, set, None))
    }

    /// A topology with no connections at all; for uncoupled runs.
    pub fn empty(n: usize) -> Self {
        Self::from_edge_set(n, BTreeSet::new(), None)
    }

    pub fn load_from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse_edge_list(&text)
    }

    /// Parses the edge-list format: a header line `n=<N>` followed by one
    /// whitespace-separated `i j` pair per line (0-based).
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse { line: hline + 1, msg: format!("expected header `n=<N>`, got `{header}`") })?;
        let mut set = BTreeSet::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Parse { line: lineno, msg: format!("expected `i j`, got `{line}`") })
            };
            let i = parse(it.next())?;
            let j = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parse { line: lineno, msg: format!("trailing data in `{line}`") });
            }
            if i >= n || j >= n {
                return Err(Error::Parse { line: lineno, msg: format!("edge ({i}, {j}) exceeds dimension n={n}") });
            }
            if i == j {
                return Err(Error::Parse { line: lineno, msg: format!("self-loop ({i}, {i}) rejected") });
            }
            if !set.insert((i, j)) {
                return Err(Error::Parse { line: lineno, msg: format!("duplicate edge ({i}, {j})") });
            }
        }
        Ok(Self::from_edge_set(n, set, None))
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Partners `j` with `T_ij = 1`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows.get(i).is_some_and(|r| r.binary_search(&j).is_ok())
    }

    pub fn distances(&self) -> Option<&DistanceSet> {
        self.distances.as_ref()
    }

    /// Boundary of the distance description; topologies without distance
    /// metadata are treated as periodic.
    pub fn boundary(&self) -> Boundary {
        self.distances.as_ref().map(|d| d.boundary).unwrap_or_default()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.contains(j, i))
    }

    /// Same dimension and same entry set; ignores distance metadata.
    pub fn same_structure(&self, other: &Topology) -> bool {
        self.n == other.n && self.edges == other.edges
    }

    /// Undirected index-adjacent pairs `(i, i+1)` (including the wrap pair
    /// on a periodic ring) connected in at least one direction.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut pairs = Vec::new();
        for i in 0..n.saturating_sub(1) {
            if self.contains(i, i + 1) || self.contains(i + 1, i) {
                pairs.push((i, i + 1));
            }
        }
        if n > 2 && (self.contains(n - 1, 0) || self.contains(0, n - 1)) {
            pairs.push((n - 1, 0));
        }
        pairs
    }

    /// Index distance between two processes: ring metric on a periodic
    /// boundary, plain |i - j| on an open one.
    pub fn index_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        match self.boundary() {
            Boundary::Periodic => d.min(self.n - d),
            Boundary::Open => d,
        }
    }
}
