//! Undirected simple graphs, edge-list ingestion, degree partitions,
//! sampling from the sparse beta-model and eigenvector centrality.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Result, SbmError};
use crate::likelihood::SbmParams;
use crate::math::{sigmoid, unrank_pair};

/// Undirected simple graph on nodes `0..n`.
///
/// Edges are stored canonically as `(u, v)` with `u < v`, sorted. Degree
/// statistics are cached at construction; the value is immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    degrees: Vec<usize>,
}

impl Graph {
    /// Builds a graph, rejecting self loops, out-of-range ids and duplicates.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(SbmError::InvalidGraph("graph needs at least one node".into()));
        }
        let mut canon = Vec::new();
        for (i, (u, v)) in edges.into_iter().enumerate() {
            let line = i + 1;
            if u == v {
                return Err(SbmError::SelfLoop { line, node: u });
            }
            for id in [u, v] {
                if id >= n {
                    return Err(SbmError::NodeOutOfRange { line, id, n });
                }
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            let (u, v) = w[0];
            return Err(SbmError::InvalidGraph(format!("duplicate edge {u}-{v}")));
        }
        Ok(Self::from_canonical(n, canon))
    }

    /// `edges` must be sorted, deduplicated and satisfy `u < v < n`.
    pub(crate) fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut degrees = vec![0usize; n];
        for &(u, v) in &edges {
            degrees[u] += 1;
            degrees[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degrees {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; 2 * edges.len()];
        for &(u, v) in &edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Graph {
            n,
            edges,
            offsets,
            neighbors,
            degrees,
        }
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).flat_map(|v| (0..v).map(move |u| (u, v))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total edge count `d_+`.
    pub fn d_plus(&self) -> u64 {
        self.edges.len() as u64
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Edge density `d_+ / C(n, 2)`; zero for a single node.
    pub fn density(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.d_plus() as f64 / crate::math::pairs(self.n)
        }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(SbmError::InvalidGraph("permutation length differs from n".into()));
        }
        Self::from_edges(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut head = 0;
            while head < comp.len() {
                let u = comp[head];
                head += 1;
                for &v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Serializes to the edge-list text format with an `n=` header.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(16 * self.edges.len() + 16);
        let _ = writeln!(out, "n={}", self.n);
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "{u}\t{v}");
        }
        out
    }
}

/// Parses the edge-list text format.
///
/// An optional first data line `n=<int>` fixes the node count; lines starting
/// with `#` and blank lines are skipped; every other line is `<u> <v>`.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut declared_n: Option<usize> = None;
    let mut seen_data = false;
    let mut edges = Vec::new();
    let mut dedup = HashSet::new();
    let mut max_id: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("n=").or_else(|| {
            trimmed
                .strip_prefix('n')
                .map(str::trim_start)
                .and_then(|r| r.strip_prefix('='))
        }) {
            if seen_data {
                return Err(SbmError::Parse {
                    line,
                    message: "node-count header must precede edges".into(),
                });
            }
            let n = rest.trim().parse::<usize>().map_err(|e| SbmError::Parse {
                line,
                message: format!("bad node count: {e}"),
            })?;
            declared_n = Some(n);
            seen_data = true;
            continue;
        }
        seen_data = true;
        let mut fields = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(SbmError::Parse {
                line,
                message: format!("expected two node ids, got {trimmed:?}"),
            });
        };
        let parse_id = |s: &str| {
            s.parse::<usize>().map_err(|e| SbmError::Parse {
                line,
                message: format!("bad node id {s:?}: {e}"),
            })
        };
        let (u, v) = (parse_id(a)?, parse_id(b)?);
        if u == v {
            return Err(SbmError::SelfLoop { line, node: u });
        }
        if let Some(n) = declared_n {
            for id in [u, v] {
                if id >= n {
                    return Err(SbmError::NodeOutOfRange { line, id, n });
                }
            }
        }
        let key = (u.min(v), u.max(v));
        if !dedup.insert(key) {
            return Err(SbmError::DuplicateEdge {
                line,
                u: key.0,
                v: key.1,
            });
        }
        max_id = Some(max_id.map_or(key.1, |m: usize| m.max(key.1)));
        edges.push(key);
    }

    let n = match (declared_n, max_id) {
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => {
            return Err(SbmError::InvalidGraph(
                "edge list is empty and declares no node count".into(),
            ))
        }
    };
    if n == 0 {
        return Err(SbmError::InvalidGraph("graph needs at least one node".into()));
    }
    edges.sort_unstable();
    Ok(Graph::from_canonical(n, edges))
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SbmError::io(path, e))?;
    parse_edge_list(&text)
}

/// External labels for dense node ids, read from a sidecar of
/// `<dense id> <label>` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels {
    labels: Vec<String>,
}

impl NodeLabels {
    pub fn identity(n: usize) -> Self {
        NodeLabels {
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let mut labels: Vec<Option<String>> = vec![None; n];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.splitn(2, char::is_whitespace);
            let id = fields.next().unwrap_or_default();
            let label = fields.next().map(str::trim).unwrap_or_default();
            let id: usize = id.parse().map_err(|e| SbmError::Parse {
                line,
                message: format!("bad node id {id:?}: {e}"),
            })?;
            if id >= n {
                return Err(SbmError::NodeOutOfRange { line, id, n });
            }
            if label.is_empty() {
                return Err(SbmError::Parse {
                    line,
                    message: "missing label".into(),
                });
            }
            labels[id] = Some(label.to_string());
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, l)| l.unwrap_or_else(|| i.to_string()))
            .collect();
        Ok(NodeLabels { labels })
    }

    pub fn load(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SbmError::io(path, e))?;
        Self::parse(&text, n)
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }
}

/// Nodes grouped by distinct degree, largest degree first.
///
/// `cumulative` holds the admissible sparsity levels `s_1, s_1 + s_2, ...`,
/// excluding the total `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreePartition {
    pub distinct: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub sizes: Vec<usize>,
    pub cumulative: Vec<usize>,
}

impl DegreePartition {
    pub fn m(&self) -> usize {
        self.distinct.len()
    }

    /// Union of the first groups whose sizes add up to exactly `s`, sorted.
    pub fn support_for_level(&self, s: usize) -> Option<Vec<usize>> {
        if s == 0 {
            return Some(Vec::new());
        }
        let k = self.cumulative.iter().position(|&c| c == s)?;
        let mut support: Vec<usize> = self.groups[..=k].iter().flatten().copied().collect();
        support.sort_unstable();
        Some(support)
    }

    /// Admissible levels not exceeding `cap`.
    pub fn levels_up_to(&self, cap: usize) -> impl Iterator<Item = usize> + '_ {
        self.cumulative.iter().copied().take_while(move |&c| c <= cap)
    }
}

pub fn degree_partition(g: &Graph) -> DegreePartition {
    let mut by_degree: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &d) in g.degrees().iter().enumerate() {
        by_degree.entry(d).or_default().push(i);
    }
    let mut distinct = Vec::with_capacity(by_degree.len());
    let mut groups = Vec::with_capacity(by_degree.len());
    for (d, nodes) in by_degree.into_iter().rev() {
        distinct.push(d);
        groups.push(nodes);
    }
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let mut cumulative = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut acc = 0;
    for &s in sizes.iter().take(sizes.len().saturating_sub(1)) {
        acc += s;
        cumulative.push(acc);
    }
    DegreePartition {
        distinct,
        groups,
        sizes,
        cumulative,
    }
}

/// Homogeneous blocks with more pairs than this are sampled as a binomial
/// count followed by a uniform choice of distinct pairs.
pub const BLOCK_SAMPLING_THRESHOLD: u64 = 10_000;

/// Draws a graph from the sparse beta-model; deterministic in `seed`.
pub fn sample_sbm(params: &SbmParams, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_sbm_with(params, &mut rng, BLOCK_SAMPLING_THRESHOLD)
}

/// Sampling with an explicit generator and block threshold.
///
/// Pairs touching the support are drawn one Bernoulli at a time. The pairs
/// with both endpoints off the support share the probability
/// `logistic(mu)`; when there are more than `block_threshold` of them they are
/// drawn as `K ~ Bin(C(r, 2), p)` followed by `K` distinct pairs chosen
/// uniformly, which has the same law as independent per-pair draws.
pub fn sample_sbm_with<R: Rng + ?Sized>(params: &SbmParams, rng: &mut R, block_threshold: u64) -> Graph {
    let n = params.n();
    let beta = params.beta();
    let mu = params.mu();
    let support = params.support();
    let mut in_support = vec![false; n];
    for &i in support {
        in_support[i] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&i| !in_support[i]).collect();

    let mut edges = Vec::new();
    for (a, &i) in support.iter().enumerate() {
        for &j in &support[a + 1..] {
            if rng.random::<f64>() < sigmoid(mu + beta[i] + beta[j]) {
                edges.push((i.min(j), i.max(j)));
            }
        }
        let p = sigmoid(mu + beta[i]);
        for &j in &outside {
            if rng.random::<f64>() < p {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }

    let r = outside.len() as u64;
    let block = r * r.saturating_sub(1) / 2;
    let p = sigmoid(mu);
    if block > block_threshold {
        let k = Binomial::new(block, p)
            .expect("logistic probability lies in [0, 1]")
            .sample(rng);
        if k == block {
            for b in 1..outside.len() {
                for a in 0..b {
                    edges.push((outside[a], outside[b]));
                }
            }
        } else if k > 0 {
            for idx in index::sample(rng, block as usize, k as usize) {
                let (a, b) = unrank_pair(idx as u64);
                let (u, v) = (outside[a as usize], outside[b as usize]);
                edges.push((u.min(v), u.max(v)));
            }
        }
    } else {
        for b in 1..outside.len() {
            for a in 0..b {
                if rng.random::<f64>() < p {
                    edges.push((outside[a], outside[b]));
                }
            }
        }
    }

    edges.sort_unstable();
    Graph::from_canonical(n, edges)
}

/// Principal eigenvector of the adjacency matrix, scaled to Euclidean norm `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenvectorCentrality {
    pub scores: Vec<f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
    /// False when several connected components share the top eigenvalue, in
    /// which case the returned vector depends on the starting point.
    pub unique: bool,
}

const POWER_ITERATION_CAP: usize = 200_000;

pub fn eigenvector_centrality(g: &Graph, tol: f64) -> Result<EigenvectorCentrality> {
    if g.d_plus() == 0 {
        return Err(SbmError::NoEdges);
    }
    let all: Vec<usize> = (0..g.n()).collect();
    let (x, lambda, iterations, residual) = power_iterate(g, &all, tol)?;

    let components = g.connected_components();
    let unique = if components.len() == 1 {
        true
    } else {
        let mut top = 0;
        for comp in components.iter().filter(|c| c.len() > 1) {
            let (_, l, _, _) = power_iterate(g, comp, tol)?;
            if (l - lambda).abs() <= 1e-8 * lambda.max(1.0) {
                top += 1;
            }
        }
        top <= 1
    };

    let scale = g.n() as f64;
    let scores = all.iter().map(|&i| x[i] * scale).collect();
    Ok(EigenvectorCentrality {
        scores,
        eigenvalue: lambda,
        iterations,
        residual,
        unique,
    })
}

/// Power iteration on `A + I` restricted to `nodes`, which must be closed
/// under adjacency. Returns a unit vector indexed by global node id.
fn power_iterate(g: &Graph, nodes: &[usize], tol: f64) -> Result<(Vec<f64>, f64, usize, f64)> {
    let n = g.n();
    let mut x = vec![0.0; n];
    let init = 1.0 / (nodes.len() as f64).sqrt();
    for &i in nodes {
        x[i] = init;
    }
    let mut ax = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_ITERATION_CAP {
        for &i in nodes {
            ax[i] = g.neighbors(i).iter().map(|&j| x[j]).sum();
        }
        let lambda: f64 = nodes.iter().map(|&i| x[i] * ax[i]).sum();
        residual = nodes
            .iter()
            .map(|&i| (ax[i] - lambda * x[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            return Ok((x, lambda, it, residual));
        }
        // the unit shift keeps -lambda from competing on bipartite graphs
        let norm = nodes.iter().map(|&i| (ax[i] + x[i]).powi(2)).sum::<f64>().sqrt();
        for &i in nodes {
            x[i] = (ax[i] + x[i]) / norm;
        }
    }
    Err(SbmError::NoConvergence {
        iterations: POWER_ITERATION_CAP,
        residual,
    })
}
