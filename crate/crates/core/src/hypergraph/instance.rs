use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::freq::FrequencyVectors;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_RETRY_CAP: u64 = 10_000;

/// A hypergraph on vertices `0..V` and edge labels `0..E`, stored as sorted
/// per-edge vertex lists and per-vertex edge lists. `scale` is the `N` used to
/// normalize frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypergraphInstance {
    scale: usize,
    edges: Vec<Vec<usize>>,
    vertex_edges: Vec<Vec<usize>>,
}

impl HypergraphInstance {
    pub fn from_edges(scale: usize, num_vertices: usize, mut edges: Vec<Vec<usize>>) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidParameter("scale N must be positive".into()));
        }
        let mut vertex_edges = vec![Vec::new(); num_vertices];
        for (e, members) in edges.iter_mut().enumerate() {
            members.sort_unstable();
            if members.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidModel(format!("edge {e} contains a vertex twice")));
            }
            for &v in members.iter() {
                if v >= num_vertices {
                    return Err(Error::InvalidModel(format!("edge {e} names vertex {v} of {num_vertices}")));
                }
                vertex_edges[v].push(e);
            }
        }
        Ok(Self {
            scale,
            edges,
            vertex_edges,
        })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_edges.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, e: usize) -> &[usize] {
        &self.edges[e]
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.vertex_edges[v].len()
    }

    pub fn weight(&self, e: usize) -> usize {
        self.edges[e].len()
    }

    pub fn incidences(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.vertex_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_weight(&self) -> usize {
        self.edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of vertices of each degree `0..=L`.
    pub fn degree_counts(&self, l: usize) -> Vec<usize> {
        let mut c = vec![0; l.max(self.max_degree()) + 1];
        for v in &self.vertex_edges {
            c[v.len()] += 1;
        }
        c
    }

    /// Number of edges of each weight `0..=L`.
    pub fn weight_counts(&self, l: usize) -> Vec<usize> {
        let mut c = vec![0; l.max(self.max_weight()) + 1];
        for e in &self.edges {
            c[e.len()] += 1;
        }
        c
    }

    /// The sub-hypergraph keeping exactly the edges with `keep[e]`; dropped
    /// edges stay as empty labels.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let edges = self
            .edges
            .iter()
            .zip(keep)
            .map(|(members, &k)| if k { members.clone() } else { Vec::new() })
            .collect();
        Self::from_edges(self.scale, self.num_vertices(), edges).expect("restriction of a valid instance")
    }

    /// Whether `self` is obtained from `other` by deleting whole edges.
    pub fn is_subhypergraph_of(&self, other: &Self) -> bool {
        self.num_vertices() == other.num_vertices()
            && self.num_edges() == other.num_edges()
            && self
                .edges
                .iter()
                .zip(&other.edges)
                .all(|(a, b)| a.is_empty() || a == b)
    }

    /// One line per edge: the edge id followed by its vertex ids. A header
    /// comment records `N`, `|V|` and `|E|`.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# scale {} vertices {} edges {}\n", self.scale, self.num_vertices(), self.num_edges());
        for (e, members) in self.edges.iter().enumerate() {
            write!(s, "{e}").unwrap();
            for v in members {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidModel(format!("edge list: {msg}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty input".into()))?
            .split_whitespace()
            .collect();
        let field = |name: &str| -> Result<usize> {
            let i = header
                .iter()
                .position(|&t| t == name)
                .ok_or_else(|| bad(format!("header lacks `{name}`")))?;
            header
                .get(i + 1)
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(format!("bad `{name}` value")))
        };
        let (scale, nv, ne) = (field("scale")?, field("vertices")?, field("edges")?);
        let mut edges = vec![Vec::new(); ne];
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace().map(|t| t.parse::<usize>());
            let e = it
                .next()
                .and_then(|r| r.ok())
                .filter(|&e| e < ne)
                .ok_or_else(|| bad(format!("bad edge id in `{line}`")))?;
            edges[e] = it
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad vertex id in `{line}`")))?;
        }
        Self::from_edges(scale, nv, edges)
    }
}

/// A generated instance and the number of rejected pairings before it.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: HypergraphInstance,
    pub retries: u64,
}

pub fn generate(freq: &FrequencyVectors, n: usize, seed: u64) -> Result<Generated> {
    generate_with_rng(freq, n, &mut rng::replica_rng(seed, 0), DEFAULT_RETRY_CAP)
}

/// Uniform sample from `G(d, w)`: vertices carry degrees in ascending order
/// and edges carry weights likewise. Half-incidences are paired with edge
/// slots by a uniform shuffle, and any pairing that puts a vertex twice into
/// one edge is discarded whole. Every simple hypergraph arises from the same
/// number `Π d(v)! Π w(e)!` of pairings, so accepted samples are uniform.
pub fn generate_with_rng<R: Rng + ?Sized>(
    freq: &FrequencyVectors,
    n: usize,
    rng: &mut R,
    retry_cap: u64,
) -> Result<Generated> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let (pc, qc) = freq.counts(n)?;
    let mut half = Vec::new();
    let mut v = 0;
    for (d, &count) in pc.iter().enumerate() {
        for _ in 0..count {
            half.extend(std::iter::repeat(v).take(d));
            v += 1;
        }
    }
    let num_vertices = v;
    let weights: Vec<usize> = qc
        .iter()
        .enumerate()
        .flat_map(|(w, &count)| std::iter::repeat(w).take(count))
        .collect();
    if half.len() != weights.iter().sum::<usize>() {
        return Err(Error::InvalidParameter(format!(
            "N p gives {} half-incidences but N q gives {}",
            half.len(),
            weights.iter().sum::<usize>()
        )));
    }
    let mut retries = 0;
    let mut chunk = Vec::new();
    'attempt: loop {
        half.shuffle(rng);
        let mut offset = 0;
        for &w in &weights {
            chunk.clear();
            chunk.extend_from_slice(&half[offset..offset + w]);
            chunk.sort_unstable();
            if chunk.windows(2).any(|p| p[0] == p[1]) {
                retries += 1;
                if retries > retry_cap {
                    return Err(Error::RetryCapExceeded { retries: retry_cap });
                }
                continue 'attempt;
            }
            offset += w;
        }
        break;
    }
    let mut offset = 0;
    let edges = weights
        .iter()
        .map(|&w| {
            let e = half[offset..offset + w].to_vec();
            offset += w;
            e
        })
        .collect();
    Ok(Generated {
        instance: HypergraphInstance::from_edges(n, num_vertices, edges)?,
        retries,
    })
}

/// The k-core: repeatedly delete every edge that contains a vertex of degree
/// in `1..k`.
pub fn k_core(h: &HypergraphInstance, k: usize) -> Result<HypergraphInstance> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} must be at least 2")));
    }
    let mut deg: Vec<usize> = (0..h.num_vertices()).map(|v| h.degree(v)).collect();
    let mut alive = vec![true; h.num_edges()];
    let mut stack: Vec<usize> = (0..h.num_vertices()).filter(|&v| deg[v] > 0 && deg[v] < k).collect();
    while let Some(v) = stack.pop() {
        if deg[v] == 0 || deg[v] >= k {
            continue;
        }
        for &e in h.vertex_edges(v) {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            for &u in h.edge(e) {
                deg[u] -= 1;
                if deg[u] > 0 && deg[u] < k {
                    stack.push(u);
                }
            }
        }
    }
    Ok(h.restrict(&alive))
}

/// Every terminal hypergraph reachable by deleting, in any order, the edges
/// of some vertex of degree in `1..k`. Exhaustive over the reachable edge
/// subsets, so only for small instances (at most 24 edges).
pub fn terminal_cores_exhaustive(h: &HypergraphInstance, k: usize) -> Result<Vec<HypergraphInstance>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k = {k} must be at least 2")));
    }
    let ne = h.num_edges();
    if ne > 24 {
        return Err(Error::InvalidParameter(format!("{ne} edges is too many for exhaustive search")));
    }
    let full: u32 = if ne == 32 { u32::MAX } else { (1u32 << ne) - 1 };
    let mut seen = HashSet::new();
    let mut terminal = BTreeSet::new();
    let mut stack = vec![full];
    seen.insert(full);
    while let Some(mask) = stack.pop() {
        let mut deg = vec![0usize; h.num_vertices()];
        for e in (0..ne).filter(|&e| mask >> e & 1 == 1) {
            for &v in h.edge(e) {
                deg[v] += 1;
            }
        }
        let mut any = false;
        for v in (0..h.num_vertices()).filter(|&v| deg[v] > 0 && deg[v] < k) {
            any = true;
            let next = h.vertex_edges(v).iter().fold(mask, |m, &e| m & !(1u32 << e));
            if seen.insert(next) {
                stack.push(next);
            }
        }
        if !any {
            terminal.insert(mask);
        }
    }
    Ok(terminal
        .into_iter()
        .map(|mask| {
            let keep: Vec<bool> = (0..ne).map(|e| mask >> e & 1 == 1).collect();
            h.restrict(&keep)
        })
        .collect())
}
