//! Weighted directed hypergraphs with a distinguished first vertex.
//!
//! An order-`m` edge `(i, j_1, ..., j_m)` stores the joint influence of the
//! tail `j_1..j_m` on the head `i`. Tails are ordered tuples: an unordered
//! community of `m` other vertices appears once per ordering, so normalized
//! weights carry the `1/m!` factor explicitly.

pub mod format;
mod generate;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate, Family};

/// Weight normalization applied to an adjacency structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Convention {
    /// Divide by `m!` times the average in-degree of order `m`.
    One,
    /// Divide by `m!` times the head's own in-degree of order `m`.
    Two,
    /// Weights were supplied directly (expected-weight families, reduced graphs).
    Explicit,
}

impl Convention {
    pub fn label(self) -> &'static str {
        match self {
            Convention::One => "1",
            Convention::Two => "2",
            Convention::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "one" | "convention1" => Ok(Convention::One),
            "2" | "two" | "convention2" => Ok(Convention::Two),
            "explicit" | "0" => Ok(Convention::Explicit),
            other => Err(Error::Parameter(format!("unknown convention `{other}`"))),
        }
    }
}

pub(crate) fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// One adjacency entry `a_{head, tail}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEdge {
    pub head: usize,
    pub tail: Vec<usize>,
    pub multiplicity: f64,
}

/// Unnormalized adjacency indicators (or multiplicities) per order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHypergraph {
    n_vertices: usize,
    max_order: usize,
    edges: Vec<Vec<RawEdge>>,
}

impl RawHypergraph {
    pub fn new(n_vertices: usize, max_order: usize) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::Structural("a hypergraph needs at least one vertex".into()));
        }
        if max_order == 0 {
            return Err(Error::Structural("max order must be at least 1".into()));
        }
        Ok(RawHypergraph {
            n_vertices,
            max_order,
            edges: vec![Vec::new(); max_order],
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Edges of order `m` (1-based).
    pub fn edges(&self, m: usize) -> &[RawEdge] {
        &self.edges[m - 1]
    }

    /// Adds the ordered entry `a_{head, tail} += multiplicity`.
    pub fn add_edge(&mut self, head: usize, tail: &[usize], multiplicity: f64) -> Result<()> {
        let m = tail.len();
        if m == 0 || m > self.max_order {
            return Err(Error::Structural(format!(
                "edge order {m} outside 1..={}",
                self.max_order
            )));
        }
        if head >= self.n_vertices || tail.iter().any(|&j| j >= self.n_vertices) {
            return Err(Error::Structural(format!(
                "vertex index out of range in edge ({head}, {tail:?}) with N = {}",
                self.n_vertices
            )));
        }
        if m == 1 && tail[0] == head {
            return Err(Error::Structural(format!("loop ({head}, {head}) is not allowed")));
        }
        if !(multiplicity.is_finite() && multiplicity >= 0.0) {
            return Err(Error::Structural(format!(
                "edge multiplicity must be finite and nonnegative, got {multiplicity}"
            )));
        }
        self.edges[m - 1].push(RawEdge {
            head,
            tail: tail.to_vec(),
            multiplicity,
        });
        Ok(())
    }

    /// Adds both directions of a graph edge.
    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.add_edge(a, &[b], 1.0)?;
        self.add_edge(b, &[a], 1.0)
    }

    /// Adds a symmetric community: every member becomes a head, and every
    /// ordering of the remaining members becomes one of its tails.
    pub fn add_hyperedge(&mut self, members: &[usize]) -> Result<()> {
        if members.len() < 2 {
            return Err(Error::Structural("a hyperedge needs at least two members".into()));
        }
        for (k, &a) in members.iter().enumerate() {
            if members[k + 1..].contains(&a) {
                return Err(Error::Structural(format!(
                    "hyperedge {members:?} repeats vertex {a}"
                )));
            }
        }
        for (pos, &head) in members.iter().enumerate() {
            let mut rest: Vec<usize> = members
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != pos)
                .map(|(_, &v)| v)
                .collect();
            rest.sort_unstable();
            loop {
                self.add_edge(head, &rest, 1.0)?;
                if !next_permutation(&mut rest) {
                    break;
                }
            }
        }
        Ok(())
    }

    /// In-degrees `d^{(m)}(i) = (1/m!) Σ_j a_{i,j}`, indexed `[m-1][i]`.
    pub fn in_degrees(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_vertices]; self.max_order];
        for (mi, edges) in self.edges.iter().enumerate() {
            let fact = factorial(mi + 1);
            for e in edges {
                d[mi][e.head] += e.multiplicity;
            }
            d[mi].iter_mut().for_each(|x| *x /= fact);
        }
        d
    }
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Applies a normalization convention to adjacency data.
///
/// Zero denominators (no `m`-edges at all, or a head without `m`-edges under
/// Convention 2) give zero weights.
pub fn normalize(raw: &RawHypergraph, convention: Convention) -> Result<WeightedHypergraph> {
    if convention == Convention::Explicit {
        return Err(Error::Parameter(
            "normalize takes Convention::One or Convention::Two".into(),
        ));
    }
    let n = raw.n_vertices;
    let degrees = raw.in_degrees();
    let mut builder = HypergraphBuilder::new(n, raw.max_order, convention);
    for (mi, edges) in raw.edges.iter().enumerate() {
        let m = mi + 1;
        let fact = factorial(m);
        let d_bar = degrees[mi].iter().sum::<f64>() / n as f64;
        for e in edges {
            let denom = match convention {
                Convention::One => d_bar,
                _ => degrees[mi][e.head],
            };
            if denom > 0.0 && e.multiplicity > 0.0 {
                builder.push(e.head, &e.tail, e.multiplicity / (fact * denom))?;
            }
        }
    }
    Ok(builder.build())
}

#[derive(Debug, Clone, PartialEq)]
struct OrderEdges {
    /// CSR offsets by head, length `N + 1`, counted in edges.
    offsets: Vec<usize>,
    /// Flattened tails, `m` entries per edge.
    tails: Vec<usize>,
    weights: Vec<f64>,
}

/// Normalized weights `w^{(m)}_{i, j}` stored per order in head-major order.
///
/// Immutable once built. Order-1 self weights `w_ii` are representable so
/// that expected-weight families (complete hypergraph, annealed and
/// activity-driven networks) can carry their diagonal terms; adjacency
/// inputs never produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedHypergraph {
    n_vertices: usize,
    max_order: usize,
    convention: Convention,
    orders: Vec<OrderEdges>,
}

/// Accumulates weighted entries; duplicates are summed on [`build`](Self::build).
#[derive(Debug, Clone)]
pub struct HypergraphBuilder {
    n_vertices: usize,
    max_order: usize,
    convention: Convention,
    heads: Vec<Vec<usize>>,
    tails: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

impl HypergraphBuilder {
    pub fn new(n_vertices: usize, max_order: usize, convention: Convention) -> Self {
        HypergraphBuilder {
            n_vertices,
            max_order,
            convention,
            heads: vec![Vec::new(); max_order],
            tails: vec![Vec::new(); max_order],
            weights: vec![Vec::new(); max_order],
        }
    }

    pub fn push(&mut self, head: usize, tail: &[usize], weight: f64) -> Result<()> {
        let m = tail.len();
        if m == 0 || m > self.max_order {
            return Err(Error::Structural(format!(
                "edge order {m} outside 1..={}",
                self.max_order
            )));
        }
        if head >= self.n_vertices || tail.iter().any(|&j| j >= self.n_vertices) {
            return Err(Error::Structural(format!(
                "vertex index out of range in edge ({head}, {tail:?}) with N = {}",
                self.n_vertices
            )));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::Structural(format!(
                "weights must be finite and nonnegative, got {weight}"
            )));
        }
        if weight == 0.0 {
            return Ok(());
        }
        self.heads[m - 1].push(head);
        self.tails[m - 1].extend_from_slice(tail);
        self.weights[m - 1].push(weight);
        Ok(())
    }

    pub fn build(self) -> WeightedHypergraph {
        let n = self.n_vertices;
        let mut orders = Vec::with_capacity(self.max_order);
        for mi in 0..self.max_order {
            let m = mi + 1;
            let heads = &self.heads[mi];
            let tails = &self.tails[mi];
            let weights = &self.weights[mi];
            let mut idx: Vec<usize> = (0..heads.len()).collect();
            idx.sort_by(|&a, &b| {
                heads[a]
                    .cmp(&heads[b])
                    .then_with(|| tails[a * m..(a + 1) * m].cmp(&tails[b * m..(b + 1) * m]))
            });
            let mut offsets = vec![0usize; n + 1];
            let mut out_tails: Vec<usize> = Vec::with_capacity(tails.len());
            let mut out_weights: Vec<f64> = Vec::with_capacity(weights.len());
            let mut last: Option<usize> = None;
            for &e in &idx {
                let tail = &tails[e * m..(e + 1) * m];
                let same = last.is_some_and(|l| {
                    heads[l] == heads[e] && tails[l * m..(l + 1) * m] == *tail
                });
                if same {
                    *out_weights.last_mut().unwrap() += weights[e];
                } else {
                    out_tails.extend_from_slice(tail);
                    out_weights.push(weights[e]);
                    offsets[heads[e] + 1] += 1;
                }
                last = Some(e);
            }
            for i in 0..n {
                offsets[i + 1] += offsets[i];
            }
            orders.push(OrderEdges {
                offsets,
                tails: out_tails,
                weights: out_weights,
            });
        }
        WeightedHypergraph {
            n_vertices: n,
            max_order: self.max_order,
            convention: self.convention,
            orders,
        }
    }
}

impl WeightedHypergraph {
    pub fn builder(n_vertices: usize, max_order: usize, convention: Convention) -> HypergraphBuilder {
        HypergraphBuilder::new(n_vertices, max_order, convention)
    }

    /// A graph (`M = 1`) from a dense weight matrix; zero entries are skipped.
    pub fn from_matrix(weights: &[Vec<f64>], convention: Convention) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::Structural("empty weight matrix".into()));
        }
        let mut b = HypergraphBuilder::new(n, 1, convention);
        for (i, row) in weights.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Structural(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &w) in row.iter().enumerate() {
                b.push(i, &[j], w)?;
            }
        }
        Ok(b.build())
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    /// Number of stored ordered edges of order `m`.
    pub fn edge_count(&self, m: usize) -> usize {
        self.orders[m - 1].weights.len()
    }

    /// Iterates the `(tail, weight)` pairs of order `m` with head `head`.
    pub fn edges(&self, head: usize, m: usize) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        let o = &self.orders[m - 1];
        let (lo, hi) = (o.offsets[head], o.offsets[head + 1]);
        (lo..hi).map(move |e| (&o.tails[e * m..(e + 1) * m], o.weights[e]))
    }

    /// Raw CSR arrays of order `m`: `(offsets, tails, weights)`.
    pub fn order_arrays(&self, m: usize) -> (&[usize], &[usize], &[f64]) {
        let o = &self.orders[m - 1];
        (&o.offsets, &o.tails, &o.weights)
    }

    /// Weight of a single entry, zero when absent.
    pub fn weight(&self, head: usize, tail: &[usize]) -> f64 {
        let m = tail.len();
        if m == 0 || m > self.max_order {
            return 0.0;
        }
        let o = &self.orders[m - 1];
        let (mut lo, mut hi) = (o.offsets[head], o.offsets[head + 1]);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match o.tails[mid * m..(mid + 1) * m].cmp(tail) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return o.weights[mid],
            }
        }
        0.0
    }

    pub fn w_max(&self) -> f64 {
        self.orders
            .iter()
            .flat_map(|o| o.weights.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Normalized in-degree `δ^{(m)}(i) = Σ_j w^{(m)}_{i,j}`.
    pub fn in_weight(&self, head: usize, m: usize) -> f64 {
        self.edges(head, m).map(|(_, w)| w).sum()
    }

    /// `δ^{(m)}(i)` for all heads, indexed `[i][m-1]`.
    pub fn in_weights(&self) -> Vec<Vec<f64>> {
        (0..self.n_vertices)
            .map(|i| (1..=self.max_order).map(|m| self.in_weight(i, m)).collect())
            .collect()
    }

    /// A stable digest of the structure and the exact weight bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n_vertices.hash(&mut h);
        self.max_order.hash(&mut h);
        self.convention.hash(&mut h);
        for o in &self.orders {
            o.offsets.hash(&mut h);
            o.tails.hash(&mut h);
            for w in &o.weights {
                w.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

fn is_secondary_loop(tail: &[usize]) -> bool {
    tail.iter()
        .enumerate()
        .any(|(k, a)| tail[k + 1..].contains(a))
}

/// Degree statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeReport {
    /// `d[m-1][i]`: in-degree counted as (number of supported ordered tails) / m!.
    pub d: Vec<Vec<f64>>,
    pub d_bar: Vec<f64>,
    /// `delta[m-1][i] = Σ_j w^{(m)}_{i,j}`.
    pub delta: Vec<Vec<f64>>,
    /// Normalized out-degree of order 1, `Σ_i w_{ij}`.
    pub delta_out: Vec<f64>,
}

pub fn degree_report(h: &WeightedHypergraph) -> DegreeReport {
    let n = h.n_vertices;
    let mut d = vec![vec![0.0; n]; h.max_order];
    let mut delta = vec![vec![0.0; n]; h.max_order];
    for m in 1..=h.max_order {
        let fact = factorial(m);
        for i in 0..n {
            for (_, w) in h.edges(i, m) {
                d[m - 1][i] += 1.0 / fact;
                delta[m - 1][i] += w;
            }
        }
    }
    let d_bar = d.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let mut delta_out = vec![0.0; n];
    for i in 0..n {
        for (tail, w) in h.edges(i, 1) {
            delta_out[tail[0]] += w;
        }
    }
    DegreeReport {
        d,
        d_bar,
        delta,
        delta_out,
    }
}

/// Degree statistics of adjacency data, with `delta` taken over the raw
/// multiplicities (`Σ_j a_{i,j} = m! d^{(m)}(i)`).
pub fn raw_degree_report(raw: &RawHypergraph) -> DegreeReport {
    let n = raw.n_vertices;
    let d = raw.in_degrees();
    let d_bar = d.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let delta = d
        .iter()
        .enumerate()
        .map(|(mi, row)| row.iter().map(|x| x * factorial(mi + 1)).collect())
        .collect();
    let mut delta_out = vec![0.0; n];
    for e in raw.edges(1) {
        delta_out[e.tail[0]] += e.multiplicity;
    }
    DegreeReport {
        d,
        d_bar,
        delta,
        delta_out,
    }
}

/// Quantities entering the regularity assumptions and the error bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub w_max: f64,
    pub delta_max: f64,
    pub delta_max_out: f64,
    /// `sloop_weight[i][m-1]`: total weight of tails with a repeated vertex.
    pub sloop_weight: Vec<Vec<f64>>,
    /// Smallest `R` with `sloop_weight ≤ R sqrt(w_max)` everywhere.
    pub sloop_ratio: f64,
    /// `(1/N) Σ_i Σ_j w_ij²` over order-1 weights.
    pub frobenius_sq: f64,
    /// `mu[i] = sqrt(Σ_j w_ij²)` over order-1 weights.
    pub mu: Vec<f64>,
}

pub fn regularity_report(h: &WeightedHypergraph) -> RegularityReport {
    let n = h.n_vertices;
    let w_max = h.w_max();
    let deg = degree_report(h);
    let delta_max = deg
        .delta
        .iter()
        .flat_map(|row| row.iter().copied())
        .fold(0.0, f64::max);
    let delta_max_out = deg.delta_out.iter().copied().fold(0.0, f64::max);
    let sloop_weight: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (1..=h.max_order)
                .map(|m| {
                    h.edges(i, m)
                        .filter(|(t, _)| is_secondary_loop(t))
                        .map(|(_, w)| w)
                        .sum()
                })
                .collect()
        })
        .collect();
    let max_sloop = sloop_weight
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0, f64::max);
    let sloop_ratio = if max_sloop == 0.0 {
        0.0
    } else {
        max_sloop / w_max.sqrt()
    };
    let mu: Vec<f64> = (0..n)
        .map(|i| h.edges(i, 1).map(|(_, w)| w * w).sum::<f64>().sqrt())
        .collect();
    let frobenius_sq = mu.iter().map(|m| m * m).sum::<f64>() / n as f64;
    RegularityReport {
        w_max,
        delta_max,
        delta_max_out,
        sloop_weight,
        sloop_ratio,
        frobenius_sq,
        mu,
    }
}
