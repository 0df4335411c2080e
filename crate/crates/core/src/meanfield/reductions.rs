//! Systems with fewer equations than vertices: homogeneous, metapopulation,
//! degree-based, activity-driven and partition-based reductions.

use std::collections::HashMap;

use serde::Serialize;

use super::nimfa::{flatten_initial, nimfa_solve, on_simplex, simplex_deviation, SIMPLEX_TOL};
use super::ode::{integrate, DenseTrajectory, OdeOptions, OdeSystem};
use crate::error::{Error, Result};
use crate::hypergraph::{Convention, HypergraphBuilder, RawHypergraph, WeightedHypergraph};
use crate::models::{neighborhood_len, order_offset, tuple_count, tuple_states, Neighborhood, RateModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReductionTag {
    Hmfa,
    Metapopulation,
    Imfa,
    ActivityDriven,
    Partition,
}

/// Occupancies of groups of vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSolution {
    pub tag: ReductionTag,
    /// Number of vertices represented by each group.
    pub group_sizes: Vec<usize>,
    /// Total number of vertices of the original system.
    pub population: usize,
    n_states: usize,
    traj: DenseTrajectory,
}

impl ReducedSolution {
    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn trajectory(&self) -> &DenseTrajectory {
        &self.traj
    }

    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn group(&self, k: usize, t: f64) -> Vec<f64> {
        let n = self.n_states;
        self.traj.eval(t)[k * n..(k + 1) * n].to_vec()
    }

    /// `Σ_k (N_k / N) v_k(t)`.
    pub fn mean(&self, t: f64) -> Vec<f64> {
        let all = self.traj.eval(t);
        let mut out = vec![0.0; self.n_states];
        for (zk, &size) in all.chunks(self.n_states).zip(&self.group_sizes) {
            let frac = size as f64 / self.population as f64;
            for (o, x) in out.iter_mut().zip(zk) {
                *o += frac * x;
            }
        }
        out
    }

    pub fn simplex_deviation(&self) -> (f64, f64) {
        (0..self.traj.node_count())
            .map(|k| simplex_deviation(self.traj.node_value(k), self.n_states))
            .fold((0.0f64, f64::INFINITY), |(a, b), (c, d)| (a.max(c), b.min(d)))
    }
}

/// The homogeneous system `du/dt = Q(U(t)) u` with `U^{(m)}_{s̄} = Π_l u_{s_l}`.
pub fn hmfa_solve(model: &RateModel, u0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<ReducedSolution> {
    let mut b = HypergraphBuilder::new(1, model.max_order(), Convention::Explicit);
    for m in 1..=model.max_order() {
        b.push(0, &vec![0; m], 1.0)?;
    }
    let sol = nimfa_solve(&b.build(), model, &[u0.to_vec()], t_end, opts)?;
    Ok(ReducedSolution {
        tag: ReductionTag::Hmfa,
        group_sizes: vec![1],
        population: 1,
        n_states: model.n_states(),
        traj: sol.trajectory().clone(),
    })
}

fn group_sizes(partition: &[usize], n: usize) -> Result<Vec<usize>> {
    if partition.len() != n {
        return Err(Error::Input(format!(
            "partition covers {} vertices, the hypergraph has {n}",
            partition.len()
        )));
    }
    let k = partition.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    for &g in partition {
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Parameter(format!("group {empty} is empty")));
    }
    Ok(sizes)
}

/// Per-group means of per-vertex distributions.
pub fn group_means(z: &[Vec<f64>], partition: &[usize], sizes: &[usize]) -> Vec<Vec<f64>> {
    let n_states = z.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; n_states]; sizes.len()];
    for (zi, &g) in z.iter().zip(partition) {
        for (o, x) in out[g].iter_mut().zip(zi) {
            *o += x;
        }
    }
    for (row, &size) in out.iter_mut().zip(sizes) {
        row.iter_mut().for_each(|x| *x /= size as f64);
    }
    out
}

/// A metapopulation instance: group weights and the matching initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Metapopulation {
    /// `w̄^{(m)}_{k,l̄} = (1/N_k) Σ_{i∈V_k} Σ_{j̄ ∈ V_{l_1}×…×V_{l_m}} w^{(m)}_{i,j̄}`.
    pub weights: WeightedHypergraph,
    pub z0: Vec<Vec<f64>>,
    pub group_sizes: Vec<usize>,
}

/// Averages weights and initial conditions over the groups of `partition` (vertex → group).
pub fn metapop_reduce(h: &WeightedHypergraph, partition: &[usize], z0: &[Vec<f64>]) -> Result<Metapopulation> {
    let n = h.n_vertices();
    let sizes = group_sizes(partition, n)?;
    if z0.len() != n {
        return Err(Error::Input(format!(
            "initial condition has {} rows, expected {n}",
            z0.len()
        )));
    }
    let mut b = HypergraphBuilder::new(sizes.len(), h.max_order(), Convention::Explicit);
    for m in 1..=h.max_order() {
        let mut acc: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut key = vec![0usize; m + 1];
        for i in 0..n {
            key[0] = partition[i];
            let scale = 1.0 / sizes[partition[i]] as f64;
            for (tail, w) in h.edges(i, m) {
                for (slot, &j) in key[1..].iter_mut().zip(tail) {
                    *slot = partition[j];
                }
                *acc.entry(key.clone()).or_insert(0.0) += w * scale;
            }
        }
        let mut entries: Vec<_> = acc.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (key, w) in entries {
            b.push(key[0], &key[1..], w)?;
        }
    }
    Ok(Metapopulation {
        weights: b.build(),
        z0: group_means(z0, partition, &sizes),
        group_sizes: sizes,
    })
}

/// [`metapop_reduce`] followed by a NIMFA solve on the group weights.
pub fn metapop_solve(
    h: &WeightedHypergraph,
    partition: &[usize],
    model: &RateModel,
    z0: &[Vec<f64>],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<ReducedSolution> {
    let meta = metapop_reduce(h, partition, z0)?;
    let sol = nimfa_solve(&meta.weights, model, &meta.z0, t_end, opts)?;
    Ok(ReducedSolution {
        tag: ReductionTag::Metapopulation,
        population: h.n_vertices(),
        group_sizes: meta.group_sizes,
        n_states: model.n_states(),
        traj: sol.trajectory().clone(),
    })
}

/// Vertices grouped by an identical per-order parameter tuple (degrees or activities).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VertexClasses {
    /// `values[k][m-1]` for class `k`, classes sorted lexicographically.
    pub values: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Class of each vertex.
    pub assignment: Vec<usize>,
}

impl VertexClasses {
    /// From per-order sequences `seq[m-1][i]`.
    pub fn from_sequences(seq: &[Vec<f64>]) -> Result<Self> {
        let n = seq.first().map_or(0, Vec::len);
        if n == 0 || seq.iter().any(|row| row.len() != n) {
            return Err(Error::Parameter(
                "per-order sequences must be nonempty and of equal length".into(),
            ));
        }
        if seq.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Parameter("sequence values must be finite and nonnegative".into()));
        }
        let tuples: Vec<Vec<f64>> = (0..n).map(|i| seq.iter().map(|row| row[i]).collect()).collect();
        let mut values = tuples.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        let assignment: Vec<usize> = tuples
            .iter()
            .map(|t| values.binary_search_by(|v| v.partial_cmp(t).unwrap()).unwrap())
            .collect();
        let mut counts = vec![0usize; values.len()];
        for &k in &assignment {
            counts[k] += 1;
        }
        Ok(VertexClasses {
            values,
            counts,
            assignment,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.values.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.assignment.len()
    }

    pub fn max_order(&self) -> usize {
        self.values[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Closure {
    /// `ζ̄^{(m)}_k = c^{(m)}_k Π Θ^{(m)}`, `Θ^{(m)} = Σ_k bias^{(m)}_k z̄_k`.
    Imfa,
    /// `ζ̄^{(m)}_{k,s̄} = a_k Π E + Σ_r ψ_{s_r} Π_{l≠r} E`.
    Activity,
}

struct ClassSystem<'a> {
    model: &'a RateModel,
    closure: Closure,
    /// Class head factor per order: `c_k` or `a_k`, indexed `[k][m-1]`.
    head: Vec<Vec<f64>>,
    /// Aggregation weights `[m-1][k]` forming `Θ^{(m)}` or `ψ^{(m)}`.
    mix: Vec<Vec<f64>>,
    /// Class fractions `N_k / N`.
    frac: Vec<f64>,
    /// Decoded state tuples per order.
    tuples: Vec<Vec<Vec<usize>>>,
}

impl<'a> ClassSystem<'a> {
    fn new(model: &'a RateModel, closure: Closure, head: Vec<Vec<f64>>, mix: Vec<Vec<f64>>, frac: Vec<f64>) -> Self {
        let n = model.n_states();
        let tuples = (1..=model.max_order())
            .map(|m| (0..tuple_count(n, m)).map(|t| tuple_states(n, m, t)).collect())
            .collect();
        ClassSystem {
            model,
            closure,
            head,
            mix,
            frac,
            tuples,
        }
    }

    fn aggregate(weights: &[f64], z: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (zk, &w) in z.chunks(n).zip(weights) {
            for (o, x) in out.iter_mut().zip(zk) {
                *o += w * x;
            }
        }
        out
    }
}

impl OdeSystem for ClassSystem<'_> {
    fn dim(&self) -> usize {
        self.head.len() * self.model.n_states()
    }

    fn rhs(&self, _t: f64, z: &[f64], dz: &mut [f64]) {
        let n = self.model.n_states();
        let max_order = self.model.max_order();
        let mean = Self::aggregate(&self.frac, z, n);
        let mixes: Vec<Vec<f64>> = self.mix.iter().map(|w| Self::aggregate(w, z, n)).collect();
        let mut zeta = vec![0.0; neighborhood_len(n, max_order)];
        let mut rates = vec![0.0; n * n];
        for (k, d) in dz.chunks_mut(n).enumerate() {
            for m in 1..=max_order {
                let off = order_offset(n, m);
                let c = self.head[k].get(m - 1).copied().unwrap_or(0.0);
                let agg = mixes.get(m - 1);
                for (t, states) in self.tuples[m - 1].iter().enumerate() {
                    zeta[off + t] = match (self.closure, agg) {
                        (_, None) => 0.0,
                        (Closure::Imfa, Some(theta)) => c * states.iter().map(|&s| theta[s]).product::<f64>(),
                        (Closure::Activity, Some(psi)) => {
                            let all: f64 = states.iter().map(|&s| mean[s]).product();
                            let cross: f64 = (0..m)
                                .map(|r| {
                                    states
                                        .iter()
                                        .enumerate()
                                        .map(|(l, &s)| if l == r { psi[s] } else { mean[s] })
                                        .product::<f64>()
                                })
                                .sum();
                            c * all + cross
                        }
                    };
                }
            }
            let phi = Neighborhood::new(n, &zeta);
            self.model
                .apply_generator(&phi, &z[k * n..(k + 1) * n], &mut rates, d);
        }
    }

    fn admissible(&self, z: &[f64]) -> bool {
        z.chunks(self.model.n_states()).all(|zk| on_simplex(zk, SIMPLEX_TOL))
    }
}

fn check_classes(classes: &VertexClasses, model: &RateModel) -> Result<()> {
    if classes.max_order() > model.max_order()
        && classes
            .values
            .iter()
            .any(|v| v[model.max_order()..].iter().any(|&x| x > 0.0))
    {
        return Err(Error::Input(format!(
            "classes carry orders above the {} model's maximum {}",
            model.name(),
            model.max_order()
        )));
    }
    Ok(())
}

/// Degree-based mean field: one block of equations per degree class.
///
/// Under Convention 1 the class neighborhood is `(k^{(m)}/d̄^{(m)}) Π Θ^{(m)}`,
/// under Convention 2 it is `Π Θ^{(m)}` for classes with `k^{(m)} > 0`, where
/// `Θ^{(m)}` averages the class occupancies with the size-biased distribution
/// of order-`m` degrees.
pub fn imfa_solve(
    classes: &VertexClasses,
    model: &RateModel,
    convention: Convention,
    z0: &[Vec<f64>],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<ReducedSolution> {
    if convention == Convention::Explicit {
        return Err(Error::Parameter("degree-based reduction needs convention 1 or 2".into()));
    }
    check_classes(classes, model)?;
    let n_vertices = classes.n_vertices() as f64;
    let orders = classes.max_order().min(model.max_order());
    let frac: Vec<f64> = classes.counts.iter().map(|&c| c as f64 / n_vertices).collect();
    let mut mix = Vec::with_capacity(orders);
    let mut head = vec![vec![0.0; orders]; classes.n_classes()];
    for mi in 0..orders {
        let d_bar: f64 = classes
            .values
            .iter()
            .zip(&frac)
            .map(|(v, f)| v[mi] * f)
            .sum();
        let weights: Vec<f64> = classes
            .values
            .iter()
            .zip(&frac)
            .map(|(v, f)| if d_bar > 0.0 { v[mi] * f / d_bar } else { 0.0 })
            .collect();
        mix.push(weights);
        for (k, v) in classes.values.iter().enumerate() {
            head[k][mi] = match convention {
                Convention::One if d_bar > 0.0 => v[mi] / d_bar,
                Convention::Two if v[mi] > 0.0 => 1.0,
                _ => 0.0,
            };
        }
    }
    let flat = flatten_initial(z0, classes.n_classes(), model.n_states())?;
    let sys = ClassSystem::new(model, Closure::Imfa, head, mix, frac);
    let traj = integrate(&sys, &flat, 0.0, t_end, opts)?;
    Ok(ReducedSolution {
        tag: ReductionTag::Imfa,
        group_sizes: classes.counts.clone(),
        population: classes.n_vertices(),
        n_states: model.n_states(),
        traj,
    })
}

/// Activity-driven reduction: one block of equations per activity class.
///
/// With `E = Σ_k (N_k/N) z̄_k` and `ψ^{(m)} = Σ_k (N_k/N) a^{(m)}_k z̄_k`, the
/// class neighborhood is `ζ̄^{(m)}_{k,s̄} = a^{(m)}_k Π_l E_{s_l} + Σ_r ψ^{(m)}_{s_r} Π_{l≠r} E_{s_l}`.
pub fn activity_solve(
    classes: &VertexClasses,
    model: &RateModel,
    z0: &[Vec<f64>],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<ReducedSolution> {
    check_classes(classes, model)?;
    let n_vertices = classes.n_vertices() as f64;
    let orders = classes.max_order().min(model.max_order());
    let frac: Vec<f64> = classes.counts.iter().map(|&c| c as f64 / n_vertices).collect();
    let head: Vec<Vec<f64>> = classes.values.iter().map(|v| v[..orders].to_vec()).collect();
    let mix: Vec<Vec<f64>> = (0..orders)
        .map(|mi| {
            classes
                .values
                .iter()
                .zip(&frac)
                .map(|(v, f)| v[mi] * f)
                .collect()
        })
        .collect();
    let flat = flatten_initial(z0, classes.n_classes(), model.n_states())?;
    let sys = ClassSystem::new(model, Closure::Activity, head, mix, frac);
    let traj = integrate(&sys, &flat, 0.0, t_end, opts)?;
    Ok(ReducedSolution {
        tag: ReductionTag::ActivityDriven,
        group_sizes: classes.counts.clone(),
        population: classes.n_vertices(),
        n_states: model.n_states(),
        traj,
    })
}

/// Equal-sized blocks `V_1..V_K` of a simple graph plus an exceptional block `V_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSpec {
    /// Block of each vertex; block 0 is the exceptional set.
    pub assignment: Vec<usize>,
    /// Number of non-exceptional blocks `K`.
    pub n_blocks: usize,
    /// Common size of `V_1..V_K`.
    pub block_size: usize,
    /// Edge densities `ρ(V_k, V_l) = e(V_k, V_l)/(|V_k||V_l|)`, `k, l ≥ 1`, indexed from 0.
    pub rho: Vec<Vec<f64>>,
    /// Global density `d̄/N`.
    pub p: f64,
    /// `|V_k|/N`.
    pub kappa: f64,
}

impl PartitionSpec {
    pub fn new(graph: &RawHypergraph, assignment: Vec<usize>) -> Result<Self> {
        if graph.max_order() != 1 {
            return Err(Error::Parameter(
                "partition reduction is defined for graphs (M = 1)".into(),
            ));
        }
        let n = graph.n_vertices();
        if assignment.len() != n {
            return Err(Error::Input(format!(
                "assignment covers {} vertices, the graph has {n}",
                assignment.len()
            )));
        }
        let n_blocks = assignment.iter().copied().max().unwrap_or(0);
        if n_blocks == 0 {
            return Err(Error::Parameter("at least one non-exceptional block is needed".into()));
        }
        let mut sizes = vec![0usize; n_blocks + 1];
        for &b in &assignment {
            sizes[b] += 1;
        }
        let block_size = sizes[1];
        if sizes[1..].iter().any(|&s| s != block_size) {
            return Err(Error::Parameter(format!(
                "non-exceptional blocks must have equal sizes, got {:?}",
                &sizes[1..]
            )));
        }
        let mut e = vec![vec![0.0; n_blocks]; n_blocks];
        let mut total = 0.0;
        for edge in graph.edges(1) {
            total += edge.multiplicity;
            let (a, b) = (assignment[edge.head], assignment[edge.tail[0]]);
            if a > 0 && b > 0 {
                e[a - 1][b - 1] += edge.multiplicity;
            }
        }
        let d_bar = total / n as f64;
        let p = d_bar / n as f64;
        if p <= 0.0 {
            return Err(Error::Parameter("the graph has no edges".into()));
        }
        let denom = (block_size * block_size) as f64;
        let rho = e
            .into_iter()
            .map(|row| row.into_iter().map(|x| x / denom).collect())
            .collect();
        Ok(PartitionSpec {
            assignment,
            n_blocks,
            block_size,
            rho,
            p,
            kappa: block_size as f64 / n as f64,
        })
    }

    /// `w̄_{kl} = (κ/p) ρ(V_k, V_l)` as a weighted graph on the `K` blocks.
    pub fn reduced_weights(&self) -> WeightedHypergraph {
        let scale = self.kappa / self.p;
        let matrix: Vec<Vec<f64>> = self
            .rho
            .iter()
            .map(|row| row.iter().map(|r| scale * r).collect())
            .collect();
        WeightedHypergraph::from_matrix(&matrix, Convention::Explicit)
            .expect("densities are finite and nonnegative")
    }
}

/// Result of [`partition_reduce`].
#[derive(Debug, Clone)]
pub struct PartitionReduction {
    pub spec: PartitionSpec,
    pub weights: WeightedHypergraph,
    /// Block trajectories `v_k(t)`; `mean(t)` is `v̄(t)`.
    pub solution: ReducedSolution,
}

impl PartitionReduction {
    /// `v̄(t) = Σ_{k≥1} (|V_k|/N) v_k(t)`.
    pub fn v_bar(&self, t: f64) -> Vec<f64> {
        self.solution.mean(t)
    }
}

/// NIMFA on the block graph of a partition, started from block means of `z0`.
/// The exceptional block is left out of the reduced system.
pub fn partition_reduce(
    graph: &RawHypergraph,
    spec: &PartitionSpec,
    model: &RateModel,
    z0: &[Vec<f64>],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<PartitionReduction> {
    if !model.is_affine() {
        return Err(Error::Unsupported(format!(
            "partition reduction needs affine rates; the {} model is not affine",
            model.name()
        )));
    }
    let n = graph.n_vertices();
    if spec.assignment.len() != n {
        return Err(Error::Input("partition does not match the graph".into()));
    }
    if z0.len() != n {
        return Err(Error::Input(format!(
            "initial condition has {} rows, expected {n}",
            z0.len()
        )));
    }
    let n_states = model.n_states();
    let mut v0 = vec![vec![0.0; n_states]; spec.n_blocks];
    for (zi, &b) in z0.iter().zip(&spec.assignment) {
        if b > 0 {
            for (o, x) in v0[b - 1].iter_mut().zip(zi) {
                *o += x / spec.block_size as f64;
            }
        }
    }
    let weights = spec.reduced_weights();
    let sol = nimfa_solve(&weights, model, &v0, t_end, opts)?;
    Ok(PartitionReduction {
        spec: spec.clone(),
        solution: ReducedSolution {
            tag: ReductionTag::Partition,
            group_sizes: vec![spec.block_size; spec.n_blocks],
            population: n,
            n_states,
            traj: sol.trajectory().clone(),
        },
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{generate, normalize, Family};
    use crate::meanfield::nimfa::uniform_initial;

    fn tight() -> OdeOptions {
        OdeOptions::with_tolerances(1e-12, 1e-14)
    }

    #[test]
    fn hmfa_matches_simplicial_sis_equation() {
        let sis = RateModel::sis(vec![1.2, 2.0], 1.0).unwrap();
        let sol = hmfa_solve(&sis, &[0.7, 0.3], 2.0, &tight()).unwrap();
        // du/dt = -γu + (1-u)(β1 u + β2 u²) through an independent scalar solve
        struct Scalar;
        impl OdeSystem for Scalar {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
                let u = y[0];
                dy[0] = -u + (1.0 - u) * (1.2 * u + 2.0 * u * u);
            }
        }
        let scalar = integrate(&Scalar, &[0.3], 0.0, 2.0, &tight()).unwrap();
        for t in [0.1, 0.5, 1.3, 2.0] {
            assert!((sol.group(0, t)[1] - scalar.eval(t)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn hmfa_invariant_states() {
        let sis = RateModel::sis(vec![2.0], 1.0).unwrap();
        let free = hmfa_solve(&sis, &[1.0, 0.0], 5.0, &tight()).unwrap();
        assert_eq!(free.group(0, 5.0)[1], 0.0);
        let endemic = hmfa_solve(&sis, &[0.5, 0.5], 5.0, &tight()).unwrap();
        assert!((endemic.group(0, 5.0)[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn two_block_weights_by_direct_summation() {
        let (n, a, b) = (6usize, 0.3, 0.1);
        let family = Family::Block {
            n,
            sizes: vec![3, 3],
            weights: vec![vec![a, b], vec![b, a]],
        };
        let h = generate(&family, Convention::Explicit, 0).unwrap();
        let part = vec![0, 0, 0, 1, 1, 1];
        let meta = metapop_reduce(&h, &part, &uniform_initial(n, &[0.5, 0.5])).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let mut sum = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if part[i] == k && part[j] == l {
                            sum += h.weight(i, &[j]);
                        }
                    }
                }
                let tilde = sum / 9.0;
                assert!((meta.weights.weight(k, &[l]) - 3.0 * tilde).abs() < 1e-15);
            }
        }
        // within: two partners of weight a; across: three of weight b
        assert!((meta.weights.weight(0, &[0]) - 2.0 * a).abs() < 1e-15);
        assert!((meta.weights.weight(0, &[1]) - 3.0 * b).abs() < 1e-15);
    }

    #[test]
    fn single_group_of_regular_graph_is_hmfa() {
        let h = generate(&Family::Ring { n: 20, k: 2 }, Convention::Two, 0).unwrap();
        let meta = metapop_reduce(&h, &[0; 20], &uniform_initial(20, &[0.6, 0.4])).unwrap();
        assert!((meta.weights.weight(0, &[0]) - 1.0).abs() < 1e-12);
        assert!(metapop_reduce(&h, &[1; 20], &uniform_initial(20, &[0.6, 0.4])).is_err());
    }

    #[test]
    fn vertex_classes() {
        let c = VertexClasses::from_sequences(&[vec![4.0, 2.0, 4.0, 2.0]]).unwrap();
        assert_eq!(c.values, vec![vec![2.0], vec![4.0]]);
        assert_eq!(c.counts, vec![2, 2]);
        assert_eq!(c.assignment, vec![1, 0, 1, 0]);
    }

    #[test]
    fn imfa_class_coefficients() {
        // degrees {2, 4} in equal proportion: d̄ = 3, size-biased weights 1/3 and 2/3
        let c = VertexClasses::from_sequences(&[vec![2.0, 4.0]]).unwrap();
        let sis = RateModel::sis(vec![1.0], 0.0).unwrap();
        let z0 = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let sol = imfa_solve(&c, &sis, Convention::One, &z0, 1e-3, &tight()).unwrap();
        // Θ_I = (1/3)·1 + (2/3)·0; the susceptible class of degree 4 sees (4/3)Θ_I
        let d0 = sol.trajectory().node_derivative(0);
        assert!((d0[3] - 4.0 / 3.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn imfa_with_constant_degrees_is_hmfa() {
        let c = VertexClasses::from_sequences(&[vec![5.0; 10]]).unwrap();
        let sis = RateModel::sis(vec![2.5], 1.0).unwrap();
        let imfa = imfa_solve(&c, &sis, Convention::One, &[vec![0.8, 0.2]], 3.0, &tight()).unwrap();
        let hmfa = hmfa_solve(&sis, &[0.8, 0.2], 3.0, &tight()).unwrap();
        for t in [0.5, 1.0, 3.0] {
            assert!((imfa.group(0, t)[1] - hmfa.group(0, t)[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn equal_activities_scale_hmfa() {
        let a = 0.75;
        let c = VertexClasses::from_sequences(&[vec![a; 8]]).unwrap();
        let sis = RateModel::sis(vec![1.0], 1.0).unwrap();
        let act = activity_solve(&c, &sis, &[vec![0.9, 0.1]], 2.0, &tight()).unwrap();
        let scaled = RateModel::sis(vec![2.0 * a], 1.0).unwrap();
        let hmfa = hmfa_solve(&scaled, &[0.9, 0.1], 2.0, &tight()).unwrap();
        for t in [0.3, 1.0, 2.0] {
            assert!((act.group(0, t)[1] - hmfa.group(0, t)[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn partition_errors() {
        let mut raw = RawHypergraph::new(4, 1).unwrap();
        raw.add_undirected(0, 1).unwrap();
        raw.add_undirected(2, 3).unwrap();
        assert!(PartitionSpec::new(&raw, vec![1, 1, 1, 2]).is_err());
        let spec = PartitionSpec::new(&raw, vec![1, 1, 2, 2]).unwrap();
        assert_eq!(spec.rho, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        let glauber = RateModel::glauber(vec![1.0], vec![-1.0], 1.0).unwrap();
        assert!(matches!(
            partition_reduce(&raw, &spec, &glauber, &uniform_initial(4, &[0.5, 0.5]), 1.0, &tight()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn singleton_blocks_reproduce_nimfa() {
        let mut raw = RawHypergraph::new(6, 1).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)] {
            raw.add_undirected(a, b).unwrap();
        }
        let spec = PartitionSpec::new(&raw, (1..=6).collect()).unwrap();
        let h = normalize(&raw, Convention::One).unwrap();
        let sis = RateModel::sis(vec![2.0], 1.0).unwrap();
        let z0: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0 - 0.1 * i as f64, 0.1 * i as f64]).collect();
        let red = partition_reduce(&raw, &spec, &sis, &z0, 2.0, &tight()).unwrap();
        let full = nimfa_solve(&h, &sis, &z0, 2.0, &tight()).unwrap();
        for t in [0.4, 2.0] {
            for i in 0..6 {
                assert!((red.solution.group(i, t)[1] - full.vertex(i, t)[1]).abs() < 1e-10);
            }
        }
    }
}
