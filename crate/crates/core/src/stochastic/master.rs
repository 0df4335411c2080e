//! Forward (master) equation on the full product space `S^N`.
//!
//! Product states are ordered lexicographically with vertex 0 as the most
//! significant digit. The generator is applied matrix-free.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypergraph::WeightedHypergraph;
use crate::meanfield::ode::{integrate_with, OdeOptions, OdeSystem};
use crate::models::{neighborhood_len, order_offset, Neighborhood, RateModel};

/// Largest product state space accepted.
pub const MAX_PRODUCT_STATES: u128 = 1 << 20;

/// Tolerance on the total probability mass.
const MASS_TOL: f64 = 1e-9;

/// Joint distributions at the requested times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MasterSolution {
    pub n_vertices: usize,
    pub n_states: usize,
    pub grid: Vec<f64>,
    /// `distributions[g][x]` for product state `x`.
    pub distributions: Vec<Vec<f64>>,
}

fn product_size(n_states: usize, n_vertices: usize) -> Result<usize> {
    let size = (n_states as u128).checked_pow(n_vertices as u32).unwrap_or(u128::MAX);
    if size > MAX_PRODUCT_STATES {
        return Err(Error::Capacity {
            what: "product state space |S|^N".into(),
            value: size,
            limit: MAX_PRODUCT_STATES,
        });
    }
    Ok(size as usize)
}

/// Index of a product state.
pub fn product_index(states: &[usize], n_states: usize) -> usize {
    states.iter().fold(0, |acc, &s| acc * n_states + s)
}

/// States of every vertex for product index `x`.
pub fn product_states(mut x: usize, n_states: usize, n_vertices: usize) -> Vec<usize> {
    let mut out = vec![0; n_vertices];
    for slot in out.iter_mut().rev() {
        *slot = x % n_states;
        x /= n_states;
    }
    out
}

/// The point mass on one configuration.
pub fn point_distribution(states: &[usize], n_states: usize) -> Result<Vec<f64>> {
    let size = product_size(n_states, states.len())?;
    let mut p = vec![0.0; size];
    p[product_index(states, n_states)] = 1.0;
    Ok(p)
}

/// The product measure `⊗_i z_i`.
pub fn product_distribution(z: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n_states = z.first().map_or(0, Vec::len);
    let size = product_size(n_states, z.len())?;
    let p = (0..size)
        .map(|x| {
            product_states(x, n_states, z.len())
                .iter()
                .zip(z)
                .map(|(&s, zi)| zi[s])
                .product()
        })
        .collect();
    Ok(p)
}

struct MasterSystem<'a> {
    h: &'a WeightedHypergraph,
    model: &'a RateModel,
    n_vertices: usize,
    size: usize,
    orders: usize,
    /// `|S|^{N-1-i}`.
    place: Vec<usize>,
}

impl OdeSystem for MasterSystem<'_> {
    fn dim(&self) -> usize {
        self.size
    }

    fn rhs(&self, _t: f64, p: &[f64], dp: &mut [f64]) {
        let ns = self.model.n_states();
        let len = neighborhood_len(ns, self.model.max_order());
        let mut phi = vec![0.0; len];
        let mut states = vec![0usize; self.n_vertices];
        dp.fill(0.0);
        for x in 0..self.size {
            let px = p[x];
            if px == 0.0 {
                continue;
            }
            let mut rest = x;
            for slot in states.iter_mut().rev() {
                *slot = rest % ns;
                rest /= ns;
            }
            for i in 0..self.n_vertices {
                phi.fill(0.0);
                for m in 1..=self.orders {
                    let off = order_offset(ns, m);
                    for (tail, w) in self.h.edges(i, m) {
                        let idx = tail.iter().fold(0, |acc, &j| acc * ns + states[j]);
                        phi[off + idx] += w;
                    }
                }
                let view = Neighborhood::new(ns, &phi);
                let from = states[i];
                for to in 0..ns {
                    if to == from {
                        continue;
                    }
                    let r = self.model.rate(from, to, &view);
                    if r != 0.0 {
                        let y = x + to * self.place[i] - from * self.place[i];
                        dp[x] -= r * px;
                        dp[y] += r * px;
                    }
                }
            }
        }
    }

    fn admissible(&self, p: &[f64]) -> bool {
        let mass: f64 = p.iter().sum();
        (mass - 1.0).abs() <= MASS_TOL
    }
}

/// Solves the forward equation from `init` and returns the distribution at every grid time.
pub fn master_solve(
    h: &WeightedHypergraph,
    model: &RateModel,
    init: &[f64],
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<MasterSolution> {
    let n = h.n_vertices();
    let ns = model.n_states();
    let size = product_size(ns, n)?;
    if init.len() != size {
        return Err(Error::Input(format!(
            "initial distribution has {} entries, expected {size}",
            init.len()
        )));
    }
    let mass: f64 = init.iter().sum();
    if (mass - 1.0).abs() > MASS_TOL || init.iter().any(|&x| x.is_nan() || x < 0.0) {
        return Err(Error::Input(format!(
            "initial distribution must be nonnegative with mass 1, got mass {mass}"
        )));
    }
    if t_grid.iter().any(|&t| !(t.is_finite() && t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Parameter("time grid must be ascending and nonnegative".into()));
    }
    for m in model.max_order() + 1..=h.max_order() {
        if h.edge_count(m) > 0 {
            return Err(Error::Input(format!(
                "the hypergraph has order-{m} edges but the {} model only reads orders up to {}",
                model.name(),
                model.max_order()
            )));
        }
    }
    let place = (0..n).map(|i| ns.pow((n - 1 - i) as u32)).collect();
    let sys = MasterSystem {
        h,
        model,
        n_vertices: n,
        size,
        orders: model.max_order().min(h.max_order()),
        place,
    };
    let mut current = init.to_vec();
    let mut t = 0.0;
    let mut distributions = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        if target > t {
            let mut last = Vec::new();
            integrate_with(&sys, &current, t, target, opts, |_, y, _| {
                last.clear();
                last.extend_from_slice(y);
            })?;
            current = last;
            t = target;
        }
        distributions.push(current.clone());
    }
    Ok(MasterSolution {
        n_vertices: n,
        n_states: ns,
        grid: t_grid.to_vec(),
        distributions,
    })
}

impl MasterSolution {
    /// `E[ξ_{i,s}]` at grid index `g`, indexed `[i][s]`.
    pub fn marginals(&self, g: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_states]; self.n_vertices];
        for (x, &p) in self.distributions[g].iter().enumerate() {
            for (i, s) in product_states(x, self.n_states, self.n_vertices).into_iter().enumerate() {
                out[i][s] += p;
            }
        }
        out
    }

    /// `P(ξ_i = a, ξ_j = b)` at grid index `g`, indexed `a * |S| + b`.
    pub fn pair_marginal(&self, g: usize, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states * self.n_states];
        for (x, &p) in self.distributions[g].iter().enumerate() {
            let s = product_states(x, self.n_states, self.n_vertices);
            out[s[i] * self.n_states + s[j]] += p;
        }
        out
    }

    pub fn mass(&self, g: usize) -> f64 {
        self.distributions[g].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{generate, Convention, Family, HypergraphBuilder, RawHypergraph, normalize};

    fn tight() -> OdeOptions {
        OdeOptions::with_tolerances(1e-12, 1e-14)
    }

    #[test]
    fn single_vertex_matches_two_state_chain() {
        // glauber with no neighbors: - -> + at rate 1, + -> - at rate 1
        let h = HypergraphBuilder::new(1, 1, Convention::Explicit).build();
        let g = RateModel::glauber(vec![1.0], vec![-1.0], 0.8).unwrap();
        let grid = [0.0, 0.3, 1.0, 2.5];
        let sol = master_solve(&h, &g, &[1.0, 0.0], &grid, &tight()).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            // expm of [[-1, 1], [1, -1]]: p_+(t) = (1 - e^{-2t}) / 2
            let plus = (1.0 - (-2.0 * t).exp()) / 2.0;
            assert!((sol.marginals(k)[0][1] - plus).abs() < 1e-8);
        }
    }

    #[test]
    fn single_vertex_three_state_expm() {
        use crate::models::{AffineForm, AffineRate};
        let rate = |from, to, c| AffineRate { from, to, constant: c, terms: vec![] };
        let form = AffineForm::new(3, 1, vec![rate(0, 1, 2.0), rate(1, 2, 0.5), rate(2, 0, 1.0), rate(1, 0, 0.25)]).unwrap();
        let model = RateModel::affine(form);
        let h = HypergraphBuilder::new(1, 1, Convention::Explicit).build();
        let sol = master_solve(&h, &model, &[1.0, 0.0, 0.0], &[1.5], &tight()).unwrap();
        // p(t) = p(0) exp(tQ) by scaling and squaring of a Taylor series
        let q = [[-2.0, 2.0, 0.0], [0.25, -0.75, 0.5], [1.0, 0.0, -1.0]];
        let t = 1.5 / 1024.0;
        let mut e = [[0.0f64; 3]; 3];
        let mut term = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for k in 1..30 {
            for a in 0..3 {
                for b in 0..3 {
                    e[a][b] += term[a][b];
                }
            }
            let mut next = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    next[a][b] = (0..3).map(|c| term[a][c] * q[c][b] * t).sum::<f64>() / k as f64;
                }
            }
            term = next;
        }
        for _ in 0..10 {
            let mut sq = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    sq[a][b] = (0..3).map(|c| e[a][c] * e[c][b]).sum();
                }
            }
            e = sq;
        }
        let m = sol.marginals(0);
        for s in 0..3 {
            assert!((m[0][s] - e[0][s]).abs() < 1e-8, "state {s}");
        }
    }

    #[test]
    fn mass_is_conserved() {
        let h = generate(&Family::Ring { n: 6, k: 1 }, Convention::One, 0).unwrap();
        let sis = RateModel::sis(vec![2.0], 1.0).unwrap();
        let init = point_distribution(&[1; 6], 2).unwrap();
        let sol = master_solve(&h, &sis, &init, &[0.5, 1.0, 2.0], &OdeOptions::default()).unwrap();
        for g in 0..3 {
            assert!((sol.mass(g) - 1.0).abs() < 1e-9);
        }
        // symmetric ring: equal marginals
        let m = sol.marginals(2);
        for i in 1..6 {
            assert!((m[i][1] - m[0][1]).abs() < 1e-9);
        }
    }

    #[test]
    fn voter_path_consensus_probability() {
        // path 0 - 1 - 2 under convention 2: w_01 = 1, w_10 = w_12 = 1/2, w_21 = 1.
        // Σ_i π_i ξ_i is a martingale with π proportional to (1, 2, 1).
        let mut raw = RawHypergraph::new(3, 1).unwrap();
        raw.add_undirected(0, 1).unwrap();
        raw.add_undirected(1, 2).unwrap();
        let h = normalize(&raw, Convention::Two).unwrap();
        let voter = RateModel::voter(1.0).unwrap();
        let init = point_distribution(&[1, 0, 0], 2).unwrap();
        let sol = master_solve(&h, &voter, &init, &[60.0], &OdeOptions::default()).unwrap();
        let all_one = sol.distributions[0][product_index(&[1, 1, 1], 2)];
        let all_zero = sol.distributions[0][product_index(&[0, 0, 0], 2)];
        assert!((all_one - 0.25).abs() < 1e-6);
        assert!((all_zero - 0.75).abs() < 1e-6);
    }

    #[test]
    fn capacity_guard() {
        let h = HypergraphBuilder::new(21, 1, Convention::Explicit).build();
        let sis = RateModel::sis(vec![1.0], 1.0).unwrap();
        assert!(matches!(
            master_solve(&h, &sis, &[1.0], &[1.0], &OdeOptions::default()),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn pair_marginals_of_product_measure() {
        let z = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let p = product_distribution(&z).unwrap();
        let sol = MasterSolution { n_vertices: 2, n_states: 2, grid: vec![0.0], distributions: vec![p] };
        let pair = sol.pair_marginal(0, 0, 1);
        // (1, 0)
        assert!((pair[2] - 0.7 * 0.6).abs() < 1e-15);
    }
}
