//! The N-intertwined mean-field system `dz_i/dt = Q(ζ_i(t)) z_i`.

use rayon::prelude::*;

use super::ode::{integrate, DenseTrajectory, OdeOptions, OdeSystem};
use crate::error::{Error, Result};
use crate::hypergraph::WeightedHypergraph;
use crate::models::{neighborhood_len, order_offset, tuple_count, Neighborhood, RateModel};

/// Tolerance for states on the probability simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Work below this many vertices is not worth splitting across threads.
const PARALLEL_MIN_VERTICES: usize = 512;

/// Whether `z` is a probability vector up to `tol`.
pub fn on_simplex(z: &[f64], tol: f64) -> bool {
    let sum: f64 = z.iter().sum();
    (sum - 1.0).abs() <= tol && z.iter().all(|&x| x >= -tol && x.is_finite())
}

/// Largest `|Σ_s z_s - 1|` and smallest component over a flat array of distributions.
pub fn simplex_deviation(flat: &[f64], n_states: usize) -> (f64, f64) {
    flat.chunks(n_states).fold((0.0f64, f64::INFINITY), |(dev, min), z| {
        let sum: f64 = z.iter().sum();
        let m = z.iter().copied().fold(f64::INFINITY, f64::min);
        (dev.max((sum - 1.0).abs()), min.min(m))
    })
}

pub(crate) fn flatten_initial(z0: &[Vec<f64>], units: usize, n_states: usize) -> Result<Vec<f64>> {
    if z0.len() != units {
        return Err(Error::Input(format!(
            "initial condition has {} rows, expected {units}",
            z0.len()
        )));
    }
    let mut flat = Vec::with_capacity(units * n_states);
    for (i, z) in z0.iter().enumerate() {
        if z.len() != n_states || !on_simplex(z, SIMPLEX_TOL) {
            return Err(Error::Input(format!(
                "initial distribution of unit {i} is not a point of the {n_states}-state simplex: {z:?}"
            )));
        }
        flat.extend_from_slice(z);
    }
    Ok(flat)
}

/// Scratch buffers for tuple products.
#[derive(Debug, Clone, Default)]
pub(crate) struct ProductScratch {
    a: Vec<f64>,
    b: Vec<f64>,
    da: Vec<f64>,
    db: Vec<f64>,
}

/// Adds `w Π_l z_{j_l, s_l}` for every state tuple into `block` (length `|S|^m`).
fn add_tail_products(n: usize, tail: &[usize], w: f64, z: &[f64], block: &mut [f64], sc: &mut ProductScratch) {
    if tail.len() == 1 {
        let zj = &z[tail[0] * n..(tail[0] + 1) * n];
        for (b, &x) in block.iter_mut().zip(zj) {
            *b += w * x;
        }
        return;
    }
    sc.a.clear();
    sc.a.push(w);
    for &j in tail {
        let zj = &z[j * n..(j + 1) * n];
        sc.b.clear();
        for &p in &sc.a {
            sc.b.extend(zj.iter().map(|&x| p * x));
        }
        std::mem::swap(&mut sc.a, &mut sc.b);
    }
    for (b, &x) in block.iter_mut().zip(&sc.a) {
        *b += x;
    }
}

/// Like [`add_tail_products`], also accumulating the time derivative given `dz`.
#[allow(clippy::too_many_arguments)]
fn add_tail_products_with_derivative(
    n: usize,
    tail: &[usize],
    w: f64,
    z: &[f64],
    dz: &[f64],
    block: &mut [f64],
    dblock: &mut [f64],
    sc: &mut ProductScratch,
) {
    sc.a.clear();
    sc.da.clear();
    sc.a.push(w);
    sc.da.push(0.0);
    for &j in tail {
        let zj = &z[j * n..(j + 1) * n];
        let dzj = &dz[j * n..(j + 1) * n];
        sc.b.clear();
        sc.db.clear();
        for (&p, &dp) in sc.a.iter().zip(&sc.da) {
            for s in 0..n {
                sc.b.push(p * zj[s]);
                sc.db.push(dp * zj[s] + p * dzj[s]);
            }
        }
        std::mem::swap(&mut sc.a, &mut sc.b);
        std::mem::swap(&mut sc.da, &mut sc.db);
    }
    for k in 0..block.len() {
        block[k] += sc.a[k];
        dblock[k] += sc.da[k];
    }
}

/// Writes `ζ_i` (orders `1..=max_order`) computed from the flat occupancy array `z`.
pub(crate) fn zeta_into(
    h: &WeightedHypergraph,
    n_states: usize,
    max_order: usize,
    z: &[f64],
    i: usize,
    out: &mut [f64],
    sc: &mut ProductScratch,
) {
    out.fill(0.0);
    for m in 1..=max_order.min(h.max_order()) {
        let off = order_offset(n_states, m);
        let block = &mut out[off..off + tuple_count(n_states, m)];
        for (tail, w) in h.edges(i, m) {
            add_tail_products(n_states, tail, w, z, block, sc);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn zeta_with_derivative_into(
    h: &WeightedHypergraph,
    n_states: usize,
    max_order: usize,
    z: &[f64],
    dz: &[f64],
    i: usize,
    out: &mut [f64],
    dout: &mut [f64],
    sc: &mut ProductScratch,
) {
    out.fill(0.0);
    dout.fill(0.0);
    for m in 1..=max_order.min(h.max_order()) {
        let off = order_offset(n_states, m);
        let len = tuple_count(n_states, m);
        for (tail, w) in h.edges(i, m) {
            add_tail_products_with_derivative(
                n_states,
                tail,
                w,
                z,
                dz,
                &mut out[off..off + len],
                &mut dout[off..off + len],
                sc,
            );
        }
    }
}

/// `ζ_i` from a flat occupancy array (`z[j * |S| + s]`), for orders `1..=max_order`.
pub fn zeta_of(h: &WeightedHypergraph, n_states: usize, max_order: usize, z: &[f64], i: usize) -> Vec<f64> {
    let mut out = vec![0.0; neighborhood_len(n_states, max_order)];
    zeta_into(h, n_states, max_order, z, i, &mut out, &mut ProductScratch::default());
    out
}

fn check_compatible(h: &WeightedHypergraph, model: &RateModel) -> Result<()> {
    for m in model.max_order() + 1..=h.max_order() {
        if h.edge_count(m) > 0 {
            return Err(Error::Input(format!(
                "the hypergraph has order-{m} edges but the {} model only reads orders up to {}",
                model.name(),
                model.max_order()
            )));
        }
    }
    Ok(())
}

struct NimfaSystem<'a> {
    h: &'a WeightedHypergraph,
    model: &'a RateModel,
}

impl NimfaSystem<'_> {
    fn vertex_rhs(&self, i: usize, z: &[f64], dz: &mut [f64], scratch: &mut (Vec<f64>, Vec<f64>, ProductScratch)) {
        let n = self.model.n_states();
        let (zeta, rates, sc) = scratch;
        zeta_into(self.h, n, self.model.max_order(), z, i, zeta, sc);
        let phi = Neighborhood::new(n, zeta);
        self.model
            .apply_generator(&phi, &z[i * n..(i + 1) * n], rates, dz);
    }

    fn scratch(&self) -> (Vec<f64>, Vec<f64>, ProductScratch) {
        let n = self.model.n_states();
        (
            vec![0.0; self.model.neighborhood_len()],
            vec![0.0; n * n],
            ProductScratch::default(),
        )
    }
}

impl OdeSystem for NimfaSystem<'_> {
    fn dim(&self) -> usize {
        self.h.n_vertices() * self.model.n_states()
    }

    fn rhs(&self, _t: f64, z: &[f64], dz: &mut [f64]) {
        let n = self.model.n_states();
        if self.h.n_vertices() >= PARALLEL_MIN_VERTICES {
            dz.par_chunks_mut(n)
                .enumerate()
                .for_each_init(|| self.scratch(), |sc, (i, d)| self.vertex_rhs(i, z, d, sc));
        } else {
            let mut sc = self.scratch();
            for (i, d) in dz.chunks_mut(n).enumerate() {
                self.vertex_rhs(i, z, d, &mut sc);
            }
        }
    }

    fn admissible(&self, z: &[f64]) -> bool {
        z.chunks(self.model.n_states())
            .all(|zi| on_simplex(zi, SIMPLEX_TOL))
    }
}

/// Dense solution of the NIMFA system.
#[derive(Debug, Clone, PartialEq)]
pub struct NimfaSolution {
    n_vertices: usize,
    n_states: usize,
    max_order: usize,
    fingerprint: u64,
    traj: DenseTrajectory,
}

/// Solves the NIMFA system on `[0, t_end]` from the per-vertex distributions `z0`.
pub fn nimfa_solve(
    h: &WeightedHypergraph,
    model: &RateModel,
    z0: &[Vec<f64>],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<NimfaSolution> {
    check_compatible(h, model)?;
    let flat = flatten_initial(z0, h.n_vertices(), model.n_states())?;
    let sys = NimfaSystem { h, model };
    let traj = integrate(&sys, &flat, 0.0, t_end, opts)?;
    Ok(NimfaSolution {
        n_vertices: h.n_vertices(),
        n_states: model.n_states(),
        max_order: model.max_order(),
        fingerprint: h.fingerprint(),
        traj,
    })
}

/// The same distribution for every vertex.
pub fn uniform_initial(n_vertices: usize, z: &[f64]) -> Vec<Vec<f64>> {
    vec![z.to_vec(); n_vertices]
}

impl NimfaSolution {
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Fingerprint of the hypergraph the system was built on.
    pub fn hypergraph_fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn trajectory(&self) -> &DenseTrajectory {
        &self.traj
    }

    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn t_end(&self) -> f64 {
        self.traj.t_end()
    }

    /// Flat occupancies `z[i * |S| + s]` at time `t`.
    pub fn z(&self, t: f64) -> Vec<f64> {
        self.traj.eval(t)
    }

    pub fn z_into(&self, t: f64, out: &mut [f64]) {
        self.traj.eval_into(t, out)
    }

    pub fn vertex(&self, i: usize, t: f64) -> Vec<f64> {
        let n = self.n_states;
        self.z(t)[i * n..(i + 1) * n].to_vec()
    }

    /// `(1/N) Σ_i z_i(t)`.
    pub fn mean(&self, t: f64) -> Vec<f64> {
        let z = self.z(t);
        let mut out = vec![0.0; self.n_states];
        for zi in z.chunks(self.n_states) {
            for (o, x) in out.iter_mut().zip(zi) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= self.n_vertices as f64);
        out
    }

    /// `ζ_i(t)` recomputed from the interpolated occupancies.
    pub fn zeta(&self, h: &WeightedHypergraph, i: usize, t: f64) -> Vec<f64> {
        zeta_of(h, self.n_states, self.max_order, &self.z(t), i)
    }

    /// Largest `|Σ_s z_{i,s} - 1|` and smallest component over all nodes.
    pub fn simplex_deviation(&self) -> (f64, f64) {
        (0..self.traj.node_count())
            .map(|k| simplex_deviation(self.traj.node_value(k), self.n_states))
            .fold((0.0f64, f64::INFINITY), |(a, b), (c, d)| (a.max(c), b.min(d)))
    }

    /// Tabulates `ζ` and `dζ/dt` at the nodes for fast interpolation.
    pub fn zeta_track(&self, h: &WeightedHypergraph) -> Result<ZetaTrack> {
        if h.fingerprint() != self.fingerprint {
            return Err(Error::Input(
                "hypergraph differs from the one the solution was computed on".into(),
            ));
        }
        let n = self.n_states;
        let len = neighborhood_len(n, self.max_order);
        let nodes = self.traj.node_count();
        let stride = self.n_vertices * len;
        let mut values = vec![0.0; nodes * stride];
        let mut derivs = vec![0.0; nodes * stride];
        let max_order = self.max_order;
        values
            .par_chunks_mut(stride)
            .zip(derivs.par_chunks_mut(stride))
            .enumerate()
            .for_each_init(ProductScratch::default, |sc, (k, (vals, ders))| {
                let z = self.traj.node_value(k);
                let dz = self.traj.node_derivative(k);
                for i in 0..self.n_vertices {
                    zeta_with_derivative_into(
                        h,
                        n,
                        max_order,
                        z,
                        dz,
                        i,
                        &mut vals[i * len..(i + 1) * len],
                        &mut ders[i * len..(i + 1) * len],
                        sc,
                    );
                }
            });
        Ok(ZetaTrack {
            len,
            stride,
            times: self.traj.times().to_vec(),
            values,
            derivs,
        })
    }
}

/// `ζ_i(t)` for all vertices, Hermite-interpolated from tabulated nodes.
#[derive(Debug, Clone)]
pub struct ZetaTrack {
    len: usize,
    stride: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl ZetaTrack {
    pub fn neighborhood_len(&self) -> usize {
        self.len
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Interval index for `t`; pass the previous result as `hint` for monotone queries.
    pub fn locate(&self, t: f64, hint: usize) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        let mut k = hint.min(n - 2);
        if self.times[k] <= t && (t < self.times[k + 1] || k == n - 2) {
            return k;
        }
        if t <= self.times[0] {
            return 0;
        }
        k = self.times.partition_point(|&x| x <= t).saturating_sub(1);
        k.min(n - 2)
    }

    /// Writes `ζ_i(t)` into `out`, using interval `k` from [`locate`](Self::locate).
    pub fn eval_into(&self, i: usize, t: f64, k: usize, out: &mut [f64]) {
        let base = i * self.len;
        if self.times.len() < 2 {
            out.copy_from_slice(&self.values[base..base + self.len]);
            return;
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let a = 2.0 * s3 - 3.0 * s2 + 1.0;
        let b = (s3 - 2.0 * s2 + s) * h;
        let c = -2.0 * s3 + 3.0 * s2;
        let d = (s3 - s2) * h;
        let lo = k * self.stride + base;
        let hi = (k + 1) * self.stride + base;
        for (idx, o) in out.iter_mut().enumerate() {
            *o = a * self.values[lo + idx]
                + b * self.derivs[lo + idx]
                + c * self.values[hi + idx]
                + d * self.derivs[hi + idx];
        }
    }

    pub fn eval(&self, i: usize, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.eval_into(i, t, self.locate(t, 0), &mut out);
        out
    }
}
