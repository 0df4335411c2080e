//! Error estimates from coupled runs, bound ingredients and scaling fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hypergraph::{regularity_report, WeightedHypergraph};
use crate::meanfield::NimfaSolution;
use crate::stochastic::CoupledRun;

/// Resamples used for bootstrap confidence intervals.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Monte Carlo estimates of the coupling and density errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub replicas: usize,
    pub n_vertices: usize,
    /// Time up to which disagreements are counted.
    pub horizon: f64,
    pub grid_points: usize,
    /// `P̂(ξ_i ≠ ξ̂_i for some τ ≤ horizon)`.
    pub p_hat: Vec<f64>,
    pub p_hat_stderr: Vec<f64>,
    pub p_max: f64,
    /// Standard error of the maximizing vertex.
    pub p_max_stderr: f64,
    pub p_mean: f64,
    pub p_mean_stderr: f64,
    /// Replica mean of `sup_τ ‖(1/N) Σ_i (ξ_i(τ) - z_i(τ))‖₁`.
    pub density_error: f64,
    pub density_error_stderr: f64,
    /// The same quantity with `ξ̂` in place of `ξ`.
    pub concentration_gap: f64,
    pub concentration_gap_stderr: f64,
    /// `max_i sup_τ E Σ_s |ξ_{i,s} - ξ̂_{i,s}|` over the grid (a lower estimate of the continuous sup).
    pub d0_max: f64,
    /// `max_i sup_τ E ‖φ_i^{(m)} - ζ_i^{(m)}‖₁` per order, when neighborhood gaps were recorded.
    pub d_max_by_order: Option<Vec<f64>>,
}

/// Streaming accumulator behind [`estimate_errors`].
///
/// Accumulators over disjoint replica sets can be merged; merging in a fixed
/// order gives results that do not depend on how the replicas were split.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    n_vertices: usize,
    n_states: usize,
    grid: Vec<f64>,
    horizon: f64,
    /// Mean-field state fractions `(1/N) Σ_i z_i` at the grid times.
    target: Vec<Vec<f64>>,
    instance: Option<u64>,
    /// Vertices that disagreed by the horizon, per replica.
    disagreed: Vec<Vec<u32>>,
    disagree_counts: Vec<u64>,
    /// `[g][i]`: replicas with `ξ_i ≠ ξ̂_i` at grid time `g`.
    mismatch_counts: Vec<Vec<u64>>,
    /// `[g][m-1][i]`: summed neighborhood gaps.
    gap_sums: Option<Vec<Vec<Vec<f64>>>>,
    density: Vec<f64>,
    concentration: Vec<f64>,
}

impl ErrorAccumulator {
    /// An empty accumulator comparing runs on `grid` with the mean-field solution.
    pub fn new(nimfa: &NimfaSolution, grid: &[f64]) -> Result<Self> {
        let Some(&horizon) = grid.last() else {
            return Err(Error::Input("the observation grid is empty".into()));
        };
        if horizon > nimfa.t_end() * (1.0 + 1e-12) {
            return Err(Error::Input(format!(
                "grid extends to {horizon}, past the mean-field horizon {}",
                nimfa.t_end()
            )));
        }
        let n = nimfa.n_vertices();
        let target = grid.iter().map(|&t| nimfa.mean(t.min(nimfa.t_end()))).collect();
        Ok(ErrorAccumulator {
            n_vertices: n,
            n_states: nimfa.n_states(),
            grid: grid.to_vec(),
            horizon,
            target,
            instance: None,
            disagreed: Vec::new(),
            disagree_counts: vec![0; n],
            mismatch_counts: vec![vec![0; n]; grid.len()],
            gap_sums: None,
            density: Vec::new(),
            concentration: Vec::new(),
        })
    }

    pub fn replicas(&self) -> usize {
        self.density.len()
    }

    fn check_instance(&mut self, instance: Option<u64>) -> Result<()> {
        match (self.instance, instance) {
            (Some(a), Some(b)) if a != b => Err(Error::Input(format!(
                "runs come from different instances ({a:016x} and {b:016x})"
            ))),
            (None, b) => {
                self.instance = b;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn l1_gap(&self, g: usize, counts: &[usize]) -> f64 {
        let n = self.n_vertices as f64;
        counts
            .iter()
            .zip(&self.target[g])
            .map(|(&c, &z)| (c as f64 / n - z).abs())
            .sum()
    }

    pub fn add(&mut self, run: &CoupledRun) -> Result<()> {
        if run.xi.n_vertices() != self.n_vertices || run.xi.n_states != self.n_states {
            return Err(Error::Input(format!(
                "run has {} vertices and {} states, expected {} and {}",
                run.xi.n_vertices(),
                run.xi.n_states,
                self.n_vertices,
                self.n_states
            )));
        }
        if run.xi.grid != self.grid || run.xi_hat.grid != self.grid {
            return Err(Error::Input("run was observed on a different grid".into()));
        }
        self.check_instance(Some(run.instance))?;

        let mut hit = Vec::new();
        for (i, d) in run.disagreement.iter().enumerate() {
            if d.is_some_and(|t| t <= self.horizon) {
                hit.push(i as u32);
                self.disagree_counts[i] += 1;
            }
        }
        self.disagreed.push(hit);
        for (g, list) in run.grid_mismatch.iter().enumerate() {
            for &i in list {
                self.mismatch_counts[g][i] += 1;
            }
        }
        if let Some(gaps) = &run.neighborhood_gaps {
            let sums = self
                .gap_sums
                .get_or_insert_with(|| gaps.iter().map(|row| row.iter().map(|v| vec![0.0; v.len()]).collect()).collect());
            for (sg, rg) in sums.iter_mut().zip(gaps) {
                for (sm, rm) in sg.iter_mut().zip(rg) {
                    for (s, r) in sm.iter_mut().zip(rm) {
                        *s += r;
                    }
                }
            }
        }
        let sup = |counts: &[Vec<usize>]| {
            (0..self.grid.len())
                .map(|g| self.l1_gap(g, &counts[g]))
                .fold(0.0, f64::max)
        };
        let d = sup(&run.xi.grid_counts);
        let c = sup(&run.xi_hat.grid_counts);
        self.density.push(d);
        self.concentration.push(c);
        Ok(())
    }

    /// Appends the replicas of `other` after those already held.
    pub fn merge(&mut self, other: ErrorAccumulator) -> Result<()> {
        if other.n_vertices != self.n_vertices || other.grid != self.grid {
            return Err(Error::Input("accumulators describe different instances".into()));
        }
        self.check_instance(other.instance)?;
        for (a, b) in self.disagree_counts.iter_mut().zip(&other.disagree_counts) {
            *a += b;
        }
        for (ra, rb) in self.mismatch_counts.iter_mut().zip(&other.mismatch_counts) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        match (&mut self.gap_sums, other.gap_sums) {
            (Some(a), Some(b)) => {
                for (ag, bg) in a.iter_mut().zip(b) {
                    for (am, bm) in ag.iter_mut().zip(bg) {
                        for (x, y) in am.iter_mut().zip(bm) {
                            *x += y;
                        }
                    }
                }
            }
            (None, Some(b)) if self.density.is_empty() => self.gap_sums = Some(b),
            (None, None) => {}
            _ => return Err(Error::Input("only some runs recorded neighborhood gaps".into())),
        }
        self.disagreed.extend(other.disagreed);
        self.density.extend(other.density);
        self.concentration.extend(other.concentration);
        Ok(())
    }

    pub fn report(&self) -> Result<ErrorReport> {
        let r = self.replicas();
        if r < 2 {
            return Err(Error::Input(format!("need at least 2 replicas, got {r}")));
        }
        let rf = r as f64;
        let n = self.n_vertices as f64;
        let p_hat: Vec<f64> = self.disagree_counts.iter().map(|&c| c as f64 / rf).collect();
        let p_hat_stderr: Vec<f64> = p_hat.iter().map(|&p| (p * (1.0 - p) / rf).sqrt()).collect();
        let (arg, p_max) = p_hat
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p > acc.1 { (i, p) } else { acc });
        let fractions: Vec<f64> = self.disagreed.iter().map(|d| d.len() as f64 / n).collect();
        let (p_mean, p_mean_stderr) = mean_stderr(&fractions);
        let (density_error, density_error_stderr) = mean_stderr(&self.density);
        let (concentration_gap, concentration_gap_stderr) = mean_stderr(&self.concentration);
        let d0_max = self
            .mismatch_counts
            .iter()
            .flat_map(|row| row.iter())
            .map(|&c| 2.0 * c as f64 / rf)
            .fold(0.0, f64::max);
        let d_max_by_order = self.gap_sums.as_ref().map(|sums| {
            let orders = sums.first().map_or(0, Vec::len);
            (0..orders)
                .map(|m| {
                    sums.iter()
                        .flat_map(|g| g[m].iter())
                        .map(|&s| s / rf)
                        .fold(0.0, f64::max)
                })
                .collect()
        });
        Ok(ErrorReport {
            replicas: r,
            n_vertices: self.n_vertices,
            horizon: self.horizon,
            grid_points: self.grid.len(),
            p_max_stderr: p_hat_stderr.get(arg).copied().unwrap_or(0.0),
            p_max: p_max.max(0.0),
            p_hat,
            p_hat_stderr,
            p_mean,
            p_mean_stderr,
            density_error,
            density_error_stderr,
            concentration_gap,
            concentration_gap_stderr,
            d0_max,
            d_max_by_order,
        })
    }

    /// Bootstrap replicates of `max_i p̂_i`, resampling replicas with replacement.
    pub fn bootstrap_p_max(&self, resamples: usize, seed: u64) -> Vec<f64> {
        let r = self.replicas();
        if r == 0 {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u32; self.n_vertices];
        (0..resamples)
            .map(|_| {
                counts.fill(0);
                for _ in 0..r {
                    for &i in &self.disagreed[rng.random_range(0..r)] {
                        counts[i as usize] += 1;
                    }
                }
                *counts.iter().max().unwrap_or(&0) as f64 / r as f64
            })
            .collect()
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Error estimates from a set of coupled runs observed on `t_grid`.
pub fn estimate_errors(runs: &[CoupledRun], nimfa: &NimfaSolution, t_grid: &[f64]) -> Result<ErrorReport> {
    let mut acc = ErrorAccumulator::new(nimfa, t_grid)?;
    for run in runs {
        acc.add(run)?;
    }
    acc.report()
}

/// Ingredients of the error bounds for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub sqrt_wmax: f64,
    /// `sqrt((1/N) Σ_i Σ_j w_ij²)`.
    pub frobenius_bound: f64,
    pub mu_inf: f64,
    pub mu_2: f64,
    /// `2|S| / sqrt(N)`.
    pub concentration_bound: f64,
    /// `‖W‖_∞`, the largest order-1 row sum.
    pub w_inf_norm: f64,
    /// Power-iteration estimate of `‖W‖₂`.
    pub w_2_norm: f64,
    pub w_inf_within_delta_max: bool,
    pub w_2_within_geometric_mean: bool,
    pub delta_max: f64,
    pub delta_max_out: f64,
    pub sloop_ratio: f64,
    pub t: f64,
}

fn spectral_norm(h: &WeightedHypergraph) -> f64 {
    let n = h.n_vertices();
    if n == 0 || h.edge_count(1) == 0 {
        return 0.0;
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    let mut sigma = 0.0;
    for _ in 0..500 {
        // y = W x, then x = Wᵀ y
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = h.edges(i, 1).map(|(t, w)| w * x[t[0]]).sum();
        }
        x.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            for (t, w) in h.edges(i, 1) {
                x[t[0]] += w * yi;
            }
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Evaluates the bound ingredients for `h` with `n_states` local states at time `t`.
pub fn evaluate_bounds(h: &WeightedHypergraph, n_states: usize, t: f64) -> BoundReport {
    let reg = regularity_report(h);
    let n = h.n_vertices() as f64;
    let w_inf_norm = (0..h.n_vertices())
        .map(|i| h.edges(i, 1).map(|(_, w)| w).sum::<f64>())
        .fold(0.0, f64::max);
    let w_2_norm = spectral_norm(h);
    let tol = 1e-9 * (1.0 + reg.delta_max);
    BoundReport {
        sqrt_wmax: reg.w_max.sqrt(),
        frobenius_bound: reg.frobenius_sq.sqrt(),
        mu_inf: reg.mu.iter().copied().fold(0.0, f64::max),
        mu_2: reg.mu.iter().map(|m| m * m).sum::<f64>().sqrt(),
        concentration_bound: if n > 0.0 { 2.0 * n_states as f64 / n.sqrt() } else { 0.0 },
        w_inf_norm,
        w_2_norm,
        w_inf_within_delta_max: w_inf_norm <= reg.delta_max + tol,
        w_2_within_geometric_mean: w_2_norm <= (reg.delta_max_out * reg.delta_max).sqrt() + tol,
        delta_max: reg.delta_max,
        delta_max_out: reg.delta_max_out,
        sloop_ratio: reg.sloop_ratio,
        t,
    }
}

/// One instance of a scaling study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub size: f64,
    pub value: f64,
    /// Bootstrap replicates of `value`; may be empty.
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Slope of `log(value)` against `log(size)`.
    pub exponent: f64,
    pub prefactor: f64,
    /// 95% interval: bootstrap percentiles when replicates are given, otherwise a normal interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points_used: usize,
}

fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Least-squares power-law fit `value ≈ prefactor · size^exponent`.
pub fn fit_scaling(points: &[ScalingPoint]) -> Result<ScalingFit> {
    let usable: Vec<&ScalingPoint> = points
        .iter()
        .filter(|p| {
            let ok = p.value > 0.0 && p.size > 0.0 && p.value.is_finite();
            if !ok {
                log::warn!("dropping scaling point size={} value={}", p.size, p.value);
            }
            ok
        })
        .collect();
    let mut sizes: Vec<f64> = usable.iter().map(|p| p.size).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 distinct sizes with positive values, got {}",
            sizes.len()
        )));
    }
    let x: Vec<f64> = usable.iter().map(|p| p.size.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.value.ln()).collect();
    let (exponent, intercept) = ols_slope(&x, &y);

    let b = usable.iter().map(|p| p.replicates.len()).min().unwrap_or(0);
    let (ci_low, ci_high) = if b > 0 {
        let mut slopes: Vec<f64> = (0..b)
            .filter_map(|k| {
                let yb: Option<Vec<f64>> = usable
                    .iter()
                    .map(|p| (p.replicates[k] > 0.0).then(|| p.replicates[k].ln()))
                    .collect();
                yb.map(|yb| ols_slope(&x, &yb).0)
            })
            .collect();
        if slopes.is_empty() {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            slopes.sort_by(f64::total_cmp);
            (percentile(&slopes, 0.025), percentile(&slopes, 0.975))
        }
    } else {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let rss: f64 = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (b - intercept - exponent * a).powi(2))
            .sum();
        let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
        (exponent - 1.96 * se, exponent + 1.96 * se)
    };
    Ok(ScalingFit {
        exponent,
        prefactor: intercept.exp(),
        ci_low,
        ci_high,
        points_used: usable.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{generate, Convention, Family};

    fn point(size: f64, value: f64) -> ScalingPoint {
        ScalingPoint { size, value, replicates: vec![] }
    }

    #[test]
    fn planted_inverse_square_root() {
        let pts: Vec<_> = [100.0, 400.0, 1600.0].iter().map(|&n: &f64| point(n, 3.0 / n.sqrt())).collect();
        let fit = fit_scaling(&pts).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-9);
    }

    #[test]
    fn constant_data_has_zero_exponent() {
        let pts: Vec<_> = [10.0, 20.0, 40.0, 80.0].iter().map(|&n| point(n, 0.7)).collect();
        assert!(fit_scaling(&pts).unwrap().exponent.abs() < 1e-12);
    }

    #[test]
    fn too_few_usable_points() {
        let pts = vec![point(1.0, 1.0), point(2.0, 0.0), point(3.0, 2.0)];
        assert!(matches!(fit_scaling(&pts), Err(Error::Fit(_))));
    }

    #[test]
    fn bootstrap_interval_covers_planted_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = [100.0f64, 400.0, 1600.0]
            .iter()
            .map(|&n| {
                let v = n.powf(-0.5);
                ScalingPoint {
                    size: n,
                    value: v,
                    replicates: (0..500).map(|_| v * (1.0 + 0.05 * (rng.random::<f64>() - 0.5))).collect(),
                }
            })
            .collect();
        let fit = fit_scaling(&pts).unwrap();
        assert!(fit.ci_low <= -0.5 && -0.5 <= fit.ci_high);
        assert!(fit.ci_high - fit.ci_low < 0.1);
    }

    #[test]
    fn complete_graph_bounds() {
        let h = generate(&Family::Complete { n: 101 }, Convention::One, 0).unwrap();
        let b = evaluate_bounds(&h, 2, 1.0);
        assert!((b.sqrt_wmax - 0.1).abs() < 1e-12);
        assert!((b.w_2_norm - 1.0).abs() < 1e-9);
        assert!(b.w_inf_within_delta_max && b.w_2_within_geometric_mean);
    }

    #[test]
    fn ring_bounds() {
        let h = generate(&Family::Ring { n: 50, k: 10 }, Convention::One, 0).unwrap();
        let b = evaluate_bounds(&h, 2, 1.0);
        assert!((b.sqrt_wmax - (1.0f64 / 20.0).sqrt()).abs() < 1e-12);
        assert!((b.mu_inf - 1.0 / 20f64.sqrt()).abs() < 1e-12);
        assert!((b.frobenius_bound - 1.0 / 20f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn convention_two_frobenius() {
        let h = generate(&Family::ErdosRenyi { n: 60, p: 0.1 }, Convention::Two, 9).unwrap();
        let deg = crate::hypergraph::degree_report(&h);
        let expected = (deg.d[0].iter().filter(|&&d| d > 0.0).map(|d| 1.0 / d).sum::<f64>() / 60.0).sqrt();
        let b = evaluate_bounds(&h, 2, 1.0);
        assert!((b.frobenius_bound - expected).abs() < 1e-12);
        assert!(b.frobenius_bound <= (b.sqrt_wmax.powi(2) * b.delta_max).sqrt() + 1e-12);
    }
}
