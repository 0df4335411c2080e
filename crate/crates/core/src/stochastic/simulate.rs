//! Exact simulation by thinning, and the coupled auxiliary process.
//!
//! Every vertex owns a strip of length `L_i = Σ Λ_{i,s'→s}`, one interval per
//! ordered channel `s' → s`, where `Λ` bounds the channel rate over all
//! neighborhoods the vertex can see. Candidate events arrive at total rate
//! `Σ_i L_i`; each lands on a vertex, a channel and carries a uniform mark
//! `u`. The process accepts the candidate when the vertex is in `s'` and
//! `u Λ < q_{s'→s}(φ_i)`. The coupled process reads the same candidates and
//! accepts with `ζ_i(τ)` in place of `φ_i`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::replicas::replica_rng;
use super::state::{Event, PopulationState, Trajectory};
use crate::error::{Error, Result};
use crate::hypergraph::WeightedHypergraph;
use crate::meanfield::{NimfaSolution, ZetaTrack};
use crate::models::{neighborhood_len, order_offset, tuple_count, Neighborhood, RateModel};

/// Relative slack allowed when interpolated `ζ` pushes a rate past its bound.
const ZETA_BOUND_SLACK: f64 = 1e-6;

/// What to record during a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOptions {
    /// Observation times, ascending.
    pub grid: Vec<f64>,
    pub record_events: bool,
    /// Keep the full state vector at every observation time.
    pub snapshots: bool,
    /// Coupled runs only: record `‖φ_i^{(m)} - ζ_i^{(m)}‖₁` at the observation times.
    pub neighborhood_gaps: bool,
}

impl SimOptions {
    /// `points` equally spaced observation times from 0 to `t_end` inclusive.
    pub fn uniform_grid(t_end: f64, points: usize) -> Vec<f64> {
        match points {
            0 => Vec::new(),
            1 => vec![t_end],
            _ => (0..points)
                .map(|k| t_end * k as f64 / (points - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Channel {
    from: usize,
    to: usize,
    bound: f64,
}

#[derive(Debug, Clone, Copy)]
struct ReverseEntry {
    head: u32,
    order: u32,
    edge: u32,
}

/// Precomputed thinning tables for one hypergraph and model.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    h: &'a WeightedHypergraph,
    model: &'a RateModel,
    n_states: usize,
    orders: usize,
    len: usize,
    channels: Vec<Channel>,
    channel_offsets: Vec<usize>,
    vertex_cum: Vec<f64>,
    rev_offsets: Vec<usize>,
    rev: Vec<ReverseEntry>,
}

/// State plus incrementally maintained neighborhood vectors.
struct LiveState<'s, 'a> {
    sim: &'s Simulator<'a>,
    states: Vec<usize>,
    phi: Vec<f64>,
}

impl<'s, 'a> LiveState<'s, 'a> {
    fn new(sim: &'s Simulator<'a>, states: Vec<usize>) -> Self {
        let n = sim.n_states;
        let mut phi = vec![0.0; sim.h.n_vertices() * sim.len];
        for m in 1..=sim.orders {
            let off = order_offset(n, m);
            for i in 0..sim.h.n_vertices() {
                for (tail, w) in sim.h.edges(i, m) {
                    let idx = tail.iter().fold(0, |acc, &j| acc * n + states[j]);
                    phi[i * sim.len + off + idx] += w;
                }
            }
        }
        LiveState { sim, states, phi }
    }

    fn phi(&self, i: usize) -> &[f64] {
        &self.phi[i * self.sim.len..(i + 1) * self.sim.len]
    }

    fn flip(&mut self, j: usize, to: usize) {
        let sim = self.sim;
        let n = sim.n_states;
        for e in &sim.rev[sim.rev_offsets[j]..sim.rev_offsets[j + 1]] {
            let m = e.order as usize;
            let (_, tails, weights) = sim.h.order_arrays(m);
            let edge = e.edge as usize;
            let tail = &tails[edge * m..(edge + 1) * m];
            let mut old = 0;
            let mut new = 0;
            for &k in tail {
                let s = self.states[k];
                old = old * n + s;
                new = new * n + if k == j { to } else { s };
            }
            if old != new {
                let base = e.head as usize * sim.len + order_offset(n, m);
                self.phi[base + old] -= weights[edge];
                self.phi[base + new] += weights[edge];
            }
        }
        self.states[j] = to;
    }
}

/// Output of a coupled run of `ξ` and `ξ̂`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledRun {
    /// Replica seed the run was generated from.
    pub seed: u64,
    /// Digest of hypergraph, model and mean-field solution.
    pub instance: u64,
    pub xi: Trajectory,
    pub xi_hat: Trajectory,
    /// First time `ξ_i ≠ ξ̂_i`, if any.
    pub disagreement: Vec<Option<f64>>,
    /// Vertices with `ξ_i ≠ ξ̂_i` at each observation time.
    pub grid_mismatch: Vec<Vec<usize>>,
    /// `‖φ_i^{(m)}(τ_g) - ζ_i^{(m)}(τ_g)‖₁`, indexed `[g][m-1][i]`, when requested.
    pub neighborhood_gaps: Option<Vec<Vec<Vec<f64>>>>,
}

impl CoupledRun {
    pub fn first_disagreement(&self) -> Option<f64> {
        self.disagreement
            .iter()
            .flatten()
            .copied()
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    }
}

fn check_rate(q: f64, bound: f64, slack: f64, model: &RateModel, ch: &Channel) -> Result<f64> {
    if q.is_nan() || q < -1e-9 {
        return Err(Error::Model(format!(
            "the {} model returned rate {q} for {} -> {}",
            model.name(),
            ch.from,
            ch.to
        )));
    }
    if q > bound * (1.0 + slack) + 1e-12 {
        return Err(Error::Model(format!(
            "the {} model returned rate {q} for {} -> {}, above its bound {bound}",
            model.name(),
            ch.from,
            ch.to
        )));
    }
    Ok(q.clamp(0.0, bound))
}

impl<'a> Simulator<'a> {
    pub fn new(h: &'a WeightedHypergraph, model: &'a RateModel) -> Result<Self> {
        for m in model.max_order() + 1..=h.max_order() {
            if h.edge_count(m) > 0 {
                return Err(Error::Input(format!(
                    "the hypergraph has order-{m} edges but the {} model only reads orders up to {}",
                    model.name(),
                    model.max_order()
                )));
            }
        }
        let n = h.n_vertices();
        let n_states = model.n_states();
        let orders = model.max_order().min(h.max_order());
        let delta = h.in_weights();

        let mut channels = Vec::new();
        let mut channel_offsets = vec![0];
        let mut vertex_cum = vec![0.0];
        for d in &delta {
            let mut d = d.clone();
            d.resize(model.max_order(), 0.0);
            let mut strip = 0.0;
            for from in 0..n_states {
                for to in 0..n_states {
                    let bound = model.rate_upper_bound(from, to, &d);
                    if from != to && bound > 0.0 {
                        if !bound.is_finite() {
                            return Err(Error::Model(format!(
                                "rate bound for {from} -> {to} is not finite"
                            )));
                        }
                        channels.push(Channel { from, to, bound });
                        strip += bound;
                    }
                }
            }
            channel_offsets.push(channels.len());
            vertex_cum.push(vertex_cum.last().unwrap() + strip);
        }

        let mut counts = vec![0usize; n + 1];
        let mut entries: Vec<(usize, ReverseEntry)> = Vec::new();
        for m in 1..=orders {
            let (offsets, tails, _) = h.order_arrays(m);
            for head in 0..n {
                for edge in offsets[head]..offsets[head + 1] {
                    let tail = &tails[edge * m..(edge + 1) * m];
                    for (k, &j) in tail.iter().enumerate() {
                        if tail[..k].contains(&j) {
                            continue;
                        }
                        counts[j + 1] += 1;
                        entries.push((
                            j,
                            ReverseEntry {
                                head: head as u32,
                                order: m as u32,
                                edge: edge as u32,
                            },
                        ));
                    }
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let rev_offsets = counts.clone();
        let mut cursor = counts;
        let placeholder = ReverseEntry {
            head: 0,
            order: 0,
            edge: 0,
        };
        let mut rev = vec![placeholder; entries.len()];
        for (j, e) in entries {
            rev[cursor[j]] = e;
            cursor[j] += 1;
        }

        Ok(Simulator {
            h,
            model,
            n_states,
            orders,
            len: neighborhood_len(n_states, model.max_order()),
            channels,
            channel_offsets,
            vertex_cum,
            rev_offsets,
            rev,
        })
    }

    /// Total candidate rate `Σ_i L_i`.
    pub fn candidate_rate(&self) -> f64 {
        *self.vertex_cum.last().unwrap()
    }

    fn check_init(&self, init: &PopulationState) -> Result<()> {
        if init.n_vertices() != self.h.n_vertices() {
            return Err(Error::Input(format!(
                "initial state has {} vertices, the hypergraph has {}",
                init.n_vertices(),
                self.h.n_vertices()
            )));
        }
        if init.states.iter().any(|&s| s >= self.n_states) {
            return Err(Error::Input("initial state outside the model's state space".into()));
        }
        Ok(())
    }

    fn check_grid(grid: &[f64], t_end: f64) -> Result<()> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Parameter(format!("t_end must be positive, got {t_end}")));
        }
        if grid.windows(2).any(|w| w[1] < w[0]) || grid.iter().any(|&g| !(0.0..=t_end).contains(&g)) {
            return Err(Error::Parameter(
                "observation grid must be ascending within [0, t_end]".into(),
            ));
        }
        Ok(())
    }

    /// Draws the next candidate: `(time increment, vertex, channel index, mark)`.
    fn candidate<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize, usize, f64) {
        let total = self.candidate_rate();
        let dt = -(1.0 - rng.random::<f64>()).ln() / total;
        let x = rng.random::<f64>() * total;
        let n = self.h.n_vertices();
        let mut i = self.vertex_cum.partition_point(|&c| c <= x).saturating_sub(1).min(n - 1);
        while self.vertex_cum[i + 1] <= self.vertex_cum[i] {
            i -= 1;
        }
        let mut y = x - self.vertex_cum[i];
        let (lo, hi) = (self.channel_offsets[i], self.channel_offsets[i + 1]);
        let mut c = hi - 1;
        for k in lo..hi {
            if y < self.channels[k].bound {
                c = k;
                break;
            }
            y -= self.channels[k].bound;
        }
        let u = rng.random::<f64>();
        (dt, i, c, u)
    }

    fn counts(&self, states: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_states];
        for &s in states {
            c[s] += 1;
        }
        c
    }

    /// One realization of `ξ` on `[0, t_end]`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        init: &PopulationState,
        t_end: f64,
        rng: &mut R,
        opts: &SimOptions,
    ) -> Result<Trajectory> {
        self.check_init(init)?;
        Self::check_grid(&opts.grid, t_end)?;
        let mut live = LiveState::new(self, init.states.clone());
        let mut traj = Trajectory {
            n_states: self.n_states,
            initial: init.clone(),
            final_state: init.clone(),
            events: Vec::new(),
            event_count: 0,
            candidate_count: 0,
            grid: opts.grid.clone(),
            grid_counts: Vec::with_capacity(opts.grid.len()),
            snapshots: Vec::new(),
        };
        let mut next_grid = 0;
        let mut observe = |upto: f64, states: &[usize], traj: &mut Trajectory, inclusive: bool| {
            while next_grid < opts.grid.len()
                && (opts.grid[next_grid] < upto || (inclusive && opts.grid[next_grid] <= upto))
            {
                traj.grid_counts.push(self.counts(states));
                if opts.snapshots {
                    traj.snapshots.push(states.to_vec());
                }
                next_grid += 1;
            }
        };
        let mut t = init.time;
        if self.candidate_rate() > 0.0 {
            loop {
                let (dt, i, c, u) = self.candidate(rng);
                t += dt;
                observe(t.min(t_end), &live.states, &mut traj, false);
                if t > t_end {
                    break;
                }
                traj.candidate_count += 1;
                let ch = self.channels[c];
                if live.states[i] != ch.from {
                    continue;
                }
                let phi = Neighborhood::new(self.n_states, live.phi(i));
                let q = check_rate(self.model.rate(ch.from, ch.to, &phi), ch.bound, 1e-9, self.model, &ch)?;
                if u * ch.bound < q {
                    live.flip(i, ch.to);
                    traj.event_count += 1;
                    if opts.record_events {
                        traj.events.push(Event {
                            time: t,
                            vertex: i,
                            from: ch.from,
                            to: ch.to,
                        });
                    }
                }
            }
        }
        observe(t_end, &live.states, &mut traj, true);
        traj.final_state = PopulationState {
            states: live.states,
            time: t_end,
        };
        Ok(traj)
    }

    fn instance_digest(&self, track: &ZetaTrack) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.h.fingerprint().hash(&mut hasher);
        format!("{:?}", self.model).hash(&mut hasher);
        track.t_end().to_bits().hash(&mut hasher);
        hasher.finish()
    }

    /// One realization of the pair `(ξ, ξ̂)` driven by the same candidates.
    pub fn run_coupled<R: Rng + ?Sized>(
        &self,
        init: &PopulationState,
        track: &ZetaTrack,
        t_end: f64,
        rng: &mut R,
        opts: &SimOptions,
    ) -> Result<CoupledRun> {
        self.check_init(init)?;
        Self::check_grid(&opts.grid, t_end)?;
        if track.t_end() < t_end * (1.0 - 1e-12) {
            return Err(Error::Input(format!(
                "mean-field solution ends at {} before t_end = {t_end}",
                track.t_end()
            )));
        }
        if track.neighborhood_len() != self.len {
            return Err(Error::Input("mean-field solution was computed for another model".into()));
        }
        let n = self.h.n_vertices();
        let ns = self.n_states;
        let mut xi = LiveState::new(self, init.states.clone());
        let mut hat = init.states.clone();
        let empty = || Trajectory {
            n_states: ns,
            initial: init.clone(),
            final_state: init.clone(),
            events: Vec::new(),
            event_count: 0,
            candidate_count: 0,
            grid: opts.grid.clone(),
            grid_counts: Vec::with_capacity(opts.grid.len()),
            snapshots: Vec::new(),
        };
        let mut run = CoupledRun {
            seed: 0,
            instance: self.instance_digest(track),
            xi: empty(),
            xi_hat: empty(),
            disagreement: vec![None; n],
            grid_mismatch: Vec::with_capacity(opts.grid.len()),
            neighborhood_gaps: opts.neighborhood_gaps.then(Vec::new),
        };
        let mut zeta = vec![0.0; self.len];
        let mut next_grid = 0;
        let mut observe = |upto: f64, inclusive: bool, xi: &LiveState, hat: &[usize], run: &mut CoupledRun| {
            while next_grid < opts.grid.len()
                && (opts.grid[next_grid] < upto || (inclusive && opts.grid[next_grid] <= upto))
            {
                let tau = opts.grid[next_grid];
                run.xi.grid_counts.push(self.counts(&xi.states));
                run.xi_hat.grid_counts.push(self.counts(hat));
                if opts.snapshots {
                    run.xi.snapshots.push(xi.states.clone());
                    run.xi_hat.snapshots.push(hat.to_vec());
                }
                run.grid_mismatch
                    .push((0..n).filter(|&i| xi.states[i] != hat[i]).collect());
                if let Some(gaps) = run.neighborhood_gaps.as_mut() {
                    let k = track.locate(tau, 0);
                    let mut per_order = vec![vec![0.0; n]; self.model.max_order()];
                    let mut z = vec![0.0; self.len];
                    for i in 0..n {
                        track.eval_into(i, tau, k, &mut z);
                        let phi = xi.phi(i);
                        for (mi, row) in per_order.iter_mut().enumerate() {
                            let off = order_offset(ns, mi + 1);
                            let len = tuple_count(ns, mi + 1);
                            row[i] = (off..off + len).map(|x| (phi[x] - z[x]).abs()).sum();
                        }
                    }
                    gaps.push(per_order);
                }
                next_grid += 1;
            }
        };

        let mut t = init.time;
        let mut k = 0;
        if self.candidate_rate() > 0.0 {
            loop {
                let (dt, i, c, u) = self.candidate(rng);
                t += dt;
                observe(t.min(t_end), false, &xi, &hat, &mut run);
                if t > t_end {
                    break;
                }
                run.xi.candidate_count += 1;
                run.xi_hat.candidate_count += 1;
                let ch = self.channels[c];
                let threshold = u * ch.bound;
                let xi_jumps = xi.states[i] == ch.from && {
                    let phi = Neighborhood::new(ns, xi.phi(i));
                    threshold < check_rate(self.model.rate(ch.from, ch.to, &phi), ch.bound, 1e-9, self.model, &ch)?
                };
                let hat_jumps = hat[i] == ch.from && {
                    k = track.locate(t, k);
                    track.eval_into(i, t, k, &mut zeta);
                    let phi = Neighborhood::new(ns, &zeta);
                    let q = self.model.rate(ch.from, ch.to, &phi);
                    threshold < check_rate(q, ch.bound, ZETA_BOUND_SLACK, self.model, &ch)?
                };
                let event = Event {
                    time: t,
                    vertex: i,
                    from: ch.from,
                    to: ch.to,
                };
                if xi_jumps {
                    xi.flip(i, ch.to);
                    run.xi.event_count += 1;
                    if opts.record_events {
                        run.xi.events.push(event);
                    }
                }
                if hat_jumps {
                    hat[i] = ch.to;
                    run.xi_hat.event_count += 1;
                    if opts.record_events {
                        run.xi_hat.events.push(event);
                    }
                }
                if run.disagreement[i].is_none() && xi.states[i] != hat[i] {
                    run.disagreement[i] = Some(t);
                }
            }
        }
        observe(t_end, true, &xi, &hat, &mut run);
        run.xi.final_state = PopulationState {
            states: xi.states,
            time: t_end,
        };
        run.xi_hat.final_state = PopulationState {
            states: hat,
            time: t_end,
        };
        Ok(run)
    }
}

/// One realization of `ξ` with events recorded, seeded by `seed`.
pub fn simulate(
    h: &WeightedHypergraph,
    model: &RateModel,
    init: &PopulationState,
    t_end: f64,
    seed: u64,
) -> Result<Trajectory> {
    let opts = SimOptions {
        record_events: true,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Simulator::new(h, model)?.run(init, t_end, &mut rng, &opts)
}

/// One coupled realization with events recorded, seeded by `seed`.
pub fn simulate_coupled(
    h: &WeightedHypergraph,
    model: &RateModel,
    init: &PopulationState,
    nimfa: &NimfaSolution,
    t_end: f64,
    seed: u64,
) -> Result<CoupledRun> {
    let track = nimfa.zeta_track(h)?;
    let opts = SimOptions {
        record_events: true,
        ..Default::default()
    };
    let mut rng = replica_rng(seed, 0);
    let mut run = Simulator::new(h, model)?.run_coupled(init, &track, t_end, &mut rng, &opts)?;
    run.seed = seed;
    Ok(run)
}
