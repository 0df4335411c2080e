use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// One local state per vertex at a given time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationState {
    pub states: Vec<usize>,
    pub time: f64,
}

impl PopulationState {
    pub fn new(states: Vec<usize>, n_states: usize) -> Result<Self> {
        if let Some(i) = states.iter().position(|&s| s >= n_states) {
            return Err(Error::Input(format!(
                "vertex {i} has state {} outside 0..{n_states}",
                states[i]
            )));
        }
        Ok(PopulationState { states, time: 0.0 })
    }

    /// Every vertex in state `s`.
    pub fn uniform(n_vertices: usize, s: usize) -> Self {
        PopulationState {
            states: vec![s; n_vertices],
            time: 0.0,
        }
    }

    /// Independent draws `ξ_i(0) ~ z_i`.
    pub fn sample_independent<R: Rng + ?Sized>(z: &[Vec<f64>], rng: &mut R) -> Self {
        let states = z
            .iter()
            .map(|zi| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (s, &p) in zi.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return s;
                    }
                }
                // rounding left a sliver above the cumulative sum
                zi.iter().rposition(|&p| p > 0.0).unwrap_or(0)
            })
            .collect();
        PopulationState { states, time: 0.0 }
    }

    pub fn n_vertices(&self) -> usize {
        self.states.len()
    }

    pub fn counts(&self, n_states: usize) -> Vec<usize> {
        let mut c = vec![0; n_states];
        for &s in &self.states {
            c[s] += 1;
        }
        c
    }
}

/// A single accepted transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub vertex: usize,
    pub from: usize,
    pub to: usize,
}

/// Output of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub n_states: usize,
    pub initial: PopulationState,
    pub final_state: PopulationState,
    /// Accepted events in time order; empty unless event recording was requested.
    pub events: Vec<Event>,
    pub event_count: usize,
    /// Candidate events drawn from the dominating process.
    pub candidate_count: usize,
    /// Observation times.
    pub grid: Vec<f64>,
    /// State counts at each observation time, `[g][s]`.
    pub grid_counts: Vec<Vec<usize>>,
    /// Full states at each observation time when requested, `[g][i]`.
    pub snapshots: Vec<Vec<usize>>,
}

impl Trajectory {
    pub fn n_vertices(&self) -> usize {
        self.initial.n_vertices()
    }

    /// State fractions at the observation times, `[g][s]`.
    pub fn grid_fractions(&self) -> Vec<Vec<f64>> {
        let n = self.n_vertices() as f64;
        self.grid_counts
            .iter()
            .map(|c| c.iter().map(|&x| x as f64 / n).collect())
            .collect()
    }

    /// Piecewise-constant state fractions: the value at `(t, f)` holds until the next entry.
    /// Built from the event log, so it needs recorded events.
    pub fn prevalence_series(&self) -> Vec<(f64, Vec<f64>)> {
        let n = self.n_vertices() as f64;
        let mut counts = self.initial.counts(self.n_states);
        let frac = |c: &[usize]| c.iter().map(|&x| x as f64 / n).collect::<Vec<_>>();
        let mut out = vec![(self.initial.time, frac(&counts))];
        for e in &self.events {
            counts[e.from] -= 1;
            counts[e.to] += 1;
            out.push((e.time, frac(&counts)));
        }
        out
    }

    /// Replays the event log up to and including time `t`.
    pub fn state_at(&self, t: f64) -> Vec<usize> {
        let mut s = self.initial.states.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            s[e.vertex] = e.to;
        }
        s
    }
}
