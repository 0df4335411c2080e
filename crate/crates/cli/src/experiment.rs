//! Runs the outputs a configuration asks for and writes them to disk.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use nimfa::analysis::{evaluate_bounds, fit_scaling, ErrorAccumulator, ErrorReport, ScalingPoint, BOOTSTRAP_RESAMPLES};
use nimfa::hypergraph::{format::write_hypergraph, regularity_report, WeightedHypergraph};
use nimfa::meanfield::{
    activity_solve, group_means, hmfa_solve, imfa_solve, metapop_reduce, metapop_solve, nimfa_solve, partition_reduce, NimfaSolution,
    OdeOptions, PartitionSpec, ReducedSolution, VertexClasses,
};
use nimfa::models::RateModel;
use nimfa::stochastic::{
    master_solve, product_distribution, run_replicas, Event, PopulationState, SimOptions, Simulator,
};

use crate::config::{Diagnostic, Loaded, OutputSpec};
use crate::output::{num, Writer, VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Generate,
    Simulate,
    Nimfa,
    Reduce,
    Couple,
    Analyze,
    Run,
}

#[derive(Debug)]
pub enum CliError {
    Validation(Vec<Diagnostic>),
    Core(nimfa::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(d) if !d.is_empty() && d.iter().all(|d| d.capacity) => 3,
            CliError::Validation(_) => 2,
            CliError::Core(nimfa::Error::Capacity { .. }) => 3,
            CliError::Core(nimfa::Error::Integration { .. } | nimfa::Error::Fit(_)) => 4,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(ds) => {
                for (k, d) in ds.iter().enumerate() {
                    if k > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "invalid config: {d}")?;
                }
                Ok(())
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<nimfa::Error> for CliError {
    fn from(e: nimfa::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<Diagnostic> for CliError {
    fn from(d: Diagnostic) -> Self {
        CliError::Validation(vec![d])
    }
}

#[derive(Debug, Serialize)]
pub struct InstanceSummary {
    pub n_vertices: usize,
    pub max_order: usize,
    pub edge_counts: Vec<usize>,
    pub w_max: f64,
    pub delta_max: f64,
    pub delta_max_out: f64,
    pub sloop_ratio: f64,
    pub frobenius_sq: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub outputs: BTreeMap<String, String>,
    pub timings_seconds: BTreeMap<String, f64>,
    pub instance: InstanceSummary,
}

/// The outputs a task produces; `run` takes them from the config.
fn outputs_for(task: Task, config: &OutputSpec) -> OutputSpec {
    let mut o = OutputSpec::default();
    match task {
        Task::Generate => o.network = true,
        Task::Simulate => o.trajectories = true,
        Task::Nimfa => o.nimfa = true,
        Task::Reduce => o.reduction = config.reduction.clone(),
        Task::Couple => o.error_report = true,
        Task::Analyze => {
            o.error_report = true;
            o.bound_report = true;
            o.scaling_sizes = config.scaling_sizes.clone();
        }
        Task::Run => o = config.clone(),
    }
    o
}

pub fn task_config(loaded: &Loaded, task: Task) -> Result<Loaded, CliError> {
    let mut effective = loaded.clone();
    effective.config.outputs = outputs_for(task, &loaded.config.outputs);
    if task == Task::Reduce && effective.config.outputs.reduction.is_none() {
        return Err(Diagnostic {
            field: "outputs.reduction".into(),
            message: "the reduce command needs a [outputs.reduction] section".into(),
            capacity: false,
        }
        .into());
    }
    Ok(effective)
}

fn summary(h: &WeightedHypergraph) -> InstanceSummary {
    let reg = regularity_report(h);
    InstanceSummary {
        n_vertices: h.n_vertices(),
        max_order: h.max_order(),
        edge_counts: (1..=h.max_order()).map(|m| h.edge_count(m)).collect(),
        w_max: reg.w_max,
        delta_max: reg.delta_max,
        delta_max_out: reg.delta_max_out,
        sloop_ratio: reg.sloop_ratio,
        frobenius_sq: reg.frobenius_sq,
    }
}

struct Context<'a> {
    loaded: &'a Loaded,
    model: RateModel,
    grid: Vec<f64>,
    seed: u64,
}

impl Context<'_> {
    fn t_end(&self) -> f64 {
        self.loaded.config.t_end
    }

    fn replicas(&self) -> usize {
        self.loaded.config.replicas
    }

    fn solve(&self, h: &WeightedHypergraph, z0: &[Vec<f64>]) -> nimfa::Result<NimfaSolution> {
        nimfa_solve(h, &self.model, z0, self.t_end(), &OdeOptions::default())
    }

    fn coupled(&self, h: &WeightedHypergraph, z0: &[Vec<f64>], seed: u64) -> nimfa::Result<ErrorAccumulator> {
        let nimfa = self.solve(h, z0)?;
        let track = nimfa.zeta_track(h)?;
        let sim = Simulator::new(h, &self.model)?;
        let opts = SimOptions { grid: self.grid.clone(), neighborhood_gaps: true, ..Default::default() };
        let empty = ErrorAccumulator::new(&nimfa, &self.grid)?;
        run_replicas(
            self.replicas(),
            seed,
            || Ok(empty.clone()),
            |acc: &mut nimfa::Result<ErrorAccumulator>, _, rng| {
                let init = PopulationState::sample_independent(z0, rng);
                let run = sim.run_coupled(&init, &track, self.t_end(), rng, &opts)?;
                acc.as_mut().map_err(|e| e.clone())?.add(&run)
            },
            |a, b| {
                let err = match (a.as_mut(), b) {
                    (Ok(x), Ok(y)) => x.merge(y).err(),
                    (Ok(_), Err(e)) => Some(e),
                    (Err(_), _) => None,
                };
                if let Some(e) = err {
                    *a = Err(e);
                }
            },
        )?
    }
}

fn state_columns(n_states: usize) -> Vec<String> {
    std::iter::once("time".to_string())
        .chain((0..n_states).map(|s| format!("state_{s}")))
        .collect()
}

fn long_rows(times: &[f64], units: usize, n_states: usize, value: impl Fn(f64) -> Vec<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(times.len() * units * n_states);
    for &t in times {
        let z = value(t);
        for u in 0..units {
            for s in 0..n_states {
                rows.push(vec![num(t), u.to_string(), s.to_string(), num(z[u * n_states + s])]);
            }
        }
    }
    rows
}

fn reduced_rows(grid: &[f64], sol: &ReducedSolution) -> Vec<Vec<String>> {
    long_rows(grid, sol.n_groups(), sol.n_states(), |t| {
        (0..sol.n_groups()).flat_map(|k| sol.group(k, t)).collect()
    })
}

#[derive(Serialize)]
struct ErrorOutput<'a> {
    #[serde(flatten)]
    report: &'a ErrorReport,
    /// Bootstrap 95% interval for `p_max`.
    p_max_interval: [f64; 2],
}

fn percentile_interval(mut xs: Vec<f64>) -> [f64; 2] {
    if xs.is_empty() {
        return [0.0, 0.0];
    }
    xs.sort_by(f64::total_cmp);
    let at = |q: f64| xs[((xs.len() - 1) as f64 * q).round() as usize];
    [at(0.025), at(0.975)]
}

fn write_trajectories(ctx: &Context, w: &mut Writer, h: &WeightedHypergraph, z0: &[Vec<f64>]) -> Result<(), CliError> {
    let ns = ctx.model.n_states();
    let sim = Simulator::new(h, &ctx.model)?;
    let plain = SimOptions { grid: ctx.grid.clone(), ..Default::default() };
    let logged = SimOptions { record_events: true, ..plain.clone() };
    type Acc = (Vec<Vec<u64>>, Option<Vec<Event>>);
    let (counts, events): Acc = run_replicas(
        ctx.replicas(),
        ctx.seed,
        || (vec![vec![0u64; ns]; ctx.grid.len()], None),
        |acc: &mut Acc, r, rng| {
            let init = PopulationState::sample_independent(z0, rng);
            let traj = sim.run(&init, ctx.t_end(), rng, if r == 0 { &logged } else { &plain })?;
            for (a, c) in acc.0.iter_mut().zip(&traj.grid_counts) {
                a.iter_mut().zip(c).for_each(|(x, &y)| *x += y as u64);
            }
            if r == 0 {
                acc.1 = Some(traj.events);
            }
            Ok(())
        },
        |a, b| {
            for (ra, rb) in a.0.iter_mut().zip(b.0) {
                ra.iter_mut().zip(rb).for_each(|(x, y)| *x += y);
            }
            if a.1.is_none() {
                a.1 = b.1;
            }
        },
    )?;
    let total = (ctx.replicas() * h.n_vertices()) as f64;
    let cols = state_columns(ns);
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    w.csv(
        "prevalence.csv",
        &cols,
        ctx.grid.iter().zip(&counts).map(|(&t, c)| {
            std::iter::once(num(t)).chain(c.iter().map(|&x| num(x as f64 / total))).collect()
        }),
    )?;
    w.csv(
        "events.csv",
        &["time", "vertex", "from", "to"],
        events.unwrap_or_default().iter().map(|e| {
            vec![num(e.time), e.vertex.to_string(), e.from.to_string(), e.to.to_string()]
        }),
    )?;
    Ok(())
}

fn write_nimfa(ctx: &Context, w: &mut Writer, h: &WeightedHypergraph, z0: &[Vec<f64>]) -> Result<(), CliError> {
    let sol = ctx.solve(h, z0)?;
    let ns = sol.n_states();
    w.csv(
        "nimfa.csv",
        &["time", "vertex", "state", "probability"],
        long_rows(&ctx.grid, sol.n_vertices(), ns, |t| sol.z(t)),
    )?;
    let cols = state_columns(ns);
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    w.csv(
        "nimfa_mean.csv",
        &cols,
        ctx.grid.iter().map(|&t| std::iter::once(num(t)).chain(sol.mean(t).into_iter().map(num)).collect()),
    )?;
    Ok(())
}

fn write_reduction(ctx: &Context, w: &mut Writer, h: &WeightedHypergraph, z0: &[Vec<f64>]) -> Result<(), CliError> {
    let spec = ctx.loaded.config.outputs.reduction.as_ref().expect("validated");
    let opts = OdeOptions::default();
    let t_end = ctx.t_end();
    let net = &ctx.loaded.config.network;
    let header = w.header()[2..].to_string();
    let (sol, weights) = match spec.name.as_str() {
        "hmfa" => {
            let all = vec![0; h.n_vertices()];
            let u0 = group_means(z0, &all, &[h.n_vertices()]).remove(0);
            (hmfa_solve(&ctx.model, &u0, t_end, &opts)?, None)
        }
        "metapop" => {
            let partition = spec.partition.as_ref().expect("validated");
            let meta = metapop_reduce(h, partition, z0)?;
            let reduced = metapop_solve(h, partition, &ctx.model, z0, t_end, &opts)?;
            (reduced, Some(meta.weights))
        }
        "imfa" | "activity" => {
            let seq = if spec.name == "imfa" { net.degrees.as_ref() } else { net.activities.as_ref() };
            let classes = VertexClasses::from_sequences(seq.expect("validated"))?;
            let zc = group_means(z0, &classes.assignment, &classes.counts);
            let sol = if spec.name == "imfa" {
                imfa_solve(&classes, &ctx.model, ctx.loaded.convention(), &zc, t_end, &opts)?
            } else {
                activity_solve(&classes, &ctx.model, &zc, t_end, &opts)?
            };
            (sol, None)
        }
        "partition" => {
            let family = ctx.loaded.family(None)?.expect("validated");
            let raw = family.adjacency(ctx.loaded.network_seed())?.expect("validated");
            let pspec = PartitionSpec::new(&raw, spec.partition.clone().expect("validated"))?;
            let red = partition_reduce(&raw, &pspec, &ctx.model, z0, t_end, &opts)?;
            (red.solution, Some(red.weights))
        }
        other => unreachable!("validated reduction {other}"),
    };
    w.csv("reduction.csv", &["time", "group", "state", "probability"], reduced_rows(&ctx.grid, &sol))?;
    if let Some(weights) = weights {
        w.raw("reduced.hg", &write_hypergraph(&weights, &[header]))?;
    }
    Ok(())
}

fn write_error_report(ctx: &Context, w: &mut Writer, h: &WeightedHypergraph, z0: &[Vec<f64>]) -> Result<(), CliError> {
    let acc = ctx.coupled(h, z0, ctx.seed)?;
    let report = acc.report()?;
    let interval = percentile_interval(acc.bootstrap_p_max(BOOTSTRAP_RESAMPLES, ctx.seed));
    w.json("error_report.json", &ErrorOutput { report: &report, p_max_interval: interval })?;
    Ok(())
}

#[derive(Serialize)]
struct ScalingOutput {
    sizes: Vec<usize>,
    exponent: f64,
    prefactor: f64,
    ci_low: f64,
    ci_high: f64,
    points_used: usize,
}

fn write_scaling(ctx: &Context, w: &mut Writer, sizes: &[usize]) -> Result<(), CliError> {
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let h = ctx.loaded.network(Some(n))?;
        let z0 = ctx.loaded.initial(h.n_vertices(), ctx.model.n_states())?;
        let seed = ctx.seed.wrapping_add(k as u64 + 1);
        let acc = ctx.coupled(&h, &z0, seed)?;
        let report = acc.report()?;
        let replicates = acc.bootstrap_p_max(BOOTSTRAP_RESAMPLES, seed);
        let interval = percentile_interval(replicates.clone());
        w.json(&format!("error_report_n{n}.json"), &ErrorOutput { report: &report, p_max_interval: interval })?;
        let bound = evaluate_bounds(&h, ctx.model.n_states(), ctx.t_end()).sqrt_wmax;
        rows.push(vec![n.to_string(), num(report.p_max), num(report.p_max_stderr), num(bound)]);
        points.push(ScalingPoint { size: n as f64, value: report.p_max, replicates });
    }
    w.csv("scaling.csv", &["size", "mean_error", "stderr", "bound_value"], rows)?;
    let fit = fit_scaling(&points)?;
    w.json(
        "scaling_fit.json",
        &ScalingOutput {
            sizes: sizes.to_vec(),
            exponent: fit.exponent,
            prefactor: fit.prefactor,
            ci_low: fit.ci_low,
            ci_high: fit.ci_high,
            points_used: fit.points_used,
        },
    )?;
    Ok(())
}

fn write_master(ctx: &Context, w: &mut Writer, h: &WeightedHypergraph, z0: &[Vec<f64>]) -> Result<(), CliError> {
    let init = product_distribution(z0)?;
    let sol = master_solve(h, &ctx.model, &init, &ctx.grid, &OdeOptions::default())?;
    let ns = sol.n_states;
    let mut rows = Vec::new();
    for (g, &t) in sol.grid.iter().enumerate() {
        for (i, zi) in sol.marginals(g).iter().enumerate() {
            for (s, &p) in zi.iter().enumerate().take(ns) {
                rows.push(vec![num(t), i.to_string(), s.to_string(), num(p)]);
            }
        }
    }
    w.csv("master.csv", &["time", "vertex", "state", "probability"], rows)?;
    Ok(())
}

/// Validates, runs `task` and writes its outputs and a manifest into `out_dir`.
pub fn execute(loaded: &Loaded, task: Task, command: &str, out_dir: &Path) -> Result<Manifest, CliError> {
    let effective = task_config(loaded, task)?;
    let diagnostics = effective.validate();
    if !diagnostics.is_empty() {
        return Err(CliError::Validation(diagnostics));
    }
    let cfg = &effective.config;
    let model = effective.model()?;
    let h = effective.network(None)?;
    let z0 = effective.initial(h.n_vertices(), model.n_states())?;
    let ctx = Context {
        loaded: &effective,
        model,
        grid: SimOptions::uniform_grid(cfg.t_end, cfg.grid_points),
        seed: cfg.seed.unwrap_or(0),
    };
    let mut w = Writer::new(out_dir, loaded.hash())?;
    let mut timings = BTreeMap::new();
    let mut timed = |name: &str, f: &mut dyn FnMut(&mut Writer) -> Result<(), CliError>, w: &mut Writer| {
        let start = Instant::now();
        let r = f(w);
        timings.insert(name.to_string(), start.elapsed().as_secs_f64());
        r
    };
    let o = &cfg.outputs;
    if o.network {
        let header = w.header()[2..].to_string();
        timed("network", &mut |w| Ok(w.raw("network.hg", &write_hypergraph(&h, std::slice::from_ref(&header)))?), &mut w)?;
    }
    if o.nimfa {
        timed("nimfa", &mut |w| write_nimfa(&ctx, w, &h, &z0), &mut w)?;
    }
    if o.reduction.is_some() {
        timed("reduction", &mut |w| write_reduction(&ctx, w, &h, &z0), &mut w)?;
    }
    if o.master {
        timed("master", &mut |w| write_master(&ctx, w, &h, &z0), &mut w)?;
    }
    if o.trajectories {
        timed("trajectories", &mut |w| write_trajectories(&ctx, w, &h, &z0), &mut w)?;
    }
    if o.error_report {
        timed("error_report", &mut |w| write_error_report(&ctx, w, &h, &z0), &mut w)?;
    }
    if o.bound_report {
        timed(
            "bound_report",
            &mut |w| Ok(w.json("bounds.json", &evaluate_bounds(&h, ctx.model.n_states(), cfg.t_end))?),
            &mut w,
        )?;
    }
    if let Some(sizes) = &o.scaling_sizes {
        timed("scaling", &mut |w| write_scaling(&ctx, w, sizes), &mut w)?;
    }
    let manifest = Manifest {
        command: command.to_string(),
        outputs: w
            .written
            .iter()
            .map(|(name, path)| (name.clone(), path.display().to_string()))
            .collect(),
        timings_seconds: timings,
        instance: summary(&h),
    };
    w.json("manifest.json", &manifest)?;
    log::info!("nimfa {VERSION}: wrote {} files to {}", w.written.len(), out_dir.display());
    Ok(manifest)
}
