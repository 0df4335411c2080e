//! Experiment configuration: a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nimfa::hypergraph::{format::read_hypergraph, generate, Convention, Family, WeightedHypergraph};
use nimfa::meanfield::nimfa::{on_simplex, SIMPLEX_TOL};
use nimfa::models::{AffineForm, RateModel};
use nimfa::stochastic::MAX_PRODUCT_STATES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    pub t_end: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub replicas: usize,
    pub network: NetworkSpec,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn default_grid_points() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConventionSpec {
    One,
    Two,
    Explicit,
}

impl From<ConventionSpec> for Convention {
    fn from(c: ConventionSpec) -> Self {
        match c {
            ConventionSpec::One => Convention::One,
            ConventionSpec::Two => Convention::Two,
            ConventionSpec::Explicit => Convention::Explicit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub generator: String,
    #[serde(default)]
    pub convention: Option<ConventionSpec>,
    /// Seed for random generators; defaults to the experiment seed, then 0.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub max_order: Option<usize>,
    #[serde(default)]
    pub hyperedges: Option<usize>,
    #[serde(default)]
    pub degrees: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub drop_self_pairs: Option<bool>,
    #[serde(default)]
    pub activities: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    /// Hypergraph file for `generator = "file"`.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Sis { beta: Vec<f64>, gamma: f64 },
    Glauber { alpha: Vec<f64>, gamma: Vec<f64>, beta: f64 },
    Voter { lambda: f64 },
    Majority { max_order: usize },
    Affine {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        text: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// The same distribution for every vertex.
    #[serde(default)]
    pub uniform: Option<Vec<f64>>,
    /// Every vertex deterministically in this state.
    #[serde(default)]
    pub state: Option<usize>,
    /// One whitespace-separated distribution per line, one line per vertex.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub network: bool,
    #[serde(default)]
    pub trajectories: bool,
    #[serde(default)]
    pub nimfa: bool,
    #[serde(default)]
    pub reduction: Option<ReductionSpec>,
    #[serde(default)]
    pub error_report: bool,
    #[serde(default)]
    pub bound_report: bool,
    #[serde(default)]
    pub master: bool,
    /// Sizes for a scaling study of the coupling error; replaces `network.n`.
    #[serde(default)]
    pub scaling_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSpec {
    /// `hmfa`, `metapop`, `imfa`, `activity` or `partition`.
    pub name: String,
    /// Group of each vertex (`metapop`) or block of each vertex with 0 as the exceptional block (`partition`).
    #[serde(default)]
    pub partition: Option<Vec<usize>>,
}

/// One problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
    pub capacity: bool,
}

impl Diagnostic {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Diagnostic { field: field.into(), message: message.into(), capacity: false }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A parsed configuration together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn from_path(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base)
    }

    pub fn from_str(text: &str, base: PathBuf) -> Result<Self, String> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| format!("config: {e}"))?;
        Ok(Loaded { config, base })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.config).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn family(&self, n_override: Option<usize>) -> Result<Option<Family>, Diagnostic> {
        let net = &self.config.network;
        let need = |v: Option<usize>, name: &str| {
            v.ok_or_else(|| Diagnostic::new(&format!("network.{name}"), format!("required by generator `{}`", net.generator)))
        };
        // a scaling study may leave `n` out; the base instance then uses its first size
        let first_size = self.config.outputs.scaling_sizes.as_ref().and_then(|s| s.first().copied());
        let n = || n_override.or(net.n).or(first_size);
        let family = match net.generator.as_str() {
            "complete" => Family::Complete { n: need(n(), "n")? },
            "hmfa" => Family::Hmfa { n: need(n(), "n")?, max_order: need(net.max_order, "max_order")? },
            "ring" => Family::Ring { n: need(n(), "n")?, k: need(net.k, "k")? },
            "erdos_renyi" => Family::ErdosRenyi {
                n: need(n(), "n")?,
                p: net.p.ok_or_else(|| Diagnostic::new("network.p", "required by generator `erdos_renyi`"))?,
            },
            "random_uniform" => Family::RandomUniform {
                n: need(n(), "n")?,
                order: need(net.order, "order")?,
                hyperedges: need(net.hyperedges, "hyperedges")?,
            },
            "annealed" => Family::Annealed {
                degrees: net
                    .degrees
                    .clone()
                    .ok_or_else(|| Diagnostic::new("network.degrees", "required by generator `annealed`"))?,
                drop_self_pairs: net.drop_self_pairs.unwrap_or(false),
            },
            "activity" => Family::Activity {
                activities: net
                    .activities
                    .clone()
                    .ok_or_else(|| Diagnostic::new("network.activities", "required by generator `activity`"))?,
            },
            "block" => Family::Block {
                n: need(n(), "n")?,
                sizes: net.sizes.clone().ok_or_else(|| Diagnostic::new("network.sizes", "required by generator `block`"))?,
                weights: net
                    .weights
                    .clone()
                    .ok_or_else(|| Diagnostic::new("network.weights", "required by generator `block`"))?,
            },
            "file" => return Ok(None),
            other => return Err(Diagnostic::new("network.generator", format!("unknown generator `{other}`"))),
        };
        Ok(Some(family))
    }

    pub fn convention(&self) -> Convention {
        self.config.network.convention.map_or(Convention::One, Convention::from)
    }

    pub fn network_seed(&self) -> u64 {
        self.config.network.seed.or(self.config.seed).unwrap_or(0)
    }

    pub fn network(&self, n_override: Option<usize>) -> Result<WeightedHypergraph, Diagnostic> {
        match self.family(n_override)? {
            Some(f) => generate(&f, self.convention(), self.network_seed())
                .map_err(|e| Diagnostic::new("network", e.to_string())),
            None => {
                let path = self
                    .config
                    .network
                    .path
                    .as_ref()
                    .ok_or_else(|| Diagnostic::new("network.path", "required by generator `file`"))?;
                let text = std::fs::read_to_string(self.resolve(path))
                    .map_err(|e| Diagnostic::new("network.path", format!("cannot read {}: {e}", path.display())))?;
                read_hypergraph(&text).map_err(|e| Diagnostic::new("network.path", e.to_string()))
            }
        }
    }

    pub fn model(&self) -> Result<RateModel, Diagnostic> {
        let err = |e: nimfa::Error| Diagnostic::new("model", e.to_string());
        match &self.config.model {
            ModelSpec::Sis { beta, gamma } => RateModel::sis(beta.clone(), *gamma).map_err(err),
            ModelSpec::Glauber { alpha, gamma, beta } => {
                RateModel::glauber(alpha.clone(), gamma.clone(), *beta).map_err(err)
            }
            ModelSpec::Voter { lambda } => RateModel::voter(*lambda).map_err(err),
            ModelSpec::Majority { max_order } => RateModel::majority(*max_order).map_err(err),
            ModelSpec::Affine { path, text } => {
                let text = match (path, text) {
                    (Some(p), None) => std::fs::read_to_string(self.resolve(p))
                        .map_err(|e| Diagnostic::new("model.path", format!("cannot read {}: {e}", p.display())))?,
                    (None, Some(t)) => t.clone(),
                    _ => return Err(Diagnostic::new("model", "affine models need exactly one of `path` and `text`")),
                };
                Ok(RateModel::affine(AffineForm::parse(&text).map_err(err)?))
            }
        }
    }

    /// Per-vertex initial distributions.
    pub fn initial(&self, n_vertices: usize, n_states: usize) -> Result<Vec<Vec<f64>>, Diagnostic> {
        let init = &self.config.initial;
        let rows = match (&init.uniform, init.state, &init.path) {
            (Some(z), None, None) => vec![z.clone(); n_vertices],
            (None, Some(s), None) => {
                if s >= n_states {
                    return Err(Diagnostic::new("initial.state", format!("state {s} outside 0..{n_states}")));
                }
                let z: Vec<f64> = (0..n_states).map(|k| f64::from(k == s)).collect();
                vec![z; n_vertices]
            }
            (None, None, Some(p)) => {
                let text = std::fs::read_to_string(self.resolve(p))
                    .map_err(|e| Diagnostic::new("initial.path", format!("cannot read {}: {e}", p.display())))?;
                let mut rows = Vec::new();
                for (lineno, line) in text.lines().enumerate() {
                    let line = line.trim();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
                    rows.push(row.map_err(|e| {
                        Diagnostic::new("initial.path", format!("line {}: {e}", lineno + 1))
                    })?);
                }
                if rows.len() != n_vertices {
                    return Err(Diagnostic::new(
                        "initial.path",
                        format!("{} rows for {n_vertices} vertices", rows.len()),
                    ));
                }
                rows
            }
            _ => return Err(Diagnostic::new("initial", "give exactly one of `uniform`, `state` and `path`")),
        };
        for (i, z) in rows.iter().enumerate() {
            if z.len() != n_states {
                return Err(Diagnostic::new(
                    "initial",
                    format!("vertex {i} has {} probabilities, the model has {n_states} states", z.len()),
                ));
            }
            if !on_simplex(z, SIMPLEX_TOL) {
                return Err(Diagnostic::new(
                    "initial",
                    format!("vertex {i}: {z:?} is not a probability vector"),
                ));
            }
        }
        Ok(rows)
    }

    pub fn stochastic_requested(&self) -> bool {
        let o = &self.config.outputs;
        o.trajectories || o.error_report || o.scaling_sizes.is_some()
    }

    /// Every problem that would stop a run; empty iff the run would start.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let c = &self.config;
        let mut out = Vec::new();
        if !(c.t_end.is_finite() && c.t_end > 0.0) {
            out.push(Diagnostic::new("t_end", format!("must be positive, got {}", c.t_end)));
        }
        if c.grid_points < 2 {
            out.push(Diagnostic::new("grid_points", "need at least 2 observation times"));
        }
        if self.stochastic_requested() {
            if c.seed.is_none() {
                out.push(Diagnostic::new("seed", "required for stochastic outputs (or pass --seed)"));
            }
            if c.replicas == 0 {
                out.push(Diagnostic::new("replicas", "stochastic outputs need at least one replica"));
            }
        }
        if (c.outputs.error_report || c.outputs.scaling_sizes.is_some()) && c.replicas < 2 {
            out.push(Diagnostic::new("replicas", "error estimates need at least 2 replicas"));
        }
        if let Some(sizes) = &c.outputs.scaling_sizes {
            if sizes.len() < 3 {
                out.push(Diagnostic::new("outputs.scaling_sizes", "a scaling fit needs at least 3 sizes"));
            }
        }
        let model = self.model();
        if let Err(d) = &model {
            out.push(d.clone());
        }
        if let Some(z) = &c.initial.uniform {
            if !on_simplex(z, SIMPLEX_TOL) {
                out.push(Diagnostic::new("initial.uniform", format!("{z:?} is not a probability vector")));
            }
        }
        let network = match self.network(None) {
            Ok(h) => Some(h),
            Err(d) => {
                out.push(d);
                None
            }
        };
        if let (Some(h), Ok(model)) = (&network, &model) {
            for m in model.max_order() + 1..=h.max_order() {
                if h.edge_count(m) > 0 {
                    out.push(Diagnostic::new(
                        "model",
                        format!(
                            "the network has order-{m} edges but the {} model reads orders up to {}",
                            model.name(),
                            model.max_order()
                        ),
                    ));
                    break;
                }
            }
            if let Err(d) = self.initial(h.n_vertices(), model.n_states()) {
                if !out.contains(&d) && !out.iter().any(|o| o.field == "initial.uniform") {
                    out.push(d);
                }
            }
            if c.outputs.master {
                let size = (model.n_states() as u128).checked_pow(h.n_vertices() as u32);
                if size.is_none_or(|s| s > MAX_PRODUCT_STATES) {
                    out.push(Diagnostic {
                        field: "outputs.master".into(),
                        message: format!(
                            "|S|^N = {}^{} exceeds the MAX_PRODUCT_STATES guard of {MAX_PRODUCT_STATES}",
                            model.n_states(),
                            h.n_vertices()
                        ),
                        capacity: true,
                    });
                }
            }
            if let Some(r) = &c.outputs.reduction {
                if let Some(d) = self.check_reduction(r, h) {
                    out.push(d);
                }
            }
        }
        out
    }

    fn check_reduction(&self, r: &ReductionSpec, h: &WeightedHypergraph) -> Option<Diagnostic> {
        let field = "outputs.reduction";
        let generator = self.config.network.generator.as_str();
        match r.name.as_str() {
            "hmfa" => None,
            "metapop" | "partition" => match &r.partition {
                None => Some(Diagnostic::new(field, format!("`{}` needs a partition", r.name))),
                Some(p) if p.len() != h.n_vertices() => Some(Diagnostic::new(
                    field,
                    format!("partition has {} entries for {} vertices", p.len(), h.n_vertices()),
                )),
                Some(_) if r.name == "partition" && !matches!(generator, "complete" | "ring" | "erdos_renyi") => {
                    Some(Diagnostic::new(field, "`partition` needs a graph generator with an adjacency (complete, ring, erdos_renyi)"))
                }
                Some(_) => None,
            },
            "imfa" if generator != "annealed" => Some(Diagnostic::new(field, "`imfa` needs generator `annealed`")),
            "activity" if generator != "activity" => {
                Some(Diagnostic::new(field, "`activity` needs generator `activity`"))
            }
            "imfa" | "activity" => None,
            other => Some(Diagnostic::new(field, format!("unknown reduction `{other}`"))),
        }
    }
}
