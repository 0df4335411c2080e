//! Local transition rates `q(φ)` as functions of a vertex's neighborhood.
//!
//! Rates are addressed as `rate(from, to, φ)`: the intensity of a jump of a
//! single vertex from local state `from` to local state `to` given its
//! neighborhood vector. The diagonal of the transition matrix is never
//! stored; it is the negative total outflow.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

/// Number of entries in `S^m`.
pub fn tuple_count(n_states: usize, m: usize) -> usize {
    n_states.pow(m as u32)
}

/// Offset of order `m` inside a flattened neighborhood vector.
pub fn order_offset(n_states: usize, m: usize) -> usize {
    (1..m).map(|k| tuple_count(n_states, k)).sum()
}

/// Length of a flattened neighborhood vector (`Σ_m |S|^m`).
pub fn neighborhood_len(n_states: usize, max_order: usize) -> usize {
    order_offset(n_states, max_order + 1)
}

/// Index of a state tuple; the first position is the most significant digit.
pub fn tuple_index(n_states: usize, states: &[usize]) -> usize {
    states.iter().fold(0, |acc, &s| acc * n_states + s)
}

/// Inverse of [`tuple_index`].
pub fn tuple_states(n_states: usize, m: usize, mut index: usize) -> Vec<usize> {
    let mut out = vec![0; m];
    for pos in (0..m).rev() {
        out[pos] = index % n_states;
        index /= n_states;
    }
    out
}

/// Borrowed neighborhood vector: per order `m`, one value per tuple in `S^m`.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood<'a> {
    n_states: usize,
    values: &'a [f64],
}

impl<'a> Neighborhood<'a> {
    pub fn new(n_states: usize, values: &'a [f64]) -> Self {
        Neighborhood { n_states, values }
    }

    /// The order-`m` block.
    pub fn order(&self, m: usize) -> &'a [f64] {
        let off = order_offset(self.n_states, m);
        &self.values[off..off + tuple_count(self.n_states, m)]
    }

    pub fn get(&self, states: &[usize]) -> f64 {
        self.order(states.len())[tuple_index(self.n_states, states)]
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }
}

/// Owned neighborhood vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodVector {
    pub n_states: usize,
    pub max_order: usize,
    pub values: Vec<f64>,
}

impl NeighborhoodVector {
    pub fn zeros(n_states: usize, max_order: usize) -> Self {
        NeighborhoodVector {
            n_states,
            max_order,
            values: vec![0.0; neighborhood_len(n_states, max_order)],
        }
    }

    pub fn view(&self) -> Neighborhood<'_> {
        Neighborhood::new(self.n_states, &self.values)
    }

    pub fn set(&mut self, states: &[usize], value: f64) {
        let idx = order_offset(self.n_states, states.len()) + tuple_index(self.n_states, states);
        self.values[idx] = value;
    }
}

/// One `q¹` coefficient: multiplies `φ^{(order)}_{tuple}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineTerm {
    pub order: usize,
    pub tuple: usize,
    pub coeff: f64,
}

/// `q(φ) = constant + Σ coeff · φ^{(order)}_{tuple}` for one `from → to` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineRate {
    pub from: usize,
    pub to: usize,
    pub constant: f64,
    pub terms: Vec<AffineTerm>,
}

impl AffineRate {
    fn eval(&self, phi: &Neighborhood<'_>) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, t| acc + t.coeff * phi.order(t.order)[t.tuple])
    }
}

/// Rates affine in the neighborhood vector. Pairs without an entry have rate zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineForm {
    pub n_states: usize,
    pub max_order: usize,
    pub rates: Vec<AffineRate>,
    #[serde(skip)]
    lookup: Vec<Option<usize>>,
}

impl AffineForm {
    pub fn new(n_states: usize, max_order: usize, rates: Vec<AffineRate>) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::Parameter("a model needs at least two states".into()));
        }
        if max_order == 0 {
            return Err(Error::Parameter("max order must be at least 1".into()));
        }
        let mut lookup = vec![None; n_states * n_states];
        for (k, r) in rates.iter().enumerate() {
            if r.from >= n_states || r.to >= n_states || r.from == r.to {
                return Err(Error::Parameter(format!(
                    "invalid transition {} -> {} for {n_states} states",
                    r.from, r.to
                )));
            }
            if !(r.constant.is_finite() && r.constant >= 0.0) {
                return Err(Error::Parameter(format!(
                    "q0 for {} -> {} must be finite and nonnegative, got {}",
                    r.from, r.to, r.constant
                )));
            }
            for t in &r.terms {
                if t.order == 0 || t.order > max_order || t.tuple >= tuple_count(n_states, t.order)
                {
                    return Err(Error::Parameter(format!(
                        "q1 term (order {}, tuple {}) out of range",
                        t.order, t.tuple
                    )));
                }
                if !(t.coeff.is_finite() && t.coeff >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "q1 coefficients must be finite and nonnegative, got {}",
                        t.coeff
                    )));
                }
            }
            let slot = &mut lookup[r.from * n_states + r.to];
            if slot.is_some() {
                return Err(Error::Parameter(format!(
                    "transition {} -> {} given twice",
                    r.from, r.to
                )));
            }
            *slot = Some(k);
        }
        Ok(AffineForm {
            n_states,
            max_order,
            rates,
            lookup,
        })
    }

    pub fn get(&self, from: usize, to: usize) -> Option<&AffineRate> {
        self.lookup[from * self.n_states + to].map(|k| &self.rates[k])
    }

    pub fn rate(&self, from: usize, to: usize, phi: &Neighborhood<'_>) -> f64 {
        self.get(from, to).map_or(0.0, |r| r.eval(phi))
    }

    fn upper_bound(&self, from: usize, to: usize, delta: &[f64]) -> f64 {
        let Some(r) = self.get(from, to) else {
            return 0.0;
        };
        let mut per_order = vec![0.0f64; self.max_order];
        for t in &r.terms {
            per_order[t.order - 1] = per_order[t.order - 1].max(t.coeff);
        }
        r.constant
            + per_order
                .iter()
                .zip(delta)
                .map(|(c, d)| c * d)
                .sum::<f64>()
    }

    /// Parses the coefficient file format:
    ///
    /// ```text
    /// n_states max_order
    /// from to q0 [m:s1,..,sm=coeff ...]
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut rates = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let Some((n_states, _)) = header else {
                if fields.len() != 2 {
                    return Err(err("header must be `n_states max_order`".into()));
                }
                let ns = fields[0].parse().map_err(|_| err("bad n_states".into()))?;
                let mo = fields[1].parse().map_err(|_| err("bad max_order".into()))?;
                header = Some((ns, mo));
                continue;
            };
            if fields.len() < 3 {
                return Err(err("expected `from to q0 [terms]`".into()));
            }
            let from = fields[0].parse().map_err(|_| err("bad from state".into()))?;
            let to = fields[1].parse().map_err(|_| err("bad to state".into()))?;
            let constant = fields[2].parse().map_err(|_| err("bad q0".into()))?;
            let mut terms = Vec::new();
            for f in &fields[3..] {
                let (key, coeff) = f
                    .split_once('=')
                    .ok_or_else(|| err(format!("term `{f}` lacks `=`")))?;
                let (m, tuple) = key
                    .split_once(':')
                    .ok_or_else(|| err(format!("term `{f}` lacks `m:`")))?;
                let order: usize = m.parse().map_err(|_| err(format!("bad order in `{f}`")))?;
                let states: Vec<usize> = tuple
                    .split(',')
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(format!("bad state tuple in `{f}`")))?;
                if states.len() != order || states.iter().any(|&s| s >= n_states) {
                    return Err(err(format!("tuple in `{f}` does not match order {order}")));
                }
                let coeff = coeff.parse().map_err(|_| err(format!("bad coefficient in `{f}`")))?;
                terms.push(AffineTerm {
                    order,
                    tuple: tuple_index(n_states, &states),
                    coeff,
                });
            }
            rates.push(AffineRate {
                from,
                to,
                constant,
                terms,
            });
        }
        let (n_states, max_order) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        AffineForm::new(n_states, max_order, rates)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_states, self.max_order);
        for r in &self.rates {
            let _ = write!(out, "{} {} {:.16e}", r.from, r.to, r.constant);
            for t in &r.terms {
                let states = tuple_states(self.n_states, t.order, t.tuple);
                let joined: Vec<String> = states.iter().map(|s| s.to_string()).collect();
                let _ = write!(out, " {}:{}={:.16e}", t.order, joined.join(","), t.coeff);
            }
            out.push('\n');
        }
        out
    }
}

/// The built-in dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModelKind {
    /// States `S = 0`, `I = 1`.
    Sis { beta: Vec<f64>, gamma: f64 },
    /// States `- = 0`, `+ = 1`.
    Glauber {
        alpha: Vec<f64>,
        gamma: Vec<f64>,
        beta: f64,
    },
    /// Opinions `0` and `1`, order 1 only.
    Voter { lambda: f64 },
    /// Opinions `0` and `1`; ties go to opinion `1`.
    Majority { max_order: usize },
    Affine,
}

/// A local density-dependent rate model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateModel {
    kind: ModelKind,
    n_states: usize,
    max_order: usize,
    affine: Option<AffineForm>,
}

fn check_nonneg(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(Error::Parameter(format!(
            "{name} must be finite and nonnegative, got {v}"
        ))),
        None => Ok(()),
    }
}

impl RateModel {
    /// Simplicial SIS: curing at `gamma`, infection at `Σ_m beta[m-1] φ^{(m)}_{(I,..,I)}`.
    pub fn sis(beta: Vec<f64>, gamma: f64) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Parameter("sis needs at least one beta".into()));
        }
        check_nonneg("beta", &beta)?;
        check_nonneg("gamma", &[gamma])?;
        let max_order = beta.len();
        let infection = AffineRate {
            from: 0,
            to: 1,
            constant: 0.0,
            terms: beta
                .iter()
                .enumerate()
                .map(|(mi, &b)| AffineTerm {
                    order: mi + 1,
                    tuple: tuple_count(2, mi + 1) - 1,
                    coeff: b,
                })
                .collect(),
        };
        let curing = AffineRate {
            from: 1,
            to: 0,
            constant: gamma,
            terms: Vec::new(),
        };
        Ok(RateModel {
            affine: Some(AffineForm::new(2, max_order, vec![infection, curing])?),
            kind: ModelKind::Sis { beta, gamma },
            n_states: 2,
            max_order,
        })
    }

    /// Continuous-time Glauber dynamics: `- → +` at `exp(beta S(φ))`, `+ → -` at 1,
    /// with `S(φ) = Σ_m alpha_m φ^{(m)}_{(+,..,+)} + gamma_m φ^{(m)}_{(-,..,-)}`.
    ///
    /// The Ising ferromagnet is `alpha = 1, gamma = -1`, giving `S = φ_+ - φ_-`.
    pub fn glauber(alpha: Vec<f64>, gamma: Vec<f64>, beta: f64) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != gamma.len() {
            return Err(Error::Parameter(
                "glauber needs alpha and gamma of equal, nonzero length".into(),
            ));
        }
        if alpha.iter().chain(&gamma).chain([&beta]).any(|x| !x.is_finite()) {
            return Err(Error::Parameter("glauber parameters must be finite".into()));
        }
        let max_order = alpha.len();
        Ok(RateModel {
            kind: ModelKind::Glauber { alpha, gamma, beta },
            n_states: 2,
            max_order,
            affine: None,
        })
    }

    /// Voter model: adopt opinion `s` at rate `lambda φ_s`.
    pub fn voter(lambda: f64) -> Result<Self> {
        check_nonneg("lambda", &[lambda])?;
        let rates = vec![
            AffineRate {
                from: 1,
                to: 0,
                constant: 0.0,
                terms: vec![AffineTerm {
                    order: 1,
                    tuple: 0,
                    coeff: lambda,
                }],
            },
            AffineRate {
                from: 0,
                to: 1,
                constant: 0.0,
                terms: vec![AffineTerm {
                    order: 1,
                    tuple: 1,
                    coeff: lambda,
                }],
            },
        ];
        Ok(RateModel {
            affine: Some(AffineForm::new(2, 1, rates)?),
            kind: ModelKind::Voter { lambda },
            n_states: 2,
            max_order: 1,
        })
    }

    /// Modified majority rule. Community importances are part of the edge
    /// weights, so the rates use unit multipliers.
    pub fn majority(max_order: usize) -> Result<Self> {
        if max_order == 0 {
            return Err(Error::Parameter("majority needs max_order >= 1".into()));
        }
        let mut to_zero = Vec::new();
        let mut to_one = Vec::new();
        for m in 1..=max_order {
            for tuple in 0..tuple_count(2, m) {
                let term = AffineTerm {
                    order: m,
                    tuple,
                    coeff: 1.0,
                };
                if majority_is_zero(tuple, m) {
                    to_zero.push(term);
                } else {
                    to_one.push(term);
                }
            }
        }
        let rates = vec![
            AffineRate {
                from: 1,
                to: 0,
                constant: 0.0,
                terms: to_zero,
            },
            AffineRate {
                from: 0,
                to: 1,
                constant: 0.0,
                terms: to_one,
            },
        ];
        Ok(RateModel {
            affine: Some(AffineForm::new(2, max_order, rates)?),
            kind: ModelKind::Majority { max_order },
            n_states: 2,
            max_order,
        })
    }

    pub fn affine(form: AffineForm) -> Self {
        RateModel {
            kind: ModelKind::Affine,
            n_states: form.n_states,
            max_order: form.max_order,
            affine: Some(form),
        }
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::Sis { .. } => "sis",
            ModelKind::Glauber { .. } => "glauber",
            ModelKind::Voter { .. } => "voter",
            ModelKind::Majority { .. } => "majority",
            ModelKind::Affine => "affine",
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn neighborhood_len(&self) -> usize {
        neighborhood_len(self.n_states, self.max_order)
    }

    pub fn affine_form(&self) -> Option<&AffineForm> {
        self.affine.as_ref()
    }

    pub fn is_affine(&self) -> bool {
        self.affine.is_some()
    }

    /// Rate of a `from → to` jump. Zero on the diagonal.
    pub fn rate(&self, from: usize, to: usize, phi: &Neighborhood<'_>) -> f64 {
        if from == to {
            return 0.0;
        }
        match &self.kind {
            ModelKind::Sis { beta, gamma } => match (from, to) {
                (1, 0) => *gamma,
                _ => beta
                    .iter()
                    .enumerate()
                    .map(|(mi, b)| b * phi.order(mi + 1)[tuple_count(2, mi + 1) - 1])
                    .sum(),
            },
            ModelKind::Glauber { alpha, gamma, beta } => match (from, to) {
                (1, 0) => 1.0,
                _ => {
                    let s: f64 = (0..self.max_order)
                        .map(|mi| {
                            let block = phi.order(mi + 1);
                            alpha[mi] * block[block.len() - 1] + gamma[mi] * block[0]
                        })
                        .sum();
                    (beta * s).exp()
                }
            },
            ModelKind::Voter { lambda } => lambda * phi.order(1)[to],
            ModelKind::Majority { max_order } => (1..=*max_order)
                .map(|m| {
                    phi.order(m)
                        .iter()
                        .enumerate()
                        .filter(|&(tuple, _)| majority_is_zero(tuple, m) == (to == 0))
                        .map(|(_, v)| v)
                        .sum::<f64>()
                })
                .sum(),
            ModelKind::Affine => self.affine.as_ref().unwrap().rate(from, to, phi),
        }
    }

    /// A bound on `rate(from, to, φ)` over nonnegative `φ` whose order-`m`
    /// block sums to at most `delta[m-1]`.
    pub fn rate_upper_bound(&self, from: usize, to: usize, delta: &[f64]) -> f64 {
        if from == to {
            return 0.0;
        }
        let d = |mi: usize| delta.get(mi).copied().unwrap_or(0.0);
        match &self.kind {
            ModelKind::Glauber { alpha, gamma, beta } => match (from, to) {
                (1, 0) => 1.0,
                _ => {
                    let spread: f64 = (0..self.max_order)
                        .map(|mi| (alpha[mi].abs() + gamma[mi].abs()) * d(mi))
                        .sum();
                    (beta.abs() * spread).exp()
                }
            },
            _ => self.affine.as_ref().unwrap().upper_bound(from, to, delta),
        }
    }

    /// Lipschitz constant of the rates in the ℓ1 norm of `φ` on the same domain.
    pub fn lipschitz_hint(&self, delta: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Glauber { alpha, gamma, beta } => {
                let slope = alpha
                    .iter()
                    .chain(gamma)
                    .fold(0.0f64, |acc, x| acc.max(x.abs()));
                beta.abs() * slope * self.rate_upper_bound(0, 1, delta)
            }
            _ => self
                .affine
                .as_ref()
                .unwrap()
                .rates
                .iter()
                .flat_map(|r| r.terms.iter().map(|t| t.coeff))
                .fold(0.0, f64::max),
        }
    }

    /// Writes the off-diagonal rates into `out[from * n + to]`, diagonal zero.
    pub fn rates_into(&self, phi: &Neighborhood<'_>, out: &mut [f64]) {
        let n = self.n_states;
        for from in 0..n {
            for to in 0..n {
                out[from * n + to] = self.rate(from, to, phi);
            }
        }
    }
}

impl RateModel {
    /// `dz = Q(φ) z`: inflow minus outflow for a single vertex distribution `z`.
    /// `rates` is scratch of length `|S|²`.
    pub fn apply_generator(&self, phi: &Neighborhood<'_>, z: &[f64], rates: &mut [f64], dz: &mut [f64]) {
        let n = self.n_states;
        self.rates_into(phi, rates);
        for s in 0..n {
            let mut inflow = 0.0;
            let mut outflow = 0.0;
            for o in 0..n {
                inflow += rates[o * n + s] * z[o];
                outflow += rates[s * n + o];
            }
            dz[s] = inflow - z[s] * outflow;
        }
    }
}

/// Whether opinion `0` is the strict majority of the tail states encoded by `tuple`.
fn majority_is_zero(tuple: usize, m: usize) -> bool {
    let ones = tuple.count_ones() as usize;
    2 * ones < m
}
