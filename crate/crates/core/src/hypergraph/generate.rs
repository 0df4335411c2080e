use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{normalize, Convention, HypergraphBuilder, RawHypergraph, WeightedHypergraph};
use crate::error::{Error, Result};

/// Upper limit on the number of ordered entries an expected-weight family may emit.
const MAX_DENSE_ENTRIES: u128 = 50_000_000;

/// Network families.
///
/// Adjacency families (`Complete`, `Ring`, `ErdosRenyi`, `RandomUniform`)
/// are normalized with the requested convention. `Annealed` uses the
/// requested convention on the expected adjacency. `Hmfa`, `Activity` and
/// `Block` define their weights directly.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Simple complete graph.
    Complete { n: usize },
    /// Complete hypergraph with `w^{(m)} = 1/N^m` for every tail, loops included.
    Hmfa { n: usize, max_order: usize },
    /// Cycle where each vertex links to its `k` nearest neighbors on each side.
    Ring { n: usize, k: usize },
    /// Undirected G(n, p).
    ErdosRenyi { n: usize, p: f64 },
    /// `hyperedges` distinct random communities of `order + 1` vertices.
    RandomUniform {
        n: usize,
        order: usize,
        hyperedges: usize,
    },
    /// Expected adjacency of the configuration model; `degrees[m-1][i]`.
    Annealed {
        degrees: Vec<Vec<f64>>,
        drop_self_pairs: bool,
    },
    /// Activity-driven expected weights `(a_i + Σ_r a_{j_r}) / N^m`; `activities[m-1][i]`.
    Activity { activities: Vec<Vec<f64>> },
    /// Ideal metapopulation: consecutive blocks, `w_ij = weights[k][l]` for `i ≠ j`.
    Block {
        n: usize,
        sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
    },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Complete { .. } => "complete",
            Family::Hmfa { .. } => "hmfa",
            Family::Ring { .. } => "ring",
            Family::ErdosRenyi { .. } => "erdos_renyi",
            Family::RandomUniform { .. } => "random_uniform",
            Family::Annealed { .. } => "annealed",
            Family::Activity { .. } => "activity",
            Family::Block { .. } => "block",
        }
    }
}

fn adjacency_convention(convention: Convention) -> Result<Convention> {
    match convention {
        Convention::Explicit => Err(Error::Parameter(
            "adjacency families need convention 1 or 2".into(),
        )),
        c => Ok(c),
    }
}

fn guard_dense(n: usize, m: usize) -> Result<()> {
    let entries = (n as u128).pow(m as u32 + 1);
    if entries > MAX_DENSE_ENTRIES {
        return Err(Error::Capacity {
            what: format!("dense order-{m} entries N^(m+1)"),
            value: entries,
            limit: MAX_DENSE_ENTRIES,
        });
    }
    Ok(())
}

/// Visits every `m`-tuple over `0..n` in lexicographic order.
fn for_each_tuple(n: usize, m: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut t = vec![0usize; m];
    loop {
        f(&t)?;
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            t[pos] += 1;
            if t[pos] < n {
                break;
            }
            t[pos] = 0;
        }
    }
}

impl Family {
    /// Unnormalized adjacency of the families built from one, `None` for the
    /// families that define their weights directly. Uses the same random
    /// draws as [`generate`] with the same seed.
    pub fn adjacency(&self, seed: u64) -> Result<Option<RawHypergraph>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = match *self {
            Family::Complete { n } => {
                if n < 2 {
                    return Err(Error::Parameter("complete graph needs n >= 2".into()));
                }
                let mut raw = RawHypergraph::new(n, 1)?;
                for a in 0..n {
                    for b in a + 1..n {
                        raw.add_undirected(a, b)?;
                    }
                }
                raw
            }
            Family::Ring { n, k } => {
                if k == 0 || 2 * k >= n {
                    return Err(Error::Parameter(format!(
                        "ring needs 1 <= k and 2k < n, got n = {n}, k = {k}"
                    )));
                }
                let mut raw = RawHypergraph::new(n, 1)?;
                for i in 0..n {
                    for off in 1..=k {
                        raw.add_undirected(i, (i + off) % n)?;
                    }
                }
                raw
            }
            Family::ErdosRenyi { n, p } => {
                if !(0.0..=1.0).contains(&p) || n < 2 {
                    return Err(Error::Parameter(format!(
                        "erdos_renyi needs n >= 2 and p in [0, 1], got n = {n}, p = {p}"
                    )));
                }
                let mut raw = RawHypergraph::new(n, 1)?;
                for a in 0..n {
                    for b in a + 1..n {
                        if rng.random::<f64>() < p {
                            raw.add_undirected(a, b)?;
                        }
                    }
                }
                raw
            }
            Family::RandomUniform {
                n,
                order,
                hyperedges,
            } => {
                if order == 0 || order + 1 > n {
                    return Err(Error::Parameter(format!(
                        "random_uniform needs 1 <= order < n, got n = {n}, order = {order}"
                    )));
                }
                let possible = binomial(n, order + 1);
                if (hyperedges as f64) > possible {
                    return Err(Error::Parameter(format!(
                        "{hyperedges} distinct communities of size {} do not exist on {n} vertices",
                        order + 1
                    )));
                }
                let mut seen: HashSet<Vec<usize>> = HashSet::new();
                let mut raw = RawHypergraph::new(n, order)?;
                while seen.len() < hyperedges {
                    let mut members = sample(&mut rng, n, order + 1).into_vec();
                    members.sort_unstable();
                    if seen.insert(members.clone()) {
                        raw.add_hyperedge(&members)?;
                    }
                }
                raw
            }
            _ => return Ok(None),
        };
        Ok(Some(raw))
    }
}

/// Builds a network. Deterministic in `(family, convention, seed)`; the seed
/// only matters for the random families.
pub fn generate(family: &Family, convention: Convention, seed: u64) -> Result<WeightedHypergraph> {
    if let Some(raw) = family.adjacency(seed)? {
        return normalize(&raw, adjacency_convention(convention)?);
    }
    match family {
        &Family::Hmfa { n, max_order } => {
            if n == 0 || max_order == 0 {
                return Err(Error::Parameter("hmfa needs n >= 1 and max_order >= 1".into()));
            }
            for m in 1..=max_order {
                guard_dense(n, m)?;
            }
            let mut b = HypergraphBuilder::new(n, max_order, Convention::Explicit);
            for m in 1..=max_order {
                let w = (n as f64).powi(-(m as i32));
                for i in 0..n {
                    for_each_tuple(n, m, |t| b.push(i, t, w))?;
                }
            }
            Ok(b.build())
        }
        Family::Annealed {
            degrees,
            drop_self_pairs,
        } => annealed(degrees, *drop_self_pairs, adjacency_convention(convention)?),
        Family::Activity { activities } => activity(activities),
        Family::Block { n, sizes, weights } => block(*n, sizes, weights),
        _ => unreachable!("adjacency families are handled above"),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_sequence(rows: &[Vec<f64>], what: &str) -> Result<usize> {
    let n = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || n == 0 {
        return Err(Error::Parameter(format!("{what}: empty sequence")));
    }
    for (mi, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Parameter(format!(
                "{what}: order {} has {} entries, expected {n}",
                mi + 1,
                row.len()
            )));
        }
        if let Some(bad) = row.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Parameter(format!(
                "{what}: entries must be finite and nonnegative, got {bad}"
            )));
        }
    }
    Ok(n)
}

/// Expected configuration-model adjacency
/// `<a>^{(m)}_{i,j} = m! d(i) Π_r d(j_r) / (d̄ N)^m`, normalized.
fn annealed(
    degrees: &[Vec<f64>],
    drop_self_pairs: bool,
    convention: Convention,
) -> Result<WeightedHypergraph> {
    let n = check_sequence(degrees, "annealed degrees")?;
    let max_order = degrees.len();
    let mut b = HypergraphBuilder::new(n, max_order, convention);
    for (mi, d) in degrees.iter().enumerate() {
        let m = mi + 1;
        let total: f64 = d.iter().sum();
        if total == 0.0 {
            continue;
        }
        guard_dense(n, m)?;
        let d_bar = total / n as f64;
        let scale = (d_bar * n as f64).powi(m as i32);
        for i in 0..n {
            if d[i] == 0.0 {
                continue;
            }
            // w = <a> / (m! * denominator)
            let head_factor = match convention {
                Convention::One => d[i] / d_bar,
                _ => 1.0,
            };
            for_each_tuple(n, m, |t| {
                if m == 1 && drop_self_pairs && t[0] == i {
                    return Ok(());
                }
                let prod: f64 = t.iter().map(|&j| d[j]).product();
                b.push(i, t, head_factor * prod / scale)
            })?;
        }
    }
    Ok(b.build())
}

fn activity(activities: &[Vec<f64>]) -> Result<WeightedHypergraph> {
    let n = check_sequence(activities, "activities")?;
    let max_order = activities.len();
    let mut b = HypergraphBuilder::new(n, max_order, Convention::Explicit);
    for (mi, a) in activities.iter().enumerate() {
        let m = mi + 1;
        guard_dense(n, m)?;
        let norm = (n as f64).powi(-(m as i32));
        for i in 0..n {
            for_each_tuple(n, m, |t| {
                let w = (a[i] + t.iter().map(|&j| a[j]).sum::<f64>()) * norm;
                b.push(i, t, w)
            })?;
        }
    }
    Ok(b.build())
}

fn block(n: usize, sizes: &[usize], weights: &[Vec<f64>]) -> Result<WeightedHypergraph> {
    let k = sizes.len();
    if k == 0 || sizes.contains(&0) {
        return Err(Error::Parameter("block sizes must be positive".into()));
    }
    if sizes.iter().sum::<usize>() != n {
        return Err(Error::Parameter(format!(
            "block sizes sum to {}, expected n = {n}",
            sizes.iter().sum::<usize>()
        )));
    }
    if weights.len() != k || weights.iter().any(|r| r.len() != k) {
        return Err(Error::Parameter(format!("block weights must be {k} x {k}")));
    }
    if weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Parameter("block weights must be finite and nonnegative".into()));
    }
    let group: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &s)| std::iter::repeat_n(g, s))
        .collect();
    let mut b = HypergraphBuilder::new(n, 1, Convention::Explicit);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                b.push(i, &[j], weights[group[i]][group[j]])?;
            }
        }
    }
    Ok(b.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{degree_report, regularity_report};

    #[test]
    fn ring_degrees_by_direct_count() {
        let (n, k) = (1000, 10);
        let h = generate(&Family::Ring { n, k }, Convention::One, 0).unwrap();
        let rep = degree_report(&h);
        for i in 0..n {
            // brute-force count of circular distances 1..=k
            let count = (0..n)
                .filter(|&j| {
                    let dist = (i as i64 - j as i64).rem_euclid(n as i64);
                    let dist = dist.min(n as i64 - dist);
                    dist >= 1 && dist <= k as i64
                })
                .count();
            assert_eq!(rep.d[0][i], count as f64);
            assert_eq!(count, 20);
            for (_, w) in h.edges(i, 1) {
                assert_eq!(w, 1.0 / 20.0);
            }
        }
        assert_eq!(rep.d_bar[0], 20.0);
    }

    #[test]
    fn annealed_constant_degrees_give_complete_weights() {
        let n = 40;
        let h = generate(
            &Family::Annealed {
                degrees: vec![vec![6.0; n]],
                drop_self_pairs: false,
            },
            Convention::One,
            0,
        )
        .unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((h.weight(i, &[j]) - 1.0 / n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn annealed_row_sums_match_degree_ratio() {
        let degrees = vec![vec![1.0, 2.0, 2.0, 3.0, 0.0, 4.0]];
        let d_bar = 2.0;
        let h = generate(
            &Family::Annealed {
                degrees: degrees.clone(),
                drop_self_pairs: false,
            },
            Convention::One,
            0,
        )
        .unwrap();
        let rep = degree_report(&h);
        for (i, d) in degrees[0].iter().enumerate() {
            assert!((rep.delta[0][i] - d / d_bar).abs() < 1e-14);
        }
        let h2 = generate(
            &Family::Annealed {
                degrees,
                drop_self_pairs: false,
            },
            Convention::Two,
            0,
        )
        .unwrap();
        let rep2 = degree_report(&h2);
        for i in 0..6 {
            let expected = if i == 4 { 0.0 } else { 1.0 };
            assert!((rep2.delta[0][i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn activity_equal_rates() {
        let n = 50;
        let a = 0.3;
        let h = generate(
            &Family::Activity {
                activities: vec![vec![a; n]],
            },
            Convention::Explicit,
            0,
        )
        .unwrap();
        assert!((h.weight(3, &[7]) - 2.0 * a / n as f64).abs() < 1e-15);
        for d in &degree_report(&h).delta[0] {
            assert!((d - 2.0 * a).abs() < 1e-14);
        }
    }

    #[test]
    fn hmfa_secondary_loop_weight_closed_form() {
        for n in [10usize, 100] {
            let h = generate(&Family::Hmfa { n, max_order: 2 }, Convention::Explicit, 0).unwrap();
            let r = regularity_report(&h);
            assert!((r.w_max - 1.0 / n as f64).abs() < 1e-15);
            assert!((r.delta_max - 1.0).abs() < 1e-12);
            let closed = 1.0 - (1.0 - 1.0 / n as f64);
            for i in 0..n {
                assert_eq!(r.sloop_weight[i][0], 0.0);
                assert!((r.sloop_weight[i][1] - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_errors() {
        let bad_blocks = Family::Block {
            n: 10,
            sizes: vec![4, 5],
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert!(matches!(
            generate(&bad_blocks, Convention::Explicit, 0),
            Err(Error::Parameter(_))
        ));
        assert!(generate(&Family::Ring { n: 10, k: 5 }, Convention::One, 0).is_err());
        assert!(generate(&Family::Complete { n: 5 }, Convention::Explicit, 0).is_err());
        let neg = Family::Annealed {
            degrees: vec![vec![1.0, -1.0]],
            drop_self_pairs: false,
        };
        assert!(generate(&neg, Convention::One, 0).is_err());
    }

    #[test]
    fn random_families_are_deterministic() {
        let f = Family::RandomUniform {
            n: 30,
            order: 2,
            hyperedges: 40,
        };
        let a = generate(&f, Convention::Two, 7).unwrap();
        let b = generate(&f, Convention::Two, 7).unwrap();
        assert_eq!(a, b);
        let c = generate(&f, Convention::Two, 8).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        // 40 communities of 3, each member sees 2 ordered tails per community
        assert_eq!(a.edge_count(2), 40 * 3 * 2);
    }
}
