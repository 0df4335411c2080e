//! Line-oriented text format for weighted hypergraphs.
//!
//! ```text
//! # comments and blank lines are ignored
//! N M convention
//! m i j1 ... jm weight
//! ```
//!
//! Vertex labels in the file are 1-based. `convention` is `1`, `2` or
//! `explicit`; weights are stored as given and never renormalized on load.

use std::fmt::Write as _;

use super::{Convention, HypergraphBuilder, WeightedHypergraph};
use crate::error::{Error, Result};

/// Serializes `h`, optionally preceded by `# `-prefixed comment lines.
pub fn write_hypergraph(h: &WeightedHypergraph, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(
        out,
        "{} {} {}",
        h.n_vertices(),
        h.max_order(),
        h.convention().label()
    );
    for m in 1..=h.max_order() {
        for i in 0..h.n_vertices() {
            for (tail, w) in h.edges(i, m) {
                let _ = write!(out, "{m} {}", i + 1);
                for j in tail {
                    let _ = write!(out, " {}", j + 1);
                }
                let _ = writeln!(out, " {w:.16e}");
            }
        }
    }
    out
}

pub fn read_hypergraph(text: &str) -> Result<WeightedHypergraph> {
    let mut builder: Option<HypergraphBuilder> = None;
    let mut n = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        match builder.as_mut() {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(format!(
                        "header must be `N M convention`, got `{line}`"
                    )));
                }
                n = fields[0]
                    .parse()
                    .map_err(|_| parse_err(format!("bad vertex count `{}`", fields[0])))?;
                let max_order: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(format!("bad max order `{}`", fields[1])))?;
                if n == 0 || max_order == 0 {
                    return Err(parse_err("N and M must be positive".into()));
                }
                let convention =
                    Convention::parse(fields[2]).map_err(|e| parse_err(e.to_string()))?;
                builder = Some(HypergraphBuilder::new(n, max_order, convention));
            }
            Some(b) => {
                let m: usize = fields
                    .first()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| parse_err("missing edge order".into()))?;
                if fields.len() != m + 3 {
                    return Err(parse_err(format!(
                        "order-{m} edge needs {} fields, got {}",
                        m + 3,
                        fields.len()
                    )));
                }
                let mut labels = Vec::with_capacity(m + 1);
                for f in &fields[1..m + 2] {
                    let label: usize = f
                        .parse()
                        .map_err(|_| parse_err(format!("bad vertex label `{f}`")))?;
                    if label == 0 || label > n {
                        return Err(parse_err(format!("vertex label {label} outside 1..={n}")));
                    }
                    labels.push(label - 1);
                }
                let w: f64 = fields[m + 2]
                    .parse()
                    .map_err(|_| parse_err(format!("bad weight `{}`", fields[m + 2])))?;
                b.push(labels[0], &labels[1..], w)
                    .map_err(|e| parse_err(e.to_string()))?;
            }
        }
    }
    builder
        .map(HypergraphBuilder::build)
        .ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })
}
