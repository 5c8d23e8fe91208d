//! The DGM1 text format for models, CSV export of solver traces.
//!
//! DGM1 layout: line 1 is the literal `DGM1`; line 2 holds the node and
//! edge counts; line 3 the per-node label counts; then one unary line
//! per node and, per edge, a `u v` line followed by one line per label
//! of `u` with the costs towards the labels of `v`. `inf` stands for
//! the BIG sentinel and lines starting with `#` are ignored.

use crate::dual_ascent::SolverTrace;
use crate::error::{Error, Result};
use crate::model::{is_big, GraphicalModel, BIG};

fn fmt_cost(x: f64) -> String {
    if is_big(x) {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

/// Serializes a model; finite decimal costs round-trip bit-exactly.
pub fn write_model(model: &GraphicalModel) -> String {
    let mut out = String::new();
    out.push_str("DGM1\n");
    out.push_str(&format!("{} {}\n", model.node_count(), model.edge_count()));
    let labels: Vec<String> = model.label_counts().iter().map(|l| l.to_string()).collect();
    out.push_str(&labels.join(" "));
    out.push('\n');
    for u in 0..model.node_count() {
        let row: Vec<String> = model.unary(u).iter().map(|&x| fmt_cost(x)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        out.push_str(&format!("{u} {v}\n"));
        let lv = model.label_count(v);
        for s in 0..model.label_count(u) {
            let row: Vec<String> =
                (0..lv).map(|t| fmt_cost(model.pair_cost(e, s, t))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn next_data(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            self.last_line = i + 1;
            return Some((i + 1, trimmed));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let fallback = self.last_line;
        self.next_data().ok_or(Error::Parse {
            line: fallback + 1,
            msg: format!("unexpected end of input, expected {what}"),
        })
    }
}

fn parse_cost(tok: &str, line: usize) -> Result<f64> {
    if tok == "inf" {
        return Ok(BIG);
    }
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("bad number '{tok}'") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite cost '{tok}'") });
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("bad count '{tok}'") })
}

/// Parses a DGM1 document.
pub fn parse_model(text: &str) -> Result<GraphicalModel> {
    let mut lines = Lines { inner: text.lines().enumerate(), last_line: 0 };
    let (l, header) = lines.expect("header")?;
    if header != "DGM1" {
        return Err(Error::Parse { line: l, msg: format!("expected 'DGM1', got '{header}'") });
    }
    let (l, counts) = lines.expect("node and edge counts")?;
    let mut it = counts.split_whitespace();
    let n = parse_usize(it.next().unwrap_or(""), l)?;
    let m = parse_usize(
        it.next().ok_or(Error::Parse { line: l, msg: "missing edge count".into() })?,
        l,
    )?;
    if it.next().is_some() {
        return Err(Error::Parse { line: l, msg: "trailing tokens after counts".into() });
    }

    let (l, lab_line) = lines.expect("label counts")?;
    let labels: Vec<usize> = lab_line
        .split_whitespace()
        .map(|t| parse_usize(t, l))
        .collect::<Result<_>>()?;
    if labels.len() != n {
        return Err(Error::Parse {
            line: l,
            msg: format!("{} label counts for {} nodes", labels.len(), n),
        });
    }

    let mut unary = Vec::with_capacity(n);
    for u in 0..n {
        let (l, row) = lines.expect("a unary cost line")?;
        let costs: Vec<f64> =
            row.split_whitespace().map(|t| parse_cost(t, l)).collect::<Result<_>>()?;
        if costs.len() != labels[u] {
            return Err(Error::Parse {
                line: l,
                msg: format!("node {u} expects {} costs, got {}", labels[u], costs.len()),
            });
        }
        unary.push(costs);
    }

    let mut edges = Vec::with_capacity(m);
    let mut pairwise = Vec::with_capacity(m);
    for _ in 0..m {
        let (l, pair) = lines.expect("an edge line")?;
        let toks: Vec<&str> = pair.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse { line: l, msg: "edge line must be 'u v'".into() });
        }
        let u = parse_usize(toks[0], l)?;
        let v = parse_usize(toks[1], l)?;
        if u >= v {
            return Err(Error::Parse { line: l, msg: format!("edge must satisfy u < v, got {u} {v}") });
        }
        if v >= n {
            return Err(Error::Parse { line: l, msg: format!("edge node {v} out of range") });
        }
        let mut mat = Vec::with_capacity(labels[u] * labels[v]);
        for s in 0..labels[u] {
            let (l, row) = lines.expect("a pairwise cost line")?;
            let costs: Vec<f64> =
                row.split_whitespace().map(|t| parse_cost(t, l)).collect::<Result<_>>()?;
            if costs.len() != labels[v] {
                return Err(Error::Parse {
                    line: l,
                    msg: format!(
                        "edge ({u}, {v}) row {s} expects {} costs, got {}",
                        labels[v],
                        costs.len()
                    ),
                });
            }
            mat.extend(costs);
        }
        edges.push((u, v));
        pairwise.push(mat);
    }
    if let Some((l, extra)) = lines.next_data() {
        return Err(Error::Parse { line: l, msg: format!("trailing content '{extra}'") });
    }
    GraphicalModel::new(labels, edges, unary, pairwise)
        .map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
}

/// Writes a labeling as one space-separated line.
pub fn write_labeling(y: &[usize]) -> String {
    let toks: Vec<String> = y.iter().map(|s| s.to_string()).collect();
    toks.join(" ")
}

pub fn parse_labeling(text: &str) -> Result<Vec<usize>> {
    text.split_whitespace()
        .map(|t| parse_usize(t, 1))
        .collect()
}

/// CSV form of a solver trace: header plus one row per iteration,
/// missing values empty.
pub fn write_trace(trace: &SolverTrace) -> String {
    let mut out = String::from("iter,seconds,dual,primal_best,epsilon\n");
    for row in &trace.rows {
        let dual = if row.dual == f64::NEG_INFINITY { String::new() } else { format!("{}", row.dual) };
        out.push_str(&format!(
            "{},{:.6},{},{},{}\n",
            row.iter,
            row.seconds,
            dual,
            row.primal_best.map(|x| format!("{x}")).unwrap_or_default(),
            row.epsilon.map(|x| format!("{x}")).unwrap_or_default(),
        ));
    }
    out
}
