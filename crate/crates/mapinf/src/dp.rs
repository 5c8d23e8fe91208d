//! Exact MAP inference on chains and trees by dynamic programming,
//! plus node and edge min-marginals for chains.

use crate::error::{Error, Result};
use crate::model::{big_add, CostVector, GraphicalModel, Labeling};

/// Forward/backward messages and backtracking pointers of a chain solve.
/// All vectors are indexed by position in the chain order, not by node id.
#[derive(Debug, Clone)]
pub struct ChainMessages {
    /// `forward[i][s]`: best cost of a partial labeling over positions
    /// `0..i` ending with label `s` at position `i`, excluding the unary
    /// cost at `i`. `forward[0]` is identically zero.
    pub forward: Vec<Vec<f64>>,
    /// Mirror image computed from the other end; `backward[n-1]` is zero.
    pub backward: Vec<Vec<f64>>,
    /// `pointers[i][s]`: optimal predecessor label at position `i - 1`
    /// for label `s` at position `i` (empty for `i = 0`).
    pub pointers: Vec<Vec<usize>>,
}

/// Node and edge min-marginals: best total energy among labelings pinned
/// to a given label (node) or label pair (edge).
#[derive(Debug, Clone)]
pub struct MinMarginals {
    /// Per node id, one value per label.
    pub node: Vec<Vec<f64>>,
    /// Per edge id, row-major with rows indexed by the lower endpoint.
    pub edge: Vec<Vec<f64>>,
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Checks that `order` visits every node exactly once and that the
/// subgraph induced by the nodes is exactly the path along the order.
fn validate_chain(model: &GraphicalModel, order: &[usize]) -> Result<Vec<usize>> {
    let n = model.node_count();
    if order.len() != n {
        return Err(Error::InvalidStructure(format!(
            "chain order has {} entries for {} nodes",
            order.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &u in order {
        if u >= n || seen[u] {
            return Err(Error::InvalidStructure("chain order is not a permutation".into()));
        }
        seen[u] = true;
    }
    if model.edge_count() + 1 != n {
        return Err(Error::InvalidStructure(format!(
            "a chain on {n} nodes has {} edges, the model has {}",
            n - 1,
            model.edge_count()
        )));
    }
    let mut edge_ids = Vec::with_capacity(n.saturating_sub(1));
    for w in order.windows(2) {
        match model.edge_index(w[0], w[1]) {
            Some(e) => edge_ids.push(e),
            None => {
                return Err(Error::InvalidStructure(format!(
                    "consecutive nodes {} and {} are not adjacent",
                    w[0], w[1]
                )))
            }
        }
    }
    Ok(edge_ids)
}

fn forward_pass(
    model: &GraphicalModel,
    costs: &CostVector,
    order: &[usize],
    edge_ids: &[usize],
) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let n = order.len();
    let mut forward: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pointers: Vec<Vec<usize>> = Vec::with_capacity(n);
    forward.push(vec![0.0; model.label_count(order[0])]);
    pointers.push(Vec::new());
    for i in 1..n {
        let prev = order[i - 1];
        let cur = order[i];
        let e = edge_ids[i - 1];
        let lc = model.label_count(cur);
        let mut f = vec![0.0; lc];
        let mut r = vec![0; lc];
        for s in 0..lc {
            let mut best = f64::INFINITY;
            let mut best_t = 0;
            for t in 0..model.label_count(prev) {
                let cand = big_add(
                    big_add(forward[i - 1][t], costs.unary[prev][t]),
                    costs_pair_from(model, costs, e, prev, t, s),
                );
                if cand < best {
                    best = cand;
                    best_t = t;
                }
            }
            f[s] = best;
            r[s] = best_t;
        }
        forward.push(f);
        pointers.push(r);
    }
    (forward, pointers)
}

#[inline]
fn costs_pair_from(
    model: &GraphicalModel,
    costs: &CostVector,
    e: usize,
    from: usize,
    s_from: usize,
    s_other: usize,
) -> f64 {
    if model.edges()[e].0 == from {
        costs.pair(model, e, s_from, s_other)
    } else {
        costs.pair(model, e, s_other, s_from)
    }
}

/// Exact chain solve: returns the optimal energy, an optimal labeling
/// (lowest label index on ties) and the messages.
pub fn solve_chain(
    model: &GraphicalModel,
    order: &[usize],
) -> Result<(f64, Labeling, ChainMessages)> {
    solve_chain_costs(model, model.costs(), order)
}

/// Chain solve under an arbitrary cost vector of the model's shape.
pub fn solve_chain_costs(
    model: &GraphicalModel,
    costs: &CostVector,
    order: &[usize],
) -> Result<(f64, Labeling, ChainMessages)> {
    let edge_ids = validate_chain(model, order)?;
    let n = order.len();
    let (forward, pointers) = forward_pass(model, costs, order, &edge_ids);

    let rev: Vec<usize> = order.iter().rev().cloned().collect();
    let rev_edges: Vec<usize> = edge_ids.iter().rev().cloned().collect();
    let (mut backward, _) = forward_pass(model, costs, &rev, &rev_edges);
    backward.reverse();

    let last = order[n - 1];
    let totals: Vec<f64> = (0..model.label_count(last))
        .map(|s| big_add(forward[n - 1][s], costs.unary[last][s]))
        .collect();
    let best_label = argmin(&totals);
    let optimum = totals[best_label];

    let mut y = vec![0; model.node_count()];
    let mut s = best_label;
    y[last] = s;
    for i in (1..n).rev() {
        s = pointers[i][s];
        y[order[i - 1]] = s;
    }

    Ok((optimum, y, ChainMessages { forward, backward, pointers }))
}

/// Pointer-free reconstruction from forward messages only (the variant
/// reused by the SRMP rounding). Equal energy to the pointer-based
/// labeling, though ties may resolve differently.
pub fn chain_reconstruct(
    model: &GraphicalModel,
    costs: &CostVector,
    order: &[usize],
    messages: &ChainMessages,
) -> Result<Labeling> {
    let edge_ids = validate_chain(model, order)?;
    let n = order.len();
    let last = order[n - 1];
    let totals: Vec<f64> = (0..model.label_count(last))
        .map(|s| big_add(messages.forward[n - 1][s], costs.unary[last][s]))
        .collect();
    let mut y = vec![0; model.node_count()];
    y[last] = argmin(&totals);
    for i in (0..n - 1).rev() {
        let u = order[i];
        let e = edge_ids[i];
        let next = order[i + 1];
        let scores: Vec<f64> = (0..model.label_count(u))
            .map(|t| {
                big_add(
                    big_add(messages.forward[i][t], costs.unary[u][t]),
                    costs_pair_from(model, costs, e, u, t, y[next]),
                )
            })
            .collect();
        y[u] = argmin(&scores);
    }
    Ok(y)
}

/// Forward-backward min-marginals on a chain. The minimum over every
/// node vector and every edge matrix equals the chain optimum.
pub fn min_marginals_chain(model: &GraphicalModel, order: &[usize]) -> Result<MinMarginals> {
    min_marginals_chain_costs(model, model.costs(), order)
}

pub fn min_marginals_chain_costs(
    model: &GraphicalModel,
    costs: &CostVector,
    order: &[usize],
) -> Result<MinMarginals> {
    let edge_ids = validate_chain(model, order)?;
    let (_, _, msgs) = solve_chain_costs(model, costs, order)?;
    let n = order.len();

    let mut node = vec![Vec::new(); model.node_count()];
    for (i, &u) in order.iter().enumerate() {
        node[u] = (0..model.label_count(u))
            .map(|s| {
                big_add(big_add(msgs.forward[i][s], msgs.backward[i][s]), costs.unary[u][s])
            })
            .collect();
    }

    let mut edge = vec![Vec::new(); model.edge_count()];
    for i in 0..n - 1 {
        let (a, b) = (order[i], order[i + 1]);
        let e = edge_ids[i];
        let (u, v) = model.edges()[e];
        let (lu, lv) = (model.label_count(u), model.label_count(v));
        let mut mat = vec![0.0; lu * lv];
        for s in 0..model.label_count(a) {
            for t in 0..model.label_count(b) {
                let val = big_add(
                    big_add(
                        big_add(msgs.forward[i][s], msgs.backward[i + 1][t]),
                        big_add(costs.unary[a][s], costs.unary[b][t]),
                    ),
                    costs_pair_from(model, costs, e, a, s, t),
                );
                // Store in canonical (lower endpoint rows) orientation.
                let (rs, ct) = if u == a { (s, t) } else { (t, s) };
                mat[rs * lv + ct] = val;
            }
        }
        edge[e] = mat;
    }

    Ok(MinMarginals { node, edge })
}

/// Exact solve on forests by iterative leaf elimination. Connected
/// components are solved independently and their energies summed.
pub fn solve_tree(model: &GraphicalModel) -> Result<(f64, Labeling)> {
    solve_tree_costs(model, model.costs())
}

pub fn solve_tree_costs(model: &GraphicalModel, costs: &CostVector) -> Result<(f64, Labeling)> {
    let n = model.node_count();
    if model.edge_count() >= n && n > 0 {
        return Err(Error::InvalidStructure("graph contains a cycle".into()));
    }

    let mut f: Vec<Vec<f64>> = costs.unary.clone();
    let mut degree: Vec<usize> = (0..n).map(|u| model.degree(u)).collect();
    let mut removed = vec![false; n];

    // Elimination record: leaf v folded into u over edge e, with the
    // optimal leaf label per label of u at elimination time.
    struct Elim {
        leaf: usize,
        into: usize,
        choice: Vec<usize>,
    }
    let mut elims: Vec<Elim> = Vec::with_capacity(model.edge_count());

    let mut queue: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    let mut eliminated_edges = 0usize;
    while let Some(v) = queue.pop() {
        if removed[v] || degree[v] != 1 {
            continue;
        }
        // The single remaining neighbor of the leaf.
        let mut into = usize::MAX;
        let mut edge = usize::MAX;
        for (&w, &e) in model.neighbors(v).iter().zip(model.incident(v)) {
            if !removed[w] {
                into = w;
                edge = e;
                break;
            }
        }
        debug_assert!(into != usize::MAX);
        let lu = model.label_count(into);
        let lv = model.label_count(v);
        let mut choice = vec![0; lu];
        for s in 0..lu {
            let mut best = f64::INFINITY;
            let mut best_t = 0;
            for t in 0..lv {
                let cand = big_add(f[v][t], costs_pair_from(model, costs, edge, into, s, t));
                if cand < best {
                    best = cand;
                    best_t = t;
                }
            }
            f[into][s] = big_add(f[into][s], best);
            choice[s] = best_t;
        }
        removed[v] = true;
        degree[into] -= 1;
        eliminated_edges += 1;
        elims.push(Elim { leaf: v, into, choice });
        if degree[into] == 1 {
            queue.push(into);
        }
    }
    if eliminated_edges != model.edge_count() {
        return Err(Error::InvalidStructure("graph contains a cycle".into()));
    }

    // Remaining nodes are component roots: pick their labels, then replay
    // the eliminations backwards.
    let mut y = vec![0; n];
    let mut optimum = 0.0;
    for u in 0..n {
        if !removed[u] {
            let s = argmin(&f[u]);
            y[u] = s;
            optimum = big_add(optimum, f[u][s]);
        }
    }
    for elim in elims.iter().rev() {
        y[elim.leaf] = elim.choice[y[elim.into]];
    }
    Ok((optimum, y))
}

/// Node min-marginals for one node of a tree: eliminates leaves until
/// only `root` remains and returns its accumulated vector.
pub fn tree_node_min_marginals(
    model: &GraphicalModel,
    costs: &CostVector,
    root: usize,
) -> Result<Vec<f64>> {
    let n = model.node_count();
    if model.edge_count() + 1 != n {
        return Err(Error::InvalidStructure("tree min-marginals need a connected tree".into()));
    }
    let mut f: Vec<Vec<f64>> = costs.unary.clone();
    let mut degree: Vec<usize> = (0..n).map(|u| model.degree(u)).collect();
    let mut removed = vec![false; n];
    let mut queue: Vec<usize> = (0..n).filter(|&u| degree[u] == 1 && u != root).collect();
    let mut eliminated = 0usize;
    while let Some(v) = queue.pop() {
        if removed[v] || degree[v] != 1 || v == root {
            continue;
        }
        let mut into = usize::MAX;
        let mut edge = usize::MAX;
        for (&w, &e) in model.neighbors(v).iter().zip(model.incident(v)) {
            if !removed[w] {
                into = w;
                edge = e;
                break;
            }
        }
        for s in 0..model.label_count(into) {
            let mut best = f64::INFINITY;
            for t in 0..model.label_count(v) {
                let cand = big_add(f[v][t], costs_pair_from(model, costs, edge, into, s, t));
                if cand < best {
                    best = cand;
                }
            }
            f[into][s] = big_add(f[into][s], best);
        }
        removed[v] = true;
        degree[into] -= 1;
        eliminated += 1;
        if degree[into] == 1 && into != root {
            queue.push(into);
        }
    }
    if eliminated != model.edge_count() {
        return Err(Error::InvalidStructure("graph contains a cycle".into()));
    }
    Ok(f.swap_remove(root))
}
