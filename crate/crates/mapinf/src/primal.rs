//! Primal coordinate-descent heuristics: single-node ICM and block ICM
//! over acyclic induced subgraphs.

use crate::dp;
use crate::error::{Error, Result};
use crate::model::{big_add, GraphicalModel, Labeling, PartialLabeling};

/// Ordered list of node subsets, each inducing a forest.
#[derive(Debug, Clone)]
pub struct BlockSchedule {
    pub blocks: Vec<Vec<usize>>,
}

impl BlockSchedule {
    /// Validates that every block induces an acyclic subgraph.
    pub fn new(model: &GraphicalModel, blocks: Vec<Vec<usize>>) -> Result<Self> {
        for (i, block) in blocks.iter().enumerate() {
            if !induces_forest(model, block) {
                return Err(Error::InvalidStructure(format!("block {i} induces a cycle")));
            }
        }
        Ok(BlockSchedule { blocks })
    }
}

fn induces_forest(model: &GraphicalModel, block: &[usize]) -> bool {
    let mut inside = vec![false; model.node_count()];
    for &u in block {
        if u >= model.node_count() || inside[u] {
            return false;
        }
        inside[u] = true;
    }
    let edges = model
        .edges()
        .iter()
        .filter(|&&(u, v)| inside[u] && inside[v])
        .count();
    // A forest on k nodes has fewer than k edges per component; use
    // union-find for the exact acyclicity check.
    let mut parent: Vec<usize> = (0..model.node_count()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let _ = edges;
    for &(u, v) in model.edges() {
        if inside[u] && inside[v] {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                return false;
            }
            parent[ru] = rv;
        }
    }
    true
}

/// Local energy terms touched by node `u`: its unary cost plus the
/// pairwise costs to the current labels of its neighbors.
fn local_cost(model: &GraphicalModel, y: &[usize], u: usize, s: usize) -> f64 {
    let mut acc = model.unary(u)[s];
    for (&v, &e) in model.neighbors(u).iter().zip(model.incident(u)) {
        acc = big_add(acc, model.pair_cost_from(e, u, s, y[v]));
    }
    acc
}

/// Iterated conditional modes: sweeps nodes in index order, assigning
/// each the label minimizing the energy with all other labels fixed.
/// Stops when a full sweep changes nothing or `max_sweeps` is reached.
pub fn icm(model: &GraphicalModel, y0: &[usize], max_sweeps: usize) -> Result<Labeling> {
    model.validate_labeling(y0)?;
    let mut y = y0.to_vec();
    for _ in 0..max_sweeps {
        let mut changed = false;
        for u in 0..model.node_count() {
            let mut best = y[u];
            let mut best_cost = local_cost(model, &y, u, y[u]);
            for s in 0..model.label_count(u) {
                let c = local_cost(model, &y, u, s);
                if c < best_cost {
                    best_cost = c;
                    best = s;
                }
            }
            if best != y[u] {
                y[u] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(y)
}

/// True if no single-label change decreases the energy.
pub fn is_icm_fixpoint(model: &GraphicalModel, y: &[usize]) -> bool {
    for u in 0..model.node_count() {
        let current = local_cost(model, y, u, y[u]);
        for s in 0..model.label_count(u) {
            if local_cost(model, y, u, s) < current - 1e-12 {
                return false;
            }
        }
    }
    true
}

/// Restriction of the model to the nodes outside `fixed`: unary costs
/// absorb the pairwise terms towards fixed neighbors, pairwise costs are
/// kept on the induced free-free edges, and the energy of the fixed part
/// becomes an additive constant. Returns the restricted model, the map
/// from its node indices back to original indices, and that constant.
pub fn conditional_costs(
    model: &GraphicalModel,
    fixed: &PartialLabeling,
) -> Result<(GraphicalModel, Vec<usize>, f64)> {
    let n = model.node_count();
    let mut fixed_label = vec![usize::MAX; n];
    for (&u, &s) in fixed.nodes.iter().zip(&fixed.labels) {
        if u >= n {
            return Err(Error::InvalidInput(format!("fixed node {u} out of range")));
        }
        if s >= model.label_count(u) {
            return Err(Error::InvalidInput(format!("fixed label {s} out of range at node {u}")));
        }
        fixed_label[u] = s;
    }

    let free: Vec<usize> = (0..n).filter(|&u| fixed_label[u] == usize::MAX).collect();
    let mut new_index = vec![usize::MAX; n];
    for (i, &u) in free.iter().enumerate() {
        new_index[u] = i;
    }

    let labels: Vec<usize> = free.iter().map(|&u| model.label_count(u)).collect();
    let mut unary: Vec<Vec<f64>> = free.iter().map(|&u| model.unary(u).to_vec()).collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    let mut constant = 0.0;

    for (e, &(u, v)) in model.edges().iter().enumerate() {
        match (fixed_label[u], fixed_label[v]) {
            (usize::MAX, usize::MAX) => {
                edges.push((new_index[u], new_index[v]));
                pairwise.push(model.costs().pairwise[e].clone());
            }
            (usize::MAX, t) => {
                let iu = new_index[u];
                for s in 0..model.label_count(u) {
                    unary[iu][s] = big_add(unary[iu][s], model.pair_cost(e, s, t));
                }
            }
            (s, usize::MAX) => {
                let iv = new_index[v];
                for t in 0..model.label_count(v) {
                    unary[iv][t] = big_add(unary[iv][t], model.pair_cost(e, s, t));
                }
            }
            (s, t) => constant = big_add(constant, model.pair_cost(e, s, t)),
        }
    }
    for &u in &fixed.nodes {
        constant = big_add(constant, model.unary(u)[fixed_label[u]]);
    }

    let restricted = GraphicalModel::new(labels, edges, unary, pairwise)?;
    Ok((restricted, free, constant))
}

/// Block coordinate descent: each block of the schedule is solved
/// exactly by tree dynamic programming on the conditional costs. The
/// energy never increases. Stops after a full round without change or
/// after `max_rounds` rounds.
pub fn block_icm(
    model: &GraphicalModel,
    y0: &[usize],
    schedule: &BlockSchedule,
    max_rounds: usize,
) -> Result<Labeling> {
    model.validate_labeling(y0)?;
    let mut y = y0.to_vec();
    let mut energy = model.energy(&y)?;
    for _ in 0..max_rounds {
        let mut changed = false;
        for block in &schedule.blocks {
            let mut in_block = vec![false; model.node_count()];
            for &u in block {
                in_block[u] = true;
            }
            let fixed_nodes: Vec<usize> =
                (0..model.node_count()).filter(|&u| !in_block[u]).collect();
            let fixed_labels: Vec<usize> = fixed_nodes.iter().map(|&u| y[u]).collect();
            let fixed = PartialLabeling::new(fixed_nodes, fixed_labels)?;
            let (restricted, map, constant) = conditional_costs(model, &fixed)?;
            let (block_opt, block_y) = dp::solve_tree(&restricted)?;
            let candidate = big_add(block_opt, constant);
            if candidate < energy - 1e-12 {
                for (i, &u) in map.iter().enumerate() {
                    y[u] = block_y[i];
                }
                energy = model.energy(&y)?;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(y)
}

/// The four-block schedule for a height x width grid in row-major node
/// order: even columns, odd columns, even rows, odd rows. Each block
/// induces a family of disjoint paths.
pub fn grid_blocks(height: usize, width: usize) -> Vec<Vec<usize>> {
    let node = |r: usize, c: usize| r * width + c;
    let cols = |parity: usize| -> Vec<usize> {
        (0..width)
            .filter(|c| c % 2 == parity)
            .flat_map(|c| (0..height).map(move |r| node(r, c)))
            .collect()
    };
    let rows = |parity: usize| -> Vec<usize> {
        (0..height)
            .filter(|r| r % 2 == parity)
            .flat_map(|r| (0..width).map(move |c| node(r, c)))
            .collect()
    };
    vec![cols(0), cols(1), rows(0), rows(1)]
}
