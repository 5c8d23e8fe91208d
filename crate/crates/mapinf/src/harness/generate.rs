//! Instance generators: random families, the Hamiltonian-cycle
//! reduction, and the small named counterexample models used as golden
//! tests throughout the suite.

use crate::error::{Error, Result};
use crate::harness::rng::SplitMix64;
use crate::model::{GraphicalModel, RelaxedLabeling, BIG};

/// Uniform random unary costs in [0, 1).
fn random_unary(labels: &[usize], rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    labels.iter().map(|&l| (0..l).map(|_| rng.next_f64()).collect()).collect()
}

fn random_matrix(lu: usize, lv: usize, rng: &mut SplitMix64) -> Vec<f64> {
    (0..lu * lv).map(|_| rng.next_f64()).collect()
}

/// Random model on `n` nodes with label counts drawn from 1..=max_labels
/// and each possible edge present with probability `edge_p`.
pub fn random_model(
    n: usize,
    max_labels: usize,
    edge_p: f64,
    rng: &mut SplitMix64,
) -> GraphicalModel {
    let labels: Vec<usize> = (0..n).map(|_| 1 + rng.next_below(max_labels)).collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.next_f64() < edge_p {
                edges.push((u, v));
                pairwise.push(random_matrix(labels[u], labels[v], rng));
            }
        }
    }
    let unary = random_unary(&labels, rng);
    GraphicalModel::new(labels, edges, unary, pairwise).expect("generated model is valid")
}

/// Random chain on 1..=max_nodes nodes together with a random node
/// order realizing it.
pub fn random_chain(
    rng: &mut SplitMix64,
    max_nodes: usize,
    max_labels: usize,
) -> (GraphicalModel, Vec<usize>) {
    let n = 1 + rng.next_below(max_nodes);
    random_chain_sized(rng, n, max_labels)
}

/// Random chain on exactly `n` nodes.
pub fn random_chain_sized(
    rng: &mut SplitMix64,
    n: usize,
    max_labels: usize,
) -> (GraphicalModel, Vec<usize>) {
    // Random permutation as the chain order.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.next_below(i + 1);
        order.swap(i, j);
    }
    let labels: Vec<usize> = (0..n).map(|_| 1 + rng.next_below(max_labels)).collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        edges.push((a, b));
        // random_matrix is generated in the (a, b) orientation; the model
        // constructor transposes when a > b.
        pairwise.push(random_matrix(labels[a], labels[b], rng));
    }
    let unary = random_unary(&labels, rng);
    (GraphicalModel::new(labels, edges, unary, pairwise).unwrap(), order)
}

/// Random tree on 1..=max_nodes nodes built by attaching each node to
/// a random earlier one.
pub fn random_tree(rng: &mut SplitMix64, max_nodes: usize, max_labels: usize) -> GraphicalModel {
    let n = 1 + rng.next_below(max_nodes);
    random_tree_sized(rng, n, max_labels)
}

/// Random tree on exactly `n` nodes.
pub fn random_tree_sized(rng: &mut SplitMix64, n: usize, max_labels: usize) -> GraphicalModel {
    let labels: Vec<usize> = (0..n).map(|_| 1 + rng.next_below(max_labels)).collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for v in 1..n {
        let u = rng.next_below(v);
        edges.push((u, v));
        pairwise.push(random_matrix(labels[u], labels[v], rng));
    }
    let unary = random_unary(&labels, rng);
    GraphicalModel::new(labels, edges, unary, pairwise).unwrap()
}

/// Star with `leaves` leaves around node 0, random costs, equal label
/// count everywhere.
pub fn random_star(rng: &mut SplitMix64, leaves: usize, labels: usize) -> GraphicalModel {
    let n = leaves + 1;
    let label_counts = vec![labels; n];
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for v in 1..n {
        edges.push((0, v));
        pairwise.push(random_matrix(labels, labels, rng));
    }
    let unary = random_unary(&label_counts, rng);
    GraphicalModel::new(label_counts, edges, unary, pairwise).unwrap()
}

fn grid_edges(height: usize, width: usize) -> Vec<(usize, usize)> {
    let node = |r: usize, c: usize| r * width + c;
    let mut edges = Vec::new();
    for r in 0..height {
        for c in 0..width {
            if c + 1 < width {
                edges.push((node(r, c), node(r, c + 1)));
            }
            if r + 1 < height {
                edges.push((node(r, c), node(r + 1, c)));
            }
        }
    }
    edges
}

/// Grid with uniform random unary and pairwise costs.
pub fn grid_random(height: usize, width: usize, labels: usize, rng: &mut SplitMix64) -> GraphicalModel {
    let n = height * width;
    let label_counts = vec![labels; n];
    let edges = grid_edges(height, width);
    let pairwise = edges.iter().map(|_| random_matrix(labels, labels, rng)).collect();
    let unary = random_unary(&label_counts, rng);
    GraphicalModel::new(label_counts, edges, unary, pairwise).unwrap()
}

/// Grid Potts model: random unaries, per-edge coupling strength drawn
/// from (0, max_lambda] charged on disagreeing labels.
pub fn grid_potts(
    height: usize,
    width: usize,
    labels: usize,
    max_lambda: f64,
    rng: &mut SplitMix64,
) -> GraphicalModel {
    let n = height * width;
    let label_counts = vec![labels; n];
    let edges = grid_edges(height, width);
    let mut pairwise = Vec::new();
    for _ in &edges {
        let lambda = max_lambda * (1.0 - rng.next_f64());
        let mut mat = vec![lambda; labels * labels];
        for s in 0..labels {
            mat[s * labels + s] = 0.0;
        }
        pairwise.push(mat);
    }
    let unary = random_unary(&label_counts, rng);
    GraphicalModel::new(label_counts, edges, unary, pairwise).unwrap()
}

/// Random binary model whose pairwise factors are all submodular.
pub fn random_submodular_binary(rng: &mut SplitMix64, max_nodes: usize, edge_p: f64) -> GraphicalModel {
    let n = 2 + rng.next_below(max_nodes.saturating_sub(1));
    let labels = vec![2usize; n];
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.next_f64() < edge_p {
                // Draw entries, then raise the anti-diagonal until
                // theta(0,1) + theta(1,0) >= theta(0,0) + theta(1,1).
                let mut mat: Vec<f64> = (0..4).map(|_| rng.next_f64() * 2.0 - 0.5).collect();
                let gap = (mat[0] + mat[3]) - (mat[1] + mat[2]);
                if gap > 0.0 {
                    mat[1] += gap / 2.0 + rng.next_f64() * 0.5;
                    mat[2] += gap / 2.0 + rng.next_f64() * 0.5;
                }
                edges.push((u, v));
                pairwise.push(mat);
            }
        }
    }
    let unary: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0]).collect();
    GraphicalModel::new(labels, edges, unary, pairwise).unwrap()
}

/// Random multi-label model with submodular |s - t| pairwise costs
/// scaled per edge, on a random connected graph.
pub fn random_submodular_multilabel(
    rng: &mut SplitMix64,
    max_nodes: usize,
    max_labels: usize,
) -> GraphicalModel {
    let n = 2 + rng.next_below(max_nodes.saturating_sub(1));
    let labels: Vec<usize> = (0..n).map(|_| 2 + rng.next_below(max_labels.saturating_sub(1))).collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    let add_edge = |u: usize, v: usize, edges: &mut Vec<(usize, usize)>, pairwise: &mut Vec<Vec<f64>>, rng: &mut SplitMix64| {
        let scale = 0.2 + rng.next_f64();
        let (lu, lv) = (labels[u], labels[v]);
        let mut mat = vec![0.0; lu * lv];
        for s in 0..lu {
            for t in 0..lv {
                mat[s * lv + t] = scale * (s as f64 - t as f64).abs();
            }
        }
        edges.push((u, v));
        pairwise.push(mat);
    };
    for v in 1..n {
        let u = rng.next_below(v);
        add_edge(u, v, &mut edges, &mut pairwise, rng);
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.next_f64() < 0.2 {
                add_edge(u, v, &mut edges, &mut pairwise, rng);
            }
        }
    }
    let unary = random_unary(&labels, rng);
    GraphicalModel::new(labels, edges, unary, pairwise).unwrap()
}

/// Named input graphs for the Hamiltonian-cycle reduction.
pub fn named_graph(name: &str) -> Result<(usize, Vec<(usize, usize)>)> {
    let parse = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad graph size in '{name}'")))
    };
    if let Some(k) = name.strip_prefix("k") {
        let k = parse(k)?;
        let mut e = Vec::new();
        for u in 0..k {
            for v in u + 1..k {
                e.push((u, v));
            }
        }
        return Ok((k, e));
    }
    if let Some(k) = name.strip_prefix("cycle:") {
        let k = parse(k)?;
        let mut e: Vec<(usize, usize)> = (0..k - 1).map(|u| (u, u + 1)).collect();
        e.push((0, k - 1));
        return Ok((k, e));
    }
    if let Some(k) = name.strip_prefix("star:") {
        let leaves = parse(k)?;
        return Ok((leaves + 1, (1..=leaves).map(|v| (0, v)).collect()));
    }
    if let Some(k) = name.strip_prefix("path:") {
        let k = parse(k)?;
        return Ok((k, (0..k - 1).map(|u| (u, u + 1)).collect()));
    }
    Err(Error::InvalidInput(format!("unknown graph '{name}'")))
}

/// Hamiltonian-cycle reduction over the input graph: a fully connected
/// model whose i-th node picks the i-th vertex of the would-be cycle.
/// Successor costs charge non-adjacent consecutive picks and uniqueness
/// costs charge repeated picks. Violations cost 1 rather than infinity,
/// so the optimum is 0 exactly when a Hamiltonian cycle exists.
pub fn hamiltonian(vertex_count: usize, input_edges: &[(usize, usize)]) -> Result<GraphicalModel> {
    let n = vertex_count;
    if n < 3 {
        return Err(Error::InvalidInput("the cycle reduction needs at least 3 vertices".into()));
    }
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in input_edges {
        if a >= n || b >= n || a == b {
            return Err(Error::InvalidInput(format!("bad input edge ({a}, {b})")));
        }
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let labels = vec![n; n];
    let unary = vec![vec![0.0; n]; n];
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let successor = v == u + 1 || (u == 0 && v == n - 1);
            let mut mat = vec![0.0; n * n];
            for s in 0..n {
                for t in 0..n {
                    let bad = if successor { !adj[s][t] } else { s == t };
                    if bad {
                        mat[s * n + t] = 1.0;
                    }
                }
            }
            edges.push((u, v));
            pairwise.push(mat);
        }
    }
    GraphicalModel::new(labels, edges, unary, pairwise)
}

/// Two binary nodes, zero unaries, pairwise costs 0 / 1 / 2: the
/// standard single-edge ICM trap.
pub fn example_8_1() -> GraphicalModel {
    GraphicalModel::new(
        vec![2, 2],
        vec![(0, 1)],
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![vec![0.0, 2.0, 2.0, 1.0]],
    )
    .unwrap()
}

/// Frustrated binary triangle: zero unaries, two edges reward equal
/// labels and one rewards unequal labels, each violation costing
/// `alpha`. The relaxation is tight at 0 while every labeling costs at
/// least `alpha`.
pub fn example_4_3(alpha: f64) -> GraphicalModel {
    let eq = |a: f64| vec![0.0, a, a, 0.0];
    let ne = |a: f64| vec![a, 0.0, 0.0, a];
    GraphicalModel::new(
        vec![2, 2, 2],
        vec![(0, 1), (0, 2), (1, 2)],
        vec![vec![0.0; 2]; 3],
        vec![eq(alpha), eq(alpha), ne(alpha)],
    )
    .unwrap()
}

/// The half-integral relaxed optimum shared by the frustrated triangle
/// and its three-label extension: every listed coordinate is one half.
pub fn example_4_3_relaxed(model: &GraphicalModel) -> RelaxedLabeling {
    let node_part: Vec<Vec<f64>> = (0..model.node_count())
        .map(|u| {
            let mut v = vec![0.0; model.label_count(u)];
            v[0] = 0.5;
            v[1] = 0.5;
            v
        })
        .collect();
    let mut edge_part = Vec::new();
    for &(u, v) in model.edges() {
        let lv = model.label_count(v);
        let mut mat = vec![0.0; model.label_count(u) * lv];
        if (u, v) == (1, 2) {
            mat[1] = 0.5;
            mat[lv] = 0.5;
        } else {
            mat[0] = 0.5;
            mat[lv + 1] = 0.5;
        }
        edge_part.push(mat);
    }
    RelaxedLabeling { node_part, edge_part }
}

/// Extension of the frustrated triangle where node 2 gains a third
/// label of unary cost zero reachable at cost `beta` from label 1.
/// With alpha > 2 beta the optimum (1, 1, 2) costs 2 beta while the
/// rounded relaxed solution costs alpha.
pub fn example_4_5(alpha: f64, beta: f64) -> GraphicalModel {
    GraphicalModel::new(
        vec![2, 2, 3],
        vec![(0, 1), (0, 2), (1, 2)],
        vec![vec![0.0; 2], vec![0.0; 2], vec![0.0; 3]],
        vec![
            vec![0.0, alpha, alpha, 0.0],
            vec![0.0, alpha, alpha, alpha, 0.0, beta],
            vec![alpha, 0.0, alpha, 0.0, alpha, beta],
        ],
    )
    .unwrap()
}

/// Chain with `n` edges and two allowed labelings: the upper one pays
/// -1 per edge, the lower one pays -n on the first edge; mixed label
/// pairs are forbidden by BIG costs. Diffusion approaches the common
/// optimum -n only in the limit.
pub fn example_8_7(n: usize) -> GraphicalModel {
    let nodes = n + 1;
    let labels = vec![2; nodes];
    let unary = vec![vec![0.0, 0.0]; nodes];
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for i in 0..n {
        let lower = if i == 0 { -(n as f64) } else { 0.0 };
        edges.push((i, i + 1));
        pairwise.push(vec![-1.0, BIG, BIG, lower]);
    }
    GraphicalModel::new(labels, edges, unary, pairwise).unwrap()
}

/// Three-node chain with three labels where the swap moves are stuck at
/// energy K while expansion escapes to the optimum of energy 4.
pub fn example_11_34(k: f64) -> GraphicalModel {
    let unary = vec![
        vec![0.0, k, 2.0],
        vec![k, 0.0, 2.0],
        vec![k, k, 0.0],
    ];
    let theta = vec![
        0.0,
        k / 2.0,
        k, // a row
        k / 2.0,
        0.0,
        k / 2.0, // b row
        k,
        k / 2.0,
        0.0, // c row
    ];
    GraphicalModel::new(
        vec![3, 3, 3],
        vec![(0, 1), (1, 2)],
        unary,
        vec![theta.clone(), theta],
    )
    .unwrap()
}

/// Three-node chain where tree agreement of the natural two-slave split
/// holds but the master model has no node-edge agreement: each edge's
/// cheapest pair is not part of any slave optimum.
pub fn example_9_13() -> GraphicalModel {
    let edge = vec![1.0, 9.0, 9.0, 0.0];
    GraphicalModel::new(
        vec![2, 2, 2],
        vec![(0, 1), (1, 2)],
        vec![vec![0.0, 3.0], vec![0.0, 0.0], vec![0.0, 3.0]],
        vec![edge.clone(), edge],
    )
    .unwrap()
}
