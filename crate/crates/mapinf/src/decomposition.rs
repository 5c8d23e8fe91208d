//! Lagrange decomposition over tree slaves: feasible cost splits, the
//! decomposition dual U, subgradient ascent (for U and for the plain
//! dual D), the min-marginal averaging step and subproblem agreement.

use std::time::Instant;

use crate::dp;
use crate::dual_ascent::{SolverRun, SolverTrace, TraceRow};
use crate::error::{Error, Result};
use crate::model::{GraphicalModel, Labeling, Reparametrization, BIG};

/// A slave subgraph: master node ids (sorted) and master edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlaveGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
}

impl SlaveGraph {
    /// Builds a slave from master edges, collecting the touched nodes.
    pub fn from_edges(model: &GraphicalModel, edges: Vec<usize>) -> Self {
        let mut nodes: Vec<usize> = edges
            .iter()
            .flat_map(|&e| {
                let (u, v) = model.edges()[e];
                [u, v]
            })
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        SlaveGraph { nodes, edges }
    }

    pub fn single_node(u: usize) -> Self {
        SlaveGraph { nodes: vec![u], edges: vec![] }
    }
}

/// Per-slave costs aligned with the slave's node and edge lists; the
/// pairwise matrices keep the master's canonical orientation.
#[derive(Debug, Clone)]
pub struct SlaveCosts {
    pub unary: Vec<Vec<f64>>,
    pub pairwise: Vec<Vec<f64>>,
}

/// A family of tree slaves whose costs sum to the master costs.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub slaves: Vec<SlaveGraph>,
    pub costs: Vec<SlaveCosts>,
    /// Slave ids containing each master node, ascending.
    pub node_slaves: Vec<Vec<usize>>,
    /// Slave ids containing each master edge, ascending.
    pub edge_slaves: Vec<Vec<usize>>,
}

fn membership(model: &GraphicalModel, slaves: &[SlaveGraph]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut node_slaves = vec![Vec::new(); model.node_count()];
    let mut edge_slaves = vec![Vec::new(); model.edge_count()];
    for (t, s) in slaves.iter().enumerate() {
        for &u in &s.nodes {
            node_slaves[u].push(t);
        }
        for &e in &s.edges {
            edge_slaves[e].push(t);
        }
    }
    (node_slaves, edge_slaves)
}

fn slave_is_tree(model: &GraphicalModel, slave: &SlaveGraph) -> bool {
    // Connected and acyclic: |E| = |V| - 1 plus reachability.
    if slave.nodes.is_empty() {
        return false;
    }
    if slave.edges.len() + 1 != slave.nodes.len() {
        return false;
    }
    let mut local = std::collections::HashMap::new();
    for (i, &u) in slave.nodes.iter().enumerate() {
        local.insert(u, i);
    }
    let mut adj = vec![Vec::new(); slave.nodes.len()];
    for &e in &slave.edges {
        let (u, v) = model.edges()[e];
        let (Some(&iu), Some(&iv)) = (local.get(&u), local.get(&v)) else {
            return false;
        };
        adj[iu].push(iv);
        adj[iv].push(iu);
    }
    let mut seen = vec![false; slave.nodes.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                stack.push(j);
            }
        }
    }
    count == slave.nodes.len()
}

/// Non-negative split weights per shared node/edge, aligned with the
/// membership lists and summing to one.
#[derive(Debug, Clone)]
pub struct SplitWeights {
    pub node: Vec<Vec<f64>>,
    pub edge: Vec<Vec<f64>>,
}

impl SplitWeights {
    pub fn uniform(model: &GraphicalModel, slaves: &[SlaveGraph]) -> Self {
        let (ns, es) = membership(model, slaves);
        SplitWeights {
            node: ns.iter().map(|l| vec![1.0 / l.len().max(1) as f64; l.len()]).collect(),
            edge: es.iter().map(|l| vec![1.0 / l.len().max(1) as f64; l.len()]).collect(),
        }
    }

    /// Random positive weights normalized per node/edge.
    pub fn random(
        model: &GraphicalModel,
        slaves: &[SlaveGraph],
        rng: &mut crate::harness::rng::SplitMix64,
    ) -> Self {
        let (ns, es) = membership(model, slaves);
        let draw = |l: &Vec<usize>, rng: &mut crate::harness::rng::SplitMix64| -> Vec<f64> {
            let raw: Vec<f64> = (0..l.len()).map(|_| 0.05 + rng.next_f64()).collect();
            let sum: f64 = raw.iter().sum();
            raw.iter().map(|x| x / sum).collect()
        };
        SplitWeights {
            node: ns.iter().map(|l| draw(l, rng)).collect(),
            edge: es.iter().map(|l| draw(l, rng)).collect(),
        }
    }
}

/// Splits the master costs over the slave structure with the given
/// weights: each slave's share of a node or edge is its weight times
/// the master cost, so the feasibility constraint holds by
/// construction.
pub fn split_costs(
    model: &GraphicalModel,
    slaves: Vec<SlaveGraph>,
    weights: &SplitWeights,
) -> Result<Decomposition> {
    let (node_slaves, edge_slaves) = membership(model, &slaves);
    for (u, list) in node_slaves.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidStructure(format!("node {u} belongs to no slave")));
        }
        let w = &weights.node[u];
        if w.len() != list.len() || w.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidWeights(format!("bad node weights at {u}")));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("node weights at {u} do not sum to 1")));
        }
    }
    for (e, list) in edge_slaves.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidStructure(format!("edge {e} belongs to no slave")));
        }
        let w = &weights.edge[e];
        if w.len() != list.len() || w.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidWeights(format!("bad edge weights at edge {e}")));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("edge weights at edge {e} do not sum to 1")));
        }
    }
    for (t, s) in slaves.iter().enumerate() {
        if !slave_is_tree(model, s) {
            return Err(Error::InvalidStructure(format!("slave {t} is not a connected tree")));
        }
    }
    let mut costs = Vec::with_capacity(slaves.len());
    for slave in &slaves {
        let unary = slave.nodes.iter().map(|&u| vec![0.0; model.label_count(u)]).collect();
        let pairwise = slave
            .edges
            .iter()
            .map(|&e| vec![0.0; model.costs().pairwise[e].len()])
            .collect();
        costs.push(SlaveCosts { unary, pairwise });
    }
    let mut deco = Decomposition { slaves, costs, node_slaves, edge_slaves };
    for u in 0..model.node_count() {
        for (k, &t) in deco.node_slaves[u].clone().iter().enumerate() {
            let rho = weights.node[u][k];
            let local = deco.local_node(t, u);
            for (s, x) in deco.costs[t].unary[local].iter_mut().enumerate() {
                *x = rho * model.unary(u)[s];
            }
        }
    }
    for e in 0..model.edge_count() {
        for (k, &t) in deco.edge_slaves[e].clone().iter().enumerate() {
            let rho = weights.edge[e][k];
            let local = deco.local_edge(t, e);
            for (i, x) in deco.costs[t].pairwise[local].iter_mut().enumerate() {
                *x = rho * model.costs().pairwise[e][i];
            }
        }
    }
    Ok(deco)
}

impl Decomposition {
    pub fn local_node(&self, slave: usize, u: usize) -> usize {
        self.slaves[slave].nodes.binary_search(&u).expect("node belongs to slave")
    }

    pub fn local_edge(&self, slave: usize, e: usize) -> usize {
        self.slaves[slave].edges.iter().position(|&x| x == e).expect("edge belongs to slave")
    }

    /// Verifies that slave costs sum to the master costs within `tol`.
    pub fn check_feasible(&self, model: &GraphicalModel, tol: f64) -> bool {
        for u in 0..model.node_count() {
            for s in 0..model.label_count(u) {
                let total: f64 = self.node_slaves[u]
                    .iter()
                    .map(|&t| self.costs[t].unary[self.local_node(t, u)][s])
                    .sum();
                if (total - model.unary(u)[s]).abs() > tol {
                    return false;
                }
            }
        }
        for e in 0..model.edge_count() {
            for i in 0..model.costs().pairwise[e].len() {
                let total: f64 = self.edge_slaves[e]
                    .iter()
                    .map(|&t| self.costs[t].pairwise[self.local_edge(t, e)][i])
                    .sum();
                if (total - model.costs().pairwise[e][i]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// True iff every master edge belongs to exactly one slave.
    pub fn is_canonical(&self) -> bool {
        self.edge_slaves.iter().all(|l| l.len() == 1)
    }

    /// Materializes slave `t` as a standalone model; the returned map
    /// takes local node indices back to master ids.
    pub fn slave_model(&self, model: &GraphicalModel, t: usize) -> (GraphicalModel, Vec<usize>) {
        let slave = &self.slaves[t];
        let mut local = std::collections::HashMap::new();
        for (i, &u) in slave.nodes.iter().enumerate() {
            local.insert(u, i);
        }
        let labels: Vec<usize> = slave.nodes.iter().map(|&u| model.label_count(u)).collect();
        let edges: Vec<(usize, usize)> = slave
            .edges
            .iter()
            .map(|&e| {
                let (u, v) = model.edges()[e];
                (local[&u], local[&v])
            })
            .collect();
        let m = GraphicalModel::new(
            labels,
            edges,
            self.costs[t].unary.clone(),
            self.costs[t].pairwise.clone(),
        )
        .expect("slave costs are shaped like the slave graph");
        (m, slave.nodes.clone())
    }
}

/// One slave's optimal energy and labeling (indexed by master node id
/// through the accompanying node list).
#[derive(Debug, Clone)]
pub struct SlaveSolution {
    pub energy: f64,
    /// Label per entry of the slave's node list.
    pub labeling: Labeling,
}

/// Evaluates the decomposition dual: the sum of the slave tree optima.
pub fn eval_u(model: &GraphicalModel, deco: &Decomposition) -> Result<(f64, Vec<SlaveSolution>)> {
    let mut total = 0.0;
    let mut solutions = Vec::with_capacity(deco.slaves.len());
    for t in 0..deco.slaves.len() {
        let (m, _) = deco.slave_model(model, t);
        let (e, y) = dp::solve_tree(&m)?;
        total += e;
        solutions.push(SlaveSolution { energy: e, labeling: y });
    }
    Ok((total, solutions))
}

/// One subgradient ascent step on the decomposition dual: for every
/// shared node and label, slaves disagreeing with the anchor slave
/// exchange `alpha` of cost mass with it; shared edges are treated the
/// same way with label pairs. Feasibility is preserved exactly.
pub fn subgradient_u_step(
    model: &GraphicalModel,
    deco: &mut Decomposition,
    solutions: &[SlaveSolution],
    alpha: f64,
) {
    for u in 0..model.node_count() {
        let list = &deco.node_slaves[u];
        if list.len() < 2 {
            continue;
        }
        let anchor = list[0];
        let anchor_label = solutions[anchor].labeling[deco.local_node(anchor, u)];
        for &t in &list.clone()[1..] {
            let y_t = solutions[t].labeling[deco.local_node(t, u)];
            for s in 0..model.label_count(u) {
                let g = match (y_t == s, anchor_label == s) {
                    (true, false) => 1.0,
                    (false, true) => -1.0,
                    _ => 0.0,
                };
                if g != 0.0 {
                    let lt = deco.local_node(t, u);
                    let la = deco.local_node(anchor, u);
                    deco.costs[t].unary[lt][s] += alpha * g;
                    deco.costs[anchor].unary[la][s] -= alpha * g;
                }
            }
        }
    }
    for e in 0..model.edge_count() {
        let list = deco.edge_slaves[e].clone();
        if list.len() < 2 {
            continue;
        }
        let (u, v) = model.edges()[e];
        let lv = model.label_count(v);
        let pair_of = |t: usize, deco: &Decomposition| -> usize {
            let yu = solutions[t].labeling[deco.local_node(t, u)];
            let yv = solutions[t].labeling[deco.local_node(t, v)];
            yu * lv + yv
        };
        let anchor = list[0];
        let anchor_pair = pair_of(anchor, deco);
        for &t in &list[1..] {
            let t_pair = pair_of(t, deco);
            if t_pair == anchor_pair {
                continue;
            }
            let le = deco.local_edge(t, e);
            let la = deco.local_edge(anchor, e);
            deco.costs[t].pairwise[le][t_pair] += alpha;
            deco.costs[anchor].pairwise[la][t_pair] -= alpha;
            deco.costs[t].pairwise[le][anchor_pair] -= alpha;
            deco.costs[anchor].pairwise[la][anchor_pair] += alpha;
        }
    }
}

/// Diminishing step size beta * (1 + t)^gamma with beta > 0 and
/// -1 <= gamma < 0.
pub fn subgradient_step_size(beta: f64, gamma: f64, t: usize) -> f64 {
    beta * (1.0 + t as f64).powf(gamma)
}

fn validate_step_rule(beta: f64, gamma: f64) -> Result<()> {
    if beta <= 0.0 || !(-1.0..0.0).contains(&gamma) {
        return Err(Error::InvalidInput(format!(
            "step rule needs beta > 0 and -1 <= gamma < 0, got beta={beta} gamma={gamma}"
        )));
    }
    Ok(())
}

/// Subgradient ascent on the decomposition dual U. The trace records
/// the (not necessarily monotone) dual per iteration; the best value
/// seen is what counts.
pub fn run_subgradient_decomposition(
    model: &GraphicalModel,
    mut deco: Decomposition,
    beta: f64,
    gamma: f64,
    iterations: usize,
) -> Result<(Decomposition, SolverTrace, f64)> {
    validate_step_rule(beta, gamma)?;
    let start = Instant::now();
    let mut trace = SolverTrace::default();
    let mut best = f64::NEG_INFINITY;
    for it in 1..=iterations {
        let (u_val, solutions) = eval_u(model, &deco)?;
        best = best.max(u_val);
        trace.push(TraceRow {
            iter: it,
            seconds: start.elapsed().as_secs_f64(),
            dual: u_val,
            primal_best: None,
            epsilon: None,
        });
        subgradient_u_step(model, &mut deco, &solutions, subgradient_step_size(beta, gamma, it - 1));
    }
    Ok((deco, trace, best))
}

/// A subgradient of the plain Lagrange dual D at `phi`: per directed
/// slot, -1 on the node's locally optimal label and +1 on the edge's
/// locally optimal row label (cancelling when they agree). At most two
/// entries per slot vector are non-zero.
pub fn dual_subgradient(
    model: &GraphicalModel,
    phi: &Reparametrization,
) -> Result<Reparametrization> {
    let costs = model.reparametrize(phi)?;
    let node_best: Vec<usize> = costs
        .unary
        .iter()
        .map(|c| {
            let mut best = 0;
            for (s, &x) in c.iter().enumerate().skip(1) {
                if x < c[best] {
                    best = s;
                }
            }
            best
        })
        .collect();
    let mut g = Reparametrization::zeros_like(model);
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        let lv = model.label_count(v);
        let mat = &costs.pairwise[e];
        let mut best = 0;
        for i in 1..mat.len() {
            if mat[i] < mat[best] {
                best = i;
            }
        }
        let (bs, bt) = (best / lv, best % lv);
        if bs != node_best[u] {
            g.slots[e].0[bs] += 1.0;
            g.slots[e].0[node_best[u]] -= 1.0;
        }
        if bt != node_best[v] {
            g.slots[e].1[bt] += 1.0;
            g.slots[e].1[node_best[v]] -= 1.0;
        }
    }
    Ok(g)
}

/// Subgradient ascent on the plain dual D over reparametrizations.
pub fn run_subgradient_dual(
    model: &GraphicalModel,
    beta: f64,
    gamma: f64,
    iterations: usize,
) -> Result<SolverRun> {
    validate_step_rule(beta, gamma)?;
    let start = Instant::now();
    let mut phi = Reparametrization::zeros_like(model);
    let mut best_phi = phi.clone();
    let mut best = f64::NEG_INFINITY;
    let mut trace = SolverTrace::default();
    for it in 1..=iterations {
        let d = crate::consistency::dual_value(model, &phi)?;
        if d > best {
            best = d;
            best_phi = phi.clone();
        }
        trace.push(TraceRow {
            iter: it,
            seconds: start.elapsed().as_secs_f64(),
            dual: d,
            primal_best: None,
            epsilon: None,
        });
        let g = dual_subgradient(model, &phi)?;
        let alpha = subgradient_step_size(beta, gamma, it - 1);
        for (slot, gs) in phi.slots.iter_mut().zip(&g.slots) {
            for (x, &dx) in slot.0.iter_mut().zip(&gs.0) {
                *x += alpha * dx;
            }
            for (x, &dx) in slot.1.iter_mut().zip(&gs.1) {
                *x += alpha * dx;
            }
        }
    }
    Ok(SolverRun { phi: best_phi, trace, best: None })
}

/// Min-marginals of master node `u` within slave `t`, by full leaf
/// elimination of the slave tree towards `u`. `forbidden[w][s]` masks
/// labels away with a BIG penalty.
fn slave_node_min_marginals(
    model: &GraphicalModel,
    deco: &Decomposition,
    t: usize,
    u: usize,
    forbidden: Option<&Vec<Vec<bool>>>,
) -> Result<Vec<f64>> {
    let (mut m, map) = deco.slave_model(model, t);
    if let Some(mask) = forbidden {
        let mut costs = m.costs().clone();
        for (i, &master) in map.iter().enumerate() {
            for (s, c) in costs.unary[i].iter_mut().enumerate() {
                if mask[master][s] {
                    *c = BIG;
                }
            }
        }
        m = m.with_costs(costs)?;
    }
    let local = deco.local_node(t, u);
    dp::tree_node_min_marginals(&m, m.costs(), local)
}

/// Averaging update at node `w`: every containing slave replaces its
/// share so that all slave min-marginals at `w` become equal to their
/// average. Feasibility is preserved and the decomposition dual does
/// not decrease.
pub fn averaging_step(model: &GraphicalModel, deco: &mut Decomposition, w: usize) -> Result<()> {
    let list = deco.node_slaves[w].clone();
    if list.len() < 2 {
        return Ok(());
    }
    let lcount = model.label_count(w);
    let mut marginals = Vec::with_capacity(list.len());
    for &t in &list {
        marginals.push(slave_node_min_marginals(model, deco, t, w, None)?);
    }
    let mut avg = vec![0.0; lcount];
    for m in &marginals {
        for (a, &x) in avg.iter_mut().zip(m) {
            *a += x;
        }
    }
    for a in &mut avg {
        *a /= list.len() as f64;
    }
    for (k, &t) in list.iter().enumerate() {
        let local = deco.local_node(t, w);
        for s in 0..lcount {
            deco.costs[t].unary[local][s] += avg[s] - marginals[k][s];
        }
    }
    Ok(())
}

/// Per-slave min-marginals at a node, exposed for the post-state checks.
pub fn node_min_marginals(
    model: &GraphicalModel,
    deco: &Decomposition,
    w: usize,
) -> Result<Vec<Vec<f64>>> {
    deco.node_slaves[w]
        .iter()
        .map(|&t| slave_node_min_marginals(model, deco, t, w, None))
        .collect()
}

/// Iterates the label-support intersection: each slave's optimal-label
/// supports are intersected across slaves per node, slaves re-solve
/// over the restricted label sets, and the process repeats to a
/// fixpoint. Agreement holds iff no support empties out.
pub fn subproblem_agreement(
    model: &GraphicalModel,
    deco: &Decomposition,
    tol: f64,
) -> Result<(bool, Vec<Vec<usize>>)> {
    let n = model.node_count();
    let mut forbidden: Vec<Vec<bool>> =
        (0..n).map(|u| vec![false; model.label_count(u)]).collect();
    let max_rounds = n * model.label_counts().iter().cloned().max().unwrap_or(1);
    for _ in 0..=max_rounds {
        let mut changed = false;
        for u in 0..n {
            // Support of node u: labels minimal in every containing slave.
            let mut support = vec![true; model.label_count(u)];
            for &t in &deco.node_slaves[u] {
                let mm = slave_node_min_marginals(model, deco, t, u, Some(&forbidden))?;
                let best = mm.iter().cloned().fold(f64::INFINITY, f64::min);
                if best >= BIG {
                    return Ok((false, Vec::new()));
                }
                for (s, &x) in mm.iter().enumerate() {
                    if x > best + tol {
                        support[s] = false;
                    }
                }
            }
            if support.iter().all(|&b| !b) {
                return Ok((false, Vec::new()));
            }
            for s in 0..model.label_count(u) {
                if !support[s] && !forbidden[u][s] {
                    forbidden[u][s] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let supports = (0..n)
        .map(|u| (0..model.label_count(u)).filter(|&s| !forbidden[u][s]).collect())
        .collect();
    Ok((true, supports))
}

/// Sequential realization of the averaging sweep over a monotonic chain
/// decomposition: forward and backward min-marginal messages are cached
/// and only the forward ones are refreshed during a pass, which makes
/// one sweep coincide with one message-passing iteration of the SRMP
/// solver. Backward messages start as the raw pencil minima of the
/// slave edges, the state a zero reparametrization corresponds to.
#[derive(Debug, Clone)]
pub struct MonotonicSweepState {
    /// Pass order; reversed after every sweep.
    order: Vec<usize>,
    /// `forward[t][i]` / `backward[t][i]`: messages into the i-th node
    /// of slave `t` from its two chain sides w.r.t. the current order.
    forward: Vec<Vec<Vec<f64>>>,
    backward: Vec<Vec<Vec<f64>>>,
}

impl MonotonicSweepState {
    pub fn new(model: &GraphicalModel, deco: &Decomposition, order: &[usize]) -> Result<Self> {
        let mut pos = vec![usize::MAX; model.node_count()];
        for (i, &u) in order.iter().enumerate() {
            pos[u] = i;
        }
        let mut forward = Vec::with_capacity(deco.slaves.len());
        let mut backward = Vec::with_capacity(deco.slaves.len());
        for (t, slave) in deco.slaves.iter().enumerate() {
            // Chain nodes sorted by pass position; consecutive ones must
            // be adjacent for the monotonic-chain property.
            let mut chain = slave.nodes.clone();
            chain.sort_by_key(|&u| pos[u]);
            for w in chain.windows(2) {
                if model.edge_index(w[0], w[1]).is_none() {
                    return Err(Error::InvalidStructure(format!(
                        "slave {t} is not a monotonic chain for this order"
                    )));
                }
            }
            let f: Vec<Vec<f64>> =
                slave.nodes.iter().map(|&u| vec![0.0; model.label_count(u)]).collect();
            let mut b = f.clone();
            // Raw pencil minima towards the successor.
            for w in chain.windows(2) {
                let (u, v) = (w[0], w[1]);
                let e = model.edge_index(u, v).unwrap();
                let le = deco.local_edge(t, e);
                let lu = deco.local_node(t, u);
                let cols = model.label_count(model.edges()[e].1);
                for s in 0..model.label_count(u) {
                    let m = if model.edges()[e].0 == u {
                        (0..model.label_count(v))
                            .map(|l| deco.costs[t].pairwise[le][s * cols + l])
                            .fold(f64::INFINITY, f64::min)
                    } else {
                        (0..model.label_count(v))
                            .map(|l| deco.costs[t].pairwise[le][l * cols + s])
                            .fold(f64::INFINITY, f64::min)
                    };
                    b[lu][s] = m;
                }
            }
            forward.push(f);
            backward.push(b);
        }
        Ok(MonotonicSweepState { order: order.to_vec(), forward, backward })
    }

    /// One full pass: per node, refresh the forward messages of every
    /// chain through it, then average the slave node costs so that the
    /// message-based min-marginal estimates agree. Reverses the order
    /// and swaps message directions at the end.
    pub fn sweep(&mut self, model: &GraphicalModel, deco: &mut Decomposition) -> Result<()> {
        let mut pos = vec![usize::MAX; model.node_count()];
        for (i, &u) in self.order.iter().enumerate() {
            pos[u] = i;
        }
        for idx in 0..self.order.len() {
            let u = self.order[idx];
            let list = deco.node_slaves[u].clone();
            for &t in &list {
                // Predecessor of u in chain t w.r.t. the pass order.
                let prev = deco.slaves[t]
                    .nodes
                    .iter()
                    .filter(|&&v| v != u && pos[v] < pos[u] && model.edge_index(u, v).is_some())
                    .filter(|&&v| {
                        deco.slaves[t].edges.contains(&model.edge_index(u, v).unwrap())
                    })
                    .max_by_key(|&&v| pos[v])
                    .cloned();
                let Some(v) = prev else { continue };
                let e = model.edge_index(u, v).unwrap();
                let le = deco.local_edge(t, e);
                let (lu, lv) = (deco.local_node(t, u), deco.local_node(t, v));
                let cols = model.label_count(model.edges()[e].1);
                for s in 0..model.label_count(u) {
                    let mut best = f64::INFINITY;
                    for l in 0..model.label_count(v) {
                        let pair = if model.edges()[e].0 == u {
                            deco.costs[t].pairwise[le][s * cols + l]
                        } else {
                            deco.costs[t].pairwise[le][l * cols + s]
                        };
                        let cand = self.forward[t][lv][l] + deco.costs[t].unary[lv][l] + pair;
                        if cand < best {
                            best = cand;
                        }
                    }
                    self.forward[t][lu][s] = best;
                }
            }
            // Average the message-based min-marginals across chains.
            let lcount = model.label_count(u);
            let mut avg = vec![0.0; lcount];
            for &t in &list {
                let lu = deco.local_node(t, u);
                for s in 0..lcount {
                    avg[s] += self.forward[t][lu][s]
                        + self.backward[t][lu][s]
                        + deco.costs[t].unary[lu][s];
                }
            }
            for a in &mut avg {
                *a /= list.len() as f64;
            }
            for &t in &list {
                let lu = deco.local_node(t, u);
                for s in 0..lcount {
                    deco.costs[t].unary[lu][s] =
                        avg[s] - self.forward[t][lu][s] - self.backward[t][lu][s];
                }
            }
        }
        self.order.reverse();
        std::mem::swap(&mut self.forward, &mut self.backward);
        Ok(())
    }

    /// Decomposition dual from the cached forward messages: the sums of
    /// the per-chain optima under the pre-reversal order.
    pub fn dual_from_messages(&self, model: &GraphicalModel, deco: &Decomposition) -> f64 {
        // After sweep() the order was reversed and messages swapped; the
        // chain optima read off the (now backward) messages at each
        // chain's final node w.r.t. the completed pass.
        let mut pos = vec![usize::MAX; model.node_count()];
        for (i, &u) in self.order.iter().enumerate() {
            pos[u] = i;
        }
        let mut total = 0.0;
        for (t, slave) in deco.slaves.iter().enumerate() {
            // Final node of the completed pass = smallest position in the
            // reversed order.
            let &last = slave.nodes.iter().min_by_key(|&&u| pos[u]).unwrap();
            let lu = deco.local_node(t, last);
            let mut best = f64::INFINITY;
            for s in 0..model.label_count(last) {
                let v = self.backward[t][lu][s] + deco.costs[t].unary[lu][s];
                if v < best {
                    best = v;
                }
            }
            total += best;
        }
        total
    }
}

/// Greedy decomposition into maximal monotonic chains with respect to
/// `order`: repeatedly extend a chain from the smallest-position node
/// that still has unused edges, always moving to a later neighbor.
pub fn maximal_monotonic_chains(model: &GraphicalModel, order: &[usize]) -> Vec<Vec<usize>> {
    let n = model.node_count();
    let mut pos = vec![0usize; n];
    for (i, &u) in order.iter().enumerate() {
        pos[u] = i;
    }
    let mut used = vec![false; model.edge_count()];
    let mut chains: Vec<Vec<usize>> = Vec::new();
    loop {
        // Smallest-position node with an unused incident edge.
        let mut start = None;
        for &u in order {
            if model.incident(u).iter().any(|&e| !used[e]) {
                start = Some(u);
                break;
            }
        }
        let Some(mut u) = start else { break };
        let mut chain = vec![u];
        loop {
            let mut next = None;
            for (&v, &e) in model.neighbors(u).iter().zip(model.incident(u)) {
                if !used[e] && pos[v] > pos[u] {
                    // Deterministic choice: earliest-position extension.
                    if next.is_none_or(|(pv, _, _)| pos[v] < pv) {
                        next = Some((pos[v], v, e));
                    }
                }
            }
            let Some((_, v, e)) = next else { break };
            used[e] = true;
            chain.push(v);
            u = v;
        }
        chains.push(chain);
    }
    // Isolated nodes become single-node slaves.
    let mut covered = vec![false; n];
    for c in &chains {
        for &u in c {
            covered[u] = true;
        }
    }
    for u in 0..n {
        if !covered[u] {
            chains.push(vec![u]);
        }
    }
    chains
}

/// Slave graphs for a list of node chains (consecutive nodes adjacent).
pub fn chains_to_slaves(model: &GraphicalModel, chains: &[Vec<usize>]) -> Result<Vec<SlaveGraph>> {
    chains
        .iter()
        .map(|chain| {
            if chain.len() == 1 {
                return Ok(SlaveGraph::single_node(chain[0]));
            }
            let mut edges = Vec::new();
            for w in chain.windows(2) {
                let e = model.edge_index(w[0], w[1]).ok_or_else(|| {
                    Error::InvalidStructure(format!("chain nodes {} and {} not adjacent", w[0], w[1]))
                })?;
                edges.push(e);
            }
            Ok(SlaveGraph::from_edges(model, edges))
        })
        .collect()
}

/// Complete decomposition: one slave per node and one per edge.
pub fn complete_slaves(model: &GraphicalModel) -> Vec<SlaveGraph> {
    let mut slaves: Vec<SlaveGraph> =
        (0..model.node_count()).map(SlaveGraph::single_node).collect();
    for e in 0..model.edge_count() {
        slaves.push(SlaveGraph::from_edges(model, vec![e]));
    }
    slaves
}

/// Edge decomposition: one slave per edge (no node slaves); valid when
/// no node is isolated.
pub fn edge_slaves(model: &GraphicalModel) -> Vec<SlaveGraph> {
    (0..model.edge_count()).map(|e| SlaveGraph::from_edges(model, vec![e])).collect()
}

/// Row/column chains of a grid in row-major node order.
pub fn row_column_chains(height: usize, width: usize) -> Vec<Vec<usize>> {
    let node = |r: usize, c: usize| r * width + c;
    let mut chains = Vec::new();
    for r in 0..height {
        chains.push((0..width).map(|c| node(r, c)).collect());
    }
    for c in 0..width {
        chains.push((0..height).map(|r| node(r, c)).collect());
    }
    chains
}

/// Splits a reparametrized cost vector across the slaves: node slaves
/// of the complete decomposition receive the full reparametrized unary
/// and edge slaves the full reparametrized pairwise cost, making the
/// decomposition dual coincide with the plain dual exactly.
pub fn complete_decomposition_of_phi(
    model: &GraphicalModel,
    phi: &Reparametrization,
) -> Result<Decomposition> {
    let costs = model.reparametrize(phi)?;
    let reparametrized = model.with_costs(costs)?;
    let slaves = complete_slaves(&reparametrized);
    let (node_slaves, edge_slaves) = membership(&reparametrized, &slaves);
    // Node slave of u gets all of theta^phi_u; edge slaves carry zero
    // unary shares.
    let weights = SplitWeights {
        node: node_slaves
            .iter()
            .map(|l| {
                let mut w = vec![0.0; l.len()];
                w[0] = 1.0; // node slaves are listed first
                w
            })
            .collect(),
        edge: edge_slaves.iter().map(|l| vec![1.0; l.len()]).collect(),
    };
    split_costs(&reparametrized, slaves, &weights)
}
