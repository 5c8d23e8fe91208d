//! Max-flow/min-cut solver and the energy-to-cut translation layer:
//! submodularity tests, binary and multi-label reductions, move-making
//! (expansion, swap, fusion) and QPBO with persistency.

use crate::error::{Error, Result};
use crate::harness::oracle::advance;
use crate::model::{big_add, is_big, GraphicalModel, Labeling, RelaxedLabeling, BIG};
use crate::primal::conditional_costs;
use crate::model::PartialLabeling;

/// Directed flow network over internal node ids plus distinguished
/// source and target. Arcs into the source and out of the target never
/// belong to a cut and are dropped on insertion; parallel arcs merge.
#[derive(Debug, Clone)]
pub struct STGraph {
    node_count: usize,
    /// (from, to, capacity) with the encoding 0 = source, 1 = target,
    /// 2 + i = internal node i.
    arcs: Vec<(usize, usize, f64)>,
    arc_index: std::collections::HashMap<(usize, usize), usize>,
    /// Constant accumulated while translating energies into cuts.
    pub constant_offset: f64,
}

pub const SOURCE: usize = usize::MAX;
pub const TARGET: usize = usize::MAX - 1;

impl STGraph {
    pub fn new(node_count: usize) -> Self {
        STGraph {
            node_count,
            arcs: Vec::new(),
            arc_index: std::collections::HashMap::new(),
            constant_offset: 0.0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    fn encode(&self, v: usize) -> usize {
        match v {
            SOURCE => 0,
            TARGET => 1,
            other => {
                assert!(other < self.node_count, "node id out of range");
                other + 2
            }
        }
    }

    /// Adds capacity on the arc (from, to). Negative capacity is an
    /// error; arcs that cannot lie in any cut are ignored.
    pub fn add_arc(&mut self, from: usize, to: usize, cap: f64) -> Result<()> {
        if cap < 0.0 {
            return Err(Error::InvalidInput(format!("negative capacity {cap}")));
        }
        if cap == 0.0 || to == SOURCE || from == TARGET {
            return Ok(());
        }
        let key = (self.encode(from), self.encode(to));
        if key.0 == key.1 {
            return Ok(());
        }
        match self.arc_index.get(&key) {
            Some(&i) => self.arcs[i].2 = big_add(self.arcs[i].2, cap).min(BIG),
            None => {
                self.arc_index.insert(key, self.arcs.len());
                self.arcs.push((key.0, key.1, cap.min(BIG)));
            }
        }
        Ok(())
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.arcs.iter().map(|&(f, t, c)| {
            let dec = |x: usize| match x {
                0 => SOURCE,
                1 => TARGET,
                other => other - 2,
            };
            (dec(f), dec(t), c)
        })
    }

    /// Total weight of the source-to-target arcs crossing a partition.
    pub fn cut_weight(&self, side: &[bool]) -> f64 {
        let side_of = |x: usize| match x {
            0 => false,
            1 => true,
            other => side[other - 2],
        };
        let mut acc = 0.0;
        for &(f, t, c) in &self.arcs {
            if !side_of(f) && side_of(t) {
                acc = big_add(acc, c);
            }
        }
        acc
    }

    /// DIMACS max-flow text form: source and target are the first two
    /// 1-based ids.
    pub fn to_dimacs(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("p max {} {}\n", self.node_count + 2, self.arcs.len()));
        out.push_str("n 1 s\n");
        out.push_str("n 2 t\n");
        for &(f, t, c) in &self.arcs {
            out.push_str(&format!("a {} {} {}\n", f + 1, t + 1, c));
        }
        out
    }
}

/// Minimum cut value and a witnessing partition: `side[i]` is true when
/// internal node `i` lies on the target side.
#[derive(Debug, Clone)]
pub struct CutResult {
    pub value: f64,
    pub side: Vec<bool>,
}

struct FlowEdge {
    to: usize,
    cap: f64,
    rev: usize,
}

/// Shortest-augmenting-path max-flow (level graph with blocking flows).
pub fn max_flow(graph: &STGraph) -> Result<CutResult> {
    let n = graph.node_count + 2;
    let mut adj: Vec<Vec<FlowEdge>> = (0..n).map(|_| Vec::new()).collect();
    for &(f, t, c) in &graph.arcs {
        if c < 0.0 {
            return Err(Error::InvalidInput("negative capacity".into()));
        }
        let rf = adj[t].len();
        let rt = adj[f].len();
        adj[f].push(FlowEdge { to: t, cap: c, rev: rf });
        adj[t].push(FlowEdge { to: f, cap: 0.0, rev: rt });
    }
    let (s, t) = (0usize, 1usize);
    let mut level = vec![-1i32; n];
    let mut it = vec![0usize; n];
    const EPS: f64 = 1e-11;

    loop {
        // BFS level graph over positive residual arcs.
        level.iter_mut().for_each(|l| *l = -1);
        level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for e in &adj[u] {
                if e.cap > EPS && level[e.to] < 0 {
                    level[e.to] = level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        if level[t] < 0 {
            break;
        }
        it.iter_mut().for_each(|x| *x = 0);
        blocking_flow(&mut adj, &level, &mut it, s, t, EPS);
    }

    // Source side = nodes reachable in the residual graph.
    let mut reach = vec![false; n];
    reach[s] = true;
    let mut stack = vec![s];
    while let Some(u) = stack.pop() {
        for e in &adj[u] {
            if e.cap > EPS && !reach[e.to] {
                reach[e.to] = true;
                stack.push(e.to);
            }
        }
    }
    let side: Vec<bool> = (0..graph.node_count).map(|i| !reach[i + 2]).collect();
    // Report the exact cut weight of the witnessing partition rather
    // than the accumulated flow, so tiny floating drift cannot leak in.
    let value = graph.cut_weight(&side);
    Ok(CutResult { value, side })
}

/// Saturates the current level graph with an iterative path search, so
/// deep graphs cannot overflow the call stack.
fn blocking_flow(
    adj: &mut [Vec<FlowEdge>],
    level: &[i32],
    it: &mut [usize],
    s: usize,
    t: usize,
    eps: f64,
) {
    // Path of (node, edge index into adj[node]) from the source.
    let mut path: Vec<(usize, usize)> = Vec::new();
    let mut u = s;
    loop {
        if u == t {
            let mut bottleneck = f64::INFINITY;
            for &(x, ei) in &path {
                bottleneck = bottleneck.min(adj[x][ei].cap);
            }
            for &(x, ei) in &path {
                let (to, rev) = (adj[x][ei].to, adj[x][ei].rev);
                adj[x][ei].cap -= bottleneck;
                adj[to][rev].cap += bottleneck;
            }
            // Back off to the tail of the first saturated edge.
            let cut_at = path
                .iter()
                .position(|&(x, ei)| adj[x][ei].cap <= eps)
                .unwrap_or(path.len().saturating_sub(1));
            path.truncate(cut_at + 1);
            let (x, _) = path.pop().expect("augmenting path is non-empty");
            u = x;
            continue;
        }
        let mut advanced = false;
        while it[u] < adj[u].len() {
            let (to, cap) = (adj[u][it[u]].to, adj[u][it[u]].cap);
            if cap > eps && level[to] == level[u] + 1 {
                path.push((u, it[u]));
                u = to;
                advanced = true;
                break;
            }
            it[u] += 1;
        }
        if !advanced {
            // Dead end: retreat, skipping the edge that led here.
            match path.pop() {
                Some((x, ei)) => {
                    debug_assert_eq!(adj[x][ei].to, u);
                    it[x] += 1;
                    u = x;
                }
                None => break,
            }
        }
    }
}

/// Submodularity of a pairwise cost matrix over ordered labels: every
/// adjacent mixed second difference is non-positive.
pub fn is_submodular(matrix: &[f64], rows: usize, cols: usize) -> bool {
    debug_assert_eq!(matrix.len(), rows * cols);
    for s in 0..rows.saturating_sub(1) {
        for t in 0..cols.saturating_sub(1) {
            let second = matrix[s * cols + t] + matrix[(s + 1) * cols + t + 1]
                - matrix[(s + 1) * cols + t]
                - matrix[s * cols + t + 1];
            if second > 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Result of pushing a binary pairwise factor into diagonal form: only
/// the (0, 1) entry stays on the edge, the rest moves into the unaries
/// and a constant. Every labeling keeps its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalForm {
    /// Remaining pairwise weight at (0, 1); negative iff the factor is
    /// not submodular.
    pub gamma: f64,
    /// Additions to the unary costs of the two endpoints.
    pub unary_u: [f64; 2],
    pub unary_v: [f64; 2],
    /// Constant collected from the (0, 0) entry.
    pub constant: f64,
}

/// Diagonal-form reparametrization of a 2x2 factor:
/// theta = constant + a * [y_u = 1] + b * [y_v = 1] + gamma * [(0, 1)].
pub fn to_diagonal_form(theta: &[f64; 4]) -> DiagonalForm {
    let (t00, t01, t10, t11) = (theta[0], theta[1], theta[2], theta[3]);
    DiagonalForm {
        gamma: t01 + t10 - t00 - t11,
        unary_u: [0.0, t10 - t00],
        unary_v: [0.0, t11 - t10],
        constant: t00,
    }
}

/// Translates a binary submodular model into a flow network with
/// non-negative capacities: after per-edge diagonalization and
/// per-node shifts, label-1 costs become source arcs, label-0 costs
/// target arcs and diagonal weights internal arcs. The minimum cut plus
/// the accumulated constant equals the minimum energy; source-side
/// nodes take label 0.
pub fn binary_to_cut(model: &GraphicalModel) -> Result<STGraph> {
    if model.label_counts().iter().any(|&l| l != 2) {
        return Err(Error::InvalidInput("cut reduction needs a binary model".into()));
    }
    let n = model.node_count();
    let mut unary: Vec<[f64; 2]> = (0..n).map(|u| [model.unary(u)[0], model.unary(u)[1]]).collect();
    let mut graph = STGraph::new(n);
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        let theta = [
            model.pair_cost(e, 0, 0),
            model.pair_cost(e, 0, 1),
            model.pair_cost(e, 1, 0),
            model.pair_cost(e, 1, 1),
        ];
        if theta.iter().any(|&x| is_big(x)) {
            // Keep forbidden entries as explicit BIG arcs instead of
            // mixing the sentinel into finite arithmetic.
            let Some((p, q, a, b, konst)) = split_with_big(&theta) else {
                return Err(Error::SubmodularityViolation { edge: (u, v) });
            };
            unary[u][1] += a;
            unary[v][1] += b;
            graph.constant_offset += konst;
            graph.add_arc(u, v, p.max(0.0))?;
            graph.add_arc(v, u, q.max(0.0))?;
            continue;
        }
        let d = to_diagonal_form(&theta);
        if d.gamma < -1e-9 {
            return Err(Error::SubmodularityViolation { edge: (u, v) });
        }
        unary[u][1] += d.unary_u[1];
        unary[v][1] += d.unary_v[1];
        graph.constant_offset += d.constant;
        graph.add_arc(u, v, d.gamma.max(0.0))?;
    }
    for u in 0..n {
        let m = unary[u][0].min(unary[u][1]);
        let m = if is_big(m) { 0.0 } else { m };
        graph.constant_offset += m;
        // theta_u(1) becomes a source arc, theta_u(0) a target arc.
        graph.add_arc(SOURCE, u, (unary[u][1] - m).min(BIG))?;
        graph.add_arc(u, TARGET, (unary[u][0] - m).min(BIG))?;
    }
    Ok(graph)
}

/// Decomposition of a 2x2 factor with BIG off-diagonal entries into
/// both oriented monomials:
/// theta = konst + a*[y_u=1] + b*[y_v=1] + p*[(0,1)] + q*[(1,0)].
/// BIG entries become BIG coefficients without mixing into finite
/// arithmetic; the free parameter b keeps finite p and q non-negative,
/// which is possible exactly for submodular factors. Returns None when
/// a diagonal entry is BIG or the factor is not submodular.
fn split_with_big(theta: &[f64; 4]) -> Option<(f64, f64, f64, f64, f64)> {
    if is_big(theta[0]) || is_big(theta[3]) {
        return None;
    }
    let konst = theta[0];
    let p0 = if is_big(theta[1]) { None } else { Some(theta[1] - konst) };
    let q0 = if is_big(theta[2]) { None } else { Some(theta[2] - theta[3]) };
    // p(b) = p0 - b and q(b) = q0 + b: pick b inside [-q0, p0].
    let b = match (p0, q0) {
        (Some(p0), Some(q0)) => {
            if p0 + q0 < -1e-9 {
                return None;
            }
            if q0 < 0.0 {
                -q0
            } else if p0 < 0.0 {
                p0
            } else {
                0.0
            }
        }
        (Some(p0), None) => p0.min(0.0),
        (None, Some(q0)) => (-q0).max(0.0),
        (None, None) => 0.0,
    };
    let p = p0.map_or(BIG, |x| (x - b).max(0.0));
    let q = q0.map_or(BIG, |x| (x + b).max(0.0));
    let a = theta[3] - konst - b;
    Some((p, q, a, b, konst))
}

/// Extracts the labeling of a cut of a `binary_to_cut` graph.
pub fn cut_to_labeling(cut: &CutResult) -> Labeling {
    cut.side.iter().map(|&b| usize::from(b)).collect()
}

/// Mapping between a multi-label model and its binary reduction.
#[derive(Debug, Clone)]
pub struct LabelMapping {
    /// Original label counts.
    pub labels: Vec<usize>,
    /// Binary node id of (u, l) for l in 0..labels[u]-1; the top label
    /// has no node of its own.
    pub first_binary: Vec<usize>,
}

impl LabelMapping {
    /// Binary image of a multi-label labeling: node (u, l) carries
    /// 1 iff l >= y_u.
    pub fn to_binary(&self, y: &[usize]) -> Labeling {
        let mut out = Vec::new();
        for (u, &lab) in self.labels.iter().enumerate() {
            for l in 0..lab - 1 {
                out.push(usize::from(l >= y[u]));
            }
        }
        out
    }

    /// Multi-label pre-image: the first level set to 1, or the top
    /// label when all levels are 0.
    pub fn from_binary(&self, hat: &[usize]) -> Labeling {
        let mut out = Vec::with_capacity(self.labels.len());
        for (u, &lab) in self.labels.iter().enumerate() {
            let base = self.first_binary[u];
            let mut y = lab - 1;
            for l in 0..lab - 1 {
                if hat[base + l] == 1 {
                    y = l;
                    break;
                }
            }
            out.push(y);
        }
        out
    }
}

/// Reduces a multi-label model to a binary one over level variables:
/// node (u, l) decides whether y_u <= l. In-node ladder factors forbid
/// non-monotone level vectors and carry the unary costs; cross factors
/// carry the mixed second differences of the pairwise costs, so the
/// energies of corresponding labelings coincide. Submodular input
/// yields a submodular binary model.
pub fn multilabel_to_binary(model: &GraphicalModel) -> Result<(GraphicalModel, LabelMapping)> {
    if model.label_counts().iter().any(|&l| l < 2) {
        return Err(Error::InvalidInput(
            "reduction expects at least two labels per node; fold fixed nodes first".into(),
        ));
    }
    let n = model.node_count();
    let labels = model.label_counts().to_vec();
    let mut first_binary = vec![0usize; n];
    let mut count = 0usize;
    for u in 0..n {
        first_binary[u] = count;
        count += labels[u] - 1;
    }
    let mapping = LabelMapping { labels: labels.clone(), first_binary: first_binary.clone() };

    let clamp = |x: f64| x.clamp(-BIG, BIG);
    let mut unary = vec![vec![0.0f64; 2]; count];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut pairwise: Vec<Vec<f64>> = Vec::new();

    for u in 0..n {
        let lu = labels[u];
        let base = first_binary[u];
        // Level 0 set means y_u = 0 and pays theta_u(0); the top label
        // pays on level lu-2 staying clear. Labels in between ride on
        // the (0, 1) entries of the ladder.
        unary[base][1] += model.unary(u)[0];
        unary[base + lu - 2][0] += model.unary(u)[lu - 1];
        for l in 0..lu.saturating_sub(2) {
            edges.push((base + l, base + l + 1));
            pairwise.push(vec![0.0, model.unary(u)[l + 1], BIG, 0.0]);
        }
    }

    // Cross factors: alpha(s, t) summed over the upper-right quadrant
    // reproduces theta(s, t). Terms with a top-label index fold into
    // unaries (top nodes are eliminated), the doubly-top term into the
    // energy as part of the level-0/ladder bookkeeping handled via the
    // constant-free identity: alpha(top, top) goes to a plain constant,
    // which must stay zero for the energies to match exactly, so it is
    // charged on the (0-ary) pair of last levels via their unaries.
    let mut constant = 0.0f64;
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        let (lu, lv) = (labels[u], labels[v]);
        let alpha = |s: usize, t: usize| -> f64 {
            let th = |a: usize, b: usize| model.pair_cost(e, a, b);
            let val = if s + 1 < lu && t + 1 < lv {
                th(s, t) + th(s + 1, t + 1) - th(s, t + 1) - th(s + 1, t)
            } else if s + 1 < lu {
                th(s, lv - 1) - th(s + 1, lv - 1)
            } else if t + 1 < lv {
                th(lu - 1, t) - th(lu - 1, t + 1)
            } else {
                th(lu - 1, lv - 1)
            };
            clamp(val)
        };
        for s in 0..lu - 1 {
            for t in 0..lv - 1 {
                let a = alpha(s, t);
                if a != 0.0 {
                    edges.push((first_binary[u] + s, first_binary[v] + t));
                    pairwise.push(vec![0.0, 0.0, 0.0, a]);
                }
            }
        }
        // Top-node elimination: pairs (s, top) add to the level node of
        // u when it carries 1, and symmetrically; (top, top) is constant.
        for s in 0..lu - 1 {
            unary[first_binary[u] + s][1] += alpha(s, lv - 1);
        }
        for t in 0..lv - 1 {
            unary[first_binary[v] + t][1] += alpha(lu - 1, t);
        }
        constant += alpha(lu - 1, lv - 1);
    }
    // Spread the constant onto any one node so the reduced energies
    // match the originals exactly.
    if count > 0 {
        unary[0][0] += constant;
        unary[0][1] += constant;
    }

    // Merge duplicate edges (several cross factors may hit node pairs
    // that already carry a ladder or another cross factor).
    let mut merged: std::collections::BTreeMap<(usize, usize), Vec<f64>> =
        std::collections::BTreeMap::new();
    for (key, mat) in edges.into_iter().zip(pairwise) {
        let (key, mat) = if key.0 < key.1 {
            (key, mat)
        } else {
            ((key.1, key.0), vec![mat[0], mat[2], mat[1], mat[3]])
        };
        match merged.get_mut(&key) {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(mat) {
                    *a = big_add(*a, b).min(BIG);
                }
            }
            None => {
                merged.insert(key, mat);
            }
        }
    }
    let (edges, pairwise): (Vec<_>, Vec<_>) = merged.into_iter().unzip();

    let binary = GraphicalModel::new(vec![2; count], edges, unary, pairwise)?;
    Ok((binary, mapping))
}

/// Classification of a square pairwise cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricClass {
    Metric,
    Semimetric,
    Neither,
}

/// Checks the semimetric axioms (non-negativity, zero diagonal exactly
/// on the diagonal, symmetry) and the triangle inequality.
pub fn metric_check(matrix: &[f64], labels: usize) -> MetricClass {
    let tol = 1e-9;
    let at = |s: usize, t: usize| matrix[s * labels + t];
    for s in 0..labels {
        for t in 0..labels {
            let v = at(s, t);
            if v < -tol {
                return MetricClass::Neither;
            }
            if s == t && v.abs() > tol {
                return MetricClass::Neither;
            }
            if s != t && v.abs() <= tol {
                return MetricClass::Neither;
            }
            if (v - at(t, s)).abs() > tol {
                return MetricClass::Neither;
            }
        }
    }
    for s in 0..labels {
        for t in 0..labels {
            for r in 0..labels {
                if at(s, t) + at(t, r) < at(s, r) - tol {
                    return MetricClass::Semimetric;
                }
            }
        }
    }
    MetricClass::Metric
}

fn uniform_label_count(model: &GraphicalModel) -> Result<usize> {
    let l = model.label_count(0);
    if model.label_counts().iter().any(|&x| x != l) {
        return Err(Error::InvalidInput("move making needs a uniform label set".into()));
    }
    Ok(l)
}

/// Solves a binary submodular model exactly by min-cut.
fn solve_binary_by_cut(model: &GraphicalModel) -> Result<(f64, Labeling)> {
    let graph = binary_to_cut(model)?;
    let cut = max_flow(&graph)?;
    let y = cut_to_labeling(&cut);
    Ok((big_add(cut.value, graph.constant_offset), y))
}

/// Builds the binary move model whose label 0 means "switch to
/// `proposal[u]`" and label 1 means "keep `current[u]`", restricted to
/// the nodes where the two differ (others are folded as fixed).
fn build_move_model(
    model: &GraphicalModel,
    current: &[usize],
    proposal: &[usize],
) -> Result<Option<(GraphicalModel, Vec<usize>)>> {
    let free: Vec<usize> =
        (0..model.node_count()).filter(|&u| current[u] != proposal[u]).collect();
    if free.is_empty() {
        return Ok(None);
    }
    let mut is_free = vec![false; model.node_count()];
    for &u in &free {
        is_free[u] = true;
    }
    let fixed_nodes: Vec<usize> = (0..model.node_count()).filter(|&u| !is_free[u]).collect();
    let fixed_labels: Vec<usize> = fixed_nodes.iter().map(|&u| current[u]).collect();
    let fixed = PartialLabeling::new(fixed_nodes, fixed_labels)?;
    let (restricted, map, _constant) = conditional_costs(model, &fixed)?;

    let labels = vec![2usize; restricted.node_count()];
    let unary: Vec<Vec<f64>> = (0..restricted.node_count())
        .map(|i| {
            let u = map[i];
            vec![restricted.unary(i)[proposal[u]], restricted.unary(i)[current[u]]]
        })
        .collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for (e, &(i, j)) in restricted.edges().iter().enumerate() {
        let (u, v) = (map[i], map[j]);
        edges.push((i, j));
        pairwise.push(vec![
            restricted.pair_cost(e, proposal[u], proposal[v]),
            restricted.pair_cost(e, proposal[u], current[v]),
            restricted.pair_cost(e, current[u], proposal[v]),
            restricted.pair_cost(e, current[u], current[v]),
        ]);
    }
    Ok(Some((GraphicalModel::new(labels, edges, unary, pairwise)?, map)))
}

/// How expansion handles a non-submodular move subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveMode {
    /// Solve it with the QPBO-based fusion move (keeps monotonicity).
    Fusion,
    /// Report a submodularity violation instead.
    Strict,
}

/// Expansion moves: cycles the expanded label over the common label
/// set, solving one binary subproblem per move exactly by min-cut when
/// it is submodular (always for metric costs) and by a fusion move
/// otherwise. Energy never increases; stops when a full label cycle
/// changes nothing.
pub fn alpha_expansion(
    model: &GraphicalModel,
    y0: &[usize],
    max_rounds: usize,
    mode: MoveMode,
) -> Result<(Labeling, crate::dual_ascent::SolverTrace)> {
    model.validate_labeling(y0)?;
    let labels = uniform_label_count(model)?;
    let start = std::time::Instant::now();
    let mut y = y0.to_vec();
    let mut energy = model.energy(&y)?;
    let mut trace = crate::dual_ascent::SolverTrace::default();
    let mut step = 0usize;
    for _ in 0..max_rounds {
        let mut changed = false;
        for alpha in 0..labels {
            let proposal = vec![alpha; model.node_count()];
            let Some((move_model, map)) = build_move_model(model, &y, &proposal)? else {
                continue;
            };
            let submodular = (0..move_model.edge_count()).all(|e| {
                is_submodular(&move_model.costs().pairwise[e], 2, 2)
            });
            let candidate = if submodular {
                let (_, my) = solve_binary_by_cut(&move_model)?;
                let mut cand = y.clone();
                for (i, &u) in map.iter().enumerate() {
                    if my[i] == 0 {
                        cand[u] = alpha;
                    }
                }
                cand
            } else {
                match mode {
                    MoveMode::Strict => {
                        let bad = (0..move_model.edge_count())
                            .find(|&e| !is_submodular(&move_model.costs().pairwise[e], 2, 2))
                            .unwrap();
                        let (i, j) = move_model.edges()[bad];
                        return Err(Error::SubmodularityViolation { edge: (map[i], map[j]) });
                    }
                    MoveMode::Fusion => fusion_move(model, &y, &proposal)?,
                }
            };
            let ce = model.energy(&candidate)?;
            if ce < energy - 1e-12 {
                y = candidate;
                energy = ce;
                changed = true;
            }
            step += 1;
            trace.push(crate::dual_ascent::TraceRow {
                iter: step,
                seconds: start.elapsed().as_secs_f64(),
                dual: f64::NEG_INFINITY,
                primal_best: Some(energy),
                epsilon: None,
            });
        }
        if !changed {
            break;
        }
    }
    Ok((y, trace))
}

/// Swap moves over unordered label pairs; each subproblem is submodular
/// for semimetric costs and solved exactly by min-cut.
pub fn alpha_beta_swap(
    model: &GraphicalModel,
    y0: &[usize],
    max_rounds: usize,
) -> Result<(Labeling, crate::dual_ascent::SolverTrace)> {
    model.validate_labeling(y0)?;
    let labels = uniform_label_count(model)?;
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        if metric_check(&model.costs().pairwise[e], labels) == MetricClass::Neither {
            return Err(Error::InvalidInput(format!(
                "pairwise factor ({u}, {v}) is not a semimetric"
            )));
        }
    }
    let start = std::time::Instant::now();
    let mut y = y0.to_vec();
    let mut energy = model.energy(&y)?;
    let mut trace = crate::dual_ascent::SolverTrace::default();
    let mut step = 0usize;
    for _ in 0..max_rounds {
        let mut changed = false;
        for alpha in 0..labels {
            for beta in alpha + 1..labels {
                if let Some((move_model, map)) = build_swap_model(model, &y, alpha, beta)? {
                    let (_, my) = solve_binary_by_cut(&move_model)?;
                    let mut cand = y.clone();
                    for (i, &u) in map.iter().enumerate() {
                        cand[u] = if my[i] == 0 { alpha } else { beta };
                    }
                    let ce = model.energy(&cand)?;
                    if ce < energy - 1e-12 {
                        y = cand;
                        energy = ce;
                        changed = true;
                    }
                }
                step += 1;
                trace.push(crate::dual_ascent::TraceRow {
                    iter: step,
                    seconds: start.elapsed().as_secs_f64(),
                    dual: f64::NEG_INFINITY,
                    primal_best: Some(energy),
                    epsilon: None,
                });
            }
        }
        if !changed {
            break;
        }
    }
    Ok((y, trace))
}

/// Binary swap subproblem over the nodes currently labeled alpha or
/// beta: binary label 0 stands for alpha and 1 for beta. Submodular for
/// semimetric costs since the mixed pairs carry the only positive mass.
fn build_swap_model(
    model: &GraphicalModel,
    y: &[usize],
    alpha: usize,
    beta: usize,
) -> Result<Option<(GraphicalModel, Vec<usize>)>> {
    let free: Vec<usize> =
        (0..model.node_count()).filter(|&u| y[u] == alpha || y[u] == beta).collect();
    if free.is_empty() {
        return Ok(None);
    }
    let mut is_free = vec![false; model.node_count()];
    for &u in &free {
        is_free[u] = true;
    }
    let fixed_nodes: Vec<usize> = (0..model.node_count()).filter(|&u| !is_free[u]).collect();
    let fixed_labels: Vec<usize> = fixed_nodes.iter().map(|&u| y[u]).collect();
    let fixed = PartialLabeling::new(fixed_nodes, fixed_labels)?;
    let (restricted, map, _constant) = conditional_costs(model, &fixed)?;
    let labels = vec![2usize; restricted.node_count()];
    let unary: Vec<Vec<f64>> = (0..restricted.node_count())
        .map(|i| vec![restricted.unary(i)[alpha], restricted.unary(i)[beta]])
        .collect();
    let mut edges = Vec::new();
    let mut pairwise = Vec::new();
    for &(i, j) in restricted.edges() {
        let e = restricted.edge_index(i, j).unwrap();
        edges.push((i, j));
        pairwise.push(vec![
            restricted.pair_cost(e, alpha, alpha),
            restricted.pair_cost(e, alpha, beta),
            restricted.pair_cost(e, beta, alpha),
            restricted.pair_cost(e, beta, beta),
        ]);
    }
    Ok(Some((GraphicalModel::new(labels, edges, unary, pairwise)?, map)))
}

/// QPBO output: a half-integral relaxed optimum, the set of integral
/// nodes (persistent by the binary partial-optimality property) and the
/// relaxation value, a lower bound on every labeling's energy.
#[derive(Debug, Clone)]
pub struct QpboResult {
    pub mu: RelaxedLabeling,
    pub persistent: Vec<usize>,
    pub lower_bound: f64,
    /// The recovered doubled solution as labels (y side).
    pub relaxed_labels: Vec<Option<usize>>,
}

/// Solves the local-polytope relaxation of a binary model by the
/// doubled min-cut construction: each node gets a direct and a negated
/// copy, submodular terms join copies of the same orientation,
/// supermodular terms cross over. Ties (copies agreeing instead of
/// mirroring) are resolved towards the source side, which never
/// increases the objective, and become half-integral coordinates.
pub fn qpbo(model: &GraphicalModel) -> Result<QpboResult> {
    if model.label_counts().iter().any(|&l| l != 2) {
        return Err(Error::InvalidInput("qpbo needs a binary model".into()));
    }
    let n = model.node_count();
    // Normal form: unary coefficients c_u(0), c_u(1) >= 0 plus one
    // non-negative coefficient per edge, diagonal (0,1) for submodular
    // and parallel (1,1) for supermodular factors.
    let mut constant = 0.0f64;
    let mut c0 = vec![0.0f64; n];
    let mut c1 = vec![0.0f64; n];
    for u in 0..n {
        c0[u] = model.unary(u)[0];
        c1[u] = model.unary(u)[1];
    }
    enum EdgeTerm {
        /// Weights on the (0, 1) and (1, 0) configurations.
        Diagonal(f64, f64),
        /// Weight on the (1, 1) configuration.
        Parallel(f64),
    }
    let mut terms = Vec::with_capacity(model.edge_count());
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        let theta = [
            model.pair_cost(e, 0, 0),
            model.pair_cost(e, 0, 1),
            model.pair_cost(e, 1, 0),
            model.pair_cost(e, 1, 1),
        ];
        if theta.iter().any(|&x| is_big(x)) {
            // Forbidden entries stay as explicit BIG weights; possible
            // whenever the diagonal is finite (else the factor is
            // supermodular beyond what arcs can express).
            let Some((p, q, a, b, konst)) = split_with_big(&theta) else {
                return Err(Error::InvalidInput(format!(
                    "qpbo cannot represent the BIG pattern of factor ({u}, {v})"
                )));
            };
            c1[u] += a;
            c1[v] += b;
            constant += konst;
            terms.push(EdgeTerm::Diagonal(p, q));
            continue;
        }
        let gamma = theta[1] + theta[2] - theta[0] - theta[3];
        if gamma >= 0.0 {
            let d = to_diagonal_form(&theta);
            c1[u] += d.unary_u[1];
            c1[v] += d.unary_v[1];
            constant += d.constant;
            terms.push(EdgeTerm::Diagonal(d.gamma, 0.0));
        } else {
            // Parallel form: zero everywhere except (1, 1) = -gamma.
            // theta(s,t) = theta(0,0) + a*[s=1] + b*[t=1] + (-gamma)*[s=t=1]
            // with a = theta(1,0) - theta(0,0), b = theta(0,1) - theta(0,0).
            constant += theta[0];
            c1[u] += theta[2] - theta[0];
            c1[v] += theta[1] - theta[0];
            terms.push(EdgeTerm::Parallel(-gamma));
        }
    }
    for u in 0..n {
        let m = c0[u].min(c1[u]);
        constant += m;
        c0[u] -= m;
        c1[u] -= m;
    }

    // Doubled graph: internal ids 0..n are the direct copies, n..2n the
    // negated ones.
    let mut graph = STGraph::new(2 * n);
    for u in 0..n {
        // c1 * y_u -> s->y_u and z_u->t, half each.
        graph.add_arc(SOURCE, u, c1[u] / 2.0)?;
        graph.add_arc(n + u, TARGET, c1[u] / 2.0)?;
        // c0 * (1 - y_u) -> y_u->t and s->z_u.
        graph.add_arc(u, TARGET, c0[u] / 2.0)?;
        graph.add_arc(SOURCE, n + u, c0[u] / 2.0)?;
    }
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        match terms[e] {
            EdgeTerm::Diagonal(p, q) => {
                graph.add_arc(u, v, p / 2.0)?;
                graph.add_arc(n + v, n + u, p / 2.0)?;
                graph.add_arc(v, u, q / 2.0)?;
                graph.add_arc(n + u, n + v, q / 2.0)?;
            }
            EdgeTerm::Parallel(c) => {
                graph.add_arc(n + v, u, c / 2.0)?;
                graph.add_arc(n + u, v, c / 2.0)?;
            }
        }
    }

    let cut = max_flow(&graph)?;
    let mut y: Vec<usize> = (0..n).map(|u| usize::from(cut.side[u])).collect();
    let mut z: Vec<usize> = (0..n).map(|u| usize::from(cut.side[n + u])).collect();
    // Tie case: copies agreeing carry no information; setting both to
    // the source side never increases the objective.
    for u in 0..n {
        if y[u] == z[u] {
            y[u] = 0;
            z[u] = 0;
        }
    }

    let mut node_part: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut relaxed_labels = Vec::with_capacity(n);
    for u in 0..n {
        if y[u] != z[u] {
            // Consistent copies: integral assignment y_u.
            let mut p = vec![0.0, 0.0];
            p[y[u]] = 1.0;
            node_part.push(p);
            relaxed_labels.push(Some(y[u]));
        } else {
            node_part.push(vec![0.5, 0.5]);
            relaxed_labels.push(None);
        }
    }
    let mut edge_part = Vec::with_capacity(model.edge_count());
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        edge_part.push(best_half_integral_completion(
            &node_part[u],
            &node_part[v],
            &model.costs().pairwise[e],
        ));
    }
    let mu = RelaxedLabeling { node_part, edge_part };
    let lower_bound = big_add(cut.value, constant);
    let persistent = (0..n).filter(|&u| relaxed_labels[u].is_some()).collect();
    Ok(QpboResult { mu, persistent, lower_bound, relaxed_labels })
}

/// Cheapest half-integral edge matrix coupling to the given two node
/// vectors; ties resolve to the lexicographically smallest matrix.
fn best_half_integral_completion(mu_u: &[f64], mu_v: &[f64], theta: &[f64]) -> Vec<f64> {
    let candidates: Vec<Vec<f64>> = match (mu_u[0] == 0.5, mu_v[0] == 0.5) {
        (false, false) => {
            let (s, t) = (usize::from(mu_u[1] == 1.0), usize::from(mu_v[1] == 1.0));
            let mut m = vec![0.0; 4];
            m[s * 2 + t] = 1.0;
            vec![m]
        }
        (false, true) => {
            let s = usize::from(mu_u[1] == 1.0);
            let mut m = vec![0.0; 4];
            m[s * 2] = 0.5;
            m[s * 2 + 1] = 0.5;
            vec![m]
        }
        (true, false) => {
            let t = usize::from(mu_v[1] == 1.0);
            let mut m = vec![0.0; 4];
            m[t] = 0.5;
            m[2 + t] = 0.5;
            vec![m]
        }
        (true, true) => vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.5, 0.0, 0.0, 0.5],
        ],
    };
    let score = |m: &Vec<f64>| -> f64 {
        m.iter().zip(theta).map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * b }).sum()
    };
    let mut best = candidates[0].clone();
    let mut best_score = score(&best);
    for cand in candidates.into_iter().skip(1) {
        let s = score(&cand);
        if s < best_score - 1e-12 {
            best_score = s;
            best = cand;
        } else if (s - best_score).abs() <= 1e-12 && lex_less(&cand, &best) {
            best = cand;
        }
    }
    best
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Fuses a proposal into the current labeling: the two-labels-per-node
/// restriction is solved by QPBO and proposal labels are adopted
/// exactly where the relaxed solution integrally prefers them. The
/// energy never increases.
pub fn fusion_move(
    model: &GraphicalModel,
    current: &[usize],
    proposal: &[usize],
) -> Result<Labeling> {
    model.validate_labeling(current)?;
    model.validate_labeling(proposal)?;
    let Some((move_model, map)) = build_move_model(model, current, proposal)? else {
        return Ok(current.to_vec());
    };
    let q = qpbo(&move_model)?;
    let mut y = current.to_vec();
    for (i, &u) in map.iter().enumerate() {
        if q.relaxed_labels[i] == Some(0) {
            y[u] = proposal[u];
        }
    }
    debug_assert!(model.energy(&y)? <= model.energy(current)? + 1e-9);
    Ok(y)
}

/// Brute-force check that a binary-to-cut graph prices every partition
/// like the energy of its labeling (used by the oracle tests).
pub fn cut_energy_correspondence(model: &GraphicalModel, graph: &STGraph) -> Result<f64> {
    let n = model.node_count();
    let mut worst = 0.0f64;
    let mut y = vec![0usize; n];
    loop {
        let side: Vec<bool> = y.iter().map(|&s| s == 1).collect();
        let cut = big_add(graph.cut_weight(&side), graph.constant_offset);
        let energy = model.energy(&y)?;
        let diff = if is_big(cut) && is_big(energy) { 0.0 } else { (cut - energy).abs() };
        worst = worst.max(diff);
        if !advance(&mut y, model.label_counts()) {
            break;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generate::{
        example_11_34, example_8_1, random_submodular_binary, random_submodular_multilabel,
    };
    use crate::harness::oracle::brute_force;
    use crate::harness::rng::SplitMix64;

    #[test]
    fn max_flow_single_arc() {
        let mut g = STGraph::new(0);
        g.add_arc(SOURCE, TARGET, 5.0).unwrap();
        let cut = max_flow(&g).unwrap();
        assert_eq!(cut.value, 5.0);
    }

    #[test]
    fn max_flow_two_paths() {
        let mut g = STGraph::new(2);
        g.add_arc(SOURCE, 0, 3.0).unwrap();
        g.add_arc(0, TARGET, 4.0).unwrap();
        g.add_arc(SOURCE, 1, 2.0).unwrap();
        g.add_arc(1, TARGET, 7.0).unwrap();
        let cut = max_flow(&g).unwrap();
        assert_eq!(cut.value, 5.0);
    }

    #[test]
    fn max_flow_matches_partition_enumeration() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..40 {
            let n = 2 + rng.next_below(6);
            let mut g = STGraph::new(n);
            for u in 0..n {
                if rng.next_f64() < 0.8 {
                    g.add_arc(SOURCE, u, rng.next_f64() * 4.0).unwrap();
                }
                if rng.next_f64() < 0.8 {
                    g.add_arc(u, TARGET, rng.next_f64() * 4.0).unwrap();
                }
                for v in 0..n {
                    if v != u && rng.next_f64() < 0.4 {
                        g.add_arc(u, v, rng.next_f64() * 3.0).unwrap();
                    }
                }
            }
            let cut = max_flow(&g).unwrap();
            // Enumerate all 2^n partitions.
            let mut best = f64::INFINITY;
            for mask in 0..(1u32 << n) {
                let side: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                best = best.min(g.cut_weight(&side));
            }
            assert!((cut.value - best).abs() <= 1e-9 * (1.0 + best.abs()));
            assert!((g.cut_weight(&cut.side) - cut.value).abs() <= 1e-9);
        }
    }

    #[test]
    fn submodularity_checks() {
        // |s - t| on four labels.
        let mut dist = vec![0.0; 16];
        for s in 0..4 {
            for t in 0..4 {
                dist[s * 4 + t] = (s as f64 - t as f64).abs();
            }
        }
        assert!(is_submodular(&dist, 4, 4));
        // Potts on three labels is not submodular.
        let mut potts = vec![1.0; 9];
        for s in 0..3 {
            potts[s * 3 + s] = 0.0;
        }
        assert!(!is_submodular(&potts, 3, 3));
        // A single row has no adjacent pairs.
        assert!(is_submodular(&[5.0, -1.0, 3.0], 1, 3));
    }

    #[test]
    fn diagonal_form_identity_cases() {
        let d = to_diagonal_form(&[0.0, 2.0, 0.0, 0.0]);
        assert_eq!(d, DiagonalForm { gamma: 2.0, unary_u: [0.0, 0.0], unary_v: [0.0, 0.0], constant: 0.0 });
        // Ising lambda[s != t] has diagonal value 2 lambda.
        let lam = 0.7;
        let d = to_diagonal_form(&[0.0, lam, lam, 0.0]);
        assert!((d.gamma - 2.0 * lam).abs() <= 1e-12);
    }

    #[test]
    fn diagonal_form_preserves_energies() {
        let mut rng = SplitMix64::new(2);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..4).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
            let theta = [theta[0], theta[1], theta[2], theta[3]];
            let d = to_diagonal_form(&theta);
            for s in 0..2 {
                for t in 0..2 {
                    let rebuilt = d.constant
                        + d.unary_u[s]
                        + d.unary_v[t]
                        + if (s, t) == (0, 1) { d.gamma } else { 0.0 };
                    assert!((rebuilt - theta[s * 2 + t]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn binary_cut_solves_example_8_1() {
        let m = example_8_1();
        let (e, y) = solve_binary_by_cut(&m).unwrap();
        assert!((e - 0.0).abs() <= 1e-9);
        assert_eq!(y, vec![0, 0]);
    }

    #[test]
    fn zero_cost_model_cuts_to_zero() {
        let m = GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1)],
            vec![vec![0.0; 2]; 2],
            vec![vec![0.0; 4]],
        )
        .unwrap();
        let (e, _) = solve_binary_by_cut(&m).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn binary_cut_matches_brute_force_and_prices_every_partition() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..50 {
            let m = random_submodular_binary(&mut rng, 8, 0.6);
            let graph = binary_to_cut(&m).unwrap();
            let worst = cut_energy_correspondence(&m, &graph).unwrap();
            assert!(worst <= 1e-9, "cut prices diverge by {worst}");
            let (e, y) = solve_binary_by_cut(&m).unwrap();
            let (opt, _, _) = brute_force(&m, 1e7, false).unwrap();
            assert!((e - opt).abs() <= 1e-9 * (1.0 + opt.abs()));
            assert!((m.energy(&y).unwrap() - opt).abs() <= 1e-9 * (1.0 + opt.abs()));
        }
    }

    #[test]
    fn larger_cut_agrees_with_converged_srmp() {
        // Beyond oracle size: the relaxation is tight for submodular
        // models, so a converged message-passing dual must meet the cut.
        let mut rng = SplitMix64::new(12);
        for _ in 0..3 {
            let m = random_submodular_binary(&mut rng, 40, 0.15);
            let (value, y) = solve_binary_by_cut(&m).unwrap();
            assert!((m.energy(&y).unwrap() - value).abs() <= 1e-9 * (1.0 + value.abs()));
            let order: Vec<usize> = (0..m.node_count()).collect();
            let counts = crate::dual_ascent::chain_counts(&m, &order).unwrap();
            let opts = crate::dual_ascent::SolverOptions {
                max_iterations: 3000,
                tolerance: 1e-10,
                track_epsilon: false,
                round_primal: false,
            };
            let run = crate::dual_ascent::run_srmp(&m, &counts, &order, &opts).unwrap();
            let d = run.trace.last_dual().unwrap();
            assert!(
                (d - value).abs() <= 1e-6 * (1.0 + value.abs()),
                "srmp {d} vs cut {value}"
            );
        }
    }

    #[test]
    fn non_submodular_edge_is_named() {
        let m = GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1)],
            vec![vec![0.0; 2]; 2],
            vec![vec![1.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        assert!(matches!(
            binary_to_cut(&m),
            Err(Error::SubmodularityViolation { edge: (0, 1) })
        ));
    }

    #[test]
    fn multilabel_reduction_preserves_energies() {
        // Two nodes, three labels, |s - t| costs: all nine energies.
        let mut pair = vec![0.0; 9];
        for s in 0..3 {
            for t in 0..3 {
                pair[s * 3 + t] = (s as f64 - t as f64).abs();
            }
        }
        let m = GraphicalModel::new(
            vec![3, 3],
            vec![(0, 1)],
            vec![vec![0.3, 0.1, 0.5], vec![0.2, 0.9, 0.4]],
            vec![pair],
        )
        .unwrap();
        let (bin, map) = multilabel_to_binary(&m).unwrap();
        let mut y = vec![0usize; 2];
        loop {
            let hat = map.to_binary(&y);
            let e = m.energy(&y).unwrap();
            let eb = bin.energy(&hat).unwrap();
            assert!((e - eb).abs() <= 1e-9, "labeling {y:?}: {e} vs {eb}");
            assert_eq!(map.from_binary(&hat), y);
            if !advance(&mut y, m.label_counts()) {
                break;
            }
        }
        // Non-monotone level vectors are forbidden.
        let mut bad = map.to_binary(&[0, 0]);
        bad[0] = 1;
        bad[1] = 0;
        assert!(bin.energy(&bad).unwrap() >= BIG);
    }

    #[test]
    fn multilabel_reduction_binary_input() {
        let m = example_8_1();
        let (bin, map) = multilabel_to_binary(&m).unwrap();
        assert_eq!(bin.node_count(), 2);
        let mut y = vec![0usize; 2];
        loop {
            let e = m.energy(&y).unwrap();
            let eb = bin.energy(&map.to_binary(&y)).unwrap();
            assert!((e - eb).abs() <= 1e-9);
            if !advance(&mut y, m.label_counts()) {
                break;
            }
        }
    }

    #[test]
    fn multilabel_reduction_keeps_submodularity_and_solves() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..30 {
            let m = random_submodular_multilabel(&mut rng, 6, 4);
            let (bin, map) = multilabel_to_binary(&m).unwrap();
            for e in 0..bin.edge_count() {
                assert!(is_submodular(&bin.costs().pairwise[e], 2, 2));
            }
            let (value, hat) = solve_binary_by_cut(&bin).unwrap();
            let y = map.from_binary(&hat);
            let (opt, _, _) = brute_force(&m, 1e7, false).unwrap();
            assert!((value - opt).abs() <= 1e-9 * (1.0 + opt.abs()), "{value} vs {opt}");
            assert!((m.energy(&y).unwrap() - opt).abs() <= 1e-9 * (1.0 + opt.abs()));
        }
    }

    #[test]
    fn metric_classification() {
        let mut potts = vec![1.0; 9];
        for s in 0..3 {
            potts[s * 3 + s] = 0.0;
        }
        assert_eq!(metric_check(&potts, 3), MetricClass::Metric);
        // Truncated linear.
        let mut trunc = vec![0.0; 16];
        for s in 0..4 {
            for t in 0..4 {
                trunc[s * 4 + t] = (s as f64 - t as f64).abs().min(2.0);
            }
        }
        assert_eq!(metric_check(&trunc, 4), MetricClass::Metric);
        // Potts plus a constant has a non-zero diagonal.
        let shifted: Vec<f64> = potts.iter().map(|x| x + 0.5).collect();
        assert_eq!(metric_check(&shifted, 3), MetricClass::Neither);
        // A semimetric violating the triangle inequality.
        let mut semi = vec![0.0; 9];
        let d = [[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]];
        for s in 0..3 {
            for t in 0..3 {
                semi[s * 3 + t] = d[s][t];
            }
        }
        assert_eq!(metric_check(&semi, 3), MetricClass::Semimetric);
    }

    #[test]
    fn expansion_escapes_swap_fixpoint() {
        let m = example_11_34(100.0);
        let (y_swap, _) = alpha_beta_swap(&m, &[0, 1, 2], 20).unwrap();
        assert_eq!(y_swap, vec![0, 1, 2]);
        assert_eq!(m.energy(&y_swap).unwrap(), 100.0);
        let (y_exp, _) = alpha_expansion(&m, &[0, 1, 2], 20, MoveMode::Fusion).unwrap();
        assert_eq!(m.energy(&y_exp).unwrap(), 4.0);
        assert_eq!(y_exp, vec![2, 2, 2]);
    }

    #[test]
    fn moves_keep_global_optimum() {
        let mut rng = SplitMix64::new(5);
        let m = crate::harness::generate::grid_potts(3, 3, 3, 1.0, &mut rng);
        let (opt, ybest, _) = brute_force(&m, 1e7, false).unwrap();
        let (y1, _) = alpha_expansion(&m, &ybest, 10, MoveMode::Fusion).unwrap();
        assert_eq!(m.energy(&y1).unwrap(), opt);
        let (y2, _) = alpha_beta_swap(&m, &ybest, 10).unwrap();
        assert_eq!(m.energy(&y2).unwrap(), opt);
    }

    #[test]
    fn expansion_bound_on_potts() {
        let mut rng = SplitMix64::new(6);
        for _ in 0..15 {
            let m = crate::harness::generate::grid_potts(3, 3, 3, 1.0, &mut rng);
            let y0 = crate::consistency::round_dual(m.costs());
            let (y, trace) = alpha_expansion(&m, &y0, 20, MoveMode::Fusion).unwrap();
            let (opt, _, _) = brute_force(&m, 1e7, false).unwrap();
            let e = m.energy(&y).unwrap();
            assert!(e <= 2.0 * opt + 1e-9, "expansion bound violated: {e} vs 2x{opt}");
            // Energies along the trace never increase.
            let es: Vec<f64> = trace.rows.iter().filter_map(|r| r.primal_best).collect();
            for w in es.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn swap_requires_semimetric() {
        let m = GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1)],
            vec![vec![0.0; 2]; 2],
            vec![vec![0.5, 1.0, 1.0, 0.5]],
        )
        .unwrap();
        assert!(alpha_beta_swap(&m, &[0, 0], 5).is_err());
    }

    #[test]
    fn strict_mode_rejects_nonsubmodular_moves() {
        // Supermodular edge with uniform labels: expansion move is not
        // submodular, strict mode must name it.
        let m = GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1)],
            vec![vec![0.0, 0.3], vec![0.2, 0.0]],
            vec![vec![1.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        // Starting from (1, 1), expanding 0 frees both nodes at once and
        // the move subproblem inherits the supermodular edge.
        let r = alpha_expansion(&m, &[1, 1], 5, MoveMode::Strict);
        assert!(matches!(r, Err(Error::SubmodularityViolation { .. })));
        // Fusion mode absorbs it and still never increases the energy.
        let (y, _) = alpha_expansion(&m, &[1, 1], 5, MoveMode::Fusion).unwrap();
        assert!(m.energy(&y).unwrap() <= m.energy(&[1, 1]).unwrap());
    }

    #[test]
    fn qpbo_submodular_is_integral_and_exact() {
        let m = example_8_1();
        let q = qpbo(&m).unwrap();
        assert_eq!(q.relaxed_labels, vec![Some(0), Some(0)]);
        assert_eq!(q.lower_bound, 0.0);
        assert!(m.check_local_polytope(&q.mu, 1e-9));
        let mut rng = SplitMix64::new(7);
        for _ in 0..30 {
            let m = random_submodular_binary(&mut rng, 7, 0.7);
            let q = qpbo(&m).unwrap();
            let (opt, _, _) = brute_force(&m, 1e7, false).unwrap();
            assert_eq!(q.persistent.len(), m.node_count(), "submodular => fully integral");
            assert!((q.lower_bound - opt).abs() <= 1e-9 * (1.0 + opt.abs()));
        }
    }

    #[test]
    fn qpbo_frustrated_triangle_is_half_integral() {
        let eq_cost = vec![1.0, 0.0, 0.0, 1.0];
        let m = GraphicalModel::new(
            vec![2, 2, 2],
            vec![(0, 1), (0, 2), (1, 2)],
            vec![vec![0.0; 2]; 3],
            vec![eq_cost.clone(), eq_cost.clone(), eq_cost],
        )
        .unwrap();
        let q = qpbo(&m).unwrap();
        assert!(q.persistent.is_empty());
        for p in &q.mu.node_part {
            assert_eq!(p, &vec![0.5, 0.5]);
        }
        let (opt, _, _) = brute_force(&m, 1e7, false).unwrap();
        assert_eq!(opt, 1.0);
        assert!(q.lower_bound < opt);
        assert!((q.lower_bound - 0.0).abs() <= 1e-9);
        assert!(m.check_local_polytope(&q.mu, 1e-9));
    }

    #[test]
    fn qpbo_half_integrality_lower_bound_and_persistency() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..60 {
            let m = random_binary(&mut rng, 7);
            let q = qpbo(&m).unwrap();
            assert!(m.check_local_polytope(&q.mu, 1e-9));
            for p in q.mu.node_part.iter().chain(&q.mu.edge_part) {
                for &x in p {
                    assert!(x == 0.0 || x == 0.5 || x == 1.0, "non half-integral {x}");
                }
            }
            // The relaxation value bounds every labeling and matches the
            // inner product with mu.
            let (opt, _, _) = brute_force(&m, 1e7, false).unwrap();
            assert!(q.lower_bound <= opt + 1e-9);
            assert!((m.relaxed_energy(&q.mu) - q.lower_bound).abs() <= 1e-6);
            // Weak persistency: fixing the integral part and brute
            // forcing the rest reaches the global optimum.
            let fixed_best = best_with_fixed(&m, &q);
            assert!((fixed_best - opt).abs() <= 1e-9 * (1.0 + opt.abs()));
        }
    }

    pub(crate) fn random_binary(rng: &mut SplitMix64, max_nodes: usize) -> GraphicalModel {
        let n = 2 + rng.next_below(max_nodes.saturating_sub(1));
        let labels = vec![2usize; n];
        let mut edges = Vec::new();
        let mut pairwise = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.next_f64() < 0.6 {
                    edges.push((u, v));
                    pairwise.push((0..4).map(|_| rng.next_f64() * 4.0 - 2.0).collect());
                }
            }
        }
        let unary = (0..n).map(|_| vec![rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0]).collect();
        GraphicalModel::new(labels, edges, unary, pairwise).unwrap()
    }

    fn best_with_fixed(m: &GraphicalModel, q: &QpboResult) -> f64 {
        let mut best = f64::INFINITY;
        let mut y = vec![0usize; m.node_count()];
        loop {
            let consistent = q
                .relaxed_labels
                .iter()
                .enumerate()
                .all(|(u, lab)| lab.is_none_or(|s| y[u] == s));
            if consistent {
                best = best.min(m.energy(&y).unwrap());
            }
            if !advance(&mut y, m.label_counts()) {
                break;
            }
        }
        best
    }

    #[test]
    fn fusion_move_properties() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..40 {
            let m = random_binary(&mut rng, 6);
            let current: Vec<usize> = (0..m.node_count()).map(|_| rng.next_below(2)).collect();
            let proposal: Vec<usize> = (0..m.node_count()).map(|_| rng.next_below(2)).collect();
            let fused = fusion_move(&m, &current, &proposal).unwrap();
            assert!(m.energy(&fused).unwrap() <= m.energy(&current).unwrap() + 1e-9);
            // Identical proposal is a no-op.
            assert_eq!(fusion_move(&m, &current, &current).unwrap(), current);
        }
    }

    #[test]
    fn fusion_of_constant_proposal_matches_expansion_move() {
        let mut rng = SplitMix64::new(10);
        for _ in 0..20 {
            // Metric Potts grid: the expansion move is submodular, so the
            // min-cut route and the fusion route solve the same problem.
            let m = crate::harness::generate::grid_potts(2, 3, 3, 1.0, &mut rng);
            let y: Vec<usize> = (0..m.node_count()).map(|_| rng.next_below(3)).collect();
            let alpha = rng.next_below(3);
            let proposal = vec![alpha; m.node_count()];
            let fused = fusion_move(&m, &y, &proposal).unwrap();
            let Some((move_model, map)) = build_move_model(&m, &y, &proposal).unwrap() else {
                continue;
            };
            let (_, my) = solve_binary_by_cut(&move_model).unwrap();
            let mut expanded = y.clone();
            for (i, &u) in map.iter().enumerate() {
                if my[i] == 0 {
                    expanded[u] = alpha;
                }
            }
            assert!(
                (m.energy(&fused).unwrap() - m.energy(&expanded).unwrap()).abs() <= 1e-9,
                "fusion and expansion move energies must agree"
            );
        }
    }

    #[test]
    fn reparametrization_preserves_submodularity() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..30 {
            let m = random_submodular_binary(&mut rng, 6, 0.8);
            let phi = crate::model::tests::random_phi(&m, &mut rng);
            let costs = m.reparametrize(&phi).unwrap();
            for e in 0..m.edge_count() {
                assert!(is_submodular(&costs.pairwise[e], 2, 2));
            }
        }
    }

    #[test]
    fn dimacs_export_shape() {
        let m = example_8_1();
        let g = binary_to_cut(&m).unwrap();
        let text = g.to_dimacs();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("p max 4 "));
        assert_eq!(lines.next().unwrap(), "n 1 s");
        assert_eq!(lines.next().unwrap(), "n 2 t");
        for line in lines {
            assert!(line.starts_with("a "));
        }
    }
}
