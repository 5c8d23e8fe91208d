//! Core data types for pairwise graphical models: the model itself,
//! labelings, relaxed labelings, cost vectors and reparametrizations.
//!
//! A model is an undirected graph with a finite label set per node, one
//! real cost vector per node (unary costs) and one real cost matrix per
//! edge (pairwise costs). The energy of a labeling is the sum of the
//! selected unary and pairwise costs.

use crate::error::{Error, Result};

/// Finite sentinel standing for an infinite cost. True IEEE infinities
/// break reparametrization arithmetic (inf - inf = NaN), so forbidden
/// labels and label pairs carry this value instead.
pub const BIG: f64 = 1e15;

/// Default tolerance for floating-point comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// True if a cost is treated as infinite.
#[inline]
pub fn is_big(x: f64) -> bool {
    x >= BIG
}

/// BIG-saturating addition: any infinite term makes the result BIG.
#[inline]
pub fn big_add(a: f64, b: f64) -> f64 {
    if is_big(a) || is_big(b) {
        BIG
    } else {
        a + b
    }
}

/// One label index per node.
pub type Labeling = Vec<usize>;

/// A labeling of a subset of the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialLabeling {
    /// Distinct node indices.
    pub nodes: Vec<usize>,
    /// Label per entry of `nodes`.
    pub labels: Vec<usize>,
}

impl PartialLabeling {
    pub fn new(nodes: Vec<usize>, labels: Vec<usize>) -> Result<Self> {
        if nodes.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "partial labeling has {} nodes but {} labels",
                nodes.len(),
                labels.len()
            )));
        }
        let mut seen = nodes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("partial labeling repeats a node".into()));
        }
        Ok(PartialLabeling { nodes, labels })
    }

    pub fn empty() -> Self {
        PartialLabeling { nodes: Vec::new(), labels: Vec::new() }
    }
}

/// Unary and pairwise costs in the layout of a model: `unary[u][s]` and
/// `pairwise[e][s * L_v + t]` (row-major, rows indexed by labels of the
/// lower-indexed endpoint of edge `e`).
#[derive(Debug, Clone, PartialEq)]
pub struct CostVector {
    pub unary: Vec<Vec<f64>>,
    pub pairwise: Vec<Vec<f64>>,
}

impl CostVector {
    /// All-zero costs shaped like `model`.
    pub fn zeros_like(model: &GraphicalModel) -> Self {
        CostVector {
            unary: model.labels.iter().map(|&l| vec![0.0; l]).collect(),
            pairwise: model
                .edges
                .iter()
                .map(|&(u, v)| vec![0.0; model.labels[u] * model.labels[v]])
                .collect(),
        }
    }

    pub fn shape_matches(&self, model: &GraphicalModel) -> bool {
        self.unary.len() == model.node_count()
            && self.pairwise.len() == model.edge_count()
            && self.unary.iter().zip(&model.labels).all(|(c, &l)| c.len() == l)
            && self
                .pairwise
                .iter()
                .zip(&model.edges)
                .all(|(c, &(u, v))| c.len() == model.labels[u] * model.labels[v])
    }

    /// Pairwise cost of edge `e` at label pair `(s, t)`; `s` indexes the
    /// lower endpoint.
    #[inline]
    pub fn pair(&self, model: &GraphicalModel, e: usize, s: usize, t: usize) -> f64 {
        let (_, v) = model.edges[e];
        self.pairwise[e][s * model.labels[v] + t]
    }

    /// Largest absolute value over all coordinates.
    pub fn max_abs(&self) -> f64 {
        let u = self.unary.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()));
        let p = self.pairwise.iter().flatten().fold(0.0f64, |m, &x| m.max(x.abs()));
        u.max(p)
    }

    /// Sum of absolute values over all coordinates.
    pub fn sum_abs(&self) -> f64 {
        self.unary.iter().flatten().map(|x| x.abs()).sum::<f64>()
            + self.pairwise.iter().flatten().map(|x| x.abs()).sum::<f64>()
    }
}

/// Simplex-valued relaxed labeling: a point of (or near) the local
/// polytope. Edge parts are stored row-major like pairwise costs.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedLabeling {
    pub node_part: Vec<Vec<f64>>,
    pub edge_part: Vec<Vec<f64>>,
}

/// Dual vector with one real vector per directed edge slot: `phi_uv(e)`
/// has the length of the lower endpoint's label set, `phi_vu(e)` the
/// length of the upper endpoint's.
#[derive(Debug, Clone, PartialEq)]
pub struct Reparametrization {
    /// `(phi_{u,v}, phi_{v,u})` per edge `e = (u, v)` with `u < v`.
    pub slots: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Reparametrization {
    pub fn zeros_like(model: &GraphicalModel) -> Self {
        Reparametrization {
            slots: model
                .edges
                .iter()
                .map(|&(u, v)| (vec![0.0; model.labels[u]], vec![0.0; model.labels[v]]))
                .collect(),
        }
    }

    pub fn shape_matches(&self, model: &GraphicalModel) -> bool {
        self.slots.len() == model.edge_count()
            && self.slots.iter().zip(&model.edges).all(|((a, b), &(u, v))| {
                a.len() == model.labels[u] && b.len() == model.labels[v]
            })
    }

    /// The slot directed from `from` over edge `e`.
    #[inline]
    pub fn slot(&self, model: &GraphicalModel, e: usize, from: usize) -> &[f64] {
        if model.edges[e].0 == from {
            &self.slots[e].0
        } else {
            &self.slots[e].1
        }
    }

    #[inline]
    pub fn slot_mut(&mut self, model: &GraphicalModel, e: usize, from: usize) -> &mut Vec<f64> {
        if model.edges[e].0 == from {
            &mut self.slots[e].0
        } else {
            &mut self.slots[e].1
        }
    }

    /// Coordinate-wise sum of two dual vectors.
    pub fn add(&self, other: &Reparametrization) -> Reparametrization {
        let slots = self
            .slots
            .iter()
            .zip(&other.slots)
            .map(|((a1, b1), (a2, b2))| {
                (
                    a1.iter().zip(a2).map(|(x, y)| x + y).collect(),
                    b1.iter().zip(b2).map(|(x, y)| x + y).collect(),
                )
            })
            .collect();
        Reparametrization { slots }
    }
}

/// A pairwise graphical model: graph, label counts and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphicalModel {
    labels: Vec<usize>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    /// Edge index of `(min(u,v), max(u,v))` aligned with `adjacency`.
    incident_edges: Vec<Vec<usize>>,
    costs: CostVector,
}

impl GraphicalModel {
    /// Builds a model after validating all structural invariants:
    /// no self-loops, no duplicate edges, matching cost shapes, no NaN.
    /// Edges may be given in any orientation; they are stored with the
    /// lower node first and sorted, with pairwise matrices transposed
    /// accordingly.
    pub fn new(
        labels: Vec<usize>,
        edges: Vec<(usize, usize)>,
        unary: Vec<Vec<f64>>,
        pairwise: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = labels.len();
        if labels.contains(&0) {
            return Err(Error::InvalidInput("every node needs at least one label".into()));
        }
        if unary.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} unary vectors for {} nodes",
                unary.len(),
                n
            )));
        }
        for (u, c) in unary.iter().enumerate() {
            if c.len() != labels[u] {
                return Err(Error::InvalidInput(format!(
                    "unary vector of node {u} has length {} but the node has {} labels",
                    c.len(),
                    labels[u]
                )));
            }
        }
        if pairwise.len() != edges.len() {
            return Err(Error::InvalidInput(format!(
                "{} pairwise matrices for {} edges",
                pairwise.len(),
                edges.len()
            )));
        }

        // Canonicalize edge orientation, transposing matrices as needed.
        let mut items: Vec<((usize, usize), Vec<f64>)> = Vec::with_capacity(edges.len());
        for (&(a, b), cost) in edges.iter().zip(pairwise) {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) leaves the node range")));
            }
            if cost.len() != labels[a] * labels[b] {
                return Err(Error::InvalidInput(format!(
                    "pairwise matrix of edge ({a}, {b}) has {} entries, expected {}",
                    cost.len(),
                    labels[a] * labels[b]
                )));
            }
            if a < b {
                items.push(((a, b), cost));
            } else {
                let (lu, lv) = (labels[b], labels[a]);
                let mut t = vec![0.0; cost.len()];
                for s in 0..lv {
                    for l in 0..lu {
                        t[l * lv + s] = cost[s * lu + l];
                    }
                }
                items.push(((b, a), t));
            }
        }
        items.sort_by_key(|&(e, _)| e);
        if items.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate edge".into()));
        }

        let all_finite = unary.iter().flatten().all(|x| x.is_finite())
            && items.iter().flat_map(|(_, c)| c).all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidInput(
                "costs must be finite; use the BIG sentinel for forbidden entries".into(),
            ));
        }

        let edges: Vec<(usize, usize)> = items.iter().map(|&(e, _)| e).collect();
        let pairwise: Vec<Vec<f64>> = items.into_iter().map(|(_, c)| c).collect();

        let mut adjacency = vec![Vec::new(); n];
        let mut incident_edges = vec![Vec::new(); n];
        for (e, &(u, v)) in edges.iter().enumerate() {
            adjacency[u].push(v);
            incident_edges[u].push(e);
            adjacency[v].push(u);
            incident_edges[v].push(e);
        }

        Ok(GraphicalModel {
            labels,
            edges,
            adjacency,
            incident_edges,
            costs: CostVector { unary, pairwise },
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn label_count(&self, u: usize) -> usize {
        self.labels[u]
    }

    pub fn label_counts(&self) -> &[usize] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    /// Edge indices incident to `u`, aligned with `neighbors(u)`.
    pub fn incident(&self, u: usize) -> &[usize] {
        &self.incident_edges[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).ok()
    }

    pub fn costs(&self) -> &CostVector {
        &self.costs
    }

    pub fn unary(&self, u: usize) -> &[f64] {
        &self.costs.unary[u]
    }

    /// Pairwise cost of edge `e` with `s` indexing the lower endpoint.
    #[inline]
    pub fn pair_cost(&self, e: usize, s: usize, t: usize) -> f64 {
        self.costs.pair(self, e, s, t)
    }

    /// Pairwise cost of edge `e` read from the side of node `from`:
    /// `s_from` is the label of `from`, `s_other` of the other endpoint.
    #[inline]
    pub fn pair_cost_from(&self, e: usize, from: usize, s_from: usize, s_other: usize) -> f64 {
        if self.edges[e].0 == from {
            self.pair_cost(e, s_from, s_other)
        } else {
            self.pair_cost(e, s_other, s_from)
        }
    }

    /// Same model structure with different costs.
    pub fn with_costs(&self, costs: CostVector) -> Result<GraphicalModel> {
        if !costs.shape_matches(self) {
            return Err(Error::InvalidInput("cost vector does not match the model shape".into()));
        }
        let mut m = self.clone();
        m.costs = costs;
        Ok(m)
    }

    /// Total number of coordinates of the index set I.
    pub fn coordinate_count(&self) -> usize {
        self.labels.iter().sum::<usize>()
            + self.edges.iter().map(|&(u, v)| self.labels[u] * self.labels[v]).sum::<usize>()
    }

    pub fn validate_labeling(&self, y: &[usize]) -> Result<()> {
        if y.len() != self.node_count() {
            return Err(Error::InvalidInput(format!(
                "labeling has {} entries for {} nodes",
                y.len(),
                self.node_count()
            )));
        }
        for (u, &s) in y.iter().enumerate() {
            if s >= self.labels[u] {
                return Err(Error::InvalidInput(format!(
                    "label {s} out of range at node {u} ({} labels)",
                    self.labels[u]
                )));
            }
        }
        Ok(())
    }

    /// Energy of a labeling, BIG-saturating: any forbidden term makes the
    /// result at least BIG.
    pub fn energy(&self, y: &[usize]) -> Result<f64> {
        self.validate_labeling(y)?;
        Ok(self.energy_of(&self.costs, y))
    }

    /// Energy of a valid labeling under an arbitrary cost vector of this
    /// model's shape.
    pub fn energy_of(&self, costs: &CostVector, y: &[usize]) -> f64 {
        let mut acc = 0.0;
        for (u, &s) in y.iter().enumerate() {
            acc = big_add(acc, costs.unary[u][s]);
        }
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            acc = big_add(acc, costs.pair(self, e, y[u], y[v]));
        }
        acc
    }

    /// Indicator embedding of a labeling into the relaxed space:
    /// `delta(y)` with a single 1 per node vector and per edge matrix.
    pub fn indicator(&self, y: &[usize]) -> Result<RelaxedLabeling> {
        self.validate_labeling(y)?;
        let mut node_part: Vec<Vec<f64>> =
            self.labels.iter().map(|&l| vec![0.0; l]).collect();
        for (u, &s) in y.iter().enumerate() {
            node_part[u][s] = 1.0;
        }
        let mut edge_part: Vec<Vec<f64>> = self
            .edges
            .iter()
            .map(|&(u, v)| vec![0.0; self.labels[u] * self.labels[v]])
            .collect();
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            edge_part[e][y[u] * self.labels[v] + y[v]] = 1.0;
        }
        Ok(RelaxedLabeling { node_part, edge_part })
    }

    /// Reparametrized costs per the standard transform: phi values are
    /// subtracted from unaries and added onto the incident pencils, so
    /// every labeling keeps its energy.
    pub fn reparametrize(&self, phi: &Reparametrization) -> Result<CostVector> {
        if !phi.shape_matches(self) {
            return Err(Error::InvalidInput("dual vector does not match the model shape".into()));
        }
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let touched = |slot: &[f64], node: usize| -> bool {
                slot.iter()
                    .enumerate()
                    .any(|(s, &p)| p != 0.0 && is_big(self.costs.unary[node][s]))
            };
            if touched(&phi.slots[e].0, u) || touched(&phi.slots[e].1, v) {
                return Err(Error::InvalidInput(format!(
                    "reparametrization touches a BIG unary cost at edge ({u}, {v})"
                )));
            }
        }
        let mut out = self.costs.clone();
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let (phi_uv, phi_vu) = &phi.slots[e];
            let lv = self.labels[v];
            for s in 0..self.labels[u] {
                out.unary[u][s] -= phi_uv[s];
                for t in 0..lv {
                    out.pairwise[e][s * lv + t] += phi_uv[s];
                }
            }
            for t in 0..lv {
                out.unary[v][t] -= phi_vu[t];
                for s in 0..self.labels[u] {
                    out.pairwise[e][s * lv + t] += phi_vu[t];
                }
            }
        }
        Ok(out)
    }

    /// True iff `mu` satisfies non-negativity, the node and edge simplex
    /// constraints and the coupling constraints within `tol`.
    pub fn check_local_polytope(&self, mu: &RelaxedLabeling, tol: f64) -> bool {
        if mu.node_part.len() != self.node_count() || mu.edge_part.len() != self.edge_count() {
            return false;
        }
        for (u, part) in mu.node_part.iter().enumerate() {
            if part.len() != self.labels[u] {
                return false;
            }
            if part.iter().any(|&x| x < -tol) {
                return false;
            }
            if (part.iter().sum::<f64>() - 1.0).abs() > tol {
                return false;
            }
        }
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let part = &mu.edge_part[e];
            let (lu, lv) = (self.labels[u], self.labels[v]);
            if part.len() != lu * lv {
                return false;
            }
            if part.iter().any(|&x| x < -tol) {
                return false;
            }
            if (part.iter().sum::<f64>() - 1.0).abs() > tol {
                return false;
            }
            for s in 0..lu {
                let row: f64 = (0..lv).map(|t| part[s * lv + t]).sum();
                if (row - mu.node_part[u][s]).abs() > tol {
                    return false;
                }
            }
            for t in 0..lv {
                let col: f64 = (0..lu).map(|s| part[s * lv + t]).sum();
                if (col - mu.node_part[v][t]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Inner product of the model costs with a relaxed labeling,
    /// saturating at BIG when a forbidden coordinate carries mass.
    pub fn relaxed_energy(&self, mu: &RelaxedLabeling) -> f64 {
        self.relaxed_energy_of(&self.costs, mu)
    }

    pub fn relaxed_energy_of(&self, costs: &CostVector, mu: &RelaxedLabeling) -> f64 {
        let mut acc = 0.0;
        let mut hit_big = false;
        for (cu, mu_u) in costs.unary.iter().zip(&mu.node_part) {
            for (&c, &m) in cu.iter().zip(mu_u) {
                if m != 0.0 {
                    if is_big(c) {
                        hit_big = true;
                    } else {
                        acc += c * m;
                    }
                }
            }
        }
        for (ce, mu_e) in costs.pairwise.iter().zip(&mu.edge_part) {
            for (&c, &m) in ce.iter().zip(mu_e) {
                if m != 0.0 {
                    if is_big(c) {
                        hit_big = true;
                    } else {
                        acc += c * m;
                    }
                }
            }
        }
        if hit_big {
            BIG
        } else {
            acc
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::harness::generate::example_8_1;
    use crate::harness::oracle::brute_force;
    use crate::harness::rng::SplitMix64;
    use crate::harness::generate::random_model;

    #[test]
    fn energy_of_example_8_1() {
        let m = example_8_1();
        assert_eq!(m.energy(&[1, 1]).unwrap(), 1.0);
        assert_eq!(m.energy(&[0, 0]).unwrap(), 0.0);
        assert_eq!(m.energy(&[0, 1]).unwrap(), 2.0);
    }

    #[test]
    fn energy_zero_costs() {
        let m = GraphicalModel::new(
            vec![2, 3],
            vec![(0, 1)],
            vec![vec![0.0; 2], vec![0.0; 3]],
            vec![vec![0.0; 6]],
        )
        .unwrap();
        assert_eq!(m.energy(&[1, 2]).unwrap(), 0.0);
    }

    /// Independent term-by-term re-summation of the energy.
    fn energy_oracle(m: &GraphicalModel, y: &[usize]) -> f64 {
        let mut terms: Vec<f64> = Vec::new();
        for u in 0..m.node_count() {
            terms.push(m.unary(u)[y[u]]);
        }
        for &(u, v) in m.edges() {
            let e = m.edge_index(u, v).unwrap();
            terms.push(m.pair_cost_from(e, v, y[v], y[u]));
        }
        if terms.iter().any(|&t| is_big(t)) {
            return BIG;
        }
        terms.iter().sum()
    }

    #[test]
    fn energy_matches_resummation_oracle() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..50 {
            let m = random_model(5, 3, 0.7, &mut rng);
            let y: Labeling = (0..m.node_count())
                .map(|u| (rng.next_u64() as usize) % m.label_count(u))
                .collect();
            let e = m.energy(&y).unwrap();
            assert!((e - energy_oracle(&m, &y)).abs() <= 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn energy_shape_mismatch_is_rejected() {
        let m = example_8_1();
        assert!(matches!(m.energy(&[0]), Err(Error::InvalidInput(_))));
        assert!(matches!(m.energy(&[0, 2]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn indicator_single_node() {
        let m = GraphicalModel::new(vec![2], vec![], vec![vec![0.3, 0.7]], vec![]).unwrap();
        let d = m.indicator(&[0]).unwrap();
        assert_eq!(d.node_part, vec![vec![1.0, 0.0]]);
        assert!(d.edge_part.is_empty());
    }

    #[test]
    fn indicator_two_nodes() {
        let m = example_8_1();
        let d = m.indicator(&[0, 1]).unwrap();
        assert_eq!(d.node_part, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(d.edge_part, vec![vec![0.0, 1.0, 0.0, 0.0]]);
    }

    #[test]
    fn indicator_inner_product_is_energy() {
        // Both sides add the same selected coordinates in the same
        // order, so the equality is bit-exact for finite costs.
        let mut rng = SplitMix64::new(99);
        for _ in 0..30 {
            let m = random_model(5, 4, 0.6, &mut rng);
            let y: Labeling = (0..m.node_count())
                .map(|u| (rng.next_u64() as usize) % m.label_count(u))
                .collect();
            let d = m.indicator(&y).unwrap();
            assert_eq!(m.relaxed_energy(&d), m.energy(&y).unwrap());
            assert!(m.check_local_polytope(&d, 0.0));
        }
    }

    #[test]
    fn reparametrize_identity_and_invariance() {
        let mut rng = SplitMix64::new(3);
        let m = random_model(4, 2, 1.0, &mut rng);
        let zero = Reparametrization::zeros_like(&m);
        assert_eq!(m.reparametrize(&zero).unwrap(), *m.costs());

        let phi = random_phi(&m, &mut rng);
        let costs = m.reparametrize(&phi).unwrap();
        // Exhaustive over all 2^4 labelings.
        let (_, _, all) = brute_force(&m, 1e7, true).unwrap();
        for y in all.unwrap() {
            let e0 = m.energy(&y).unwrap();
            let e1 = m.energy_of(&costs, &y);
            assert!((e0 - e1).abs() <= 1e-9 * (1.0 + e0.abs()));
        }
    }

    pub(crate) fn random_phi(m: &GraphicalModel, rng: &mut SplitMix64) -> Reparametrization {
        let mut phi = Reparametrization::zeros_like(m);
        for slot in &mut phi.slots {
            for x in slot.0.iter_mut().chain(slot.1.iter_mut()) {
                *x = rng.next_f64() * 2.0 - 1.0;
            }
        }
        phi
    }

    #[test]
    fn reparametrize_example_6_4_hand_values() {
        // Two binary nodes, theta_u = (0, 1), pairwise cost 1 at s != t.
        // Shifting 0.5 from theta_u(b) onto the edge (and -0.5 on the
        // other slot) leaves a unique locally optimal label per node.
        let m = GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1)],
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            vec![vec![0.0, 1.0, 1.0, 0.0]],
        )
        .unwrap();
        let mut phi = Reparametrization::zeros_like(&m);
        phi.slots[0].0[1] = 0.5;
        phi.slots[0].1[1] = -0.5;
        let c = m.reparametrize(&phi).unwrap();
        assert_eq!(c.unary[0], vec![0.0, 0.5]);
        assert_eq!(c.unary[1], vec![0.0, 0.5]);
        assert_eq!(c.pairwise[0], vec![0.0, 0.5, 1.5, 0.0]);
    }

    #[test]
    fn reparametrize_composition() {
        let mut rng = SplitMix64::new(11);
        let m = random_model(5, 3, 0.8, &mut rng);
        let p1 = random_phi(&m, &mut rng);
        let p2 = random_phi(&m, &mut rng);
        let a = m.with_costs(m.reparametrize(&p1).unwrap()).unwrap();
        let twice = a.reparametrize(&p2).unwrap();
        let once = m.reparametrize(&p1.add(&p2)).unwrap();
        for (x, y) in twice.unary.iter().flatten().zip(once.unary.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9);
        }
        for (x, y) in twice.pairwise.iter().flatten().zip(once.pairwise.iter().flatten()) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn reparametrize_big_unary_is_rejected() {
        let m = GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1)],
            vec![vec![0.0, BIG], vec![0.0, 0.0]],
            vec![vec![0.0; 4]],
        )
        .unwrap();
        let mut phi = Reparametrization::zeros_like(&m);
        phi.slots[0].0[1] = 1.0;
        assert!(m.reparametrize(&phi).is_err());
        // A zero slot on the BIG label is fine.
        phi.slots[0].0[1] = 0.0;
        phi.slots[0].0[0] = 1.0;
        assert!(m.reparametrize(&phi).is_ok());
    }

    #[test]
    fn local_polytope_example_4_3_half_integral_point() {
        let m = crate::harness::generate::example_4_3(1.0);
        let mu = crate::harness::generate::example_4_3_relaxed(&m);
        assert!(m.check_local_polytope(&mu, 1e-12));
        assert_eq!(m.relaxed_energy(&mu), 0.0);
    }

    #[test]
    fn local_polytope_broken_coupling() {
        let m = example_8_1();
        let mu = RelaxedLabeling {
            node_part: vec![vec![0.6, 0.4], vec![0.5, 0.5]],
            edge_part: vec![vec![0.25, 0.25, 0.25, 0.25]],
        };
        assert!(!m.check_local_polytope(&mu, 1e-9));
    }

    #[test]
    fn relaxed_energy_of_indicator_is_energy() {
        let m = example_8_1();
        let d = m.indicator(&[1, 1]).unwrap();
        assert_eq!(m.relaxed_energy(&d), m.energy(&[1, 1]).unwrap());
    }

    #[test]
    fn relaxed_energy_dominates_dual_bounds() {
        // Random feasible points (convex mixtures of labelings) price at
        // or above any dual value, here the converged message-passing
        // bound.
        let mut rng = SplitMix64::new(55);
        for _ in 0..15 {
            let m = random_model(5, 3, 0.7, &mut rng);
            let order: Vec<usize> = (0..m.node_count()).collect();
            let counts = crate::dual_ascent::chain_counts(&m, &order).unwrap();
            let opts = crate::dual_ascent::SolverOptions {
                max_iterations: 200,
                tolerance: 1e-10,
                track_epsilon: false,
                round_primal: false,
            };
            let run = crate::dual_ascent::run_srmp(&m, &counts, &order, &opts).unwrap();
            let dual = run.trace.last_dual().unwrap();
            for _ in 0..5 {
                let mu = random_feasible_mixture(&m, &mut rng);
                assert!(m.check_local_polytope(&mu, 1e-9));
                assert!(m.relaxed_energy(&mu) >= dual - 1e-9);
            }
        }
    }

    fn random_feasible_mixture(m: &GraphicalModel, rng: &mut SplitMix64) -> RelaxedLabeling {
        let k = 1 + (rng.next_u64() as usize) % 4;
        let mut weights: Vec<f64> = (0..k).map(|_| 0.1 + rng.next_f64()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut mix: Option<RelaxedLabeling> = None;
        for &w in &weights {
            let y: Labeling = (0..m.node_count())
                .map(|u| (rng.next_u64() as usize) % m.label_count(u))
                .collect();
            let d = m.indicator(&y).unwrap();
            mix = Some(match mix {
                None => RelaxedLabeling {
                    node_part: d.node_part.iter().map(|c| c.iter().map(|x| w * x).collect()).collect(),
                    edge_part: d.edge_part.iter().map(|c| c.iter().map(|x| w * x).collect()).collect(),
                },
                Some(mut acc) => {
                    for (a, b) in acc.node_part.iter_mut().zip(&d.node_part) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += w * y;
                        }
                    }
                    for (a, b) in acc.edge_part.iter_mut().zip(&d.edge_part) {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += w * y;
                        }
                    }
                    acc
                }
            });
        }
        mix.unwrap()
    }

    #[test]
    fn relaxed_energy_saturates_on_big() {
        let m = GraphicalModel::new(
            vec![2],
            vec![],
            vec![vec![BIG, 0.0]],
            vec![],
        )
        .unwrap();
        let mu = RelaxedLabeling { node_part: vec![vec![0.5, 0.5]], edge_part: vec![] };
        assert!(m.relaxed_energy(&mu) >= BIG);
    }

    #[test]
    fn model_invariants_are_validated() {
        assert!(GraphicalModel::new(vec![2, 2], vec![(0, 0)], vec![vec![0.0; 2]; 2], vec![vec![0.0; 4]]).is_err());
        assert!(GraphicalModel::new(
            vec![2, 2],
            vec![(0, 1), (1, 0)],
            vec![vec![0.0; 2]; 2],
            vec![vec![0.0; 4]; 2]
        )
        .is_err());
        assert!(GraphicalModel::new(vec![2, 2], vec![(0, 1)], vec![vec![0.0; 2]; 2], vec![vec![0.0; 3]]).is_err());
        assert!(GraphicalModel::new(vec![2], vec![], vec![vec![f64::NAN, 0.0]], vec![]).is_err());
    }

    #[test]
    fn edges_are_canonicalized() {
        // Edge given as (1, 0) with a 3x2 matrix must be stored as (0, 1)
        // with the transposed 2x3 matrix.
        let m = GraphicalModel::new(
            vec![2, 3],
            vec![(1, 0)],
            vec![vec![0.0; 2], vec![0.0; 3]],
            vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]],
        )
        .unwrap();
        assert_eq!(m.edges(), &[(0, 1)]);
        // Original theta(t, s) for t in Y_1, s in Y_0; transposed (s, t).
        assert_eq!(m.pair_cost(0, 0, 0), 1.0);
        assert_eq!(m.pair_cost(0, 1, 0), 2.0);
        assert_eq!(m.pair_cost(0, 0, 1), 3.0);
        assert_eq!(m.pair_cost(0, 1, 1), 4.0);
        assert_eq!(m.pair_cost(0, 0, 2), 5.0);
        assert_eq!(m.pair_cost(0, 1, 2), 6.0);
    }
}
