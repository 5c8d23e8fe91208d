//! Dual objective evaluation, arc-consistency machinery (locally-minimal
//! indicators, non-zero indicators, closure), epsilon-agreement and the
//! primal/dual rounding rules.

use crate::error::Result;
use crate::model::{
    CostVector, GraphicalModel, Labeling, RelaxedLabeling, Reparametrization,
};

/// Binary field over the coordinates of a model: one bit per label and
/// per label pair, in the cost-vector layout.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    pub node: Vec<Vec<bool>>,
    pub edge: Vec<Vec<bool>>,
}

impl IndicatorField {
    pub fn all_ones(model: &GraphicalModel) -> Self {
        IndicatorField {
            node: model.label_counts().iter().map(|&l| vec![true; l]).collect(),
            edge: model
                .edges()
                .iter()
                .map(|&(u, v)| vec![true; model.label_count(u) * model.label_count(v)])
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.node.iter().flatten().all(|&b| !b) && self.edge.iter().flatten().all(|&b| !b)
    }

    /// Coordinate-wise `self <= other`.
    pub fn le(&self, other: &IndicatorField) -> bool {
        self.node
            .iter()
            .flatten()
            .zip(other.node.iter().flatten())
            .all(|(&a, &b)| !a || b)
            && self
                .edge
                .iter()
                .flatten()
                .zip(other.edge.iter().flatten())
                .all(|(&a, &b)| !a || b)
    }

    /// Coordinate-wise disjunction.
    pub fn or(&self, other: &IndicatorField) -> IndicatorField {
        IndicatorField {
            node: self
                .node
                .iter()
                .zip(&other.node)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x || y).collect())
                .collect(),
            edge: self
                .edge
                .iter()
                .zip(&other.edge)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x || y).collect())
                .collect(),
        }
    }

    pub fn from_labeling(model: &GraphicalModel, y: &[usize]) -> Result<IndicatorField> {
        model.validate_labeling(y)?;
        let mut node: Vec<Vec<bool>> =
            model.label_counts().iter().map(|&l| vec![false; l]).collect();
        for (u, &s) in y.iter().enumerate() {
            node[u][s] = true;
        }
        let mut edge: Vec<Vec<bool>> = model
            .edges()
            .iter()
            .map(|&(u, v)| vec![false; model.label_count(u) * model.label_count(v)])
            .collect();
        for (e, &(u, v)) in model.edges().iter().enumerate() {
            edge[e][y[u] * model.label_count(v) + y[v]] = true;
        }
        Ok(IndicatorField { node, edge })
    }
}

/// Lagrange dual value: sum of per-node and per-edge minima of the
/// reparametrized costs. A lower bound on every labeling's energy.
pub fn dual_value(model: &GraphicalModel, phi: &Reparametrization) -> Result<f64> {
    let costs = model.reparametrize(phi)?;
    Ok(dual_value_of(&costs))
}

/// Sum of factor minima of an explicit cost vector.
pub fn dual_value_of(costs: &CostVector) -> f64 {
    let nodes: f64 = costs
        .unary
        .iter()
        .map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min))
        .sum();
    let edges: f64 = costs
        .pairwise
        .iter()
        .map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min))
        .sum();
    nodes + edges
}

/// Indicator of the locally (near-)minimal entries of each factor:
/// a coordinate is set iff its cost is within `eps` of the factor
/// minimum.
pub fn mi(costs: &CostVector, eps: f64) -> IndicatorField {
    let mark = |c: &Vec<f64>| -> Vec<bool> {
        let m = c.iter().cloned().fold(f64::INFINITY, f64::min);
        c.iter().map(|&x| x <= m + eps).collect()
    };
    IndicatorField {
        node: costs.unary.iter().map(mark).collect(),
        edge: costs.pairwise.iter().map(mark).collect(),
    }
}

/// `mi` with the default per-factor tolerance 1e-9 * (1 + |factor min|),
/// absorbing the float noise that makes exact minima unique.
pub fn mi_default(costs: &CostVector) -> IndicatorField {
    let mark = |c: &Vec<f64>| -> Vec<bool> {
        let m = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let eps = 1e-9 * (1.0 + m.abs());
        c.iter().map(|&x| x <= m + eps).collect()
    };
    IndicatorField {
        node: costs.unary.iter().map(mark).collect(),
        edge: costs.pairwise.iter().map(mark).collect(),
    }
}

/// Indicator of exactly non-zero coordinates of a relaxed labeling.
pub fn nz(mu: &RelaxedLabeling) -> IndicatorField {
    IndicatorField {
        node: mu
            .node_part
            .iter()
            .map(|c| c.iter().map(|&x| x != 0.0).collect())
            .collect(),
        edge: mu
            .edge_part
            .iter()
            .map(|c| c.iter().map(|&x| x != 0.0).collect())
            .collect(),
    }
}

pub fn is_arc_consistent(model: &GraphicalModel, xi: &IndicatorField) -> bool {
    for (e, &(u, v)) in model.edges().iter().enumerate() {
        let (lu, lv) = (model.label_count(u), model.label_count(v));
        for s in 0..lu {
            for t in 0..lv {
                if xi.edge[e][s * lv + t] && (!xi.node[u][s] || !xi.node[v][t]) {
                    return false;
                }
            }
        }
        for s in 0..lu {
            if xi.node[u][s] && !(0..lv).any(|t| xi.edge[e][s * lv + t]) {
                return false;
            }
        }
        for t in 0..lv {
            if xi.node[v][t] && !(0..lu).any(|s| xi.edge[e][s * lv + t]) {
                return false;
            }
        }
    }
    true
}

/// Arc-consistent with exactly one active label per node and one label
/// pair per edge.
pub fn is_strictly_arc_consistent(model: &GraphicalModel, xi: &IndicatorField) -> bool {
    is_arc_consistent(model, xi)
        && xi.node.iter().all(|c| c.iter().filter(|&&b| b).count() == 1)
        && xi.edge.iter().all(|c| c.iter().filter(|&&b| b).count() == 1)
}

/// Largest arc-consistent field below `xi`, computed by relaxation
/// labeling: nodes then edges in index order until a full pass makes no
/// change. Coordinates only ever switch off, so the fixed point is the
/// unique closure.
pub fn closure(model: &GraphicalModel, xi: &IndicatorField) -> IndicatorField {
    let mut xi = xi.clone();
    loop {
        let mut changed = false;
        for u in 0..model.node_count() {
            for s in 0..model.label_count(u) {
                if !xi.node[u][s] {
                    continue;
                }
                for (&v, &e) in model.neighbors(u).iter().zip(model.incident(u)) {
                    let lv_cols = model.label_count(model.edges()[e].1);
                    let supported = if model.edges()[e].0 == u {
                        (0..model.label_count(v)).any(|t| xi.edge[e][s * lv_cols + t])
                    } else {
                        (0..model.label_count(v)).any(|t| xi.edge[e][t * lv_cols + s])
                    };
                    if !supported {
                        xi.node[u][s] = false;
                        changed = true;
                        break;
                    }
                }
            }
        }
        for (e, &(u, v)) in model.edges().iter().enumerate() {
            let lv = model.label_count(v);
            for s in 0..model.label_count(u) {
                for t in 0..lv {
                    if xi.edge[e][s * lv + t] && (!xi.node[u][s] || !xi.node[v][t]) {
                        xi.edge[e][s * lv + t] = false;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return xi;
        }
    }
}

/// Outcome of the epsilon-agreement analysis of a cost vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgreementStatus {
    /// The closure of the exactly-minimal field is strictly arc-consistent.
    Strict,
    /// Non-empty but not strict closure.
    Agree,
    /// Empty closure of the exactly-minimal field.
    None,
}

#[derive(Debug, Clone)]
pub struct AgreementReport {
    pub status: AgreementStatus,
    /// Smallest eps such that the eps-minimal field has a non-empty
    /// closure.
    pub epsilon: f64,
    /// Closure of the exactly-minimal field (eps = 0).
    pub closure: IndicatorField,
    /// The arc-consistent level field witnessing `epsilon`.
    pub level_field: IndicatorField,
}

/// Runs the min/max variant of relaxation labeling on the per-factor
/// normalized costs (factor minima shifted to zero), extracts the
/// smallest attained level `m` and the epsilon value certifying
/// non-empty eps-agreement. The level-m coordinates always form an
/// arc-consistent field.
pub fn epsilon_agreement(model: &GraphicalModel, costs: &CostVector) -> AgreementReport {
    // Normalize each factor so thresholds align with the per-factor
    // definition of near-minimality.
    let normalize = |c: &Vec<f64>| -> Vec<f64> {
        let m = c.iter().cloned().fold(f64::INFINITY, f64::min);
        c.iter().map(|&x| x - m).collect()
    };
    let base = CostVector {
        unary: costs.unary.iter().map(normalize).collect(),
        pairwise: costs.pairwise.iter().map(normalize).collect(),
    };
    let mut xi = base.clone();

    loop {
        let mut changed = false;
        for u in 0..model.node_count() {
            for s in 0..model.label_count(u) {
                for &e in model.incident(u) {
                    let (a, b) = model.edges()[e];
                    let lv = model.label_count(b);
                    let pencil_min = if a == u {
                        (0..model.label_count(b))
                            .map(|t| xi.pairwise[e][s * lv + t])
                            .fold(f64::INFINITY, f64::min)
                    } else {
                        (0..model.label_count(a))
                            .map(|t| xi.pairwise[e][t * lv + s])
                            .fold(f64::INFINITY, f64::min)
                    };
                    if pencil_min > xi.unary[u][s] {
                        xi.unary[u][s] = pencil_min;
                        changed = true;
                    }
                }
            }
        }
        for (e, &(u, v)) in model.edges().iter().enumerate() {
            let lv = model.label_count(v);
            for s in 0..model.label_count(u) {
                for t in 0..lv {
                    let bound = xi.unary[u][s].max(xi.unary[v][t]);
                    if bound > xi.pairwise[e][s * lv + t] {
                        xi.pairwise[e][s * lv + t] = bound;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let m = xi
        .unary
        .iter()
        .flatten()
        .chain(xi.pairwise.iter().flatten())
        .cloned()
        .fold(f64::INFINITY, f64::min);

    let level_field = IndicatorField {
        node: xi.unary.iter().map(|c| c.iter().map(|&x| x <= m).collect()).collect(),
        edge: xi.pairwise.iter().map(|c| c.iter().map(|&x| x <= m).collect()).collect(),
    };

    // Largest gap between the level and the original (normalized) cost
    // over the level-m coordinates.
    let mut epsilon = 0.0f64;
    for (cu, xu) in base.unary.iter().zip(&xi.unary) {
        for (&c, &x) in cu.iter().zip(xu) {
            if x <= m {
                epsilon = epsilon.max(m - c);
            }
        }
    }
    for (ce, xe) in base.pairwise.iter().zip(&xi.pairwise) {
        for (&c, &x) in ce.iter().zip(xe) {
            if x <= m {
                epsilon = epsilon.max(m - c);
            }
        }
    }

    let cl = closure(model, &mi(costs, 0.0));
    let status = if cl.is_zero() {
        AgreementStatus::None
    } else if is_strictly_arc_consistent(model, &cl) {
        AgreementStatus::Strict
    } else {
        AgreementStatus::Agree
    };

    AgreementReport { status, epsilon, closure: cl, level_field }
}

/// Primal rounding: per-node argmax of the relaxed labeling, lowest
/// index on ties.
pub fn round_primal(mu: &RelaxedLabeling) -> Labeling {
    mu.node_part
        .iter()
        .map(|c| {
            let mut best = 0;
            for (s, &x) in c.iter().enumerate().skip(1) {
                if x > c[best] {
                    best = s;
                }
            }
            best
        })
        .collect()
}

/// Naive dual rounding: per-node argmin of the unary part, lowest index
/// on ties. Weak on reparametrizations with flat unaries; diffusion
/// callers must split pairwise costs into the unaries first.
pub fn round_dual(costs: &CostVector) -> Labeling {
    costs
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
        .collect()
}

/// Constructive labeling extraction from an arc-consistent field on an
/// acyclic model: grow a connected labeled set from a seeded node,
/// always following active label pairs. Returns None if the field has
/// an empty node somewhere in a touched component.
pub fn tree_labeling_from_closure(
    model: &GraphicalModel,
    xi: &IndicatorField,
) -> Option<Labeling> {
    let n = model.node_count();
    let mut y = vec![usize::MAX; n];
    for seed in 0..n {
        if y[seed] != usize::MAX {
            continue;
        }
        let s = xi.node[seed].iter().position(|&b| b)?;
        y[seed] = s;
        let mut stack = vec![seed];
        while let Some(u) = stack.pop() {
            for (&v, &e) in model.neighbors(u).iter().zip(model.incident(u)) {
                if y[v] != usize::MAX {
                    continue;
                }
                let lv_cols = model.label_count(model.edges()[e].1);
                let t = if model.edges()[e].0 == u {
                    (0..model.label_count(v)).find(|&t| xi.edge[e][y[u] * lv_cols + t])?
                } else {
                    (0..model.label_count(v)).find(|&t| xi.edge[e][t * lv_cols + y[u]])?
                };
                y[v] = t;
                stack.push(v);
            }
        }
    }
    Some(y)
}
