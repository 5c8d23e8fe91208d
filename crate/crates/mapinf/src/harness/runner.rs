//! Solver dispatch: maps solver names onto the library, applies the
//! documented rounding chains and re-verifies every reported primal
//! energy before it reaches a trace.

use crate::consistency::{round_dual, round_primal};
use crate::decomposition::{
    chains_to_slaves, maximal_monotonic_chains, run_subgradient_decomposition,
    run_subgradient_dual, split_costs, SplitWeights,
};
use crate::dual_ascent::{
    chain_counts, edge_chain_counts, run_diffusion, run_srmp, srmp_round, DiffusionWeights,
    SolverOptions, SolverTrace, TraceRow,
};
use crate::error::{Error, Result};
use crate::harness::oracle::brute_force;
use crate::model::{GraphicalModel, Labeling, PartialLabeling};
use crate::primal::{block_icm, conditional_costs, icm, BlockSchedule};
use crate::{mincut, primal};

/// What a solver run produced: a labeling with its verified energy,
/// optionally a dual bound, and the per-iteration trace.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub labeling: Option<Labeling>,
    pub energy: Option<f64>,
    pub dual_bound: Option<f64>,
    pub trace: SolverTrace,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub iterations: usize,
    pub tolerance: f64,
    /// Node order: forward index order or reversed.
    pub reverse_order: bool,
    /// Weight preset: "minsum", "cmp" for diffusion; "chains", "edges"
    /// for message passing counts.
    pub weights: String,
    /// Evaluate the epsilon-agreement value per iteration. Expensive on
    /// large models; auto-disabled above 50k coordinates unless forced.
    pub track_epsilon: Option<bool>,
    pub seed: u64,
    pub brute_force_cap: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            iterations: 1000,
            tolerance: 1e-6,
            reverse_order: false,
            weights: "minsum".into(),
            track_epsilon: None,
            seed: 1,
            brute_force_cap: 1e7,
        }
    }
}

fn node_order(model: &GraphicalModel, opts: &RunOptions) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.node_count()).collect();
    if opts.reverse_order {
        order.reverse();
    }
    order
}

fn solver_options(model: &GraphicalModel, opts: &RunOptions) -> SolverOptions {
    let track = opts
        .track_epsilon
        .unwrap_or(model.coordinate_count() <= 50_000);
    SolverOptions {
        max_iterations: opts.iterations,
        tolerance: opts.tolerance,
        track_epsilon: track,
        round_primal: true,
    }
}

/// Verifies a candidate labeling through the model energy and packages
/// it; a mismatch with the solver's claim is a hard error.
fn verified(model: &GraphicalModel, y: Labeling, claimed: Option<f64>) -> Result<(Labeling, f64)> {
    let e = model.energy(&y)?;
    if let Some(c) = claimed {
        if (c - e).abs() > 1e-6 * (1.0 + e.abs()) {
            return Err(Error::InvalidInput(format!(
                "solver reported energy {c} but the labeling evaluates to {e}"
            )));
        }
    }
    Ok((y, e))
}

fn naive_start(model: &GraphicalModel) -> Labeling {
    round_dual(model.costs())
}

/// Runs one named solver. Ids: `bruteforce`, `icm`, `block-icm`,
/// `diffusion`, `srmp` (alias `trws`), `subgrad`, `subgrad-decomp`,
/// `alpha-exp`, `ab-swap`, `qpbo`, `mincut`; a `+icm` suffix appends an
/// ICM clean-up pass to the rounding.
pub fn run_solver(model: &GraphicalModel, solver: &str, opts: &RunOptions) -> Result<RunResult> {
    let (base, post_icm) = match solver.strip_suffix("+icm") {
        Some(base) => (base, true),
        None => (solver, false),
    };
    let mut result = dispatch(model, base, opts)?;
    if post_icm {
        if let Some(y) = result.labeling.take() {
            let improved = icm(model, &y, opts.iterations.max(1))?;
            let (y, e) = verified(model, improved, None)?;
            result.labeling = Some(y);
            result.energy = Some(e);
        }
    }
    if let (Some(e), Some(_)) = (result.energy, result.labeling.as_ref()) {
        if result.trace.rows.is_empty() {
            result.trace.push(TraceRow {
                iter: 1,
                seconds: 0.0,
                dual: result.dual_bound.unwrap_or(f64::NEG_INFINITY),
                primal_best: Some(e),
                epsilon: None,
            });
        }
    }
    Ok(result)
}

fn dispatch(model: &GraphicalModel, solver: &str, opts: &RunOptions) -> Result<RunResult> {
    match solver {
        "bruteforce" => {
            let (e, y, _) = brute_force(model, opts.brute_force_cap, false)?;
            let (y, e) = verified(model, y, Some(e))?;
            let mut trace = SolverTrace::default();
            trace.push(TraceRow {
                iter: 1,
                seconds: 0.0,
                dual: e,
                primal_best: Some(e),
                epsilon: None,
            });
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: Some(e), trace })
        }
        "icm" => {
            let y0 = naive_start(model);
            let y = icm(model, &y0, opts.iterations)?;
            let (y, e) = verified(model, y, None)?;
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: None, trace: SolverTrace::default() })
        }
        "block-icm" => {
            let y0 = naive_start(model);
            let schedule = default_blocks(model)?;
            let y = block_icm(model, &y0, &schedule, opts.iterations)?;
            let (y, e) = verified(model, y, None)?;
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: None, trace: SolverTrace::default() })
        }
        "diffusion" => {
            let weights = match opts.weights.as_str() {
                "cmp" => DiffusionWeights::convex_message_passing(model),
                _ => DiffusionWeights::min_sum(model),
            };
            let run = run_diffusion(model, &weights, &solver_options(model, opts))?;
            let (labeling, energy) = match run.best {
                Some((e, y)) => {
                    let (y, e) = verified(model, y, Some(e))?;
                    (Some(y), Some(e))
                }
                None => (None, None),
            };
            Ok(RunResult { labeling, energy, dual_bound: run.trace.last_dual(), trace: run.trace })
        }
        "srmp" | "trws" => {
            let order = node_order(model, opts);
            let counts = match opts.weights.as_str() {
                "edges" => edge_chain_counts(model),
                _ => chain_counts(model, &order)?,
            };
            let run = run_srmp(model, &counts, &order, &solver_options(model, opts))?;
            let (labeling, energy) = match run.best {
                Some((e, y)) => {
                    let (y, e) = verified(model, y, Some(e))?;
                    (Some(y), Some(e))
                }
                None => {
                    let y = srmp_round(model, &run.phi, &order)?;
                    let (y, e) = verified(model, y, None)?;
                    (Some(y), Some(e))
                }
            };
            Ok(RunResult { labeling, energy, dual_bound: run.trace.last_dual(), trace: run.trace })
        }
        "subgrad" => {
            let run = run_subgradient_dual(model, 0.1, -0.5, opts.iterations)?;
            let best = run.trace.rows.iter().map(|r| r.dual).fold(f64::NEG_INFINITY, f64::max);
            // Naive rounding on the best reparametrization found.
            let costs = model.reparametrize(&run.phi)?;
            let (y, e) = verified(model, round_dual(&costs), None)?;
            Ok(RunResult {
                labeling: Some(y),
                energy: Some(e),
                dual_bound: Some(best),
                trace: run.trace,
            })
        }
        "subgrad-decomp" => {
            let order = node_order(model, opts);
            let chains = maximal_monotonic_chains(model, &order);
            let slaves = chains_to_slaves(model, &chains)?;
            let weights = SplitWeights::uniform(model, &slaves);
            let deco = split_costs(model, slaves, &weights)?;
            let (_, trace, best) =
                run_subgradient_decomposition(model, deco, 0.1, -0.5, opts.iterations)?;
            Ok(RunResult { labeling: None, energy: None, dual_bound: Some(best), trace })
        }
        "alpha-exp" => {
            let y0 = naive_start(model);
            let (y, trace) =
                mincut::alpha_expansion(model, &y0, opts.iterations, mincut::MoveMode::Fusion)?;
            let (y, e) = verified(model, y, None)?;
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: None, trace })
        }
        "ab-swap" => {
            let y0 = naive_start(model);
            let (y, trace) = mincut::alpha_beta_swap(model, &y0, opts.iterations)?;
            let (y, e) = verified(model, y, None)?;
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: None, trace })
        }
        "qpbo" => {
            let q = mincut::qpbo(model)?;
            // Round the half-integral solution; integral coordinates are
            // persistent, fractional ones fall back to the argmax rule.
            let (y, e) = verified(model, round_primal(&q.mu), None)?;
            let mut trace = SolverTrace::default();
            trace.push(TraceRow {
                iter: 1,
                seconds: 0.0,
                dual: q.lower_bound,
                primal_best: Some(e),
                epsilon: None,
            });
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: Some(q.lower_bound), trace })
        }
        "mincut" => {
            let (value, y) = solve_submodular_by_cut(model)?;
            let (y, e) = verified(model, y, Some(value))?;
            let mut trace = SolverTrace::default();
            trace.push(TraceRow {
                iter: 1,
                seconds: 0.0,
                dual: e,
                primal_best: Some(e),
                epsilon: None,
            });
            Ok(RunResult { labeling: Some(y), energy: Some(e), dual_bound: Some(value), trace })
        }
        other => Err(Error::InvalidInput(format!("unknown solver '{other}'"))),
    }
}

/// Exact solve of a submodular model by reduction to min-cut, folding
/// single-label nodes first and converting multi-label inputs through
/// the level reduction.
pub fn solve_submodular_by_cut(model: &GraphicalModel) -> Result<(f64, Labeling)> {
    // Fold nodes with one label.
    let fixed_nodes: Vec<usize> =
        (0..model.node_count()).filter(|&u| model.label_count(u) == 1).collect();
    if !fixed_nodes.is_empty() {
        let labels = vec![0; fixed_nodes.len()];
        let fixed = PartialLabeling::new(fixed_nodes.clone(), labels)?;
        let (rest, map, constant) = conditional_costs(model, &fixed)?;
        let (value, sub) = solve_submodular_by_cut(&rest)?;
        let mut y = vec![0usize; model.node_count()];
        for (i, &u) in map.iter().enumerate() {
            y[u] = sub[i];
        }
        return Ok((value + constant, y));
    }
    if model.label_counts().iter().all(|&l| l == 2) {
        let graph = mincut::binary_to_cut(model)?;
        let cut = mincut::max_flow(&graph)?;
        let y = mincut::cut_to_labeling(&cut);
        return Ok((cut.value + graph.constant_offset, y));
    }
    let (binary, mapping) = mincut::multilabel_to_binary(model)?;
    let graph = mincut::binary_to_cut(&binary)?;
    let cut = mincut::max_flow(&graph)?;
    let hat = mincut::cut_to_labeling(&cut);
    Ok((cut.value + graph.constant_offset, mapping.from_binary(&hat)))
}

/// Default block schedule: grid row/column blocks when the model is a
/// grid, otherwise singleton blocks (plain ICM behaviour).
fn default_blocks(model: &GraphicalModel) -> Result<BlockSchedule> {
    if let Some((h, w)) = detect_grid(model) {
        return BlockSchedule::new(model, primal::grid_blocks(h, w));
    }
    BlockSchedule::new(model, (0..model.node_count()).map(|u| vec![u]).collect())
}

/// Recognizes a row-major grid by its edge set.
pub fn detect_grid(model: &GraphicalModel) -> Option<(usize, usize)> {
    let n = model.node_count();
    for w in 1..=n {
        if !n.is_multiple_of(w) {
            continue;
        }
        let h = n / w;
        let expected = h * (w - 1) + w * (h - 1);
        if expected != model.edge_count() {
            continue;
        }
        let ok = model.edges().iter().all(|&(u, v)| {
            let (ru, cu) = (u / w, u % w);
            let (rv, cv) = (v / w, v % w);
            (ru == rv && cv == cu + 1) || (cu == cv && rv == ru + 1)
        });
        if ok {
            return Some((h, w));
        }
    }
    None
}
