//! File formats, instance generators, the brute-force oracle and the
//! solver dispatch used by the command line.

pub mod format;
pub mod generate;
pub mod oracle;
pub mod rng;
pub mod runner;

pub use format::{parse_labeling, parse_model, write_labeling, write_model, write_trace};
pub use oracle::brute_force;
pub use runner::{run_solver, RunOptions, RunResult};

use crate::model::{is_big, GraphicalModel};

/// Replaces every BIG sentinel cost by a finite value, the standard
/// trick turning hard constraints into soft penalties (a model built
/// that way has optimum 0 exactly when the constraints are satisfiable,
/// as in the cycle reduction).
pub fn finitize(model: &GraphicalModel, replacement: f64) -> GraphicalModel {
    let mut costs = model.costs().clone();
    for c in costs.unary.iter_mut().chain(costs.pairwise.iter_mut()) {
        for x in c.iter_mut() {
            if is_big(*x) {
                *x = replacement;
            }
        }
    }
    model.with_costs(costs).expect("shape is unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BIG;

    #[test]
    fn finitize_replaces_big_entries() {
        let m = generate::example_8_7(3);
        let f = finitize(&m, 1.0);
        assert!(f.costs().pairwise.iter().flatten().all(|&x| x < BIG));
        assert_eq!(f.costs().pairwise[0][1], 1.0);
        assert_eq!(f.costs().pairwise[0][0], -1.0);
    }

    #[test]
    fn golden_corpus_roundtrips() {
        let (n, e) = generate::named_graph("k4").unwrap();
        let corpus = vec![
            generate::example_4_3(1.0),
            generate::example_4_5(3.0, 1.0),
            generate::example_8_1(),
            generate::example_8_7(5),
            generate::example_11_34(100.0),
            generate::example_9_13(),
            generate::hamiltonian(n, &e).unwrap(),
        ];
        for m in corpus {
            let text = write_model(&m);
            let back = parse_model(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(write_model(&back), text);
        }
    }
}
