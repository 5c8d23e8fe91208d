//! Exhaustive enumeration: the oracle every solver is tested against.

use crate::error::{Error, Result};
use crate::model::{GraphicalModel, Labeling};

/// Advances a mixed-radix counter in lexicographic order; returns false
/// once it wraps around.
pub fn advance(y: &mut [usize], radix: &[usize]) -> bool {
    for i in (0..y.len()).rev() {
        y[i] += 1;
        if y[i] < radix[i] {
            return true;
        }
        y[i] = 0;
    }
    false
}

/// Exact minimum by enumeration of all labelings in lexicographic
/// order. The returned argmin is the lexicographically first optimum.
/// Refuses when the label space exceeds `cap` states. When
/// `collect_all` is set, also returns every labeling attaining the
/// minimum exactly.
pub fn brute_force(
    model: &GraphicalModel,
    cap: f64,
    collect_all: bool,
) -> Result<(f64, Labeling, Option<Vec<Labeling>>)> {
    let states: f64 = model.label_counts().iter().map(|&l| l as f64).product();
    if states > cap {
        return Err(Error::CapExceeded { states, cap });
    }
    let mut y = vec![0usize; model.node_count()];
    let mut best = f64::INFINITY;
    let mut best_y = y.clone();
    let mut all: Vec<Labeling> = Vec::new();
    loop {
        let e = model.energy(&y)?;
        if e < best {
            best = e;
            best_y = y.clone();
            if collect_all {
                all.clear();
                all.push(y.clone());
            }
        } else if collect_all && e == best {
            all.push(y.clone());
        }
        if !advance(&mut y, model.label_counts()) {
            break;
        }
    }
    Ok((best, best_y, if collect_all { Some(all) } else { None }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generate::{example_11_34, example_8_1};
    use crate::model::GraphicalModel;

    #[test]
    fn example_8_1_optimum() {
        let m = example_8_1();
        let (e, y, _) = brute_force(&m, 1e7, false).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(y, vec![0, 0]);
    }

    #[test]
    fn example_11_34_optimum() {
        let m = example_11_34(100.0);
        let (e, y, _) = brute_force(&m, 1e7, false).unwrap();
        assert_eq!(e, 4.0);
        assert_eq!(y, vec![2, 2, 2]);
    }

    #[test]
    fn single_node() {
        let m = GraphicalModel::new(vec![4], vec![], vec![vec![3.0, 0.5, 2.0, 0.5]], vec![]).unwrap();
        let (e, y, all) = brute_force(&m, 1e7, true).unwrap();
        assert_eq!(e, 0.5);
        assert_eq!(y, vec![1]);
        assert_eq!(all.unwrap(), vec![vec![1], vec![3]]);
    }

    #[test]
    fn cap_is_enforced() {
        let m = GraphicalModel::new(vec![10, 10], vec![], vec![vec![0.0; 10]; 2], vec![]).unwrap();
        assert!(matches!(brute_force(&m, 50.0, false), Err(Error::CapExceeded { .. })));
    }
}
