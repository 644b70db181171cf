//! Small dense linear programming: a tableau simplex with Bland's rule and
//! an exhaustive vertex enumeration for tiny instances. Both solve
//!
//! ```text
//! maximize cᵀx   subject to   A x = b,  x ≥ 0
//! ```
//!
//! and expect `b ≥ 0`. The simplex entry point takes an initial basis whose
//! columns form the identity, which the transport LPs constructed in this
//! crate always have (one column per atom mapped to itself, plus the budget
//! slack).

use crate::error::{Error, Result};
use crate::scalar::Real;

const PIVOT_TOL: f64 = 1e-12;

pub(crate) struct StandardLp<R> {
    pub objective: Vec<R>,
    pub constraints: Vec<Vec<R>>,
    pub rhs: Vec<R>,
}

impl<R: Real> StandardLp<R> {
    fn dims(&self) -> (usize, usize) {
        (self.constraints.len(), self.objective.len())
    }
}

/// Tableau simplex (maximization) starting from an identity basis.
pub(crate) fn simplex_max<R: Real>(lp: &StandardLp<R>, basis: Vec<usize>) -> Result<R> {
    let (m, n) = lp.dims();
    let tol = R::of(PIVOT_TOL);
    let mut tableau: Vec<Vec<R>> = lp.constraints.clone();
    let mut xb: Vec<R> = lp.rhs.clone();
    let mut basis = basis;
    debug_assert_eq!(basis.len(), m);

    let max_iters = 10_000 * (n + m);
    for _ in 0..max_iters {
        // reduced costs r_j = c_j - c_B^T T_j; Bland: smallest improving j
        let mut entering = None;
        'cols: for j in 0..n {
            if basis.contains(&j) {
                continue;
            }
            let mut r = lp.objective[j];
            for i in 0..m {
                r = r - lp.objective[basis[i]] * tableau[i][j];
            }
            if r > tol {
                entering = Some(j);
                break 'cols;
            }
        }
        let Some(j) = entering else {
            let value = (0..m).map(|i| lp.objective[basis[i]] * xb[i]).sum();
            return Ok(value);
        };

        // ratio test; ties resolved by the smallest basis index (Bland)
        let mut leaving: Option<usize> = None;
        let mut best_ratio = R::infinity();
        for i in 0..m {
            if tableau[i][j] > tol {
                let ratio = xb[i] / tableau[i][j];
                let better = match leaving {
                    None => true,
                    Some(prev) => {
                        ratio < best_ratio - tol
                            || (ratio < best_ratio + tol && basis[i] < basis[prev])
                    }
                };
                if better {
                    best_ratio = ratio.min(best_ratio);
                    leaving = Some(i);
                }
            }
        }
        let Some(r) = leaving else {
            return Err(Error::NonFinite {
                what: "unbounded transport linear program".into(),
            });
        };

        // pivot on (r, j)
        let pivot = tableau[r][j];
        for col in 0..n {
            tableau[r][col] = tableau[r][col] / pivot;
        }
        xb[r] = xb[r] / pivot;
        for i in 0..m {
            if i != r {
                let factor = tableau[i][j];
                if factor != R::zero() {
                    for col in 0..n {
                        let delta = factor * tableau[r][col];
                        tableau[i][col] = tableau[i][col] - delta;
                    }
                    xb[i] = xb[i] - factor * xb[r];
                    if xb[i] < R::zero() && xb[i] > -tol {
                        xb[i] = R::zero();
                    }
                }
            }
        }
        basis[r] = j;
    }
    Err(Error::NonFinite {
        what: "simplex iteration cap exceeded".into(),
    })
}

/// Exhaustive enumeration of basic feasible solutions; exact on tiny LPs.
pub(crate) fn vertex_enumeration_max<R: Real>(lp: &StandardLp<R>) -> Result<R> {
    let (m, n) = lp.dims();
    if n < m {
        return Err(Error::Empty("vertex enumeration: fewer columns than rows"));
    }
    let mut best: Option<R> = None;
    let mut combo: Vec<usize> = (0..m).collect();
    loop {
        if let Some(xb) = solve_basis(lp, &combo) {
            if xb.iter().all(|&v| v >= R::of(-1e-9)) {
                let value = combo
                    .iter()
                    .zip(xb.iter())
                    .map(|(&j, &v)| lp.objective[j] * v.max(R::zero()))
                    .sum();
                best = Some(match best {
                    None => value,
                    Some(b) => b.max(value),
                });
            }
        }
        if !next_combination(&mut combo, n) {
            break;
        }
    }
    best.ok_or(Error::Empty("no feasible basis"))
}

fn solve_basis<R: Real>(lp: &StandardLp<R>, combo: &[usize]) -> Option<Vec<R>> {
    let m = lp.constraints.len();
    let mut a: Vec<Vec<R>> = (0..m)
        .map(|i| combo.iter().map(|&j| lp.constraints[i][j]).collect())
        .collect();
    let mut b: Vec<R> = lp.rhs.clone();
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let mut pivot_row = col;
        let mut pivot_mag = a[col][col].abs();
        for row in (col + 1)..m {
            if a[row][col].abs() > pivot_mag {
                pivot_mag = a[row][col].abs();
                pivot_row = row;
            }
        }
        if pivot_mag < R::of(PIVOT_TOL) {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..m {
            let factor = a[row][col] / a[col][col];
            if factor != R::zero() {
                for k in col..m {
                    let delta = factor * a[col][k];
                    a[row][k] = a[row][k] - delta;
                }
                b[row] = b[row] - factor * b[col];
            }
        }
    }
    let mut x = vec![R::zero(); m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for k in (row + 1)..m {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let m = combo.len();
    let mut i = m;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (m - i) {
            combo[i] += 1;
            for k in (i + 1)..m {
                combo[k] = combo[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    // transport-shaped LP: atoms x nodes moves plus a budget slack
    fn transport_lp(
        weights: &[f64],
        gains: &[f64],
        costs: &[Vec<f64>],
        rho: f64,
    ) -> (StandardLp<f64>, Vec<usize>) {
        let atoms = weights.len();
        let nodes = gains.len();
        let n = atoms * nodes + 1;
        let mut objective = vec![0.0; n];
        let mut constraints = vec![vec![0.0; n]; atoms + 1];
        for i in 0..atoms {
            for j in 0..nodes {
                objective[i * nodes + j] = gains[j];
                constraints[i][i * nodes + j] = 1.0;
                constraints[atoms][i * nodes + j] = costs[i][j];
            }
        }
        constraints[atoms][n - 1] = 1.0;
        let mut rhs = weights.to_vec();
        rhs.push(rho);
        // identity start: each atom stays on its zero-cost column
        let mut basis: Vec<usize> = (0..atoms)
            .map(|i| {
                let j = costs[i].iter().position(|&c| c == 0.0).unwrap();
                i * nodes + j
            })
            .collect();
        basis.push(n - 1);
        (StandardLp { objective, constraints, rhs }, basis)
    }

    #[test]
    fn simplex_matches_hand_solution() {
        // single atom at node 0, can move to node 1 (gain 1, cost 1): with
        // rho = 0.25 the best is to move a 0.25 fraction
        let (lp, basis) = transport_lp(&[1.0], &[0.0, 1.0], &[vec![0.0, 1.0]], 0.25);
        let v = simplex_max(&lp, basis).unwrap();
        assert!((v - 0.25).abs() < 1e-12);
    }

    #[test]
    fn vertex_and_simplex_agree_on_random_instances() {
        let mut rng = StdRng::seed_from_u64(5150);
        for _ in 0..200 {
            let atoms = rng.random_range(1..=3usize);
            let nodes = rng.random_range(2..=4usize);
            let mut weights: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let gains: Vec<f64> = (0..nodes).map(|_| rng.random_range(-1.0..1.0)).collect();
            let costs: Vec<Vec<f64>> = (0..atoms)
                .map(|i| {
                    (0..nodes)
                        .map(|j| {
                            if j == i % nodes {
                                0.0
                            } else {
                                rng.random_range(0.05..2.0)
                            }
                        })
                        .collect()
                })
                .collect();
            let rho = rng.random_range(0.0..1.5);
            let (lp, basis) = transport_lp(&weights, &gains, &costs, rho);
            let s = simplex_max(&lp, basis).unwrap();
            let v = vertex_enumeration_max(&lp).unwrap();
            assert!(
                (s - v).abs() < 1e-8,
                "simplex {s} vs vertex enumeration {v}"
            );
        }
    }

    #[test]
    fn budget_zero_forces_stay() {
        let (lp, basis) = transport_lp(&[0.4, 0.6], &[0.2, 1.0], &[vec![0.0, 1.0], vec![1.0, 0.0]], 0.0);
        let v = simplex_max(&lp, basis).unwrap();
        // atom 0 stuck at node 0 (gain 0.2), atom 1 at node 1 (gain 1.0)
        assert!((v - (0.4 * 0.2 + 0.6 * 1.0)).abs() < 1e-12);
    }

    #[test]
    fn large_budget_reaches_best_node() {
        let (lp, basis) = transport_lp(&[1.0], &[0.1, 0.9, 0.5], &[vec![0.0, 2.0, 1.0]], 10.0);
        let v = simplex_max(&lp, basis).unwrap();
        assert!((v - 0.9).abs() < 1e-12);
    }
}
