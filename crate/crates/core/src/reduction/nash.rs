use num::{Signed, Zero};

use crate::rational::{one, Q};

use super::game::{verify_wsne, BimatrixGame, MixedStrategyPair};
use super::ReductionError;

/// Largest game size [`nash_oracle`] accepts.
pub const ORACLE_MAX_N: usize = 6;

/// Solves the square system `m z = rhs`; `None` when singular.
fn solve(mut m: Vec<Vec<Q>>, mut rhs: Vec<Q>) -> Option<Vec<Q>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = one() / &m[col][col];
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] * &inv;
            for c in col..n {
                let delta = &factor * &m[col][c];
                m[r][c] -= delta;
            }
            let delta = &factor * &rhs[col];
            rhs[r] -= delta;
        }
    }
    Some((0..n).map(|i| &rhs[i] / &m[i][i]).collect())
}

/// A vertex of `{(z, v) : z >= 0, sum z = 1, payoff z <= v}`: the mixed
/// strategy, the opponent's best-response set and the strategy's support.
struct Vertex {
    z: Vec<Q>,
    best: u32,
    support: u32,
}

/// Vertices of the best-response polyhedron of the player mixing over the
/// columns of `payoff` (row `i` is the opponent's pure strategy `i`).
fn vertices(payoff: &[Vec<Q>]) -> Vec<Vertex> {
    let n = payoff.len();
    let mut out: Vec<Vertex> = Vec::new();
    // constraint c < n: payoff row c tight; c >= n: z_{c-n} = 0
    for mask in 0u32..(1 << (2 * n)) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let mut m = Vec::with_capacity(n + 1);
        let mut rhs = Vec::with_capacity(n + 1);
        for c in 0..2 * n {
            if mask & (1 << c) == 0 {
                continue;
            }
            let mut row = vec![Q::zero(); n + 1];
            if c < n {
                row[..n].clone_from_slice(&payoff[c]);
                row[n] = -one();
            } else {
                row[c - n] = one();
            }
            m.push(row);
            rhs.push(Q::zero());
        }
        let mut total = vec![one(); n + 1];
        total[n] = Q::zero();
        m.push(total);
        rhs.push(one());
        let Some(sol) = solve(m, rhs) else { continue };
        let (z, v) = sol.split_at(n);
        if z.iter().any(|e| e.is_negative()) {
            continue;
        }
        let pay: Vec<Q> = payoff
            .iter()
            .map(|r| r.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect();
        if pay.iter().any(|p| p > &v[0]) {
            continue;
        }
        if out.iter().any(|w| w.z == z) {
            continue;
        }
        let best = (0..n).filter(|&i| pay[i] == v[0]).fold(0, |a, i| a | 1 << i);
        let support = (0..n).filter(|&j| z[j].is_positive()).fold(0, |a, j| a | 1 << j);
        out.push(Vertex {
            z: z.to_vec(),
            best,
            support,
        });
    }
    out
}

/// Exact Nash equilibrium of a small game by vertex enumeration. Extreme
/// equilibria are pairs of vertices of the two best-response polyhedra, so
/// this covers degenerate games too. The first pair in enumeration order wins.
pub fn nash_oracle(game: &BimatrixGame) -> Result<MixedStrategyPair, ReductionError> {
    game.check_shape()?;
    if game.n > ORACLE_MAX_N {
        return Err(ReductionError::OracleGuard {
            n: game.n,
            limit: ORACLE_MAX_N,
        });
    }
    let ys = vertices(&game.a);
    let xs = vertices(&game.b_columns());
    for x in &xs {
        for y in &ys {
            if x.support & !y.best == 0 && y.support & !x.best == 0 {
                let pair = MixedStrategyPair::new(x.z.clone(), y.z.clone());
                if !verify_wsne(game, &pair, &Q::zero())?.passed {
                    return Err(ReductionError::Postcondition(
                        "oracle output is not an exact equilibrium".into(),
                    ));
                }
                return Ok(pair);
            }
        }
    }
    Err(ReductionError::NoEquilibrium)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn matrix(rows: &[&[i64]]) -> Vec<Vec<Q>> {
        rows.iter()
            .map(|r| r.iter().map(|&v| qi(v)).collect())
            .collect()
    }

    #[test]
    fn matching_pennies() {
        let a = matrix(&[&[1, -1], &[-1, 1]]);
        let b = matrix(&[&[-1, 1], &[1, -1]]);
        let p = nash_oracle(&BimatrixGame::new(a, b).unwrap()).unwrap();
        assert_eq!(p.x, vec![q(1, 2), q(1, 2)]);
        assert_eq!(p.y, vec![q(1, 2), q(1, 2)]);
    }

    #[test]
    fn dominant_strategies() {
        let a = matrix(&[&[1, 1, 1], &[0, 0, 0], &[-1, 0, 0]]);
        let b = matrix(&[&[1, 0, 0], &[1, -1, 0], &[1, 0, -1]]);
        let p = nash_oracle(&BimatrixGame::new(a, b).unwrap()).unwrap();
        assert_eq!(p.x, vec![qi(1), qi(0), qi(0)]);
        assert_eq!(p.y, vec![qi(1), qi(0), qi(0)]);
    }

    #[test]
    fn one_by_one() {
        let g = BimatrixGame::new(vec![vec![q(-1, 3)]], vec![vec![qi(1)]]).unwrap();
        let p = nash_oracle(&g).unwrap();
        assert_eq!((p.x, p.y), (vec![qi(1)], vec![qi(1)]));
    }

    #[test]
    fn degenerate_zero_game() {
        let z = matrix(&[&[0, 0], &[0, 0]]);
        let p = nash_oracle(&BimatrixGame::new(z.clone(), z).unwrap()).unwrap();
        assert_eq!(p.x.iter().filter(|v| v.is_positive()).count(), 1);
    }

    #[test]
    fn guard() {
        let g = super::super::gen_sparse_game(7, 1).unwrap();
        assert!(matches!(nash_oracle(&g), Err(ReductionError::OracleGuard { .. })));
    }

    #[test]
    fn generated_games() {
        for seed in 0..20 {
            let g = super::super::gen_sparse_game(4, seed).unwrap();
            let p = nash_oracle(&g).unwrap();
            assert!(verify_wsne(&g, &p, &qi(0)).unwrap().passed);
        }
    }
}
