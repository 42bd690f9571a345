use num::{Signed, Zero};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rational::{one, q, serde_q, sum, Q};

use super::ReductionError;

/// Most nonzero entries allowed per row or column of a sparse game.
pub const SPARSE_LINE_LIMIT: usize = 10;

/// Two-player game; `a` pays the row player, `b` the column player.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BimatrixGame {
    pub n: usize,
    #[serde(with = "serde_q::matrix")]
    pub a: Vec<Vec<Q>>,
    #[serde(with = "serde_q::matrix")]
    pub b: Vec<Vec<Q>>,
}

impl BimatrixGame {
    pub fn new(a: Vec<Vec<Q>>, b: Vec<Vec<Q>>) -> Result<Self, ReductionError> {
        let game = Self { n: a.len(), a, b };
        game.check_shape()?;
        Ok(game)
    }

    pub fn check_shape(&self) -> Result<(), ReductionError> {
        if self.n == 0 {
            return Err(ReductionError::NonSquare("game has no strategies".into()));
        }
        for (name, m) in [("A", &self.a), ("B", &self.b)] {
            if m.len() != self.n || m.iter().any(|r| r.len() != self.n) {
                return Err(ReductionError::NonSquare(format!(
                    "matrix {name} is not {0}x{0}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Row player's payoff for each pure strategy against `y`.
    pub fn row_payoffs(&self, y: &[Q]) -> Vec<Q> {
        self.a
            .iter()
            .map(|row| row.iter().zip(y).map(|(a, y)| a * y).sum())
            .collect()
    }

    /// Column player's payoff for each pure strategy against `x`.
    pub fn column_payoffs(&self, x: &[Q]) -> Vec<Q> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| &self.b[i][j] * &x[i]).sum())
            .collect()
    }

    /// `B` transposed, so column `j` of `B` becomes row `j`.
    pub fn b_columns(&self) -> Vec<Vec<Q>> {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.b[i][j].clone()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedStrategyPair {
    #[serde(with = "serde_q::vec")]
    pub x: Vec<Q>,
    #[serde(with = "serde_q::vec")]
    pub y: Vec<Q>,
}

impl MixedStrategyPair {
    pub fn new(x: Vec<Q>, y: Vec<Q>) -> Self {
        Self { x, y }
    }

    /// Errors unless both vectors are distributions of length `n`.
    pub fn check(&self, n: usize) -> Result<(), ReductionError> {
        for (name, v) in [("x", &self.x), ("y", &self.y)] {
            if v.len() != n {
                return Err(ReductionError::NotDistribution(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
            if let Some(i) = v.iter().position(|e| e.is_negative()) {
                return Err(ReductionError::NotDistribution(format!(
                    "{name}[{i}] = {} is negative",
                    v[i]
                )));
            }
            let total = sum(v);
            if total != one() {
                return Err(ReductionError::NotDistribution(format!(
                    "{name} sums to {total}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Row,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Line {
    Row,
    Column,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameViolation {
    EntryOutOfRange {
        matrix: char,
        row: usize,
        col: usize,
        #[serde(with = "serde_q")]
        value: Q,
    },
    TooManyNonzeros {
        matrix: char,
        line: Line,
        index: usize,
        count: usize,
    },
}

impl std::fmt::Display for GameViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GameViolation::EntryOutOfRange {
                matrix,
                row,
                col,
                value,
            } => write!(
                f,
                "normalized: {matrix}[{row}][{col}] = {value} is outside [-1,1]"
            ),
            GameViolation::TooManyNonzeros {
                matrix,
                line,
                index,
                count,
            } => {
                let line = match line {
                    Line::Row => "row",
                    Line::Column => "column",
                };
                write!(
                    f,
                    "sparse: {line} {index} of {matrix} has {count} nonzeros, limit {SPARSE_LINE_LIMIT}"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GameReport {
    pub violations: Vec<GameViolation>,
}

impl GameReport {
    pub fn valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists entry-range and per-line sparsity violations.
pub fn validate_game(
    game: &BimatrixGame,
    require_normalized: bool,
    require_sparse: bool,
) -> Result<GameReport, ReductionError> {
    game.check_shape()?;
    let n = game.n;
    let mut violations = Vec::new();
    for (name, m) in [('A', &game.a), ('B', &game.b)] {
        if require_normalized {
            for (row, r) in m.iter().enumerate() {
                for (col, v) in r.iter().enumerate() {
                    if v.abs() > one() {
                        violations.push(GameViolation::EntryOutOfRange {
                            matrix: name,
                            row,
                            col,
                            value: v.clone(),
                        });
                    }
                }
            }
        }
        if require_sparse {
            for i in 0..n {
                let count = m[i].iter().filter(|v| !v.is_zero()).count();
                if count > SPARSE_LINE_LIMIT {
                    violations.push(GameViolation::TooManyNonzeros {
                        matrix: name,
                        line: Line::Row,
                        index: i,
                        count,
                    });
                }
            }
            for j in 0..n {
                let count = m.iter().filter(|r| !r[j].is_zero()).count();
                if count > SPARSE_LINE_LIMIT {
                    violations.push(GameViolation::TooManyNonzeros {
                        matrix: name,
                        line: Line::Column,
                        index: j,
                        count,
                    });
                }
            }
        }
    }
    Ok(GameReport { violations })
}

/// The worst deviation found by [`verify_wsne`]: `player` puts weight on
/// `strategy` although `better` pays `margin` more.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsneOffender {
    pub player: Player,
    pub strategy: usize,
    pub better: usize,
    #[serde(with = "serde_q")]
    pub margin: Q,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WsneReport {
    pub passed: bool,
    /// Largest payoff gap between a supported strategy and the best response.
    #[serde(with = "serde_q")]
    pub worst_margin: Q,
    pub offender: Option<WsneOffender>,
}

fn worst_supported(weights: &[Q], payoffs: &[Q], player: Player) -> Option<WsneOffender> {
    let (better, best) = payoffs
        .iter()
        .enumerate()
        .fold(None::<(usize, &Q)>, |acc, (j, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((j, v)),
        })?;
    weights
        .iter()
        .zip(payoffs)
        .enumerate()
        .filter(|(_, (w, _))| w.is_positive())
        .map(|(i, (_, v))| WsneOffender {
            player,
            strategy: i,
            better,
            margin: best - v,
        })
        .fold(None, |acc: Option<WsneOffender>, o| match acc {
            Some(a) if a.margin >= o.margin => Some(a),
            _ => Some(o),
        })
}

/// Largest payoff gap over both players' supported strategies; the pair is
/// an epsilon-well-supported equilibrium exactly when this is at most epsilon.
pub fn deviation_margin(
    game: &BimatrixGame,
    pair: &MixedStrategyPair,
) -> Result<Option<WsneOffender>, ReductionError> {
    game.check_shape()?;
    pair.check(game.n)?;
    let row = worst_supported(&pair.x, &game.row_payoffs(&pair.y), Player::Row);
    let col = worst_supported(&pair.y, &game.column_payoffs(&pair.x), Player::Column);
    Ok(match (row, col) {
        (Some(r), Some(c)) => Some(if c.margin > r.margin { c } else { r }),
        (r, c) => r.or(c),
    })
}

/// Epsilon-well-supported Nash check: a strategy paying more than epsilon
/// below some alternative must get zero weight.
pub fn verify_wsne(
    game: &BimatrixGame,
    pair: &MixedStrategyPair,
    eps: &Q,
) -> Result<WsneReport, ReductionError> {
    let worst = deviation_margin(game, pair)?.expect("distributions have a support");
    let passed = worst.margin <= *eps;
    Ok(WsneReport {
        passed,
        worst_margin: worst.margin.clone(),
        offender: (!passed).then_some(worst),
    })
}

/// Splits `A_i - A_j` into its positive and negative halves:
/// `C = max(0, A_i - A_j) / 2`, `D = max(0, A_j - A_i) / 2`.
pub fn cd_weights(a: &[Vec<Q>], i: usize, j: usize) -> Result<(Vec<Q>, Vec<Q>), ReductionError> {
    if i == j {
        return Err(ReductionError::SameIndex(i));
    }
    let n = a.len();
    if i >= n || j >= n {
        return Err(ReductionError::IndexOutOfRange {
            index: i.max(j),
            n,
        });
    }
    let half = q(1, 2);
    let mut c = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for (ai, aj) in a[i].iter().zip(&a[j]) {
        let diff = ai - aj;
        if diff.is_positive() {
            c.push(&diff * &half);
            d.push(Q::zero());
        } else {
            c.push(Q::zero());
            d.push(-&diff * &half);
        }
    }
    if let Some(l) = (0..n).find(|&l| c[l] > one() || d[l] > one()) {
        return Err(ReductionError::Postcondition(format!(
            "rows {i} and {j} differ by more than 2 in column {l}; the matrix is not normalized"
        )));
    }
    debug_assert!((0..n).all(|l| &a[i][l] - &a[j][l] == (&c[l] - &d[l]) * q(2, 1)));
    Ok((c, d))
}

const ENTRY_VALUES: [(i64, i64); 6] = [(-1, 1), (-1, 2), (-1, 4), (1, 4), (1, 2), (1, 1)];

fn random_sparse_matrix(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<Q>> {
    let mut m = vec![vec![Q::zero(); n]; n];
    if n == 1 {
        m[0][0] = q(rng.gen_range(-4..=4), 4);
        return m;
    }
    // circulant support: every row and column gets the same number of entries
    let per_line = n.min(3);
    let mut offsets: Vec<usize> = (0..n).collect();
    offsets.shuffle(rng);
    for i in 0..n {
        for &d in &offsets[..per_line] {
            let (p, den) = ENTRY_VALUES[rng.gen_range(0..ENTRY_VALUES.len())];
            m[i][(i + d) % n] = q(p, den);
        }
    }
    m
}

/// Seeded normalized sparse game with at most three nonzeros per line.
pub fn gen_sparse_game(n: usize, seed: u64) -> Result<BimatrixGame, ReductionError> {
    if n == 0 {
        return Err(ReductionError::NonSquare("game has no strategies".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_sparse_matrix(&mut rng, n);
    let b = random_sparse_matrix(&mut rng, n);
    BimatrixGame::new(a, b)
}
