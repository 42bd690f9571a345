use std::collections::BTreeMap;

use num::{BigInt, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumCandidate;
use crate::market::{
    build_influence_graph, check_existence_conditions, validate_market, LinearForm,
    LinearInfluenceUtility, Market, SupplyMode, Term, Trader, TraderId, Utility,
};
use crate::rational::{one, powi, q, serde_q, sum, Q};

use super::game::{cd_weights, validate_game, BimatrixGame, MixedStrategyPair};
use super::ReductionError;

/// Largest number of traders a built trader's utility may read.
pub const DEGREE_BOUND: usize = 20;

/// Construction constants. `scale` multiplies every slope constant and
/// influence weight so they fit in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionParams {
    pub n: usize,
    #[serde(with = "serde_q")]
    pub alpha: Q,
    #[serde(with = "serde_q")]
    pub beta: Q,
    #[serde(with = "serde_q")]
    pub gamma: Q,
    #[serde(with = "serde_q")]
    pub scale: Q,
    #[serde(with = "serde_q")]
    pub tau: Q,
}

fn inv_pow(n: usize, e: u32) -> Q {
    one() / powi(&Q::from_integer(BigInt::from(n)), e)
}

impl ReductionParams {
    /// `alpha = 1/n^3`, `beta = 1/n^10`, `gamma = 1/n^4`, `tau = 1/n^12`, `scale = 1/8`.
    pub fn defaults(n: usize) -> Self {
        Self {
            n,
            alpha: inv_pow(n, 3),
            beta: inv_pow(n, 10),
            gamma: inv_pow(n, 4),
            scale: q(1, 8),
            tau: inv_pow(n, 12),
        }
    }

    /// Constants for the constant-degree planar variant:
    /// `alpha = 1/n^9`, `beta = 1/n^16`, `gamma = 1/n^10`.
    pub fn planar_defaults(n: usize) -> Self {
        Self {
            alpha: inv_pow(n, 9),
            beta: inv_pow(n, 16),
            gamma: inv_pow(n, 10),
            ..Self::defaults(n)
        }
    }

    fn check(&self) -> Result<(), ReductionError> {
        for (name, v) in [
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("scale", &self.scale),
            ("tau", &self.tau),
        ] {
            if !v.is_positive() {
                return Err(ReductionError::BadParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// What a built trader stands for. Indices are 1-based, as in trader names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Role {
    T,
    X { i: usize },
    Y { i: usize },
    U { i: usize, j: usize },
    V { i: usize, j: usize },
    A { i: usize, k: usize },
    B { i: usize, k: usize },
}

impl Role {
    pub fn trader_id(&self) -> TraderId {
        match *self {
            Role::T => "T".into(),
            Role::X { i } => format!("X{i}"),
            Role::Y { i } => format!("Y{i}"),
            Role::U { i, j } => format!("U{i}_{j}"),
            Role::V { i, j } => format!("V{i}_{j}"),
            Role::A { i, k } => format!("A{i}_{k}"),
            Role::B { i, k } => format!("B{i}_{k}"),
        }
    }
}

/// Trader id to role, for a market built from an `n`-strategy game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub n: usize,
    pub roles: BTreeMap<TraderId, Role>,
}

impl RoleMap {
    pub fn id_of(&self, role: Role) -> Option<&str> {
        self.roles
            .iter()
            .find(|(_, r)| **r == role)
            .map(|(id, _)| id.as_str())
    }
}

/// `1 + 2n + 2n(n-1) + 2n(n-2)`.
pub fn expected_trader_count(n: usize) -> usize {
    1 + 2 * n + 2 * n * (n - 1) + 2 * n * n.saturating_sub(2)
}

/// One utility before scaling: per-good constants and forms over G1 variables.
struct RawUtility {
    constants: [Q; 2],
    forms: [Vec<(Role, Q)>; 2],
}

impl RawUtility {
    fn new(c1: Q, c2: Q) -> Self {
        Self {
            constants: [c1, c2],
            forms: [Vec::new(), Vec::new()],
        }
    }

    fn read(mut self, good: usize, source: Role, weight: Q) -> Self {
        if !weight.is_zero() {
            self.forms[good].push((source, weight));
        }
        self
    }

    fn scaled(self, s: &Q) -> Utility {
        let [c1, c2] = self.constants;
        let influence = self
            .forms
            .into_iter()
            .map(|f| {
                LinearForm::new(
                    f.into_iter()
                        .map(|(src, w)| Term::new(src.trader_id(), 0, w * s))
                        .collect(),
                )
            })
            .collect();
        Utility::Linear(LinearInfluenceUtility {
            base_slopes: vec![c1 * s, c2 * s],
            influence,
        })
    }
}

/// The other indices of `i` in increasing order (1-based).
fn others(n: usize, i: usize) -> Vec<usize> {
    (1..=n).filter(|&j| j != i).collect()
}

/// Compiles a normalized sparse game into a two-good linear-influence market.
///
/// `T` owns `(1, 1)` and everyone else `(alpha, alpha)`. `X_i` and `Y_i`
/// carry the strategies; `U_{i,j}` (`V_{i,j}`) compares rows `i, j` of `A`
/// (columns of `B`) against the `y` (`x`) variables; the chains `A_{i,k}`
/// (`B_{i,k}`) OR the `U_{i,.}` (`V_{i,.}`) signals into `X_i` (`Y_i`).
pub fn build_linear_market(
    game: &BimatrixGame,
    params: &ReductionParams,
) -> Result<(Market, RoleMap), ReductionError> {
    params.check()?;
    let n = game.n;
    if n < 3 {
        return Err(ReductionError::TooSmall { n });
    }
    if params.n != n {
        return Err(ReductionError::BadParams(format!(
            "parameters are for n = {}, game has n = {n}",
            params.n
        )));
    }
    let report = validate_game(game, true, true)?;
    if let Some(v) = report.violations.first() {
        return Err(ReductionError::GameInvalid(v.to_string()));
    }
    let (alpha, beta, gamma, s) = (&params.alpha, &params.beta, &params.gamma, &params.scale);
    let largest = one() + if beta > gamma { beta } else { gamma };
    if &largest * s > one() {
        return Err(ReductionError::BadParams(format!(
            "scale {s} leaves slope constant {largest} above 1"
        )));
    }
    let b_cols = game.b_columns();
    let mut raw: Vec<(Role, RawUtility)> = vec![(Role::T, RawUtility::new(one(), one()))];
    for i in 1..=n {
        raw.push((
            Role::X { i },
            RawUtility::new(one() + gamma, one()).read(1, Role::A { i, k: 1 }, one()),
        ));
        raw.push((
            Role::Y { i },
            RawUtility::new(one() + gamma, one()).read(1, Role::B { i, k: 1 }, one()),
        ));
        for j in others(n, i) {
            let (c, d) = cd_weights(&game.a, i - 1, j - 1)?;
            let mut u = RawUtility::new(one(), one() + beta);
            for l in 1..=n {
                u = u
                    .read(0, Role::Y { i: l }, d[l - 1].clone())
                    .read(1, Role::Y { i: l }, c[l - 1].clone());
            }
            raw.push((Role::U { i, j }, u));
            let (c, d) = cd_weights(&b_cols, i - 1, j - 1)?;
            let mut v = RawUtility::new(one(), one() + beta);
            for l in 1..=n {
                v = v
                    .read(0, Role::X { i: l }, d[l - 1].clone())
                    .read(1, Role::X { i: l }, c[l - 1].clone());
            }
            raw.push((Role::V { i, j }, v));
        }
        let js = others(n, i);
        for k in 1..=n - 2 {
            let chain = |link: fn(usize, usize) -> Role, signal: fn(usize, usize) -> Role| {
                let u = RawUtility::new(one(), one() + gamma);
                if k == n - 2 {
                    u.read(0, signal(i, js[n - 3]), one())
                        .read(0, signal(i, js[n - 2]), one())
                } else {
                    u.read(0, link(i, k + 1), one())
                        .read(0, signal(i, js[k - 1]), one())
                }
            };
            raw.push((
                Role::A { i, k },
                chain(|i, k| Role::A { i, k }, |i, j| Role::U { i, j }),
            ));
            raw.push((
                Role::B { i, k },
                chain(|i, k| Role::B { i, k }, |i, j| Role::V { i, j }),
            ));
        }
    }

    let mut roles = BTreeMap::new();
    let traders: Vec<Trader> = raw
        .into_iter()
        .map(|(role, u)| {
            let id = role.trader_id();
            roles.insert(id.clone(), role);
            let w = if role == Role::T {
                vec![one(), one()]
            } else {
                vec![alpha.clone(), alpha.clone()]
            };
            Trader::new(id, w, u.scaled(s))
        })
        .collect();
    let market = Market::new(2, traders)?;

    let count = market.trader_count();
    if count != expected_trader_count(n) {
        return Err(ReductionError::Postcondition(format!(
            "built {count} traders, expected {}",
            expected_trader_count(n)
        )));
    }
    let degree = build_influence_graph(&market).max_in_degree();
    if degree > DEGREE_BOUND {
        return Err(ReductionError::Postcondition(format!(
            "influence in-degree {degree} exceeds {DEGREE_BOUND}"
        )));
    }
    if !check_existence_conditions(&market).holds() {
        return Err(ReductionError::Postcondition(
            "existence conditions fail".into(),
        ));
    }
    if let Some(d) = validate_market(&market, SupplyMode::Band).first() {
        return Err(ReductionError::Postcondition(format!("built market is invalid: {d}")));
    }
    Ok((market, RoleMap { n, roles }))
}

/// Zeroes entries below `tau` and rescales the rest to sum to 1.
pub fn round_and_normalize(v: &[Q], tau: &Q) -> Option<Vec<Q>> {
    let kept: Vec<Q> = v
        .iter()
        .map(|e| if e < tau { Q::zero() } else { e.clone() })
        .collect();
    let total = sum(&kept);
    if total.is_zero() {
        return None;
    }
    Some(kept.into_iter().map(|e| e / &total).collect())
}

/// Reads `x_i` and `y_i` (the G1 allocations of `X_i` and `Y_i`) from the
/// candidate, drops entries below `tau` and normalizes each vector.
pub fn extract_strategies(
    roles: &RoleMap,
    cand: &EquilibriumCandidate,
    tau: &Q,
) -> Result<MixedStrategyPair, ReductionError> {
    let read = |role: fn(usize) -> Role| -> Result<Vec<Q>, ReductionError> {
        (1..=roles.n)
            .map(|i| {
                let r = role(i);
                let id = roles
                    .id_of(r)
                    .ok_or_else(|| ReductionError::MissingRole(r.trader_id()))?;
                let bundle = cand
                    .profile
                    .get(id)
                    .ok_or_else(|| ReductionError::MissingRole(id.to_string()))?;
                Ok(bundle[0].clone())
            })
            .collect()
    };
    let x = read(|i| Role::X { i })?;
    let y = read(|i| Role::Y { i })?;
    let x = round_and_normalize(&x, tau).ok_or(ReductionError::DegenerateExtraction("x"))?;
    let y = round_and_normalize(&y, tau).ok_or(ReductionError::DegenerateExtraction("y"))?;
    Ok(MixedStrategyPair::new(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{AllocationProfile, PriceVector};
    use crate::rational::qi;
    use crate::reduction::gen_sparse_game;

    #[test]
    fn three_strategy_market() {
        let g = gen_sparse_game(3, 7).unwrap();
        let (m, roles) = build_linear_market(&g, &ReductionParams::defaults(3)).unwrap();
        assert_eq!(m.trader_count(), 25);
        assert_eq!(roles.roles.len(), 25);
        for s in m.supply() {
            assert_eq!(s, one() + q(24, 27));
        }
    }

    #[test]
    fn u_reads_only_differing_columns() {
        let g = gen_sparse_game(5, 2).unwrap();
        let (m, _) = build_linear_market(&g, &ReductionParams::defaults(5)).unwrap();
        let k = m.index_of("U1_2").unwrap();
        let differing: Vec<String> = (0..5)
            .filter(|&l| g.a[0][l] != g.a[1][l])
            .map(|l| format!("Y{}", l + 1))
            .collect();
        for f in m.trader(k).utility.forms() {
            for t in &f.terms {
                assert!(differing.contains(&t.trader));
                assert_eq!(t.good, 0);
            }
        }
        assert!(differing.len() <= DEGREE_BOUND);
    }

    #[test]
    fn chain_wiring_for_first_row() {
        let g = gen_sparse_game(4, 1).unwrap();
        let (m, _) = build_linear_market(&g, &ReductionParams::defaults(4)).unwrap();
        let sources = |id: &str| -> Vec<String> {
            let k = m.index_of(id).unwrap();
            m.trader(k).utility.forms()[0]
                .terms
                .iter()
                .map(|t| t.trader.clone())
                .collect()
        };
        assert_eq!(sources("A1_1"), vec!["A1_2", "U1_2"]);
        assert_eq!(sources("A1_2"), vec!["U1_3", "U1_4"]);
        assert_eq!(sources("A3_1"), vec!["A3_2", "U3_1"]);
        assert_eq!(sources("A3_2"), vec!["U3_2", "U3_4"]);
        assert_eq!(sources("B2_2"), vec!["V2_3", "V2_4"]);
    }

    #[test]
    fn small_games_rejected() {
        let g = gen_sparse_game(2, 0).unwrap();
        assert!(matches!(
            build_linear_market(&g, &ReductionParams::defaults(2)),
            Err(ReductionError::TooSmall { n: 2 })
        ));
    }

    #[test]
    fn rounding_example() {
        let tau = one() / powi(&qi(3), 12);
        let x = vec![q(2, 5), q(1, 10_000_000), q(1, 5)];
        assert_eq!(
            round_and_normalize(&x, &tau).unwrap(),
            vec![q(2, 3), qi(0), q(1, 3)]
        );
        assert_eq!(
            round_and_normalize(&[q(1, 4), q(1, 4)], &q(1, 8)).unwrap(),
            vec![q(1, 2), q(1, 2)]
        );
        assert!(round_and_normalize(&[q(1, 9), q(1, 10)], &q(1, 8)).is_none());
    }

    #[test]
    fn extraction_reads_x_and_y() {
        let g = gen_sparse_game(3, 4).unwrap();
        let (m, roles) = build_linear_market(&g, &ReductionParams::defaults(3)).unwrap();
        let mut profile = AllocationProfile::new();
        for id in m.ids() {
            profile.insert(id, vec![qi(0), qi(0)]);
        }
        for (i, v) in [q(1, 5), q(1, 5), q(2, 5)].into_iter().enumerate() {
            profile.insert(format!("X{}", i + 1), vec![v.clone(), qi(0)]);
            profile.insert(format!("Y{}", i + 1), vec![v, qi(0)]);
        }
        let cand = EquilibriumCandidate::new(PriceVector::uniform(2), profile.clone());
        let pair = extract_strategies(&roles, &cand, &q(1, 100)).unwrap();
        assert_eq!(pair.x, vec![q(1, 4), q(1, 4), q(1, 2)]);
        profile.insert("Y2", vec![qi(0), qi(0)]);
        profile.insert("Y1", vec![qi(0), qi(0)]);
        profile.insert("Y3", vec![q(1, 1000), qi(0)]);
        let cand = EquilibriumCandidate::new(PriceVector::uniform(2), profile);
        assert!(matches!(
            extract_strategies(&roles, &cand, &q(1, 100)),
            Err(ReductionError::DegenerateExtraction("y"))
        ));
    }
}
