//! Seeded checks for the game-to-market constructions, shared by the
//! property tests and the acceptance runner.

use std::collections::BTreeMap;

use influence_market::equilibrium::EquilibriumCandidate;
use influence_market::market::{
    build_influence_graph, check_existence_conditions, validate_market, AllocationProfile,
    PriceVector, SupplyMode,
};
use influence_market::rational::{one, q, qi, sum};
use influence_market::reduction::{
    build_linear_market, cd_weights, expected_trader_count, extract_strategies, gen_sparse_game,
    threshold_lift, PlmPiece, PlmTrader, ReductionParams, Role, RoleMap, SeparablePLMSpec,
    DEGREE_BOUND,
};
use influence_market::Q;
use num::Zero;
use rand::Rng;

use super::{grid_q, rng};

/// Random `n x n` matrix with entries in `[-1, 1]` on a 1/4 grid.
pub fn random_matrix(r: &mut impl Rng, n: usize) -> Vec<Vec<Q>> {
    (0..n)
        .map(|_| (0..n).map(|_| grid_q(r, -4, 4, 4)).collect())
        .collect()
}

/// `A_i - A_j = 2 (C - D)` for the given rows, entry by entry.
pub fn cd_identity(a: &[Vec<Q>], i: usize, j: usize) -> Result<(), String> {
    let (c, d) = cd_weights(a, i, j).map_err(|e| e.to_string())?;
    for l in 0..a.len() {
        if !c[l].is_zero() && !d[l].is_zero() {
            return Err(format!("column {l}: both halves positive"));
        }
        if &a[i][l] - &a[j][l] != qi(2) * (&c[l] - &d[l]) {
            return Err(format!("rows {i},{j} column {l}: identity fails"));
        }
    }
    Ok(())
}

/// Count, in-degree, existence, validator and Fisher endowments of the
/// market built from a seeded sparse game.
pub fn structural_case(n: usize, seed: u64) -> Result<(), String> {
    let game = gen_sparse_game(n, seed).map_err(|e| e.to_string())?;
    let params = ReductionParams::defaults(n);
    let (market, roles) = build_linear_market(&game, &params).map_err(|e| e.to_string())?;
    if market.trader_count() != expected_trader_count(n) || roles.roles.len() != market.trader_count() {
        return Err(format!("n={n}: {} traders", market.trader_count()));
    }
    let degree = build_influence_graph(&market).max_in_degree();
    if degree > DEGREE_BOUND {
        return Err(format!("n={n}: in-degree {degree}"));
    }
    if !check_existence_conditions(&market).holds() {
        return Err(format!("n={n}: existence conditions fail"));
    }
    let diags = validate_market(&market, SupplyMode::Band);
    if !diags.is_empty() {
        return Err(format!("n={n}: {:?}", diags[0]));
    }
    for t in market.traders() {
        let want = if t.id == "T" { one() } else { params.alpha.clone() };
        if t.endowment.iter().any(|w| *w != want) {
            return Err(format!("n={n}: {} is not endowed ({want}, {want})", t.id));
        }
    }
    Ok(())
}

/// Unscaled slopes of each role, written straight from the construction:
/// `T (1, 1)`, `X_i (1+g, 1+a_i1)`, `Y_i (1+g, 1+b_i1)`,
/// `U_ij (1 + D.y, 1 + beta + C.y)`, `V_ij` the same over columns of `B` and
/// `x`, and the chains `(1 + next + signal, 1+g)` ending in two signals.
pub fn raw_slopes(
    role: Role,
    n: usize,
    a: &[Vec<Q>],
    b: &[Vec<Q>],
    params: &ReductionParams,
    g1: &dyn Fn(Role) -> Q,
) -> [Q; 2] {
    let (beta, gamma) = (&params.beta, &params.gamma);
    let others = |i: usize| (1..=n).filter(move |&j| j != i).collect::<Vec<_>>();
    let half_diffs = |vi: Vec<Q>, vj: Vec<Q>| {
        let c: Vec<Q> = vi.iter().zip(&vj).map(|(x, y)| if x > y { (x - y) / qi(2) } else { qi(0) }).collect();
        let d: Vec<Q> = vi.iter().zip(&vj).map(|(x, y)| if y > x { (y - x) / qi(2) } else { qi(0) }).collect();
        (c, d)
    };
    let dotv = |w: &[Q], var: &dyn Fn(usize) -> Role| -> Q {
        w.iter().enumerate().map(|(l, c)| c * g1(var(l + 1))).sum()
    };
    match role {
        Role::T => [one(), one()],
        Role::X { i } => [one() + gamma, one() + g1(Role::A { i, k: 1 })],
        Role::Y { i } => [one() + gamma, one() + g1(Role::B { i, k: 1 })],
        Role::U { i, j } => {
            let (c, d) = half_diffs(a[i - 1].clone(), a[j - 1].clone());
            let y = |l| Role::Y { i: l };
            [one() + dotv(&d, &y), one() + beta + dotv(&c, &y)]
        }
        Role::V { i, j } => {
            let col = |k: usize| (0..n).map(|l| b[l][k - 1].clone()).collect::<Vec<_>>();
            let (c, d) = half_diffs(col(i), col(j));
            let x = |l| Role::X { i: l };
            [one() + dotv(&d, &x), one() + beta + dotv(&c, &x)]
        }
        Role::A { i, k } | Role::B { i, k } => {
            let is_a = matches!(role, Role::A { .. });
            let chain = |k| if is_a { Role::A { i, k } } else { Role::B { i, k } };
            let signal = |j| if is_a { Role::U { i, j } } else { Role::V { i, j } };
            let js = others(i);
            let first = if k == n - 2 {
                g1(signal(js[n - 3])) + g1(signal(js[n - 2]))
            } else {
                g1(chain(k + 1)) + g1(signal(js[k - 1]))
            };
            [one() + first, one() + gamma]
        }
    }
}

/// Effective slopes of every built trader are `scale` times the unscaled
/// slopes at a random G1 profile (ratios agree, the factor is uniform).
pub fn scaling_case(n: usize, seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let game = gen_sparse_game(n, seed).map_err(|e| e.to_string())?;
    let params = ReductionParams::defaults(n);
    let (market, roles) = build_linear_market(&game, &params).map_err(|e| e.to_string())?;
    let dense: Vec<Vec<Q>> = (0..market.trader_count())
        .map(|_| vec![grid_q(&mut r, 0, 16, 16), grid_q(&mut r, 0, 16, 16)])
        .collect();
    let g1 = |role: Role| {
        let k = market.index_of(roles.id_of(role).unwrap()).unwrap();
        dense[k][0].clone()
    };
    for (id, role) in &roles.roles {
        let k = market.index_of(id).unwrap();
        let segs = market.segments_of(k, &dense).map_err(|e| e.to_string())?;
        let built = [segs[0][0].slope.clone(), segs[1][0].slope.clone()];
        let raw = raw_slopes(*role, n, &game.a, &game.b, &params, &g1);
        if &built[0] * &raw[1] != &built[1] * &raw[0] {
            return Err(format!("{id}: slope ratio {}:{} vs {}:{}", built[0], built[1], raw[0], raw[1]));
        }
        if &built[0] / &raw[0] != params.scale {
            return Err(format!("{id}: scale factor {}", &built[0] / &raw[0]));
        }
    }
    Ok(())
}

/// Role map holding only the strategy traders `X1..Xn`, `Y1..Yn`.
pub fn strategy_roles(n: usize) -> RoleMap {
    let mut roles = BTreeMap::new();
    for i in 1..=n {
        roles.insert(Role::X { i }.trader_id(), Role::X { i });
        roles.insert(Role::Y { i }.trader_id(), Role::Y { i });
    }
    RoleMap { n, roles }
}

/// Candidate whose `X_i`/`Y_i` hold `x_i`/`y_i` of good 1 and nothing else.
pub fn strategy_candidate(x: &[Q], y: &[Q]) -> EquilibriumCandidate {
    let mut profile = AllocationProfile::new();
    for (i, (xi, yi)) in x.iter().zip(y).enumerate() {
        profile.insert(Role::X { i: i + 1 }.trader_id(), vec![xi.clone(), qi(0)]);
        profile.insert(Role::Y { i: i + 1 }.trader_id(), vec![yi.clone(), qi(0)]);
    }
    EquilibriumCandidate::new(PriceVector::uniform(2), profile)
}

/// Hand rounding: zero entries below `tau`, divide by what is left.
pub fn hand_round(v: &[Q], tau: &Q) -> Option<Vec<Q>> {
    let mut kept = Vec::new();
    let mut total = qi(0);
    for e in v {
        let e = if e < tau { qi(0) } else { e.clone() };
        total += &e;
        kept.push(e);
    }
    if total == qi(0) {
        return None;
    }
    Some(kept.iter().map(|e| e / &total).collect())
}

/// Random allocation-scale vector: entries on a fine grid, total at most 1,
/// some of them below `tau`.
pub fn random_strategy_vector(r: &mut impl Rng, n: usize, tau: &Q) -> Vec<Q> {
    (0..n)
        .map(|_| match r.gen_range(0..4) {
            0 => qi(0),
            1 => tau * grid_q(r, 0, 7, 8),
            2 => tau.clone(),
            _ => grid_q(r, 1, 32, 32 * n as i64),
        })
        .collect()
}

/// Extraction against [`hand_round`]: exact match, lands in the simplex,
/// idempotent, and degenerate exactly when every entry is below `tau`.
pub fn extraction_case(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.gen_range(3..=6);
    let tau = q(1, r.gen_range(8..=64));
    let x = random_strategy_vector(&mut r, n, &tau);
    let y = random_strategy_vector(&mut r, n, &tau);
    let roles = strategy_roles(n);
    let got = extract_strategies(&roles, &strategy_candidate(&x, &y), &tau);
    match (hand_round(&x, &tau), hand_round(&y, &tau), got) {
        (Some(hx), Some(hy), Ok(pair)) => {
            if pair.x != hx || pair.y != hy {
                return Err(format!("seed {seed}: extraction differs from hand rounding"));
            }
            for v in [&pair.x, &pair.y] {
                if sum(v) != one() || v.iter().any(|e| *e < qi(0)) {
                    return Err(format!("seed {seed}: output not a distribution"));
                }
            }
            let again = extract_strategies(&roles, &strategy_candidate(&pair.x, &pair.y), &tau)
                .map_err(|e| e.to_string())?;
            if again != pair {
                return Err(format!("seed {seed}: extraction is not idempotent"));
            }
            Ok(())
        }
        (None, _, Err(_)) | (_, None, Err(_)) => Ok(()),
        (hx, hy, got) => Err(format!(
            "seed {seed}: hand degenerate ({}, {}) but extraction gave {got:?}",
            hx.is_none(),
            hy.is_none()
        )),
    }
}

/// Random separable piecewise-linear trader over `h` goods with breakpoints
/// in `[0, 1/n^4]` on a fine grid.
pub fn random_plm_trader(r: &mut impl Rng, id: &str, h: usize, n: usize) -> PlmTrader {
    let n4 = (n as i64).pow(4);
    let pieces = (0..h)
        .map(|_| {
            if r.gen_bool(0.2) {
                return None;
            }
            let a = grid_q(r, 1, 8, 8);
            let b = &a * grid_q(r, 1, 4, 4);
            Some(PlmPiece {
                a,
                b,
                theta: grid_q(r, 0, 4, 4 * n4),
            })
        })
        .collect();
    PlmTrader {
        id: id.into(),
        endowment: (0..h).map(|_| grid_q(r, 0, 4, 4)).collect(),
        pieces,
    }
}

/// `sum_i min(a x, a theta + b (x - theta))`, the concave piecewise form.
pub fn plm_value(t: &PlmTrader, x: &[Q]) -> Q {
    t.pieces
        .iter()
        .zip(x)
        .map(|(p, x)| match p {
            None => qi(0),
            Some(p) => {
                let steep = &p.a * x;
                let flat = &p.a * &p.theta + &p.b * (x - &p.theta);
                if steep < flat { steep } else { flat }
            }
        })
        .sum()
}

/// Lifts one random trader (`n = 3`) and compares utilities on `bundles`
/// random bundles with every companion pinned at `(1/n^4) e_i`.
pub fn lift_case(seed: u64, bundles: usize) -> Result<(), String> {
    const N: usize = 3;
    let mut r = rng(seed);
    let h = r.gen_range(1..=3);
    let trader = random_plm_trader(&mut r, "P", h, N);
    let spec = SeparablePLMSpec {
        goods: h,
        traders: vec![trader.clone()],
    };
    let (market, _) = threshold_lift(&spec, N).map_err(|e| e.to_string())?;
    let share = q(1, (N as i64).pow(4));
    let mut dense: Vec<Vec<Q>> = market
        .traders()
        .iter()
        .map(|t| {
            // a companion owns exactly its pinned bundle
            if t.id.contains('~') { t.endowment.clone() } else { vec![qi(0); h] }
        })
        .collect();
    for t in market.traders().iter().filter(|t| t.id.contains('~')) {
        if !t.endowment.contains(&share) {
            return Err(format!("seed {seed}: companion {} is not pinned at 1/n^4", t.id));
        }
    }
    let k = market.index_of("P").unwrap();
    let den = 4 * (N as i64).pow(4);
    for _ in 0..bundles {
        let x: Vec<Q> = (0..h)
            .map(|_| if r.gen_bool(0.5) { grid_q(&mut r, 0, 8, den) } else { grid_q(&mut r, 0, 2 * den, den) })
            .collect();
        dense[k] = x.clone();
        let lifted = market.utility_of(k, &x, &dense).map_err(|e| e.to_string())?;
        let original = plm_value(&trader, &x);
        if lifted != original {
            return Err(format!("seed {seed}: lifted {lifted} vs original {original} at {x:?}"));
        }
    }
    Ok(())
}
