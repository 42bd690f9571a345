use std::cmp::Ordering;

use num::{Signed, Zero};

use crate::market::{AllocationProfile, Market, Segment};
use crate::rational::{dot, Q};

use super::EquilibriumError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BundleOutcome {
    Optimal { value: Q, bundle: Vec<Q> },
    /// A desirable good is free and nothing caps how much of it can be taken.
    Unbounded,
}

impl BundleOutcome {
    pub fn value(&self) -> Option<&Q> {
        match self {
            BundleOutcome::Optimal { value, .. } => Some(value),
            BundleOutcome::Unbounded => None,
        }
    }

    pub fn bundle(&self) -> Option<&[Q]> {
        match self {
            BundleOutcome::Optimal { bundle, .. } => Some(bundle),
            BundleOutcome::Unbounded => None,
        }
    }
}

struct Piece<'a> {
    good: usize,
    seg: usize,
    slope: &'a Q,
    cap: Option<&'a Q>,
}

/// Greedy bang-per-buck fill of separable concave pieces under one budget.
///
/// Free pieces with positive slope are taken first, then paid pieces by
/// `slope / price` descending; ties go to the lower good index, then the
/// earlier segment. `box_cap` bounds each good's total.
pub fn best_bundle(
    segments: &[Vec<Segment>],
    prices: &[Q],
    budget: &Q,
    box_cap: Option<&Q>,
) -> Result<BundleOutcome, EquilibriumError> {
    if let Some(good) = prices.iter().position(|p| p.is_negative()) {
        return Err(EquilibriumError::NegativePrice {
            good,
            value: prices[good].clone(),
        });
    }
    let h = prices.len();
    let mut free = Vec::new();
    let mut paid = Vec::new();
    for (good, segs) in segments.iter().enumerate() {
        for (seg, s) in segs.iter().enumerate() {
            if !s.slope.is_positive() {
                continue;
            }
            let piece = Piece {
                good,
                seg,
                slope: &s.slope,
                cap: s.cap.as_ref(),
            };
            if prices[good].is_zero() {
                if piece.cap.is_none() && box_cap.is_none() {
                    return Ok(BundleOutcome::Unbounded);
                }
                free.push(piece);
            } else {
                paid.push(piece);
            }
        }
    }
    paid.sort_by(|a, b| {
        // a.slope / p_a vs b.slope / p_b without division
        let lhs = a.slope * &prices[b.good];
        let rhs = b.slope * &prices[a.good];
        rhs.cmp(&lhs)
            .then(a.good.cmp(&b.good))
            .then(a.seg.cmp(&b.seg))
    });

    let mut bundle = vec![Q::zero(); h];
    let mut value = Q::zero();
    let mut remaining = budget.clone();
    let room = |piece: &Piece, used: &Q| -> Option<Q> {
        let box_room = box_cap.map(|b| {
            let r = b - used;
            if r.is_negative() {
                Q::zero()
            } else {
                r
            }
        });
        match (piece.cap, box_room) {
            (Some(c), Some(b)) => Some(if *c < b { c.clone() } else { b }),
            (Some(c), None) => Some(c.clone()),
            (None, b) => b,
        }
    };
    for piece in &free {
        let take = room(piece, &bundle[piece.good]).expect("free piece is bounded");
        value += piece.slope * &take;
        bundle[piece.good] += take;
    }
    for piece in &paid {
        if !remaining.is_positive() {
            break;
        }
        let price = &prices[piece.good];
        let affordable = &remaining / price;
        let take = match room(piece, &bundle[piece.good]) {
            Some(r) if r.cmp(&affordable) == Ordering::Less => r,
            _ => affordable,
        };
        if take.is_zero() {
            continue;
        }
        remaining -= &take * price;
        value += piece.slope * &take;
        bundle[piece.good] += take;
    }
    Ok(BundleOutcome::Optimal { value, bundle })
}

/// Index-based optimal bundle for trader `k` given everyone else's allocations.
pub fn optimal_bundle_at<A: crate::market::Allocations + ?Sized>(
    market: &Market,
    k: usize,
    prices: &[Q],
    others: &A,
    box_cap: Option<&Q>,
) -> Result<BundleOutcome, EquilibriumError> {
    let segments = market.segments_of(k, others)?;
    let budget = dot(&market.trader(k).endowment, prices);
    best_bundle(&segments, prices, &budget, box_cap)
}

/// Maximizes `u_k(x, x_{-k})` over `{x : x.p <= w_k.p, 0 <= x_i <= box_cap}`.
pub fn optimal_bundle(
    market: &Market,
    trader: &str,
    prices: &[Q],
    others: &AllocationProfile,
    box_cap: Option<&Q>,
) -> Result<BundleOutcome, EquilibriumError> {
    let k = market
        .index_of(trader)
        .ok_or_else(|| crate::market::MarketError::UnknownTrader(trader.to_string()))?;
    if prices.len() != market.good_count() {
        return Err(EquilibriumError::PriceDimension {
            got: prices.len(),
            expected: market.good_count(),
        });
    }
    optimal_bundle_at(market, k, prices, &market.dense_profile(others), box_cap)
}
