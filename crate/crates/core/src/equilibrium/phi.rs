//! The price/allocation correspondence from the existence argument, made
//! computable by fixing canonical selections.
//!
//! The domain is `[0, 11/10]^{hm} x P` with
//! `P = { p : sum p = 1, p_i >= c }`. One step maps a point to
//! (a) a price vector maximizing `x . p'` over `P`, where `x` is aggregate
//! demand, and (b) every trader's optimal bundle in the box under the *old*
//! prices and the *old* allocations of everyone else.

use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::market::{AllocationProfile, Market, PriceVector};
use crate::rational::{linf, max_q, one, pow2, q, qi, serde_q, sum, Q};

use super::bundle::optimal_bundle_at;
use super::verify::EquilibriumCandidate;
use super::EquilibriumError;

/// Upper end of every allocation coordinate in the domain.
pub fn box_cap() -> Q {
    q(11, 10)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhiConstants {
    pub l: u32,
    /// Price floor `c = 1 / (m * 2^(3mL))`.
    #[serde(with = "serde_q")]
    pub floor: Q,
}

/// Smallest `L` with `2^L >= 4 m h^2` and every positive tail slope and every
/// positive endowment entry at least `2^-L`; then `c = 1/(m 2^(3mL))`.
pub fn phi_constants(market: &Market) -> Result<PhiConstants, EquilibriumError> {
    let m = market.trader_count();
    let h = market.good_count();
    if m == 0 {
        return Err(EquilibriumError::EmptyMarket);
    }
    let mut lower_bounds: Vec<Q> = Vec::new();
    for t in market.traders() {
        for i in 0..h {
            let gap = t.utility.tail_slope(i);
            if gap.is_positive() {
                lower_bounds.push(gap);
            }
            if t.endowment[i].is_positive() {
                lower_bounds.push(t.endowment[i].clone());
            }
        }
    }
    let need = qi((4 * m * h * h) as i64);
    let mut l = 0u32;
    while pow2(l) < need || lower_bounds.iter().any(|b| one() / pow2(l) > *b) {
        l += 1;
    }
    let floor = one() / (qi(m as i64) * pow2(3 * m as u32 * l));
    Ok(PhiConstants { l, floor })
}

/// A point of the domain: dense allocations in market order plus prices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhiPoint {
    pub allocations: Vec<Vec<Q>>,
    pub prices: Vec<Q>,
}

impl PhiPoint {
    /// Uniform prices and each good's supply split evenly (clamped to the box).
    pub fn uniform(market: &Market) -> Self {
        let m = market.trader_count().max(1);
        let share: Vec<Q> = market
            .supply()
            .iter()
            .map(|s| clamp_box(&(s / qi(m as i64))))
            .collect();
        Self {
            allocations: vec![share; market.trader_count()],
            prices: PriceVector::uniform(market.good_count()).values,
        }
    }

    pub fn from_candidate(market: &Market, cand: &EquilibriumCandidate) -> Result<Self, EquilibriumError> {
        Ok(Self {
            allocations: market.full_dense_profile(&cand.profile)?,
            prices: cand.prices.values.clone(),
        })
    }

    pub fn to_candidate(&self, market: &Market) -> EquilibriumCandidate {
        EquilibriumCandidate::new(
            PriceVector {
                values: self.prices.clone(),
                normalized: sum(&self.prices) == one(),
            },
            market.profile_from_dense(&self.allocations),
        )
    }

    pub fn profile(&self, market: &Market) -> AllocationProfile {
        market.profile_from_dense(&self.allocations)
    }

    fn coords(&self) -> Vec<Q> {
        self.allocations
            .iter()
            .flatten()
            .chain(self.prices.iter())
            .cloned()
            .collect()
    }

    pub fn check_domain(&self, market: &Market, consts: &PhiConstants) -> Result<(), EquilibriumError> {
        let h = market.good_count();
        let cap = box_cap();
        let shape_ok = self.prices.len() == h
            && self.allocations.len() == market.trader_count()
            && self.allocations.iter().all(|x| x.len() == h);
        if !shape_ok {
            return Err(EquilibriumError::OutsideDomain("wrong dimensions".into()));
        }
        if let Some((k, _)) = self
            .allocations
            .iter()
            .enumerate()
            .find(|(_, x)| x.iter().any(|v| v.is_negative() || *v > cap))
        {
            return Err(EquilibriumError::OutsideDomain(format!(
                "allocation of {} leaves [0, 11/10]",
                market.trader(k).id
            )));
        }
        if sum(&self.prices) != one() {
            return Err(EquilibriumError::OutsideDomain("prices do not sum to 1".into()));
        }
        if self.prices.iter().any(|p| *p < consts.floor) {
            return Err(EquilibriumError::OutsideDomain("price below the floor c".into()));
        }
        Ok(())
    }
}

fn clamp_box(v: &Q) -> Q {
    if v.is_negative() {
        Q::zero()
    } else if *v > box_cap() {
        box_cap()
    } else {
        v.clone()
    }
}

/// Canonical maximizer of `demand . p` over the floored simplex.
pub fn best_response_prices(demand: &[Q], floor: &Q) -> Vec<Q> {
    let h = demand.len();
    if demand.iter().all(|d| *d == demand[0]) {
        return vec![q(1, h as i64); h];
    }
    let mut best = 0;
    for i in 1..h {
        if demand[i] > demand[best] {
            best = i;
        }
    }
    let mut p = vec![floor.clone(); h];
    p[best] = one() - qi(h as i64 - 1) * floor;
    p
}

pub fn phi_step(market: &Market, point: &PhiPoint, consts: &PhiConstants) -> Result<PhiPoint, EquilibriumError> {
    point.check_domain(market, consts)?;
    let h = market.good_count();
    let demand: Vec<Q> = (0..h)
        .map(|i| point.allocations.iter().map(|x| &x[i]).sum())
        .collect();
    let prices = best_response_prices(&demand, &consts.floor);
    let cap = box_cap();
    let allocations = (0..market.trader_count())
        .map(|k| {
            let out = optimal_bundle_at(market, k, &point.prices, &point.allocations, Some(&cap))?;
            Ok(out
                .bundle()
                .expect("boxed optimum is always bounded")
                .to_vec())
        })
        .collect::<Result<Vec<_>, EquilibriumError>>()?;
    Ok(PhiPoint { allocations, prices })
}

/// L-infinity distance between `point` and its canonical image.
pub fn fixed_point_residual(
    market: &Market,
    point: &PhiPoint,
    consts: &PhiConstants,
) -> Result<Q, EquilibriumError> {
    let image = phi_step(market, point, consts)?;
    Ok(linf(&point.coords(), &image.coords()))
}

#[derive(Debug, Clone)]
pub struct PhiTrace {
    pub points: Vec<PhiPoint>,
    pub residuals: Vec<Q>,
    pub best_index: usize,
}

impl PhiTrace {
    pub fn best_point(&self) -> &PhiPoint {
        &self.points[self.best_index]
    }

    pub fn best_residual(&self) -> &Q {
        &self.residuals[self.best_index]
    }
}

/// Damped iteration `next = (1 - damping) * point + damping * step(point)`.
///
/// Heuristic only: nothing guarantees the residual goes to zero. The trace
/// holds `max_steps + 1` points and the residual of each.
pub fn phi_iterate(
    market: &Market,
    start: &PhiPoint,
    consts: &PhiConstants,
    max_steps: usize,
    damping: &Q,
) -> Result<PhiTrace, EquilibriumError> {
    if !damping.is_positive() || *damping > one() {
        return Err(EquilibriumError::BadDamping(damping.clone()));
    }
    let keep = one() - damping;
    let mut points = Vec::with_capacity(max_steps + 1);
    let mut residuals = Vec::with_capacity(max_steps + 1);
    let mut current = start.clone();
    for step in 0..=max_steps {
        let image = phi_step(market, &current, consts)?;
        residuals.push(linf(&current.coords(), &image.coords()));
        points.push(current.clone());
        if step == max_steps {
            break;
        }
        let mix = |a: &Q, b: &Q| &keep * a + damping * b;
        current = PhiPoint {
            allocations: current
                .allocations
                .iter()
                .zip(&image.allocations)
                .map(|(x, y)| x.iter().zip(y).map(|(a, b)| clamp_box(&mix(a, b))).collect())
                .collect(),
            prices: current
                .prices
                .iter()
                .zip(&image.prices)
                .map(|(a, b)| max_q(mix(a, b), consts.floor.clone()))
                .collect(),
        };
    }
    let best_index = residuals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(PhiTrace {
        points,
        residuals,
        best_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::verify::verify_candidate;
    use crate::market::{swap_market, LinearInfluenceUtility, Trader, Utility};

    fn swap_equilibrium_point() -> PhiPoint {
        PhiPoint {
            allocations: vec![vec![qi(0), qi(1)], vec![qi(1), qi(0)]],
            prices: vec![q(1, 2), q(1, 2)],
        }
    }

    #[test]
    fn constants_for_swap_market() {
        let c = phi_constants(&swap_market()).unwrap();
        assert_eq!(c.l, 5);
        assert_eq!(c.floor, one() / (qi(2) * pow2(30)));
    }

    #[test]
    fn constants_for_single_trader() {
        let m = Market::new(
            1,
            vec![Trader::new(
                "A",
                vec![one()],
                Utility::Linear(LinearInfluenceUtility::plain(vec![one()])),
            )],
        )
        .unwrap();
        let c = phi_constants(&m).unwrap();
        assert_eq!(c.l, 2);
        assert_eq!(c.floor, one() / pow2(6));
    }

    #[test]
    fn small_gap_binds() {
        let m = Market::new(
            2,
            vec![
                Trader::new(
                    "T1",
                    vec![one(), qi(0)],
                    Utility::Linear(LinearInfluenceUtility::plain(vec![q(1, 64), one()])),
                ),
                Trader::new(
                    "T2",
                    vec![qi(0), one()],
                    Utility::Linear(LinearInfluenceUtility::plain(vec![one(), qi(0)])),
                ),
            ],
        )
        .unwrap();
        assert_eq!(phi_constants(&m).unwrap().l, 6);
    }

    #[test]
    fn price_response_concentrates_on_top_demand() {
        let c = q(1, 1000);
        assert_eq!(
            best_response_prices(&[q(6, 5), q(4, 5)], &c),
            vec![one() - &c, c.clone()]
        );
        assert_eq!(best_response_prices(&[one(), one()], &c), vec![q(1, 2), q(1, 2)]);
        assert_eq!(
            best_response_prices(&[one(), qi(2), qi(2)], &c),
            vec![c.clone(), one() - qi(2) * &c, c.clone()]
        );
    }

    #[test]
    fn swap_equilibrium_is_a_fixed_point() {
        let m = swap_market();
        let consts = phi_constants(&m).unwrap();
        let p = swap_equilibrium_point();
        assert_eq!(phi_step(&m, &p, &consts).unwrap(), p);
        assert!(fixed_point_residual(&m, &p, &consts).unwrap().is_zero());
    }

    #[test]
    fn unbalanced_demand_moves_prices() {
        let m = swap_market();
        let consts = phi_constants(&m).unwrap();
        let p = PhiPoint {
            allocations: vec![vec![q(3, 5), q(2, 5)], vec![q(3, 5), q(2, 5)]],
            prices: vec![q(1, 2), q(1, 2)],
        };
        let r = fixed_point_residual(&m, &p, &consts).unwrap();
        assert!(r >= one() - &consts.floor - q(1, 2));
    }

    #[test]
    fn iterate_converges_on_swap_market() {
        let m = swap_market();
        let consts = phi_constants(&m).unwrap();
        let trace = phi_iterate(&m, &PhiPoint::uniform(&m), &consts, 200, &q(1, 2)).unwrap();
        assert!(*trace.best_residual() < q(1, 100));
        let cand = trace.best_point().to_candidate(&m);
        assert!(verify_candidate(&m, &cand, &q(1, 10)).unwrap().verdict);
    }

    #[test]
    fn zero_steps_and_fixed_start() {
        let m = swap_market();
        let consts = phi_constants(&m).unwrap();
        let t = phi_iterate(&m, &PhiPoint::uniform(&m), &consts, 0, &q(1, 2)).unwrap();
        assert_eq!(t.points.len(), 1);
        assert_eq!(t.residuals.len(), 1);
        let t = phi_iterate(&m, &swap_equilibrium_point(), &consts, 3, &one()).unwrap();
        assert!(t.residuals[0].is_zero());
        assert_eq!(t.best_index, 0);
    }

    #[test]
    fn outside_domain_rejected() {
        let m = swap_market();
        let consts = phi_constants(&m).unwrap();
        let mut p = swap_equilibrium_point();
        p.allocations[0][1] = q(6, 5);
        assert!(matches!(
            phi_step(&m, &p, &consts),
            Err(EquilibriumError::OutsideDomain(_))
        ));
        let mut p = swap_equilibrium_point();
        p.prices = vec![one(), qi(0)];
        assert!(phi_step(&m, &p, &consts).is_err());
    }
}
