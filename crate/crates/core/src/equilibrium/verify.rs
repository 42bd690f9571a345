use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::market::{Allocations, AllocationProfile, Market, MarketError, PriceVector, TraderId};
use crate::rational::{abs_diff, dot, one, serde_q, sum, Q};

use super::bundle::{optimal_bundle_at, BundleOutcome};
use super::EquilibriumError;

/// Prices plus a full allocation profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumCandidate {
    pub prices: PriceVector,
    pub profile: AllocationProfile,
}

impl EquilibriumCandidate {
    pub fn new(prices: PriceVector, profile: AllocationProfile) -> Self {
        Self { prices, profile }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Offender {
    Trader(TraderId),
    Good(usize),
    Prices,
}

/// Outcome of one approximate-equilibrium condition.
///
/// `worst_violation` is the raw gap (not the excess over epsilon): total price
/// mass minus one, overspend, utility shortfall, or clearing imbalance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: u8,
    pub passed: bool,
    #[serde(with = "serde_q")]
    pub worst_violation: Q,
    pub offender: Option<Offender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    #[serde(with = "serde_q")]
    pub epsilon: Q,
    pub conditions: Vec<ConditionResult>,
    pub verdict: bool,
}

impl VerificationReport {
    pub fn condition(&self, c: u8) -> &ConditionResult {
        &self.conditions[(c - 1) as usize]
    }

    pub fn failed_conditions(&self) -> Vec<u8> {
        self.conditions
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.condition)
            .collect()
    }
}

struct Worst {
    gap: Q,
    offender: Option<Offender>,
}

impl Worst {
    fn new() -> Self {
        Self {
            gap: Q::zero(),
            offender: None,
        }
    }

    fn offer(&mut self, gap: Q, who: impl FnOnce() -> Offender) {
        if gap > self.gap || (self.offender.is_none() && gap.is_positive()) {
            self.gap = gap;
            self.offender = Some(who());
        }
    }
}

fn finish(condition: u8, worst: Worst, eps: &Q) -> ConditionResult {
    ConditionResult {
        condition,
        passed: worst.gap <= *eps,
        worst_violation: worst.gap,
        offender: worst.offender,
        note: None,
    }
}

/// Budget slack and utility shortfall of trader `k`; `None` shortfall means
/// the optimum is unbounded.
fn trader_gaps<A: Allocations + ?Sized>(
    market: &Market,
    k: usize,
    prices: &[Q],
    profile: &A,
) -> Result<(Q, Option<Q>), EquilibriumError> {
    let own = profile
        .bundle(k)
        .ok_or_else(|| MarketError::MissingAllocation(market.trader(k).id.clone()))?;
    let budget = dot(&market.trader(k).endowment, prices);
    let overspend = dot(own, prices) - budget;
    let shortfall = match optimal_bundle_at(market, k, prices, profile, None)? {
        BundleOutcome::Optimal { value, .. } => Some(value - market.utility_of(k, own, profile)?),
        BundleOutcome::Unbounded => None,
    };
    Ok((overspend, shortfall))
}

/// Checks the four approximate-equilibrium conditions on a dense profile.
pub fn verify_dense(
    market: &Market,
    prices: &[Q],
    profile: &[Vec<Q>],
    eps: &Q,
) -> Result<VerificationReport, EquilibriumError> {
    let h = market.good_count();
    if prices.len() != h {
        return Err(EquilibriumError::PriceDimension {
            got: prices.len(),
            expected: h,
        });
    }
    if let Some(good) = prices.iter().position(|p| p.is_negative()) {
        return Err(EquilibriumError::NegativePrice {
            good,
            value: prices[good].clone(),
        });
    }
    if eps.is_negative() {
        return Err(EquilibriumError::NegativeEpsilon(eps.clone()));
    }
    for (k, x) in profile.iter().enumerate() {
        if x.len() != h {
            return Err(MarketError::Dimension {
                trader: market.trader(k).id.clone(),
                what: "allocation",
                got: x.len(),
                expected: h,
            }
            .into());
        }
        if let Some(good) = x.iter().position(|v| v.is_negative()) {
            return Err(EquilibriumError::NegativeAllocation {
                trader: market.trader(k).id.clone(),
                good,
            });
        }
    }

    let mut c1 = Worst::new();
    c1.offer(abs_diff(&sum(prices), &one()), || Offender::Prices);
    // price mass must be exact whatever epsilon is
    let mut cond1 = finish(1, c1, &Q::zero());
    if !cond1.passed {
        cond1.note = Some("prices do not sum to 1".into());
    }

    let mut c2 = Worst::new();
    let mut c3 = Worst::new();
    let mut unbounded: Option<TraderId> = None;
    for k in 0..market.trader_count() {
        let (overspend, shortfall) = trader_gaps(market, k, prices, profile)?;
        let id = || Offender::Trader(market.trader(k).id.clone());
        c2.offer(overspend, id);
        match shortfall {
            Some(s) => c3.offer(s, id),
            None => {
                if unbounded.is_none() {
                    unbounded = Some(market.trader(k).id.clone());
                }
            }
        }
    }
    let cond2 = finish(2, c2, eps);
    let cond3 = match unbounded {
        Some(id) => ConditionResult {
            condition: 3,
            passed: false,
            worst_violation: c3.gap,
            offender: Some(Offender::Trader(id)),
            note: Some("unbounded optimum".into()),
        },
        None => finish(3, c3, eps),
    };

    let supply = market.supply();
    let mut c4 = Worst::new();
    for (i, s) in supply.iter().enumerate() {
        let demand: Q = profile.iter().map(|x| &x[i]).sum();
        c4.offer(abs_diff(s, &demand), || Offender::Good(i));
    }
    let cond4 = finish(4, c4, eps);

    let conditions = vec![cond1, cond2, cond3, cond4];
    let verdict = conditions.iter().all(|c| c.passed);
    Ok(VerificationReport {
        epsilon: eps.clone(),
        conditions,
        verdict,
    })
}

/// Judges a candidate against the epsilon-approximate equilibrium definition.
///
/// Prices flagged `normalized` must actually sum to one (malformed input
/// otherwise); raw price vectors are accepted and a wrong total fails
/// condition 1.
pub fn verify_candidate(
    market: &Market,
    cand: &EquilibriumCandidate,
    eps: &Q,
) -> Result<VerificationReport, EquilibriumError> {
    if cand.prices.normalized && sum(&cand.prices.values) != one() {
        return Err(EquilibriumError::Price(
            crate::market::PriceError::NotNormalized(sum(&cand.prices.values)),
        ));
    }
    let profile = market.full_dense_profile(&cand.profile)?;
    if let Some((id, _)) = cand.profile.iter().find(|(id, _)| market.index_of(id).is_none()) {
        return Err(MarketError::UnknownTrader(id.clone()).into());
    }
    verify_dense(market, &cand.prices.values, &profile, eps)
}
