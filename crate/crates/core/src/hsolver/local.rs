use std::collections::HashMap;

use num::{BigInt, Zero};

use crate::equilibrium::{best_bundle, EquilibriumError};
use crate::market::Market;
use crate::rational::{dot, Q};

use super::grid::UnitVectors;

/// Discrete vector in grid units (entry `u` stands for `u / N`).
pub(crate) type Units = Vec<u32>;

/// Local optimality checks for one normalized price vector.
///
/// Caches each trader's optimum per form-value vector, since many candidate
/// bundles share the same neighbor allocations.
pub(crate) struct PriceEval<'a> {
    pub market: &'a Market,
    pub n: u64,
    pub prices: Vec<Q>,
    pub eps: Q,
    budgets: Vec<Q>,
    opt_cache: HashMap<(usize, Vec<Q>), Option<Q>>,
}

impl<'a> PriceEval<'a> {
    pub fn new(market: &'a Market, prices: Vec<Q>, eps: Q, n: u64) -> Self {
        let budgets = market
            .traders()
            .iter()
            .map(|t| dot(&t.endowment, &prices))
            .collect();
        Self {
            market,
            n,
            prices,
            eps,
            budgets,
            opt_cache: HashMap::new(),
        }
    }

    pub fn to_q(&self, u: &[u32]) -> Vec<Q> {
        let n = BigInt::from(self.n);
        u.iter()
            .map(|&x| Q::new(BigInt::from(x), n.clone()))
            .collect()
    }

    fn cost(&self, u: &[u32]) -> Q {
        let units: Q = u
            .iter()
            .zip(&self.prices)
            .map(|(&x, p)| p * Q::from_integer(BigInt::from(x)))
            .sum();
        units / Q::from_integer(BigInt::from(self.n))
    }

    /// Discrete bundles with entries at most 2 whose cost is within epsilon
    /// of trader `k`'s budget, in lexicographic order.
    pub fn affordable_bundles(&self, k: usize) -> Vec<Units> {
        let limit = &self.budgets[k] + &self.eps;
        UnitVectors::new(self.market.good_count(), 2 * self.n)
            .map(|v| v.into_iter().map(|x| x as u32).collect::<Units>())
            .filter(|u| self.cost(u) <= limit)
            .collect()
    }

    /// Trader `k`'s form values. Sources that `lookup` cannot resolve are
    /// skipped; their share must already be in `extra`.
    pub fn forms<'v>(
        &self,
        k: usize,
        lookup: impl Fn(usize) -> Option<&'v [u32]>,
        extra: Option<&[Q]>,
    ) -> Vec<Q> {
        let n = Q::from_integer(BigInt::from(self.n));
        self.market
            .resolved_forms(k)
            .iter()
            .enumerate()
            .map(|(i, terms)| {
                let mut acc = Q::zero();
                for term in terms {
                    if term.weight.is_zero() {
                        continue;
                    }
                    if let Some(b) = term.source.and_then(&lookup) {
                        acc += &term.weight * Q::from_integer(BigInt::from(b[term.good]));
                    }
                }
                acc /= &n;
                if let Some(e) = extra {
                    acc += &e[i];
                }
                acc
            })
            .collect()
    }

    /// Contribution of `from`'s bundle to each of `to`'s forms.
    pub fn contribution(&self, to: usize, from: usize, bundle: &[u32]) -> Vec<Q> {
        self.forms(to, |s| (s == from).then_some(bundle), None)
    }

    fn optimum(&mut self, k: usize, f: Vec<Q>) -> Result<Option<Q>, EquilibriumError> {
        if let Some(v) = self.opt_cache.get(&(k, f.clone())) {
            return Ok(v.clone());
        }
        let segs = self.market.trader(k).utility.segments(&f);
        let v = best_bundle(&segs, &self.prices, &self.budgets[k], None)?
            .value()
            .cloned();
        self.opt_cache.insert((k, f), v.clone());
        Ok(v)
    }

    /// Epsilon-budget-feasibility and epsilon-optimality of `own` for trader
    /// `k` given form values `f`.
    pub fn ok(&mut self, k: usize, own: &[u32], f: Vec<Q>) -> Result<bool, EquilibriumError> {
        if self.cost(own) - &self.budgets[k] > self.eps {
            return Ok(false);
        }
        let own_q = self.to_q(own);
        let value = self.market.trader(k).utility.value(&f, &own_q);
        Ok(match self.optimum(k, f)? {
            Some(opt) => opt - value <= self.eps,
            None => false,
        })
    }
}

/// Nearest multiple of `1/n`, halves rounded up.
pub(crate) fn round_nearest(x: &Q, n: u64) -> Q {
    let n = Q::from_integer(BigInt::from(n));
    let half = Q::new(BigInt::from(1), BigInt::from(2));
    (x * &n + half).floor() / n
}
