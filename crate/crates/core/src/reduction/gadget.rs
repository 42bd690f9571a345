use std::collections::BTreeSet;

use num::{BigInt, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{optimal_bundle_at, BundleOutcome};
use crate::market::{
    AllocationProfile, LinearForm, LinearInfluenceUtility, Market, Term, Trader, TraderId,
    Utility,
};
use crate::rational::{max_q, one, Q};

use super::build::ReductionParams;
use super::ReductionError;

/// Trader ids of a crossing point `S` where edge `S1 -> S -> S2` crosses
/// edge `S3 -> S -> S4`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GadgetIds {
    pub s1s: TraderId,
    pub ss2: TraderId,
    pub s3s: TraderId,
    pub ss4: TraderId,
    pub s: TraderId,
}

impl Default for GadgetIds {
    fn default() -> Self {
        Self {
            s1s: "S1S".into(),
            ss2: "SS2".into(),
            s3s: "S3S".into(),
            ss4: "SS4".into(),
            s: "S".into(),
        }
    }
}

impl GadgetIds {
    fn all(&self) -> [&TraderId; 5] {
        [&self.s1s, &self.ss2, &self.s3s, &self.ss4, &self.s]
    }
}

pub const GADGET_GOODS: usize = 4;

fn unit_form(terms: &[(&str, usize)], s: &Q) -> LinearForm {
    LinearForm::new(
        terms
            .iter()
            .map(|&(id, good)| Term::new(id, good, s.clone()))
            .collect(),
    )
}

/// Five-trader crossing fragment over four goods. `S` reads both incoming
/// segments and both outgoing ones; `SS2` and `SS4` read only `S`. The two
/// incoming traders keep the caller's utilities. Every endowment is
/// `(alpha, alpha, alpha, alpha)` and every slope is scaled by `params.scale`.
pub fn crossing_gadget(
    ids: &GadgetIds,
    s1s_utility: Utility,
    s3s_utility: Utility,
    params: &ReductionParams,
) -> Result<Vec<Trader>, ReductionError> {
    let mut seen = BTreeSet::new();
    for id in ids.all() {
        if !seen.insert(id) {
            return Err(ReductionError::IdCollision(id.clone()));
        }
    }
    for u in [&s1s_utility, &s3s_utility] {
        if u.good_count() != GADGET_GOODS {
            return Err(ReductionError::BadParams(format!(
                "pass-through utility has {} goods, expected {GADGET_GOODS}",
                u.good_count()
            )));
        }
    }
    let sc = &params.scale;
    let w = vec![params.alpha.clone(); GADGET_GOODS];
    let (s1s, ss2, s3s, ss4, s) = (
        ids.s1s.as_str(),
        ids.ss2.as_str(),
        ids.s3s.as_str(),
        ids.ss4.as_str(),
        ids.s.as_str(),
    );
    let s_utility = LinearInfluenceUtility {
        base_slopes: vec![sc.clone(); GADGET_GOODS],
        influence: vec![
            unit_form(&[(s1s, 0), (ss2, 1)], sc),
            unit_form(&[(ss2, 0), (s1s, 1)], sc),
            unit_form(&[(s3s, 0), (ss4, 1)], sc),
            unit_form(&[(ss4, 0), (s3s, 1)], sc),
        ],
    };
    let copier = |first: usize| LinearInfluenceUtility {
        base_slopes: vec![sc.clone(), sc.clone(), Q::zero(), Q::zero()],
        influence: vec![
            unit_form(&[(s, first)], sc),
            unit_form(&[(s, first + 1)], sc),
            LinearForm::empty(),
            LinearForm::empty(),
        ],
    };
    Ok(vec![
        Trader::new(s1s, w.clone(), s1s_utility),
        Trader::new(ss2, w.clone(), Utility::Linear(copier(0))),
        Trader::new(s3s, w.clone(), s3s_utility),
        Trader::new(ss4, w.clone(), Utility::Linear(copier(2))),
        Trader::new(s, w, Utility::Linear(s_utility)),
    ])
}

/// Result of [`iterate_gadget`]: the averaged profile, the number of steps
/// taken and the best-response gap at the end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GadgetIteration {
    pub profile: AllocationProfile,
    pub iterations: usize,
    pub converged: bool,
    pub gap: Q,
}

/// Averaged best-response dynamics for `S`, `SS2` and `SS4` at fixed prices,
/// with the incoming traders frozen at `frozen`.
///
/// Exact best responses are bang-bang here and cycle, so each step moves the
/// free traders to the running average of their best responses (fictitious
/// play). Stops once every free trader's utility is within `tol` of its
/// best response, or after `max_iters` steps.
pub fn iterate_gadget(
    market: &Market,
    ids: &GadgetIds,
    prices: &[Q],
    frozen: &AllocationProfile,
    max_iters: usize,
    tol: &Q,
) -> Result<GadgetIteration, ReductionError> {
    let index = |id: &str| {
        market
            .index_of(id)
            .ok_or_else(|| ReductionError::MissingRole(id.to_string()))
    };
    let h = market.good_count();
    let mut dense: Vec<Vec<Q>> = vec![vec![Q::zero(); h]; market.trader_count()];
    for (id, bundle) in frozen.iter() {
        dense[index(id)?] = bundle.clone();
    }
    let free = [index(&ids.s)?, index(&ids.ss2)?, index(&ids.ss4)?];
    for t in 0..=max_iters {
        let mut responses = Vec::with_capacity(free.len());
        let mut gap = Q::zero();
        for &k in &free {
            let bundle = match optimal_bundle_at(market, k, prices, &dense, None)? {
                BundleOutcome::Optimal { value, bundle } => {
                    let current = market.utility_of(k, &dense[k], &dense)?;
                    gap = max_q(gap, value - current);
                    bundle
                }
                BundleOutcome::Unbounded => {
                    return Err(ReductionError::Postcondition(
                        "unbounded best response at the gadget prices".into(),
                    ))
                }
            };
            responses.push(bundle);
        }
        if gap <= *tol || t == max_iters {
            return Ok(GadgetIteration {
                profile: market.profile_from_dense(&dense),
                iterations: t,
                converged: gap <= *tol,
                gap,
            });
        }
        let step = one() / Q::from_integer(BigInt::from(t + 2));
        for (&k, r) in free.iter().zip(responses) {
            for (x, b) in dense[k].iter_mut().zip(r) {
                let delta = (b - &*x) * &step;
                *x += delta;
            }
        }
        debug_assert!(dense.iter().flatten().all(|v| !v.is_negative()));
    }
    unreachable!("loop returns on its last iteration")
}
