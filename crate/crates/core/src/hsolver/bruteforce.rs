use num::{BigInt, Signed};

use crate::equilibrium::{verify_candidate, EquilibriumCandidate};
use crate::market::{AllocationProfile, Market, PriceVector};
use crate::rational::{sum, Q};

use super::check_tree::{SolveOutcome, SolveStats};
use super::grid::{enumerate_price_grid, GridSpec};
use super::local::{PriceEval, Units};
use super::HSolverError;

/// Default cap on `prices * (2N+1)^(h m)` for [`solve_bruteforce`].
pub const DEFAULT_STATE_LIMIT: u128 = 1_000_000_000_000;

struct Dfs<'e, 'a> {
    ev: &'e mut PriceEval<'a>,
    bundles: Vec<Vec<Units>>,
    /// `check_at[j]`: traders whose own and neighbor allocations are all
    /// fixed once trader `j` is assigned.
    check_at: Vec<Vec<usize>>,
    lo: Vec<u32>,
    hi: Vec<u32>,
    profile: Vec<Units>,
}

impl Dfs<'_, '_> {
    fn run(&mut self, j: usize, running: Vec<u32>) -> Result<bool, HSolverError> {
        let m = self.bundles.len();
        if j == m {
            return Ok(running.iter().zip(&self.lo).all(|(r, l)| r >= l));
        }
        for b in self.bundles[j].clone() {
            let next: Vec<u32> = running.iter().zip(&b).map(|(r, x)| r + x).collect();
            if next.iter().zip(&self.hi).any(|(r, h)| r > h) {
                continue;
            }
            self.profile.push(b);
            if self.local_ok(j)? && self.run(j + 1, next)? {
                return Ok(true);
            }
            self.profile.pop();
        }
        Ok(false)
    }

    fn local_ok(&mut self, j: usize) -> Result<bool, HSolverError> {
        for &k in &self.check_at[j] {
            let profile = &self.profile;
            let f = self.ev.forms(k, |s| profile.get(s).map(|v| v.as_slice()), None);
            if !self.ev.ok(k, &profile[k], f)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Exhaustive grid search: every discrete price in the band and every
/// discrete profile with per-good totals at most 2, in lexicographic order
/// (prices first, then traders in market order). Returns the first candidate
/// passing the epsilon verification after price normalization.
pub fn solve_bruteforce(
    market: &Market,
    grid: &GridSpec,
    eps: &Q,
    state_limit: u128,
) -> Result<SolveOutcome, HSolverError> {
    if eps.is_negative() {
        return Err(HSolverError::BadQuery(format!("negative epsilon {eps}")));
    }
    let h = market.good_count();
    let m = market.trader_count();
    let prices = enumerate_price_grid(h, grid)?;
    let side = 2 * grid.n as u128 + 1;
    let states = (0..h * m).try_fold(prices.count as u128, |acc, _| acc.checked_mul(side));
    match states {
        Some(s) if s <= state_limit => {}
        _ => {
            return Err(HSolverError::StateSpaceTooLarge {
                states: states.unwrap_or(u128::MAX),
                limit: state_limit,
            })
        }
    }
    let mut stats = SolveStats::default();
    if m == 0 {
        return Ok(SolveOutcome {
            candidate: None,
            report: None,
            stats,
            diagnostic: Some("market has no traders".into()),
        });
    }

    let mut check_at = vec![Vec::new(); m];
    for k in 0..m {
        let last = market
            .influencing_neighbors(k)
            .into_iter()
            .chain(
                // zero- or negative-weight sources still enter the forms
                market
                    .resolved_forms(k)
                    .iter()
                    .flatten()
                    .filter_map(|t| t.source),
            )
            .fold(k, usize::max);
        check_at[last].push(k);
    }
    let n = Q::from_integer(BigInt::from(grid.n));
    let cap = grid.cap_units() as i64;
    let mut lo = Vec::with_capacity(h);
    let mut hi = Vec::with_capacity(h);
    for s in market.supply() {
        let l: i64 = ((&s - eps) * &n).ceil().to_integer().try_into().unwrap_or(i64::MAX);
        let u: i64 = ((&s + eps) * &n).floor().to_integer().try_into().unwrap_or(i64::MAX);
        lo.push(l.clamp(0, cap) as u32);
        hi.push(u.min(cap).max(-1).max(0) as u32);
        if u < 0 || l > u.min(cap) {
            return Ok(SolveOutcome {
                candidate: None,
                report: None,
                stats,
                diagnostic: Some("no discrete total lies within epsilon of supply".into()),
            });
        }
    }

    for raw in prices {
        stats.prices_tried += 1;
        let total = sum(&raw);
        let p: Vec<Q> = raw.iter().map(|x| x / &total).collect();
        let mut ev = PriceEval::new(market, p.clone(), eps.clone(), grid.n);
        let bundles = (0..m).map(|k| ev.affordable_bundles(k)).collect();
        let mut dfs = Dfs {
            ev: &mut ev,
            bundles,
            check_at: check_at.clone(),
            lo: lo.clone(),
            hi: hi.clone(),
            profile: Vec::with_capacity(m),
        };
        if dfs.run(0, vec![0; h])? {
            let profile = AllocationProfile::from_pairs(
                dfs.profile
                    .iter()
                    .enumerate()
                    .map(|(k, u)| (market.trader(k).id.clone(), ev.to_q(u))),
            );
            let cand = EquilibriumCandidate::new(PriceVector::normalized(p)?, profile);
            let report = verify_candidate(market, &cand, eps)?;
            // local checks are exactly conditions 2 to 4, so this always holds
            debug_assert!(report.verdict);
            if report.verdict {
                return Ok(SolveOutcome {
                    candidate: Some(cand),
                    report: Some(report),
                    stats,
                    diagnostic: None,
                });
            }
        }
    }
    Ok(SolveOutcome {
        candidate: None,
        report: None,
        stats,
        diagnostic: Some(format!("no candidate on the 1/{} grid at epsilon {eps}", grid.n)),
    })
}
