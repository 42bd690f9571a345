use num::{BigInt, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumCandidate;
use crate::market::{AllocationProfile, PriceVector};
use crate::rational::{ceil_to_grid, is_grid_multiple, q, qi, serde_q, Q};

use super::HSolverError;

/// Discretization: every price and allocation is a multiple of `1/n`.
///
/// Enumerated prices satisfy `1 <= sum p <= 2` and allocations satisfy
/// `sum_k x_{k,i} <= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_q::option")]
    pub a: Option<Q>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_q::option")]
    pub b: Option<Q>,
}

/// Upper bound on each enumerated allocation entry and on per-good totals.
pub const ALLOCATION_CAP_UNITS: u64 = 2;

impl GridSpec {
    pub fn new(n: u64) -> Result<Self, HSolverError> {
        if n == 0 {
            return Err(HSolverError::InvalidGrid);
        }
        Ok(Self { n, a: None, b: None })
    }

    pub fn with_exponents(mut self, a: Q, b: Q) -> Self {
        self.a = Some(a);
        self.b = Some(b);
        self
    }

    pub fn unit(&self) -> Q {
        q(1, self.n as i64)
    }

    /// Grid value `units / n`.
    pub fn value(&self, units: u64) -> Q {
        q(units as i64, self.n as i64)
    }

    /// Largest entry, in grid units, of a price or allocation coordinate.
    pub fn cap_units(&self) -> u64 {
        ALLOCATION_CAP_UNITS * self.n
    }

    pub fn allocation_cap(&self) -> Q {
        qi(ALLOCATION_CAP_UNITS as i64)
    }

    pub fn is_discrete(&self, v: &[Q]) -> bool {
        v.iter().all(|x| is_grid_multiple(x, self.n))
    }

    /// Converts a discrete non-negative value to grid units.
    pub fn units_of(&self, x: &Q) -> Option<u64> {
        if x.is_negative() || !is_grid_multiple(x, self.n) {
            return None;
        }
        (x * Q::from_integer(BigInt::from(self.n))).to_integer().to_u64()
    }
}

/// `ceil(m^(2a + b + 3))` for integer exponents, the denominator that makes
/// rounding an exact equilibrium yield a `1/m^b`-approximate one when every
/// equilibrium price is at least `1/m^a`.
pub fn rounding_denominator(m: u64, a: u32, b: u32) -> u64 {
    m.pow(2 * a + b + 3)
}

/// Rounds every price and allocation entry up to the grid. Prices are left
/// unnormalized.
pub fn round_to_grid(
    cand: &EquilibriumCandidate,
    grid: &GridSpec,
) -> Result<EquilibriumCandidate, HSolverError> {
    if grid.n == 0 {
        return Err(HSolverError::InvalidGrid);
    }
    let round = |v: &[Q]| v.iter().map(|x| ceil_to_grid(x, grid.n)).collect::<Vec<_>>();
    let profile =
        AllocationProfile::from_pairs(cand.profile.iter().map(|(id, x)| (id.clone(), round(x))));
    Ok(EquilibriumCandidate::new(
        PriceVector::raw(round(&cand.prices.values)),
        profile,
    ))
}

/// Odometer over `{0..=max}^len` in lexicographic order (last coordinate fastest).
#[derive(Debug, Clone)]
pub struct UnitVectors {
    current: Option<Vec<u64>>,
    max: Vec<u64>,
}

impl UnitVectors {
    pub fn new(len: usize, max: u64) -> Self {
        Self::bounded(vec![max; len])
    }

    /// Each coordinate `i` ranges over `0..=max[i]`.
    pub fn bounded(max: Vec<u64>) -> Self {
        Self {
            current: Some(vec![0; max.len()]),
            max,
        }
    }
}

impl Iterator for UnitVectors {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let out = self.current.clone()?;
        let cur = self.current.as_mut().expect("checked above");
        let mut d = cur.len();
        loop {
            if d == 0 {
                self.current = None;
                break;
            }
            d -= 1;
            if cur[d] < self.max[d] {
                cur[d] += 1;
                break;
            }
            cur[d] = 0;
        }
        Some(out)
    }
}

/// Discrete price vectors with entries in `{0, 1/N, ..., 2}` and
/// `1 <= sum <= 2`, in lexicographic order. `count` is known up front.
#[derive(Debug, Clone)]
pub struct PriceGrid {
    inner: UnitVectors,
    grid: GridSpec,
    pub count: u64,
}

impl Iterator for PriceGrid {
    type Item = Vec<Q>;

    fn next(&mut self) -> Option<Vec<Q>> {
        let n = self.grid.n;
        loop {
            let v = self.inner.next()?;
            let s: u64 = v.iter().sum();
            if s >= n && s <= ALLOCATION_CAP_UNITS * n {
                return Some(v.iter().map(|&u| self.grid.value(u)).collect());
            }
        }
    }
}

fn count_price_vectors(h: usize, n: u64) -> u64 {
    let cap = (ALLOCATION_CAP_UNITS * n) as usize;
    // ways[s] = number of vectors so far with unit sum s (sums above cap dropped)
    let mut ways = vec![0u64; cap + 1];
    ways[0] = 1;
    for _ in 0..h {
        let mut next = vec![0u64; cap + 1];
        for (s, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for e in 0..=cap - s {
                next[s + e] += w;
            }
        }
        ways = next;
    }
    ways[n as usize..=cap].iter().sum()
}

pub fn enumerate_price_grid(h: usize, grid: &GridSpec) -> Result<PriceGrid, HSolverError> {
    if grid.n == 0 || h == 0 {
        return Err(HSolverError::InvalidGrid);
    }
    Ok(PriceGrid {
        inner: UnitVectors::new(h, grid.cap_units()),
        grid: grid.clone(),
        count: count_price_vectors(h, grid.n),
    })
}
