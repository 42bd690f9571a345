//! Markets with social influence.
//!
//! A trader's utility is either a *linear influence* utility
//!
//! ```text
//! u_k = sum_i (c_i + f_i(x_j : j in N(k))) * x_{k,i}
//! ```
//!
//! or a *threshold influence* utility
//!
//! ```text
//! u_k = sum_i (c_i * x_{k,i} + min(0, f_i(...) - d_i * x_{k,i}))
//! ```
//!
//! where each `f_i` is a non-negative linear form over neighbors' allocation
//! variables. Once the neighbors are fixed, both reduce to separable concave
//! piecewise-linear functions, which is what [`Utility::segments`] exposes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::graph::DirectedGraph;
use crate::rational::{one, q, serde_q, sum, Q};

pub type TraderId = String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MarketError {
    #[error("duplicate trader id `{0}`")]
    DuplicateTrader(TraderId),
    #[error("trader `{trader}`: {what} has length {got}, expected {expected}")]
    Dimension {
        trader: TraderId,
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("unknown trader `{0}`")]
    UnknownTrader(TraderId),
    #[error("allocation of trader `{0}` is missing from the profile")]
    MissingAllocation(TraderId),
    #[error("market has no goods")]
    NoGoods,
}

/// One weighted allocation variable: `weight * x_{trader, good}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub trader: TraderId,
    pub good: usize,
    #[serde(with = "serde_q")]
    pub weight: Q,
}

impl Term {
    pub fn new(trader: impl Into<TraderId>, good: usize, weight: Q) -> Self {
        Self {
            trader: trader.into(),
            good,
            weight,
        }
    }
}

/// Non-negative linear form over other traders' allocation variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearForm {
    pub terms: Vec<Term>,
}

impl LinearForm {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn single(trader: impl Into<TraderId>, good: usize, weight: Q) -> Self {
        Self::new(vec![Term::new(trader, good, weight)])
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scaled(&self, factor: &Q) -> Self {
        Self::new(
            self.terms
                .iter()
                .map(|t| Term::new(t.trader.clone(), t.good, &t.weight * factor))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearInfluenceUtility {
    #[serde(with = "serde_q::vec")]
    pub base_slopes: Vec<Q>,
    pub influence: Vec<LinearForm>,
}

impl LinearInfluenceUtility {
    /// Plain linear utility with no influence.
    pub fn plain(base_slopes: Vec<Q>) -> Self {
        let h = base_slopes.len();
        Self {
            base_slopes,
            influence: vec![LinearForm::empty(); h],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdInfluenceUtility {
    #[serde(with = "serde_q::vec")]
    pub peak_slopes: Vec<Q>,
    #[serde(with = "serde_q::vec")]
    pub drops: Vec<Q>,
    pub threshold_forms: Vec<LinearForm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Utility {
    Linear(LinearInfluenceUtility),
    Threshold(ThresholdInfluenceUtility),
}

/// A maximal linear piece of a per-good utility: `slope` per unit for the
/// next `cap` units (`None` is unbounded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub slope: Q,
    pub cap: Option<Q>,
}

impl Segment {
    pub fn unbounded(slope: Q) -> Self {
        Self { slope, cap: None }
    }

    pub fn capped(slope: Q, cap: Q) -> Self {
        Self {
            slope,
            cap: Some(cap),
        }
    }
}

impl Utility {
    pub fn good_count(&self) -> usize {
        match self {
            Utility::Linear(u) => u.base_slopes.len(),
            Utility::Threshold(u) => u.peak_slopes.len(),
        }
    }

    pub fn forms(&self) -> &[LinearForm] {
        match self {
            Utility::Linear(u) => &u.influence,
            Utility::Threshold(u) => &u.threshold_forms,
        }
    }

    /// Nonsatiation in good `i`: the utility grows without bound along `x_i`.
    pub fn is_nonsatiated(&self, i: usize) -> bool {
        self.tail_slope(i).is_positive()
    }

    /// Slope of the last (unbounded) piece of good `i`, independent of neighbors.
    pub fn tail_slope(&self, i: usize) -> Q {
        match self {
            Utility::Linear(u) => u.base_slopes[i].clone(),
            Utility::Threshold(u) => &u.peak_slopes[i] - &u.drops[i],
        }
    }

    /// Per-good pieces once the linear forms have been evaluated to `form_values`.
    pub fn segments(&self, form_values: &[Q]) -> Vec<Vec<Segment>> {
        match self {
            Utility::Linear(u) => u
                .base_slopes
                .iter()
                .zip(form_values)
                .map(|(c, f)| vec![Segment::unbounded(c + f)])
                .collect(),
            Utility::Threshold(u) => u
                .peak_slopes
                .iter()
                .zip(&u.drops)
                .zip(form_values)
                .map(|((c, d), f)| {
                    if d.is_zero() {
                        vec![Segment::unbounded(c.clone())]
                    } else {
                        vec![Segment::capped(c.clone(), f / d), Segment::unbounded(c - d)]
                    }
                })
                .collect(),
        }
    }

    /// Contribution of good `i` to the utility at own allocation `x`.
    pub fn good_value(&self, i: usize, form_value: &Q, x: &Q) -> Q {
        match self {
            Utility::Linear(u) => (&u.base_slopes[i] + form_value) * x,
            Utility::Threshold(u) => {
                let penalty = form_value - &u.drops[i] * x;
                let penalty = if penalty.is_negative() {
                    penalty
                } else {
                    Q::zero()
                };
                &u.peak_slopes[i] * x + penalty
            }
        }
    }

    pub fn value(&self, form_values: &[Q], own: &[Q]) -> Q {
        (0..own.len())
            .map(|i| self.good_value(i, &form_values[i], &own[i]))
            .sum()
    }

    /// Multiplies every slope parameter and form weight by `factor`.
    pub fn scaled(&self, factor: &Q) -> Utility {
        let scale_vec = |v: &[Q]| v.iter().map(|x| x * factor).collect::<Vec<_>>();
        let scale_forms = |v: &[LinearForm]| v.iter().map(|f| f.scaled(factor)).collect();
        match self {
            Utility::Linear(u) => Utility::Linear(LinearInfluenceUtility {
                base_slopes: scale_vec(&u.base_slopes),
                influence: scale_forms(&u.influence),
            }),
            Utility::Threshold(u) => Utility::Threshold(ThresholdInfluenceUtility {
                peak_slopes: scale_vec(&u.peak_slopes),
                drops: scale_vec(&u.drops),
                threshold_forms: scale_forms(&u.threshold_forms),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trader {
    pub id: TraderId,
    #[serde(with = "serde_q::vec")]
    pub endowment: Vec<Q>,
    pub utility: Utility,
}

impl Trader {
    pub fn new(id: impl Into<TraderId>, endowment: Vec<Q>, utility: Utility) -> Self {
        Self {
            id: id.into(),
            endowment,
            utility,
        }
    }
}

/// A form term with its source resolved to a trader index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ResolvedTerm {
    pub source: Option<usize>,
    pub good: usize,
    pub weight: Q,
}

/// Read access to traders' allocations by market index.
pub trait Allocations {
    fn bundle(&self, trader: usize) -> Option<&[Q]>;
}

impl Allocations for [Vec<Q>] {
    fn bundle(&self, trader: usize) -> Option<&[Q]> {
        self.get(trader).map(|v| v.as_slice())
    }
}

impl Allocations for Vec<Vec<Q>> {
    fn bundle(&self, trader: usize) -> Option<&[Q]> {
        self.get(trader).map(|v| v.as_slice())
    }
}

impl Allocations for [Option<Vec<Q>>] {
    fn bundle(&self, trader: usize) -> Option<&[Q]> {
        self.get(trader).and_then(|v| v.as_deref())
    }
}

impl Allocations for Vec<Option<Vec<Q>>> {
    fn bundle(&self, trader: usize) -> Option<&[Q]> {
        self.as_slice().bundle(trader)
    }
}

/// An exchange market with influence utilities.
///
/// Traders are kept sorted by id; every index-based API uses that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Market {
    good_count: usize,
    traders: Vec<Trader>,
    index: BTreeMap<TraderId, usize>,
    resolved: Vec<Vec<Vec<ResolvedTerm>>>,
}

impl Market {
    /// Structural construction: rejects duplicate ids and mis-sized vectors.
    /// Semantic problems (ranges, supply, dangling references) are left to
    /// [`validate_market`] so they can be reported all at once.
    pub fn new(good_count: usize, mut traders: Vec<Trader>) -> Result<Self, MarketError> {
        if good_count == 0 {
            return Err(MarketError::NoGoods);
        }
        traders.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = BTreeMap::new();
        for (k, t) in traders.iter().enumerate() {
            if index.insert(t.id.clone(), k).is_some() {
                return Err(MarketError::DuplicateTrader(t.id.clone()));
            }
            let mut dims: Vec<(&'static str, usize)> = vec![("endowment", t.endowment.len())];
            match &t.utility {
                Utility::Linear(u) => {
                    dims.push(("base_slopes", u.base_slopes.len()));
                    dims.push(("influence", u.influence.len()));
                }
                Utility::Threshold(u) => {
                    dims.push(("peak_slopes", u.peak_slopes.len()));
                    dims.push(("drops", u.drops.len()));
                    dims.push(("threshold_forms", u.threshold_forms.len()));
                }
            }
            for (what, got) in &dims {
                if *got != good_count {
                    return Err(MarketError::Dimension {
                        trader: t.id.clone(),
                        what,
                        got: *got,
                        expected: good_count,
                    });
                }
            }
        }
        let resolved = traders
            .iter()
            .map(|t| {
                t.utility
                    .forms()
                    .iter()
                    .map(|f| {
                        f.terms
                            .iter()
                            .map(|term| ResolvedTerm {
                                source: index.get(&term.trader).copied(),
                                good: term.good,
                                weight: term.weight.clone(),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            good_count,
            traders,
            index,
            resolved,
        })
    }

    pub fn good_count(&self) -> usize {
        self.good_count
    }

    pub fn trader_count(&self) -> usize {
        self.traders.len()
    }

    pub fn traders(&self) -> &[Trader] {
        &self.traders
    }

    pub fn trader(&self, k: usize) -> &Trader {
        &self.traders[k]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.traders.iter().map(|t| t.id.as_str())
    }

    pub(crate) fn resolved_forms(&self, k: usize) -> &[Vec<ResolvedTerm>] {
        &self.resolved[k]
    }

    pub fn supply(&self) -> Vec<Q> {
        (0..self.good_count)
            .map(|i| self.traders.iter().map(|t| &t.endowment[i]).sum())
            .collect()
    }

    /// Indices of traders whose utility reads some variable of trader `k`
    /// with positive weight.
    pub fn influencing_neighbors(&self, k: usize) -> BTreeSet<usize> {
        self.resolved[k]
            .iter()
            .flatten()
            .filter(|t| t.weight.is_positive())
            .filter_map(|t| t.source)
            .filter(|&s| s != k)
            .collect()
    }

    /// Evaluates trader `k`'s linear forms against `others`.
    pub fn form_values<A: Allocations + ?Sized>(
        &self,
        k: usize,
        others: &A,
    ) -> Result<Vec<Q>, MarketError> {
        self.resolved[k]
            .iter()
            .enumerate()
            .map(|(i, terms)| {
                let mut acc = Q::zero();
                for (t, term) in terms.iter().enumerate() {
                    if term.weight.is_zero() {
                        continue;
                    }
                    let src = term.source.ok_or_else(|| {
                        MarketError::UnknownTrader(
                            self.traders[k].utility.forms()[i].terms[t].trader.clone(),
                        )
                    })?;
                    let bundle = others
                        .bundle(src)
                        .ok_or_else(|| MarketError::MissingAllocation(self.traders[src].id.clone()))?;
                    acc += &term.weight * &bundle[term.good];
                }
                Ok(acc)
            })
            .collect()
    }

    /// `u_k(own, others)` with `own` overriding whatever `others` holds for `k`.
    pub fn utility_of<A: Allocations + ?Sized>(
        &self,
        k: usize,
        own: &[Q],
        others: &A,
    ) -> Result<Q, MarketError> {
        let f = self.form_values(k, others)?;
        Ok(self.traders[k].utility.value(&f, own))
    }

    pub fn segments_of<A: Allocations + ?Sized>(
        &self,
        k: usize,
        others: &A,
    ) -> Result<Vec<Vec<Segment>>, MarketError> {
        let f = self.form_values(k, others)?;
        Ok(self.traders[k].utility.segments(&f))
    }

    /// Same market with trader `k`'s utility replaced.
    pub fn with_utility(&self, k: usize, utility: Utility) -> Result<Market, MarketError> {
        let mut traders = self.traders.clone();
        traders[k].utility = utility;
        Market::new(self.good_count, traders)
    }

    pub fn dense_profile(&self, profile: &AllocationProfile) -> Vec<Option<Vec<Q>>> {
        self.traders
            .iter()
            .map(|t| profile.get(&t.id).map(|v| v.to_vec()))
            .collect()
    }

    /// Dense profile requiring every trader to be present with an `h`-vector.
    pub fn full_dense_profile(&self, profile: &AllocationProfile) -> Result<Vec<Vec<Q>>, MarketError> {
        self.traders
            .iter()
            .map(|t| match profile.get(&t.id) {
                Some(v) if v.len() == self.good_count => Ok(v.to_vec()),
                Some(v) => Err(MarketError::Dimension {
                    trader: t.id.clone(),
                    what: "allocation",
                    got: v.len(),
                    expected: self.good_count,
                }),
                None => Err(MarketError::MissingAllocation(t.id.clone())),
            })
            .collect()
    }

    pub fn profile_from_dense(&self, dense: &[Vec<Q>]) -> AllocationProfile {
        AllocationProfile::from_pairs(
            self.traders
                .iter()
                .zip(dense)
                .map(|(t, v)| (t.id.clone(), v.clone())),
        )
    }
}

/// Per-trader allocation vectors keyed by trader id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AllocationProfile {
    bundles: BTreeMap<TraderId, Vec<Q>>,
}

impl AllocationProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<Q>)>,
        S: Into<TraderId>,
    {
        Self {
            bundles: pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn insert(&mut self, id: impl Into<TraderId>, bundle: Vec<Q>) {
        self.bundles.insert(id.into(), bundle);
    }

    pub fn get(&self, id: &str) -> Option<&[Q]> {
        self.bundles.get(id).map(|v| v.as_slice())
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Vec<Q>> {
        self.bundles.get_mut(id)
    }

    pub fn remove(&mut self, id: &str) -> Option<Vec<Q>> {
        self.bundles.remove(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TraderId, &Vec<Q>)> {
        self.bundles.iter()
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn has_negative_entry(&self) -> bool {
        self.bundles.values().flatten().any(|x| x.is_negative())
    }
}

impl Serialize for AllocationProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct B<'a>(#[serde(with = "serde_q::vec")] &'a [Q]);
        s.collect_map(self.bundles.iter().map(|(k, v)| (k, B(v))))
    }
}

impl<'de> Deserialize<'de> for AllocationProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(transparent)]
        struct B(#[serde(with = "serde_q::vec")] Vec<Q>);
        let m = BTreeMap::<TraderId, B>::deserialize(d)?;
        Ok(Self {
            bundles: m.into_iter().map(|(k, v)| (k, v.0)).collect(),
        })
    }
}

/// Price vector; `normalized` records that the entries are claimed to sum to 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceVector {
    #[serde(with = "serde_q::vec")]
    pub values: Vec<Q>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PriceError {
    #[error("prices sum to {0}, not 1")]
    NotNormalized(Q),
    #[error("negative price {value} on good {good}")]
    Negative { good: usize, value: Q },
    #[error("all prices are zero")]
    AllZero,
}

impl PriceVector {
    pub fn raw(values: Vec<Q>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    pub fn normalized(values: Vec<Q>) -> Result<Self, PriceError> {
        let total = sum(&values);
        if total != one() {
            return Err(PriceError::NotNormalized(total));
        }
        Ok(Self {
            values,
            normalized: true,
        })
    }

    /// `(1/h, ..., 1/h)`.
    pub fn uniform(h: usize) -> Self {
        Self {
            values: vec![q(1, h as i64); h],
            normalized: true,
        }
    }

    pub fn check_nonnegative(&self) -> Result<(), PriceError> {
        match self.values.iter().position(|p| p.is_negative()) {
            Some(good) => Err(PriceError::Negative {
                good,
                value: self.values[good].clone(),
            }),
            None => Ok(()),
        }
    }

    /// Divides by the entry sum.
    pub fn normalize(&self) -> Result<Self, PriceError> {
        self.check_nonnegative()?;
        let total = sum(&self.values);
        if total.is_zero() {
            return Err(PriceError::AllZero);
        }
        Ok(Self {
            values: self.values.iter().map(|p| p / &total).collect(),
            normalized: true,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How strictly [`validate_market`] treats per-good supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupplyMode {
    /// Total supply of each good in `[1/2, 2]`.
    #[default]
    Band,
    /// Total supply of each good exactly 1.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    WeightOutOfRange {
        trader: TraderId,
        good: usize,
        source: TraderId,
        weight: Q,
    },
    SlopeOutOfRange {
        trader: TraderId,
        good: usize,
        value: Q,
    },
    DropExceedsPeak {
        trader: TraderId,
        good: usize,
        peak: Q,
        drop: Q,
    },
    NegativeEndowment {
        trader: TraderId,
        good: usize,
        value: Q,
    },
    SupplyOutOfBand {
        good: usize,
        supply: Q,
        mode: SupplyMode,
    },
    DanglingReference {
        trader: TraderId,
        source: TraderId,
    },
    GoodOutOfRange {
        trader: TraderId,
        good: usize,
    },
    SelfReference {
        trader: TraderId,
        good: usize,
    },
    DuplicateTerm {
        trader: TraderId,
        good: usize,
        source: TraderId,
        source_good: usize,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::WeightOutOfRange {
                trader,
                good,
                source,
                weight,
            } => write!(
                f,
                "weight out of range: trader {trader}, good {good}, term on {source} has weight {weight} outside [0,1]"
            ),
            Diagnostic::SlopeOutOfRange { trader, good, value } => write!(
                f,
                "slope out of range: trader {trader}, good {good} has slope {value} outside [0,1]"
            ),
            Diagnostic::DropExceedsPeak {
                trader,
                good,
                peak,
                drop,
            } => write!(
                f,
                "drop exceeds peak: trader {trader}, good {good} has c = {peak} < d = {drop}"
            ),
            Diagnostic::NegativeEndowment { trader, good, value } => write!(
                f,
                "negative endowment: trader {trader}, good {good} is {value}"
            ),
            Diagnostic::SupplyOutOfBand { good, supply, mode } => match mode {
                SupplyMode::Band => {
                    write!(f, "supply out of band [1/2,2]: good {good} has supply {supply}")
                }
                SupplyMode::Unit => write!(f, "supply not 1: good {good} has supply {supply}"),
            },
            Diagnostic::DanglingReference { trader, source } => write!(
                f,
                "dangling trader reference: trader {trader} refers to unknown trader {source}"
            ),
            Diagnostic::GoodOutOfRange { trader, good } => write!(
                f,
                "good out of range: trader {trader} refers to good {good}"
            ),
            Diagnostic::SelfReference { trader, good } => write!(
                f,
                "self reference: trader {trader}'s form for good {good} reads her own allocation"
            ),
            Diagnostic::DuplicateTerm {
                trader,
                good,
                source,
                source_good,
            } => write!(
                f,
                "duplicate term: trader {trader}, good {good} repeats variable ({source}, {source_good})"
            ),
        }
    }
}

fn in_unit_interval(x: &Q) -> bool {
    !x.is_negative() && *x <= one()
}

/// Lists every violated market invariant. An empty list means well-formed.
pub fn validate_market(market: &Market, mode: SupplyMode) -> Vec<Diagnostic> {
    let h = market.good_count();
    let mut out = Vec::new();
    for t in market.traders() {
        for (i, w) in t.endowment.iter().enumerate() {
            if w.is_negative() {
                out.push(Diagnostic::NegativeEndowment {
                    trader: t.id.clone(),
                    good: i,
                    value: w.clone(),
                });
            }
        }
        let slope_diag = |good: usize, value: &Q| {
            (!in_unit_interval(value)).then(|| Diagnostic::SlopeOutOfRange {
                trader: t.id.clone(),
                good,
                value: value.clone(),
            })
        };
        match &t.utility {
            Utility::Linear(u) => {
                out.extend(u.base_slopes.iter().enumerate().filter_map(|(i, c)| slope_diag(i, c)))
            }
            Utility::Threshold(u) => {
                for i in 0..h {
                    out.extend(slope_diag(i, &u.peak_slopes[i]));
                    out.extend(slope_diag(i, &u.drops[i]));
                    if u.peak_slopes[i] < u.drops[i] {
                        out.push(Diagnostic::DropExceedsPeak {
                            trader: t.id.clone(),
                            good: i,
                            peak: u.peak_slopes[i].clone(),
                            drop: u.drops[i].clone(),
                        });
                    }
                }
            }
        }
        for (i, form) in t.utility.forms().iter().enumerate() {
            let mut seen = BTreeSet::new();
            for term in &form.terms {
                if !in_unit_interval(&term.weight) {
                    out.push(Diagnostic::WeightOutOfRange {
                        trader: t.id.clone(),
                        good: i,
                        source: term.trader.clone(),
                        weight: term.weight.clone(),
                    });
                }
                if term.good >= h {
                    out.push(Diagnostic::GoodOutOfRange {
                        trader: t.id.clone(),
                        good: term.good,
                    });
                }
                if term.trader == t.id {
                    out.push(Diagnostic::SelfReference {
                        trader: t.id.clone(),
                        good: i,
                    });
                } else if market.index_of(&term.trader).is_none() {
                    out.push(Diagnostic::DanglingReference {
                        trader: t.id.clone(),
                        source: term.trader.clone(),
                    });
                }
                if !seen.insert((term.trader.clone(), term.good)) {
                    out.push(Diagnostic::DuplicateTerm {
                        trader: t.id.clone(),
                        good: i,
                        source: term.trader.clone(),
                        source_good: term.good,
                    });
                }
            }
        }
    }
    for (i, s) in market.supply().into_iter().enumerate() {
        let ok = match mode {
            SupplyMode::Band => s >= q(1, 2) && s <= q(2, 1),
            SupplyMode::Unit => s == one(),
        };
        if !ok {
            out.push(Diagnostic::SupplyOutOfBand {
                good: i,
                supply: s,
                mode,
            });
        }
    }
    out
}

/// Exact `u_k` at the profile.
pub fn eval_utility(
    market: &Market,
    trader: &str,
    profile: &AllocationProfile,
) -> Result<Q, MarketError> {
    let k = market
        .index_of(trader)
        .ok_or_else(|| MarketError::UnknownTrader(trader.to_string()))?;
    let dense = market.dense_profile(profile);
    let own = dense[k]
        .as_deref()
        .ok_or_else(|| MarketError::MissingAllocation(trader.to_string()))?;
    market.utility_of(k, own, &dense)
}

/// Per-good pieces of trader `trader`'s utility with neighbors fixed by `others`.
pub fn effective_segments(
    market: &Market,
    trader: &str,
    others: &AllocationProfile,
) -> Result<Vec<Vec<Segment>>, MarketError> {
    let k = market
        .index_of(trader)
        .ok_or_else(|| MarketError::UnknownTrader(trader.to_string()))?;
    market.segments_of(k, &market.dense_profile(others))
}

pub fn is_nonsatiated(utility: &Utility, good: usize) -> bool {
    utility.is_nonsatiated(good)
}

/// Edge `j -> k` iff `u_k` reads a variable of `T_j` with positive weight.
pub fn build_influence_graph(market: &Market) -> DirectedGraph {
    let mut g = DirectedGraph::new(market.ids().map(String::from).collect());
    for k in 0..market.trader_count() {
        for j in market.influencing_neighbors(k) {
            g.add_edge(j, k);
        }
    }
    g
}

/// Edge `j -> k` iff `T_j` owns some good toward which `u_k` is nonsatiated.
pub fn build_economy_graph(market: &Market) -> DirectedGraph {
    let mut g = DirectedGraph::new(market.ids().map(String::from).collect());
    let h = market.good_count();
    for (j, tj) in market.traders().iter().enumerate() {
        for (k, tk) in market.traders().iter().enumerate() {
            if j == k {
                continue;
            }
            if (0..h).any(|i| tj.endowment[i].is_positive() && tk.utility.is_nonsatiated(i)) {
                g.add_edge(j, k);
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub economy_strongly_connected: bool,
    pub per_good_nonsatiated: bool,
}

impl ExistenceReport {
    pub fn holds(&self) -> bool {
        self.economy_strongly_connected && self.per_good_nonsatiated
    }
}

/// The two sufficient conditions for an equilibrium to exist.
pub fn check_existence_conditions(market: &Market) -> ExistenceReport {
    let economy_strongly_connected = build_economy_graph(market).is_strongly_connected();
    let per_good_nonsatiated = (0..market.good_count()).all(|i| {
        market
            .traders()
            .iter()
            .any(|t| t.utility.is_nonsatiated(i))
    });
    ExistenceReport {
        economy_strongly_connected,
        per_good_nonsatiated,
    }
}

/// Two traders, each owning one good and wanting only the other.
pub fn swap_market() -> Market {
    let t1 = Trader::new(
        "T1",
        vec![one(), Q::zero()],
        Utility::Linear(LinearInfluenceUtility::plain(vec![Q::zero(), one()])),
    );
    let t2 = Trader::new(
        "T2",
        vec![Q::zero(), one()],
        Utility::Linear(LinearInfluenceUtility::plain(vec![one(), Q::zero()])),
    );
    Market::new(2, vec![t1, t2]).expect("swap market is well-formed")
}
