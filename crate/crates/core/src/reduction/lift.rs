use std::collections::BTreeMap;

use num::{BigInt, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::market::{
    LinearForm, LinearInfluenceUtility, Market, ThresholdInfluenceUtility, Trader, TraderId,
    Utility,
};
use crate::rational::{one, powi, serde_q, Q};

use super::ReductionError;

/// Concave two-piece utility on one good: slope `a` up to `theta`, then `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlmPiece {
    #[serde(with = "serde_q")]
    pub a: Q,
    #[serde(with = "serde_q")]
    pub b: Q,
    #[serde(with = "serde_q")]
    pub theta: Q,
}

impl PlmPiece {
    pub fn value(&self, x: &Q) -> Q {
        if x <= &self.theta {
            &self.a * x
        } else {
            &self.a * &self.theta + &self.b * (x - &self.theta)
        }
    }
}

/// A trader with separable utility; `None` marks a good worth nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlmTrader {
    pub id: TraderId,
    #[serde(with = "serde_q::vec")]
    pub endowment: Vec<Q>,
    pub pieces: Vec<Option<PlmPiece>>,
}

impl PlmTrader {
    pub fn value(&self, x: &[Q]) -> Q {
        self.pieces
            .iter()
            .zip(x)
            .filter_map(|(p, x)| p.as_ref().map(|p| p.value(x)))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparablePLMSpec {
    pub goods: usize,
    pub traders: Vec<PlmTrader>,
}

/// What a lifted trader stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum LiftRole {
    /// The original trader `source`, now reading its companions.
    Original { source: TraderId },
    /// Holds `1/n^4` of `good` at equilibrium and pins `source`'s breakpoint.
    Companion { source: TraderId, good: usize },
}

pub fn companion_id(source: &str, good: usize) -> TraderId {
    format!("{source}~{good}")
}

/// Replaces every separable piecewise-linear trader with a threshold trader
/// plus one companion per valued good. With each companion holding exactly
/// `(1/n^4) e_i`, the threshold utility equals the original one.
pub fn threshold_lift(
    spec: &SeparablePLMSpec,
    n: usize,
) -> Result<(Market, BTreeMap<TraderId, LiftRole>), ReductionError> {
    if n == 0 {
        return Err(ReductionError::BadParams("n must be positive".into()));
    }
    let h = spec.goods;
    let n4 = powi(&Q::from_integer(BigInt::from(n)), 4);
    let share = one() / &n4;
    let mut traders = Vec::new();
    let mut roles = BTreeMap::new();
    for t in &spec.traders {
        if t.endowment.len() != h || t.pieces.len() != h {
            return Err(ReductionError::BadParams(format!(
                "trader {} does not have {h} goods",
                t.id
            )));
        }
        let mut peak = vec![Q::zero(); h];
        let mut drops = vec![Q::zero(); h];
        let mut forms = vec![LinearForm::empty(); h];
        for (i, piece) in t.pieces.iter().enumerate() {
            let Some(p) = piece else { continue };
            if p.a < p.b {
                return Err(ReductionError::PieceOrder {
                    trader: t.id.clone(),
                    good: i,
                });
            }
            if p.theta > share || p.theta.is_negative() {
                return Err(ReductionError::ThetaOutOfRange {
                    trader: t.id.clone(),
                    good: i,
                    theta: p.theta.clone(),
                });
            }
            if !p.b.is_positive() || p.a > one() {
                return Err(ReductionError::BadParams(format!(
                    "trader {} good {i}: slopes must satisfy 0 < b <= a <= 1",
                    t.id
                )));
            }
            let d = &p.a - &p.b;
            let weight = &p.theta * &d * &n4;
            let companion = companion_id(&t.id, i);
            peak[i] = p.a.clone();
            if !d.is_zero() {
                forms[i] = LinearForm::single(companion.clone(), i, weight);
            }
            drops[i] = d;
            let mut w = vec![Q::zero(); h];
            w[i] = share.clone();
            let mut wants = vec![Q::zero(); h];
            wants[i] = one();
            traders.push(Trader::new(
                companion.clone(),
                w,
                Utility::Linear(LinearInfluenceUtility::plain(wants)),
            ));
            roles.insert(
                companion,
                LiftRole::Companion {
                    source: t.id.clone(),
                    good: i,
                },
            );
        }
        traders.push(Trader::new(
            t.id.clone(),
            t.endowment.clone(),
            Utility::Threshold(ThresholdInfluenceUtility {
                peak_slopes: peak,
                drops,
                threshold_forms: forms,
            }),
        ));
        roles.insert(
            t.id.clone(),
            LiftRole::Original {
                source: t.id.clone(),
            },
        );
    }
    let market = Market::new(h, traders)?;
    Ok((market, roles))
}
