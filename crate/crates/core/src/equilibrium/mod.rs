//! Optimal bundles, approximate-equilibrium verification, and the fixed-point
//! map whose fixed points are equilibria.

mod bundle;
mod phi;
mod verify;

pub use bundle::{best_bundle, optimal_bundle, optimal_bundle_at, BundleOutcome};
pub use phi::{
    best_response_prices, box_cap, fixed_point_residual, phi_constants, phi_iterate, phi_step,
    PhiConstants, PhiPoint, PhiTrace,
};
pub use verify::{
    verify_candidate, verify_dense, ConditionResult, EquilibriumCandidate, Offender,
    VerificationReport,
};

use crate::market::{MarketError, PriceError, TraderId};
use crate::Q;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error("negative price {value} on good {good}")]
    NegativePrice { good: usize, value: Q },
    #[error("price vector has {got} entries, market has {expected} goods")]
    PriceDimension { got: usize, expected: usize },
    #[error("negative allocation for trader `{trader}` on good {good}")]
    NegativeAllocation { trader: TraderId, good: usize },
    #[error("epsilon must be non-negative, got {0}")]
    NegativeEpsilon(Q),
    #[error("market has no traders")]
    EmptyMarket,
    #[error("point outside the domain: {0}")]
    OutsideDomain(String),
    #[error("damping must lie in (0, 1], got {0}")]
    BadDamping(Q),
}
