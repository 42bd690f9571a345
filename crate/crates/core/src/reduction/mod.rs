//! Sparse bimatrix games and the constructions that turn them into markets.

mod build;
mod gadget;
mod game;
mod lift;
mod nash;

pub use build::{
    build_linear_market, expected_trader_count, extract_strategies, round_and_normalize,
    ReductionParams, Role, RoleMap, DEGREE_BOUND,
};
pub use gadget::{crossing_gadget, iterate_gadget, GadgetIds, GadgetIteration, GADGET_GOODS};
pub use game::{
    cd_weights, deviation_margin, gen_sparse_game, validate_game, verify_wsne, BimatrixGame,
    GameReport, GameViolation, Line, MixedStrategyPair, Player, WsneOffender, WsneReport,
    SPARSE_LINE_LIMIT,
};
pub use lift::{
    companion_id, threshold_lift, LiftRole, PlmPiece, PlmTrader, SeparablePLMSpec,
};
pub use nash::{nash_oracle, ORACLE_MAX_N};

use crate::equilibrium::EquilibriumError;
use crate::market::{MarketError, TraderId};
use crate::Q;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReductionError {
    #[error("malformed game: {0}")]
    NonSquare(String),
    #[error("not a distribution: {0}")]
    NotDistribution(String),
    #[error("row indices must differ, got {0} twice")]
    SameIndex(usize),
    #[error("index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("construction needs n >= 3, got {n}")]
    TooSmall { n: usize },
    #[error("game fails validation: {0}")]
    GameInvalid(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("oracle handles n <= {limit}, got {n}")]
    OracleGuard { n: usize, limit: usize },
    #[error("no equilibrium found; this is a bug")]
    NoEquilibrium,
    #[error("every entry of {0} is below the rounding threshold")]
    DegenerateExtraction(&'static str),
    #[error("duplicate trader id `{0}`")]
    IdCollision(TraderId),
    #[error("missing trader `{0}`")]
    MissingRole(TraderId),
    #[error("trader `{trader}` good {good}: first slope is below the second")]
    PieceOrder { trader: TraderId, good: usize },
    #[error("trader `{trader}` good {good}: breakpoint {theta} exceeds 1/n^4")]
    ThetaOutOfRange { trader: TraderId, good: usize, theta: Q },
    #[error("postcondition failed: {0}")]
    Postcondition(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}
