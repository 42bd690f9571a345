//! Grid discretization, hierarchical labelings, the Check-Tree solver for
//! hierarchical influence graphs, and a brute-force grid oracle.

mod bruteforce;
mod check_tree;
mod grid;
mod hierarchy;
mod local;

pub use bruteforce::{solve_bruteforce, DEFAULT_STATE_LIMIT};
pub use check_tree::{
    check_tree, leaf_group_feasible_totals, solve_hierarchical, CheckTreeKey, ContributionMode,
    LeafGroupState, SolveOutcome, SolveStats, SolverOptions,
};
pub use grid::{
    enumerate_price_grid, round_to_grid, rounding_denominator, GridSpec, PriceGrid, UnitVectors,
    ALLOCATION_CAP_UNITS,
};
pub use hierarchy::{
    flat_labeling, path_labeling, validate_hierarchical, HierarchicalLabeling, HierarchyCheck,
    TreeNode, TreeShape,
};

use crate::equilibrium::EquilibriumError;
use crate::market::{MarketError, PriceError, TraderId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HSolverError {
    #[error("grid denominator must be positive and the market must have goods")]
    InvalidGrid,
    #[error("malformed labeling tree: {0}")]
    MalformedTree(String),
    #[error("trader `{trader}` labeled with unknown node `{node}`")]
    UnknownNode { trader: TraderId, node: String },
    #[error("vertex `{0}` has no label")]
    Unlabeled(String),
    #[error("labeling is not hierarchical: {0}")]
    InvalidLabeling(String),
    #[error("trader `{trader}` reads `{neighbor}`, which is outside its node, parent and children")]
    NotTreeDecomposable { trader: TraderId, neighbor: TraderId },
    #[error("leaf group traders `{from}` and `{to}` influence each other")]
    IntraGroupEdge { from: TraderId, to: TraderId },
    #[error("state space of {states} exceeds the limit {limit}")]
    StateSpaceTooLarge { states: u128, limit: u128 },
    #[error("bad query: {0}")]
    BadQuery(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Price(#[from] PriceError),
}
