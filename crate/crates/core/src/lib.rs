//! Exchange markets with social influence.
//!
//! * [`market`]: influence utilities, graphs, and existence conditions.
//! * [`equilibrium`]: optimal bundles, approximate-equilibrium verification,
//!   and the fixed-point map used in the existence argument.
//! * [`hsolver`]: grid discretization and the divide-and-conquer solver for
//!   hierarchical influence graphs, with a brute-force oracle.
//! * [`reduction`]: bimatrix games, well-supported Nash verification, and the
//!   game-to-market constructions.
//! * [`io`]: the JSON instance documents and report formats used by the CLI.

pub mod equilibrium;
pub mod graph;
pub mod hsolver;
pub mod io;
pub mod market;
pub mod rational;
pub mod reduction;

pub use rational::Q;
