//! Laminated-batch execution model.
//!
//! A batch interleaves one arbitrageur slot before, between, and after K
//! liquidity orders. Rational slot holders move the pool depth to a target
//! that depends only on their own allocation weights, the order-size law,
//! and the price density; this crate solves for that target, evaluates a
//! geometric-series approximation to the induced price-manipulation
//! coefficient with a certified error bound, and verifies both against a
//! Monte Carlo batch simulator and brute-force best-response oracles.

pub mod allocation;
pub mod equilibrium;
pub mod error;
pub mod extensions;
pub mod market;
pub mod numerics;
pub mod orderflow;
pub mod rng;
pub mod simulator;

pub use allocation::AllocationModel;
pub use equilibrium::{
    effective_weight, newton_mercator, solve_terms, zeta, zeta_error_bound, BatchGame,
    EquilibriumSolution, InitialDepth, SlotTerm, SolveMethod, SolverSettings, ZetaCertificate,
};
pub use error::{Error, Result};
pub use extensions::{
    DiagonalCollapse, FillMode, IdxLaw, LabelAllocation, LabelFlow, LabelledDraw, LabelledGame,
    LimitSandwich, PhaseTransition,
};
pub use market::{cpmm_gamma, CostContext, MarketCurve};
pub use orderflow::{OrderFlowModel, SizeDistribution, SlotMarginal};
pub use rng::replica_rng;
pub use simulator::{
    brute_force_best_response, execute_batch, monte_carlo_utility, run_batch, trader_experience,
    BatchTrace, BestResponse, HistogramBin, McEstimate, TraderExperience,
};
