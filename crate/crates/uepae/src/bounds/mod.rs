//! Finite-blocklength error-probability regions for two-class
//! unequal-error-protection coding over the AWGN channel.
//!
//! [`special`] holds the Gaussian machinery (capacity, Q-function,
//! dispersion and cross-dispersion); [`region`] evaluates the converse
//! region and the superposition/SIC achievable region and extracts the
//! Pareto frontier. All bound math is `f64`. Rates enter the formulas in
//! nats per channel use: capacity is in nats, so `k/n` is scaled by `ln 2`
//! before use — without that conversion the region anchors come out off by
//! a factor of `ln 2`.

mod region;
mod special;

pub use region::{
    achievable_region, converse_floors, converse_region, default_p1_grid, linear_grid,
    satisfies_converse, BoundInput, ConverseFloors, RegionCurve, RegionKind,
};
pub use special::{capacity, cross_dispersion, dispersion, erfc, q_func, v_prime};
