//! Cost-optimal vaccine allocation for SIS epidemics on contact networks.
//!
//! * [`graph`]: edge-list graphs, degrees, eigenvector centrality
//! * [`spectral`]: the spreading eigenvalue λ₁(BA − D), stability margin,
//!   epidemic threshold, PSD projection
//! * [`dynamics`]: mean-field, linear-bound and exact Markov simulation
//! * [`cost`]: vaccination cost functions
//! * [`fractional`]: minimum-cost fractional allocation by eigenvector cuts
//! * [`combinatorial`]: greedy, reverse greedy, baselines, exhaustive search
//! * [`dual`]: Lagrangian upper bounds certifying combinatorial allocations
//! * [`cli`]: instance files, commands and report bundles

pub mod cli;
pub mod combinatorial;
pub mod cost;
pub mod dual;
pub mod dynamics;
pub mod error;
pub mod fractional;
pub mod graph;
pub mod instance;
pub mod spectral;

pub use combinatorial::{DiscreteAllocation, Method, Ranking};
pub use cost::{CostForm, CostFunction};
pub use dual::{DualCertificate, DualOptions, Fixing};
pub use error::{Error, Result};
pub use fractional::{FractionalAllocation, FractionalOptions};
pub use graph::Graph;
pub use instance::EpidemicInstance;
pub use spectral::RateMatrices;
