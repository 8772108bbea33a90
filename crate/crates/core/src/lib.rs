//! Conditional-likelihood estimation for multi-way Poisson gravity models
//! with fixed effects, based on sufficient-statistic-preserving polyads.

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod covariates;
pub mod enumeration;
pub mod error;
pub mod estimator;
pub mod formula;
pub mod graph;
pub mod io;
pub mod meta;
pub mod oracle;
pub mod simulate;
pub mod variance;

pub use covariates::{CovariateProvider, DenseCovariates, FnCovariates, SparseCovariates};
pub use enumeration::{
    build_incidence, enumerate_active, enumerate_active_with, permutations, ActivePolyadRecord,
    Enumeration, EnumerationConfig, Parity, PolyadIncidence,
};
pub use error::{PolyadsError, Result};
pub use graph::{
    apply_transform, degrees, did_feature, orbit_bounds, sign, AdjacencyMode, EdgeIndex,
    FixedEffectStructure, Polyad, SparseCountGraph,
};
