//! Additive functional graphical models for multivariate functional data.
//!
//! Given `n` subjects observed as curves over `p` nodes, the pipeline
//! estimates an undirected conditional-dependence graph in three stages:
//!
//! 1. Per-node functional PCA extracts scaled principal component scores
//!    from the empirical covariance operator ([`fpca`]).
//! 2. Each node is regressed on centered B-spline expansions of every
//!    other node's scores, with a blockwise group-lasso penalty that
//!    zeroes whole neighbour blocks ([`splines`], [`solver`]).
//! 3. Nonzero blocks are combined across nodes by an OR rule into an
//!    edge set, swept over a regularization path ([`graph`]).
//!
//! The crate also ships a simulation generator ([`simgen`]) that builds
//! functional data from additive structural equations on a random DAG,
//! and an evaluation harness ([`evalrep`]) computing ROC curves and AUC
//! against the moralized ground truth, including a linear neighborhood
//! regression baseline.

pub mod error;
pub mod evalrep;
pub mod fdata;
pub mod fpca;
pub mod graph;
pub mod rng;
pub mod simgen;
pub mod solver;
pub mod splines;

pub use error::{Error, Result};
pub use evalrep::{BenchmarkReport, Method, RocCurve};
pub use fdata::{FunctionalDataset, TimeGrid};
pub use fpca::{CovarianceMatrix, EigenSystem, ScorePanel};
pub use graph::{AfgmConfig, Dag, Graph, LambdaGrid, NeighborhoodFit};
pub use simgen::{GeneratedData, ModelKind, ScenarioConfig};
pub use solver::{CoefficientBlocks, GroupLassoProblem, KktReport, SolverConfig};
pub use splines::{CenteredDesignBlock, FullDesign, SplineBasis};
