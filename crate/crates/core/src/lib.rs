//! Sparse β-model: a logistic random graph with node-level heterogeneity
//! restricted to a small set of hub nodes.
//!
//! `P(A_ij = 1) = sigmoid(mu + beta_i + beta_j)` with `beta >= 0` and at most
//! `n - 1` nonzero entries.

// `!(x > 0.0)` is used on purpose to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod graph;
pub mod harness;
pub mod inference;
pub mod likelihood;
pub mod math;
pub mod path;
pub mod report;
pub mod solver;

pub use analysis::{
    build_node_table, fit_by_group, logistic_fit, run_takeup_models, GroupFitOptions, GroupGraph, LogitFit, NodeRow,
    TakeupModel,
};
pub use error::{Result, SbmError};
pub use graph::{
    degree_partition, eigenvector_centrality, load_edge_list, parse_edge_list, sample_sbm, DegreePartition,
    EigenvectorCentrality, Graph, NodeLabels,
};
pub use harness::{
    degree_distribution, model_fit_overlay, run_monte_carlo, run_monte_carlo_records, summarize, MonteCarloConfig,
    MonteCarloSummary, RepRecord,
};
pub use inference::{
    beta_min_threshold, er_mle, excess_risk, excess_risk_bound, known_support_se, population_risk, ErFit,
    KnownSupportSe, RiskBound,
};
pub use likelihood::{gradient, hessian, moments, neg_log_lik, Moments, Regime, Reparam, SbmParams, SuffStats};
pub use path::{select, solution_path, Criterion, PathEntry, SolutionPath};
pub use report::{FitReport, PathReport};
pub use solver::{existence_check, fit_support, ExistenceReport, FitConfig, FitResult};
