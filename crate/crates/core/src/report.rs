//! JSON documents for fits and solution paths.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::path::{PathEntry, SolutionPath};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub s: usize,
    pub support: Vec<usize>,
    pub mu_hat: f64,
    /// Nonzero entries only, keyed by node id.
    pub beta_hat: BTreeMap<usize, f64>,
    pub nll: f64,
    pub bic: f64,
    /// Absent when the graph has no edges.
    pub bic_star: Option<f64>,
    pub converged: bool,
    pub at_boundary: bool,
    pub existence_ok: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl FitReport {
    pub fn new(n: usize, entry: &PathEntry) -> Self {
        let fit = &entry.fit;
        FitReport {
            n,
            s: entry.s,
            support: entry.support.clone(),
            mu_hat: fit.mu(),
            beta_hat: fit
                .params
                .support()
                .iter()
                .map(|&i| (i, fit.params.beta()[i]))
                .collect(),
            nll: fit.nll,
            bic: entry.bic,
            bic_star: entry.bic_star,
            converged: fit.converged,
            at_boundary: fit.any_at_boundary(),
            existence_ok: fit.existence_ok,
            iterations: fit.iterations,
            kkt_residual: fit.kkt_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathReport {
    pub n: usize,
    pub d_plus: u64,
    pub entries: Vec<FitReport>,
    pub warnings: Vec<String>,
}

impl PathReport {
    pub fn new(path: &SolutionPath) -> Self {
        PathReport {
            n: path.n,
            d_plus: path.d_plus,
            entries: path.entries.iter().map(|e| FitReport::new(path.n, e)).collect(),
            warnings: path.warnings.clone(),
        }
    }
}
