//! The l0 solution path along degree-sorted supports, information criteria
//! and an exhaustive best-subset search used as an oracle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbmError};
use crate::graph::{degree_partition, Graph};
use crate::math::pairs;
use crate::solver::{fit_support, FitConfig, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `2 nll + s log(n (n - 1) / 2)`
    Bic,
    /// `2 nll + s log(d_+)`
    BicStar,
}

impl FromStr for Criterion {
    type Err = SbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "bic" => Ok(Criterion::Bic),
            "bic_star" | "bic*" => Ok(Criterion::BicStar),
            other => Err(SbmError::InvalidConfig(format!("unknown criterion {other:?}"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Bic => "bic",
            Criterion::BicStar => "bic_star",
        })
    }
}

pub fn information_criterion(fit: &FitResult, n: usize, d_plus: u64, variant: Criterion) -> Result<f64> {
    criterion_value(fit.nll, fit.s(), n, d_plus, variant)
}

fn criterion_value(nll: f64, s: usize, n: usize, d_plus: u64, variant: Criterion) -> Result<f64> {
    let penalty = match variant {
        Criterion::Bic => {
            if s == 0 {
                0.0
            } else {
                pairs(n).ln()
            }
        }
        Criterion::BicStar => {
            if d_plus == 0 {
                return Err(SbmError::EmptyEffectiveSample);
            }
            (d_plus as f64).ln()
        }
    };
    Ok(2.0 * nll + s as f64 * penalty)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEntry {
    pub s: usize,
    pub support: Vec<usize>,
    pub fit: FitResult,
    pub bic: f64,
    /// Absent when the graph has no edges.
    pub bic_star: Option<f64>,
}

impl PathEntry {
    pub fn criterion(&self, variant: Criterion) -> Option<f64> {
        match variant {
            Criterion::Bic => Some(self.bic),
            Criterion::BicStar => self.bic_star,
        }
    }
}

/// Fits along the nested supports `S_1, S_1 ∪ S_2, ...`, starting with the
/// Erdős–Rényi fit at `s = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPath {
    pub n: usize,
    pub d_plus: u64,
    pub entries: Vec<PathEntry>,
    pub warnings: Vec<String>,
}

impl SolutionPath {
    pub fn null_entry(&self) -> &PathEntry {
        &self.entries[0]
    }

    pub fn entry(&self, s: usize) -> Option<&PathEntry> {
        self.entries.iter().find(|e| e.s == s)
    }

    pub fn levels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.s).collect()
    }
}

/// Default cap on the model size: half the node count.
pub fn default_max_size(n: usize) -> usize {
    (n / 2).max(1)
}

pub fn solution_path(g: &Graph, max_size: usize, cfg: &FitConfig) -> Result<SolutionPath> {
    if max_size == 0 {
        return Err(SbmError::InvalidConfig("max_size must be at least 1".into()));
    }
    cfg.validate()?;
    let partition = degree_partition(g);
    let mut warnings = Vec::new();
    if partition.cumulative.is_empty() {
        let msg = "all degrees are equal; only the Erdős–Rényi fit is admissible".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut entries = Vec::new();
    let null_fit = fit_support(g, &[], cfg)?;
    entries.push(make_entry(g, Vec::new(), null_fit)?);

    for s in partition.levels_up_to(max_size) {
        let support = partition.support_for_level(s).expect("levels come from the partition");
        let warm = entries.last().expect("null entry exists").fit.params.clone();
        let fit = fit_support(g, &support, &cfg.with_warm_start(warm))?;
        if !fit.converged {
            warnings.push(format!(
                "fit at s={s} did not converge (residual {:e})",
                fit.kkt_residual
            ));
        }
        entries.push(make_entry(g, support, fit)?);
    }

    Ok(SolutionPath {
        n: g.n(),
        d_plus: g.d_plus(),
        entries,
        warnings,
    })
}

fn make_entry(g: &Graph, support: Vec<usize>, fit: FitResult) -> Result<PathEntry> {
    let bic = information_criterion(&fit, g.n(), g.d_plus(), Criterion::Bic)?;
    let bic_star = information_criterion(&fit, g.n(), g.d_plus(), Criterion::BicStar).ok();
    Ok(PathEntry {
        s: support.len(),
        support,
        fit,
        bic,
        bic_star,
    })
}

/// Entry minimizing the criterion; ties go to the smaller `s`.
///
/// The `s = 0` entry competes only with `include_null`, or when it is the
/// only entry.
pub fn select(path: &SolutionPath, variant: Criterion, include_null: bool) -> Result<&PathEntry> {
    let candidates: Vec<&PathEntry> = path.entries.iter().filter(|e| include_null || e.s > 0).collect();
    let candidates = if candidates.is_empty() {
        path.entries.iter().take(1).collect()
    } else {
        candidates
    };
    let mut best: Option<(&PathEntry, f64)> = None;
    for entry in candidates {
        let value = entry.criterion(variant).ok_or(SbmError::EmptyEffectiveSample)?;
        if best.is_none_or(|(_, b)| value < b) {
            best = Some((entry, value));
        }
    }
    best.map(|(e, _)| e)
        .ok_or_else(|| SbmError::InvalidConfig("solution path is empty".into()))
}

pub const BRUTE_FORCE_MAX_N: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    pub fit: FitResult,
    /// Another support reached the same optimum within `1e-9` relative.
    pub tied: bool,
}

/// Exhaustive l0 search: fits every support of size `<= s`.
pub fn brute_force_l0(g: &Graph, s: usize, cfg: &FitConfig) -> Result<BruteForceResult> {
    let by_size = brute_force_by_size(g, s, cfg)?;
    let mut best: Option<FitResult> = None;
    let mut all = Vec::new();
    for r in by_size {
        all.extend(r.contenders);
        if best.as_ref().is_none_or(|b| r.best.fit.nll < b.nll) {
            best = Some(r.best.fit);
        }
    }
    let fit = best.expect("size zero is always enumerated");
    let tol = 1e-9 * (1.0 + fit.nll.abs());
    let tied = all.iter().filter(|&&v| (v - fit.nll).abs() <= tol).count() > 1;
    Ok(BruteForceResult { fit, tied })
}

#[derive(Debug, Clone)]
pub struct SizeOptimum {
    pub best: BruteForceResult,
    contenders: Vec<f64>,
}

/// Best support of each exact size `0..=s` (capped at `n - 1`).
pub fn brute_force_by_size(g: &Graph, s: usize, cfg: &FitConfig) -> Result<Vec<SizeOptimum>> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(SbmError::TooLarge {
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let cap = s.min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(cap + 1);
    for size in 0..=cap {
        let mut best: Option<FitResult> = None;
        let mut values = Vec::new();
        for support in combinations(n, size) {
            let fit = fit_support(g, &support, cfg)?;
            values.push(fit.nll);
            if best.as_ref().is_none_or(|b| fit.nll < b.nll) {
                best = Some(fit);
            }
        }
        let fit = best.expect("at least one support of each size");
        let tol = 1e-9 * (1.0 + fit.nll.abs());
        let tied = values.iter().filter(|&&v| (v - fit.nll).abs() <= tol).count() > 1;
        out.push(SizeOptimum {
            best: BruteForceResult { fit, tied },
            contenders: values,
        });
    }
    Ok(out)
}

/// `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut current: Option<Vec<usize>> = if k <= n { Some((0..k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = current.clone()?;
        let next = {
            let c = current.as_mut().expect("checked above");
            let mut i = k;
            loop {
                if i == 0 {
                    break None;
                }
                i -= 1;
                if c[i] < n - k + i {
                    c[i] += 1;
                    for j in i + 1..k {
                        c[j] = c[j - 1] + 1;
                    }
                    break Some(());
                }
            }
        };
        if next.is_none() {
            current = None;
        }
        Some(out)
    })
}
