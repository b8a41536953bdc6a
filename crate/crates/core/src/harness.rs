//! Monte Carlo experiments for support recovery and estimation error, and
//! degree-distribution summaries.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Discrete, Poisson};

use crate::error::{Result, SbmError};
use crate::graph::{sample_sbm_with, Graph, BLOCK_SAMPLING_THRESHOLD};
use crate::likelihood::SbmParams;
use crate::path::{select, solution_path, Criterion};
use crate::solver::FitConfig;

/// A quantity given either as a number or as a named rate in `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    Value(f64),
    SqrtLogN,
    LogN,
    NegSqrtLogN,
    NegLogN,
}

impl Rate {
    pub fn at(&self, n: usize) -> f64 {
        let ln = (n as f64).ln();
        match self {
            Rate::Value(v) => *v,
            Rate::SqrtLogN => ln.sqrt(),
            Rate::LogN => ln,
            Rate::NegSqrtLogN => -ln.sqrt(),
            Rate::NegLogN => -ln,
        }
    }
}

impl FromStr for Rate {
    type Err = SbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt_log_n" => Ok(Rate::SqrtLogN),
            "log_n" => Ok(Rate::LogN),
            "-sqrt_log_n" => Ok(Rate::NegSqrtLogN),
            "-log_n" => Ok(Rate::NegLogN),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Rate::Value)
                .ok_or_else(|| SbmError::InvalidConfig(format!("bad rate {other:?}"))),
        }
    }
}

/// Support size, either fixed or one of the grid rules in `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeRule {
    Fixed(usize),
    SqrtHalfN,
    SqrtN,
    TwoSqrtN,
}

impl SizeRule {
    pub fn at(&self, n: usize) -> usize {
        let nf = n as f64;
        match self {
            SizeRule::Fixed(s) => *s,
            SizeRule::SqrtHalfN => (nf / 2.0).sqrt().floor() as usize,
            SizeRule::SqrtN => nf.sqrt().floor() as usize,
            SizeRule::TwoSqrtN => (2.0 * nf.sqrt()).floor() as usize,
        }
    }
}

impl FromStr for SizeRule {
    type Err = SbmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt_half_n" => Ok(SizeRule::SqrtHalfN),
            "sqrt_n" => Ok(SizeRule::SqrtN),
            "two_sqrt_n" => Ok(SizeRule::TwoSqrtN),
            other => other
                .parse()
                .map(SizeRule::Fixed)
                .map_err(|_| SbmError::InvalidConfig(format!("bad support size {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub n: usize,
    pub s0: SizeRule,
    pub mu0: Rate,
    pub beta: Rate,
    pub reps: usize,
    pub seed: u64,
    /// Largest path level considered; `None` means `max{40, floor(4 sqrt n)}`
    /// capped at `n - 1`.
    pub max_size: Option<usize>,
    pub criterion: Criterion,
    pub include_null: bool,
    pub fit: FitConfig,
}

impl MonteCarloConfig {
    pub fn new(n: usize, s0: usize, mu0: f64, beta: f64, reps: usize, seed: u64) -> Self {
        MonteCarloConfig {
            n,
            s0: SizeRule::Fixed(s0),
            mu0: Rate::Value(mu0),
            beta: Rate::Value(beta),
            reps,
            seed,
            max_size: None,
            criterion: Criterion::Bic,
            include_null: false,
            fit: FitConfig::default(),
        }
    }

    pub fn s0(&self) -> usize {
        self.s0.at(self.n)
    }

    pub fn mu0(&self) -> f64 {
        self.mu0.at(self.n)
    }

    pub fn beta0(&self) -> f64 {
        self.beta.at(self.n)
    }

    pub fn max_size(&self) -> usize {
        let default = 40usize.max((4.0 * (self.n as f64).sqrt()).floor() as usize);
        self.max_size.unwrap_or(default).min(self.n.saturating_sub(1)).max(1)
    }

    pub fn truth(&self) -> Result<SbmParams> {
        SbmParams::planted(self.n, self.mu0(), self.s0(), self.beta0())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(SbmError::InvalidConfig("n must be at least 2".into()));
        }
        if self.reps == 0 {
            return Err(SbmError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.s0() > self.n - 1 {
            return Err(SbmError::InvalidConfig(format!(
                "s0={} exceeds n-1={}",
                self.s0(),
                self.n - 1
            )));
        }
        self.fit.validate()?;
        self.truth().map(|_| ())
    }

    /// Parses a flat TOML table. Required keys: `n`, `reps`, `seed`. Named
    /// rates such as `"log_n"` are given as strings.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| SbmError::Parse {
            line: e.span().map_or(0, |span| text[..span.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })?;
        let mut n = None;
        let mut reps = None;
        let mut seed = None;
        let mut cfg = MonteCarloConfig::new(0, 2, -1.5, 1.5, 0, 0);
        for (key, raw) in &table {
            let value = match raw {
                toml::Value::String(v) => v.clone(),
                toml::Value::Integer(v) => v.to_string(),
                toml::Value::Float(v) => v.to_string(),
                toml::Value::Boolean(v) => v.to_string(),
                other => {
                    return Err(SbmError::InvalidConfig(format!(
                        "{key}: unsupported value type {}",
                        other.type_str()
                    )))
                }
            };
            let value = value.as_str();
            let bad = |e: &dyn std::fmt::Display| SbmError::InvalidConfig(format!("bad value for {key}: {e}"));
            match key.as_str() {
                "n" => n = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "reps" => reps = Some(value.parse::<usize>().map_err(|e| bad(&e))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(&e))?),
                "s0" => cfg.s0 = value.parse().map_err(|e| bad(&e))?,
                "mu0" => cfg.mu0 = value.parse().map_err(|e| bad(&e))?,
                "beta" | "beta0" => cfg.beta = value.parse().map_err(|e| bad(&e))?,
                "max_size" => cfg.max_size = Some(value.parse().map_err(|e| bad(&e))?),
                "criterion" => cfg.criterion = value.parse().map_err(|e| bad(&e))?,
                "include_null" => cfg.include_null = value.parse().map_err(|e| bad(&e))?,
                "m1" => cfg.fit.m1 = value.parse().map_err(|e| bad(&e))?,
                "m2" => cfg.fit.m2 = value.parse().map_err(|e| bad(&e))?,
                "tol" => cfg.fit.tol = value.parse().map_err(|e| bad(&e))?,
                "max_iter" => cfg.fit.max_iter = value.parse().map_err(|e| bad(&e))?,
                other => return Err(SbmError::InvalidConfig(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| SbmError::InvalidConfig(format!("missing required key {k:?}"));
        cfg.n = n.ok_or_else(|| missing("n"))?;
        cfg.reps = reps.ok_or_else(|| missing("reps"))?;
        cfg.seed = seed.ok_or_else(|| missing("seed"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SbmError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Independent generator for replication `rep`: ChaCha8 keyed by `seed`, on
/// stream `rep`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub failed: bool,
    pub s_hat: usize,
    pub correct_support: bool,
    /// FNV-1a hash of the selected support.
    pub support_hash: u64,
    pub l1_beta_error: f64,
    pub abs_mu_error: f64,
    pub converged: bool,
}

pub fn support_hash(support: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in support {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// One record per replication, in replication order.
pub fn run_monte_carlo_records(cfg: &MonteCarloConfig) -> Result<Vec<RepRecord>> {
    cfg.validate()?;
    let truth = cfg.truth()?;
    let s0 = cfg.s0();
    let max_size = cfg.max_size();
    Ok((0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(cfg.seed, rep as u64);
            let g = sample_sbm_with(&truth, &mut rng, BLOCK_SAMPLING_THRESHOLD);
            let selected = solution_path(&g, max_size, &cfg.fit)
                .and_then(|path| select(&path, cfg.criterion, cfg.include_null).cloned());
            match selected {
                Ok(entry) => {
                    let beta = entry.fit.params.beta();
                    RepRecord {
                        rep,
                        failed: false,
                        s_hat: entry.s,
                        correct_support: entry.support.len() == s0
                            && entry.support.iter().enumerate().all(|(k, &i)| k == i),
                        support_hash: support_hash(&entry.support),
                        l1_beta_error: beta.iter().zip(truth.beta()).map(|(a, b)| (a - b).abs()).sum(),
                        abs_mu_error: (entry.fit.mu() - truth.mu()).abs(),
                        converged: entry.fit.converged,
                    }
                }
                Err(e) => {
                    log::warn!("replication {rep} failed: {e}");
                    RepRecord {
                        rep,
                        failed: true,
                        s_hat: 0,
                        correct_support: false,
                        support_hash: 0,
                        l1_beta_error: f64::NAN,
                        abs_mu_error: f64::NAN,
                        converged: false,
                    }
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    /// Linear-interpolation quantiles of the finite values.
    pub fn of(values: &[f64]) -> Quantiles {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            if v.is_empty() {
                return f64::NAN;
            }
            let h = (v.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        let mean = if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        Quantiles {
            mean,
            median: q(0.5),
            q05: q(0.05),
            q25: q(0.25),
            q75: q(0.75),
            q95: q(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub reps: usize,
    pub reps_completed: usize,
    pub failures: usize,
    pub non_converged: usize,
    pub correct_support_freq: f64,
    pub mean_s_hat_minus_s0: f64,
    pub l1_beta_error: Quantiles,
    pub abs_mu_error: Quantiles,
}

/// Aggregates records in the order given; frequencies are over completed
/// replications.
pub fn summarize(records: &[RepRecord], s0: usize) -> MonteCarloSummary {
    let done: Vec<&RepRecord> = records.iter().filter(|r| !r.failed).collect();
    let k = done.len();
    let frac = |count: usize| if k == 0 { f64::NAN } else { count as f64 / k as f64 };
    let s_diff: f64 = done.iter().map(|r| r.s_hat as f64 - s0 as f64).sum();
    MonteCarloSummary {
        reps: records.len(),
        reps_completed: k,
        failures: records.len() - k,
        non_converged: done.iter().filter(|r| !r.converged).count(),
        correct_support_freq: frac(done.iter().filter(|r| r.correct_support).count()),
        mean_s_hat_minus_s0: if k == 0 { f64::NAN } else { s_diff / k as f64 },
        l1_beta_error: Quantiles::of(&done.iter().map(|r| r.l1_beta_error).collect::<Vec<_>>()),
        abs_mu_error: Quantiles::of(&done.iter().map(|r| r.abs_mu_error).collect::<Vec<_>>()),
    }
}

pub fn run_monte_carlo(cfg: &MonteCarloConfig) -> Result<MonteCarloSummary> {
    Ok(summarize(&run_monte_carlo_records(cfg)?, cfg.s0()))
}

/// `metric,value` lines. Floats use the shortest representation that
/// round-trips.
pub fn summary_csv(s: &MonteCarloSummary) -> String {
    let mut out = String::from("metric,value\n");
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k},{v}");
    };
    put("reps", s.reps.to_string());
    put("reps_completed", s.reps_completed.to_string());
    put("failures", s.failures.to_string());
    put("non_converged", s.non_converged.to_string());
    put("correct_support_freq", s.correct_support_freq.to_string());
    put("mean_s_hat_minus_s0", s.mean_s_hat_minus_s0.to_string());
    for (name, q) in [("l1_beta_error", &s.l1_beta_error), ("abs_mu_error", &s.abs_mu_error)] {
        put(&format!("{name}_mean"), q.mean.to_string());
        put(&format!("{name}_median"), q.median.to_string());
        put(&format!("{name}_q05"), q.q05.to_string());
        put(&format!("{name}_q25"), q.q25.to_string());
        put(&format!("{name}_q75"), q.q75.to_string());
        put(&format!("{name}_q95"), q.q95.to_string());
    }
    out
}

const RECORD_HEADER: &str = "rep,failed,s_hat,correct_support,support_hash,l1_beta_error,abs_mu_error,converged";

pub fn records_csv(records: &[RepRecord]) -> String {
    let mut out = format!("{RECORD_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{:016x},{},{},{}",
            r.rep,
            u8::from(r.failed),
            r.s_hat,
            u8::from(r.correct_support),
            r.support_hash,
            r.l1_beta_error,
            r.abs_mu_error,
            u8::from(r.converged)
        );
    }
    out
}

pub fn parse_records_csv(text: &str) -> Result<Vec<RepRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RECORD_HEADER) {
        return Err(SbmError::Parse {
            line: 1,
            message: "unexpected records header".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| {
            let line = idx + 2;
            let err = |m: &str| SbmError::Parse {
                line,
                message: m.to_string(),
            };
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 8 {
                return Err(err("expected 8 fields"));
            }
            let flag = |s: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(err("expected 0 or 1")),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            Ok(RepRecord {
                rep: f[0].parse().map_err(|_| err("bad rep"))?,
                failed: flag(f[1])?,
                s_hat: f[2].parse().map_err(|_| err("bad s_hat"))?,
                correct_support: flag(f[3])?,
                support_hash: u64::from_str_radix(f[4], 16).map_err(|_| err("bad hash"))?,
                l1_beta_error: num(f[5])?,
                abs_mu_error: num(f[6])?,
                converged: flag(f[7])?,
            })
        })
        .collect()
}

/// `(k, p_k)` for every degree that occurs, by increasing `k`.
pub fn degree_distribution(g: &Graph) -> Vec<(usize, f64)> {
    let counts = degree_counts(g);
    let n = g.n() as f64;
    counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(k, c)| (k, c as f64 / n))
        .collect()
}

fn degree_counts(g: &Graph) -> Vec<usize> {
    let max = g.degrees().iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max + 1];
    for &d in g.degrees() {
        counts[d] += 1;
    }
    counts
}

pub fn degree_distribution_csv(dist: &[(usize, f64)]) -> String {
    let mut out = String::from("k,p_k\n");
    for (k, p) in dist {
        let _ = writeln!(out, "{k},{p}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayRow {
    pub k: usize,
    pub observed: f64,
    /// Average over simulated graphs from the fitted parameters.
    pub fitted: f64,
    /// Poisson with the Erdős–Rényi mean degree of the observed graph.
    pub poisson: f64,
}

/// Observed degree distribution beside the average distribution of `reps`
/// graphs simulated from `fitted`, on the grid `0..=max degree seen`.
pub fn model_fit_overlay(g: &Graph, fitted: &SbmParams, reps: usize, seed: u64) -> Result<Vec<OverlayRow>> {
    if fitted.n() != g.n() {
        return Err(SbmError::InvalidParams(
            "fitted parameters do not match the graph size".into(),
        ));
    }
    if reps == 0 {
        return Err(SbmError::InvalidConfig("reps must be at least 1".into()));
    }
    let n = g.n();
    let sims: Vec<Vec<usize>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(seed, rep as u64);
            degree_counts(&sample_sbm_with(fitted, &mut rng, BLOCK_SAMPLING_THRESHOLD))
        })
        .collect();
    let observed = degree_counts(g);
    let grid = sims.iter().map(Vec::len).chain([observed.len()]).max().unwrap_or(1);

    let mut fitted_avg = vec![0.0; grid];
    for counts in &sims {
        for (k, &c) in counts.iter().enumerate() {
            fitted_avg[k] += c as f64 / n as f64;
        }
    }
    let lambda = if n < 2 { 0.0 } else { 2.0 * g.d_plus() as f64 / n as f64 };
    let poisson = if lambda > 0.0 {
        Some(Poisson::new(lambda).map_err(|e| SbmError::InvalidParams(e.to_string()))?)
    } else {
        None
    };
    Ok((0..grid)
        .map(|k| OverlayRow {
            k,
            observed: observed.get(k).map_or(0.0, |&c| c as f64 / n as f64),
            fitted: fitted_avg[k] / reps as f64,
            poisson: poisson
                .as_ref()
                .map_or(if k == 0 { 1.0 } else { 0.0 }, |p| p.pmf(k as u64)),
        })
        .collect())
}

pub fn overlay_csv(rows: &[OverlayRow]) -> String {
    let mut out = String::from("k,observed,fitted,poisson\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.k, r.observed, r.fitted, r.poisson);
    }
    out
}
