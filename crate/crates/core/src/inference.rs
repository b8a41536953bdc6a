//! Erdős–Rényi MLE with its asymptotic variances, plug-in standard errors for
//! the known-support MLE, beta-min thresholds and excess-risk bounds.
//!
//! All standard errors here are first-order asymptotic approximations. The
//! sparsity conditions under which they are valid (for example
//! `s0 = o(n^{(1 - alpha) / 2})`) are regime assumptions and are not checked.

use serde::Serialize;

use crate::error::{Result, SbmError};
use crate::graph::Graph;
use crate::likelihood::{expected_neg_log_lik, moments, regime_of, Regime, Reparam, SbmParams};
use crate::math::{logit, pairs};

/// Erdős–Rényi fit. `mu_hat` is infinite and all standard errors absent when
/// the graph is empty or complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErFit {
    pub n: usize,
    pub d_plus: u64,
    pub p_hat: f64,
    pub mu_hat: f64,
    pub se_p_plugin: Option<f64>,
    pub se_mu_plugin: Option<f64>,
    pub gamma: Option<f64>,
    /// `n^gamma p_hat`
    pub p_dagger: Option<f64>,
    /// `mu_hat + gamma log n`
    pub mu_dagger: Option<f64>,
    /// Asymptotic standard error of `p_dagger`.
    pub se_p_asymptotic: Option<f64>,
    /// Asymptotic standard error of `mu_hat` (equivalently of `mu_dagger`).
    pub se_mu_asymptotic: Option<f64>,
    pub boundary: bool,
}

pub fn er_mle(g: &Graph, gamma: Option<f64>) -> Result<ErFit> {
    let n = g.n();
    if n < 2 {
        return Err(SbmError::InvalidGraph("the Erdős–Rényi MLE needs n >= 2".into()));
    }
    if let Some(gm) = gamma {
        if !(0.0..2.0).contains(&gm) {
            return Err(SbmError::InvalidParams(format!("gamma must lie in [0, 2), got {gm}")));
        }
    }
    let total = pairs(n);
    let d_plus = g.d_plus();
    let p_hat = d_plus as f64 / total;
    let boundary = d_plus == 0 || d_plus as f64 >= total;
    let mu_hat = if d_plus == 0 {
        f64::NEG_INFINITY
    } else if boundary {
        f64::INFINITY
    } else {
        logit(p_hat)
    };

    let mut fit = ErFit {
        n,
        d_plus,
        p_hat,
        mu_hat,
        se_p_plugin: None,
        se_mu_plugin: None,
        gamma,
        p_dagger: None,
        mu_dagger: None,
        se_p_asymptotic: None,
        se_mu_asymptotic: None,
        boundary,
    };
    if boundary {
        return Ok(fit);
    }
    let var = p_hat * (1.0 - p_hat);
    fit.se_p_plugin = Some((var / total).sqrt());
    fit.se_mu_plugin = Some(1.0 / (total * var).sqrt());

    if let Some(gm) = gamma {
        let nf = n as f64;
        let p_dagger = nf.powf(gm) * p_hat;
        let mu_dagger = mu_hat + gm * nf.ln();
        let (var_p, var_mu) = if gm == 0.0 {
            (
                2.0 * p_dagger * (1.0 - p_dagger),
                4.0 + 2.0 * (-mu_dagger).exp() + 2.0 * mu_dagger.exp(),
            )
        } else {
            (2.0 * p_dagger, 2.0 * (-mu_dagger).exp())
        };
        let scale = nf.powf(-(2.0 - gm));
        fit.p_dagger = Some(p_dagger);
        fit.mu_dagger = Some(mu_dagger);
        fit.se_p_asymptotic = Some((var_p * scale).sqrt());
        fit.se_mu_asymptotic = Some((var_mu * scale).sqrt());
    }
    Ok(fit)
}

/// Asymptotic covariance diagonal and standard errors of the known-support
/// MLE in the scale-free parameterization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnownSupportSe {
    pub regime: Regime,
    pub sigma_mu: f64,
    pub se_mu: f64,
    /// `(node, Sigma_ii)` for each requested node.
    pub sigma_beta: Vec<(usize, f64)>,
    /// `(node, SE(beta_dagger_i))` for each requested node.
    pub se_beta: Vec<(usize, f64)>,
}

/// Plug-in standard errors for `(mu_dagger, beta_dagger_i : i in subset)` at
/// the parameter values carried by `rep`.
///
/// `SE(mu_dagger) = sqrt(Sigma_11) n^{-(1 - gamma/2)}` and
/// `SE(beta_dagger_i) = sqrt(Sigma_ii) n^{-(1/2 - (gamma - alpha)/2)}`, where
/// the diagonal depends on the regime:
///
/// | regime              | `Sigma_11`                     | `Sigma_ii`                                 |
/// |---------------------|--------------------------------|--------------------------------------------|
/// | `alpha < gamma`     | `2 e^{-mu}`                    | `e^{-mu - beta_i}`                         |
/// | `gamma = alpha > 0` | `2 e^{-mu}`                    | `2 + e^{-mu - beta_i} + e^{mu + beta_i}`   |
/// | `gamma = alpha = 0` | `4 + 2 e^{-mu} + 2 e^{mu}`     | `2 + e^{-mu - beta_i} + e^{mu + beta_i}`   |
pub fn known_support_se(rep: &Reparam, subset: &[usize], n: usize) -> Result<KnownSupportSe> {
    let regime = regime_of(rep.gamma, rep.alpha)?;
    let mu = rep.mu_dagger;
    let sigma_mu = match regime {
        Regime::Sparse | Regime::Balanced => 2.0 * (-mu).exp(),
        Regime::Dense => 4.0 + 2.0 * (-mu).exp() + 2.0 * mu.exp(),
    };
    let nf = n as f64;
    let mu_rate = nf.powf(-(1.0 - rep.gamma / 2.0));
    let beta_rate = nf.powf(-(0.5 - (rep.gamma - rep.alpha) / 2.0));

    let mut sigma_beta = Vec::with_capacity(subset.len());
    let mut se_beta = Vec::with_capacity(subset.len());
    for &i in subset {
        let pos = rep
            .support
            .iter()
            .position(|&j| j == i)
            .ok_or_else(|| SbmError::InvalidParams(format!("node {i} is not in the reparameterized support")))?;
        let x = mu + rep.beta_dagger[pos];
        let sigma = match regime {
            Regime::Sparse => (-x).exp(),
            Regime::Balanced | Regime::Dense => 2.0 + (-x).exp() + x.exp(),
        };
        sigma_beta.push((i, sigma));
        se_beta.push((i, sigma.sqrt() * beta_rate));
    }
    Ok(KnownSupportSe {
        regime,
        sigma_mu,
        se_mu: sigma_mu.sqrt() * mu_rate,
        sigma_beta,
        se_beta,
    })
}

/// `c_{n,tau} = sqrt((2 / (n - 2)) log(2 / tau))`.
pub fn concentration_constant(n: usize, tau: f64) -> f64 {
    ((2.0 / (n as f64 - 2.0)) * (2.0 / tau).ln()).sqrt()
}

/// Smallest nonzero beta guaranteeing `d_i > d_j` for one pair `i in S`,
/// `j not in S` with probability `1 - tau`, or for all pairs simultaneously
/// when `union_bound` is set (tau is then split over `n (n - 1)` pairs).
pub fn beta_min_threshold(n: usize, tau: f64, mu: f64, beta_bar: f64, union_bound: bool) -> Result<f64> {
    if n < 3 {
        return Err(SbmError::InvalidParams("beta-min threshold needs n >= 3".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SbmError::InvalidParams(format!("tau must lie in (0, 1), got {tau}")));
    }
    let tau = if union_bound {
        tau / (n as f64 * (n as f64 - 1.0))
    } else {
        tau
    };
    let c = concentration_constant(n, tau);
    let mu_plus = mu.max(0.0);
    let mu_minus = (-mu).max(0.0);
    Ok((c * (1.0 + mu_minus.exp()) * (1.0 + (2.0 * beta_bar + mu_plus).exp())).ln_1p())
}

/// Whether `params` meets the beta-min condition at level `tau`.
pub fn satisfies_beta_min(params: &SbmParams, tau: f64, union_bound: bool) -> Result<bool> {
    let beta_bar = params.beta().iter().copied().fold(0.0, f64::max);
    let threshold = beta_min_threshold(params.n(), tau, params.mu(), beta_bar, union_bound)?;
    let min_nonzero = params
        .support()
        .iter()
        .map(|&i| params.beta()[i])
        .fold(f64::INFINITY, f64::min);
    Ok(!params.support().is_empty() && min_nonzero > threshold)
}

/// High-probability bound on the excess risk at sparsity `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskBound {
    pub n: usize,
    pub d_plus_expected: f64,
    pub var_dplus: f64,
    pub max_var_di: f64,
    pub bound: f64,
    pub tau: f64,
    pub m1: f64,
    pub m2: f64,
    pub s: usize,
}

impl RiskBound {
    fn evaluate(&self) -> f64 {
        let log_global = (4.0 / self.tau).ln();
        let log_local = (4.0 * self.n as f64 / self.tau).ln();
        let global = self.m1 * ((2.0 * self.var_dplus * log_global).sqrt() + log_global / 3.0);
        let local = self.m2 * self.s as f64 * ((2.0 * self.max_var_di * log_local).sqrt() + log_local / 3.0);
        2.0 / self.d_plus_expected * (global + local)
    }

    /// Recomputes `bound` from the stored components.
    pub fn recompute(&self) -> f64 {
        self.evaluate()
    }
}

pub fn excess_risk_bound(params: &SbmParams, s: usize, m1: f64, m2: f64, tau: f64) -> Result<RiskBound> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SbmError::InvalidParams(format!("tau must lie in (0, 1), got {tau}")));
    }
    let m = moments(params);
    if !(m.expected_edges > 0.0) {
        return Err(SbmError::InvalidParams("expected edge count is zero".into()));
    }
    let mut out = RiskBound {
        n: params.n(),
        d_plus_expected: m.expected_edges,
        var_dplus: m.edge_variance,
        max_var_di: m.max_degree_variance(),
        bound: 0.0,
        tau,
        m1,
        m2,
        s,
    };
    out.bound = out.evaluate();
    if !out.bound.is_finite() {
        return Err(SbmError::InvalidParams("risk bound is not finite".into()));
    }
    Ok(out)
}

/// Expected normalized negative log-likelihood `E[l_n(at)] / E[d_+]` under
/// `truth`.
pub fn population_risk(truth: &SbmParams, at: &SbmParams) -> Result<f64> {
    let d_plus = moments(truth).expected_edges;
    Ok(expected_neg_log_lik(truth, at)? / d_plus)
}

/// `R(fitted) - R(reference)` under `truth`.
pub fn excess_risk(truth: &SbmParams, fitted: &SbmParams, reference: &SbmParams) -> Result<f64> {
    Ok(population_risk(truth, fitted)? - population_risk(truth, reference)?)
}
