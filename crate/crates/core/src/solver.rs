//! Support-constrained maximum likelihood over the box
//! `|mu| <= m1`, `0 <= beta_i <= m2`, by projected Newton.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbmError};
use crate::graph::Graph;
use crate::likelihood::{validate_index_set, SbmParams, SuffStats, SupportObjective};
use crate::math::{logit, pairs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Box half-width for `mu`.
    pub m1: f64,
    /// Upper bound for each `beta_i`.
    pub m2: f64,
    /// Threshold on the infinity norm of the projected gradient.
    pub tol: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub warm_start: Option<SbmParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            m1: 30.0,
            m2: 30.0,
            tol: 1e-8,
            max_iter: 200,
            warm_start: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m1.is_finite() && self.m1 > 0.0 && self.m2.is_finite() && self.m2 > 0.0) {
            return Err(SbmError::InvalidConfig(format!(
                "box bounds must be positive and finite (m1={}, m2={})",
                self.m1, self.m2
            )));
        }
        if !(self.tol > 0.0) {
            return Err(SbmError::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    pub fn with_warm_start(&self, warm: SbmParams) -> Self {
        FitConfig {
            warm_start: Some(warm),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: SbmParams,
    /// The constrained index set; `params.support()` may be smaller when some
    /// coordinates sit at zero.
    pub support: Vec<usize>,
    pub nll: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// One flag for `mu` followed by one per entry of `support`.
    pub at_boundary: Vec<bool>,
    pub existence_ok: bool,
}

impl FitResult {
    pub fn mu(&self) -> f64 {
        self.params.mu()
    }

    pub fn s(&self) -> usize {
        self.support.len()
    }

    pub fn any_at_boundary(&self) -> bool {
        self.at_boundary.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExistenceReport {
    pub ok: bool,
    pub reasons: Vec<String>,
}

/// Necessary condition for an interior MLE: `0 < d_+ < C(n, 2)` and
/// `0 < d_i < n - 1` on the support. Passing it does not guarantee existence.
pub fn existence_check(g: &Graph, support: &[usize]) -> ExistenceReport {
    let mut reasons = Vec::new();
    let max_edges = g.n() * g.n().saturating_sub(1) / 2;
    let d_plus = g.d_plus() as usize;
    if d_plus == 0 {
        reasons.push("d_plus at lower boundary".to_string());
    }
    if d_plus >= max_edges {
        reasons.push("d_plus at upper boundary".to_string());
    }
    for &i in support {
        let d = g.degree(i);
        if d == 0 {
            reasons.push(format!("d_i at lower boundary for node {i}"));
        } else if d + 1 >= g.n() {
            reasons.push(format!("d_i at upper boundary for node {i}"));
        }
    }
    ExistenceReport {
        ok: reasons.is_empty(),
        reasons,
    }
}

const HESSIAN_RIDGE: f64 = 1e-10;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const BOUNDARY_EPS: f64 = 1e-9;
const STEP_TOL: f64 = 1e-6;

/// Minimizes the negative log-likelihood with `beta_i = 0` off `support`.
///
/// Iterations stop once the projected gradient is within `cfg.tol` and the
/// projected Newton step is negligible. Hitting
/// `max_iter` returns a result with `converged = false` rather than an error.
pub fn fit_support(g: &Graph, support: &[usize], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let n = g.n();
    validate_index_set(support, n)?;
    let mut support = support.to_vec();
    support.sort_unstable();

    let stats = SuffStats::from_graph(g, &support)?;
    let objective = stats.objective();
    let dim = objective.dim();

    let mut lower = vec![0.0; dim];
    let mut upper = vec![cfg.m2; dim];
    lower[0] = -cfg.m1;
    upper[0] = cfg.m1;

    let mut x = initial_point(g, &support, cfg)?;
    // A node adjacent to every other node has a strictly negative partial
    // derivative everywhere, so its optimum is the upper bound. Starting there
    // avoids a long crawl along the flat tail.
    for (k, &i) in support.iter().enumerate() {
        if g.degree(i) + 1 == n {
            x[k + 1] = cfg.m2;
        }
    }
    // Likewise for mu on an empty or complete graph.
    if g.d_plus() == 0 {
        x[0] = -cfg.m1;
    } else if g.d_plus() as f64 == pairs(n) {
        x[0] = cfg.m1;
    }
    project(&mut x, &lower, &upper);

    let mut f = objective.value(x[0], &x[1..]);
    let mut grad = objective.gradient(x[0], &x[1..]);
    let mut residual = projected_gradient_norm(&x, &grad, &lower, &upper);
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let direction = newton_direction(&objective, &x, &grad, &lower, &upper, residual);
        // A small gradient alone is not enough on the nearly flat tails of
        // the objective, where the minimizer can still be far away.
        if residual <= cfg.tol && projected_step_norm(&x, &direction, &lower, &upper) <= STEP_TOL {
            break;
        }
        iterations += 1;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut trial: Vec<f64> = x.iter().zip(&direction).map(|(a, d)| a + step * d).collect();
            project(&mut trial, &lower, &upper);
            let decrease: f64 = grad
                .iter()
                .zip(trial.iter().zip(&x))
                .map(|(g, (t, a))| g * (t - a))
                .sum();
            let f_trial = objective.value(trial[0], &trial[1..]);
            if f_trial <= f + ARMIJO * decrease {
                accepted = Some((trial, f_trial));
                break;
            }
            // once the predicted decrease is below rounding of f, compare
            // projected gradients instead of objective values
            if decrease.abs() <= 1e-14 * (1.0 + f.abs()) {
                let g_trial = objective.gradient(trial[0], &trial[1..]);
                if f_trial <= f || projected_gradient_norm(&trial, &g_trial, &lower, &upper) < residual {
                    accepted = Some((trial, f_trial));
                }
                break;
            }
            step *= 0.5;
        }

        let Some((next, f_next)) = accepted else {
            break;
        };
        x = next;
        f = f_next;
        grad = objective.gradient(x[0], &x[1..]);
        residual = projected_gradient_norm(&x, &grad, &lower, &upper);
    }

    let at_boundary = x
        .iter()
        .zip(lower.iter().zip(&upper))
        .map(|(&v, (&l, &u))| v - l <= BOUNDARY_EPS * l.abs().max(1.0) || u - v <= BOUNDARY_EPS * u.abs().max(1.0))
        .collect();
    let params = SbmParams::with_support(n, x[0], &support, &x[1..])?;
    let nll = objective.value(x[0], &x[1..]);
    Ok(FitResult {
        params,
        nll,
        converged: residual <= cfg.tol,
        iterations,
        kkt_residual: residual,
        at_boundary,
        existence_ok: existence_check(g, &support).ok,
        support,
    })
}

fn initial_point(g: &Graph, support: &[usize], cfg: &FitConfig) -> Result<Vec<f64>> {
    let mut x = vec![0.0; 1 + support.len()];
    match &cfg.warm_start {
        Some(warm) => {
            if warm.n() != g.n() {
                return Err(SbmError::InvalidParams(format!(
                    "warm start has n={} but graph has n={}",
                    warm.n(),
                    g.n()
                )));
            }
            x[0] = warm.mu();
            for (a, &i) in support.iter().enumerate() {
                x[1 + a] = warm.beta()[i];
            }
        }
        None => {
            let density = if g.n() < 2 {
                0.5
            } else {
                g.d_plus() as f64 / pairs(g.n())
            };
            x[0] = logit(density.clamp(1e-10, 1.0 - 1e-10));
        }
    }
    Ok(x)
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&v, &gi), (&l, &u))| (v - (v - gi).clamp(l, u)).abs())
        .fold(0.0, f64::max)
}

fn projected_step_norm(x: &[f64], d: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(d)
        .zip(lower.iter().zip(upper))
        .map(|((&v, &di), (&l, &u))| ((v + di).clamp(l, u) - v).abs())
        .fold(0.0, f64::max)
}

/// Newton step on the free coordinates; coordinates within `eps` of a face
/// whose gradient points outward take a diagonally scaled gradient step
/// instead, which projection then clamps onto the face.
fn newton_direction(
    objective: &SupportObjective,
    x: &[f64],
    grad: &[f64],
    lower: &[f64],
    upper: &[f64],
    residual: f64,
) -> Vec<f64> {
    let eps = residual.min(1e-6);
    let hessian = objective.hessian(x[0], &x[1..]);
    let dim = x.len();
    let active: Vec<bool> = (0..dim)
        .map(|i| (x[i] <= lower[i] + eps && grad[i] > 0.0) || (x[i] >= upper[i] - eps && grad[i] < 0.0))
        .collect();
    let free: Vec<usize> = (0..dim).filter(|&i| !active[i]).collect();

    let mut direction = vec![0.0; dim];
    for i in (0..dim).filter(|&i| active[i]) {
        direction[i] = -grad[i] / hessian[(i, i)].max(HESSIAN_RIDGE);
    }
    if free.is_empty() {
        return direction;
    }

    let k = free.len();
    let g_free = DVector::from_iterator(k, free.iter().map(|&i| grad[i]));
    let mut ridge = HESSIAN_RIDGE;
    loop {
        let h_free = DMatrix::from_fn(k, k, |a, b| {
            hessian[(free[a], free[b])] + if a == b { ridge } else { 0.0 }
        });
        if let Some(chol) = h_free.cholesky() {
            let step = chol.solve(&g_free);
            for (a, &i) in free.iter().enumerate() {
                direction[i] = -step[a];
            }
            return direction;
        }
        ridge *= 100.0;
        if ridge > 1e6 {
            for &i in &free {
                direction[i] = -grad[i];
            }
            return direction;
        }
    }
}
