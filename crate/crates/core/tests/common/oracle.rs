//! Independent reference implementations: direct sums over all pairs, finite
//! differences, and a textbook IRLS. Nothing here shares code with the
//! library's grouped evaluations.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbm::{Graph, SbmParams};

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.n();
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in g.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

fn eta(mu: f64, beta: &[f64], i: usize, j: usize) -> f64 {
    mu + beta[i] + beta[j]
}

pub fn naive_nll(g: &Graph, mu: f64, beta: &[f64]) -> f64 {
    let a = adjacency(g);
    let mut total = 0.0;
    for j in 0..g.n() {
        for i in 0..j {
            let e = eta(mu, beta, i, j);
            total += log1pexp(e) - if a[i][j] { e } else { 0.0 };
        }
    }
    total
}

/// Gradient in `(mu, beta_k for k in coords)`.
pub fn naive_gradient(g: &Graph, mu: f64, beta: &[f64], coords: &[usize]) -> Vec<f64> {
    let a = adjacency(g);
    let n = g.n();
    let mut dmu = 0.0;
    let mut dbeta = vec![0.0; n];
    for j in 0..n {
        for i in 0..j {
            let r = logistic(eta(mu, beta, i, j)) - if a[i][j] { 1.0 } else { 0.0 };
            dmu += r;
            dbeta[i] += r;
            dbeta[j] += r;
        }
    }
    let mut out = vec![dmu];
    out.extend(coords.iter().map(|&k| dbeta[k]));
    out
}

/// Central differences of `naive_nll` in the same coordinates.
pub fn fd_gradient(g: &Graph, mu: f64, beta: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut out = vec![(naive_nll(g, mu + h, beta) - naive_nll(g, mu - h, beta)) / (2.0 * h)];
    for &k in coords {
        let mut up = beta.to_vec();
        let mut down = beta.to_vec();
        up[k] += h;
        down[k] -= h;
        out.push((naive_nll(g, mu, &up) - naive_nll(g, mu, &down)) / (2.0 * h));
    }
    out
}

pub struct NaiveMoments {
    pub expected_degrees: Vec<f64>,
    pub degree_variances: Vec<f64>,
    pub expected_edges: f64,
    pub edge_variance: f64,
}

pub fn naive_moments(p: &SbmParams) -> NaiveMoments {
    let n = p.n();
    let mut m = NaiveMoments {
        expected_degrees: vec![0.0; n],
        degree_variances: vec![0.0; n],
        expected_edges: 0.0,
        edge_variance: 0.0,
    };
    for j in 0..n {
        for i in 0..j {
            let q = logistic(eta(p.mu(), p.beta(), i, j));
            let v = q * (1.0 - q);
            m.expected_degrees[i] += q;
            m.expected_degrees[j] += q;
            m.degree_variances[i] += v;
            m.degree_variances[j] += v;
            m.expected_edges += q;
            m.edge_variance += v;
        }
    }
    m
}

/// One Bernoulli draw per pair, in row-major pair order.
pub fn naive_sample(p: &SbmParams, rng: &mut impl Rng) -> Graph {
    let n = p.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < logistic(eta(p.mu(), p.beta(), i, j)) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Iteratively reweighted least squares for the logit link.
pub fn irls(x: &DMatrix<f64>, y: &[bool], iterations: usize) -> DVector<f64> {
    let (rows, cols) = x.shape();
    let yv = DVector::from_iterator(rows, y.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut coef = DVector::zeros(cols);
    for _ in 0..iterations {
        let eta = x * &coef;
        let mut w = DVector::zeros(rows);
        let mut z = DVector::zeros(rows);
        for i in 0..rows {
            let p = logistic(eta[i]);
            w[i] = p * (1.0 - p);
            z[i] = eta[i] + (yv[i] - p) / w[i];
        }
        let xtw = DMatrix::from_fn(cols, rows, |a, i| x[(i, a)] * w[i]);
        let lhs = &xtw * x;
        let rhs = &xtw * z;
        coef = lhs.lu().solve(&rhs).expect("IRLS normal equations are singular");
    }
    coef
}

/// Random graph with edge probability `density`.
pub fn random_graph(n: usize, density: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

/// Random parameters with a random support of size at most `max_s`.
pub fn random_params(n: usize, max_s: usize, rng: &mut impl Rng) -> SbmParams {
    let s = rng.random_range(0..=max_s.min(n.saturating_sub(1)));
    let mut nodes: Vec<usize> = (0..n).collect();
    for k in 0..s {
        let j = rng.random_range(k..n);
        nodes.swap(k, j);
    }
    let mut support: Vec<usize> = nodes[..s].to_vec();
    support.sort_unstable();
    let values: Vec<f64> = (0..s).map(|_| rng.random_range(0.0..3.0)).collect();
    let mu = rng.random_range(-3.0..1.0);
    SbmParams::with_support(n, mu, &support, &values).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
