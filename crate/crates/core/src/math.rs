//! Scalar helpers shared by the likelihood, solver and regression code.

/// `log(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `e^x / (1 + e^x)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli variance `p (1 - p)` at logit `x`, accurate in both tails.
#[inline]
pub fn bernoulli_variance(x: f64) -> f64 {
    sigmoid(x) * sigmoid(-x)
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `n choose 2` as a float.
#[inline]
pub fn pairs(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Inverse of `k = b (b - 1) / 2 + a` for `0 <= a < b`.
pub fn unrank_pair(k: u64) -> (u64, u64) {
    let mut b = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as u64;
    // float sqrt can be off by one near perfect squares
    while b * (b - 1) / 2 > k {
        b -= 1;
    }
    while (b + 1) * b / 2 <= k {
        b += 1;
    }
    (k - b * (b - 1) / 2, b)
}
