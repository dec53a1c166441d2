use std::f64::consts::E;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::binomial;
use crate::error::{Error, Result};

fn to_f64(n: &BigUint) -> f64 {
    n.to_f64().unwrap_or(f64::INFINITY)
}

/// The three successive upper bounds on `|E_{q,p}|`:
/// `sum_l C(q,l) l^p`, `h C(q,h) h^p` with `h = floor(p/2)`, and
/// `(p/2) e^{p/2} q^{p/2} (p/2)^{p/2}`.
pub fn bound_e_chain(q: usize, p: usize) -> Result<[f64; 3]> {
    if p == 0 || p > q {
        return Err(Error::InvalidArgument(format!("need 1 <= p <= q, got p = {p}, q = {q}")));
    }
    let h = p / 2;
    let first: BigUint = (1..=h).map(|l| binomial(q, l) * BigUint::from(l).pow(p as u32)).sum();
    let second = binomial(q, h) * BigUint::from(h) * BigUint::from(h).pow(p as u32);
    Ok([to_f64(&first), to_f64(&second), bound_e(q, p)?])
}

/// `(p/2) e^{p/2} q^{p/2} (p/2)^{p/2}`; an upper bound on `|E_{q,p}|` when
/// `p <= q`, evaluated for any `p >= 1`.
pub fn bound_e(q: usize, p: usize) -> Result<f64> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidArgument(format!("need p, q >= 1, got p = {p}, q = {q}")));
    }
    let half = p as f64 / 2.0;
    Ok(half * half.exp() * (q as f64).powf(half) * half.powf(half))
}

/// `2k e^k 4^k k^k N^k`.
pub fn bound_p(n: usize, k: usize) -> f64 {
    let (n, k) = (n as f64, k as f64);
    2.0 * k * (k * (1.0 + 4f64.ln() + k.ln() + n.ln())).exp()
}

/// `(e^{2k} (2k)! C(2k - l - 1, l - 1), (2e)^{2k} (2k)! / sqrt(k))`.
pub fn u_bound_chain(k: usize, l: usize) -> Result<(f64, f64)> {
    if l == 0 || l > k {
        return Err(Error::InvalidArgument(format!("need 1 <= l <= k, got l = {l}, k = {k}")));
    }
    let fact = to_f64(&super::factorial(2 * k));
    let kk = k as f64;
    let mid = (2.0 * kk).exp() * fact * to_f64(&binomial(2 * k - l - 1, l - 1));
    Ok((mid, u_bound(k)))
}

pub fn u_bound(k: usize) -> f64 {
    let kk = k as f64;
    (2.0 * E).powf(2.0 * kk) * to_f64(&super::factorial(2 * k)) / kk.sqrt()
}

/// Per-`k` bounds on `(2k)!^{-1} int |R_N|^{2k}` in the two regimes, and the
/// summed series when they converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropTerms {
    /// `2k (8 e^2 x)^{2k}`, valid for `3k <= N`.
    pub small_term: f64,
    /// `(5 e^2 x)^{2k}`, valid for `3k > N`.
    pub big_term: f64,
    /// Whether `3k <= N`.
    pub small_regime: bool,
    /// `2 sum_{k>=1} k r^k = 2 r / (1 - r)^2` with `r = (8 e^2 x)^2`.
    pub small_series: Option<f64>,
    /// `sum_{k>=1} s^k = s / (1 - s)` with `s = (5 e^2 x)^2`.
    pub big_series: Option<f64>,
}

/// `x = ||K||_inf sup_p M_p / p`.
pub fn prop_term_bounds(k: usize, n: usize, x: f64) -> Result<PropTerms> {
    if k == 0 || !(x >= 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument("need k >= 1 and finite x >= 0".into()));
    }
    let a = 8.0 * E * E * x;
    let b = 5.0 * E * E * x;
    let p = 2 * k as i32;
    let r = a * a;
    let s = b * b;
    Ok(PropTerms {
        small_term: 2.0 * k as f64 * a.powi(p),
        big_term: b.powi(p),
        small_regime: 3 * k <= n,
        small_series: (r < 1.0).then(|| 2.0 * r / ((1.0 - r) * (1.0 - r))),
        big_series: (s < 1.0).then(|| s / (1.0 - s)),
    })
}
