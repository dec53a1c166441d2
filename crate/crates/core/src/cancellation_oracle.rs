//! Numerical checks of which products `prod_nu F_{i_nu} k_{i_nu, j_nu}`
//! integrate to zero against `f^{(x) N}`, where `F_i` is the velocity score of
//! particle `i` and `k_{i,j} = K(x_i - x_j) - K * rho(x_i)`.
//!
//! Only the particles that occur in `I` or `J` are integrated; every other
//! particle contributes a factor `int f = 1`. Quadrature works in `d = 1` on
//! the torus and uses that the `v`-dependence of the integrand is a power of
//! the score, so each active particle contributes
//! `H_m(x) = int F(x, v)^m f(x, v) dv` and only positions remain.

use std::collections::BTreeSet;

use crate::chaos_metrics::{mean_and_stderr, r_n_samples, ConvField, ReferenceLaw};
use crate::combinatorics::in_p;
use crate::error::{Error, Result};
use crate::kernels::{Domain, Kernel};
use crate::par;
use crate::quadrature::GaussLegendre;
use crate::rng::{stream, Purpose};

/// Velocity truncation in units of the law's velocity scale.
const V_CUT: f64 = 8.0;
/// Highest score power tabulated for the factorized rule.
const MAX_ORDER: usize = 8;
/// Largest active set the factorized rule accepts.
pub const MAX_ACTIVE_FACTORIZED: usize = 4;
/// Largest active set the full phase-space tensor rule accepts.
pub const MAX_ACTIVE_TENSOR: usize = 2;
/// Absolute tolerance for quadrature zeros.
pub const QUADRATURE_ZERO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Position-only Gauss-Legendre rule over the active particles.
    Quadrature,
    /// Gauss-Legendre over every `(x, v)` coordinate of the active particles.
    TensorQuadrature,
    MonteCarlo { samples: usize, seed: u64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::TensorQuadrature => "tensor_quadrature",
            Method::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralEstimate {
    pub value: f64,
    /// Node-doubling difference for quadrature, standard error for Monte Carlo.
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct ProductIntegralSpec<'a> {
    /// 1-based particle labels.
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    pub n: usize,
    pub law: &'a dyn ReferenceLaw,
    pub kernel: &'a Kernel,
    pub method: Method,
}

pub fn integral_product(spec: &ProductIntegralSpec<'_>) -> Result<IntegralEstimate> {
    let oracle = ProductOracle::new(spec.law, spec.kernel)?;
    oracle.integral(&spec.i, &spec.j, spec.n, spec.method)
}

/// Position nodes with the tables the factorized rule needs.
#[derive(Debug)]
struct Level {
    n: usize,
    weights: Vec<f64>,
    /// `K(x_a - x_b)` at `a * n + b`.
    k: Vec<f64>,
    /// `K * rho(x_a)`.
    kr: Vec<f64>,
    /// `h[m][a] = int F(x_a, v)^m f(x_a, v) dv`.
    h: Vec<Vec<f64>>,
}

impl Level {
    fn new(law: &dyn ReferenceLaw, kernel: &Kernel, conv: &ConvField, n: usize) -> Self {
        let (xs, weights) = GaussLegendre::new(n).on_interval(0.0, 1.0);
        let vmax = V_CUT * law.velocity_scale();
        let (vs, wv) = GaussLegendre::new(2 * n).on_interval(-vmax, vmax);
        let mut k = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                k[a * n + b] = kernel.eval1(xs[a] - xs[b]);
            }
        }
        let kr = xs.iter().map(|&x| conv.eval(x)).collect();
        let mut h = vec![vec![0.0; n]; MAX_ORDER + 1];
        for (a, &x) in xs.iter().enumerate() {
            for (&v, &w) in vs.iter().zip(&wv) {
                let f = w * law.density(x, v);
                let s = law.score(x, v);
                let mut pow = 1.0;
                for row in h.iter_mut() {
                    row[a] += pow * f;
                    pow *= s;
                }
            }
        }
        Level { n, weights, k, kr, h }
    }
}

/// Reusable integrator for one `(law, kernel)` pair.
#[derive(Debug)]
pub struct ProductOracle<'a> {
    law: &'a dyn ReferenceLaw,
    kernel: &'a Kernel,
    conv: ConvField,
    /// Coarse and fine levels for up to three, and for four, active particles.
    small: (Level, Level),
    large: (Level, Level),
}

/// `(active labels, slot of each i_nu, slot of each j_nu)`.
type Slots = (Vec<usize>, Vec<usize>, Vec<usize>);

impl<'a> ProductOracle<'a> {
    pub fn new(law: &'a dyn ReferenceLaw, kernel: &'a Kernel) -> Result<Self> {
        if kernel.dim() != 1 || kernel.domain() != Domain::Torus {
            return Err(Error::InvalidArgument("quadrature oracle needs d = 1 on the torus".into()));
        }
        let conv = law.conv_field(kernel)?;
        let small = (Level::new(law, kernel, &conv, 64), Level::new(law, kernel, &conv, 128));
        let large = (Level::new(law, kernel, &conv, 24), Level::new(law, kernel, &conv, 48));
        Ok(ProductOracle {
            law,
            kernel,
            conv,
            small,
            large,
        })
    }

    fn slots(i: &[usize], j: &[usize], n: usize) -> Result<Slots> {
        if i.len() != j.len() || i.is_empty() {
            return Err(Error::InvalidArgument("I and J must be nonempty and of equal length".into()));
        }
        if let Some(bad) = i.iter().chain(j).find(|&&e| e == 0 || e > n) {
            return Err(Error::InvalidArgument(format!("label {bad} outside 1..={n}")));
        }
        let active: Vec<usize> = i.iter().chain(j).copied().collect::<BTreeSet<_>>().into_iter().collect();
        let slot = |e: &usize| active.binary_search(e).unwrap();
        let si = i.iter().map(slot).collect();
        let sj = j.iter().map(slot).collect();
        Ok((active, si, sj))
    }

    /// `int prod_nu F_{i_nu} k_{i_nu, j_nu} f^{(x) n}`.
    pub fn integral(&self, i: &[usize], j: &[usize], n: usize, method: Method) -> Result<IntegralEstimate> {
        let (active, si, sj) = Self::slots(i, j, n)?;
        if self.kernel.is_zero() {
            return Ok(IntegralEstimate { value: 0.0, error: 0.0 });
        }
        let est = match method {
            Method::Quadrature => self.factorized(active.len(), &si, &sj)?,
            Method::TensorQuadrature => {
                if active.len() > MAX_ACTIVE_TENSOR {
                    return Err(Error::TooManyActive {
                        active: active.len(),
                        limit: MAX_ACTIVE_TENSOR,
                    });
                }
                let particles: Vec<usize> = (0..active.len()).collect();
                self.tensor(&particles, &si, &sj)?
            }
            Method::MonteCarlo { samples, seed } => self.monte_carlo(active.len(), &si, &sj, samples, seed)?,
        };
        if !est.value.is_finite() || !est.error.is_finite() {
            return Err(Error::NonFiniteIntegrand);
        }
        Ok(est)
    }

    /// Full tensor rule over `extra` additional particles besides the active
    /// ones, none of which appear in the integrand.
    pub fn integral_with_spectators(&self, i: &[usize], j: &[usize], n: usize, extra: usize) -> Result<IntegralEstimate> {
        let (active, si, sj) = Self::slots(i, j, n)?;
        let particles: Vec<usize> = (0..active.len() + extra).collect();
        self.tensor(&particles, &si, &sj)
    }

    fn factorized(&self, m: usize, si: &[usize], sj: &[usize]) -> Result<IntegralEstimate> {
        if m > MAX_ACTIVE_FACTORIZED {
            return Err(Error::TooManyActive {
                active: m,
                limit: MAX_ACTIVE_FACTORIZED,
            });
        }
        let mut mult = vec![0usize; m];
        for &s in si {
            mult[s] += 1;
        }
        if mult.iter().any(|&a| a > MAX_ORDER) {
            return Err(Error::Quadrature(format!("score power above {MAX_ORDER}")));
        }
        let (coarse, fine) = if m <= 3 { &self.small } else { &self.large };
        let c = factorized_sum(coarse, &mult, si, sj);
        let f = factorized_sum(fine, &mult, si, sj);
        Ok(IntegralEstimate {
            value: f,
            error: (f - c).abs(),
        })
    }

    fn tensor(&self, particles: &[usize], si: &[usize], sj: &[usize]) -> Result<IntegralEstimate> {
        if particles.len() > MAX_ACTIVE_TENSOR + 1 {
            return Err(Error::TooManyActive {
                active: particles.len(),
                limit: MAX_ACTIVE_TENSOR,
            });
        }
        let nodes = if particles.len() <= 2 { (32, 64) } else { (10, 20) };
        let c = self.tensor_sum(particles.len(), nodes.0, si, sj);
        let f = self.tensor_sum(particles.len(), nodes.1, si, sj);
        Ok(IntegralEstimate {
            value: f,
            error: (f - c).abs(),
        })
    }

    fn tensor_sum(&self, m: usize, nq: usize, si: &[usize], sj: &[usize]) -> f64 {
        let (xs, wx) = GaussLegendre::new(nq).on_interval(0.0, 1.0);
        let vmax = V_CUT * self.law.velocity_scale();
        let (vs, wv) = GaussLegendre::new(nq).on_interval(-vmax, vmax);
        // one phase-space node per (x, v) pair
        let mut node_x = Vec::with_capacity(nq * nq);
        let mut node_w = Vec::with_capacity(nq * nq);
        let mut node_s = Vec::with_capacity(nq * nq);
        for (a, &x) in xs.iter().enumerate() {
            for (b, &v) in vs.iter().enumerate() {
                node_x.push(a);
                node_w.push(wx[a] * wv[b] * self.law.density(x, v));
                node_s.push(self.law.score(x, v));
            }
        }
        let ktab: Vec<f64> = (0..nq * nq).map(|ab| self.kernel.eval1(xs[ab / nq] - xs[ab % nq])).collect();
        let kr: Vec<f64> = xs.iter().map(|&x| self.conv.eval(x)).collect();
        let per = nq * nq;
        let total = per.pow(m as u32);
        let row_sums = par::map_indexed(per, |lead| {
            let mut idx = vec![0usize; m];
            idx[0] = lead;
            let mut acc = 0.0;
            for rest in 0..total / per {
                let mut r = rest;
                for slot in idx.iter_mut().skip(1) {
                    *slot = r % per;
                    r /= per;
                }
                let mut prod: f64 = idx.iter().map(|&p| node_w[p]).product();
                for (&a, &b) in si.iter().zip(sj) {
                    let (pa, pb) = (idx[a], idx[b]);
                    let (xa, xb) = (node_x[pa], node_x[pb]);
                    let k = if a == b { -kr[xa] } else { ktab[xa * nq + xb] - kr[xa] };
                    prod *= node_s[pa] * k;
                }
                acc += prod;
            }
            acc
        });
        row_sums.iter().sum()
    }

    fn monte_carlo(&self, m: usize, si: &[usize], sj: &[usize], samples: usize, seed: u64) -> Result<IntegralEstimate> {
        if samples < 2 {
            return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
        }
        let vals = par::map_indexed(samples, |s| -> Result<f64> {
            let mut rng = stream(seed, Purpose::Oracle, s as u64);
            let mut z = Vec::with_capacity(m);
            for _ in 0..m {
                z.push(self.law.sample(&mut rng).ok_or_else(|| Error::NoSampler(self.law.name()))?);
            }
            Ok(si
                .iter()
                .zip(sj)
                .map(|(&a, &b)| {
                    let (xa, va) = z[a];
                    let k = if a == b { 0.0 } else { self.kernel.eval1(xa - z[b].0) };
                    self.law.score(xa, va) * (k - self.conv.eval(xa))
                })
                .product())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let (value, error) = mean_and_stderr(vals.iter().copied());
        Ok(IntegralEstimate { value, error })
    }
}

fn factorized_sum(level: &Level, mult: &[usize], si: &[usize], sj: &[usize]) -> f64 {
    let n = level.n;
    let m = mult.len();
    let g: Vec<Vec<f64>> = mult
        .iter()
        .map(|&a| level.h[a].iter().zip(&level.weights).map(|(h, w)| h * w).collect())
        .collect();
    let rest_count = n.pow(m as u32 - 1);
    let partial = par::map_indexed(n, |lead| {
        let mut idx = vec![0usize; m];
        idx[0] = lead;
        let mut acc = 0.0;
        for rest in 0..rest_count {
            let mut r = rest;
            for slot in idx.iter_mut().skip(1) {
                *slot = r % n;
                r /= n;
            }
            let mut prod = 1.0;
            for (s, &p) in idx.iter().enumerate() {
                prod *= g[s][p];
            }
            for (&a, &b) in si.iter().zip(sj) {
                let xa = idx[a];
                prod *= if a == b {
                    -level.kr[xa]
                } else {
                    level.k[xa * n + idx[b]] - level.kr[xa]
                };
            }
            acc += prod;
        }
        acc
    });
    partial.iter().sum()
}

/// One row of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub check: String,
    pub i: Vec<usize>,
    pub j: Vec<usize>,
    pub n: usize,
    pub method: &'static str,
    pub value: f64,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn zero(check: &str, i: &[usize], j: &[usize], n: usize, method: Method, est: IntegralEstimate, tol: f64) -> Self {
        Check {
            check: check.into(),
            i: i.to_vec(),
            j: j.to_vec(),
            n,
            method: method.name(),
            value: est.value,
            error: est.error,
            tolerance: tol,
            pass: est.value.abs() <= tol,
        }
    }
}

/// `int R_N f^{(x) N} = 0`: by the `N^2` position integrals under
/// quadrature, by sampling `R_N` under Monte Carlo.
pub fn verify_vanish1(law: &dyn ReferenceLaw, kernel: &Kernel, n: usize, method: Method) -> Result<Check> {
    match method {
        Method::MonteCarlo { samples, seed } => {
            let r = r_n_sample_powers(law, kernel, n, samples, seed, 1)?;
            Ok(Check::zero("vanish1", &[], &[], n, method, r, 3.0 * r.error))
        }
        _ => {
            let oracle = ProductOracle::new(law, kernel)?;
            let mut value = 0.0;
            let mut error = 0.0;
            for a in 1..=n {
                for b in 1..=n {
                    let e = oracle.integral(&[a], &[b], n, method)?;
                    value += e.value / n as f64;
                    error += e.error / n as f64;
                }
            }
            let est = IntegralEstimate { value, error };
            Ok(Check::zero("vanish1", &[], &[], n, method, est, QUADRATURE_ZERO_TOL))
        }
    }
}

/// Mean and standard error of `R_N^power` over independent configurations.
fn r_n_sample_powers(
    law: &dyn ReferenceLaw,
    kernel: &Kernel,
    n: usize,
    samples: usize,
    seed: u64,
    power: i32,
) -> Result<IntegralEstimate> {
    if samples < 2 || n == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and at least two samples".into()));
    }
    if kernel.is_zero() {
        return Ok(IntegralEstimate { value: 0.0, error: 0.0 });
    }
    let conv = law.conv_field(kernel)?;
    let r = r_n_samples(law, kernel, &conv, n, samples, seed)?;
    let (value, error) = mean_and_stderr(r.iter().map(|x| x.powi(power)));
    Ok(IntegralEstimate { value, error })
}

/// `int R_N^2 f^{(x) N}` reduced to diagonal pairs: `N^{-2} sum_{i,j} int (F_i k_{i,j})^2`.
pub fn diagonal_second_moment(oracle: &ProductOracle<'_>, n: usize) -> Result<IntegralEstimate> {
    let same = oracle.integral(&[1, 1], &[1, 1], n, Method::Quadrature)?;
    let nf = n as f64;
    if n == 1 {
        return Ok(IntegralEstimate {
            value: same.value,
            error: same.error,
        });
    }
    let diff = oracle.integral(&[1, 1], &[2, 2], n, Method::Quadrature)?;
    Ok(IntegralEstimate {
        value: (same.value + (nf - 1.0) * diff.value) / nf,
        error: (same.error + (nf - 1.0) * diff.error) / nf,
    })
}

/// `4 ||K||^2 M_2^2`.
pub fn second_moment_bound(law: &dyn ReferenceLaw, kernel: &Kernel) -> Result<f64> {
    let m2 = crate::chaos_metrics::m_p(law, 2)?;
    Ok(4.0 * kernel.sup_norm().powi(2) * m2 * m2)
}

/// Two rows: the measured second moment against its diagonal reduction, and
/// the reduction against `4 ||K||^2 M_2^2`.
pub fn verify_vanish2(law: &dyn ReferenceLaw, kernel: &Kernel, n: usize, method: Method) -> Result<Vec<Check>> {
    let oracle = ProductOracle::new(law, kernel)?;
    let diag = if kernel.is_zero() {
        IntegralEstimate { value: 0.0, error: 0.0 }
    } else {
        diagonal_second_moment(&oracle, n)?
    };
    let (measured, tol) = match method {
        Method::MonteCarlo { samples, seed } => {
            let r = r_n_sample_powers(law, kernel, n, samples, seed, 2)?;
            (r, 3.0 * r.error + diag.error)
        }
        _ => {
            let mut value = 0.0;
            let mut error = 0.0;
            let scale = (n * n) as f64;
            for i1 in 1..=n {
                for i2 in 1..=n {
                    for j1 in 1..=n {
                        for j2 in 1..=n {
                            let e = oracle.integral(&[i1, i2], &[j1, j2], n, method)?;
                            value += e.value / scale;
                            error += e.error / scale;
                        }
                    }
                }
            }
            (IntegralEstimate { value, error }, QUADRATURE_ZERO_TOL)
        }
    };
    let bound = second_moment_bound(law, kernel)?;
    let identity = Check {
        check: "vanish2_identity".into(),
        i: vec![],
        j: vec![],
        n,
        method: method.name(),
        value: measured.value - diag.value,
        error: measured.error,
        tolerance: tol,
        pass: (measured.value - diag.value).abs() <= tol,
    };
    let bounded = Check {
        check: "vanish2_bound".into(),
        i: vec![],
        j: vec![],
        n,
        method: method.name(),
        value: diag.value,
        error: diag.error,
        tolerance: bound,
        pass: diag.value <= bound && measured.value - tol <= bound,
    };
    Ok(vec![identity, bounded])
}

/// Which rule, if any, forces `int prod F_{i_nu} k_{i_nu, j_nu} = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cancellation {
    /// Some label occurs exactly once in `I`.
    SingleI,
    /// `I` is effective, and some label of `J` outside `S(I)` occurs once in `J`.
    SingleJ,
    /// Neither rule applies.
    Effective,
}

pub fn classify(i: &[usize], j: &[usize]) -> Cancellation {
    let once = |t: &[usize], e: usize| t.iter().filter(|&&x| x == e).count() == 1;
    if i.iter().any(|&e| once(i, e)) {
        return Cancellation::SingleI;
    }
    let s: BTreeSet<usize> = i.iter().copied().collect();
    if in_p(&s, j) {
        Cancellation::Effective
    } else {
        Cancellation::SingleJ
    }
}

fn all_tuples(n: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    crate::combinatorics::for_each_tuple(n, p, |t| out.push(t.to_vec())).expect("guarded by caller");
    out
}

/// Scan every `(I, J)` in `{1..n}^p x {1..n}^p` for `p <= p_max`: each pair
/// that a cancellation rule covers must integrate to zero; effective pairs
/// are recorded with their value.
pub fn verify_general_rule(law: &dyn ReferenceLaw, kernel: &Kernel, n: usize, p_max: usize) -> Result<Vec<Check>> {
    if n > MAX_ACTIVE_FACTORIZED || p_max > 3 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive scan needs n <= {MAX_ACTIVE_FACTORIZED} and p <= 3"
        )));
    }
    let oracle = ProductOracle::new(law, kernel)?;
    let mut rows = Vec::new();
    for p in 1..=p_max {
        let tuples = all_tuples(n, p);
        let pairs: Vec<(&Vec<usize>, &Vec<usize>)> =
            tuples.iter().flat_map(|i| tuples.iter().map(move |j| (i, j))).collect();
        let results = par::map_indexed(pairs.len(), |idx| {
            let (i, j) = pairs[idx];
            oracle.integral(i, j, n, Method::Quadrature)
        });
        for ((i, j), est) in pairs.iter().zip(results) {
            let est = est?;
            let row = match classify(i, j) {
                Cancellation::SingleI => Check::zero("rule_single_i", i, j, n, Method::Quadrature, est, QUADRATURE_ZERO_TOL),
                Cancellation::SingleJ => Check::zero("rule_single_j", i, j, n, Method::Quadrature, est, QUADRATURE_ZERO_TOL),
                Cancellation::Effective => Check {
                    check: "effective".into(),
                    i: i.to_vec(),
                    j: j.to_vec(),
                    n,
                    method: "quadrature",
                    value: est.value,
                    error: est.error,
                    tolerance: f64::INFINITY,
                    pass: true,
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// The three evaluations of `N^{2k} int R_N^{2k} f^{(x) N}` and a mutated
/// restricted sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionReport {
    pub n: usize,
    pub k: usize,
    /// Sum of every `(I, J)` term.
    pub full: IntegralEstimate,
    /// Sum over effective `I` and admissible `J` only.
    pub restricted: IntegralEstimate,
    /// Monte-Carlo estimate of `N^{2k} int R_N^{2k}`.
    pub direct: IntegralEstimate,
    /// The restricted sum with its largest term dropped.
    pub mutated: f64,
    pub checks: Vec<Check>,
}

/// Expand `R_N^{2k}` over `{1..n}^{2k} x {1..n}^{2k}` and compare the full
/// sum, the effective-set sum and a direct Monte-Carlo estimate.
pub fn verify_expansion(
    law: &dyn ReferenceLaw,
    kernel: &Kernel,
    n: usize,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<ExpansionReport> {
    if k == 0 || n == 0 || (n as u64).pow(4 * k as u32) > 100_000 {
        return Err(Error::InvalidArgument(format!("expansion of n = {n}, k = {k} is too large")));
    }
    let oracle = ProductOracle::new(law, kernel)?;
    let tuples = all_tuples(n, 2 * k);
    let pairs: Vec<(&Vec<usize>, &Vec<usize>)> = tuples.iter().flat_map(|i| tuples.iter().map(move |j| (i, j))).collect();
    let terms = par::map_indexed(pairs.len(), |idx| oracle.integral(pairs[idx].0, pairs[idx].1, n, Method::Quadrature))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut full = IntegralEstimate { value: 0.0, error: 0.0 };
    let mut restricted = IntegralEstimate { value: 0.0, error: 0.0 };
    let mut largest = 0.0f64;
    for ((i, j), t) in pairs.iter().zip(&terms) {
        full.value += t.value;
        full.error += t.error;
        if classify(i, j) == Cancellation::Effective {
            restricted.value += t.value;
            restricted.error += t.error;
            if t.value.abs() > largest.abs() {
                largest = t.value;
            }
        }
    }
    let scale = (n as f64).powi(2 * k as i32);
    let mc = r_n_sample_powers(law, kernel, n, samples, seed, 2 * k as i32)?;
    let direct = IntegralEstimate {
        value: mc.value * scale,
        error: mc.error * scale,
    };
    let mutated = restricted.value - largest;
    let sum_tol = 1e-7 + full.error + restricted.error;
    let mk = |check: &str, value: f64, error: f64, tolerance: f64, pass: bool| Check {
        check: check.into(),
        i: vec![],
        j: vec![],
        n,
        method: "quadrature",
        value,
        error,
        tolerance,
        pass,
    };
    let gap = full.value - restricted.value;
    let direct_gap = direct.value - full.value;
    let direct_tol = 3.0 * direct.error + full.error;
    let checks = vec![
        mk("expansion_restricted", gap, full.error + restricted.error, sum_tol, gap.abs() <= sum_tol),
        Check {
            method: "monte_carlo",
            ..mk("expansion_direct", direct_gap, direct.error, direct_tol, direct_gap.abs() <= direct_tol)
        },
        mk(
            "expansion_mutation_detected",
            mutated - full.value,
            0.0,
            sum_tol,
            largest == 0.0 || (mutated - full.value).abs() > sum_tol,
        ),
    ];
    Ok(ExpansionReport {
        n,
        k,
        full,
        restricted,
        direct,
        mutated,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_metrics::{Maxwellian, ModulatedMaxwellian};
    use crate::kernels::KernelSpec;
    use approx::assert_abs_diff_eq;

    fn sine() -> Kernel {
        Kernel::on_torus_1d(KernelSpec::Sine { kappa: 1.0 }).unwrap()
    }

    const MAXW: Maxwellian = Maxwellian { sigma: 1.0 };

    #[test]
    fn hand_values() {
        let k = sine();
        let o = ProductOracle::new(&MAXW, &k).unwrap();
        let same = o.integral(&[1, 1], &[1, 1], 2, Method::Quadrature).unwrap();
        assert_eq!(same.value, 0.0);
        let pair = o.integral(&[1, 1], &[2, 2], 2, Method::Quadrature).unwrap();
        assert_abs_diff_eq!(pair.value, 0.5, epsilon = 1e-12);
        let swap = o.integral(&[1, 2], &[2, 1], 2, Method::Quadrature).unwrap();
        assert!(swap.value.abs() <= 1e-10);
    }

    #[test]
    fn factorized_and_tensor_rules_agree() {
        let law = ModulatedMaxwellian { sigma: 1.0, alpha: 0.4 };
        let k = sine();
        let o = ProductOracle::new(&law, &k).unwrap();
        for (i, j) in [(vec![1, 1], vec![2, 2]), (vec![1, 1], vec![1, 1]), (vec![1, 1], vec![2, 1]), (vec![2, 2], vec![1, 1])] {
            let a = o.integral(&i, &j, 2, Method::Quadrature).unwrap();
            let b = o.integral(&i, &j, 2, Method::TensorQuadrature).unwrap();
            assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-9);
            assert!(a.error < 1e-10 && b.error < 1e-6, "{a:?} {b:?}");
        }
    }

    #[test]
    fn spectators_integrate_out() {
        let law = ModulatedMaxwellian { sigma: 1.0, alpha: 0.3 };
        let k = sine();
        let o = ProductOracle::new(&law, &k).unwrap();
        let alone = o.integral(&[1, 1], &[1, 1], 1, Method::TensorQuadrature).unwrap();
        let with = o.integral_with_spectators(&[1, 1], &[1, 1], 1, 1).unwrap();
        assert_abs_diff_eq!(alone.value, with.value, epsilon = 1e-12);
        let a = o.integral(&[1, 1], &[2, 2], 2, Method::Quadrature).unwrap();
        let b = o.integral(&[1, 1], &[2, 2], 3, Method::Quadrature).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let law = ModulatedMaxwellian { sigma: 1.0, alpha: 0.5 };
        let k = sine();
        let o = ProductOracle::new(&law, &k).unwrap();
        for (i, j) in [(vec![1, 1], vec![2, 2]), (vec![1, 1], vec![1, 1]), (vec![1, 2], vec![2, 1])] {
            let q = o.integral(&i, &j, 2, Method::Quadrature).unwrap();
            let m = o.integral(&i, &j, 2, Method::MonteCarlo { samples: 40_000, seed: 9 }).unwrap();
            assert!((q.value - m.value).abs() <= 3.0 * m.error + 1e-12, "{i:?} {j:?}: {q:?} {m:?}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let k = sine();
        let spec = ProductIntegralSpec {
            i: vec![1, 3],
            j: vec![1, 1],
            n: 2,
            law: &MAXW,
            kernel: &k,
            method: Method::Quadrature,
        };
        assert!(integral_product(&spec).is_err());
        let o = ProductOracle::new(&MAXW, &k).unwrap();
        assert!(o.integral(&[1], &[1, 2], 2, Method::Quadrature).is_err());
        assert!(matches!(
            o.integral(&[1, 2, 3], &[4, 5, 5], 5, Method::Quadrature),
            Err(Error::TooManyActive { .. })
        ));
        assert!(matches!(
            o.integral(&[1, 1, 1], &[2, 3, 3], 3, Method::TensorQuadrature),
            Err(Error::TooManyActive { .. })
        ));
        let free = Kernel::new(KernelSpec::Sine { kappa: 1.0 }, 1, Domain::FreeSpace).unwrap();
        assert!(ProductOracle::new(&MAXW, &free).is_err());
    }

    #[test]
    fn zero_kernel_is_exact() {
        let z = Kernel::zero();
        let v1 = verify_vanish1(&MAXW, &z, 3, Method::Quadrature).unwrap();
        assert_eq!(v1.value, 0.0);
        let v2 = verify_vanish2(&MAXW, &z, 2, Method::Quadrature).unwrap();
        assert!(v2.iter().all(|c| c.pass && c.value == 0.0));
        let e = verify_expansion(&MAXW, &z, 2, 1, 100, 1).unwrap();
        assert_eq!((e.full.value, e.restricted.value, e.direct.value), (0.0, 0.0, 0.0));
    }

    #[test]
    fn vanish1_and_vanish2() {
        let k = sine();
        assert!(verify_vanish1(&MAXW, &k, 2, Method::Quadrature).unwrap().pass);
        let law = ModulatedMaxwellian { sigma: 1.0, alpha: 0.5 };
        assert!(verify_vanish1(&law, &k, 2, Method::Quadrature).unwrap().pass);
        let mc = verify_vanish1(&MAXW, &k, 10, Method::MonteCarlo { samples: 4000, seed: 2 }).unwrap();
        assert!(mc.pass, "{mc:?}");
        let rows = verify_vanish2(&MAXW, &k, 2, Method::Quadrature).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
        assert_abs_diff_eq!(rows[1].value, 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(second_moment_bound(&MAXW, &k).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&[1, 2], &[2, 1]), Cancellation::SingleI);
        assert_eq!(classify(&[1, 1], &[1, 2]), Cancellation::SingleJ);
        assert_eq!(classify(&[1, 1], &[2, 2]), Cancellation::Effective);
        assert_eq!(classify(&[1, 1], &[1, 1]), Cancellation::Effective);
    }

    #[test]
    fn rule_scan_small() {
        let rows = verify_general_rule(&MAXW, &sine(), 2, 2).unwrap();
        assert_eq!(rows.len(), 4 + 16);
        assert!(rows.iter().all(|r| r.pass));
        let witness = rows.iter().find(|r| r.i == vec![1, 1] && r.j == vec![2, 2]).unwrap();
        assert_abs_diff_eq!(witness.value, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn expansion_at_two_particles() {
        let e = verify_expansion(&MAXW, &sine(), 2, 1, 20_000, 4).unwrap();
        assert_abs_diff_eq!(e.full.value, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.restricted.value, 1.0, epsilon = 1e-9);
        assert!(e.checks.iter().all(|c| c.pass), "{:?}", e.checks);
        assert!((e.mutated - e.full.value).abs() > 0.1);
    }
}
