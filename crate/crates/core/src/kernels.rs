//! Bounded interaction kernels and the mean-field convolution `K * rho`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Spatial domain of the particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Unit torus `[0, 1)^d` with minimal-image displacements.
    #[default]
    Torus,
    FreeSpace,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Torus => "torus",
            Domain::FreeSpace => "free space",
        }
    }

    /// Map a coordinate into the fundamental cell (identity in free space).
    #[inline]
    pub fn wrap(self, x: f64) -> f64 {
        match self {
            Domain::Torus => {
                let w = x - x.floor();
                if w >= 1.0 {
                    0.0
                } else {
                    w
                }
            }
            Domain::FreeSpace => x,
        }
    }

    /// Minimal-image displacement component, in `[-1/2, 1/2]` on the torus.
    ///
    /// `displacement(-d) == -displacement(d)` holds bit for bit.
    #[inline]
    pub fn displacement(self, d: f64) -> f64 {
        match self {
            Domain::Torus => d - d.round(),
            Domain::FreeSpace => d,
        }
    }
}

/// Documentation-only regularity tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth,
    Rough,
}

/// Kernel as written in experiment configs, e.g. `{"kind":"sine","kappa":1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Zero,
    Sine {
        kappa: f64,
    },
    CoulombTrunc {
        kappa: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
    RoughSign {
        kappa: f64,
    },
}

fn default_delta() -> f64 {
    1e-3
}

impl KernelSpec {
    /// Same kernel shape with its amplitude multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> KernelSpec {
        match self {
            KernelSpec::Zero => KernelSpec::Zero,
            KernelSpec::Sine { kappa } => KernelSpec::Sine {
                kappa: kappa * factor,
            },
            KernelSpec::CoulombTrunc { kappa, delta } => KernelSpec::CoulombTrunc {
                kappa: kappa * factor,
                delta,
            },
            KernelSpec::RoughSign { kappa } => KernelSpec::RoughSign {
                kappa: kappa * factor,
            },
        }
    }
}

/// A bounded interaction force `x -> K(x)` on `Omega`, with `K(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    spec: KernelSpec,
    dim: usize,
    domain: Domain,
    sup_norm: f64,
    is_odd: bool,
    smoothness: Smoothness,
}

impl Kernel {
    pub fn new(spec: KernelSpec, dim: usize, domain: Domain) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be >= 1".into()));
        }
        let check_kappa = |kappa: f64| {
            if kappa.is_finite() && kappa >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "kernel amplitude must be finite and nonnegative, got {kappa}"
                )))
            }
        };
        let (sup_norm, smoothness) = match spec {
            KernelSpec::Zero => (0.0, Smoothness::Smooth),
            KernelSpec::Sine { kappa } => {
                check_kappa(kappa)?;
                (kappa * (dim as f64).sqrt(), Smoothness::Smooth)
            }
            KernelSpec::CoulombTrunc { kappa, delta } => {
                check_kappa(kappa)?;
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "truncation radius must be positive, got {delta}"
                    )));
                }
                (kappa / delta.powi(dim as i32 - 1), Smoothness::Rough)
            }
            KernelSpec::RoughSign { kappa } => {
                check_kappa(kappa)?;
                (kappa, Smoothness::Rough)
            }
        };
        Ok(Kernel {
            spec,
            dim,
            domain,
            sup_norm,
            is_odd: true,
            smoothness,
        })
    }

    /// One-dimensional kernel on the unit torus.
    pub fn on_torus_1d(spec: KernelSpec) -> Result<Self> {
        Self::new(spec, 1, Domain::Torus)
    }

    pub fn zero() -> Self {
        Self::new(KernelSpec::Zero, 1, Domain::Torus).expect("zero kernel is valid")
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    /// Certified bound on `|K|`.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
    pub fn is_odd(&self) -> bool {
        self.is_odd
    }
    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }
    pub fn is_zero(&self) -> bool {
        matches!(self.spec, KernelSpec::Zero) || self.sup_norm == 0.0
    }

    /// `K(x)` for a displacement `x` (wrapped to the minimal image on the torus).
    ///
    /// Returns the zero vector at `x = 0`. On the torus, components sitting
    /// exactly on the antipode `+-1/2` are ambiguous and the value is averaged
    /// over both images, which keeps odd kernels odd there.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        let mut y = [0.0f64; 8];
        let y = if self.dim <= 8 {
            &mut y[..self.dim]
        } else {
            // high dimensions are unusual; fall back to the heap
            return self.eval_heap(x, out);
        };
        for (yk, &xk) in y.iter_mut().zip(x) {
            *yk = self.domain.displacement(xk);
        }
        self.eval_wrapped(y, out);
    }

    fn eval_heap(&self, x: &[f64], out: &mut [f64]) {
        let mut y: Vec<f64> = x.iter().map(|&xk| self.domain.displacement(xk)).collect();
        self.eval_wrapped(&mut y, out);
    }

    fn eval_wrapped(&self, y: &mut [f64], out: &mut [f64]) {
        if y.iter().all(|&c| c == 0.0) {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let antipodal = self.domain == Domain::Torus && y.iter().any(|c| c.abs() == 0.5);
        if !antipodal {
            self.raw(y, out);
            return;
        }
        let idx: Vec<usize> = (0..y.len()).filter(|&k| y[k].abs() == 0.5).collect();
        let combos = 1usize << idx.len();
        let mut acc = vec![0.0; out.len()];
        let mut tmp = vec![0.0; out.len()];
        for mask in 0..combos {
            for (b, &k) in idx.iter().enumerate() {
                y[k] = if mask >> b & 1 == 1 { 0.5 } else { -0.5 };
            }
            self.raw(y, &mut tmp);
            acc.iter_mut().zip(&tmp).for_each(|(a, t)| *a += t);
        }
        let w = 1.0 / combos as f64;
        out.iter_mut().zip(&acc).for_each(|(o, a)| *o = a * w);
    }

    fn raw(&self, y: &[f64], out: &mut [f64]) {
        match self.spec {
            KernelSpec::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            KernelSpec::Sine { kappa } => {
                for (o, &c) in out.iter_mut().zip(y) {
                    *o = kappa * (2.0 * PI * c).sin();
                }
            }
            KernelSpec::CoulombTrunc { kappa, delta } => {
                let r = norm(y);
                let scale = kappa / r.max(delta).powi(self.dim as i32);
                for (o, &c) in out.iter_mut().zip(y) {
                    *o = scale * c;
                }
            }
            KernelSpec::RoughSign { kappa } => {
                let r = norm(y);
                let s = sign((1.0 / r).sin());
                for (o, &c) in out.iter_mut().zip(y) {
                    *o = kappa * s * c / r;
                }
            }
        }
    }

    /// Scalar convenience for `d = 1`.
    #[inline]
    pub fn eval1(&self, x: f64) -> f64 {
        debug_assert_eq!(self.dim, 1);
        let mut out = [0.0];
        self.eval(&[x], &mut out);
        out[0]
    }

    /// Mean-field drift `(1/N) sum_{j != i} K(x_i - x_j)` for every particle.
    ///
    /// `positions` holds `N x d` coordinates, particle-major. Sums run over
    /// `j` in increasing order, independently of the worker count. The sine
    /// kernel factorises, which makes its drift `O(N)`.
    pub fn mean_field_drift(&self, positions: &[f64]) -> Vec<f64> {
        let prepared = Prepared::new(self, positions);
        let d = self.dim;
        let n = positions.len() / d;
        let mut out = vec![0.0; positions.len()];
        par::for_each_chunk_mut(&mut out, d, |i, acc| prepared.accumulate(self, positions, n, i, acc));
        out
    }

    /// Sequential reference for [`Kernel::mean_field_drift`].
    pub fn mean_field_drift_sequential(&self, positions: &[f64]) -> Vec<f64> {
        let prepared = Prepared::new(self, positions);
        let d = self.dim;
        let n = positions.len() / d;
        let mut out = vec![0.0; positions.len()];
        for (i, acc) in out.chunks_mut(d).enumerate() {
            prepared.accumulate(self, positions, n, i, acc);
        }
        out
    }

    /// Largest `|K(x)|` over a uniform grid of `points` samples per axis of the
    /// fundamental cell (`[-1/2, 1/2]^d`, also used in free space).
    pub fn sampled_sup(&self, points: usize) -> f64 {
        let d = self.dim;
        let total = points.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut out = vec![0.0; d];
        let mut best: f64 = 0.0;
        for flat in 0..total {
            let mut r = flat;
            for xk in x.iter_mut() {
                *xk = -0.5 + (r % points) as f64 / (points - 1).max(1) as f64;
                r /= points;
            }
            self.eval(&x, &mut out);
            best = best.max(norm(&out));
        }
        best
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn sign(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Per-call precomputation for the pair loop.
enum Prepared {
    Direct,
    /// `sum_j sin(2 pi (a - b_j)) = sin a' sum_j cos b_j' - cos a' sum_j sin b_j'`,
    /// with per-axis totals summed once in index order.
    Trig {
        kappa: f64,
        s: Vec<f64>,
        c: Vec<f64>,
        s_total: Vec<f64>,
        c_total: Vec<f64>,
    },
}

impl Prepared {
    fn new(kernel: &Kernel, positions: &[f64]) -> Self {
        match kernel.spec {
            KernelSpec::Sine { kappa } => {
                let (s, c): (Vec<f64>, Vec<f64>) = positions.iter().map(|&x| (2.0 * PI * x).sin_cos()).unzip();
                let d = kernel.dim;
                let mut s_total = vec![0.0; d];
                let mut c_total = vec![0.0; d];
                for (idx, (sv, cv)) in s.iter().zip(&c).enumerate() {
                    s_total[idx % d] += sv;
                    c_total[idx % d] += cv;
                }
                Prepared::Trig {
                    kappa,
                    s,
                    c,
                    s_total,
                    c_total,
                }
            }
            _ => Prepared::Direct,
        }
    }

    fn accumulate(&self, kernel: &Kernel, positions: &[f64], n: usize, i: usize, acc: &mut [f64]) {
        let d = kernel.dim;
        acc.iter_mut().for_each(|a| *a = 0.0);
        if kernel.is_zero() {
            return;
        }
        match self {
            Prepared::Trig {
                kappa,
                s,
                c,
                s_total,
                c_total,
            } => {
                for k in 0..d {
                    let a = i * d + k;
                    // the self term s_a c_a - c_a s_a is removed from both totals
                    acc[k] = kappa * (s[a] * (c_total[k] - c[a]) - c[a] * (s_total[k] - s[a])) / n as f64;
                }
            }
            Prepared::Direct => {
                let xi = &positions[i * d..(i + 1) * d];
                let mut disp = vec![0.0; d];
                let mut f = vec![0.0; d];
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let xj = &positions[j * d..(j + 1) * d];
                    for k in 0..d {
                        disp[k] = xi[k] - xj[k];
                    }
                    kernel.eval(&disp, &mut f);
                    acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v);
                }
                acc.iter_mut().for_each(|a| *a /= n as f64);
            }
        }
    }
}

/// A one-dimensional probability density sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    values: Vec<f64>,
    dx: f64,
    origin: f64,
    domain: Domain,
}

/// Tolerance on `sum(values) * dx = 1`.
pub const MASS_TOLERANCE: f64 = 1e-10;

impl DensityField {
    /// Validates nonnegativity and unit mass.
    pub fn new(values: Vec<f64>, dx: f64, origin: f64, domain: Domain) -> Result<Self> {
        if values.is_empty() || !(dx > 0.0) {
            return Err(Error::InvalidArgument("density grid must be nonempty with dx > 0".into()));
        }
        if domain == Domain::Torus && (values.len() as f64 * dx - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "a torus density must cover the unit cell (G * dx = 1)".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("density values must be finite and >= 0".into()));
        }
        let field = DensityField {
            values,
            dx,
            origin,
            domain,
        };
        let mass = field.mass();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "density mass {mass} differs from 1 by more than {MASS_TOLERANCE:e}"
            )));
        }
        Ok(field)
    }

    /// Rescale nonnegative values to unit mass, then validate.
    pub fn normalized(mut values: Vec<f64>, dx: f64, origin: f64, domain: Domain) -> Result<Self> {
        let mass: f64 = values.iter().sum::<f64>() * dx;
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a zero density".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(values, dx, origin, domain)
    }

    /// Uniform density on the unit torus with `g` cells.
    pub fn uniform_torus(g: usize) -> Self {
        Self::new(vec![1.0; g], 1.0 / g as f64, 0.0, Domain::Torus).expect("uniform density is valid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn origin(&self) -> f64 {
        self.origin
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn node(&self, g: usize) -> f64 {
        self.origin + g as f64 * self.dx
    }
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }
}

/// Convolution table for a one-dimensional torus grid of `g` cells:
/// `table[m] = K(m / g)`.
pub(crate) fn torus_table(kernel: &Kernel, g: usize) -> Vec<f64> {
    (0..g).map(|m| kernel.eval1(m as f64 / g as f64)).collect()
}

/// `(K * rho)(x_g) = sum_c K(x_g - x_c) rho(x_c) dx` at every grid node.
pub fn convolve(kernel: &Kernel, rho: &DensityField) -> Result<Vec<f64>> {
    if kernel.dim() != 1 {
        return Err(Error::InvalidArgument("grid convolution is one-dimensional".into()));
    }
    if kernel.domain() != rho.domain() {
        return Err(Error::TopologyMismatch {
            kernel: kernel.domain().name(),
            density: rho.domain().name(),
        });
    }
    if (rho.mass() - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::InvalidArgument("density does not have unit mass".into()));
    }
    Ok(match rho.domain() {
        Domain::Torus => {
            let table = torus_table(kernel, rho.len());
            convolve_with_table(&table, rho.values(), rho.dx())
        }
        Domain::FreeSpace => {
            let g = rho.len();
            let dx = rho.dx();
            let vals = rho.values();
            par::map_indexed(g, |i| {
                vals.iter()
                    .enumerate()
                    .map(|(c, r)| kernel.eval1((i as f64 - c as f64) * dx) * r)
                    .sum::<f64>()
                    * dx
            })
        }
    })
}

/// Periodic convolution against a precomputed table.
pub(crate) fn convolve_with_table(table: &[f64], values: &[f64], dx: f64) -> Vec<f64> {
    let g = values.len();
    par::map_indexed(g, |i| {
        let mut acc = 0.0;
        for (c, r) in values.iter().enumerate() {
            let m = if i >= c { i - c } else { i + g - c };
            acc += table[m] * r;
        }
        acc * dx
    })
}
