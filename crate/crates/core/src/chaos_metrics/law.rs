//! Analytic reference laws `f(x, v)` on `T^1 x R`.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};
use crate::kernels::{convolve, DensityField, Domain, Kernel, KernelSpec};
use crate::quadrature::GaussLegendre;

/// `K * rho` for one (law, kernel) pair, as a function of `x`.
#[derive(Debug, Clone)]
pub enum ConvField {
    Zero,
    /// `amplitude * sin(2 pi x)`.
    Sine { amplitude: f64 },
    /// Periodic table on `g` uniform nodes, linearly interpolated.
    Table(Vec<f64>),
}

impl ConvField {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ConvField::Zero => 0.0,
            ConvField::Sine { amplitude } => amplitude * (2.0 * PI * x).sin(),
            ConvField::Table(t) => {
                let g = t.len();
                let y = Domain::Torus.wrap(x) * g as f64;
                let i = (y.floor() as usize).min(g - 1);
                let s = y - i as f64;
                (1.0 - s) * t[i] + s * t[(i + 1) % g]
            }
        }
    }
}

/// Nodes used when `K * rho` has to be tabulated.
pub const CONV_TABLE_NODES: usize = 4096;

/// An analytic law with closed-form density, macroscopic density and
/// velocity score `grad_v log f`.
pub trait ReferenceLaw: Debug + Send + Sync {
    fn name(&self) -> String;
    fn density(&self, x: f64, v: f64) -> f64;
    fn rho(&self, x: f64) -> f64;
    /// `grad_v log f(x, v)`.
    fn score(&self, x: f64, v: f64) -> f64;
    /// `grad_x log f(x, v)`.
    fn grad_x_log(&self, x: f64, v: f64) -> f64;
    /// Velocity spread used to size truncated velocity boxes.
    fn velocity_scale(&self) -> f64;

    /// Closed-form `M_p`, when known.
    fn m_p_closed(&self, _p: u32) -> Option<f64> {
        None
    }
    /// Certified upper bound on `sup_p M_p / p`.
    fn sup_mp_over_p(&self) -> f64;

    /// `K * rho`. The default tabulates the convolution on a fine grid.
    fn conv_field(&self, kernel: &Kernel) -> Result<ConvField> {
        tabulate_conv_field(self, kernel)
    }

    /// One exact draw `(x, v)`, or `None` when the law has no sampler.
    fn sample(&self, _rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
        None
    }

    /// `(C, k)` with `|grad_(x,v) log f| <= C (1 + |x|^k + |v|^k)`, if known.
    fn full_gradient_bound(&self) -> Option<(f64, u32)> {
        None
    }

    /// Probability of `[x0, x1] x [v0, v1]`; `v0`/`v1` may be infinite.
    fn cell_mass(&self, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
        let s = self.velocity_scale();
        let lo = v0.max(-14.0 * s);
        let hi = v1.min(14.0 * s);
        if hi <= lo || x1 <= x0 {
            return 0.0;
        }
        let rule = GaussLegendre::new(24);
        let (xs, wx) = rule.on_interval(x0, x1);
        let (vs, wv) = rule.on_interval(lo, hi);
        let mut acc = 0.0;
        for (x, a) in xs.iter().zip(&wx) {
            for (v, b) in vs.iter().zip(&wv) {
                acc += a * b * self.density(*x, *v);
            }
        }
        acc
    }
}

fn tabulate_conv_field<L: ReferenceLaw + ?Sized>(law: &L, kernel: &Kernel) -> Result<ConvField> {
    if kernel.dim() != 1 || kernel.domain() != Domain::Torus {
        return Err(Error::InvalidArgument(
            "reference laws live on the one-dimensional torus".into(),
        ));
    }
    if kernel.is_zero() {
        return Ok(ConvField::Zero);
    }
    let g = CONV_TABLE_NODES;
    let vals: Vec<f64> = (0..g).map(|i| law.rho(i as f64 / g as f64)).collect();
    let rho = DensityField::normalized(vals, 1.0 / g as f64, 0.0, Domain::Torus)?;
    Ok(ConvField::Table(convolve(kernel, &rho)?))
}

/// `P(a <= sigma Z <= b)` for standard normal `Z`, accurate in both tails.
pub fn normal_interval(a: f64, b: f64, sigma: f64) -> f64 {
    let phi_c = |t: f64| 0.5 * erfc(t / (sigma * std::f64::consts::SQRT_2));
    if b <= a {
        0.0
    } else if a >= 0.0 {
        phi_c(a) - phi_c(b)
    } else if b <= 0.0 {
        phi_c(-b) - phi_c(-a)
    } else {
        1.0 - phi_c(-a) - phi_c(b)
    }
}

fn gaussian(v: f64, sigma: f64) -> f64 {
    (-(v * v) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// `M_p` of a centred Gaussian with standard deviation `sigma`.
pub fn gaussian_m_p(sigma: f64, p: u32) -> f64 {
    let p = p as f64;
    let log_moment = 0.5 * p * 2f64.ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * PI.ln();
    (log_moment / p).exp() / sigma
}

/// Uniform-in-`x` Maxwellian `f = (2 pi sigma^2)^{-1/2} exp(-v^2 / 2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian {
    pub sigma: f64,
}

impl ReferenceLaw for Maxwellian {
    fn name(&self) -> String {
        format!("maxwellian(sigma={})", self.sigma)
    }
    fn density(&self, _x: f64, v: f64) -> f64 {
        gaussian(v, self.sigma)
    }
    fn rho(&self, _x: f64) -> f64 {
        1.0
    }
    fn score(&self, _x: f64, v: f64) -> f64 {
        -v / (self.sigma * self.sigma)
    }
    fn grad_x_log(&self, _x: f64, _v: f64) -> f64 {
        0.0
    }
    fn velocity_scale(&self) -> f64 {
        self.sigma
    }
    fn m_p_closed(&self, p: u32) -> Option<f64> {
        Some(gaussian_m_p(self.sigma, p))
    }
    /// `M_p / p` is nonincreasing in `p`, so the supremum is `M_1`.
    fn sup_mp_over_p(&self) -> f64 {
        (2.0 / PI).sqrt() / self.sigma
    }
    fn conv_field(&self, kernel: &Kernel) -> Result<ConvField> {
        if kernel.is_odd() && kernel.dim() == 1 && kernel.domain() == Domain::Torus {
            Ok(ConvField::Zero)
        } else {
            tabulate_conv_field(self, kernel)
        }
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
        let x: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        Some((x, self.sigma * z))
    }
    fn full_gradient_bound(&self) -> Option<(f64, u32)> {
        Some((1.0 / (self.sigma * self.sigma), 1))
    }
    fn cell_mass(&self, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
        (x1 - x0).max(0.0) * normal_interval(v0, v1, self.sigma)
    }
}

/// `f = (1 + alpha cos 2 pi x) (2 pi sigma^2)^{-1/2} exp(-v^2 / 2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedMaxwellian {
    pub sigma: f64,
    pub alpha: f64,
}

impl ReferenceLaw for ModulatedMaxwellian {
    fn name(&self) -> String {
        format!("modulated_maxwellian(sigma={}, alpha={})", self.sigma, self.alpha)
    }
    fn density(&self, x: f64, v: f64) -> f64 {
        self.rho(x) * gaussian(v, self.sigma)
    }
    fn rho(&self, x: f64) -> f64 {
        1.0 + self.alpha * (2.0 * PI * x).cos()
    }
    fn score(&self, _x: f64, v: f64) -> f64 {
        -v / (self.sigma * self.sigma)
    }
    fn grad_x_log(&self, x: f64, _v: f64) -> f64 {
        -2.0 * PI * self.alpha * (2.0 * PI * x).sin() / self.rho(x)
    }
    fn velocity_scale(&self) -> f64 {
        self.sigma
    }
    fn m_p_closed(&self, p: u32) -> Option<f64> {
        Some(gaussian_m_p(self.sigma, p))
    }
    fn sup_mp_over_p(&self) -> f64 {
        (2.0 / PI).sqrt() / self.sigma
    }
    fn conv_field(&self, kernel: &Kernel) -> Result<ConvField> {
        match kernel.spec() {
            KernelSpec::Sine { kappa } if kernel.dim() == 1 && kernel.domain() == Domain::Torus => {
                Ok(ConvField::Sine {
                    amplitude: 0.5 * kappa * self.alpha,
                })
            }
            _ => tabulate_conv_field(self, kernel),
        }
    }
    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
        let top = 1.0 + self.alpha.abs();
        let x = loop {
            let x: f64 = rng.random();
            let u: f64 = rng.random();
            if u * top <= self.rho(x) {
                break x;
            }
        };
        let z: f64 = rng.sample(StandardNormal);
        Some((x, self.sigma * z))
    }
    fn full_gradient_bound(&self) -> Option<(f64, u32)> {
        let cx = 2.0 * PI * self.alpha.abs() / (1.0 - self.alpha.abs());
        Some((cx.max(1.0 / (self.sigma * self.sigma)), 1))
    }
    fn cell_mass(&self, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
        let xm = (x1 - x0).max(0.0)
            + self.alpha / (2.0 * PI) * ((2.0 * PI * x1).sin() - (2.0 * PI * x0).sin());
        xm * normal_interval(v0, v1, self.sigma)
    }
}

/// Law selection in experiment configs, e.g. `{"kind":"maxwellian","sigma":1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Maxwellian { sigma: f64 },
    ModulatedMaxwellian { sigma: f64, alpha: f64 },
}

impl Default for LawSpec {
    fn default() -> Self {
        LawSpec::Maxwellian { sigma: 1.0 }
    }
}

impl LawSpec {
    pub fn build(&self) -> Result<Arc<dyn ReferenceLaw>> {
        match *self {
            LawSpec::Maxwellian { sigma } => {
                check_sigma(sigma)?;
                Ok(Arc::new(Maxwellian { sigma }))
            }
            LawSpec::ModulatedMaxwellian { sigma, alpha } => {
                check_sigma(sigma)?;
                if !(alpha.abs() < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "modulation amplitude must satisfy |alpha| < 1, got {alpha}"
                    )));
                }
                Ok(Arc::new(ModulatedMaxwellian { sigma, alpha }))
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}
