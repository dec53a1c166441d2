//! The functional `R_N`, the moments `M_p`, Monte-Carlo exponential moments,
//! marginal distances and the closed-form bounds built from them.

pub mod law;
mod marginals;
mod montecarlo;

use std::f64::consts::E;

pub use law::{ConvField, LawSpec, Maxwellian, ModulatedMaxwellian, ReferenceLaw};
pub use marginals::{
    marginal_and_distance, Binning, CellReference, MarginalHistogram, MarginalReport, MIN_EXPECTED_PER_BIN,
};
pub use montecarlo::{mc_exp_moment, mc_r_n_moments, sample_configuration, ExpMomentEstimate, RnMoments};
pub(crate) use montecarlo::{mean_and_stderr, r_n_samples};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::particle_system::ParticleEnsemble;
use crate::quadrature::{adaptive, GaussLegendre};

/// `R_N = (1/N) sum_{i,j} score(z_i) {K(x_i - x_j) - (K * rho)(x_i)}` with
/// `K(0) = 0`.
pub fn r_n(ens: &ParticleEnsemble, law: &dyn ReferenceLaw, kernel: &Kernel) -> Result<f64> {
    if ens.dim() != 1 {
        return Err(Error::InvalidArgument("R_N is evaluated for d = 1".into()));
    }
    let conv = law.conv_field(kernel)?;
    Ok(r_n_from_state(ens.positions(), ens.velocities(), law, kernel, &conv, false))
}

/// `R_N` from raw coordinates.
///
/// Summing over `j` first gives `sum_i F_i (drift_i - (K * rho)(x_i))` with
/// `drift_i = (1/N) sum_{j != i} K(x_i - x_j)`, which reuses the force loop.
pub fn r_n_from_state(
    xs: &[f64],
    vs: &[f64],
    law: &dyn ReferenceLaw,
    kernel: &Kernel,
    conv: &ConvField,
    parallel: bool,
) -> f64 {
    if kernel.is_zero() {
        return 0.0;
    }
    let drift = if parallel {
        kernel.mean_field_drift(xs)
    } else {
        kernel.mean_field_drift_sequential(xs)
    };
    xs.iter()
        .zip(vs)
        .zip(&drift)
        .map(|((&x, &v), d)| law.score(x, v) * (d - conv.eval(x)))
        .sum()
}

/// `M_p = (int |grad_v log f|^p f)^{1/p}`, closed form when the law has one.
pub fn m_p(law: &dyn ReferenceLaw, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("M_p needs p >= 1".into()));
    }
    if let Some(m) = law.m_p_closed(p) {
        return Ok(m);
    }
    m_p_quadrature(law, p)
}

/// `M_p` by quadrature, ignoring any closed form.
pub fn m_p_quadrature(law: &dyn ReferenceLaw, p: u32) -> Result<f64> {
    let s = law.velocity_scale();
    let rule = GaussLegendre::new(32);
    let (xs, wx) = rule.on_interval(0.0, 1.0);
    let mut total = 0.0;
    for (x, w) in xs.iter().zip(&wx) {
        let inner = adaptive(
            |v| law.score(*x, v).abs().powi(p as i32) * law.density(*x, v),
            -14.0 * s,
            14.0 * s,
            1e-12,
        )?;
        total += w * inner;
    }
    Ok(total.powf(1.0 / p as f64))
}

/// `max_{1 <= p <= p_max} M_p / p`.
pub fn sup_ratio(law: &dyn ReferenceLaw, p_max: u32) -> Result<f64> {
    let mut best: f64 = 0.0;
    for p in 1..=p_max.max(1) {
        best = best.max(m_p(law, p)? / p as f64);
    }
    Ok(best)
}

/// `nu = 1 / (16 e^2 |K|_inf sup_p M_p / p)`.
pub fn choose_nu(k_norm: f64, sup_ratio: f64) -> Result<f64> {
    if !(k_norm > 0.0 && sup_ratio > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need positive kernel norm and moment ratio, got {k_norm} and {sup_ratio}"
        )));
    }
    Ok(1.0 / (16.0 * E * E * k_norm * sup_ratio))
}

/// `a = 8 e^2 |K|_inf sup_p M_p / p`.
pub fn regime_parameter(k_norm: f64, sup_ratio: f64) -> f64 {
    8.0 * E * E * k_norm * sup_ratio
}

/// `5 + 6 (a / (1 - a^2))^2` for `0 <= a < 1`.
pub fn theorem_bound(a: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::OutsideRegime(a));
    }
    let r = a / (1.0 - a * a);
    Ok(5.0 + 6.0 * r * r)
}

/// Gronwall envelope `(h0 + alpha_N + L T / (nu N)) exp(t / nu)` on the
/// horizon `T`.
pub fn hn_gronwall_envelope(h0: f64, alpha_n: f64, l: f64, nu: f64, t: f64, n: usize, horizon: f64) -> Result<f64> {
    if h0 < 0.0 || alpha_n < 0.0 || l < 0.0 || t < 0.0 || horizon < 0.0 || !(nu > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("envelope inputs must be nonnegative, nu > 0, N >= 1".into()));
    }
    Ok((h0 + alpha_n + l * horizon / (nu * n as f64)) * (t / nu).exp())
}

/// Right-hand side `x log x + e^{y - 1}` of the Fenchel inequality
/// `x y <= x log x + e^{y - 1}` (`x >= 0`).
pub fn fenchel_rhs(x: f64, y: f64) -> f64 {
    let xlogx = if x > 0.0 { x * x.ln() } else { 0.0 };
    xlogx + (y - 1.0).exp()
}
