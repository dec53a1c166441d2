use rand_chacha::ChaCha8Rng;

use super::law::{ConvField, ReferenceLaw};
use super::r_n_from_state;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par;
use crate::rng::{stream, Purpose};

/// Share of the largest term above which an exponential average is flagged.
const MAX_SHARE_FLAG: f64 = 0.05;

/// Draw `n` i.i.d. particles from `law` using one stream.
pub fn sample_configuration(law: &dyn ReferenceLaw, n: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for _ in 0..n {
        let (x, v) = law.sample(rng).ok_or_else(|| Error::NoSampler(law.name()))?;
        xs.push(x);
        vs.push(v);
    }
    Ok((xs, vs))
}

/// `R_N` at `samples` independent configurations; sample `s` uses Monte-Carlo
/// stream `s` of `seed`.
pub(crate) fn r_n_samples(
    law: &dyn ReferenceLaw,
    kernel: &Kernel,
    conv: &ConvField,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let out = par::map_indexed(samples, |s| -> Result<f64> {
        let mut rng = stream(seed, Purpose::MonteCarlo, s as u64);
        let (xs, vs) = sample_configuration(law, n, &mut rng)?;
        Ok(r_n_from_state(&xs, &vs, law, kernel, conv, false))
    });
    out.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMomentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// `log(estimate)`, finite even when `estimate` overflows.
    pub log_estimate: f64,
    /// Largest single term divided by the sum of all terms.
    pub max_share: f64,
    pub unreliable: bool,
    pub samples: usize,
}

/// Monte-Carlo estimate of `int f_N exp(nu |R_N|)` over `Z ~ f^{(x) N}`.
pub fn mc_exp_moment(
    law: &dyn ReferenceLaw,
    kernel: &Kernel,
    nu: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<ExpMomentEstimate> {
    if !(nu >= 0.0) || n == 0 || samples < 2 {
        return Err(Error::InvalidArgument("need nu >= 0, n >= 1 and at least two samples".into()));
    }
    if kernel.is_zero() || nu == 0.0 {
        return Ok(ExpMomentEstimate {
            estimate: 1.0,
            stderr: 0.0,
            log_estimate: 0.0,
            max_share: 1.0 / samples as f64,
            unreliable: false,
            samples,
        });
    }
    let conv = law.conv_field(kernel)?;
    let ys: Vec<f64> = r_n_samples(law, kernel, &conv, n, samples, seed)?
        .into_iter()
        .map(|r| nu * r.abs())
        .collect();
    Ok(log_mean_exp(&ys))
}

/// Mean of `exp(y_s)` with the largest exponent factored out.
fn log_mean_exp(ys: &[f64]) -> ExpMomentEstimate {
    let s = ys.len() as f64;
    let m = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = ys.iter().map(|y| (y - m).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let mean = total / s;
    let var = shifted.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (s - 1.0);
    let log_estimate = m + mean.ln();
    let max_share = 1.0 / total;
    ExpMomentEstimate {
        estimate: log_estimate.exp(),
        stderr: m.exp() * (var / s).sqrt(),
        log_estimate,
        max_share,
        unreliable: max_share > MAX_SHARE_FLAG,
        samples: ys.len(),
    }
}

/// Sample mean of `R_N` and `R_N^2`, with standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RnMoments {
    pub mean: f64,
    pub mean_stderr: f64,
    pub second: f64,
    pub second_stderr: f64,
    pub samples: usize,
}

pub fn mc_r_n_moments(
    law: &dyn ReferenceLaw,
    kernel: &Kernel,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<RnMoments> {
    if n == 0 || samples < 2 {
        return Err(Error::InvalidArgument("need n >= 1 and at least two samples".into()));
    }
    let conv = law.conv_field(kernel)?;
    let r = r_n_samples(law, kernel, &conv, n, samples, seed)?;
    let (m1, s1) = mean_and_stderr(r.iter().copied());
    let (m2, s2) = mean_and_stderr(r.iter().map(|x| x * x));
    Ok(RnMoments {
        mean: m1,
        mean_stderr: s1,
        second: m2,
        second_stderr: s2,
        samples,
    })
}

pub(crate) fn mean_and_stderr<I: Iterator<Item = f64> + Clone>(it: I) -> (f64, f64) {
    let n = it.clone().count() as f64;
    let mean = it.clone().sum::<f64>() / n;
    let var = it.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_metrics::law::{Maxwellian, ModulatedMaxwellian};
    use crate::chaos_metrics::{choose_nu, regime_parameter, theorem_bound};
    use crate::kernels::KernelSpec;
    use approx::assert_abs_diff_eq;

    fn sine(kappa: f64) -> Kernel {
        Kernel::on_torus_1d(KernelSpec::Sine { kappa }).unwrap()
    }

    #[test]
    fn zero_kernel_and_zero_nu_are_exact() {
        let law = Maxwellian { sigma: 1.0 };
        let e = mc_exp_moment(&law, &Kernel::zero(), 0.3, 8, 100, 1).unwrap();
        assert_eq!((e.estimate, e.stderr), (1.0, 0.0));
        let e = mc_exp_moment(&law, &sine(1.0), 0.0, 8, 100, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        let tiny = mc_exp_moment(&law, &sine(1.0), 1e-9, 8, 100, 1).unwrap();
        assert_abs_diff_eq!(tiny.estimate, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let law = ModulatedMaxwellian { sigma: 1.0, alpha: 0.3 };
        let a = mc_exp_moment(&law, &sine(1.0), 0.1, 16, 500, 77).unwrap();
        let b = mc_exp_moment(&law, &sine(1.0), 0.1, 16, 500, 77).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let seq = crate::par::with_threads(Some(1), || mc_exp_moment(&law, &sine(1.0), 0.1, 16, 500, 77).unwrap());
        assert_eq!(a.estimate.to_bits(), seq.estimate.to_bits());
    }

    #[test]
    fn log_mean_exp_survives_huge_exponents() {
        let e = log_mean_exp(&[1000.0, 1000.0, 999.0]);
        assert!(e.estimate.is_infinite());
        assert_abs_diff_eq!(e.log_estimate, 1000.0 + ((2.0 + (-1f64).exp()) / 3.0).ln(), epsilon = 1e-12);
        let dominated = log_mean_exp(&[50.0, 0.0, 0.0, 0.0]);
        assert!(dominated.unreliable);
    }

    #[test]
    fn small_sample_exp_moment_is_under_the_bound() {
        let law = Maxwellian { sigma: 1.0 };
        let k = sine(1.0);
        let nu = choose_nu(k.sup_norm(), law.sup_mp_over_p()).unwrap();
        let a = regime_parameter(nu * k.sup_norm(), law.sup_mp_over_p());
        let e = mc_exp_moment(&law, &k, nu, 8, 2000, 5).unwrap();
        assert!(e.estimate + 3.0 * e.stderr <= theorem_bound(a).unwrap());
    }

    #[test]
    fn r_n_is_centred_with_the_diagonal_second_moment() {
        let law = Maxwellian { sigma: 1.0 };
        let m = mc_r_n_moments(&law, &sine(1.0), 4, 20_000, 1).unwrap();
        assert!(m.mean.abs() <= 3.0 * m.mean_stderr);
        assert!((m.second - 0.75 * 0.5).abs() <= 3.0 * m.second_stderr, "{m:?}");
    }

    #[test]
    fn stderr_helper() {
        let (m, s) = mean_and_stderr([1.0, 2.0, 3.0].into_iter());
        assert_eq!(m, 2.0);
        assert_abs_diff_eq!(s, (1.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }
}
