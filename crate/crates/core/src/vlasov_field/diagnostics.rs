use super::PhaseDensity;
use crate::error::{Error, Result};

/// Floor applied to `log f`.
pub const LOG_FLOOR: f64 = -690.0;
/// `f_tilde` values above this where `f` vanishes break absolute continuity.
const CONTINUITY_TOLERANCE: f64 = 1e-12;

/// A finite value, or an overflowed exponential moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpMoment {
    Finite(f64),
    Overflow,
}

impl ExpMoment {
    pub fn value(self) -> f64 {
        match self {
            ExpMoment::Finite(v) => v,
            ExpMoment::Overflow => f64::INFINITY,
        }
    }
    pub fn is_finite(self) -> bool {
        matches!(self, ExpMoment::Finite(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEntropy {
    pub value: f64,
    /// Cells where `f` was raised to the floor.
    pub floored_cells: usize,
}

fn log_floored(f: f64) -> f64 {
    if f > 0.0 {
        f.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

/// `H(f_tilde | f) = sum f_tilde log(f_tilde / f) dx dv`.
///
/// Evaluated as `sum [f_tilde log(f_tilde / f) - f_tilde + f]`, which equals
/// the relative entropy when both masses are one and is termwise nonnegative.
pub fn relative_entropy_grid(f_tilde: &PhaseDensity, f: &PhaseDensity) -> Result<RelativeEntropy> {
    f_tilde.same_grid(f)?;
    let mut floored = 0;
    let mut s = 0.0;
    for (&a, &b) in f_tilde.values().iter().zip(f.values()) {
        let lb = if b > 0.0 && b.ln() >= LOG_FLOOR {
            b.ln()
        } else {
            if a > CONTINUITY_TOLERANCE {
                return Err(Error::NotAbsolutelyContinuous { value: a });
            }
            floored += 1;
            LOG_FLOOR
        };
        if a > 0.0 {
            s += a * (a.ln() - lb) - a + b;
        } else {
            s += b;
        }
    }
    Ok(RelativeEntropy {
        value: (s * f.cell_area()).max(0.0),
        floored_cells: floored,
    })
}

pub fn l1_distance(a: &PhaseDensity, b: &PhaseDensity) -> Result<f64> {
    a.same_grid(b)?;
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() * a.cell_area())
}

/// `d_v log f` by central differences (one-sided at the box edges).
fn score_v(f: &PhaseDensity) -> Vec<f64> {
    let (gx, gv, dv) = (f.gx(), f.gv(), f.dv());
    let logs: Vec<f64> = f.values().iter().map(|&v| log_floored(v)).collect();
    let mut out = vec![0.0; gx * gv];
    for i in 0..gx {
        let l = &logs[i * gv..(i + 1) * gv];
        let o = &mut out[i * gv..(i + 1) * gv];
        o[0] = (l[1] - l[0]) / dv;
        o[gv - 1] = (l[gv - 1] - l[gv - 2]) / dv;
        for j in 1..gv - 1 {
            o[j] = (l[j + 1] - l[j - 1]) / (2.0 * dv);
        }
    }
    out
}

/// `d_x log f` by periodic central differences.
fn score_x(f: &PhaseDensity) -> Vec<f64> {
    let (gx, gv, dx) = (f.gx(), f.gv(), f.dx());
    let logs: Vec<f64> = f.values().iter().map(|&v| log_floored(v)).collect();
    let mut out = vec![0.0; gx * gv];
    for i in 0..gx {
        let ip = (i + 1) % gx;
        let im = (i + gx - 1) % gx;
        for j in 0..gv {
            out[i * gv + j] = (logs[ip * gv + j] - logs[im * gv + j]) / (2.0 * dx);
        }
    }
    out
}

fn log_space_moment(f: &PhaseDensity, lambda: f64, weight: &[f64]) -> ExpMoment {
    let exps: Vec<f64> = f
        .values()
        .iter()
        .zip(weight)
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, w)| v.ln() + lambda * w)
        .collect();
    let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return ExpMoment::Finite(0.0);
    }
    let log_total = m + exps.iter().map(|e| (e - m).exp()).sum::<f64>().ln() + f.cell_area().ln();
    if log_total > 709.0 {
        ExpMoment::Overflow
    } else {
        ExpMoment::Finite(log_total.exp())
    }
}

/// `int f exp(lambda |d_v log f|)`, accumulated in log space.
pub fn theta_exp_moment(f: &PhaseDensity, lambda: f64) -> ExpMoment {
    let w: Vec<f64> = score_v(f).iter().map(|s| s.abs()).collect();
    log_space_moment(f, lambda, &w)
}

/// `int f exp(lambda |grad_(x,v) log f|)`.
pub fn theta_full_gradient(f: &PhaseDensity, lambda: f64) -> ExpMoment {
    let w: Vec<f64> = score_v(f)
        .iter()
        .zip(score_x(f))
        .map(|(a, b)| a.hypot(b))
        .collect();
    log_space_moment(f, lambda, &w)
}

/// `int |d_v log f| |f_tilde - f|`.
pub fn weighted_l1(f_tilde: &PhaseDensity, f: &PhaseDensity) -> Result<f64> {
    f_tilde.same_grid(f)?;
    let phi = score_v(f);
    Ok(phi
        .iter()
        .zip(f_tilde.values().iter().zip(f.values()))
        .map(|(p, (a, b))| p.abs() * (a - b).abs())
        .sum::<f64>()
        * f.cell_area())
}

/// Right-hand side `(2/lambda)(3/2 + log theta)(sqrt(H) + H/2)` of the
/// weighted CKP inequality with weight `|d_v log f|`.
pub fn weighted_ckp_bound(f_tilde: &PhaseDensity, f: &PhaseDensity, lambda: f64) -> Result<ExpMoment> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let h = relative_entropy_grid(f_tilde, f)?.value;
    Ok(match theta_exp_moment(f, lambda) {
        ExpMoment::Overflow => ExpMoment::Overflow,
        ExpMoment::Finite(theta) => {
            ExpMoment::Finite((2.0 / lambda) * (1.5 + theta.ln()) * (h.sqrt() + 0.5 * h))
        }
    })
}

/// Mean and variance of the velocity marginal.
pub fn v_moments(f: &PhaseDensity) -> (f64, f64) {
    let gv = f.gv();
    let mut marg = vec![0.0; gv];
    for row in f.values().chunks(gv) {
        marg.iter_mut().zip(row).for_each(|(m, r)| *m += r);
    }
    let w = f.cell_area();
    let mean: f64 = marg.iter().enumerate().map(|(j, m)| m * w * f.v_node(j)).sum();
    let var: f64 = marg
        .iter()
        .enumerate()
        .map(|(j, m)| m * w * (f.v_node(j) - mean).powi(2))
        .sum();
    (mean, var)
}
