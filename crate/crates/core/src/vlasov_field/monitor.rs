use std::io::Write;

use super::{evolve, relative_entropy_grid, step_plan, theta_exp_moment, PhaseDensity, SolverConfig, VlasovSolver};
use crate::error::{Error, Result};
use crate::experiment::fmt_f64;
use crate::kernels::Kernel;
use crate::particle_system::csv_err;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    pub h: f64,
    /// `theta_f(t, lambda)`; infinite if it overflowed.
    pub theta: f64,
    /// Running max of `ln(H(t) / H(0)) / t`.
    pub c_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub rows: Vec<MonitorRow>,
    pub h0: f64,
    pub sup_h: f64,
    /// First recorded time with `H > 1`, where monitoring stopped.
    pub exit_time: Option<f64>,
}

/// Evolve `f_tilde` and `f` side by side and record `H(f_tilde | f)` every
/// `record_every` steps. Monitoring stops at the first `H > 1`.
pub fn weak_strong_monitor(
    f_tilde0: &PhaseDensity,
    f0: &PhaseDensity,
    kernel: &Kernel,
    cfg: SolverConfig,
    t_end: f64,
    lambda: f64,
    record_every: usize,
) -> Result<MonitorReport> {
    f_tilde0.same_grid(f0)?;
    let h0 = relative_entropy_grid(f_tilde0, f0)?.value;
    if h0 > 1.0 {
        return Err(Error::InvalidArgument(format!("initial relative entropy {h0} exceeds 1")));
    }
    let mut a = f_tilde0.clone();
    let mut b = f0.clone();
    let mut rows = vec![MonitorRow {
        t: b.time(),
        h: h0,
        theta: theta_exp_moment(&b, lambda).value(),
        c_hat: f64::NEG_INFINITY,
    }];
    let (steps, dt) = step_plan(b.time(), t_end, cfg.dt)?;
    let solver = VlasovSolver::new(kernel, SolverConfig { dt, ..cfg }, &b)?;
    let t0 = b.time();
    let mut c_hat = f64::NEG_INFINITY;
    let mut sup_h = h0;
    let mut exit_time = None;
    let every = record_every.max(1);
    for s in 1..=steps {
        solver.step(&mut a)?;
        solver.step(&mut b)?;
        let t = t0 + s as f64 * dt;
        if s % every != 0 && s != steps {
            continue;
        }
        let h = relative_entropy_grid(&a, &b)?.value;
        if h0 > 0.0 && h > 0.0 {
            c_hat = c_hat.max((h / h0).ln() / (t - t0));
        }
        sup_h = sup_h.max(h);
        rows.push(MonitorRow {
            t,
            h,
            theta: theta_exp_moment(&b, lambda).value(),
            c_hat,
        });
        if h > 1.0 {
            log::info!("relative entropy left the monitored regime at t = {t}");
            exit_time = Some(t);
            break;
        }
    }
    Ok(MonitorReport {
        rows,
        h0,
        sup_h,
        exit_time,
    })
}

pub const MONITOR_HEADER: [&str; 4] = ["t", "H", "theta", "C_hat_running"];

pub fn write_monitor_csv<W: Write>(w: W, report: &MonitorReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(MONITOR_HEADER).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([fmt_f64(r.t), fmt_f64(r.h), fmt_f64(r.theta), fmt_f64(r.c_hat)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Evolve a copy of `f` to `t_end` (convenience for callers that only need
/// the end state).
pub(crate) fn evolved(f: &PhaseDensity, kernel: &Kernel, cfg: SolverConfig, t_end: f64) -> Result<PhaseDensity> {
    let mut g = f.clone();
    evolve(&mut g, kernel, cfg, t_end, |_, _| {})?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_metrics::law::{Maxwellian, ModulatedMaxwellian};
    use crate::kernels::KernelSpec;
    use crate::vlasov_field::Interpolation;

    fn cfg() -> SolverConfig {
        SolverConfig {
            dt: 0.004,
            epsilon: 0.0,
            interpolation: Interpolation::Cubic,
        }
    }

    #[test]
    fn identical_data_stay_identical() {
        let f = PhaseDensity::from_law(&ModulatedMaxwellian { sigma: 1.0, alpha: 0.3 }, 32, 64, 6.0).unwrap();
        let k = Kernel::on_torus_1d(KernelSpec::Sine { kappa: 1.0 }).unwrap();
        let r = weak_strong_monitor(&f, &f, &k, cfg(), 0.5, 0.5, 10).unwrap();
        assert!(r.rows.iter().all(|row| row.h <= 1e-8));
        assert!(r.exit_time.is_none());
    }

    #[test]
    fn free_transport_preserves_entropy() {
        let a = PhaseDensity::from_law(&ModulatedMaxwellian { sigma: 1.0, alpha: 0.3 }, 256, 64, 6.0).unwrap();
        let b = PhaseDensity::from_law(&Maxwellian { sigma: 1.0 }, 256, 64, 6.0).unwrap();
        let fine = SolverConfig { dt: 6e-4, ..cfg() };
        let r = weak_strong_monitor(&a, &b, &Kernel::zero(), fine, 0.3, 0.5, 50).unwrap();
        for row in &r.rows {
            assert!((row.h - r.h0).abs() <= 1e-6 * r.h0.max(1.0), "{row:?}");
        }
    }

    #[test]
    fn smaller_perturbation_gives_smaller_entropy() {
        let f = PhaseDensity::from_law(&Maxwellian { sigma: 1.0 }, 32, 64, 6.0).unwrap();
        let k = Kernel::on_torus_1d(KernelSpec::Sine { kappa: 1.0 }).unwrap();
        let big = PhaseDensity::from_law(&ModulatedMaxwellian { sigma: 1.0, alpha: 0.4 }, 32, 64, 6.0).unwrap();
        let small = PhaseDensity::from_law(&ModulatedMaxwellian { sigma: 1.0, alpha: 0.2 }, 32, 64, 6.0).unwrap();
        let rb = weak_strong_monitor(&big, &f, &k, cfg(), 0.5, 0.5, 10).unwrap();
        let rs = weak_strong_monitor(&small, &f, &k, cfg(), 0.5, 0.5, 10).unwrap();
        assert!(rs.h0 < rb.h0);
        assert!(rs.sup_h < rb.sup_h);
    }

    #[test]
    fn csv_has_the_monitor_header() {
        let f = PhaseDensity::from_law(&Maxwellian { sigma: 1.0 }, 16, 32, 6.0).unwrap();
        let r = weak_strong_monitor(&f, &f, &Kernel::zero(), cfg(), 0.02, 0.5, 1).unwrap();
        let mut buf = Vec::new();
        write_monitor_csv(&mut buf, &r).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,H,theta,C_hat_running\n"));
        assert_eq!(s.lines().count(), r.rows.len() + 1);
    }

    #[test]
    fn evolved_copy_leaves_input_alone() {
        let f = PhaseDensity::from_law(&Maxwellian { sigma: 1.0 }, 16, 32, 6.0).unwrap();
        let g = evolved(&f, &Kernel::zero(), cfg(), 0.1).unwrap();
        assert_eq!(f.time(), 0.0);
        assert!((g.time() - 0.1).abs() < 1e-14);
    }
}
