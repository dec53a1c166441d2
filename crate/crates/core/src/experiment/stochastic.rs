use rand::Rng;

use super::config::{ChaosStudyConfig, ExpMomentConfig, SimulateConfig};
use super::{fmt_f64, CheckResult, Outcome, Table};
use crate::chaos_metrics::{
    choose_nu, mc_exp_moment, regime_parameter, theorem_bound, Binning, CellReference, MarginalHistogram,
    ReferenceLaw,
};
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par;
use crate::particle_system::{simulate, ParticleEnsemble, SimulationPlan, TRAJECTORY_HEADER};
use crate::rng::{derive_seed, stream, Purpose};
use crate::vlasov_field::{evolved, PhaseDensity, SolverConfig};

/// Allowed drift of conserved momentum per step.
const MOMENTUM_DRIFT_PER_STEP: f64 = 1e-12;
/// Accepted band around the expected `sqrt(N_prev / N)` decay of the
/// 1-marginal distance.
const RATE_BAND: f64 = 0.3;

fn replica_seed(seed: u64, n_index: usize, replica: usize) -> u64 {
    derive_seed(derive_seed(seed, Purpose::Replica, n_index as u64), Purpose::Replica, replica as u64)
}

pub(crate) fn run_simulate(c: &SimulateConfig, seed: u64) -> Result<Outcome> {
    let law = c.law.build()?;
    let kernel = Kernel::on_torus_1d(c.kernel)?;
    let plan = SimulationPlan {
        kernel: &kernel,
        noise: c.noise,
        integrator: c.integrator,
        dt: c.dt,
        t_end: c.t_end,
        record_every: c.record_every,
        observers: &c.observers,
    };
    let steps = (c.t_end / c.dt - 1e-9).ceil().max(1.0);
    let conserving = kernel.is_odd() && c.noise.epsilon_for(c.n) == 0.0;
    let runs = par::map_indexed(c.replicas, |r| -> Result<_> {
        let s = replica_seed(seed, 0, r);
        let mut ens = ParticleEnsemble::sample_initial(law.as_ref(), c.n, s)?;
        let p0 = ens.momentum()[0];
        let records = simulate(&mut ens, &plan)?;
        Ok((s, records, (ens.momentum()[0] - p0).abs()))
    });
    let mut table = Table::new("trajectory", &TRAJECTORY_HEADER);
    let mut checks = Vec::new();
    for (r, run) in runs.into_iter().enumerate() {
        let (s, records, drift) = run?;
        for rec in records {
            table.push(vec![
                fmt_f64(rec.t),
                rec.name,
                fmt_f64(rec.value),
                r.to_string(),
                s.to_string(),
            ]);
        }
        if conserving {
            let limit = MOMENTUM_DRIFT_PER_STEP * steps;
            checks.push(CheckResult::new(
                format!("momentum_conservation replica={r}"),
                drift <= limit,
                format!("|P(T) - P(0)| = {drift:e}, limit {limit:e}"),
            ));
        }
    }
    Ok(Outcome {
        tables: vec![table],
        checks,
    })
}

pub(crate) fn run_expmoment(c: &ExpMomentConfig, seed: u64) -> Result<Outcome> {
    let law = c.law.build()?;
    let given = Kernel::on_torus_1d(c.kernel)?;
    let sup = law.sup_mp_over_p();
    let kernel = match c.a {
        Some(target) if !given.is_zero() => {
            let a0 = regime_parameter(given.sup_norm(), sup);
            Kernel::on_torus_1d(c.kernel.scaled(target / a0))?
        }
        _ => given,
    };
    let mut table = Table::new(
        "expmoment",
        &[
            "N",
            "nu",
            "a",
            "kernel_sup",
            "estimate",
            "stderr",
            "log_estimate",
            "max_share",
            "theorem_bound",
            "pass",
        ],
    );
    let mut checks = Vec::new();
    // with K = 0 the functional vanishes identically and any nu works
    let (nu, a) = if kernel.is_zero() {
        (1.0, 0.0)
    } else {
        (
            choose_nu(kernel.sup_norm(), sup)?,
            regime_parameter(kernel.sup_norm(), sup),
        )
    };
    let bound = theorem_bound(a);
    for (idx, &n) in c.n_list.iter().enumerate() {
        let est = mc_exp_moment(
            law.as_ref(),
            &kernel,
            nu,
            n,
            c.samples,
            derive_seed(seed, Purpose::MonteCarlo, idx as u64),
        )?;
        let (bound_cell, pass, detail) = match &bound {
            Ok(b) => {
                let upper = est.estimate + 3.0 * est.stderr;
                (
                    fmt_f64(*b),
                    upper <= *b && !est.unreliable,
                    format!("estimate + 3 stderr = {upper:.6}, bound {b:.6}, max share {:.3e}", est.max_share),
                )
            }
            Err(e) => ("NaN".into(), false, e.to_string()),
        };
        table.push(vec![
            n.to_string(),
            fmt_f64(nu),
            fmt_f64(a),
            fmt_f64(kernel.sup_norm()),
            fmt_f64(est.estimate),
            fmt_f64(est.stderr),
            fmt_f64(est.log_estimate),
            fmt_f64(est.max_share),
            bound_cell,
            pass.to_string(),
        ]);
        checks.push(CheckResult::new(format!("expmoment N={n}"), pass, detail));
    }
    Ok(Outcome {
        tables: vec![table],
        checks,
    })
}

/// The grid reference evolved to `t_end` alongside the particles.
fn vlasov_reference(c: &ChaosStudyConfig, law: &dyn ReferenceLaw, kernel: &Kernel) -> Result<PhaseDensity> {
    let f = PhaseDensity::from_law(law, c.grid.gx, c.grid.gv, c.grid.v_max)?;
    let cfg = SolverConfig {
        dt: c.grid.dt,
        epsilon: c.noise.limit_epsilon(),
        interpolation: c.grid.interpolation,
    };
    evolved(&f, kernel, cfg, c.t_end)
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Pooled distance and its bootstrap standard error over replicas.
struct Pooled {
    l1: f64,
    kl: f64,
    l1_stderr: f64,
    kl_stderr: f64,
}

fn pooled_with_bootstrap(parts: &[MarginalHistogram], reference: &[f64], resamples: usize, seed: u64) -> Result<Pooled> {
    let all = MarginalHistogram::merged(parts)?;
    let (l1, _, kl, _) = all.compare(reference);
    let boot = par::map_indexed(resamples, |b| {
        let mut rng = stream(seed, Purpose::MonteCarlo, b as u64);
        let mut acc = parts[0].clone();
        acc.counts.iter_mut().for_each(|c| *c = 0);
        acc.samples = 0;
        for _ in 0..parts.len() {
            let h = &parts[rng.random_range(0..parts.len())];
            acc.counts.iter_mut().zip(&h.counts).for_each(|(a, c)| *a += c);
            acc.samples += h.samples;
        }
        let (l1, _, kl, _) = acc.compare(reference);
        (l1, kl)
    });
    let (l1s, kls): (Vec<f64>, Vec<f64>) = boot.into_iter().unzip();
    Ok(Pooled {
        l1,
        kl,
        l1_stderr: sample_std(&l1s),
        kl_stderr: sample_std(&kls),
    })
}

pub(crate) fn run_chaos_study(c: &ChaosStudyConfig, seed: u64) -> Result<Outcome> {
    let law = c.law.build()?;
    let kernel = Kernel::on_torus_1d(c.kernel)?;
    let reference = vlasov_reference(c, law.as_ref(), &kernel)?;
    let cell_ref = CellReference::Grid(&reference);

    // one binning for every N, sized for the smallest
    let n_min = c.n_list[0];
    let (bin1, wide1) = Binning::new(c.bins.x_bins, c.bins.v_bins, c.bins.v_cut)?.widened_for(n_min * c.replicas, 1);
    let (bin2, wide2) =
        Binning::new(c.bins.x_bins_k2, c.bins.v_bins_k2, c.bins.v_cut)?.widened_for((n_min / 2) * c.replicas, 2);
    if wide1 || wide2 {
        log::warn!(
            "binning widened to {}x{} (k = 1) and {}x{} (k = 2) for N = {n_min}",
            bin1.x_bins,
            bin1.v_bins,
            bin2.x_bins,
            bin2.v_bins
        );
    }
    let q1 = cell_ref.tensor_masses(&bin1, 1);
    let q2 = cell_ref.tensor_masses(&bin2, 2);

    let observers = [];
    let plan = SimulationPlan {
        kernel: &kernel,
        noise: c.noise,
        integrator: c.integrator,
        dt: c.dt,
        t_end: c.t_end,
        record_every: usize::MAX,
        observers: &observers,
    };

    let mut summary = Table::new(
        "chaos_study",
        &[
            "N",
            "replicas",
            "l1_k1",
            "l1_k1_stderr",
            "kl_k1",
            "kl_k1_stderr",
            "l1_k2",
            "l1_k2_stderr",
            "bins_k1",
            "bins_k2",
        ],
    );
    let mut per_replica = Table::new("chaos_replicas", &["N", "replica", "seed", "l1_k1", "kl_k1", "l1_k2"]);
    let mut rows: Vec<(usize, Pooled, Pooled)> = Vec::new();

    for (ni, &n) in c.n_list.iter().enumerate() {
        log::info!("chaos study: N = {n}, {} replicas", c.replicas);
        let hists = par::map_indexed(c.replicas, |r| -> Result<_> {
            let s = replica_seed(seed, ni, r);
            let mut ens = ParticleEnsemble::sample_initial(law.as_ref(), n, s)?;
            simulate(&mut ens, &plan).map_err(|e| match e {
                Error::NonFiniteState { time } => {
                    Error::InvalidArgument(format!("N = {n}: non-finite particle state at t = {time}"))
                }
                other => other,
            })?;
            let one = std::slice::from_ref(&ens);
            Ok((
                s,
                MarginalHistogram::from_replicas(one, 1, bin1)?,
                MarginalHistogram::from_replicas(one, 2, bin2)?,
            ))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for (r, (s, h1, h2)) in hists.iter().enumerate() {
            let (l1, _, kl, _) = h1.compare(&q1);
            let (l2, _, _, _) = h2.compare(&q2);
            per_replica.push(vec![n.to_string(), r.to_string(), s.to_string(), fmt_f64(l1), fmt_f64(kl), fmt_f64(l2)]);
        }
        let h1s: Vec<MarginalHistogram> = hists.iter().map(|h| h.1.clone()).collect();
        let h2s: Vec<MarginalHistogram> = hists.into_iter().map(|h| h.2).collect();
        let boot_seed = derive_seed(seed, Purpose::MonteCarlo, ni as u64);
        let p1 = pooled_with_bootstrap(&h1s, &q1, c.bootstrap, boot_seed)?;
        let p2 = pooled_with_bootstrap(&h2s, &q2, c.bootstrap, derive_seed(boot_seed, Purpose::MonteCarlo, 2))?;
        summary.push(vec![
            n.to_string(),
            c.replicas.to_string(),
            fmt_f64(p1.l1),
            fmt_f64(p1.l1_stderr),
            fmt_f64(p1.kl),
            fmt_f64(p1.kl_stderr),
            fmt_f64(p2.l1),
            fmt_f64(p2.l1_stderr),
            format!("{}x{}", bin1.x_bins, bin1.v_bins),
            format!("{}x{}", bin2.x_bins, bin2.v_bins),
        ]);
        rows.push((n, p1, p2));
    }

    let mut checks = Vec::new();
    for w in rows.windows(2) {
        let (n0, a1, a2) = (&w[0].0, &w[0].1, &w[0].2);
        let (n1, b1, b2) = (&w[1].0, &w[1].1, &w[1].2);
        let expected = (*n0 as f64 / *n1 as f64).sqrt();
        let ratio = b1.l1 / a1.l1;
        let (lo, hi) = (expected * (1.0 - RATE_BAND), expected * (1.0 + RATE_BAND));
        checks.push(CheckResult::new(
            format!("l1_k1_rate N={n0}->{n1}"),
            (lo..=hi).contains(&ratio),
            format!("ratio {ratio:.4}, expected {expected:.4} in [{lo:.4}, {hi:.4}]"),
        ));
        let slack = (a2.l1_stderr.powi(2) + b2.l1_stderr.powi(2)).sqrt();
        checks.push(CheckResult::new(
            format!("l1_k2_monotone N={n0}->{n1}"),
            b2.l1 <= a2.l1 + slack,
            format!("{:.6} -> {:.6}, combined stderr {slack:.6}", a2.l1, b2.l1),
        ));
    }
    Ok(Outcome {
        tables: vec![summary, per_replica],
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{run, Experiment, ExperimentConfig};
    use super::*;
    use crate::chaos_metrics::LawSpec;
    use crate::kernels::KernelSpec;
    use crate::particle_system::{Integrator, NoiseSchedule};

    fn record(seed: u64, experiment: Experiment) -> super::super::RunRecord {
        run(&ExperimentConfig {
            seed,
            output: None,
            threads: None,
            experiment,
        })
        .unwrap()
    }

    #[test]
    fn zero_kernel_expmoment() {
        let r = record(
            3,
            Experiment::Expmoment(ExpMomentConfig {
                kernel: KernelSpec::Zero,
                n_list: vec![2, 5],
                samples: 10,
                ..Default::default()
            }),
        );
        assert!(r.passed());
        let t = r.table("expmoment").unwrap();
        let (e, b) = (t.column("estimate").unwrap(), t.column("theorem_bound").unwrap());
        for row in &t.rows {
            assert_eq!(row[e], fmt_f64(1.0));
            assert_eq!(row[b], fmt_f64(5.0));
        }
    }

    #[test]
    fn bound_column_is_theorem_bound() {
        let r = record(
            4,
            Experiment::Expmoment(ExpMomentConfig {
                n_list: vec![4],
                samples: 2000,
                a: Some(0.5),
                ..Default::default()
            }),
        );
        let t = r.table("expmoment").unwrap();
        let row = &t.rows[0];
        assert_eq!(row[t.column("theorem_bound").unwrap()], fmt_f64(theorem_bound(0.5).unwrap()));
        let a: f64 = row[t.column("a").unwrap()].parse().unwrap();
        assert!((a - 0.5).abs() < 1e-12);
        assert!(r.passed());
    }

    #[test]
    fn regime_violation_is_a_failed_row() {
        let r = record(
            5,
            Experiment::Expmoment(ExpMomentConfig {
                n_list: vec![4],
                samples: 100,
                a: Some(1.5),
                ..Default::default()
            }),
        );
        assert!(!r.passed());
        assert_eq!(r.table("expmoment").unwrap().rows[0][8], "NaN");
    }

    #[test]
    fn simulate_conserves_momentum_and_is_reproducible() {
        let exp = Experiment::Simulate(SimulateConfig {
            n: 64,
            replicas: 3,
            t_end: 0.5,
            integrator: Integrator::VelocityVerlet,
            ..Default::default()
        });
        let a = record(9, exp.clone());
        assert!(a.passed());
        assert_eq!(a.checks.len(), 3);
        let b = record(9, exp.clone());
        assert_eq!(a.tables, b.tables);
        let c = record(10, exp);
        assert_ne!(a.tables, c.tables);
    }

    fn small_study(t_end: f64, kernel: KernelSpec) -> ChaosStudyConfig {
        ChaosStudyConfig {
            kernel,
            law: LawSpec::ModulatedMaxwellian { sigma: 1.0, alpha: 0.5 },
            n_list: vec![100, 400],
            replicas: 8,
            dt: 0.05,
            t_end,
            noise: NoiseSchedule::Zero,
            integrator: Integrator::VelocityVerlet,
            grid: super::super::GridConfig {
                gx: 64,
                gv: 128,
                dt: 2e-3,
                ..Default::default()
            },
            bins: super::super::BinConfig {
                x_bins: 5,
                v_bins: 5,
                x_bins_k2: 2,
                v_bins_k2: 2,
                v_cut: 2.0,
            },
            bootstrap: 50,
        }
    }

    fn column(r: &super::super::RunRecord, name: &str) -> Vec<f64> {
        let t = r.table("chaos_study").unwrap();
        let c = t.column(name).unwrap();
        t.rows.iter().map(|row| row[c].parse().unwrap()).collect()
    }

    #[test]
    fn chaos_study_at_time_zero_is_the_sampling_baseline() {
        let cfg = small_study(0.0, KernelSpec::Sine { kappa: 1.0 });
        let r = record(11, Experiment::ChaosStudy(cfg.clone()));
        let law = cfg.law.build().unwrap();
        let bins = Binning::new(5, 5, 2.0).unwrap();
        let q = CellReference::Law(law.as_ref()).tensor_masses(&bins, 1);
        let l1 = column(&r, "l1_k1");
        // grid reference at t = 0 is the law up to discretisation error
        for (i, &n) in cfg.n_list.iter().enumerate() {
            let reps: Vec<_> = (0..cfg.replicas)
                .map(|k| ParticleEnsemble::sample_initial(law.as_ref(), n, replica_seed(11, i, k)).unwrap())
                .collect();
            let (expect, ..) = MarginalHistogram::from_replicas(&reps, 1, bins).unwrap().compare(&q);
            assert!((l1[i] - expect).abs() < 2e-3, "N={n}: {} vs {expect}", l1[i]);
        }
    }

    #[test]
    fn free_transport_sits_at_the_sampling_floor() {
        let r = record(12, Experiment::ChaosStudy(small_study(0.5, KernelSpec::Zero)));
        let l1 = column(&r, "l1_k1");
        let se = column(&r, "l1_k1_stderr");
        // pooled samples N R over 25 bins: floor about sqrt(2 m / (pi N R))
        for (i, n) in [100.0f64, 400.0].iter().enumerate() {
            let floor = (2.0 * 25.0 / (std::f64::consts::PI * n * 8.0)).sqrt();
            assert!(l1[i] < 2.0 * floor + 3.0 * se[i], "{} vs floor {floor}", l1[i]);
        }
    }
}
