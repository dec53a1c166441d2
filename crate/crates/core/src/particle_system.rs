//! The N-particle system
//! `dX_i = V_i dt`, `dV_i = (1/N) sum_{j != i} K(X_i - X_j) dt + sqrt(2 eps_N) dW_i`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chaos_metrics::law::ReferenceLaw;
use crate::error::{Error, Result};
use crate::kernels::{Domain, Kernel};
use crate::rng::{stream, Purpose};

/// Noise strength as a function of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    #[default]
    Zero,
    Fixed { epsilon0: f64 },
    /// `eps_N = epsilon0 * N^{-gamma}`.
    Vanishing { epsilon0: f64, gamma: f64 },
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSchedule::Zero => true,
            NoiseSchedule::Fixed { epsilon0 } => epsilon0 >= 0.0 && epsilon0.is_finite(),
            NoiseSchedule::Vanishing { epsilon0, gamma } => {
                epsilon0 >= 0.0 && epsilon0.is_finite() && gamma >= 0.0 && gamma.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid noise schedule {self:?}")))
        }
    }

    pub fn epsilon_for(&self, n: usize) -> f64 {
        match *self {
            NoiseSchedule::Zero => 0.0,
            NoiseSchedule::Fixed { epsilon0 } => epsilon0,
            NoiseSchedule::Vanishing { epsilon0, gamma } => epsilon0 * (n as f64).powf(-gamma),
        }
    }

    /// Diffusion coefficient of the limit equation.
    pub fn limit_epsilon(&self) -> f64 {
        match *self {
            NoiseSchedule::Zero => 0.0,
            NoiseSchedule::Fixed { epsilon0 } => epsilon0,
            NoiseSchedule::Vanishing { epsilon0, gamma } => {
                if gamma > 0.0 {
                    0.0
                } else {
                    epsilon0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    EulerMaruyama,
    /// Deterministic dynamics only.
    VelocityVerlet,
}

/// Positions and velocities of `N` particles, particle-major (`N x d`).
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    n: usize,
    dim: usize,
    domain: Domain,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    time: f64,
    seed: u64,
    noise: Vec<ChaCha8Rng>,
    /// Drift at the current positions, kept between Verlet steps.
    drift_cache: Option<Vec<f64>>,
}

impl ParticleEnsemble {
    /// Build an ensemble from explicit coordinates. Particle `i` owns noise
    /// stream `i` of `seed`.
    pub fn from_state(
        positions: Vec<f64>,
        velocities: Vec<f64>,
        dim: usize,
        domain: Domain,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("need n >= 1 particles of dimension d >= 1".into()));
        }
        if positions.len() != velocities.len() {
            return Err(Error::InvalidArgument("positions and velocities differ in length".into()));
        }
        if positions.iter().chain(&velocities).any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteState { time: 0.0 });
        }
        let n = positions.len() / dim;
        let positions = positions.into_iter().map(|x| domain.wrap(x)).collect();
        Ok(ParticleEnsemble {
            n,
            dim,
            domain,
            positions,
            velocities,
            time: 0.0,
            seed,
            noise: (0..n as u64).map(|i| stream(seed, Purpose::Noise, i)).collect(),
            drift_cache: None,
        })
    }

    /// `n` i.i.d. draws from `law` (particle `i` uses its own stream).
    pub fn sample_initial(law: &dyn ReferenceLaw, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let mut xs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = stream(seed, Purpose::InitialData, i as u64);
            let (x, v) = law.sample(&mut rng).ok_or_else(|| Error::NoSampler(law.name()))?;
            xs.push(x);
            vs.push(v);
        }
        Self::from_state(xs, vs, 1, Domain::Torus, seed)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Relabel particles: new particle `k` is old particle `perm[k]`, noise
    /// stream included.
    pub fn permute(&mut self, perm: &[usize]) -> Result<()> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n || perm.iter().any(|&p| p >= self.n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let d = self.dim;
        let gather = |src: &[f64]| -> Vec<f64> {
            perm.iter().flat_map(|&p| src[p * d..(p + 1) * d].iter().copied()).collect()
        };
        self.positions = gather(&self.positions);
        self.velocities = gather(&self.velocities);
        self.noise = perm.iter().map(|&p| self.noise[p].clone()).collect();
        self.drift_cache = None;
        Ok(())
    }

    /// Total momentum `sum_i V_i`, per component.
    pub fn momentum(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for v in self.velocities.chunks(self.dim) {
            p.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        p
    }

    /// `(1 / 2N) sum_i |V_i|^2`.
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocities.iter().map(|v| v * v).sum::<f64>() / self.n as f64
    }

    /// Empirical variance of all velocity components around their means.
    pub fn velocity_variance(&self) -> f64 {
        let d = self.dim;
        let mean: Vec<f64> = self.momentum().iter().map(|p| p / self.n as f64).collect();
        let mut s = 0.0;
        for v in self.velocities.chunks(d) {
            s += v.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>();
        }
        s / (self.n * d) as f64
    }

    /// Fraction of particles in each of `bins` equal cells of the first
    /// position coordinate over the unit cell.
    pub fn x_histogram(&self, bins: usize) -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for x in self.positions.chunks(self.dim) {
            let b = ((self.domain.wrap(x[0]) * bins as f64) as usize).min(bins - 1);
            h[b] += 1.0;
        }
        h.iter_mut().for_each(|c| *c /= self.n as f64);
        h
    }

    fn check_finite(&self) -> Result<()> {
        if self.positions.iter().chain(&self.velocities).all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteState { time: self.time })
        }
    }

    fn drift(&mut self, kernel: &Kernel) -> Vec<f64> {
        match self.drift_cache.take() {
            Some(d) => d,
            None => kernel.mean_field_drift(&self.positions),
        }
    }

    fn advance_positions(&mut self, dt: f64) {
        let domain = self.domain;
        for (x, v) in self.positions.iter_mut().zip(&self.velocities) {
            *x = domain.wrap(*x + v * dt);
        }
    }
}

fn check_kernel(ens: &ParticleEnsemble, kernel: &Kernel) -> Result<()> {
    if kernel.dim() != ens.dim || kernel.domain() != ens.domain {
        return Err(Error::InvalidArgument(
            "kernel and ensemble disagree on dimension or domain".into(),
        ));
    }
    Ok(())
}

/// One Euler–Maruyama step of size `dt`.
pub fn step(ens: &mut ParticleEnsemble, kernel: &Kernel, noise: &NoiseSchedule, dt: f64) -> Result<()> {
    step_with(ens, kernel, noise, dt, Integrator::EulerMaruyama)
}

/// One step with the chosen integrator.
pub fn step_with(
    ens: &mut ParticleEnsemble,
    kernel: &Kernel,
    noise: &NoiseSchedule,
    dt: f64,
    integrator: Integrator,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    check_kernel(ens, kernel)?;
    let eps = noise.epsilon_for(ens.n);
    match integrator {
        Integrator::EulerMaruyama => {
            let drift = ens.drift(kernel);
            ens.advance_positions(dt);
            for (v, a) in ens.velocities.iter_mut().zip(&drift) {
                *v += a * dt;
            }
            if eps > 0.0 {
                let amp = (2.0 * eps * dt).sqrt();
                let d = ens.dim;
                for (vi, rng) in ens.velocities.chunks_mut(d).zip(ens.noise.iter_mut()) {
                    for v in vi {
                        let xi: f64 = rng.sample(StandardNormal);
                        *v += amp * xi;
                    }
                }
            }
        }
        Integrator::VelocityVerlet => {
            if eps > 0.0 {
                return Err(Error::InvalidArgument(
                    "velocity Verlet is only available for noise-free dynamics".into(),
                ));
            }
            let a0 = ens.drift(kernel);
            for (v, a) in ens.velocities.iter_mut().zip(&a0) {
                *v += 0.5 * dt * a;
            }
            ens.advance_positions(dt);
            let a1 = kernel.mean_field_drift(&ens.positions);
            for (v, a) in ens.velocities.iter_mut().zip(&a1) {
                *v += 0.5 * dt * a;
            }
            ens.drift_cache = Some(a1);
        }
    }
    ens.time += dt;
    ens.check_finite()
}

/// Quantities recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observer {
    Momentum,
    KineticEnergy,
    VelocityVariance,
    XHistogram { bins: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverRecord {
    pub t: f64,
    pub name: String,
    pub value: f64,
}

fn observe(ens: &ParticleEnsemble, observers: &[Observer], out: &mut Vec<ObserverRecord>) {
    let t = ens.time;
    let mut push = |name: String, value: f64| out.push(ObserverRecord { t, name, value });
    for o in observers {
        match *o {
            Observer::Momentum => {
                let p = ens.momentum();
                if p.len() == 1 {
                    push("momentum".into(), p[0]);
                } else {
                    for (k, c) in p.iter().enumerate() {
                        push(format!("momentum_{k}"), *c);
                    }
                }
            }
            Observer::KineticEnergy => push("kinetic_energy".into(), ens.kinetic_energy()),
            Observer::VelocityVariance => push("velocity_variance".into(), ens.velocity_variance()),
            Observer::XHistogram { bins } => {
                for (b, h) in ens.x_histogram(bins.max(1)).iter().enumerate() {
                    push(format!("x_hist_{b}"), *h);
                }
            }
        }
    }
}

/// Settings for [`simulate`].
#[derive(Debug, Clone)]
pub struct SimulationPlan<'a> {
    pub kernel: &'a Kernel,
    pub noise: NoiseSchedule,
    pub integrator: Integrator,
    pub dt: f64,
    pub t_end: f64,
    /// Record every this many steps (and always at the start and end).
    pub record_every: usize,
    pub observers: &'a [Observer],
}

/// Integrate up to `t_end`. The step is shrunk slightly, if needed, so that
/// a whole number of steps lands on `t_end`.
pub fn simulate(ens: &mut ParticleEnsemble, plan: &SimulationPlan<'_>) -> Result<Vec<ObserverRecord>> {
    let span = plan.t_end - ens.time;
    if span < 0.0 {
        return Err(Error::InvalidArgument("t_end precedes the ensemble time".into()));
    }
    if !(plan.dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let mut records = Vec::new();
    observe(ens, plan.observers, &mut records);
    let steps = (span / plan.dt - 1e-9).ceil().max(0.0) as usize;
    if steps == 0 {
        return Ok(records);
    }
    let dt = span / steps as f64;
    let t0 = ens.time;
    let every = plan.record_every.max(1);
    for s in 1..=steps {
        step_with(ens, plan.kernel, &plan.noise, dt, plan.integrator)?;
        ens.time = t0 + s as f64 * dt;
        if s % every == 0 || s == steps {
            observe(ens, plan.observers, &mut records);
        }
    }
    Ok(records)
}

/// Atoms `(x_i, v_i)` with weight `1/N` each.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }
    /// Sum of all weights, which is exactly one.
    pub fn total_weight(&self) -> f64 {
        self.len() as f64 / self.len() as f64
    }
    pub fn atom(&self, i: usize) -> (&[f64], &[f64]) {
        let d = self.dim;
        (&self.positions[i * d..(i + 1) * d], &self.velocities[i * d..(i + 1) * d])
    }
    /// Mass of `[x0, x1) x [v0, v1)` in the first coordinates.
    pub fn cell_mass(&self, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
        let hits = (0..self.len())
            .filter(|&i| {
                let (x, v) = self.atom(i);
                x[0] >= x0 && x[0] < x1 && v[0] >= v0 && v[0] < v1
            })
            .count();
        hits as f64 / self.len() as f64
    }
}

pub fn empirical_measure(ens: &ParticleEnsemble) -> EmpiricalMeasure {
    EmpiricalMeasure {
        dim: ens.dim,
        positions: ens.positions.clone(),
        velocities: ens.velocities.clone(),
    }
}

/// Write records as CSV rows `(t, observable_name, value, replica_id, seed)`.
pub fn write_trajectory_csv<W: Write>(
    w: &mut csv::Writer<W>,
    records: &[ObserverRecord],
    replica_id: usize,
    seed: u64,
) -> Result<()> {
    for r in records {
        w.write_record([
            crate::experiment::fmt_f64(r.t),
            r.name.clone(),
            crate::experiment::fmt_f64(r.value),
            replica_id.to_string(),
            seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    Ok(())
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "observable_name", "value", "replica_id", "seed"];

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos_metrics::law::Maxwellian;
    use crate::kernels::KernelSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sine() -> Kernel {
        Kernel::on_torus_1d(KernelSpec::Sine { kappa: 1.0 }).unwrap()
    }

    #[test]
    fn two_particle_hand_step() {
        let mut ens = ParticleEnsemble::from_state(vec![0.25, 0.0], vec![0.0, 0.0], 1, Domain::Torus, 1).unwrap();
        step(&mut ens, &sine(), &NoiseSchedule::Zero, 0.01).unwrap();
        assert_abs_diff_eq!(ens.velocities()[0], 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(ens.velocities()[1], -0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(ens.time(), 0.01);
    }

    #[test]
    fn single_particle_streams_freely() {
        let mut ens = ParticleEnsemble::from_state(vec![0.1], vec![0.3], 1, Domain::Torus, 0).unwrap();
        let plan = SimulationPlan {
            kernel: &sine(),
            noise: NoiseSchedule::Zero,
            integrator: Integrator::EulerMaruyama,
            dt: 0.01,
            t_end: 2.0,
            record_every: 10,
            observers: &[Observer::Momentum],
        };
        simulate(&mut ens, &plan).unwrap();
        assert_eq!(ens.velocities()[0], 0.3);
        assert_abs_diff_eq!(ens.positions()[0], (0.1f64 + 0.6).fract(), epsilon = 1e-12);
    }

    #[test]
    fn empty_span_records_only_the_start() {
        let mut ens = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, 5, 3).unwrap();
        let plan = SimulationPlan {
            kernel: &sine(),
            noise: NoiseSchedule::Zero,
            integrator: Integrator::EulerMaruyama,
            dt: 0.1,
            t_end: 0.0,
            record_every: 1,
            observers: &[Observer::KineticEnergy],
        };
        assert_eq!(simulate(&mut ens, &plan).unwrap().len(), 1);
    }

    #[test]
    fn zero_kernel_keeps_velocities() {
        let mut ens = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, 50, 3).unwrap();
        let v0 = ens.velocities().to_vec();
        let k = Kernel::zero();
        for _ in 0..100 {
            step(&mut ens, &k, &NoiseSchedule::Zero, 0.05).unwrap();
        }
        assert_eq!(ens.velocities(), &v0[..]);
    }

    #[test]
    fn sampling_is_deterministic_and_has_the_right_variance() {
        let law = Maxwellian { sigma: 1.5 };
        let a = ParticleEnsemble::sample_initial(&law, 100_000, 9).unwrap();
        let b = ParticleEnsemble::sample_initial(&law, 100_000, 9).unwrap();
        assert_eq!(a.velocities(), b.velocities());
        assert_eq!(a.positions(), b.positions());
        let n = 100_000.0;
        let var = a.velocities().iter().map(|v| v * v).sum::<f64>() / n;
        // sd of the sample second moment is sigma^2 sqrt(2/n)
        assert!((var - 2.25).abs() < 3.0 * 2.25 * (2.0 / n).sqrt());
    }

    #[derive(Debug)]
    struct NoSampler;
    impl ReferenceLaw for NoSampler {
        fn name(&self) -> String {
            "no_sampler".into()
        }
        fn density(&self, _x: f64, v: f64) -> f64 {
            Maxwellian { sigma: 1.0 }.density(0.0, v)
        }
        fn rho(&self, _x: f64) -> f64 {
            1.0
        }
        fn score(&self, _x: f64, v: f64) -> f64 {
            -v
        }
        fn grad_x_log(&self, _x: f64, _v: f64) -> f64 {
            0.0
        }
        fn velocity_scale(&self) -> f64 {
            1.0
        }
        fn sup_mp_over_p(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn law_without_sampler_is_rejected() {
        assert!(matches!(
            ParticleEnsemble::sample_initial(&NoSampler, 3, 0),
            Err(Error::NoSampler(_))
        ));
    }

    #[test]
    fn verlet_rejects_noise() {
        let mut ens = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, 4, 0).unwrap();
        let r = step_with(&mut ens, &sine(), &NoiseSchedule::Fixed { epsilon0: 0.1 }, 0.01, Integrator::VelocityVerlet);
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_update_is_reported() {
        let mut ens = ParticleEnsemble::from_state(vec![0.1, 0.2], vec![1e308, 1e308], 1, Domain::FreeSpace, 0).unwrap();
        let k = Kernel::new(KernelSpec::Sine { kappa: 1.0 }, 1, Domain::FreeSpace).unwrap();
        let r = step(&mut ens, &k, &NoiseSchedule::Zero, 1e10);
        assert!(matches!(r, Err(Error::NonFiniteState { .. })));
    }

    #[test]
    fn brownian_variance_growth() {
        // K = 0, fixed eps: Var V(t) - Var V(0) = 2 eps t per component
        let eps = 0.25;
        let t = 1.0;
        let law = Maxwellian { sigma: 1.0 };
        let reps = 200;
        let n = 200;
        let growth: Vec<f64> = (0..reps)
            .map(|r| {
                let mut ens = ParticleEnsemble::sample_initial(&law, n, 1000 + r).unwrap();
                let before: Vec<f64> = ens.velocities().to_vec();
                let plan = SimulationPlan {
                    kernel: &Kernel::zero(),
                    noise: NoiseSchedule::Fixed { epsilon0: eps },
                    integrator: Integrator::EulerMaruyama,
                    dt: 0.05,
                    t_end: t,
                    record_every: 100,
                    observers: &[],
                };
                simulate(&mut ens, &plan).unwrap();
                ens.velocities()
                    .iter()
                    .zip(&before)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let mean = growth.iter().sum::<f64>() / reps as f64;
        let sd = (growth.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - 2.0 * eps * t).abs() <= 3.0 * sd / (reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn empirical_measure_weights() {
        let ens = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, 4, 0).unwrap();
        let m = empirical_measure(&ens);
        assert_eq!(m.len(), 4);
        assert_eq!(m.weight(), 0.25);
        assert_eq!(m.total_weight(), 1.0);
        let one = empirical_measure(&ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, 1, 0).unwrap());
        assert_eq!(one.weight(), 1.0);
    }

    #[test]
    fn empirical_histogram_tracks_the_law() {
        let law = Maxwellian { sigma: 1.0 };
        let ens = ParticleEnsemble::sample_initial(&law, 100_000, 5).unwrap();
        let m = empirical_measure(&ens);
        let edges = [-f64::INFINITY, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, f64::INFINITY];
        let mut l1 = 0.0;
        for xb in 0..5 {
            let (x0, x1) = (xb as f64 / 5.0, (xb + 1) as f64 / 5.0);
            for w in edges.windows(2) {
                l1 += (m.cell_mass(x0, x1, w[0], w[1]) - law.cell_mass(x0, x1, w[0], w[1])).abs();
            }
        }
        assert!(l1 <= 0.05, "{l1}");
    }

    #[test]
    fn csv_rows_have_five_columns() {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(TRAJECTORY_HEADER).unwrap();
        let rec = vec![ObserverRecord {
            t: 0.5,
            name: "momentum".into(),
            value: -1.25,
        }];
        write_trajectory_csv(&mut w, &rec, 3, 42).unwrap();
        let s = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "5.0000000000000000e-1,momentum,-1.2500000000000000e0,3,42");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn momentum_is_conserved_by_odd_kernels(seed in 0u64..1000, which in 0usize..3, n in 2usize..40) {
            let spec = [KernelSpec::Sine { kappa: 1.0 }, KernelSpec::RoughSign { kappa: 2.0 },
                        KernelSpec::CoulombTrunc { kappa: 1.0, delta: 1e-3 }][which];
            let k = Kernel::on_torus_1d(spec).unwrap();
            let mut ens = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, n, seed).unwrap();
            for _ in 0..20 {
                let p0 = ens.momentum()[0];
                step(&mut ens, &k, &NoiseSchedule::Zero, 0.01).unwrap();
                prop_assert!((ens.momentum()[0] - p0).abs() <= 1e-12);
            }
        }

        #[test]
        fn drift_is_bounded(seed in 0u64..1000, n in 2usize..60) {
            let k = Kernel::on_torus_1d(KernelSpec::RoughSign { kappa: 1.5 }).unwrap();
            let ens = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, n, seed).unwrap();
            let bound = k.sup_norm() * (n - 1) as f64 / n as f64;
            for a in k.mean_field_drift(ens.positions()) {
                prop_assert!(a.abs() <= bound * (1.0 + 1e-12));
            }
        }

        #[test]
        fn exchangeability(seed in 0u64..1000, rot in 1usize..7) {
            let n = 7;
            let k = sine();
            let noise = NoiseSchedule::Fixed { epsilon0: 0.1 };
            let mut a = ParticleEnsemble::sample_initial(&Maxwellian { sigma: 1.0 }, n, seed).unwrap();
            let mut b = a.clone();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            b.permute(&perm).unwrap();
            for _ in 0..30 {
                step(&mut a, &k, &noise, 0.02).unwrap();
                step(&mut b, &k, &noise, 0.02).unwrap();
            }
            for (kk, &p) in perm.iter().enumerate() {
                prop_assert!(Domain::Torus.displacement(a.positions()[p] - b.positions()[kk]).abs() <= 1e-12);
                prop_assert!((a.velocities()[p] - b.velocities()[kk]).abs() <= 1e-12);
            }
        }
    }
}
