use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::chaos_metrics::LawSpec;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::particle_system::{Integrator, NoiseSchedule, Observer};
use crate::vlasov_field::Interpolation;

/// One experiment: a mandatory seed, where to write, and what to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    Simulate(SimulateConfig),
    ChaosStudy(ChaosStudyConfig),
    Expmoment(ExpMomentConfig),
    CombinatoricsVerify(CombinatoricsConfig),
    CancellationVerify(CancellationConfig),
    VlasovRun(VlasovRunConfig),
    Weakstrong(WeakStrongConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Simulate(_) => "simulate",
            Experiment::ChaosStudy(_) => "chaos_study",
            Experiment::Expmoment(_) => "expmoment",
            Experiment::CombinatoricsVerify(_) => "combinatorics_verify",
            Experiment::CancellationVerify(_) => "cancellation_verify",
            Experiment::VlasovRun(_) => "vlasov_run",
            Experiment::Weakstrong(_) => "weakstrong",
        }
    }

    /// The experiment with every parameter at its default.
    pub fn default_for(kind: &str) -> Result<Self> {
        Ok(match kind.replace('-', "_").as_str() {
            "simulate" => Experiment::Simulate(Default::default()),
            "chaos_study" => Experiment::ChaosStudy(Default::default()),
            "expmoment" => Experiment::Expmoment(Default::default()),
            "combinatorics_verify" => Experiment::CombinatoricsVerify(Default::default()),
            "cancellation_verify" => Experiment::CancellationVerify(Default::default()),
            "vlasov_run" => Experiment::VlasovRun(Default::default()),
            "weakstrong" => Experiment::Weakstrong(Default::default()),
            other => return Err(Error::Config(format!("unknown experiment kind {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Simulate(c) => c.validate(),
            Experiment::ChaosStudy(c) => c.validate(),
            Experiment::Expmoment(c) => c.validate(),
            Experiment::CombinatoricsVerify(_) => Ok(()),
            Experiment::CancellationVerify(c) => c.validate(),
            Experiment::VlasovRun(c) => c.validate(),
            Experiment::Weakstrong(c) => c.validate(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.experiment.validate()
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(format!("{name} must be positive and finite, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(format!("{name} must be nonnegative and finite, got {x}")))
    }
}

fn count(name: &str, n: usize) -> Result<()> {
    if n > 0 {
        Ok(())
    } else {
        Err(cfg_err(format!("{name} must be positive")))
    }
}

fn n_list(name: &str, ns: &[usize]) -> Result<()> {
    if ns.contains(&0) {
        return Err(cfg_err(format!("{name} entries must be positive")));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(cfg_err(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn law_and_kernel(law: &LawSpec, kernel: &KernelSpec) -> Result<()> {
    law.build().map_err(|e| cfg_err(e.to_string()))?;
    crate::kernels::Kernel::on_torus_1d(*kernel).map_err(|e| cfg_err(e.to_string()))?;
    Ok(())
}

/// Phase-space grid of the Vlasov solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub gx: usize,
    pub gv: usize,
    pub v_max: f64,
    pub dt: f64,
    pub interpolation: Interpolation,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            gx: 128,
            gv: 256,
            v_max: 6.0,
            dt: 1e-3,
            interpolation: Interpolation::Cubic,
        }
    }
}

impl GridConfig {
    fn validate(&self) -> Result<()> {
        if self.gx < 4 || self.gv < 4 {
            return Err(cfg_err("grid needs at least 4 cells per direction"));
        }
        positive("v_max", self.v_max)?;
        positive("grid dt", self.dt)?;
        let dx = 1.0 / self.gx as f64;
        if self.dt * self.v_max > dx {
            return Err(cfg_err(format!(
                "grid dt * v_max = {} exceeds dx = {dx}",
                self.dt * self.v_max
            )));
        }
        Ok(())
    }
}

const SINE: KernelSpec = KernelSpec::Sine { kappa: 1.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub kernel: KernelSpec,
    pub law: LawSpec,
    pub n: usize,
    pub replicas: usize,
    pub dt: f64,
    pub t_end: f64,
    pub noise: NoiseSchedule,
    pub integrator: Integrator,
    pub record_every: usize,
    pub observers: Vec<Observer>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            kernel: SINE,
            law: LawSpec::ModulatedMaxwellian { sigma: 1.0, alpha: 0.5 },
            n: 1000,
            replicas: 1,
            dt: 0.01,
            t_end: 1.0,
            noise: NoiseSchedule::Zero,
            integrator: Integrator::EulerMaruyama,
            record_every: 10,
            observers: vec![Observer::Momentum, Observer::KineticEnergy],
        }
    }
}

impl SimulateConfig {
    fn validate(&self) -> Result<()> {
        law_and_kernel(&self.law, &self.kernel)?;
        count("n", self.n)?;
        count("replicas", self.replicas)?;
        count("record_every", self.record_every)?;
        positive("dt", self.dt)?;
        nonnegative("t_end", self.t_end)?;
        self.noise.validate().map_err(|e| cfg_err(e.to_string()))
    }
}

/// Per-particle bins; order-2 marginals use `x_bins_k2 x v_bins_k2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinConfig {
    pub x_bins: usize,
    pub v_bins: usize,
    pub x_bins_k2: usize,
    pub v_bins_k2: usize,
    pub v_cut: f64,
}

impl Default for BinConfig {
    fn default() -> Self {
        BinConfig {
            x_bins: 10,
            v_bins: 10,
            x_bins_k2: 3,
            v_bins_k2: 3,
            v_cut: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChaosStudyConfig {
    pub kernel: KernelSpec,
    pub law: LawSpec,
    pub n_list: Vec<usize>,
    pub replicas: usize,
    pub dt: f64,
    pub t_end: f64,
    pub noise: NoiseSchedule,
    pub integrator: Integrator,
    pub grid: GridConfig,
    pub bins: BinConfig,
    pub bootstrap: usize,
}

impl Default for ChaosStudyConfig {
    fn default() -> Self {
        ChaosStudyConfig {
            kernel: SINE,
            law: LawSpec::ModulatedMaxwellian { sigma: 1.0, alpha: 0.5 },
            n_list: vec![250, 1000, 4000],
            replicas: 24,
            dt: 0.01,
            t_end: 1.0,
            noise: NoiseSchedule::Zero,
            integrator: Integrator::VelocityVerlet,
            grid: GridConfig::default(),
            bins: BinConfig::default(),
            bootstrap: 200,
        }
    }
}

impl ChaosStudyConfig {
    fn validate(&self) -> Result<()> {
        law_and_kernel(&self.law, &self.kernel)?;
        n_list("n_list", &self.n_list)?;
        if self.n_list.first().is_some_and(|&n| n < 2) {
            return Err(cfg_err("order-2 marginals need N >= 2"));
        }
        count("replicas", self.replicas)?;
        count("bootstrap", self.bootstrap)?;
        positive("dt", self.dt)?;
        nonnegative("t_end", self.t_end)?;
        self.noise.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.integrator == Integrator::VelocityVerlet && self.noise != NoiseSchedule::Zero {
            return Err(cfg_err("velocity Verlet needs zero noise"));
        }
        let b = &self.bins;
        for (name, n) in [("x_bins", b.x_bins), ("v_bins", b.v_bins), ("x_bins_k2", b.x_bins_k2), ("v_bins_k2", b.v_bins_k2)] {
            count(name, n)?;
        }
        positive("v_cut", b.v_cut)?;
        self.grid.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpMomentConfig {
    pub kernel: KernelSpec,
    pub law: LawSpec,
    pub n_list: Vec<usize>,
    pub samples: usize,
    /// Target regime parameter `a = 8 e^2 ||K||_inf sup_p M_p / p`, reached
    /// by rescaling the kernel; `None` keeps the kernel as given.
    pub a: Option<f64>,
}

impl Default for ExpMomentConfig {
    fn default() -> Self {
        ExpMomentConfig {
            kernel: SINE,
            law: LawSpec::Maxwellian { sigma: 1.0 },
            n_list: vec![8, 32, 128],
            samples: 100_000,
            a: Some(0.5),
        }
    }
}

impl ExpMomentConfig {
    fn validate(&self) -> Result<()> {
        law_and_kernel(&self.law, &self.kernel)?;
        n_list("n_list", &self.n_list)?;
        if self.samples < 2 {
            return Err(cfg_err("samples must be at least 2"));
        }
        match self.a {
            Some(a) => positive("a", a),
            None => Ok(()),
        }
    }
}

/// Parameter grid of the counting checks. A zero upper limit skips a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinatoricsConfig {
    /// `E_{q,p}` for `1 <= p <= min(q, p_max)`, `q <= q_max`.
    pub q_max: usize,
    pub p_max: usize,
    /// `P^I_{N,2k}` for every effective `I`, `N <= p_n_max`, `k <= p_k_max`.
    pub p_n_max: usize,
    pub p_k_max: usize,
    /// Compositions for `q <= compositions_q_max`, `p <= compositions_p_max`.
    pub compositions_q_max: usize,
    pub compositions_p_max: usize,
    pub u_k_max: usize,
    pub v_n_max: usize,
    pub v_k_max: usize,
    pub multinomial_l_max: usize,
    pub multinomial_p_max: usize,
    /// Test hook: corrupt the closed form so every formula row fails.
    pub inject_wrong_formula: bool,
}

impl Default for CombinatoricsConfig {
    fn default() -> Self {
        CombinatoricsConfig {
            q_max: 7,
            p_max: 6,
            p_n_max: 6,
            p_k_max: 2,
            compositions_q_max: 12,
            compositions_p_max: 6,
            u_k_max: 6,
            v_n_max: 5,
            v_k_max: 4,
            multinomial_l_max: 5,
            multinomial_p_max: 8,
            inject_wrong_formula: false,
        }
    }
}

impl CombinatoricsConfig {
    /// Every family switched off.
    pub fn empty() -> Self {
        CombinatoricsConfig {
            q_max: 0,
            p_max: 0,
            p_n_max: 0,
            p_k_max: 0,
            compositions_q_max: 0,
            compositions_p_max: 0,
            u_k_max: 0,
            v_n_max: 0,
            v_k_max: 0,
            multinomial_l_max: 0,
            multinomial_p_max: 0,
            inject_wrong_formula: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CancellationConfig {
    pub kernel: KernelSpec,
    pub law: LawSpec,
    /// Exhaustive rule scan over `{1..rule_n}^p`, `p <= rule_p_max`.
    pub rule_n: usize,
    pub rule_p_max: usize,
    pub vanish1_quadrature_n: Vec<usize>,
    pub vanish1_mc_n: Vec<usize>,
    pub vanish2_quadrature_n: Vec<usize>,
    pub vanish2_mc_n: Vec<usize>,
    pub expansion_n: Vec<usize>,
    pub samples: usize,
}

impl Default for CancellationConfig {
    fn default() -> Self {
        CancellationConfig {
            kernel: SINE,
            law: LawSpec::Maxwellian { sigma: 1.0 },
            rule_n: 3,
            rule_p_max: 3,
            vanish1_quadrature_n: vec![2],
            vanish1_mc_n: vec![10, 100],
            vanish2_quadrature_n: vec![2, 3],
            vanish2_mc_n: vec![4, 8],
            expansion_n: vec![2, 3],
            samples: 100_000,
        }
    }
}

impl CancellationConfig {
    fn validate(&self) -> Result<()> {
        law_and_kernel(&self.law, &self.kernel)?;
        if self.rule_n > 4 || self.rule_p_max > 3 {
            return Err(cfg_err("rule scan needs rule_n <= 4 and rule_p_max <= 3"));
        }
        for (name, ns) in [
            ("vanish1_quadrature_n", &self.vanish1_quadrature_n),
            ("vanish1_mc_n", &self.vanish1_mc_n),
            ("vanish2_quadrature_n", &self.vanish2_quadrature_n),
            ("vanish2_mc_n", &self.vanish2_mc_n),
            ("expansion_n", &self.expansion_n),
        ] {
            n_list(name, ns)?;
        }
        if self.vanish1_quadrature_n.iter().chain(&self.vanish2_quadrature_n).any(|&n| n > 3) {
            return Err(cfg_err("quadrature checks need n <= 3"));
        }
        if self.expansion_n.iter().any(|&n| n > 3) {
            return Err(cfg_err("expansion needs n <= 3"));
        }
        if self.samples < 2 {
            return Err(cfg_err("samples must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VlasovRunConfig {
    pub kernel: KernelSpec,
    pub law: LawSpec,
    pub grid: GridConfig,
    pub epsilon: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for VlasovRunConfig {
    fn default() -> Self {
        VlasovRunConfig {
            kernel: SINE,
            law: LawSpec::ModulatedMaxwellian { sigma: 1.0, alpha: 0.5 },
            grid: GridConfig::default(),
            epsilon: 0.0,
            t_end: 1.0,
            record_every: 50,
        }
    }
}

impl VlasovRunConfig {
    fn validate(&self) -> Result<()> {
        law_and_kernel(&self.law, &self.kernel)?;
        nonnegative("epsilon", self.epsilon)?;
        nonnegative("t_end", self.t_end)?;
        count("record_every", self.record_every)?;
        self.grid.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakStrongConfig {
    pub kernel: KernelSpec,
    /// Width of both the Maxwellian reference and its spatially modulated
    /// perturbation.
    pub sigma: f64,
    /// Initial relative entropies; the modulation depth is solved for each.
    pub h0_targets: Vec<f64>,
    pub grid: GridConfig,
    pub epsilon: f64,
    pub t_end: f64,
    pub lambda: f64,
    pub record_every: usize,
    /// Also run identical initial data.
    pub identical_control: bool,
}

impl Default for WeakStrongConfig {
    fn default() -> Self {
        WeakStrongConfig {
            kernel: SINE,
            sigma: 1.0,
            h0_targets: vec![1e-2, 1e-3, 1e-4],
            grid: GridConfig {
                gx: 64,
                gv: 128,
                v_max: 6.0,
                dt: 2e-3,
                interpolation: Interpolation::Cubic,
            },
            epsilon: 0.0,
            t_end: 1.0,
            lambda: 0.25,
            record_every: 10,
            identical_control: true,
        }
    }
}

impl WeakStrongConfig {
    fn validate(&self) -> Result<()> {
        crate::kernels::Kernel::on_torus_1d(self.kernel).map_err(|e| cfg_err(e.to_string()))?;
        positive("sigma", self.sigma)?;
        if self.h0_targets.iter().any(|&h| !(h > 0.0 && h < 0.2)) {
            return Err(cfg_err("h0_targets must lie in (0, 0.2)"));
        }
        nonnegative("epsilon", self.epsilon)?;
        nonnegative("t_end", self.t_end)?;
        positive("lambda", self.lambda)?;
        count("record_every", self.record_every)?;
        self.grid.validate()
    }
}
