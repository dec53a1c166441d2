//! Grid solver for the one-dimensional Vlasov / McKean–Vlasov equation
//! `d_t f + v d_x f + (K * rho) d_v f - eps d_vv f = 0` on `T^1 x [-v_max, v_max]`.
//!
//! Strang splitting: half x-advection, full v-advection in the self-consistent
//! field, half x-advection, then the exact heat semigroup in `v`.

mod diagnostics;
mod monitor;
mod snapshot;

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use diagnostics::{
    l1_distance, relative_entropy_grid, theta_exp_moment, theta_full_gradient, v_moments, weighted_ckp_bound,
    weighted_l1, ExpMoment, RelativeEntropy,
};
pub(crate) use monitor::evolved;
pub use monitor::{weak_strong_monitor, write_monitor_csv, MonitorReport, MonitorRow, MONITOR_HEADER};
pub use snapshot::{read_binary, write_binary, write_csv};

use crate::chaos_metrics::law::ReferenceLaw;
use crate::error::{Error, Result};
use crate::kernels::{convolve_with_table, torus_table, DensityField, Domain, Kernel, MASS_TOLERANCE};
use crate::par;

/// Largest negative mass that may be clamped away in one step.
pub const CLAMP_LIMIT: f64 = 1e-8;
/// Largest mass allowed in the two outermost velocity rows on each side.
pub const TAIL_LIMIT: f64 = 1e-6;

/// A probability density on a `G_x x G_v` grid.
///
/// `x_i = i / G_x`; velocity cells are centred at
/// `v_j = -v_max + (j + 1/2) dv` with `dv = 2 v_max / G_v`. Values are stored
/// x-major: `values[i * G_v + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDensity {
    gx: usize,
    gv: usize,
    v_max: f64,
    values: Vec<f64>,
    time: f64,
}

impl PhaseDensity {
    pub fn new(gx: usize, gv: usize, v_max: f64, values: Vec<f64>, time: f64) -> Result<Self> {
        if gx < 4 || gv < 4 || !(v_max > 0.0) || values.len() != gx * gv {
            return Err(Error::InvalidArgument(format!(
                "bad phase grid {gx} x {gv} with v_max {v_max} and {} values",
                values.len()
            )));
        }
        if values.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::InvalidArgument("phase density values must be finite and >= 0".into()));
        }
        let f = PhaseDensity {
            gx,
            gv,
            v_max,
            values,
            time,
        };
        let m = f.mass();
        if (m - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidArgument(format!("phase density mass {m} is not 1")));
        }
        Ok(f)
    }

    /// Sample `f(x, v)` at the nodes and rescale to unit grid mass.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(gx: usize, gv: usize, v_max: f64, f: F) -> Result<Self> {
        let dx = 1.0 / gx as f64;
        let dv = 2.0 * v_max / gv as f64;
        let mut values = Vec::with_capacity(gx * gv);
        for i in 0..gx {
            for j in 0..gv {
                values.push(f(i as f64 * dx, -v_max + (j as f64 + 0.5) * dv));
            }
        }
        let mass: f64 = values.iter().sum::<f64>() * dx * dv;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument("initial density has no mass on the grid".into()));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::new(gx, gv, v_max, values, 0.0)
    }

    pub fn from_law(law: &dyn ReferenceLaw, gx: usize, gv: usize, v_max: f64) -> Result<Self> {
        Self::from_fn(gx, gv, v_max, |x, v| law.density(x, v))
    }

    pub fn gx(&self) -> usize {
        self.gx
    }
    pub fn gv(&self) -> usize {
        self.gv
    }
    pub fn v_max(&self) -> f64 {
        self.v_max
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn dx(&self) -> f64 {
        1.0 / self.gx as f64
    }
    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / self.gv as f64
    }
    pub fn x_node(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
    pub fn v_node(&self, j: usize) -> f64 {
        -self.v_max + (j as f64 + 0.5) * self.dv()
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.gv + j]
    }
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dv()
    }
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    /// Mass in the two outermost velocity rows on each side.
    pub fn tail_mass(&self) -> f64 {
        let gv = self.gv;
        let mut s = 0.0;
        for row in self.values.chunks(gv) {
            s += row[0] + row[1] + row[gv - 2] + row[gv - 1];
        }
        s * self.cell_area()
    }

    pub(crate) fn same_grid(&self, other: &PhaseDensity) -> Result<()> {
        if self.gx == other.gx && self.gv == other.gv && self.v_max == other.v_max {
            Ok(())
        } else {
            Err(Error::InvalidArgument("phase densities live on different grids".into()))
        }
    }

    /// Mass of `[x0, x1] x [v0, v1]`, treating `f` as constant on each cell
    /// (x-cells centred at the nodes). `v0`/`v1` may be infinite.
    pub fn cell_mass(&self, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
        let dx = self.dx();
        let dv = self.dv();
        let mut wx = vec![0.0; self.gx];
        for (i, w) in wx.iter_mut().enumerate() {
            let a = (i as f64 - 0.5) * dx;
            let b = a + dx;
            for shift in [-1.0, 0.0, 1.0] {
                *w += (x1.min(b + shift) - x0.max(a + shift)).max(0.0);
            }
        }
        let wv: Vec<f64> = (0..self.gv)
            .map(|j| {
                let a = -self.v_max + j as f64 * dv;
                (v1.min(a + dv) - v0.max(a)).max(0.0)
            })
            .collect();
        let mut s = 0.0;
        for (i, a) in wx.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let row = &self.values[i * self.gv..(i + 1) * self.gv];
            s += a * row.iter().zip(&wv).map(|(f, b)| f * b).sum::<f64>();
        }
        s
    }
}

/// `rho_i = sum_j f_ij dv`.
pub fn density(f: &PhaseDensity) -> Result<DensityField> {
    DensityField::new(row_sums(f), f.dx(), 0.0, Domain::Torus)
}

fn row_sums(f: &PhaseDensity) -> Vec<f64> {
    let dv = f.dv();
    f.values.chunks(f.gv).map(|r| r.iter().sum::<f64>() * dv).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

/// Audit trail of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub time: f64,
    /// `|mass after - mass before|` ahead of clamping and renormalization.
    pub mass_drift: f64,
    pub clamped_mass: f64,
    pub tail_mass: f64,
    /// Factor the values were multiplied by to restore unit mass.
    pub renormalization: f64,
}

/// Stencil for sampling `g(y - shift)` from nodes of unit spacing:
/// `sum_m w[m] g[i + offset + m - 1]`.
fn stencil(shift_cells: f64, interp: Interpolation) -> (isize, [f64; 4]) {
    let y = -shift_cells;
    let k = y.floor();
    let t = y - k;
    let w = match interp {
        Interpolation::Linear => [0.0, 1.0 - t, t, 0.0],
        Interpolation::Cubic => [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ],
    };
    (k as isize, w)
}

/// Reusable solver state for one grid shape, kernel and configuration.
pub struct VlasovSolver {
    gx: usize,
    gv: usize,
    v_max: f64,
    cfg: SolverConfig,
    table: Vec<f64>,
    diffusion: Option<Diffusion>,
}

struct Diffusion {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    multiplier: Vec<f64>,
}

impl Diffusion {
    /// Heat semigroup `exp(eps dt d_vv)` applied spectrally on a zero-padded
    /// velocity line of twice the box length.
    fn new(gv: usize, dv: f64, eps_dt: f64) -> Self {
        let len = 2 * gv;
        let mut planner = FftPlanner::new();
        let box_len = len as f64 * dv;
        let multiplier = (0..len)
            .map(|k| {
                let m = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
                let omega = 2.0 * std::f64::consts::PI * m / box_len;
                (-eps_dt * omega * omega).exp() / len as f64
            })
            .collect();
        Diffusion {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            multiplier,
        }
    }

    fn apply(&self, row: &mut [f64]) {
        let gv = row.len();
        let mut buf: Vec<Complex<f64>> = row.iter().map(|&r| Complex::new(r, 0.0)).collect();
        buf.resize(2 * gv, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        buf.iter_mut().zip(&self.multiplier).for_each(|(b, m)| *b *= m);
        self.inverse.process(&mut buf);
        row.iter_mut().zip(&buf).for_each(|(r, b)| *r = b.re);
    }
}

impl VlasovSolver {
    pub fn new(kernel: &Kernel, cfg: SolverConfig, like: &PhaseDensity) -> Result<Self> {
        if kernel.dim() != 1 || kernel.domain() != Domain::Torus {
            return Err(Error::InvalidArgument(
                "the grid solver needs a one-dimensional torus kernel".into(),
            ));
        }
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) || !(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad solver config {cfg:?}")));
        }
        let slack = 1.0 + 1e-12;
        if cfg.dt * like.v_max > like.dx() * slack {
            return Err(Error::Cfl(format!(
                "dt * v_max = {} exceeds dx = {}",
                cfg.dt * like.v_max,
                like.dx()
            )));
        }
        if cfg.dt * kernel.sup_norm() > like.dv() * slack {
            return Err(Error::Cfl(format!(
                "dt * |K|_inf = {} exceeds dv = {}",
                cfg.dt * kernel.sup_norm(),
                like.dv()
            )));
        }
        let diffusion = (cfg.epsilon > 0.0).then(|| Diffusion::new(like.gv, like.dv(), cfg.epsilon * cfg.dt));
        Ok(VlasovSolver {
            gx: like.gx,
            gv: like.gv,
            v_max: like.v_max,
            cfg,
            table: torus_table(kernel, like.gx),
            diffusion,
        })
    }

    pub fn config(&self) -> SolverConfig {
        self.cfg
    }

    fn advect_x(&self, src: &[f64], dst: &mut [f64], tau: f64) {
        let (gx, gv) = (self.gx, self.gv);
        let dx = 1.0 / gx as f64;
        let dv = 2.0 * self.v_max / gv as f64;
        let stencils: Vec<(isize, [f64; 4])> = (0..gv)
            .map(|j| stencil((-self.v_max + (j as f64 + 0.5) * dv) * tau / dx, self.cfg.interpolation))
            .collect();
        par::for_each_chunk_mut(dst, gv, |i, row| {
            for (j, out) in row.iter_mut().enumerate() {
                let (k, w) = stencils[j];
                let mut acc = 0.0;
                for (m, wm) in w.iter().enumerate() {
                    let ii = (i as isize + k + m as isize - 1).rem_euclid(gx as isize) as usize;
                    acc += wm * src[ii * gv + j];
                }
                *out = acc;
            }
        });
    }

    fn advect_v(&self, src: &[f64], dst: &mut [f64], field: &[f64], dt: f64) {
        let gv = self.gv;
        let dv = 2.0 * self.v_max / gv as f64;
        let interp = self.cfg.interpolation;
        par::for_each_chunk_mut(dst, gv, |i, row| {
            let (k, w) = stencil(field[i] * dt / dv, interp);
            let line = &src[i * gv..(i + 1) * gv];
            for (j, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (m, wm) in w.iter().enumerate() {
                    let jj = j as isize + k + m as isize - 1;
                    if jj >= 0 && (jj as usize) < gv {
                        acc += wm * line[jj as usize];
                    }
                }
                *out = acc;
            }
        });
    }

    /// Self-consistent field `K * rho` at the x-nodes.
    pub fn field(&self, values: &[f64]) -> Vec<f64> {
        let dx = 1.0 / self.gx as f64;
        let dv = 2.0 * self.v_max / self.gv as f64;
        let rho: Vec<f64> = values.chunks(self.gv).map(|r| r.iter().sum::<f64>() * dv).collect();
        convolve_with_table(&self.table, &rho, dx)
    }

    /// Advance `f` by one step of `cfg.dt`.
    pub fn step(&self, f: &mut PhaseDensity) -> Result<StepReport> {
        if f.gx != self.gx || f.gv != self.gv || f.v_max != self.v_max {
            return Err(Error::InvalidArgument("density grid does not match the solver".into()));
        }
        let dt = self.cfg.dt;
        let area = f.cell_area();
        let mass_before = f.mass();
        let mut tmp = vec![0.0; f.values.len()];
        self.advect_x(&f.values, &mut tmp, 0.5 * dt);
        let field = self.field(&tmp);
        self.advect_v(&tmp, &mut f.values, &field, dt);
        self.advect_x(&f.values, &mut tmp, 0.5 * dt);
        std::mem::swap(&mut f.values, &mut tmp);
        if let Some(d) = &self.diffusion {
            par::for_each_chunk_mut(&mut f.values, self.gv, |_, row| d.apply(row));
        }
        let mass_after = f.values.iter().sum::<f64>() * area;
        let mut clamped = 0.0;
        for v in f.values.iter_mut() {
            if *v < 0.0 {
                clamped -= *v;
                *v = 0.0;
            }
        }
        clamped *= area;
        f.time += dt;
        if clamped > CLAMP_LIMIT {
            return Err(Error::ClampedMass {
                clamped,
                limit: CLAMP_LIMIT,
            });
        }
        let m = f.values.iter().sum::<f64>() * area;
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidArgument("phase density lost all of its mass".into()));
        }
        let renormalization = 1.0 / m;
        f.values.iter_mut().for_each(|v| *v *= renormalization);
        let tail = f.tail_mass();
        if tail > TAIL_LIMIT {
            return Err(Error::TailMass {
                tail,
                limit: TAIL_LIMIT,
            });
        }
        if renormalization != 1.0 {
            log::debug!("t = {:.6}: renormalized mass by {renormalization:.17e}", f.time);
        }
        Ok(StepReport {
            time: f.time,
            mass_drift: (mass_after - mass_before).abs(),
            clamped_mass: clamped,
            tail_mass: tail,
            renormalization,
        })
    }
}

/// One step with a freshly built solver.
pub fn step_vlasov(f: &PhaseDensity, kernel: &Kernel, cfg: SolverConfig) -> Result<(PhaseDensity, StepReport)> {
    let solver = VlasovSolver::new(kernel, cfg, f)?;
    let mut g = f.clone();
    let report = solver.step(&mut g)?;
    Ok((g, report))
}

/// Number of steps and the (possibly shortened) step that lands on `t_end`.
pub fn step_plan(t0: f64, t_end: f64, dt: f64) -> Result<(usize, f64)> {
    let span = t_end - t0;
    if span < 0.0 || !(dt > 0.0) {
        return Err(Error::InvalidArgument("need t_end >= t and dt > 0".into()));
    }
    let steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
    Ok(if steps == 0 { (0, dt) } else { (steps, span / steps as f64) })
}

/// Evolve `f` to `t_end`, calling `on_step` after every step.
pub fn evolve<F: FnMut(&PhaseDensity, &StepReport)>(
    f: &mut PhaseDensity,
    kernel: &Kernel,
    cfg: SolverConfig,
    t_end: f64,
    mut on_step: F,
) -> Result<()> {
    let (steps, dt) = step_plan(f.time, t_end, cfg.dt)?;
    if steps == 0 {
        return Ok(());
    }
    let solver = VlasovSolver::new(kernel, SolverConfig { dt, ..cfg }, f)?;
    let t0 = f.time;
    for s in 1..=steps {
        let r = solver.step(f)?;
        f.time = t0 + s as f64 * dt;
        on_step(f, &r);
    }
    Ok(())
}
