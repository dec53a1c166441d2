//! Binned order-`k` marginals pooled over replicas, with L1 and relative
//! entropy against a tensorised reference.

use super::law::ReferenceLaw;
use crate::error::{Error, Result};
use crate::kernels::Domain;
use crate::particle_system::ParticleEnsemble;
use crate::vlasov_field::PhaseDensity;

/// Minimum expected count per bin before the binning is widened.
pub const MIN_EXPECTED_PER_BIN: f64 = 20.0;

/// Per-particle bins: `x_bins` equal cells of the torus times `v_bins`
/// velocity cells on `[-v_cut, v_cut]`; the outermost velocity cells extend to
/// infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub x_bins: usize,
    pub v_bins: usize,
    pub v_cut: f64,
}

impl Binning {
    pub fn new(x_bins: usize, v_bins: usize, v_cut: f64) -> Result<Self> {
        if x_bins == 0 || v_bins == 0 || !(v_cut > 0.0) {
            return Err(Error::InvalidArgument("binning needs positive counts and cut".into()));
        }
        Ok(Binning { x_bins, v_bins, v_cut })
    }

    pub fn cells_per_particle(&self) -> usize {
        self.x_bins * self.v_bins
    }

    pub fn total(&self, k: usize) -> usize {
        self.cells_per_particle().pow(k as u32)
    }

    fn cell_of(&self, x: f64, v: f64) -> usize {
        let xb = ((Domain::Torus.wrap(x) * self.x_bins as f64) as usize).min(self.x_bins - 1);
        let t = (v + self.v_cut) / (2.0 * self.v_cut);
        let vb = if t <= 0.0 {
            0
        } else {
            ((t * self.v_bins as f64) as usize).min(self.v_bins - 1)
        };
        xb * self.v_bins + vb
    }

    fn cell_bounds(&self, c: usize) -> (f64, f64, f64, f64) {
        let (xb, vb) = (c / self.v_bins, c % self.v_bins);
        let x0 = xb as f64 / self.x_bins as f64;
        let x1 = (xb + 1) as f64 / self.x_bins as f64;
        let w = 2.0 * self.v_cut / self.v_bins as f64;
        let v0 = if vb == 0 { f64::NEG_INFINITY } else { -self.v_cut + vb as f64 * w };
        let v1 = if vb + 1 == self.v_bins {
            f64::INFINITY
        } else {
            -self.v_cut + (vb + 1) as f64 * w
        };
        (x0, x1, v0, v1)
    }

    /// Coarsen until `samples` fill every bin with the minimum expected count.
    pub fn widened_for(mut self, samples: usize, k: usize) -> (Self, bool) {
        let mut changed = false;
        while (samples as f64) < MIN_EXPECTED_PER_BIN * self.total(k) as f64 && self.cells_per_particle() > 1 {
            if self.x_bins >= self.v_bins {
                self.x_bins -= 1;
            } else {
                self.v_bins -= 1;
            }
            changed = true;
        }
        (self, changed)
    }
}

/// The density a histogram is compared against.
#[derive(Debug, Clone, Copy)]
pub enum CellReference<'a> {
    Law(&'a dyn ReferenceLaw),
    Grid(&'a PhaseDensity),
}

impl CellReference<'_> {
    pub fn cell_mass(&self, x0: f64, x1: f64, v0: f64, v1: f64) -> f64 {
        match self {
            CellReference::Law(l) => l.cell_mass(x0, x1, v0, v1),
            CellReference::Grid(g) => g.cell_mass(x0, x1, v0, v1),
        }
    }

    /// Bin probabilities of the `k`-fold tensor product.
    pub fn tensor_masses(&self, binning: &Binning, k: usize) -> Vec<f64> {
        let c = binning.cells_per_particle();
        let single: Vec<f64> = (0..c)
            .map(|cell| {
                let (x0, x1, v0, v1) = binning.cell_bounds(cell);
                self.cell_mass(x0, x1, v0, v1)
            })
            .collect();
        let mut out = vec![1.0];
        for _ in 0..k {
            out = out.iter().flat_map(|a| single.iter().map(move |b| a * b)).collect();
        }
        out
    }
}

/// Counts of disjoint `k`-blocks `(z_{bk+1}, ..., z_{bk+k})` over replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub k: usize,
    pub binning: Binning,
    pub counts: Vec<u64>,
    pub samples: u64,
    pub replicas: usize,
    pub blocks_per_replica: usize,
}

impl MarginalHistogram {
    pub fn from_replicas(replicas: &[ParticleEnsemble], k: usize, binning: Binning) -> Result<Self> {
        let first = replicas
            .first()
            .ok_or_else(|| Error::InvalidArgument("no replicas to pool".into()))?;
        let n = first.n();
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!("marginal order {k} must be in 1..={n}")));
        }
        if replicas.iter().any(|r| r.n() != n || r.dim() != 1) {
            return Err(Error::InvalidArgument("replicas must share N and have d = 1".into()));
        }
        let c = binning.cells_per_particle();
        let mut counts = vec![0u64; binning.total(k)];
        let blocks = n / k;
        for r in replicas {
            let (xs, vs) = (r.positions(), r.velocities());
            for b in 0..blocks {
                let mut idx = 0;
                for m in 0..k {
                    let p = b * k + m;
                    idx = idx * c + binning.cell_of(xs[p], vs[p]);
                }
                counts[idx] += 1;
            }
        }
        Ok(MarginalHistogram {
            k,
            binning,
            counts,
            samples: (blocks * replicas.len()) as u64,
            replicas: replicas.len(),
            blocks_per_replica: blocks,
        })
    }

    /// Pool several histograms with identical binning.
    pub fn merged<'a, I: IntoIterator<Item = &'a MarginalHistogram>>(parts: I) -> Result<Self> {
        let mut it = parts.into_iter();
        let mut acc = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?
            .clone();
        for h in it {
            if h.k != acc.k || h.binning != acc.binning {
                return Err(Error::InvalidArgument("histograms differ in order or binning".into()));
            }
            acc.counts.iter_mut().zip(&h.counts).for_each(|(a, b)| *a += b);
            acc.samples += h.samples;
            acc.replicas += h.replicas;
        }
        Ok(acc)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.samples as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// `(l1, kl_plugin, kl_miller_madow, occupied_bins)` against `reference`.
    pub fn compare(&self, reference: &[f64]) -> (f64, f64, f64, usize) {
        let n = self.samples as f64;
        let mut l1 = 0.0;
        let mut kl = 0.0;
        let mut occupied = 0;
        for (&c, &q) in self.counts.iter().zip(reference) {
            let p = c as f64 / n;
            l1 += (p - q).abs();
            if c > 0 {
                occupied += 1;
                kl += p * (p / q.max(f64::MIN_POSITIVE)).ln();
            }
        }
        let mm = kl - (occupied as f64 - 1.0).max(0.0) / (2.0 * n);
        (l1, kl, mm, occupied)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalReport {
    pub histogram: MarginalHistogram,
    pub l1_distance: f64,
    /// Plug-in `sum p log(p / q)`.
    pub kl_plugin: f64,
    /// Plug-in minus the Miller–Madow bias `(m - 1) / 2n`.
    pub kl_estimate: f64,
    pub occupied_bins: usize,
    /// Whether the requested binning had to be coarsened.
    pub widened: bool,
}

/// Pool disjoint `k`-blocks over `replicas`, bin them, and compare with the
/// `k`-fold tensor power of `reference`.
pub fn marginal_and_distance(
    replicas: &[ParticleEnsemble],
    reference: CellReference<'_>,
    k: usize,
    bins: Binning,
) -> Result<MarginalReport> {
    let n = replicas.first().map(|r| r.n()).unwrap_or(0);
    let samples = n.checked_div(k).unwrap_or(0) * replicas.len();
    let (binning, widened) = bins.widened_for(samples, k);
    if widened {
        log::warn!(
            "{samples} samples undersample {}x{} bins per particle at k = {k}; using {}x{}",
            bins.x_bins,
            bins.v_bins,
            binning.x_bins,
            binning.v_bins
        );
    }
    let histogram = MarginalHistogram::from_replicas(replicas, k, binning)?;
    let q = reference.tensor_masses(&binning, k);
    let (l1, kl, mm, occupied) = histogram.compare(&q);
    Ok(MarginalReport {
        histogram,
        l1_distance: l1,
        kl_plugin: kl,
        kl_estimate: mm,
        occupied_bins: occupied,
        widened,
    })
}
