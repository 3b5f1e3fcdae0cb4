//! Empirical probes of the noisy representation and of sampling dynamics:
//! neighbor-degree distributions, pair perturbations, speed histograms and
//! RMSD traces.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3d::{aligned_rmsd, PointSet};
use crate::model::MolecularGraph;
use crate::pipeline::{Trajectory, VelocityField};
use crate::seeding;

/// Order statistics of the raw values a histogram was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub summary: HistogramSummary,
}

/// Linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Histogram {
    /// Bins `values` on the given edges. Values outside the range land in
    /// the first or last bin, so every value is counted.
    pub fn with_edges(values: &[f64], edges: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("histogram of no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("histogram input".into()));
        }
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("histogram edges must be strictly increasing".into()));
        }
        let n_bins = edges.len() - 1;
        let mut counts = vec![0u64; n_bins];
        for &v in values {
            // First edge strictly above v, minus one.
            let b = edges.partition_point(|&e| e <= v).saturating_sub(1).min(n_bins - 1);
            counts[b] += 1;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let summary = HistogramSummary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(&sorted, 0.5),
            p05: quantile(&sorted, 0.05),
            p95: quantile(&sorted, 0.95),
        };
        Ok(Self {
            edges,
            counts,
            total: values.len() as u64,
            summary,
        })
    }

    /// `n_bins` equal-width bins spanning the data; a unit-wide bin when all
    /// values coincide.
    pub fn uniform(values: &[f64], n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::InvalidInput("n_bins must be at least 1".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edges = if lo < hi {
            let w = (hi - lo) / n_bins as f64;
            (0..=n_bins).map(|k| if k == n_bins { hi } else { lo + k as f64 * w }).collect()
        } else if lo.is_finite() {
            vec![lo, lo + 1.0]
        } else {
            Vec::new()
        };
        Self::with_edges(values, edges)
    }

    /// One bin per integer value from 0 to the maximum.
    pub fn integer(values: &[usize]) -> Result<Self> {
        let max = values.iter().copied().max().unwrap_or(0);
        let edges = (0..=max + 1).map(|k| k as f64 - 0.5).collect();
        let as_f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        Self::with_edges(&as_f, edges)
    }

    /// Rows `lower,upper,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{:.8},{:.8},{}", self.edges[k], self.edges[k + 1], c);
        }
        out
    }
}

/// `|{ j ≠ i : ‖r_ij‖ ≤ R }|` for every atom `i` kept by the mask. Masked-out
/// atoms neither get a degree nor count as neighbors.
pub fn neighbor_degrees(state: &PointSet, radius: f64, mask: Option<&[bool]>) -> Result<Vec<usize>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let n = state.n_atoms();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::ShapeMismatch { expected: n, got: m.len() });
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    Ok((0..n)
        .filter(|&i| keep(i))
        .map(|i| (0..n).filter(|&j| j != i && keep(j) && state.distance(i, j) <= radius).count())
        .collect())
}

pub fn neighbor_degree_hist(states: &[PointSet], radius: f64, mask: Option<&[bool]>) -> Result<Histogram> {
    let mut all = Vec::new();
    for s in states {
        all.extend(neighbor_degrees(s, radius, mask)?);
    }
    Histogram::integer(&all)
}

/// Degree histograms of refiner-schedule states `x_t = x₁ + (1 − t)·σ·ε`
/// pooled over several conformers, each with an optional atom mask;
/// `n_samples` draws per conformer and grid time.
pub fn degree_sweep<R: Rng + ?Sized>(
    conformers: &[(&PointSet, Option<&[bool]>)],
    sigma: f64,
    times: &[f64],
    radius: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<(f64, Histogram)>> {
    if !(sigma >= 0.0) || n_samples == 0 || conformers.is_empty() {
        return Err(Error::InvalidInput("degree sweep needs sigma >= 0, conformers and samples".into()));
    }
    times
        .iter()
        .map(|&t| {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidInput(format!("t={t} outside [0, 1]")));
            }
            let mut degrees = Vec::new();
            for &(x1, mask) in conformers {
                for _ in 0..n_samples {
                    let mut x = x1.clone();
                    x.axpy((1.0 - t) * sigma, &PointSet::standard_normal(x1.n_atoms(), rng))?;
                    degrees.extend(neighbor_degrees(&x, radius, mask)?);
                }
            }
            Ok((t, Histogram::integer(&degrees)?))
        })
        .collect()
}

/// Rows `t,mean,median,p05,p95,total`.
pub fn degree_sweep_csv(sweep: &[(f64, Histogram)]) -> String {
    let mut out = String::from("t,mean,median,p05,p95,total\n");
    for (t, h) in sweep {
        let s = h.summary;
        let _ = writeln!(
            out,
            "{t:.4},{:.8},{:.8},{:.8},{:.8},{}",
            s.mean, s.median, s.p05, s.p95, h.total
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPerturbation {
    pub pairs: Vec<(usize, usize)>,
    /// Per-coordinate std of `Δr_ij`, pooled over the three axes.
    pub std: Vec<f64>,
    /// The same, pooled over all pairs.
    pub pooled_std: f64,
}

/// Perturbs both endpoints of every pair with independent `σ`-noise and
/// measures the spread of `r_ij(t) − r_ij(1)`.
pub fn pair_perturbation_stats<R: Rng + ?Sized>(
    x1: &PointSet,
    sigma: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<PairPerturbation> {
    if n_samples < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 samples, got {n_samples}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma must be non-negative, got {sigma}")));
    }
    let n = x1.n_atoms();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut sum = vec![0.0; pairs.len()];
    let mut sum_sq = vec![0.0; pairs.len()];
    let base = x1.coords();
    for _ in 0..n_samples {
        let mut noisy = x1.clone();
        noisy.axpy(sigma, &PointSet::standard_normal(n, rng))?;
        let x = noisy.coords();
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for k in 0..3 {
                let d = (x[i][k] - x[j][k]) - (base[i][k] - base[j][k]);
                sum[p] += d;
                sum_sq[p] += d * d;
            }
        }
    }
    let m = (3 * n_samples) as f64;
    let var: Vec<f64> = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| ((q - s * s / m) / (m - 1.0)).max(0.0))
        .collect();
    let pooled_std = if var.is_empty() {
        0.0
    } else {
        (var.iter().sum::<f64>() / var.len() as f64).sqrt()
    };
    Ok(PairPerturbation {
        pairs,
        std: var.iter().map(|v| v.sqrt()).collect(),
        pooled_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMode {
    /// The velocities recorded along the trajectory.
    CorrectT,
    /// The field re-evaluated on the same states at uniform-random times.
    RandomizedT,
}

/// Per-atom speeds of every step of every trajectory. Each trajectory is
/// paired with its molecular graph; randomized times for trajectory `m`
/// come from a dedicated stream so the result does not depend on threading.
pub fn step_speeds<F: VelocityField + ?Sized>(
    field: &F,
    trajectories: &[(&MolecularGraph, &Trajectory)],
    mode: SpeedMode,
    seed: u64,
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(Error::InvalidInput("no trajectories".into()));
    }
    let per: Vec<Vec<f64>> = trajectories
        .par_iter()
        .enumerate()
        .map(|(m, (graph, traj))| {
            let mut rng = seeding::stream(seed, m as u64);
            let mut speeds = Vec::new();
            for n in 0..traj.n_steps() {
                let v = match mode {
                    SpeedMode::CorrectT => traj.velocities[n].clone(),
                    SpeedMode::RandomizedT => {
                        let t: f64 = rng.random();
                        field.velocity(&traj.states[n], graph, t)?
                    }
                };
                speeds.extend(v.iter().map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()));
            }
            Ok(speeds)
        })
        .collect::<Result<_>>()?;
    Ok(per.concat())
}

/// The leading steps of a trajectory whose start time is below `t_max`.
pub fn early_steps(traj: &Trajectory, t_max: f64) -> Trajectory {
    let n = traj.times[..traj.n_steps()].iter().take_while(|&&t| t < t_max).count();
    Trajectory {
        times: traj.times[..=n].to_vec(),
        states: traj.states[..=n].to_vec(),
        velocities: traj.velocities[..n].to_vec(),
    }
}

pub fn velocity_histogram<F: VelocityField + ?Sized>(
    field: &F,
    trajectories: &[(&MolecularGraph, &Trajectory)],
    mode: SpeedMode,
    n_bins: usize,
    seed: u64,
) -> Result<Histogram> {
    Histogram::uniform(&step_speeds(field, trajectories, mode, seed)?, n_bins)
}

/// `(t_n, min_k RMSD(x_{t_n}, reference_k))` for every stored state.
pub fn rmsd_trace(trajectory: &Trajectory, references: &[PointSet]) -> Result<Vec<(f64, f64)>> {
    if references.is_empty() {
        return Err(Error::InvalidInput("no references".into()));
    }
    trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, s)| {
            let mut best = f64::INFINITY;
            for r in references {
                best = best.min(aligned_rmsd(s, r)?);
            }
            Ok((t, best))
        })
        .collect()
}

/// Rows `trajectory,t,min_rmsd`.
pub fn traces_csv(traces: &[Vec<(f64, f64)>]) -> String {
    let mut out = String::from("trajectory,t,min_rmsd\n");
    for (k, tr) in traces.iter().enumerate() {
        for (t, r) in tr {
            let _ = writeln!(out, "{k},{t:.6},{r:.8}");
        }
    }
    out
}
