//! Forward-Euler integration of a learned velocity field from `t = 0` to
//! `t = 1`, starting either from an upstream conformer (refinement) or from
//! Gaussian noise (generation).

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3d::{aligned_rmsd, PointSet};
use crate::model::{MolecularGraph, VelocityModel};
use crate::seeding;

/// Anything that maps `(x, 𝒢, t)` to per-atom velocities.
pub trait VelocityField: Sync {
    fn velocity(&self, x: &PointSet, graph: &MolecularGraph, t: f64) -> Result<PointSet>;
}

impl VelocityField for VelocityModel {
    fn velocity(&self, x: &PointSet, graph: &MolecularGraph, t: f64) -> Result<PointSet> {
        self.forward(x, graph, t)
    }
}

/// Adapter for closures, mostly analytic fields in tests.
pub struct FnField<F>(pub F);

impl<F> VelocityField for FnField<F>
where
    F: Fn(&PointSet, &MolecularGraph, f64) -> Result<PointSet> + Sync,
{
    fn velocity(&self, x: &PointSet, graph: &MolecularGraph, t: f64) -> Result<PointSet> {
        (self.0)(x, graph, t)
    }
}

/// The field that is zero everywhere.
pub struct ZeroField;

impl VelocityField for ZeroField {
    fn velocity(&self, x: &PointSet, _graph: &MolecularGraph, _t: f64) -> Result<PointSet> {
        Ok(PointSet::zeros(x.n_atoms()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub n_steps: usize,
    /// Explicit grid `t₀ = 0 < … < t_N = 1`; uniform when absent.
    pub times: Option<Vec<f64>>,
    pub capture_trajectory: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_steps: 20,
            times: None,
            capture_trajectory: false,
        }
    }
}

impl SampleConfig {
    pub fn uniform(n_steps: usize) -> Self {
        Self {
            n_steps,
            ..Self::default()
        }
    }

    pub fn with_trajectory(mut self) -> Self {
        self.capture_trajectory = true;
        self
    }

    /// The validated time grid, `n_steps + 1` points.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if self.n_steps == 0 {
            return Err(Error::InvalidInput("n_steps must be at least 1".into()));
        }
        match &self.times {
            None => Ok((0..=self.n_steps).map(|n| n as f64 / self.n_steps as f64).collect()),
            Some(ts) => {
                if ts.len() != self.n_steps + 1 {
                    return Err(Error::InvalidInput(format!(
                        "time grid has {} points, expected {}",
                        ts.len(),
                        self.n_steps + 1
                    )));
                }
                if ts[0] != 0.0 || ts[self.n_steps] != 1.0 {
                    return Err(Error::InvalidInput("time grid must start at 0 and end at 1".into()));
                }
                if ts.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
                }
                Ok(ts.clone())
            }
        }
    }
}

/// States at every grid time and the velocity used on each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `n_steps + 1` states, including the initial one.
    pub states: Vec<PointSet>,
    /// `n_steps` velocities, `velocities[n]` evaluated at `(states[n], times[n])`.
    pub velocities: Vec<PointSet>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.velocities.len()
    }

    /// Mean per-atom speed of each step, Å per unit flow time.
    pub fn mean_speeds(&self) -> Vec<f64> {
        self.velocities.iter().map(PointSet::mean_row_norm).collect()
    }

    /// Distance the centroid moved between the first and last state.
    pub fn centroid_drift(&self) -> f64 {
        let a = self.states[0].centroid();
        let b = self.states[self.states.len() - 1].centroid();
        (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub state: PointSet,
    pub trajectory: Option<Trajectory>,
}

/// Forward Euler from `x_start` at `t = 0`:
/// `x ← x + (t_{n+1} − t_n)·u(x, t_n)`.
pub fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    x_start: &PointSet,
    graph: &MolecularGraph,
    cfg: &SampleConfig,
) -> Result<SampleOutput> {
    if x_start.n_atoms() != graph.n_atoms() {
        return Err(Error::ShapeMismatch {
            expected: graph.n_atoms(),
            got: x_start.n_atoms(),
        });
    }
    let grid = cfg.grid()?;
    let mut x = x_start.clone();
    let mut traj = cfg.capture_trajectory.then(|| Trajectory {
        times: grid.clone(),
        states: vec![x.clone()],
        velocities: Vec::with_capacity(cfg.n_steps),
    });
    for n in 0..cfg.n_steps {
        let v = field.velocity(&x, graph, grid[n])?;
        x.axpy(grid[n + 1] - grid[n], &v)?;
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("state after Euler step {n}")));
        }
        if let Some(tr) = traj.as_mut() {
            tr.velocities.push(v);
            tr.states.push(x.clone());
        }
    }
    Ok(SampleOutput {
        state: x,
        trajectory: traj,
    })
}

/// Refines one upstream conformer.
pub fn refine<F: VelocityField + ?Sized>(
    field: &F,
    x_hat: &PointSet,
    graph: &MolecularGraph,
    cfg: &SampleConfig,
) -> Result<SampleOutput> {
    integrate(field, x_hat, graph, cfg)
}

/// Generates a conformer from centered noise `σ·ε`.
pub fn generate_from_noise<F: VelocityField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    graph: &MolecularGraph,
    sigma: f64,
    cfg: &SampleConfig,
    rng: &mut R,
) -> Result<SampleOutput> {
    let x0 = PointSet::standard_normal(graph.n_atoms(), rng).scaled(sigma).center();
    integrate(field, &x0, graph, cfg)
}

/// Generates `counts[m]` conformers for each graph; conformer `k` of
/// molecule `m` uses stream `(seed, m, k)`, so results are independent of
/// scheduling.
pub fn generate_ensembles<F: VelocityField + ?Sized>(
    field: &F,
    graphs: &[&MolecularGraph],
    counts: &[usize],
    sigma: f64,
    cfg: &SampleConfig,
    seed: u64,
) -> Result<Vec<Vec<SampleOutput>>> {
    if graphs.len() != counts.len() {
        return Err(Error::InvalidInput("one count per graph required".into()));
    }
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(m, &c)| (0..c).map(move |k| (m, k)))
        .collect();
    let flat: Vec<SampleOutput> = jobs
        .par_iter()
        .map(|&(m, k)| {
            let mut rng = seeding::substream(seed, m as u64, k as u64);
            generate_from_noise(field, graphs[m], sigma, cfg, &mut rng)
                .map_err(|e| Error::Validation(format!("molecule {m}, conformer {k}: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(regroup(flat, counts))
}

fn regroup<T>(flat: Vec<T>, counts: &[usize]) -> Vec<Vec<T>> {
    let mut it = flat.into_iter();
    counts.iter().map(|&c| it.by_ref().take(c).collect()).collect()
}

/// Refines every conformer of every molecule. Output order and length
/// match the input, so `out[m][k]` pairs with `upstream[m][k]`.
pub fn refine_ensemble<F: VelocityField + ?Sized>(
    field: &F,
    graphs: &[&MolecularGraph],
    upstream: &[Vec<PointSet>],
    cfg: &SampleConfig,
) -> Result<Vec<Vec<SampleOutput>>> {
    if graphs.len() != upstream.len() {
        return Err(Error::InvalidInput(format!(
            "{} graphs for {} ensembles",
            graphs.len(),
            upstream.len()
        )));
    }
    let counts: Vec<usize> = upstream.iter().map(Vec::len).collect();
    let jobs: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(m, &c)| (0..c).map(move |k| (m, k)))
        .collect();
    let flat: Vec<SampleOutput> = jobs
        .par_iter()
        .map(|&(m, k)| {
            refine(field, &upstream[m][k], graphs[m], cfg).map_err(|e| {
                let msg = format!("molecule {m}, conformer {k}: {e}");
                if e.is_numerical() {
                    Error::NonFinite(msg)
                } else {
                    Error::Validation(msg)
                }
            })
        })
        .collect::<Result<_>>()?;
    Ok(regroup(flat, &counts))
}

/// Total sampling steps split into generation and refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBudget {
    pub generator_steps: usize,
    pub refiner_steps: usize,
}

impl StepBudget {
    pub fn total(&self) -> usize {
        self.generator_steps + self.refiner_steps
    }

    /// `"20+20"`, or just `"40"` without refinement.
    pub fn label(&self) -> String {
        if self.refiner_steps == 0 {
            self.generator_steps.to_string()
        } else {
            format!("{}+{}", self.generator_steps, self.refiner_steps)
        }
    }
}

/// Rows `molecule,conformer,t,mean_speed,min_rmsd`, one per velocity
/// evaluation plus the final state (speed left empty). `min_rmsd` is empty
/// without references.
pub fn format_trajectory_dump(
    rows: &[(&str, usize, &Trajectory, Option<&[PointSet]>)],
) -> Result<String> {
    let mut out = String::from("molecule,conformer,t,mean_speed,min_rmsd\n");
    for &(id, conf, traj, refs) in rows {
        let speeds = traj.mean_speeds();
        for (n, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
            let speed = speeds.get(n).map_or(String::new(), |s| format!("{s:.8}"));
            let r = match refs {
                Some(refs) => {
                    let mut best = f64::INFINITY;
                    for reference in refs {
                        best = best.min(aligned_rmsd(state, reference)?);
                    }
                    format!("{best:.8}")
                }
                None => String::new(),
            };
            let _ = writeln!(out, "{id},{conf},{t:.6},{speed},{r}");
        }
    }
    Ok(out)
}
