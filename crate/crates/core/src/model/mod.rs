//! Rotation- and translation-equivariant velocity network with hand-derived
//! gradients, plus the Adam optimizer and checkpoint container.

mod checkpoint;
mod graph;
pub mod layout;
mod network;
mod optim;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use graph::{Bond, MolecularGraph, MAX_BOND_ORDER};
pub use layout::Layout;
pub use optim::{Adam, AdamConfig};

use crate::error::{Error, Result};
use crate::geom3d::PointSet;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub n_rbf: usize,
    /// Neighbor cutoff R in Å; bonded pairs are always included.
    pub cutoff: f64,
    pub denom_epsilon: f64,
    /// Size of the atom-kind embedding table; kinds must be below it.
    pub n_kinds: usize,
    /// Sinusoid frequencies in the time embedding (two features each).
    pub time_frequencies: usize,
    /// Multiplier on summed messages before the node update.
    pub message_scale: f64,
    /// When set to `κ`, the velocity is divided by `1 − t + κ`, so the
    /// gates encode a displacement and the network need not learn the
    /// growth of the target speed near `t = 1`.
    pub velocity_time_offset: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 64,
            n_rbf: 16,
            cutoff: 5.0,
            denom_epsilon: 1e-8,
            n_kinds: 32,
            time_frequencies: 8,
            message_scale: 0.125,
            velocity_time_offset: None,
        }
    }
}

impl ModelConfig {
    pub fn time_features(&self) -> usize {
        2 * self.time_frequencies
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("model config: {msg}")));
        if self.layers == 0 || self.hidden == 0 || self.n_kinds == 0 {
            return bad("layers, hidden and n_kinds must be positive");
        }
        if self.n_rbf < 2 {
            return bad("n_rbf must be at least 2");
        }
        if !(self.cutoff > 0.0) || !(self.denom_epsilon > 0.0) {
            return bad("cutoff and denom_epsilon must be positive");
        }
        if matches!(self.velocity_time_offset, Some(k) if !(k > 0.0 && k.is_finite())) {
            return bad("velocity_time_offset must be positive");
        }
        Ok(())
    }
}

/// One regression example: a state `x_t` at time `t` and its target velocity.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub x_t: &'a PointSet,
    pub t: f64,
    pub graph: &'a MolecularGraph,
    pub target: &'a PointSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

impl VelocityModel {
    /// Fan-in scaled uniform initialization; gate heads start at zero so the
    /// fresh model predicts zero velocity everywhere.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        model.init_uniform(rng, false);
        Ok(model)
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![0.0; layout.len];
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        if params.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameter".into()));
        }
        model.params = params;
        Ok(model)
    }

    /// Re-draws every parameter, including the gate heads when
    /// `include_gates` is set.
    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R, include_gates: bool) {
        let layout = &self.layout;
        let p = &mut self.params;
        p.fill(0.0);
        for v in &mut p[layout.embedding.clone()] {
            *v = rng.random_range(-1.0..1.0);
        }
        let fill = |dense: &layout::Dense, p: &mut [f64], rng: &mut R| {
            let a = 1.0 / (dense.cols as f64).sqrt();
            for v in &mut p[dense.weights()] {
                *v = rng.random_range(-a..a);
            }
        };
        fill(&layout.time, p, rng);
        for l in 0..layout.message.len() {
            fill(&layout.message[l], p, rng);
            if include_gates {
                fill(&layout.gate[l], p, rng);
                p[layout.gate[l].bias()][0] = rng.random_range(-0.1..0.1);
            }
            if l < layout.node_in.len() {
                fill(&layout.node_in[l], p, rng);
                fill(&layout.node_out[l], p, rng);
            }
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Per-atom velocities `u_θ(x, t, 𝒢)`.
    pub fn forward(&self, x: &PointSet, graph: &MolecularGraph, t: f64) -> Result<PointSet> {
        Ok(network::forward(&self.config, &self.layout, &self.params, x, graph, t)?.velocity)
    }

    /// Squared-error loss of one item, `(1/N)·Σᵢ‖vᵢ − uᵢ‖²`, and its gradient
    /// scaled by `weight`.
    fn item_loss_and_grad(&self, item: &TrainItem<'_>, weight: f64) -> Result<(f64, Vec<f64>)> {
        item.x_t.check_same_shape(item.target)?;
        let tape = network::forward(
            &self.config,
            &self.layout,
            &self.params,
            item.x_t,
            item.graph,
            item.t,
        )?;
        let n = item.x_t.n_atoms() as f64;
        let mut loss = 0.0;
        let mut d_velocity = vec![[0.0; 3]; item.x_t.n_atoms()];
        for (i, (v, u)) in tape.velocity.iter().zip(item.target.iter()).enumerate() {
            for k in 0..3 {
                let r = v[k] - u[k];
                loss += r * r;
                d_velocity[i][k] = weight * 2.0 * r / n;
            }
        }
        let mut grads = vec![0.0; self.params.len()];
        network::backward(
            &self.config,
            &self.layout,
            &self.params,
            item.graph,
            &tape,
            &d_velocity,
            &mut grads,
        );
        Ok((loss / n, grads))
    }

    /// Batch-mean loss and its exact gradient. Items are evaluated in
    /// parallel and reduced in index order, so the result does not depend
    /// on the thread count.
    pub fn loss_and_grad(&self, batch: &[TrainItem<'_>]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        let parts: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|item| self.item_loss_and_grad(item, weight))
            .collect::<Result<_>>()?;
        let mut loss = 0.0;
        let mut grads = vec![0.0; self.params.len()];
        for (l, g) in &parts {
            loss += l;
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += v;
            }
        }
        Ok((loss * weight, grads))
    }

    /// Batch-mean loss only.
    pub fn loss(&self, batch: &[TrainItem<'_>]) -> Result<f64> {
        let mut total = 0.0;
        for item in batch {
            let v = self.forward(item.x_t, item.graph, item.t)?;
            let sq: f64 = v
                .iter()
                .zip(item.target.iter())
                .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>())
                .sum();
            total += sq / item.x_t.n_atoms() as f64;
        }
        Ok(total / batch.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom3d::{RigidTransform, PointSet};
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            layers: 3,
            hidden: 6,
            n_rbf: 5,
            cutoff: 3.0,
            n_kinds: 4,
            time_frequencies: 2,
            ..ModelConfig::default()
        }
    }

    fn random_model(cfg: ModelConfig, seed: u64) -> VelocityModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = VelocityModel::zeros(cfg).unwrap();
        m.init_uniform(&mut rng, true);
        m
    }

    fn ring_graph(n: usize) -> MolecularGraph {
        let kinds = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        let orders: Vec<u8> = (0..n - 1).map(|i| (i % 2) as u8 + 1).collect();
        MolecularGraph::chain(kinds, &orders).unwrap()
    }

    #[test]
    fn fresh_model_is_identity_refiner() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = VelocityModel::new(ModelConfig::default(), &mut rng).unwrap();
        let x = PointSet::standard_normal(7, &mut rng);
        let v = model.forward(&x, &ring_graph(7), 0.3).unwrap();
        assert!(v.iter().flatten().all(|c| *c == 0.0));
    }

    #[test]
    fn single_atom_has_zero_velocity() {
        let model = random_model(small_config(), 2);
        let g = MolecularGraph::new(vec![1], vec![]).unwrap();
        let x = PointSet::new(vec![[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(model.forward(&x, &g, 0.5).unwrap().coords(), &[[0.0; 3]]);
    }

    #[test]
    fn two_atom_velocity_is_parallel_to_bond() {
        let model = random_model(small_config(), 3);
        let g = MolecularGraph::new(vec![1, 2], vec![]).unwrap();
        let x = PointSet::new(vec![[0.1, 0.2, -0.3], [1.0, 0.7, 0.4]]).unwrap();
        let v = model.forward(&x, &g, 0.4).unwrap();
        let r = crate::geom3d::sub3(&x[1], &x[0]);
        for vi in v.iter() {
            let cross = [
                vi[1] * r[2] - vi[2] * r[1],
                vi[2] * r[0] - vi[0] * r[2],
                vi[0] * r[1] - vi[1] * r[0],
            ];
            assert!(cross.iter().all(|c| c.abs() < 1e-10), "{cross:?}");
        }
        assert!(v.mean_row_norm() > 0.0);
    }

    #[test]
    fn forward_is_equivariant() {
        let model = random_model(small_config(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ring_graph(6);
        for _ in 0..20 {
            let x = PointSet::standard_normal(6, &mut rng).scaled(1.2);
            let shift = Vector3::new(3.0, -1.0, 2.0);
            let q = RigidTransform::random_rotation(&mut rng, shift);
            let t = rng.random::<f64>();
            let lhs = model.forward(&q.apply(&x), &g, t).unwrap();
            let rhs = q.rotate(&model.forward(&x, &g, t).unwrap());
            assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn shape_and_kind_errors() {
        let model = random_model(small_config(), 6);
        let g = ring_graph(4);
        assert!(model.forward(&PointSet::zeros(3), &g, 0.5).is_err());
        let big = MolecularGraph::new(vec![9, 1], vec![]).unwrap();
        assert!(model.forward(&PointSet::zeros(2), &big, 0.5).is_err());
        assert!(model.forward(&PointSet::zeros(4), &g, 1.5).is_err());
    }

    #[test]
    fn exact_target_gives_zero_loss_and_grad() {
        let model = random_model(small_config(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ring_graph(5);
        let x = PointSet::standard_normal(5, &mut rng);
        let target = model.forward(&x, &g, 0.6).unwrap();
        let item = TrainItem {
            x_t: &x,
            t: 0.6,
            graph: &g,
            target: &target,
        };
        let (loss, grads) = model.loss_and_grad(&[item]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_batch_leaves_loss_and_grads_unchanged() {
        let model = random_model(small_config(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = ring_graph(5);
        let xs: Vec<PointSet> = (0..3).map(|_| PointSet::standard_normal(5, &mut rng)).collect();
        let us: Vec<PointSet> = (0..3).map(|_| PointSet::standard_normal(5, &mut rng)).collect();
        let batch: Vec<TrainItem> = xs
            .iter()
            .zip(&us)
            .enumerate()
            .map(|(k, (x, u))| TrainItem {
                x_t: x,
                t: 0.2 * k as f64,
                graph: &g,
                target: u,
            })
            .collect();
        let doubled: Vec<TrainItem> = batch.iter().chain(batch.iter()).copied().collect();
        let (l1, g1) = model.loss_and_grad(&batch).unwrap();
        let (l2, g2) = model.loss_and_grad(&doubled).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * l1.abs());
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
        assert!((model.loss(&batch).unwrap() - l1).abs() < 1e-12);
    }
}
