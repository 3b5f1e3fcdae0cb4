//! Analytic gradients against central finite differences, every parameter.

use confrefine::geom3d::PointSet;
use confrefine::model::{ModelConfig, MolecularGraph, TrainItem, VelocityModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const MAX_RELATIVE_ERROR: f64 = 1e-4;
/// Denominator floor: below it gradients are compared absolutely.
const GRAD_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

struct Batch {
    graph: MolecularGraph,
    xs: Vec<PointSet>,
    us: Vec<PointSet>,
    ts: Vec<f64>,
}

impl Batch {
    fn random(rng: &mut ChaCha8Rng, n_atoms: usize, n_items: usize) -> Self {
        let kinds = (0..n_atoms).map(|i| [1u8, 6, 7][i % 3]).collect();
        let orders: Vec<u8> = (0..n_atoms - 1).map(|i| [1u8, 2, 1, 3][i % 4]).collect();
        let graph = MolecularGraph::chain(kinds, &orders).unwrap();
        let xs = (0..n_items)
            .map(|_| PointSet::standard_normal(n_atoms, rng).scaled(1.3))
            .collect();
        let us = (0..n_items)
            .map(|_| PointSet::standard_normal(n_atoms, rng))
            .collect();
        let ts = (0..n_items).map(|_| rng.random::<f64>()).collect();
        Self { graph, xs, us, ts }
    }

    fn items(&self) -> Vec<TrainItem<'_>> {
        (0..self.xs.len())
            .map(|k| TrainItem {
                x_t: &self.xs[k],
                t: self.ts[k],
                graph: &self.graph,
                target: &self.us[k],
            })
            .collect()
    }
}

/// Per block: worst relative error and largest finite-difference magnitude.
fn check_all_parameters(cfg: ModelConfig, seed: u64) -> Vec<(String, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = VelocityModel::zeros(cfg).unwrap();
    model.init_uniform(&mut rng, true);
    let batch = Batch::random(&mut rng, 6, 2);
    let items = batch.items();
    let (_, grads) = model.loss_and_grad(&items).unwrap();

    let blocks = model.layout().blocks();
    let mut worst = Vec::new();
    for (name, range) in blocks {
        let mut block_worst: f64 = 0.0;
        let mut block_max: f64 = 0.0;
        for idx in range {
            let orig = model.params()[idx];
            model.params_mut()[idx] = orig + STEP;
            let plus = model.loss(&items).unwrap();
            model.params_mut()[idx] = orig - STEP;
            let minus = model.loss(&items).unwrap();
            model.params_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            block_worst = block_worst.max(relative_error(grads[idx], numeric));
            block_max = block_max.max(numeric.abs());
        }
        worst.push((name, block_worst, block_max));
    }
    worst
}

#[test]
fn every_parameter_block_matches_finite_differences() {
    let cfg = ModelConfig {
        layers: 3,
        hidden: 8,
        n_rbf: 6,
        cutoff: 3.0,
        n_kinds: 8,
        time_frequencies: 3,
        ..ModelConfig::default()
    };
    for (name, err, magnitude) in check_all_parameters(cfg, 42) {
        assert!(err < MAX_RELATIVE_ERROR, "block {name}: relative error {err:e}");
        assert!(magnitude > 1e-4, "block {name} has a vanishing gradient");
    }
}

#[test]
fn single_layer_model_matches_finite_differences() {
    let cfg = ModelConfig {
        layers: 1,
        hidden: 5,
        n_rbf: 4,
        cutoff: 2.5,
        n_kinds: 8,
        time_frequencies: 2,
        ..ModelConfig::default()
    };
    for (name, err, _) in check_all_parameters(cfg, 7) {
        assert!(err < MAX_RELATIVE_ERROR, "block {name}: relative error {err:e}");
    }
}

#[test]
fn default_architecture_sampled_parameters_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut model = VelocityModel::zeros(ModelConfig::default()).unwrap();
    model.init_uniform(&mut rng, true);
    let batch = Batch::random(&mut rng, 6, 2);
    let items = batch.items();
    let (_, grads) = model.loss_and_grad(&items).unwrap();
    for (name, range) in model.layout().blocks() {
        for _ in 0..6 {
            let idx = rng.random_range(range.clone());
            let orig = model.params()[idx];
            model.params_mut()[idx] = orig + STEP;
            let plus = model.loss(&items).unwrap();
            model.params_mut()[idx] = orig - STEP;
            let minus = model.loss(&items).unwrap();
            model.params_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = relative_error(grads[idx], numeric);
            assert!(err < MAX_RELATIVE_ERROR, "{name}[{idx}]: {err:e}");
        }
    }
}

#[test]
fn time_offset_output_matches_finite_differences() {
    let cfg = ModelConfig {
        layers: 2,
        hidden: 6,
        n_rbf: 5,
        cutoff: 3.0,
        n_kinds: 8,
        time_frequencies: 2,
        velocity_time_offset: Some(0.05),
        ..ModelConfig::default()
    };
    for (name, err, _) in check_all_parameters(cfg, 11) {
        assert!(err < MAX_RELATIVE_ERROR, "block {name}: relative error {err:e}");
    }
}
