//! The regression loop shared by the refiner and the noise-to-data
//! generator. They differ only in the base draw: the refiner starts from
//! `x₁ + σ·ε`, the generator from centered `σ·ε`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::MoleculeRecord;
use crate::error::{Error, Result};
use crate::geom3d::{kabsch_align, PointSet};
use crate::interpolant::{interpolate, target_velocity, NoiseDraw, Schedule, ScheduleKind};
use crate::model::{Adam, AdamConfig, TrainItem, VelocityModel};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Base-noise scale σ in Å.
    pub sigma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Cosine-decay target reached on the last step; `None` keeps the rate
    /// constant.
    pub final_learning_rate: Option<f64>,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    /// Training draws per molecule per epoch.
    pub samples_per_molecule: usize,
    pub seed: u64,
    pub schedule: Schedule,
    /// Kabsch-align `x₀` onto `x₁` before interpolating.
    pub align_base: bool,
    /// Reuse the same `(x₁, ε, t)` draws every epoch instead of fresh ones.
    pub fixed_draws: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            final_learning_rate: None,
            grad_clip: None,
            samples_per_molecule: 1,
            seed: 0,
            schedule: Schedule::refiner(),
            align_base: true,
            fixed_draws: false,
        }
    }
}

impl TrainConfig {
    pub fn generator() -> Self {
        Self {
            schedule: Schedule::generator(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("train config: {m}")));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.batch_size == 0 || self.samples_per_molecule == 0 {
            return bad("batch_size and samples_per_molecule must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0) {
            return bad(format!("learning rate {} is negative", self.learning_rate));
        }
        if matches!(self.final_learning_rate, Some(lr) if !(lr >= 0.0)) {
            return bad("final learning rate is negative".into());
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive".into());
        }
        Ok(())
    }

    fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        match self.final_learning_rate {
            None => self.learning_rate,
            Some(end) => {
                let frac = if total > 1 { step as f64 / (total - 1) as f64 } else { 1.0 };
                end + 0.5 * (self.learning_rate - end) * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

/// One regression example drawn from a record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub x0: PointSet,
    pub x1: PointSet,
    pub x_t: PointSet,
    pub t: f64,
    pub target: PointSet,
}

/// Draws `(x₁, ε, t)`, builds `x₀`, optionally aligns it to `x₁`, and
/// returns the interpolated state with its target velocity. After
/// alignment the target is `x₁ − x₀_aligned` exactly.
pub fn draw_sample<R: Rng + ?Sized>(
    record: &MoleculeRecord,
    schedule: &Schedule,
    sigma: f64,
    align_base: bool,
    rng: &mut R,
) -> Result<TrainingSample> {
    let k = rng.random_range(0..record.references.len());
    let x1 = record.references[k].center();
    let n = x1.n_atoms();
    let mut noise = NoiseDraw::sample(n, rng);
    let mut x0 = match schedule.kind {
        ScheduleKind::RefinerLinear => PointSet::linear_combination(&[(1.0, &x1), (sigma, &noise.epsilon)])?,
        ScheduleKind::GeneratorGaussian => noise.epsilon.scaled(sigma).center(),
    };
    if align_base {
        x0 = kabsch_align(&x0, &x1)?.aligned;
    }
    if schedule.kind == ScheduleKind::RefinerLinear {
        noise.epsilon = x0.sub(&x1)?.scaled(1.0 / sigma);
    }
    let t = schedule.sample_time(rng);
    let x_t = interpolate(&x0, &x1, t, schedule, &noise)?;
    let target = target_velocity(&x0, &x1, &noise, t, schedule)?;
    Ok(TrainingSample { x0, x1, x_t, t, target })
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epoch_loss: Vec<f64>,
}

impl LossHistory {
    pub fn first(&self) -> Option<f64> {
        self.epoch_loss.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.epoch_loss.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.epoch_loss.iter().enumerate() {
            out.push_str(&format!("{e},{l:.10e}\n"));
        }
        out
    }
}

fn clip_gradient(grads: &mut [f64], max_norm: f64) {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

/// Trains `model` in place with Adam. Randomness comes from streams derived
/// from `cfg.seed`: one for each epoch's ordering and one per drawn sample,
/// so results do not depend on the thread count.
pub fn train(model: &mut VelocityModel, dataset: &[MoleculeRecord], cfg: &TrainConfig) -> Result<LossHistory> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    for rec in dataset {
        rec.validate()?;
    }
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        model.n_params(),
    );
    let slots: Vec<usize> = (0..dataset.len())
        .flat_map(|m| std::iter::repeat_n(m, cfg.samples_per_molecule))
        .collect();
    let batches_per_epoch = slots.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let mut history = LossHistory {
        epoch_loss: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        let mut ids: Vec<u64> = (0..slots.len() as u64).collect();
        ids.shuffle(&mut seeding::substream(cfg.seed, epoch as u64, u64::MAX));
        let order: Vec<usize> = ids.iter().map(|&s| slots[s as usize]).collect();
        let slot_ids = &ids;
        let mut epoch_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let samples: Vec<TrainingSample> = chunk
                .iter()
                .enumerate()
                .map(|(j, &m)| {
                    let mut rng = if cfg.fixed_draws {
                        // Keyed by slot identity so the draw follows the slot across shuffles.
                        seeding::substream(cfg.seed, u64::MAX, slot_ids[b * cfg.batch_size + j])
                    } else {
                        seeding::substream(cfg.seed, epoch as u64, (b * cfg.batch_size + j) as u64)
                    };
                    draw_sample(&dataset[m], &cfg.schedule, cfg.sigma, cfg.align_base, &mut rng)
                })
                .collect::<Result<_>>()?;
            let items: Vec<TrainItem<'_>> = samples
                .iter()
                .zip(chunk)
                .map(|(s, &m)| TrainItem {
                    x_t: &s.x_t,
                    t: s.t,
                    graph: &dataset[m].graph,
                    target: &s.target,
                })
                .collect();
            let diagnose = |what: &str| {
                let ids: Vec<&str> = chunk.iter().map(|&m| dataset[m].id.as_str()).collect();
                Error::NonFinite(format!("{what} at epoch {epoch}, batch {b}, molecules [{}]", ids.join(", ")))
            };
            let (loss, mut grads) = model.loss_and_grad(&items).map_err(|e| match e {
                Error::NonFinite(_) => diagnose("forward pass"),
                other => other,
            })?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                // Locate the first offending molecule for the message.
                let culprit = items
                    .iter()
                    .zip(chunk)
                    .find(|(item, _)| !model.loss(std::slice::from_ref(item)).is_ok_and(f64::is_finite))
                    .map(|(_, &m)| dataset[m].id.clone());
                return Err(match culprit {
                    Some(id) => Error::NonFinite(format!("loss at epoch {epoch}, batch {b}, molecule {id}")),
                    None => diagnose("gradient"),
                });
            }
            if let Some(c) = cfg.grad_clip {
                clip_gradient(&mut grads, c);
            }
            opt.set_learning_rate(cfg.learning_rate_at(epoch * batches_per_epoch + b, total_steps));
            opt.step(model, &grads)?;
            epoch_sum += loss * chunk.len() as f64;
        }
        history.epoch_loss.push(epoch_sum / slots.len() as f64);
    }
    Ok(history)
}

/// Trains a refiner; the schedule must be the data-centered one.
pub fn train_refiner(
    model: &mut VelocityModel,
    dataset: &[MoleculeRecord],
    cfg: &TrainConfig,
) -> Result<LossHistory> {
    if cfg.schedule.kind != ScheduleKind::RefinerLinear {
        return Err(Error::InvalidInput("train_refiner needs the refiner schedule".into()));
    }
    train(model, dataset, cfg)
}

/// Trains the pure-noise baseline generator.
pub fn train_generator(
    model: &mut VelocityModel,
    dataset: &[MoleculeRecord],
    cfg: &TrainConfig,
) -> Result<LossHistory> {
    if cfg.schedule.kind != ScheduleKind::GeneratorGaussian {
        return Err(Error::InvalidInput("train_generator needs the generator schedule".into()));
    }
    train(model, dataset, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, ToyDatasetSpec};
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> VelocityModel {
        let cfg = ModelConfig {
            layers: 2,
            hidden: 16,
            n_rbf: 8,
            ..ModelConfig::default()
        };
        VelocityModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn dataset(n: usize) -> Vec<MoleculeRecord> {
        synth_dataset(&ToyDatasetSpec {
            n_molecules: n,
            ..ToyDatasetSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn aligned_sample_has_exact_target() {
        let data = dataset(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = draw_sample(&data[0], &Schedule::refiner(), 1.0, true, &mut rng).unwrap();
        let u = s.x1.sub(&s.x0).unwrap();
        assert!(u.max_abs_diff(&s.target) < 1e-12);
        let again = PointSet::linear_combination(&[(1.0 - s.t, &s.x0), (s.t, &s.x1)]).unwrap();
        assert!(again.max_abs_diff(&s.x_t) < 1e-12);
        // Aligned noise has no net rotation left relative to x1.
        let realigned = kabsch_align(&s.x0, &s.x1).unwrap();
        assert!(realigned.aligned.max_abs_diff(&s.x0) < 1e-9);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let data = dataset(3);
        let mut model = tiny_model(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        model.init_uniform(&mut rng, true);
        let before = model.params().to_vec();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        train_refiner(&mut model, &data, &cfg).unwrap();
        assert!(before.iter().zip(model.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn initial_loss_matches_aligned_noise_variance() {
        // A fresh model predicts zero, so its loss is E[(1/N)‖x₁ − x₀_aligned‖²].
        let data = dataset(20);
        let model = tiny_model(3);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1000,
            samples_per_molecule: 200,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let mut m = model.clone();
        let loss = train_refiner(&mut m, &data, &cfg).unwrap().epoch_loss[0];

        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let mut acc = 0.0;
        let draws = 20_000;
        for d in 0..draws {
            let rec = &data[d % data.len()];
            let x1 = &rec.references[0];
            let x0 = PointSet::linear_combination(&[(1.0, x1), (1.0, &PointSet::standard_normal(x1.n_atoms(), &mut rng))])
                .unwrap();
            let al = kabsch_align(&x0, x1).unwrap().aligned;
            let sq: f64 = al.iter().zip(x1.iter()).map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()).sum();
            acc += sq / x1.n_atoms() as f64;
        }
        let oracle = acc / draws as f64;
        assert!((loss - oracle).abs() < 0.05 * oracle, "loss {loss} vs oracle {oracle}");
        assert!(oracle < 3.0, "alignment removes rigid-motion variance: {oracle}");
    }

    #[test]
    fn overfits_a_single_molecule() {
        let mut rec = dataset(1).remove(0);
        rec.references.truncate(1);
        rec.basin_labels = None;
        let data = vec![rec];
        let mcfg = ModelConfig {
            hidden: 32,
            ..ModelConfig::default()
        };
        let mut model = VelocityModel::new(mcfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            samples_per_molecule: 1,
            learning_rate: 1e-2,
            seed: 11,
            fixed_draws: true,
            ..TrainConfig::default()
        };
        let hist = train_refiner(&mut model, &data, &cfg).unwrap();
        let first = hist.first().unwrap();
        let last = hist.last().unwrap();
        assert!(last < 0.1 * first, "first {first}, last {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = dataset(4);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 3,
            seed: 8,
            ..TrainConfig::default()
        };
        let mut a = tiny_model(5);
        let mut b = a.clone();
        let ha = train_refiner(&mut a, &data, &cfg).unwrap();
        let hb = train_refiner(&mut b, &data, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut model = tiny_model(6);
        assert!(train_refiner(&mut model, &[], &TrainConfig::default()).is_err());
        let data = dataset(1);
        let bad = TrainConfig {
            sigma: 0.0,
            ..TrainConfig::default()
        };
        assert!(train_refiner(&mut model, &data, &bad).is_err());
        assert!(train_generator(&mut model, &data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn non_finite_loss_names_epoch_batch_and_molecule() {
        let data = dataset(2);
        let mut model = tiny_model(7);
        let time_w = model.layout().time.w;
        model.params_mut()[time_w] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let err = train_refiner(&mut model, &data, &cfg).unwrap_err();
        let msg = err.to_string();
        assert!(err.is_numerical(), "{msg}");
        assert!(msg.contains("epoch 0") && msg.contains("batch 0") && msg.contains("mol"), "{msg}");
    }

    #[test]
    fn cosine_schedule_hits_endpoints() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            final_learning_rate: Some(1e-4),
            ..TrainConfig::default()
        };
        assert!((cfg.learning_rate_at(0, 11) - 1e-2).abs() < 1e-15);
        assert!((cfg.learning_rate_at(10, 11) - 1e-4).abs() < 1e-15);
        assert!((cfg.learning_rate_at(5, 11) - 0.5 * (1e-2 + 1e-4)).abs() < 1e-12);
    }
}
