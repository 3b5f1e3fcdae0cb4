//! Interpolant schedules, the data-centered refiner base distribution,
//! target velocities, and the χ²/Wilson–Hilferty RMSD noise model.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3d::PointSet;
use crate::tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Pure-noise base `x₀ = σ·ε`.
    GeneratorGaussian,
    /// Data-centered base `x₀ = x₁ + σ·ε`.
    RefinerLinear,
}

/// Coefficients of `x_t = α(t)·x₀ + β(t)·x₁ + s(t)·z`.
///
/// Both kinds use the linear path `α = 1 − t`, `β = t`; they differ only in
/// the base distribution. With `stochastic` set, `s(t) = √(t(1 − t))`,
/// otherwise `s ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub stochastic: bool,
}

impl Schedule {
    pub fn refiner() -> Self {
        Self {
            kind: ScheduleKind::RefinerLinear,
            stochastic: false,
        }
    }

    pub fn refiner_stochastic() -> Self {
        Self {
            kind: ScheduleKind::RefinerLinear,
            stochastic: true,
        }
    }

    pub fn generator() -> Self {
        Self {
            kind: ScheduleKind::GeneratorGaussian,
            stochastic: false,
        }
    }

    pub fn alpha(&self, t: f64) -> f64 {
        1.0 - t
    }

    pub fn beta(&self, t: f64) -> f64 {
        t
    }

    pub fn s(&self, t: f64) -> f64 {
        if self.stochastic {
            (t * (1.0 - t)).max(0.0).sqrt()
        } else {
            0.0
        }
    }

    pub fn d_alpha(&self, _t: f64) -> f64 {
        -1.0
    }

    pub fn d_beta(&self, _t: f64) -> f64 {
        1.0
    }

    /// `s′(t) = (1 − 2t) / (2√(t(1 − t)))`; undefined at the endpoints of a
    /// stochastic schedule.
    pub fn d_s(&self, t: f64) -> Result<f64> {
        if !self.stochastic {
            return Ok(0.0);
        }
        if t <= 0.0 || t >= 1.0 {
            return Err(Error::EndpointVelocity(t));
        }
        Ok((1.0 - 2.0 * t) / (2.0 * (t * (1.0 - t)).sqrt()))
    }

    /// Draws a training time: uniform on `[0, 1]`, or on
    /// `[δ, 1 − δ]` under a stochastic schedule to stay clear of the `s′`
    /// singularity.
    pub fn sample_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if self.stochastic {
            let band = tolerance::STOCHASTIC_T_BAND;
            band + (1.0 - 2.0 * band) * u
        } else {
            u
        }
    }
}

/// Training noise scale σ of the refiner base distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinerBaseConfig {
    pub sigma: f64,
}

impl Default for RefinerBaseConfig {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

impl RefinerBaseConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

/// Independent standard-normal draws: `epsilon` scales the base noise and
/// `z` drives the stochastic bridge term.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub epsilon: PointSet,
    pub z: PointSet,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(n_atoms: usize, rng: &mut R) -> Self {
        let epsilon = PointSet::standard_normal(n_atoms, rng);
        let z = PointSet::standard_normal(n_atoms, rng);
        Self { epsilon, z }
    }

    pub fn zeros(n_atoms: usize) -> Self {
        Self {
            epsilon: PointSet::zeros(n_atoms),
            z: PointSet::zeros(n_atoms),
        }
    }
}

/// `x₀ = x₁ + σ·ε`.
pub fn sample_refiner_base<R: Rng + ?Sized>(
    x1: &PointSet,
    cfg: &RefinerBaseConfig,
    rng: &mut R,
) -> (PointSet, NoiseDraw) {
    let noise = NoiseDraw::sample(x1.n_atoms(), rng);
    let mut x0 = x1.clone();
    x0.axpy(cfg.sigma, &noise.epsilon)
        .expect("noise drawn with the shape of x1");
    (x0, noise)
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("t={t} outside [0, 1]")));
    }
    Ok(())
}

/// `x_t = α(t)·x₀ + β(t)·x₁ + s(t)·z`.
pub fn interpolate(
    x0: &PointSet,
    x1: &PointSet,
    t: f64,
    sched: &Schedule,
    noise: &NoiseDraw,
) -> Result<PointSet> {
    check_time(t)?;
    x0.check_same_shape(&noise.z)?;
    PointSet::linear_combination(&[
        (sched.alpha(t), x0),
        (sched.beta(t), x1),
        (sched.s(t), &noise.z),
    ])
}

/// `u_t = α′(t)·x₀ + β′(t)·x₁ + s′(t)·z`; for the deterministic linear
/// schedule this is `x₁ − x₀`.
pub fn target_velocity(
    x0: &PointSet,
    x1: &PointSet,
    noise: &NoiseDraw,
    t: f64,
    sched: &Schedule,
) -> Result<PointSet> {
    check_time(t)?;
    x0.check_same_shape(&noise.z)?;
    let ds = sched.d_s(t)?;
    PointSet::linear_combination(&[
        (sched.d_alpha(t), x0),
        (sched.d_beta(t), x1),
        (ds, &noise.z),
    ])
}

/// Flow time at which the refiner's scheduled noise `(1 − t)·σ` equals the
/// upstream error scale: `t* = 1 − σ*/σ`.
pub fn self_calibration_time(sigma_star: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || sigma_star < 0.0 || !sigma_star.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need sigma > 0 and sigma* >= 0, got sigma={sigma}, sigma*={sigma_star}"
        )));
    }
    if sigma_star > sigma {
        return Err(Error::NoiseExceedsCoverage { sigma_star, sigma });
    }
    Ok(1.0 - sigma_star / sigma)
}

/// Degrees of freedom left after removing rigid motions: `d = 3N − 6`.
pub fn nonrigid_dof(n_atoms: usize) -> Result<usize> {
    if n_atoms < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 atoms for 3N-6 degrees of freedom, got {n_atoms}"
        )));
    }
    Ok(3 * n_atoms - 6)
}

/// Wilson–Hilferty quantile of the RMSD of an isotropic Gaussian
/// perturbation of scale `sigma_star` on `n_atoms` atoms, at standard-normal
/// quantile `q_k`:
///
/// `σ*·√((d/N)·(1 − 2/(9d) + q_k·√(2/(9d)))³)`, `d = 3N − 6`.
///
/// The cubed base is clamped at zero so extreme negative quantiles give 0.
pub fn wh_rmsd_quantile(n_atoms: usize, sigma_star: f64, q_k: f64) -> Result<f64> {
    let d = nonrigid_dof(n_atoms)? as f64;
    if sigma_star < 0.0 || !sigma_star.is_finite() || !q_k.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigma*={sigma_star}, q_k={q_k} must be finite with sigma* >= 0"
        )));
    }
    let v = 2.0 / (9.0 * d);
    let base = (1.0 - v + q_k * v.sqrt()).max(0.0);
    Ok(sigma_star * (d / n_atoms as f64 * base.powi(3)).sqrt())
}

/// One draw of `σ*·√(χ²_d / N)` with `d = 3N − 6`, the χ² built as a sum of
/// squared standard normals.
pub fn sample_rmsd_chi<R: Rng + ?Sized>(n_atoms: usize, sigma_star: f64, rng: &mut R) -> Result<f64> {
    let d = nonrigid_dof(n_atoms)?;
    let chi2: f64 = (0..d)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * g
        })
        .sum();
    Ok(sigma_star * (chi2 / n_atoms as f64).sqrt())
}
