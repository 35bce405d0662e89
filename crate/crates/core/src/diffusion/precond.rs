//! Analytic skip term added to the network output.
//!
//! With `a = √ᾱ_t`, `s = √(1 − ᾱ_t)` and `v = (a·z_t − z0)/s`, the skip is the
//! posterior mean of `v` under a per-element prior on `z0` around the
//! condition latent `c`:
//!
//! - `Gaussian`: `z0 ~ N(c, σ²)`, giving `s·(a(1 − σ²)·z_t − c) / (a²σ² + s²)`;
//! - `Mixture`: `z0 = c` with probability `1 − π`, else `z0 ~ N(c, σ²)`.
//!
//! The network learns the remainder.

use super::config::TrainConfig;
use super::schedule::DiffusionSchedule;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numcore::{Real, Tensor4};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipKind {
    None,
    Gaussian,
    #[default]
    Mixture,
}

/// Mixture-prior skip: exact where `z0 = c`, bounded elsewhere.
pub fn mixture_skip_v<T: Real>(
    sched: &DiffusionSchedule,
    z_t: &Tensor4<T>,
    cond: &Tensor4<T>,
    t: usize,
    std: f64,
    moving_prob: f64,
) -> Result<Tensor4<T>> {
    ensure!(z_t.dims() == cond.dims(), "skip needs matching latents");
    let (a, s) = (sched.signal(t), sched.noise(t));
    let var0 = s * s;
    let var1 = a * a * std * std + s * s;
    let gain = a * std * std / var1;
    let log_odds0 = (moving_prob / (1.0 - moving_prob)).ln() + 0.5 * (var0 / var1).ln();
    let half = 0.5 * (1.0 / var0 - 1.0 / var1);
    let data = z_t
        .data()
        .iter()
        .zip(cond.data())
        .map(|(&z, &c)| {
            let (z, c) = (z.to_f64_lossy(), c.to_f64_lossy());
            let d = z - a * c;
            let w = 1.0 / (1.0 + (-(log_odds0 + half * d * d)).exp());
            let x0 = c + w * gain * d;
            T::from_f64_lossy((a * z - x0) / s)
        })
        .collect();
    Tensor4::from_vec(z_t.dims(), data)
}

/// Skip prediction at timestep `t`; `cond` is `None` for a zero-mean prior.
pub fn skip_v<T: Real>(
    sched: &DiffusionSchedule,
    z_t: &Tensor4<T>,
    cond: Option<&Tensor4<T>>,
    t: usize,
    std: f64,
) -> Result<Tensor4<T>> {
    let (a, s) = (sched.signal(t), sched.noise(t));
    let var = std * std;
    let den = a * a * var + s * s;
    let kz = T::from_f64_lossy(s * a * (1.0 - var) / den);
    match cond {
        Some(c) => z_t.axpby(kz, c, T::from_f64_lossy(-s / den)),
        None => Ok(z_t.map(|v| v * kz)),
    }
}

/// Skip term a model trained under `cfg` adds at `t`, if any.
pub fn model_skip<T: Real>(
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
    z_t: &Tensor4<T>,
    cond: &Tensor4<T>,
    t: usize,
) -> Result<Option<Tensor4<T>>> {
    let m = &cfg.model;
    let c = m.conditioning.concatenates().then_some(cond);
    match (m.skip, c) {
        (SkipKind::None, _) => Ok(None),
        (SkipKind::Mixture, Some(c)) => mixture_skip_v(sched, z_t, c, t, m.skip_std, m.skip_moving).map(Some),
        (_, c) => skip_v(sched, z_t, c, t, m.skip_std).map(Some),
    }
}
