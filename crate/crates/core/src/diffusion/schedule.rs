//! Linear-β noise schedule and the v-parameterization.
//!
//! Timesteps are 1-based, `t ∈ [1, T]`; the network sees `t − 1`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numcore::{Real, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            timesteps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSchedule {
    pub config: ScheduleConfig,
    betas: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            timesteps,
            beta_start,
            beta_end,
        } = config;
        ensure!(timesteps >= 1, "schedule needs at least one step");
        ensure!(
            0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0,
            "betas must satisfy 0 < start <= end < 1"
        );
        let betas: Vec<f64> = (0..timesteps)
            .map(|i| {
                if timesteps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (timesteps - 1) as f64
                }
            })
            .collect();
        let mut acc = 1.0;
        let alpha_bar = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self {
            config,
            betas,
            alpha_bar,
        })
    }

    pub fn linear_default() -> Self {
        Self::new(ScheduleConfig::default()).expect("default schedule is valid")
    }

    pub fn timesteps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `ᾱ_t`; `t = 0` gives 1 (clean data).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn signal(&self, t: usize) -> f64 {
        self.alpha_bar(t).sqrt()
    }

    pub fn noise(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t)).sqrt()
    }

    pub fn snr(&self, t: usize) -> f64 {
        let a = self.alpha_bar(t);
        a / (1.0 - a)
    }

    fn check_t(&self, t: usize) -> Result<()> {
        ensure!(
            (1..=self.timesteps()).contains(&t),
            "timestep {t} outside [1, {}]",
            self.timesteps()
        );
        Ok(())
    }
}

fn combine<T: Real>(a: f64, x: &Tensor4<T>, b: f64, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    ensure!(
        x.dims() == y.dims(),
        "shape mismatch {} vs {}",
        x.dims(),
        y.dims()
    );
    let (a, b) = (T::from_f64_lossy(a), T::from_f64_lossy(b));
    let data = x.data().iter().zip(y.data()).map(|(&u, &v)| a * u + b * v).collect();
    Tensor4::from_vec(x.dims(), data)
}

/// `z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε`.
pub fn q_sample<T: Real>(s: &DiffusionSchedule, z0: &Tensor4<T>, t: usize, eps: &Tensor4<T>) -> Result<Tensor4<T>> {
    s.check_t(t)?;
    combine(s.signal(t), z0, s.noise(t), eps)
}

/// `v = √ᾱ_t·ε − √(1−ᾱ_t)·z0`.
pub fn v_target<T: Real>(s: &DiffusionSchedule, z0: &Tensor4<T>, eps: &Tensor4<T>, t: usize) -> Result<Tensor4<T>> {
    s.check_t(t)?;
    combine(s.signal(t), eps, -s.noise(t), z0)
}

/// `ẑ0 = √ᾱ_t·z_t − √(1−ᾱ_t)·v`.
pub fn predict_z0<T: Real>(s: &DiffusionSchedule, z_t: &Tensor4<T>, v: &Tensor4<T>, t: usize) -> Result<Tensor4<T>> {
    s.check_t(t)?;
    combine(s.signal(t), z_t, -s.noise(t), v)
}

/// `ε̂ = √(1−ᾱ_t)·z_t + √ᾱ_t·v`.
pub fn predict_eps<T: Real>(s: &DiffusionSchedule, z_t: &Tensor4<T>, v: &Tensor4<T>, t: usize) -> Result<Tensor4<T>> {
    s.check_t(t)?;
    combine(s.noise(t), z_t, s.signal(t), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Dims4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(d: Dims4, seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..d.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        Tensor4::from_vec(d, data).unwrap()
    }

    #[test]
    fn schedule_endpoints_and_monotonicity() {
        let s = DiffusionSchedule::linear_default();
        assert!(s.alpha_bar(1) > 0.999);
        assert!(s.alpha_bar(1000) < 0.01);
        for t in 2..=1000 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!(s.snr(t) < s.snr(t - 1));
        }
        for t in 1..=1000 {
            for c in [s.signal(t), s.noise(t), s.beta(t)] {
                assert!(c > 0.0 && c < 1.0);
            }
        }
        // Independent product of (1 - β).
        let mut acc = 1.0;
        for i in 0..1000 {
            acc *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
        }
        assert!((s.alpha_bar(1000) - acc).abs() < 1e-15);
    }

    #[test]
    fn q_sample_limits() {
        let s = DiffusionSchedule::linear_default();
        let d = Dims4::new(2, 4, 4, 3);
        let z0 = randn(d, 1);
        let eps = randn(d, 2);
        assert!(s.signal(1) > 0.9999);
        let zt = q_sample(&s, &z0, 1000, &eps).unwrap();
        let diff = zt.axpby(1.0, &eps, -1.0).unwrap();
        assert!(diff.norm() / eps.norm() < 0.1);
        let zero = Tensor4::zeros(d).unwrap();
        let z = q_sample(&s, &z0, 500, &zero).unwrap();
        for (a, b) in z.data().iter().zip(z0.data()) {
            assert_eq!(*a, s.signal(500) * b);
        }
        assert!(q_sample(&s, &z0, 0, &eps).is_err());
        assert!(q_sample(&s, &z0, 1001, &eps).is_err());
    }

    #[test]
    fn v_identities() {
        let s = DiffusionSchedule::linear_default();
        let d = Dims4::new(2, 4, 4, 3);
        let z0 = randn(d, 3);
        let eps = randn(d, 4);
        let zero = Tensor4::zeros(d).unwrap();
        for t in [1, 10, 250, 999, 1000] {
            let v = v_target(&s, &zero, &eps, t).unwrap();
            for (a, b) in v.data().iter().zip(eps.data()) {
                assert_eq!(*a, s.signal(t) * b);
            }
            let v = v_target(&s, &z0, &zero, t).unwrap();
            for (a, b) in v.data().iter().zip(z0.data()) {
                assert_eq!(*a, -s.noise(t) * b);
            }
            let zt = q_sample(&s, &z0, t, &eps).unwrap();
            let v = v_target(&s, &z0, &eps, t).unwrap();
            let back = predict_z0(&s, &zt, &v, t).unwrap();
            let e = predict_eps(&s, &zt, &v, t).unwrap();
            for i in 0..d.len() {
                assert!((back.data()[i] - z0.data()[i]).abs() < 1e-10);
                assert!((e.data()[i] - eps.data()[i]).abs() < 1e-10);
            }
        }
    }
}
