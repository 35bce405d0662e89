//! Deterministic DDIM sampling with classifier-free guidance.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::condition::make_condition;
use super::config::TrainConfig;
use super::latent::{decode, encode, from_model_space, to_model_space};
use super::precond::model_skip;
use super::schedule::{predict_eps, predict_z0, DiffusionSchedule};
use super::train::gaussian;
use crate::error::{ensure, Error, Result};
use crate::numcore::{denoiser_forward, Checkpoint, DenoiserParams, Real, Tensor4, VideoTensor};

/// Anything that predicts v from `(z_t, cond, t, prompt)`; `t` is 1-based.
pub trait VPredictor<T: Real> {
    fn predict_v(&self, z_t: &Tensor4<T>, cond: &Tensor4<T>, t: usize, prompt: usize) -> Result<Tensor4<T>>;
}

impl<T: Real> VPredictor<T> for DenoiserParams<T> {
    fn predict_v(&self, z_t: &Tensor4<T>, cond: &Tensor4<T>, t: usize, prompt: usize) -> Result<Tensor4<T>> {
        denoiser_forward(self, z_t, cond, t - 1, prompt)
    }
}

/// `v̂ = v_null + g·(v_cond − v_null)`.
pub fn guided_v<T: Real>(v_cond: &Tensor4<T>, v_null: &Tensor4<T>, guidance: f64) -> Result<Tensor4<T>> {
    let g = T::from_f64_lossy(guidance);
    v_null.axpby(T::one() - g, v_cond, g)
}

/// Descending timesteps visited by a `steps`-step sampler over `[1, T]`.
pub fn ddim_timesteps(timesteps: usize, steps: usize) -> Result<Vec<usize>> {
    ensure!(
        (1..=timesteps).contains(&steps),
        "sampling steps {steps} outside [1, {timesteps}]"
    );
    Ok((1..=steps).rev().map(|k| k * timesteps / steps).collect())
}

/// Runs the η = 0 trajectory from `z_T = noise` and returns `ẑ0`.
#[allow(clippy::too_many_arguments)]
pub fn ddim_loop<T: Real, M: VPredictor<T>>(
    model: &M,
    sched: &DiffusionSchedule,
    cond: &Tensor4<T>,
    prompt: usize,
    null_prompt: usize,
    steps: usize,
    guidance: f64,
    noise: Tensor4<T>,
) -> Result<Tensor4<T>> {
    ensure!(guidance >= 0.0 && guidance.is_finite(), "guidance must be >= 0");
    let ts = ddim_timesteps(sched.timesteps(), steps)?;
    let mut z = noise;
    for (i, &t) in ts.iter().enumerate() {
        let v = if guidance == 1.0 {
            model.predict_v(&z, cond, t, prompt)?
        } else if guidance == 0.0 {
            model.predict_v(&z, cond, t, null_prompt)?
        } else {
            let vc = model.predict_v(&z, cond, t, prompt)?;
            let vn = model.predict_v(&z, cond, t, null_prompt)?;
            guided_v(&vc, &vn, guidance)?
        };
        let z0 = predict_z0(sched, &z, &v, t)?;
        let t_prev = ts.get(i + 1).copied().unwrap_or(0);
        z = if t_prev == 0 {
            z0
        } else {
            let eps = predict_eps(sched, &z, &v, t)?;
            let (a, s) = (T::from_f64_lossy(sched.signal(t_prev)), T::from_f64_lossy(sched.noise(t_prev)));
            z0.axpby(a, &eps, s)?
        };
        z.ensure_finite("sampler state")?;
    }
    Ok(z)
}

/// A trained model ready to animate start frames.
pub struct Generator {
    pub params: DenoiserParams<f32>,
    pub config: TrainConfig,
    pub schedule: DiffusionSchedule,
}

impl Generator {
    pub fn from_checkpoint(ckpt: &Checkpoint<f32>) -> Result<Self> {
        let config: TrainConfig = serde_json::from_value(ckpt.run_config.clone())?;
        Ok(Self {
            schedule: DiffusionSchedule::new(config.schedule)?,
            params: ckpt.params.clone(),
            config,
        })
    }

    /// Freshly initialized network for `config`.
    pub fn untrained(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (_, vocab) = super::train::prompt_library();
        let params = DenoiserParams::init(config.denoiser_config(&vocab), config.seed)?;
        Ok(Self {
            schedule: DiffusionSchedule::new(config.schedule)?,
            params,
            config,
        })
    }

    /// Network output plus the configured skip term.
    pub fn predict(&self, z_t: &Tensor4<f32>, cond: &Tensor4<f32>, t: usize, prompt: usize) -> Result<Tensor4<f32>> {
        let v = self.params.predict_v(z_t, cond, t, prompt)?;
        match model_skip(&self.config, &self.schedule, z_t, cond, t)? {
            Some(skip) => v.axpby(1.0, &skip, 1.0),
            None => Ok(v),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Animates `image` (one `H×W×3` frame) following `prompt`.
    pub fn generate(&self, image: &VideoTensor, prompt: usize, steps: usize, guidance: f64, seed: u64) -> Result<VideoTensor> {
        let r = &self.config.data.render;
        let d = image.dims();
        ensure!(
            d.frames == 1 && d.channels == 3 && d.height == r.height && d.width == r.width,
            "condition image must be 1x{}x{}x3, got {d}",
            r.height,
            r.width
        );
        let null = self.params.config.null_prompt();
        ensure!(prompt <= null, "prompt index {prompt} beyond vocabulary");
        let first = to_model_space(&encode(image, self.config.pool)?);
        let cond = make_condition(&first, r.frames, prompt, null, false, self.params.config.conditioning)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = gaussian(cond.latent.dims(), &mut rng);
        let z0 = ddim_loop(self, &self.schedule, &cond.latent, prompt, null, steps, guidance, noise)?;
        let video = decode(&from_model_space(&z0), self.config.pool)?;
        Ok(video.map(|v| v.clamp(0.0, 1.0)))
    }
}

impl VPredictor<f32> for Generator {
    fn predict_v(&self, z_t: &Tensor4<f32>, cond: &Tensor4<f32>, t: usize, prompt: usize) -> Result<Tensor4<f32>> {
        self.predict(z_t, cond, t, prompt)
    }
}

/// Loads `ckpt_path` and samples one video.
pub fn ddim_sample(ckpt_path: &Path, image: &VideoTensor, prompt: usize, steps: usize, guidance: f64, seed: u64) -> Result<VideoTensor> {
    if !ckpt_path.exists() {
        return Err(Error::NotFound(format!("checkpoint {}", ckpt_path.display())));
    }
    Generator::load(ckpt_path)?.generate(image, prompt, steps, guidance, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Dims4;
    use std::cell::RefCell;

    /// Exact v for data concentrated at `target`.
    struct PointMass(Tensor4<f64>, DiffusionSchedule);

    impl VPredictor<f64> for PointMass {
        fn predict_v(&self, z: &Tensor4<f64>, _: &Tensor4<f64>, t: usize, _: usize) -> Result<Tensor4<f64>> {
            let (a, s) = (self.1.signal(t), self.1.noise(t));
            // ε = (z − a·x)/s, v = a·ε − s·x.
            let eps = z.axpby(1.0 / s, &self.0, -a / s)?;
            eps.axpby(a, &self.0, -s)
        }
    }

    /// Exact v for i.i.d. Gaussian data N(mu, sigma²): E[x|z] is linear in z.
    struct Gaussian {
        mu: f64,
        sigma: f64,
        sched: DiffusionSchedule,
    }

    impl VPredictor<f64> for Gaussian {
        fn predict_v(&self, z: &Tensor4<f64>, _: &Tensor4<f64>, t: usize, _: usize) -> Result<Tensor4<f64>> {
            let (a, s) = (self.sched.signal(t), self.sched.noise(t));
            let var = a * a * self.sigma * self.sigma + s * s;
            let gain = a * self.sigma * self.sigma / var;
            let x0 = z.map(|v| self.mu + gain * (v - a * self.mu));
            let eps = z.axpby(1.0 / s, &x0, -a / s)?;
            eps.axpby(a, &x0, -s)
        }
    }

    /// Records which prompt each call used and returns a prompt-dependent constant.
    struct Probe(RefCell<Vec<usize>>);

    impl VPredictor<f64> for Probe {
        fn predict_v(&self, z: &Tensor4<f64>, _: &Tensor4<f64>, _: usize, prompt: usize) -> Result<Tensor4<f64>> {
            self.0.borrow_mut().push(prompt);
            Ok(z.map(|_| prompt as f64))
        }
    }

    fn noise(d: Dims4, seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        gaussian(d, &mut rng).cast()
    }

    #[test]
    fn timesteps_cover_the_range() {
        assert_eq!(ddim_timesteps(1000, 4).unwrap(), vec![1000, 750, 500, 250]);
        assert_eq!(ddim_timesteps(10, 10).unwrap(), (1..=10).rev().collect::<Vec<_>>());
        assert!(ddim_timesteps(10, 0).is_err());
        assert!(ddim_timesteps(10, 11).is_err());
    }

    #[test]
    fn guidance_identities() {
        let d = Dims4::new(1, 2, 2, 1);
        let vc = noise(d, 1);
        let vn = noise(d, 2);
        assert_eq!(guided_v(&vc, &vn, 1.0).unwrap(), vc);
        assert_eq!(guided_v(&vc, &vn, 0.0).unwrap(), vn);
        let g = guided_v(&vc, &vn, 7.5).unwrap();
        for i in 0..d.len() {
            let want = vn.data()[i] + 7.5 * (vc.data()[i] - vn.data()[i]);
            assert!((g.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_guidance_uses_only_the_conditional_branch() {
        let sched = DiffusionSchedule::linear_default();
        let d = Dims4::new(1, 2, 2, 1);
        let probe = Probe(RefCell::new(Vec::new()));
        ddim_loop(&probe, &sched, &noise(d, 0), 3, 9, 5, 1.0, noise(d, 1)).unwrap();
        assert_eq!(*probe.0.borrow(), vec![3; 5]);
        let probe = Probe(RefCell::new(Vec::new()));
        ddim_loop(&probe, &sched, &noise(d, 0), 3, 9, 5, 0.0, noise(d, 1)).unwrap();
        assert_eq!(*probe.0.borrow(), vec![9; 5]);
    }

    #[test]
    fn point_mass_oracle_is_recovered() {
        let sched = DiffusionSchedule::linear_default();
        let d = Dims4::new(2, 3, 3, 2);
        let target = noise(d, 5);
        let oracle = PointMass(target.clone(), sched.clone());
        for steps in [1, 50, 1000] {
            let out = ddim_loop(&oracle, &sched, &target, 0, 1, steps, 1.0, noise(d, 6)).unwrap();
            let err = out.axpby(1.0, &target, -1.0).unwrap().norm();
            assert!(err < 1e-8, "steps {steps}: {err}");
        }
    }

    #[test]
    fn gaussian_oracle_follows_the_probability_flow() {
        let sched = DiffusionSchedule::linear_default();
        let (mu, sigma) = (0.3, 0.5);
        let oracle = Gaussian { mu, sigma, sched: sched.clone() };
        let d = Dims4::new(2, 3, 3, 2);
        let z_t = noise(d, 7);
        // The flow is affine: x0 = mu + sigma·(z_T − a_T·mu)/sqrt(a_T²σ² + s_T²).
        let (a, s) = (sched.signal(1000), sched.noise(1000));
        let scale = sigma / (a * a * sigma * sigma + s * s).sqrt();
        let worst = |steps: usize| {
            let out = ddim_loop(&oracle, &sched, &z_t, 0, 1, steps, 1.0, z_t.clone()).unwrap();
            out.data()
                .iter()
                .zip(z_t.data())
                .map(|(o, z)| (o - (mu + scale * (z - a * mu))).abs())
                .fold(0.0f64, f64::max)
        };
        let (coarse, fine) = (worst(50), worst(1000));
        // DDIM is first order in the noise level, so only the fine run is tight.
        assert!(fine < 5e-3, "{fine}");
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let img = Tensor4::zeros(Dims4::new(1, 32, 32, 3)).unwrap();
        let err = ddim_sample(Path::new("/nonexistent/ckpt.bin"), &img, 0, 5, 7.5, 0).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }
}
