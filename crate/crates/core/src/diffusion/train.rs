use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::condition::{draw_drop, make_condition};
use super::config::{HeatmapSource, TrainConfig};
use super::latent::{encode, to_model_space};
use super::precond::model_skip;
use super::schedule::{q_sample, v_target, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::motionmap::{downsample_heatmap, estimate_video_flow, heatmap_from_flow};
use crate::numcore::{loss_and_grads, Checkpoint, DenoiserParams, Optimizer, Tensor4, TrainingItem};
use crate::synthvid::{default_scenarios, gen_dataset, vocab_for, Clip, PromptVocab, Scenario};

/// Losses of one optimizer step, averaged over the batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub diffusion: f64,
    pub motif: f64,
    pub total: f64,
}

pub struct TrainRun {
    pub checkpoint: Checkpoint<f32>,
    pub log: Vec<StepLog>,
}

/// Scenario library and vocabulary every model is trained against.
pub fn prompt_library() -> (Vec<Scenario>, PromptVocab) {
    let lib = default_scenarios();
    let vocab = vocab_for(&lib);
    (lib, vocab)
}

/// Model-space latent `z0` and the latent-aligned heatmap of a clip.
pub fn clip_latents(clip: &Clip, cfg: &TrainConfig) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    let z0 = to_model_space(&encode(&clip.video, cfg.pool)?);
    let heat = match cfg.heatmap_source {
        HeatmapSource::Oracle => heatmap_from_flow(&clip.flow, cfg.heatmap)?,
        HeatmapSource::Estimated => {
            heatmap_from_flow(&estimate_video_flow(&clip.video, &cfg.flow)?, cfg.heatmap)?
        }
    };
    Ok((z0, downsample_heatmap(&heat, cfg.pool)?))
}

pub fn gaussian(dims: crate::numcore::Dims4, rng: &mut impl Rng) -> Tensor4<f32> {
    let data = (0..dims.len()).map(|_| StandardNormal.sample(rng)).collect();
    Tensor4::from_vec(dims, data).expect("dims are valid")
}

/// Noises one clip at a uniformly drawn timestep.
fn make_item(
    clip: &Clip,
    cfg: &TrainConfig,
    sched: &DiffusionSchedule,
    null_prompt: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingItem<f32>> {
    let (z0, heat) = clip_latents(clip, cfg)?;
    let t = rng.gen_range(1..=sched.timesteps());
    let eps = gaussian(z0.dims(), rng);
    let drop = draw_drop(rng, cfg.prompt_dropout);
    let cond = make_condition(&z0, z0.dims().frames, clip.prompt.index, null_prompt, drop, cfg.model.conditioning)?;
    let z_t = q_sample(sched, &z0, t, &eps)?;
    let mut target_v = v_target(sched, &z0, &eps, t)?;
    if let Some(skip) = model_skip(cfg, sched, &z_t, &cond.latent, t)? {
        target_v = target_v.axpby(1.0, &skip, -1.0)?;
    }
    Ok(TrainingItem {
        z_t,
        target_v,
        heat,
        cond: cond.latent,
        t_index: t - 1,
        prompt: cond.prompt,
        alpha_bar: sched.alpha_bar(t),
    })
}

/// Runs the training loop; `on_step` sees every step's losses.
pub fn train(cfg: &TrainConfig, mut on_step: impl FnMut(&StepLog)) -> Result<TrainRun> {
    cfg.validate()?;
    let sched = DiffusionSchedule::new(cfg.schedule)?;
    let (lib, vocab) = prompt_library();
    let model_cfg = cfg.denoiser_config(&vocab);
    let mut params = DenoiserParams::<f32>::init(model_cfg, cfg.seed)?;
    let null_prompt = params.config.null_prompt();
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut data = gen_dataset(&lib, &vocab, &cfg.data.stream(), cfg.seed ^ 0x5EED_DA7A)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0015_E000);
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let clip = data.next().expect("dataset streams forever")?;
            batch.push(make_item(&clip, cfg, &sched, null_prompt, &mut rng)?);
        }
        let (terms, grads) = loss_and_grads(&params, &batch, &cfg.loss)?;
        if !terms.total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step}: diffusion {} motif {} total {}",
                terms.diffusion, terms.motif, terms.total
            )));
        }
        opt.step(&mut params, &grads, cfg.lr)?;
        let row = StepLog {
            step,
            diffusion: terms.diffusion,
            motif: terms.motif,
            total: terms.total,
        };
        on_step(&row);
        log.push(row);
    }
    Ok(TrainRun {
        checkpoint: Checkpoint {
            params,
            step: cfg.steps as u64,
            run_config: serde_json::to_value(cfg)?,
        },
        log,
    })
}

/// Mean total loss over the first and last `window` steps.
pub fn loss_drop(log: &[StepLog], window: usize) -> Option<(f64, f64)> {
    if log.len() < window || window == 0 {
        return None;
    }
    let mean = |rows: &[StepLog]| rows.iter().map(|r| r.total).sum::<f64>() / rows.len() as f64;
    Some((mean(&log[..window]), mean(&log[log.len() - window..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthvid::RenderConfig;

    fn tiny() -> TrainConfig {
        let mut cfg = TrainConfig {
            seed: 3,
            steps: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        cfg.data.render = RenderConfig {
            height: 16,
            width: 16,
            frames: 4,
            slow_px: 0.5,
            fast_px: 1.0,
            ..RenderConfig::default()
        };
        cfg.data.scenarios = vec!["flower".into(), "sun".into()];
        cfg.model.width = 4;
        cfg.model.blocks = 1;
        cfg
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let cfg = TrainConfig { steps: 0, ..tiny() };
        let run = train(&cfg, |_| {}).unwrap();
        let (_, vocab) = prompt_library();
        let init = DenoiserParams::<f32>::init(cfg.denoiser_config(&vocab), cfg.seed).unwrap();
        assert_eq!(run.checkpoint.params, init);
        assert!(run.log.is_empty());
    }

    #[test]
    fn runs_are_reproducible() {
        let a = train(&tiny(), |_| {}).unwrap();
        let b = train(&tiny(), |_| {}).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.log.len(), 3);
        assert!(a.log.iter().all(|r| r.total.is_finite() && r.motif <= r.diffusion + 1e-9));
    }

    #[test]
    fn baseline_logs_zero_motif() {
        let cfg = TrainConfig {
            loss: crate::diffusion::LossSpec::baseline(),
            ..tiny()
        };
        let run = train(&cfg, |_| {}).unwrap();
        assert!(run.log.iter().all(|r| r.motif == 0.0 && r.total == r.diffusion));
    }
}
