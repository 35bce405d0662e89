use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{encode, gaussian, make_condition, q_sample, to_model_space, v_target, Generator};
use crate::error::{ensure, Result};
use crate::motionmap::{binarize, downsample_heatmap, heatmap_from_flow};
use crate::numcore::Tensor4;
use crate::synthvid::Clip;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioBucket {
    /// Inclusive timestep range.
    pub t_lo: usize,
    pub t_hi: usize,
    /// `None` when no element fell inside the mask.
    pub ratio: Option<f64>,
    pub inside: u64,
    pub total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRatioCurve {
    pub mask_threshold: f32,
    pub buckets: Vec<RatioBucket>,
}

/// Equal-width inclusive ranges covering `[1, timesteps]`.
pub fn bucket_bounds(timesteps: usize, buckets: usize) -> Result<Vec<(usize, usize)>> {
    ensure!(buckets >= 1 && buckets <= timesteps, "need 1..={timesteps} buckets, got {buckets}");
    Ok((0..buckets)
        .map(|b| (b * timesteps / buckets + 1, (b + 1) * timesteps / buckets))
        .collect())
}

/// Running sums of squared residuals inside a mask and overall, per bucket.
#[derive(Clone, Debug)]
pub struct RatioAccumulator {
    bounds: Vec<(usize, usize)>,
    sums: Vec<[f64; 2]>,
    counts: Vec<[u64; 2]>,
}

impl RatioAccumulator {
    pub fn new(timesteps: usize, buckets: usize) -> Result<Self> {
        let bounds = bucket_bounds(timesteps, buckets)?;
        Ok(Self {
            sums: vec![[0.0; 2]; bounds.len()],
            counts: vec![[0; 2]; bounds.len()],
            bounds,
        })
    }

    pub fn bucket_of(&self, t: usize) -> Option<usize> {
        self.bounds.iter().position(|&(lo, hi)| (lo..=hi).contains(&t))
    }

    /// `mask` has one channel and is broadcast over the residual's channels.
    pub fn add(&mut self, t: usize, residual: &Tensor4<f32>, mask: &Tensor4<f32>) -> Result<()> {
        let (r, m) = (residual.dims(), mask.dims());
        ensure!(
            m.channels == 1 && m.with_channels(r.channels) == r,
            "mask {m} does not match residual {r}"
        );
        let b = self.bucket_of(t).ok_or_else(|| crate::Error::contract(format!("timestep {t} out of range")))?;
        for (px, &inside) in residual.data().chunks_exact(r.channels).zip(mask.data()) {
            for &e in px {
                let sq = (e as f64).powi(2);
                self.sums[b][1] += sq;
                self.counts[b][1] += 1;
                if inside > 0.5 {
                    self.sums[b][0] += sq;
                    self.counts[b][0] += 1;
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self, mask_threshold: f32) -> LossRatioCurve {
        let buckets = self
            .bounds
            .iter()
            .zip(self.sums.iter().zip(&self.counts))
            .map(|(&(t_lo, t_hi), (s, c))| {
                let overall = if c[1] > 0 { s[1] / c[1] as f64 } else { 0.0 };
                let ratio = (c[0] > 0 && overall > 0.0).then(|| (s[0] / c[0] as f64) / overall);
                RatioBucket {
                    t_lo,
                    t_hi,
                    ratio,
                    inside: c[0],
                    total: c[1],
                }
            })
            .collect();
        LossRatioCurve { mask_threshold, buckets }
    }
}

/// High-motion loss ratio of a model on held-out clips. Each clip is noised
/// `draws` times per bucket at uniformly drawn timesteps; masks come from the
/// clips' oracle flow.
pub fn loss_ratio(
    model: &Generator,
    valset: &[Clip],
    mask_threshold: f32,
    buckets: usize,
    draws: usize,
    seed: u64,
) -> Result<LossRatioCurve> {
    ensure!(!valset.is_empty(), "loss ratio needs at least one clip");
    let cfg = &model.config;
    let null = model.params.config.null_prompt();
    let mut acc = RatioAccumulator::new(model.schedule.timesteps(), buckets)?;
    let bounds = bucket_bounds(model.schedule.timesteps(), buckets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for clip in valset {
        let z0 = to_model_space(&encode(&clip.video, cfg.pool)?);
        let heat = downsample_heatmap(&heatmap_from_flow(&clip.flow, cfg.heatmap)?, cfg.pool)?;
        let mask = binarize(&heat, mask_threshold);
        let frames = z0.dims().frames;
        let cond = make_condition(&z0, frames, clip.prompt.index, null, false, model.params.config.conditioning)?;
        for &(lo, hi) in &bounds {
            for _ in 0..draws {
                let t = rng.gen_range(lo..=hi);
                let eps = gaussian(z0.dims(), &mut rng);
                let z_t = q_sample(&model.schedule, &z0, t, &eps)?;
                let target = v_target(&model.schedule, &z0, &eps, t)?;
                let pred = model.predict(&z_t, &cond.latent, t, cond.prompt)?;
                acc.add(t, &pred.axpby(1.0, &target, -1.0)?, &mask)?;
            }
        }
    }
    Ok(acc.finish(mask_threshold))
}

/// Buckets where `a`'s ratio is at most `b`'s; undefined buckets never count.
pub fn buckets_not_worse(a: &LossRatioCurve, b: &LossRatioCurve) -> usize {
    a.buckets
        .iter()
        .zip(&b.buckets)
        .filter(|(x, y)| matches!((x.ratio, y.ratio), (Some(p), Some(q)) if p <= q))
        .count()
}
