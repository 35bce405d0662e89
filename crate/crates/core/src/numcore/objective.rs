//! Batch loss and exact gradients of the training objective.

use super::denoiser::{backward, forward_cached, DenoiserParams, GradientSet};
use super::{Real, Tensor4};
use crate::diffusion::loss::{loss_with_grad, LossSpec, LossTerms};
use crate::error::{ensure, Result};

/// One training example, already noised.
#[derive(Clone, Debug)]
pub struct TrainingItem<T> {
    pub z_t: Tensor4<T>,
    pub target_v: Tensor4<T>,
    /// Latent-aligned heatmap `L×H′×W′×1`.
    pub heat: Tensor4<f32>,
    pub cond: Tensor4<T>,
    pub t_index: usize,
    pub prompt: usize,
    /// ᾱ at this item's timestep.
    pub alpha_bar: f64,
}

/// Mean loss over the batch and its exact gradient.
pub fn loss_and_grads<T: Real>(
    params: &DenoiserParams<T>,
    batch: &[TrainingItem<T>],
    spec: &LossSpec,
) -> Result<(LossTerms, GradientSet<T>)> {
    ensure!(!batch.is_empty(), "loss_and_grads needs a non-empty batch");
    let mut grads = GradientSet::zeros(&params.config);
    let mut terms = LossTerms::default();
    let scale = T::from_f64_lossy(1.0 / batch.len() as f64);
    for item in batch {
        let (pred, cache) = forward_cached(params, &item.z_t, &item.cond, item.t_index, item.prompt)?;
        let (t, mut d_pred) = loss_with_grad(spec, &pred, &item.target_v, &item.heat, item.alpha_bar)?;
        d_pred.data_mut().iter_mut().for_each(|g| *g = *g * scale);
        backward(params, &cache, &d_pred, &mut grads)?;
        terms.diffusion += t.diffusion;
        terms.motif += t.motif;
        terms.total += t.total;
    }
    let n = batch.len() as f64;
    terms.diffusion /= n;
    terms.motif /= n;
    terms.total /= n;
    Ok((terms, grads))
}

/// Mean loss only (no backward pass).
pub fn batch_loss<T: Real>(
    params: &DenoiserParams<T>,
    batch: &[TrainingItem<T>],
    spec: &LossSpec,
) -> Result<LossTerms> {
    ensure!(!batch.is_empty(), "batch_loss needs a non-empty batch");
    let mut terms = LossTerms::default();
    for item in batch {
        let pred = super::denoiser_forward(params, &item.z_t, &item.cond, item.t_index, item.prompt)?;
        let (t, _) = loss_with_grad(spec, &pred, &item.target_v, &item.heat, item.alpha_bar)?;
        terms.diffusion += t.diffusion;
        terms.motif += t.motif;
        terms.total += t.total;
    }
    let n = batch.len() as f64;
    Ok(LossTerms {
        diffusion: terms.diffusion / n,
        motif: terms.motif / n,
        total: terms.total / n,
    })
}

/// Compares analytic gradients of the batch loss against central finite
/// differences at the flat parameter indices in `sample`.
pub fn denoiser_gradient_error(
    params: &DenoiserParams<f64>,
    batch: &[TrainingItem<f64>],
    spec: &LossSpec,
    h: f64,
    sample: &[usize],
) -> Result<f64> {
    let (_, grads) = loss_and_grads(params, batch, spec)?;
    let analytic = grads.weights.flatten();
    let theta = params.weights.flatten();
    let mut probe = params.clone();
    let mut failure = None;
    let err = super::gradcheck::finite_diff_check(&theta, &analytic, h, sample, |flat| {
        unflatten_into(&mut probe, flat);
        match batch_loss(&probe, batch, spec) {
            Ok(t) => t.total,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(err),
    }
}

fn unflatten_into<T: Real>(params: &mut DenoiserParams<T>, flat: &[T]) {
    let mut at = 0;
    for p in params.weights.params_mut() {
        let n = p.data.len();
        p.data.copy_from_slice(&flat[at..at + n]);
        at += n;
    }
}
