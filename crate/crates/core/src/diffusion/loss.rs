//! Denoising losses: plain MSE, the heatmap-weighted motion focal term, and
//! their weighted sum.
//!
//! With residual `r = target − pred` and heatmap weight `w ∈ [0, 1]`
//! broadcast over latent channels:
//!
//! ```text
//! diffusion = mean(r²)
//! motif     = mean((w·r)²)
//! total     = diffusion + λ·motif
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::numcore::{Real, Tensor4};

/// Which map weights the focal term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapMode {
    /// Weight by the motion heatmap `m′`.
    Motif,
    /// Weight by `1 − m′`, focusing on static regions.
    Inverse,
    /// No focal term.
    None,
}

impl std::str::FromStr for HeatmapMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "motif" => Ok(Self::Motif),
            "inverse" => Ok(Self::Inverse),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!("unknown heatmap mode {other:?}"))),
        }
    }
}

/// Where the weight enters the focal term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalWeighting {
    /// `(w·r)²`: the weight multiplies the residual inside the norm.
    #[default]
    Squared,
    /// `w·r²`.
    Linear,
}

/// Residual the focal term is measured on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSpace {
    #[default]
    V,
    /// Noise residual; under v-prediction it equals `√ᾱ_t` times the v residual.
    Epsilon,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub lambda: f64,
    pub mode: HeatmapMode,
    #[serde(default)]
    pub weighting: FocalWeighting,
    #[serde(default)]
    pub residual: ResidualSpace,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mode: HeatmapMode::Motif,
            weighting: FocalWeighting::Squared,
            residual: ResidualSpace::V,
        }
    }
}

impl LossSpec {
    pub fn baseline() -> Self {
        Self {
            lambda: 0.0,
            mode: HeatmapMode::None,
            ..Self::default()
        }
    }

    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.lambda.is_finite() && self.lambda >= 0.0,
            "lambda must be finite and >= 0, got {}",
            self.lambda
        );
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub diffusion: f64,
    pub motif: f64,
    pub total: f64,
}

fn check_pair<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<()> {
    ensure!(
        pred.dims() == target.dims(),
        "prediction {} and target {} differ in shape",
        pred.dims(),
        target.dims()
    );
    Ok(())
}

fn check_heat<T: Real>(pred: &Tensor4<T>, heat: &Tensor4<f32>) -> Result<()> {
    let (p, h) = (pred.dims(), heat.dims());
    ensure!(
        h.channels == 1 && h.frames == p.frames && h.height == p.height && h.width == p.width,
        "heatmap {h} does not align with latent {p}"
    );
    ensure!(
        heat.data().iter().all(|v| (0.0..=1.0).contains(v)),
        "heatmap values must lie in [0, 1]"
    );
    Ok(())
}

fn focal_weight(mode: HeatmapMode, m: f32) -> f64 {
    match mode {
        HeatmapMode::Motif => m as f64,
        HeatmapMode::Inverse => 1.0 - m as f64,
        HeatmapMode::None => 0.0,
    }
}

/// Mean squared residual.
pub fn diffusion_loss<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<f64> {
    check_pair(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let r = (t - p).to_f64_lossy();
            r * r
        })
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// Heatmap-weighted mean squared residual, weight inside the square.
pub fn motif_loss<T: Real>(
    pred: &Tensor4<T>,
    target: &Tensor4<T>,
    heat: &Tensor4<f32>,
    mode: HeatmapMode,
) -> Result<f64> {
    check_pair(pred, target)?;
    check_heat(pred, heat)?;
    if mode == HeatmapMode::None {
        return Ok(0.0);
    }
    let c = pred.dims().channels;
    let mut sum = 0.0;
    for ((pp, tp), &m) in pred
        .data()
        .chunks_exact(c)
        .zip(target.data().chunks_exact(c))
        .zip(heat.data())
    {
        let w = focal_weight(mode, m);
        for (&p, &t) in pp.iter().zip(tp) {
            let r = w * (t - p).to_f64_lossy();
            sum += r * r;
        }
    }
    Ok(sum / pred.data().len() as f64)
}

/// `diffusion + λ·motif` with the motion heatmap.
pub fn total_loss<T: Real>(
    pred: &Tensor4<T>,
    target: &Tensor4<T>,
    heat: &Tensor4<f32>,
    lambda: f64,
) -> Result<f64> {
    ensure!(lambda.is_finite() && lambda >= 0.0, "lambda must be >= 0");
    let d = diffusion_loss(pred, target)?;
    let m = motif_loss(pred, target, heat, HeatmapMode::Motif)?;
    Ok(d + lambda * m)
}

/// Loss terms and ∂total/∂pred for one sample.
///
/// `alpha_bar` is ᾱ_t of the sample; it matters only for
/// [`ResidualSpace::Epsilon`].
pub fn loss_with_grad<T: Real>(
    spec: &LossSpec,
    pred: &Tensor4<T>,
    target: &Tensor4<T>,
    heat: &Tensor4<f32>,
    alpha_bar: f64,
) -> Result<(LossTerms, Tensor4<T>)> {
    spec.validate()?;
    check_pair(pred, target)?;
    check_heat(pred, heat)?;
    let c = pred.dims().channels;
    let n = pred.data().len() as f64;
    let space = match spec.residual {
        ResidualSpace::V => 1.0,
        ResidualSpace::Epsilon => alpha_bar,
    };
    let mut grad = Tensor4::zeros(pred.dims())?;
    let (mut diff, mut focal) = (0.0, 0.0);
    for (((pp, tp), gp), &m) in pred
        .data()
        .chunks_exact(c)
        .zip(target.data().chunks_exact(c))
        .zip(grad.data_mut().chunks_exact_mut(c))
        .zip(heat.data())
    {
        let w = focal_weight(spec.mode, m);
        let phi = match spec.weighting {
            FocalWeighting::Squared => w * w,
            FocalWeighting::Linear => w,
        } * space;
        let coeff = 1.0 + spec.lambda * phi;
        for ((&p, &t), g) in pp.iter().zip(tp).zip(gp.iter_mut()) {
            let r = (t - p).to_f64_lossy();
            diff += r * r;
            focal += phi * r * r;
            *g = T::from_f64_lossy(-2.0 * r * coeff / n);
        }
    }
    let diffusion = diff / n;
    let motif = focal / n;
    Ok((
        LossTerms {
            diffusion,
            motif,
            total: diffusion + spec.lambda * motif,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Dims4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(dims: Dims4, seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_vec(dims, (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn heat(dims: Dims4, v: f32) -> Tensor4<f32> {
        Tensor4::filled(dims.with_channels(1), v).unwrap()
    }

    const D: Dims4 = Dims4::new(3, 4, 5, 6);

    #[test]
    fn diffusion_loss_basics() {
        let a = rand_tensor(D, 1);
        assert_eq!(diffusion_loss(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 1.0);
        assert!((diffusion_loss(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diffusion_loss_matches_brute_force() {
        let (p, t) = (rand_tensor(D, 2), rand_tensor(D, 3));
        let mut s = 0.0;
        for l in 0..D.frames {
            for h in 0..D.height {
                for w in 0..D.width {
                    for c in 0..D.channels {
                        let r = t.get(l, h, w, c) - p.get(l, h, w, c);
                        s += r * r;
                    }
                }
            }
        }
        let expect = s / D.len() as f64;
        assert!((diffusion_loss(&p, &t).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn motif_identities() {
        let (p, t) = (rand_tensor(D, 4), rand_tensor(D, 5));
        let d = diffusion_loss(&p, &t).unwrap();
        assert_eq!(motif_loss(&p, &t, &heat(D, 0.0), HeatmapMode::Motif).unwrap(), 0.0);
        assert_eq!(motif_loss(&p, &t, &heat(D, 1.0), HeatmapMode::Motif).unwrap(), d);
        let half = motif_loss(&p, &t, &heat(D, 0.5), HeatmapMode::Motif).unwrap();
        assert!((half - 0.25 * d).abs() < 1e-12);
        assert_eq!(motif_loss(&p, &t, &heat(D, 0.0), HeatmapMode::Inverse).unwrap(), d);
        assert_eq!(motif_loss(&p, &t, &heat(D, 0.3), HeatmapMode::None).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_identities() {
        let (p, t) = (rand_tensor(D, 6), rand_tensor(D, 7));
        let d = diffusion_loss(&p, &t).unwrap();
        let h = heat(D, 0.37);
        assert_eq!(total_loss(&p, &t, &h, 0.0).unwrap(), d);
        let three = total_loss(&p, &t, &heat(D, 1.0), 2.0).unwrap();
        assert!((three - 3.0 * d).abs() < 1e-12);
        assert!(total_loss(&p, &t, &h, -1.0).is_err());
    }

    #[test]
    fn rejects_out_of_range_heatmap() {
        let (p, t) = (rand_tensor(D, 8), rand_tensor(D, 9));
        assert!(matches!(
            motif_loss(&p, &t, &heat(D, 1.5), HeatmapMode::Motif),
            Err(Error::Contract(_))
        ));
        let wrong = Tensor4::filled(Dims4::new(3, 4, 4, 1), 0.5f32).unwrap();
        assert!(motif_loss(&p, &t, &wrong, HeatmapMode::Motif).is_err());
    }

    #[test]
    fn gradient_scales_with_one_plus_lambda_m_squared() {
        let (p, t) = (rand_tensor(D, 10), rand_tensor(D, 11));
        let spec = LossSpec::with_lambda(1.5);
        let (_, g0) = loss_with_grad(&spec, &p, &t, &heat(D, 0.0), 0.5).unwrap();
        let (_, g1) = loss_with_grad(&spec, &p, &t, &heat(D, 0.6), 0.5).unwrap();
        let factor = 1.0 + 1.5 * 0.6f32 as f64 * 0.6f32 as f64;
        for (a, b) in g0.data().iter().zip(g1.data()) {
            assert!((b - a * factor).abs() < 1e-12 * factor.max(1.0));
        }
    }

    #[test]
    fn loss_with_grad_terms_match_standalone_losses() {
        let (p, t) = (rand_tensor(D, 12), rand_tensor(D, 13));
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let h = Tensor4::from_vec(
            D.with_channels(1),
            (0..D.plane() * D.frames).map(|_| rng.gen::<f32>()).collect(),
        )
        .unwrap();
        let (terms, _) = loss_with_grad(&LossSpec::default(), &p, &t, &h, 0.3).unwrap();
        assert!((terms.diffusion - diffusion_loss(&p, &t).unwrap()).abs() < 1e-12);
        assert!((terms.motif - motif_loss(&p, &t, &h, HeatmapMode::Motif).unwrap()).abs() < 1e-12);
        assert!((terms.total - total_loss(&p, &t, &h, 1.0).unwrap()).abs() < 1e-12);
        let eps = LossSpec {
            residual: ResidualSpace::Epsilon,
            ..LossSpec::default()
        };
        let (e, _) = loss_with_grad(&eps, &p, &t, &h, 0.3).unwrap();
        assert!((e.motif - 0.3 * terms.motif).abs() < 1e-12);
    }
}
