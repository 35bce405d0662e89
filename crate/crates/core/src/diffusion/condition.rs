use rand::Rng;

use crate::error::{ensure, Result};
use crate::numcore::denoiser::pooled_condition;
use crate::numcore::{ConditioningMode, Real, Tensor4};

/// Network-ready conditioning for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition<T> {
    /// First-frame latent replicated over all frames.
    pub latent: Tensor4<T>,
    /// Pooled per-channel feature, present when the mode injects it.
    pub feature: Option<Vec<T>>,
    /// Prompt row actually used; the null row when dropped.
    pub prompt: usize,
    pub dropped: bool,
}

/// Builds the condition from the first-frame latent (frame 0 of `x0_latent`).
pub fn make_condition<T: Real>(
    x0_latent: &Tensor4<T>,
    frames: usize,
    prompt: usize,
    null_prompt: usize,
    drop: bool,
    mode: ConditioningMode,
) -> Result<Condition<T>> {
    ensure!(prompt <= null_prompt, "prompt {prompt} beyond null row {null_prompt}");
    let first = x0_latent.frame_tensor(0);
    let latent = first.repeat_frames(frames)?;
    let feature = mode.pools().then(|| pooled_condition(&first));
    Ok(Condition {
        latent,
        feature,
        prompt: if drop { null_prompt } else { prompt },
        dropped: drop,
    })
}

/// Bernoulli draw for classifier-free-guidance prompt dropout.
pub fn draw_drop(rng: &mut impl Rng, p: f64) -> bool {
    rng.gen_bool(p.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Dims4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn replicated_and_pooled() {
        let z = Tensor4::from_fn(Dims4::new(3, 4, 4, 2), |l, y, x, c| (l * 100 + y * 4 + x + c) as f64).unwrap();
        let c = make_condition(&z, 5, 2, 9, false, ConditioningMode::Both).unwrap();
        assert_eq!(c.latent.dims(), Dims4::new(5, 4, 4, 2));
        for l in 0..5 {
            assert_eq!(c.latent.frame(l), z.frame(0));
        }
        assert_eq!(c.prompt, 2);
        assert!(c.feature.is_some());
        let x = make_condition(&z, 5, 2, 9, true, ConditioningMode::XCat).unwrap();
        assert_eq!((x.prompt, x.feature), (9, None));
    }

    #[test]
    fn constant_image_pools_to_constant() {
        let z = Tensor4::from_fn(Dims4::new(1, 4, 4, 3), |_, _, _, c| [0.25, -0.5, 0.75][c]).unwrap();
        let c = make_condition(&z, 2, 0, 1, false, ConditioningMode::GlobalFeat).unwrap();
        assert_eq!(c.feature.unwrap(), vec![0.25, -0.5, 0.75]);
    }

    #[test]
    fn dropout_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let drops = (0..n).filter(|_| draw_drop(&mut rng, 0.1)).count();
        let rate = drops as f64 / n as f64;
        assert!((0.095..=0.105).contains(&rate), "{rate}");
    }
}
