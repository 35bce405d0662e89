//! Motion heatmaps: flow magnitude → steep sigmoid → latent-aligned pooling.

use serde::{Deserialize, Serialize};

use super::flow::{estimate_video_flow, FlowField, FlowParams};
use crate::error::{ensure, Result};
use crate::numcore::{Dims4, Real, Tensor4, VideoTensor};

/// Parameters of `σ(x) = 1 / (1 + e^{k(τ − x)})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapParams {
    pub gain: f64,
    pub threshold: f64,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self {
            gain: 100.0,
            threshold: 0.05,
        }
    }
}

/// Per-frame motion intensity in `[0, 1]` at pixel and latent resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionHeatmap {
    /// `L×H×W×1`.
    pub pixel: Tensor4<f32>,
    /// `L×(H/p)×(W/p)×1`.
    pub latent: Tensor4<f32>,
    pub params: HeatmapParams,
    pub pool: usize,
}

impl MotionHeatmap {
    pub fn from_flow(flow: &FlowField, params: HeatmapParams, pool: usize) -> Result<Self> {
        let pixel = heatmap_from_flow(flow, params)?;
        let latent = downsample_heatmap(&pixel, pool)?;
        Ok(Self {
            pixel,
            latent,
            params,
            pool,
        })
    }
}

/// Per-pixel flow magnitude, `(L−1)×H×W×1`, in px/frame.
pub fn flow_intensity(flow: &FlowField) -> Tensor4<f32> {
    let d = flow.flow.dims();
    let data = flow
        .flow
        .data()
        .chunks_exact(2)
        .map(|uv| (uv[0] * uv[0] + uv[1] * uv[1]).sqrt())
        .collect();
    Tensor4::from_vec(d.with_channels(1), data).expect("dims derived from flow")
}

/// `σ(x) = 1 / (1 + e^{k(τ − x)})`.
#[inline]
pub fn normalize_intensity(x: f64, gain: f64, threshold: f64) -> f64 {
    1.0 / (1.0 + (gain * (threshold - x)).exp())
}

/// Divides px/frame magnitudes by the longer frame side, so the threshold
/// reads as a fraction of the frame extent per frame.
pub fn relative_intensity(intensity: f32, height: usize, width: usize) -> f64 {
    intensity as f64 / height.max(width) as f64
}

/// Heatmap `m` (`L×H×W×1`) from the `L−1` flow pairs; the last frame reuses
/// the map of the final pair.
pub fn heatmap_from_flow(flow: &FlowField, params: HeatmapParams) -> Result<Tensor4<f32>> {
    let d = flow.flow.dims();
    ensure!(d.frames >= 1, "heatmap needs at least one flow pair");
    let intensity = flow_intensity(flow);
    let mut data: Vec<f32> = intensity
        .data()
        .iter()
        .map(|&x| {
            let rel = relative_intensity(x, d.height, d.width);
            normalize_intensity(rel, params.gain, params.threshold) as f32
        })
        .collect();
    let last = data[(d.frames - 1) * d.plane()..].to_vec();
    data.extend_from_slice(&last);
    Tensor4::from_vec(Dims4::new(d.frames + 1, d.height, d.width, 1), data)
}

/// Estimates flow on `video` and turns it into a heatmap.
pub fn heatmap_for_video(
    video: &VideoTensor,
    flow_params: &FlowParams,
    params: HeatmapParams,
) -> Result<Tensor4<f32>> {
    ensure!(video.dims().frames >= 2, "heatmap needs at least two frames");
    let flow = estimate_video_flow(video, flow_params)?;
    heatmap_from_flow(&flow, params)
}

/// Area-average pooling over `p×p` blocks.
pub fn downsample_heatmap<T: Real>(m: &Tensor4<T>, p: usize) -> Result<Tensor4<T>> {
    let d = m.dims();
    ensure!(p >= 1, "pool factor must be >= 1");
    ensure!(
        d.height % p == 0 && d.width % p == 0,
        "pool factor {p} does not divide {}x{}",
        d.height,
        d.width
    );
    let out_dims = Dims4::new(d.frames, d.height / p, d.width / p, d.channels);
    let area = (p * p) as f64;
    Tensor4::from_fn(out_dims, |l, y, x, c| {
        let mut s = 0.0f64;
        for dy in 0..p {
            for dx in 0..p {
                s += m.get(l, y * p + dy, x * p + dx, c).to_f64_lossy();
            }
        }
        T::from_f64_lossy(s / area)
    })
}

/// `1` where `m ≥ threshold`, else `0`.
pub fn binarize(m: &Tensor4<f32>, threshold: f32) -> Tensor4<f32> {
    m.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    pub static_fraction: f64,
    pub moving_fraction: f64,
    /// Mean flow magnitude over all pairs and pixels, px/frame.
    pub mean_intensity: f64,
}

pub fn motion_stats_from_flow(flow: &FlowField, params: HeatmapParams, mask_threshold: f32) -> Result<MotionStats> {
    let m = heatmap_from_flow(flow, params)?;
    let mask = binarize(&m, mask_threshold);
    let moving = mask.mean();
    Ok(MotionStats {
        static_fraction: 1.0 - moving,
        moving_fraction: moving,
        mean_intensity: flow_intensity(flow).mean(),
    })
}

pub fn motion_stats(
    video: &VideoTensor,
    flow_params: &FlowParams,
    params: HeatmapParams,
    mask_threshold: f32,
) -> Result<MotionStats> {
    ensure!(video.dims().frames >= 2, "motion stats need at least two frames");
    let flow = estimate_video_flow(video, flow_params)?;
    motion_stats_from_flow(&flow, params, mask_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motionmap::FlowProvenance;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(normalize_intensity(0.05, 100.0, 0.05), 0.5);
        assert!((normalize_intensity(0.0, 100.0, 0.05) - 1.0 / (1.0 + 5f64.exp())).abs() < 1e-15);
        assert!((normalize_intensity(0.0, 100.0, 0.05) - 0.006693).abs() < 1e-6);
        assert!((normalize_intensity(0.15, 100.0, 0.05) - 0.9999546).abs() < 1e-6);
    }

    #[test]
    fn intensity_is_euclidean_magnitude() {
        let mut f = FlowField::zeros(1, 2, 2, FlowProvenance::Oracle).unwrap();
        f.flow.set(0, 0, 0, 0, 3.0);
        f.flow.set(0, 0, 0, 1, 4.0);
        let i = flow_intensity(&f);
        assert_eq!(i.get(0, 0, 0, 0), 5.0);
        assert_eq!(i.get(0, 1, 1, 0), 0.0);
    }

    #[test]
    fn heatmap_copies_last_pair_to_last_frame() {
        let mut f = FlowField::zeros(2, 4, 4, FlowProvenance::Oracle).unwrap();
        f.flow.set(1, 2, 2, 0, 4.0);
        let m = heatmap_from_flow(&f, HeatmapParams::default()).unwrap();
        assert_eq!(m.dims(), Dims4::new(3, 4, 4, 1));
        assert_eq!(m.frame(2), m.frame(1));
        assert!(m.get(2, 2, 2, 0) > 0.99);
        assert!(m.get(0, 2, 2, 0) < 0.01);
    }

    #[test]
    fn pooling_examples() {
        let m = Tensor4::filled(Dims4::new(2, 4, 4, 1), 0.7f32).unwrap();
        let p = downsample_heatmap(&m, 2).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.7));
        let b = Tensor4::from_vec(Dims4::new(1, 2, 2, 1), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(downsample_heatmap(&b, 2).unwrap().data(), &[0.5]);
        assert!(downsample_heatmap(&m, 3).is_err());
    }

    #[test]
    fn binarize_extremes() {
        let m = Tensor4::from_fn(Dims4::new(1, 3, 3, 1), |_, y, x, _| (y * 3 + x) as f32 / 8.0).unwrap();
        assert!(binarize(&m, 0.0).data().iter().all(|&v| v == 1.0));
        assert!(binarize(&m, 1.01).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pooling_preserves_mean_in_double_precision() {
        let m = Tensor4::<f64>::from_fn(Dims4::new(3, 16, 16, 1), |l, y, x, _| {
            (((l * 31 + y * 7 + x * 13) % 17) as f64 / 16.0).powi(2)
        })
        .unwrap();
        let p = downsample_heatmap(&m, 4).unwrap();
        assert!((p.mean() - m.mean()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn sigmoid_is_strictly_increasing(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            prop_assume!(a < b && (b - a) > 1e-9);
            let (sa, sb) = (normalize_intensity(a, 100.0, 0.05), normalize_intensity(b, 100.0, 0.05));
            prop_assert!(sa <= sb);
            prop_assert!((0.0..=1.0).contains(&sa));
            if (a - 0.05).abs() < 0.3 && (b - 0.05).abs() < 0.3 {
                prop_assert!(sa < sb);
            }
        }

        #[test]
        fn pooling_preserves_range_and_frame_mean(
            values in proptest::collection::vec(0.0f32..=1.0, 2 * 8 * 8),
            p in prop_oneof![Just(1usize), Just(2), Just(4)],
        ) {
            let m = Tensor4::from_vec(Dims4::new(2, 8, 8, 1), values).unwrap();
            let pooled = downsample_heatmap(&m, p).unwrap();
            prop_assert!(pooled.data().iter().all(|v| (0.0..=1.0).contains(v)));
            for l in 0..2 {
                let a: f64 = m.frame(l).iter().map(|&v| v as f64).sum::<f64>() / 64.0;
                let b: f64 = pooled.frame(l).iter().map(|&v| v as f64).sum::<f64>()
                    / pooled.frame(l).len() as f64;
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
