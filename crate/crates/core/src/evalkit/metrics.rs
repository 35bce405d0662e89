use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::motionmap::{estimate_video_flow, flow_intensity, relative_intensity, FlowField, FlowParams};
use crate::numcore::VideoTensor;

/// PSNR reported for a perfect reconstruction, in dB.
pub const PSNR_CAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub mse: f64,
    /// Peak 1.0; capped at [`PSNR_CAP`].
    pub psnr: f64,
}

/// Frame 0 of `generated` against the one-frame `cond` image.
pub fn first_frame_fidelity(generated: &VideoTensor, cond: &VideoTensor) -> Result<Fidelity> {
    let (g, c) = (generated.dims(), cond.dims());
    ensure!(
        g.frames >= 1 && c.frames >= 1 && g.height == c.height && g.width == c.width && g.channels == c.channels,
        "fidelity needs matching frames, got {g} and {c}"
    );
    let a = generated.frame(0);
    let b = cond.frame(0);
    let mse = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum::<f64>() / a.len() as f64;
    let psnr = if mse > 0.0 { (-10.0 * mse.log10()).min(PSNR_CAP) } else { PSNR_CAP };
    Ok(Fidelity { mse, psnr })
}

/// Mean of flow magnitude divided by the longer frame side.
pub fn dynamic_degree_from_flow(flow: &FlowField) -> f64 {
    let d = flow.flow.dims();
    let i = flow_intensity(flow);
    i.data().iter().map(|&x| relative_intensity(x, d.height, d.width)).sum::<f64>() / i.data().len() as f64
}

pub fn dynamic_degree(video: &VideoTensor, params: &FlowParams) -> Result<f64> {
    ensure!(video.dims().frames >= 2, "dynamic degree needs at least two frames");
    Ok(dynamic_degree_from_flow(&estimate_video_flow(video, params)?))
}

/// `frames` copies of the one-frame `cond` image.
pub fn static_baseline(cond: &VideoTensor, frames: usize) -> Result<VideoTensor> {
    ensure!(frames >= 1, "static baseline needs at least one frame");
    ensure!(cond.dims().frames == 1, "condition must be a single frame");
    cond.repeat_frames(frames)
}
