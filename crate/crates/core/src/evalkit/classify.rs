use serde::{Deserialize, Serialize};

use crate::motionmap::{flow_intensity, FlowField};
use crate::synthvid::Verb;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    /// Fraction of highest-intensity flow vectors that vote.
    pub top_fraction: f64,
    /// Below this mean-vector length (px/frame) the clip is static.
    pub static_px: f64,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            top_fraction: 0.1,
            static_px: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionCall {
    pub verb: Verb,
    /// Mean flow vector of the voting region, px/frame, y down.
    pub mean: (f64, f64),
}

/// Maps an image-space vector (y down) to one of eight 45° sectors.
pub fn direction_of(dx: f64, dy: f64) -> Verb {
    const SECTORS: [Verb; 8] = [
        Verb::Right,
        Verb::UpRight,
        Verb::Up,
        Verb::UpLeft,
        Verb::Left,
        Verb::DownLeft,
        Verb::Down,
        Verb::DownRight,
    ];
    let angle = (-dy).atan2(dx).rem_euclid(std::f64::consts::TAU);
    let k = (angle / std::f64::consts::FRAC_PI_4).round() as usize % 8;
    SECTORS[k]
}

/// Dominant motion of a clip from the mean flow over its most intense vectors.
pub fn classify_flow(flow: &FlowField, params: &ClassifierParams) -> MotionCall {
    let intensity = flow_intensity(flow);
    let mags = intensity.data();
    let n = mags.len();
    let k = ((n as f64 * params.top_fraction).ceil() as usize).clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    let vecs = flow.flow.data();
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for &i in &order[..k.min(n)] {
        sx += vecs[2 * i] as f64;
        sy += vecs[2 * i + 1] as f64;
    }
    let mean = (sx / k as f64, sy / k as f64);
    let verb = if n == 0 || mean.0.hypot(mean.1) < params.static_px {
        Verb::Static
    } else {
        direction_of(mean.0, mean.1)
    };
    MotionCall { verb, mean }
}
