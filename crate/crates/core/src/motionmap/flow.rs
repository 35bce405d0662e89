//! Dense optical flow.
//!
//! Variational brightness-constancy solver with a quadratic smoothness prior,
//! iterated Jacobi-style. A two-level pyramid with warping handles
//! displacements beyond a couple of pixels.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::numcore::{Dims4, Tensor4, VideoTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowProvenance {
    Estimated,
    Oracle,
}

/// Per-pair displacement `(L−1)×H×W×2` in px/frame; channel 0 is `u` (x,
/// rightwards), channel 1 is `v` (y, downwards).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub flow: Tensor4<f32>,
    pub provenance: FlowProvenance,
}

impl FlowField {
    pub fn zeros(pairs: usize, height: usize, width: usize, provenance: FlowProvenance) -> Result<Self> {
        Ok(Self {
            flow: Tensor4::zeros(Dims4::new(pairs, height, width, 2))?,
            provenance,
        })
    }

    pub fn pairs(&self) -> usize {
        self.flow.dims().frames
    }

    pub fn at(&self, pair: usize, y: usize, x: usize) -> (f32, f32) {
        (self.flow.get(pair, y, x, 0), self.flow.get(pair, y, x, 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    /// Smoothness weight on the `[0, 1]` intensity scale.
    pub alpha: f32,
    /// Jacobi sweeps per warp.
    pub iters: usize,
    pub levels: usize,
    pub warps: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            iters: 100,
            levels: 2,
            warps: 2,
        }
    }
}

/// Single-channel image, row-major.
#[derive(Clone, Debug)]
struct Gray {
    h: usize,
    w: usize,
    px: Vec<f32>,
}

impl Gray {
    #[inline]
    fn at(&self, y: isize, x: isize) -> f32 {
        let y = y.clamp(0, self.h as isize - 1) as usize;
        let x = x.clamp(0, self.w as isize - 1) as usize;
        self.px[y * self.w + x]
    }

    fn bilinear(&self, y: f32, x: f32) -> f32 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as isize, x0 as isize);
        let a = self.at(y0, x0) * (1.0 - fx) + self.at(y0, x0 + 1) * fx;
        let b = self.at(y0 + 1, x0) * (1.0 - fx) + self.at(y0 + 1, x0 + 1) * fx;
        a * (1.0 - fy) + b * fy
    }

    /// Separable [1 2 1]/4 blur.
    fn blur(&self) -> Gray {
        let mut tmp = vec![0.0; self.px.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let (y, x) = (y as isize, x as isize);
                tmp[y as usize * self.w + x as usize] =
                    0.25 * self.at(y, x - 1) + 0.5 * self.at(y, x) + 0.25 * self.at(y, x + 1);
            }
        }
        let t = Gray {
            h: self.h,
            w: self.w,
            px: tmp,
        };
        let mut out = vec![0.0; self.px.len()];
        for y in 0..self.h {
            for x in 0..self.w {
                let (yi, xi) = (y as isize, x as isize);
                out[y * self.w + x] =
                    0.25 * t.at(yi - 1, xi) + 0.5 * t.at(yi, xi) + 0.25 * t.at(yi + 1, xi);
            }
        }
        Gray {
            h: self.h,
            w: self.w,
            px: out,
        }
    }

    fn half(&self) -> Gray {
        let (h, w) = (self.h.div_ceil(2), self.w.div_ceil(2));
        let mut px = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = (2 * y as isize, 2 * x as isize);
                px[y * w + x] = 0.25
                    * (self.at(sy, sx) + self.at(sy, sx + 1) + self.at(sy + 1, sx) + self.at(sy + 1, sx + 1));
            }
        }
        Gray { h, w, px }
    }
}

fn luminance(frame: &[f32], h: usize, w: usize, channels: usize) -> Gray {
    let px = frame
        .chunks_exact(channels)
        .map(|c| match channels {
            1 => c[0],
            3 => 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2],
            _ => c.iter().sum::<f32>() / channels as f32,
        })
        .collect();
    Gray { h, w, px }
}

/// Flow-field iterations at one pyramid level, refining `(u, v)` in place.
fn refine(a: &Gray, b: &Gray, u: &mut [f32], v: &mut [f32], params: &FlowParams) {
    let (h, w) = (a.h, a.w);
    let alpha2 = params.alpha * params.alpha;
    for _ in 0..params.warps {
        // Linearize brightness constancy around the current flow.
        let mut warped = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                warped[i] = b.bilinear(y as f32 + v[i], x as f32 + u[i]);
            }
        }
        let bw = Gray { h, w, px: warped };
        let mut ix = vec![0.0; h * w];
        let mut iy = vec![0.0; h * w];
        let mut it0 = vec![0.0; h * w];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let i = y as usize * w + x as usize;
                let gx = 0.25 * (a.at(y, x + 1) - a.at(y, x - 1) + bw.at(y, x + 1) - bw.at(y, x - 1));
                let gy = 0.25 * (a.at(y + 1, x) - a.at(y - 1, x) + bw.at(y + 1, x) - bw.at(y - 1, x));
                ix[i] = gx;
                iy[i] = gy;
                // Temporal difference expressed for the total flow.
                it0[i] = bw.px[i] - a.px[i] - gx * u[i] - gy * v[i];
            }
        }
        let mut un = u.to_vec();
        let mut vn = v.to_vec();
        for _ in 0..params.iters {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let (ub, vb) = neighbor_mean(u, v, h, w, y, x);
                    let (gx, gy) = (ix[i], iy[i]);
                    let r = (gx * ub + gy * vb + it0[i]) / (alpha2 + gx * gx + gy * gy);
                    un[i] = ub - gx * r;
                    vn[i] = vb - gy * r;
                }
            }
            u.copy_from_slice(&un);
            v.copy_from_slice(&vn);
        }
    }
}

/// Weighted 8-neighborhood mean (1/6 edge, 1/12 corner) with replicated borders.
#[inline]
fn neighbor_mean(u: &[f32], v: &[f32], h: usize, w: usize, y: usize, x: usize) -> (f32, f32) {
    let idx = |dy: isize, dx: isize| {
        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
        yy * w + xx
    };
    let edge = [idx(-1, 0), idx(1, 0), idx(0, -1), idx(0, 1)];
    let corner = [idx(-1, -1), idx(-1, 1), idx(1, -1), idx(1, 1)];
    let mut su = 0.0;
    let mut sv = 0.0;
    for &i in &edge {
        su += u[i] / 6.0;
        sv += v[i] / 6.0;
    }
    for &i in &corner {
        su += u[i] / 12.0;
        sv += v[i] / 12.0;
    }
    (su, sv)
}

fn estimate_gray(a: &Gray, b: &Gray, params: &FlowParams) -> (Vec<f32>, Vec<f32>) {
    let (h, w) = (a.h, a.w);
    if params.iters == 0 {
        return (vec![0.0; h * w], vec![0.0; h * w]);
    }
    let mut pyr = vec![(a.blur(), b.blur())];
    for _ in 1..params.levels.max(1) {
        let (pa, pb) = pyr.last().unwrap();
        if pa.h < 8 || pa.w < 8 {
            break;
        }
        let next = (pa.half(), pb.half());
        pyr.push(next);
    }
    let (ca, _) = pyr.last().unwrap();
    let mut u = vec![0.0; ca.h * ca.w];
    let mut v = vec![0.0; ca.h * ca.w];
    let mut cur = (ca.h, ca.w);
    for (la, lb) in pyr.iter().rev() {
        if (la.h, la.w) != cur {
            let (nu, nv) = upsample_flow(&u, &v, cur, (la.h, la.w));
            u = nu;
            v = nv;
            cur = (la.h, la.w);
        }
        refine(la, lb, &mut u, &mut v, params);
    }
    (u, v)
}

fn upsample_flow(u: &[f32], v: &[f32], from: (usize, usize), to: (usize, usize)) -> (Vec<f32>, Vec<f32>) {
    let gu = Gray { h: from.0, w: from.1, px: u.to_vec() };
    let gv = Gray { h: from.0, w: from.1, px: v.to_vec() };
    let sy = from.0 as f32 / to.0 as f32;
    let sx = from.1 as f32 / to.1 as f32;
    let mut nu = vec![0.0; to.0 * to.1];
    let mut nv = vec![0.0; to.0 * to.1];
    for y in 0..to.0 {
        for x in 0..to.1 {
            let fy = (y as f32 + 0.5) * sy - 0.5;
            let fx = (x as f32 + 0.5) * sx - 0.5;
            nu[y * to.1 + x] = gu.bilinear(fy, fx) / sx;
            nv[y * to.1 + x] = gv.bilinear(fy, fx) / sy;
        }
    }
    (nu, nv)
}

/// Flow from `frame_a` to `frame_b` (one-frame tensors of equal dims).
pub fn estimate_flow(
    frame_a: &Tensor4<f32>,
    frame_b: &Tensor4<f32>,
    params: &FlowParams,
) -> Result<Tensor4<f32>> {
    let d = frame_a.dims();
    ensure!(d == frame_b.dims(), "frames differ in shape: {d} vs {}", frame_b.dims());
    ensure!(d.frames == 1, "estimate_flow takes single frames");
    ensure!(params.alpha > 0.0, "smoothness weight must be positive");
    let a = luminance(frame_a.data(), d.height, d.width, d.channels);
    let b = luminance(frame_b.data(), d.height, d.width, d.channels);
    let (u, v) = estimate_gray(&a, &b, params);
    let mut data = Vec::with_capacity(u.len() * 2);
    for (x, y) in u.into_iter().zip(v) {
        data.push(x);
        data.push(y);
    }
    Tensor4::from_vec(Dims4::new(1, d.height, d.width, 2), data)
}

/// Estimated flow for every consecutive frame pair of `video`.
pub fn estimate_video_flow(video: &VideoTensor, params: &FlowParams) -> Result<FlowField> {
    let d = video.dims();
    ensure!(d.frames >= 2, "flow needs at least two frames");
    let mut out = Vec::with_capacity((d.frames - 1) * d.plane() * 2);
    for l in 0..d.frames - 1 {
        let f = estimate_flow(&video.frame_tensor(l), &video.frame_tensor(l + 1), params)?;
        out.extend_from_slice(f.data());
    }
    Ok(FlowField {
        flow: Tensor4::from_vec(Dims4::new(d.frames - 1, d.height, d.width, 2), out)?,
        provenance: FlowProvenance::Estimated,
    })
}
