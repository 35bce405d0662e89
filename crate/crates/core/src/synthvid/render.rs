//! Sprite-on-texture clip rendering with exact ground-truth flow.
//!
//! Sprite shading is bilinear in sprite-local coordinates, so warping a
//! frame by the oracle flow reproduces the next frame exactly away from
//! sprite edges, including for fractional displacements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::{PromptSpec, Speed, Verb};
use super::scenario::{BackgroundStyle, Edge, Scenario, Shape, SpriteSpec};
use crate::error::{ensure, Error, Result};
use crate::motionmap::{FlowField, FlowProvenance};
use crate::numcore::{Dims4, Tensor4, VideoTensor};

/// Frame geometry and motion magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Translation speed in px per rendered frame.
    pub slow_px: f32,
    pub fast_px: f32,
    /// Source-frame stride; per-frame displacement is `speed × stride`.
    pub stride: usize,
    /// Per-frame scale factor for grow (inverse for shrink).
    pub slow_scale: f32,
    pub fast_scale: f32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            height: 32,
            width: 32,
            slow_px: 1.5,
            fast_px: 2.5,
            stride: 1,
            slow_scale: 1.04,
            fast_scale: 1.08,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.frames >= 2, "clips need at least two frames");
        ensure!(self.height >= 8 && self.width >= 8, "frames must be at least 8x8");
        ensure!((1..=3).contains(&self.stride), "frame stride must be 1, 2 or 3");
        ensure!(
            self.slow_px > 0.0 && self.fast_px > 0.0,
            "speeds must be positive"
        );
        ensure!(
            self.slow_scale > 1.0 && self.fast_scale > 1.0,
            "scale factors must exceed 1"
        );
        Ok(())
    }

    pub fn dims(&self) -> Dims4 {
        Dims4::new(self.frames, self.height, self.width, 3)
    }

    pub fn px_per_frame(&self, speed: Speed) -> f32 {
        let s = match speed {
            Speed::Slow => self.slow_px,
            Speed::Fast => self.fast_px,
        };
        s * self.stride as f32
    }

    fn scale_per_frame(&self, speed: Speed) -> f32 {
        let s = match speed {
            Speed::Slow => self.slow_scale,
            Speed::Fast => self.fast_scale,
        };
        s.powi(self.stride as i32)
    }
}

/// Start-frame arrangement: background style, noise seed and sprite centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub style: usize,
    pub background_seed: u64,
    /// Center per sprite, in pixels, for sprites present at frame 0.
    pub centers: Vec<(f32, f32)>,
}

/// One generated clip.
#[derive(Clone, Debug)]
pub struct Clip {
    pub scenario: String,
    pub prompt: PromptSpec,
    pub seed: u64,
    pub video: VideoTensor,
    pub flow: FlowField,
    /// `L×H×W×1` binary map of pixels moving from frame `l` to `l+1`; the last
    /// frame repeats the previous one.
    pub mask: Tensor4<f32>,
    /// `L×H×W×1` coverage of the prompt's target sprite.
    pub coverage: Tensor4<f32>,
}

/// Where a sprite sits at frame `l`.
#[derive(Clone, Copy, Debug)]
struct Pose {
    cx: f32,
    cy: f32,
    half: f32,
}

fn sprite_half(cfg: &RenderConfig, s: &SpriteSpec) -> f32 {
    (s.size_frac * cfg.height.min(cfg.width) as f32 / 2.0).max(1.5)
}

const MARGIN: f32 = 1.0;

/// Feasible start-center interval for `sprite` so that every prompt of the
/// scenario targeting it keeps it inside the frame.
fn feasible_box(cfg: &RenderConfig, scenario: &Scenario, idx: usize) -> Option<[(f32, f32); 2]> {
    let sprite = &scenario.sprites[idx];
    let half = sprite_half(cfg, sprite);
    let steps = (cfg.frames - 1) as f32;
    let mut lo = [MARGIN + half, MARGIN + half];
    let mut hi = [cfg.width as f32 - MARGIN - half, cfg.height as f32 - MARGIN - half];
    let (mut pos, mut neg) = ([0.0f32; 2], [0.0f32; 2]);
    let mut grown = half;
    for p in scenario.prompts.iter().filter(|p| p.selector == sprite.color) {
        match p.verb {
            v if v.is_translation() => {
                let (dx, dy) = v.direction().unwrap();
                let dist = cfg.px_per_frame(p.speed) * steps;
                for (axis, d) in [dx, dy].into_iter().enumerate() {
                    let shift = d * dist;
                    pos[axis] = pos[axis].max(shift);
                    neg[axis] = neg[axis].max(-shift);
                }
            }
            Verb::Grow => {
                grown = grown.max(half * cfg.scale_per_frame(p.speed).powf(steps));
            }
            _ => {}
        }
    }
    let extent = [cfg.width as f32, cfg.height as f32];
    for a in 0..2 {
        lo[a] = (lo[a] + neg[a]).max(MARGIN + grown);
        hi[a] = (hi[a] - pos[a]).min(extent[a] - MARGIN - grown);
    }
    (lo[0] <= hi[0] && lo[1] <= hi[1]).then_some([(lo[0], hi[0]), (lo[1], hi[1])])
}

/// Draws a start layout valid for every prompt of the scenario.
pub fn sample_layout(cfg: &RenderConfig, scenario: &Scenario, style: usize, rng: &mut impl Rng) -> Result<Layout> {
    cfg.validate()?;
    ensure!(
        style < scenario.backgrounds.len(),
        "style {style} out of range for scenario {}",
        scenario.id
    );
    let mut boxes = Vec::with_capacity(scenario.sprites.len());
    for (i, s) in scenario.sprites.iter().enumerate() {
        if s.novel.is_some() {
            boxes.push(None);
            continue;
        }
        let b = feasible_box(cfg, scenario, i).ok_or_else(|| {
            Error::Contract(format!(
                "scenario {} cannot fit sprite {} for all its prompts at {}x{}x{}",
                scenario.id, s.color, cfg.frames, cfg.height, cfg.width
            ))
        })?;
        boxes.push(Some(b));
    }
    let jitter = 0.12 * cfg.width.min(cfg.height) as f32;
    let pick = |lo: f32, hi: f32, want: f32, rng: &mut dyn rand::RngCore| {
        let a = (want - jitter).max(lo);
        let b = (want + jitter).min(hi);
        if a < b {
            rng.gen_range(a..=b)
        } else {
            want.clamp(lo, hi)
        }
    };
    for _ in 0..64 {
        let mut centers = Vec::with_capacity(scenario.sprites.len());
        for (s, b) in scenario.sprites.iter().zip(&boxes) {
            match b {
                None => centers.push((f32::NAN, f32::NAN)),
                Some([(x0, x1), (y0, y1)]) => {
                    let cx = pick(*x0, *x1, s.anchor.0 * cfg.width as f32, rng);
                    let cy = pick(*y0, *y1, s.anchor.1 * cfg.height as f32, rng);
                    centers.push((cx, cy));
                }
            }
        }
        // Sprites present at frame 0 must not overlap there.
        let disjoint = (0..centers.len()).all(|i| {
            (i + 1..centers.len()).all(|j| {
                let (a, b) = (centers[i], centers[j]);
                if a.0.is_nan() || b.0.is_nan() {
                    return true;
                }
                let reach = sprite_half(cfg, &scenario.sprites[i]) + sprite_half(cfg, &scenario.sprites[j]) + 1.0;
                (a.0 - b.0).abs() > reach || (a.1 - b.1).abs() > reach
            })
        });
        if disjoint {
            return Ok(Layout {
                style,
                background_seed: rng.gen(),
                centers,
            });
        }
    }
    Err(Error::Contract(format!(
        "no overlap-free layout found for scenario {}",
        scenario.id
    )))
}

fn lattice(seed: u64, gx: i64, gy: i64) -> f32 {
    // SplitMix-style hash of the lattice point.
    let mut z = seed
        ^ (gx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (gy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 40) as f32 / (1u64 << 24) as f32
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Seeded value-noise background, `H×W×3`.
pub fn render_background(cfg: &RenderConfig, style: &BackgroundStyle, seed: u64) -> Vec<f32> {
    let cell = (style.cell_frac * cfg.height.max(cfg.width) as f32).max(2.0);
    let mut out = Vec::with_capacity(cfg.height * cfg.width * 3);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let fx = (x as f32 + 0.5) / cell;
            let fy = (y as f32 + 0.5) / cell;
            let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
            let (tx, ty) = (smooth(fx - ix as f32), smooth(fy - iy as f32));
            let a = lattice(seed, ix, iy) * (1.0 - tx) + lattice(seed, ix + 1, iy) * tx;
            let b = lattice(seed, ix, iy + 1) * (1.0 - tx) + lattice(seed, ix + 1, iy + 1) * tx;
            let n = a * (1.0 - ty) + b * ty;
            for c in 0..3 {
                out.push(style.low[c] + (style.high[c] - style.low[c]) * n);
            }
        }
    }
    out
}

fn inside(shape: Shape, u: f32, v: f32, half: f32) -> bool {
    match shape {
        Shape::Square => u.abs() < half && v.abs() < half,
        Shape::Disc => u * u + v * v < half * half,
        Shape::Diamond => u.abs() + v.abs() < half,
    }
}

/// Shading bilinear in normalized local coordinates.
fn shade(rgb: [f32; 3], u: f32, v: f32, half: f32) -> [f32; 3] {
    let (a, b) = (u / half, v / half);
    let s = 0.08 * a - 0.05 * b + 0.02 * a * b;
    [rgb[0] + s, rgb[1] + s, rgb[2] + s]
}

const SUPERSAMPLE: usize = 4;

/// Composites `sprite` at `pose` onto `frame` (H×W×3); returns its coverage map.
fn draw_sprite(cfg: &RenderConfig, frame: &mut [f32], sprite: &SpriteSpec, pose: Pose) -> Vec<f32> {
    let mut cov = vec![0.0f32; cfg.height * cfg.width];
    let reach = pose.half + 1.0;
    let y0 = ((pose.cy - reach).floor().max(0.0)) as usize;
    let y1 = ((pose.cy + reach).ceil().min(cfg.height as f32)).max(0.0) as usize;
    let x0 = ((pose.cx - reach).floor().max(0.0)) as usize;
    let x1 = ((pose.cx + reach).ceil().min(cfg.width as f32)).max(0.0) as usize;
    let n = SUPERSAMPLE as f32;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f32 + (sx as f32 + 0.5) / n;
                    let py = y as f32 + (sy as f32 + 0.5) / n;
                    if inside(sprite.shape, px - pose.cx, py - pose.cy, pose.half) {
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                continue;
            }
            let alpha = hits as f32 / (n * n);
            let u = x as f32 + 0.5 - pose.cx;
            let v = y as f32 + 0.5 - pose.cy;
            let col = shade(sprite.rgb, u, v, pose.half);
            let i = (y * cfg.width + x) * 3;
            for c in 0..3 {
                frame[i + c] = (1.0 - alpha) * frame[i + c] + alpha * col[c];
            }
            cov[y * cfg.width + x] = alpha;
        }
    }
    cov
}

/// Pose of the target sprite at every frame.
fn trajectory(cfg: &RenderConfig, sprite: &SpriteSpec, start: (f32, f32), verb: Verb, speed: Speed) -> Result<Vec<Pose>> {
    let half = sprite_half(cfg, sprite);
    let px = cfg.px_per_frame(speed);
    let scale = cfg.scale_per_frame(speed);
    let mut poses = Vec::with_capacity(cfg.frames);
    for l in 0..cfg.frames {
        let t = l as f32;
        let pose = match verb {
            Verb::Static => Pose { cx: start.0, cy: start.1, half },
            Verb::Grow => Pose { cx: start.0, cy: start.1, half: half * scale.powf(t) },
            Verb::Shrink => Pose { cx: start.0, cy: start.1, half: half / scale.powf(t) },
            Verb::Enter => {
                let edge = sprite.novel.ok_or_else(|| {
                    Error::Contract(format!("sprite {} cannot enter; it starts in frame", sprite.color))
                })?;
                ensure!(cfg.frames >= 3, "entering sprites need at least 3 frames");
                // Fully outside through frame 1, first visible at frame 2.
                let travel = (t - 1.0) * px;
                let (cx, cy) = match edge {
                    Edge::Left => (-half + travel, sprite.anchor.1 * cfg.height as f32),
                    Edge::Right => (cfg.width as f32 + half - travel, sprite.anchor.1 * cfg.height as f32),
                    Edge::Top => (sprite.anchor.0 * cfg.width as f32, -half + travel),
                    Edge::Bottom => (sprite.anchor.0 * cfg.width as f32, cfg.height as f32 + half - travel),
                };
                Pose { cx, cy, half }
            }
            v => {
                let (dx, dy) = v.direction().expect("translation verb");
                Pose {
                    cx: start.0 + dx * px * t,
                    cy: start.1 + dy * px * t,
                    half,
                }
            }
        };
        poses.push(pose);
    }
    Ok(poses)
}

fn check_applicable(scenario: &Scenario, prompt: &PromptSpec) -> Result<usize> {
    ensure!(
        prompt.scenario == scenario.id,
        "prompt belongs to scenario {} not {}",
        prompt.scenario,
        scenario.id
    );
    let listed = scenario
        .prompts
        .iter()
        .any(|p| p.selector == prompt.selector && p.verb == prompt.verb && (p.verb == Verb::Static || p.speed == prompt.speed));
    ensure!(
        listed,
        "prompt {:?} is not applicable to scenario {}",
        prompt.text,
        scenario.id
    );
    let (idx, _) = scenario
        .sprite(&prompt.selector)
        .ok_or_else(|| Error::Contract(format!("no sprite {}", prompt.selector)))?;
    Ok(idx)
}

/// Renders `prompt` in `scenario` from a fixed start layout.
pub fn render_clip(cfg: &RenderConfig, scenario: &Scenario, prompt: &PromptSpec, layout: &Layout, seed: u64) -> Result<Clip> {
    cfg.validate()?;
    let target = check_applicable(scenario, prompt)?;
    ensure!(
        layout.centers.len() == scenario.sprites.len() && layout.style < scenario.backgrounds.len(),
        "layout does not match scenario {}",
        scenario.id
    );
    let sprite = &scenario.sprites[target];
    let start = layout.centers[target];
    let poses = trajectory(cfg, sprite, start, prompt.verb, prompt.speed)?;
    if prompt.verb.is_translation() || prompt.verb == Verb::Grow {
        let last = poses.last().unwrap();
        let fits = last.cx - last.half >= 0.0
            && last.cy - last.half >= 0.0
            && last.cx + last.half <= cfg.width as f32
            && last.cy + last.half <= cfg.height as f32;
        ensure!(
            fits,
            "prompt {:?} leaves the frame from this start pose",
            prompt.text
        );
    }

    let bg = render_background(cfg, &scenario.backgrounds[layout.style], layout.background_seed);
    let (h, w) = (cfg.height, cfg.width);
    let mut video = Vec::with_capacity(cfg.frames * h * w * 3);
    let mut coverage = Vec::with_capacity(cfg.frames * h * w);
    for pose in &poses {
        let mut frame = bg.clone();
        for (i, s) in scenario.sprites.iter().enumerate() {
            if i == target || s.novel.is_some() {
                continue;
            }
            let (cx, cy) = layout.centers[i];
            draw_sprite(cfg, &mut frame, s, Pose { cx, cy, half: sprite_half(cfg, s) });
        }
        // Moving target drawn last so it is never occluded.
        coverage.extend(draw_sprite(cfg, &mut frame, sprite, *pose));
        video.extend(frame);
    }

    let dims = cfg.dims();
    let video = Tensor4::from_vec(dims, video)?;
    let coverage = Tensor4::from_vec(dims.with_channels(1), coverage)?;
    let mut flow = FlowField::zeros(cfg.frames - 1, h, w, FlowProvenance::Oracle)?;
    let mut mask = Tensor4::zeros(dims.with_channels(1))?;
    if prompt.verb != Verb::Static {
        for l in 0..cfg.frames - 1 {
            let (a, b) = (poses[l], poses[l + 1]);
            let k = b.half / a.half;
            let step = match (prompt.verb, sprite.novel) {
                (Verb::Enter, Some(edge)) => {
                    let (dx, dy) = edge.inward();
                    (dx * cfg.px_per_frame(prompt.speed), dy * cfg.px_per_frame(prompt.speed))
                }
                (v, _) => v
                    .direction()
                    .map(|(dx, dy)| (dx * cfg.px_per_frame(prompt.speed), dy * cfg.px_per_frame(prompt.speed)))
                    .unwrap_or((0.0, 0.0)),
            };
            for y in 0..h {
                for x in 0..w {
                    // Pixels whose center lies on the sprite move with it.
                    if coverage.get(l, y, x, 0) < 0.5 {
                        continue;
                    }
                    let (fx, fy) = match prompt.verb {
                        Verb::Grow | Verb::Shrink => {
                            let (u, v) = (x as f32 + 0.5 - a.cx, y as f32 + 0.5 - a.cy);
                            (u * (k - 1.0), v * (k - 1.0))
                        }
                        _ => step,
                    };
                    if fx != 0.0 || fy != 0.0 {
                        flow.flow.set(l, y, x, 0, fx);
                        flow.flow.set(l, y, x, 1, fy);
                        mask.set(l, y, x, 0, 1.0);
                    }
                }
            }
        }
        let n = dims.plane();
        let last = mask.frame(cfg.frames - 2)[..n].to_vec();
        mask.frame_mut(cfg.frames - 1).copy_from_slice(&last);
    }
    Ok(Clip {
        scenario: scenario.id.clone(),
        prompt: prompt.clone(),
        seed,
        video,
        flow,
        mask,
        coverage,
    })
}

/// Renders `prompt` with a layout and style drawn from `seed`.
pub fn gen_clip(cfg: &RenderConfig, scenario: &Scenario, prompt: &PromptSpec, seed: u64) -> Result<Clip> {
    check_applicable(scenario, prompt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let style = rng.gen_range(0..scenario.backgrounds.len());
    let layout = sample_layout(cfg, scenario, style, &mut rng)?;
    render_clip(cfg, scenario, prompt, &layout, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthvid::scenario::{default_scenarios, vocab_for, ScenarioPrompt};
    use crate::synthvid::PromptVocab;

    fn single(verb: Verb, size_frac: f32) -> (Scenario, PromptVocab) {
        let mut s = default_scenarios()
            .into_iter()
            .find(|s| s.id == "car_on_road")
            .unwrap();
        s.sprites[0].size_frac = size_frac;
        s.prompts = vec![
            ScenarioPrompt { selector: "red".into(), verb, speed: Speed::Fast },
            ScenarioPrompt { selector: "red".into(), verb: Verb::Static, speed: Speed::Slow },
            ScenarioPrompt { selector: "red".into(), verb: Verb::Up, speed: Speed::Slow },
        ];
        let v = vocab_for(std::slice::from_ref(&s));
        (s, v)
    }

    fn prompt(s: &Scenario, v: &PromptVocab, verb: Verb, speed: Speed) -> PromptSpec {
        s.resolve(v, &ScenarioPrompt { selector: "red".into(), verb, speed }).unwrap()
    }

    #[test]
    fn static_prompt_has_no_flow_and_empty_mask() {
        let cfg = RenderConfig::default();
        let (s, v) = single(Verb::Left, 0.2);
        let c = gen_clip(&cfg, &s, &prompt(&s, &v, Verb::Static, Speed::Slow), 3).unwrap();
        assert!(c.flow.flow.data().iter().all(|&x| x == 0.0));
        assert!(c.mask.data().iter().all(|&x| x == 0.0));
        for l in 1..cfg.frames {
            assert_eq!(c.video.frame(l), c.video.frame(0));
        }
    }

    #[test]
    fn rightward_two_px_has_exact_intensity() {
        let cfg = RenderConfig { fast_px: 2.0, ..RenderConfig::default() };
        let (s, v) = single(Verb::Right, 0.2);
        let c = gen_clip(&cfg, &s, &prompt(&s, &v, Verb::Right, Speed::Fast), 5).unwrap();
        let d = c.flow.flow.dims();
        for l in 0..d.frames {
            for y in 0..d.height {
                for x in 0..d.width {
                    let (u, w) = c.flow.at(l, y, x);
                    let moving = c.mask.get(l, y, x, 0) == 1.0;
                    let mag = (u * u + w * w).sqrt();
                    if moving {
                        assert_eq!(mag, 2.0);
                    } else {
                        assert_eq!(mag, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn ten_px_sprite_covers_about_two_percent() {
        let cfg = RenderConfig { height: 64, width: 64, fast_px: 4.0, ..RenderConfig::default() };
        let (s, v) = single(Verb::Right, 10.0 / 64.0);
        let c = gen_clip(&cfg, &s, &prompt(&s, &v, Verb::Right, Speed::Fast), 9).unwrap();
        let frac = c.mask.frame(0).iter().filter(|&&m| m == 1.0).count() as f64 / (64.0 * 64.0);
        // Oracle: 10×10 moving pixels out of 4096.
        assert!((frac - 100.0 / 4096.0).abs() < 0.004, "{frac}");
    }

    fn bilinear(frame: &[f32], h: usize, w: usize, x: f32, y: f32, c: usize) -> Option<f32> {
        let (fx, fy) = (x - 0.5, y - 0.5);
        let (x0, y0) = (fx.floor(), fy.floor());
        if x0 < 0.0 || y0 < 0.0 || x0 as usize + 1 >= w || y0 as usize + 1 >= h {
            return None;
        }
        let (tx, ty) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        let at = |yy: usize, xx: usize| frame[(yy * w + xx) * 3 + c];
        Some(
            (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1))
                + ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1)),
        )
    }

    #[test]
    fn warping_by_oracle_flow_reconstructs_next_frame() {
        let cfg = RenderConfig::default();
        let all = default_scenarios();
        let vocab = vocab_for(&all);
        let (h, w) = (cfg.height, cfg.width);
        for s in &all {
            for p in s.prompt_specs(&vocab).unwrap() {
                let c = gen_clip(&cfg, s, &p, 21).unwrap();
                let (mut se, mut n) = (0.0f64, 0usize);
                for l in 0..cfg.frames - 1 {
                    let (cur, next) = (c.video.frame(l), c.video.frame(l + 1));
                    let (cov0, cov1) = (c.coverage.frame(l), c.coverage.frame(l + 1));
                    for y in 0..h {
                        for x in 0..w {
                            let i = y * w + x;
                            let (u, v) = c.flow.at(l, y, x);
                            let tx = x as f32 + 0.5 + u;
                            let ty = y as f32 + 0.5 + v;
                            let usable = if cov0[i] == 1.0 {
                                // All four bilinear taps must land fully inside the sprite.
                                let (bx, by) = ((tx - 0.5).floor() as isize, (ty - 0.5).floor() as isize);
                                (0..2).all(|dy| {
                                    (0..2).all(|dx| {
                                        let (xx, yy) = (bx + dx, by + dy);
                                        xx >= 0
                                            && yy >= 0
                                            && (xx as usize) < w
                                            && (yy as usize) < h
                                            && cov1[yy as usize * w + xx as usize] == 1.0
                                    })
                                })
                            } else {
                                cov0[i] == 0.0 && cov1[i] == 0.0
                            };
                            if !usable {
                                continue;
                            }
                            for ch in 0..3 {
                                let Some(warped) = bilinear(next, h, w, tx, ty, ch) else { continue };
                                se += ((warped - cur[i * 3 + ch]) as f64).powi(2);
                                n += 1;
                            }
                        }
                    }
                }
                assert!(n > 0);
                let mse = se / n as f64;
                assert!(mse < 1e-6, "{} / {}: mse {mse}", s.id, p.text);
            }
        }
    }

    #[test]
    fn mean_flow_points_along_the_prompt() {
        let cfg = RenderConfig::default();
        let all = default_scenarios();
        let vocab = vocab_for(&all);
        for s in &all {
            for p in s.prompt_specs(&vocab).unwrap() {
                let Some((dx, dy)) = p.verb.direction() else { continue };
                let c = gen_clip(&cfg, s, &p, 4).unwrap();
                let (mut su, mut sv) = (0.0f64, 0.0f64);
                let d = c.flow.flow.dims();
                for l in 0..d.frames {
                    for y in 0..d.height {
                        for x in 0..d.width {
                            if c.mask.get(l, y, x, 0) == 1.0 {
                                let (u, v) = c.flow.at(l, y, x);
                                su += u as f64;
                                sv += v as f64;
                            }
                        }
                    }
                }
                let cos = (su * dx as f64 + sv * dy as f64) / (su.hypot(sv) + 1e-30);
                assert!(cos >= (22.5f64).to_radians().cos(), "{} {}", s.id, p.text);
            }
        }
    }

    #[test]
    fn inapplicable_prompt_is_rejected() {
        let cfg = RenderConfig::default();
        let (s, v) = single(Verb::Right, 0.2);
        let mut p = prompt(&s, &v, Verb::Right, Speed::Fast);
        p.verb = Verb::Up;
        assert!(matches!(gen_clip(&cfg, &s, &p, 1), Err(Error::Contract(_))));
        let mut p2 = prompt(&s, &v, Verb::Right, Speed::Fast);
        p2.scenario = "elsewhere".into();
        assert!(gen_clip(&cfg, &s, &p2, 1).is_err());
    }

    #[test]
    fn same_seed_same_clip() {
        let cfg = RenderConfig::default();
        let (s, v) = single(Verb::DownRight, 0.2);
        let p = prompt(&s, &v, Verb::DownRight, Speed::Fast);
        let a = gen_clip(&cfg, &s, &p, 77).unwrap();
        let b = gen_clip(&cfg, &s, &p, 77).unwrap();
        assert_eq!(a.video, b.video);
        assert_eq!(a.flow, b.flow);
        let c = gen_clip(&cfg, &s, &p, 78).unwrap();
        assert_ne!(a.video, c.video);
    }

    #[test]
    fn every_library_prompt_renders() {
        let cfg = RenderConfig::default();
        let all = default_scenarios();
        let vocab = vocab_for(&all);
        for s in &all {
            for p in s.prompt_specs(&vocab).unwrap() {
                let c = gen_clip(&cfg, s, &p, 11).unwrap();
                assert!(c.video.data().iter().all(|v| (0.0..=1.0).contains(v)));
                if p.verb == Verb::Enter {
                    let cov0: f32 = c.coverage.frame(0).iter().sum();
                    let cov1: f32 = c.coverage.frame(1).iter().sum();
                    let cov2: f32 = c.coverage.frame(2).iter().sum();
                    assert_eq!(cov0 + cov1, 0.0, "{} visible before frame 2", s.id);
                    assert!(cov2 > 0.0, "{} not visible at frame 2", s.id);
                }
            }
        }
    }
}
