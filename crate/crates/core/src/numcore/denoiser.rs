//! Toy space-time denoiser.
//!
//! Two residual blocks, each a 3×3 per-frame convolution followed by a 3-tap
//! convolution across frames. Time, prompt and (optionally) pooled image
//! features form one embedding vector that every block maps to a per-channel
//! scale and shift. Backward is derived by hand for this fixed graph.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::real::{gemm, Op};
use super::{Real, Tensor4};
use crate::error::{ensure, Error, Result};

/// How the first-frame latent reaches the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    /// Channel concatenation with the noisy latent.
    XCat,
    /// Spatially pooled features injected through scale/shift.
    GlobalFeat,
    Both,
}

impl ConditioningMode {
    pub fn concatenates(self) -> bool {
        matches!(self, Self::XCat | Self::Both)
    }

    pub fn pools(self) -> bool {
        matches!(self, Self::GlobalFeat | Self::Both)
    }
}

impl std::str::FromStr for ConditioningMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x_cat" => Ok(Self::XCat),
            "global_feat" => Ok(Self::GlobalFeat),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown conditioning mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Channels of the video latent (C′).
    pub latent_channels: usize,
    pub width: usize,
    pub blocks: usize,
    /// Sinusoidal time-embedding size; must be even.
    pub time_dim: usize,
    pub prompt_dim: usize,
    /// Number of real prompts; the null prompt has index `vocab_size`.
    pub vocab_size: usize,
    /// Token rows summed into each prompt's embedding, one list per prompt
    /// including the null prompt. Empty means one table row per prompt.
    #[serde(default)]
    pub prompt_tokens: Vec<Vec<usize>>,
    pub conditioning: ConditioningMode,
    /// Appends a constant input channel holding each frame's position in [-1, 1].
    #[serde(default)]
    pub frame_position: bool,
    /// Number of diffusion steps, bounds `t_index`.
    pub timesteps: usize,
}

impl DenoiserConfig {
    pub fn input_channels(&self) -> usize {
        let base = if self.conditioning.concatenates() {
            2 * self.latent_channels
        } else {
            self.latent_channels
        };
        base + usize::from(self.frame_position)
    }

    pub fn embed_dim(&self) -> usize {
        let pooled = if self.conditioning.pools() {
            self.latent_channels
        } else {
            0
        };
        self.time_dim + self.prompt_dim + pooled
    }

    /// Index of the null prompt.
    pub fn null_prompt(&self) -> usize {
        self.vocab_size
    }

    pub fn table_rows(&self) -> usize {
        if self.prompt_tokens.is_empty() {
            self.vocab_size + 1
        } else {
            self.prompt_tokens.iter().flatten().max().map_or(0, |m| m + 1)
        }
    }

    /// Table rows making up prompt `prompt`.
    pub fn prompt_rows(&self, prompt: usize) -> Vec<usize> {
        if self.prompt_tokens.is_empty() {
            vec![prompt]
        } else {
            self.prompt_tokens[prompt].clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.latent_channels >= 1, "latent_channels must be >= 1");
        ensure!(self.width >= 1, "width must be >= 1");
        ensure!(
            self.time_dim >= 2 && self.time_dim % 2 == 0,
            "time_dim must be even and >= 2"
        );
        ensure!(self.prompt_dim >= 1, "prompt_dim must be >= 1");
        ensure!(self.timesteps >= 1, "timesteps must be >= 1");
        ensure!(
            self.prompt_tokens.is_empty()
                || (self.prompt_tokens.len() == self.vocab_size + 1 && self.prompt_tokens.iter().all(|t| !t.is_empty())),
            "prompt_tokens needs one non-empty list per prompt plus the null prompt"
        );
        Ok(())
    }
}

/// One named parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Param<T> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name,
            shape,
            data: vec![T::zero(); n],
        }
    }
}

/// Convolution weights: kernel is `(taps·cin) × cout`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub kernel: Param<T>,
    pub bias: Param<T>,
}

/// Dense map `in → out`; weight stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResBlock<T> {
    pub spatial: Conv<T>,
    pub temporal: Conv<T>,
    pub modulation: Linear<T>,
}

/// Every trainable array of the denoiser. Shared by parameters and gradients
/// so the two are isomorphic by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    pub conv_in: Conv<T>,
    pub blocks: Vec<ResBlock<T>>,
    pub conv_out: Conv<T>,
    /// `table_rows × prompt_dim`.
    pub prompt_table: Param<T>,
}

impl<T: Real> Weights<T> {
    pub fn zeros(cfg: &DenoiserConfig) -> Self {
        let conv = |name: &str, taps: usize, cin: usize, cout: usize| Conv {
            kernel: Param::zeros(format!("{name}.kernel"), vec![taps * cin, cout]),
            bias: Param::zeros(format!("{name}.bias"), vec![cout]),
        };
        let w = cfg.width;
        let blocks = (0..cfg.blocks)
            .map(|b| ResBlock {
                spatial: conv(&format!("block{b}.spatial"), 9, w, w),
                temporal: conv(&format!("block{b}.temporal"), 3, w, w),
                modulation: Linear {
                    weight: Param::zeros(
                        format!("block{b}.modulation.weight"),
                        vec![cfg.embed_dim(), 2 * w],
                    ),
                    bias: Param::zeros(format!("block{b}.modulation.bias"), vec![2 * w]),
                },
            })
            .collect();
        Self {
            conv_in: conv("conv_in", 9, cfg.input_channels(), w),
            blocks,
            conv_out: conv("conv_out", 9, w, cfg.latent_channels),
            prompt_table: Param::zeros(
                "prompt_table".into(),
                vec![cfg.table_rows(), cfg.prompt_dim],
            ),
        }
    }

    /// Parameter groups in a fixed order.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = vec![&self.conv_in.kernel, &self.conv_in.bias];
        for b in &self.blocks {
            out.extend([
                &b.spatial.kernel,
                &b.spatial.bias,
                &b.temporal.kernel,
                &b.temporal.bias,
                &b.modulation.weight,
                &b.modulation.bias,
            ]);
        }
        out.extend([&self.conv_out.kernel, &self.conv_out.bias, &self.prompt_table]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = vec![&mut self.conv_in.kernel, &mut self.conv_in.bias];
        for b in &mut self.blocks {
            out.extend([
                &mut b.spatial.kernel,
                &mut b.spatial.bias,
                &mut b.temporal.kernel,
                &mut b.temporal.bias,
                &mut b.modulation.weight,
                &mut b.modulation.bias,
            ]);
        }
        out.extend([
            &mut self.conv_out.kernel,
            &mut self.conv_out.bias,
            &mut self.prompt_table,
        ]);
        out
    }

    pub fn count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|p| p.data.iter().all(|v| v.is_finite()))
    }

    /// Same structure (names and shapes) as `other`.
    pub fn isomorphic(&self, other: &Self) -> bool {
        let a = self.params();
        let b = other.params();
        a.len() == b.len()
            && a
                .iter()
                .zip(&b)
                .all(|(x, y)| x.name == y.name && x.shape == y.shape)
    }

    pub fn flatten(&self) -> Vec<T> {
        self.params()
            .iter()
            .flat_map(|p| p.data.iter().copied())
            .collect()
    }

    pub fn cast<U: Real>(&self, cfg: &DenoiserConfig) -> Weights<U> {
        let mut out = Weights::<U>::zeros(cfg);
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            for (d, s) in dst.data.iter_mut().zip(&src.data) {
                *d = U::from_f64_lossy(s.to_f64_lossy());
            }
        }
        out
    }
}

/// Network parameters θ together with the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserParams<T> {
    pub config: DenoiserConfig,
    pub seed: u64,
    pub weights: Weights<T>,
}

/// ∂L/∂θ, structurally identical to [`DenoiserParams::weights`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    pub weights: Weights<T>,
}

impl<T: Real> GradientSet<T> {
    pub fn zeros(cfg: &DenoiserConfig) -> Self {
        Self {
            weights: Weights::zeros(cfg),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite()
    }

    pub fn scale(&mut self, s: T) {
        for p in self.weights.params_mut() {
            p.data.iter_mut().for_each(|v| *v = *v * s);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.params_mut().into_iter().zip(other.weights.params()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + *y;
            }
        }
    }
}

impl<T: Real> DenoiserParams<T> {
    /// He-style fan-in initialization; biases start at zero and prompt rows
    /// at unit normal.
    pub fn init(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut weights = Weights::<T>::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in weights.params_mut() {
            if p.name.ends_with(".bias") {
                continue;
            }
            let std = if p.name == "prompt_table" {
                let longest = config.prompt_tokens.iter().map(Vec::len).max().unwrap_or(1);
                1.0 / (longest as f64).sqrt()
            } else {
                (2.0 / p.shape[0] as f64).sqrt()
            };
            let dist = Normal::new(0.0, std).expect("positive std");
            for v in p.data.iter_mut() {
                *v = T::from_f64_lossy(dist.sample(&mut rng));
            }
        }
        Ok(Self {
            config,
            seed,
            weights,
        })
    }

    /// All-zero parameters; the network then outputs zeros.
    pub fn zeros(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            weights: Weights::zeros(&config),
            config,
            seed: 0,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.count()
    }

    pub fn cast<U: Real>(&self) -> DenoiserParams<U> {
        DenoiserParams {
            config: self.config.clone(),
            seed: self.seed,
            weights: self.weights.cast(&self.config),
        }
    }
}

/// Sinusoidal embedding of a timestep index.
pub fn time_embedding<T: Real>(t_index: usize, dim: usize) -> Vec<T> {
    let half = dim / 2;
    let t = t_index as f64;
    let mut out = vec![T::zero(); dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = T::from_f64_lossy((t * freq).sin());
        out[half + i] = T::from_f64_lossy((t * freq).cos());
    }
    out
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s + x * s * (T::one() - s)
}

/// Geometry of the per-frame activations: `frames·height·width` rows.
#[derive(Clone, Copy, Debug)]
struct Grid {
    frames: usize,
    height: usize,
    width: usize,
}

impl Grid {
    fn rows(&self) -> usize {
        self.frames * self.height * self.width
    }
    fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Unfolds 3×3 zero-padded neighborhoods: `rows × (9·cin)`, tap-major.
fn im2col3x3<T: Real>(x: &[T], g: Grid, cin: usize) -> Vec<T> {
    let mut cols = vec![T::zero(); g.rows() * 9 * cin];
    let (hh, ww) = (g.height as isize, g.width as isize);
    for l in 0..g.frames {
        for h in 0..g.height {
            for w in 0..g.width {
                let row = (l * g.plane() + h * g.width + w) * 9 * cin;
                for ky in 0..3isize {
                    let sh = h as isize + ky - 1;
                    if sh < 0 || sh >= hh {
                        continue;
                    }
                    for kx in 0..3isize {
                        let sw = w as isize + kx - 1;
                        if sw < 0 || sw >= ww {
                            continue;
                        }
                        let src = (l * g.plane() + sh as usize * g.width + sw as usize) * cin;
                        let dst = row + ((ky * 3 + kx) as usize) * cin;
                        cols[dst..dst + cin].copy_from_slice(&x[src..src + cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3x3`], accumulating into `dx`.
fn col2im3x3<T: Real>(dcols: &[T], g: Grid, cin: usize, dx: &mut [T]) {
    let (hh, ww) = (g.height as isize, g.width as isize);
    for l in 0..g.frames {
        for h in 0..g.height {
            for w in 0..g.width {
                let row = (l * g.plane() + h * g.width + w) * 9 * cin;
                for ky in 0..3isize {
                    let sh = h as isize + ky - 1;
                    if sh < 0 || sh >= hh {
                        continue;
                    }
                    for kx in 0..3isize {
                        let sw = w as isize + kx - 1;
                        if sw < 0 || sw >= ww {
                            continue;
                        }
                        let src = (l * g.plane() + sh as usize * g.width + sw as usize) * cin;
                        let off = row + ((ky * 3 + kx) as usize) * cin;
                        for c in 0..cin {
                            dx[src + c] = dx[src + c] + dcols[off + c];
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T]) {
    let n = bias.len();
    for row in out.chunks_exact_mut(n) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o = *o + *b;
        }
    }
}

fn accumulate_bias_grad<T: Real>(dout: &[T], dbias: &mut [T]) {
    let n = dbias.len();
    for row in dout.chunks_exact(n) {
        for (d, g) in dbias.iter_mut().zip(row) {
            *d = *d + *g;
        }
    }
}

/// Spatial 3×3 convolution; returns output and the unfolded input.
fn conv3x3_forward<T: Real>(x: &[T], g: Grid, cin: usize, conv: &Conv<T>) -> (Vec<T>, Vec<T>) {
    let cout = conv.bias.data.len();
    let cols = im2col3x3(x, g, cin);
    let mut out = vec![T::zero(); g.rows() * cout];
    gemm(
        g.rows(),
        9 * cin,
        cout,
        &cols,
        Op::N,
        &conv.kernel.data,
        Op::N,
        T::zero(),
        &mut out,
    );
    add_bias(&mut out, &conv.bias.data);
    (out, cols)
}

/// Accumulates kernel/bias gradients; returns ∂L/∂x when `want_input`.
fn conv3x3_backward<T: Real>(
    dout: &[T],
    cols: &[T],
    g: Grid,
    cin: usize,
    conv: &Conv<T>,
    grad: &mut Conv<T>,
    want_input: bool,
) -> Option<Vec<T>> {
    let cout = conv.bias.data.len();
    gemm(
        9 * cin,
        g.rows(),
        cout,
        cols,
        Op::T,
        dout,
        Op::N,
        T::one(),
        &mut grad.kernel.data,
    );
    accumulate_bias_grad(dout, &mut grad.bias.data);
    if !want_input {
        return None;
    }
    let mut dcols = vec![T::zero(); g.rows() * 9 * cin];
    gemm(
        g.rows(),
        cout,
        9 * cin,
        dout,
        Op::N,
        &conv.kernel.data,
        Op::T,
        T::zero(),
        &mut dcols,
    );
    let mut dx = vec![T::zero(); g.rows() * cin];
    col2im3x3(&dcols, g, cin, &mut dx);
    Some(dx)
}

/// Frame range `(first output frame, first source frame, count)` for tap `j`
/// of a 3-tap temporal kernel with zero padding.
fn temporal_span(frames: usize, tap: usize) -> Option<(usize, usize, usize)> {
    // source frame = output frame + tap - 1
    let (first_out, first_src) = if tap == 0 { (1, 0) } else { (0, tap - 1) };
    let last_src_exclusive = frames.min(frames + tap - 1);
    if first_src >= last_src_exclusive || first_out >= frames {
        return None;
    }
    let count = (last_src_exclusive - first_src).min(frames - first_out);
    Some((first_out, first_src, count))
}

fn temporal_forward<T: Real>(x: &[T], g: Grid, c: usize, conv: &Conv<T>) -> Vec<T> {
    let mut out = vec![T::zero(); g.rows() * c];
    add_bias(&mut out, &conv.bias.data);
    let p = g.plane();
    for tap in 0..3 {
        let Some((lo, so, n)) = temporal_span(g.frames, tap) else {
            continue;
        };
        gemm(
            n * p,
            c,
            c,
            &x[so * p * c..(so + n) * p * c],
            Op::N,
            &conv.kernel.data[tap * c * c..(tap + 1) * c * c],
            Op::N,
            T::one(),
            &mut out[lo * p * c..(lo + n) * p * c],
        );
    }
    out
}

fn temporal_backward<T: Real>(
    dout: &[T],
    x: &[T],
    g: Grid,
    c: usize,
    conv: &Conv<T>,
    grad: &mut Conv<T>,
) -> Vec<T> {
    accumulate_bias_grad(dout, &mut grad.bias.data);
    let mut dx = vec![T::zero(); g.rows() * c];
    let p = g.plane();
    for tap in 0..3 {
        let Some((lo, so, n)) = temporal_span(g.frames, tap) else {
            continue;
        };
        let xs = &x[so * p * c..(so + n) * p * c];
        let ds = &dout[lo * p * c..(lo + n) * p * c];
        gemm(
            c,
            n * p,
            c,
            xs,
            Op::T,
            ds,
            Op::N,
            T::one(),
            &mut grad.kernel.data[tap * c * c..(tap + 1) * c * c],
        );
        gemm(
            n * p,
            c,
            c,
            ds,
            Op::N,
            &conv.kernel.data[tap * c * c..(tap + 1) * c * c],
            Op::T,
            T::one(),
            &mut dx[so * p * c..(so + n) * p * c],
        );
    }
    dx
}

struct BlockCache<T> {
    input: Vec<T>,
    spatial_cols: Vec<T>,
    spatial_out: Vec<T>,
    scale: Vec<T>,
    modulated: Vec<T>,
    activated: Vec<T>,
}

/// Intermediate activations retained for the backward pass.
pub struct ForwardCache<T> {
    grid: Grid,
    embedding: Vec<T>,
    prompt: usize,
    in_cols: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    last_hidden: Vec<T>,
    out_cols: Vec<T>,
}

fn check_inputs<T: Real>(
    cfg: &DenoiserConfig,
    z_t: &Tensor4<T>,
    cond: &Tensor4<T>,
    t_index: usize,
    prompt: usize,
) -> Result<()> {
    ensure!(
        z_t.dims() == cond.dims(),
        "noisy latent {} and condition {} differ in shape",
        z_t.dims(),
        cond.dims()
    );
    ensure!(
        z_t.dims().channels == cfg.latent_channels,
        "latent has {} channels, network expects {}",
        z_t.dims().channels,
        cfg.latent_channels
    );
    ensure!(
        t_index < cfg.timesteps,
        "t_index {t_index} outside [0, {})",
        cfg.timesteps
    );
    ensure!(
        prompt <= cfg.vocab_size,
        "prompt index {prompt} outside [0, {}]",
        cfg.vocab_size
    );
    z_t.ensure_finite("noisy latent")?;
    cond.ensure_finite("condition latent")?;
    Ok(())
}

/// Mean of frame 0 of the condition over rows and columns, per channel.
pub fn pooled_condition<T: Real>(cond: &Tensor4<T>) -> Vec<T> {
    let d = cond.dims();
    let mut acc = vec![0f64; d.channels];
    for px in cond.frame(0).chunks_exact(d.channels) {
        for (a, v) in acc.iter_mut().zip(px) {
            *a += v.to_f64_lossy();
        }
    }
    let n = d.plane() as f64;
    acc.into_iter().map(|a| T::from_f64_lossy(a / n)).collect()
}

fn build_embedding<T: Real>(
    cfg: &DenoiserConfig,
    weights: &Weights<T>,
    cond: &Tensor4<T>,
    t_index: usize,
    prompt: usize,
) -> Vec<T> {
    let mut e = time_embedding::<T>(t_index, cfg.time_dim);
    let start = e.len();
    e.resize(start + cfg.prompt_dim, T::zero());
    for r in cfg.prompt_rows(prompt) {
        let row = &weights.prompt_table.data[r * cfg.prompt_dim..(r + 1) * cfg.prompt_dim];
        for (a, &b) in e[start..].iter_mut().zip(row) {
            *a = *a + b;
        }
    }
    if cfg.conditioning.pools() {
        e.extend(pooled_condition(cond));
    }
    e
}

fn concat_channels<T: Real>(a: &[T], b: &[T], c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() * 2);
    for (pa, pb) in a.chunks_exact(c).zip(b.chunks_exact(c)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    out
}

fn append_frame_position<T: Real>(x: &[T], g: Grid, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(g.rows() * (c + 1));
    for (row, px) in x.chunks_exact(c).enumerate() {
        let l = row / g.plane();
        let pos = if g.frames > 1 {
            2.0 * l as f64 / (g.frames - 1) as f64 - 1.0
        } else {
            0.0
        };
        out.extend_from_slice(px);
        out.push(T::from_f64_lossy(pos));
    }
    out
}

/// Runs the network, keeping activations for [`backward`].
pub fn forward_cached<T: Real>(
    params: &DenoiserParams<T>,
    z_t: &Tensor4<T>,
    cond: &Tensor4<T>,
    t_index: usize,
    prompt: usize,
) -> Result<(Tensor4<T>, ForwardCache<T>)> {
    let cfg = &params.config;
    let wts = &params.weights;
    check_inputs(cfg, z_t, cond, t_index, prompt)?;
    let dims = z_t.dims();
    let grid = Grid {
        frames: dims.frames,
        height: dims.height,
        width: dims.width,
    };
    let width = cfg.width;
    let embedding = build_embedding(cfg, wts, cond, t_index, prompt);

    let mut input: Vec<T> = if cfg.conditioning.concatenates() {
        concat_channels(z_t.data(), cond.data(), cfg.latent_channels)
    } else {
        z_t.data().to_vec()
    };
    if cfg.frame_position {
        input = append_frame_position(&input, grid, cfg.input_channels() - 1);
    }
    let (mut hidden, in_cols) = conv3x3_forward(&input, grid, cfg.input_channels(), &wts.conv_in);

    let mut blocks = Vec::with_capacity(wts.blocks.len());
    for blk in &wts.blocks {
        let pre: Vec<T> = hidden.iter().map(|&v| silu(v)).collect();
        let (spatial_out, spatial_cols) = conv3x3_forward(&pre, grid, width, &blk.spatial);

        let mut mod_out = blk.modulation.bias.data.clone();
        gemm(
            1,
            embedding.len(),
            2 * width,
            &embedding,
            Op::N,
            &blk.modulation.weight.data,
            Op::N,
            T::one(),
            &mut mod_out,
        );
        let (scale, shift) = mod_out.split_at(width);

        let mut modulated = spatial_out.clone();
        for row in modulated.chunks_exact_mut(width) {
            for ((v, s), b) in row.iter_mut().zip(scale).zip(shift) {
                *v = *v * (T::one() + *s) + *b;
            }
        }
        let activated: Vec<T> = modulated.iter().map(|&v| silu(v)).collect();
        let temporal_out = temporal_forward(&activated, grid, width, &blk.temporal);

        let input_copy = hidden.clone();
        for (h, t) in hidden.iter_mut().zip(&temporal_out) {
            *h = *h + *t;
        }
        blocks.push(BlockCache {
            input: input_copy,
            spatial_cols,
            spatial_out,
            scale: scale.to_vec(),
            modulated,
            activated,
        });
    }

    let post: Vec<T> = hidden.iter().map(|&v| silu(v)).collect();
    let (out, out_cols) = conv3x3_forward(&post, grid, width, &wts.conv_out);
    let output = Tensor4::from_vec(dims, out)?;
    Ok((
        output,
        ForwardCache {
            grid,
            embedding,
            prompt,
            in_cols,
            blocks,
            last_hidden: hidden,
            out_cols,
        },
    ))
}

/// Predicted v for the noisy latent `z_t` given the replicated condition
/// latent, timestep index and prompt index (the null prompt is
/// `config.vocab_size`).
pub fn denoiser_forward<T: Real>(
    params: &DenoiserParams<T>,
    z_t: &Tensor4<T>,
    cond: &Tensor4<T>,
    t_index: usize,
    prompt: usize,
) -> Result<Tensor4<T>> {
    forward_cached(params, z_t, cond, t_index, prompt).map(|(out, _)| out)
}

/// Accumulates ∂L/∂θ into `grads` given ∂L/∂output.
pub fn backward<T: Real>(
    params: &DenoiserParams<T>,
    cache: &ForwardCache<T>,
    d_out: &Tensor4<T>,
    grads: &mut GradientSet<T>,
) -> Result<()> {
    let cfg = &params.config;
    let wts = &params.weights;
    ensure!(
        grads.weights.isomorphic(wts),
        "gradient set does not match parameters"
    );
    let g = cache.grid;
    let width = cfg.width;
    let gw = &mut grads.weights;

    let d_post = conv3x3_backward(
        d_out.data(),
        &cache.out_cols,
        g,
        width,
        &wts.conv_out,
        &mut gw.conv_out,
        true,
    )
    .expect("input gradient requested");
    let mut d_hidden: Vec<T> = d_post
        .iter()
        .zip(&cache.last_hidden)
        .map(|(&d, &h)| d * silu_grad(h))
        .collect();

    let mut d_embedding = vec![T::zero(); cache.embedding.len()];
    for (b, (blk, bc)) in wts.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        let gblk = &mut gw.blocks[b];
        // Residual: d_hidden reaches both the skip path and the block body.
        let d_activated = temporal_backward(
            &d_hidden,
            &bc.activated,
            g,
            width,
            &blk.temporal,
            &mut gblk.temporal,
        );
        let d_modulated: Vec<T> = d_activated
            .iter()
            .zip(&bc.modulated)
            .map(|(&d, &m)| d * silu_grad(m))
            .collect();

        let mut d_mod = vec![T::zero(); 2 * width];
        let mut d_spatial = vec![T::zero(); d_modulated.len()];
        for ((drow, srow), dsp) in d_modulated
            .chunks_exact(width)
            .zip(bc.spatial_out.chunks_exact(width))
            .zip(d_spatial.chunks_exact_mut(width))
        {
            for c in 0..width {
                let d = drow[c];
                dsp[c] = d * (T::one() + bc.scale[c]);
                d_mod[c] = d_mod[c] + d * srow[c];
                d_mod[width + c] = d_mod[width + c] + d;
            }
        }
        // weight (E × 2W): dW += e ⊗ d_mod, de += W · d_mod
        gemm(
            cache.embedding.len(),
            1,
            2 * width,
            &cache.embedding,
            Op::N,
            &d_mod,
            Op::N,
            T::one(),
            &mut gblk.modulation.weight.data,
        );
        for (gb, d) in gblk.modulation.bias.data.iter_mut().zip(&d_mod) {
            *gb = *gb + *d;
        }
        gemm(
            cache.embedding.len(),
            2 * width,
            1,
            &blk.modulation.weight.data,
            Op::N,
            &d_mod,
            Op::N,
            T::one(),
            &mut d_embedding,
        );

        let d_pre = conv3x3_backward(
            &d_spatial,
            &bc.spatial_cols,
            g,
            width,
            &blk.spatial,
            &mut gblk.spatial,
            true,
        )
        .expect("input gradient requested");
        for ((dh, dp), h) in d_hidden.iter_mut().zip(&d_pre).zip(&bc.input) {
            *dh = *dh + *dp * silu_grad(*h);
        }
    }

    conv3x3_backward(
        &d_hidden,
        &cache.in_cols,
        g,
        cfg.input_channels(),
        &wts.conv_in,
        &mut gw.conv_in,
        false,
    );

    let d_prompt = &d_embedding[cfg.time_dim..cfg.time_dim + cfg.prompt_dim];
    for r in cfg.prompt_rows(cache.prompt) {
        let row = r * cfg.prompt_dim;
        for (gp, d) in gw.prompt_table.data[row..row + cfg.prompt_dim].iter_mut().zip(d_prompt) {
            *gp = *gp + *d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Dims4;

    pub(crate) fn tiny_config(mode: ConditioningMode) -> DenoiserConfig {
        DenoiserConfig {
            latent_channels: 3,
            width: 2,
            blocks: 2,
            time_dim: 4,
            prompt_dim: 2,
            vocab_size: 3,
            prompt_tokens: Vec::new(),
            conditioning: mode,
            frame_position: false,
            timesteps: 1000,
        }
    }

    fn random_latent(dims: Dims4, seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Tensor4::from_vec(dims, (0..dims.len()).map(|_| n.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn tiny_net_fits_gradient_check_budget() {
        for mode in [
            ConditioningMode::XCat,
            ConditioningMode::GlobalFeat,
            ConditioningMode::Both,
        ] {
            let p = DenoiserParams::<f64>::init(tiny_config(mode), 1).unwrap();
            assert!(p.param_count() <= 500, "{mode:?}: {}", p.param_count());
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let cfg = tiny_config(ConditioningMode::Both);
        let p = DenoiserParams::<f64>::zeros(cfg).unwrap();
        let dims = Dims4::new(4, 5, 6, 3);
        let out = denoiser_forward(&p, &random_latent(dims, 1), &random_latent(dims, 2), 17, 1)
            .unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_matches_noisy_latent() {
        let cfg = DenoiserConfig {
            latent_channels: 12,
            width: 8,
            blocks: 2,
            time_dim: 8,
            prompt_dim: 4,
            vocab_size: 5,
            prompt_tokens: Vec::new(),
            conditioning: ConditioningMode::XCat,
            frame_position: false,
            timesteps: 1000,
        };
        let p = DenoiserParams::<f32>::init(cfg, 7).unwrap();
        let dims = Dims4::new(8, 16, 16, 12);
        let z = random_latent(dims, 3).cast::<f32>();
        let out = denoiser_forward(&p, &z, &z, 999, 5).unwrap();
        assert_eq!(out.dims(), dims);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let cfg = tiny_config(ConditioningMode::XCat);
        let a = DenoiserParams::<f64>::init(cfg.clone(), 7).unwrap();
        let b = DenoiserParams::<f64>::init(cfg, 7).unwrap();
        assert_eq!(a, b);
        let dims = Dims4::new(3, 4, 4, 3);
        let (z, c) = (random_latent(dims, 5), random_latent(dims, 6));
        let o1 = denoiser_forward(&a, &z, &c, 10, 0).unwrap();
        let o2 = denoiser_forward(&b, &z, &c, 10, 0).unwrap();
        assert_eq!(o1.data(), o2.data());
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = tiny_config(ConditioningMode::XCat);
        let p = DenoiserParams::<f64>::init(cfg, 7).unwrap();
        let z = random_latent(Dims4::new(2, 4, 4, 3), 1);
        let c = random_latent(Dims4::new(2, 4, 2, 3), 1);
        assert!(matches!(
            denoiser_forward(&p, &z, &c, 0, 0),
            Err(Error::Contract(_))
        ));
        assert!(denoiser_forward(&p, &z, &z, 1000, 0).is_err());
        assert!(denoiser_forward(&p, &z, &z, 0, 4).is_err());
        let mut bad = z.clone();
        bad.data_mut()[3] = f64::NAN;
        assert!(matches!(
            denoiser_forward(&p, &bad, &z, 0, 0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn temporal_spans_cover_valid_taps() {
        assert_eq!(temporal_span(4, 0), Some((1, 0, 3)));
        assert_eq!(temporal_span(4, 1), Some((0, 0, 4)));
        assert_eq!(temporal_span(4, 2), Some((0, 1, 3)));
        assert_eq!(temporal_span(1, 0), None);
        assert_eq!(temporal_span(1, 2), None);
    }
}
