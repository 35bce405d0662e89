use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{ensure, Error, Result};

/// Extent of a frames × rows × cols × channels array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims4 {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims4 {
    pub const fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels per frame.
    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn with_frames(self, frames: usize) -> Self {
        Self { frames, ..self }
    }

    pub fn with_channels(self, channels: usize) -> Self {
        Self { channels, ..self }
    }

    #[inline]
    pub fn offset(&self, l: usize, h: usize, w: usize, c: usize) -> usize {
        ((l * self.height + h) * self.width + w) * self.channels + c
    }
}

impl std::fmt::Display for Dims4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.frames, self.height, self.width, self.channels
        )
    }
}

/// Dense L×H×W×C array, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor4<T> {
    dims: Dims4,
    data: Vec<T>,
}

/// Pixel video with values in `[0, 1]`.
pub type VideoTensor = Tensor4<f32>;

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: Dims4) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![T::zero(); dims.len()],
        })
    }

    pub fn filled(dims: Dims4, value: T) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims,
            data: vec![value; dims.len()],
        })
    }

    pub fn from_vec(dims: Dims4, data: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        ensure!(
            data.len() == dims.len(),
            "tensor data length {} does not match dims {dims}",
            data.len()
        );
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims4, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.len());
        for l in 0..dims.frames {
            for h in 0..dims.height {
                for w in 0..dims.width {
                    for c in 0..dims.channels {
                        data.push(f(l, h, w, c));
                    }
                }
            }
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, l: usize, h: usize, w: usize, c: usize) -> T {
        self.data[self.dims.offset(l, h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, h: usize, w: usize, c: usize, value: T) {
        let i = self.dims.offset(l, h, w, c);
        self.data[i] = value;
    }

    pub fn frame(&self, l: usize) -> &[T] {
        let n = self.dims.frame_len();
        &self.data[l * n..(l + 1) * n]
    }

    pub fn frame_mut(&mut self, l: usize) -> &mut [T] {
        let n = self.dims.frame_len();
        &mut self.data[l * n..(l + 1) * n]
    }

    /// Copy of frame `l` as a one-frame tensor.
    pub fn frame_tensor(&self, l: usize) -> Self {
        Self {
            dims: self.dims.with_frames(1),
            data: self.frame(l).to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::numeric(format!("{what} contains non-finite values")))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / self.data.len() as f64
    }

    /// Euclidean norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let x = v.to_f64_lossy();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Elementwise `a·self + b·other`.
    pub fn axpby(&self, a: T, other: &Self, b: T) -> Result<Self> {
        ensure!(
            self.dims == other.dims,
            "shape mismatch {} vs {}",
            self.dims,
            other.dims
        );
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| a * x + b * y)
                .collect(),
        })
    }

    /// Repeats a one-frame tensor `frames` times.
    pub fn repeat_frames(&self, frames: usize) -> Result<Self> {
        ensure!(self.dims.frames == 1, "repeat_frames needs a single frame");
        ensure!(frames >= 1, "repeat count must be at least 1");
        let mut data = Vec::with_capacity(self.data.len() * frames);
        for _ in 0..frames {
            data.extend_from_slice(&self.data);
        }
        Ok(Self {
            dims: self.dims.with_frames(frames),
            data,
        })
    }
}

fn check_dims(dims: Dims4) -> Result<()> {
    ensure!(
        dims.frames >= 1 && dims.height >= 1 && dims.width >= 1 && dims.channels >= 1,
        "tensor dims must all be >= 1, got {dims}"
    );
    Ok(())
}
