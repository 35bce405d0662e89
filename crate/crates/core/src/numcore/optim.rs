use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiserParams, GradientSet, Param};
use super::Real;
use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent, `θ ← θ − lr·g`.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const ADAM_DEFAULT: Self = Self::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::ADAM_DEFAULT
    }
}

/// First-order optimizer with per-parameter moment state.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    step_count: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to the denoiser; refuses non-finite gradients.
    pub fn step(
        &mut self,
        params: &mut DenoiserParams<T>,
        grads: &GradientSet<T>,
        lr: f64,
    ) -> Result<()> {
        ensure!(
            params.weights.isomorphic(&grads.weights),
            "gradients are not isomorphic to parameters"
        );
        self.step_params(params.weights.params_mut(), grads.weights.params(), lr)
    }

    /// Update over an arbitrary list of parameter arrays.
    pub fn step_params(
        &mut self,
        mut params: Vec<&mut Param<T>>,
        grads: Vec<&Param<T>>,
        lr: f64,
    ) -> Result<()> {
        ensure!(lr > 0.0 && lr.is_finite(), "learning rate must be positive, got {lr}");
        ensure!(params.len() == grads.len(), "parameter/gradient group count differs");
        for (p, g) in params.iter().zip(&grads) {
            ensure!(
                p.data.len() == g.data.len(),
                "group {} has {} values but gradient has {}",
                p.name,
                p.data.len(),
                g.data.len()
            );
        }
        if grads.iter().any(|g| g.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::numeric("non-finite gradient; step refused"));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.data.len()]).collect();
            self.second = self.first.clone();
        }
        self.step_count += 1;
        let lr_t = T::from_f64_lossy(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (w, d) in p.data.iter_mut().zip(&g.data) {
                        *w = *w - lr_t * *d;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step_count as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
                let (one, eps) = (T::one(), T::from_f64_lossy(eps));
                let (c1, c2) = (T::from_f64_lossy(c1), T::from_f64_lossy(c2));
                for (gi, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                    let m = &mut self.first[gi];
                    let v = &mut self.second[gi];
                    for i in 0..p.data.len() {
                        let d = g.data[i];
                        m[i] = b1 * m[i] + (one - b1) * d;
                        v[i] = b2 * v[i] + (one - b2) * d * d;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p.data[i] = p.data[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
