//! AdamW with decoupled weight decay.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    /// Completed steps.
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// A parameter slice with its gradient and a name for diagnostics.
pub struct ParamUpdate<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

impl<'a> ParamUpdate<'a> {
    pub fn new(name: &str, value: &'a mut [f64], grad: &'a [f64]) -> Self {
        Self {
            name: name.to_string(),
            value,
            grad,
        }
    }
}

/// One AdamW update over all parameters.
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
/// ```
///
/// Every gradient is checked before anything is written, so a non-finite
/// gradient leaves parameters and state untouched.
pub fn adamw_step(params: &mut [ParamUpdate<'_>], state: &mut OptimizerState, cfg: &AdamWConfig) -> Result<()> {
    for p in params.iter() {
        if p.value.len() != p.grad.len() {
            return Err(Error::Config(alloc::format!(
                "parameter `{}` has {} values but {} gradients",
                p.name,
                p.value.len(),
                p.grad.len()
            )));
        }
        if let Some(index) = p.grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: p.name.clone(),
                index,
            });
        }
    }
    if state.moments.is_empty() {
        state.moments = params
            .iter()
            .map(|p| Moments {
                m: vec![0.0; p.value.len()],
                v: vec![0.0; p.value.len()],
            })
            .collect();
    }
    if state.moments.len() != params.len()
        || state.moments.iter().zip(params.iter()).any(|(m, p)| m.m.len() != p.value.len())
    {
        return Err(Error::Config("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t);
    for (p, mom) in params.iter_mut().zip(state.moments.iter_mut()) {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
            mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = mom.m[i] / bc1;
            let v_hat = mom.v[i] / bc2;
            let w = p.value[i];
            p.value[i] = w - cfg.learning_rate * (m_hat / (libm::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * w);
        }
    }
    Ok(())
}
