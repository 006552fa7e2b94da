use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named trainable tensor with its Adam moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    /// First-moment estimate.
    pub m: Vec<f64>,
    /// Second-moment estimate.
    pub v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        let len = value.len();
        debug_assert_eq!(len, shape.iter().product::<usize>());
        Self {
            name: name.into(),
            shape,
            value,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamStore {
    pub params: Vec<Param>,
    /// Number of optimizer steps applied so far.
    pub step: u64,
}

impl ParamStore {
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            tensors: self.params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.params {
            let n = p.shape.iter().product::<usize>();
            if p.value.len() != n || p.m.len() != n || p.v.len() != n {
                return Err(Error::Contract(format!(
                    "parameter `{}` has inconsistent tensor sizes",
                    p.name
                )));
            }
        }
        Ok(())
    }
}

/// Gradients aligned index-for-index with a `ParamStore`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(params: &mut ParamStore, grads: &Grads, lr: f64, cfg: AdamConfig) -> Result<()> {
    if grads.tensors.len() != params.params.len()
        || grads
            .tensors
            .iter()
            .zip(&params.params)
            .any(|(g, p)| g.len() != p.len())
    {
        return Err(Error::Contract("gradient shapes do not match parameters".into()));
    }
    params.step += 1;
    let t = params.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (p, g) in params.params.iter_mut().zip(&grads.tensors) {
        for i in 0..p.value.len() {
            let gi = g[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * gi;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = p.m[i] / c1;
            let v_hat = p.v[i] / c2;
            p.value[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
