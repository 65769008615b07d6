//! Diagonal Gaussian policy with a state-independent log standard
//! deviation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};
use crate::mlp::{Activation, Mlp};

/// Hidden layer widths of both networks.
pub const HIDDEN: [usize; 3] = [64, 32, 32];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

pub fn log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// `KL(p ‖ q)` of two diagonal Gaussians.
pub fn kl_divergence(mean_p: &[f64], log_std_p: &[f64], mean_q: &[f64], log_std_q: &[f64]) -> f64 {
    (0..mean_p.len())
        .map(|d| {
            let (sp2, sq2) = ((2.0 * log_std_p[d]).exp(), (2.0 * log_std_q[d]).exp());
            let dm = mean_p[d] - mean_q[d];
            log_std_q[d] - log_std_p[d] + (sp2 + dm * dm) / (2.0 * sq2) - 0.5
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

impl GaussianPolicy {
    /// Mean network `obs → HIDDEN → action` with a tanh output squashed to
    /// `[−1, 1]`, small initial output weights.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, init_log_std: f64, rng: &mut R) -> Result<Self> {
        let sizes = [obs_dim, HIDDEN[0], HIDDEN[1], HIDDEN[2], action_dim];
        Ok(Self {
            mean: Mlp::new(&sizes, Activation::Tanh, 0.1, rng)?,
            log_std: vec![init_log_std; action_dim],
        })
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn num_params(&self) -> usize {
        self.mean.num_params() + self.log_std.len()
    }

    /// Mean-network parameters followed by `log_std`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean.params();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let n = self.mean.num_params();
        if p.len() != n + self.log_std.len() {
            return Err(LearnError::Shape(format!("{} parameters for a policy with {}", p.len(), self.num_params())));
        }
        self.mean.set_params(&p[..n])?;
        self.log_std.copy_from_slice(&p[n..]);
        Ok(())
    }

    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        self.mean.forward(obs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Vec<f64> {
        self.mean_action(obs)
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        log_prob(&self.mean_action(obs), &self.log_std, action)
    }
}
