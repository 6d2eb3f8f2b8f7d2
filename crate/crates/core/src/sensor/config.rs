use serde::{Deserialize, Serialize};

use crate::error::{MarsError, Result};
use crate::par::Exec;

/// Update rule applied to the flattened parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient step with a fixed learning rate.
    #[default]
    Sgd,
    Momentum {
        beta: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Which cells enter the two reconstruction terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReconScope {
    /// Every cell; unobserved cells count as true zeros.
    #[default]
    All,
    /// Observed cells plus a fixed pseudo-random subset of zero cells.
    SampledZeros { rate: f64, seed: u64 },
}

impl ReconScope {
    /// Whether cell `(v, c, t)` contributes. `observed` is true when either
    /// tensor is nonzero there.
    pub fn includes(&self, v: usize, c: usize, t: usize, observed: bool) -> bool {
        match *self {
            ReconScope::All => true,
            ReconScope::SampledZeros { rate, seed } => observed || cell_hash(v, c, t, seed) < rate,
        }
    }
}

fn cell_hash(v: usize, c: usize, t: usize, seed: u64) -> f64 {
    // splitmix64 over the packed cell index
    let mut z = seed
        ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (c as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (t as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Multipliers on the unregularized terms. All ones reproduces the SENSOR
/// objective; other values are used for baselines (single-tensor Tucker fits).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermWeights {
    pub donation_recon: f64,
    pub response_recon: f64,
    pub d2r: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        TermWeights {
            donation_recon: 1.0,
            response_recon: 1.0,
            d2r: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Latent dimension.
    pub alpha: usize,
    /// Window length `L` in slots.
    pub window: usize,
    /// Streamer relation regularizer weight.
    pub lambda_ser: f64,
    /// Socio-temporal autoregressive regularizer weight.
    pub lambda_star: f64,
    /// Burst response suppression regularizer weight.
    pub lambda_riot: f64,
    /// Initial influence between viewers that are not friends.
    pub epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub init_decay: f64,
    pub optimizer: Optimizer,
    pub recon: ReconScope,
    pub weights: TermWeights,
    pub exec: Exec,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            alpha: 32,
            window: 5,
            lambda_ser: 0.5,
            lambda_star: 0.1,
            lambda_riot: 0.5,
            epsilon: 0.02,
            learning_rate: 1e-3,
            epochs: 100,
            seed: 0,
            init_scale: 0.1,
            init_decay: 0.1,
            optimizer: Optimizer::Sgd,
            recon: ReconScope::All,
            weights: TermWeights::default(),
            exec: Exec::default(),
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MarsError::InvalidConfig(m.to_string()));
        if self.alpha == 0 {
            return bad("alpha must be at least 1");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if [self.lambda_ser, self.lambda_star, self.lambda_riot]
            .iter()
            .any(|l| !l.is_finite() || *l < 0.0)
        {
            return bad("lambdas must be finite and nonnegative");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.init_scale < 0.0 || self.init_decay < 0.0 || self.epsilon < 0.0 {
            return bad("init_scale, init_decay and epsilon must be nonnegative");
        }
        if let ReconScope::SampledZeros { rate, .. } = self.recon {
            if !(0.0..=1.0).contains(&rate) {
                return bad("sampled-zero rate must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reported_hyperparameters() {
        let c = SensorConfig::default();
        assert_eq!(c.alpha, 32);
        assert_eq!(c.window, 5);
        assert_eq!(
            (c.lambda_ser, c.lambda_star, c.lambda_riot),
            (0.5, 0.1, 0.5)
        );
        assert_eq!(c.epsilon, 0.02);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = SensorConfig {
            alpha: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.alpha = 2;
        c.lambda_star = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sampled_scope_keeps_observed_cells() {
        let s = ReconScope::SampledZeros { rate: 0.0, seed: 3 };
        assert!(s.includes(1, 2, 3, true));
        assert!(!s.includes(1, 2, 3, false));
        let half = ReconScope::SampledZeros { rate: 0.5, seed: 3 };
        let kept = (0..1000).filter(|&i| half.includes(i, 0, 0, false)).count();
        assert!((400..600).contains(&kept));
    }
}
