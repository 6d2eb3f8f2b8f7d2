use serde::{Deserialize, Serialize};

use crate::error::{MarsError, Result};
use crate::sensor::config::{Optimizer, SensorConfig};
use crate::sensor::grad::{evaluate, Prepared};
use crate::sensor::loss::LossBreakdown;
use crate::sensor::model::{SensorData, SensorModel};

/// Result of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Objective at the start of every epoch, before its update.
    pub trace: Vec<LossBreakdown>,
    /// Objective after the last update.
    pub final_loss: LossBreakdown,
}

/// Update rule state over a flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Stepper {
    rule: Optimizer,
    lr: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Stepper {
    pub(crate) fn new(rule: Optimizer, lr: f64, n: usize) -> Self {
        let (first, second) = match rule {
            Optimizer::Sgd => (Vec::new(), Vec::new()),
            Optimizer::Momentum { .. } => (vec![0.0; n], Vec::new()),
            Optimizer::Adam { .. } => (vec![0.0; n], vec![0.0; n]),
        };
        Stepper {
            rule,
            lr,
            first,
            second,
            steps: 0,
        }
    }

    pub(crate) fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.steps += 1;
        match self.rule {
            Optimizer::Sgd => {
                for (xi, gi) in x.iter_mut().zip(g) {
                    *xi -= self.lr * gi;
                }
            }
            Optimizer::Momentum { beta } => {
                for ((xi, gi), mi) in x.iter_mut().zip(g).zip(self.first.iter_mut()) {
                    *mi = beta * *mi + gi;
                    *xi -= self.lr * *mi;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.steps);
                let c2 = 1.0 - beta2.powi(self.steps);
                for (((xi, gi), mi), vi) in x
                    .iter_mut()
                    .zip(g)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    *mi = beta1 * *mi + (1.0 - beta1) * gi;
                    *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                    *xi -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Trains a freshly initialized model on `data`.
pub fn train_sensor(data: &SensorData, cfg: &SensorConfig) -> Result<(SensorModel, TrainReport)> {
    let prep = Prepared::new(data, cfg)?;
    let model = SensorModel::init(data.dims(), &data.graph, data.schema, cfg)?;
    train_from(model, &prep, cfg)
}

/// Continues gradient descent from `model`. The decay is projected onto
/// `[0, inf)` after every update.
pub fn train_from(
    mut model: SensorModel,
    prep: &Prepared,
    cfg: &SensorConfig,
) -> Result<(SensorModel, TrainReport)> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Err(MarsError::InvalidConfig("epochs must be at least 1".into()));
    }
    model.validate()?;
    let mut x = model.to_flat();
    let decay_at = x.len() - model.theta.len() - 1;
    let mut stepper = Stepper::new(cfg.optimizer, cfg.learning_rate, x.len());
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = evaluate(&model, prep, cfg)?;
        let g = grad.to_flat();
        let finite = loss.total.is_finite() && g.iter().all(|v| v.is_finite());
        trace.push(loss);
        if !finite {
            return Err(diverged(epoch, loss.total, &trace));
        }
        stepper.step(&mut x, &g);
        x[decay_at] = x[decay_at].max(0.0);
        model.set_flat(&x);
    }
    let (final_loss, _) = evaluate(&model, prep, cfg)?;
    if !final_loss.total.is_finite() {
        return Err(diverged(cfg.epochs, final_loss.total, &trace));
    }
    Ok((model, TrainReport { trace, final_loss }))
}

fn diverged(epoch: usize, loss: f64, trace: &[LossBreakdown]) -> MarsError {
    MarsError::Diverged {
        epoch,
        loss,
        trace: trace.iter().map(|l| l.total).collect(),
    }
}
