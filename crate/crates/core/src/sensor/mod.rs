//! Coupled donation/response co-factorization (SENSOR): objective terms,
//! analytic gradients and training.

mod config;
mod grad;
mod loss;
mod model;
mod train;

use serde::{Deserialize, Serialize};

pub use config::{Optimizer, ReconScope, SensorConfig, TermWeights};
pub use grad::{loss_and_grad, Prepared};
pub use loss::{
    burst_trend, burst_weights, donation_entropy, loss_d2r, loss_reconstruction, loss_riot,
    loss_ser, loss_star, reconstruction_terms, star_estimate, total_loss, LossBreakdown,
};
pub use model::{initial_influence, SensorData, SensorGrad, SensorModel};
pub use train::{train_from, train_sensor, TrainReport};

use crate::error::{MarsError, Result};
use crate::tensor::Dims;

/// How the factorization lays out its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One set of viewer/channel/slot factors shared by two cores.
    Shared,
    /// Independent factors and core per tensor.
    Separate,
    /// Both tensors stacked along a fourth mode with a single fourth-order core.
    FourDim,
}

/// Number of factor and core parameters of a layout.
pub fn param_count(dims: Dims, alpha: usize, layout: Layout) -> Result<u64> {
    if dims.n_viewers == 0 || dims.n_channels == 0 || dims.n_slots == 0 || alpha == 0 {
        return Err(MarsError::InvalidInput(
            "dimensions and alpha must be positive".into(),
        ));
    }
    let rows = (dims.n_viewers + dims.n_channels + dims.n_slots) as u64;
    let a = alpha as u64;
    Ok(match layout {
        Layout::Shared => rows * a + 2 * a.pow(3),
        Layout::Separate => 2 * rows * a + 2 * a.pow(3),
        Layout::FourDim => (rows + 2) * a + a.pow(4),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_reference_dims() {
        let d = Dims::new(100, 10, 50);
        assert_eq!(param_count(d, 4, Layout::Shared).unwrap(), 768);
        assert_eq!(param_count(d, 4, Layout::Separate).unwrap(), 1408);
        assert_eq!(param_count(d, 4, Layout::FourDim).unwrap(), 904);
        assert!(param_count(Dims::new(0, 1, 1), 2, Layout::Shared).is_err());
    }
}
