use mars_core::sensor::{SensorConfig, SensorData, SensorModel};
use mars_core::{MarsError, Result};

use crate::sensor::naive_total_loss;

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` for every
/// coordinate.
pub fn finite_diff_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(MarsError::InvalidInput(format!(
                "non-finite evaluation at coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference gradient of the naive SENSOR objective, laid out like
/// `SensorModel::to_flat`.
pub fn sensor_fd_gradient(
    m: &SensorModel,
    data: &SensorData,
    cfg: &SensorConfig,
    h: f64,
) -> Result<Vec<f64>> {
    let mut probe = m.clone();
    finite_diff_gradient(
        |x| {
            probe.set_flat(x);
            naive_total_loss(&probe, data, cfg)
        },
        &m.to_flat(),
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_constant() {
        let g = finite_diff_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_diff_gradient(|_| 4.0, &[1.0, -2.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(finite_diff_gradient(|x| x[0].ln(), &[0.0], 1e-5).is_err());
    }
}
