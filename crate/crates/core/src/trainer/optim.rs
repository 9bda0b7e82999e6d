use crate::ndgrad::Array2;
use crate::scalar::Scalar;

use super::TrainError;

/// Heavy-ball SGD: `v ← m·v + g; θ ← θ − lr·v`.
///
/// All gradients are checked before any parameter moves, so a rejected
/// step leaves parameters and velocities untouched.
pub fn sgd_step<T: Scalar>(
    params: &mut [&mut Array2<T>],
    grads: &[Array2<T>],
    velocity: &mut [Array2<T>],
    lr: T,
    momentum: T,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(TrainError::Optimizer(format!(
            "{} parameters, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for (i, ((p, g), v)) in params.iter().zip(grads).zip(velocity.iter()).enumerate() {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(TrainError::Optimizer(format!(
                "parameter {i}: shape {:?}, gradient {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
        if !g.is_finite() {
            return Err(TrainError::Optimizer(format!("non-finite gradient for parameter {i}")));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv;
            *pv = *pv - lr * *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(theta: f64, grads: &[f64], lr: f64, momentum: f64) -> f64 {
        let mut p = Array2::scalar(theta);
        let mut v = vec![Array2::scalar(0.0)];
        for &g in grads {
            sgd_step(&mut [&mut p], &[Array2::scalar(g)], &mut v, lr, momentum).unwrap();
        }
        p.item().unwrap()
    }

    #[test]
    fn single_plain_step() {
        assert_eq!(run(0.0, &[1.0], 1.0, 0.0), -1.0);
    }

    #[test]
    fn momentum_recurrence() {
        // v1 = 1, v2 = 1.9; θ = -0.1 - 0.19.
        assert!((run(0.0, &[1.0, 1.0], 0.1, 0.9) + 0.29).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_moves_only_by_velocity() {
        assert_eq!(run(0.7, &[0.0, 0.0], 0.5, 0.9), 0.7);
        assert!((run(0.0, &[1.0, 0.0], 0.1, 0.5) + 0.15).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_gradients_without_moving() {
        let mut p = Array2::scalar(1.0);
        let mut v = vec![Array2::scalar(0.0)];
        let err = sgd_step(&mut [&mut p], &[Array2::scalar(f64::NAN)], &mut v, 0.1, 0.9);
        assert!(err.is_err());
        assert_eq!(p.item(), Some(1.0));
        let err = sgd_step(&mut [&mut p], &[Array2::zeros(2, 1)], &mut v, 0.1, 0.9);
        assert!(err.is_err());
    }
}
